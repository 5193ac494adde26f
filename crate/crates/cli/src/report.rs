//! Text renderings of sweep results.

use parapde::{Axis, ParametricModel, SweepResult};
use serde::Serialize;

#[derive(Serialize)]
struct ModelDoc<'a> {
    method: String,
    axis: String,
    terms: Vec<String>,
    hyperparameter: f64,
    loss: f64,
    k: usize,
    seed: u64,
    library: &'a [String],
    warnings: &'a [String],
}

pub fn model_json(result: &SweepResult, axis: Axis) -> String {
    let entry = result.selected_entry();
    let m = &result.model;
    let doc = ModelDoc {
        method: result.method.to_string(),
        axis: axis.to_string(),
        terms: m.active_names(),
        hyperparameter: entry.hyperparameter,
        loss: entry.loss,
        k: m.k(),
        seed: result.seed,
        library: &m.terms,
        warnings: &m.warnings,
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("plain data serializes");
    s.push('\n');
    s
}

/// One row per block coordinate; active terms only.
pub fn coeffs_csv(model: &ParametricModel) -> String {
    let mut s = String::from("coord");
    for name in model.active_names() {
        s.push(',');
        s.push_str(&name);
    }
    s.push('\n');
    for (j, c) in model.coords.iter().enumerate() {
        s.push_str(&format!("{c:?}"));
        for &g in &model.active {
            s.push_str(&format!(",{:?}", model.coeffs[[g, j]]));
        }
        s.push('\n');
    }
    s
}

pub fn sweep_csv(result: &SweepResult) -> String {
    let mut s = String::from("hyperparameter,loss,k\n");
    for e in &result.entries {
        s.push_str(&format!("{:?},{:?},{}\n", e.hyperparameter, e.loss, e.k));
    }
    s
}

/// Side-by-side summary; term lists are `;`-separated.
pub fn summary_csv(results: &[SweepResult]) -> String {
    let mut s = String::from("method,k,loss,hyperparameter,terms\n");
    for r in results {
        let e = r.selected_entry();
        s.push_str(&format!(
            "{},{},{:?},{:?},{}\n",
            r.method,
            r.model.k(),
            e.loss,
            e.hyperparameter,
            r.model.active_names().join(";")
        ));
    }
    s
}
