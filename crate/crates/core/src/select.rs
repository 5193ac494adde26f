//! Hyperparameter sweeps and model selection with an AIC-style loss.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{split_validation, BlockSystem};
use crate::solvers::{
    glasso_with, group_norms, least_squares_refit, residual_sq, ridge_blockwise, sgtr_with,
    GlassoParams, NormalEquations, ParametricModel, SgtrParams,
};

pub use crate::solvers::Method;

/// Mean-squared-error floor inside the logarithm of the loss.
pub const LOSS_FLOOR: f64 = 1e-5;

/// Smallest group-LASSO penalty giving the all-zero model:
/// `max_g ||A_g^T b|| / N` with `N` the total row count.
pub fn lambda_max(system: &BlockSystem) -> Result<f64> {
    let n = system.total_rows();
    if n == 0 || system.n_terms() == 0 {
        return Err(Error::Degenerate("empty system".into()));
    }
    let mut best: f64 = 0.0;
    for g in 0..system.n_terms() {
        let sq: f64 = system
            .blocks
            .iter()
            .map(|b| {
                let v = b.theta.column(g).dot(&b.target);
                v * v
            })
            .sum();
        best = best.max(sq.sqrt());
    }
    Ok(best / n as f64)
}

/// Smallest and largest ridge group norm over groups that are not flagged in
/// every block.
pub fn epsilon_range(system: &BlockSystem, ridge: f64) -> Result<(f64, f64)> {
    let w = ridge_blockwise(system, ridge)?;
    let norms: Vec<f64> = group_norms(&w)
        .into_iter()
        .enumerate()
        .filter(|&(g, _)| !system.is_dead_group(g))
        .map(|(_, v)| v)
        .collect();
    if norms.is_empty() {
        return Err(Error::Degenerate("no usable library terms".into()));
    }
    let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = norms.iter().copied().fold(0.0, f64::max);
    Ok((lo, hi))
}

/// `N ln(rss / N + floor) + 2k`.
pub fn aic_value(rss: f64, n: usize, k: usize, floor: f64) -> f64 {
    let n = n as f64;
    n * (rss / n + floor).ln() + 2.0 * k as f64
}

/// Loss of `model` (its normalized coefficients) scored on `system`.
pub fn aic_loss(
    model: &ParametricModel,
    system: &BlockSystem,
    n: usize,
    floor: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Parameter("N must be positive".into()));
    }
    let rss = residual_sq(system, &model.normalized)?;
    Ok(aic_value(rss, n, model.k(), floor))
}

/// `count` log-spaced values from `lo` to `hi` with exact endpoints.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            let mut out: Vec<f64> = (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect();
            out[0] = lo;
            out[count - 1] = hi;
            out
        }
    }
}

/// Sweep settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub count: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Ridge penalty inside SGTR.
    pub ridge: f64,
    /// Lower end of the GLASSO grid relative to `lambda_max`.
    pub lambda_ratio: f64,
    pub floor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            count: 50,
            seed: 0,
            validation_fraction: 0.2,
            ridge: 1e-5,
            lambda_ratio: 1e-5,
            floor: LOSS_FLOOR,
        }
    }
}

/// One point of a sweep; the model is fitted on the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub hyperparameter: f64,
    pub model: ParametricModel,
    pub loss: f64,
    pub k: usize,
}

/// A sweep trace and the selected model.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub method: Method,
    pub seed: u64,
    /// Ascending in the hyperparameter.
    pub entries: Vec<SweepEntry>,
    pub selected: usize,
    /// Selected support refit by least squares on the full system.
    pub model: ParametricModel,
}

impl SweepResult {
    pub fn selected_entry(&self) -> &SweepEntry {
        &self.entries[self.selected]
    }
}

/// Index of the minimum finite loss; ties go to fewer terms, then to the
/// larger hyperparameter.
pub fn select_index(entries: &[SweepEntry]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in entries.iter().enumerate() {
        if !e.loss.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cur = &entries[b];
                let better = e.loss < cur.loss
                    || (e.loss == cur.loss
                        && (e.k < cur.k
                            || (e.k == cur.k && e.hyperparameter > cur.hyperparameter)));
                Some(if better { i } else { b })
            }
        };
    }
    best
}

/// Splits off a validation set, fits `count` models along the method's
/// hyperparameter grid on the training rows, scores each on the validation
/// rows and refits the winner on the whole system.
pub fn sweep(system: &BlockSystem, method: Method, opts: &SweepOptions) -> Result<SweepResult> {
    if system.n_terms() < 2 {
        return Err(Error::Parameter(
            "a sweep needs at least two library terms".into(),
        ));
    }
    if opts.count == 0 {
        return Err(Error::Parameter("sweep count must be >= 1".into()));
    }
    let (train, valid) = split_validation(system, opts.validation_fraction, opts.seed)?;
    let normal = NormalEquations::new(&train);
    let n_valid = valid.total_rows();
    let score = |m: &ParametricModel| -> Result<f64> { aic_loss(m, &valid, n_valid, opts.floor) };

    let mut entries: Vec<SweepEntry> = match method {
        Method::Sgtr => {
            let (lo, hi) = epsilon_range(&train, opts.ridge)?;
            let lo = if lo > 0.0 { lo } else { hi * 1e-5 };
            let grid = log_grid(lo, hi, opts.count);
            grid.par_iter()
                .map(|&eps| {
                    let m = sgtr_with(
                        &train,
                        &normal,
                        &SgtrParams {
                            ridge: opts.ridge,
                            threshold: eps,
                            ..Default::default()
                        },
                    )?;
                    let loss = score(&m)?;
                    Ok(SweepEntry {
                        hyperparameter: eps,
                        k: m.k(),
                        loss,
                        model: m,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        Method::Glasso => {
            let hi = lambda_max(&train)?;
            if hi <= 0.0 {
                return Err(Error::Degenerate(
                    "lambda_max is zero; the target is orthogonal to every term".into(),
                ));
            }
            let grid = log_grid(hi * opts.lambda_ratio, hi, opts.count);
            // warm start from the sparse end
            let mut warm: Option<Array2<f64>> = None;
            let mut out = Vec::with_capacity(grid.len());
            for &lambda in grid.iter().rev() {
                let (m, pen) = glasso_with(
                    &train,
                    &normal,
                    &GlassoParams {
                        lambda,
                        ..Default::default()
                    },
                    warm.as_ref(),
                )?;
                warm = Some(pen);
                let loss = score(&m)?;
                out.push(SweepEntry {
                    hyperparameter: lambda,
                    k: m.k(),
                    loss,
                    model: m,
                });
            }
            out.reverse();
            out
        }
    };
    for e in &mut entries {
        e.model.seed = Some(opts.seed);
    }
    let selected = select_index(&entries)
        .ok_or_else(|| Error::Degenerate("no model attained a finite loss".into()))?;
    let chosen = &entries[selected];
    let coeffs = least_squares_refit(system, &chosen.model.active)?;
    let mut model = ParametricModel::from_normalized(
        system,
        coeffs,
        method,
        chosen.hyperparameter,
        chosen.model.warnings.clone(),
    )?;
    model.seed = Some(opts.seed);
    Ok(SweepResult {
        method,
        seed: opts.seed,
        entries,
        selected,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{Axis, Block, TermDescriptor};
    use ndarray::{Array1, Array2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn system(blocks: Vec<Block>) -> BlockSystem {
        let d = blocks[0].theta.ncols();
        let nb = blocks.len();
        let terms = (0..d)
            .map(|g| TermDescriptor::single("u", g as u32, 0))
            .collect();
        BlockSystem::from_raw(
            blocks,
            terms,
            Axis::Time,
            (0..nb).map(|j| j as f64).collect(),
        )
        .unwrap()
    }

    fn two_term(seed: u64, nb: usize, noise: f64) -> BlockSystem {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let blocks = (0..nb)
            .map(|j| {
                let theta = Array2::from_shape_fn((60, 6), |_| rng.random_range(-1.0..1.0));
                let mut target =
                    &theta.column(2) * (1.0 + 0.2 * (j as f64).sin()) + &theta.column(4) * 0.3;
                target.mapv_inplace(|v| v + noise * rng.random_range(-1.0..1.0));
                Block { theta, target }
            })
            .collect();
        system(blocks)
    }

    #[test]
    fn aic_worked_example() {
        let v = aic_value(0.0, 100, 2, 1e-5);
        assert!((v - (100.0 * 1e-5f64.ln() + 4.0)).abs() < 1e-12);
        assert!((v + 1147.2925).abs() < 1e-4);
        assert_eq!(
            aic_value(3.0, 100, 3, 1e-5) - aic_value(3.0, 100, 2, 1e-5),
            2.0
        );
        let a = aic_value(1e-12, 100, 1, 1e-5);
        let b = aic_value(1e-14, 100, 1, 1e-5);
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn lambda_max_examples() {
        let t = Array1::from(vec![0.6, 0.8]);
        let theta = Array2::from_shape_vec((2, 2), vec![0.6, -0.8, 0.8, 0.6]).unwrap();
        let sys = system(vec![Block { theta, target: t }]);
        assert!((lambda_max(&sys).unwrap() - 0.5).abs() < 1e-15);
        let theta = Array2::from_shape_vec((2, 2), vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let sys = system(vec![Block {
            theta,
            target: Array1::from(vec![0.0, 1.0]),
        }]);
        assert_eq!(lambda_max(&sys).unwrap(), 0.0);
    }

    #[test]
    fn epsilon_range_definitional() {
        // orthonormal columns: ridge norms are |b_g| / (1 + lambda)
        let theta = Array2::from_shape_fn((3, 3), |(r, c)| if r == c { 1.0 } else { 0.0 });
        let target = Array1::from(vec![0.5, 2.0, 3.0]);
        let sys = system(vec![Block { theta, target }]);
        let (lo, hi) = epsilon_range(&sys, 0.0).unwrap();
        let s = (0.25f64 + 4.0 + 9.0).sqrt();
        assert!((lo - 0.5 / s).abs() < 1e-15 && (hi - 3.0 / s).abs() < 1e-15);
        let one = system(vec![Block {
            theta: Array2::from_elem((3, 1), 1.0),
            target: Array1::from(vec![1.0, 2.0, 0.5]),
        }]);
        let (lo, hi) = epsilon_range(&one, 1e-5).unwrap();
        assert_eq!(lo, hi);
    }

    #[test]
    fn sgtr_around_epsilon_min() {
        for seed in 0..10 {
            let sys = two_term(seed, 3, 0.5);
            let (lo, hi) = epsilon_range(&sys, 1e-5).unwrap();
            let p = |eps| SgtrParams {
                threshold: eps,
                ..Default::default()
            };
            let below = crate::solvers::sgtr(&sys, &p(lo * (1.0 - 1e-6))).unwrap();
            assert_eq!(below.k(), 6);
            let above = crate::solvers::sgtr(&sys, &p(lo * (1.0 + 1e-6))).unwrap();
            assert!(above.k() < 6);
            assert_eq!(crate::solvers::sgtr(&sys, &p(hi)).unwrap().k(), 0);
        }
    }

    #[test]
    fn grid_endpoints_and_tie_break() {
        let g = log_grid(1e-3, 2.0, 50);
        assert_eq!(g.len(), 50);
        assert_eq!((g[0], g[49]), (1e-3, 2.0));
        assert!(g.windows(2).all(|w| w[0] < w[1]));

        let sys = two_term(1, 3, 0.0);
        let res = sweep(
            &sys,
            Method::Sgtr,
            &SweepOptions {
                seed: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let (train, _) = split_validation(&sys, 0.2, 3).unwrap();
        let (lo, hi) = epsilon_range(&train, 1e-5).unwrap();
        assert!((res.entries[0].hyperparameter - lo).abs() <= 1e-12 * lo);
        assert!((res.entries[49].hyperparameter - hi).abs() <= 1e-12 * hi);
        let chosen = res.selected_entry();
        for e in &res.entries {
            assert!(
                e.loss > chosen.loss
                    || (e.loss == chosen.loss
                        && (e.k > chosen.k || e.hyperparameter <= chosen.hyperparameter))
            );
        }
    }

    #[test]
    fn both_methods_recover_two_terms() {
        let sys = two_term(7, 4, 0.0);
        for method in [Method::Sgtr, Method::Glasso] {
            let res = sweep(&sys, method, &SweepOptions::default()).unwrap();
            assert_eq!(res.model.active, vec![2, 4], "{method}");
            assert_eq!(res.entries.len(), 50);
            let lmax = lambda_max(&split_validation(&sys, 0.2, 0).unwrap().0).unwrap();
            if method == Method::Glasso {
                assert!((res.entries[49].hyperparameter - lmax).abs() <= 1e-12 * lmax);
                assert!((res.entries[0].hyperparameter - 1e-5 * lmax).abs() <= 1e-12 * lmax);
            }
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let sys = two_term(2, 3, 0.05);
        for method in [Method::Sgtr, Method::Glasso] {
            let a = sweep(
                &sys,
                method,
                &SweepOptions {
                    seed: 9,
                    ..Default::default()
                },
            )
            .unwrap();
            let b = sweep(
                &sys,
                method,
                &SweepOptions {
                    seed: 9,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    proptest! {
        #[test]
        fn aic_increasing_in_k(rss in 0.0f64..1e3, n in 1usize..10_000, k in 0usize..50) {
            prop_assert!(aic_value(rss, n, k + 1, LOSS_FLOOR) > aic_value(rss, n, k, LOSS_FLOOR));
        }

        #[test]
        fn threshold_at_or_above_epsilon_max_empties_sgtr(seed in 0u64..100, over in 1.0f64..3.0) {
            let sys = two_term(seed, 3, 0.3);
            let (_, hi) = epsilon_range(&sys, 1e-5).unwrap();
            let m = crate::solvers::sgtr(&sys, &SgtrParams { threshold: hi * over, ..Default::default() }).unwrap();
            prop_assert_eq!(m.k(), 0);
        }
    }
}
