use parapde::features::{build_blocks, build_blocks_2d};
use parapde::fields::{add_noise, load_dataset, save_dataset, subsample_points};
use parapde::select::{sweep, SweepOptions};
use parapde::simulate::{
    simulate, solve_burgers, solve_ns2d, BurgersConfig, Ns2dConfig, SimConfig,
};
use parapde::{Axis, LibrarySpec, Method, NoiseSpec, Region};

fn coarse_burgers() -> parapde::Field1D {
    solve_burgers(&BurgersConfig {
        n: 128,
        m: 256,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn coarse_burgers_support_and_coefficients() {
    let cfg = BurgersConfig {
        n: 128,
        m: 256,
        ..Default::default()
    };
    let f = solve_burgers(&cfg).unwrap();
    let sys = build_blocks(&f, &LibrarySpec::default()).unwrap();
    let r = sweep(&sys, Method::Sgtr, &SweepOptions::default()).unwrap();
    assert_eq!(r.model.active_names(), ["u*u_x", "u_xx"]);
    let a = r.model.series("u*u_x").unwrap();
    for (v, &t) in a.iter().zip(&r.model.coords) {
        assert!((v - cfg.advection.eval(0.0, t)).abs() < 0.05, "t={t}: {v}");
    }
}

#[test]
fn space_grouping_shapes() {
    let f = coarse_burgers();
    let sys = build_blocks(
        &f,
        &LibrarySpec {
            axis: Axis::Space,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(sys.n_blocks(), 128);
    assert_eq!(sys.blocks[0].rows(), 254);
}

#[test]
fn noisy_pipeline_is_deterministic() {
    let f = coarse_burgers();
    let run = || {
        let g = add_noise(&f, &NoiseSpec::new(0.01, 4).unwrap()).unwrap();
        let sys = build_blocks(&g, &LibrarySpec::noisy(Axis::Time)).unwrap();
        sweep(
            &sys,
            Method::Glasso,
            &SweepOptions {
                count: 10,
                seed: 2,
                ..Default::default()
            },
        )
        .unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn stored_simulation_reloads_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimConfig::Burgers(BurgersConfig {
        n: 64,
        m: 32,
        ..Default::default()
    });
    let data = simulate(&cfg).unwrap();
    let base = dir.path().join("b");
    save_dataset(&data, &base).unwrap();
    assert_eq!(load_dataset(&base).unwrap(), data);
}

#[test]
fn small_vorticity_run_keeps_the_true_terms() {
    let cfg = Ns2dConfig {
        nx: 32,
        ny: 32,
        m: 200,
        ..Default::default()
    };
    let f = solve_ns2d(&cfg).unwrap();
    let s = subsample_points(&f, 400, 5, &Region::whole(&f.grid), 1).unwrap();
    let sys = build_blocks_2d(&f, &s, &LibrarySpec::default()).unwrap();
    assert_eq!(sys.n_terms(), 51);
    assert_eq!(sys.n_blocks(), 40);
    let r = sweep(&sys, Method::Sgtr, &SweepOptions::default()).unwrap();
    let names = r.model.active_names();
    for t in ["u*w_x", "v*w_y", "w_xx", "w_yy"] {
        assert!(names.iter().any(|n| n == t), "{t} missing from {names:?}");
    }
}
