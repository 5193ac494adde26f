//! Shared fixtures for the benchmarks.

use parapde::features::build_blocks;
use parapde::simulate::{solve_burgers, BurgersConfig};
use parapde::{BlockSystem, Field1D, LibrarySpec};

/// Default Burgers data on a coarser grid.
pub fn small_burgers(n: usize, m: usize) -> Field1D {
    solve_burgers(&BurgersConfig {
        n,
        m,
        ..Default::default()
    })
    .expect("default Burgers run")
}

pub fn burgers_system(n: usize, m: usize) -> BlockSystem {
    build_blocks(&small_burgers(n, m), &LibrarySpec::default()).expect("library builds")
}
