//! Candidate libraries and the grouped block-diagonal regression system.
//!
//! Each block holds the library evaluated on one time slice (or one spatial
//! location) and the matching time derivatives. Column `g` of every block
//! belongs to group `g`, so a group is one candidate term across all slices.
//! Stored columns and targets are scaled to unit length; the scale factors are
//! kept so coefficients can be mapped back to physical units.

use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array1, Array2, Array3, Axis as NdAxis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::differentiate::{
    differentiate_field, differentiate_field_2d, DiffAxis, DiffMethod, Differentiator, Sampling,
};
use crate::error::{Error, Result};
use crate::fields::{Field1D, Field2D, SampledSet};

/// Which coordinate indexes the blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// One block per timestep; coefficients vary in time.
    Time,
    /// One block per spatial location; coefficients vary in space.
    Space,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Time => "time",
            Axis::Space => "space",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" | "t" => Ok(Axis::Time),
            "space" | "x" => Ok(Axis::Space),
            other => Err(Error::Parameter(format!(
                "axis must be `time` or `space`, got `{other}`"
            ))),
        }
    }
}

/// Partial derivative orders in x and y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Deriv {
    pub x: u8,
    pub y: u8,
}

impl Deriv {
    pub const fn x(order: u8) -> Self {
        Self { x: order, y: 0 }
    }

    pub fn order(&self) -> usize {
        (self.x + self.y) as usize
    }

    /// `"xx"`, `"xy"`, ...
    pub fn tag(&self) -> String {
        "x".repeat(self.x as usize) + &"y".repeat(self.y as usize)
    }
}

/// One candidate function: a monomial in the base fields times an optional
/// derivative, e.g. `u^2*u_xx` or `u*w*w_y`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TermDescriptor {
    /// `(field, power)` with positive powers, in library order.
    pub monomial: Vec<(String, u32)>,
    pub derivative: Option<(String, Deriv)>,
}

impl TermDescriptor {
    pub fn constant() -> Self {
        Self {
            monomial: Vec::new(),
            derivative: None,
        }
    }

    /// `field^power * field_{deriv}` for a single base field; zero power or
    /// order drops that factor.
    pub fn single(field: &str, power: u32, deriv_order: u8) -> Self {
        Self {
            monomial: if power > 0 {
                vec![(field.to_string(), power)]
            } else {
                Vec::new()
            },
            derivative: (deriv_order > 0).then(|| (field.to_string(), Deriv::x(deriv_order))),
        }
    }

    pub fn is_constant(&self) -> bool {
        self.monomial.is_empty() && self.derivative.is_none()
    }

    pub fn name(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for TermDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .monomial
            .iter()
            .map(|(name, p)| {
                if *p == 1 {
                    name.clone()
                } else {
                    format!("{name}^{p}")
                }
            })
            .collect();
        if let Some((name, d)) = &self.derivative {
            parts.push(format!("{name}_{}", d.tag()));
        }
        if parts.is_empty() {
            f.write_str("1")
        } else {
            f.write_str(&parts.join("*"))
        }
    }
}

/// How to build the candidate library.
#[derive(Debug, Clone, PartialEq)]
pub struct LibrarySpec {
    pub max_power: u32,
    pub max_derivative: u8,
    pub include_constant: bool,
    /// Differentiation along space axes.
    pub space_method: DiffMethod,
    /// Differentiation along time.
    pub time_method: DiffMethod,
    pub axis: Axis,
    /// Replaces the default 2D library when set.
    pub terms_2d: Option<Vec<TermDescriptor>>,
}

impl Default for LibrarySpec {
    fn default() -> Self {
        Self {
            max_power: 3,
            max_derivative: 4,
            include_constant: true,
            space_method: DiffMethod::Spectral,
            time_method: DiffMethod::CentralFd,
            axis: Axis::Time,
            terms_2d: None,
        }
    }
}

impl LibrarySpec {
    /// Polynomial smoothing in both space and time, for noisy data.
    pub fn noisy(axis: Axis) -> Self {
        Self {
            space_method: DiffMethod::poly_default(),
            time_method: DiffMethod::poly_default(),
            axis,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_power < 1 || self.max_derivative < 1 {
            return Err(Error::Parameter(
                "max_power and max_derivative must be >= 1".into(),
            ));
        }
        if self.max_derivative as usize > crate::differentiate::MAX_ORDER {
            return Err(Error::Parameter(format!(
                "max_derivative {} exceeds {}",
                self.max_derivative,
                crate::differentiate::MAX_ORDER
            )));
        }
        Ok(())
    }

    /// Terms of the 1D library: derivative order outer, power inner.
    pub fn terms_1d(&self) -> Vec<TermDescriptor> {
        let mut out = Vec::new();
        for d in 0..=self.max_derivative {
            for p in 0..=self.max_power {
                if d == 0 && p == 0 && !self.include_constant {
                    continue;
                }
                out.push(TermDescriptor::single("u", p, d));
            }
        }
        out
    }
}

/// The default 2D library: `{1, u, v, w, u^2, v^2, w^2, uv, uw, vw}` times
/// `{w_x, w_y, w_xx, w_xy, w_yy}`, plus a constant.
pub fn default_terms_2d() -> Vec<TermDescriptor> {
    let one = |f: &str| vec![(f.to_string(), 1)];
    let sq = |f: &str| vec![(f.to_string(), 2)];
    let pair = |a: &str, b: &str| vec![(a.to_string(), 1), (b.to_string(), 1)];
    let bases: Vec<Vec<(String, u32)>> = vec![
        Vec::new(),
        one("u"),
        one("v"),
        one("w"),
        sq("u"),
        sq("v"),
        sq("w"),
        pair("u", "v"),
        pair("u", "w"),
        pair("v", "w"),
    ];
    let derivs = [
        Deriv { x: 1, y: 0 },
        Deriv { x: 0, y: 1 },
        Deriv { x: 2, y: 0 },
        Deriv { x: 1, y: 1 },
        Deriv { x: 0, y: 2 },
    ];
    let mut out = vec![TermDescriptor::constant()];
    for d in derivs {
        for b in &bases {
            out.push(TermDescriptor {
                monomial: b.clone(),
                derivative: Some(("w".to_string(), d)),
            });
        }
    }
    out
}

/// One slice of the regression: `target ~ theta * xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub theta: Array2<f64>,
    pub target: Array1<f64>,
}

impl Block {
    pub fn rows(&self) -> usize {
        self.theta.nrows()
    }
}

/// Columns with norm below `ZERO_COLUMN_TOL * sqrt(rows)` are flagged.
pub const ZERO_COLUMN_TOL: f64 = 1e-12;

/// Grouped block system with unit-normalized columns and targets.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    pub blocks: Vec<Block>,
    pub terms: Vec<TermDescriptor>,
    pub axis: Axis,
    /// Time (axis = time) or position (axis = space) of each block.
    pub coords: Vec<f64>,
    /// `d x B` physical column norms used to scale the stored columns; zero
    /// where flagged.
    pub col_norms: Array2<f64>,
    /// Physical target norm of each block; zero for an all-zero target.
    pub target_norms: Array1<f64>,
    /// `d x B`; a flagged column is stored as zeros and never enters a fit.
    pub flagged: Array2<bool>,
}

impl BlockSystem {
    /// Normalizes raw (physical-unit) blocks.
    pub fn from_raw(
        blocks: Vec<Block>,
        terms: Vec<TermDescriptor>,
        axis: Axis,
        coords: Vec<f64>,
    ) -> Result<Self> {
        let d = terms.len();
        let nb = blocks.len();
        if nb == 0 || d == 0 {
            return Err(Error::Degenerate("system has no blocks or no terms".into()));
        }
        if coords.len() != nb {
            return Err(Error::Shape(format!(
                "{} coordinates for {nb} blocks",
                coords.len()
            )));
        }
        for (j, b) in blocks.iter().enumerate() {
            if b.theta.ncols() != d || b.theta.nrows() != b.target.len() {
                return Err(Error::Shape(format!(
                    "block {j}: theta {:?}, target {}, expected {d} columns",
                    b.theta.dim(),
                    b.target.len()
                )));
            }
            if !b.theta.iter().chain(b.target.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("library block {j}")));
            }
        }
        let ones = Array2::from_elem((d, nb), 1.0);
        let unit = Array1::from_elem(nb, 1.0);
        let flagged = Array2::from_elem((d, nb), false);
        let mut sys = Self {
            blocks,
            terms,
            axis,
            coords,
            col_norms: ones,
            target_norms: unit,
            flagged,
        };
        sys.renormalize()?;
        Ok(sys)
    }

    /// Rescales stored columns and targets to unit length, folding the factors
    /// into the recorded norms.
    fn renormalize(&mut self) -> Result<()> {
        let mut any_target = false;
        for (j, block) in self.blocks.iter_mut().enumerate() {
            let tol = ZERO_COLUMN_TOL * (block.rows() as f64).sqrt();
            for (g, mut col) in block.theta.axis_iter_mut(NdAxis(1)).enumerate() {
                let norm = col.dot(&col).sqrt();
                if self.flagged[[g, j]] || norm * self.col_norms[[g, j]] < tol {
                    col.fill(0.0);
                    self.flagged[[g, j]] = true;
                    self.col_norms[[g, j]] = 0.0;
                } else {
                    col.mapv_inplace(|v| v / norm);
                    self.col_norms[[g, j]] *= norm;
                }
            }
            let tnorm = block.target.dot(&block.target).sqrt();
            if tnorm > 0.0 {
                any_target = true;
                block.target.mapv_inplace(|v| v / tnorm);
                self.target_norms[j] *= tnorm;
            } else {
                self.target_norms[j] = 0.0;
            }
        }
        if !any_target {
            return Err(Error::Degenerate(
                "all time-derivative targets are zero".into(),
            ));
        }
        Ok(())
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn total_rows(&self) -> usize {
        self.blocks.iter().map(Block::rows).sum()
    }

    pub fn term_names(&self) -> Vec<String> {
        self.terms.iter().map(|t| t.to_string()).collect()
    }

    pub fn term_index(&self, name: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.to_string() == name)
    }

    /// Groups flagged in every block.
    pub fn is_dead_group(&self, g: usize) -> bool {
        self.flagged.row(g).iter().all(|&f| f)
    }

    /// Block `j` in physical units.
    pub fn raw_block(&self, j: usize) -> Block {
        let b = &self.blocks[j];
        let mut theta = b.theta.clone();
        for (g, mut col) in theta.axis_iter_mut(NdAxis(1)).enumerate() {
            let n = self.col_norms[[g, j]];
            col.mapv_inplace(|v| v * n);
        }
        let tn = self.target_norms[j];
        Block {
            theta,
            target: b.target.mapv(|v| v * tn),
        }
    }
}

/// Maps `d x B` coefficients on the normalized system to physical units:
/// `xi_phys[g, j] = xi[g, j] * |b_j| / |theta_g^(j)|`, zero where flagged.
pub fn denormalize(coeffs: &Array2<f64>, system: &BlockSystem) -> Result<Array2<f64>> {
    check_coeff_shape(coeffs, system)?;
    Ok(Array2::from_shape_fn(coeffs.dim(), |(g, j)| {
        let cn = system.col_norms[[g, j]];
        if system.flagged[[g, j]] || cn == 0.0 {
            0.0
        } else {
            coeffs[[g, j]] * system.target_norms[j] / cn
        }
    }))
}

/// Inverse of [`denormalize`] on unflagged entries.
pub fn normalize_coeffs(coeffs: &Array2<f64>, system: &BlockSystem) -> Result<Array2<f64>> {
    check_coeff_shape(coeffs, system)?;
    Ok(Array2::from_shape_fn(coeffs.dim(), |(g, j)| {
        let tn = system.target_norms[j];
        if system.flagged[[g, j]] || tn == 0.0 {
            0.0
        } else {
            coeffs[[g, j]] * system.col_norms[[g, j]] / tn
        }
    }))
}

fn check_coeff_shape(coeffs: &Array2<f64>, system: &BlockSystem) -> Result<()> {
    if coeffs.dim() != (system.n_terms(), system.n_blocks()) {
        return Err(Error::Shape(format!(
            "coefficients {:?}, system is {}x{}",
            coeffs.dim(),
            system.n_terms(),
            system.n_blocks()
        )));
    }
    Ok(())
}

/// Partitions the rows of every block into training and validation sets.
///
/// Each block contributes `round(fraction * r)` validation rows, drawn from
/// one ChaCha20 stream seeded with `seed` (blocks in order). The training
/// system is renormalized on its own rows; the validation rows are scaled with
/// the training factors, so the same coefficients apply to both.
pub fn split_validation(
    system: &BlockSystem,
    fraction: f64,
    seed: u64,
) -> Result<(BlockSystem, BlockSystem)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "validation fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train_blocks = Vec::with_capacity(system.n_blocks());
    let mut valid_blocks = Vec::with_capacity(system.n_blocks());
    for (j, b) in system.blocks.iter().enumerate() {
        let r = b.rows();
        if r < 5 {
            return Err(Error::Parameter(format!(
                "block {j} has {r} rows; need at least 5 to split"
            )));
        }
        let n_valid = ((fraction * r as f64).round() as usize).clamp(1, r - 1);
        let mut valid_rows = index::sample(&mut rng, r, n_valid).into_vec();
        valid_rows.sort_unstable();
        let mut is_valid = vec![false; r];
        for &i in &valid_rows {
            is_valid[i] = true;
        }
        let train_rows: Vec<usize> = (0..r).filter(|&i| !is_valid[i]).collect();
        let pick = |rows: &[usize]| Block {
            theta: b.theta.select(NdAxis(0), rows),
            target: b.target.select(NdAxis(0), rows),
        };
        train_blocks.push(pick(&train_rows));
        valid_blocks.push(pick(&valid_rows));
    }
    let mut train = BlockSystem {
        blocks: train_blocks,
        terms: system.terms.clone(),
        axis: system.axis,
        coords: system.coords.clone(),
        col_norms: system.col_norms.clone(),
        target_norms: system.target_norms.clone(),
        flagged: system.flagged.clone(),
    };
    // Scale factors applied by renormalization, recovered from the norm ratio.
    let before_cols = train.col_norms.clone();
    let before_targets = train.target_norms.clone();
    train.renormalize()?;
    for (j, vb) in valid_blocks.iter_mut().enumerate() {
        for (g, mut col) in vb.theta.axis_iter_mut(NdAxis(1)).enumerate() {
            if train.flagged[[g, j]] {
                col.fill(0.0);
            } else {
                let factor = train.col_norms[[g, j]] / before_cols[[g, j]];
                col.mapv_inplace(|v| v / factor);
            }
        }
        if train.target_norms[j] > 0.0 && before_targets[j] > 0.0 {
            let factor = train.target_norms[j] / before_targets[j];
            vb.target.mapv_inplace(|v| v / factor);
        } else {
            vb.target.fill(0.0);
        }
    }
    let valid = BlockSystem {
        blocks: valid_blocks,
        terms: train.terms.clone(),
        axis: train.axis,
        coords: train.coords.clone(),
        col_norms: train.col_norms.clone(),
        target_norms: train.target_norms.clone(),
        flagged: train.flagged.clone(),
    };
    Ok((train, valid))
}

/// Builds the 1D library of `u^p * d^k u / dx^k` columns with `u_t` targets.
///
/// Samples whose derivative estimate needed a one-sided or shifted stencil
/// are dropped on the affected axis; spectral axes keep every sample.
pub fn build_blocks(field: &Field1D, spec: &LibrarySpec) -> Result<BlockSystem> {
    spec.validate()?;
    let g = &field.grid;
    let max_d = spec.max_derivative as usize;
    let mut derivs: Vec<Array2<f64>> = Vec::with_capacity(max_d + 1);
    derivs.push(field.u.clone());
    for order in 1..=max_d {
        derivs.push(differentiate_field(
            field,
            DiffAxis::X,
            order,
            spec.space_method,
        )?);
    }
    let u_t = differentiate_field(field, DiffAxis::T, 1, spec.time_method)?;
    let x_trim = spec.space_method.trim(max_d);
    let t_trim = spec.time_method.trim(1);
    if g.n() <= 2 * x_trim || g.m() <= 2 * t_trim {
        return Err(Error::Parameter(
            "grid too small for the boundary trimming".into(),
        ));
    }
    let xs: Vec<usize> = (x_trim..g.n() - x_trim).collect();
    let ts: Vec<usize> = (t_trim..g.m() - t_trim).collect();
    let terms = spec.terms_1d();
    let d = terms.len();

    let entry = |term: &TermDescriptor, i: usize, j: usize| -> f64 {
        let mut v = 1.0;
        for (_, p) in &term.monomial {
            v *= field.u[[i, j]].powi(*p as i32);
        }
        if let Some((_, dv)) = &term.derivative {
            v *= derivs[dv.order()][[i, j]];
        }
        v
    };
    let (outer, inner, coords): (&[usize], &[usize], Vec<f64>) = match spec.axis {
        Axis::Time => (&ts, &xs, ts.iter().map(|&j| g.t.coord(j)).collect()),
        Axis::Space => (&xs, &ts, xs.iter().map(|&i| g.x.coord(i)).collect()),
    };
    let blocks: Vec<Block> = outer
        .iter()
        .map(|&o| {
            let idx = |r: usize| match spec.axis {
                Axis::Time => (inner[r], o),
                Axis::Space => (o, inner[r]),
            };
            let theta = Array2::from_shape_fn((inner.len(), d), |(r, c)| {
                let (i, j) = idx(r);
                entry(&terms[c], i, j)
            });
            let target = Array1::from_shape_fn(inner.len(), |r| {
                let (i, j) = idx(r);
                u_t[[i, j]]
            });
            Block { theta, target }
        })
        .collect();
    if inner.len() < 2 * d {
        log::warn!(
            "only {} rows per block for {d} terms; the regression may be poorly determined",
            inner.len()
        );
    }
    BlockSystem::from_raw(blocks, terms, spec.axis, coords)
}

/// Builds the 2D vorticity library on sampled points, one block per
/// retained timestep.
///
/// Every retained time is kept; edge times use the one-sided or shifted
/// stencils of the time method.
pub fn build_blocks_2d(
    field: &Field2D,
    sample: &SampledSet,
    spec: &LibrarySpec,
) -> Result<BlockSystem> {
    let g = &field.grid;
    let (nx, ny, m) = g.shape();
    if sample.points.is_empty() || sample.times.is_empty() {
        return Err(Error::Parameter("empty sample".into()));
    }
    if sample.points.iter().any(|&(i, j)| i >= nx || j >= ny)
        || sample.times.iter().any(|&t| t >= m)
    {
        return Err(Error::Parameter("sampled index outside the grid".into()));
    }
    let terms = spec.terms_2d.clone().unwrap_or_else(default_terms_2d);
    let mut needed: Vec<Deriv> = Vec::new();
    for t in &terms {
        for (name, _) in &t.monomial {
            if !matches!(name.as_str(), "u" | "v" | "w") {
                return Err(Error::Parameter(format!(
                    "unknown base field `{name}` in term {t}"
                )));
            }
        }
        if let Some((name, d)) = &t.derivative {
            if name != "w" || d.order() == 0 || d.order() > 2 {
                return Err(Error::Parameter(format!(
                    "unsupported derivative in term {t}"
                )));
            }
            if !needed.contains(d) {
                needed.push(*d);
            }
        }
    }

    let times = &sample.times;
    let pick_times = |a: &Array3<f64>| a.select(NdAxis(2), times);
    let w = pick_times(&field.omega);
    let u = pick_times(&field.u);
    let v = pick_times(&field.v);
    let mut dgrid = g.clone();
    dgrid.t.len = times.len();
    let mut deriv_arrays: Vec<(Deriv, Array3<f64>)> = Vec::new();
    for d in needed {
        let a = match (d.x, d.y) {
            (x, 0) => {
                differentiate_field_2d(&w, &dgrid, DiffAxis::X, x as usize, spec.space_method)?
            }
            (0, y) => {
                differentiate_field_2d(&w, &dgrid, DiffAxis::Y, y as usize, spec.space_method)?
            }
            (x, y) => crate::differentiate::differentiate_mixed(
                &w,
                &dgrid,
                x as usize,
                y as usize,
                spec.space_method,
            )?,
        };
        deriv_arrays.push((d, a));
    }
    let dt_op = Differentiator::new(
        m,
        Sampling {
            spacing: g.t.step,
            periodic: false,
        },
        1,
        spec.time_method,
    )?;
    let rows = sample.points.len();
    // w_t at every sampled point, retained times only
    let mut w_t = Array2::zeros((rows, times.len()));
    for (r, &(ix, iy)) in sample.points.iter().enumerate() {
        let series = dt_op.apply(field.omega.slice(s![ix, iy, ..]));
        for (k, &t) in times.iter().enumerate() {
            w_t[[r, k]] = series[t];
        }
    }

    let d = terms.len();
    let blocks: Vec<Block> = (0..times.len())
        .map(|k| {
            let theta = Array2::from_shape_fn((rows, d), |(r, c)| {
                let (ix, iy) = sample.points[r];
                let term = &terms[c];
                let mut val = 1.0;
                for (name, p) in &term.monomial {
                    let base = match name.as_str() {
                        "u" => u[[ix, iy, k]],
                        "v" => v[[ix, iy, k]],
                        _ => w[[ix, iy, k]],
                    };
                    val *= base.powi(*p as i32);
                }
                if let Some((_, dv)) = &term.derivative {
                    let arr = &deriv_arrays
                        .iter()
                        .find(|(dd, _)| dd == dv)
                        .expect("derivative computed")
                        .1;
                    val *= arr[[ix, iy, k]];
                }
                val
            });
            Block {
                theta,
                target: w_t.column(k).to_owned(),
            }
        })
        .collect();
    if rows < 2 * d {
        log::warn!(
            "only {rows} rows per block for {d} terms; the regression may be poorly determined"
        );
    }
    let coords = times.iter().map(|&t| g.t.coord(t)).collect();
    BlockSystem::from_raw(blocks, terms, Axis::Time, coords)
}
