//! Group-sparse regression on a [`BlockSystem`]: SGTR, group LASSO, and the
//! ridge / least-squares primitives they share.
//!
//! All fits work on the normalized system. Coefficient matrices are `d x B`:
//! row `g` is the coefficient series of term `g`, column `j` belongs to block
//! `j`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Axis as NdAxis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{denormalize, BlockSystem};
use crate::linalg::{lstsq, ridge_normal};

/// Regression method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Sgtr,
    Glasso,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sgtr => "sgtr",
            Method::Glasso => "glasso",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgtr" => Ok(Method::Sgtr),
            "glasso" | "group_lasso" => Ok(Method::Glasso),
            other => Err(Error::Parameter(format!("unknown method `{other}`"))),
        }
    }
}

/// Sequential grouped threshold ridge regression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgtrParams {
    pub ridge: f64,
    /// Groups whose coefficient 2-norm is not strictly above this are removed.
    pub threshold: f64,
    pub maxit: usize,
}

impl Default for SgtrParams {
    fn default() -> Self {
        Self {
            ridge: 1e-5,
            threshold: 0.0,
            maxit: 25,
        }
    }
}

impl SgtrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Parameter(format!(
                "ridge must be finite and >= 0, got {}",
                self.ridge
            )));
        }
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(Error::Parameter(format!(
                "threshold must be >= 0, got {}",
                self.threshold
            )));
        }
        if self.maxit == 0 {
            return Err(Error::Parameter("maxit must be >= 1".into()));
        }
        Ok(())
    }
}

/// Group LASSO by block coordinate descent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassoParams {
    pub lambda: f64,
    /// Stop once both the relative objective change and the largest
    /// coefficient update fall below this.
    pub tol: f64,
    pub maxit: usize,
}

impl Default for GlassoParams {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            tol: 1e-8,
            maxit: 1000,
        }
    }
}

impl GlassoParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Parameter(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.tol.is_nan() || self.tol <= 0.0 || self.maxit == 0 {
            return Err(Error::Parameter("tol must be > 0 and maxit >= 1".into()));
        }
        Ok(())
    }
}

/// A fitted model with coefficients varying across blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricModel {
    pub method: Method,
    pub hyperparameter: f64,
    pub seed: Option<u64>,
    /// Term indices with a nonzero coefficient in some block, ascending.
    pub active: Vec<usize>,
    /// `d x B`, physical units.
    pub coeffs: Array2<f64>,
    /// `d x B`, on the normalized system the model was fitted to.
    pub normalized: Array2<f64>,
    /// Mean squared residual on the normalized system.
    pub mse: f64,
    pub terms: Vec<String>,
    pub coords: Vec<f64>,
    pub warnings: Vec<String>,
}

impl ParametricModel {
    pub fn k(&self) -> usize {
        self.active.len()
    }

    pub fn active_names(&self) -> Vec<String> {
        self.active.iter().map(|&g| self.terms[g].clone()).collect()
    }

    /// Physical coefficient series of the named term, if it is active.
    pub fn series(&self, term: &str) -> Option<Vec<f64>> {
        let g = self.terms.iter().position(|t| t == term)?;
        self.active
            .contains(&g)
            .then(|| self.coeffs.row(g).to_vec())
    }

    /// Builds a model from normalized coefficients on `system`.
    pub fn from_normalized(
        system: &BlockSystem,
        normalized: Array2<f64>,
        method: Method,
        hyperparameter: f64,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let mut normalized = normalized;
        // flagged entries never carry weight
        ndarray::Zip::from(&mut normalized)
            .and(&system.flagged)
            .for_each(|c, &f| {
                if f {
                    *c = 0.0;
                }
            });
        let active = nonzero_rows(&normalized);
        let coeffs = denormalize(&normalized, system)?;
        let mse = residual_sq(system, &normalized)? / system.total_rows() as f64;
        Ok(Self {
            method,
            hyperparameter,
            seed: None,
            active,
            coeffs,
            normalized,
            mse,
            terms: system.term_names(),
            coords: system.coords.clone(),
            warnings,
        })
    }
}

fn nonzero_rows(c: &Array2<f64>) -> Vec<usize> {
    c.axis_iter(NdAxis(0))
        .enumerate()
        .filter(|(_, r)| r.iter().any(|&v| v != 0.0))
        .map(|(g, _)| g)
        .collect()
}

/// Group 2-norms over blocks.
pub fn group_norms(coeffs: &Array2<f64>) -> Vec<f64> {
    coeffs
        .axis_iter(NdAxis(0))
        .map(|r| r.dot(&r).sqrt())
        .collect()
}

/// `sum_j ||b_j - theta_j xi_j||^2` on the stored (normalized) system.
pub fn residual_sq(system: &BlockSystem, coeffs: &Array2<f64>) -> Result<f64> {
    if coeffs.dim() != (system.n_terms(), system.n_blocks()) {
        return Err(Error::Shape(format!(
            "coefficients {:?}, system is {}x{}",
            coeffs.dim(),
            system.n_terms(),
            system.n_blocks()
        )));
    }
    Ok(system
        .blocks
        .par_iter()
        .enumerate()
        .map(|(j, b)| {
            let pred = b.theta.dot(&coeffs.column(j));
            let r = &b.target - &pred;
            r.dot(&r)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum())
}

/// Per-block Gram matrices and right-hand sides, reused across many fits on
/// one system.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    grams: Vec<DMatrix<f64>>,
    rhs: Vec<DVector<f64>>,
    target_sq: Vec<f64>,
    rows: usize,
}

impl NormalEquations {
    pub fn new(system: &BlockSystem) -> Self {
        let parts: Vec<(DMatrix<f64>, DVector<f64>, f64)> = system
            .blocks
            .par_iter()
            .map(|b| {
                let g = b.theta.t().dot(&b.theta);
                let p = b.theta.t().dot(&b.target);
                let d = g.nrows();
                (
                    DMatrix::from_fn(d, d, |i, k| g[[i, k]]),
                    DVector::from_iterator(d, p.iter().copied()),
                    b.target.dot(&b.target),
                )
            })
            .collect();
        let mut grams = Vec::with_capacity(parts.len());
        let mut rhs = Vec::with_capacity(parts.len());
        let mut target_sq = Vec::with_capacity(parts.len());
        for (g, p, t) in parts {
            grams.push(g);
            rhs.push(p);
            target_sq.push(t);
        }
        Self {
            grams,
            rhs,
            target_sq,
            rows: system.total_rows(),
        }
    }
}

fn usable_columns(system: &BlockSystem, mask: &[bool], j: usize) -> Vec<usize> {
    (0..system.n_terms())
        .filter(|&g| mask[g] && !system.flagged[[g, j]])
        .collect()
}

/// Per-block fit restricted to `mask`: ridge through the Gram matrices when
/// `lambda > 0`, minimum-norm least squares on the data otherwise. Returns
/// the coefficients and whether any block was rank deficient.
fn fit_masked(
    system: &BlockSystem,
    normal: Option<&NormalEquations>,
    mask: &[bool],
    lambda: f64,
) -> Result<(Array2<f64>, bool)> {
    let d = system.n_terms();
    let cols: Vec<Result<(Vec<f64>, bool)>> = (0..system.n_blocks())
        .into_par_iter()
        .map(|j| {
            let idx = usable_columns(system, mask, j);
            let mut out = vec![0.0; d];
            if idx.is_empty() {
                return Ok((out, false));
            }
            let block = &system.blocks[j];
            let (x, deficient) = if lambda > 0.0 {
                let (gram, rhs) = match normal {
                    Some(ne) => (
                        ne.grams[j].select_rows(&idx).select_columns(&idx),
                        ne.rhs[j].select_rows(&idx),
                    ),
                    None => {
                        let a = block.theta.select(NdAxis(1), &idx);
                        let g = a.t().dot(&a);
                        let p = a.t().dot(&block.target);
                        let k = idx.len();
                        (
                            DMatrix::from_fn(k, k, |r, c| g[[r, c]]),
                            DVector::from_iterator(k, p.iter().copied()),
                        )
                    }
                };
                let x = ridge_normal(&gram, &rhs, lambda).ok_or_else(|| Error::Solve {
                    block: j,
                    reason: "ridge system could not be solved".into(),
                })?;
                (x, false)
            } else {
                let a = DMatrix::from_fn(block.rows(), idx.len(), |r, c| block.theta[[r, idx[c]]]);
                let b = DVector::from_iterator(block.rows(), block.target.iter().copied());
                let sol = lstsq(a, &b).ok_or_else(|| Error::Solve {
                    block: j,
                    reason: "least squares failed".into(),
                })?;
                (sol.x, sol.rank_deficient)
            };
            for (c, &g) in idx.iter().enumerate() {
                out[g] = x[c];
            }
            Ok((out, deficient))
        })
        .collect();
    let mut coeffs = Array2::zeros((d, system.n_blocks()));
    let mut any_deficient = false;
    for (j, c) in cols.into_iter().enumerate() {
        let (col, deficient) = c?;
        any_deficient |= deficient;
        for g in 0..d {
            coeffs[[g, j]] = col[g];
        }
    }
    Ok((coeffs, any_deficient))
}

/// Blockwise ridge regression over every unflagged column.
pub fn ridge_blockwise(system: &BlockSystem, lambda: f64) -> Result<Array2<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "ridge lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let mask = vec![true; system.n_terms()];
    let normal = NormalEquations::new(system);
    Ok(fit_masked(system, Some(&normal), &mask, lambda)?.0)
}

/// Unregularized per-block least squares on the `active` columns; zero
/// elsewhere. Rank-deficient blocks get the minimum-norm solution and a
/// logged warning.
pub fn least_squares_refit(system: &BlockSystem, active: &[usize]) -> Result<Array2<f64>> {
    let (c, deficient) = refit(system, active)?;
    if deficient {
        log::warn!("least squares refit is rank deficient; using the minimum-norm solution");
    }
    Ok(c)
}

fn refit(system: &BlockSystem, active: &[usize]) -> Result<(Array2<f64>, bool)> {
    let mut mask = vec![false; system.n_terms()];
    for &g in active {
        if g >= mask.len() {
            return Err(Error::Parameter(format!("term index {g} out of range")));
        }
        mask[g] = true;
    }
    fit_masked(system, None, &mask, 0.0)
}

/// SGTR with freshly computed normal equations.
pub fn sgtr(system: &BlockSystem, params: &SgtrParams) -> Result<ParametricModel> {
    let normal = NormalEquations::new(system);
    sgtr_with(system, &normal, params)
}

/// SGTR reusing precomputed normal equations of `system`.
pub fn sgtr_with(
    system: &BlockSystem,
    normal: &NormalEquations,
    params: &SgtrParams,
) -> Result<ParametricModel> {
    params.validate()?;
    let d = system.n_terms();
    let mut mask: Vec<bool> = (0..d).map(|g| !system.is_dead_group(g)).collect();
    let mut x = fit_masked(system, Some(normal), &mask, params.ridge)?.0;
    let mut warnings = Vec::new();
    let mut converged = false;
    for _ in 0..params.maxit {
        let norms = group_norms(&x);
        let next: Vec<bool> = (0..d)
            .map(|g| mask[g] && norms[g] > params.threshold)
            .collect();
        if next == mask {
            converged = true;
            break;
        }
        mask = next;
        if !mask.iter().any(|&m| m) {
            converged = true;
            break;
        }
        x = fit_masked(system, Some(normal), &mask, params.ridge)?.0;
    }
    if !converged {
        warnings.push(format!(
            "sgtr support still changing after {} iterations",
            params.maxit
        ));
    }
    let active: Vec<usize> = (0..d).filter(|&g| mask[g]).collect();
    let (coeffs, deficient) = refit(system, &active)?;
    if deficient {
        warnings.push("rank-deficient refit; minimum-norm solution used".into());
    }
    ParametricModel::from_normalized(system, coeffs, Method::Sgtr, params.threshold, warnings)
}

/// Group LASSO before debiasing: the penalized solution and whether it met
/// the tolerance.
#[derive(Debug, Clone)]
pub struct GlassoPath {
    pub coeffs: Array2<f64>,
    pub objective: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Minimizes `(1/2N)||b - A w||^2 + lambda * sum_g ||w_g||` by cyclic block
/// coordinate descent, starting from `init` (zeros when `None`).
pub fn glasso_penalized(
    system: &BlockSystem,
    normal: &NormalEquations,
    params: &GlassoParams,
    init: Option<&Array2<f64>>,
) -> Result<GlassoPath> {
    params.validate()?;
    let d = system.n_terms();
    let nb = system.n_blocks();
    let n = normal.rows as f64;
    let mut w = match init {
        Some(i) if i.dim() == (d, nb) => i.clone(),
        Some(i) => {
            return Err(Error::Shape(format!(
                "warm start {:?}, expected ({d}, {nb})",
                i.dim()
            )))
        }
        None => Array2::zeros((d, nb)),
    };
    ndarray::Zip::from(&mut w)
        .and(&system.flagged)
        .for_each(|c, &f| {
            if f {
                *c = 0.0;
            }
        });
    // Zero is optimal once every ||A_g^T b|| <= lambda N; the slack absorbs
    // roundoff against `select::lambda_max`, which sums in a different order.
    let at_zero = (0..d)
        .map(|g| {
            (0..nb)
                .filter(|&j| !system.flagged[[g, j]])
                .map(|j| normal.rhs[j][g].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    if at_zero <= params.lambda * n * (1.0 + 1e-12) {
        let zero = Array2::zeros((d, nb));
        let objective = 0.5 * normal.target_sq.iter().sum::<f64>() / n;
        return Ok(GlassoPath {
            coeffs: zero,
            objective,
            sweeps: 0,
            converged: true,
        });
    }
    // q_j = G_j w_j
    let mut q: Vec<DVector<f64>> = (0..nb)
        .map(|j| &normal.grams[j] * DVector::from_iterator(d, w.column(j).iter().copied()))
        .collect();
    let objective = |w: &Array2<f64>, q: &[DVector<f64>]| {
        let mut rss = 0.0;
        for j in 0..nb {
            let mut wp = 0.0;
            let mut wq = 0.0;
            for g in 0..d {
                wp += w[[g, j]] * normal.rhs[j][g];
                wq += w[[g, j]] * q[j][g];
            }
            rss += normal.target_sq[j] - 2.0 * wp + wq;
        }
        0.5 * rss.max(0.0) / n + params.lambda * group_norms(w).iter().sum::<f64>()
    };
    let mut obj = objective(&w, &q);
    let mut c = vec![0.0; nb];
    for sweep in 1..=params.maxit {
        let mut max_step: f64 = 0.0;
        let mut max_w: f64 = 0.0;
        for g in 0..d {
            let mut cn = 0.0;
            for j in 0..nb {
                c[j] = if system.flagged[[g, j]] {
                    0.0
                } else {
                    normal.rhs[j][g] - q[j][g] + w[[g, j]]
                };
                cn += c[j] * c[j];
            }
            let cn = cn.sqrt();
            let shrink = if cn > 0.0 {
                (1.0 - params.lambda * n / cn).max(0.0)
            } else {
                0.0
            };
            for j in 0..nb {
                let new = shrink * c[j];
                let delta = new - w[[g, j]];
                if delta != 0.0 {
                    w[[g, j]] = new;
                    let col = normal.grams[j].column(g);
                    q[j].axpy(delta, &col, 1.0);
                    max_step = max_step.max(delta.abs());
                }
                max_w = max_w.max(new.abs());
            }
        }
        let next = objective(&w, &q);
        let rel = (obj - next).abs() / obj.abs().max(f64::MIN_POSITIVE);
        obj = next;
        if rel < params.tol && max_step <= params.tol * max_w.max(1.0) {
            return Ok(GlassoPath {
                coeffs: w,
                objective: obj,
                sweeps: sweep,
                converged: true,
            });
        }
    }
    Ok(GlassoPath {
        coeffs: w,
        objective: obj,
        sweeps: params.maxit,
        converged: false,
    })
}

/// Group LASSO followed by a least-squares debias on the surviving groups.
pub fn glasso(system: &BlockSystem, params: &GlassoParams) -> Result<ParametricModel> {
    let normal = NormalEquations::new(system);
    glasso_with(system, &normal, params, None).map(|(m, _)| m)
}

/// Group LASSO with precomputed normal equations and an optional warm start.
/// Also returns the penalized (pre-debias) coefficients.
pub fn glasso_with(
    system: &BlockSystem,
    normal: &NormalEquations,
    params: &GlassoParams,
    init: Option<&Array2<f64>>,
) -> Result<(ParametricModel, Array2<f64>)> {
    let path = glasso_penalized(system, normal, params, init)?;
    let mut warnings = Vec::new();
    if !path.converged {
        warnings.push(format!(
            "glasso did not converge in {} sweeps",
            params.maxit
        ));
    }
    let active = nonzero_rows(&path.coeffs);
    let (coeffs, deficient) = refit(system, &active)?;
    if deficient {
        warnings.push("rank-deficient refit; minimum-norm solution used".into());
    }
    let model =
        ParametricModel::from_normalized(system, coeffs, Method::Glasso, params.lambda, warnings)?;
    Ok((model, path.coeffs))
}
