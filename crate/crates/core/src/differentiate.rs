//! Numerical derivatives of uniformly sampled series and gridded fields.
//!
//! Three methods are available: Fourier spectral differentiation for periodic
//! axes, second-order finite differences (one-sided second-order stencils at
//! the edges), and local least-squares polynomial smoothing for noisy data.

use std::sync::Arc;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayViewMut1, Axis, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fields::{Field1D, Grid2D};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMethod {
    Spectral,
    CentralFd,
    /// Least-squares polynomial of `degree` over a `2 * half_width + 1` window,
    /// differentiated at the evaluation point.
    PolySmooth {
        degree: usize,
        half_width: usize,
    },
}

impl DiffMethod {
    /// Degree 4 over an 11-point window.
    pub const fn poly_default() -> Self {
        DiffMethod::PolySmooth {
            degree: 4,
            half_width: 5,
        }
    }

    /// Samples per edge whose estimate used a one-sided or shifted stencil,
    /// for derivatives up to `max_order`. Spectral estimates are never trimmed.
    pub fn trim(&self, max_order: usize) -> usize {
        match *self {
            DiffMethod::Spectral => 0,
            DiffMethod::CentralFd => central_half_width(max_order.max(1)),
            DiffMethod::PolySmooth { half_width, .. } => half_width,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            DiffMethod::Spectral => "spectral".into(),
            DiffMethod::CentralFd => "central_fd".into(),
            DiffMethod::PolySmooth { degree, half_width } => {
                format!("poly_smooth:{degree}:{half_width}")
            }
        }
    }
}

impl std::str::FromStr for DiffMethod {
    type Err = Error;

    /// Accepts `spectral`, `central_fd`, `poly_smooth` or `poly_smooth:DEG:HALF`.
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        match parts.next().unwrap_or_default() {
            "spectral" => Ok(DiffMethod::Spectral),
            "central_fd" | "fd" => Ok(DiffMethod::CentralFd),
            "poly_smooth" | "poly" => {
                let rest: Vec<&str> = parts.collect();
                match rest[..] {
                    [] => Ok(DiffMethod::poly_default()),
                    [d, w] => {
                        let parse = |x: &str| {
                            x.parse::<usize>().map_err(|_| {
                                Error::Parameter(format!("bad poly_smooth parameter `{x}`"))
                            })
                        };
                        Ok(DiffMethod::PolySmooth {
                            degree: parse(d)?,
                            half_width: parse(w)?,
                        })
                    }
                    _ => Err(Error::Parameter(format!("bad poly_smooth spec `{s}`"))),
                }
            }
            other => Err(Error::Parameter(format!(
                "unknown differentiation method `{other}`"
            ))),
        }
    }
}

/// Spacing and periodicity of a sampled axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub spacing: f64,
    pub periodic: bool,
}

fn central_half_width(order: usize) -> usize {
    order.div_ceil(2)
}

/// Finite-difference weights for the `order`-th derivative at `z` from
/// samples at `nodes` (Fornberg's recursion).
fn fornberg(z: f64, nodes: &[f64], order: usize) -> Vec<f64> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; order + 1]; n];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[order]).collect()
}

/// Per-point stencil: sample window start and weights.
#[derive(Debug, Clone)]
struct Stencil {
    start: usize,
    weights: Vec<f64>,
}

#[derive(Clone)]
enum Kernel {
    Spectral {
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
        multiplier: Vec<Complex64>,
    },
    /// `edges_left[i]` for the first points, `interior` for the bulk,
    /// `edges_right[i]` for the last points.
    Stencils {
        interior: Stencil,
        half: usize,
        edges_left: Vec<Stencil>,
        edges_right: Vec<Stencil>,
    },
    Zero,
}

/// Derivative operator for series of a fixed length, reusable across slices.
#[derive(Clone)]
pub struct Differentiator {
    len: usize,
    kernel: Kernel,
}

impl Differentiator {
    pub fn new(len: usize, sampling: Sampling, order: usize, method: DiffMethod) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::Parameter(format!(
                "derivative order must be in 1..={MAX_ORDER}, got {order}"
            )));
        }
        let h = sampling.spacing;
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::Parameter(format!(
                "spacing must be positive, got {h}"
            )));
        }
        let kernel = match method {
            DiffMethod::Spectral => {
                if !sampling.periodic {
                    return Err(Error::Parameter(
                        "spectral differentiation needs a periodic axis".into(),
                    ));
                }
                spectral_kernel(len, h, order)
            }
            DiffMethod::CentralFd => {
                let half = central_half_width(order);
                let width = 2 * half + 1;
                let one_sided = order + 2;
                if len < width.max(one_sided) {
                    return Err(Error::Parameter(format!(
                        "series of length {len} too short for order {order}"
                    )));
                }
                let nodes: Vec<f64> = (0..width).map(|i| i as f64).collect();
                let scale = h.powi(order as i32);
                let interior = Stencil {
                    start: 0,
                    weights: fornberg(half as f64, &nodes, order)
                        .into_iter()
                        .map(|w| w / scale)
                        .collect(),
                };
                let side: Vec<f64> = (0..one_sided).map(|i| i as f64).collect();
                let edges_left = (0..half)
                    .map(|i| Stencil {
                        start: 0,
                        weights: fornberg(i as f64, &side, order)
                            .into_iter()
                            .map(|w| w / scale)
                            .collect(),
                    })
                    .collect();
                let edges_right = (0..half)
                    .map(|i| {
                        // i counts from the last sample backwards
                        let z = (one_sided - 1 - i) as f64;
                        Stencil {
                            start: len - one_sided,
                            weights: fornberg(z, &side, order)
                                .into_iter()
                                .map(|w| w / scale)
                                .collect(),
                        }
                    })
                    .collect();
                Kernel::Stencils {
                    interior,
                    half,
                    edges_left,
                    edges_right,
                }
            }
            DiffMethod::PolySmooth { degree, half_width } => {
                let width = 2 * half_width + 1;
                if degree >= width {
                    return Err(Error::Parameter(format!(
                        "polynomial degree {degree} must be below window size {width}"
                    )));
                }
                if width > len {
                    return Err(Error::Parameter(format!(
                        "window of {width} exceeds series length {len}"
                    )));
                }
                if order > degree {
                    Kernel::Zero
                } else {
                    let pinv = poly_pseudo_inverse(width, degree)?;
                    let scale = h.powi(order as i32);
                    let weights_at = |eval: usize| -> Vec<f64> {
                        // derivative of sum_k c_k s^k at s = eval - half_width, in index units
                        let s = eval as f64 - half_width as f64;
                        (0..width)
                            .map(|col| {
                                (order..=degree)
                                    .map(|k| {
                                        let falling: f64 =
                                            ((k - order + 1)..=k).map(|v| v as f64).product();
                                        falling * s.powi((k - order) as i32) * pinv[(k, col)]
                                    })
                                    .sum::<f64>()
                                    / scale
                            })
                            .collect()
                    };
                    let interior = Stencil {
                        start: 0,
                        weights: weights_at(half_width),
                    };
                    let edges_left = (0..half_width)
                        .map(|i| Stencil {
                            start: 0,
                            weights: weights_at(i),
                        })
                        .collect();
                    let edges_right = (0..half_width)
                        .map(|i| Stencil {
                            start: len - width,
                            weights: weights_at(width - 1 - i),
                        })
                        .collect();
                    Kernel::Stencils {
                        interior,
                        half: half_width,
                        edges_left,
                        edges_right,
                    }
                }
            }
        };
        Ok(Self { len, kernel })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Writes the derivative of `values` into `out`.
    pub fn apply_into(&self, values: ArrayView1<f64>, mut out: ArrayViewMut1<f64>) {
        assert_eq!(
            values.len(),
            self.len,
            "series length does not match operator"
        );
        match &self.kernel {
            Kernel::Zero => out.fill(0.0),
            Kernel::Spectral {
                forward,
                inverse,
                multiplier,
            } => {
                let mut buf: Vec<Complex64> =
                    values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                forward.process(&mut buf);
                for (b, m) in buf.iter_mut().zip(multiplier) {
                    *b *= m;
                }
                inverse.process(&mut buf);
                let norm = 1.0 / self.len as f64;
                for (o, b) in out.iter_mut().zip(&buf) {
                    *o = b.re * norm;
                }
            }
            Kernel::Stencils {
                interior,
                half,
                edges_left,
                edges_right,
            } => {
                let n = self.len;
                let dot = |st: &Stencil, start: usize| -> f64 {
                    st.weights
                        .iter()
                        .enumerate()
                        .map(|(k, w)| w * values[start + k])
                        .sum()
                };
                for (i, o) in out.iter_mut().enumerate() {
                    *o = if i < *half {
                        dot(&edges_left[i], edges_left[i].start)
                    } else if i + half >= n {
                        let st = &edges_right[n - 1 - i];
                        dot(st, st.start)
                    } else {
                        dot(interior, i - half)
                    };
                }
            }
        }
    }

    pub fn apply(&self, values: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(values.len());
        self.apply_into(values, out.view_mut());
        out
    }
}

fn spectral_kernel(len: usize, h: f64, order: usize) -> Kernel {
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(len);
    let inverse = planner.plan_fft_inverse(len);
    let base = 2.0 * std::f64::consts::PI / (len as f64 * h);
    let multiplier = (0..len)
        .map(|f| {
            let signed = if f <= len / 2 {
                f as f64
            } else {
                f as f64 - len as f64
            };
            if len.is_multiple_of(2) && f == len / 2 && order % 2 == 1 {
                return Complex64::new(0.0, 0.0);
            }
            Complex64::new(0.0, signed * base).powu(order as u32)
        })
        .collect();
    Kernel::Spectral {
        forward,
        inverse,
        multiplier,
    }
}

/// Pseudo-inverse of the Vandermonde matrix on offsets `-half..=half`.
fn poly_pseudo_inverse(width: usize, degree: usize) -> Result<DMatrix<f64>> {
    let half = (width / 2) as f64;
    let v = DMatrix::from_fn(width, degree + 1, |r, c| (r as f64 - half).powi(c as i32));
    v.pseudo_inverse(1e-13)
        .map_err(|e| Error::Parameter(format!("polynomial fit failed: {e}")))
}

/// `order`-th derivative of a uniformly sampled series.
///
/// Edge samples are estimated with one-sided (finite differences) or shifted
/// (polynomial) stencils; dropping them is the caller's decision.
pub fn derivative(
    values: ArrayView1<f64>,
    sampling: Sampling,
    order: usize,
    method: DiffMethod,
) -> Result<Array1<f64>> {
    Ok(Differentiator::new(values.len(), sampling, order, method)?.apply(values))
}

/// Axis of a gridded field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffAxis {
    X,
    Y,
    T,
}

fn along<D: ndarray::Dimension>(
    data: &ndarray::Array<f64, D>,
    axis: usize,
    op: &Differentiator,
) -> ndarray::Array<f64, D> {
    let mut out = ndarray::Array::<f64, D>::zeros(data.raw_dim());
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(data.lanes(Axis(axis)))
        .par_for_each(|o, v| op.apply_into(v, o));
    out
}

/// Derivative of a 1D field along `x` (axis 0) or `t` (axis 1).
pub fn differentiate_field(
    field: &Field1D,
    axis: DiffAxis,
    order: usize,
    method: DiffMethod,
) -> Result<Array2<f64>> {
    let g = &field.grid;
    let (ax, sampling, len) = match axis {
        DiffAxis::X => (
            0,
            Sampling {
                spacing: g.dx(),
                periodic: g.periodic,
            },
            g.n(),
        ),
        DiffAxis::T => (
            1,
            Sampling {
                spacing: g.dt(),
                periodic: false,
            },
            g.m(),
        ),
        DiffAxis::Y => return Err(Error::Parameter("a 1D field has no y axis".into())),
    };
    let op = Differentiator::new(len, sampling, order, method)?;
    Ok(along(&field.u, ax, &op))
}

/// Derivative of one component of a 2D field, arrays indexed `[ix, iy, it]`.
pub fn differentiate_field_2d(
    data: &Array3<f64>,
    grid: &Grid2D,
    axis: DiffAxis,
    order: usize,
    method: DiffMethod,
) -> Result<Array3<f64>> {
    let (ax, sampling, len) = match axis {
        DiffAxis::X => (
            0,
            Sampling {
                spacing: grid.x.step,
                periodic: grid.periodic[0],
            },
            grid.x.len,
        ),
        DiffAxis::Y => (
            1,
            Sampling {
                spacing: grid.y.step,
                periodic: grid.periodic[1],
            },
            grid.y.len,
        ),
        DiffAxis::T => (
            2,
            Sampling {
                spacing: grid.t.step,
                periodic: false,
            },
            grid.t.len,
        ),
    };
    if data.shape()[ax] != len {
        return Err(Error::Shape(format!(
            "array axis {ax} has length {}, grid says {len}",
            data.shape()[ax]
        )));
    }
    let op = Differentiator::new(len, sampling, order, method)?;
    Ok(along(data, ax, &op))
}

/// Mixed derivative `d^(ox+oy) / dx^ox dy^oy`, applied in x first, then y.
pub fn differentiate_mixed(
    data: &Array3<f64>,
    grid: &Grid2D,
    order_x: usize,
    order_y: usize,
    method: DiffMethod,
) -> Result<Array3<f64>> {
    let dx = differentiate_field_2d(data, grid, DiffAxis::X, order_x, method)?;
    differentiate_field_2d(&dx, grid, DiffAxis::Y, order_y, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid1D, UniformAxis};
    use std::f64::consts::PI;

    fn periodic(n: usize, len: f64) -> (Vec<f64>, Sampling) {
        let h = len / n as f64;
        (
            (0..n).map(|i| i as f64 * h).collect(),
            Sampling {
                spacing: h,
                periodic: true,
            },
        )
    }

    #[test]
    fn spectral_sine_gives_cosine() {
        let (x, s) = periodic(64, 2.0 * PI);
        let f = Array1::from_iter(x.iter().map(|v| v.sin()));
        let d = derivative(f.view(), s, 1, DiffMethod::Spectral).unwrap();
        for (xi, di) in x.iter().zip(d.iter()) {
            assert!((di - xi.cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn constants_have_zero_derivatives() {
        let f = Array1::from_elem(40, 3.5);
        let s = Sampling {
            spacing: 0.1,
            periodic: true,
        };
        for order in 1..=4 {
            for m in [DiffMethod::CentralFd, DiffMethod::poly_default()] {
                let d = derivative(f.view(), s, order, m).unwrap();
                assert!(d.iter().all(|v| v.abs() < 1e-9), "{m:?} order {order}: {d}");
            }
            let d = derivative(f.view(), s, order, DiffMethod::Spectral).unwrap();
            assert!(d.iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn poly_smooth_cubic_third_derivative() {
        let h = 0.05;
        let lead = 1.7;
        let f = Array1::from_iter((0..30).map(|i| {
            let x = -0.3 + i as f64 * h;
            lead * x.powi(3) - 0.4 * x * x + 2.0 * x - 1.0
        }));
        let d = derivative(
            f.view(),
            Sampling {
                spacing: h,
                periodic: false,
            },
            3,
            DiffMethod::poly_default(),
        )
        .unwrap();
        for v in d.iter() {
            assert!((v - 6.0 * lead).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn central_fd_is_exact_on_quadratics_and_second_order() {
        let h = 0.1;
        let f = Array1::from_iter((0..20).map(|i| {
            let x = i as f64 * h;
            3.0 * x * x - x + 2.0
        }));
        let s = Sampling {
            spacing: h,
            periodic: false,
        };
        let d1 = derivative(f.view(), s, 1, DiffMethod::CentralFd).unwrap();
        let d2 = derivative(f.view(), s, 2, DiffMethod::CentralFd).unwrap();
        for i in 0..20 {
            let x = i as f64 * h;
            assert!((d1[i] - (6.0 * x - 1.0)).abs() < 1e-10);
            assert!((d2[i] - 6.0).abs() < 1e-9);
        }
        // Error falls by ~4x when h halves, including at the boundary.
        let err = |n: usize, order: usize| {
            let h = 1.0 / n as f64;
            let f = Array1::from_iter((0..=n).map(|i| (i as f64 * h).exp()));
            let d = derivative(
                f.view(),
                Sampling {
                    spacing: h,
                    periodic: false,
                },
                order,
                DiffMethod::CentralFd,
            )
            .unwrap();
            (0..=n)
                .map(|i| (d[i] - (i as f64 * h).exp()).abs())
                .fold(0.0, f64::max)
        };
        for order in 1..=4 {
            let ratio = err(40, order) / err(80, order);
            assert!(ratio > 3.5 && ratio < 4.5, "order {order}: ratio {ratio}");
        }
    }

    #[test]
    fn errors_on_bad_requests() {
        let f = Array1::from_elem(8, 1.0);
        let np = Sampling {
            spacing: 1.0,
            periodic: false,
        };
        assert!(derivative(f.view(), np, 5, DiffMethod::CentralFd).is_err());
        assert!(derivative(f.view(), np, 0, DiffMethod::CentralFd).is_err());
        assert!(derivative(f.view(), np, 1, DiffMethod::Spectral).is_err());
        assert!(derivative(f.view(), np, 1, DiffMethod::poly_default()).is_err());
        assert!(derivative(
            f.view(),
            np,
            1,
            DiffMethod::PolySmooth {
                degree: 3,
                half_width: 1
            }
        )
        .is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!(
            "spectral".parse::<DiffMethod>().unwrap(),
            DiffMethod::Spectral
        );
        assert_eq!(
            "poly".parse::<DiffMethod>().unwrap(),
            DiffMethod::poly_default()
        );
        assert_eq!(
            "poly_smooth:3:4".parse::<DiffMethod>().unwrap(),
            DiffMethod::PolySmooth {
                degree: 3,
                half_width: 4
            }
        );
        assert!("bogus".parse::<DiffMethod>().is_err());
    }

    #[test]
    fn separable_field_x_derivative() {
        let grid = Grid1D::periodic(0.0, 2.0 * PI, 64, 0.0, 1.0, 10).unwrap();
        let xs = grid.x.coords();
        let ts = grid.t.coords();
        let u = Array2::from_shape_fn((64, 10), |(i, j)| xs[i].sin() * (1.0 + ts[j]));
        let f = Field1D::new(grid, u).unwrap();
        let d = differentiate_field(&f, DiffAxis::X, 1, DiffMethod::Spectral).unwrap();
        for ((i, j), v) in d.indexed_iter() {
            assert!((v - xs[i].cos() * (1.0 + ts[j])).abs() < 1e-10);
        }
    }

    #[test]
    fn mixed_derivative_commutes() {
        let ax = |n: usize| UniformAxis::new(0.0, 2.0 * PI / n as f64, n).unwrap();
        let grid = Grid2D {
            x: ax(32),
            y: ax(24),
            t: UniformAxis::new(0.0, 0.1, 8).unwrap(),
            periodic: [true, true],
        };
        let (xs, ys) = (grid.x.coords(), grid.y.coords());
        let a = Array3::from_shape_fn((32, 24, 8), |(i, j, k)| {
            (xs[i] + 2.0 * ys[j]).sin() * (ys[j].cos() + 0.1 * k as f64) + (2.0 * xs[i]).cos()
        });
        let xy = differentiate_mixed(&a, &grid, 1, 1, DiffMethod::Spectral).unwrap();
        let dy = differentiate_field_2d(&a, &grid, DiffAxis::Y, 1, DiffMethod::Spectral).unwrap();
        let yx = differentiate_field_2d(&dy, &grid, DiffAxis::X, 1, DiffMethod::Spectral).unwrap();
        let worst = (&xy - &yx).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-8, "{worst}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn method_strategy() -> impl Strategy<Value = (DiffMethod, bool)> {
            prop_oneof![
                Just((DiffMethod::Spectral, true)),
                Just((DiffMethod::CentralFd, false)),
                (1usize..=6, 3usize..=7).prop_map(|(d, w)| (
                    DiffMethod::PolySmooth {
                        degree: d,
                        half_width: w
                    },
                    false
                )),
            ]
        }

        proptest! {
            #[test]
            fn linearity(
                f in prop::collection::vec(-1.0f64..1.0, 32),
                g in prop::collection::vec(-1.0f64..1.0, 32),
                alpha in -3.0f64..3.0,
                beta in -3.0f64..3.0,
                order in 1usize..=4,
                (method, periodic) in method_strategy(),
            ) {
                let s = Sampling { spacing: 1.0, periodic };
                let (f, g) = (Array1::from(f), Array1::from(g));
                let combo = &f * alpha + &g * beta;
                let dc = derivative(combo.view(), s, order, method).unwrap();
                let df = derivative(f.view(), s, order, method).unwrap();
                let dg = derivative(g.view(), s, order, method).unwrap();
                let scale = dc.iter().chain(df.iter()).chain(dg.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
                for i in 0..32 {
                    prop_assert!((dc[i] - alpha * df[i] - beta * dg[i]).abs() <= 1e-12 * scale * (alpha.abs() + beta.abs()).max(1.0));
                }
            }

            #[test]
            fn spectral_scales_fourier_modes(n in prop::sample::select(vec![16usize, 32, 48]), k in 1usize..7, order in 1usize..=4, phase in 0.0f64..6.3) {
                let (x, s) = periodic(n, 2.0 * PI);
                let kf = k as f64;
                let f = Array1::from_iter(x.iter().map(|v| (kf * v + phase).sin()));
                let d = derivative(f.view(), s, order, DiffMethod::Spectral).unwrap();
                for (xi, di) in x.iter().zip(d.iter()) {
                    // d^p/dx^p sin(kx + c) = k^p sin(kx + c + p pi/2)
                    let want = kf.powi(order as i32) * (kf * xi + phase + order as f64 * PI / 2.0).sin();
                    let roundoff = 1e-13 * (n as f64 / 2.0).powi(order as i32);
                    prop_assert!((di - want).abs() <= 1e-10 * kf.powi(order as i32) + roundoff);
                }
            }

            #[test]
            fn poly_smooth_exact_on_polynomials(
                coeffs in prop::collection::vec(-1.0f64..1.0, 1..=5),
                order in 1usize..=4,
                h in 0.1f64..0.5,
            ) {
                let x0 = -1.0;
                let f = Array1::from_iter((0..25).map(|i| {
                    let x = x0 + i as f64 * h;
                    coeffs.iter().enumerate().map(|(p, a)| a * x.powi(p as i32)).sum::<f64>()
                }));
                let d = derivative(f.view(), Sampling { spacing: h, periodic: false }, order, DiffMethod::poly_default()).unwrap();
                for (i, v) in d.iter().enumerate() {
                    let x = x0 + i as f64 * h;
                    let want: f64 = coeffs.iter().enumerate().skip(order).map(|(p, a)| {
                        a * (0..order).map(|q| (p - q) as f64).product::<f64>() * x.powi((p - order) as i32)
                    }).sum();
                    prop_assert!((v - want).abs() <= 1e-9 * want.abs().max(1.0), "{v} vs {want}");
                }
            }
        }
    }
}
