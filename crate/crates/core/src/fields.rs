//! Gridded spatio-temporal data, noise injection and the on-disk dataset format.
//!
//! A dataset `<name>` is stored as two files: `<name>.meta`, UTF-8 `key=value`
//! lines describing the grid, and `<name>.f64`, the raw little-endian float64
//! payload in row-major order with fields concatenated in declared order.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const MIN_POINTS: usize = 8;

/// Uniform axis `x0 + i * step` for `i in 0..len`.
///
/// Coordinates are always regenerated from `(start, step, len)`, which keeps
/// the dataset round trip bit-exact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformAxis {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformAxis {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if step <= 0.0 || !step.is_finite() || !start.is_finite() {
            return Err(Error::Grid(format!(
                "spacing must be positive and finite, got {step}"
            )));
        }
        if len < MIN_POINTS {
            return Err(Error::Grid(format!(
                "need at least {MIN_POINTS} points, got {len}"
            )));
        }
        Ok(Self { start, step, len })
    }

    /// Validates that `coords` is strictly increasing and uniformly spaced.
    pub fn from_coords(coords: &[f64]) -> Result<Self> {
        if coords.len() < MIN_POINTS {
            return Err(Error::Grid(format!(
                "need at least {MIN_POINTS} points, got {}",
                coords.len()
            )));
        }
        let n = coords.len();
        let step = (coords[n - 1] - coords[0]) / (n - 1) as f64;
        for w in coords.windows(2) {
            if (w[1] - w[0] - step).abs() >= 1e-12 * step {
                return Err(Error::Grid("coordinates are not uniformly spaced".into()));
            }
        }
        Self::new(coords[0], step, n)
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.coord(i)).collect()
    }

    pub fn last(&self) -> f64 {
        self.coord(self.len - 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    pub x: UniformAxis,
    pub t: UniformAxis,
    pub periodic: bool,
}

impl Grid1D {
    pub fn new(x: UniformAxis, t: UniformAxis, periodic: bool) -> Self {
        Self { x, t, periodic }
    }

    /// Periodic grid on `[x_min, x_max)` with `n` points and `m` times on `[t0, t1]`.
    pub fn periodic(x_min: f64, x_max: f64, n: usize, t0: f64, t1: f64, m: usize) -> Result<Self> {
        let x = UniformAxis::new(x_min, (x_max - x_min) / n as f64, n)?;
        let t = UniformAxis::new(t0, (t1 - t0) / (m.max(2) - 1) as f64, m)?;
        Ok(Self {
            x,
            t,
            periodic: true,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len
    }

    pub fn m(&self) -> usize {
        self.t.len
    }

    pub fn dx(&self) -> f64 {
        self.x.step
    }

    pub fn dt(&self) -> f64 {
        self.t.step
    }
}

/// Scalar field `u(x, t)`; column `j` of `u` is the snapshot at `t[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1D {
    pub grid: Grid1D,
    pub u: Array2<f64>,
}

impl Field1D {
    pub fn new(grid: Grid1D, u: Array2<f64>) -> Result<Self> {
        if u.dim() != (grid.n(), grid.m()) {
            return Err(Error::Shape(format!(
                "field is {:?} but grid is {}x{}",
                u.dim(),
                grid.n(),
                grid.m()
            )));
        }
        if !u.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("field u".into()));
        }
        Ok(Self { grid, u })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub x: UniformAxis,
    pub y: UniformAxis,
    pub t: UniformAxis,
    pub periodic: [bool; 2],
}

impl Grid2D {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.x.len, self.y.len, self.t.len)
    }
}

/// Vorticity and velocity on a 2D grid, each array indexed `[ix, iy, it]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: Grid2D,
    pub omega: Array3<f64>,
    pub u: Array3<f64>,
    pub v: Array3<f64>,
}

impl Field2D {
    pub fn new(grid: Grid2D, omega: Array3<f64>, u: Array3<f64>, v: Array3<f64>) -> Result<Self> {
        let shape = grid.shape();
        for (name, a) in [("w", &omega), ("u", &u), ("v", &v)] {
            if a.dim() != shape {
                return Err(Error::Shape(format!(
                    "{name} is {:?}, grid is {shape:?}",
                    a.dim()
                )));
            }
            if !a.iter().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("field {name}")));
            }
        }
        Ok(Self { grid, omega, u, v })
    }
}

/// White-noise level as a fraction of the field's RMS value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(level: f64, seed: u64) -> Result<Self> {
        if level < 0.0 || !level.is_finite() {
            return Err(Error::Parameter(format!(
                "noise level must be >= 0, got {level}"
            )));
        }
        Ok(Self { level, seed })
    }
}

/// Types that can be corrupted by [`add_noise`].
pub trait Noisy: Sized + Clone {
    /// Visits every stored array in a fixed order.
    fn arrays_mut(&mut self) -> Vec<&mut [f64]>;
}

impl Noisy for Field1D {
    fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.u.as_slice_mut().expect("standard layout")]
    }
}

impl Noisy for Field2D {
    fn arrays_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.omega.as_slice_mut().expect("standard layout"),
            self.u.as_slice_mut().expect("standard layout"),
            self.v.as_slice_mut().expect("standard layout"),
        ]
    }
}

/// Root mean square `||a||_2 / sqrt(len)`.
pub fn rms(a: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt()
}

/// Adds i.i.d. Gaussian noise with standard deviation `level * RMS` to each
/// stored array.
///
/// Samples come from a ChaCha20 stream seeded with `spec.seed`, drawn in
/// row-major order, array by array (`w`, `u`, `v` for 2D fields). Each array
/// uses its own RMS.
pub fn add_noise<F: Noisy>(field: &F, spec: &NoiseSpec) -> Result<F> {
    NoiseSpec::new(spec.level, spec.seed)?;
    let mut out = field.clone();
    if spec.level == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    for arr in out.arrays_mut() {
        let sigma = spec.level * rms(arr);
        if sigma == 0.0 {
            continue;
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
        for v in arr.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Either kind of stored dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    One(Field1D),
    Two(Field2D),
}

impl From<Field1D> for Dataset {
    fn from(f: Field1D) -> Self {
        Dataset::One(f)
    }
}

impl From<Field2D> for Dataset {
    fn from(f: Field2D) -> Self {
        Dataset::Two(f)
    }
}

/// Path of the metadata and payload files for dataset base name `base`.
pub fn dataset_paths(base: &Path) -> (PathBuf, PathBuf) {
    let mut meta = base.as_os_str().to_owned();
    meta.push(".meta");
    let mut payload = base.as_os_str().to_owned();
    payload.push(".f64");
    (PathBuf::from(meta), PathBuf::from(payload))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Writes `bytes` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn save_dataset(data: &Dataset, base: &Path) -> Result<()> {
    let (meta_path, payload_path) = dataset_paths(base);
    let mut meta = String::new();
    let mut payload: Vec<u8> = Vec::new();
    let mut push = |a: &[f64]| {
        for v in a {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    };
    match data {
        Dataset::One(f) => {
            let g = &f.grid;
            meta.push_str("kind=field1d\n");
            meta.push_str(&format!("dims={},{}\n", g.n(), g.m()));
            meta.push_str(&format!("dx={}\n", fmt_f64(g.x.step)));
            meta.push_str(&format!("dt={}\n", fmt_f64(g.t.step)));
            meta.push_str(&format!("x0={}\n", fmt_f64(g.x.start)));
            meta.push_str(&format!("t0={}\n", fmt_f64(g.t.start)));
            meta.push_str(&format!("periodic={}\n", g.periodic));
            meta.push_str("fields=u\n");
            push(
                f.u.as_standard_layout()
                    .as_slice()
                    .expect("standard layout"),
            );
        }
        Dataset::Two(f) => {
            let g = &f.grid;
            meta.push_str("kind=field2d\n");
            meta.push_str(&format!("dims={},{},{}\n", g.x.len, g.y.len, g.t.len));
            meta.push_str(&format!("dx={}\n", fmt_f64(g.x.step)));
            meta.push_str(&format!("dy={}\n", fmt_f64(g.y.step)));
            meta.push_str(&format!("dt={}\n", fmt_f64(g.t.step)));
            meta.push_str(&format!("x0={}\n", fmt_f64(g.x.start)));
            meta.push_str(&format!("y0={}\n", fmt_f64(g.y.start)));
            meta.push_str(&format!("t0={}\n", fmt_f64(g.t.start)));
            meta.push_str(&format!("periodic={},{}\n", g.periodic[0], g.periodic[1]));
            meta.push_str("fields=w,u,v\n");
            for a in [&f.omega, &f.u, &f.v] {
                push(a.as_standard_layout().as_slice().expect("standard layout"));
            }
        }
    }
    write_atomic(&payload_path, &payload)?;
    write_atomic(&meta_path, meta.as_bytes())?;
    Ok(())
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", no + 1))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key `{k}`", no + 1));
        }
    }
    Ok(out)
}

pub fn load_dataset(base: &Path) -> Result<Dataset> {
    let (meta_path, payload_path) = dataset_paths(base);
    let bad = |reason: String| Error::Dataset {
        path: meta_path.clone(),
        reason,
    };
    let text = fs::read_to_string(&meta_path)?;
    let kv = parse_key_values(&text).map_err(bad)?;
    let get = |k: &str| kv.get(k).ok_or_else(|| bad(format!("missing key `{k}`")));
    let float = |k: &str| -> Result<f64> {
        let s = get(k)?;
        s.parse::<f64>()
            .map_err(|_| bad(format!("key `{k}`: not a number: {s}")))
    };
    let dims: Vec<usize> = get("dims")?
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| bad("dims must be comma-separated integers".into()))?;
    let parse_bool = |s: &str| -> Result<bool> {
        match s.trim() {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            other => Err(bad(format!("bad boolean `{other}`"))),
        }
    };
    let periodic: Vec<bool> = get("periodic")?
        .split(',')
        .map(parse_bool)
        .collect::<Result<_>>()?;
    let kind = get("kind")?.clone();

    let bytes = fs::read(&payload_path)?;
    if bytes.len() % 8 != 0 {
        return Err(bad(format!(
            "payload length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "payload {}",
            payload_path.display()
        )));
    }

    match kind.as_str() {
        "field1d" => {
            let [n, m] = dims[..] else {
                return Err(bad(format!("field1d needs 2 dims, got {}", dims.len())));
            };
            if values.len() != n * m {
                return Err(bad(format!(
                    "payload has {} values, header declares {n}x{m}",
                    values.len()
                )));
            }
            let grid = Grid1D::new(
                UniformAxis::new(float("x0")?, float("dx")?, n)?,
                UniformAxis::new(float("t0")?, float("dt")?, m)?,
                periodic.first().copied().unwrap_or(false),
            );
            let u = Array2::from_shape_vec((n, m), values).map_err(|e| bad(e.to_string()))?;
            Ok(Dataset::One(Field1D::new(grid, u)?))
        }
        "field2d" => {
            let [nx, ny, m] = dims[..] else {
                return Err(bad(format!("field2d needs 3 dims, got {}", dims.len())));
            };
            let names: Vec<&str> = kv
                .get("fields")
                .map(|s| s.split(',').map(str::trim).collect())
                .unwrap_or(vec!["w", "u", "v"]);
            let per = nx * ny * m;
            if values.len() != per * names.len() {
                return Err(bad(format!(
                    "payload has {} values, header declares {} fields of {nx}x{ny}x{m}",
                    values.len(),
                    names.len()
                )));
            }
            let grid = Grid2D {
                x: UniformAxis::new(float("x0")?, float("dx")?, nx)?,
                y: UniformAxis::new(float("y0")?, float("dy")?, ny)?,
                t: UniformAxis::new(float("t0")?, float("dt")?, m)?,
                periodic: [
                    periodic.first().copied().unwrap_or(false),
                    periodic.get(1).copied().unwrap_or(false),
                ],
            };
            let mut arrays: BTreeMap<&str, Array3<f64>> = BTreeMap::new();
            for (i, name) in names.iter().enumerate() {
                let a =
                    Array3::from_shape_vec((nx, ny, m), values[i * per..(i + 1) * per].to_vec())
                        .map_err(|e| bad(e.to_string()))?;
                arrays.insert(name, a);
            }
            let mut take = |k: &str| {
                arrays
                    .remove(k)
                    .ok_or_else(|| bad(format!("fields list lacks `{k}`")))
            };
            let omega = take("w")?;
            let u = take("u")?;
            let v = take("v")?;
            Ok(Dataset::Two(Field2D::new(grid, omega, u, v)?))
        }
        other => Err(bad(format!("unknown kind `{other}`"))),
    }
}

/// Axis-aligned box in domain coordinates, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    /// The box covering every grid point.
    pub fn whole(grid: &Grid2D) -> Self {
        Self {
            x_min: grid.x.start,
            x_max: grid.x.last(),
            y_min: grid.y.start,
            y_max: grid.y.last(),
        }
    }
}

/// Spatial points shared by every retained timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSet {
    pub points: Vec<(usize, usize)>,
    pub times: Vec<usize>,
}

/// Draws `count` distinct grid points uniformly from `region` and keeps every
/// `every_kth_time`-th snapshot starting at index 0.
pub fn subsample_points(
    field: &Field2D,
    count: usize,
    every_kth_time: usize,
    region: &Region,
    seed: u64,
) -> Result<SampledSet> {
    let g = &field.grid;
    if count == 0 || every_kth_time == 0 {
        return Err(Error::Parameter(
            "count and every_kth_time must be positive".into(),
        ));
    }
    if every_kth_time > g.t.len {
        return Err(Error::Parameter(format!(
            "every_kth_time {every_kth_time} exceeds {} snapshots",
            g.t.len
        )));
    }
    let tol_x = 1e-9 * g.x.step;
    let tol_y = 1e-9 * g.y.step;
    if region.x_min > region.x_max
        || region.y_min > region.y_max
        || region.x_min < g.x.start - tol_x
        || region.x_max > g.x.last() + tol_x
        || region.y_min < g.y.start - tol_y
        || region.y_max > g.y.last() + tol_y
    {
        return Err(Error::Parameter(format!(
            "region {region:?} lies outside the grid"
        )));
    }
    let xs: Vec<usize> = (0..g.x.len)
        .filter(|&i| {
            let c = g.x.coord(i);
            c >= region.x_min - tol_x && c <= region.x_max + tol_x
        })
        .collect();
    let ys: Vec<usize> = (0..g.y.len)
        .filter(|&i| {
            let c = g.y.coord(i);
            c >= region.y_min - tol_y && c <= region.y_max + tol_y
        })
        .collect();
    let total = xs.len() * ys.len();
    if count > total {
        return Err(Error::Parameter(format!(
            "count {count} exceeds {total} points in region"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut picks = index::sample(&mut rng, total, count).into_vec();
    picks.sort_unstable();
    let points = picks
        .into_iter()
        .map(|p| (xs[p / ys.len()], ys[p % ys.len()]))
        .collect();
    let times = (0..g.t.len).step_by(every_kth_time).collect();
    Ok(SampledSet { points, times })
}
