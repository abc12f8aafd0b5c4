//! Driving noises: families of Brownian paths, the Brownian sheet and the
//! trigonometric spatially homogeneous field.
//!
//! Paths are built hierarchically. A grid with `N = q·2^m` steps (`q` odd)
//! starts from `q` independent coarse increments and fills in `m` levels of
//! Brownian-bridge midpoints. Every variate is keyed by
//! `(seed, path, level, index)`, so
//! - enlarging `K` leaves existing paths untouched,
//! - doubling `N` leaves the values at shared grid points bit-identical,
//! - generation order and thread count never change the output.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{FlowError, Result};
use crate::rng::standard_normal;

/// Uniform grid `s = t_0 < t_1 < … < t_N = t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    start: f64,
    end: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, steps: usize) -> Result<Self> {
        if !(start >= 0.0) || !start.is_finite() {
            return Err(FlowError::Domain(format!("grid start must be >= 0, got {start}")));
        }
        if !(end > start) || !end.is_finite() {
            return Err(FlowError::Domain(format!(
                "grid end must exceed start {start}, got {end}"
            )));
        }
        if steps == 0 {
            return Err(FlowError::Domain("grid needs at least one step".into()));
        }
        Ok(Self { start, end, steps })
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> f64 {
        self.end - self.start
    }

    pub fn dt(&self) -> f64 {
        (self.end - self.start) / self.steps as f64
    }

    /// `t_i`; the last point is exactly `t_end`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.end
        } else {
            self.start + i as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.time(i)).collect()
    }

    /// Same interval, twice as many steps.
    pub fn refined(&self) -> Self {
        Self {
            steps: self.steps * 2,
            ..*self
        }
    }

    /// The grid `t_j < … < t_N`.
    pub fn tail_from(&self, j: usize) -> Result<Self> {
        if j >= self.steps {
            return Err(FlowError::Domain(format!(
                "restart index {j} must be below the number of steps {}",
                self.steps
            )));
        }
        Ok(Self {
            start: self.time(j),
            end: self.end,
            steps: self.steps - j,
        })
    }
}

/// `K` independent Brownian paths on a shared grid.
///
/// Path `k` (zero-based) drives noise operator `B_{k+1}`; the deterministic
/// `W_0(t) = t` is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPaths {
    grid: TimeGrid,
    values: Vec<Vec<f64>>,
    seed: u64,
    /// Grid offset when this is the tail of a longer sample.
    origin: usize,
}

/// Splits `n` into `(q, m)` with `n = q·2^m`, `q` odd.
fn odd_dyadic_split(n: usize) -> (usize, u32) {
    let m = n.trailing_zeros();
    (n >> m, m)
}

const BASE_LEVEL_TAG: u64 = 1 << 32;

fn hierarchical_path(grid: &TimeGrid, seed: u64, path: usize) -> Vec<f64> {
    let n = grid.steps();
    let (q, m) = odd_dyadic_split(n);
    let stride = 1usize << m;
    let mut w = vec![0.0; n + 1];
    let coarse_dt = grid.horizon() / q as f64;
    let coarse_sd = coarse_dt.sqrt();
    for j in 0..q {
        let z = standard_normal(seed, path as u64, BASE_LEVEL_TAG | q as u64, j as u64);
        w[(j + 1) * stride] = w[j * stride] + coarse_sd * z;
    }
    let mut width = coarse_dt;
    let mut half = stride;
    for level in 1..=m {
        half /= 2;
        let sd = (width / 4.0).sqrt();
        let intervals = q << (level - 1);
        for j in 0..intervals {
            let a = 2 * j * half;
            let b = a + 2 * half;
            let z = standard_normal(seed, path as u64, level as u64, j as u64);
            w[a + half] = 0.5 * (w[a] + w[b]) + sd * z;
        }
        width /= 2.0;
    }
    w
}

/// `K` Brownian paths on `grid`, a pure function of `(grid, K, seed)`.
pub fn sample_wiener(grid: TimeGrid, count: usize, seed: u64) -> Result<WienerPaths> {
    if count == 0 {
        return Err(FlowError::Domain("need at least one Wiener path".into()));
    }
    let values = (0..count)
        .into_par_iter()
        .map(|k| hierarchical_path(&grid, seed, k))
        .collect();
    Ok(WienerPaths {
        grid,
        values,
        seed,
        origin: 0,
    })
}

/// `W_k(t) − W_k(s)` for path `k` over a horizon `t − s`, without building
/// the grid; equal to the terminal value of the one-step sample from
/// [`sample_wiener`] with the same seed.
pub fn brownian_increment(seed: u64, path: usize, horizon: f64) -> f64 {
    horizon.sqrt() * standard_normal(seed, path as u64, BASE_LEVEL_TAG | 1, 0)
}

impl WienerPaths {
    /// Wraps externally produced paths; each row must start at 0 and have
    /// `N + 1` values.
    pub fn from_values(grid: TimeGrid, values: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(FlowError::Domain("need at least one Wiener path".into()));
        }
        for row in &values {
            if row.len() != grid.steps() + 1 {
                return Err(FlowError::DimensionMismatch {
                    expected: grid.steps() + 1,
                    actual: row.len(),
                });
            }
            if row[0] != 0.0 || row.iter().any(|x| !x.is_finite()) {
                return Err(FlowError::Domain(
                    "paths must start at 0 and be finite".into(),
                ));
            }
        }
        Ok(Self {
            grid,
            values,
            seed,
            origin: 0,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn count(&self) -> usize {
        self.values.len()
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    /// Values of path `k` (zero-based), `W_k(t_i) − W_k(s)`.
    pub fn path(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// `W_k(t_{i+1}) − W_k(t_i)`.
    #[inline]
    pub fn increment(&self, k: usize, i: usize) -> f64 {
        self.values[k][i + 1] - self.values[k][i]
    }

    /// `W_k(t_j) − W_k(t_i)` for every path.
    pub fn increments_between(&self, i: usize, j: usize) -> Vec<f64> {
        self.values.iter().map(|p| p[j] - p[i]).collect()
    }

    /// The same noise restarted at `t_j`: values rebased to zero there.
    pub fn tail_from(&self, j: usize) -> Result<Self> {
        let grid = self.grid.tail_from(j)?;
        let values = self
            .values
            .iter()
            .map(|p| p[j..].iter().map(|x| x - p[j]).collect())
            .collect();
        Ok(Self {
            grid,
            values,
            seed: self.seed,
            origin: self.origin + j,
        })
    }

    /// The first `count` paths.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.count() {
            return Err(FlowError::PathShortfall {
                needed: count,
                available: self.count(),
            });
        }
        Ok(Self {
            values: self.values[..count].to_vec(),
            ..self.clone()
        })
    }

    /// Binary dump: little-endian `seed: u64, N: u64, K: u64, Δt: f64`, then
    /// the `K × (N+1)` values row-major as `f64`.
    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&(self.grid.steps() as u64).to_le_bytes())?;
        out.write_all(&(self.count() as u64).to_le_bytes())?;
        out.write_all(&self.grid.dt().to_le_bytes())?;
        for row in &self.values {
            for v in row {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump written by [`WienerPaths::write_binary`]; the grid is
    /// rebuilt as `[start, start + N·Δt]`.
    pub fn read_binary<R: Read>(mut input: R, start: f64) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |input: &mut R| -> Result<[u8; 8]> {
            input.read_exact(&mut word)?;
            Ok(word)
        };
        let seed = u64::from_le_bytes(next(&mut input)?);
        let steps = u64::from_le_bytes(next(&mut input)?) as usize;
        let count = u64::from_le_bytes(next(&mut input)?) as usize;
        let dt = f64::from_le_bytes(next(&mut input)?);
        let grid = TimeGrid::new(start, start + dt * steps as f64, steps)?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let mut row = Vec::with_capacity(steps + 1);
            for _ in 0..=steps {
                row.push(f64::from_le_bytes(next(&mut input)?));
            }
            values.push(row);
        }
        Self::from_values(grid, values, seed)
    }
}

/// Regular spatial grid on `[0, L)^d` with `n` nodes per axis at `j·L/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialGrid {
    pub side: f64,
    pub dims: usize,
    pub nodes_per_axis: usize,
}

impl SpatialGrid {
    pub fn new(side: f64, dims: usize, nodes_per_axis: usize) -> Result<Self> {
        if !side.is_finite() {
            return Err(FlowError::Domain(
                "Brownian sheet needs a bounded domain (L < ∞)".into(),
            ));
        }
        if !(side > 0.0) || dims == 0 || nodes_per_axis == 0 {
            return Err(FlowError::Domain(format!(
                "invalid spatial grid: L = {side}, d = {dims}, n = {nodes_per_axis}"
            )));
        }
        Ok(Self {
            side,
            dims,
            nodes_per_axis,
        })
    }

    pub fn spacing(&self) -> f64 {
        self.side / self.nodes_per_axis as f64
    }

    pub fn node_count(&self) -> usize {
        self.nodes_per_axis.pow(self.dims as u32)
    }

    /// Multi-index of a flattened node (first axis slowest).
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims];
        for slot in idx.iter_mut().rev() {
            *slot = flat % self.nodes_per_axis;
            flat /= self.nodes_per_axis;
        }
        idx
    }

    pub fn coordinates(&self, flat: usize) -> Vec<f64> {
        self.unflatten(flat)
            .into_iter()
            .map(|j| j as f64 * self.spacing())
            .collect()
    }
}

/// A Brownian sheet sampled on the product of a time grid and a spatial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SheetSample {
    pub time: TimeGrid,
    pub space: SpatialGrid,
    /// `values[i][node]` is `W(t_i, ξ_node)`.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SheetSample {
    pub fn at(&self, time_index: usize, node: &[usize]) -> f64 {
        let mut flat = 0;
        for &j in node {
            flat = flat * self.space.nodes_per_axis + j;
        }
        self.values[time_index][flat]
    }
}

const SHEET_LEVEL: u64 = 0x5EE7;

/// Brownian sheet with covariance `(t∧s)·Π ξ_i∧η_i` on the grid nodes.
///
/// Built from independent `N(0, |cell|)` increments over grid cells and
/// summed; node values are exact in distribution.
pub fn sample_brownian_sheet(time: TimeGrid, space: SpatialGrid, seed: u64) -> Result<SheetSample> {
    SpatialGrid::new(space.side, space.dims, space.nodes_per_axis)?;
    let nodes = space.node_count();
    let n = space.nodes_per_axis;
    let cell_sd = (time.dt() * space.spacing().powi(space.dims as i32)).sqrt();
    let mut values = vec![vec![0.0; nodes]; time.steps() + 1];
    for i in 1..=time.steps() {
        let (prev, cur) = values.split_at_mut(i);
        let prev = &prev[i - 1];
        let cur = &mut cur[0];
        // cumulative sum in time of per-cell spatial sheets
        let mut cell = vec![0.0; nodes];
        for (flat, c) in cell.iter_mut().enumerate() {
            let idx = space.unflatten(flat);
            if idx.iter().all(|&j| j > 0) {
                *c = cell_sd * standard_normal(seed, flat as u64, SHEET_LEVEL, i as u64);
            }
        }
        // integrate the cell increments along every spatial axis
        let mut stride = 1;
        for _ in 0..space.dims {
            for flat in 0..nodes {
                if (flat / stride) % n > 0 {
                    cell[flat] += cell[flat - stride];
                }
            }
            stride *= n;
        }
        for flat in 0..nodes {
            cur[flat] = prev[flat] + cell[flat];
        }
    }
    Ok(SheetSample {
        time,
        space,
        values,
        seed,
    })
}

/// Truncated trigonometric homogeneous field sampled at given points.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousField {
    pub time: TimeGrid,
    pub points: Vec<Vec<f64>>,
    /// `values[i][p]` is `W(t_i, ξ_p)`.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
}

/// `W(t, ξ) = Σ_k a_k (W_k(t) cos⟨ξ, η_k⟩ + W̃_k(t) sin⟨ξ, η_k⟩)`.
///
/// `W_k` and `W̃_k` are paths `2k` and `2k+1` of [`sample_wiener`] with the same
/// seed, so the field at a fixed point is a Brownian motion with variance
/// rate `Σ a_k²`.
pub fn sample_homogeneous_field(
    coefficients: &[f64],
    frequencies: &[Vec<f64>],
    time: TimeGrid,
    points: &[Vec<f64>],
    seed: u64,
) -> Result<HomogeneousField> {
    if coefficients.len() != frequencies.len() {
        return Err(FlowError::DimensionMismatch {
            expected: coefficients.len(),
            actual: frequencies.len(),
        });
    }
    if coefficients.is_empty() {
        return Err(FlowError::Domain("field needs at least one mode".into()));
    }
    let d = frequencies[0].len();
    if let Some(bad) = frequencies.iter().chain(points.iter()).find(|v| v.len() != d) {
        return Err(FlowError::DimensionMismatch {
            expected: d,
            actual: bad.len(),
        });
    }
    let paths = sample_wiener(time, 2 * coefficients.len(), seed)?;
    let phases: Vec<Vec<(f64, f64)>> = points
        .iter()
        .map(|xi| {
            frequencies
                .iter()
                .map(|eta| {
                    let dot: f64 = xi.iter().zip(eta).map(|(a, b)| a * b).sum();
                    (dot.cos(), dot.sin())
                })
                .collect()
        })
        .collect();
    let values = (0..=time.steps())
        .map(|i| {
            phases
                .iter()
                .map(|ph| {
                    coefficients
                        .iter()
                        .zip(ph)
                        .enumerate()
                        .map(|(k, (a, (c, s)))| {
                            a * (paths.path(2 * k)[i] * c + paths.path(2 * k + 1)[i] * s)
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    Ok(HomogeneousField {
        time,
        points: points.to_vec(),
        values,
        seed,
    })
}

/// `max_k transform(k, value_k)` with `k` one-based; `-∞` for no values.
pub fn sup_statistic<F>(values: &[f64], transform: F) -> f64
where
    F: Fn(usize, f64) -> f64,
{
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| transform(i + 1, v))
        .fold(f64::NEG_INFINITY, f64::max)
}
