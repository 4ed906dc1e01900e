//! Rank invariants, Hilbert functions and multiparameter persistence
//! landscapes of bifiltrations.
//!
//! Landscapes are computed by diagonal slicing. Restricting the module to the
//! line `x + t·(1, 1)` gives a one-parameter filtration whose bar `[b, d)`
//! keeps a class alive across the diagonal ε-ball around `x` exactly when
//! `b ≤ −ε` and `d > ε`. So `λ(k, x)` is the k-th largest `max(0, min(−b, d))`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{grade_le, Bifiltration, Filtration1D, Grade};
use crate::error::{Error, Result};
use crate::img::{write_pgm, GrayImage};
use crate::ph::Reducer;

/// Cell-centred evaluation grid: points `lo + (i + ½)·step` inside `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub step: f64,
}

impl Default for GridSpec {
    /// `[0, 260]²` at step 10: 26 × 26 cells centred on 5, 15, …, 255.
    fn default() -> Self {
        Self {
            lo: [0.0, 0.0],
            hi: [260.0, 260.0],
            step: 10.0,
        }
    }
}

impl GridSpec {
    pub fn new(lo: [f64; 2], hi: [f64; 2], step: f64) -> Result<Self> {
        let g = Self { lo, hi, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::Invalid(format!(
                "grid step must be positive, got {}",
                self.step
            )));
        }
        for axis in 0..2 {
            if !(self.lo[axis] < self.hi[axis]) {
                return Err(Error::Invalid(format!(
                    "grid needs lo < hi on axis {axis}, got [{}, {}]",
                    self.lo[axis], self.hi[axis]
                )));
            }
            let cells = (self.hi[axis] - self.lo[axis]) / self.step;
            if (cells - cells.round()).abs() > 1e-9 {
                return Err(Error::Invalid(format!(
                    "grid extent on axis {axis} is not a whole number of steps ({cells})"
                )));
            }
        }
        Ok(())
    }

    /// `(nx, ny)` cell counts.
    pub fn cells(&self) -> (usize, usize) {
        let n = |axis: usize| ((self.hi[axis] - self.lo[axis]) / self.step).round() as usize;
        (n(0), n(1))
    }

    pub fn len(&self) -> usize {
        let (nx, ny) = self.cells();
        nx * ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, ix: usize, iy: usize) -> Grade {
        [
            self.lo[0] + (ix as f64 + 0.5) * self.step,
            self.lo[1] + (iy as f64 + 0.5) * self.step,
        ]
    }

    /// Grid points in storage order (`ix` major, `iy` minor).
    pub fn points(&self) -> Vec<Grade> {
        let (nx, ny) = self.cells();
        (0..nx)
            .flat_map(|ix| (0..ny).map(move |iy| (ix, iy)))
            .map(|(ix, iy)| self.point(ix, iy))
            .collect()
    }

    /// Storage index of cell `(ix, iy)`.
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        ix * self.cells().1 + iy
    }

    fn matches(&self, other: &GridSpec) -> bool {
        self == other
    }
}

/// Diagonal slice through `basepoint`: `t(σ) = max(g₁ − x₁, g₂ − x₂)`.
pub fn slice_filtration(b: &Bifiltration, basepoint: Grade) -> Filtration1D {
    let mut values = Vec::with_capacity(b.grades().len());
    slice_values(b, basepoint, &mut values);
    Filtration1D::new_unchecked(Arc::clone(b.complex()), values)
}

fn slice_values(b: &Bifiltration, x: Grade, out: &mut Vec<f64>) {
    out.clear();
    out.extend(b.grades().iter().map(|g| (g[0] - x[0]).max(g[1] - x[1])));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub k_max: usize,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub step: f64,
    /// `values[k − 1][ix * ny + iy]`.
    pub values: Vec<Vec<f64>>,
}

impl Landscape {
    pub fn zeros(k_max: usize, grid: GridSpec) -> Self {
        Self {
            k_max,
            lo: grid.lo,
            hi: grid.hi,
            step: grid.step,
            values: vec![vec![0.0; grid.len()]; k_max],
        }
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            lo: self.lo,
            hi: self.hi,
            step: self.step,
        }
    }

    /// `λ(k, cell)` with `k` starting at 1.
    pub fn value(&self, k: usize, ix: usize, iy: usize) -> f64 {
        self.values[k - 1][self.grid().index(ix, iy)]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().flatten().copied().fold(0.0, f64::max)
    }

    fn compatible(&self, other: &Landscape) -> Result<()> {
        if self.k_max != other.k_max || !self.grid().matches(&other.grid()) {
            return Err(Error::GridMismatch(format!(
                "k_max {} on {:?} vs k_max {} on {:?}",
                self.k_max,
                self.grid(),
                other.k_max,
                other.grid()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("landscape serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let l: Landscape = serde_json::from_str(text)?;
        l.grid().validate()?;
        if l.values.len() != l.k_max || l.values.iter().any(|v| v.len() != l.grid().len()) {
            return Err(Error::Format(
                "landscape values do not match k_max and grid".into(),
            ));
        }
        Ok(l)
    }

    /// Min-max scaled heatmap of `λ(k, ·)`; `x` runs left to right and `y`
    /// bottom to top.
    pub fn heatmap_pgm(&self, k: usize) -> Result<Vec<u8>> {
        if k == 0 || k > self.k_max {
            return Err(Error::Invalid(format!("k must be in 1..={}", self.k_max)));
        }
        let (nx, ny) = self.grid().cells();
        let mut pixels = Vec::with_capacity(nx * ny);
        for row in 0..ny {
            for ix in 0..nx {
                pixels.push(self.value(k, ix, ny - 1 - row));
            }
        }
        let image = GrayImage::new(nx, ny, pixels)?;
        let (lo, hi) = image.min_max();
        write_pgm(&image, lo, if hi > lo { hi } else { lo + 1.0 })
    }
}

fn landscape_entries(bars: &mut [f64], k_max: usize, out: &mut [f64]) {
    bars.sort_unstable_by(|a, b| b.total_cmp(a));
    for (k, slot) in out.iter_mut().enumerate().take(k_max) {
        *slot = bars.get(k).copied().unwrap_or(0.0);
    }
}

/// Landscapes for several homology dimensions.
///
/// Moving the basepoint by `s·(1, 1)` shifts every slice value by `−s`, so
/// one reduction serves a whole diagonal of the grid.
pub fn landscapes(
    b: &Bifiltration,
    dims: &[usize],
    k_max: usize,
    grid: &GridSpec,
) -> Result<Vec<Landscape>> {
    grid.validate()?;
    if k_max == 0 {
        return Err(Error::Invalid("k_max must be at least 1".into()));
    }
    let complex = b.complex();
    let (nx, ny) = grid.cells();
    // diagonal `d` holds the cells with iy − ix = d − (nx − 1)
    let diagonals: Vec<Vec<(usize, usize)>> = (0..nx + ny - 1)
        .map(|d| {
            (0..nx)
                .filter_map(|ix| {
                    let iy = (d + ix).checked_sub(nx - 1)?;
                    (iy < ny).then_some((ix, iy))
                })
                .collect()
        })
        .collect();
    let blocks: Vec<Vec<(usize, Vec<f64>)>> = diagonals
        .par_iter()
        .map_init(
            || (Reducer::new(), Vec::new(), Vec::new()),
            |(reducer, values, bars), cells| {
                let (ix0, iy0) = cells[0];
                slice_values(b, grid.point(ix0, iy0), values);
                let diagram = reducer.diagram(complex, values);
                cells
                    .iter()
                    .map(|&(ix, iy)| {
                        let shift = (ix - ix0) as f64 * grid.step;
                        let mut out = vec![0.0; dims.len() * k_max];
                        for (slot, &dim) in dims.iter().enumerate() {
                            bars.clear();
                            bars.extend(
                                diagram
                                    .of_dim(dim)
                                    .map(|p| (shift - p.birth).min(p.death - shift))
                                    .filter(|&v| v > 0.0),
                            );
                            landscape_entries(
                                bars,
                                k_max,
                                &mut out[slot * k_max..(slot + 1) * k_max],
                            );
                        }
                        (grid.index(ix, iy), out)
                    })
                    .collect()
            },
        )
        .collect();
    let mut result = vec![Landscape::zeros(k_max, *grid); dims.len()];
    for (index, entry) in blocks.into_iter().flatten() {
        for (slot, l) in result.iter_mut().enumerate() {
            for k in 0..k_max {
                l.values[k][index] = entry[slot * k_max + k];
            }
        }
    }
    Ok(result)
}

pub fn landscape(b: &Bifiltration, dim: usize, k_max: usize, grid: &GridSpec) -> Result<Landscape> {
    Ok(landscapes(b, &[dim], k_max, grid)?.remove(0))
}

/// `rank H_dim(sublevel a) → H_dim(sublevel b)` for `a ≤ b`.
pub fn rank_invariant(b: &Bifiltration, dim: usize, lo: Grade, hi: Grade) -> Result<usize> {
    if !grade_le(lo, hi) {
        return Err(Error::Invalid(format!(
            "rank invariant needs a ≤ b, got {lo:?} and {hi:?}"
        )));
    }
    let values: Vec<f64> = b
        .grades()
        .iter()
        .map(|&g| {
            if grade_le(g, lo) {
                0.0
            } else if grade_le(g, hi) {
                1.0
            } else {
                2.0
            }
        })
        .collect();
    let diagram = Reducer::new().diagram(b.complex(), &values);
    Ok(diagram
        .of_dim(dim)
        .filter(|p| p.birth <= 0.0 && p.death > 1.0)
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HilbertFunction {
    pub grid: GridSpec,
    pub dim: usize,
    /// `values[ix * ny + iy]`.
    pub values: Vec<usize>,
}

impl HilbertFunction {
    pub fn at(&self, ix: usize, iy: usize) -> usize {
        self.values[self.grid.index(ix, iy)]
    }

    /// `x,y,value` per grid point.
    pub fn to_csv(&self) -> String {
        let (nx, ny) = self.grid.cells();
        let mut out = String::from("x,y,value\n");
        for ix in 0..nx {
            for iy in 0..ny {
                let p = self.grid.point(ix, iy);
                out.push_str(&format!("{},{},{}\n", p[0], p[1], self.at(ix, iy)));
            }
        }
        out
    }
}

/// Grade-wise Betti number `β^{x,x}` at every grid point.
pub fn hilbert_function(b: &Bifiltration, dim: usize, grid: &GridSpec) -> Result<HilbertFunction> {
    grid.validate()?;
    let values = grid
        .points()
        .par_iter()
        .map(|&x| rank_invariant(b, dim, x, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(HilbertFunction {
        grid: *grid,
        dim,
        values,
    })
}

/// `‖λ₁ − λ₂‖_p` over `(k, grid)`; cells are weighted by `step²` for finite
/// `p`, and `p = ∞` takes the largest absolute difference.
pub fn landscape_distance(a: &Landscape, b: &Landscape, p: f64) -> Result<f64> {
    a.compatible(b)?;
    if !(p >= 1.0) {
        return Err(Error::Invalid(format!("p must be at least 1, got {p}")));
    }
    let diffs = a
        .values
        .iter()
        .flatten()
        .zip(b.values.iter().flatten())
        .map(|(x, y)| (x - y).abs());
    if p.is_infinite() {
        return Ok(diffs.fold(0.0, f64::max));
    }
    let cell = a.step * a.step;
    Ok((diffs.map(|d| d.powf(p) * cell).sum::<f64>()).powf(1.0 / p))
}

pub fn average_landscape(list: &[Landscape]) -> Result<Landscape> {
    let first = list
        .first()
        .ok_or_else(|| Error::Invalid("cannot average an empty list".into()))?;
    let mut avg = Landscape::zeros(first.k_max, first.grid());
    for l in list {
        first.compatible(l)?;
        for (acc, v) in avg
            .values
            .iter_mut()
            .flatten()
            .zip(l.values.iter().flatten())
        {
            *acc += v;
        }
    }
    let n = list.len() as f64;
    avg.values.iter_mut().flatten().for_each(|v| *v /= n);
    Ok(avg)
}
