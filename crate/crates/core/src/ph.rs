//! Persistent homology over F₂ by boundary-matrix reduction.
//!
//! Simplices are ordered by `(value, dim, id)`, which puts faces before their
//! cofaces at equal values and makes the order total. Columns are reduced
//! left to right, highest dimension first, and a column whose pivot row is
//! already known to be a death is cleared without reduction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::complex::{Filtration1D, SimplicialComplex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePoint {
    pub birth: f64,
    /// `f64::INFINITY` for essential classes.
    pub death: f64,
    pub dim: usize,
}

impl PersistencePoint {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }

    pub fn is_essential(&self) -> bool {
        self.death.is_infinite()
    }

    /// Alive on the half-open interval `[birth, death)`.
    pub fn alive_at(&self, t: f64) -> bool {
        self.birth <= t && t < self.death
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    points: Vec<PersistencePoint>,
}

impl PersistenceDiagram {
    pub fn new(points: Vec<PersistencePoint>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> &[PersistencePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn of_dim(&self, dim: usize) -> impl Iterator<Item = &PersistencePoint> + '_ {
        self.points.iter().filter(move |p| p.dim == dim)
    }

    pub fn restrict(&self, dim: usize) -> PersistenceDiagram {
        PersistenceDiagram::new(self.of_dim(dim).copied().collect())
    }

    /// Number of `dim`-points alive at `t`.
    pub fn betti_at(&self, dim: usize, t: f64) -> usize {
        self.of_dim(dim).filter(|p| p.alive_at(t)).count()
    }

    /// Number of `dim`-classes born by `s` that survive to `t` (`s ≤ t`).
    pub fn rank_between(&self, dim: usize, s: f64, t: f64) -> usize {
        self.of_dim(dim)
            .filter(|p| p.birth <= s && t < p.death)
            .count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dim,birth,death\n");
        for p in &self.points {
            let death = if p.death.is_infinite() {
                "inf".to_string()
            } else {
                p.death.to_string()
            };
            writeln!(out, "{},{},{}", p.dim, p.birth, death).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("dim")) {
                continue;
            }
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, got {}", fields.len())));
            }
            let dim = fields[0]
                .parse::<usize>()
                .map_err(|_| err(format!("bad dim {:?}", fields[0])))?;
            let birth = fields[1]
                .parse::<f64>()
                .map_err(|_| err(format!("bad birth {:?}", fields[1])))?;
            let death = match fields[2] {
                "inf" => f64::INFINITY,
                s => s
                    .parse::<f64>()
                    .map_err(|_| err(format!("bad death {s:?}")))?,
            };
            if !(death > birth) {
                return Err(err(format!("death {death} is not after birth {birth}")));
            }
            points.push(PersistencePoint { birth, death, dim });
        }
        Ok(Self { points })
    }
}

/// Raw simplex pairing, including zero-persistence pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pairing {
    /// `(creator, destroyer)` simplex ids.
    pub pairs: Vec<(usize, usize)>,
    /// Creators that are never destroyed.
    pub essential: Vec<usize>,
}

const NONE: u32 = u32::MAX;

/// Reusable buffers for repeated reductions over same-sized complexes.
#[derive(Debug, Default)]
pub struct Reducer {
    order: Vec<u32>,
    pos: Vec<u32>,
    columns: Vec<Vec<u32>>,
    pivot_owner: Vec<u32>,
    cleared: Vec<bool>,
    scratch: Vec<u32>,
    keys: Vec<u128>,
    parent: Vec<u32>,
    rep: Vec<u32>,
}

impl Reducer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pairs simplices of `complex` filtered by `values` (assumed monotone).
    ///
    /// Grid complexes are triangulated disks, so their pairing is found with
    /// two union-find sweeps: components forward over edges, and regions of
    /// the complement backward over the dual graph. Other complexes use
    /// matrix reduction.
    pub fn pairing(&mut self, complex: &SimplicialComplex, values: &[f64]) -> Pairing {
        self.sort_order(complex, values);
        match complex.edge_cofaces() {
            Some(cofaces) => self.pair_planar(complex, cofaces),
            None => self.reduce(complex),
        }
    }

    /// Matrix reduction regardless of the shape of the complex.
    pub fn pairing_by_reduction(&mut self, complex: &SimplicialComplex, values: &[f64]) -> Pairing {
        self.sort_order(complex, values);
        self.reduce(complex)
    }

    fn sort_order(&mut self, complex: &SimplicialComplex, values: &[f64]) {
        let n = complex.len();
        self.keys.clear();
        self.keys.extend((0..n).map(|id| {
            (u128::from(order_bits(values[id])) << 64)
                | ((complex.dim_of(id) as u128) << 32)
                | id as u128
        }));
        self.keys.sort_unstable();
        self.order.clear();
        self.order.extend(self.keys.iter().map(|&k| k as u32));
        self.pos.clear();
        self.pos.resize(n, 0);
        for (p, &id) in self.order.iter().enumerate() {
            self.pos[id as usize] = p as u32;
        }
    }

    fn reduce(&mut self, complex: &SimplicialComplex) -> Pairing {
        let n = complex.len();
        if self.columns.len() < n {
            self.columns.resize_with(n, Vec::new);
        }
        for col in &mut self.columns[..n] {
            col.clear();
        }
        self.pivot_owner.clear();
        self.pivot_owner.resize(n, NONE);
        self.cleared.clear();
        self.cleared.resize(n, false);

        for dim in (1..=2).rev() {
            for j in 0..n {
                let id = self.order[j] as usize;
                if complex.dim_of(id) != dim || self.cleared[j] {
                    continue;
                }
                let mut col = std::mem::take(&mut self.columns[j]);
                col.extend(complex.boundary(id).iter().map(|&f| self.pos[f as usize]));
                col.sort_unstable();
                while let Some(&low) = col.last() {
                    let owner = self.pivot_owner[low as usize];
                    if owner == NONE {
                        break;
                    }
                    add_sorted(&mut col, &self.columns[owner as usize], &mut self.scratch);
                }
                if let Some(&low) = col.last() {
                    self.pivot_owner[low as usize] = j as u32;
                    self.cleared[low as usize] = true;
                }
                self.columns[j] = col;
            }
        }

        let mut pairing = Pairing::default();
        for j in 0..n {
            let id = self.order[j] as usize;
            if let Some(&low) = self.columns[j].last() {
                if complex.dim_of(id) > 0 {
                    pairing.pairs.push((self.order[low as usize] as usize, id));
                    continue;
                }
            }
            // vertices have zero columns; other positive simplices were either
            // cleared or reduced to zero
            if self.pivot_owner[j] == NONE && self.columns[j].is_empty() {
                pairing.essential.push(id);
            }
        }
        pairing
    }

    fn pair_planar(&mut self, complex: &SimplicialComplex, cofaces: &[[u32; 2]]) -> Pairing {
        let n = complex.len();
        let outer = n;
        let mut pairing = Pairing::default();

        // components: root -> earliest vertex position
        self.parent.clear();
        self.parent.extend(0..=n as u32);
        self.rep.clear();
        self.rep.extend_from_slice(&self.pos);
        self.rep.push(NONE);
        for j in 0..n {
            let e = self.order[j] as usize;
            if complex.dim_of(e) != 1 {
                continue;
            }
            let b = complex.boundary(e);
            let (ra, rb) = (find(&mut self.parent, b[0]), find(&mut self.parent, b[1]));
            if ra == rb {
                continue;
            }
            let (old, young) = if self.rep[ra as usize] < self.rep[rb as usize] {
                (ra, rb)
            } else {
                (rb, ra)
            };
            pairing
                .pairs
                .push((self.order[self.rep[young as usize] as usize] as usize, e));
            self.parent[young as usize] = old;
        }
        for v in 0..n {
            if complex.dim_of(v) == 0 && find(&mut self.parent, v as u32) == v as u32 {
                pairing
                    .essential
                    .push(self.order[self.rep[v] as usize] as usize);
            }
        }

        // complement regions, backward: root -> latest triangle position
        self.parent.clear();
        self.parent.extend(0..=n as u32);
        self.rep.truncate(n);
        self.rep.push(NONE);
        for j in (0..n).rev() {
            let e = self.order[j] as usize;
            if complex.dim_of(e) != 1 {
                continue;
            }
            let side = |t: u32| if t == NONE { outer as u32 } else { t };
            let [t0, t1] = cofaces[e];
            let (ra, rb) = (
                find(&mut self.parent, side(t0)),
                find(&mut self.parent, side(t1)),
            );
            if ra == rb {
                continue;
            }
            let (old, young) = if self.rep[ra as usize] > self.rep[rb as usize] {
                (ra, rb)
            } else {
                (rb, ra)
            };
            pairing
                .pairs
                .push((e, self.order[self.rep[young as usize] as usize] as usize));
            self.parent[young as usize] = old;
        }
        pairing
    }

    pub fn diagram(&mut self, complex: &SimplicialComplex, values: &[f64]) -> PersistenceDiagram {
        let pairing = self.pairing(complex, values);
        diagram_from_pairing(complex, values, &pairing)
    }
}

/// Monotone map from `f64` under `total_cmp` to `u64`.
fn order_bits(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | (1 << 63)
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let up = parent[parent[x as usize] as usize];
        parent[x as usize] = up;
        x = up;
    }
    x
}

/// `col ← col + other` over F₂ for sorted index lists.
fn add_sorted(col: &mut Vec<u32>, other: &[u32], scratch: &mut Vec<u32>) {
    scratch.clear();
    let (mut i, mut j) = (0, 0);
    while i < col.len() && j < other.len() {
        match col[i].cmp(&other[j]) {
            std::cmp::Ordering::Less => {
                scratch.push(col[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                scratch.push(other[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    scratch.extend_from_slice(&col[i..]);
    scratch.extend_from_slice(&other[j..]);
    std::mem::swap(col, scratch);
}

fn diagram_from_pairing(
    complex: &SimplicialComplex,
    values: &[f64],
    pairing: &Pairing,
) -> PersistenceDiagram {
    let mut points = Vec::with_capacity(pairing.pairs.len() + pairing.essential.len());
    for &(b, d) in &pairing.pairs {
        let (birth, death) = (values[b], values[d]);
        if death > birth {
            points.push(PersistencePoint {
                birth,
                death,
                dim: complex.dim_of(b),
            });
        }
    }
    for &b in &pairing.essential {
        points.push(PersistencePoint {
            birth: values[b],
            death: f64::INFINITY,
            dim: complex.dim_of(b),
        });
    }
    PersistenceDiagram::new(points)
}

/// Raw pairing of a filtration, zero-persistence pairs included.
pub fn compute_pairing(f: &Filtration1D) -> Pairing {
    Reducer::new().pairing(f.complex(), f.values())
}

pub fn compute_persistence(f: &Filtration1D) -> PersistenceDiagram {
    Reducer::new().diagram(f.complex(), f.values())
}

/// Reduction for values not yet known to be monotone.
pub fn compute_persistence_checked(
    complex: std::sync::Arc<SimplicialComplex>,
    values: Vec<f64>,
) -> Result<PersistenceDiagram> {
    let f = Filtration1D::new(complex, values)?;
    Ok(compute_persistence(&f))
}

/// Rank of a set of F₂ vectors given as bitsets.
pub(crate) fn f2_rank(mut vectors: Vec<Vec<u64>>) -> usize {
    let mut rank = 0;
    let words = vectors.first().map_or(0, Vec::len);
    let mut row = 0;
    for bit in 0..words * 64 {
        let (w, mask) = (bit / 64, 1u64 << (bit % 64));
        let Some(p) = (row..vectors.len()).find(|&i| vectors[i][w] & mask != 0) else {
            continue;
        };
        vectors.swap(row, p);
        let pivot = vectors[row].clone();
        for v in vectors.iter_mut().skip(row + 1) {
            if v[w] & mask != 0 {
                for (x, y) in v.iter_mut().zip(&pivot) {
                    *x ^= y;
                }
            }
        }
        row += 1;
        rank += 1;
        if row == vectors.len() {
            break;
        }
    }
    rank
}

/// `(b₀, b₁)` of the sublevel complex at `t`, by Gaussian elimination of the
/// sublevel boundary matrices.
pub fn betti_numbers(f: &Filtration1D, t: f64) -> (usize, usize) {
    let complex = f.complex();
    let sub = f.sublevel(t);
    let mut index = vec![usize::MAX; complex.len()];
    let mut by_dim: [Vec<usize>; 3] = Default::default();
    for &id in &sub {
        let d = complex.dim_of(id);
        index[id] = by_dim[d].len();
        by_dim[d].push(id);
    }
    let boundary_rank = |dim: usize| {
        let rows = by_dim[dim - 1].len();
        let words = rows.div_ceil(64).max(1);
        let vectors = by_dim[dim]
            .iter()
            .map(|&id| {
                let mut v = vec![0u64; words];
                for &face in complex.boundary(id) {
                    let r = index[face as usize];
                    v[r / 64] ^= 1 << (r % 64);
                }
                v
            })
            .collect();
        f2_rank(vectors)
    };
    let r1 = boundary_rank(1);
    let r2 = boundary_rank(2);
    (by_dim[0].len() - r1, by_dim[1].len() - r1 - r2)
}

/// Maps a diagram of the negated image back to the original scale.
///
/// A point `(b, d)` becomes `(−d, −b)`. Essential points `(b, ∞)` become
/// `(floor, −b)`, i.e. the class is treated as dying at the bottom of the
/// intensity scale; points left with no persistence are dropped.
pub fn swap_for_upper_star(d: &PersistenceDiagram, floor: f64) -> PersistenceDiagram {
    PersistenceDiagram::new(
        d.points()
            .iter()
            .filter_map(|p| {
                let birth = if p.death.is_infinite() {
                    floor
                } else {
                    -p.death
                };
                let death = -p.birth;
                (death > birth).then_some(PersistencePoint {
                    birth,
                    death,
                    dim: p.dim,
                })
            })
            .collect(),
    )
}
