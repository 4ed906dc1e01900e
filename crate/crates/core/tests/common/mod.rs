//! Brute-force oracles over F₂ and small random complexes.
//!
//! Chains are bit masks over simplex ids, so every complex here has at most
//! 64 simplices.

#![allow(dead_code)]

use std::sync::Arc;

use mgeneo::complex::{Bifiltration, Filtration1D, Grade, Simplex, SimplicialComplex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MAX_SIMPLICES: usize = 64;

/// Rank of a set of F₂ vectors.
pub fn rank(vectors: &[u64]) -> usize {
    let mut basis: Vec<u64> = Vec::new();
    for &v in vectors {
        let mut v = v;
        for &b in &basis {
            v = v.min(v ^ b);
        }
        if v != 0 {
            basis.push(v);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

fn boundary_mask(c: &SimplicialComplex, id: usize) -> u64 {
    c.boundary(id).iter().fold(0, |m, &f| m | 1 << f)
}

/// Basis of the `dim`-cycles supported on `present`.
pub fn cycles(c: &SimplicialComplex, present: u64, dim: usize) -> Vec<u64> {
    // (boundary, chain) pairs reduced by Gaussian elimination on the boundary
    let mut rows: Vec<(u64, u64)> = Vec::new();
    let mut kernel = Vec::new();
    for id in 0..c.len() {
        if present >> id & 1 == 0 || c.dim_of(id) != dim {
            continue;
        }
        let mut b = if dim == 0 { 0 } else { boundary_mask(c, id) };
        let mut chain = 1u64 << id;
        loop {
            if b == 0 {
                kernel.push(chain);
                break;
            }
            let pivot = 63 - b.leading_zeros();
            match rows.iter().find(|(rb, _)| 63 - rb.leading_zeros() == pivot) {
                Some(&(rb, rc)) => {
                    b ^= rb;
                    chain ^= rc;
                }
                None => {
                    rows.push((b, chain));
                    break;
                }
            }
        }
    }
    kernel
}

/// Boundaries of the `(dim+1)`-simplices in `present`.
pub fn boundaries(c: &SimplicialComplex, present: u64, dim: usize) -> Vec<u64> {
    (0..c.len())
        .filter(|&id| present >> id & 1 == 1 && c.dim_of(id) == dim + 1)
        .map(|id| boundary_mask(c, id))
        .collect()
}

/// `rank H_dim(K_a) → H_dim(K_b)` for subcomplexes `K_a ⊆ K_b`, as
/// `rank [Z_a | B_b] − rank B_b`.
pub fn map_rank(c: &SimplicialComplex, a: u64, b: u64, dim: usize) -> usize {
    assert_eq!(a & !b, 0, "K_a must lie inside K_b");
    let z = cycles(c, a, dim);
    let bd = boundaries(c, b, dim);
    let mut both = z.clone();
    both.extend_from_slice(&bd);
    rank(&both) - rank(&bd)
}

pub fn mask(c: &SimplicialComplex, keep: impl Fn(usize) -> bool) -> u64 {
    (0..c.len()).filter(|&i| keep(i)).fold(0, |m, i| m | 1 << i)
}

/// A random closed complex on at most `max_len` simplices: vertices, then
/// edges, then triangles whose edges are all present.
pub fn random_complex(rng: &mut ChaCha8Rng, max_len: usize) -> Arc<SimplicialComplex> {
    assert!(max_len <= MAX_SIMPLICES);
    let n = rng.gen_range(2..=8u32).min(max_len as u32);
    let mut simplices: Vec<Simplex> = (0..n).map(|v| Simplex::new(&[v]).unwrap()).collect();
    let mut edges = Vec::new();
    let p_edge = rng.gen_range(0.3..0.9);
    for a in 0..n {
        for b in a + 1..n {
            if simplices.len() < max_len && rng.gen_bool(p_edge) {
                simplices.push(Simplex::new(&[a, b]).unwrap());
                edges.push((a, b));
            }
        }
    }
    let has = |a: u32, b: u32| edges.contains(&(a.min(b), a.max(b)));
    let p_tri = rng.gen_range(0.2..0.9);
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                if simplices.len() < max_len
                    && has(a, b)
                    && has(b, c)
                    && has(a, c)
                    && rng.gen_bool(p_tri)
                {
                    simplices.push(Simplex::new(&[a, b, c]).unwrap());
                }
            }
        }
    }
    Arc::new(SimplicialComplex::from_simplices(simplices).unwrap())
}

/// Ids ordered so that faces come before cofaces.
fn by_dim(c: &SimplicialComplex) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..c.len()).collect();
    ids.sort_by_key(|&i| c.dim_of(i));
    ids
}

/// Monotone integer values: each simplex takes its largest face value plus
/// a small random increment, so ties are common.
pub fn random_filtration(rng: &mut ChaCha8Rng, max_len: usize) -> Filtration1D {
    let c = random_complex(rng, max_len);
    let mut values = vec![0.0; c.len()];
    for id in by_dim(&c) {
        let base = c
            .boundary(id)
            .iter()
            .map(|&f| values[f as usize])
            .fold(f64::NEG_INFINITY, f64::max);
        values[id] = if base.is_finite() {
            base + f64::from(rng.gen_range(0..3u8).saturating_sub(1))
        } else {
            f64::from(rng.gen_range(0..6u8))
        };
    }
    Filtration1D::new(c, values).unwrap()
}

/// Monotone integer grades in roughly `[0, 12]²`.
pub fn random_bifiltration(rng: &mut ChaCha8Rng, max_len: usize) -> Bifiltration {
    let c = random_complex(rng, max_len);
    let mut grades: Vec<Grade> = vec![[0.0; 2]; c.len()];
    for id in by_dim(&c) {
        let faces = c.boundary(id);
        grades[id] = if faces.is_empty() {
            [
                f64::from(rng.gen_range(0..=8u8)),
                f64::from(rng.gen_range(0..=8u8)),
            ]
        } else {
            let mut g = [f64::NEG_INFINITY; 2];
            for &f in faces {
                g[0] = g[0].max(grades[f as usize][0]);
                g[1] = g[1].max(grades[f as usize][1]);
            }
            [
                g[0] + f64::from(rng.gen_range(0..3u8).saturating_sub(1)),
                g[1] + f64::from(rng.gen_range(0..3u8).saturating_sub(1)),
            ]
        };
    }
    Bifiltration::new(c, grades).unwrap()
}

/// Mismatches between diagram-implied ranks and brute-force ranks over all
/// pairs `s ≤ t` of filtration values and every dimension.
pub fn reduction_mismatches(f: &Filtration1D) -> usize {
    let c = f.complex();
    let d = mgeneo::ph::compute_persistence(f);
    let mut levels: Vec<f64> = f.values().to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut bad = 0;
    for (i, &s) in levels.iter().enumerate() {
        let a = mask(c, |id| f.value(id) <= s);
        for &t in &levels[i..] {
            let b = mask(c, |id| f.value(id) <= t);
            for dim in 0..=2 {
                if d.rank_between(dim, s, t) != map_rank(c, a, b, dim) {
                    bad += 1;
                }
            }
        }
    }
    bad
}

pub fn rank_at(b: &Bifiltration, lo: Grade, hi: Grade, dim: usize) -> usize {
    let c = b.complex();
    let le = |g: Grade, x: Grade| g[0] <= x[0] && g[1] <= x[1];
    let a = mask(c, |id| le(b.grade(id), lo));
    let bb = mask(c, |id| le(b.grade(id), hi));
    map_rank(c, a, bb, dim)
}

/// `λ(k, x)` from its definition: the largest `ε` on a `delta` lattice with
/// `β^{x−ε(1,1), x+ε(1,1)} ≥ k`, or 0 when even `ε = 0` fails. The true value
/// lies in `[result, result + delta)`.
pub fn landscape_by_definition(
    b: &Bifiltration,
    dim: usize,
    k: usize,
    x: Grade,
    delta: f64,
) -> f64 {
    let mut best = 0.0;
    for j in 0..100_000u32 {
        let e = f64::from(j) * delta;
        if rank_at(b, [x[0] - e, x[1] - e], [x[0] + e, x[1] + e], dim) < k {
            break;
        }
        best = e;
    }
    best
}
