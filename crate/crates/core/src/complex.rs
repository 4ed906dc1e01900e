//! Triangulated pixel grids and their one- and two-parameter filtrations.
//!
//! Each unit square is split along the diagonal joining its upper-left and
//! lower-right corners. Simplices are ordered vertices first, then edges, then
//! triangles, each group sorted lexicographically by vertex ids; a simplex's
//! position in that order is its id.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geneo::OperatorBank;
use crate::img::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Simplex {
    dim: u8,
    verts: [u32; 3],
}

impl Simplex {
    /// Builds a simplex from 1–3 vertex ids, sorting them.
    pub fn new(vertices: &[u32]) -> Result<Self> {
        if vertices.is_empty() || vertices.len() > 3 {
            return Err(Error::Invalid(format!(
                "simplex needs 1 to 3 vertices, got {}",
                vertices.len()
            )));
        }
        let mut verts = [0u32; 3];
        verts[..vertices.len()].copy_from_slice(vertices);
        verts[..vertices.len()].sort_unstable();
        if verts[..vertices.len()].windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Invalid(format!("repeated vertex in {vertices:?}")));
        }
        Ok(Self {
            dim: (vertices.len() - 1) as u8,
            verts,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn vertices(&self) -> &[u32] {
        &self.verts[..self.dim as usize + 1]
    }

    /// Codimension-one faces in lexicographic order.
    pub fn faces(&self) -> Vec<Simplex> {
        let v = self.vertices();
        if v.len() == 1 {
            return Vec::new();
        }
        (0..v.len())
            .rev()
            .map(|skip| {
                let rest: Vec<u32> = v
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != skip)
                    .map(|(_, &x)| x)
                    .collect();
                Simplex::new(&rest).expect("face of a valid simplex")
            })
            .collect()
    }
}

impl fmt::Display for Simplex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.vertices().iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(" "))
    }
}

/// A simplicial complex of dimension at most 2, closed under faces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialComplex {
    simplices: Vec<Simplex>,
    /// Face ids of each simplex (empty for vertices).
    boundaries: Vec<Vec<u32>>,
    grid: Option<(usize, usize)>,
    /// For grid complexes: the triangles on either side of each edge, with
    /// `u32::MAX` standing for the outer face. Empty otherwise.
    edge_cofaces: Vec<[u32; 2]>,
}

impl SimplicialComplex {
    /// Builds a complex from an arbitrary closed family of simplices.
    pub fn from_simplices(simplices: impl IntoIterator<Item = Simplex>) -> Result<Self> {
        let mut simplices: Vec<Simplex> = simplices.into_iter().collect();
        simplices.sort_unstable();
        simplices.dedup();
        let index: HashMap<Simplex, u32> = simplices
            .iter()
            .enumerate()
            .map(|(i, s)| (*s, i as u32))
            .collect();
        let boundaries = simplices
            .iter()
            .map(|s| {
                s.faces()
                    .iter()
                    .map(|f| {
                        index.get(f).copied().ok_or_else(|| {
                            Error::Invalid(format!("face {{{f}}} of {{{s}}} is missing"))
                        })
                    })
                    .collect::<Result<Vec<u32>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            simplices,
            boundaries,
            grid: None,
            edge_cofaces: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.simplices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.simplices.is_empty()
    }

    pub fn simplices(&self) -> &[Simplex] {
        &self.simplices
    }

    pub fn simplex(&self, id: usize) -> Simplex {
        self.simplices[id]
    }

    pub fn dim_of(&self, id: usize) -> usize {
        self.simplices[id].dim()
    }

    pub fn boundary(&self, id: usize) -> &[u32] {
        &self.boundaries[id]
    }

    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        self.grid
    }

    /// Cofaces of edge ids (indexed by id, vertices and triangles unused),
    /// available only for grid complexes.
    pub(crate) fn edge_cofaces(&self) -> Option<&[[u32; 2]]> {
        self.grid.map(|_| self.edge_cofaces.as_slice())
    }

    pub fn id_of(&self, simplex: &Simplex) -> Option<usize> {
        self.simplices.binary_search(simplex).ok()
    }

    pub fn count_by_dim(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for s in &self.simplices {
            counts[s.dim()] += 1;
        }
        counts
    }

    pub fn euler_characteristic(&self) -> i64 {
        let [v, e, f] = self.count_by_dim();
        v as i64 - e as i64 + f as i64
    }

    pub fn num_vertices(&self) -> usize {
        self.count_by_dim()[0]
    }
}

fn grid_simplices(width: usize, height: usize) -> Vec<Simplex> {
    let id = |r: usize, c: usize| (r * width + c) as u32;
    let mut out = Vec::new();
    for r in 0..height {
        for c in 0..width {
            out.push(Simplex::new(&[id(r, c)]).unwrap());
            if c + 1 < width {
                out.push(Simplex::new(&[id(r, c), id(r, c + 1)]).unwrap());
            }
            if r + 1 < height {
                out.push(Simplex::new(&[id(r, c), id(r + 1, c)]).unwrap());
            }
            if r + 1 < height && c + 1 < width {
                let (tl, tr, bl, br) = (id(r, c), id(r, c + 1), id(r + 1, c), id(r + 1, c + 1));
                out.push(Simplex::new(&[tl, br]).unwrap());
                out.push(Simplex::new(&[tl, tr, br]).unwrap());
                out.push(Simplex::new(&[tl, bl, br]).unwrap());
            }
        }
    }
    out
}

type GridCache = HashMap<(usize, usize), Arc<SimplicialComplex>>;

static GRID_CACHE: Lazy<Mutex<GridCache>> = Lazy::new(|| Mutex::new(HashMap::new()));

/// Freudenthal-style triangulation of a `width × height` pixel grid.
///
/// Complexes are memoized per shape and shared.
pub fn build_grid_complex(width: usize, height: usize) -> Result<Arc<SimplicialComplex>> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension(format!(
            "grid must be nonempty, got {width}x{height}"
        )));
    }
    let mut cache = GRID_CACHE.lock().expect("grid cache poisoned");
    if let Some(c) = cache.get(&(width, height)) {
        return Ok(Arc::clone(c));
    }
    let mut complex = SimplicialComplex::from_simplices(grid_simplices(width, height))?;
    let mut cofaces = vec![[u32::MAX; 2]; complex.len()];
    for t in 0..complex.len() {
        if complex.dim_of(t) == 2 {
            for &e in complex.boundary(t) {
                let slot = &mut cofaces[e as usize];
                slot[usize::from(slot[0] != u32::MAX)] = t as u32;
            }
        }
    }
    complex.edge_cofaces = cofaces;
    complex.grid = Some((width, height));
    let complex = Arc::new(complex);
    cache.insert((width, height), Arc::clone(&complex));
    Ok(complex)
}

/// A real value per simplex, monotone along face relations.
#[derive(Debug, Clone)]
pub struct Filtration1D {
    complex: Arc<SimplicialComplex>,
    values: Vec<f64>,
}

impl Filtration1D {
    pub fn new(complex: Arc<SimplicialComplex>, values: Vec<f64>) -> Result<Self> {
        if values.len() != complex.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} simplices",
                values.len(),
                complex.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Value(format!(
                "filtration value of simplex {i} is NaN"
            )));
        }
        for (id, &v) in values.iter().enumerate() {
            for &face in complex.boundary(id) {
                if values[face as usize] > v {
                    return Err(Error::NotMonotone {
                        face: face as usize,
                        coface: id,
                    });
                }
            }
        }
        Ok(Self { complex, values })
    }

    /// Skips the monotonicity check; callers guarantee it by construction.
    pub(crate) fn new_unchecked(complex: Arc<SimplicialComplex>, values: Vec<f64>) -> Self {
        debug_assert_eq!(complex.len(), values.len());
        Self { complex, values }
    }

    pub fn complex(&self) -> &Arc<SimplicialComplex> {
        &self.complex
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, id: usize) -> f64 {
        self.values[id]
    }

    /// Ids of simplices with value `≤ t`.
    pub fn sublevel(&self, t: f64) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i] <= t)
            .collect()
    }
}

fn vertex_max_values(complex: &Arc<SimplicialComplex>, vertex_values: &[f64]) -> Vec<f64> {
    complex
        .simplices()
        .iter()
        .map(|s| {
            s.vertices()
                .iter()
                .map(|&v| vertex_values[v as usize])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Each simplex enters with its highest vertex.
pub fn lower_star_filtration(image: &GrayImage) -> Result<Filtration1D> {
    let complex = build_grid_complex(image.width(), image.height())?;
    let values = vertex_max_values(&complex, image.values());
    Ok(Filtration1D::new_unchecked(complex, values))
}

/// Lower star of `−φ`: each simplex enters with its lowest vertex, negated.
pub fn upper_star_filtration(image: &GrayImage) -> Result<Filtration1D> {
    lower_star_filtration(&image.map(|v| -v)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum TriangleRule {
    /// Componentwise max over the four corners of the triangle's unit square.
    #[default]
    #[serde(rename = "square-max")]
    SquareMax,
    /// Componentwise max over the triangle's own three vertices.
    #[serde(rename = "simplex-max")]
    SimplexMax,
}

impl TriangleRule {
    pub fn as_str(self) -> &'static str {
        match self {
            TriangleRule::SquareMax => "square-max",
            TriangleRule::SimplexMax => "simplex-max",
        }
    }
}

impl fmt::Display for TriangleRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TriangleRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square-max" => Ok(TriangleRule::SquareMax),
            "simplex-max" => Ok(TriangleRule::SimplexMax),
            other => Err(Error::Invalid(format!("unknown triangle rule {other:?}"))),
        }
    }
}

pub type Grade = [f64; 2];

pub fn grade_le(a: Grade, b: Grade) -> bool {
    a[0] <= b[0] && a[1] <= b[1]
}

fn grade_max(a: Grade, b: Grade) -> Grade {
    [a[0].max(b[0]), a[1].max(b[1])]
}

/// One-critical bifiltration: one grade in ℝ² per simplex.
#[derive(Debug, Clone)]
pub struct Bifiltration {
    complex: Arc<SimplicialComplex>,
    grades: Vec<Grade>,
    rule: Option<TriangleRule>,
}

impl Bifiltration {
    /// Validates shape, finiteness and componentwise monotonicity.
    pub fn new(complex: Arc<SimplicialComplex>, grades: Vec<Grade>) -> Result<Self> {
        if grades.len() != complex.len() {
            return Err(Error::Dimension(format!(
                "{} grades for {} simplices",
                grades.len(),
                complex.len()
            )));
        }
        if let Some(i) = grades.iter().position(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::Value(format!("grade of simplex {i} is not finite")));
        }
        let b = Self {
            complex,
            grades,
            rule: None,
        };
        b.check_monotone()?;
        Ok(b)
    }

    pub fn with_rule(mut self, rule: TriangleRule) -> Self {
        self.rule = Some(rule);
        self
    }

    pub fn check_monotone(&self) -> Result<()> {
        for id in 0..self.grades.len() {
            for &face in self.complex.boundary(id) {
                if !grade_le(self.grades[face as usize], self.grades[id]) {
                    return Err(Error::NotMonotone {
                        face: face as usize,
                        coface: id,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn complex(&self) -> &Arc<SimplicialComplex> {
        &self.complex
    }

    pub fn grades(&self) -> &[Grade] {
        &self.grades
    }

    pub fn grade(&self, id: usize) -> Grade {
        self.grades[id]
    }

    pub fn rule(&self) -> Option<TriangleRule> {
        self.rule
    }

    /// Ids of simplices whose grade is `≤ x`.
    pub fn sublevel(&self, x: Grade) -> Vec<usize> {
        (0..self.grades.len())
            .filter(|&i| grade_le(self.grades[i], x))
            .collect()
    }

    /// One-parameter filtration of axis `axis` alone.
    pub fn axis_filtration(&self, axis: usize) -> Filtration1D {
        Filtration1D::new_unchecked(
            Arc::clone(&self.complex),
            self.grades.iter().map(|g| g[axis]).collect(),
        )
    }

    /// Text export: `width height`, triangle rule, then `v0 [v1 [v2]] ; gx gy`.
    ///
    /// Complexes that are not pixel grids write `0 0` as their shape.
    pub fn to_text(&self) -> String {
        let (w, h) = self.complex.grid_shape().unwrap_or((0, 0));
        let mut out = format!(
            "{w} {h}\n{}\n",
            self.rule.map(TriangleRule::as_str).unwrap_or("custom")
        );
        for (s, g) in self.complex.simplices().iter().zip(&self.grades) {
            writeln!(out, "{s} ; {} {}", g[0], g[1]).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: 1,
                message: format!("bad shape {header:?}"),
            })?;
        if dims.len() != 2 {
            return Err(Error::Parse {
                line: 1,
                message: "expected `width height`".into(),
            });
        }
        let (rule_line, rule_text) = lines.next().ok_or_else(|| Error::Parse {
            line: 2,
            message: "missing triangle rule".into(),
        })?;
        let rule = match rule_text.trim() {
            "custom" => None,
            other => Some(other.parse::<TriangleRule>().map_err(|e| Error::Parse {
                line: rule_line + 1,
                message: e.to_string(),
            })?),
        };
        let mut entries = Vec::new();
        for (i, line) in lines {
            let err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let (verts, grade) = line
                .split_once(';')
                .ok_or_else(|| err("expected `vertices ; gx gy`".into()))?;
            let verts: Vec<u32> = verts
                .split_whitespace()
                .map(|s| s.parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(format!("bad vertex list {verts:?}")))?;
            let grade: Vec<f64> = grade
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| err(format!("bad grade {grade:?}")))?;
            if grade.len() != 2 {
                return Err(err(format!(
                    "expected 2 grade coordinates, got {}",
                    grade.len()
                )));
            }
            let simplex = Simplex::new(&verts).map_err(|e| err(e.to_string()))?;
            entries.push((simplex, [grade[0], grade[1]]));
        }
        let (w, h) = (dims[0], dims[1]);
        let complex = if w > 0 && h > 0 {
            build_grid_complex(w, h)?
        } else {
            Arc::new(SimplicialComplex::from_simplices(
                entries.iter().map(|e| e.0),
            )?)
        };
        if entries.len() != complex.len() {
            return Err(Error::Format(format!(
                "expected {} simplices, found {}",
                complex.len(),
                entries.len()
            )));
        }
        let mut grades = vec![[f64::NAN; 2]; complex.len()];
        for (simplex, g) in entries {
            let id = complex
                .id_of(&simplex)
                .ok_or_else(|| Error::Format(format!("simplex {{{simplex}}} not in the grid")))?;
            grades[id] = g;
        }
        let b = Bifiltration::new(complex, grades)?;
        Ok(match rule {
            Some(r) => b.with_rule(r),
            None => b,
        })
    }

    /// RIVET's `bifiltration` input format.
    pub fn to_rivet(&self, xlabel: &str, ylabel: &str) -> String {
        let mut out = format!("--datatype bifiltration\n--xlabel {xlabel}\n--ylabel {ylabel}\n\n");
        for (s, g) in self.complex.simplices().iter().zip(&self.grades) {
            writeln!(out, "{s} ; {} {}", g[0], g[1]).unwrap();
        }
        out
    }
}

/// Grades simplices from two channel images.
pub fn bifiltration_from_channels(
    first: &GrayImage,
    second: &GrayImage,
    rule: TriangleRule,
) -> Result<Bifiltration> {
    if !first.same_shape(second) {
        return Err(Error::Dimension("channel images differ in shape".into()));
    }
    let (w, h) = (first.width(), first.height());
    let complex = build_grid_complex(w, h)?;
    let vertex: Vec<Grade> = first
        .values()
        .iter()
        .zip(second.values())
        .map(|(&a, &b)| [a, b])
        .collect();
    let grades = complex
        .simplices()
        .iter()
        .map(|s| {
            let v = s.vertices();
            let mut g = v
                .iter()
                .map(|&i| vertex[i as usize])
                .fold([f64::NEG_INFINITY; 2], grade_max);
            if v.len() == 3 && rule == TriangleRule::SquareMax {
                // v[0] is the upper-left corner and v[2] the lower-right; the
                // missing corner is whichever of right/below v[1] is not.
                let w = w as u32;
                let fourth = if v[1] == v[0] + 1 { v[0] + w } else { v[0] + 1 };
                g = grade_max(g, vertex[fourth as usize]);
            }
            g
        })
        .collect();
    Ok(Bifiltration {
        complex,
        grades,
        rule: Some(rule),
    })
}

/// Applies a two-operator bank to `image` and grades the grid complex.
pub fn build_bifiltration(
    image: &GrayImage,
    bank: &OperatorBank,
    rule: TriangleRule,
) -> Result<Bifiltration> {
    if bank.operators.len() != 2 {
        return Err(Error::Invalid(format!(
            "bifiltration needs a 2-operator bank, got {}",
            bank.operators.len()
        )));
    }
    let channels = bank.apply(image)?;
    bifiltration_from_channels(&channels[0], &channels[1], rule)
}

/// Snaps every grade coordinate up to the next boundary of a uniform
/// `bins`-cell partition of that axis' observed range.
pub fn coarsen_bifiltration(b: &Bifiltration, bins: usize) -> Result<Bifiltration> {
    if bins == 0 {
        return Err(Error::Invalid("bins must be at least 1".into()));
    }
    let mut grades = b.grades.clone();
    for axis in 0..2 {
        let (lo, hi) = b
            .grades
            .iter()
            .map(|g| g[axis])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        if !(hi > lo) {
            continue;
        }
        let width = (hi - lo) / bins as f64;
        let boundary = |i: usize| if i >= bins { hi } else { lo + i as f64 * width };
        for g in &mut grades {
            let v = g[axis];
            let mut i = ((v - lo) / width).ceil().max(0.0) as usize;
            // rounding can land one cell low
            while boundary(i) < v {
                i += 1;
            }
            g[axis] = boundary(i.min(bins));
        }
    }
    Ok(Bifiltration {
        complex: Arc::clone(&b.complex),
        grades,
        rule: b.rule,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_counts() {
        for (w, h) in [(1, 1), (2, 2), (3, 3), (4, 2), (28, 28)] {
            let c = build_grid_complex(w, h).unwrap();
            let [v, e, f] = c.count_by_dim();
            assert_eq!(v, w * h);
            assert_eq!(e, h * (w - 1) + w * (h - 1) + (w - 1) * (h - 1));
            assert_eq!(f, 2 * (w - 1) * (h - 1));
            assert_eq!(c.euler_characteristic(), 1);
            assert!(v + e + f < 6 * w * h);
        }
        let c = build_grid_complex(3, 3).unwrap();
        assert_eq!(c.count_by_dim(), [9, 16, 8]);
        assert_eq!(build_grid_complex(1, 1).unwrap().count_by_dim(), [1, 0, 0]);
        assert_eq!(build_grid_complex(2, 2).unwrap().count_by_dim(), [4, 5, 2]);
    }

    #[test]
    fn diagonal_runs_upper_left_to_lower_right() {
        let c = build_grid_complex(2, 2).unwrap();
        assert!(c.id_of(&Simplex::new(&[0, 3]).unwrap()).is_some());
        assert!(c.id_of(&Simplex::new(&[1, 2]).unwrap()).is_none());
        assert!(c.id_of(&Simplex::new(&[0, 1, 3]).unwrap()).is_some());
        assert!(c.id_of(&Simplex::new(&[0, 2, 3]).unwrap()).is_some());
    }

    #[test]
    fn missing_face_rejected() {
        let s = [Simplex::new(&[0]).unwrap(), Simplex::new(&[0, 1]).unwrap()];
        assert!(SimplicialComplex::from_simplices(s).is_err());
    }

    #[test]
    fn lower_star_examples() {
        let single = GrayImage::constant(1, 1, 5.0).unwrap();
        assert_eq!(lower_star_filtration(&single).unwrap().values(), &[5.0]);

        let pair = GrayImage::from_rows(&[[3.0, 8.0]]).unwrap();
        let f = lower_star_filtration(&pair).unwrap();
        let edge = f.complex().id_of(&Simplex::new(&[0, 1]).unwrap()).unwrap();
        assert_eq!(f.value(edge), 8.0);
    }

    #[test]
    fn upper_star_of_constant() {
        let f = upper_star_filtration(&GrayImage::constant(3, 2, 4.0).unwrap()).unwrap();
        assert!(f.values().iter().all(|&v| v == -4.0));
    }

    #[test]
    fn non_monotone_rejected() {
        let c = build_grid_complex(2, 1).unwrap();
        // vertices 0, 1 then edge
        assert!(matches!(
            Filtration1D::new(Arc::clone(&c), vec![0.0, 5.0, 1.0]),
            Err(Error::NotMonotone { .. })
        ));
        assert!(Bifiltration::new(c, vec![[0.0, 0.0], [1.0, 2.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn constant_image_identity_bank() {
        let phi = GrayImage::constant(4, 4, 3.0).unwrap();
        let b =
            build_bifiltration(&phi, &OperatorBank::identity(2), TriangleRule::SquareMax).unwrap();
        assert!(b.grades().iter().all(|&g| g == [3.0, 3.0]));
        assert!(
            build_bifiltration(&phi, &OperatorBank::identity(3), TriangleRule::SquareMax).is_err()
        );
    }

    #[test]
    fn square_max_dominates_simplex_max() {
        let a = GrayImage::new(4, 3, (0..12).map(|i| ((i * 7) % 5) as f64).collect()).unwrap();
        let b = GrayImage::new(4, 3, (0..12).map(|i| ((i * 3) % 7) as f64).collect()).unwrap();
        let sq = bifiltration_from_channels(&a, &b, TriangleRule::SquareMax).unwrap();
        let sx = bifiltration_from_channels(&a, &b, TriangleRule::SimplexMax).unwrap();
        for id in 0..sq.grades().len() {
            assert!(grade_le(sx.grade(id), sq.grade(id)));
            if sq.complex().dim_of(id) < 2 {
                assert_eq!(sx.grade(id), sq.grade(id));
            }
        }
        sq.check_monotone().unwrap();
        sx.check_monotone().unwrap();
    }

    #[test]
    fn coarsen_examples() {
        let a = GrayImage::new(3, 3, (0..9).map(|i| i as f64).collect()).unwrap();
        let b = GrayImage::new(3, 3, (0..9).map(|i| (8 - i) as f64).collect()).unwrap();
        let bif = bifiltration_from_channels(&a, &b, TriangleRule::SimplexMax).unwrap();
        // integer grades on [0, 8] with 8 bins: every value is a boundary
        let same = coarsen_bifiltration(&bif, 8).unwrap();
        assert_eq!(same.grades(), bif.grades());
        let same = coarsen_bifiltration(&bif, 16).unwrap();
        assert_eq!(same.grades(), bif.grades());

        let c = coarsen_bifiltration(&bif, 3).unwrap();
        for (g, h) in bif.grades().iter().zip(c.grades()) {
            assert!(grade_le(*g, *h));
        }
        c.check_monotone().unwrap();

        let flat = GrayImage::constant(3, 3, 2.0).unwrap();
        let bf = bifiltration_from_channels(&flat, &flat, TriangleRule::SquareMax).unwrap();
        let cf = coarsen_bifiltration(&bf, 10).unwrap();
        assert!(cf.grades().iter().all(|&g| g == [2.0, 2.0]));
        assert!(coarsen_bifiltration(&bf, 0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let a = GrayImage::new(3, 2, vec![1.0, 2.5, 3.0, 0.0, 7.0, 4.0]).unwrap();
        let b = GrayImage::new(3, 2, vec![6.0, 5.0, 4.0, 3.0, 2.0, 1.0]).unwrap();
        let bif = bifiltration_from_channels(&a, &b, TriangleRule::SquareMax).unwrap();
        let text = bif.to_text();
        assert!(text.starts_with("3 2\nsquare-max\n"));
        let back = Bifiltration::from_text(&text).unwrap();
        assert_eq!(back.grades(), bif.grades());
        assert_eq!(back.rule(), Some(TriangleRule::SquareMax));
    }

    #[test]
    fn text_errors_carry_line_numbers() {
        let err = Bifiltration::from_text("1 1\nsimplex-max\n0 ; 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = Bifiltration::from_text("1 1\nwhatever\n0 ; 1 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn generic_complex_text_round_trip() {
        let simplices = [[0u32].as_slice(), &[1], &[2], &[0, 1], &[1, 2], &[0, 2]]
            .iter()
            .map(|v| Simplex::new(v).unwrap())
            .collect::<Vec<_>>();
        let c = Arc::new(SimplicialComplex::from_simplices(simplices).unwrap());
        let grades = vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 1.0],
        ];
        let b = Bifiltration::new(c, grades).unwrap();
        let back = Bifiltration::from_text(&b.to_text()).unwrap();
        assert_eq!(back.grades(), b.grades());
    }

    #[test]
    fn rivet_export_format() {
        let a = GrayImage::from_rows(&[[1.0, 2.0]]).unwrap();
        let bif = bifiltration_from_channels(&a, &a, TriangleRule::SquareMax).unwrap();
        let text = bif.to_rivet("psi1", "psi2");
        assert_eq!(
            text,
            "--datatype bifiltration\n--xlabel psi1\n--ylabel psi2\n\n0 ; 1 1\n1 ; 2 2\n0 1 ; 2 2\n"
        );
    }
}
