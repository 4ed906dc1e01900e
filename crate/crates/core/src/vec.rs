//! Fixed-length feature vectors: persistence images, flattened landscapes and
//! labelled feature tables.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::mpl::Landscape;
use crate::ph::PersistencePoint;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersistenceImageSpec {
    pub resolution: usize,
    pub sigma: f64,
    /// Shared range of the birth and persistence axes; essential points take
    /// persistence up to `range.1`.
    pub range: (f64, f64),
}

impl Default for PersistenceImageSpec {
    fn default() -> Self {
        Self {
            resolution: 5,
            sigma: 1.0,
            range: (0.0, 256.0),
        }
    }
}

impl PersistenceImageSpec {
    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 {
            return Err(Error::Invalid(
                "persistence image resolution must be positive".into(),
            ));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Invalid(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.range.0 < self.range.1) || !self.range.1.is_finite() || !self.range.0.is_finite()
        {
            return Err(Error::Invalid(format!("bad range {:?}", self.range)));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.range.1 - self.range.0
    }

    pub fn len(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell edges along either axis.
    pub fn edges(&self) -> Vec<f64> {
        let step = self.span() / self.resolution as f64;
        (0..=self.resolution)
            .map(|i| self.range.0 + i as f64 * step)
            .collect()
    }

    /// Bound on `‖PI(D) − PI(D')‖∞` per unit of 1-Wasserstein distance
    /// between diagrams: `2/span + 3/(σ√(2π))`.
    pub fn lipschitz_constant(&self) -> f64 {
        2.0 / self.span() + 3.0 / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Linear ramp in persistence, clamped to `[0, 1]`.
    pub fn weight(&self, persistence: f64) -> f64 {
        (persistence / self.span()).clamp(0.0, 1.0)
    }

    /// `(birth, persistence)` coordinates, with death clamped to `range.1`.
    pub fn coordinates(&self, p: &PersistencePoint) -> (f64, f64) {
        let death = p.death.min(self.range.1);
        (p.birth, (death - p.birth).max(0.0))
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Weighted Gaussian mass of each pixel, row-major with rows along
/// persistence and columns along birth (both ascending).
pub fn persistence_image<'a>(
    points: impl IntoIterator<Item = &'a PersistencePoint>,
    spec: &PersistenceImageSpec,
) -> Result<Vec<f64>> {
    spec.validate()?;
    let edges = spec.edges();
    let n = spec.resolution;
    let mut out = vec![0.0; n * n];
    let mut bx = vec![0.0; n];
    let mut py = vec![0.0; n];
    for p in points {
        let (b, pers) = spec.coordinates(p);
        let w = spec.weight(pers);
        if w == 0.0 {
            continue;
        }
        let mass = |centre: f64, into: &mut [f64]| {
            let mut prev = normal_cdf((edges[0] - centre) / spec.sigma);
            for (i, slot) in into.iter_mut().enumerate() {
                let next = normal_cdf((edges[i + 1] - centre) / spec.sigma);
                *slot = next - prev;
                prev = next;
            }
        };
        mass(b, &mut bx);
        mass(pers, &mut py);
        for (row, &my) in py.iter().enumerate() {
            if my == 0.0 {
                continue;
            }
            for (col, &mx) in bx.iter().enumerate() {
                out[row * n + col] += w * my * mx;
            }
        }
    }
    Ok(out)
}

/// All `λ(k, ·)` of each landscape in turn, `k` ascending.
pub fn landscape_vector(landscapes: &[Landscape]) -> Vec<f64> {
    landscapes
        .iter()
        .flat_map(|l| l.values.iter().flatten().copied())
        .collect()
}

pub fn concat(parts: &[Vec<f64>]) -> Vec<f64> {
    parts.concat()
}

/// Labelled rows of equal length.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureTable {
    pub labels: Vec<u8>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn new(labels: Vec<u8>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != rows.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} rows",
                labels.len(),
                rows.len()
            )));
        }
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().position(|r| r.len() != first.len()) {
                return Err(Error::Dimension(format!(
                    "row {bad} has {} features, expected {}",
                    rows[bad].len(),
                    first.len()
                )));
            }
        }
        Ok(Self { labels, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// One line per row: the label, then the features.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (label, row) in self.labels.iter().zip(&self.rows) {
            out.push_str(&label.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let mut fields = line.split(',');
            let label = fields
                .next()
                .unwrap_or_default()
                .trim()
                .parse::<u8>()
                .map_err(|e| parse_err(format!("label: {e}")))?;
            let row = fields
                .map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| parse_err(format!("feature {f:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            labels.push(label);
            rows.push(row);
        }
        Self::new(labels, rows)
    }
}
