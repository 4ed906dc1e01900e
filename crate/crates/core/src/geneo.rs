//! Operator banks built from radial Gaussian-mixture kernels.
//!
//! A GENEO is a normalized convolution against a radially symmetric kernel
//! `G(x, y) = Σ a_j g(√(x² + y²) − τ_j)`. Normalizing by the discrete L¹ mass
//! `Σ|G|` keeps the operator norm at most 1, so each GENEO is non-expansive in
//! the sup norm; a DGENEO (difference of two GENEOs) is 2-Lipschitz.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::img::GrayImage;

/// Relative tolerance on `Σ a² = Σ τ²`.
const S_CONSTRAINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GaussianExponent {
    /// `exp(−(t − τ) / 2σ²)`, the profile without the square.
    Linear,
    /// `exp(−(t − τ)² / 2σ²)`.
    #[default]
    Squared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelTerm {
    pub a: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub sigma: f64,
    pub terms: Vec<KernelTerm>,
    #[serde(default)]
    pub unconstrained: bool,
    #[serde(default)]
    pub exponent: GaussianExponent,
}

impl KernelSpec {
    /// A constrained kernel with the default squared exponent.
    pub fn new(sigma: f64, terms: &[(f64, f64)]) -> Self {
        Self {
            sigma,
            terms: terms
                .iter()
                .map(|&(a, tau)| KernelTerm { a, tau })
                .collect(),
            unconstrained: false,
            exponent: GaussianExponent::Squared,
        }
    }

    pub fn unconstrained(mut self) -> Self {
        self.unconstrained = true;
        self
    }

    pub fn with_exponent(mut self, exponent: GaussianExponent) -> Self {
        self.exponent = exponent;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Kernel(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.terms.is_empty() {
            return Err(Error::Kernel("kernel needs at least one term".into()));
        }
        if self
            .terms
            .iter()
            .any(|t| !t.a.is_finite() || !t.tau.is_finite())
        {
            return Err(Error::Kernel("kernel terms must be finite".into()));
        }
        if !self.unconstrained {
            let sum_a: f64 = self.terms.iter().map(|t| t.a * t.a).sum();
            let sum_tau: f64 = self.terms.iter().map(|t| t.tau * t.tau).sum();
            if (sum_a - sum_tau).abs() > S_CONSTRAINT_TOL * sum_a.max(1.0) {
                return Err(Error::Kernel(format!(
                    "Σa² = {sum_a} differs from Στ² = {sum_tau}; set `unconstrained` to allow it"
                )));
            }
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        let max_tau = self.terms.iter().map(|t| t.tau.abs()).fold(0.0, f64::max);
        (3.0 * self.sigma + max_tau).ceil() as usize
    }

    /// Kernel profile at distance `t` from the center.
    pub fn profile(&self, t: f64) -> f64 {
        let two_var = 2.0 * self.sigma * self.sigma;
        self.terms
            .iter()
            .map(|term| {
                let u = t - term.tau;
                let arg = match self.exponent {
                    GaussianExponent::Linear => u,
                    GaussianExponent::Squared => u * u,
                };
                term.a * (-arg / two_var).exp()
            })
            .sum()
    }
}

/// Square kernel sample of side `2r + 1`, indexed `[(dy + r) * side + (dx + r)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrid {
    radius: usize,
    values: Vec<f64>,
}

impl KernelGrid {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        self.values[((dy + r) * (2 * r + 1) + dx + r) as usize]
    }

    /// Discrete L¹ mass `Σ|G|`.
    pub fn l1_mass(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }
}

pub fn sample_kernel(spec: &KernelSpec) -> Result<KernelGrid> {
    spec.validate()?;
    let r = spec.radius() as isize;
    let mut values = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for dy in -r..=r {
        for dx in -r..=r {
            // from the integer squared radius so symmetric offsets agree bitwise
            let t = ((dx * dx + dy * dy) as f64).sqrt();
            values.push(spec.profile(t));
        }
    }
    Ok(KernelGrid {
        radius: r as usize,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum OperatorSpec {
    Identity,
    Geneo(KernelSpec),
    #[serde(rename = "dgeneo")]
    DGeneo {
        first: KernelSpec,
        second: KernelSpec,
    },
}

impl OperatorSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            OperatorSpec::Identity => Ok(()),
            OperatorSpec::Geneo(k) => k.validate(),
            OperatorSpec::DGeneo { first, second } => {
                first.validate()?;
                second.validate()
            }
        }
    }

    /// Sup-norm Lipschitz constant of the operator.
    pub fn lipschitz_bound(&self) -> f64 {
        match self {
            OperatorSpec::Identity | OperatorSpec::Geneo(_) => 1.0,
            OperatorSpec::DGeneo { .. } => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorBank {
    pub operators: Vec<OperatorSpec>,
    #[serde(default = "default_true")]
    pub rescale: bool,
}

fn default_true() -> bool {
    true
}

impl OperatorBank {
    pub fn new(operators: Vec<OperatorSpec>, rescale: bool) -> Result<Self> {
        let bank = Self { operators, rescale };
        bank.validate()?;
        Ok(bank)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            operators: vec![OperatorSpec::Identity; n],
            rescale: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.operators.is_empty() {
            return Err(Error::Invalid("operator bank is empty".into()));
        }
        self.operators.iter().try_for_each(OperatorSpec::validate)
    }

    pub fn without_rescale(mut self) -> Self {
        self.rescale = false;
        self
    }

    pub fn lipschitz_bound(&self) -> f64 {
        self.operators
            .iter()
            .map(OperatorSpec::lipschitz_bound)
            .fold(0.0, f64::max)
    }

    pub fn compile(&self) -> Result<CompiledBank> {
        self.validate()?;
        Ok(CompiledBank {
            operators: self
                .operators
                .iter()
                .map(CompiledOperator::new)
                .collect::<Result<_>>()?,
            rescale: self.rescale,
        })
    }

    /// Applies every operator to `image`, rescaling to `[0, 255]` when enabled.
    pub fn apply(&self, image: &GrayImage) -> Result<Vec<GrayImage>> {
        self.compile()?.apply(image)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BankKind {
    #[serde(rename = "multi-geneo")]
    MultiGeneo,
    #[serde(rename = "multi-dgeneo")]
    MultiDgeneo,
    #[serde(rename = "mix-geneo")]
    MixGeneo,
}

impl BankKind {
    pub const ALL: [BankKind; 3] = [
        BankKind::MultiGeneo,
        BankKind::MultiDgeneo,
        BankKind::MixGeneo,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BankKind::MultiGeneo => "multi-geneo",
            BankKind::MultiDgeneo => "multi-dgeneo",
            BankKind::MixGeneo => "mix-geneo",
        }
    }
}

impl fmt::Display for BankKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BankKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multi-geneo" | "mul-G" => Ok(BankKind::MultiGeneo),
            "multi-dgeneo" | "mul-D" => Ok(BankKind::MultiDgeneo),
            "mix-geneo" | "mix-G" => Ok(BankKind::MixGeneo),
            other => Err(Error::Invalid(format!("unknown bank kind {other:?}"))),
        }
    }
}

/// The five default kernels G₀..G₄. All use a single term with `a = τ = 1`.
pub fn default_kernels() -> [KernelSpec; 5] {
    [
        KernelSpec::new(1.0, &[(1.0, 1.0)]),
        KernelSpec::new(1.0, &[(1.0, 1.0)]),
        KernelSpec::new(2.0, &[(1.0, 1.0)]),
        KernelSpec::new(0.5, &[(1.0, 1.0)]),
        KernelSpec::new(1.5, &[(1.0, 1.0)]),
    ]
}

pub fn default_bank(kind: BankKind) -> OperatorBank {
    let [g0, g1, g2, g3, g4] = default_kernels();
    let operators = match kind {
        BankKind::MultiGeneo => vec![OperatorSpec::Geneo(g0), OperatorSpec::Identity],
        BankKind::MultiDgeneo => vec![
            OperatorSpec::DGeneo {
                first: g3,
                second: g4,
            },
            OperatorSpec::DGeneo {
                first: g1,
                second: g2,
            },
        ],
        BankKind::MixGeneo => vec![
            OperatorSpec::Geneo(g0),
            OperatorSpec::DGeneo {
                first: g3,
                second: g4,
            },
        ],
    };
    OperatorBank {
        operators,
        rescale: true,
    }
}

/// On-disk bank description: either a preset `kind` or explicit `operators`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    pub kind: Option<BankKind>,
    pub rescale: Option<bool>,
    pub operators: Option<Vec<OperatorSpec>>,
}

impl BankConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("bank config: {e}")))
    }

    pub fn resolve(&self) -> Result<OperatorBank> {
        let mut bank = match (&self.operators, self.kind) {
            (Some(ops), _) => OperatorBank {
                operators: ops.clone(),
                rescale: true,
            },
            (None, Some(kind)) => default_bank(kind),
            (None, None) => {
                return Err(Error::Invalid(
                    "bank config needs `kind` or `operators`".into(),
                ))
            }
        };
        if let Some(rescale) = self.rescale {
            bank.rescale = rescale;
        }
        bank.validate()?;
        Ok(bank)
    }
}

impl OperatorBank {
    pub fn to_toml(&self) -> String {
        let config = BankConfig {
            kind: None,
            rescale: Some(self.rescale),
            operators: Some(self.operators.clone()),
        };
        toml::to_string(&config).expect("bank config serializes")
    }
}

/// Offsets of one dihedral orbit sharing a kernel weight.
#[derive(Debug, Clone)]
struct Orbit {
    weight: f64,
    offsets: Vec<(isize, isize)>,
}

/// A normalized convolution ready to apply.
#[derive(Debug, Clone)]
pub struct Convolution {
    orbits: Vec<Orbit>,
    mass: f64,
}

impl Convolution {
    pub fn new(spec: &KernelSpec) -> Result<Self> {
        let grid = sample_kernel(spec)?;
        let mass = grid.l1_mass();
        if !(mass > 0.0) {
            return Err(Error::DegenerateKernel);
        }
        let r = grid.radius() as isize;
        let mut orbits = Vec::new();
        for dx in 0..=r {
            for dy in 0..=dx {
                let weight = grid.at(dx, dy);
                if weight == 0.0 {
                    continue;
                }
                let mut offsets = vec![
                    (dx, dy),
                    (-dx, dy),
                    (dx, -dy),
                    (-dx, -dy),
                    (dy, dx),
                    (-dy, dx),
                    (dy, -dx),
                    (-dy, -dx),
                ];
                offsets.sort_unstable();
                offsets.dedup();
                orbits.push(Orbit { weight, offsets });
            }
        }
        Ok(Self { orbits, mass })
    }

    /// Zero-padded convolution divided by the kernel's L¹ mass.
    ///
    /// Each orbit's pixel values are summed in sorted order, so the result is
    /// bitwise equivariant under the eight grid symmetries.
    pub fn apply(&self, image: &GrayImage) -> GrayImage {
        let (w, h) = (image.width() as isize, image.height() as isize);
        let src = image.values();
        let mut out = Vec::with_capacity(src.len());
        let mut buf = [0.0f64; 8];
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for orbit in &self.orbits {
                    let n = orbit.offsets.len();
                    for (slot, &(dx, dy)) in buf.iter_mut().zip(&orbit.offsets) {
                        let (x, y) = (c + dx, r + dy);
                        *slot = if x >= 0 && x < w && y >= 0 && y < h {
                            src[(y * w + x) as usize]
                        } else {
                            0.0
                        };
                    }
                    let vals = &mut buf[..n];
                    vals.sort_unstable_by(f64::total_cmp);
                    let sum: f64 = vals.iter().sum();
                    acc += orbit.weight * sum;
                }
                out.push(acc / self.mass);
            }
        }
        GrayImage::new(image.width(), image.height(), out).expect("convolution keeps shape")
    }
}

#[derive(Debug, Clone)]
pub enum CompiledOperator {
    Identity,
    Geneo(Convolution),
    DGeneo(Convolution, Convolution),
}

impl CompiledOperator {
    pub fn new(spec: &OperatorSpec) -> Result<Self> {
        Ok(match spec {
            OperatorSpec::Identity => CompiledOperator::Identity,
            OperatorSpec::Geneo(k) => CompiledOperator::Geneo(Convolution::new(k)?),
            OperatorSpec::DGeneo { first, second } => {
                CompiledOperator::DGeneo(Convolution::new(first)?, Convolution::new(second)?)
            }
        })
    }

    pub fn apply(&self, image: &GrayImage) -> GrayImage {
        match self {
            CompiledOperator::Identity => image.clone(),
            CompiledOperator::Geneo(conv) => conv.apply(image),
            CompiledOperator::DGeneo(first, second) => {
                let a = first.apply(image);
                let b = second.apply(image);
                let diff = a
                    .values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| x - y)
                    .collect();
                GrayImage::new(image.width(), image.height(), diff).expect("same shape")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledBank {
    operators: Vec<CompiledOperator>,
    rescale: bool,
}

impl CompiledBank {
    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    pub fn apply(&self, image: &GrayImage) -> Result<Vec<GrayImage>> {
        self.operators
            .iter()
            .map(|op| {
                let out = op.apply(image);
                if self.rescale {
                    rescale_image(&out, 0.0, 255.0)
                } else {
                    Ok(out)
                }
            })
            .collect()
    }
}

pub fn apply_operator(op: &OperatorSpec, image: &GrayImage) -> Result<GrayImage> {
    Ok(CompiledOperator::new(op)?.apply(image))
}

/// Affine min-max map onto `[lo, hi]`; a constant image maps to `lo`.
pub fn rescale_image(image: &GrayImage, lo: f64, hi: f64) -> Result<GrayImage> {
    if !(lo < hi) {
        return Err(Error::Invalid(format!(
            "rescale needs lo < hi, got [{lo}, {hi}]"
        )));
    }
    let (min, max) = image.min_max();
    if max == min {
        return GrayImage::constant(image.width(), image.height(), lo);
    }
    let scale = (hi - lo) / (max - min);
    image.map(|v| (lo + (v - min) * scale).clamp(lo, hi))
}
