//! End-to-end feature extraction, the content-addressed feature cache,
//! classification experiments and the stability harness.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::complex::{
    bifiltration_from_channels, coarsen_bifiltration, lower_star_filtration, upper_star_filtration,
    Bifiltration, TriangleRule,
};
use crate::error::{Error, Result};
use crate::geneo::{default_bank, BankKind, CompiledBank, OperatorBank};
use crate::img::{load_idx_images, load_idx_labels, sup_distance, GrayImage};
use crate::ml::{run_trials, Method, TrialConfig, TrialReport};
use crate::mpl::{landscape_distance, landscapes, GridSpec, Landscape};
use crate::ph::{compute_persistence, swap_for_upper_star, PersistenceDiagram};
use crate::vec::{landscape_vector, persistence_image, FeatureTable, PersistenceImageSpec};

/// Environment variable naming a directory of MNIST IDX files.
pub const MNIST_ENV: &str = "MNIST_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FiltrationKind {
    #[serde(rename = "lower")]
    Lower,
    #[serde(rename = "upper")]
    Upper,
    #[serde(rename = "mul-G")]
    MulG,
    #[serde(rename = "mul-D")]
    MulD,
    #[serde(rename = "mix-G")]
    MixG,
}

impl FiltrationKind {
    pub const ALL: [FiltrationKind; 5] = [
        FiltrationKind::Lower,
        FiltrationKind::Upper,
        FiltrationKind::MulG,
        FiltrationKind::MulD,
        FiltrationKind::MixG,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FiltrationKind::Lower => "lower",
            FiltrationKind::Upper => "upper",
            FiltrationKind::MulG => "mul-G",
            FiltrationKind::MulD => "mul-D",
            FiltrationKind::MixG => "mix-G",
        }
    }

    /// Operator bank of the two-parameter kinds.
    pub fn bank_kind(self) -> Option<BankKind> {
        match self {
            FiltrationKind::Lower | FiltrationKind::Upper => None,
            FiltrationKind::MulG => Some(BankKind::MultiGeneo),
            FiltrationKind::MulD => Some(BankKind::MultiDgeneo),
            FiltrationKind::MixG => Some(BankKind::MixGeneo),
        }
    }
}

impl fmt::Display for FiltrationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FiltrationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" | "lower-star" => Ok(FiltrationKind::Lower),
            "upper" | "upper-star" => Ok(FiltrationKind::Upper),
            "mul-G" | "multi-geneo" => Ok(FiltrationKind::MulG),
            "mul-D" | "multi-dgeneo" => Ok(FiltrationKind::MulD),
            "mix-G" | "mix-geneo" => Ok(FiltrationKind::MixG),
            other => Err(Error::Invalid(format!(
                "unknown filtration {other:?} (expected lower, upper, mul-G, mul-D or mix-G)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Homology {
    H0,
    H1,
    #[serde(rename = "H0+H1")]
    Both,
}

impl Homology {
    pub const ALL: [Homology; 3] = [Homology::H0, Homology::H1, Homology::Both];

    pub fn as_str(self) -> &'static str {
        match self {
            Homology::H0 => "H0",
            Homology::H1 => "H1",
            Homology::Both => "H0+H1",
        }
    }

    pub fn dims(self) -> &'static [usize] {
        match self {
            Homology::H0 => &[0],
            Homology::H1 => &[1],
            Homology::Both => &[0, 1],
        }
    }
}

impl fmt::Display for Homology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Homology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H0" | "0" => Ok(Homology::H0),
            "H1" | "1" => Ok(Homology::H1),
            "H0+H1" | "H01" | "both" => Ok(Homology::Both),
            other => Err(Error::Invalid(format!("unknown homology {other:?}"))),
        }
    }
}

/// How one image becomes a feature vector.
///
/// One-parameter kinds are summarized by persistence images, two-parameter
/// kinds by flattened landscapes. Features are laid out per homology
/// dimension in `homology.dims()` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub filtration: FiltrationKind,
    pub homology: Homology,
    pub k_max: usize,
    pub grid: GridSpec,
    /// Grade coarsening before slicing; `None` keeps exact grades.
    pub bins: Option<usize>,
    pub rule: TriangleRule,
    /// Overrides the default bank of the filtration kind.
    pub bank: Option<OperatorBank>,
    pub image: PersistenceImageSpec,
}

impl FeatureConfig {
    pub fn new(filtration: FiltrationKind, homology: Homology) -> Self {
        Self {
            filtration,
            homology,
            k_max: 1,
            grid: GridSpec::default(),
            bins: Some(10),
            rule: TriangleRule::default(),
            bank: None,
            image: PersistenceImageSpec::default(),
        }
    }

    pub fn resolved_bank(&self) -> Result<Option<OperatorBank>> {
        match (self.filtration.bank_kind(), &self.bank) {
            (None, _) => Ok(None),
            (Some(_), Some(bank)) => {
                bank.validate()?;
                Ok(Some(bank.clone()))
            }
            (Some(kind), None) => Ok(Some(default_bank(kind))),
        }
    }

    /// Features per homology dimension.
    pub fn block_len(&self) -> usize {
        match self.filtration.bank_kind() {
            Some(_) => self.k_max * self.grid.len(),
            None => self.image.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.block_len() * self.homology.dims().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reusable per-run state for [`image_features`].
pub struct FeatureExtractor {
    config: FeatureConfig,
    bank: Option<CompiledBank>,
}

impl FeatureExtractor {
    pub fn new(config: &FeatureConfig) -> Result<Self> {
        config.grid.validate()?;
        config.image.validate()?;
        let bank = match config.resolved_bank()? {
            Some(bank) => {
                if bank.operators.len() != 2 {
                    return Err(Error::Invalid(format!(
                        "two-parameter filtrations need a 2-operator bank, got {}",
                        bank.operators.len()
                    )));
                }
                Some(bank.compile()?)
            }
            None => None,
        };
        Ok(Self {
            config: config.clone(),
            bank,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn bifiltration(&self, image: &GrayImage) -> Result<Bifiltration> {
        let bank = self.bank.as_ref().ok_or_else(|| {
            Error::Invalid("one-parameter filtrations have no bifiltration".into())
        })?;
        let channels = bank.apply(image)?;
        let b = bifiltration_from_channels(&channels[0], &channels[1], self.config.rule)?;
        match self.config.bins {
            Some(bins) => coarsen_bifiltration(&b, bins),
            None => Ok(b),
        }
    }

    /// Diagram of a one-parameter kind; upper-star diagrams are returned in
    /// swapped (original intensity) coordinates.
    pub fn diagram(&self, image: &GrayImage) -> Result<PersistenceDiagram> {
        match self.config.filtration {
            FiltrationKind::Lower => Ok(compute_persistence(&lower_star_filtration(image)?)),
            FiltrationKind::Upper => {
                let d = compute_persistence(&upper_star_filtration(image)?);
                Ok(swap_for_upper_star(&d, 0.0))
            }
            _ => Err(Error::Invalid(
                "two-parameter filtrations have no single diagram".into(),
            )),
        }
    }

    pub fn landscapes(&self, image: &GrayImage) -> Result<Vec<Landscape>> {
        let b = self.bifiltration(image)?;
        landscapes(
            &b,
            self.config.homology.dims(),
            self.config.k_max,
            &self.config.grid,
        )
    }

    pub fn features(&self, image: &GrayImage) -> Result<Vec<f64>> {
        if self.bank.is_some() {
            return Ok(landscape_vector(&self.landscapes(image)?));
        }
        let d = self.diagram(image)?;
        let mut out = Vec::with_capacity(self.config.len());
        for &dim in self.config.homology.dims() {
            out.extend(persistence_image(d.of_dim(dim), &self.config.image)?);
        }
        Ok(out)
    }
}

pub fn image_features(image: &GrayImage, config: &FeatureConfig) -> Result<Vec<f64>> {
    FeatureExtractor::new(config)?.features(image)
}

const CACHE_MAGIC: &[u8; 8] = b"MGFEAT01";
/// Images per cache entry; an interrupted run resumes at this granularity.
pub const CACHE_CHUNK: usize = 500;

/// Feature matrices on disk, addressed by a hash of the configuration and
/// the input pixels, each guarded by a checksum of its payload.
#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(config: &FeatureConfig, images: &[GrayImage]) -> String {
        let mut h = Sha256::new();
        h.update(CACHE_MAGIC);
        h.update(serde_json::to_vec(config).expect("config serializes"));
        for img in images {
            h.update((img.width() as u64).to_le_bytes());
            h.update((img.height() as u64).to_le_bytes());
            h.update(img.to_le_bytes());
        }
        hex(&h.finalize())
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.bin"))
    }

    /// `Ok(None)` on a miss; a present but damaged entry is an error.
    pub fn load(&self, key: &str) -> Result<Option<Vec<Vec<f64>>>> {
        let path = self.path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let corrupt = |why: &str| Error::CacheCorrupt(format!("{}: {why}", path.display()));
        if bytes.len() < 8 + 32 + 16 || &bytes[..8] != CACHE_MAGIC {
            return Err(corrupt("bad header"));
        }
        let body = &bytes[40..];
        if Sha256::digest(body)[..] != bytes[8..40] {
            return Err(corrupt("checksum mismatch"));
        }
        let n = u64::from_le_bytes(body[..8].try_into().unwrap()) as usize;
        let d = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
        let values = &body[16..];
        if n.checked_mul(d).and_then(|c| c.checked_mul(8)) != Some(values.len()) {
            return Err(corrupt("length mismatch"));
        }
        let flat: Vec<f64> = values
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Some(if d == 0 {
            vec![Vec::new(); n]
        } else {
            flat.chunks(d).map(<[f64]>::to_vec).collect()
        }))
    }

    pub fn store(&self, key: &str, rows: &[Vec<f64>]) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let d = rows.first().map_or(0, Vec::len);
        let mut body = Vec::with_capacity(16 + rows.len() * d * 8);
        body.extend_from_slice(&(rows.len() as u64).to_le_bytes());
        body.extend_from_slice(&(d as u64).to_le_bytes());
        for v in rows.iter().flatten() {
            body.extend_from_slice(&v.to_le_bytes());
        }
        let tmp = self.dir.join(format!("{key}.tmp"));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(CACHE_MAGIC)?;
            f.write_all(&Sha256::digest(&body))?;
            f.write_all(&body)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, self.path(key))?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Features for every image, in input order, consulting `cache` chunk by
/// chunk.
pub fn extract_features(
    images: &[GrayImage],
    config: &FeatureConfig,
    cache: Option<&FeatureCache>,
) -> Result<Vec<Vec<f64>>> {
    let extractor = FeatureExtractor::new(config)?;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(CACHE_CHUNK) {
        let key = cache.map(|_| FeatureCache::key(config, chunk));
        if let (Some(c), Some(k)) = (cache, &key) {
            if let Some(rows) = c.load(k)? {
                if rows.len() == chunk.len() {
                    out.extend(rows);
                    continue;
                }
                return Err(Error::CacheCorrupt(format!("{k}: row count mismatch")));
            }
        }
        let rows = chunk
            .par_iter()
            .map(|img| extractor.features(img))
            .collect::<Result<Vec<_>>>()?;
        if let (Some(c), Some(k)) = (cache, &key) {
            c.store(k, &rows)?;
        }
        out.extend(rows);
    }
    Ok(out)
}

/// Columns of `homology` from rows extracted with `Homology::Both`.
pub fn select_homology(rows: &[Vec<f64>], block_len: usize, homology: Homology) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|r| match homology {
            Homology::H0 => r[..block_len].to_vec(),
            Homology::H1 => r[block_len..2 * block_len].to_vec(),
            Homology::Both => r.clone(),
        })
        .collect()
}

/// Images and labels in file order.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
}

fn read_idx(dir: &Path, stem: &str) -> Result<Vec<u8>> {
    for name in [format!("{stem}.gz"), stem.to_string()] {
        let p = dir.join(&name);
        if p.exists() {
            return Ok(fs::read(p)?);
        }
    }
    Err(Error::Dataset(format!(
        "{stem}[.gz] not found in {}",
        dir.display()
    )))
}

impl Dataset {
    /// Loads `<split>-images-idx3-ubyte[.gz]` and `<split>-labels-idx1-ubyte[.gz]`.
    pub fn load(dir: &Path, split: &str) -> Result<Self> {
        let images = load_idx_images(&read_idx(dir, &format!("{split}-images-idx3-ubyte"))?)?;
        let labels = load_idx_labels(&read_idx(dir, &format!("{split}-labels-idx1-ubyte"))?)?;
        if images.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// The first `per_class` samples of each class in order of appearance;
    /// `None` keeps every sample of the listed classes.
    pub fn select(&self, classes: &[u8], per_class: Option<usize>) -> Result<Dataset> {
        let mut taken = [0usize; 256];
        let mut out = Dataset::default();
        for (img, &l) in self.images.iter().zip(&self.labels) {
            if !classes.contains(&l) || per_class.is_some_and(|n| taken[l as usize] >= n) {
                continue;
            }
            taken[l as usize] += 1;
            out.images.push(img.clone());
            out.labels.push(l);
        }
        if let Some(n) = per_class {
            if let Some(&c) = classes.iter().find(|&&c| taken[c as usize] < n) {
                return Err(Error::Dataset(format!(
                    "class {c} has {} samples, {n} requested",
                    taken[c as usize]
                )));
            }
        }
        Ok(out)
    }
}

/// Directory holding the bundled first-500-per-class training subset.
pub fn bundled_data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-first500")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    Pair(u8, u8),
    Ten,
}

impl Task {
    pub fn classes(&self) -> Vec<u8> {
        match *self {
            Task::Pair(a, b) => vec![a, b],
            Task::Ten => (0..10).collect(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Pair(a, b) => write!(f, "{a}vs{b}"),
            Task::Ten => f.write_str("ten"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "ten" {
            return Ok(Task::Ten);
        }
        let bad = || Error::Invalid(format!("unknown task {s:?} (expected e.g. 6vs9 or ten)"));
        let (a, b) = s.split_once("vs").ok_or_else(bad)?;
        let (a, b): (u8, u8) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
        if a > 9 || b > 9 || a == b {
            return Err(bad());
        }
        Ok(Task::Pair(a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scale {
    /// Repeated stratified splits of the first `per_class` training samples.
    #[serde(rename = "sample500")]
    Sample500,
    /// One fit on the full training split, scored on the full test split.
    #[serde(rename = "full")]
    Full,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample500" | "small" => Ok(Scale::Sample500),
            "full" => Ok(Scale::Full),
            other => Err(Error::Invalid(format!("unknown scale {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub scale: Scale,
    pub per_class: usize,
    pub features: FeatureConfig,
    pub homologies: Vec<Homology>,
    pub methods: Vec<Method>,
    pub trials: TrialConfig,
}

impl ExperimentConfig {
    pub fn new(task: Task, filtration: FiltrationKind) -> Self {
        Self {
            task,
            scale: Scale::Sample500,
            per_class: 500,
            features: FeatureConfig::new(filtration, Homology::Both),
            homologies: Homology::ALL.to_vec(),
            methods: Method::ALL.to_vec(),
            trials: TrialConfig::default(),
        }
    }
}

/// One report per (homology, method) cell, homology major.
pub fn run_experiment(
    config: &ExperimentConfig,
    data_dir: &Path,
    cache: Option<&FeatureCache>,
) -> Result<Vec<TrialReport>> {
    let classes = config.task.classes();
    let features = FeatureConfig {
        homology: Homology::Both,
        ..config.features.clone()
    };
    let block = features.block_len();
    let filtration = features.filtration.as_str();
    let task = config.task.to_string();
    let mut reports = Vec::new();
    match config.scale {
        Scale::Sample500 => {
            let data =
                Dataset::load(data_dir, "train")?.select(&classes, Some(config.per_class))?;
            let rows = extract_features(&data.images, &features, cache)?;
            for &h in &config.homologies {
                let table =
                    FeatureTable::new(data.labels.clone(), select_homology(&rows, block, h))?;
                for &m in &config.methods {
                    let acc = run_trials(&table, m, &config.trials)?;
                    reports.push(TrialReport::new(&task, filtration, h.as_str(), m, acc));
                }
            }
        }
        Scale::Full => {
            let train = Dataset::load(data_dir, "train")?.select(&classes, None)?;
            let test = Dataset::load(data_dir, "t10k")?.select(&classes, None)?;
            let train_rows = extract_features(&train.images, &features, cache)?;
            let test_rows = extract_features(&test.images, &features, cache)?;
            for &h in &config.homologies {
                let (tr, te) = (
                    select_homology(&train_rows, block, h),
                    select_homology(&test_rows, block, h),
                );
                for &m in &config.methods {
                    let acc = crate::ml::evaluate(
                        m,
                        &tr,
                        &train.labels,
                        &te,
                        &test.labels,
                        &config.trials,
                    )?;
                    reports.push(TrialReport::new(
                        &task,
                        filtration,
                        h.as_str(),
                        m,
                        vec![acc],
                    ));
                }
            }
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub input_distance: f64,
    pub landscape_distance: f64,
    /// `lipschitz · input_distance + step`.
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub lipschitz: f64,
    pub step: f64,
    pub records: Vec<StabilityRecord>,
    pub violations: usize,
    pub min_slack: f64,
}

impl StabilityReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// `d_λ^∞` over H₀ and H₁ against the bank's sup-norm bound for each pair.
/// Grades are not coarsened.
pub fn stability_check(
    bank: &OperatorBank,
    pairs: &[(GrayImage, GrayImage)],
    grid: &GridSpec,
    rule: TriangleRule,
) -> Result<StabilityReport> {
    if bank.rescale {
        return Err(Error::Invalid(
            "stability bounds need a bank with rescale off".into(),
        ));
    }
    if bank.operators.len() != 2 {
        return Err(Error::Invalid(
            "stability check needs a 2-operator bank".into(),
        ));
    }
    let lipschitz = bank.lipschitz_bound();
    let compiled = bank.compile()?;
    let lands = |img: &GrayImage| -> Result<Vec<Landscape>> {
        let ch = compiled.apply(img)?;
        let b = bifiltration_from_channels(&ch[0], &ch[1], rule)?;
        landscapes(&b, &[0, 1], 1, grid)
    };
    let records = pairs
        .par_iter()
        .map(|(a, b)| {
            let input_distance = sup_distance(a, b)?;
            let (la, lb) = (lands(a)?, lands(b)?);
            let mut d: f64 = 0.0;
            for (x, y) in la.iter().zip(&lb) {
                d = d.max(landscape_distance(x, y, f64::INFINITY)?);
            }
            let bound = lipschitz * input_distance + grid.step;
            Ok(StabilityRecord {
                input_distance,
                landscape_distance: d,
                bound,
                slack: bound - d,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let violations = records.iter().filter(|r| r.slack < 0.0).count();
    let min_slack = records
        .iter()
        .map(|r| r.slack)
        .fold(f64::INFINITY, f64::min);
    Ok(StabilityReport {
        lipschitz,
        step: grid.step,
        records,
        violations,
        min_slack,
    })
}

/// Random `size × size` pairs with values in `[0, 255]`: even-indexed pairs
/// are independent, odd-indexed pairs differ by noise of at most 20.
pub fn random_image_pairs(n: usize, size: usize, seed: u64) -> Result<Vec<(GrayImage, GrayImage)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = |rng: &mut ChaCha8Rng| -> Result<GrayImage> {
        GrayImage::new(
            size,
            size,
            (0..size * size)
                .map(|_| rng.gen_range(0.0..=255.0))
                .collect(),
        )
    };
    (0..n)
        .map(|i| {
            let a = random(&mut rng)?;
            let b = if i % 2 == 0 {
                random(&mut rng)?
            } else {
                let values = a
                    .values()
                    .iter()
                    .map(|v| (v + rng.gen_range(-20.0..=20.0)).clamp(0.0, 255.0))
                    .collect();
                GrayImage::new(size, size, values)?
            };
            Ok((a, b))
        })
        .collect()
}
