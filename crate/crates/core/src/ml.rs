//! PCA, linear discriminant analysis and a linear SVM, plus repeated
//! stratified train/test evaluation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec::FeatureTable;

fn check_matrix(x: &[Vec<f64>]) -> Result<usize> {
    let d = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Model("no samples".into()))?;
    if d == 0 {
        return Err(Error::Model("samples have no features".into()));
    }
    if x.iter().any(|r| r.len() != d) {
        return Err(Error::Dimension("samples have differing lengths".into()));
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite feature".into()));
    }
    Ok(d)
}

fn check_dim(expected: usize, row: &[f64]) -> Result<()> {
    if row.len() != expected {
        return Err(Error::Dimension(format!(
            "sample has {} features, model expects {expected}",
            row.len()
        )));
    }
    Ok(())
}

fn column_means(x: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = x.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ComponentCount {
    Fixed(usize),
    /// Fewest components explaining 95% of the variance, at most 50.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// One unit vector per row, by decreasing explained variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
}

impl Pca {
    pub fn fit(x: &[Vec<f64>], count: ComponentCount) -> Result<Self> {
        let d = check_matrix(x)?;
        let n = x.len();
        if n < 2 {
            return Err(Error::Model("PCA needs at least two samples".into()));
        }
        let mean = column_means(x, d);
        let centred = Mat::<f64>::from_fn(n, d, |i, j| x[i][j] - mean[j]);
        let svd = centred
            .thin_svd()
            .map_err(|e| Error::Model(format!("SVD failed: {e:?}")))?;
        let s = svd.S().column_vector();
        let v = svd.V();
        let available = s.nrows();
        let variance: Vec<f64> = (0..available)
            .map(|i| s[i] * s[i] / (n - 1) as f64)
            .collect();
        let total: f64 = variance.iter().sum();
        let ratio: Vec<f64> = variance
            .iter()
            .map(|v| if total > 0.0 { v / total } else { 0.0 })
            .collect();
        let tol = variance.first().copied().unwrap_or(0.0) * 1e-24 + f64::MIN_POSITIVE;
        let rank = variance.iter().filter(|&&v| v > tol).count();
        let keep = match count {
            ComponentCount::Fixed(m) if m > rank => {
                return Err(Error::Model(format!(
                    "{m} components requested but the centred data has rank {rank}"
                )))
            }
            ComponentCount::Fixed(m) => m,
            ComponentCount::Auto if rank == 0 => 0,
            ComponentCount::Auto => {
                let mut acc = 0.0;
                let mut m = available;
                for (i, r) in ratio.iter().enumerate() {
                    acc += r;
                    if acc >= 0.95 {
                        m = i + 1;
                        break;
                    }
                }
                m.clamp(1, 50.min(rank))
            }
        };
        let components = (0..keep)
            .map(|c| {
                let mut comp: Vec<f64> = (0..d).map(|j| v[(j, c)]).collect();
                let lead = comp
                    .iter()
                    .copied()
                    .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
                if lead < 0.0 {
                    comp.iter_mut().for_each(|x| *x = -*x);
                }
                comp
            })
            .collect();
        Ok(Self {
            mean,
            components,
            explained_variance: variance[..keep].to_vec(),
            explained_variance_ratio: ratio[..keep].to_vec(),
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn transform_one(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.mean.len(), row)?;
        let centred: Vec<f64> = row.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centred)).collect())
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x.iter().map(|r| self.transform_one(r)).collect()
    }
}

fn class_index(y: &[u8]) -> Vec<u8> {
    let mut classes = y.to_vec();
    classes.sort_unstable();
    classes.dedup();
    classes
}

/// Gaussian classes with a shared covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    pub classes: Vec<u8>,
    /// `Σ⁻¹ μ_c` per class.
    pub weights: Vec<Vec<f64>>,
    /// `−½ μ_cᵀ Σ⁻¹ μ_c + ln π_c` per class.
    pub bias: Vec<f64>,
    /// Ridge added to the pooled covariance diagonal.
    pub ridge: f64,
}

impl Lda {
    pub fn fit(x: &[Vec<f64>], y: &[u8]) -> Result<Self> {
        let d = check_matrix(x)?;
        if x.len() != y.len() {
            return Err(Error::Dimension(format!(
                "{} samples, {} labels",
                x.len(),
                y.len()
            )));
        }
        let classes = class_index(y);
        if classes.len() < 2 {
            return Err(Error::Model("LDA needs at least two classes".into()));
        }
        if let Some(c) = classes
            .iter()
            .find(|&&c| y.iter().filter(|&&l| l == c).count() < 2)
        {
            return Err(Error::Model(format!("LDA needs two samples of class {c}")));
        }
        let n = x.len();
        let k = classes.len();
        let mut means = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        let slot = |label: u8| classes.binary_search(&label).expect("label indexed");
        for (row, &label) in x.iter().zip(y) {
            let c = slot(label);
            counts[c] += 1;
            for (m, v) in means[c].iter_mut().zip(row) {
                *m += v;
            }
        }
        for (m, &c) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= c as f64);
        }
        let centred = Mat::<f64>::from_fn(n, d, |i, j| x[i][j] - means[slot(y[i])][j]);
        let dof = n.saturating_sub(k).max(1) as f64;
        let mut cov = centred.transpose() * &centred;
        let mut trace = 0.0;
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] /= dof;
            }
            trace += cov[(i, i)];
        }
        let ridge = if trace > 0.0 {
            1e-6 * trace / d as f64
        } else {
            1e-6
        };
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        let rhs = Mat::<f64>::from_fn(d, k, |i, c| means[c][i]);
        let llt = cov
            .llt(Side::Lower)
            .map_err(|e| Error::Model(format!("covariance factorization failed: {e:?}")))?;
        let w = llt.solve(&rhs);
        let weights: Vec<Vec<f64>> = (0..k)
            .map(|c| (0..d).map(|i| w[(i, c)]).collect())
            .collect();
        let bias = (0..k)
            .map(|c| -0.5 * dot(&means[c], &weights[c]) + (counts[c] as f64 / n as f64).ln())
            .collect();
        Ok(Self {
            classes,
            weights,
            bias,
            ridge,
        })
    }

    pub fn scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.weights[0].len(), row)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| dot(w, row) + b)
            .collect())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<u8>> {
        x.iter()
            .map(|r| Ok(self.classes[argmax(&self.scores(r)?)]))
            .collect()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmParams {
    /// Regularization strength.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 60,
            seed: 0,
        }
    }
}

/// One-vs-rest hinge-loss classifier trained by stochastic subgradient
/// steps of size `1/(λt)` on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub classes: Vec<u8>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    /// Per class, feature weights followed by the intercept.
    pub weights: Vec<Vec<f64>>,
}

impl LinearSvm {
    pub fn fit(x: &[Vec<f64>], y: &[u8], params: &SvmParams) -> Result<Self> {
        let d = check_matrix(x)?;
        if x.len() != y.len() {
            return Err(Error::Dimension(format!(
                "{} samples, {} labels",
                x.len(),
                y.len()
            )));
        }
        if !(params.lambda > 0.0) || params.epochs == 0 {
            return Err(Error::Model(
                "SVM needs lambda > 0 and at least one epoch".into(),
            ));
        }
        let classes = class_index(y);
        if classes.len() < 2 {
            return Err(Error::Model("SVM needs at least two classes".into()));
        }
        let mean = column_means(x, d);
        let n = x.len() as f64;
        let scale: Vec<f64> = (0..d)
            .map(|j| {
                let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 1e-24 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| {
                let mut v: Vec<f64> = (0..d).map(|j| (r[j] - mean[j]) / scale[j]).collect();
                v.push(1.0);
                v
            })
            .collect();
        let weights = classes
            .iter()
            .enumerate()
            .map(|(c, &label)| {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    params.seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                );
                let targets: Vec<f64> = y
                    .iter()
                    .map(|&l| if l == label { 1.0 } else { -1.0 })
                    .collect();
                pegasos(&z, &targets, params, &mut rng)
            })
            .collect();
        Ok(Self {
            classes,
            mean,
            scale,
            weights,
        })
    }

    pub fn scores(&self, row: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.mean.len(), row)?;
        let d = row.len();
        Ok(self
            .weights
            .iter()
            .map(|w| {
                (0..d)
                    .map(|j| w[j] * (row[j] - self.mean[j]) / self.scale[j])
                    .sum::<f64>()
                    + w[d]
            })
            .collect())
    }

    pub fn predict(&self, x: &[Vec<f64>]) -> Result<Vec<u8>> {
        x.iter()
            .map(|r| Ok(self.classes[argmax(&self.scores(r)?)]))
            .collect()
    }
}

/// Returns the iterate averaged over the final epoch.
fn pegasos(z: &[Vec<f64>], t: &[f64], params: &SvmParams, rng: &mut impl Rng) -> Vec<f64> {
    let dim = z[0].len();
    let mut w = vec![0.0; dim];
    let mut avg = vec![0.0; dim];
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut step = 0usize;
    for epoch in 0..params.epochs {
        order.shuffle(rng);
        for &i in &order {
            step += 1;
            let eta = 1.0 / (params.lambda * step as f64);
            let margin = t[i] * dot(&w, &z[i]);
            let shrink = 1.0 - eta * params.lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for (wj, zj) in w.iter_mut().zip(&z[i]) {
                    *wj += eta * t[i] * zj;
                }
            }
            if epoch + 1 == params.epochs {
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += v;
                }
            }
        }
    }
    let m = z.len() as f64;
    avg.iter_mut().for_each(|a| *a /= m);
    avg
}

/// Classifier pipelines: `L` is LDA on raw features, `PL` PCA then LDA,
/// `PS` PCA then the linear SVM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    L,
    PL,
    PS,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::L, Method::PL, Method::PS];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::L => "L",
            Method::PL => "PL",
            Method::PS => "PS",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L" | "LDA" => Ok(Method::L),
            "PL" | "PCA-LDA" => Ok(Method::PL),
            "PS" | "PCA-SVM" => Ok(Method::PS),
            _ => Err(Error::Invalid(format!(
                "unknown method {s:?} (expected L, PL or PS)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrialConfig {
    pub trials: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub components: ComponentCount,
    pub svm: SvmParams,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            trials: 20,
            train_fraction: 0.8,
            seed: 0,
            components: ComponentCount::Auto,
            svm: SvmParams::default(),
        }
    }
}

/// Seed of trial `trial` derived from a base seed.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-class shuffle, the first `round(fraction·n_c)` of each class to train
/// (at least one sample on each side when the class has two or more).
pub fn stratified_split(
    labels: &[u8],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "train fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for members in by_class.values_mut() {
        members.shuffle(&mut rng);
        let n = members.len();
        let mut cut = (fraction * n as f64).round() as usize;
        if n >= 2 {
            cut = cut.clamp(1, n - 1);
        }
        train.extend_from_slice(&members[..cut]);
        test.extend_from_slice(&members[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

fn gather<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

pub fn accuracy(predicted: &[u8], truth: &[u8]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Fits `method` on the training rows and returns test accuracy.
pub fn evaluate(
    method: Method,
    train_x: &[Vec<f64>],
    train_y: &[u8],
    test_x: &[Vec<f64>],
    test_y: &[u8],
    config: &TrialConfig,
) -> Result<f64> {
    let pred = match method {
        Method::L => Lda::fit(train_x, train_y)?.predict(test_x)?,
        Method::PL | Method::PS => {
            let pca = Pca::fit(train_x, config.components)?;
            let (tr, te) = (pca.transform(train_x)?, pca.transform(test_x)?);
            if method == Method::PL {
                Lda::fit(&tr, train_y)?.predict(&te)?
            } else {
                LinearSvm::fit(&tr, train_y, &config.svm)?.predict(&te)?
            }
        }
    };
    Ok(accuracy(&pred, test_y))
}

/// Sample indices sorted by label, then by feature values, so that splits
/// do not depend on the order rows were supplied in.
fn canonical_order(table: &FeatureTable) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..table.len()).collect();
    idx.sort_by(|&a, &b| {
        table.labels[a].cmp(&table.labels[b]).then_with(|| {
            table.rows[a]
                .iter()
                .zip(&table.rows[b])
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    idx
}

/// Test accuracy of each trial.
pub fn run_trials(table: &FeatureTable, method: Method, config: &TrialConfig) -> Result<Vec<f64>> {
    if table.is_empty() {
        return Err(Error::Model("empty feature table".into()));
    }
    if config.trials == 0 {
        return Err(Error::Invalid("at least one trial is required".into()));
    }
    let order = canonical_order(table);
    let rows = gather(&table.rows, &order);
    let labels = gather(&table.labels, &order);
    (0..config.trials)
        .map(|trial| {
            let seed = trial_seed(config.seed, trial);
            let (train, test) = stratified_split(&labels, config.train_fraction, seed)?;
            let svm = SvmParams { seed, ..config.svm };
            evaluate(
                method,
                &gather(&rows, &train),
                &gather(&labels, &train),
                &gather(&rows, &test),
                &gather(&labels, &test),
                &TrialConfig { svm, ..*config },
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub task: String,
    pub filtration: String,
    pub homology: String,
    pub method: Method,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub trials: usize,
    pub accuracies: Vec<f64>,
}

impl TrialReport {
    pub fn new(
        task: &str,
        filtration: &str,
        homology: &str,
        method: Method,
        accuracies: Vec<f64>,
    ) -> Self {
        let n = accuracies.len().max(1) as f64;
        let mean = accuracies.iter().sum::<f64>() / n;
        let var = accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        Self {
            task: task.to_string(),
            filtration: filtration.to_string(),
            homology: homology.to_string(),
            method,
            mean_accuracy: mean,
            std_accuracy: var.sqrt(),
            trials: accuracies.len(),
            accuracies,
        }
    }
}
