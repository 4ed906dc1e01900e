//! Settings file and the flag > file > default resolution rules.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use mgeneo::complex::TriangleRule;
use mgeneo::geneo::{default_bank, BankConfig, BankKind, OperatorBank};
use mgeneo::ml::ComponentCount;
use mgeneo::mpl::GridSpec;
use mgeneo::vec::PersistenceImageSpec;
use serde::Deserialize;

use crate::{BankArgs, BifiltArgs, GridArgs, PiArgs};

/// Bad flags, bad configuration or missing inputs (exit status 2).
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    pub fn new(message: impl Into<String>) -> Self {
        Self(message.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError::new(message).into()
}

/// Keys accepted in the `--config` file. Every key mirrors the flag of the
/// same name.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSettings {
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub bank: Option<String>,
    pub bank_config: Option<PathBuf>,
    pub rescale: Option<bool>,
    pub rule: Option<String>,
    pub bins: Option<usize>,
    pub k_max: Option<usize>,
    pub grid_lo: Option<[f64; 2]>,
    pub grid_hi: Option<[f64; 2]>,
    pub step: Option<f64>,
    pub pi_resolution: Option<usize>,
    pub pi_sigma: Option<f64>,
    pub pi_range: Option<[f64; 2]>,
    pub trials: Option<usize>,
    pub components: Option<String>,
    pub per_class: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl FileSettings {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))
    }
}

pub fn read_input(path: &Path) -> anyhow::Result<Vec<u8>> {
    if !path.is_file() {
        return Err(usage(format!("input {} does not exist", path.display())));
    }
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

pub fn parse_flag<T>(value: &str, what: &str) -> anyhow::Result<T>
where
    T: std::str::FromStr,
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| usage(format!("bad {what} {value:?}: {e}")))
}

pub fn parse_pair(value: &str, what: &str) -> anyhow::Result<[f64; 2]> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 2 {
        return Err(usage(format!("{what} must be `x,y`, got {value:?}")));
    }
    Ok([
        parse_flag(parts[0].trim(), what)?,
        parse_flag(parts[1].trim(), what)?,
    ])
}

/// `identity` or a preset kind; `default` applies when neither flag nor
/// file names a bank.
pub fn resolve_bank(
    args: &BankArgs,
    file: &FileSettings,
    default: BankKind,
) -> anyhow::Result<OperatorBank> {
    let mut bank = if let Some(path) = args.bank_config.as_ref().or(file.bank_config.as_ref()) {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read bank config {}: {e}", path.display())))?;
        BankConfig::from_toml(&text)
            .and_then(|c| c.resolve())
            .map_err(|e| usage(format!("bank config {}: {e}", path.display())))?
    } else {
        match args.bank.as_deref().or(file.bank.as_deref()) {
            Some("identity") => OperatorBank::identity(2),
            Some(name) => default_bank(parse_flag::<BankKind>(name, "bank")?),
            None => default_bank(default),
        }
    };
    if args.no_rescale || file.rescale == Some(false) {
        bank = bank.without_rescale();
    }
    Ok(bank)
}

pub fn resolve_rule(flag: Option<&str>, file: &FileSettings) -> anyhow::Result<TriangleRule> {
    match flag.or(file.rule.as_deref()) {
        Some(r) => parse_flag(r, "triangle rule"),
        None => Ok(TriangleRule::default()),
    }
}

/// `0` means no coarsening.
pub fn resolve_bins(args: &BifiltArgs, file: &FileSettings, default: usize) -> Option<usize> {
    match args.bins.or(file.bins).unwrap_or(default) {
        0 => None,
        n => Some(n),
    }
}

pub fn resolve_grid(args: &GridArgs, file: &FileSettings) -> anyhow::Result<GridSpec> {
    let d = GridSpec::default();
    let lo = match &args.grid_lo {
        Some(s) => parse_pair(s, "grid-lo")?,
        None => file.grid_lo.unwrap_or(d.lo),
    };
    let hi = match &args.grid_hi {
        Some(s) => parse_pair(s, "grid-hi")?,
        None => file.grid_hi.unwrap_or(d.hi),
    };
    let step = args.step.or(file.step).unwrap_or(d.step);
    GridSpec::new(lo, hi, step).map_err(|e| usage(e.to_string()))
}

pub fn resolve_pi(args: &PiArgs, file: &FileSettings) -> anyhow::Result<PersistenceImageSpec> {
    let d = PersistenceImageSpec::default();
    let range = match &args.pi_range {
        Some(s) => parse_pair(s, "pi-range")?,
        None => file.pi_range.unwrap_or([d.range.0, d.range.1]),
    };
    let spec = PersistenceImageSpec {
        resolution: args
            .pi_resolution
            .or(file.pi_resolution)
            .unwrap_or(d.resolution),
        sigma: args.pi_sigma.or(file.pi_sigma).unwrap_or(d.sigma),
        range: (range[0], range[1]),
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

pub fn resolve_components(
    flag: Option<&str>,
    file: &FileSettings,
) -> anyhow::Result<ComponentCount> {
    match flag.or(file.components.as_deref()) {
        None | Some("auto") => Ok(ComponentCount::Auto),
        Some(n) => Ok(ComponentCount::Fixed(parse_flag(n, "components")?)),
    }
}
