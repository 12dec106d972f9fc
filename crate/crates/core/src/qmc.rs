//! Quasi-Monte Carlo evaluation of `∫_Θ |J(θ)|^{1/2} dθ` and the cache of
//! its logarithm.
//!
//! Points are processed in fixed blocks of consecutive Sobol' indices. Each
//! block is regenerated independently with [`SobolGenerator::seek`] and the
//! block sums are merged in block order, so results do not depend on the
//! number of worker threads.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{sqrt_det_fim, SqrtDet};
use crate::model::{RootConfig, RootModel};
use crate::sobol::{DirectionSet, SobolGenerator, MAX_DIM};

/// Points per independently generated block.
const BLOCK: u64 = 1 << 14;

/// Estimates with a larger skipped fraction are flagged.
pub const MAX_SKIPPED_FRACTION: f64 = 0.01;

/// Product of the interval lengths of the mapped domain: 2 per real root,
/// `1 · π` per magnitude/phase pair.
pub fn domain_volume(config: RootConfig) -> f64 {
    let pairs = (config.pole_pairs() + config.zero_pairs()) as i32;
    2f64.powi((config.n1 + config.m1) as i32) * PI.powi(pairs)
}

/// Maps a unit-cube point to root parameters: real roots affinely onto
/// `(-1, 1)`, magnitudes onto `(0, 1)`, phases onto `(0, π)`; sigma2 is 1.
/// Points producing inadmissible roots (zero magnitude, repeats,
/// cancellations) are an error.
pub fn map_to_domain(point: &[f64], config: RootConfig) -> Result<RootModel> {
    if point.len() != config.dim() {
        return Err(Error::InvalidInput(format!(
            "point has dimension {}, expected {}",
            point.len(),
            config.dim()
        )));
    }
    let mut theta = Vec::with_capacity(point.len());
    let mut i = 0;
    for (reals, pairs) in [(config.n1, config.pole_pairs()), (config.m1, config.zero_pairs())] {
        for _ in 0..reals {
            theta.push(2.0 * point[i] - 1.0);
            i += 1;
        }
        for _ in 0..pairs {
            theta.push(point[i]);
            theta.push(PI * point[i + 1]);
            i += 2;
        }
    }
    RootModel::from_theta(config, &theta, 1.0)
}

/// Integrand at one unit-cube point, volume factor excluded.
fn integrand(point: &[f64], config: RootConfig) -> Option<f64> {
    let model = map_to_domain(point, config).ok()?;
    match sqrt_det_fim(&model) {
        SqrtDet::Finite(v) => Some(v),
        SqrtDet::Overflow | SqrtDet::Invalid => None,
    }
}

/// Result of one QMC integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralEstimate {
    pub config: RootConfig,
    /// Volume-scaled mean of the integrand over valid points.
    pub value: f64,
    /// Requested number of points `M`.
    pub points: u64,
    /// Points excluded because the integrand was not evaluable there.
    pub skipped: u64,
    /// Volume-scaled mean of the squared integrand, for error tracking.
    pub second_moment: f64,
    pub generator: DirectionSet,
}

impl IntegralEstimate {
    pub fn skipped_fraction(&self) -> f64 {
        self.skipped as f64 / self.points as f64
    }

    /// Too many points skipped for the estimate to be trusted.
    pub fn flagged(&self) -> bool {
        self.skipped_fraction() >= MAX_SKIPPED_FRACTION
    }

    pub fn ln_value(&self) -> f64 {
        self.value.ln()
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct BlockSum {
    sum: f64,
    sum_sq: f64,
    skipped: u64,
}

fn block_sum(config: RootConfig, set: DirectionSet, start: u64, end: u64) -> BlockSum {
    let mut gen = SobolGenerator::with_set(config.dim(), set).expect("dimension checked by caller");
    gen.seek(start);
    let mut point = vec![0.0; config.dim()];
    let mut acc = BlockSum::default();
    for _ in start..end {
        gen.next_into(&mut point);
        match integrand(&point, config) {
            Some(v) => {
                acc.sum += v;
                acc.sum_sq += v * v;
            }
            None => acc.skipped += 1,
        }
    }
    acc
}

/// Plain QMC average of `|J|^{1/2}` over the first `points` Sobol' points
/// (origin excluded), scaled by the domain volume. Uses the current rayon
/// pool; the result is bit-identical for any pool size.
pub fn integrate_sqrt_fim(config: RootConfig, points: u64) -> Result<IntegralEstimate> {
    integrate_sqrt_fim_with(config, points, DirectionSet::default())
}

/// [`integrate_sqrt_fim`] with an explicit direction-number set.
pub fn integrate_sqrt_fim_with(config: RootConfig, points: u64, set: DirectionSet) -> Result<IntegralEstimate> {
    let dim = config.dim();
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Config(format!("integration dimension {dim} outside 1..={MAX_DIM}")));
    }
    if points < 1000 {
        return Err(Error::InvalidInput(format!("at least 1000 points required, got {points}")));
    }
    let blocks = points.div_ceil(BLOCK);
    let partial: Vec<BlockSum> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = 1 + b * BLOCK;
            let end = (start + BLOCK).min(points + 1);
            block_sum(config, set, start, end)
        })
        .collect();
    let total = partial.iter().fold(BlockSum::default(), |acc, b| BlockSum {
        sum: acc.sum + b.sum,
        sum_sq: acc.sum_sq + b.sum_sq,
        skipped: acc.skipped + b.skipped,
    });
    let valid = points - total.skipped;
    if valid == 0 {
        return Err(Error::Numeric("no evaluable integration points".into()));
    }
    let volume = domain_volume(config);
    Ok(IntegralEstimate {
        config,
        value: volume * total.sum / valid as f64,
        points,
        skipped: total.skipped,
        second_moment: volume * volume * total.sum_sq / valid as f64,
        generator: set,
    })
}

/// Sum of the integrals over every root-type configuration of `(n, m)`,
/// i.e. over the whole admissible region.
pub fn integrate_all_configs(n: usize, m: usize, points: u64) -> Result<f64> {
    RootConfig::all_for(n, m)
        .into_iter()
        .map(|cfg| integrate_sqrt_fim(cfg, points).map(|e| e.value))
        .sum()
}

/// `|Î_large - Î_small| / Î_large`.
pub fn convergence_delta(small: &IntegralEstimate, large: &IntegralEstimate) -> Result<f64> {
    if small.config != large.config {
        return Err(Error::InvalidInput("estimates for different configurations".into()));
    }
    if large.points <= small.points {
        return Err(Error::InvalidInput("second estimate must use more points".into()));
    }
    if large.value == 0.0 {
        return Err(Error::Numeric("zero reference integral".into()));
    }
    Ok((large.value - small.value).abs() / large.value)
}

/// One cached integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub n: usize,
    pub m: usize,
    pub n1: usize,
    pub m1: usize,
    #[serde(rename = "M")]
    pub points: u64,
    pub ln_integral: f64,
    pub generator_version: String,
    /// Unix time of the computation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub computed_at: Option<u64>,
}

impl TableEntry {
    pub fn config(&self) -> RootConfig {
        RootConfig {
            n: self.n,
            m: self.m,
            n1: self.n1,
            m1: self.m1,
        }
    }
}

/// How a requested integral was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupSource {
    Direct,
    /// Taken from the pure-AR configuration with the same determinant.
    ArEquivalent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralLookup {
    pub ln_integral: f64,
    pub points: u64,
    pub source: LookupSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Computed,
}

/// Cached values of `ln ∫ |J|^{1/2} dθ`, persisted as a JSON array.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntegralTable {
    entries: BTreeMap<RootConfig, TableEntry>,
}

const BUNDLED: &str = include_str!("../data/integrals.json");

impl IntegralTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// The table shipped with the crate (`M = 10^7` for every default
    /// configuration up to `n + m = 6`).
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled integral table is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let list: Vec<TableEntry> = serde_json::from_str(text)?;
        let mut table = Self::new();
        for e in list {
            if !e.ln_integral.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite cached value for {:?}", e.config())));
            }
            if table.entries.insert(e.config(), e.clone()).is_some() {
                return Err(Error::InvalidInput(format!("duplicate cache key {:?}", e.config())));
            }
        }
        Ok(table)
    }

    pub fn to_json(&self) -> String {
        let list: Vec<&TableEntry> = self.entries.values().collect();
        serde_json::to_string_pretty(&list).expect("table serializes") + "\n"
    }

    /// Reads a cache file; a missing file is an I/O error.
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Reads a cache file, starting empty when it does not exist.
    pub fn load_or_empty(path: &Path) -> Result<Self> {
        match fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, self.to_json())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &TableEntry> {
        self.entries.values()
    }

    pub fn get(&self, config: RootConfig) -> Option<&TableEntry> {
        self.entries.get(&config)
    }

    pub fn insert(&mut self, estimate: &IntegralEstimate) {
        let c = estimate.config;
        let computed_at = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
        self.entries.insert(
            c,
            TableEntry {
                n: c.n,
                m: c.m,
                n1: c.n1,
                m1: c.m1,
                points: estimate.points,
                ln_integral: estimate.ln_value(),
                generator_version: estimate.generator.version().to_string(),
                computed_at,
            },
        );
    }

    /// Cached value for `config`, falling back to its pure-AR equivalent.
    pub fn lookup(&self, config: RootConfig) -> Option<IntegralLookup> {
        if let Some(e) = self.entries.get(&config) {
            return Some(IntegralLookup {
                ln_integral: e.ln_integral,
                points: e.points,
                source: LookupSource::Direct,
            });
        }
        self.entries.get(&config.ar_equivalent()).map(|e| IntegralLookup {
            ln_integral: e.ln_integral,
            points: e.points,
            source: LookupSource::ArEquivalent,
        })
    }

    /// Like [`IntegralTable::lookup`] but a miss is an error.
    pub fn require(&self, config: RootConfig) -> Result<IntegralLookup> {
        self.lookup(config).ok_or(Error::MissingIntegral {
            n: config.n,
            m: config.m,
            n1: config.n1,
            m1: config.m1,
        })
    }
}

/// Returns the cached `ln` integral when an entry from the default generator
/// with at least `points` points exists, otherwise integrates and stores the
/// result.
pub fn cache_lookup_or_compute(
    table: &mut IntegralTable,
    config: RootConfig,
    points: u64,
) -> Result<(f64, CacheStatus)> {
    if let Some(e) = table.get(config) {
        if e.points >= points && e.generator_version == DirectionSet::default().version() {
            return Ok((e.ln_integral, CacheStatus::Hit));
        }
    }
    let estimate = integrate_sqrt_fim(config, points)?;
    if !estimate.value.is_finite() || estimate.value <= 0.0 {
        return Err(Error::Numeric(format!("integral estimate {} is not usable", estimate.value)));
    }
    table.insert(&estimate);
    Ok((estimate.ln_value(), CacheStatus::Computed))
}
