//! Monte-Carlo MISE harness over grids of chains, noises and sample sizes.
//!
//! Replicate `r` of every cell uses the seed `split(master + r)`, where
//! `split` is the SplitMix64 finalizer; the chain path takes that seed and
//! the observation noise takes `split(seed)`. Cells therefore share
//! replicate streams, which keeps comparisons across `n` paired.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{observe, ChainKind, ChainModel};
use crate::deconv::{DeconvTable, TableConfig};
use crate::error::{Error, Result};
use crate::estimator::{rescale, Interval, select_and_estimate, EstimatorConfig, FloorMode, Penalty, TransitionEstimate};
use crate::noise::{NoiseFamily, NoiseModel, NoiseSpec};
use crate::wavelet::WaveletBasis;

/// SplitMix64 output function.
pub fn split(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `(chain seed, noise seed)` of replicate `r`.
pub fn replicate_seeds(master: u64, r: usize) -> (u64, u64) {
    let chain = split(master.wrapping_add(r as u64));
    (chain, split(chain))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSettings {
    pub order: usize,
    pub coarse: u32,
    pub max_level: u32,
    /// Dyadic grid exponent; defaults to `max_level + 8`.
    #[serde(default)]
    pub grid: Option<u32>,
}

impl Default for BasisSettings {
    fn default() -> Self {
        BasisSettings { order: 2, coarse: 2, max_level: 3, grid: None }
    }
}

impl BasisSettings {
    pub fn build(&self) -> Result<WaveletBasis> {
        WaveletBasis::build(self.order, self.coarse, self.max_level, self.grid.unwrap_or(self.max_level + 8))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    #[serde(default)]
    pub m_min: Option<u32>,
    #[serde(default)]
    pub m_max: Option<u32>,
    /// Chosen from the noise family when absent.
    #[serde(default)]
    pub penalty: Option<Penalty>,
    #[serde(default = "default_floor")]
    pub f0: FloorMode,
    #[serde(default = "default_threshold")]
    pub gamma_threshold: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_true")]
    pub gamma_enforce: bool,
}

fn default_floor() -> FloorMode {
    FloorMode::Fixed(0.05)
}

fn default_threshold() -> f64 {
    2.0 / 3.0
}

fn default_kappa() -> f64 {
    5.0
}

fn default_true() -> bool {
    true
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        EstimatorSettings {
            m_min: None,
            m_max: None,
            penalty: None,
            f0: default_floor(),
            gamma_threshold: default_threshold(),
            kappa: default_kappa(),
            gamma_enforce: true,
        }
    }
}

/// Penalty used when none is configured.
pub fn default_penalty(noise: &NoiseModel) -> Penalty {
    match noise.family() {
        NoiseFamily::Gaussian => Penalty::GaussianPractical,
        _ => Penalty::LaplacePractical,
    }
}

impl EstimatorSettings {
    pub fn config(&self, domain: Interval, basis: &WaveletBasis, noise: &NoiseModel) -> EstimatorConfig {
        let mut c = EstimatorConfig::new(
            domain,
            self.m_min.unwrap_or(basis.coarse_level()),
            self.m_max.unwrap_or(basis.max_level()),
            self.penalty.unwrap_or_else(|| default_penalty(noise)),
        );
        c.f0 = self.f0;
        c.gamma_threshold = self.gamma_threshold;
        c.kappa = self.kappa;
        c.gamma_enforce = self.gamma_enforce;
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSettings {
    /// Frequency cutoff in rescaled units. When absent, the half-power
    /// frequency of the rescaled noise, where `|q*| = 1/2`.
    #[serde(default)]
    pub cutoff: Option<f64>,
    /// Window padding in rescaled units; derived from a pilot path when absent.
    #[serde(default)]
    pub pad: Option<f64>,
}

/// Length of the pilot path used to size the table window.
pub const PILOT_LENGTH: usize = 100_000;

/// Window padding that covers `ys` (raw units) with a 25% margin, plus the
/// support length of the coarse functions.
pub fn covering_pad(basis: &WaveletBasis, domain: Interval, ys: &[f64]) -> f64 {
    let reach = ys.iter().map(|&y| {
        let u = domain.to_unit(y);
        (-u).max(u - 1.0)
    });
    let reach = reach.fold(0.0f64, f64::max);
    1.25 * reach + basis.order() as f64 / (1u64 << basis.coarse_level()) as f64
}

impl TableSettings {
    /// Table parameters for a domain and raw noise law; `sample` supplies
    /// observations that the window must cover when no pad is configured.
    pub fn resolve_with(&self, basis: &WaveletBasis, domain: Interval, raw_noise: &NoiseModel, sample: impl FnOnce() -> Result<Vec<f64>>) -> Result<TableConfig> {
        let noise = raw_noise.rescaled(domain.width())?;
        let mut config = TableConfig::default_for(basis, &noise);
        if let Some(u) = TableConfig::half_power_cutoff(&noise) {
            config.cutoff = u;
        }
        if let Some(u) = self.cutoff {
            if !(u > 0.0) {
                return Err(Error::Config("table cutoff must be positive".into()));
            }
            config.cutoff = TableConfig::capped_cutoff(u, &noise);
        }
        config.pad = match self.pad {
            Some(p) if p > 0.0 => p,
            Some(_) => return Err(Error::Config("table pad must be positive".into())),
            None => covering_pad(basis, domain, &sample()?),
        };
        Ok(config)
    }

    /// As [`TableSettings::resolve_with`], sizing the window from a long
    /// pilot path of `chain`.
    pub fn resolve(&self, basis: &WaveletBasis, chain: &ChainModel, raw_noise: &NoiseModel, seed: u64) -> Result<TableConfig> {
        self.resolve_with(basis, chain.domain, raw_noise, || {
            let path = chain.simulate(PILOT_LENGTH, seed)?;
            Ok(observe(&path, raw_noise, split(seed)))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub chains: Vec<ChainKind>,
    pub noises: Vec<NoiseSpec>,
    pub n_values: Vec<usize>,
    pub replicates: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    pub master_seed: u64,
    pub output: PathBuf,
    #[serde(default)]
    pub basis: BasisSettings,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub table: TableSettings,
    /// Surface dumps per cell, for replicate 0.
    #[serde(default = "default_true")]
    pub surfaces: bool,
}

fn default_grid() -> usize {
    128
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.grid < 32 {
            return Err(Error::Config("quadrature grid needs at least 32 points per axis".into()));
        }
        if self.chains.is_empty() || self.noises.is_empty() || self.n_values.is_empty() {
            return Err(Error::Config("chains, noises and n_values must be nonempty".into()));
        }
        if self.n_values.iter().any(|&n| n < 2) {
            return Err(Error::Config("every n must be at least 2".into()));
        }
        for noise in &self.noises {
            noise.build().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Evaluation nodes of the MISE quadrature on one axis.
pub fn quadrature_nodes(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let h = (hi - lo) / (points - 1) as f64;
    (0..points).map(|i| if i + 1 == points { hi } else { lo + i as f64 * h }).collect()
}

fn trapezoid_weights(points: usize, h: f64) -> Vec<f64> {
    (0..points).map(|i| if i == 0 || i + 1 == points { 0.5 * h } else { h }).collect()
}

/// Tensor trapezoid rule over `A` of `(Π - Π̂)²`, with `Π̂` given on the
/// node grid (rows indexed by `x`).
pub fn integrated_squared_error(chain: &ChainModel, estimate: &DMatrix<f64>, points: usize) -> Result<f64> {
    let d = chain.domain;
    let nodes = quadrature_nodes(d.lo, d.hi, points);
    let w = trapezoid_weights(points, d.width() / (points - 1) as f64);
    let mut total = 0.0;
    for (i, &x) in nodes.iter().enumerate() {
        let mut row = 0.0;
        for (j, &y) in nodes.iter().enumerate() {
            let e = chain.true_transition(x, y)? - estimate[(i, j)];
            row += w[j] * e * e;
        }
        total += w[i] * row;
    }
    Ok(total)
}

/// Squared `L²(A)` distance between the estimate and the true transition.
pub fn mise_single(est: &TransitionEstimate, basis: &WaveletBasis, chain: &ChainModel, points: usize) -> Result<f64> {
    if est.rescale != chain.domain {
        return Err(Error::invalid("estimate and chain use different domains"));
    }
    let d = chain.domain;
    let nodes = quadrature_nodes(d.lo, d.hi, points);
    let values = est.evaluate_grid(basis, &nodes, &nodes)?;
    integrated_squared_error(chain, &values, points)
}

/// One simulate, observe, estimate pass.
pub fn run_replicate(chain: &ChainModel, noise: &NoiseModel, table: &DeconvTable, config: &EstimatorConfig, n: usize, seeds: (u64, u64)) -> Result<TransitionEstimate> {
    let path = chain.simulate(n, seeds.0)?;
    let ys = observe(&path, noise, seeds.1);
    let sample = rescale(&ys, config, noise)?;
    select_and_estimate(&sample, table, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub chain: ChainKind,
    pub noise: String,
    pub n: usize,
    pub mise: f64,
    pub se: f64,
    pub replicates: usize,
    pub failures: usize,
    pub mean_level: f64,
    pub truncated: usize,
    pub gamma_failed: usize,
    /// First error message among failed replicates.
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiseReport {
    pub cells: Vec<CellReport>,
}

impl MiseReport {
    pub fn failures(&self) -> usize {
        self.cells.iter().map(|c| c.failures).sum()
    }

    pub fn cell(&self, chain: ChainKind, n: usize) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.chain == chain && c.n == n)
    }
}

/// Surface of replicate 0 of one cell: `(x, y, Π, Π̃)` on the quadrature grid.
#[derive(Debug, Clone)]
pub struct Surface {
    pub chain: ChainKind,
    pub noise: String,
    pub n: usize,
    pub rows: Vec<[f64; 4]>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: MiseReport,
    pub surfaces: Vec<Surface>,
}

struct Prepared {
    chain: ChainModel,
    label: String,
    noise: NoiseModel,
    table: DeconvTable,
    config: EstimatorConfig,
}

fn prepare(config: &RunConfig, basis: &Arc<WaveletBasis>) -> Result<Vec<Prepared>> {
    let mut out = Vec::new();
    for &kind in &config.chains {
        let chain = ChainModel::preset(kind);
        for spec in &config.noises {
            let noise = spec.build().map_err(|e| Error::Config(e.to_string()))?;
            let table_config = config.table.resolve(basis, &chain, &noise, config.master_seed)?;
            let scaled = noise.rescaled(chain.domain.width())?;
            let table = DeconvTable::build(basis.clone(), &scaled, table_config)?;
            let est = config.estimator.config(chain.domain, basis, &noise);
            est.validate(basis.coarse_level())?;
            out.push(Prepared { chain, label: spec.label(), noise, table, config: est });
        }
    }
    Ok(out)
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every `(chain, noise, n)` cell.
pub fn run_grid(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    let basis = Arc::new(config.basis.build().map_err(|e| match e {
        Error::Io(_) | Error::Numeric(_) => e,
        other => Error::Config(other.to_string()),
    })?);
    let prepared = prepare(config, &basis)?;
    let mut cells = Vec::new();
    let mut surfaces = Vec::new();
    for p in &prepared {
        for &n in &config.n_values {
            let results: Vec<Result<(f64, TransitionEstimate)>> = (0..config.replicates)
                .into_par_iter()
                .map(|r| {
                    let est = run_replicate(&p.chain, &p.noise, &p.table, &p.config, n, replicate_seeds(config.master_seed, r))?;
                    let mise = mise_single(&est, &basis, &p.chain, config.grid)?;
                    Ok((mise, est))
                })
                .collect();
            let mut values = Vec::new();
            let mut levels = 0.0;
            let (mut truncated, mut gamma_failed, mut failures) = (0, 0, 0);
            let mut first_error = None;
            for (r, res) in results.iter().enumerate() {
                match res {
                    Ok((mise, est)) => {
                        values.push(*mise);
                        levels += est.level as f64;
                        truncated += est.truncated as usize;
                        gamma_failed += est.gamma_failed as usize;
                        if r == 0 && config.surfaces {
                            surfaces.push(surface(p, &basis, est, n, config.grid)?);
                        }
                    }
                    Err(e) => {
                        failures += 1;
                        first_error.get_or_insert_with(|| format!("replicate {r}: {e}"));
                    }
                }
            }
            let (mise, se) = mean_and_se(&values);
            cells.push(CellReport {
                chain: p.chain.kind,
                noise: p.label.clone(),
                n,
                mise,
                se,
                replicates: values.len(),
                failures,
                mean_level: if values.is_empty() { f64::NAN } else { levels / values.len() as f64 },
                truncated,
                gamma_failed,
                first_error,
            });
        }
    }
    Ok(RunOutput { report: MiseReport { cells }, surfaces })
}

fn surface(p: &Prepared, basis: &WaveletBasis, est: &TransitionEstimate, n: usize, points: usize) -> Result<Surface> {
    let d = p.chain.domain;
    let nodes = quadrature_nodes(d.lo, d.hi, points);
    let values = est.evaluate_grid(basis, &nodes, &nodes)?;
    let mut rows = Vec::with_capacity(points * points);
    for (i, &x) in nodes.iter().enumerate() {
        for (j, &y) in nodes.iter().enumerate() {
            rows.push([x, y, p.chain.true_transition(x, y)?, values[(i, j)]]);
        }
    }
    Ok(Surface { chain: p.chain.kind, noise: p.label.clone(), n, rows })
}

pub const REPORT_FILE: &str = "mise.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SURFACE_DIR: &str = "surfaces";

/// Tab-separated report, one row per cell.
pub fn report_table(report: &MiseReport) -> String {
    let mut s = String::from("chain\tnoise\tn\tmise\tse\treplicates\tfailures\tmean_level\ttruncated\tgamma_failed\n");
    for c in &report.cells {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            c.chain.label(),
            c.noise,
            c.n,
            c.mise,
            c.se,
            c.replicates,
            c.failures,
            c.mean_level,
            c.truncated,
            c.gamma_failed
        ));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub config: RunConfig,
    pub seed_rule: String,
    /// Seeds of the first replicates, `(chain, noise)`.
    pub seeds: Vec<(u64, u64)>,
    pub cells: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn new(config: &RunConfig, report: &MiseReport) -> Self {
        Manifest {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            seed_rule: "chain = splitmix64(master + r), noise = splitmix64(chain)".into(),
            seeds: (0..config.replicates.min(8)).map(|r| replicate_seeds(config.master_seed, r)).collect(),
            cells: report.cells.iter().map(|c| (format!("{}/{}/{}", c.chain.label(), c.noise, c.n), c.mise)).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn surface_name(s: &Surface) -> String {
    let noise: String = s.noise.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect();
    format!("{}_{}_{}.tsv", s.chain.label().replace(['(', ')'], ""), noise, s.n)
}

/// Writes the report table, surfaces and manifest into `config.output`.
pub fn emit_outputs(output: &RunOutput, config: &RunConfig, force: bool) -> Result<Vec<PathBuf>> {
    let dir = &config.output;
    fs::create_dir_all(dir)?;
    let report_path = dir.join(REPORT_FILE);
    let manifest_path = dir.join(MANIFEST_FILE);
    let surface_dir = dir.join(SURFACE_DIR);
    let surface_paths: Vec<PathBuf> = output.surfaces.iter().map(|s| surface_dir.join(surface_name(s))).collect();
    if !force {
        for p in [&report_path, &manifest_path].into_iter().chain(&surface_paths) {
            if p.exists() {
                return Err(Error::OutputExists(p.clone()));
            }
        }
    }
    fs::write(&report_path, report_table(&output.report))?;
    if !output.surfaces.is_empty() {
        fs::create_dir_all(&surface_dir)?;
    }
    for (s, path) in output.surfaces.iter().zip(&surface_paths) {
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(w, "x\ty\ttrue\testimate")?;
        for r in &s.rows {
            writeln!(w, "{}\t{}\t{}\t{}", r[0], r[1], r[2], r[3])?;
        }
        w.flush()?;
    }
    let manifest = serde_json::to_string_pretty(&Manifest::new(config, &output.report)).map_err(|e| Error::Numeric(e.to_string()))?;
    fs::write(&manifest_path, manifest)?;
    let mut written = vec![report_path, manifest_path];
    written.extend(surface_paths);
    Ok(written)
}
