//! File formats of the command line front end.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bench::{BasisSettings, EstimatorSettings, TableSettings};
use crate::deconv::{cache, DeconvTable};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, Interval, TransitionEstimate};
use crate::noise::{NoiseModel, NoiseSpec};
use crate::wavelet::WaveletBasis;

/// Settings for a single estimation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub domain: Interval,
    /// Second axis, when it must be stated separately; it has to equal `domain`.
    #[serde(default)]
    pub domain_y: Option<Interval>,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub basis: BasisSettings,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub table: TableSettings,
    /// Precomputed table written by the `cache` command.
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

impl EstimateConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: EstimateConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Interval::new(config.domain.lo, config.domain.hi).map_err(|e| Error::Config(e.to_string()))?;
        config.noise()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn noise(&self) -> Result<NoiseModel> {
        self.noise.build().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn basis(&self) -> Result<WaveletBasis> {
        self.basis.build().map_err(|e| match e {
            Error::Numeric(_) => e,
            other => Error::Config(other.to_string()),
        })
    }

    pub fn estimator_config(&self, basis: &WaveletBasis, noise: &NoiseModel) -> EstimatorConfig {
        let mut c = self.estimator.config(self.domain, basis, noise);
        if let Some(y) = self.domain_y {
            c.domain_y = y;
        }
        c
    }

    /// Builds a fresh table whose window covers `data`.
    pub fn build_table(&self, data: &[f64]) -> Result<DeconvTable> {
        let noise = self.noise()?;
        let basis = Arc::new(self.basis()?);
        let tc = self.table.resolve_with(&basis, self.domain, &noise, || Ok(data.to_vec()))?;
        DeconvTable::build(basis, &noise.rescaled(self.domain.width())?, tc)
    }

    /// Loads the configured cache and checks it against this configuration.
    pub fn load_table(&self, path: &Path) -> Result<DeconvTable> {
        let table = cache::load(path)?;
        let b = table.basis();
        let want = &self.basis;
        let grid = want.grid.unwrap_or(want.max_level + 8);
        if (b.order(), b.coarse_level(), b.max_level(), b.grid()) != (want.order, want.coarse, want.max_level, grid) {
            return Err(Error::TableMismatch(format!("{} holds a different basis", path.display())));
        }
        if *table.noise() != self.noise()?.rescaled(self.domain.width())? {
            return Err(Error::TableMismatch(format!("{} was built for other noise or domain width", path.display())));
        }
        Ok(table)
    }

    /// Cached table when configured, otherwise a fresh one.
    pub fn table(&self, data: &[f64]) -> Result<DeconvTable> {
        match &self.cache {
            Some(path) => self.load_table(path),
            None => self.build_table(data),
        }
    }
}

/// One observation per line; blank lines and `#` comments are skipped.
pub fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    parse_observations(&text)
}

pub fn parse_observations(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Config(format!("line {}: '{line}' is not a number", i + 1)))?;
        if !v.is_finite() {
            return Err(Error::Config(format!("line {}: non-finite observation", i + 1)));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn write_observations(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for v in values {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Selected level, then one `x-factor  y-factor  coefficient` row per term.
pub fn write_coefficients<W: Write>(w: &mut W, est: &TransitionEstimate) -> Result<()> {
    writeln!(w, "level\t{}", est.level)?;
    writeln!(w, "# truncated={} gamma_failed={} norm={}", est.truncated, est.gamma_failed, est.l2_norm)?;
    for (&(i, j), c) in est.pairs.iter().zip(&est.coeffs) {
        writeln!(w, "{}\t{}\t{}", est.factors[i], est.factors[j], c)?;
    }
    Ok(())
}

/// `x  y  value` rows on a `points × points` grid over the estimation square.
pub fn write_grid<W: Write>(w: &mut W, est: &TransitionEstimate, basis: &WaveletBasis, points: usize) -> Result<()> {
    if points < 2 {
        return Err(Error::Config("evaluation grid needs at least 2 points".into()));
    }
    let nodes = crate::bench::quadrature_nodes(est.rescale.lo, est.rescale.hi, points);
    let values = est.evaluate_grid(basis, &nodes, &nodes)?;
    for (i, x) in nodes.iter().enumerate() {
        for (j, y) in nodes.iter().enumerate() {
            writeln!(w, "{x}\t{y}\t{}", values[(i, j)])?;
        }
    }
    Ok(())
}
