//! Penalized least-squares estimation of the transition density.
//!
//! For a model `S_m` with orthonormal tensor functions `ω_λ = x_λ ⊗ y_λ`, the
//! contrast minimizer has coefficients `A_m = G_m^{-1} Z_m` where
//!
//! * `G_m[λ, μ] = (1/n) Σ_i v_{x_λ x_μ}(Y_i) · ⟨y_λ, y_μ⟩`,
//! * `Z_m[λ] = (1/n) Σ_i v_{x_λ}(Y_i) v_{y_λ}(Y_{i+1})`.
//!
//! Since the `y` factors are orthonormal, `G_m` splits into one block per
//! `y` factor, and blocks sharing the same admissible `x` set are equal.
//! Data are first mapped affinely onto `[0, 1]`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::deconv::DeconvTable;
use crate::error::{Error, Result};
use crate::noise::NoiseModel;
use crate::wavelet::{dimension_root, BasisIndex, ModelLayout, WaveletBasis};

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::invalid(format!("degenerate interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }

    /// `(x - lo) / width`.
    pub fn to_unit(&self, x: f64) -> f64 {
        (x - self.lo) / self.width()
    }

    pub fn from_unit(&self, u: f64) -> f64 {
        self.lo + u * self.width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Penalty {
    /// `(1/n) (λ/2)² (D_m/4)^10`.
    LaplacePractical,
    /// `(κ/n) exp(λ² D_m²)`.
    GaussianPractical,
    /// `K D_m^{4γ+2} / n`, restricted to models with `D_m^{4γ+2} <= n`.
    Theoretical { constant: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum FloorMode {
    Fixed(f64),
    PlugIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Estimation region `A₁ × A₂`; both sides must be the same interval.
    pub domain_x: Interval,
    pub domain_y: Interval,
    #[serde(default = "default_floor")]
    pub f0: FloorMode,
    pub m_min: u32,
    pub m_max: u32,
    pub penalty: Penalty,
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

/// Largest condition number accepted when the spectral guard is off.
pub const MAX_CONDITION: f64 = 1e12;

/// Smallest value returned by [`plug_in_f0`].
pub const F0_FLOOR: f64 = 0.01;

impl EstimatorConfig {
    pub fn new(domain: Interval, m_min: u32, m_max: u32, penalty: Penalty) -> Self {
        EstimatorConfig {
            domain_x: domain,
            domain_y: domain,
            f0: default_floor(),
            m_min,
            m_max,
            penalty,
            gamma_threshold: default_threshold(),
            kappa: default_kappa(),
            gamma_enforce: true,
        }
    }

    pub fn validate(&self, coarse: u32) -> Result<()> {
        Interval::new(self.domain_x.lo, self.domain_x.hi)?;
        Interval::new(self.domain_y.lo, self.domain_y.hi)?;
        if self.m_min < coarse || self.m_max < self.m_min {
            return Err(Error::Config(format!("model range {}..={} must start at or above J = {coarse}", self.m_min, self.m_max)));
        }
        if !(self.gamma_threshold > 0.0 && self.gamma_threshold < 1.0) {
            return Err(Error::Config(format!("gamma threshold factor {} outside (0, 1)", self.gamma_threshold)));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::Config("kappa must be positive".into()));
        }
        match self.f0 {
            FloorMode::Fixed(f) if !(f > 0.0) => Err(Error::Config("f0 must be positive".into())),
            _ => Ok(()),
        }?;
        if let Penalty::Theoretical { constant } = self.penalty {
            if !(constant > 0.0) {
                return Err(Error::Config("penalty constant must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Observations mapped onto `[0, 1]` together with the matching noise law.
#[derive(Debug, Clone, PartialEq)]
pub struct RescaledSample {
    /// `n + 1` rescaled observations.
    pub y: Vec<f64>,
    pub noise: NoiseModel,
    pub raw_noise: NoiseModel,
    pub map: Interval,
}

impl RescaledSample {
    /// Number of transitions, `n`.
    pub fn n(&self) -> usize {
        self.y.len() - 1
    }

    pub fn raw(&self) -> Vec<f64> {
        self.y.iter().map(|&u| self.map.from_unit(u)).collect()
    }
}

/// Maps raw observations through `A₁` onto `[0, 1]` and rescales the noise.
pub fn rescale(data: &[f64], config: &EstimatorConfig, noise: &NoiseModel) -> Result<RescaledSample> {
    let a = Interval::new(config.domain_x.lo, config.domain_x.hi)?;
    let b = Interval::new(config.domain_y.lo, config.domain_y.hi)?;
    if a != b {
        return Err(Error::Config("estimation domain must be a square A₁ = A₂".into()));
    }
    if data.len() < 2 {
        return Err(Error::invalid("need at least two observations"));
    }
    if data.iter().any(|y| !y.is_finite()) {
        return Err(Error::invalid("observations must be finite"));
    }
    Ok(RescaledSample {
        y: data.iter().map(|&y| a.to_unit(y)).collect(),
        noise: noise.rescaled(a.width())?,
        raw_noise: noise.clone(),
        map: a,
    })
}

/// Data-dependent matrices over the full factor system of the largest
/// model; every smaller model reads sub-blocks.
#[derive(Debug, Clone)]
pub struct Moments {
    pub factors: Vec<BasisIndex>,
    /// `(1/n) Σ_i v_{a b}(Y_i)` for factors `a`, `b`.
    pub gram: DMatrix<f64>,
    /// `(1/n) Σ_i v_a(Y_i) v_b(Y_{i+1})`.
    pub cross: DMatrix<f64>,
}

fn expansion_matrix(basis: &WaveletBasis, factors: &[BasisIndex]) -> Result<DMatrix<f64>> {
    let fine = basis.fine_functions().len();
    let mut c = DMatrix::zeros(fine, factors.len());
    for (col, idx) in factors.iter().enumerate() {
        for (p, w) in basis.function(*idx)?.expansion.iter() {
            c[(p, col)] = w;
        }
    }
    Ok(c)
}

impl Moments {
    pub fn compute(sample: &RescaledSample, table: &DeconvTable, m: u32) -> Result<Self> {
        let basis = table.basis();
        let factors = basis.factors(m)?;
        let c = expansion_matrix(basis, &factors)?;
        let n = sample.n();
        let values = table.fine_values(&sample.y)? * &c;
        let h = table.fine_pair_means(&sample.y[..n])?;
        let gram = c.transpose() * h * &c;
        let gram = (&gram + gram.transpose()) * 0.5;
        let cross = values.rows(0, n).transpose() * values.rows(1, n) / n as f64;
        Ok(Moments { factors, gram, cross })
    }
}

/// `G_m` as a list of distinct blocks plus `Z_m` in coefficient order.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub layout: ModelLayout,
    /// One matrix per entry of `layout.x_sets`.
    pub blocks: Vec<DMatrix<f64>>,
    pub z: DVector<f64>,
}

impl LinearSystem {
    /// Dense `G_m` over all `D_m²` coefficients.
    pub fn dense_gram(&self) -> DMatrix<f64> {
        let len = self.layout.len();
        let mut g = DMatrix::zeros(len, len);
        let mut offset = 0;
        for b in &self.layout.blocks {
            let block = &self.blocks[b.x_set];
            let size = block.nrows();
            g.view_mut((offset, offset), (size, size)).copy_from(block);
            offset += size;
        }
        g
    }
}

pub fn system_from_moments(moments: &Moments, basis: &WaveletBasis, m: u32) -> Result<LinearSystem> {
    let layout = basis.enumerate_model(m)?;
    if layout.factors.len() > moments.factors.len() || layout.factors[..] != moments.factors[..layout.factors.len()] {
        return Err(Error::invalid(format!("moments do not cover model level {m}")));
    }
    let blocks = layout
        .x_sets
        .iter()
        .map(|set| DMatrix::from_fn(set.len(), set.len(), |i, j| moments.gram[(set[i], set[j])]))
        .collect();
    let z = DVector::from_iterator(layout.len(), layout.pairs().map(|(x, y)| moments.cross[(x, y)]));
    Ok(LinearSystem { layout, blocks, z })
}

/// `(G_m, Z_m)` for one model.
pub fn build_system(sample: &RescaledSample, table: &DeconvTable, m: u32) -> Result<LinearSystem> {
    let moments = Moments::compute(sample, table, m)?;
    system_from_moments(&moments, table.basis(), m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub level: u32,
    pub coeffs: DVector<f64>,
    pub contrast: f64,
    pub min_eigenvalue: f64,
    pub gamma_ok: bool,
}

/// Solves `G_m A_m = Z_m` block by block if the spectral guard passes.
pub fn fit_model(system: &LinearSystem, config: &EstimatorConfig, f0: f64) -> Result<ModelFit> {
    let level = system.layout.level;
    let eigs: Vec<SymmetricEigen<f64, nalgebra::Dyn>> = system.blocks.iter().map(|b| SymmetricEigen::new(b.clone())).collect();
    let min_eigenvalue = eigs.iter().map(|e| e.eigenvalues.min()).fold(f64::INFINITY, f64::min);
    let max_eigenvalue = eigs.iter().map(|e| e.eigenvalues.max()).fold(0.0, f64::max);
    let gamma_ok = if config.gamma_enforce {
        min_eigenvalue >= config.gamma_threshold * f0
    } else {
        min_eigenvalue > 0.0 && max_eigenvalue / min_eigenvalue < MAX_CONDITION
    };
    let len = system.layout.len();
    if !gamma_ok {
        return Ok(ModelFit { level, coeffs: DVector::zeros(len), contrast: 0.0, min_eigenvalue, gamma_ok });
    }
    let mut coeffs = DVector::zeros(len);
    let mut offset = 0;
    for b in &system.layout.blocks {
        let eig = &eigs[b.x_set];
        let size = eig.eigenvalues.len();
        let rhs = system.z.rows(offset, size);
        let proj = eig.eigenvectors.transpose() * rhs;
        let scaled = proj.component_div(&eig.eigenvalues);
        coeffs.rows_mut(offset, size).copy_from(&(&eig.eigenvectors * scaled));
        offset += size;
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric(format!("non-finite coefficients at level {level}")));
    }
    let contrast = -coeffs.dot(&system.z);
    Ok(ModelFit { level, coeffs, contrast, min_eigenvalue, gamma_ok })
}

/// Penalty of model `m` for `n` transitions, using the raw noise parameter.
pub fn penalty(m: u32, coarse: u32, n: usize, noise: &NoiseModel, config: &EstimatorConfig) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("penalty needs n >= 1"));
    }
    let d = dimension_root(coarse, m)?;
    Ok(penalty_value(d, n, noise, config)?)
}

/// Penalty as a function of `D_m` directly.
pub fn penalty_value(d: f64, n: usize, noise: &NoiseModel, config: &EstimatorConfig) -> Result<f64> {
    let n = n as f64;
    let lambda = noise.lambda();
    Ok(match config.penalty {
        Penalty::LaplacePractical => (lambda / 2.0).powi(2) * (d / 4.0).powi(10) / n,
        Penalty::GaussianPractical => config.kappa / n * (lambda * lambda * d * d).exp(),
        Penalty::Theoretical { constant } => {
            let gamma = noise.smoothness().ok_or(Error::MissingSmoothness(noise.family().name()))?;
            constant * d.powf(4.0 * gamma + 2.0) / n
        }
    })
}

/// Final estimate on the rescaled square, with the map back to raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionEstimate {
    pub level: u32,
    pub factors: Vec<BasisIndex>,
    /// `(x, y)` factor positions of each coefficient.
    pub pairs: Vec<(usize, usize)>,
    pub coeffs: Vec<f64>,
    pub l2_norm: f64,
    pub truncated: bool,
    pub gamma_failed: bool,
    pub rescale: Interval,
    pub f0: f64,
    /// `(m, contrast, penalty, gamma_ok)` for every model tried.
    pub criteria: Vec<(u32, f64, f64, bool)>,
}

/// Fits every admissible model and keeps the penalized minimizer.
pub fn select_and_estimate(sample: &RescaledSample, table: &DeconvTable, config: &EstimatorConfig) -> Result<TransitionEstimate> {
    let basis = table.basis();
    config.validate(basis.coarse_level())?;
    let coarse = basis.coarse_level();
    let n = sample.n();
    let top = config.m_max.min(basis.max_level());
    if config.m_min > top {
        return Err(Error::Config(format!("model range starts at {} but the basis stops at {}", config.m_min, basis.max_level())));
    }
    let mut levels: Vec<u32> = (config.m_min..=top).collect();
    if let Penalty::Theoretical { .. } = config.penalty {
        let gamma = sample.raw_noise.smoothness().ok_or(Error::MissingSmoothness(sample.raw_noise.family().name()))?;
        levels.retain(|&m| dimension_root(coarse, m).map_or(false, |d| d.powf(4.0 * gamma + 2.0) <= n as f64));
    }
    let f0 = match config.f0 {
        FloorMode::Fixed(v) => v,
        FloorMode::PlugIn => plug_in_f0(sample, table)?,
    };
    let moments = match levels.last() {
        Some(&m) => Some(Moments::compute(sample, table, m)?),
        None => None,
    };
    let mut best: Option<(f64, ModelFit)> = None;
    let mut criteria = Vec::new();
    for &m in &levels {
        let system = system_from_moments(moments.as_ref().expect("levels nonempty"), basis, m)?;
        let fit = fit_model(&system, config, f0)?;
        let pen = penalty(m, coarse, n, &sample.raw_noise, config)?;
        criteria.push((m, fit.contrast, pen, fit.gamma_ok));
        if !fit.gamma_ok {
            continue;
        }
        let value = fit.contrast + pen;
        if best.as_ref().map_or(true, |(b, _)| value < *b) {
            best = Some((value, fit));
        }
    }
    let Some((_, fit)) = best else {
        let level = levels.first().copied().unwrap_or(config.m_min);
        let layout = basis.enumerate_model(level)?;
        return Ok(TransitionEstimate {
            level,
            pairs: layout.pairs().collect(),
            coeffs: vec![0.0; layout.len()],
            factors: layout.factors,
            l2_norm: 0.0,
            truncated: false,
            gamma_failed: true,
            rescale: sample.map,
            f0,
            criteria,
        });
    };
    let layout = basis.enumerate_model(fit.level)?;
    let l2_norm = fit.coeffs.norm();
    Ok(TransitionEstimate {
        level: fit.level,
        pairs: layout.pairs().collect(),
        coeffs: fit.coeffs.iter().copied().collect(),
        factors: layout.factors,
        l2_norm,
        truncated: l2_norm > (n as f64).sqrt(),
        gamma_failed: false,
        rescale: sample.map,
        f0,
        criteria,
    })
}

impl TransitionEstimate {
    /// Whether evaluation returns zero everywhere.
    pub fn is_zero(&self) -> bool {
        self.truncated || self.gamma_failed
    }

    fn factor_values(&self, basis: &WaveletBasis, u: f64) -> Result<Vec<f64>> {
        self.factors.iter().map(|&idx| basis.eval(idx, u)).collect()
    }

    /// `Π̃(x, y)` in raw units. The rescaled estimate is a density in the
    /// rescaled `y`, so it is divided by `|A₂|` once.
    pub fn evaluate(&self, basis: &WaveletBasis, x: f64, y: f64) -> Result<f64> {
        let a = self.rescale;
        for v in [x, y] {
            if !a.contains(v) {
                return Err(Error::OutOfDomain { x: v, lo: a.lo, hi: a.hi });
            }
        }
        if self.is_zero() {
            return Ok(0.0);
        }
        let fx = self.factor_values(basis, a.to_unit(x))?;
        let fy = self.factor_values(basis, a.to_unit(y))?;
        let total: f64 = self.pairs.iter().zip(&self.coeffs).map(|(&(i, j), c)| c * fx[i] * fy[j]).sum();
        Ok(total / a.width())
    }

    /// Values on the tensor grid `xs × ys`, rows indexed by `x`.
    pub fn evaluate_grid(&self, basis: &WaveletBasis, xs: &[f64], ys: &[f64]) -> Result<DMatrix<f64>> {
        let a = self.rescale;
        if let Some(&v) = xs.iter().chain(ys).find(|v| !a.contains(**v)) {
            return Err(Error::OutOfDomain { x: v, lo: a.lo, hi: a.hi });
        }
        if self.is_zero() {
            return Ok(DMatrix::zeros(xs.len(), ys.len()));
        }
        let k = self.factors.len();
        let table = |pts: &[f64]| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(k, pts.len());
            for (col, &p) in pts.iter().enumerate() {
                for (row, v) in self.factor_values(basis, a.to_unit(p))?.into_iter().enumerate() {
                    m[(row, col)] = v;
                }
            }
            Ok(m)
        };
        let mut c = DMatrix::zeros(k, k);
        for (&(i, j), v) in self.pairs.iter().zip(&self.coeffs) {
            c[(i, j)] = *v;
        }
        Ok(table(xs)?.transpose() * c * table(ys)? / a.width())
    }
}

/// Floor estimate: minimum over a 256-point grid of the level-`J`
/// deconvolution projection estimate of the rescaled stationary density.
pub fn plug_in_f0(sample: &RescaledSample, table: &DeconvTable) -> Result<f64> {
    let basis = table.basis();
    let n = sample.n();
    let ys = &sample.y[..n];
    let scaling = basis.scaling_indices(basis.coarse_level())?;
    let c = expansion_matrix(basis, &scaling)?;
    let values = table.fine_values(ys)? * c;
    let coeffs: Vec<f64> = (0..scaling.len()).map(|k| values.column(k).sum() / n as f64).collect();
    let mut lowest = f64::INFINITY;
    for i in 0..256 {
        let x = i as f64 / 255.0;
        let mut f = 0.0;
        for (k, idx) in scaling.iter().enumerate() {
            f += coeffs[k] * basis.eval(*idx, x)?;
        }
        lowest = lowest.min(f);
    }
    Ok(lowest.max(F0_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deconv::TableConfig;
    use std::sync::Arc;

    fn laplace_config() -> EstimatorConfig {
        EstimatorConfig::new(Interval::new(-2.0, 2.0).unwrap(), 2, 3, Penalty::LaplacePractical)
    }

    #[test]
    fn rescale_examples() {
        let noise = NoiseModel::laplace(5.0).unwrap();
        let unit = EstimatorConfig::new(Interval::new(0.0, 1.0).unwrap(), 2, 2, Penalty::LaplacePractical);
        let s = rescale(&[0.1, 0.7, 1.3], &unit, &noise).unwrap();
        assert_eq!(s.y, vec![0.1, 0.7, 1.3]);
        assert_eq!(s.noise, noise);
        let s = rescale(&[-2.0, 0.0, 1.5], &laplace_config(), &noise).unwrap();
        assert_eq!(s.y, vec![0.0, 0.5, 0.875]);
        assert_eq!(s.noise.lambda(), 20.0);
        for (a, b) in s.raw().iter().zip([-2.0, 0.0, 1.5]) {
            assert!((a - b).abs() < 1e-12);
        }
        let mut skew = laplace_config();
        skew.domain_y = Interval::new(-1.0, 2.0).unwrap();
        assert!(matches!(rescale(&[0.0, 1.0], &skew, &noise), Err(Error::Config(_))));
        assert!(Interval::new(1.0, 1.0).is_err());
    }

    #[test]
    fn penalty_examples() {
        let cfg = laplace_config();
        let lap = NoiseModel::laplace(5.0).unwrap();
        assert!((penalty_value(4.0, 500, &lap, &cfg).unwrap() - 0.0125).abs() < 1e-15);
        let mut g = cfg.clone();
        g.penalty = Penalty::GaussianPractical;
        let gauss = NoiseModel::gaussian(0.3).unwrap();
        assert!((penalty_value(2.0, 500, &gauss, &g).unwrap() - 0.01 * 0.36f64.exp()).abs() < 1e-15);
        let mut t = cfg.clone();
        t.penalty = Penalty::Theoretical { constant: 3.0 };
        let ratio = penalty(3, 2, 100, &lap, &t).unwrap() / penalty(2, 2, 100, &lap, &t).unwrap();
        let d = |m| dimension_root(2, m).unwrap();
        assert!((ratio - (d(3) / d(2)).powi(10)).abs() < 1e-9 * ratio);
        assert!(matches!(penalty(2, 2, 100, &gauss, &t), Err(Error::MissingSmoothness(_))));
    }

    fn identity_table() -> DeconvTable {
        let basis = Arc::new(WaveletBasis::build(2, 2, 3, 9).unwrap());
        DeconvTable::build(basis, &NoiseModel::degenerate(), TableConfig { cutoff: 50.0, pad: 1.0 }).unwrap()
    }

    #[test]
    fn zero_cross_moments_give_zero_fit() {
        let table = identity_table();
        let basis = table.basis();
        let layout = basis.enumerate_model(3).unwrap();
        let blocks = layout.x_sets.iter().map(|s| DMatrix::identity(s.len(), s.len())).collect();
        let system = LinearSystem { z: DVector::zeros(layout.len()), layout, blocks };
        let fit = fit_model(&system, &laplace_config(), 0.05).unwrap();
        assert!(fit.gamma_ok);
        assert!(fit.coeffs.iter().all(|c| *c == 0.0));
        assert_eq!(fit.contrast, 0.0);
    }

    #[test]
    fn guard_rejects_small_spectrum() {
        let table = identity_table();
        let layout = table.basis().enumerate_model(2).unwrap();
        let blocks = vec![DMatrix::identity(4, 4) * 0.01];
        let system = LinearSystem { z: DVector::from_element(layout.len(), 1.0), layout, blocks };
        let fit = fit_model(&system, &laplace_config(), 0.05).unwrap();
        assert!(!fit.gamma_ok);
        assert!(fit.coeffs.iter().all(|c| *c == 0.0));
        let mut loose = laplace_config();
        loose.gamma_enforce = false;
        let fit = fit_model(&system, &loose, 0.05).unwrap();
        assert!(fit.gamma_ok);
        assert!((fit.coeffs[0] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn gram_is_symmetric_block_diagonal() {
        let table = identity_table();
        let data: Vec<f64> = (0..40).map(|i| -1.8 + 3.6 * ((i * 7919) % 40) as f64 / 40.0).collect();
        let sample = rescale(&data, &laplace_config(), &NoiseModel::degenerate()).unwrap();
        let system = build_system(&sample, &table, 3).unwrap();
        let g = system.dense_gram();
        assert_eq!(g.nrows(), 208);
        assert_eq!(g, g.transpose());
        let pairs: Vec<_> = system.layout.pairs().collect();
        for (r, a) in pairs.iter().enumerate() {
            for (c, b) in pairs.iter().enumerate() {
                if a.1 != b.1 {
                    assert_eq!(g[(r, c)], 0.0);
                }
            }
        }
    }

    #[test]
    fn constant_sample_gives_rank_deficient_gram() {
        let table = identity_table();
        let data = vec![0.3; 30];
        let sample = rescale(&data, &laplace_config(), &NoiseModel::degenerate()).unwrap();
        let system = build_system(&sample, &table, 2).unwrap();
        let eig = SymmetricEigen::new(system.blocks[0].clone());
        let positive = eig.eigenvalues.iter().filter(|v| **v > 1e-12).count();
        assert_eq!(positive, 1);
        let est = select_and_estimate(&sample, &table, &EstimatorConfig::new(Interval::new(-2.0, 2.0).unwrap(), 2, 2, Penalty::LaplacePractical)).unwrap();
        assert!(est.gamma_failed);
        assert!(est.is_zero());
        assert_eq!(est.evaluate(table.basis(), 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn contrast_is_nonpositive_and_matches_quadratic_form() {
        let table = identity_table();
        let data: Vec<f64> = (0..300).map(|i| 1.8 * ((i as f64) * 0.37).sin()).collect();
        let sample = rescale(&data, &laplace_config(), &NoiseModel::degenerate()).unwrap();
        let system = build_system(&sample, &table, 3).unwrap();
        let mut cfg = laplace_config();
        cfg.gamma_enforce = false;
        let fit = fit_model(&system, &cfg, 0.05).unwrap();
        assert!(fit.gamma_ok);
        assert!(fit.contrast <= 0.0);
        let g = system.dense_gram();
        let quad = fit.coeffs.dot(&(&g * &fit.coeffs));
        assert!((quad + fit.contrast).abs() < 1e-8 * (1.0 + quad.abs()));
    }

    #[test]
    fn ties_prefer_the_smaller_model() {
        let table = identity_table();
        let data: Vec<f64> = (0..200).map(|i| 1.5 * ((i as f64) * 0.61).cos()).collect();
        let sample = rescale(&data, &laplace_config(), &NoiseModel::degenerate()).unwrap();
        let mut cfg = laplace_config();
        cfg.gamma_enforce = false;
        cfg.penalty = Penalty::Theoretical { constant: 1e-300 };
        // Degenerate noise has smoothness 0, so the model bound is D_m² <= n.
        let est = select_and_estimate(&sample, &table, &cfg).unwrap();
        assert!(est.criteria.iter().all(|c| c.3));
        let best = est.criteria.iter().map(|c| c.1 + c.2).fold(f64::INFINITY, f64::min);
        let first = est.criteria.iter().find(|c| c.1 + c.2 == best).unwrap().0;
        assert_eq!(est.level, first);
    }

    #[test]
    fn evaluation_jacobian_and_domain() {
        let table = identity_table();
        let basis = table.basis();
        let layout = basis.enumerate_model(2).unwrap();
        let mut coeffs = vec![0.0; layout.len()];
        coeffs[5] = 1.0;
        let est = TransitionEstimate {
            level: 2,
            pairs: layout.pairs().collect(),
            factors: layout.factors.clone(),
            coeffs,
            l2_norm: 1.0,
            truncated: false,
            gamma_failed: false,
            rescale: Interval::new(-2.0, 2.0).unwrap(),
            f0: 0.05,
            criteria: vec![],
        };
        let (xi, yi) = est.pairs[5];
        let (x, y) = (-0.7, 0.9);
        let expected = basis.eval(layout.factors[xi], 0.325).unwrap() * basis.eval(layout.factors[yi], 0.725).unwrap() / 4.0;
        assert!((est.evaluate(basis, x, y).unwrap() - expected).abs() < 1e-14);
        assert!(matches!(est.evaluate(basis, 2.5, 0.0), Err(Error::OutOfDomain { .. })));
        let grid = est.evaluate_grid(basis, &[x, 0.0], &[y]).unwrap();
        assert!((grid[(0, 0)] - expected).abs() < 1e-14);
    }
}
