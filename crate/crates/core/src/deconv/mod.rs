//! The operator `v_t`, inverse Fourier transform of `t*/q*(-·)`, applied to
//! basis functions and their products.
//!
//! A [`DeconvTable`] stores the spectra of `v` for every finest-level
//! scaling function and for every overlapping pair of them. Coarser basis
//! functions are exact linear combinations of the finest ones, and their
//! products are bilinear combinations of finest-level products,
//! so every other spectrum is assembled from the stored ones without a new
//! transform.
//!
//! With degenerate noise (`q* ≡ 1`) the table switches to an identity
//! backend where `v_t = t` is evaluated directly from the basis samples.

pub mod cache;
pub mod fourier;

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::noise::{NoiseFamily, NoiseModel};
use crate::wavelet::{interpolate, BasisIndex, Expansion, SampledFn, WaveletBasis};

pub use fourier::{FrequencyGrid, Piecewise};

/// Gaussian tables stop where `|q*|` reaches this value.
pub const GAUSSIAN_FLOOR: f64 = 1e-10;

/// Frequency truncation and spatial reach of a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableConfig {
    /// Highest frequency `U` kept in the inversion.
    pub cutoff: f64,
    /// Data may lie anywhere in `[-pad, 1 + pad]`.
    pub pad: f64,
}

impl TableConfig {
    /// `U = 64·2^{m_max}` and `pad = N/2^J + |E ε| + 3 sd(ε)`, with `U`
    /// lowered for Gaussian noise until `|q*(U)| >= 1e-10`.
    pub fn default_for(basis: &WaveletBasis, noise: &NoiseModel) -> Self {
        let cutoff = 64.0 * (1u64 << basis.max_level()) as f64;
        let pad = basis.order() as f64 / (1u64 << basis.coarse_level()) as f64 + noise.mean().abs() + 3.0 * noise.std_dev();
        TableConfig { cutoff: Self::capped_cutoff(cutoff, noise), pad }
    }

    /// Smallest `u` with `|q*(u)| <= 1/2`, found by bisection; `None` when
    /// the modulus never drops that low (degenerate noise).
    pub fn half_power_cutoff(noise: &NoiseModel) -> Option<f64> {
        let modulus = |u: f64| noise.char_fn(u).norm();
        let mut hi = 1.0;
        while modulus(hi) > 0.5 {
            hi *= 2.0;
            if hi > 1e12 {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if modulus(mid) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        Some(hi)
    }

    /// Lowers `cutoff` for Gaussian noise so the characteristic function
    /// stays above [`GAUSSIAN_FLOOR`]; other families pass through.
    pub fn capped_cutoff(cutoff: f64, noise: &NoiseModel) -> f64 {
        if noise.family() == NoiseFamily::Gaussian {
            let limit = (-2.0 * GAUSSIAN_FLOOR.ln()).sqrt() / noise.lambda();
            cutoff.min(limit)
        } else {
            cutoff
        }
    }
}

/// Spectrum of `v_{φ_p φ_q}` for two finest-level functions, `p <= q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSpectrum {
    pub p: usize,
    pub q: usize,
    pub spectrum: Vec<Complex64>,
}

#[derive(Debug, Clone)]
enum Backend {
    Identity,
    Spectral { singles: Vec<Vec<Complex64>>, pairs: Vec<PairSpectrum> },
}

/// Cached deconvolution spectra for one basis and one (rescaled) noise law.
#[derive(Debug, Clone)]
pub struct DeconvTable {
    basis: Arc<WaveletBasis>,
    noise: NoiseModel,
    pad: f64,
    grid: FrequencyGrid,
    backend: Backend,
}

/// Size quantities of `v` at one level, over interior shifts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelNorms {
    pub level: u32,
    /// `sup_y Σ_k |v_{φ_jk}(y)|²`.
    pub sup_single: f64,
    /// `Σ_k ∫ |v_{φ_jk}|²`.
    pub energy_single: f64,
    /// `sup_y Σ_{k,k'} |v_{φ_jk φ_jk'}(y)|²`.
    pub sup_pair: f64,
    /// `Σ_{k,k'} ∫ |v_{φ_jk φ_jk'}|²`.
    pub energy_pair: f64,
}

fn piecewise<'a>(s: &'a SampledFn, basis: &WaveletBasis) -> Piecewise<'a> {
    let last = basis.node_count() - 1;
    Piecewise {
        values: &s.values,
        origin: s.start as f64 * basis.step(),
        step: basis.step(),
        cut_left: s.start == 0,
        cut_right: s.end() == last + 1,
    }
}

/// Exact transform of the product of two interpolants: the interpolant of
/// the node products, less one bubble per cell where both slopes are nonzero.
fn product_transform(a: &SampledFn, b: &SampledFn, basis: &WaveletBasis, grid: &FrequencyGrid) -> Vec<Complex64> {
    let prod = a.product(b);
    let mut spectrum = fourier::p1_transform(piecewise(&prod, basis), grid);
    let cells = basis.node_count() - 1;
    let first = a.start.max(b.start).saturating_sub(1);
    let last = a.end().min(b.end()).min(cells);
    if first < last {
        let weights: Vec<f64> =
            (first..last).map(|c| -(a.at(c + 1) - a.at(c)) * (b.at(c + 1) - b.at(c))).collect();
        let bubbles = fourier::bubble_transform(&weights, first, basis.step(), grid);
        for (s, e) in spectrum.iter_mut().zip(bubbles) {
            *s += e;
        }
    }
    spectrum
}

fn overlaps(a: &SampledFn, b: &SampledFn) -> bool {
    a.product(b).values.iter().any(|v| *v != 0.0)
}

fn axpy(acc: &mut [Complex64], weight: f64, x: &[Complex64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += weight * v;
    }
}

impl DeconvTable {
    /// Transforms every finest-level function and overlapping pair.
    pub fn build(basis: Arc<WaveletBasis>, noise: &NoiseModel, config: TableConfig) -> Result<Self> {
        if !(config.pad >= 0.0 && config.pad.is_finite()) {
            return Err(Error::invalid(format!("pad must be a nonnegative number, got {}", config.pad)));
        }
        let grid = FrequencyGrid::new(config.cutoff, 1.0 + 2.0 * config.pad)?;
        if noise.family() == NoiseFamily::Degenerate {
            return Ok(DeconvTable { basis, noise: noise.clone(), pad: config.pad, grid, backend: Backend::Identity });
        }
        let divisors = fourier::noise_divisors(&grid, noise)?;
        let fine = basis.fine_functions();
        let invert = |t: Vec<Complex64>| -> Vec<Complex64> { t.into_iter().zip(&divisors).map(|(t, q)| t / q).collect() };
        let singles: Vec<Vec<Complex64>> =
            fine.par_iter().map(|f| invert(fourier::p1_transform(piecewise(&f.samples, &basis), &grid))).collect();
        let index: Vec<(usize, usize)> = (0..fine.len())
            .flat_map(|p| (p..fine.len()).map(move |q| (p, q)))
            .filter(|&(p, q)| overlaps(&fine[p].samples, &fine[q].samples))
            .collect();
        let pairs = index
            .into_par_iter()
            .map(|(p, q)| {
                PairSpectrum { p, q, spectrum: invert(product_transform(&fine[p].samples, &fine[q].samples, &basis, &grid)) }
            })
            .collect();
        Ok(DeconvTable { basis, noise: noise.clone(), pad: config.pad, grid, backend: Backend::Spectral { singles, pairs } })
    }

    /// Reassembles a table from stored spectra; the basis must be the one
    /// they were computed for.
    pub fn from_parts(
        basis: Arc<WaveletBasis>,
        noise: NoiseModel,
        pad: f64,
        grid: FrequencyGrid,
        singles: Vec<Vec<Complex64>>,
        pairs: Vec<PairSpectrum>,
    ) -> Result<Self> {
        if noise.family() == NoiseFamily::Degenerate {
            return Ok(DeconvTable { basis, noise, pad, grid, backend: Backend::Identity });
        }
        let fine = basis.fine_functions().len();
        let width = grid.half() + 1;
        if singles.len() != fine || singles.iter().chain(pairs.iter().map(|p| &p.spectrum)).any(|s| s.len() != width) {
            return Err(Error::TableMismatch("spectrum count or length differs from the basis".into()));
        }
        if pairs.windows(2).any(|w| (w[0].p, w[0].q) >= (w[1].p, w[1].q)) || pairs.iter().any(|p| p.q >= fine || p.p > p.q) {
            return Err(Error::TableMismatch("pair list is not sorted or indexes unknown functions".into()));
        }
        Ok(DeconvTable { basis, noise, pad, grid, backend: Backend::Spectral { singles, pairs } })
    }

    pub fn basis(&self) -> &Arc<WaveletBasis> {
        &self.basis
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn pad(&self) -> f64 {
        self.pad
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.backend, Backend::Identity)
    }

    /// `[-pad, 1 + pad]`.
    pub fn window(&self) -> (f64, f64) {
        (-self.pad, 1.0 + self.pad)
    }

    pub fn fine_spectra(&self) -> &[Vec<Complex64>] {
        match &self.backend {
            Backend::Identity => &[],
            Backend::Spectral { singles, .. } => singles,
        }
    }

    pub fn pair_spectra(&self) -> &[PairSpectrum] {
        match &self.backend {
            Backend::Identity => &[],
            Backend::Spectral { pairs, .. } => pairs,
        }
    }

    pub fn check_range(&self, y: f64) -> Result<()> {
        let (lo, hi) = self.window();
        if !(lo..=hi).contains(&y) {
            return Err(Error::OutOfDomain { x: y, lo, hi });
        }
        Ok(())
    }

    fn fine_pair(&self, p: usize, q: usize) -> Option<&[Complex64]> {
        let (p, q) = if p <= q { (p, q) } else { (q, p) };
        let pairs = self.pair_spectra();
        pairs.binary_search_by(|e| (e.p, e.q).cmp(&(p, q))).ok().map(|i| pairs[i].spectrum.as_slice())
    }

    fn expansion(&self, idx: BasisIndex) -> Result<&Expansion> {
        Ok(&self.basis.function(idx)?.expansion)
    }

    /// Spectrum of `v_{φ_λ}` on the table's frequency grid.
    pub fn spectrum(&self, idx: BasisIndex) -> Result<Vec<Complex64>> {
        match &self.backend {
            Backend::Identity => {
                let s = &self.basis.function(idx)?.samples;
                Ok(fourier::p1_transform(piecewise(s, &self.basis), &self.grid))
            }
            Backend::Spectral { singles, .. } => {
                let mut acc = vec![Complex64::new(0.0, 0.0); self.grid.half() + 1];
                for (p, c) in self.expansion(idx)?.iter() {
                    axpy(&mut acc, c, &singles[p]);
                }
                Ok(acc)
            }
        }
    }

    /// Spectrum of `v_{φ_λ φ_λ'}`; the supports must overlap.
    pub fn pair_spectrum(&self, a: BasisIndex, b: BasisIndex) -> Result<Vec<Complex64>> {
        let (fa, fb) = (self.basis.function(a)?, self.basis.function(b)?);
        if !overlaps(&fa.samples, &fb.samples) {
            return Err(Error::PairNotStored(a, b));
        }
        match &self.backend {
            Backend::Identity => Ok(product_transform(&fa.samples, &fb.samples, &self.basis, &self.grid)),
            Backend::Spectral { .. } => {
                let mut acc = vec![Complex64::new(0.0, 0.0); self.grid.half() + 1];
                for (p, cp) in fa.expansion.iter() {
                    for (q, cq) in fb.expansion.iter() {
                        if let Some(s) = self.fine_pair(p, q) {
                            axpy(&mut acc, cp * cq, s);
                        }
                    }
                }
                Ok(acc)
            }
        }
    }

    fn basis_value(&self, idx: BasisIndex, y: f64) -> Result<f64> {
        if (0.0..=1.0).contains(&y) {
            self.basis.eval(idx, y)
        } else {
            self.basis.function(idx).map(|_| 0.0)
        }
    }

    /// `v_{φ_λ}(y)` for `y` in the padded window.
    pub fn eval_v(&self, idx: BasisIndex, y: f64) -> Result<f64> {
        self.check_range(y)?;
        match self.backend {
            Backend::Identity => self.basis_value(idx, y),
            Backend::Spectral { .. } => Ok(fourier::invert_at(&self.spectrum(idx)?, &self.grid, y)),
        }
    }

    /// `v_{φ_λ φ_λ'}(y)`. Pairs may sit at different levels but must overlap.
    pub fn eval_v_pair(&self, a: BasisIndex, b: BasisIndex, y: f64) -> Result<f64> {
        self.check_range(y)?;
        // Canonical order makes the result exactly symmetric.
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        match self.backend {
            Backend::Identity => {
                let (fa, fb) = (self.basis.function(a)?, self.basis.function(b)?);
                if !overlaps(&fa.samples, &fb.samples) {
                    return Err(Error::PairNotStored(a, b));
                }
                Ok(self.basis_value(a, y)? * self.basis_value(b, y)?)
            }
            Backend::Spectral { .. } => Ok(fourier::invert_at(&self.pair_spectrum(a, b)?, &self.grid, y)),
        }
    }

    /// `v_{φ_λ}` sampled on `points` equispaced nodes of the window.
    pub fn sample_v(&self, idx: BasisIndex, points: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let (lo, _) = self.window();
        let (dy, values) = fourier::synthesize(&self.spectrum(idx)?, &self.grid, lo, points);
        Ok(((0..values.len()).map(|i| lo + i as f64 * dy).collect(), values))
    }

    fn check_all(&self, ys: &[f64]) -> Result<()> {
        ys.iter().try_for_each(|&y| self.check_range(y))
    }

    /// `n × 2^F` matrix of `v_{φ_p}(y_i)` over the finest-level functions.
    pub fn fine_values(&self, ys: &[f64]) -> Result<DMatrix<f64>> {
        self.check_all(ys)?;
        let fine = self.basis.fine_functions();
        match &self.backend {
            Backend::Identity => {
                let grid = self.basis.grid();
                Ok(DMatrix::from_fn(ys.len(), fine.len(), |i, p| {
                    let y = ys[i];
                    if (0.0..=1.0).contains(&y) {
                        interpolate(&fine[p].samples, y, grid)
                    } else {
                        0.0
                    }
                }))
            }
            Backend::Spectral { singles, .. } => {
                let width = self.grid.half() + 1;
                let (cos, sin) = self.phases(ys);
                let weight = |k: usize| if k == 0 { 1.0 } else { 2.0 } / self.grid.period();
                let re = DMatrix::from_fn(width, fine.len(), |k, p| weight(k) * singles[p][k].re);
                let im = DMatrix::from_fn(width, fine.len(), |k, p| weight(k) * singles[p][k].im);
                Ok(cos * re - sin * im)
            }
        }
    }

    /// `cos(u_k y_i)` and `sin(u_k y_i)` as `n × (K+1)` matrices.
    fn phases(&self, ys: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let width = self.grid.half() + 1;
        let mut cos = DMatrix::zeros(ys.len(), width);
        let mut sin = DMatrix::zeros(ys.len(), width);
        for (i, &y) in ys.iter().enumerate() {
            for k in 0..width {
                let (s, c) = (self.grid.frequency(k) * y).sin_cos();
                cos[(i, k)] = c;
                sin[(i, k)] = s;
            }
        }
        (cos, sin)
    }

    /// Symmetric `2^F × 2^F` matrix of `(1/n) Σ_i v_{φ_p φ_q}(y_i)`.
    ///
    /// The spectral backend sums each stored pair spectrum against the
    /// empirical characteristic function of the `y_i`, which is the exact
    /// mean of the truncated inverse at the data points.
    pub fn fine_pair_means(&self, ys: &[f64]) -> Result<DMatrix<f64>> {
        if ys.is_empty() {
            return Err(Error::invalid("pair means need at least one point"));
        }
        self.check_all(ys)?;
        let n = ys.len() as f64;
        match &self.backend {
            Backend::Identity => {
                let v = self.fine_values(ys)?;
                Ok(v.transpose() * v / n)
            }
            Backend::Spectral { pairs, .. } => {
                let fine = self.basis.fine_functions().len();
                let width = self.grid.half() + 1;
                let mut ecf = vec![Complex64::new(0.0, 0.0); width];
                for &y in ys {
                    for (k, e) in ecf.iter_mut().enumerate() {
                        *e += Complex64::from_polar(1.0, self.grid.frequency(k) * y);
                    }
                }
                for e in ecf.iter_mut() {
                    *e /= n;
                }
                let mut out = DMatrix::zeros(fine, fine);
                for pair in pairs {
                    let mut acc = 0.5 * (pair.spectrum[0] * ecf[0]).re;
                    for k in 1..width {
                        acc += (pair.spectrum[k] * ecf[k]).re;
                    }
                    let value = 2.0 * acc / self.grid.period();
                    out[(pair.p, pair.q)] = value;
                    out[(pair.q, pair.p)] = value;
                }
                Ok(out)
            }
        }
    }

    /// Size quantities of `v` over the interior scaling functions of level
    /// `j`, which may be any level from `J` to the finest one.
    pub fn level_norms(&self, level: u32) -> Result<LevelNorms> {
        let basis = &self.basis;
        let fine_level = basis.fine_level();
        if level < basis.coarse_level() || level > fine_level {
            return Err(Error::LevelOutOfRange { level, min: basis.coarse_level(), max: fine_level });
        }
        let order = basis.order();
        let shifts: Vec<usize> = (order..(1usize << level) - order).collect();
        if shifts.is_empty() {
            return Err(Error::invalid(format!("level {level} has no interior functions")));
        }
        let points = 8 * (2 * self.grid.half() + 1);
        let lo = -self.pad;

        let mut sup_sum = Vec::new();
        let mut energy_single = 0.0;
        for &k in &shifts {
            let spec = self.level_spectrum(level, k)?;
            energy_single += fourier::period_energy(&spec, &self.grid);
            let (_, values) = fourier::synthesize(&spec, &self.grid, lo, points);
            accumulate_squares(&mut sup_sum, &values);
        }
        let sup_single = sup_sum.iter().copied().fold(0.0, f64::max);

        let mut pair_sum = Vec::new();
        let mut energy_pair = 0.0;
        for &k in &shifts {
            for &l in &shifts {
                if k.abs_diff(l) > 2 * order - 2 {
                    continue;
                }
                let spec = self.level_pair_spectrum(level, k, l)?;
                energy_pair += fourier::period_energy(&spec, &self.grid);
                let (_, values) = fourier::synthesize(&spec, &self.grid, lo, points);
                accumulate_squares(&mut pair_sum, &values);
            }
        }
        let sup_pair = pair_sum.iter().copied().fold(0.0, f64::max);
        Ok(LevelNorms { level, sup_single, energy_single, sup_pair, energy_pair })
    }

    fn level_spectrum(&self, level: u32, k: usize) -> Result<Vec<Complex64>> {
        if level == self.basis.fine_level() {
            return match &self.backend {
                Backend::Spectral { singles, .. } => Ok(singles[k].clone()),
                Backend::Identity => {
                    let s = &self.basis.fine_functions()[k].samples;
                    Ok(fourier::p1_transform(piecewise(s, &self.basis), &self.grid))
                }
            };
        }
        self.spectrum(BasisIndex::scaling(level, k))
    }

    fn level_pair_spectrum(&self, level: u32, k: usize, l: usize) -> Result<Vec<Complex64>> {
        if level == self.basis.fine_level() {
            return match &self.backend {
                Backend::Spectral { .. } => {
                    self.fine_pair(k, l).map(<[Complex64]>::to_vec).ok_or(Error::PairNotStored(BasisIndex::scaling(level, k), BasisIndex::scaling(level, l)))
                }
                Backend::Identity => {
                    let fine = self.basis.fine_functions();
                    Ok(product_transform(&fine[k].samples, &fine[l].samples, &self.basis, &self.grid))
                }
            };
        }
        self.pair_spectrum(BasisIndex::scaling(level, k), BasisIndex::scaling(level, l))
    }
}

fn accumulate_squares(acc: &mut Vec<f64>, values: &[f64]) {
    if acc.is_empty() {
        acc.resize(values.len(), 0.0);
    }
    for (a, v) in acc.iter_mut().zip(values) {
        *a += v * v;
    }
}

/// Least-squares slope of `log2 value` against the level.
pub fn level_slope(levels: &[u32], values: &[f64]) -> f64 {
    let n = levels.len() as f64;
    let xs: Vec<f64> = levels.iter().map(|&j| j as f64).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
