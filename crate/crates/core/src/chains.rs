//! Test chains with closed-form transition densities.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::estimator::Interval;
use crate::noise::NoiseModel;
use crate::special::bessel_i_scaled;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainKind {
    ArI,
    ArIi,
    SqrtCir,
    CirIii,
    CirIv,
    Arch,
}

impl ChainKind {
    pub const ALL: [ChainKind; 6] = [ChainKind::ArI, ChainKind::ArIi, ChainKind::SqrtCir, ChainKind::CirIii, ChainKind::CirIv, ChainKind::Arch];

    pub fn label(self) -> &'static str {
        match self {
            ChainKind::ArI => "AR(i)",
            ChainKind::ArIi => "AR(ii)",
            ChainKind::SqrtCir => "sqrtCIR",
            ChainKind::CirIii => "CIR(iii)",
            ChainKind::CirIv => "CIR(iv)",
            ChainKind::Arch => "ARCH",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "ar_i" | "ar(i)" | "ari" => ChainKind::ArI,
            "ar_ii" | "ar(ii)" | "arii" => ChainKind::ArIi,
            "sqrt_cir" | "sqrtcir" => ChainKind::SqrtCir,
            "cir_iii" | "cir(iii)" | "ciriii" => ChainKind::CirIii,
            "cir_iv" | "cir(iv)" | "ciriv" => ChainKind::CirIv,
            "arch" => ChainKind::Arch,
            other => return Err(Error::Config(format!("unknown chain '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum ChainParams {
    /// `X' = aX + b + σε`.
    Ar { a: f64, b: f64, sigma2: f64 },
    /// Radial process of `δ` coordinates `ξ' = aξ + βε`; `squared`
    /// selects `|ξ|²` instead of `|ξ|`.
    Radial { a: f64, beta: f64, delta: u32, squared: bool },
    /// `X' = sin X + (cos X + 3) ε`.
    Arch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    pub kind: ChainKind,
    pub params: ChainParams,
    pub domain: Interval,
    pub burn_in: usize,
}

pub const ARCH_BURN_IN: usize = 500;

impl ChainModel {
    pub fn preset(kind: ChainKind) -> Self {
        let (params, lo, hi) = match kind {
            ChainKind::ArI => (ChainParams::Ar { a: 2.0 / 3.0, b: 0.0, sigma2: 5.0 / 9.0 }, -2.0, 2.0),
            ChainKind::ArIi => (ChainParams::Ar { a: 0.5, b: 3.0, sigma2: 1.0 }, 4.0, 8.0),
            ChainKind::SqrtCir => (ChainParams::Radial { a: 0.5, beta: 3.0, delta: 3, squared: false }, 2.0, 10.0),
            ChainKind::CirIii => (ChainParams::Radial { a: 0.75, beta: (7.0f64 / 48.0).sqrt(), delta: 4, squared: true }, 0.1, 3.0),
            ChainKind::CirIv => (ChainParams::Radial { a: 1.0 / 3.0, beta: 0.75, delta: 2, squared: true }, 0.0, 2.0),
            ChainKind::Arch => (ChainParams::Arch, -5.0, 5.0),
        };
        let burn_in = if kind == ChainKind::Arch { ARCH_BURN_IN } else { 0 };
        ChainModel { kind, params, domain: Interval { lo, hi }, burn_in }
    }

    /// Custom parameters for `kind`, checked for stationarity.
    pub fn with_params(kind: ChainKind, params: ChainParams, domain: Interval) -> Result<Self> {
        let mut model = ChainModel::preset(kind);
        if std::mem::discriminant(&model.params) != std::mem::discriminant(&params) {
            return Err(Error::invalid(format!("parameters do not match chain {}", kind.label())));
        }
        if let (ChainParams::Radial { squared: s0, .. }, ChainParams::Radial { squared: s1, .. }) = (model.params, params) {
            if s0 != s1 {
                return Err(Error::invalid("radial parameters do not match the chain kind"));
            }
        }
        model.params = params;
        model.domain = Interval::new(domain.lo, domain.hi)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self.params {
            ChainParams::Ar { a, b, sigma2 } => {
                if !(a.abs() < 1.0) {
                    return Err(Error::invalid(format!("|a| = {} must be below 1", a.abs())));
                }
                if !(sigma2 > 0.0 && b.is_finite()) {
                    return Err(Error::invalid("AR needs sigma2 > 0 and finite b"));
                }
            }
            ChainParams::Radial { a, beta, delta, .. } => {
                if !(a.abs() < 1.0) {
                    return Err(Error::invalid(format!("|a| = {} must be below 1", a.abs())));
                }
                if !(beta > 0.0) || delta == 0 {
                    return Err(Error::invalid("radial chain needs beta > 0 and delta >= 1"));
                }
                if a == 0.0 {
                    return Err(Error::invalid("radial chain needs a != 0"));
                }
            }
            ChainParams::Arch => {}
        }
        Ok(())
    }

    /// Mean of the stationary law, when it has a closed form.
    pub fn stationary_mean(&self) -> Option<f64> {
        match self.params {
            ChainParams::Ar { a, b, .. } => Some(b / (1.0 - a)),
            ChainParams::Radial { a, beta, delta, squared: true } => Some(delta as f64 * beta * beta / (1.0 - a * a)),
            _ => None,
        }
    }

    /// Variance of the stationary law, when it has a closed form.
    pub fn stationary_variance(&self) -> Option<f64> {
        match self.params {
            ChainParams::Ar { a, sigma2, .. } => Some(sigma2 / (1.0 - a * a)),
            ChainParams::Radial { a, beta, delta, squared: true } => {
                let s = beta * beta / (1.0 - a * a);
                Some(2.0 * delta as f64 * s * s)
            }
            _ => None,
        }
    }

    /// `X_0, ..., X_n`, started from the stationary law (after burn-in for ARCH).
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(Error::invalid("simulate needs n >= 2"));
        }
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = move || -> f64 { rng.sample(StandardNormal) };
        let mut path = Vec::with_capacity(n + 1);
        match self.params {
            ChainParams::Ar { a, b, sigma2 } => {
                let sd = sigma2.sqrt();
                let mut x = b / (1.0 - a) + (sigma2 / (1.0 - a * a)).sqrt() * gauss();
                path.push(x);
                for _ in 0..n {
                    x = a * x + b + sd * gauss();
                    path.push(x);
                }
            }
            ChainParams::Radial { a, beta, delta, squared } => {
                let spread = beta / (1.0 - a * a).sqrt();
                let mut xi: Vec<f64> = (0..delta).map(|_| spread * gauss()).collect();
                let radius = |xi: &[f64]| {
                    let s: f64 = xi.iter().map(|v| v * v).sum();
                    if squared {
                        s
                    } else {
                        s.sqrt()
                    }
                };
                path.push(radius(&xi));
                for _ in 0..n {
                    for v in xi.iter_mut() {
                        *v = a * *v + beta * gauss();
                    }
                    path.push(radius(&xi));
                }
            }
            ChainParams::Arch => {
                let mut x = 0.0f64;
                for _ in 0..self.burn_in {
                    x = x.sin() + (x.cos() + 3.0) * gauss();
                }
                path.push(x);
                for _ in 0..n {
                    x = x.sin() + (x.cos() + 3.0) * gauss();
                    path.push(x);
                }
            }
        }
        Ok(path)
    }

    /// Density of `X_{i+1}` at `y` given `X_i = x`.
    pub fn true_transition(&self, x: f64, y: f64) -> Result<f64> {
        Ok(match self.params {
            ChainParams::Ar { a, b, sigma2 } => {
                let z = y - a * x - b;
                (-z * z / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
            }
            ChainParams::Arch => {
                let s = x.cos() + 3.0;
                let z = (y - x.sin()) / s;
                (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() / s
            }
            ChainParams::Radial { a, beta, delta, squared } => {
                let nu = delta as f64 / 2.0 - 1.0;
                let b2 = beta * beta;
                if squared {
                    if x < 0.0 {
                        return Err(Error::OutOfDomain { x, lo: 0.0, hi: f64::INFINITY });
                    }
                    if y < 0.0 || (y == 0.0 && nu > 0.0) {
                        return Ok(0.0);
                    }
                    if x == 0.0 {
                        // Limit x -> 0: Gamma law with shape δ/2 and rate 1/(2β²).
                        let r = y / (2.0 * b2);
                        let power = if nu == 0.0 { 0.0 } else { nu * r.ln() };
                        return Ok((power - r - ln_gamma(nu + 1.0)).exp() / (2.0 * b2));
                    }
                    let z = a.abs() * (x * y).sqrt() / b2;
                    let shift = y.sqrt() - a.abs() * x.sqrt();
                    let ratio = y / (a * a * x);
                    (-shift * shift / (2.0 * b2)).exp() * bessel_i_scaled(nu.abs(), z) * ratio.powf(nu / 2.0) / (2.0 * b2)
                } else {
                    if x <= 0.0 {
                        return Err(Error::OutOfDomain { x, lo: 0.0, hi: f64::INFINITY });
                    }
                    if y <= 0.0 {
                        return Ok(0.0);
                    }
                    let ax = a.abs() * x;
                    let z = ax * y / b2;
                    (-(y - ax) * (y - ax) / (2.0 * b2)).exp() * bessel_i_scaled(nu.abs(), z) * (y / b2) * (y / ax).powf(nu)
                }
            }
        })
    }
}

/// `Y_i = X_i + ε_i` with noise drawn independently of the path.
pub fn observe(path: &[f64], noise: &NoiseModel, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = noise.sample_with(&mut rng, path.len());
    path.iter().zip(eps).map(|(x, e)| x + e).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64, cells: usize) -> f64 {
        // Composite Simpson.
        let h = (hi - lo) / cells as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..cells {
            s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn substitution_values() {
        let ar = ChainModel::preset(ChainKind::ArI);
        let want = 1.0 / ((5.0f64 / 9.0).sqrt() * (2.0 * std::f64::consts::PI).sqrt());
        assert!((ar.true_transition(0.0, 0.0).unwrap() - want).abs() < 1e-14);
        assert!((want - 0.5352).abs() < 1e-4);
        let arch = ChainModel::preset(ChainKind::Arch);
        assert!((arch.true_transition(0.0, 0.0).unwrap() - 0.0997356).abs() < 1e-6);
    }

    #[test]
    fn transitions_normalize() {
        for kind in ChainKind::ALL {
            let chain = ChainModel::preset(kind);
            let d = chain.domain;
            for i in 0..5 {
                let x = d.lo + (d.width()) * (0.05 + 0.225 * i as f64);
                let x = if x <= 0.0 { 0.05 } else { x };
                let (lo, hi) = match chain.params {
                    ChainParams::Radial { .. } => (0.0, 60.0),
                    _ => (-60.0, 60.0),
                };
                let total = integrate(|y| chain.true_transition(x, y).unwrap(), lo, hi, 200_000);
                assert!((total - 1.0).abs() < 1e-6, "{} at x={x}: {total}", kind.label());
            }
        }
    }

    #[test]
    fn cir_origin_is_the_limit() {
        for kind in [ChainKind::CirIii, ChainKind::CirIv] {
            let chain = ChainModel::preset(kind);
            for y in [0.2, 1.0, 2.5] {
                let at = chain.true_transition(0.0, y).unwrap();
                let near = chain.true_transition(1e-9, y).unwrap();
                assert!((at - near).abs() < 1e-6 * at, "{} y={y}", kind.label());
            }
        }
        let iv = ChainModel::preset(ChainKind::CirIv);
        let corner = iv.true_transition(0.0, 0.0).unwrap();
        assert!((corner - 1.0 / (2.0 * 0.5625)).abs() < 1e-14);
        assert!(ChainModel::preset(ChainKind::SqrtCir).true_transition(0.0, 1.0).is_err());
        assert!(ChainModel::preset(ChainKind::CirIv).true_transition(-0.1, 1.0).is_err());
        assert_eq!(ChainModel::preset(ChainKind::SqrtCir).true_transition(3.0, -1.0).unwrap(), 0.0);
    }

    #[test]
    fn stationary_moments() {
        let ar = ChainModel::preset(ChainKind::ArI);
        assert!((ar.stationary_variance().unwrap() - 1.0).abs() < 1e-12);
        let path = ar.simulate(100_000, 11).unwrap();
        let mean = path.iter().sum::<f64>() / path.len() as f64;
        let var = path.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / path.len() as f64;
        assert!((var - 1.0).abs() < 0.05);

        let cir = ChainModel::preset(ChainKind::CirIv);
        let want = 81.0 / 64.0;
        assert!((cir.stationary_mean().unwrap() - want).abs() < 1e-12);
        let path = cir.simulate(100_000, 12).unwrap();
        let mean = path.iter().sum::<f64>() / path.len() as f64;
        assert!((mean / want - 1.0).abs() < 0.05);

        let cir3 = ChainModel::preset(ChainKind::CirIii);
        let path = cir3.simulate(100_000, 13).unwrap();
        let q = path.len() / 4;
        let first = path[..q].iter().sum::<f64>() / q as f64;
        let last = path[path.len() - q..].iter().sum::<f64>() / q as f64;
        let sd = cir3.stationary_variance().unwrap().sqrt();
        // Generous band for the autocorrelated path.
        assert!((first - last).abs() < 3.0 * sd * (2.0 / q as f64).sqrt() * 4.0);
    }

    #[test]
    fn simulation_is_deterministic_and_validated() {
        for kind in ChainKind::ALL {
            let chain = ChainModel::preset(kind);
            assert_eq!(chain.simulate(50, 3).unwrap(), chain.simulate(50, 3).unwrap());
            assert_eq!(chain.simulate(50, 3).unwrap().len(), 51);
        }
        assert!(ChainModel::preset(ChainKind::ArI).simulate(1, 0).is_err());
        let d = Interval::new(-1.0, 1.0).unwrap();
        assert!(ChainModel::with_params(ChainKind::ArI, ChainParams::Ar { a: 1.0, b: 0.0, sigma2: 1.0 }, d).is_err());
        assert!(ChainModel::with_params(ChainKind::CirIv, ChainParams::Radial { a: -1.2, beta: 1.0, delta: 2, squared: true }, d).is_err());
        assert!(ChainModel::with_params(ChainKind::ArI, ChainParams::Arch, d).is_err());
    }

    #[test]
    fn chapman_kolmogorov_for_ar() {
        let chain = ChainModel::preset(ChainKind::ArI);
        let (a, s2) = (2.0 / 3.0, 5.0 / 9.0);
        for (x, y) in [(0.0, 0.3), (-1.2, 0.5), (1.5, -0.7)] {
            let two = integrate(|z| chain.true_transition(x, z).unwrap() * chain.true_transition(z, y).unwrap(), -15.0, 15.0, 20_000);
            let var = s2 * (1.0 + a * a);
            let m = a * a * x;
            let exact = (-(y - m) * (y - m) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
            assert!((two - exact).abs() < 1e-4);
        }
    }

    #[test]
    fn empirical_slice_matches_transition() {
        let chain = ChainModel::preset(ChainKind::ArI);
        let path = chain.simulate(100_000, 21).unwrap();
        let next: Vec<f64> = path.windows(2).filter(|w| w[0].abs() < 0.05).map(|w| w[1]).collect();
        let total = next.len() as f64;
        for (lo, hi) in [(-0.5, -0.25), (0.0, 0.25), (0.5, 0.75)] {
            let p = integrate(|y| chain.true_transition(0.0, y).unwrap(), lo, hi, 200);
            let hit = next.iter().filter(|y| (lo..hi).contains(*y)).count() as f64 / total;
            let se = (p * (1.0 - p) / total).sqrt();
            assert!((hit - p).abs() < 3.0 * se + 0.01, "bin {lo}: {hit} vs {p}");
        }
    }

    #[test]
    fn observation_noise() {
        let path = ChainModel::preset(ChainKind::ArI).simulate(100_000, 5).unwrap();
        assert_eq!(observe(&path, &NoiseModel::degenerate(), 1), path);
        let noise = NoiseModel::laplace(5.0).unwrap();
        let y = observe(&path, &noise, 2);
        let eps: Vec<f64> = y.iter().zip(&path).map(|(a, b)| a - b).collect();
        let n = eps.len() as f64;
        let me = eps.iter().sum::<f64>() / n;
        let var = eps.iter().map(|e| (e - me).powi(2)).sum::<f64>() / n;
        assert!((var / noise.variance() - 1.0).abs() < 0.05);
        let mx = path.iter().sum::<f64>() / n;
        let cov = path.iter().zip(&eps).map(|(x, e)| (x - mx) * (e - me)).sum::<f64>() / n;
        let sx = (path.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n).sqrt();
        assert!((cov / (sx * var.sqrt())).abs() < 3.0 / n.sqrt());
    }
}
