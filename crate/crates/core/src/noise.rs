//! Known additive error distributions.
//!
//! Every model exposes its density, its characteristic function under the
//! convention `t*(u) = ∫ e^{-ixu} t(x) dx`, a seeded sampler, and, for the
//! ordinary smooth families, the decay exponent `gamma` together with the
//! constant `k0` of the lower bound `|q*(u)| >= k0 (u² + 1)^{-gamma/2}`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma as GammaDist, Normal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Laplace,
    Gamma,
    SymmetricGamma,
    Gaussian,
    /// Point mass at zero (`q* ≡ 1`). Only meant as a test surrogate: it turns
    /// the deconvolution operators into the identity.
    Degenerate,
}

impl NoiseFamily {
    pub fn name(self) -> &'static str {
        match self {
            NoiseFamily::Laplace => "laplace",
            NoiseFamily::Gamma => "gamma",
            NoiseFamily::SymmetricGamma => "symmetric_gamma",
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Degenerate => "degenerate",
        }
    }
}

/// Plain description of a noise model as found in configuration files
/// (`noise.family`, `noise.lambda`, `noise.zeta`, `noise.mu`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    #[serde(default = "one")]
    pub lambda: f64,
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl NoiseSpec {
    pub fn laplace(lambda: f64) -> Self {
        NoiseSpec { family: NoiseFamily::Laplace, lambda, zeta: None, mu: None }
    }

    pub fn gaussian(lambda: f64) -> Self {
        NoiseSpec { family: NoiseFamily::Gaussian, lambda, zeta: None, mu: None }
    }

    pub fn build(&self) -> Result<NoiseModel> {
        let zeta = || {
            self.zeta.ok_or_else(|| Error::Config(format!("noise.zeta is required for {} noise", self.family.name())))
        };
        match self.family {
            NoiseFamily::Laplace => NoiseModel::laplace_at(self.lambda, self.mu.unwrap_or(0.0)),
            NoiseFamily::Gamma => NoiseModel::gamma(self.lambda, zeta()?),
            NoiseFamily::SymmetricGamma => NoiseModel::symmetric_gamma(self.lambda, zeta()?),
            NoiseFamily::Gaussian => NoiseModel::gaussian(self.lambda),
            NoiseFamily::Degenerate => Ok(NoiseModel::degenerate()),
        }
    }

    /// Short label used in report tables.
    pub fn label(&self) -> String {
        match self.family {
            NoiseFamily::Laplace => "Lapl".to_string(),
            NoiseFamily::Gaussian => "Gauss".to_string(),
            f => f.name().to_string(),
        }
    }
}

/// An immutable noise model. `lambda` is the rate for the Laplace and Gamma
/// families and the standard deviation for the Gaussian family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    family: NoiseFamily,
    lambda: f64,
    zeta: f64,
    mu: f64,
    gamma: Option<f64>,
    k0: Option<f64>,
}

const K0_GRID_MAX: f64 = 1e6;
const K0_GRID_POINTS: usize = 4001;

impl NoiseModel {
    pub fn laplace(lambda: f64) -> Result<Self> {
        Self::laplace_at(lambda, 0.0)
    }

    pub fn laplace_at(lambda: f64, mu: f64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        if !mu.is_finite() {
            return Err(Error::invalid("mu must be finite"));
        }
        Ok(Self::with_constants(NoiseFamily::Laplace, lambda, 1.0, mu, Some(2.0)))
    }

    pub fn gamma(lambda: f64, zeta: f64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        check_positive("zeta", zeta)?;
        Ok(Self::with_constants(NoiseFamily::Gamma, lambda, zeta, 0.0, Some(zeta)))
    }

    /// Symmetric Gamma noise. Its characteristic function
    /// `(1 + u²/λ²)^{-ζ/2} cos(ζ atan(u/λ))` has real zeros as soon as
    /// `ζ > 1`, so only `ζ <= 1` is accepted (`ζ = 1` is the Laplace law).
    pub fn symmetric_gamma(lambda: f64, zeta: f64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        check_positive("zeta", zeta)?;
        if zeta > 1.0 {
            return Err(Error::invalid(format!(
                "symmetric gamma with zeta = {zeta} > 1 has a vanishing characteristic function"
            )));
        }
        let odd_integer = zeta.fract() == 0.0 && (zeta as i64) % 2 == 1;
        let gamma = if odd_integer { zeta + 1.0 } else { zeta };
        Ok(Self::with_constants(NoiseFamily::SymmetricGamma, lambda, zeta, 0.0, Some(gamma)))
    }

    /// Gaussian noise with standard deviation `lambda`. Supersmooth: no
    /// `gamma`, no `k0`.
    pub fn gaussian(lambda: f64) -> Result<Self> {
        check_positive("lambda", lambda)?;
        Ok(NoiseModel { family: NoiseFamily::Gaussian, lambda, zeta: 1.0, mu: 0.0, gamma: None, k0: None })
    }

    pub fn degenerate() -> Self {
        NoiseModel { family: NoiseFamily::Degenerate, lambda: 1.0, zeta: 1.0, mu: 0.0, gamma: Some(0.0), k0: Some(1.0) }
    }

    fn with_constants(family: NoiseFamily, lambda: f64, zeta: f64, mu: f64, gamma: Option<f64>) -> Self {
        let mut model = NoiseModel { family, lambda, zeta, mu, gamma, k0: None };
        model.k0 = gamma.map(|g| model.fit_k0(g));
        model
    }

    /// Minimum of `|q*(u)| (u² + 1)^{γ/2}` over a log-spaced grid `|u| <= 1e6`.
    fn fit_k0(&self, gamma: f64) -> f64 {
        let lo = -6.0f64;
        let hi = K0_GRID_MAX.log10();
        let mut best = self.char_fn(0.0).norm();
        for i in 0..K0_GRID_POINTS {
            let u = 10f64.powf(lo + (hi - lo) * i as f64 / (K0_GRID_POINTS - 1) as f64);
            let value = self.char_fn(u).norm() * (u * u + 1.0).powf(gamma / 2.0);
            best = best.min(value);
        }
        best
    }

    pub fn family(&self) -> NoiseFamily {
        self.family
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Smoothness exponent `γ`, `None` for the Gaussian family.
    pub fn smoothness(&self) -> Option<f64> {
        self.gamma
    }

    pub fn k0(&self) -> Option<f64> {
        self.k0
    }

    pub fn is_ordinary_smooth(&self) -> bool {
        self.gamma.is_some()
    }

    pub fn spec(&self) -> NoiseSpec {
        let zeta = matches!(self.family, NoiseFamily::Gamma | NoiseFamily::SymmetricGamma).then_some(self.zeta);
        let mu = (self.family == NoiseFamily::Laplace && self.mu != 0.0).then_some(self.mu);
        NoiseSpec { family: self.family, lambda: self.lambda, zeta, mu }
    }

    pub fn density(&self, x: f64) -> f64 {
        let (l, z) = (self.lambda, self.zeta);
        match self.family {
            NoiseFamily::Laplace => 0.5 * l * (-l * (x - self.mu).abs()).exp(),
            NoiseFamily::Gamma => {
                if x <= 0.0 {
                    0.0
                } else {
                    (z * l.ln() + (z - 1.0) * x.ln() - l * x - ln_gamma(z)).exp()
                }
            }
            NoiseFamily::SymmetricGamma => {
                let a = x.abs();
                if a == 0.0 && z < 1.0 {
                    return f64::INFINITY;
                }
                if a == 0.0 {
                    return 0.5 * l;
                }
                0.5 * (z * l.ln() + (z - 1.0) * a.ln() - l * a - ln_gamma(z)).exp()
            }
            NoiseFamily::Gaussian => (-0.5 * (x / l).powi(2)).exp() / (l * (2.0 * PI).sqrt()),
            NoiseFamily::Degenerate => 0.0,
        }
    }

    /// `q*(u) = ∫ e^{-ixu} q(x) dx`.
    pub fn char_fn(&self, u: f64) -> Complex64 {
        let (l, z) = (self.lambda, self.zeta);
        match self.family {
            NoiseFamily::Laplace => {
                let modulus = l * l / (l * l + u * u);
                Complex64::from_polar(modulus, -self.mu * u)
            }
            NoiseFamily::Gamma => Complex64::new(1.0, u / l).powf(-z),
            NoiseFamily::SymmetricGamma => {
                let r = u / l;
                Complex64::new((1.0 + r * r).powf(-z / 2.0) * (z * r.atan()).cos(), 0.0)
            }
            NoiseFamily::Gaussian => Complex64::new((-0.5 * (l * u).powi(2)).exp(), 0.0),
            NoiseFamily::Degenerate => Complex64::new(1.0, 0.0),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.family {
            NoiseFamily::Laplace => self.mu,
            NoiseFamily::Gamma => self.zeta / self.lambda,
            _ => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        let l2 = self.lambda * self.lambda;
        match self.family {
            NoiseFamily::Laplace => 2.0 / l2,
            NoiseFamily::Gamma => self.zeta / l2,
            NoiseFamily::SymmetricGamma => self.zeta * (self.zeta + 1.0) / l2,
            NoiseFamily::Gaussian => l2,
            NoiseFamily::Degenerate => 0.0,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Law of `ε / width`, i.e. the noise seen after mapping an interval of
    /// length `width` onto `[0, 1]`.
    pub fn rescaled(&self, width: f64) -> Result<Self> {
        check_positive("width", width)?;
        match self.family {
            NoiseFamily::Laplace => Self::laplace_at(self.lambda * width, self.mu / width),
            NoiseFamily::Gamma => Self::gamma(self.lambda * width, self.zeta),
            NoiseFamily::SymmetricGamma => Self::symmetric_gamma(self.lambda * width, self.zeta),
            NoiseFamily::Gaussian => Self::gaussian(self.lambda / width),
            NoiseFamily::Degenerate => Ok(Self::degenerate()),
        }
    }

    /// `count` i.i.d. draws, deterministic in `seed`.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        if count == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(self.sample_with(&mut rng, count))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.draw(rng)).collect()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.family {
            NoiseFamily::Laplace => {
                let u: f64 = rng.gen::<f64>() - 0.5;
                self.mu - u.signum() * (1.0 - 2.0 * u.abs()).ln() / self.lambda
            }
            NoiseFamily::Gamma => self.gamma_dist().sample(rng),
            NoiseFamily::SymmetricGamma => {
                let magnitude = self.gamma_dist().sample(rng);
                if rng.gen::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
            NoiseFamily::Gaussian => Normal::new(0.0, self.lambda).expect("positive sd").sample(rng),
            NoiseFamily::Degenerate => 0.0,
        }
    }

    fn gamma_dist(&self) -> GammaDist<f64> {
        GammaDist::new(self.zeta, 1.0 / self.lambda).expect("validated parameters")
    }
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {value}")))
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn catalog() -> Vec<NoiseModel> {
        vec![
            NoiseModel::laplace(5.0).unwrap(),
            NoiseModel::laplace_at(2.0, 0.3).unwrap(),
            NoiseModel::gamma(1.0, 2.0).unwrap(),
            NoiseModel::gamma(3.0, 3.5).unwrap(),
            NoiseModel::symmetric_gamma(2.0, 1.0).unwrap(),
            NoiseModel::symmetric_gamma(2.0, 0.8).unwrap(),
            NoiseModel::gaussian(0.3).unwrap(),
        ]
    }

    #[test]
    fn density_examples() {
        assert_abs_diff_eq!(NoiseModel::laplace(5.0).unwrap().density(0.0), 2.5, epsilon = 1e-15);
        let g = NoiseModel::gaussian(0.3).unwrap().density(0.0);
        assert_abs_diff_eq!(g, 1.0 / (0.3 * (2.0 * PI).sqrt()), epsilon = 1e-12);
        assert_abs_diff_eq!(g, 1.3298, epsilon = 1e-4);
        assert_abs_diff_eq!(NoiseModel::gamma(1.0, 2.0).unwrap().density(1.0), (-1.0f64).exp(), epsilon = 1e-12);
        assert_eq!(NoiseModel::gamma(1.0, 2.0).unwrap().density(-0.5), 0.0);
    }

    #[test]
    fn char_fn_examples() {
        let lap = NoiseModel::laplace(5.0).unwrap();
        assert_abs_diff_eq!(lap.char_fn(0.0).re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(lap.char_fn(5.0).re, 0.5, epsilon = 1e-15);
        let gauss = NoiseModel::gaussian(0.3).unwrap();
        assert_abs_diff_eq!(gauss.char_fn(1.0).re, (-0.045f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(gauss.char_fn(1.0).re, 0.9560, epsilon = 1e-4);
    }

    #[test]
    fn smoothness_exponents() {
        assert_eq!(NoiseModel::laplace(5.0).unwrap().smoothness(), Some(2.0));
        assert_eq!(NoiseModel::gamma(1.0, 2.5).unwrap().smoothness(), Some(2.5));
        assert_eq!(NoiseModel::symmetric_gamma(1.0, 1.0).unwrap().smoothness(), Some(2.0));
        assert_eq!(NoiseModel::symmetric_gamma(1.0, 0.5).unwrap().smoothness(), Some(0.5));
        assert_eq!(NoiseModel::gaussian(1.0).unwrap().smoothness(), None);
        assert!(NoiseModel::symmetric_gamma(1.0, 3.0).is_err());
    }

    #[test]
    fn k0_matches_closed_form() {
        // |q*|(u²+1) = λ²(u²+1)/(λ²+u²) for Laplace: infimum min(1, λ²).
        assert_abs_diff_eq!(NoiseModel::laplace(5.0).unwrap().k0().unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(NoiseModel::laplace(0.5).unwrap().k0().unwrap(), 0.25, epsilon = 1e-6);
        assert_abs_diff_eq!(NoiseModel::gamma(0.5, 2.0).unwrap().k0().unwrap(), 0.25, epsilon = 1e-6);
    }

    #[test]
    fn h1_lower_bound_holds_on_grid() {
        for noise in catalog().into_iter().filter(NoiseModel::is_ordinary_smooth) {
            let (g, k0) = (noise.smoothness().unwrap(), noise.k0().unwrap());
            assert!(k0 > 0.0);
            for i in 0..=2000 {
                let u = -1000.0 + i as f64;
                let bound = k0 * (u * u + 1.0).powf(-g / 2.0);
                assert!(noise.char_fn(u).norm() >= bound * (1.0 - 1e-9), "{noise:?} at u={u}");
            }
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        for noise in catalog() {
            // Integrable singularity of the symmetric gamma law at 0 is skipped.
            if noise.family() == NoiseFamily::SymmetricGamma && noise.zeta() < 1.0 {
                continue;
            }
            let (lo, hi, steps) = (-60.0, 60.0, 1_200_000);
            let h = (hi - lo) / steps as f64;
            let mut total = 0.5 * (noise.density(lo) + noise.density(hi));
            for i in 1..steps {
                total += noise.density(lo + i as f64 * h);
            }
            assert_abs_diff_eq!(total * h, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn char_fn_is_bounded_and_normalized() {
        for noise in catalog() {
            assert_abs_diff_eq!(noise.char_fn(0.0).re, 1.0, epsilon = 1e-14);
            for i in 0..500 {
                let u = -250.0 + i as f64 * 1.01;
                assert!(noise.char_fn(u).norm() <= 1.0 + 1e-14);
            }
        }
    }

    #[test]
    fn char_fn_matches_quadrature_of_density() {
        // Direct Riemann sum of ∫ e^{-ixu} q(x) dx on a window with negligible tail mass.
        for noise in catalog() {
            if noise.family() == NoiseFamily::SymmetricGamma && noise.zeta() < 1.0 {
                continue;
            }
            let r = 40.0 + 20.0 * noise.std_dev();
            let steps = 400_000;
            let h = 2.0 * r / steps as f64;
            let xs: Vec<f64> = (0..=steps).map(|i| -r + i as f64 * h).collect();
            let qs: Vec<f64> = xs.iter().map(|&x| noise.density(x)).collect();
            let mut worst = 0.0f64;
            for j in 0..=40 {
                let u = -20.0 + j as f64;
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, (&x, &q)) in xs.iter().zip(&qs).enumerate() {
                    let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                    acc += Complex64::from_polar(w * q * h, -x * u);
                }
                worst = worst.max((acc - noise.char_fn(u)).norm());
            }
            assert!(worst < 2e-3, "{:?}: sup error {worst}", noise.family());
        }
    }

    #[test]
    fn sampler_moments_and_determinism() {
        let n = 100_000;
        let lap = NoiseModel::laplace(5.0).unwrap();
        let xs = lap.sample(n, 7).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * lap.std_dev() / (n as f64).sqrt());

        let gauss = NoiseModel::gaussian(0.3).unwrap();
        let ys = gauss.sample(n, 8).unwrap();
        let m = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var / 0.09 - 1.0).abs() < 0.05);

        for noise in catalog() {
            assert_eq!(noise.sample(1, 42).unwrap(), noise.sample(1, 42).unwrap());
        }
        assert!(lap.sample(0, 1).is_err());
    }

    #[test]
    fn empirical_char_fn_matches() {
        let n = 100_000;
        for noise in catalog() {
            let xs = noise.sample(n, 99).unwrap();
            let mut worst = 0.0f64;
            for j in 0..=80 {
                let u = -20.0 + 0.5 * j as f64;
                let emp: Complex64 =
                    xs.iter().map(|&x| Complex64::from_polar(1.0, -x * u)).sum::<Complex64>() / n as f64;
                worst = worst.max((emp - noise.char_fn(u)).norm());
            }
            assert!(worst < 0.02, "{:?}: {worst}", noise.family());
        }
    }

    #[test]
    fn rescaling_rules() {
        let lap = NoiseModel::laplace(5.0).unwrap().rescaled(4.0).unwrap();
        assert_eq!(lap.lambda(), 20.0);
        let g = NoiseModel::gaussian(0.3).unwrap().rescaled(4.0).unwrap();
        assert_abs_diff_eq!(g.lambda(), 0.075, epsilon = 1e-15);
        let gam = NoiseModel::gamma(2.0, 1.5).unwrap().rescaled(3.0).unwrap();
        assert_eq!(gam.lambda(), 6.0);
        // ε/w has characteristic function q*(u/w).
        let base = NoiseModel::laplace_at(5.0, 0.2).unwrap();
        let scaled = base.rescaled(4.0).unwrap();
        for u in [-3.0, 0.5, 7.0, 40.0] {
            assert_abs_diff_eq!((scaled.char_fn(u) - base.char_fn(u / 4.0)).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn spec_round_trip() {
        for noise in catalog() {
            assert_eq!(noise.spec().build().unwrap(), noise);
        }
    }
}
