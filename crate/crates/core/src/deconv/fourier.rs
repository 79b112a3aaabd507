//! Discrete Fourier pieces behind the deconvolution operator.
//!
//! Transforms follow `t*(u) = ∫ e^{-ixu} t(x) dx`. Functions are real, so a
//! spectrum is stored for the nonnegative frequencies `u_k = 2πk/L`,
//! `k = 0..=K`, and the negative half is its conjugate. Inversion is the
//! `L`-periodic Fourier series
//!
//! `v(y) = (1/L) Σ_{|k|<=K} c_k e^{i u_k y}`,
//!
//! which is what an FFT over a window of length `L` computes. The period is
//! chosen larger than the reach of the data so the wrap never matters.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::noise::NoiseModel;

/// Characteristic-function modulus below which inversion is refused.
pub const MIN_CHAR_FN: f64 = 1e-12;

/// Symmetric frequency grid `u_k = 2πk/L`, `|k| <= K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    period: f64,
    half: usize,
}

impl FrequencyGrid {
    /// Grid with period `period` whose top frequency does not exceed `cutoff`.
    pub fn new(cutoff: f64, period: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff.is_finite()) || !(period > 0.0 && period.is_finite()) {
            return Err(Error::invalid(format!("frequency grid needs positive cutoff and period, got {cutoff}, {period}")));
        }
        let half = (cutoff * period / (2.0 * PI)).floor() as usize;
        if half == 0 {
            return Err(Error::invalid("frequency cutoff below the grid spacing"));
        }
        Ok(FrequencyGrid { period, half })
    }

    pub fn from_parts(period: f64, half: usize) -> Self {
        FrequencyGrid { period, half }
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// `K`, the index of the highest frequency kept.
    pub fn half(&self) -> usize {
        self.half
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// `u_K`, the effective truncation.
    pub fn cutoff(&self) -> f64 {
        self.half as f64 * self.spacing()
    }

    pub fn frequency(&self, k: usize) -> f64 {
        k as f64 * self.spacing()
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.half).map(|k| self.frequency(k))
    }
}

/// Node values of a continuous piecewise-linear function on `origin + i·step`.
///
/// The function vanishes outside the node range. With `cut_left` the
/// function jumps to zero just before the first node instead of ramping down
/// over one cell; likewise `cut_right` at the last node. The basis uses the
/// cut form at the endpoints of `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct Piecewise<'a> {
    pub values: &'a [f64],
    pub origin: f64,
    pub step: f64,
    pub cut_left: bool,
    pub cut_right: bool,
}

impl<'a> Piecewise<'a> {
    pub fn new(values: &'a [f64], origin: f64, step: f64) -> Self {
        Piecewise { values, origin, step, cut_left: false, cut_right: false }
    }
}

/// `h ∫_0^1 (1 - s) e^{-iws} ds` with `w = uh`: the transform of the right
/// half of a hat anchored at zero.
fn half_hat(u: f64, h: f64) -> Complex64 {
    let w = u * h;
    if w.abs() < 1.0 {
        // Σ_n (-iw)^n / (n! (n+1)(n+2)); the closed form cancels badly here.
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..24 {
            acc += term / ((n + 1) * (n + 2)) as f64;
            term *= Complex64::new(0.0, -w) / (n + 1) as f64;
        }
        return h * acc;
    }
    let iw = Complex64::new(0.0, w);
    let e = Complex64::from_polar(1.0, -w);
    let i0 = (1.0 - e) / iw;
    h * (i0 - i0 / iw + e / iw)
}

/// Exact transform of the piecewise-linear function at the grid frequencies.
pub fn p1_transform(f: Piecewise<'_>, grid: &FrequencyGrid) -> Vec<Complex64> {
    let h = f.step;
    let last = f.values.len().saturating_sub(1);
    grid.frequencies()
        .map(|u| {
            let hat = {
                let s = 0.5 * u * h;
                let sinc = if s.abs() < 1e-8 { 1.0 } else { s.sin() / s };
                h * sinc * sinc
            };
            let rot = Complex64::from_polar(1.0, -u * h);
            let mut phase = Complex64::from_polar(1.0, -u * f.origin);
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &t) in f.values.iter().enumerate() {
                if t != 0.0 {
                    let shape = if i == 0 && f.cut_left {
                        half_hat(u, h)
                    } else if i == last && f.cut_right {
                        half_hat(u, h).conj()
                    } else {
                        Complex64::new(hat, 0.0)
                    };
                    acc += t * shape * phase;
                }
                // Re-anchor periodically so the rotation error stays at rounding level.
                phase = if (i + 1) % 256 == 0 {
                    Complex64::from_polar(1.0, -u * (f.origin + (i + 1) as f64 * h))
                } else {
                    phase * rot
                };
            }
            acc
        })
        .collect()
}

/// `∫_0^1 s(1 - s) e^{-iws} ds`.
fn bubble(w: f64) -> Complex64 {
    if w.abs() < 1.0 {
        // Σ_n (-iw)^n / (n! (n+2)(n+3))
        let mut term = Complex64::new(1.0, 0.0);
        let mut acc = Complex64::new(0.0, 0.0);
        for n in 0..24 {
            acc += term / ((n + 2) * (n + 3)) as f64;
            term *= Complex64::new(0.0, -w) / (n + 1) as f64;
        }
        return acc;
    }
    let iw = Complex64::new(0.0, w);
    let e = Complex64::from_polar(1.0, -w);
    let i0 = (1.0 - e) / iw;
    let i1 = (i0 - e) / iw;
    let i2 = (2.0 * i1 - e) / iw;
    i1 - i2
}

/// Transform of `Σ_c w_c β(x/h - c)` where `β(s) = s(1 - s)` on `[0, 1]`
/// and `c` runs over `first, first + 1, …`. Adding `-(Δa_c Δb_c)` bubbles to
/// the interpolant of `a·b` gives the exact product of two interpolants.
pub fn bubble_transform(weights: &[f64], first: usize, step: f64, grid: &FrequencyGrid) -> Vec<Complex64> {
    let h = step;
    grid.frequencies()
        .map(|u| {
            let shape = h * bubble(u * h);
            let rot = Complex64::from_polar(1.0, -u * h);
            let mut phase = Complex64::from_polar(1.0, -u * first as f64 * h);
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, &w) in weights.iter().enumerate() {
                if w != 0.0 {
                    acc += w * phase;
                }
                phase = if (i + 1) % 256 == 0 {
                    Complex64::from_polar(1.0, -u * (first + i + 1) as f64 * h)
                } else {
                    phase * rot
                };
            }
            acc * shape
        })
        .collect()
}

/// `c_k = t*(u_k) / q*(-u_k)`, the spectrum of `v_t`.
pub fn v_transform(t_fourier: &[Complex64], grid: &FrequencyGrid, noise: &NoiseModel) -> Result<Vec<Complex64>> {
    if t_fourier.len() != grid.half() + 1 {
        return Err(Error::TableMismatch(format!("spectrum has {} entries, grid expects {}", t_fourier.len(), grid.half() + 1)));
    }
    let divisors = noise_divisors(grid, noise)?;
    Ok(t_fourier.iter().zip(&divisors).map(|(t, q)| t / q).collect())
}

/// `q*(-u_k)` on the grid, refusing values below [`MIN_CHAR_FN`].
pub fn noise_divisors(grid: &FrequencyGrid, noise: &NoiseModel) -> Result<Vec<Complex64>> {
    grid.frequencies()
        .map(|u| {
            let q = noise.char_fn(-u);
            if q.norm() < MIN_CHAR_FN {
                Err(Error::VanishingCharFn { u, modulus: q.norm() })
            } else {
                Ok(q)
            }
        })
        .collect()
}

/// Value of the periodic inverse at one point.
pub fn invert_at(spectrum: &[Complex64], grid: &FrequencyGrid, y: f64) -> f64 {
    let rot = Complex64::from_polar(1.0, grid.spacing() * y);
    let mut phase = Complex64::new(1.0, 0.0);
    let mut acc = 0.5 * spectrum[0].re;
    for (k, c) in spectrum.iter().enumerate().skip(1) {
        phase = if k % 64 == 0 { Complex64::from_polar(1.0, grid.frequency(k) * y) } else { phase * rot };
        acc += (c * phase).re;
    }
    2.0 * acc / grid.period()
}

/// Samples of the periodic inverse at `lo + i L/M`, `i < M`, through one
/// FFT. `M` is raised to at least `2K + 1`.
pub fn synthesize(spectrum: &[Complex64], grid: &FrequencyGrid, lo: f64, points: usize) -> (f64, Vec<f64>) {
    let half = grid.half();
    let size = points.max(2 * half + 1);
    let mut buf = vec![Complex64::new(0.0, 0.0); size];
    for (k, c) in spectrum.iter().enumerate() {
        let shifted = c * Complex64::from_polar(1.0, grid.frequency(k) * lo);
        buf[k] += shifted;
        if k > 0 {
            buf[size - k] += shifted.conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(size).process(&mut buf);
    let spacing = grid.period() / size as f64;
    (spacing, buf.into_iter().map(|z| z.re / grid.period()).collect())
}

/// `(1/L) Σ_{|k|<=K} |c_k|²`, the squared norm of the inverse over one period.
pub fn period_energy(spectrum: &[Complex64], grid: &FrequencyGrid) -> f64 {
    let tail: f64 = spectrum.iter().skip(1).map(|c| c.norm_sqr()).sum();
    (spectrum[0].norm_sqr() + 2.0 * tail) / grid.period()
}
