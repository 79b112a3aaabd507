//! Modified Bessel function of the first kind.

use statrs::function::gamma::ln_gamma;

/// Argument at which [`bessel_i_scaled`] switches from the power series to
/// the large-argument expansion.
pub const ASYMPTOTIC_FROM: f64 = 30.0;

/// `e^{-x} I_ν(x)` for `ν >= 0`, `x >= 0`.
pub fn bessel_i_scaled(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x >= 0.0, "bessel_i_scaled needs nu >= 0 and x >= 0");
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if x < ASYMPTOTIC_FROM {
        series(nu, x)
    } else {
        asymptotic(nu, x)
    }
}

/// `I_ν(x)`; overflows to infinity for very large `x`.
pub fn bessel_i(nu: f64, x: f64) -> f64 {
    bessel_i_scaled(nu, x) * x.exp()
}

fn series(nu: f64, x: f64) -> f64 {
    let half = 0.5 * x;
    let q = half * half;
    let mut term = (nu * half.ln() - ln_gamma(nu + 1.0) - x).exp();
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

fn asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (k * 8.0 * x);
        if next.abs() >= term.abs() || next == 0.0 {
            break;
        }
        sum += next;
        term = next;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}
