//! Point values of the Daubechies scaling function on dyadic grids.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Exact values of the standard scaling function (support `[0, 2N-1]`) at
/// `i / 2^r`, `i = 0..=(2N-1) 2^r`.
///
/// Integer nodes come from the eigenvector of `√2 h_{2k-l}` for eigenvalue 1,
/// normalized by `Σ φ(k) = 1`; every further dyadic level follows from the
/// two-scale relation `φ(x) = √2 Σ h_l φ(2x - l)` without iteration.
pub fn dyadic_values(h: &[f64], r: u32) -> Result<Vec<f64>> {
    let span = h.len() - 1;
    let inner = span - 1;
    let mut system = DMatrix::<f64>::zeros(inner, inner);
    for row in 0..inner {
        let k = row + 1;
        for col in 0..inner {
            let m = col + 1;
            if 2 * k >= m && 2 * k - m <= span {
                system[(row, col)] = std::f64::consts::SQRT_2 * h[2 * k - m];
            }
        }
        system[(row, row)] -= 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(inner);
    for col in 0..inner {
        system[(inner - 1, col)] = 1.0;
    }
    rhs[inner - 1] = 1.0;
    let nodes = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular two-scale eigenproblem".into()))?;

    let mut values = vec![0.0; span + 1];
    for k in 1..=inner {
        values[k] = nodes[k - 1];
    }
    for s in 1..=r {
        let prev_step = 1usize << (s - 1);
        let len = span * (1usize << s) + 1;
        let mut next = vec![0.0; len];
        for (i, slot) in next.iter_mut().enumerate() {
            if i % 2 == 0 {
                *slot = values[i / 2];
                continue;
            }
            let mut acc = 0.0;
            for (l, &hl) in h.iter().enumerate() {
                let shift = l * prev_step;
                if i >= shift && i - shift < values.len() {
                    acc += hl * values[i - shift];
                }
            }
            *slot = std::f64::consts::SQRT_2 * acc;
        }
        values = next;
    }
    Ok(values)
}

/// Piecewise-linear inner product of two node sequences on a grid with
/// spacing `step`, both zero outside their arrays (which start at node 0).
#[cfg(test)]
pub(crate) fn p1_dot(a: &[f64], b: &[f64], step: f64) -> f64 {
    let len = a.len().max(b.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let mut acc = 0.0;
    for i in 0..len.saturating_sub(1) {
        let (a0, a1, b0, b1) = (at(a, i), at(a, i + 1), at(b, i), at(b, i + 1));
        acc += 2.0 * a0 * b0 + a0 * b1 + a1 * b0 + 2.0 * a1 * b1;
    }
    acc * step / 6.0
}

fn mass_apply(s: &[f64]) -> Vec<f64> {
    let n = s.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { s[i - 1] } else { 0.0 };
            let right = if i + 1 < n { s[i + 1] } else { 0.0 };
            2.0 / 3.0 * s[i] + (left + right) / 6.0
        })
        .collect()
}

/// Dyadic samples of the scaling function at resolution `2^-r`, minimally
/// corrected so that the piecewise-linear interpolant has exactly
/// orthonormal integer translates.
///
/// The raw cascade samples are orthonormal only up to the interpolation
/// error of a rough function, which for D4 is about 1e-4 at `r = 7`.
pub fn orthonormal_profile(h: &[f64], r: u32) -> Result<Vec<f64>> {
    let mut s = dyadic_values(h, r)?;
    let order = h.len() / 2;
    let per_unit = 1usize << r;
    let step = 1.0 / per_unit as f64;
    let len = s.len();
    let rows = 2 * order - 1;
    for _ in 0..20 {
        let ms = mass_apply(&s);
        let mut residual = DVector::<f64>::zeros(rows);
        let mut jac = DMatrix::<f64>::zeros(rows, len);
        for m in 0..rows {
            let off = m * per_unit;
            let mut value = 0.0;
            for i in 0..len {
                if i + off < len {
                    value += s[i] * ms[i + off];
                }
                let up = if i + off < len { ms[i + off] } else { 0.0 };
                let down = if i >= off { ms[i - off] } else { 0.0 };
                jac[(m, i)] = step * (up + down);
            }
            residual[m] = step * value - if m == 0 { 1.0 } else { 0.0 };
        }
        // Endpoints stay pinned at zero.
        for row in 0..rows {
            jac[(row, 0)] = 0.0;
            jac[(row, len - 1)] = 0.0;
        }
        if residual.amax() < 1e-15 {
            return Ok(s);
        }
        let normal = &jac * jac.transpose();
        let lambda = normal
            .cholesky()
            .ok_or_else(|| Error::Numeric("rank-deficient orthonormality constraints".into()))?
            .solve(&residual);
        let delta = jac.transpose() * lambda;
        for (v, d) in s.iter_mut().zip(delta.iter()) {
            *v -= d;
        }
    }
    Err(Error::Numeric("profile orthonormalization did not converge".into()))
}
