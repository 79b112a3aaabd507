//! Boundary-adapted Daubechies basis on [0, 1]: layout, orthonormality, model spaces.

use markov_deconv::wavelet::{dimension, WaveletBasis};

fn main() -> markov_deconv::Result<()> {
    let basis = WaveletBasis::build(2, 2, 4, 12)?;
    println!("N = {}, J = {}, levels up to {}, grid 2^{}", basis.order(), basis.coarse_level(), basis.max_level(), basis.grid());

    let mut all = basis.scaling_indices(basis.coarse_level())?;
    for j in basis.coarse_level()..=basis.max_level() {
        all.extend(basis.wavelet_indices(j)?);
    }
    let mut worst = 0.0f64;
    for (i, a) in all.iter().enumerate() {
        let fa = &basis.function(*a)?.samples;
        for b in &all[i..] {
            let g = fa.dot(&basis.function(*b)?.samples, basis.step());
            let target = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    println!("{} functions, max |Gram - I| = {worst:.2e}", all.len());

    for m in basis.coarse_level()..=basis.max_level() {
        let layout = basis.enumerate_model(m)?;
        println!(
            "model m = {m}: D_m^2 = {:>4}, {} factors, {} distinct Gram blocks, sup kernel diagonal {:.2}",
            dimension(basis.coarse_level(), m)?,
            layout.factors.len(),
            layout.x_sets.len(),
            basis.kernel_diagonal_sup(m)?
        );
    }

    let edge = basis.scaling_indices(2)?[0];
    println!("\n{edge} on a coarse grid:");
    for i in 0..=8 {
        let x = i as f64 / 8.0;
        println!("  {x:.3}  {:+.5}", basis.eval(edge, x)?);
    }
    Ok(())
}
