//! Noise families: densities, characteristic functions and smoothness constants.

use markov_deconv::noise::NoiseModel;

fn main() -> markov_deconv::Result<()> {
    let models = [
        ("laplace(5)", NoiseModel::laplace(5.0)?),
        ("gamma(2, 1.5)", NoiseModel::gamma(2.0, 1.5)?),
        ("symmetric gamma(3, 0.8)", NoiseModel::symmetric_gamma(3.0, 0.8)?),
        ("gaussian(0.3)", NoiseModel::gaussian(0.3)?),
    ];
    println!("{:<24} {:>8} {:>8} {:>7} {:>8} {:>12} {:>12}", "family", "mean", "sd", "gamma", "k0", "|q*(10)|", "q(0.1)");
    for (name, q) in &models {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        println!(
            "{:<24} {:>8.4} {:>8.4} {:>7} {:>8} {:>12.6} {:>12.6}",
            name,
            q.mean(),
            q.std_dev(),
            fmt(q.smoothness()),
            fmt(q.k0()),
            q.char_fn(10.0).norm(),
            q.density(0.1)
        );
    }

    // Moments of a seeded sample against the closed forms.
    let q = NoiseModel::laplace(5.0)?;
    let draws = q.sample(100_000, 42)?;
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / draws.len() as f64;
    println!("\nlaplace(5) sample: mean {mean:.4}, variance {var:.5} (exact {:.5})", q.variance());

    // Rescaling onto a width-4 window multiplies the Laplace rate by 4.
    println!("rescaled to width 4: lambda = {}", q.rescaled(4.0)?.lambda());
    Ok(())
}
