//! The operator v_t for Laplace noise equals t - t''/lambda^2; compare with a bump.

use markov_deconv::deconv::fourier::{p1_transform, synthesize, v_transform, FrequencyGrid, Piecewise};
use markov_deconv::noise::NoiseModel;

fn bump(x: f64) -> f64 {
    (-((x - 0.5) / 0.08).powi(2) / 2.0).exp()
}

fn bump_second(x: f64) -> f64 {
    let z = (x - 0.5) / 0.08;
    bump(x) * (z * z - 1.0) / (0.08 * 0.08)
}

fn main() -> markov_deconv::Result<()> {
    let lambda = 20.0;
    let noise = NoiseModel::laplace(lambda)?;
    let nodes = 1 << 12;
    let step = 1.0 / nodes as f64;
    let values: Vec<f64> = (0..=nodes).map(|i| bump(i as f64 * step)).collect();
    let grid = FrequencyGrid::new(400.0, 3.0)?;
    let t_hat = p1_transform(Piecewise::new(&values, 0.0, step), &grid);
    let v_hat = v_transform(&t_hat, &grid, &noise)?;
    let (h, v) = synthesize(&v_hat, &grid, -1.0, 2048);
    let mut worst = 0.0f64;
    for (i, value) in v.iter().enumerate() {
        let y = -1.0 + i as f64 * h;
        if (0.0..=1.0).contains(&y) {
            let exact = bump(y) - bump_second(y) / (lambda * lambda);
            worst = worst.max((value - exact).abs());
        }
    }
    println!("frequencies kept: {} (cutoff {:.1})", grid.half() + 1, grid.cutoff());
    println!("sup |v - (t - t''/lambda^2)| on [0, 1] = {worst:.2e}");
    Ok(())
}
