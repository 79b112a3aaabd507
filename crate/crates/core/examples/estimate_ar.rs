//! End-to-end estimate for AR(i) observed through Laplace noise, with a slice
//! of the estimated transition density against the true one.

use std::sync::Arc;

use markov_deconv::bench::{mise_single, TableSettings};
use markov_deconv::chains::{observe, ChainKind, ChainModel};
use markov_deconv::deconv::DeconvTable;
use markov_deconv::estimator::{rescale, select_and_estimate, EstimatorConfig, Penalty};
use markov_deconv::noise::NoiseModel;
use markov_deconv::wavelet::WaveletBasis;

fn main() -> markov_deconv::Result<()> {
    let chain = ChainModel::preset(ChainKind::ArI);
    let noise = NoiseModel::laplace(5.0)?;
    let basis = Arc::new(WaveletBasis::build(2, 2, 3, 11)?);
    let table_config = TableSettings::default().resolve(&basis, &chain, &noise, 0)?;
    let table = DeconvTable::build(basis.clone(), &noise.rescaled(chain.domain.width())?, table_config)?;
    println!("table: cutoff {:.2}, window {:?}", table.grid().cutoff(), table.window());

    let config = EstimatorConfig::new(chain.domain, 2, 3, Penalty::LaplacePractical);
    for n in [100, 500, 2000] {
        let path = chain.simulate(n, 11)?;
        let ys = observe(&path, &noise, 12);
        let est = select_and_estimate(&rescale(&ys, &config, &noise)?, &table, &config)?;
        println!("n = {n:>4}: level {}, norm {:.3}, ISE {:.4}", est.level, est.l2_norm, mise_single(&est, &basis, &chain, 128)?);
        if n == 2000 {
            println!("\n  slice x = 0.5\n      y    true  estimate");
            for i in 0..=8 {
                let y = -2.0 + 0.5 * i as f64;
                println!("  {y:+.2}  {:.4}  {:.4}", chain.true_transition(0.5, y)?, est.evaluate(&basis, 0.5, y)?);
            }
        }
    }
    Ok(())
}
