//! A small Monte-Carlo MISE grid, printed as a table.

use markov_deconv::bench::{report_table, run_grid, RunConfig};
use markov_deconv::chains::ChainKind;
use markov_deconv::noise::NoiseSpec;

fn main() -> markov_deconv::Result<()> {
    let config = RunConfig {
        chains: vec![ChainKind::ArI, ChainKind::SqrtCir],
        noises: vec![NoiseSpec::laplace(5.0), NoiseSpec::gaussian(0.3)],
        n_values: vec![100, 250, 500],
        replicates: 20,
        grid: 64,
        master_seed: 3,
        output: std::env::temp_dir().join("markov-deconv-example"),
        basis: Default::default(),
        estimator: Default::default(),
        table: Default::default(),
        surfaces: false,
    };
    let out = run_grid(&config)?;
    print!("{}", report_table(&out.report));
    Ok(())
}
