//! Simulates every test chain and compares path statistics with the transition law.

use markov_deconv::chains::{observe, ChainKind, ChainModel};
use markov_deconv::noise::NoiseModel;

fn main() -> markov_deconv::Result<()> {
    let noise = NoiseModel::laplace(5.0)?;
    println!("{:<9} {:>14} {:>9} {:>9} {:>9} {:>10}", "chain", "domain", "mean", "exact", "in A", "Pi(c, c)");
    for kind in ChainKind::ALL {
        let chain = ChainModel::preset(kind);
        let path = chain.simulate(50_000, 1)?;
        let mean = path.iter().sum::<f64>() / path.len() as f64;
        let inside = path.iter().filter(|x| chain.domain.contains(**x)).count() as f64 / path.len() as f64;
        let c = 0.5 * (chain.domain.lo + chain.domain.hi);
        println!(
            "{:<9} {:>14} {:>9.4} {:>9} {:>9.3} {:>10.5}",
            kind.label(),
            format!("[{}, {}]", chain.domain.lo, chain.domain.hi),
            mean,
            chain.stationary_mean().map_or("-".into(), |m| format!("{m:.4}")),
            inside,
            chain.true_transition(c, c)?
        );
    }
    let chain = ChainModel::preset(ChainKind::ArI);
    let x = chain.simulate(10, 7)?;
    let y = observe(&x, &noise, 8);
    println!("\nAR(i) hidden vs observed:");
    for (a, b) in x.iter().zip(&y) {
        println!("  {a:+.4}  {b:+.4}");
    }
    Ok(())
}
