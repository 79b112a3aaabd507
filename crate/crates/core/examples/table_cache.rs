//! Writes a deconvolution table to disk and reads it back.

use std::sync::Arc;

use markov_deconv::deconv::{cache, DeconvTable, TableConfig};
use markov_deconv::noise::NoiseModel;
use markov_deconv::wavelet::{BasisIndex, WaveletBasis};

fn main() -> markov_deconv::Result<()> {
    let basis = Arc::new(WaveletBasis::build(2, 2, 3, 11)?);
    let noise = NoiseModel::laplace(20.0)?;
    let table = DeconvTable::build(basis, &noise, TableConfig { cutoff: 20.0, pad: 1.0 })?;
    let dir = std::env::temp_dir().join("markov-deconv-cache-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("laplace20.mdcv");
    cache::save(&table, &path)?;
    let back = cache::load(&path)?;
    println!("{} bytes, {} single spectra, {} pair spectra", std::fs::metadata(&path)?.len(), back.fine_spectra().len(), back.pair_spectra().len());
    let idx = BasisIndex::wavelet(3, 2);
    for y in [0.1, 0.4, 0.9] {
        println!("v[{idx}]({y}) = {:+.6} / {:+.6}", table.eval_v(idx, y)?, back.eval_v(idx, y)?);
    }
    Ok(())
}
