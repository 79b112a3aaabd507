//! Binary container for a [`DeconvTable`].
//!
//! Layout, little endian:
//!
//! ```text
//! magic "MDCV" | version u8
//! N u32 | J u32 | m_max u32 | G u32
//! U f64 | period f64 | K u64 | pad f64
//! noise family u8 | lambda f64 | zeta f64 | mu f64
//! point values: count u64, then per function start u64, len u64, len × f64
//! singles: count u64, then count × (K+1) × (re f64, im f64)
//! pairs:   count u64, then per pair p u64, q u64, (K+1) × (re f64, im f64)
//! ```
//!
//! Loading rebuilds the basis from the header and requires its point values
//! to match the stored ones bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rustfft::num_complex::Complex64;

use super::{DeconvTable, FrequencyGrid, PairSpectrum};
use crate::error::{Error, Result};
use crate::noise::{NoiseFamily, NoiseSpec};
use crate::wavelet::WaveletBasis;

const MAGIC: &[u8; 4] = b"MDCV";
pub const FORMAT_VERSION: u8 = 2;

const FAMILIES: [NoiseFamily; 5] =
    [NoiseFamily::Laplace, NoiseFamily::Gamma, NoiseFamily::SymmetricGamma, NoiseFamily::Gaussian, NoiseFamily::Degenerate];

fn write_spectrum<W: Write>(w: &mut W, s: &[Complex64]) -> Result<()> {
    for c in s {
        w.write_f64::<LE>(c.re)?;
        w.write_f64::<LE>(c.im)?;
    }
    Ok(())
}

fn read_spectrum<R: Read>(r: &mut R, width: usize) -> Result<Vec<Complex64>> {
    (0..width).map(|_| Ok(Complex64::new(r.read_f64::<LE>()?, r.read_f64::<LE>()?))).collect()
}

fn read_len<R: Read>(r: &mut R, limit: usize, what: &str) -> Result<usize> {
    let n = r.read_u64::<LE>()? as usize;
    if n > limit {
        return Err(Error::Format(format!("{what} count {n} exceeds {limit}")));
    }
    Ok(n)
}

/// Serializes the table.
pub fn write_table<W: Write>(table: &DeconvTable, w: &mut W) -> Result<()> {
    let basis = table.basis();
    w.write_all(MAGIC)?;
    w.write_u8(FORMAT_VERSION)?;
    for v in [basis.order() as u32, basis.coarse_level(), basis.max_level(), basis.grid()] {
        w.write_u32::<LE>(v)?;
    }
    let grid = table.grid();
    w.write_f64::<LE>(grid.cutoff())?;
    w.write_f64::<LE>(grid.period())?;
    w.write_u64::<LE>(grid.half() as u64)?;
    w.write_f64::<LE>(table.pad())?;
    let noise = table.noise();
    let code = FAMILIES.iter().position(|f| *f == noise.family()).expect("family listed") as u8;
    w.write_u8(code)?;
    w.write_f64::<LE>(noise.lambda())?;
    w.write_f64::<LE>(noise.zeta())?;
    w.write_f64::<LE>(noise.mu())?;

    let fine = basis.fine_functions();
    w.write_u64::<LE>(fine.len() as u64)?;
    for f in fine {
        w.write_u64::<LE>(f.samples.start as u64)?;
        w.write_u64::<LE>(f.samples.values.len() as u64)?;
        for v in &f.samples.values {
            w.write_f64::<LE>(*v)?;
        }
    }
    w.write_u64::<LE>(table.fine_spectra().len() as u64)?;
    for s in table.fine_spectra() {
        write_spectrum(w, s)?;
    }
    w.write_u64::<LE>(table.pair_spectra().len() as u64)?;
    for pair in table.pair_spectra() {
        w.write_u64::<LE>(pair.p as u64)?;
        w.write_u64::<LE>(pair.q as u64)?;
        write_spectrum(w, &pair.spectrum)?;
    }
    Ok(())
}

/// Reads a table written by [`write_table`].
pub fn read_table<R: Read>(r: &mut R) -> Result<DeconvTable> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.read_u8()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let order = r.read_u32::<LE>()? as usize;
    let coarse = r.read_u32::<LE>()?;
    let max_level = r.read_u32::<LE>()?;
    let grid_exp = r.read_u32::<LE>()?;
    let _cutoff = r.read_f64::<LE>()?;
    let period = r.read_f64::<LE>()?;
    let half = r.read_u64::<LE>()? as usize;
    let pad = r.read_f64::<LE>()?;
    if !(period > 0.0) || half == 0 || half > 1 << 24 || (period - (1.0 + 2.0 * pad)).abs() > 1e-12 {
        return Err(Error::Format("inconsistent frequency grid".into()));
    }
    let family = *FAMILIES.get(r.read_u8()? as usize).ok_or_else(|| Error::Format("unknown noise family".into()))?;
    let lambda = r.read_f64::<LE>()?;
    let zeta = r.read_f64::<LE>()?;
    let mu = r.read_f64::<LE>()?;
    let noise = NoiseSpec { family, lambda, zeta: Some(zeta), mu: Some(mu) }.build()?;

    let basis = WaveletBasis::build(order, coarse, max_level, grid_exp)?;
    let fine = basis.fine_functions();
    let count = read_len(r, fine.len(), "function")?;
    if count != fine.len() {
        return Err(Error::TableMismatch(format!("{count} stored functions, basis has {}", fine.len())));
    }
    for f in fine {
        let start = r.read_u64::<LE>()? as usize;
        let len = read_len(r, basis.node_count(), "node")?;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(r.read_f64::<LE>()?);
        }
        if start != f.samples.start || values.len() != f.samples.values.len() || values.iter().zip(&f.samples.values).any(|(a, b)| a.to_bits() != b.to_bits()) {
            return Err(Error::TableMismatch("stored point values differ from the rebuilt basis".into()));
        }
    }
    let width = half + 1;
    let singles_count = read_len(r, fine.len(), "single")?;
    let singles = (0..singles_count).map(|_| read_spectrum(r, width)).collect::<Result<Vec<_>>>()?;
    let pair_count = read_len(r, fine.len() * fine.len(), "pair")?;
    let mut pairs = Vec::with_capacity(pair_count);
    for _ in 0..pair_count {
        let p = r.read_u64::<LE>()? as usize;
        let q = r.read_u64::<LE>()? as usize;
        pairs.push(PairSpectrum { p, q, spectrum: read_spectrum(r, width)? });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    DeconvTable::from_parts(Arc::new(basis), noise, pad, FrequencyGrid::from_parts(period, half), singles, pairs)
}

pub fn save(table: &DeconvTable, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_table(table, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<DeconvTable> {
    read_table(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deconv::TableConfig;
    use crate::noise::NoiseModel;
    use crate::wavelet::BasisIndex;

    fn small_table() -> DeconvTable {
        let basis = Arc::new(WaveletBasis::build(2, 2, 2, 8).unwrap());
        let noise = NoiseModel::laplace(20.0).unwrap();
        DeconvTable::build(basis, &noise, TableConfig { cutoff: 80.0, pad: 0.5 }).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let table = small_table();
        let mut first = Vec::new();
        write_table(&table, &mut first).unwrap();
        let back = read_table(&mut first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_table(&back, &mut second).unwrap();
        assert_eq!(first, second);
        let idx = BasisIndex::scaling(2, 1);
        assert_eq!(table.eval_v(idx, 0.3).unwrap().to_bits(), back.eval_v(idx, 0.3).unwrap().to_bits());
    }

    #[test]
    fn rebuild_gives_identical_bytes() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_table(&small_table(), &mut a).unwrap();
        write_table(&small_table(), &mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupted_input_is_rejected() {
        let mut bytes = Vec::new();
        write_table(&small_table(), &mut bytes).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(read_table(&mut bad_magic.as_slice()), Err(Error::Format(_))));
        let truncated = &bytes[..bytes.len() - 3];
        assert!(read_table(&mut &truncated[..]).is_err());
        let mut tampered = bytes.clone();
        // First stored point value lives right after the header and two counts.
        let offset = 4 + 1 + 16 + 32 + 1 + 24 + 8 + 16;
        tampered[offset] ^= 1;
        assert!(matches!(read_table(&mut tampered.as_slice()), Err(Error::TableMismatch(_))));
    }
}
