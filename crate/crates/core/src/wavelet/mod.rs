//! Compactly supported orthonormal wavelets on `[0, 1]` with boundary
//! functions, and the tensor spaces built from them.
//!
//! Shift `k` at level `j` uses the convention
//! `φ_jk(x) = 2^{j/2} φ(2^j x - k + N - 1)` so that `φ_jk` lives on
//! `[(k-N+1)/2^j, (k+N)/2^j]`. At every level the first and last `N` shifts
//! are boundary functions, built from polynomial combinations of the
//! translates that straddle an endpoint and then orthonormalized.
//!
//! The finest level `F = m_max + 1` is sampled directly; every coarser
//! function is stored as an exact linear combination of level-`F`
//! functions. Nesting and orthonormality therefore hold to rounding error for
//! the piecewise-linear interpolants that [`WaveletBasis::eval`] uses.

pub mod cascade;
pub mod filters;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Kind {
    Scaling,
    Wavelet,
}

/// One-dimensional basis function `(level, shift, kind)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisIndex {
    pub level: u32,
    pub shift: usize,
    pub kind: Kind,
}

impl BasisIndex {
    pub fn scaling(level: u32, shift: usize) -> Self {
        BasisIndex { level, shift, kind: Kind::Scaling }
    }

    pub fn wavelet(level: u32, shift: usize) -> Self {
        BasisIndex { level, shift, kind: Kind::Wavelet }
    }
}

impl std::fmt::Display for BasisIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.kind {
            Kind::Scaling => "phi",
            Kind::Wavelet => "psi",
        };
        write!(f, "{tag}[{},{}]", self.level, self.shift)
    }
}

/// Node values `values[i]` at `x = (start + i) 2^-G`, zero elsewhere.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampledFn {
    pub start: usize,
    pub values: Vec<f64>,
}

impl SampledFn {
    pub fn end(&self) -> usize {
        self.start + self.values.len()
    }

    pub fn at(&self, node: usize) -> f64 {
        if node < self.start {
            0.0
        } else {
            self.values.get(node - self.start).copied().unwrap_or(0.0)
        }
    }

    /// Exact `L²` inner product on `[0, 1]` of the two piecewise-linear
    /// interpolants, which are cut at both endpoints.
    pub fn dot(&self, other: &SampledFn, step: f64) -> f64 {
        let cells = (1.0 / step).round() as usize;
        let lo = self.start.max(other.start).saturating_sub(1);
        let hi = self.end().min(other.end()).min(cells);
        let mut acc = 0.0;
        for c in lo..hi {
            let (a0, a1) = (self.at(c), self.at(c + 1));
            let (b0, b1) = (other.at(c), other.at(c + 1));
            acc += 2.0 * a0 * b0 + a0 * b1 + a1 * b0 + 2.0 * a1 * b1;
        }
        acc * step / 6.0
    }

    /// Pointwise product on the shared nodes.
    pub fn product(&self, other: &SampledFn) -> SampledFn {
        let lo = self.start.max(other.start);
        let hi = self.end().min(other.end());
        if hi <= lo {
            return SampledFn::default();
        }
        SampledFn { start: lo, values: (lo..hi).map(|i| self.at(i) * other.at(i)).collect() }
    }

    fn trimmed(mut self) -> SampledFn {
        let first = self.values.iter().position(|v| *v != 0.0).unwrap_or(self.values.len());
        let last = self.values.iter().rposition(|v| *v != 0.0).map_or(first, |p| p + 1);
        // Keep one zero node on each side so the interpolant's ramps survive.
        let first = first.saturating_sub(1);
        let last = (last + 1).min(self.values.len());
        self.values = self.values[first..last].to_vec();
        self.start += first;
        self
    }
}

/// Coefficients of a function in the orthonormal finest-level basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub start: usize,
    pub coeffs: Vec<f64>,
}

impl Expansion {
    fn from_dense(dense: &[f64]) -> Self {
        let first = dense.iter().position(|v| *v != 0.0).unwrap_or(0);
        let last = dense.iter().rposition(|v| *v != 0.0).map_or(first, |p| p + 1);
        Expansion { start: first, coeffs: dense[first..last].to_vec() }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.coeffs.iter().enumerate().map(move |(i, c)| (self.start + i, *c))
    }

    pub fn end(&self) -> usize {
        self.start + self.coeffs.len()
    }
}

#[derive(Debug, Clone)]
pub struct BasisFn {
    pub expansion: Expansion,
    pub samples: SampledFn,
}

#[derive(Debug, Clone)]
struct Level {
    scaling: Vec<BasisFn>,
    wavelets: Vec<BasisFn>,
}

/// Orthonormal multiresolution system on `[0, 1]` up to level `m_max`.
#[derive(Debug, Clone)]
pub struct WaveletBasis {
    order: usize,
    coarse: u32,
    max_level: u32,
    grid: u32,
    levels: Vec<Level>,
}

pub const MIN_ORDER: usize = 2;
pub const MAX_ORDER: usize = 10;

/// Smallest coarse level `J` with `2^J >= 2N`, so boundary functions at the
/// two ends do not overlap.
pub fn min_coarse_level(order: usize) -> u32 {
    (2 * order).next_power_of_two().trailing_zeros()
}

/// `D_m² = 2^{2J} + 3 Σ_{j=J+1}^{m} 2^{2j}`.
pub fn dimension(coarse: u32, m: u32) -> Result<usize> {
    if m < coarse {
        return Err(Error::invalid(format!("model level {m} below coarse level {coarse}")));
    }
    Ok((1usize << (2 * coarse)) + (coarse + 1..=m).map(|j| 3usize << (2 * j)).sum::<usize>())
}

/// `D_m`, the square root of [`dimension`].
pub fn dimension_root(coarse: u32, m: u32) -> Result<f64> {
    Ok((dimension(coarse, m)? as f64).sqrt())
}

/// Index layout of the tensor model `S_m`.
///
/// Every tensor function is `x ⊗ y` with both factors taken from the
/// orthonormal system `φ_J, ψ_J, ψ_{J+1}, …, ψ_m` ([`Self::factors`]). The
/// level-`J` detail combinations (`ψ_J` paired with `φ_J` or `ψ_J`) are the
/// only products left out, which reproduces the count [`dimension`].
/// Functions are grouped by their `y` factor, so the system matrix is block
/// diagonal with one block per entry of [`Self::blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelLayout {
    pub level: u32,
    pub factors: Vec<BasisIndex>,
    pub x_sets: Vec<Vec<usize>>,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    /// Position of the `y` factor in `factors`.
    pub y: usize,
    /// Which entry of `x_sets` lists the admissible `x` factors.
    pub x_set: usize,
}

impl ModelLayout {
    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| self.x_sets[b.x_set].len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `(x, y)` factor positions in coefficient order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.blocks.iter().flat_map(move |b| self.x_sets[b.x_set].iter().map(move |&x| (x, b.y)))
    }

    pub fn tensor_indices(&self) -> Vec<(BasisIndex, BasisIndex)> {
        self.pairs().map(|(x, y)| (self.factors[x], self.factors[y])).collect()
    }
}

impl WaveletBasis {
    /// Builds the basis with Daubechies order `order` (filter length
    /// `2 * order`), coarse level `coarse`, finest offered level `max_level`
    /// and sampling grid `2^-grid`.
    pub fn build(order: usize, coarse: u32, max_level: u32, grid: u32) -> Result<Self> {
        let h = filters::daubechies(order).ok_or(Error::UnsupportedOrder(order))?;
        if (1usize << coarse) < 2 * order {
            return Err(Error::CoarseLevelTooSmall { level: coarse, order });
        }
        if max_level < coarse {
            return Err(Error::invalid(format!("m_max = {max_level} below J = {coarse}")));
        }
        if grid < max_level + 4 {
            return Err(Error::invalid(format!("grid 2^{grid} too coarse: need G >= m_max + 4 = {}", max_level + 4)));
        }
        if grid > 24 || max_level > 14 {
            return Err(Error::invalid("grid or level too large"));
        }
        let g = filters::highpass(h);
        let fine_level = max_level + 1;
        let per_unit = 1usize << (grid - fine_level);
        let profile = cascade::orthonormal_profile(h, grid - fine_level)?;
        let step = 1.0 / (1u64 << grid) as f64;
        let nodes = (1usize << grid) + 1;

        let (fine, mut tinv_left, mut tinv_right) = fine_functions(&profile, order, fine_level, per_unit, nodes, step)?;
        let fine_count = fine.len();

        // Dense finest-level coordinates, coarsening one level at a time.
        let mut coords_next = DMatrix::<f64>::identity(fine_count, fine_count);
        let mut levels_rev: Vec<(DMatrix<f64>, Option<DMatrix<f64>>)> = Vec::new();
        levels_rev.push((coords_next.clone(), None));
        for j in (coarse..fine_level).rev() {
            let (scal, tl, tr) = coarser_scaling(h, order, j, &tinv_left, &tinv_right)?;
            let wav = wavelets_from(&g, order, j, &scal)?;
            let scal_fine = &coords_next * &scal;
            let wav_fine = &coords_next * &wav;
            levels_rev.push((scal_fine.clone(), Some(wav_fine)));
            coords_next = scal_fine;
            tinv_left = tl;
            tinv_right = tr;
        }
        levels_rev.reverse();

        let realize = |column: DVector<f64>| -> BasisFn {
            let expansion = Expansion::from_dense(column.as_slice());
            let samples = combine(&fine, &expansion, nodes);
            BasisFn { expansion, samples }
        };
        let levels = levels_rev
            .into_iter()
            .map(|(scal, wav)| Level {
                scaling: scal.column_iter().map(|c| realize(c.into_owned())).collect(),
                wavelets: wav.map_or_else(Vec::new, |w| w.column_iter().map(|c| realize(c.into_owned())).collect()),
            })
            .collect();
        Ok(WaveletBasis { order, coarse, max_level, grid, levels })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coarse_level(&self) -> u32 {
        self.coarse
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    /// Level of the directly sampled functions, `m_max + 1`.
    pub fn fine_level(&self) -> u32 {
        self.max_level + 1
    }

    pub fn grid(&self) -> u32 {
        self.grid
    }

    pub fn step(&self) -> f64 {
        1.0 / (1u64 << self.grid) as f64
    }

    pub fn node_count(&self) -> usize {
        (1usize << self.grid) + 1
    }

    /// Finest-level functions, in the coordinates every [`Expansion`] uses.
    pub fn fine_functions(&self) -> &[BasisFn] {
        &self.levels.last().expect("fine level").scaling
    }

    fn level(&self, j: u32) -> Result<&Level> {
        if j < self.coarse || j > self.max_level {
            return Err(Error::LevelOutOfRange { level: j, min: self.coarse, max: self.max_level });
        }
        Ok(&self.levels[(j - self.coarse) as usize])
    }

    pub fn function(&self, idx: BasisIndex) -> Result<&BasisFn> {
        let level = self.level(idx.level).map_err(|_| Error::UnknownIndex(idx))?;
        let list = match idx.kind {
            Kind::Scaling => &level.scaling,
            Kind::Wavelet => &level.wavelets,
        };
        list.get(idx.shift).ok_or(Error::UnknownIndex(idx))
    }

    /// Scaling functions of level `j` (`J <= j <= m_max`).
    pub fn scaling_indices(&self, j: u32) -> Result<Vec<BasisIndex>> {
        self.level(j)?;
        Ok((0..1usize << j).map(|k| BasisIndex::scaling(j, k)).collect())
    }

    pub fn wavelet_indices(&self, j: u32) -> Result<Vec<BasisIndex>> {
        self.level(j)?;
        Ok((0..1usize << j).map(|k| BasisIndex::wavelet(j, k)).collect())
    }

    /// Whether shift `k` at level `j` is a translate rather than a boundary function.
    pub fn is_interior(&self, idx: BasisIndex) -> bool {
        idx.shift >= self.order && idx.shift + self.order < (1usize << idx.level)
    }

    /// Orthonormal 1-D system `φ_J, ψ_J, …, ψ_m` whose products span `S_m`.
    pub fn factors(&self, m: u32) -> Result<Vec<BasisIndex>> {
        self.level(m)?;
        let mut out = self.scaling_indices(self.coarse)?;
        for j in self.coarse..=m {
            out.extend(self.wavelet_indices(j)?);
        }
        Ok(out)
    }

    pub fn enumerate_model(&self, m: u32) -> Result<ModelLayout> {
        let coarse_count = 1usize << self.coarse;
        if m == self.coarse {
            // S_J is φ_J ⊗ φ_J only.
            let factors = self.scaling_indices(self.coarse)?;
            let blocks = (0..coarse_count).map(|y| Block { y, x_set: 0 }).collect();
            return Ok(ModelLayout { level: m, factors, x_sets: vec![(0..coarse_count).collect()], blocks });
        }
        let factors = self.factors(m)?;
        let all: Vec<usize> = (0..factors.len()).collect();
        let no_coarse_wavelets = all.iter().copied().filter(|&p| p < coarse_count || p >= 2 * coarse_count).collect();
        let no_coarse = all.iter().copied().filter(|&p| p >= 2 * coarse_count).collect();
        let blocks = (0..factors.len())
            .map(|y| {
                let x_set = match y {
                    y if y < coarse_count => 1,
                    y if y < 2 * coarse_count => 2,
                    _ => 0,
                };
                Block { y, x_set }
            })
            .collect();
        Ok(ModelLayout { level: m, factors, x_sets: vec![all, no_coarse_wavelets, no_coarse], blocks })
    }

    /// Closed support interval of the sampled function.
    pub fn support(&self, idx: BasisIndex) -> Result<(f64, f64)> {
        let s = &self.function(idx)?.samples;
        let step = self.step();
        Ok((s.start as f64 * step, (s.end().max(1) - 1) as f64 * step))
    }

    /// Linear interpolation of the node values; `x` must lie in `[0, 1]`.
    pub fn eval(&self, idx: BasisIndex, x: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::OutOfDomain { x, lo: 0.0, hi: 1.0 });
        }
        Ok(interpolate(&self.function(idx)?.samples, x, self.grid))
    }

    /// `Σ_j Σ_k φ_jk(x)²` over the factors of `S_m`, maximized on the grid.
    pub fn kernel_diagonal_sup(&self, m: u32) -> Result<f64> {
        let mut total = vec![0.0; self.node_count()];
        for idx in self.factors(m)? {
            let s = &self.function(idx)?.samples;
            for (i, v) in s.values.iter().enumerate() {
                total[s.start + i] += v * v;
            }
        }
        Ok(total.into_iter().fold(0.0, f64::max))
    }
}

pub(crate) fn interpolate(s: &SampledFn, x: f64, grid: u32) -> f64 {
    let pos = x * (1u64 << grid) as f64;
    let last = (1usize << grid) - 1;
    let cell = (pos.floor() as usize).min(last);
    if cell + 1 < s.start || cell >= s.end() {
        return 0.0;
    }
    let frac = pos - cell as f64;
    s.at(cell) * (1.0 - frac) + s.at(cell + 1) * frac
}

fn combine(fine: &[BasisFn], expansion: &Expansion, nodes: usize) -> SampledFn {
    let mut lo = nodes;
    let mut hi = 0;
    for (p, _) in expansion.iter() {
        lo = lo.min(fine[p].samples.start);
        hi = hi.max(fine[p].samples.end());
    }
    if hi <= lo {
        return SampledFn::default();
    }
    let mut values = vec![0.0; hi - lo];
    for (p, c) in expansion.iter() {
        let s = &fine[p].samples;
        for (i, v) in s.values.iter().enumerate() {
            values[s.start - lo + i] += c * v;
        }
    }
    SampledFn { start: lo, values }.trimmed()
}

/// Lagrange polynomial `ℓ_α` on the integer nodes `first..first + count`,
/// evaluated at `t`. Boundary generators use nodes on the translates that
/// carry most of their mass, which keeps their Gram matrix well conditioned
/// even for long filters.
fn lagrange(first: i64, count: usize, alpha: usize, t: f64) -> f64 {
    let node = |b: usize| (first + b as i64) as f64;
    (0..count).filter(|&b| b != alpha).map(|b| (t - node(b)) / (node(alpha) - node(b))).product()
}

/// Symmetric inverse square root of an SPD matrix.
fn inverse_sqrt(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(gram.clone());
    let min = eig.eigenvalues.min();
    if min <= 1e-15 * eig.eigenvalues.max() {
        return Err(Error::Numeric(format!("rank-deficient Gram matrix (min eigenvalue {min:e})")));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// `D (D S D)^{-1/2}` with `D` the inverse root of the diagonal, so that
/// `vectors * T` is orthonormal when `S` is their Gram matrix.
fn scaled_inverse_sqrt(gram: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = DMatrix::from_diagonal(&gram.diagonal().map(|v| 1.0 / v.sqrt()));
    Ok(&d * inverse_sqrt(&(&d * gram * &d))?)
}

/// Orthonormalizes the columns of `vectors` (two symmetric passes) and
/// returns the combined transform `T` with `orthonormal = vectors * T`.
fn lowdin_columns(vectors: &DMatrix<f64>, gram_of: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Result<DMatrix<f64>> {
    let first = scaled_inverse_sqrt(&gram_of(vectors))?;
    let once = vectors * &first;
    let second = inverse_sqrt(&gram_of(&once))?;
    Ok(first * second)
}

const LEFT_NODE: i64 = 0;

type FineLevel = (Vec<BasisFn>, DMatrix<f64>, DMatrix<f64>);

fn fine_functions(profile: &[f64], order: usize, level: u32, per_unit: usize, nodes: usize, step: f64) -> Result<FineLevel> {
    let count = 1usize << level;
    let scale = (count as f64).sqrt();
    let n = order as i64;
    // Node range of the translate k: starts at (k - N + 1) * per_unit.
    let translate_into = |values: &mut [f64], origin: i64, k: i64, weight: f64| {
        let start = (k - n + 1) * per_unit as i64;
        for (i, p) in profile.iter().enumerate() {
            let node = start + i as i64 - origin;
            if node >= 0 && (node as usize) < values.len() && (origin + node) < nodes as i64 {
                values[node as usize] += weight * scale * p;
            }
        }
    };

    let edge_len = (2 * order - 1) * per_unit + 1;
    let left: Vec<SampledFn> = (0..order)
        .map(|alpha| {
            let mut values = vec![0.0; edge_len];
            for k in -(n - 1)..n {
                translate_into(&mut values, 0, k, lagrange(LEFT_NODE, order, alpha, k as f64));
            }
            SampledFn { start: 0, values }
        })
        .collect();
    let right_origin = (count - 2 * order + 1) * per_unit;
    let right: Vec<SampledFn> = (0..order)
        .map(|alpha| {
            let mut values = vec![0.0; nodes - right_origin];
            for t in -n..(n - 1) {
                let k = count as i64 + t;
                translate_into(&mut values, right_origin as i64, k, lagrange(-n, order, alpha, t as f64));
            }
            SampledFn { start: right_origin, values }
        })
        .collect();

    let orthonormalize = |gens: &[SampledFn]| -> Result<(Vec<SampledFn>, DMatrix<f64>)> {
        let gram = DMatrix::from_fn(gens.len(), gens.len(), |a, b| gens[a].dot(&gens[b], step));
        let first = scaled_inverse_sqrt(&gram)?;
        let combined = |t: &DMatrix<f64>| -> Vec<SampledFn> {
            (0..gens.len())
                .map(|col| {
                    let len = gens[0].values.len();
                    let mut values = vec![0.0; len];
                    for (a, g) in gens.iter().enumerate() {
                        for (v, x) in values.iter_mut().zip(&g.values) {
                            *v += t[(a, col)] * x;
                        }
                    }
                    SampledFn { start: gens[0].start, values }
                })
                .collect()
        };
        let once = combined(&first);
        let gram2 = DMatrix::from_fn(once.len(), once.len(), |a, b| once[a].dot(&once[b], step));
        let t = first * inverse_sqrt(&gram2)?;
        let t_inv = t.clone().try_inverse().ok_or_else(|| Error::Numeric("singular edge transform".into()))?;
        Ok((combined(&t), t_inv))
    };
    let (left_fns, tinv_left) = orthonormalize(&left)?;
    let (right_fns, tinv_right) = orthonormalize(&right)?;

    let mut fine = Vec::with_capacity(count);
    let mut push = |s: SampledFn, p: usize| {
        let mut dense = vec![0.0; count];
        dense[p] = 1.0;
        fine.push(BasisFn { expansion: Expansion::from_dense(&dense), samples: s.trimmed() });
    };
    for (p, s) in left_fns.into_iter().enumerate() {
        push(s, p);
    }
    for k in order..count - order {
        let start = (k - order + 1) * per_unit;
        let values = profile.iter().map(|p| scale * p).collect();
        push(SampledFn { start, values }, k);
    }
    for (a, s) in right_fns.into_iter().enumerate() {
        push(s, count - order + a);
    }
    Ok((fine, tinv_left, tinv_right))
}

/// Least-squares coefficients of `values` (sampled at integer `ts`) on the
/// Lagrange basis with nodes `first..first + order`; errors if the fit is
/// not exact.
fn polynomial_fit(ts: &[i64], values: &[f64], order: usize, first: i64) -> Result<DVector<f64>> {
    let design = DMatrix::from_fn(ts.len(), order, |r, c| lagrange(first, order, c, ts[r] as f64));
    let rhs = DVector::from_column_slice(values);
    let svd = design.clone().svd(true, true);
    let coef = svd.solve(&rhs, 1e-14).map_err(|e| Error::Numeric(e.to_string()))?;
    let resid = (&design * &coef - &rhs).amax();
    if resid > 1e-9 * (1.0 + rhs.amax()) {
        return Err(Error::Numeric(format!("boundary refinement is not polynomial (residual {resid:e})")));
    }
    Ok(coef)
}

type CoarseLevel = (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>);

/// Level-`j` scaling functions in the coordinates of level `j + 1`.
fn coarser_scaling(h: &[f64], order: usize, j: u32, tinv_left: &DMatrix<f64>, tinv_right: &DMatrix<f64>) -> Result<CoarseLevel> {
    let n = order as i64;
    let size = 1usize << j;
    let next = 2 * size;
    let tap = |idx: i64| -> f64 {
        if (0..2 * n).contains(&idx) {
            h[idx as usize]
        } else {
            0.0
        }
    };
    let mut gens = DMatrix::<f64>::zeros(next, size);

    // Left boundary generators.
    let mut left = DMatrix::<f64>::zeros(next, order);
    for alpha in 0..order {
        let mut poly_ts = Vec::new();
        let mut poly_vals = Vec::new();
        for m in -(n - 1)..=(3 * n - 2) {
            let c: f64 = (-(n - 1)..n).map(|k| lagrange(LEFT_NODE, order, alpha, k as f64) * tap(m - 2 * k + n - 1)).sum();
            if m <= n - 1 {
                poly_ts.push(m);
                poly_vals.push(c);
            } else {
                left[(m as usize, alpha)] += c;
            }
        }
        let d = polynomial_fit(&poly_ts, &poly_vals, order, LEFT_NODE)?;
        for gamma in 0..order {
            left[(gamma, alpha)] += (0..order).map(|beta| d[beta] * tinv_left[(gamma, beta)]).sum::<f64>();
        }
    }
    // Right boundary generators, in offsets t = k - 2^j.
    let mut right = DMatrix::<f64>::zeros(next, order);
    for alpha in 0..order {
        let mut poly_ts = Vec::new();
        let mut poly_vals = Vec::new();
        for tp in -(3 * n - 1)..=(n - 2) {
            let c: f64 = (-n..n - 1).map(|t| lagrange(-n, order, alpha, t as f64) * tap(tp - 2 * t + n - 1)).sum();
            if tp >= -n {
                poly_ts.push(tp);
                poly_vals.push(c);
            } else {
                right[((next as i64 + tp) as usize, alpha)] += c;
            }
        }
        let d = polynomial_fit(&poly_ts, &poly_vals, order, -n)?;
        for gamma in 0..order {
            let row = next - order + gamma;
            right[(row, alpha)] += (0..order).map(|beta| d[beta] * tinv_right[(gamma, beta)]).sum::<f64>();
        }
    }

    let gram = |v: &DMatrix<f64>| v.transpose() * v;
    let t_left = lowdin_columns(&left, gram)?;
    let t_right = lowdin_columns(&right, gram)?;
    let left_on = &left * &t_left;
    let right_on = &right * &t_right;
    for a in 0..order {
        gens.set_column(a, &left_on.column(a));
        gens.set_column(size - order + a, &right_on.column(a));
    }
    for k in order..size - order {
        for (l, &hl) in h.iter().enumerate() {
            gens[(2 * k + l + 1 - order, k)] = hl;
        }
    }
    let inv = |t: DMatrix<f64>| t.try_inverse().ok_or_else(|| Error::Numeric("singular edge transform".into()));
    Ok((gens, inv(t_left)?, inv(t_right)?))
}

/// Level-`j` wavelets in the coordinates of level `j + 1`, given the
/// level-`j` scaling functions in the same coordinates.
fn wavelets_from(g: &[f64], order: usize, j: u32, scaling: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let size = 1usize << j;
    let next = 2 * size;
    let mut out = DMatrix::<f64>::zeros(next, size);
    for k in order..size - order {
        for (l, &gl) in g.iter().enumerate() {
            out[(2 * k + l + 1 - order, k)] = gl;
        }
    }
    let interior = out.columns(order, size - 2 * order).into_owned();
    let projector = DMatrix::<f64>::identity(next, next) - scaling * scaling.transpose() - &interior * interior.transpose();

    // The complement of V_j ⊕ span(interior ψ) in V_{j+1} has dimension 2N.
    // Diagonalizing the position operator on it separates the N functions
    // living at the left end from the N at the right end.
    let eig = SymmetricEigen::new(projector.clone());
    let keep: Vec<usize> = (0..next).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    if keep.len() != 2 * order {
        return Err(Error::Numeric(format!("boundary wavelet space has dimension {} instead of {}", keep.len(), 2 * order)));
    }
    let complement = eig.eigenvectors.select_columns(&keep);
    let position = DMatrix::from_diagonal(&DVector::from_fn(next, |i, _| i as f64));
    let localized = SymmetricEigen::new(complement.transpose() * position * &complement);
    let mut by_position: Vec<usize> = (0..2 * order).collect();
    by_position.sort_by(|&a, &b| localized.eigenvalues[a].total_cmp(&localized.eigenvalues[b]));
    let mut edges = &complement * localized.eigenvectors.select_columns(&by_position);
    for mut col in edges.column_iter_mut() {
        // Deterministic sign: largest-magnitude coordinate positive.
        let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    for c in 0..order {
        out.set_column(c, &edges.column(c));
        out.set_column(size - order + c, &edges.column(order + c));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_error(basis: &WaveletBasis, list: &[BasisIndex]) -> f64 {
        let step = basis.step();
        let mut worst = 0.0f64;
        for (a, ia) in list.iter().enumerate() {
            let fa = &basis.function(*ia).unwrap().samples;
            for (b, ib) in list.iter().enumerate().skip(a) {
                let fb = &basis.function(*ib).unwrap().samples;
                let expected = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((fa.dot(fb, step) - expected).abs());
            }
        }
        worst
    }

    #[test]
    fn dimension_examples() {
        assert_eq!(dimension(5, 5).unwrap(), 1024);
        assert_eq!(dimension(5, 6).unwrap(), 13312);
        assert_eq!(dimension(2, 4).unwrap(), 976);
        assert!(dimension(3, 2).is_err());
        for m in 2..8 {
            let d = dimension(2, m).unwrap();
            assert!(d >= 1 << (2 * m) && d <= 1 << (2 * m + 2));
        }
    }

    #[test]
    fn smallest_coarse_level() {
        assert_eq!(min_coarse_level(2), 2);
        assert_eq!(min_coarse_level(4), 3);
        assert_eq!(min_coarse_level(5), 4);
        assert_eq!(min_coarse_level(10), 5);
        for order in MIN_ORDER..=MAX_ORDER {
            let j = min_coarse_level(order);
            assert!(1usize << j >= 2 * order && 1usize << (j - 1) < 2 * order);
        }
    }

    #[test]
    fn kernel_diagonal_grows_like_dimension() {
        let basis = WaveletBasis::build(2, 2, 5, 13).unwrap();
        let ratios: Vec<f64> = (2..=5).map(|m| basis.kernel_diagonal_sup(m).unwrap() / (1u64 << m) as f64).collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(ratios.iter().all(|r| (r / mean - 1.0).abs() < 0.1), "{ratios:?}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(WaveletBasis::build(11, 5, 5, 12), Err(Error::UnsupportedOrder(11))));
        assert!(matches!(WaveletBasis::build(3, 2, 3, 12), Err(Error::CoarseLevelTooSmall { .. })));
        assert!(WaveletBasis::build(2, 3, 2, 12).is_err());
        assert!(WaveletBasis::build(2, 2, 4, 7).is_err());
    }

    #[test]
    fn every_level_is_orthonormal() {
        for order in [2, 3] {
            let coarse = if order == 2 { 2 } else { 3 };
            let basis = WaveletBasis::build(order, coarse, coarse + 2, coarse + 11).unwrap();
            for j in coarse..=basis.max_level() {
                let mut list = basis.scaling_indices(j).unwrap();
                list.extend(basis.wavelet_indices(j).unwrap());
                assert!(gram_error(&basis, &list) < 1e-12, "order {order} level {j}");
            }
            let factors = basis.factors(basis.max_level()).unwrap();
            assert!(gram_error(&basis, &factors) < 1e-12);
        }
    }

    #[test]
    fn wavelets_orthogonal_to_coarser_scaling() {
        let basis = WaveletBasis::build(2, 2, 4, 13).unwrap();
        let step = basis.step();
        for j in 2..=4 {
            for w in basis.wavelet_indices(j).unwrap() {
                let fw = &basis.function(w).unwrap().samples;
                for s in basis.scaling_indices(2).unwrap() {
                    let fs = &basis.function(s).unwrap().samples;
                    assert!(fw.dot(fs, step).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn interior_functions_are_translates() {
        let basis = WaveletBasis::build(2, 2, 4, 12).unwrap();
        for j in 3..=4 {
            let a = &basis.function(BasisIndex::scaling(j, 2)).unwrap().samples;
            let b = &basis.function(BasisIndex::scaling(j, 3)).unwrap().samples;
            let shift = 1usize << (12 - j);
            assert_eq!(b.start, a.start + shift);
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interior_support_and_integral() {
        let basis = WaveletBasis::build(2, 2, 4, 12).unwrap();
        let step = basis.step();
        for j in 2..=4 {
            for idx in basis.scaling_indices(j).unwrap().into_iter().filter(|i| basis.is_interior(*i)) {
                let (lo, hi) = basis.support(idx).unwrap();
                let scale = (1u64 << j) as f64;
                let k = idx.shift as f64;
                assert!(lo >= (k - 1.0) / scale - 1e-12 && hi <= (k + 2.0) / scale + 1e-12);
                let s = &basis.function(idx).unwrap().samples;
                let integral = step * s.values.iter().sum::<f64>();
                assert!((integral - scale.sqrt().recip()).abs() < 1e-8, "{idx}: {integral}");
                assert_eq!(basis.eval(idx, ((k - 1.0) / scale - 0.01).max(0.0)).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn refinement_holds_on_grid() {
        let basis = WaveletBasis::build(2, 2, 4, 12).unwrap();
        let h = filters::daubechies(2).unwrap();
        for j in 2..4u32 {
            for k in 2..(1usize << j) - 2 {
                let parent = basis.function(BasisIndex::scaling(j, k)).unwrap();
                for node in (0..basis.node_count()).step_by(7) {
                    let mut sum = 0.0;
                    for (l, hl) in h.iter().enumerate() {
                        let child = BasisIndex::scaling(j + 1, 2 * k + l - 1);
                        sum += hl * basis.function(child).unwrap().samples.at(node);
                    }
                    assert!((sum - parent.samples.at(node)).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn layout_counts_match_dimension() {
        let basis = WaveletBasis::build(2, 2, 4, 12).unwrap();
        for m in 2..=4 {
            let layout = basis.enumerate_model(m).unwrap();
            assert_eq!(layout.len(), dimension(2, m).unwrap());
            let pairs = layout.tensor_indices();
            let unique: std::collections::HashSet<_> = pairs.iter().collect();
            assert_eq!(unique.len(), pairs.len());
            for (x, y) in &pairs {
                let coarse_detail = x.level == 2 && y.level == 2 && (x.kind == Kind::Wavelet || y.kind == Kind::Wavelet);
                assert!(!coarse_detail);
                assert!(x.kind == Kind::Wavelet || x.level == 2);
            }
        }
        let first = basis.enumerate_model(2).unwrap();
        assert!(first.tensor_indices().iter().all(|(x, y)| x.kind == Kind::Scaling && y.kind == Kind::Scaling));
        assert!(basis.enumerate_model(5).is_err());
    }

    #[test]
    fn eval_domain_checks() {
        let basis = WaveletBasis::build(2, 2, 3, 10).unwrap();
        let idx = BasisIndex::scaling(2, 0);
        assert!(basis.eval(idx, -0.1).is_err());
        assert!(basis.eval(idx, 1.1).is_err());
        assert!(basis.eval(idx, 1.0).is_ok());
        assert!(basis.function(BasisIndex::scaling(2, 4)).is_err());
        assert!(basis.function(BasisIndex::wavelet(4, 0)).is_err());
    }
}
