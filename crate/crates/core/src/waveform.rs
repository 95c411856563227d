//! Symbol generation, DAM and OFDM transmit synthesis, PAPR analysis.

use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::check_distinct;
use crate::error::{invalid, Error, Result};
use crate::linalg::{CMatrix, CVector, C64, ZERO};
use crate::rng::trial_rng;
use crate::units::lin_to_db;

/// Modulation alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Qpsk,
    Qam16,
    Qam64,
}

impl std::str::FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Self::Qpsk),
            "qam16" | "16qam" => Ok(Self::Qam16),
            "qam64" | "64qam" => Ok(Self::Qam64),
            other => Err(invalid("modulation", format!("unknown alphabet `{other}`"))),
        }
    }
}

/// Square QAM alphabet with unit average power.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub kind: Modulation,
    pub points: Vec<C64>,
    /// Largest point modulus `A_max`.
    pub a_max: f64,
}

impl Constellation {
    pub fn new(kind: Modulation) -> Self {
        let side: usize = match kind {
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
            Modulation::Qam64 => 8,
        };
        let levels: Vec<f64> = (0..side).map(|i| 2.0 * i as f64 - (side - 1) as f64).collect();
        let mut points: Vec<C64> = levels
            .iter()
            .flat_map(|&re| levels.iter().map(move |&im| C64::new(re, im)))
            .collect();
        let mean = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
        let scale = mean.sqrt().recip();
        for p in &mut points {
            *p *= scale;
        }
        let a_max = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
        Self { kind, points, a_max }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> C64 {
        self.points[rng.random_range(0..self.points.len())]
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<C64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Symbol stream `s[n]` for `n ∈ [-pad, N-1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolFrame {
    symbols: Vec<C64>,
    pad: usize,
    len: usize,
}

impl SymbolFrame {
    pub fn random<R: Rng + ?Sized>(c: &Constellation, len: usize, pad: usize, rng: &mut R) -> Self {
        Self {
            symbols: c.sample_n(rng, pad + len),
            pad,
            len,
        }
    }

    /// `symbols[0]` is `s[-pad]`.
    pub fn from_symbols(symbols: Vec<C64>, pad: usize) -> Result<Self> {
        if symbols.len() <= pad {
            return Err(invalid("symbols", "frame must hold at least one symbol after the pad"));
        }
        let len = symbols.len() - pad;
        Ok(Self { symbols, pad, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn pad(&self) -> usize {
        self.pad
    }

    /// Raw storage, starting at `s[-pad]`.
    pub fn symbols(&self) -> &[C64] {
        &self.symbols
    }

    /// `s[n]`; panics outside `[-pad, N-1]`.
    #[inline]
    pub fn at(&self, n: isize) -> C64 {
        self.symbols[(n + self.pad as isize) as usize]
    }

    /// `s[n - shift]` for `n = 0..N`.
    pub fn shifted(&self, shift: usize) -> &[C64] {
        let start = self.pad - shift;
        &self.symbols[start..start + self.len]
    }
}

/// Per-path beamformers `f_l` with their delay pre-compensations `κ_l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSet {
    vectors: Vec<CVector>,
    kappas: Vec<usize>,
}

impl BeamformerSet {
    pub fn new(vectors: Vec<CVector>, kappas: Vec<usize>) -> Result<Self> {
        if vectors.is_empty() {
            return Err(invalid("vectors", "at least one beamformer is required"));
        }
        if vectors.len() != kappas.len() {
            return Err(Error::DimensionMismatch {
                context: "delay pre-compensations",
                expected: vectors.len(),
                actual: kappas.len(),
            });
        }
        let m = vectors[0].len();
        if let Some(v) = vectors.iter().find(|v| v.len() != m) {
            return Err(Error::DimensionMismatch {
                context: "beamformer length",
                expected: m,
                actual: v.len(),
            });
        }
        check_distinct(kappas.iter().copied())?;
        Ok(Self { vectors, kappas })
    }

    /// Columns of `f` become the beamformers.
    pub fn from_matrix(f: &CMatrix, kappas: Vec<usize>) -> Result<Self> {
        Self::new(f.column_iter().map(|c| c.into_owned()).collect(), kappas)
    }

    pub fn vectors(&self) -> &[CVector] {
        &self.vectors
    }

    pub fn kappas(&self) -> &[usize] {
        &self.kappas
    }

    pub fn num_paths(&self) -> usize {
        self.vectors.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn kappa_max(&self) -> usize {
        self.kappas.iter().copied().max().unwrap_or(0)
    }

    /// `F = [f_1, ..., f_L]`.
    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_columns(&self.vectors)
    }

    /// `Σ_l ‖f_l‖²`.
    pub fn total_power(&self) -> f64 {
        self.vectors.iter().map(|f| f.norm_squared()).sum()
    }

    pub fn check_power(&self, p_t: f64, rel_tol: f64) -> Result<()> {
        let p = self.total_power();
        if p > p_t * (1.0 + rel_tol) {
            return Err(invalid("beamformers", format!("total power {p:e} exceeds budget {p_t:e}")));
        }
        Ok(())
    }

    /// `a^H f_l` for every path.
    pub fn projected(&self, a: &CVector) -> Vec<C64> {
        self.vectors.iter().map(|f| a.dotc(f)).collect()
    }

    /// `a^H F F^H a`.
    pub fn beam_gain(&self, a: &CVector) -> f64 {
        self.projected(a).iter().map(|g| g.norm_sqr()).sum()
    }
}

/// `κ_l = max(n) - n_l`.
pub fn kappas_from_delays(delays: &[usize]) -> Result<Vec<usize>> {
    check_distinct(delays.iter().copied())?;
    let max = delays.iter().copied().max().unwrap_or(0);
    Ok(delays.iter().map(|&n| max - n).collect())
}

/// Per-antenna transmit samples. Column `j` holds `x[j - guard]`, so the
/// first `guard` columns are history preceding the CPI.
#[derive(Debug, Clone, PartialEq)]
pub struct TxFrame {
    samples: CMatrix,
    guard: usize,
}

impl TxFrame {
    pub fn from_matrix(samples: CMatrix, guard: usize) -> Result<Self> {
        if guard >= samples.ncols() {
            return Err(invalid("guard", "frame has no samples after the guard"));
        }
        Ok(Self { samples, guard })
    }

    pub fn samples(&self) -> &CMatrix {
        &self.samples
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    pub fn num_antennas(&self) -> usize {
        self.samples.nrows()
    }

    /// Number of samples after the guard.
    pub fn len(&self) -> usize {
        self.samples.ncols() - self.guard
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `x[n]`, `n ∈ [-guard, len-1]`.
    pub fn column(&self, n: isize) -> CVector {
        self.samples.column((n + self.guard as isize) as usize).into_owned()
    }

    /// Samples of antenna `m` after the guard.
    pub fn row(&self, m: usize) -> Vec<C64> {
        self.samples.row(m).iter().skip(self.guard).copied().collect()
    }

    /// `len⁻¹ Σ_n ‖x[n]‖²` over the samples after the guard.
    pub fn mean_power(&self) -> f64 {
        let body = self.samples.columns(self.guard, self.len());
        body.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.len() as f64
    }

    /// Dumps the whole frame, antenna-major, as little-endian interleaved
    /// `f32` real/imaginary pairs.
    pub fn write_le<W: Write>(&self, mut w: W) -> io::Result<()> {
        for m in 0..self.samples.nrows() {
            for v in self.samples.row(m).iter() {
                w.write_all(&(v.re as f32).to_le_bytes())?;
                w.write_all(&(v.im as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// `x[n] = Σ_l f_l s[n - κ_l]`. The returned frame keeps
/// `pad - κ_max` columns of history ahead of `n = 0`.
pub fn dam_modulate(bf: &BeamformerSet, frame: &SymbolFrame) -> Result<TxFrame> {
    let kmax = bf.kappa_max();
    if frame.pad() < kmax {
        return Err(Error::PadTooSmall {
            pad: frame.pad(),
            required: kmax,
        });
    }
    let guard = frame.pad() - kmax;
    let total = guard + frame.len();
    let m = bf.num_antennas();
    let mut x = CMatrix::zeros(m, total);
    for (f, &k) in bf.vectors().iter().zip(bf.kappas()) {
        // s[n - κ] for n = -guard..len starts at storage index pad - guard - κ
        let start = frame.pad() - guard - k;
        let stream = &frame.symbols()[start..start + total];
        for (j, &s) in stream.iter().enumerate() {
            let mut col = x.column_mut(j);
            for (dst, &fm) in col.iter_mut().zip(f.iter()) {
                *dst += fm * s;
            }
        }
    }
    TxFrame::from_matrix(x, guard)
}

/// Scalar stream `u[n] = a^H x[n]` seen in one direction, same indexing as
/// [`TxFrame`].
#[derive(Debug, Clone, PartialEq)]
pub struct BeamStream {
    samples: Vec<C64>,
    guard: usize,
}

impl BeamStream {
    pub fn new(samples: Vec<C64>, guard: usize) -> Result<Self> {
        if guard >= samples.len() {
            return Err(invalid("guard", "stream has no samples after the guard"));
        }
        Ok(Self { samples, guard })
    }

    pub fn project(tx: &TxFrame, a: &CVector) -> Result<Self> {
        if a.len() != tx.num_antennas() {
            return Err(Error::DimensionMismatch {
                context: "steering vector",
                expected: tx.num_antennas(),
                actual: a.len(),
            });
        }
        let s = tx.samples();
        let samples = (0..s.ncols()).map(|j| a.dotc(&s.column(j))).collect();
        Self::new(samples, tx.guard())
    }

    /// `a^H x[n]` computed as `Σ_l (a^H f_l) s[n - κ_l]` without forming the
    /// per-antenna frame.
    pub fn from_dam(bf: &BeamformerSet, frame: &SymbolFrame, a: &CVector) -> Result<Self> {
        if a.len() != bf.num_antennas() {
            return Err(Error::DimensionMismatch {
                context: "steering vector",
                expected: bf.num_antennas(),
                actual: a.len(),
            });
        }
        let kmax = bf.kappa_max();
        if frame.pad() < kmax {
            return Err(Error::PadTooSmall {
                pad: frame.pad(),
                required: kmax,
            });
        }
        let guard = frame.pad() - kmax;
        let total = guard + frame.len();
        let mut u = vec![ZERO; total];
        for (g, &k) in bf.projected(a).iter().zip(bf.kappas()) {
            let start = frame.pad() - guard - k;
            for (dst, &s) in u.iter_mut().zip(&frame.symbols()[start..start + total]) {
                *dst += g * s;
            }
        }
        Self::new(u, guard)
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    pub fn len(&self) -> usize {
        self.samples.len() - self.guard
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Raw storage, starting at `u[-guard]`.
    pub fn raw(&self) -> &[C64] {
        &self.samples
    }

    #[inline]
    pub fn at(&self, n: isize) -> C64 {
        self.samples[(n + self.guard as isize) as usize]
    }

    /// `u[n - shift]` for `n = 0..len`.
    pub fn shifted(&self, shift: usize) -> &[C64] {
        let start = self.guard - shift;
        &self.samples[start..start + self.len()]
    }
}

/// CP-OFDM synthesis: symbol `i` is `K^{-1/2} Σ_k w_k X_i[k] e^{j2πkn/K}`
/// preceded by its last `cp_len` samples.
pub fn ofdm_modulate(precoders: &[CVector], data: &CMatrix, cp_len: usize) -> Result<TxFrame> {
    let k = precoders.len();
    if k == 0 || !k.is_power_of_two() {
        return Err(invalid("num_subcarriers", format!("must be a power of two, got {k}")));
    }
    if data.ncols() != k {
        return Err(Error::DimensionMismatch {
            context: "OFDM data columns",
            expected: k,
            actual: data.ncols(),
        });
    }
    if cp_len > k {
        return Err(invalid("cp_len", "cyclic prefix longer than the symbol"));
    }
    let m = precoders[0].len();
    if let Some(w) = precoders.iter().find(|w| w.len() != m) {
        return Err(Error::DimensionMismatch {
            context: "precoder length",
            expected: m,
            actual: w.len(),
        });
    }
    let num_sym = data.nrows();
    let block = k + cp_len;
    let ifft = FftPlanner::new().plan_fft_inverse(k);
    let scale = (k as f64).sqrt().recip();
    let mut x = CMatrix::zeros(m, num_sym * block);
    let mut buf = vec![ZERO; k];
    for ant in 0..m {
        for i in 0..num_sym {
            for (sc, b) in buf.iter_mut().enumerate() {
                *b = precoders[sc][ant] * data[(i, sc)];
            }
            ifft.process(&mut buf);
            let off = i * block;
            for (j, &v) in buf[k - cp_len..].iter().chain(buf.iter()).enumerate() {
                x[(ant, off + j)] = v * scale;
            }
        }
    }
    TxFrame::from_matrix(x, 0)
}

/// Removes the CP of each block and applies the unitary DFT, returning the
/// `I x K` subcarrier matrix.
pub fn ofdm_demodulate(signal: &[C64], num_subcarriers: usize, cp_len: usize) -> Result<CMatrix> {
    let k = num_subcarriers;
    let block = k + cp_len;
    if k == 0 || !signal.len().is_multiple_of(block) {
        return Err(invalid("signal", format!("length {} is not a multiple of K + N_p = {block}", signal.len())));
    }
    let num_sym = signal.len() / block;
    let fft = FftPlanner::new().plan_fft_forward(k);
    let scale = (k as f64).sqrt().recip();
    let mut out = CMatrix::zeros(num_sym, k);
    let mut buf = vec![ZERO; k];
    for i in 0..num_sym {
        buf.copy_from_slice(&signal[i * block + cp_len..(i + 1) * block]);
        fft.process(&mut buf);
        for (sc, &v) in buf.iter().enumerate() {
            out[(i, sc)] = v * scale;
        }
    }
    Ok(out)
}

/// PAPR of each antenna and the overall maximum, linear scale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PaprReport {
    pub per_antenna: Vec<f64>,
    pub overall: f64,
}

/// Peak of `|x|²` over all length-`window_len` windows divided by the mean
/// `|x|²` of the antenna, evaluated on the samples after the guard.
pub fn papr(tx: &TxFrame, window_len: usize) -> Result<PaprReport> {
    if window_len == 0 || window_len > tx.len() {
        return Err(invalid("window_len", format!("must lie in 1..={}", tx.len())));
    }
    let mut per_antenna = Vec::with_capacity(tx.num_antennas());
    for m in 0..tx.num_antennas() {
        let row = tx.row(m);
        let windows = papr_windows(&row, window_len).map_err(|_| Error::ZeroSignal(m))?;
        per_antenna.push(windows.into_iter().fold(0.0, f64::max));
    }
    let overall = per_antenna.iter().copied().fold(0.0, f64::max);
    Ok(PaprReport { per_antenna, overall })
}

/// One PAPR value per non-overlapping window of length `window_len`; every
/// window is normalized by the mean power of the whole sequence.
pub fn papr_windows(x: &[C64], window_len: usize) -> Result<Vec<f64>> {
    if window_len == 0 || window_len > x.len() {
        return Err(invalid("window_len", format!("must lie in 1..={}", x.len())));
    }
    let mean = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
    if mean == 0.0 {
        return Err(Error::ZeroSignal(0));
    }
    Ok(x
        .chunks_exact(window_len)
        .map(|w| w.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max) / mean)
        .collect())
}

fn coherent_bound(weights: impl Iterator<Item = f64>, a_max: f64, row: usize) -> Result<f64> {
    let (sum, sum_sq) = weights.fold((0.0, 0.0), |(s, q), w| (s + w, q + w * w));
    if sum_sq == 0.0 {
        return Err(Error::ZeroSignal(row));
    }
    Ok(a_max * a_max * sum * sum / sum_sq)
}

/// `A²_max (Σ_l |f_l^(m)|)² / Σ_l |f_l^(m)|²` per antenna.
pub fn papr_bound_dam(bf: &BeamformerSet, a_max: f64) -> Result<Vec<f64>> {
    (0..bf.num_antennas())
        .map(|m| coherent_bound(bf.vectors().iter().map(|f| f[m].norm()), a_max, m))
        .collect()
}

/// `A²_max (Σ_k |w_k^(m)|)² / Σ_k |w_k^(m)|²` per antenna.
pub fn papr_bound_ofdm(precoders: &[CVector], a_max: f64) -> Result<Vec<f64>> {
    if precoders.is_empty() {
        return Err(invalid("precoders", "at least one subcarrier is required"));
    }
    (0..precoders[0].len())
        .map(|m| coherent_bound(precoders.iter().map(|w| w[m].norm()), a_max, m))
        .collect()
}

/// Source of independent PAPR samples for Monte Carlo CCDF estimation.
pub trait PaprSampler: Sync {
    /// PAPR values (linear) from one independent trial.
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
}

/// Single-antenna DAM signal `Σ_l g_l s[n - κ_l]` cut into windows.
#[derive(Debug, Clone)]
pub struct DamPaprSampler {
    pub weights: Vec<C64>,
    pub kappas: Vec<usize>,
    pub constellation: Constellation,
    pub window_len: usize,
    pub windows_per_trial: usize,
}

impl PaprSampler for DamPaprSampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let n = self.window_len * self.windows_per_trial;
        let kmax = self.kappas.iter().copied().max().unwrap_or(0);
        let s = self.constellation.sample_n(rng, n + kmax);
        let mut x = vec![ZERO; n];
        for (&g, &k) in self.weights.iter().zip(&self.kappas) {
            for (dst, &v) in x.iter_mut().zip(&s[kmax - k..kmax - k + n]) {
                *dst += g * v;
            }
        }
        papr_windows(&x, self.window_len).unwrap_or_default()
    }
}

/// Single-antenna OFDM signal, one PAPR value per OFDM symbol (CP excluded).
#[derive(Debug, Clone)]
pub struct OfdmPaprSampler {
    /// `w_k^(m)` of the observed antenna, one per subcarrier.
    pub weights: Vec<C64>,
    pub constellation: Constellation,
    pub symbols_per_trial: usize,
}

impl PaprSampler for OfdmPaprSampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let k = self.weights.len();
        let ifft = FftPlanner::new().plan_fft_inverse(k);
        let mut x = Vec::with_capacity(k * self.symbols_per_trial);
        let mut buf = vec![ZERO; k];
        for _ in 0..self.symbols_per_trial {
            for (b, &w) in buf.iter_mut().zip(&self.weights) {
                *b = w * self.constellation.sample(rng);
            }
            ifft.process(&mut buf);
            x.extend(buf.iter().map(|v| v / (k as f64).sqrt()));
        }
        papr_windows(&x, k).unwrap_or_default()
    }
}

pub const MIN_CCDF_SAMPLES: usize = 10_000;

/// Empirical PAPR distribution, values kept sorted in dB.
#[derive(Debug, Clone, PartialEq)]
pub struct PaprDistribution {
    sorted_db: Vec<f64>,
}

/// `P(PAPR > x)` at each threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcdfTable {
    pub thresholds_db: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub num_samples: usize,
}

impl PaprDistribution {
    pub fn from_linear(samples: &[f64]) -> Result<Self> {
        if samples.len() < MIN_CCDF_SAMPLES {
            return Err(Error::TooFewSamples {
                needed: MIN_CCDF_SAMPLES,
                got: samples.len(),
            });
        }
        let mut sorted_db: Vec<f64> = samples.iter().map(|&v| lin_to_db(v)).collect();
        sorted_db.sort_by(f64::total_cmp);
        Ok(Self { sorted_db })
    }

    pub fn len(&self) -> usize {
        self.sorted_db.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_db.is_empty()
    }

    pub fn ccdf(&self, threshold_db: f64) -> f64 {
        let below = self.sorted_db.partition_point(|&v| v <= threshold_db);
        (self.len() - below) as f64 / self.len() as f64
    }

    /// Smallest sample value `x` with `P(PAPR > x) ≤ p`.
    pub fn quantile_db(&self, p: f64) -> f64 {
        let n = self.len();
        let idx = ((1.0 - p.clamp(0.0, 1.0)) * n as f64).ceil() as usize;
        self.sorted_db[idx.saturating_sub(1).min(n - 1)]
    }

    pub fn table(&self, thresholds_db: &[f64]) -> CcdfTable {
        CcdfTable {
            thresholds_db: thresholds_db.to_vec(),
            probabilities: thresholds_db.iter().map(|&t| self.ccdf(t)).collect(),
            num_samples: self.len(),
        }
    }
}

/// Runs `num_trials` independent sampler trials (trial `t` uses stream `t`
/// of `base_seed`) and pools the results.
pub fn papr_distribution<S: PaprSampler>(sampler: &S, num_trials: usize, base_seed: u64) -> Result<PaprDistribution> {
    let samples: Vec<f64> = (0..num_trials as u64)
        .into_par_iter()
        .map(|t| sampler.draw(&mut trial_rng(base_seed, t)))
        .collect::<Vec<_>>()
        .concat();
    PaprDistribution::from_linear(&samples)
}

/// Monte Carlo CCDF at the given thresholds.
pub fn papr_ccdf<S: PaprSampler>(
    sampler: &S,
    num_trials: usize,
    base_seed: u64,
    thresholds_db: &[f64],
) -> Result<CcdfTable> {
    Ok(papr_distribution(sampler, num_trials, base_seed)?.table(thresholds_db))
}
