//! Echo synthesis, matched filtering and delay-Doppler ambiguity analysis.
//!
//! Time inside a CPI runs over `n = 0..N`. The delay difference is
//! `d_τ = τ_p - τ` and the Doppler difference `d_ν = ν - ν_q`, so a matched
//! filter tuned to `(τ_p, ν_q)` sees the ambiguity function at `(d_τ, d_ν)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::channel::{SensingTarget, UlaGeometry};
use crate::error::{invalid, Error, Result};
use crate::linalg::{complex_gaussian, CMatrix, CVector, C64, ZERO};
use crate::waveform::{BeamStream, BeamformerSet, SymbolFrame, TxFrame};

/// Matched-filter bank layout: integer delay bins and Doppler bins in Hz.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayDopplerGrid {
    delay_bins: Vec<usize>,
    doppler_bins_hz: Vec<f64>,
}

impl DelayDopplerGrid {
    pub fn new(delay_bins: Vec<usize>, doppler_bins_hz: Vec<f64>) -> Result<Self> {
        if delay_bins.is_empty() || doppler_bins_hz.is_empty() {
            return Err(invalid("grid", "needs at least one delay and one Doppler bin"));
        }
        if !delay_bins.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("delay_bins", "must be strictly increasing"));
        }
        if !doppler_bins_hz.windows(2).all(|w| w[0] < w[1]) {
            return Err(invalid("doppler_bins_hz", "must be strictly increasing"));
        }
        Ok(Self {
            delay_bins,
            doppler_bins_hz,
        })
    }

    /// Delay bins `0..=max_delay`; Doppler bins `q / (N T_s)` for
    /// `|q| ≤ half_width`.
    pub fn resolution_grid(max_delay: usize, n: usize, ts: f64, half_width: usize) -> Self {
        let step = 1.0 / (n as f64 * ts);
        let h = half_width as i64;
        Self {
            delay_bins: (0..=max_delay).collect(),
            doppler_bins_hz: (-h..=h).map(|q| q as f64 * step).collect(),
        }
    }

    pub fn delay_bins(&self) -> &[usize] {
        &self.delay_bins
    }

    pub fn doppler_bins_hz(&self) -> &[f64] {
        &self.doppler_bins_hz
    }
}

/// Received echo after the guard samples have been discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoFrame {
    pub samples: Vec<C64>,
    pub noise_power: f64,
}

/// `y[n] = α a^H(θ) x[n-τ] e^{j2πνnT_s} + z[n]` for `n = 0..N`.
pub fn synth_echo(
    tx: &TxFrame,
    geom: &UlaGeometry,
    target: &SensingTarget,
    sigma2: f64,
    ts: f64,
    seed: u64,
) -> Result<EchoFrame> {
    let u = BeamStream::project(tx, &geom.steering_vector(target.direction_rad))?;
    synth_echo_stream(&u, target, sigma2, ts, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Echo from a stream already projected on `a(θ)`.
pub fn synth_echo_stream<R: rand::Rng + ?Sized>(
    u: &BeamStream,
    target: &SensingTarget,
    sigma2: f64,
    ts: f64,
    rng: &mut R,
) -> Result<EchoFrame> {
    if target.delay_taps > u.guard() {
        return Err(Error::DelayBeyondGuard {
            delay: target.delay_taps,
            guard: u.guard(),
        });
    }
    if !(sigma2 >= 0.0) {
        return Err(invalid("sigma2", "noise power must be nonnegative"));
    }
    let f = target.doppler_hz * ts;
    let samples = u
        .shifted(target.delay_taps)
        .iter()
        .enumerate()
        .map(|(n, &x)| {
            let clean = target.gain * x * C64::from_polar(1.0, 2.0 * PI * (f * n as f64).fract());
            if sigma2 > 0.0 {
                clean + complex_gaussian(rng, sigma2)
            } else {
                clean
            }
        })
        .collect();
    Ok(EchoFrame {
        samples,
        noise_power: sigma2,
    })
}

/// `Σ_n p[n] e^{j2π f n}` with `f` in cycles per sample. The phasor is
/// advanced by multiplication and re-anchored every block.
pub fn dtft(p: &[C64], f: f64) -> C64 {
    const BLOCK: usize = 512;
    let step = C64::from_polar(1.0, 2.0 * PI * f);
    let mut acc = ZERO;
    for (b, chunk) in p.chunks(BLOCK).enumerate() {
        let n0 = (b * BLOCK) as f64;
        let mut ph = C64::from_polar(1.0, 2.0 * PI * (f * n0).fract());
        let mut part = ZERO;
        for &v in chunk {
            part += v * ph;
            ph *= step;
        }
        acc += part;
    }
    acc
}

/// Taper applied before transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    None,
    Hamming,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            Window::Hamming if n == 1 => vec![1.0],
            Window::Hamming => (0..n)
                .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
                .collect(),
        }
    }
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(Self::None),
            "hamming" => Ok(Self::Hamming),
            other => Err(invalid("window", format!("unknown window `{other}`"))),
        }
    }
}

/// `y[n] u*[n-τ_p]` and the reference energy `Σ|u[n-τ_p]|²`.
fn lag_product(y: &[C64], reference: &BeamStream, tau_p: usize) -> Result<(Vec<C64>, f64)> {
    if tau_p > reference.guard() {
        return Err(Error::DelayBeyondGuard {
            delay: tau_p,
            guard: reference.guard(),
        });
    }
    if y.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            context: "echo length",
            expected: reference.len(),
            actual: y.len(),
        });
    }
    let r = reference.shifted(tau_p);
    let energy: f64 = r.iter().map(|v| v.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::ZeroReference(tau_p));
    }
    Ok((y.iter().zip(r).map(|(a, b)| a * b.conj()).collect(), energy))
}

/// `r(τ_p, ν_q) = h^H y` with `h[n] = u[n-τ_p] e^{j2πν_q n T_s} / ‖u_{τ_p}‖`,
/// returned as a `P x Q` matrix.
pub fn matched_filter_map(echo: &EchoFrame, reference: &BeamStream, grid: &DelayDopplerGrid, ts: f64) -> Result<CMatrix> {
    let rows = grid
        .delay_bins()
        .par_iter()
        .map(|&tau_p| {
            let (p, energy) = lag_product(&echo.samples, reference, tau_p)?;
            let norm = energy.sqrt();
            Ok(grid
                .doppler_bins_hz()
                .iter()
                .map(|&nu| dtft(&p, -nu * ts) / norm)
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let q = grid.doppler_bins_hz().len();
    Ok(CMatrix::from_fn(rows.len(), q, |i, j| rows[i][j]))
}

/// Matched filter on a uniform Doppler grid `k / (n_fft T_s)`,
/// `k = -n_fft/2 .. n_fft/2`, via zero-padded FFTs. Row `i` belongs to
/// `delay_bins[i]`; column `k + n_fft/2` to Doppler bin `k`. An optional
/// taper multiplies the lag product before the transform.
pub fn matched_filter_fft(
    echo: &EchoFrame,
    reference: &BeamStream,
    delay_bins: &[usize],
    n_fft: usize,
    window: Window,
) -> Result<CMatrix> {
    let n = echo.samples.len();
    if n_fft < n {
        return Err(invalid("n_fft", format!("must cover the CPI length {n}")));
    }
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let taper = window.coefficients(n);
    let rows = delay_bins
        .par_iter()
        .map(|&tau_p| {
            let (p, energy) = lag_product(&echo.samples, reference, tau_p)?;
            let mut buf = vec![ZERO; n_fft];
            for ((b, v), w) in buf.iter_mut().zip(&p).zip(&taper) {
                *b = v * *w;
            }
            fft.process(&mut buf);
            let norm = energy.sqrt();
            buf.rotate_right(n_fft / 2);
            Ok(buf.into_iter().map(|v| v / norm).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CMatrix::from_fn(rows.len(), n_fft, |i, j| rows[i][j]))
}

/// Refines the Doppler of delay bin `tau_p` by golden-section search of
/// `|r|` in `[nu_lo, nu_hi]`.
pub fn refine_doppler(
    echo: &EchoFrame,
    reference: &BeamStream,
    tau_p: usize,
    nu_lo: f64,
    nu_hi: f64,
    ts: f64,
) -> Result<f64> {
    let (p, _) = lag_product(&echo.samples, reference, tau_p)?;
    let f = |nu: f64| -dtft(&p, -nu * ts).norm();
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (nu_lo, nu_hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    Ok((a + b) / 2.0)
}

/// Grid argmax of `|r|`; ties go to the smallest delay bin, then the
/// smallest Doppler bin. Returns `(row, column)`.
pub fn estimate_target(map: &CMatrix) -> Option<(usize, usize)> {
    let mut best: Option<((usize, usize), f64)> = None;
    for i in 0..map.nrows() {
        for j in 0..map.ncols() {
            let v = map[(i, j)].norm();
            if best.is_none_or(|(_, b)| v > b) {
                best = Some(((i, j), v));
            }
        }
    }
    best.map(|(ij, _)| ij)
}

/// `ψ(d_ν) = e^{jπd_ν(N-1)T_s} sin(πd_νNT_s) / (N sin(πd_νT_s))`.
pub fn asinc(d_nu_hz: f64, n: usize, ts: f64) -> C64 {
    let x = PI * d_nu_hz * ts;
    let den = x.sin();
    let nf = n as f64;
    let mag = if den.abs() < 1e-12 {
        // removable singularity at d_ν T_s ∈ ℤ
        let k = (d_nu_hz * ts).round() as i64;
        if (k * (n as i64 - 1)) % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    } else {
        (nf * x).sin() / (nf * den)
    };
    C64::from_polar(1.0, x * (nf - 1.0)) * mag
}

/// Skew-symmetric delay-difference matrix `Δ_{ij} = κ_i - κ_j` and the
/// index pairs (0-based) sharing each difference.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayDiffSets {
    pub delta: Vec<Vec<i64>>,
    pub sets: BTreeMap<i64, Vec<(usize, usize)>>,
}

impl DelayDiffSets {
    /// `S(d_τ)`, empty when no pair has that difference.
    pub fn pairs(&self, d_tau: i64) -> &[(usize, usize)] {
        self.sets.get(&d_tau).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Nonzero differences that occur, ascending.
    pub fn nonzero_diffs(&self) -> Vec<i64> {
        self.sets.keys().copied().filter(|&d| d != 0).collect()
    }
}

pub fn delay_diff_sets(kappas: &[usize]) -> DelayDiffSets {
    let l = kappas.len();
    let mut delta = vec![vec![0i64; l]; l];
    let mut sets: BTreeMap<i64, Vec<(usize, usize)>> = BTreeMap::new();
    for i in 0..l {
        for j in 0..l {
            let d = kappas[i] as i64 - kappas[j] as i64;
            delta[i][j] = d;
            sets.entry(d).or_default().push((i, j));
        }
    }
    DelayDiffSets { delta, sets }
}

/// Limit DDCM: entry `(i, j)` is `ψ(d_ν)` when `κ_i - κ_j = d_τ`, else 0.
pub fn asymptotic_ddcm(kappas: &[usize], d_tau: i64, d_nu_hz: f64, n: usize, ts: f64) -> CMatrix {
    let psi = asinc(d_nu_hz, n, ts);
    let l = kappas.len();
    CMatrix::from_fn(l, l, |i, j| {
        if kappas[i] as i64 - kappas[j] as i64 == d_tau {
            psi
        } else {
            ZERO
        }
    })
}

/// Finite-`N` DDCM, entry `(i, j) = N⁻¹ Σ_n s[n-κ_i-τ] s*[n-κ_j-τ_p] e^{j2π(ν-ν_q)nT_s}`.
pub fn empirical_ddcm(
    frame: &SymbolFrame,
    kappas: &[usize],
    tau_p: usize,
    nu_q_hz: f64,
    tau: usize,
    nu_hz: f64,
    ts: f64,
) -> Result<CMatrix> {
    Ok(empirical_ddcm_sweep(frame, kappas, tau_p, tau, &[nu_hz - nu_q_hz], ts)?.remove(0))
}

/// [`empirical_ddcm`] for several Doppler differences at once.
pub fn empirical_ddcm_sweep(
    frame: &SymbolFrame,
    kappas: &[usize],
    tau_p: usize,
    tau: usize,
    d_nus_hz: &[f64],
    ts: f64,
) -> Result<Vec<CMatrix>> {
    let kmax = kappas.iter().copied().max().unwrap_or(0);
    let required = kmax + tau.max(tau_p);
    if frame.pad() < required {
        return Err(Error::PadTooSmall {
            pad: frame.pad(),
            required,
        });
    }
    let l = kappas.len();
    let nf = frame.len() as f64;
    let mut out = vec![CMatrix::zeros(l, l); d_nus_hz.len()];
    for i in 0..l {
        for j in 0..l {
            let a = frame.shifted(kappas[i] + tau);
            let b = frame.shifted(kappas[j] + tau_p);
            let p: Vec<C64> = a.iter().zip(b).map(|(x, y)| x * y.conj()).collect();
            for (m, &dn) in out.iter_mut().zip(d_nus_hz) {
                m[(i, j)] = dtft(&p, dn * ts) / nf;
            }
        }
    }
    Ok(out)
}

fn beam_gains(bf: &BeamformerSet, a: &CVector) -> Result<(Vec<C64>, f64)> {
    let g = bf.projected(a);
    let den: f64 = g.iter().map(|v| v.norm_sqr()).sum();
    let scale = a.norm_squared() * bf.total_power();
    if den <= scale * 1e-24 || den == 0.0 {
        return Err(Error::OrthogonalBeam);
    }
    Ok((g, den))
}

/// `χ(d_τ, 0) = a^H(Σ_{S(d_τ)} f_i f_j^H) a / a^H F F^H a`.
pub fn delay_cut_value(bf: &BeamformerSet, a: &CVector, d_tau: i64) -> Result<C64> {
    let (g, den) = beam_gains(bf, a)?;
    if d_tau == 0 {
        return Ok(C64::new(1.0, 0.0));
    }
    let sets = delay_diff_sets(bf.kappas());
    let num: C64 = sets.pairs(d_tau).iter().map(|&(i, j)| g[i] * g[j].conj()).sum();
    Ok(num / den)
}

/// Limit AF by cases: `χ(0,0) = 1`, `χ(0,d_ν) = ψ(d_ν)`, and
/// `χ(d_τ,d_ν) = χ(d_τ,0) ψ(d_ν)`.
pub fn asymptotic_af(bf: &BeamformerSet, a: &CVector, d_tau: i64, d_nu_hz: f64, n: usize, ts: f64) -> Result<C64> {
    let dc = delay_cut_value(bf, a, d_tau)?;
    if d_nu_hz == 0.0 {
        return Ok(dc);
    }
    Ok(dc * asinc(d_nu_hz, n, ts))
}

/// `γ = |α|² N a^H F F^H a / σ²`.
pub fn sensing_snr(bf: &BeamformerSet, a: &CVector, alpha_sq: f64, n: usize, sigma2: f64) -> f64 {
    alpha_sq * n as f64 * bf.beam_gain(a) / sigma2
}

/// `Σ_{0<|d_τ|≤n_d} |χ(d_τ,0)|²`.
pub fn isr(bf: &BeamformerSet, a: &CVector, n_d: usize) -> Result<f64> {
    let (g, den) = beam_gains(bf, a)?;
    let sets = delay_diff_sets(bf.kappas());
    let nd = n_d as i64;
    Ok(sets
        .nonzero_diffs()
        .into_iter()
        .filter(|d| d.abs() <= nd)
        .map(|d| {
            let num: C64 = sets.pairs(d).iter().map(|&(i, j)| g[i] * g[j].conj()).sum();
            num.norm_sqr() / (den * den)
        })
        .sum())
}

/// Peak `|χ(0, d_ν)|` outside the mainlobe `|d_ν| < first_null_hz`.
/// `None` when no bin lies outside the mainlobe.
pub fn psr_doppler(values: &[C64], d_nus_hz: &[f64], first_null_hz: f64) -> Option<f64> {
    values
        .iter()
        .zip(d_nus_hz)
        .filter(|(_, d)| d.abs() >= first_null_hz * (1.0 - 1e-9))
        .map(|(v, _)| v.norm())
        .reduce(f64::max)
}

/// Peak sidelobe of a sampled profile relative to its peak. The mainlobe
/// extends from the peak to the first local minimum on each side; with
/// `circular` the profile wraps around.
pub fn peak_sidelobe_ratio(mags: &[f64], circular: bool) -> Option<f64> {
    let n = mags.len();
    if n < 3 {
        return None;
    }
    let (peak, &pv) = mags.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    if pv == 0.0 {
        return None;
    }
    let step = |i: usize, dir: isize| -> Option<usize> {
        let j = i as isize + dir;
        if circular {
            Some(j.rem_euclid(n as isize) as usize)
        } else if j < 0 || j >= n as isize {
            None
        } else {
            Some(j as usize)
        }
    };
    let mut in_main = vec![false; n];
    in_main[peak] = true;
    for dir in [-1isize, 1] {
        let mut i = peak;
        while let Some(j) = step(i, dir) {
            if in_main[j] || mags[j] > mags[i] {
                break;
            }
            in_main[j] = true;
            i = j;
        }
    }
    mags.iter()
        .zip(&in_main)
        .filter(|(_, &m)| !m)
        .map(|(&v, _)| v / pv)
        .reduce(f64::max)
}

/// Whether an AF surface comes from a finite frame or the large-`N` limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AfKind {
    Empirical,
    Asymptotic,
}

/// AF values over a `(d_τ, d_ν)` difference grid, rows indexed by `d_τ`.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbiguitySurface {
    pub d_taus: Vec<i64>,
    pub d_nus_hz: Vec<f64>,
    pub values: CMatrix,
    pub kind: AfKind,
}

impl AmbiguitySurface {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn delay_index(&self, d_tau: i64) -> Option<usize> {
        self.d_taus.iter().position(|&d| d == d_tau)
    }

    pub fn doppler_index(&self, d_nu: f64) -> Option<usize> {
        self.d_nus_hz.iter().position(|&d| d == d_nu)
    }

    /// `χ(d_τ, ·)` for one delay difference.
    pub fn row(&self, d_tau: i64) -> Option<Vec<C64>> {
        self.delay_index(d_tau).map(|i| self.values.row(i).iter().copied().collect())
    }

    /// `χ(·, d_ν)` for one Doppler difference.
    pub fn column(&self, d_nu: f64) -> Option<Vec<C64>> {
        self.doppler_index(d_nu).map(|j| self.values.column(j).iter().copied().collect())
    }

    /// Delay-major `(d_τ, d_ν, 20log10|χ|, arg χ)` rows.
    pub fn rows(&self) -> impl Iterator<Item = (i64, f64, f64, f64)> + '_ {
        self.d_taus.iter().enumerate().flat_map(move |(i, &dt)| {
            self.d_nus_hz.iter().enumerate().map(move |(j, &dn)| {
                let v = self.values[(i, j)];
                (dt, dn, crate::units::mag_to_db(v.norm()), v.arg())
            })
        })
    }
}

/// Limit AF of a DAM beamformer over a difference grid.
pub fn asymptotic_af_surface(
    bf: &BeamformerSet,
    a: &CVector,
    d_taus: &[i64],
    d_nus_hz: &[f64],
    n: usize,
    ts: f64,
) -> Result<AmbiguitySurface> {
    let psi: Vec<C64> = d_nus_hz.iter().map(|&d| asinc(d, n, ts)).collect();
    let cuts = d_taus
        .iter()
        .map(|&d| delay_cut_value(bf, a, d))
        .collect::<Result<Vec<_>>>()?;
    Ok(AmbiguitySurface {
        d_taus: d_taus.to_vec(),
        d_nus_hz: d_nus_hz.to_vec(),
        values: CMatrix::from_fn(d_taus.len(), d_nus_hz.len(), |i, j| cuts[i] * psi[j]),
        kind: AfKind::Asymptotic,
    })
}

/// `χ(τ_p, ν_q; τ, ν) = Σ_n u[n-τ] u*[n-τ_p] e^{j2π(ν-ν_q)nT_s} / Σ_n |u[n-τ_p]|²`.
pub fn empirical_af(u: &BeamStream, tau_p: usize, nu_q_hz: f64, tau: usize, nu_hz: f64, ts: f64) -> Result<C64> {
    if tau > u.guard() {
        return Err(Error::DelayBeyondGuard {
            delay: tau,
            guard: u.guard(),
        });
    }
    let (p, energy) = lag_product(u.shifted(tau), u, tau_p)?;
    Ok(dtft(&p, (nu_hz - nu_q_hz) * ts) / energy)
}

/// Empirical AF over a difference grid. The hypothetical target sits at
/// `τ = max(0, -min d_τ)` with zero Doppler and the filter bins are
/// `τ_p = τ + d_τ`, `ν_q = -d_ν`; the stream guard must cover every lag.
pub fn empirical_af_surface(u: &BeamStream, d_taus: &[i64], d_nus_hz: &[f64], ts: f64) -> Result<AmbiguitySurface> {
    let tau = (-d_taus.iter().copied().min().unwrap_or(0)).max(0) as usize;
    if tau > u.guard() {
        return Err(Error::DelayBeyondGuard {
            delay: tau,
            guard: u.guard(),
        });
    }
    let y = u.shifted(tau);
    let rows = d_taus
        .par_iter()
        .map(|&d| {
            let tau_p = (tau as i64 + d) as usize;
            let (p, energy) = lag_product(y, u, tau_p)?;
            Ok(d_nus_hz.iter().map(|&dn| dtft(&p, dn * ts) / energy).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AmbiguitySurface {
        d_taus: d_taus.to_vec(),
        d_nus_hz: d_nus_hz.to_vec(),
        values: CMatrix::from_fn(d_taus.len(), d_nus_hz.len(), |i, j| rows[i][j]),
        kind: AfKind::Empirical,
    })
}
