//! FFT-based OFDM radar baseline.
//!
//! The echo is simulated in the time domain and then demodulated, so
//! inter-carrier interference from large Doppler shifts appears on its own.

use rand::Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::SensingTarget;
use crate::error::{invalid, Error, Result};
use crate::linalg::{complex_gaussian, CMatrix, CVector, C64, ZERO};
use crate::sensing::Window;
use crate::waveform::{ofdm_demodulate, ofdm_modulate};

/// CP-OFDM block layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub num_subcarriers: usize,
    pub cp_len: usize,
    pub num_symbols: usize,
    pub sample_period_s: f64,
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.num_subcarriers.is_power_of_two() {
            return Err(invalid("num_subcarriers", "must be a power of two"));
        }
        if self.num_symbols == 0 {
            return Err(invalid("num_symbols", "must be at least 1"));
        }
        if self.cp_len > self.num_subcarriers {
            return Err(invalid("cp_len", "cyclic prefix longer than the symbol"));
        }
        if !(self.sample_period_s > 0.0) {
            return Err(invalid("sample_period_s", "must be positive"));
        }
        Ok(())
    }

    /// `Δf = 1 / (K T_s)`.
    pub fn subcarrier_spacing_hz(&self) -> f64 {
        1.0 / (self.num_subcarriers as f64 * self.sample_period_s)
    }

    /// `K + N_p` samples.
    pub fn block_len(&self) -> usize {
        self.num_subcarriers + self.cp_len
    }

    /// `T_o = (K + N_p) T_s`.
    pub fn symbol_duration_s(&self) -> f64 {
        self.block_len() as f64 * self.sample_period_s
    }

    /// `N_c = (N_p + K) I`.
    pub fn coherence_len(&self) -> usize {
        self.block_len() * self.num_symbols
    }

    /// DAM symbols fitting the same coherence block with a single guard:
    /// `K I + N_p (I - 1)`.
    pub fn dam_equivalent_len(&self) -> usize {
        self.coherence_len() - self.cp_len
    }
}

/// `w_k = sqrt(P'/(K M)) a(θ)` on every subcarrier.
pub fn matched_precoders(a: &CVector, p_t_prime: f64, num_subcarriers: usize) -> Vec<CVector> {
    let scale = (p_t_prime / (num_subcarriers as f64 * a.len() as f64)).sqrt();
    vec![a * C64::new(scale, 0.0); num_subcarriers]
}

/// Received subcarrier matrix `r_i[k]` (`I x K`) for a point target.
///
/// The transmit signal is projected on `a(θ)`, delayed, rotated by
/// `e^{j2πν m T_s}` with `m` the absolute sample index, and corrupted by
/// white noise of variance `σ²/K` per sample so that each subcarrier after the
/// unitary DFT carries noise `CN(0, σ²/K)`. Samples before the first symbol
/// are silent; they fall into the first cyclic prefix and are discarded.
pub fn ofdm_echo_subcarriers<R: Rng + ?Sized>(
    cfg: &OfdmConfig,
    precoders: &[CVector],
    data: &CMatrix,
    a: &CVector,
    target: &SensingTarget,
    sigma2: f64,
    rng: &mut R,
) -> Result<CMatrix> {
    cfg.validate()?;
    if target.delay_taps > cfg.cp_len {
        return Err(Error::DelayBeyondGuard {
            delay: target.delay_taps,
            guard: cfg.cp_len,
        });
    }
    if precoders.len() != cfg.num_subcarriers {
        return Err(Error::DimensionMismatch {
            context: "precoders",
            expected: cfg.num_subcarriers,
            actual: precoders.len(),
        });
    }
    if data.nrows() != cfg.num_symbols {
        return Err(Error::DimensionMismatch {
            context: "OFDM data rows",
            expected: cfg.num_symbols,
            actual: data.nrows(),
        });
    }
    if let Some(w) = precoders.iter().find(|w| w.len() != a.len()) {
        return Err(Error::DimensionMismatch {
            context: "precoder length",
            expected: a.len(),
            actual: w.len(),
        });
    }
    let projected: Vec<CVector> = precoders.iter().map(|w| CVector::from_element(1, a.dotc(w))).collect();
    let u = ofdm_modulate(&projected, data, cfg.cp_len)?.row(0);
    let tau = target.delay_taps;
    let f = target.doppler_hz * cfg.sample_period_s;
    let noise_var = sigma2 / cfg.num_subcarriers as f64;
    let y: Vec<C64> = (0..u.len())
        .map(|m| {
            let delayed = if m >= tau { u[m - tau] } else { ZERO };
            let phase = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * (f * m as f64).fract());
            let noise = if noise_var > 0.0 { complex_gaussian(rng, noise_var) } else { ZERO };
            target.gain * delayed * phase + noise
        })
        .collect();
    ofdm_demodulate(&y, cfg.num_subcarriers, cfg.cp_len)
}

/// Range and Doppler profiles from the element-wise division.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerProfiles {
    /// IDFT over subcarriers of symbol 0, bin `p` ↔ delay `p` taps.
    pub range_profile: Vec<C64>,
    /// DFT over symbols of subcarrier 0, bin `q` ↔ `q / (I T_o)` Hz
    /// (upper half wraps to negative frequencies).
    pub doppler_profile: Vec<C64>,
    pub window: Window,
}

/// Profiles plus the argmax estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmEstimate {
    pub profiles: RangeDopplerProfiles,
    pub tau_hat: usize,
    pub nu_hat_hz: f64,
}

/// `r̂_i[k] = r_i[k] / X_i[k]`.
pub fn elementwise_division(r: &CMatrix, data: &CMatrix) -> Result<CMatrix> {
    if r.shape() != data.shape() {
        return Err(Error::DimensionMismatch {
            context: "subcarrier matrix",
            expected: data.len(),
            actual: r.len(),
        });
    }
    for i in 0..data.nrows() {
        for k in 0..data.ncols() {
            if data[(i, k)].norm_sqr() == 0.0 {
                return Err(Error::ZeroDataCell { symbol: i, subcarrier: k });
            }
        }
    }
    Ok(r.component_div(data))
}

/// Range profile from symbol 0 and Doppler profile from subcarrier 0 of the
/// divided matrix, with the optional taper applied before each transform.
pub fn ofdm_estimate(cfg: &OfdmConfig, r: &CMatrix, data: &CMatrix, window: Window) -> Result<OfdmEstimate> {
    let rh = elementwise_division(r, data)?;
    let k = rh.ncols();
    let num_sym = rh.nrows();
    let mut planner = FftPlanner::new();

    let wk = window.coefficients(k);
    let mut range: Vec<C64> = rh.row(0).iter().zip(&wk).map(|(v, w)| v * *w).collect();
    planner.plan_fft_inverse(k).process(&mut range);
    for v in &mut range {
        *v /= k as f64;
    }

    let wi = window.coefficients(num_sym);
    let mut doppler: Vec<C64> = rh.column(0).iter().zip(&wi).map(|(v, w)| v * *w).collect();
    planner.plan_fft_forward(num_sym).process(&mut doppler);
    for v in &mut doppler {
        *v /= num_sym as f64;
    }

    let tau_hat = argmax_abs(&range);
    let q = argmax_abs(&doppler);
    let q_signed = if q > num_sym / 2 { q as f64 - num_sym as f64 } else { q as f64 };
    Ok(OfdmEstimate {
        profiles: RangeDopplerProfiles {
            range_profile: range,
            doppler_profile: doppler,
            window,
        },
        tau_hat,
        nu_hat_hz: q_signed / (num_sym as f64 * cfg.symbol_duration_s()),
    })
}

/// Non-paper extension: `|·|²` of the 2D transform of every divided cell
/// (IDFT over subcarriers, DFT over symbols), rows indexed by delay bin.
pub fn range_doppler_periodogram(r: &CMatrix, data: &CMatrix, window: Window) -> Result<nalgebra::DMatrix<f64>> {
    let rh = elementwise_division(r, data)?;
    let (num_sym, k) = rh.shape();
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(k);
    let fft = planner.plan_fft_forward(num_sym);
    let wk = window.coefficients(k);
    let wi = window.coefficients(num_sym);
    let mut grid = CMatrix::zeros(k, num_sym);
    for i in 0..num_sym {
        let mut row: Vec<C64> = rh.row(i).iter().zip(&wk).map(|(v, w)| v * (*w * wi[i])).collect();
        ifft.process(&mut row);
        for (p, v) in row.into_iter().enumerate() {
            grid[(p, i)] = v;
        }
    }
    let mut out = nalgebra::DMatrix::zeros(k, num_sym);
    let mut buf = vec![ZERO; num_sym];
    for p in 0..k {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = grid[(p, i)];
        }
        fft.process(&mut buf);
        for (q, v) in buf.iter().enumerate() {
            out[(p, q)] = v.norm_sqr();
        }
    }
    Ok(out)
}

fn argmax_abs(v: &[C64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.norm() > v[best].norm() {
            best = i;
        }
    }
    best
}

/// `γ_OFDM,max = |α|² M I K P' / σ²`.
pub fn ofdm_max_sensing_snr(cfg: &OfdmConfig, num_antennas: usize, p_t_prime: f64, alpha_sq: f64, sigma2: f64) -> f64 {
    alpha_sq * num_antennas as f64 * cfg.num_symbols as f64 * cfg.num_subcarriers as f64 * p_t_prime / sigma2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{doppler_from_velocity, UlaGeometry};
    use crate::rng::seeded;
    use crate::sensing::peak_sidelobe_ratio;
    use crate::units::mag_to_db;
    use crate::waveform::{Constellation, Modulation};

    fn cfg(k: usize, cp: usize, i: usize) -> OfdmConfig {
        OfdmConfig {
            num_subcarriers: k,
            cp_len: cp,
            num_symbols: i,
            sample_period_s: 1e-8,
        }
    }

    fn qam_data(c: &OfdmConfig, seed: u64) -> CMatrix {
        let q = Constellation::new(Modulation::Qam64);
        let mut rng = seeded(seed);
        CMatrix::from_fn(c.num_symbols, c.num_subcarriers, |_, _| q.sample(&mut rng))
    }

    fn target(tau: usize, nu: f64) -> SensingTarget {
        SensingTarget {
            direction_rad: 0.3,
            delay_taps: tau,
            doppler_hz: nu,
            gain: C64::new(0.6, 0.8),
        }
    }

    #[test]
    fn block_accounting() {
        let c = cfg(2048, 144, 56);
        assert_eq!(c.coherence_len(), 2192 * 56);
        assert_eq!(c.dam_equivalent_len(), 2048 * 56 + 144 * 55);
        assert!((1e-8 * 2048.0 * c.subcarrier_spacing_hz() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn static_noiseless_echo_is_exact() {
        let c = cfg(64, 8, 3);
        let a = UlaGeometry::half_wavelength(4).steering_vector(0.3);
        let mut rng = seeded(1);
        let w: Vec<CVector> = (0..64)
            .map(|_| CVector::from_fn(4, |_, _| complex_gaussian(&mut rng, 1.0)))
            .collect();
        let data = qam_data(&c, 2);
        let t = target(0, 0.0);
        let r = ofdm_echo_subcarriers(&c, &w, &data, &a, &t, 0.0, &mut rng).unwrap();
        for i in 0..3 {
            for k in 0..64 {
                let expect = t.gain * a.dotc(&w[k]) * data[(i, k)];
                assert!((r[(i, k)] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noise_variance_per_subcarrier_is_sigma2_over_k() {
        let c = cfg(256, 16, 40);
        let a = UlaGeometry::half_wavelength(2).steering_vector(0.0);
        let w = matched_precoders(&a, 1.0, 256);
        let data = qam_data(&c, 3);
        let silent = SensingTarget { gain: ZERO, ..target(2, 0.0) };
        let r = ofdm_echo_subcarriers(&c, &w, &data, &a, &silent, 2.0, &mut seeded(4)).unwrap();
        let var = r.iter().map(|v| v.norm_sqr()).sum::<f64>() / r.len() as f64;
        assert!((var * 256.0 / 2.0 - 1.0).abs() < 0.03, "{var}");
    }

    #[test]
    fn zero_doppler_delay_recovered_for_every_tap() {
        let c = cfg(128, 16, 2);
        let a = UlaGeometry::half_wavelength(3).steering_vector(0.3);
        let w = matched_precoders(&a, 1.0, 128);
        let data = qam_data(&c, 5);
        for tau in 0..=16 {
            let r = ofdm_echo_subcarriers(&c, &w, &data, &a, &target(tau, 0.0), 0.0, &mut seeded(0)).unwrap();
            let est = ofdm_estimate(&c, &r, &data, Window::None).unwrap();
            assert_eq!(est.tau_hat, tau);
            assert_eq!(est.nu_hat_hz, 0.0);
        }
        assert!(ofdm_echo_subcarriers(&c, &w, &data, &a, &target(17, 0.0), 0.0, &mut seeded(0)).is_err());
    }

    #[test]
    fn doppler_profile_peaks_at_symbol_rate_multiple() {
        let c = cfg(64, 8, 32);
        let a = UlaGeometry::half_wavelength(2).steering_vector(0.3);
        let w = matched_precoders(&a, 1.0, 64);
        let data = qam_data(&c, 6);
        let step = 1.0 / (32.0 * c.symbol_duration_s());
        for q in [-5i64, 3] {
            let nu = q as f64 * step;
            let r = ofdm_echo_subcarriers(&c, &w, &data, &a, &target(4, nu), 0.0, &mut seeded(0)).unwrap();
            let est = ofdm_estimate(&c, &r, &data, Window::None).unwrap();
            assert!((est.nu_hat_hz - nu).abs() < 1e-6 * step);
            assert_eq!(est.tau_hat, 4);
        }
    }

    #[test]
    fn zero_data_cell_rejected() {
        let mut data = CMatrix::from_element(2, 4, C64::new(1.0, 0.0));
        data[(1, 2)] = ZERO;
        assert_eq!(
            elementwise_division(&data.clone(), &data).unwrap_err(),
            Error::ZeroDataCell { symbol: 1, subcarrier: 2 }
        );
    }

    #[test]
    fn parseval_through_dft_stages() {
        let c = cfg(64, 0, 1);
        let data = qam_data(&c, 7);
        let w: Vec<CVector> = (0..64).map(|_| CVector::from_element(1, C64::new(1.0, 0.0))).collect();
        let tx = crate::waveform::ofdm_modulate(&w, &data, 0).unwrap();
        let e_time: f64 = tx.row(0).iter().map(|v| v.norm_sqr()).sum();
        let e_freq: f64 = data.iter().map(|v| v.norm_sqr()).sum();
        assert!((e_time - e_freq).abs() < 1e-10 * e_freq);
    }

    #[test]
    fn high_doppler_raises_range_sidelobes() {
        let (k, cp, i) = (2048, 144, 8);
        let c = OfdmConfig {
            num_subcarriers: k,
            cp_len: cp,
            num_symbols: i,
            sample_period_s: 1.0 / (k as f64 * 60e3),
        };
        let a = UlaGeometry::half_wavelength(4).steering_vector(0.3);
        let w = matched_precoders(&a, 1.0, k);
        let data = qam_data(&c, 8);
        let psr = |v: f64| {
            let nu = doppler_from_velocity(28e9, v);
            let r = ofdm_echo_subcarriers(&c, &w, &data, &a, &target(100, nu), 0.0, &mut seeded(0)).unwrap();
            let est = ofdm_estimate(&c, &r, &data, Window::Hamming).unwrap();
            assert_eq!(est.tau_hat, 100);
            let mags: Vec<f64> = est.profiles.range_profile.iter().map(|v| v.norm()).collect();
            mag_to_db(peak_sidelobe_ratio(&mags, true).unwrap())
        };
        let slow = psr(5.0);
        let fast = psr(50.0);
        assert!(fast - slow >= 10.0, "slow {slow} fast {fast}");
    }

    #[test]
    fn hamming_trades_sidelobes_for_mainlobe_width() {
        // a delay between integer bins produces sinc-like leakage in the
        // range profile; emulate it with a fractional phase ramp
        let k = 256;
        let frac = 10.4;
        let rh: Vec<C64> = (0..k)
            .map(|s| C64::from_polar(1.0, -2.0 * std::f64::consts::PI * s as f64 * frac / k as f64))
            .collect();
        let c = cfg(k, 0, 1);
        let r = CMatrix::from_row_slice(1, k, &rh);
        let ones = CMatrix::from_element(1, k, C64::new(1.0, 0.0));
        let plain = ofdm_estimate(&c, &r, &ones, Window::None).unwrap();
        let ham = ofdm_estimate(&c, &r, &ones, Window::Hamming).unwrap();
        let mags = |e: &OfdmEstimate| e.profiles.range_profile.iter().map(|v| v.norm()).collect::<Vec<_>>();
        // sampled between integer bins the tapered profile may decay
        // monotonically, so exclude a fixed ±3 bin mainlobe here
        let far = |m: Vec<f64>| {
            let peak = m.iter().copied().fold(0.0, f64::max);
            m.iter()
                .enumerate()
                .filter(|(i, _)| (*i as i64 - 10).abs() > 3)
                .map(|(_, v)| v / peak)
                .fold(0.0, f64::max)
        };
        assert!(far(mags(&ham)) < far(mags(&plain)) * 0.1);
        let width = |m: Vec<f64>| {
            let peak = m.iter().copied().fold(0.0, f64::max);
            m.iter().filter(|&&v| v >= peak / 2f64.sqrt()).count()
        };
        assert!(width(mags(&ham)) > width(mags(&plain)));
    }

    #[test]
    fn closed_form_snr() {
        let c = cfg(1, 0, 1);
        assert!((ofdm_max_sensing_snr(&c, 8, 2.0, 3.0, 4.0) - 3.0 * 8.0 * 2.0 / 4.0).abs() < 1e-15);
        let c = cfg(2048, 144, 45);
        let p_max = 1.0;
        let g = ofdm_max_sensing_snr(&c, 64, p_max / 2048.0, 1e-17, 1e-12);
        assert!((g - 1e-17 * 64.0 * 45.0 * p_max / 1e-12).abs() < 1e-12 * g);
    }
}
