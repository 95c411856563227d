//! Communication multipath channel, sensing target and array geometry.

use std::f64::consts::PI;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{CMatrix, CVector, C64};
use crate::rng::seeded;
use crate::units::dbm_to_watts;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// System-level parameters shared by every experiment. All units SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub carrier_freq_hz: f64,
    /// Bandwidth `B`; the sample period is `1/B`.
    pub bandwidth_hz: f64,
    pub coherence_time_s: f64,
    pub guard_time_s: f64,
    pub tx_power_w: f64,
    pub noise_power_w: f64,
    pub num_tx_antennas: usize,
    pub num_paths: usize,
    pub rng_seed: u64,
}

impl ScenarioConfig {
    /// 28 GHz, 100 MHz, 1 ms coherence, 4 us guard, 30 dBm, -89 dBm noise,
    /// 64 antennas and 3 paths.
    pub fn paper_v1() -> Self {
        Self {
            carrier_freq_hz: 28e9,
            bandwidth_hz: 100e6,
            coherence_time_s: 1e-3,
            guard_time_s: 4e-6,
            tx_power_w: dbm_to_watts(30.0),
            noise_power_w: dbm_to_watts(-89.0),
            num_tx_antennas: 64,
            num_paths: 3,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("coherence_time_s", self.coherence_time_s),
            ("guard_time_s", self.guard_time_s),
            ("tx_power_w", self.tx_power_w),
            ("noise_power_w", self.noise_power_w),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.num_tx_antennas == 0 {
            return Err(invalid("num_tx_antennas", "must be at least 1"));
        }
        if self.num_paths == 0 {
            return Err(invalid("num_paths", "must be at least 1"));
        }
        if self.guard_time_s >= self.coherence_time_s {
            return Err(invalid("guard_time_s", "must be shorter than the coherence time"));
        }
        if self.cpi_len() == 0 {
            return Err(invalid("coherence_time_s", "leaves no data symbols after the guard"));
        }
        Ok(())
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq_hz
    }

    /// `N_c`, symbols per coherence block.
    pub fn coherence_len(&self) -> usize {
        (self.coherence_time_s * self.bandwidth_hz).round() as usize
    }

    /// `N_p`, guard interval in taps.
    pub fn guard_len(&self) -> usize {
        (self.guard_time_s * self.bandwidth_hz).round() as usize
    }

    /// `N = N_c - N_p`, DAM symbols per CPI.
    pub fn cpi_len(&self) -> usize {
        self.coherence_len().saturating_sub(self.guard_len())
    }

    pub fn geometry(&self) -> UlaGeometry {
        UlaGeometry::half_wavelength(self.num_tx_antennas)
    }
}

/// Uniform linear array with the phase reference at element 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UlaGeometry {
    pub num_antennas: usize,
    pub element_spacing_wavelengths: f64,
}

impl UlaGeometry {
    pub fn half_wavelength(num_antennas: usize) -> Self {
        Self {
            num_antennas,
            element_spacing_wavelengths: 0.5,
        }
    }

    /// `a(θ)`: entry `m` is `exp(j 2π d m sin θ)`.
    pub fn steering_vector(&self, theta_rad: f64) -> CVector {
        let k = 2.0 * PI * self.element_spacing_wavelengths * theta_rad.sin();
        CVector::from_fn(self.num_antennas, |m, _| C64::from_polar(1.0, k * m as f64))
    }
}

/// One temporally resolvable path.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPath {
    pub delay_taps: usize,
    /// `h_l`, length `M`.
    pub gain: CVector,
    /// Departure angles of the sub-paths, when known.
    pub subpath_aods_rad: Vec<f64>,
}

/// `h_c[n] = Σ_l h_l^H δ[n - n_l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathChannel {
    paths: Vec<ChannelPath>,
}

impl MultipathChannel {
    pub fn new(paths: Vec<ChannelPath>) -> Result<Self> {
        if paths.is_empty() {
            return Err(invalid("paths", "at least one path is required"));
        }
        let m = paths[0].gain.len();
        for p in &paths {
            if p.gain.len() != m {
                return Err(Error::DimensionMismatch {
                    context: "channel path gain",
                    expected: m,
                    actual: p.gain.len(),
                });
            }
        }
        check_distinct(paths.iter().map(|p| p.delay_taps))?;
        Ok(Self { paths })
    }

    /// Builds `h_l = β_l Σ_i μ_l^{-1/2} e^{jφ_li} a(θ_li)` for explicitly given
    /// sub-path angles and phases.
    pub fn from_subpaths(geom: &UlaGeometry, specs: &[PathSpec]) -> Result<Self> {
        let paths = specs
            .iter()
            .map(|s| {
                if s.aods_rad.is_empty() || s.aods_rad.len() != s.phases_rad.len() {
                    return Err(invalid("aods_rad", "one phase per sub-path is required"));
                }
                Ok(ChannelPath {
                    delay_taps: s.delay_taps,
                    gain: subpath_sum(geom, s.beta, &s.aods_rad, &s.phases_rad),
                    subpath_aods_rad: s.aods_rad.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(paths)
    }

    pub fn paths(&self) -> &[ChannelPath] {
        &self.paths
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.paths[0].gain.len()
    }

    pub fn delays(&self) -> Vec<usize> {
        self.paths.iter().map(|p| p.delay_taps).collect()
    }

    pub fn n_max(&self) -> usize {
        self.delays().into_iter().max().unwrap_or(0)
    }

    pub fn n_min(&self) -> usize {
        self.delays().into_iter().min().unwrap_or(0)
    }

    /// `n_d = n_max - n_min`.
    pub fn delay_spread(&self) -> usize {
        self.n_max() - self.n_min()
    }

    /// `H = [h_1, ..., h_L]`.
    pub fn gain_matrix(&self) -> CMatrix {
        let cols: Vec<CVector> = self.paths.iter().map(|p| p.gain.clone()).collect();
        CMatrix::from_columns(&cols)
    }
}

/// Explicit description of one path for [`MultipathChannel::from_subpaths`].
#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub delay_taps: usize,
    pub beta: C64,
    pub aods_rad: Vec<f64>,
    pub phases_rad: Vec<f64>,
}

fn subpath_sum(geom: &UlaGeometry, beta: C64, aods: &[f64], phases: &[f64]) -> CVector {
    let scale = 1.0 / (aods.len() as f64).sqrt();
    let mut h = CVector::zeros(geom.num_antennas);
    for (&theta, &phi) in aods.iter().zip(phases) {
        h += geom.steering_vector(theta) * (C64::from_polar(scale, phi) * beta);
    }
    h
}

pub(crate) fn check_distinct(values: impl Iterator<Item = usize>) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for v in values {
        if !seen.insert(v) {
            return Err(Error::DuplicateDelay(v));
        }
    }
    Ok(())
}

/// Random channel generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommChannelParams {
    /// Link distance `R_c`, drives the free-space pathloss.
    pub distance_m: f64,
    /// `μ_max`; the sub-path count is uniform on `1..=μ_max`.
    pub num_subpaths_max: usize,
    /// AoD interval `[lo, hi]` in radians.
    pub aod_range_rad: (f64, f64),
    /// Delay taps are drawn without replacement from `0..=max_delay_taps`.
    pub max_delay_taps: usize,
    /// Replaces the default `|β_l|² = PL(R_c)/L` when set.
    pub path_power_override: Option<f64>,
}

impl CommChannelParams {
    /// 100 m link, up to 3 sub-paths, AoDs in [-50°, 50°], 40 tap spread.
    pub fn paper_v1() -> Self {
        Self {
            distance_m: 100.0,
            num_subpaths_max: 3,
            aod_range_rad: ((-50f64).to_radians(), 50f64.to_radians()),
            max_delay_taps: 40,
            path_power_override: None,
        }
    }

    /// `|β_l|²` for a channel with `num_paths` paths.
    pub fn path_power(&self, cfg: &ScenarioConfig) -> f64 {
        self.path_power_override.unwrap_or_else(|| {
            free_space_pathloss(cfg.wavelength(), self.distance_m) / cfg.num_paths as f64
        })
    }
}

/// `(λ / 4πR)²`.
pub fn free_space_pathloss(wavelength: f64, distance_m: f64) -> f64 {
    (wavelength / (4.0 * PI * distance_m)).powi(2)
}

/// Random channel seeded from `cfg.rng_seed`.
pub fn gen_comm_channel(cfg: &ScenarioConfig, params: &CommChannelParams) -> Result<MultipathChannel> {
    gen_comm_channel_with(cfg, params, &mut seeded(cfg.rng_seed))
}

/// Random channel drawn from a caller-owned generator.
pub fn gen_comm_channel_with<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    params: &CommChannelParams,
    rng: &mut R,
) -> Result<MultipathChannel> {
    let l = cfg.num_paths;
    let available = params.max_delay_taps + 1;
    if available < l {
        return Err(Error::DelayRangeTooSmall {
            needed: l,
            available,
        });
    }
    if params.num_subpaths_max == 0 {
        return Err(invalid("num_subpaths_max", "must be at least 1"));
    }
    if !(params.distance_m > 0.0) {
        return Err(invalid("distance_m", "must be positive"));
    }
    let (lo, hi) = params.aod_range_rad;
    if !(hi >= lo) {
        return Err(invalid("aod_range_rad", "upper bound below lower bound"));
    }

    let geom = cfg.geometry();
    let beta_mag = params.path_power(cfg).sqrt();
    let delays = index::sample(rng, available, l).into_vec();
    let specs: Vec<PathSpec> = delays
        .into_iter()
        .map(|delay_taps| {
            let mu = rng.random_range(1..=params.num_subpaths_max);
            let beta = C64::from_polar(beta_mag, rng.random_range(0.0..2.0 * PI));
            let mut aods_rad = Vec::with_capacity(mu);
            let mut phases_rad = Vec::with_capacity(mu);
            for _ in 0..mu {
                aods_rad.push(if hi > lo { rng.random_range(lo..hi) } else { lo });
                phases_rad.push(rng.random_range(0.0..2.0 * PI));
            }
            PathSpec {
                delay_taps,
                beta,
                aods_rad,
                phases_rad,
            }
        })
        .collect();
    MultipathChannel::from_subpaths(&geom, &specs)
}

/// Radar equation two-way gain `|α|² = λ² ξ / ((4π)³ R⁴)`.
pub fn sensing_gain_magnitude(fc_hz: f64, range_m: f64, rcs_m2: f64) -> Result<f64> {
    if !(range_m > 0.0) {
        return Err(invalid("range_m", "must be positive"));
    }
    if !(rcs_m2 >= 0.0) {
        return Err(invalid("rcs_m2", "must be nonnegative"));
    }
    if !(fc_hz > 0.0) {
        return Err(invalid("fc_hz", "must be positive"));
    }
    let lambda = SPEED_OF_LIGHT / fc_hz;
    Ok(lambda * lambda * rcs_m2 / ((4.0 * PI).powi(3) * range_m.powi(4)))
}

/// Doppler shift `2v/λ` of a target with radial velocity `v`.
pub fn doppler_from_velocity(fc_hz: f64, velocity_mps: f64) -> f64 {
    2.0 * velocity_mps * fc_hz / SPEED_OF_LIGHT
}

/// Round-trip delay of a target at `range_m`, in taps of `1/bandwidth`.
pub fn delay_taps_from_range(range_m: f64, bandwidth_hz: f64) -> usize {
    (2.0 * range_m / SPEED_OF_LIGHT * bandwidth_hz).round() as usize
}

/// Point target seen by the monostatic sensing receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingTarget {
    pub direction_rad: f64,
    pub delay_taps: usize,
    pub doppler_hz: f64,
    pub gain: C64,
}

impl SensingTarget {
    /// Target with gain magnitude from the radar equation and a random phase.
    pub fn with_random_phase<R: Rng + ?Sized>(
        direction_rad: f64,
        delay_taps: usize,
        doppler_hz: f64,
        gain_sq: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            direction_rad,
            delay_taps,
            doppler_hz,
            gain: C64::from_polar(gain_sq.sqrt(), rng.random_range(0.0..2.0 * PI)),
        }
    }

    pub fn validate(&self, guard_len: usize, bandwidth_hz: f64) -> Result<()> {
        if self.delay_taps > guard_len {
            return Err(Error::DelayBeyondGuard {
                delay: self.delay_taps,
                guard: guard_len,
            });
        }
        if !(self.doppler_hz.abs() < bandwidth_hz / 2.0) {
            return Err(invalid("doppler_hz", "must lie inside (-B/2, B/2)"));
        }
        Ok(())
    }
}
