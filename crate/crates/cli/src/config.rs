//! Run configuration: a strict TOML schema with `paper-v1` defaults.

use damisac_core::channel::{CommChannelParams, ScenarioConfig};
use damisac_core::sensing::Window;
use damisac_core::units::dbm_to_watts;
use damisac_core::{Modulation, SolverSettings};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const PRESET: &str = "paper-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub scenario: ScenarioSection,
    pub channel: ChannelSection,
    pub target: TargetSection,
    pub solver: SolverSection,
    pub af: AfSection,
    pub beampattern: BeampatternSection,
    pub doppler_cut_isr: DopplerCutIsrSection,
    pub tradeoff: TradeoffSection,
    pub papr: PaprSection,
    pub compare_ofdm: CompareOfdmSection,
    pub snr_budget: SnrBudgetSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: PRESET.to_string(),
            scenario: ScenarioSection::default(),
            channel: ChannelSection::default(),
            target: TargetSection::default(),
            solver: SolverSection::default(),
            af: AfSection::default(),
            beampattern: BeampatternSection::default(),
            doppler_cut_isr: DopplerCutIsrSection::default(),
            tradeoff: TradeoffSection::default(),
            papr: PaprSection::default(),
            compare_ofdm: CompareOfdmSection::default(),
            snr_budget: SnrBudgetSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub coherence_time_s: f64,
    pub guard_time_s: f64,
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
    pub num_tx_antennas: usize,
    pub num_paths: usize,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 28e9,
            bandwidth_hz: 100e6,
            coherence_time_s: 1e-3,
            guard_time_s: 4e-6,
            tx_power_dbm: 30.0,
            noise_power_dbm: -89.0,
            num_tx_antennas: 64,
            num_paths: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelSection {
    pub distance_m: f64,
    pub num_subpaths_max: usize,
    pub aod_min_deg: f64,
    pub aod_max_deg: f64,
    pub max_delay_taps: usize,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            distance_m: 100.0,
            num_subpaths_max: 3,
            aod_min_deg: -50.0,
            aod_max_deg: 50.0,
            max_delay_taps: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub range_m: f64,
    pub rcs_m2: f64,
    pub direction_deg: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            range_m: 225.0,
            rcs_m2: 1.0,
            direction_deg: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iters: usize,
    /// Gaussian randomization draws `R`.
    pub randomization_samples: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 50_000,
            randomization_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfSection {
    pub cpi_lengths: Vec<usize>,
    pub max_delay_diff: usize,
    /// Half width of the delay-cut span, in Doppler resolution cells `1/(N T_s)`.
    pub doppler_span_cells: f64,
    pub doppler_step_cells: f64,
    pub modulation: String,
}

impl Default for AfSection {
    fn default() -> Self {
        Self {
            cpi_lengths: vec![5_000, 10_000, 100_000],
            max_delay_diff: 20,
            doppler_span_cells: 5.0,
            doppler_step_cells: 0.02,
            modulation: "qpsk".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeampatternSection {
    pub delays: Vec<usize>,
    pub aods_deg: Vec<f64>,
    pub gamma_db: f64,
    pub phi_db: Vec<f64>,
    pub grid_points: usize,
}

impl Default for BeampatternSection {
    fn default() -> Self {
        Self {
            delays: vec![7, 18, 11],
            aods_deg: vec![-35.0, 15.0, 27.0],
            gamma_db: 15.0,
            phi_db: vec![-5.0, -40.0],
            grid_points: 721,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DopplerCutIsrSection {
    pub delays: Vec<usize>,
    pub aods_deg: Vec<f64>,
    pub gamma_db: f64,
    pub phi_db: Vec<f64>,
    pub max_delay_diff: usize,
}

impl Default for DopplerCutIsrSection {
    fn default() -> Self {
        Self {
            delays: vec![7, 18, 11],
            aods_deg: vec![-35.0, 15.0, 27.0],
            gamma_db: 15.0,
            phi_db: vec![-5.0, -40.0],
            max_delay_diff: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TradeoffSection {
    pub num_seeds: usize,
    /// Fixed `γ_th` values for the sweep over `φ_th`.
    pub gamma_fixed_db: Vec<f64>,
    pub phi_sweep_db: Vec<f64>,
    /// Fixed `φ_th` values for the sweep over `γ_th`.
    pub phi_fixed_db: Vec<f64>,
    pub gamma_sweep_db: Vec<f64>,
}

impl Default for TradeoffSection {
    fn default() -> Self {
        Self {
            num_seeds: 50,
            gamma_fixed_db: vec![5.0, 10.0, 15.0],
            phi_sweep_db: vec![-40.0, -30.0, -20.0, -10.0, 0.0],
            phi_fixed_db: vec![0.0, -20.0, -40.0],
            gamma_sweep_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PaprSection {
    pub dam_paths: Vec<usize>,
    pub num_subcarriers: usize,
    pub num_trials: usize,
    pub windows_per_trial: usize,
    pub modulation: String,
    pub threshold_min_db: f64,
    pub threshold_max_db: f64,
    pub threshold_step_db: f64,
    pub quantile: f64,
}

impl Default for PaprSection {
    fn default() -> Self {
        Self {
            dam_paths: vec![5, 10, 20],
            num_subcarriers: 2048,
            num_trials: 1_000,
            windows_per_trial: 100,
            modulation: "qpsk".into(),
            threshold_min_db: 0.0,
            threshold_max_db: 14.0,
            threshold_step_db: 0.25,
            quantile: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareOfdmSection {
    pub num_subcarriers: usize,
    pub subcarrier_spacing_hz: f64,
    pub cp_len: usize,
    pub num_symbols: usize,
    pub modulation: String,
    pub delay_taps: usize,
    pub speeds_mps: Vec<f64>,
    pub window: String,
    /// Independent data draws averaged per speed.
    pub num_trials: usize,
    /// Echo noise relative to `σ²` of the scenario; 0 gives a noiseless echo.
    pub noise_scale: f64,
}

impl Default for CompareOfdmSection {
    fn default() -> Self {
        Self {
            num_subcarriers: 2048,
            subcarrier_spacing_hz: 60e3,
            cp_len: 144,
            num_symbols: 56,
            modulation: "qam64".into(),
            delay_taps: 100,
            speeds_mps: vec![5.0, 50.0],
            window: "hamming".into(),
            num_trials: 10,
            noise_scale: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnrBudgetSection {
    pub num_subcarriers: usize,
    /// Peak amplifier power; the mean power is this divided by the PAPR.
    pub peak_power_dbm: f64,
    pub monte_carlo_trials: usize,
    pub delay_taps: usize,
}

impl Default for SnrBudgetSection {
    fn default() -> Self {
        Self {
            num_subcarriers: 2048,
            peak_power_dbm: 30.0,
            monte_carlo_trials: 1_000,
            delay_taps: 10,
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Parses a config file and applies `key=value` overrides in order.
    pub fn load(text: Option<&str>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match text {
            Some(t) => {
                // typed parse first so schema errors carry line numbers
                toml::from_str::<RunConfig>(t).map_err(|e| config_error(e.to_string()))?;
                t.parse::<toml::Table>().map_err(|e| config_error(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_error(format!("in --set overrides: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.preset != PRESET {
            return Err(config_error(format!("unknown preset `{}`, only `{PRESET}` is defined", self.preset)));
        }
        self.scenario_config().validate().map_err(|e| config_error(e.to_string()))?;
        for m in [&self.af.modulation, &self.papr.modulation, &self.compare_ofdm.modulation] {
            m.parse::<Modulation>().map_err(|e| config_error(e.to_string()))?;
        }
        self.compare_ofdm
            .window
            .parse::<Window>()
            .map_err(|e| config_error(e.to_string()))?;
        let positive = [
            ("target.range_m", self.target.range_m),
            ("channel.distance_m", self.channel.distance_m),
            ("solver.tol", self.solver.tol),
            ("af.doppler_step_cells", self.af.doppler_step_cells),
            ("af.doppler_span_cells", self.af.doppler_span_cells),
            ("papr.threshold_step_db", self.papr.threshold_step_db),
            ("papr.quantile", self.papr.quantile),
            ("compare_ofdm.subcarrier_spacing_hz", self.compare_ofdm.subcarrier_spacing_hz),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_error(format!("`{name}` must be positive, got {v}")));
            }
        }
        if !(self.target.rcs_m2 >= 0.0) {
            return Err(config_error("`target.rcs_m2` must be nonnegative"));
        }
        if !(self.compare_ofdm.noise_scale >= 0.0) {
            return Err(config_error("`compare_ofdm.noise_scale` must be nonnegative"));
        }
        if self.af.cpi_lengths.is_empty() || self.af.cpi_lengths.contains(&0) {
            return Err(config_error("`af.cpi_lengths` must be a nonempty list of positive lengths"));
        }
        for (name, delays, aods) in [
            ("beampattern", &self.beampattern.delays, &self.beampattern.aods_deg),
            ("doppler_cut_isr", &self.doppler_cut_isr.delays, &self.doppler_cut_isr.aods_deg),
        ] {
            if delays.is_empty() || delays.len() != aods.len() {
                return Err(config_error(format!("`{name}.delays` and `{name}.aods_deg` must have equal nonzero length")));
            }
        }
        if self.beampattern.grid_points < 2 {
            return Err(config_error("`beampattern.grid_points` must be at least 2"));
        }
        if self.tradeoff.num_seeds == 0 {
            return Err(config_error("`tradeoff.num_seeds` must be at least 1"));
        }
        if self.papr.dam_paths.contains(&0) || self.papr.num_subcarriers == 0 || self.papr.windows_per_trial == 0 {
            return Err(config_error("`papr` path counts, subcarriers and windows must be positive"));
        }
        if self.compare_ofdm.num_trials == 0 || self.snr_budget.monte_carlo_trials == 0 {
            return Err(config_error("trial counts must be at least 1"));
        }
        Ok(())
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        let s = &self.scenario;
        ScenarioConfig {
            carrier_freq_hz: s.carrier_freq_hz,
            bandwidth_hz: s.bandwidth_hz,
            coherence_time_s: s.coherence_time_s,
            guard_time_s: s.guard_time_s,
            tx_power_w: dbm_to_watts(s.tx_power_dbm),
            noise_power_w: dbm_to_watts(s.noise_power_dbm),
            num_tx_antennas: s.num_tx_antennas,
            num_paths: s.num_paths,
            rng_seed: 0,
        }
    }

    pub fn channel_params(&self) -> CommChannelParams {
        let c = &self.channel;
        CommChannelParams {
            distance_m: c.distance_m,
            num_subpaths_max: c.num_subpaths_max,
            aod_range_rad: (c.aod_min_deg.to_radians(), c.aod_max_deg.to_radians()),
            max_delay_taps: c.max_delay_taps,
            path_power_override: None,
        }
    }

    pub fn solver_settings(&self) -> SolverSettings {
        SolverSettings {
            tol: self.solver.tol,
            max_iters: self.solver.max_iters,
            ..SolverSettings::default()
        }
    }
}

/// Sets `a.b.c = value` in the table. The value is read as a TOML literal
/// and taken as a bare string when that fails.
fn apply_override(table: &mut toml::Table, ov: &str) -> Result<(), CliError> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| config_error(format!("override `{ov}` is not of the form key=value")))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(config_error(format!("malformed override key `{key}`")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, path) = parts.split_last().expect("nonempty key");
    let mut cur = table;
    for p in path {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_paper_preset() {
        let cfg = RunConfig::load(Some(""), &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let sc = cfg.scenario_config();
        assert_eq!(sc.cpi_len(), 99_600);
        assert_eq!(sc.coherence_len(), 100_000);
        assert!((sc.tx_power_w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = RunConfig::load(Some("[scenario]\nnum_tx_antennas = 8\nbogus = 1\n"), &[]).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, CliError::Config(_)));
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn overrides_apply_in_order() {
        let sets = vec![
            "scenario.num_tx_antennas=16".to_string(),
            "af.cpi_lengths=[1000, 2000]".to_string(),
            "compare_ofdm.window=none".to_string(),
            "scenario.num_tx_antennas=8".to_string(),
        ];
        let cfg = RunConfig::load(None, &sets).unwrap();
        assert_eq!(cfg.scenario.num_tx_antennas, 8);
        assert_eq!(cfg.af.cpi_lengths, vec![1000, 2000]);
        assert_eq!(cfg.compare_ofdm.window, "none");
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for ov in ["scenario.nope=1", "noequals", "scenario..x=1", "scenario.num_tx_antennas=\"many\"", "preset=other"] {
            assert!(matches!(RunConfig::load(None, &[ov.to_string()]), Err(CliError::Config(_))), "{ov}");
        }
        assert!(matches!(
            RunConfig::load(Some("[papr]\nmodulation = \"qam7\"\n"), &[]),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::load(Some(&text), &[]).unwrap(), cfg);
    }
}
