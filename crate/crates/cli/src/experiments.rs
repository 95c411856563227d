//! The seven experiments behind the `damisac` subcommands.
//!
//! Each one takes a resolved [`RunConfig`], a base seed and an output
//! directory, writes its CSV tables and SVG plots, and returns the list of
//! files with a summary of headline numbers. Sweep points run on the rayon
//! pool; every trial draws from its own seeded stream and results are
//! assembled in a fixed order, so outputs do not depend on the thread count.

use std::f64::consts::PI;
use std::path::Path;

use damisac_core::beamforming_opt::{
    beampattern, comm_only_beamformer, comm_snr, design_isac_beamformer, single_path_beamformer, spectral_efficiency,
    zf_projectors, IsacBeamformingResult, IsacThresholds, LinkBudget,
};
use damisac_core::channel::{
    doppler_from_velocity, free_space_pathloss, gen_comm_channel_with, sensing_gain_magnitude, PathSpec,
};
use damisac_core::ofdm_radar::{matched_precoders, ofdm_echo_subcarriers, ofdm_estimate, ofdm_max_sensing_snr, OfdmConfig};
use damisac_core::rng::trial_rng;
use damisac_core::sensing::{
    asymptotic_af_surface, delay_cut_value, empirical_af_surface, estimate_target, matched_filter_fft,
    matched_filter_map, peak_sidelobe_ratio, psr_doppler, refine_doppler, sensing_snr, synth_echo_stream,
    Window,
};
use damisac_core::units::{dbm_to_watts, lin_to_db, mag_to_db};
use damisac_core::waveform::{kappas_from_delays, papr_bound_dam, papr_bound_ofdm, papr_distribution, DamPaprSampler, OfdmPaprSampler};
use damisac_core::{
    BeamStream, BeamformerSet, CMatrix, CVector, Constellation, DelayDopplerGrid, Modulation, MultipathChannel,
    SensingTarget, SymbolFrame, C64,
};
use rand::Rng;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::output::{line_plot, num, write_csv, write_svg, FigureBundle, Series};
use crate::CliError;

/// Seed for an auxiliary stream that never collides with trial streams.
fn sub_seed(seed: u64, tag: u64) -> u64 {
    trial_rng(seed, (1 << 40) | tag).random()
}

fn modulation(name: &str) -> Result<Constellation, CliError> {
    let kind: Modulation = name.parse().map_err(|e: damisac_core::Error| CliError::Config(e.to_string()))?;
    Ok(Constellation::new(kind))
}

pub fn link_budget(cfg: &RunConfig) -> Result<LinkBudget, CliError> {
    let sc = cfg.scenario_config();
    Ok(LinkBudget {
        alpha_sq: sensing_gain_magnitude(sc.carrier_freq_hz, cfg.target.range_m, cfg.target.rcs_m2)?,
        cpi_len: sc.cpi_len(),
        noise_power: sc.noise_power_w,
        tx_power: sc.tx_power_w,
    })
}

/// One specular sub-path per path at the given AoDs with the free-space
/// path power split evenly and a random phase per path.
pub fn fixed_channel(cfg: &RunConfig, delays: &[usize], aods_deg: &[f64], seed: u64) -> Result<MultipathChannel, CliError> {
    let sc = cfg.scenario_config();
    let amp = (free_space_pathloss(sc.wavelength(), cfg.channel.distance_m) / delays.len() as f64).sqrt();
    let mut rng = trial_rng(sub_seed(seed, 1), 0);
    let specs: Vec<PathSpec> = delays
        .iter()
        .zip(aods_deg)
        .map(|(&d, &aod)| PathSpec {
            delay_taps: d,
            beta: C64::from_polar(amp, rng.random_range(0.0..2.0 * PI)),
            aods_rad: vec![aod.to_radians()],
            phases_rad: vec![0.0],
        })
        .collect();
    Ok(MultipathChannel::from_subpaths(&sc.geometry(), &specs)?)
}

fn design(
    cfg: &RunConfig,
    ch: &MultipathChannel,
    th: &IsacThresholds,
    seed: u64,
    warm: &[BeamformerSet],
) -> damisac_core::Result<IsacBeamformingResult> {
    let sc = cfg.scenario_config();
    let budget = link_budget(cfg).map_err(|_| damisac_core::Error::InvalidParameter {
        name: "target",
        reason: "invalid radar equation inputs".into(),
    })?;
    design_isac_beamformer(
        ch,
        &sc.geometry(),
        cfg.target.direction_deg.to_radians(),
        th,
        &budget,
        &cfg.solver_settings(),
        cfg.solver.randomization_samples,
        seed,
        warm,
    )
}

fn db_opt(v: Option<f64>) -> String {
    v.map(|x| num(mag_to_db(x))).unwrap_or_else(|| "nan".into())
}

/// Empirical and asymptotic AF cuts of single-path beamforming for each CPI
/// length.
pub fn run_af(cfg: &RunConfig, seed: u64, out: &Path) -> Result<FigureBundle, CliError> {
    let sc = cfg.scenario_config();
    let ts = sc.sample_period();
    let geom = sc.geometry();
    let theta = cfg.target.direction_deg.to_radians();
    let a = geom.steering_vector(theta);
    let bf = single_path_beamformer(&geom, theta, sc.tx_power_w, vec![0])?;
    let constellation = modulation(&cfg.af.modulation)?;
    let dmax = cfg.af.max_delay_diff as i64;
    let d_taus: Vec<i64> = (-dmax..=dmax).collect();

    struct Cuts {
        n: usize,
        d_nus: Vec<f64>,
        dop_emp: Vec<C64>,
        dop_asym: Vec<C64>,
        del_emp: Vec<C64>,
        del_asym: Vec<C64>,
    }
    let cuts = cfg
        .af
        .cpi_lengths
        .par_iter()
        .enumerate()
        .map(|(idx, &n)| -> Result<Cuts, CliError> {
            let mut rng = trial_rng(seed, idx as u64);
            let frame = SymbolFrame::random(&constellation, n, 2 * cfg.af.max_delay_diff, &mut rng);
            let u = BeamStream::from_dam(&bf, &frame, &a)?;
            let cell = 1.0 / (n as f64 * ts);
            let k = (cfg.af.doppler_span_cells / cfg.af.doppler_step_cells).round() as i64;
            let d_nus: Vec<f64> = (-k..=k).map(|i| i as f64 * cfg.af.doppler_step_cells * cell).collect();
            let dop_emp = empirical_af_surface(&u, &d_taus, &[0.0], ts)?.column(0.0).expect("zero Doppler column");
            let dop_asym = asymptotic_af_surface(&bf, &a, &d_taus, &[0.0], n, ts)?
                .column(0.0)
                .expect("zero Doppler column");
            let del_emp = empirical_af_surface(&u, &[0], &d_nus, ts)?.row(0).expect("zero delay row");
            let del_asym = asymptotic_af_surface(&bf, &a, &[0], &d_nus, n, ts)?.row(0).expect("zero delay row");
            Ok(Cuts {
                n,
                d_nus,
                dop_emp,
                dop_asym,
                del_emp,
                del_asym,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut bundle = FigureBundle::default();
    let header = ["cpi_len", "kind", "d_tau_taps", "d_nu_hz", "mag_db", "phase_rad"];
    let mut dop_rows = Vec::new();
    let mut del_rows = Vec::new();
    let mut summary_rows = Vec::new();
    let mut dop_series = Vec::new();
    let mut del_series = Vec::new();
    let mut psrs = Vec::new();
    let mut floors = Vec::new();
    for c in &cuts {
        for (kind, vals) in [("empirical", &c.dop_emp), ("asymptotic", &c.dop_asym)] {
            for (&d, v) in d_taus.iter().zip(vals.iter()) {
                dop_rows.push(vec![c.n.to_string(), kind.into(), d.to_string(), num(0.0), num(mag_to_db(v.norm())), num(v.arg())]);
            }
        }
        for (kind, vals) in [("empirical", &c.del_emp), ("asymptotic", &c.del_asym)] {
            for (&dn, v) in c.d_nus.iter().zip(vals.iter()) {
                del_rows.push(vec![c.n.to_string(), kind.into(), "0".into(), num(dn), num(mag_to_db(v.norm())), num(v.arg())]);
            }
        }
        let first_null = 1.0 / (c.n as f64 * ts);
        let psr = psr_doppler(&c.del_emp, &c.d_nus, first_null);
        let psr_asym = psr_doppler(&c.del_asym, &c.d_nus, first_null);
        let side: Vec<f64> = d_taus
            .iter()
            .zip(&c.dop_emp)
            .filter(|(d, _)| **d != 0)
            .map(|(_, v)| v.norm())
            .collect();
        let floor = (side.iter().map(|v| v * v).sum::<f64>() / side.len().max(1) as f64).sqrt();
        let peak = side.iter().copied().fold(0.0, f64::max);
        let asym_peak = d_taus
            .iter()
            .zip(&c.dop_asym)
            .filter(|(d, _)| **d != 0)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max);
        summary_rows.push(vec![
            c.n.to_string(),
            db_opt(psr),
            db_opt(psr_asym),
            num(mag_to_db(floor)),
            num(mag_to_db(peak)),
            num(mag_to_db(asym_peak)),
        ]);
        psrs.push(psr.map(mag_to_db));
        floors.push(mag_to_db(floor));
        dop_series.push(Series {
            label: format!("N={} empirical", c.n),
            points: d_taus.iter().zip(&c.dop_emp).map(|(&d, v)| (d as f64, mag_to_db(v.norm()))).collect(),
        });
        del_series.push(Series {
            label: format!("N={} empirical", c.n),
            points: c.d_nus.iter().zip(&c.del_emp).map(|(&d, v)| (d * c.n as f64 * ts, mag_to_db(v.norm()))).collect(),
        });
    }
    if let Some(c) = cuts.first() {
        del_series.push(Series {
            label: "asymptotic".into(),
            points: c.d_nus.iter().zip(&c.del_asym).map(|(&d, v)| (d * c.n as f64 * ts, mag_to_db(v.norm()))).collect(),
        });
    }
    write_csv(out, "af_doppler_cut.csv", &header, &dop_rows, &mut bundle)?;
    write_csv(out, "af_delay_cut.csv", &header, &del_rows, &mut bundle)?;
    write_csv(
        out,
        "af_summary.csv",
        &[
            "cpi_len",
            "delay_cut_psr_db",
            "asymptotic_delay_cut_psr_db",
            "doppler_cut_floor_db",
            "doppler_cut_peak_sidelobe_db",
            "asymptotic_doppler_cut_peak_sidelobe_db",
        ],
        &summary_rows,
        &mut bundle,
    )?;
    write_svg(
        out,
        "af_doppler_cut.svg",
        &line_plot("Doppler cut |χ(d_τ, 0)|", "d_τ (taps)", "dB", &dop_series, Some(-60.0)),
        &mut bundle,
    )?;
    write_svg(
        out,
        "af_delay_cut.svg",
        &line_plot("Delay cut |χ(0, d_ν)|", "d_ν N T_s", "dB", &del_series, Some(-60.0)),
        &mut bundle,
    )?;
    bundle.summarize("cpi_lengths", &cfg.af.cpi_lengths);
    bundle.summarize("delay_cut_psr_db", &psrs);
    bundle.summarize("doppler_cut_floor_db", &floors);
    Ok(bundle)
}

/// Transmit beampatterns of the comm-only, single-path and ISAC designs.
pub fn run_beampattern(cfg: &RunConfig, seed: u64, out: &Path) -> Result<FigureBundle, CliError> {
    let p = &cfg.beampattern;
    let sc = cfg.scenario_config();
    let geom = sc.geometry();
    let theta = cfg.target.direction_deg.to_radians();
    let a = geom.steering_vector(theta);
    let budget = link_budget(cfg)?;
    let ch = fixed_channel(cfg, &p.delays, &p.aods_deg, seed)?;
    let zf = zf_projectors(&ch)?;
    let kappas = kappas_from_delays(&ch.delays())?;

    let mut cases: Vec<(String, BeamformerSet)> = vec![
        ("comm_only".into(), comm_only_beamformer(&ch, &zf, sc.tx_power_w)?),
        ("single_path".into(), single_path_beamformer(&geom, theta, sc.tx_power_w, kappas)?),
    ];
    let designs = p
        .phi_db
        .par_iter()
        .map(|&phi| design(cfg, &ch, &IsacThresholds::from_db(Some(p.gamma_db), Some(phi)), seed, &[]))
        .collect::<Result<Vec<_>, _>>()?;
    for (phi, res) in p.phi_db.iter().zip(designs) {
        cases.push((format!("isac_gamma{}_phi{}", p.gamma_db, phi), res.bf));
    }

    let grid: Vec<f64> = (0..p.grid_points)
        .map(|i| (-90.0 + 180.0 * i as f64 / (p.grid_points - 1) as f64).to_radians())
        .collect();
    let l = ch.num_paths();
    let mut header = vec!["label".to_string(), "theta_deg".into(), "total_db".into()];
    header.extend((1..=l).map(|i| format!("path{i}_db")));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut series = Vec::new();
    for (label, bf) in &cases {
        let bp = beampattern(bf, &geom, &grid)?;
        for (i, &t) in grid.iter().enumerate() {
            let mut r = vec![label.clone(), num(t.to_degrees()), num(lin_to_db(bp.total[i]))];
            r.extend(bp.per_path.iter().map(|pp| num(lin_to_db(pp[i]))));
            rows.push(r);
        }
        series.push(Series {
            label: label.clone(),
            points: grid.iter().zip(&bp.total).map(|(t, v)| (t.to_degrees(), lin_to_db(*v))).collect(),
        });
        let gain = bf.beam_gain(&a);
        summary.push(vec![
            label.clone(),
            num(lin_to_db(gain / (sc.num_tx_antennas as f64 * sc.tx_power_w))),
            num(lin_to_db(sensing_snr(bf, &a, budget.alpha_sq, budget.cpi_len, budget.noise_power))),
            num(lin_to_db(comm_snr(&ch, bf, sc.noise_power_w))),
            num(lin_to_db(damisac_core::sensing::isr(bf, &a, ch.delay_spread()).unwrap_or(f64::NAN))),
        ]);
    }
    let mut bundle = FigureBundle::default();
    write_csv(out, "beampattern.csv", &header_ref, &rows, &mut bundle)?;
    write_csv(
        out,
        "beampattern_summary.csv",
        &["label", "target_gain_rel_db", "sensing_snr_db", "comm_snr_db", "isr_db"],
        &summary,
        &mut bundle,
    )?;
    write_svg(
        out,
        "beampattern.svg",
        &line_plot("Normalized transmit beampattern", "angle (deg)", "dB", &series, Some(-50.0)),
        &mut bundle,
    )?;
    bundle.summarize("cases", cases.iter().map(|c| &c.0).collect::<Vec<_>>());
    Ok(bundle)
}

/// One row of the Doppler-cut experiment summary.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DopplerCutCase {
    pub phi_th_db: f64,
    pub max_sidelobe_db: f64,
    pub support: Vec<i64>,
    pub isr_db: f64,
    pub sensing_snr_db: f64,
    pub comm_snr_db: f64,
    pub rank_gap: f64,
    pub recovery: String,
    pub cut: Vec<(i64, C64)>,
}

pub fn doppler_cut_cases(cfg: &RunConfig, seed: u64) -> Result<Vec<DopplerCutCase>, CliError> {
    let p = &cfg.doppler_cut_isr;
    let sc = cfg.scenario_config();
    let a = sc.geometry().steering_vector(cfg.target.direction_deg.to_radians());
    let ch = fixed_channel(cfg, &p.delays, &p.aods_deg, seed)?;
    let dmax = p.max_delay_diff as i64;
    p.phi_db
        .par_iter()
        .map(|&phi| {
            let res = design(cfg, &ch, &IsacThresholds::from_db(Some(p.gamma_db), Some(phi)), seed, &[])?;
            let cut = (-dmax..=dmax)
                .map(|d| Ok((d, delay_cut_value(&res.bf, &a, d)?)))
                .collect::<damisac_core::Result<Vec<_>>>()?;
            let side = cut.iter().filter(|(d, v)| *d != 0 && v.norm() > 0.0);
            Ok(DopplerCutCase {
                phi_th_db: phi,
                max_sidelobe_db: mag_to_db(side.clone().map(|(_, v)| v.norm()).fold(0.0, f64::max)),
                support: side.map(|(d, _)| *d).collect(),
                isr_db: lin_to_db(res.isr),
                sensing_snr_db: lin_to_db(res.sensing_snr),
                comm_snr_db: lin_to_db(res.comm_snr),
                rank_gap: res.rank_gap,
                recovery: serde_json::to_value(res.recovery)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                cut,
            })
        })
        .collect()
}

/// Doppler cut `χ(d_τ, 0)` of the optimized beamformer for each ISR threshold.
pub fn run_doppler_cut_isr(cfg: &RunConfig, seed: u64, out: &Path) -> Result<FigureBundle, CliError> {
    let cases = doppler_cut_cases(cfg, seed)?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut series = Vec::new();
    for c in &cases {
        for (d, v) in &c.cut {
            rows.push(vec![num(c.phi_th_db), d.to_string(), num(mag_to_db(v.norm())), num(v.arg())]);
        }
        summary.push(vec![
            num(c.phi_th_db),
            num(c.max_sidelobe_db),
            c.support.iter().map(i64::to_string).collect::<Vec<_>>().join(";"),
            num(c.isr_db),
            num(c.sensing_snr_db),
            num(c.comm_snr_db),
            num(c.rank_gap),
            c.recovery.clone(),
        ]);
        series.push(Series {
            label: format!("φ_th = {} dB", c.phi_th_db),
            points: c.cut.iter().map(|(d, v)| (*d as f64, mag_to_db(v.norm()))).collect(),
        });
    }
    let mut bundle = FigureBundle::default();
    write_csv(out, "doppler_cut_isr.csv", &["phi_th_db", "d_tau_taps", "mag_db", "phase_rad"], &rows, &mut bundle)?;
    write_csv(
        out,
        "doppler_cut_isr_summary.csv",
        &["phi_th_db", "max_sidelobe_db", "sidelobe_support", "isr_db", "sensing_snr_db", "comm_snr_db", "rank_gap", "recovery"],
        &summary,
        &mut bundle,
    )?;
    write_svg(
        out,
        "doppler_cut_isr.svg",
        &line_plot("Doppler cut of the ISAC beamformer", "d_τ (taps)", "dB", &series, Some(-80.0)),
        &mut bundle,
    )?;
    bundle.summarize(
        "max_sidelobe_db",
        cases.iter().map(|c| (c.phi_th_db, c.max_sidelobe_db)).collect::<Vec<_>>(),
    );
    Ok(bundle)
}

/// One design in the trade-off sweeps.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TradeoffPoint {
    /// `"phi"` when `φ_th` is swept at fixed `γ_th`, `"gamma"` otherwise.
    pub sweep: &'static str,
    pub fixed_db: f64,
    pub swept_db: f64,
    pub seed: usize,
    pub comm_snr: f64,
    pub spectral_efficiency: f64,
    pub bound_ratio: f64,
    pub rank_gap: f64,
    pub status: String,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CommOnlyCheck {
    pub seed: usize,
    pub closed_form_comm_snr: f64,
    pub sdr_comm_snr: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TradeoffData {
    pub points: Vec<TradeoffPoint>,
    pub baseline: Vec<CommOnlyCheck>,
}

/// Sweeps one threshold from strictest to loosest, handing each solution to
/// the next point as a warm start.
fn sweep_chain(
    cfg: &RunConfig,
    ch: &MultipathChannel,
    seed: usize,
    sweep: &'static str,
    fixed_db: f64,
    swept_db: &[f64],
) -> Vec<TradeoffPoint> {
    let sc = cfg.scenario_config();
    let mut order: Vec<f64> = swept_db.to_vec();
    // the strictest γ_th is the largest, the strictest φ_th the smallest
    if sweep == "gamma" {
        order.sort_by(|a, b| b.total_cmp(a));
    } else {
        order.sort_by(f64::total_cmp);
    }
    let mut warm: Vec<BeamformerSet> = Vec::new();
    let mut points: Vec<TradeoffPoint> = order
        .into_iter()
        .map(|v| {
            let th = if sweep == "gamma" {
                IsacThresholds::from_db(Some(v), Some(fixed_db))
            } else {
                IsacThresholds::from_db(Some(fixed_db), Some(v))
            };
            match design(cfg, ch, &th, seed as u64, &warm) {
                Ok(res) => {
                    let p = TradeoffPoint {
                        sweep,
                        fixed_db,
                        swept_db: v,
                        seed,
                        comm_snr: res.comm_snr,
                        spectral_efficiency: spectral_efficiency(res.comm_snr, sc.cpi_len(), sc.coherence_len()),
                        bound_ratio: res.comm_snr * sc.noise_power_w / res.sdr_objective,
                        rank_gap: res.rank_gap,
                        status: "ok".into(),
                    };
                    warm = vec![res.bf];
                    p
                }
                Err(e) => TradeoffPoint {
                    sweep,
                    fixed_db,
                    swept_db: v,
                    seed,
                    comm_snr: f64::NAN,
                    spectral_efficiency: f64::NAN,
                    bound_ratio: f64::NAN,
                    rank_gap: f64::NAN,
                    status: e.to_string(),
                },
            }
        })
        .collect();
    points.sort_by(|a, b| a.swept_db.total_cmp(&b.swept_db));
    points
}

pub fn tradeoff_data(cfg: &RunConfig, seed: u64) -> Result<TradeoffData, CliError> {
    let sc = cfg.scenario_config();
    let params = cfg.channel_params();
    let t = &cfg.tradeoff;
    let per_seed = (0..t.num_seeds)
        .into_par_iter()
        .map(|s| -> Result<(Vec<TradeoffPoint>, CommOnlyCheck), CliError> {
            let ch = gen_comm_channel_with(&sc, &params, &mut trial_rng(seed, s as u64))?;
            let zf = zf_projectors(&ch)?;
            let closed = comm_snr(&ch, &comm_only_beamformer(&ch, &zf, sc.tx_power_w)?, sc.noise_power_w);
            let sdr = design(cfg, &ch, &IsacThresholds::comm_only(), s as u64, &[])?.comm_snr;
            let mut pts = Vec::new();
            for &g in &t.gamma_fixed_db {
                pts.extend(sweep_chain(cfg, &ch, s, "phi", g, &t.phi_sweep_db));
            }
            for &phi in &t.phi_fixed_db {
                pts.extend(sweep_chain(cfg, &ch, s, "gamma", phi, &t.gamma_sweep_db));
            }
            Ok((
                pts,
                CommOnlyCheck {
                    seed: s,
                    closed_form_comm_snr: closed,
                    sdr_comm_snr: sdr,
                    relative_error: (sdr - closed).abs() / closed,
                },
            ))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut data = TradeoffData::default();
    for (pts, base) in per_seed {
        data.points.extend(pts);
        data.baseline.push(base);
    }
    Ok(data)
}

/// Mean spectral efficiency over feasible seeds for each `(sweep, fixed, swept)`.
pub fn tradeoff_means(points: &[TradeoffPoint]) -> Vec<(&'static str, f64, f64, f64, usize)> {
    let mut keys: Vec<(&'static str, f64, f64)> = Vec::new();
    for p in points {
        if !keys.iter().any(|k| k.0 == p.sweep && k.1 == p.fixed_db && k.2 == p.swept_db) {
            keys.push((p.sweep, p.fixed_db, p.swept_db));
        }
    }
    keys.into_iter()
        .map(|(s, f, v)| {
            let ok: Vec<f64> = points
                .iter()
                .filter(|p| p.sweep == s && p.fixed_db == f && p.swept_db == v && p.status == "ok")
                .map(|p| p.spectral_efficiency)
                .collect();
            let mean = ok.iter().sum::<f64>() / ok.len().max(1) as f64;
            (s, f, v, if ok.is_empty() { f64::NAN } else { mean }, ok.len())
        })
        .collect()
}

/// Spectral efficiency against `φ_th` and `γ_th` over random channels.
pub fn run_tradeoff(cfg: &RunConfig, seed: u64, out: &Path) -> Result<FigureBundle, CliError> {
    let data = tradeoff_data(cfg, seed)?;
    let sc = cfg.scenario_config();
    let rows: Vec<Vec<String>> = data
        .points
        .iter()
        .map(|p| {
            vec![
                p.sweep.into(),
                num(p.fixed_db),
                num(p.swept_db),
                p.seed.to_string(),
                num(lin_to_db(p.comm_snr)),
                num(p.spectral_efficiency),
                num(p.bound_ratio),
                num(p.rank_gap),
                p.status.clone(),
            ]
        })
        .collect();
    let means = tradeoff_means(&data.points);
    let mean_rows: Vec<Vec<String>> = means
        .iter()
        .map(|(s, f, v, m, k)| vec![s.to_string(), num(*f), num(*v), num(*m), k.to_string()])
        .collect();
    let base_rows: Vec<Vec<String>> = data
        .baseline
        .iter()
        .map(|b| {
            vec![
                b.seed.to_string(),
                num(lin_to_db(b.closed_form_comm_snr)),
                num(lin_to_db(b.sdr_comm_snr)),
                num(b.relative_error),
                num(spectral_efficiency(b.closed_form_comm_snr, sc.cpi_len(), sc.coherence_len())),
            ]
        })
        .collect();
    let mut bundle = FigureBundle::default();
    write_csv(
        out,
        "tradeoff_per_seed.csv",
        &["sweep", "fixed_db", "swept_db", "seed", "comm_snr_db", "spectral_efficiency", "sdr_bound_ratio", "rank_gap", "status"],
        &rows,
        &mut bundle,
    )?;
    write_csv(
        out,
        "tradeoff_mean.csv",
        &["sweep", "fixed_db", "swept_db", "mean_spectral_efficiency", "num_feasible"],
        &mean_rows,
        &mut bundle,
    )?;
    write_csv(
        out,
        "tradeoff_comm_only.csv",
        &["seed", "closed_form_comm_snr_db", "sdr_comm_snr_db", "relative_error", "spectral_efficiency"],
        &base_rows,
        &mut bundle,
    )?;
    for (sweep, fixed_name, x_label, file) in [
        ("phi", "γ_th", "φ_th (dB)", "tradeoff_phi.svg"),
        ("gamma", "φ_th", "γ_th (dB)", "tradeoff_gamma.svg"),
    ] {
        let mut fixed: Vec<f64> = means.iter().filter(|m| m.0 == sweep).map(|m| m.1).collect();
        fixed.dedup();
        let series: Vec<Series> = fixed
            .iter()
            .map(|&f| Series {
                label: format!("{fixed_name} = {f} dB"),
                points: means.iter().filter(|m| m.0 == sweep && m.1 == f).map(|m| (m.2, m.3)).collect(),
            })
            .collect();
        write_svg(
            out,
            file,
            &line_plot("Mean spectral efficiency", x_label, "bit/s/Hz", &series, None),
            &mut bundle,
        )?;
    }
    let infeasible = data.points.iter().filter(|p| p.status != "ok").count();
    bundle.summarize("num_seeds", cfg.tradeoff.num_seeds);
    bundle.summarize("failed_points", infeasible);
    bundle.summarize(
        "max_comm_only_relative_error",
        data.baseline.iter().map(|b| b.relative_error).fold(0.0, f64::max),
    );
    Ok(bundle)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PaprCurve {
    pub label: String,
    pub num_samples: usize,
    pub quantile_db: f64,
    pub bound_db: f64,
    pub max_db: f64,
    pub ccdf: Vec<f64>,
}

pub fn papr_curves(cfg: &RunConfig, seed: u64) -> Result<(Vec<f64>, Vec<PaprCurve>), CliError> {
    let p = &cfg.papr;
    let constellation = modulation(&p.modulation)?;
    let steps = ((p.threshold_max_db - p.threshold_min_db) / p.threshold_step_db).round().max(0.0) as usize;
    let thresholds: Vec<f64> = (0..=steps).map(|i| p.threshold_min_db + i as f64 * p.threshold_step_db).collect();
    let mut rng = trial_rng(sub_seed(seed, 2), 0);
    let mut curves = Vec::new();
    for (idx, &l) in p.dam_paths.iter().enumerate() {
        // constant-modulus beam entries with arbitrary phases
        let weights: Vec<C64> = (0..l).map(|_| C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))).collect();
        let bf = BeamformerSet::new(weights.iter().map(|&w| CVector::from_element(1, w)).collect(), (0..l).collect())?;
        let bound = papr_bound_dam(&bf, constellation.a_max)?[0];
        let sampler = DamPaprSampler {
            weights,
            kappas: (0..l).collect(),
            constellation: constellation.clone(),
            window_len: p.num_subcarriers,
            windows_per_trial: p.windows_per_trial,
        };
        let dist = papr_distribution(&sampler, p.num_trials, sub_seed(seed, 10 + idx as u64))?;
        curves.push(PaprCurve {
            label: format!("dam_l{l}"),
            num_samples: dist.len(),
            quantile_db: dist.quantile_db(p.quantile),
            bound_db: lin_to_db(bound),
            max_db: dist.quantile_db(0.0),
            ccdf: thresholds.iter().map(|&t| dist.ccdf(t)).collect(),
        });
    }
    let weights: Vec<C64> = (0..p.num_subcarriers)
        .map(|_| C64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let precoders: Vec<CVector> = weights.iter().map(|&w| CVector::from_element(1, w)).collect();
    let bound = papr_bound_ofdm(&precoders, constellation.a_max)?[0];
    let sampler = OfdmPaprSampler {
        weights,
        constellation,
        symbols_per_trial: p.windows_per_trial,
    };
    let dist = papr_distribution(&sampler, p.num_trials, sub_seed(seed, 3))?;
    curves.push(PaprCurve {
        label: format!("ofdm_k{}", p.num_subcarriers),
        num_samples: dist.len(),
        quantile_db: dist.quantile_db(p.quantile),
        bound_db: lin_to_db(bound),
        max_db: dist.quantile_db(0.0),
        ccdf: thresholds.iter().map(|&t| dist.ccdf(t)).collect(),
    });
    Ok((thresholds, curves))
}

/// Monte Carlo PAPR CCDFs of DAM and OFDM.
pub fn run_papr(cfg: &RunConfig, seed: u64, out: &Path) -> Result<FigureBundle, CliError> {
    let (thresholds, curves) = papr_curves(cfg, seed)?;
    let mut rows = Vec::new();
    for c in &curves {
        for (t, p) in thresholds.iter().zip(&c.ccdf) {
            rows.push(vec![c.label.clone(), num(*t), num(*p)]);
        }
    }
    let summary: Vec<Vec<String>> = curves
        .iter()
        .map(|c| vec![c.label.clone(), c.num_samples.to_string(), num(c.quantile_db), num(c.bound_db), num(c.max_db)])
        .collect();
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series {
            label: c.label.clone(),
            points: thresholds.iter().zip(&c.ccdf).map(|(t, p)| (*t, p.log10())).collect(),
        })
        .collect();
    let mut bundle = FigureBundle::default();
    write_csv(out, "papr_ccdf.csv", &["waveform", "threshold_db", "ccdf"], &rows, &mut bundle)?;
    let q_col = format!("quantile_{:e}_db", cfg.papr.quantile);
    write_csv(
        out,
        "papr_summary.csv",
        &["waveform", "num_samples", &q_col, "bound_db", "max_db"],
        &summary,
        &mut bundle,
    )?;
    write_svg(out, "papr_ccdf.svg", &line_plot("PAPR CCDF", "PAPR (dB)", "log10 P(PAPR > x)", &series, None), &mut bundle)?;
    bundle.summarize(
        "quantile_db",
        curves.iter().map(|c| (c.label.clone(), c.quantile_db)).collect::<Vec<_>>(),
    );
    Ok(bundle)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareRow {
    pub waveform: &'static str,
    pub speed_mps: f64,
    pub doppler_hz: f64,
    pub mean_psr_db: f64,
    pub delay_hits: usize,
    pub num_trials: usize,
    /// Normalized range profile of the first trial, dB.
    pub profile_db: Vec<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CompareOutcome {
    pub rows: Vec<CompareRow>,
    /// `(τ, τ̂)` of the zero-Doppler noiseless OFDM sweep over the CP.
    pub delay_sweep: Vec<(usize, usize)>,
}

fn normalized_db(v: &[C64]) -> Vec<f64> {
    let peak = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    v.iter().map(|x| mag_to_db(x.norm() / peak)).collect()
}

pub fn compare_ofdm_outcome(cfg: &RunConfig, seed: u64) -> Result<CompareOutcome, CliError> {
    let p = &cfg.compare_ofdm;
    let sc = cfg.scenario_config();
    let ocfg = OfdmConfig {
        num_subcarriers: p.num_subcarriers,
        cp_len: p.cp_len,
        num_symbols: p.num_symbols,
        sample_period_s: 1.0 / (p.num_subcarriers as f64 * p.subcarrier_spacing_hz),
    };
    ocfg.validate()?;
    let ts = ocfg.sample_period_s;
    let window: Window = p.window.parse()?;
    let constellation = modulation(&p.modulation)?;
    let geom = sc.geometry();
    let theta = cfg.target.direction_deg.to_radians();
    let a = geom.steering_vector(theta);
    let precoders = matched_precoders(&a, sc.tx_power_w, p.num_subcarriers);
    let bf = single_path_beamformer(&geom, theta, sc.tx_power_w, vec![0])?;
    let sigma2 = sc.noise_power_w * p.noise_scale;
    let n_dam = ocfg.dam_equivalent_len();
    let n_fft = n_dam.next_power_of_two();
    let delay_bins: Vec<usize> = (0..=p.cp_len).collect();
    let draw_data = |rng: &mut rand_chacha::ChaCha8Rng| {
        CMatrix::from_fn(p.num_symbols, p.num_subcarriers, |_, _| constellation.sample(rng))
    };

    let mut rows = Vec::new();
    for (si, &v) in p.speeds_mps.iter().enumerate() {
        let nu = doppler_from_velocity(sc.carrier_freq_hz, v);
        let target = SensingTarget {
            direction_rad: theta,
            delay_taps: p.delay_taps,
            doppler_hz: nu,
            gain: C64::new(1.0, 0.0),
        };
        // the same data draws serve every speed
        let trials = (0..p.num_trials as u64)
            .into_par_iter()
            .map(|t| -> Result<_, CliError> {
                let mut rng = trial_rng(seed, t);
                let data = draw_data(&mut rng);
                let mut noise_rng = trial_rng(sub_seed(seed, 100 + si as u64), t);
                let r = ofdm_echo_subcarriers(&ocfg, &precoders, &data, &a, &target, sigma2, &mut noise_rng)?;
                let est = ofdm_estimate(&ocfg, &r, &data, window)?;
                let mags: Vec<f64> = est.profiles.range_profile.iter().map(|x| x.norm()).collect();
                let ofdm = (
                    peak_sidelobe_ratio(&mags, true).map_or(f64::NAN, mag_to_db),
                    est.tau_hat == p.delay_taps,
                    normalized_db(&est.profiles.range_profile),
                );

                let frame = SymbolFrame::random(&constellation, n_dam, p.cp_len, &mut rng);
                let u = BeamStream::from_dam(&bf, &frame, &a)?;
                let echo = synth_echo_stream(&u, &target, sigma2, ts, &mut noise_rng)?;
                let coarse = matched_filter_fft(&echo, &u, &delay_bins, n_fft, Window::None)?;
                let (row, col) = estimate_target(&coarse).expect("nonempty map");
                let bin = 1.0 / (n_fft as f64 * ts);
                let nu0 = (col as f64 - (n_fft / 2) as f64) * bin;
                let nu_hat = refine_doppler(&echo, &u, delay_bins[row], nu0 - bin, nu0 + bin, ts)?;
                let grid = DelayDopplerGrid::new(delay_bins.clone(), vec![nu_hat])?;
                let profile: Vec<C64> = matched_filter_map(&echo, &u, &grid, ts)?.column(0).iter().copied().collect();
                let dmags: Vec<f64> = profile.iter().map(|x| x.norm()).collect();
                let dam = (
                    peak_sidelobe_ratio(&dmags, false).map_or(f64::NAN, mag_to_db),
                    delay_bins[row] == p.delay_taps,
                    normalized_db(&profile),
                );
                Ok((ofdm, dam))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (waveform, pick) in [("ofdm", 0usize), ("dam", 1)] {
            let view: Vec<&(f64, bool, Vec<f64>)> = trials.iter().map(|t| if pick == 0 { &t.0 } else { &t.1 }).collect();
            rows.push(CompareRow {
                waveform,
                speed_mps: v,
                doppler_hz: nu,
                mean_psr_db: view.iter().map(|x| x.0).sum::<f64>() / view.len() as f64,
                delay_hits: view.iter().filter(|x| x.1).count(),
                num_trials: view.len(),
                profile_db: view[0].2.clone(),
            });
        }
    }

    let data = draw_data(&mut trial_rng(sub_seed(seed, 4), 0));
    let delay_sweep = (0..=p.cp_len)
        .into_par_iter()
        .map(|tau| -> Result<_, CliError> {
            let target = SensingTarget {
                direction_rad: theta,
                delay_taps: tau,
                doppler_hz: 0.0,
                gain: C64::new(1.0, 0.0),
            };
            let r = ofdm_echo_subcarriers(&ocfg, &precoders, &data, &a, &target, 0.0, &mut trial_rng(0, 0))?;
            Ok((tau, ofdm_estimate(&ocfg, &r, &data, window)?.tau_hat))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CompareOutcome { rows, delay_sweep })
}

/// DAM versus OFDM range profiles at low and high target speed.
pub fn run_compare_ofdm(cfg: &RunConfig, seed: u64, out: &Path) -> Result<FigureBundle, CliError> {
    let outcome = compare_ofdm_outcome(cfg, seed)?;
    let spacing = cfg.compare_ofdm.subcarrier_spacing_hz;
    let mut profile_rows = Vec::new();
    let mut series = Vec::new();
    for r in &outcome.rows {
        // OFDM bins cover the whole symbol, DAM bins only the guard
        for (bin, db) in r.profile_db.iter().enumerate().take(cfg.compare_ofdm.cp_len + 1) {
            profile_rows.push(vec![r.waveform.into(), num(r.speed_mps), bin.to_string(), num(*db)]);
        }
        series.push(Series {
            label: format!("{} {} m/s", r.waveform, r.speed_mps),
            points: r
                .profile_db
                .iter()
                .take(cfg.compare_ofdm.cp_len + 1)
                .enumerate()
                .map(|(b, d)| (b as f64, *d))
                .collect(),
        });
    }
    let summary: Vec<Vec<String>> = outcome
        .rows
        .iter()
        .map(|r| {
            vec![
                r.waveform.into(),
                num(r.speed_mps),
                num(r.doppler_hz),
                num(r.doppler_hz / spacing),
                num(r.mean_psr_db),
                r.delay_hits.to_string(),
                r.num_trials.to_string(),
            ]
        })
        .collect();
    let sweep: Vec<Vec<String>> = outcome
        .delay_sweep
        .iter()
        .map(|(t, h)| vec![t.to_string(), h.to_string()])
        .collect();
    let mut bundle = FigureBundle::default();
    write_csv(out, "compare_ofdm_profiles.csv", &["waveform", "speed_mps", "delay_bin", "mag_db"], &profile_rows, &mut bundle)?;
    write_csv(
        out,
        "compare_ofdm_summary.csv",
        &["waveform", "speed_mps", "doppler_hz", "doppler_over_spacing", "mean_psr_db", "delay_hits", "num_trials"],
        &summary,
        &mut bundle,
    )?;
    write_csv(out, "compare_ofdm_delay_sweep.csv", &["tau_taps", "ofdm_tau_hat"], &sweep, &mut bundle)?;
    write_svg(
        out,
        "compare_ofdm_profiles.svg",
        &line_plot("Range profiles", "delay bin", "dB", &series, Some(-80.0)),
        &mut bundle,
    )?;
    bundle.summarize(
        "mean_psr_db",
        outcome
            .rows
            .iter()
            .map(|r| (r.waveform, r.speed_mps, r.mean_psr_db))
            .collect::<Vec<_>>(),
    );
    bundle.summarize(
        "ofdm_delay_sweep_exact",
        outcome.delay_sweep.iter().all(|(t, h)| t == h),
    );
    Ok(bundle)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SnrBudget {
    pub cpi_len: usize,
    pub num_paths: usize,
    pub num_subcarriers: usize,
    pub num_ofdm_symbols: usize,
    pub gamma_dam_max: f64,
    pub gamma_ofdm_max: f64,
    pub ratio: f64,
    pub expected_ratio: f64,
    pub single_path_closed_form: f64,
    pub single_path_sensing_snr: f64,
    pub monte_carlo_snr: f64,
    pub monte_carlo_trials: usize,
}

pub fn snr_budget(cfg: &RunConfig, seed: u64) -> Result<SnrBudget, CliError> {
    let p = &cfg.snr_budget;
    let sc = cfg.scenario_config();
    let budget = link_budget(cfg)?;
    let (n, l, k, m) = (sc.cpi_len(), sc.num_paths, p.num_subcarriers, sc.num_tx_antennas);
    let n_p = sc.guard_len();
    let ocfg = OfdmConfig {
        num_subcarriers: k,
        cp_len: n_p.min(k),
        num_symbols: sc.coherence_len() / (k + n_p),
        sample_period_s: sc.sample_period(),
    };
    ocfg.validate()?;
    let i = ocfg.num_symbols;
    let p_max = dbm_to_watts(p.peak_power_dbm);
    let sigma2 = sc.noise_power_w;
    // PSK with constant-modulus beams: PAPR_DAM = L and PAPR_OFDM = K
    let gamma_dam = budget.alpha_sq * n as f64 * m as f64 * (p_max / l as f64) / sigma2;
    let gamma_ofdm = ofdm_max_sensing_snr(&ocfg, m, p_max / k as f64, budget.alpha_sq, sigma2);

    let geom = sc.geometry();
    let theta = cfg.target.direction_deg.to_radians();
    let a = geom.steering_vector(theta);
    let bf = single_path_beamformer(&geom, theta, sc.tx_power_w, vec![0])?;
    let closed = budget.alpha_sq * n as f64 * m as f64 * sc.tx_power_w / sigma2;
    let via_fn = sensing_snr(&bf, &a, budget.alpha_sq, n, sigma2);

    let qpsk = Constellation::new(Modulation::Qpsk);
    let frame = SymbolFrame::random(&qpsk, n, p.delay_taps, &mut trial_rng(sub_seed(seed, 5), 0));
    let u = BeamStream::from_dam(&bf, &frame, &a)?;
    let target = SensingTarget {
        direction_rad: theta,
        delay_taps: p.delay_taps,
        doppler_hz: 0.0,
        gain: C64::new(budget.alpha_sq.sqrt(), 0.0),
    };
    let grid = DelayDopplerGrid::new(vec![p.delay_taps], vec![0.0])?;
    // the matched filter is linear, so signal and noise outputs separate
    let clean = synth_echo_stream(&u, &target, 0.0, sc.sample_period(), &mut trial_rng(0, 0))?;
    let signal = matched_filter_map(&clean, &u, &grid, sc.sample_period())?[(0, 0)].norm_sqr();
    let silent = SensingTarget { gain: C64::new(0.0, 0.0), ..target };
    let noise: f64 = (0..p.monte_carlo_trials as u64)
        .into_par_iter()
        .map(|t| -> Result<f64, CliError> {
            let echo = synth_echo_stream(&u, &silent, sigma2, sc.sample_period(), &mut trial_rng(sub_seed(seed, 6), t))?;
            Ok(matched_filter_map(&echo, &u, &grid, sc.sample_period())?[(0, 0)].norm_sqr())
        })
        .collect::<Result<Vec<_>, _>>()?
        .iter()
        .sum::<f64>()
        / p.monte_carlo_trials as f64;

    Ok(SnrBudget {
        cpi_len: n,
        num_paths: l,
        num_subcarriers: k,
        num_ofdm_symbols: i,
        gamma_dam_max: gamma_dam,
        gamma_ofdm_max: gamma_ofdm,
        ratio: gamma_dam / gamma_ofdm,
        expected_ratio: n as f64 / (l * i) as f64,
        single_path_closed_form: closed,
        single_path_sensing_snr: via_fn,
        monte_carlo_snr: signal / noise,
        monte_carlo_trials: p.monte_carlo_trials,
    })
}

/// DAM versus OFDM sensing SNR under the peak-power backoff model.
pub fn run_snr_budget(cfg: &RunConfig, seed: u64, out: &Path) -> Result<FigureBundle, CliError> {
    let b = snr_budget(cfg, seed)?;
    let rows = vec![
        vec!["cpi_len".to_string(), b.cpi_len.to_string()],
        vec!["num_paths".into(), b.num_paths.to_string()],
        vec!["num_subcarriers".into(), b.num_subcarriers.to_string()],
        vec!["num_ofdm_symbols".into(), b.num_ofdm_symbols.to_string()],
        vec!["gamma_dam_max_db".into(), num(lin_to_db(b.gamma_dam_max))],
        vec!["gamma_ofdm_max_db".into(), num(lin_to_db(b.gamma_ofdm_max))],
        vec!["ratio".into(), num(b.ratio)],
        vec!["expected_ratio".into(), num(b.expected_ratio)],
        vec!["single_path_closed_form_db".into(), num(lin_to_db(b.single_path_closed_form))],
        vec!["single_path_sensing_snr_db".into(), num(lin_to_db(b.single_path_sensing_snr))],
        vec!["monte_carlo_snr_db".into(), num(lin_to_db(b.monte_carlo_snr))],
        vec!["monte_carlo_trials".into(), b.monte_carlo_trials.to_string()],
    ];
    let mut bundle = FigureBundle::default();
    write_csv(out, "snr_budget.csv", &["quantity", "value"], &rows, &mut bundle)?;
    bundle.summarize("budget", &b);
    Ok(bundle)
}
