use damisac_core::channel::UlaGeometry;
use damisac_core::linalg::complex_gaussian;
use damisac_core::rng::trial_rng;
use damisac_core::sensing::{estimate_target, matched_filter_map, synth_echo_stream, DelayDopplerGrid};
use damisac_core::units::db_to_lin;
use damisac_core::{BeamStream, BeamformerSet, CVector, Constellation, Modulation, SensingTarget, SymbolFrame, C64};
use rand::Rng;

const TS: f64 = 1e-8;
const N: usize = 4096;
const MAX_DELAY: usize = 15;
const HALF_WIDTH: usize = 4;

/// Fraction of trials whose grid argmax lands on the true bin.
fn hit_rate(bf: &BeamformerSet, theta: f64, snr_db: f64, trials: u64, seed: u64) -> f64 {
    let a = UlaGeometry::half_wavelength(bf.num_antennas()).steering_vector(theta);
    let grid = DelayDopplerGrid::resolution_grid(MAX_DELAY, N, TS, HALF_WIDTH);
    let qpsk = Constellation::new(Modulation::Qpsk);
    let hits = (0..trials)
        .filter(|&t| {
            let mut rng = trial_rng(seed, t);
            let frame = SymbolFrame::random(&qpsk, N, MAX_DELAY + bf.kappa_max(), &mut rng);
            let u = BeamStream::from_dam(bf, &frame, &a).unwrap();
            let tau = rng.random_range(0..=MAX_DELAY);
            let q = rng.random_range(0..grid.doppler_bins_hz().len());
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let target = SensingTarget {
                direction_rad: theta,
                delay_taps: tau,
                doppler_hz: grid.doppler_bins_hz()[q],
                gain: C64::from_polar(1.0, phase),
            };
            // output SNR at the matched bin is ‖u_τ‖² / σ²
            let energy: f64 = u.shifted(tau).iter().map(|v| v.norm_sqr()).sum();
            let sigma2 = energy / db_to_lin(snr_db);
            let echo = synth_echo_stream(&u, &target, sigma2, TS, &mut rng).unwrap();
            let map = matched_filter_map(&echo, &u, &grid, TS).unwrap();
            estimate_target(&map) == Some((tau, q))
        })
        .count();
    hits as f64 / trials as f64
}

#[test]
fn single_path_beam_recovers_target_bin_at_20_db() {
    let m = 8;
    let a = UlaGeometry::half_wavelength(m).steering_vector(0.4);
    let bf = BeamformerSet::new(vec![a.unscale((m as f64).sqrt())], vec![0]).unwrap();
    assert!(hit_rate(&bf, 0.4, 20.0, 100, 1) >= 0.99);
}

#[test]
fn multipath_dam_beam_recovers_target_bin_at_20_db() {
    let mut rng = trial_rng(2, 0);
    let vectors = (0..3).map(|_| CVector::from_fn(8, |_, _| complex_gaussian(&mut rng, 1.0 / 24.0))).collect();
    let bf = BeamformerSet::new(vectors, vec![11, 0, 7]).unwrap();
    assert!(hit_rate(&bf, -0.3, 20.0, 100, 3) >= 0.99);
}

#[test]
fn noiseless_recovery_is_exact() {
    let m = 4;
    let a = UlaGeometry::half_wavelength(m).steering_vector(0.0);
    let bf = BeamformerSet::new(vec![a.unscale(2.0)], vec![0]).unwrap();
    assert_eq!(hit_rate(&bf, 0.0, 300.0, 30, 4), 1.0);
}

#[test]
fn low_snr_degrades_detection() {
    let m = 8;
    let a = UlaGeometry::half_wavelength(m).steering_vector(0.4);
    let bf = BeamformerSet::new(vec![a.unscale((m as f64).sqrt())], vec![0]).unwrap();
    assert!(hit_rate(&bf, 0.4, 0.0, 100, 5) < 0.9);
}
