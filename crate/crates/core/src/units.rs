//! Decibel and power unit conversions.

/// Power ratio in dB to linear.
pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power ratio to dB. Zero maps to `-inf`.
pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Amplitude ratio to dB (`20 log10`).
pub fn mag_to_db(mag: f64) -> f64 {
    20.0 * mag.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_lin(dbm) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    lin_to_db(w * 1e3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_power_levels() {
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(-89.0) - 1.258_925_411_794_167e-12).abs() < 1e-24);
        assert!((watts_to_dbm(1.0) - 30.0).abs() < 1e-12);
        assert!((mag_to_db(0.1) + 20.0).abs() < 1e-12);
    }
}
