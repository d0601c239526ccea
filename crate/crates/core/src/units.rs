//! Unit conventions and conversions.
//!
//! All internal frequencies and rates are angular (rad/s). Files, CLI
//! arguments and serialized structs carry ordinary frequencies in Hz,
//! voltages in V and powers in dBm; conversion happens exactly once, at the
//! I/O boundary.

use std::f64::consts::TAU;

/// Reduced Planck constant, J·s (CODATA 2018).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Ordinary frequency in Hz to angular frequency in rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    TAU * f
}

/// Angular frequency in rad/s to ordinary frequency in Hz.
#[inline]
pub fn to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// Power in dBm to watts.
#[inline]
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Incident photon flux (1/s) at the device for a source power in dBm, a
/// line attenuation in dB (sign-insensitive) and a carrier at `omega` rad/s.
#[inline]
pub fn photon_flux(p_dbm: f64, attenuation_db: f64, omega: f64) -> f64 {
    dbm_to_watts(p_dbm) * 10f64.powf(-attenuation_db.abs() / 10.0) / (HBAR * omega)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hz_round_trip() {
        assert!((to_hz(hz(3.97e9)) - 3.97e9).abs() < 1e-3);
    }

    #[test]
    fn dbm_reference_points() {
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
        assert!((dbm_to_watts(-30.0) - 1e-6).abs() < 1e-21);
    }

    #[test]
    fn flux_scales_with_attenuation() {
        let w = hz(4e9);
        let f0 = photon_flux(-100.0, 0.0, w);
        let f10 = photon_flux(-100.0, 10.0, w);
        assert!((f0 / f10 - 10.0).abs() < 1e-9);
        // Sign of the attenuation is ignored: only its magnitude matters.
        assert_eq!(f10, photon_flux(-100.0, -10.0, w));
    }
}
