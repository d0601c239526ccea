//! Kerr coefficients from power-dependent frequency shifts.
//!
//! A probe mode shifts linearly with the occupation of a driven partner
//! mode, the slope being their cross-Kerr coefficient. Collecting fitted
//! cross-Kerr values against the hybrid participation product returns
//! the bare ancilla anharmonicity, and the dominant systematic (the
//! occupation calibration through the line attenuation) propagates to an
//! asymmetric interval.

use crate::error::Result;
use crate::fitting::lsq::{ols_line, wls_through_origin};

#[derive(Debug, Clone)]
pub struct CrossKerrFit {
    /// Shift per photon, rad/s.
    pub chi: f64,
    /// Shift at zero occupation, rad/s; absorbs the static offset.
    pub intercept: f64,
    /// One-sigma uncertainty of `chi`, rad/s.
    pub chi_sigma: f64,
    pub residual_rms: f64,
}

/// Slope of probe frequency shift against partner occupation.
pub fn fit_cross_kerr(occupations: &[f64], shifts: &[f64]) -> Result<CrossKerrFit> {
    let line = ols_line(occupations, shifts)?;
    Ok(CrossKerrFit {
        chi: line.slope,
        intercept: line.intercept,
        chi_sigma: line.slope_sigma,
        residual_rms: line.residual_rms,
    })
}

/// Bare ancilla anharmonicity from fitted cross-Kerr coefficients.
///
/// Each sample pairs the participation product of the two hybrid modes
/// with the fitted cross-Kerr; the model is `chi = 2 chi_sq * product`,
/// fitted through the origin with unit weights. Returns the rate and its
/// scatter-based one-sigma uncertainty, rad/s.
pub fn refit_bare_kerr(samples: &[(f64, f64)]) -> Result<(f64, f64)> {
    let xs: Vec<f64> = samples.iter().map(|&(p, _)| 2.0 * p).collect();
    let ys: Vec<f64> = samples.iter().map(|&(_, c)| c).collect();
    let weights = vec![1.0; xs.len()];
    wls_through_origin(&xs, &ys, &weights)
}

/// Systematic interval on a Kerr coefficient from an attenuation
/// uncertainty of `delta_db` (dB). Occupations scale as a power ratio,
/// so the interval is asymmetric; returns `(upper, lower)` offsets with
/// `upper >= 0 >= lower` for positive `chi`.
pub fn propagate_attenuation_error(chi: f64, delta_db: f64) -> (f64, f64) {
    let up = chi * (10f64.powf(delta_db.abs() / 10.0) - 1.0);
    let down = chi * (10f64.powf(-delta_db.abs() / 10.0) - 1.0);
    (up, down)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bogoliubov::{diagonalize_rwa, hybrid_kerr};
    use crate::error::Error;
    use crate::model::build_rwa_matrix;
    use crate::presets;
    use crate::units;

    #[test]
    fn exact_line_is_recovered() {
        let chi = -units::hz(50e3);
        let intercept = units::hz(12e3);
        let ns: Vec<f64> = (0..9).map(|k| 0.5 * k as f64).collect();
        let shifts: Vec<f64> = ns.iter().map(|&n| chi * n + intercept).collect();
        let fit = fit_cross_kerr(&ns, &shifts).unwrap();
        assert!((fit.chi - chi).abs() < 1e-9 * chi.abs());
        assert!((fit.intercept - intercept).abs() < 1e-9 * intercept.abs());
        assert!(fit.residual_rms < 1e-6);
    }

    #[test]
    fn constant_offset_does_not_move_the_slope() {
        let chi = -units::hz(50e3);
        let ns: Vec<f64> = (0..9).map(|k| 0.5 * k as f64).collect();
        let shifts: Vec<f64> = ns.iter().map(|&n| chi * n).collect();
        let shifted: Vec<f64> = shifts.iter().map(|&s| s + units::hz(1e6)).collect();
        let a = fit_cross_kerr(&ns, &shifts).unwrap();
        let b = fit_cross_kerr(&ns, &shifted).unwrap();
        assert!(
            (a.chi - b.chi).abs() < 1e-12 * chi.abs(),
            "{:.6e} vs {:.6e}",
            a.chi,
            b.chi
        );
    }

    #[test]
    fn degenerate_occupations_error() {
        let ns = vec![2.0; 6];
        let shifts = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!(matches!(fit_cross_kerr(&ns, &shifts), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bare_kerr_refit_inverts_the_hybrid_map() {
        let device = presets::reference_device_truncated(6);
        let omega_sq = units::hz(3.97e9);
        let spec = diagonalize_rwa(&build_rwa_matrix(&device, omega_sq)).unwrap();
        let kerr = hybrid_kerr(&spec, device.ancilla.chi);
        // Cross-Kerr of the most ancilla-like column against all others.
        let part = spec.participation();
        let col = (0..spec.n_modes())
            .max_by(|&a, &b| part[a].total_cmp(&part[b]))
            .unwrap();
        let weight = |j: usize| {
            let v = spec.v.as_ref().map_or(0.0, |m| m[(0, j)]);
            (spec.u[(0, j)] - v).powi(2)
        };
        let samples: Vec<(f64, f64)> = (0..spec.n_modes())
            .filter(|&j| j != col)
            .map(|j| (weight(col) * weight(j), kerr.chi[(col, j)]))
            .collect();
        let (chi_sq, sigma) = refit_bare_kerr(&samples).unwrap();
        assert!(
            (chi_sq - device.ancilla.chi).abs() < 1e-12 * device.ancilla.chi.abs(),
            "{chi_sq:.6e} vs {:.6e}",
            device.ancilla.chi
        );
        assert!(sigma.abs() < 1e-9 * device.ancilla.chi.abs());
    }

    #[test]
    fn bare_kerr_refit_handles_synthetic_products() {
        let chi_sq = -units::hz(0.57e6);
        let products = [0.9, 0.6, 0.3, 0.15, 0.05];
        let samples: Vec<(f64, f64)> =
            products.iter().map(|&p| (p, 2.0 * chi_sq * p)).collect();
        let (fit, sigma) = refit_bare_kerr(&samples).unwrap();
        assert!((fit - chi_sq).abs() < 1e-12 * chi_sq.abs());
        assert!(sigma.abs() < 1e-9 * chi_sq.abs());
    }

    #[test]
    fn attenuation_interval_is_asymmetric() {
        let (up, down) = propagate_attenuation_error(0.0, 1.0);
        assert_eq!(up, 0.0);
        assert_eq!(down, 0.0);
        let (up, down) = propagate_attenuation_error(units::hz(0.57e6), 0.0);
        assert_eq!(up, 0.0);
        assert_eq!(down, 0.0);

        let chi = units::hz(0.57e6);
        let (up, down) = propagate_attenuation_error(chi, 1.0);
        let up_mhz = up / units::hz(1e6);
        let down_mhz = down / units::hz(1e6);
        assert!((up_mhz - 0.147587).abs() < 1e-3, "up {up_mhz:.6}");
        assert!((down_mhz + 0.117233).abs() < 1e-3, "down {down_mhz:.6}");
        assert_eq!((up_mhz * 100.0).round() / 100.0, 0.15);
        assert_eq!((down_mhz * 100.0).round() / 100.0, -0.12);
        // Sign convention is insensitive to how the uncertainty is quoted.
        assert_eq!(propagate_attenuation_error(chi, -1.0), (up, down));
    }
}
