//! Forward models for the measured quantities: notch transmission,
//! reflection, double-Lorentzian composites, excitation-number conversion,
//! acoustic emission rate of the ancilla, and the steady-state response of
//! a driven Kerr (Duffing) mode.
//!
//! Everything here is a pure function of explicit parameters; synthetic
//! sweep-map generation on top of these lives in [`sweep`].

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::units;

pub mod sweep;

pub use sweep::{synth_flux_sweep, Port, SweepGrid, TuningAxis};

/// Parameters of a single resonance line as seen from a measurement port.
///
/// `phi` is the Fano phase of the background interfering with the direct
/// signal; the forward models generate data at `phi = 0` and the fits use
/// it to absorb impedance mismatch in measured traces.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineShapeParams {
    /// Resonance frequency, rad/s.
    pub omega_r: f64,
    /// Total dissipation rate, rad/s.
    pub kappa_tot: f64,
    /// External coupling rate to the measurement port, rad/s.
    pub kappa_c: f64,
    /// Fano phase, rad; must satisfy `|phi| < pi/2`.
    pub phi: f64,
}

impl LineShapeParams {
    /// Check physicality. A nonpositive `kappa_tot` or `|phi| >= pi/2`
    /// is an error (the line shapes divide by both); `kappa_c` outside
    /// `[0, kappa_tot]` only logs a warning because intermediate fit
    /// iterates wander there legitimately.
    pub fn validate(&self) -> Result<()> {
        if !self.omega_r.is_finite() || !self.kappa_tot.is_finite() || !self.kappa_c.is_finite() {
            return Err(Error::InvalidInput("non-finite line-shape parameter".into()));
        }
        if self.kappa_tot <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "kappa_tot must be positive, got {:.3e}",
                self.kappa_tot
            )));
        }
        if !(self.phi.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidInput(format!(
                "Fano phase must satisfy |phi| < pi/2, got {:.3}",
                self.phi
            )));
        }
        if self.kappa_c < 0.0 || self.kappa_c > self.kappa_tot {
            log::warn!(
                "kappa_c = {:.3e} outside [0, kappa_tot = {:.3e}]",
                self.kappa_c,
                self.kappa_tot
            );
        }
        Ok(())
    }
}

/// Notch-configuration transmission past a side-coupled resonance,
/// `S21 = 1 - kappa_c e^{i phi} / [(kappa_tot + 2i(omega - omega_r)) cos phi]`.
///
/// On resonance with `phi = 0` the dip bottoms out at
/// `1 - kappa_c/kappa_tot`; far from resonance the line is transparent.
pub fn s21_notch(omega: f64, p: &LineShapeParams) -> Complex<f64> {
    let den = Complex::new(p.kappa_tot, 2.0 * (omega - p.omega_r)) * p.phi.cos();
    Complex::new(1.0, 0.0) - Complex::from_polar(p.kappa_c, p.phi) / den
}

/// Single-port reflection off a resonance,
/// `S33 = [(kappa_tot - kappa_c (1 + e^{i phi})) + 2i(omega - omega_r)]
///        / [(kappa_tot + 2i(omega - omega_r)) cos phi]`
/// with `kappa_tot` the sum of the port coupling and the internal rate.
///
/// At `phi = 0` the on-resonance value is `(kappa_tot - 2 kappa_c)/kappa_tot`,
/// which vanishes at critical coupling `kappa_c = kappa_tot/2`.
pub fn s33_reflection(omega: f64, p: &LineShapeParams) -> Complex<f64> {
    let two_delta = 2.0 * (omega - p.omega_r);
    let num =
        Complex::new(p.kappa_tot - p.kappa_c, two_delta) - Complex::from_polar(p.kappa_c, p.phi);
    let den = Complex::new(p.kappa_tot, two_delta) * p.phi.cos();
    num / den
}

/// Sum of two Lorentzians,
/// `a1 / (1 + ((omega - w1)/s1)^2) + a2 / (1 + ((omega - w2)/s2)^2)`.
/// The half widths enter squared, so their sign is immaterial; this keeps
/// the function usable as an optimizer residual without sign constraints.
pub fn double_lorentzian(
    omega: f64,
    a1: f64,
    w1: f64,
    s1: f64,
    a2: f64,
    w2: f64,
    s2: f64,
) -> f64 {
    let x1 = (omega - w1) / s1;
    let x2 = (omega - w2) / s2;
    a1 / (1.0 + x1 * x1) + a2 / (1.0 + x2 * x2)
}

/// Steady-state excitation number of a linearly driven resonance,
/// `n = kappa_c / (delta^2 + (kappa_tot/2)^2) * P / (hbar omega_r)`,
/// with the drive power given in dBm at the source and attenuated by
/// `attenuation_db` (sign-insensitive) on the way down.
pub fn excitation_number(
    power_dbm: f64,
    attenuation_db: f64,
    p: &LineShapeParams,
    detuning: f64,
) -> f64 {
    let flux = units::photon_flux(power_dbm, attenuation_db, p.omega_r);
    let half = 0.5 * p.kappa_tot;
    flux * p.kappa_c / (detuning * detuning + half * half)
}

/// Acoustic emission rate of the ancilla through its transducer,
/// `Gamma = (1.3 / (2 sqrt 2)) k2 n_pairs omega_c sinc^2(X)` with
/// `X = pi n_pairs (omega - omega_c) / omega_c`.
///
/// `k2` is the dimensionless electromechanical coupling of the substrate
/// and `n_pairs` the number of split-finger pairs in the transducer. The
/// rate peaks at `omega_c` and has nulls at `X = k pi`.
pub fn saw_emission_rate(omega: f64, k2: f64, n_pairs: u32, omega_c: f64) -> f64 {
    debug_assert!(n_pairs >= 1, "transducer needs at least one finger pair");
    let np = f64::from(n_pairs);
    let x = std::f64::consts::PI * np * (omega - omega_c) / omega_c;
    // sinc^2 series below 1e-8 avoids 0/0 at the peak.
    let sinc2 = if x.abs() < 1e-8 {
        1.0 - x * x / 3.0
    } else {
        let s = x.sin() / x;
        s * s
    };
    1.3 / (2.0 * std::f64::consts::SQRT_2) * k2 * np * omega_c * sinc2
}

/// Steady-state amplitudes of a driven Kerr mode: the real nonnegative
/// roots `n = |a|^2` of
/// `n [(delta + 2 chi n)^2 + (kappa_tot/2)^2] = kappa_ext * drive_flux`,
/// sorted ascending. `drive_flux` is the incident photon flux at the port
/// (1/s, nonnegative; see [`units::photon_flux`]).
///
/// The cubic has one or three such roots; three appear only in the
/// bistable regime `|delta| > (sqrt 3 / 2) kappa_tot` with the detuning
/// sign opposite to `chi`. Roots are polished by Newton steps on the
/// original form, so they satisfy the balance to near machine precision.
pub fn duffing_steady_state(
    drive_flux: f64,
    detuning: f64,
    chi: f64,
    kappa_tot: f64,
    kappa_ext: f64,
) -> Vec<f64> {
    debug_assert!(kappa_tot > 0.0, "kappa_tot must be positive");
    debug_assert!(drive_flux >= 0.0, "drive flux must be nonnegative");
    let r = kappa_ext * drive_flux;
    let half_sq = 0.25 * kappa_tot * kappa_tot;
    if r == 0.0 {
        // The undriven mode is empty; the bracket is strictly positive.
        return vec![0.0];
    }
    if chi == 0.0 {
        return vec![r / (detuning * detuning + half_sq)];
    }

    // Monic cubic n^3 + c2 n^2 + c1 n + c0 = 0, then depressed t^3 + p t + q
    // with n = t - c2/3.
    let c2 = detuning / chi;
    let c1 = (detuning * detuning + half_sq) / (4.0 * chi * chi);
    let c0 = -r / (4.0 * chi * chi);
    let p = c1 - c2 * c2 / 3.0;
    let q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
    let shift = -c2 / 3.0;

    let disc = -4.0 * p * p * p - 27.0 * q * q;
    let mut roots = if disc > 0.0 {
        // Three distinct real roots (p < 0 here): trigonometric form.
        let m = 2.0 * (-p / 3.0).sqrt();
        let theta = (3.0 * q / (p * m)).clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|k| {
                m * ((theta - 2.0 * std::f64::consts::PI * k as f64) / 3.0).cos() + shift
            })
            .collect::<Vec<_>>()
    } else {
        // One real root: Cardano, ordered to avoid cancellation.
        let s = (q * q / 4.0 + p * p * p / 27.0).max(0.0).sqrt();
        let a = if q <= 0.0 {
            (-q / 2.0 + s).cbrt()
        } else {
            -(q / 2.0 + s).cbrt()
        };
        let t = if a == 0.0 { 0.0 } else { a - p / (3.0 * a) };
        vec![t + shift]
    };

    for n in &mut roots {
        polish_duffing_root(n, r, detuning, chi, half_sq);
        // Roots of the driven balance are strictly positive; clamp the
        // rounding tail.
        if *n < 0.0 {
            *n = 0.0;
        }
    }
    roots.sort_by(f64::total_cmp);
    roots
}

/// Newton-polish one root of `n [(delta + 2 chi n)^2 + hk] = r` in place.
fn polish_duffing_root(n: &mut f64, r: f64, delta: f64, chi: f64, half_sq: f64) {
    for _ in 0..40 {
        let d = delta + 2.0 * chi * *n;
        let f = *n * (d * d + half_sq) - r;
        let df = d * d + half_sq + 4.0 * chi * *n * d;
        if df.abs() < 1e-300 {
            break;
        }
        let step = f / df;
        *n -= step;
        if step.abs() <= 1e-16 * (1.0 + n.abs()) {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(omega_r: f64, kappa_tot: f64, kappa_c: f64, phi: f64) -> LineShapeParams {
        LineShapeParams { omega_r, kappa_tot, kappa_c, phi }
    }

    #[test]
    fn notch_trivial_points() {
        let p = line(units::hz(4e9), units::hz(150e3), units::hz(50e3), 0.0);
        let on = s21_notch(p.omega_r, &p);
        assert!((on.re - (1.0 - p.kappa_c / p.kappa_tot)).abs() < 1e-12);
        assert!(on.im.abs() < 1e-12);

        let far = s21_notch(p.omega_r + 1e8 * p.kappa_tot, &p);
        assert!((far - Complex::new(1.0, 0.0)).norm() < 1e-7);

        let critical = line(p.omega_r, p.kappa_tot, p.kappa_tot, 0.0);
        assert!(s21_notch(p.omega_r, &critical).norm() < 1e-14);
    }

    #[test]
    fn reflection_trivial_points() {
        let p = line(units::hz(3.95e9), units::hz(120e3), units::hz(40e3), 0.0);
        let on = s33_reflection(p.omega_r, &p);
        let expect = (p.kappa_tot - 2.0 * p.kappa_c) / p.kappa_tot;
        assert!((on.re - expect).abs() < 1e-12 && on.im.abs() < 1e-12);

        let critical = line(p.omega_r, p.kappa_tot, 0.5 * p.kappa_tot, 0.0);
        assert!(s33_reflection(p.omega_r, &critical).norm() < 1e-14);

        let far = s33_reflection(p.omega_r + 1e8 * p.kappa_tot, &p);
        assert!((far - Complex::new(1.0, 0.0)).norm() < 1e-7);
    }

    #[test]
    fn reflection_is_unity_without_coupling() {
        let p = line(units::hz(3.95e9), units::hz(300e3), 0.0, 0.0);
        for k in -50..=50 {
            let omega = p.omega_r + 0.2 * k as f64 * p.kappa_tot;
            let s = s33_reflection(omega, &p);
            assert!((s - Complex::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn validate_rejects_and_warns() {
        assert!(line(units::hz(4e9), units::hz(100e3), units::hz(30e3), 0.3).validate().is_ok());
        assert!(line(units::hz(4e9), 0.0, 0.0, 0.0).validate().is_err());
        assert!(line(units::hz(4e9), units::hz(100e3), 0.0, 1.6).validate().is_err());
        assert!(line(f64::NAN, units::hz(100e3), 0.0, 0.0).validate().is_err());
        // Overcoupled kappa_c only warns.
        assert!(line(units::hz(4e9), units::hz(100e3), units::hz(200e3), 0.0)
            .validate()
            .is_ok());
    }

    proptest! {
        // Physical parameters at zero Fano phase never amplify.
        #[test]
        fn notch_magnitude_is_bounded(
            kappa_exp in 3.0f64..7.0,
            frac in 0.0f64..1.0,
            offset in -100.0f64..100.0,
        ) {
            let kappa_tot = units::hz(10f64.powf(kappa_exp));
            let p = line(units::hz(3.97e9), kappa_tot, frac * kappa_tot, 0.0);
            let s = s21_notch(p.omega_r + offset * kappa_tot, &p);
            prop_assert!(s.norm() <= 1.0 + 1e-9);
        }

        // The emission profile is even in the detuning from band center.
        #[test]
        fn emission_rate_is_even(frac in 0.001f64..0.2) {
            let omega_c = units::hz(3.967e9);
            let delta = frac * omega_c;
            let up = saw_emission_rate(omega_c + delta, 7e-4, 14, omega_c);
            let down = saw_emission_rate(omega_c - delta, 7e-4, 14, omega_c);
            prop_assert!((up - down).abs() <= 1e-13 * up.abs().max(down.abs()).max(1e-300));
        }
    }

    #[test]
    fn double_lorentzian_reduces_and_adds() {
        let w = units::hz(3.96e9);
        let s = units::hz(50e3);
        // Second amplitude zero: plain Lorentzian with peak a1 at w.
        assert!((double_lorentzian(w, 0.8, w, s, 0.0, w + s, s) - 0.8).abs() < 1e-14);
        // One half width off center: half maximum (up to rounding in w + s).
        assert!(
            (double_lorentzian(w + s, 0.8, w, s, 0.0, w, s) - 0.4).abs() < 1e-9
        );
        // Coincident components: amplitudes add.
        assert!((double_lorentzian(w, 0.5, w, s, 0.3, w, s) - 0.8).abs() < 1e-14);
    }

    #[test]
    fn separated_lorentzian_peaks_sit_at_centers() {
        let s = units::hz(40e3);
        let w1 = units::hz(3.96e9);
        let w2 = w1 + 100.0 * s;
        for (center, other_amp) in [(w1, 0.7), (w2, 1.0)] {
            let mut best = (f64::NEG_INFINITY, 0.0);
            // Dense grid around one center; the other peak is 100 sigma away.
            for k in -3000..=3000 {
                let omega = center + k as f64 * s / 1000.0;
                let v = double_lorentzian(omega, 1.0, w1, s, other_amp, w2, s);
                if v > best.0 {
                    best = (v, omega);
                }
            }
            assert!(
                (best.1 - center).abs() <= s / 100.0,
                "argmax displaced by {:.3e} rad/s",
                best.1 - center
            );
        }
    }

    #[test]
    fn occupation_conversion_limits() {
        let p = line(units::hz(3.99e9), units::hz(160e3), units::hz(40e3), 0.0);
        assert_eq!(excitation_number(f64::NEG_INFINITY, 0.0, &p, 0.0), 0.0);
        let off = excitation_number(-131.0, 0.0, &p, units::hz(1e9));
        let on = excitation_number(-131.0, 0.0, &p, 0.0);
        assert!(off < 1e-7 * on);
    }

    #[test]
    fn occupation_matches_reported_calibration() {
        // Representative longitudinal-mode parameters at -131 dBm on
        // resonance land near the reported mean population of 23.
        let p = line(units::hz(3.99e9), units::hz(160e3), units::hz(40e3), 0.0);
        let n = excitation_number(-131.0, 0.0, &p, 0.0);
        assert!(n > 23.0 / 1.5 && n < 23.0 * 1.5, "n = {n}");
        assert!(n > 25.0 && n < 35.0, "n = {n}");
    }

    #[test]
    fn emission_rate_peak_per_pair() {
        let omega_c = units::hz(3.967e9);
        let per_pair = saw_emission_rate(omega_c, 7e-4, 14, omega_c) / 14.0;
        let expect = units::hz(1.3e6);
        assert!(
            (per_pair - expect).abs() < 0.02 * expect,
            "peak rate per pair {:.4e} vs {:.4e}",
            per_pair,
            expect
        );
    }

    #[test]
    fn emission_rate_nulls_and_zero_coupling() {
        let omega_c = units::hz(3.967e9);
        let peak = saw_emission_rate(omega_c, 7e-4, 14, omega_c);
        for k in 1..=4 {
            let omega = omega_c * (1.0 + k as f64 / 14.0);
            let null = saw_emission_rate(omega, 7e-4, 14, omega_c);
            assert!(null < 1e-25 * peak, "null {k} leaked {:.3e}", null / peak);
        }
        assert_eq!(saw_emission_rate(omega_c * 1.01, 0.0, 14, omega_c), 0.0);
    }

    #[test]
    fn emission_series_branch_is_continuous() {
        let omega_c = units::hz(3.967e9);
        // Straddle the series/direct switch at |X| = 1e-8.
        let dx = 1e-8 * omega_c / (std::f64::consts::PI * 14.0);
        let below = saw_emission_rate(omega_c + 0.99 * dx, 7e-4, 14, omega_c);
        let above = saw_emission_rate(omega_c + 1.01 * dx, 7e-4, 14, omega_c);
        assert!((below - above).abs() < 1e-12 * below);
    }

    #[test]
    fn duffing_linear_limit_matches_occupation() {
        let p = line(units::hz(3.95e9), units::hz(200e3), units::hz(60e3), 0.0);
        let delta = units::hz(30e3);
        let flux = units::photon_flux(-120.0, 10.0, p.omega_r);
        let roots = duffing_steady_state(flux, delta, 0.0, p.kappa_tot, p.kappa_c);
        let expect = excitation_number(-120.0, 10.0, &p, delta);
        assert_eq!(roots.len(), 1);
        assert!((roots[0] - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn duffing_weak_drive_is_linear() {
        let kappa = units::hz(100e3);
        let chi = -units::hz(500.0);
        let delta = units::hz(20e3);
        let slope = kappa / (delta * delta + 0.25 * kappa * kappa);
        // Occupations here are < 1e-5, so the Kerr shift relative to the
        // linear answer is < 1e-10 and the roots must track the Lorentzian.
        for flux in [1e-4, 1e-3] {
            let roots = duffing_steady_state(flux, delta, chi, kappa, kappa);
            assert_eq!(roots.len(), 1);
            assert!((roots[0] - slope * flux).abs() < 1e-9 * slope * flux);
        }
        // Doubling the drive doubles the occupation in this regime.
        let lo = duffing_steady_state(1e-3, delta, chi, kappa, kappa)[0];
        let hi = duffing_steady_state(2e-3, delta, chi, kappa, kappa)[0];
        assert!((hi / lo - 2.0).abs() < 1e-9);
    }

    /// Relative balance residual of one steady-state root.
    fn duffing_residual(n: f64, flux: f64, delta: f64, chi: f64, kappa: f64, kext: f64) -> f64 {
        let d = delta + 2.0 * chi * n;
        let r = kext * flux;
        (n * (d * d + 0.25 * kappa * kappa) - r).abs() / r.max(1e-300)
    }

    #[test]
    fn duffing_roots_satisfy_cubic() {
        let kappa = units::hz(100e3);
        let kext = units::hz(40e3);
        let chi = -units::hz(500.0);
        for i in 0..41 {
            let delta = (-3.0 + 0.15 * i as f64) * kappa;
            for exp in [-2.0, 0.0, 2.0, 4.0, 6.0] {
                let flux = 10f64.powf(exp) * kappa;
                let roots = duffing_steady_state(flux, delta, chi, kappa, kext);
                assert!(
                    roots.len() == 1 || roots.len() == 3,
                    "{} roots at delta/kappa = {:.2}",
                    roots.len(),
                    delta / kappa
                );
                assert!(roots.windows(2).all(|w| w[0] <= w[1]));
                for &n in &roots {
                    let res = duffing_residual(n, flux, delta, chi, kappa, kext);
                    assert!(res < 1e-10, "residual {res:.3e}");
                }
            }
        }
    }

    #[test]
    fn duffing_bistability_onset_obeys_detuning_bound() {
        let kappa = units::hz(100e3);
        let kext = units::hz(40e3);
        let bound = 3f64.sqrt() / 2.0 * kappa;
        for chi in [-units::hz(500.0), units::hz(500.0)] {
            for i in 0..61 {
                let delta = (-3.0 + 0.1 * i as f64) * kappa;
                for exp in [-1.0, 1.0, 3.0, 5.0] {
                    let flux = 10f64.powf(exp) * kappa;
                    let roots = duffing_steady_state(flux, delta, chi, kappa, kext);
                    if roots.len() == 3 {
                        // Three branches only past the bound, detuning
                        // opposing the Kerr sign.
                        assert!(delta * chi < 0.0);
                        assert!(delta.abs() > bound * (1.0 - 1e-9));
                    }
                }
            }
            // Past the bound a drive placed at the middle branch always
            // resolves three distinct amplitudes.
            let delta = -2.0 * kappa * chi.signum();
            let n_mid = -delta / (3.0 * chi);
            let r_mid = n_mid * (delta * delta / 9.0 + 0.25 * kappa * kappa);
            let roots = duffing_steady_state(r_mid / kext, delta, chi, kappa, kext);
            assert_eq!(roots.len(), 3);
            assert!(roots[0] < roots[1] && roots[1] < roots[2]);
        }
    }
}
