//! Device description and construction of the coupled quadratic forms.
//!
//! A [`DeviceModel`] is the static parameter set of one physical device: a
//! list of bare acoustic modes (frequency, internal/external dissipation,
//! coupling to the ancilla, family tag) plus the nonlinear ancilla
//! resonator (bare self-Kerr, dissipation) and optionally the flux tuning
//! curve mapping coil voltage to the ancilla's bare frequency.
//!
//! From a device and a chosen ancilla frequency, [`build_rwa_matrix`]
//! assembles the arrowhead matrix of the excitation-conserving model and
//! [`build_quadratic_form`] the pair of blocks (`T`, `U`) entering the full
//! quadratic Hamiltonian, where `U` holds the non-conserving pair terms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::lsq::{levenberg_marquardt, FitOptions};
use crate::units;

/// Classification of a bare acoustic mode.
///
/// `Dark` marks comb positions that never show up in direct spectroscopy
/// (no external coupling from the measured port); `Spurious` marks
/// resonances outside the regular comb that are carried along for
/// bookkeeping only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeFamily {
    Longitudinal,
    Transverse,
    Dark,
    Spurious,
}

/// One bare acoustic mode. All rates in rad/s.
#[derive(Debug, Clone)]
pub struct BareMode {
    pub label: String,
    pub omega: f64,
    pub kappa_int: f64,
    pub kappa_ext: f64,
    /// Beam-splitter coupling to the ancilla; zero for modes that tune
    /// through the band without hybridizing.
    pub g: f64,
    pub family: ModeFamily,
}

impl BareMode {
    pub fn kappa_total(&self) -> f64 {
        self.kappa_int + self.kappa_ext
    }
}

/// The flux-tunable nonlinear ancilla resonator. All rates in rad/s.
#[derive(Debug, Clone)]
pub struct Ancilla {
    /// Reference bare frequency (e.g. at the working point); sweep
    /// operations take the instantaneous frequency as an argument.
    pub omega: f64,
    /// Bare self-Kerr coefficient; negative for a junction-array device.
    pub chi: f64,
    /// Total dissipation rate.
    pub kappa: f64,
    /// External (measurement-port) part of `kappa`.
    pub kappa_ext: f64,
}

/// Voltage-to-frequency tuning curve of the ancilla,
/// `omega(v) = omega_max * sqrt(|cos(alpha * (v - v0))|)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxMap {
    /// Frequency at the sweet spot, rad/s.
    pub omega_max: f64,
    /// Voltage-to-phase slope, rad/V.
    pub alpha: f64,
    /// Sweet-spot voltage, V.
    pub v0: f64,
}

/// Static description of one device.
#[derive(Debug, Clone)]
pub struct DeviceModel {
    pub ancilla: Ancilla,
    pub modes: Vec<BareMode>,
    pub flux_map: Option<FluxMap>,
}

impl DeviceModel {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    /// Bare mode frequencies in storage order.
    pub fn mode_omegas(&self) -> DVector<f64> {
        DVector::from_iterator(self.modes.len(), self.modes.iter().map(|m| m.omega))
    }

    /// Total bare dissipation rate per mode, in storage order.
    pub fn mode_kappas(&self) -> DVector<f64> {
        DVector::from_iterator(self.modes.len(), self.modes.iter().map(|m| m.kappa_total()))
    }

    pub fn mode_index(&self, label: &str) -> Option<usize> {
        self.modes.iter().position(|m| m.label == label)
    }

    /// Check basic physicality: finite values, positive frequencies,
    /// nonnegative dissipation, unique labels.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidInput(what.to_string()));
        let a = &self.ancilla;
        if !(a.omega.is_finite() && a.omega > 0.0) {
            return bad("ancilla.omega must be finite and positive");
        }
        if !(a.chi.is_finite() && a.kappa.is_finite() && a.kappa_ext.is_finite()) {
            return bad("ancilla rates must be finite");
        }
        if a.kappa < 0.0 || a.kappa_ext < 0.0 || a.kappa_ext > a.kappa {
            return bad("ancilla dissipation must satisfy 0 <= kappa_ext <= kappa");
        }
        for (i, m) in self.modes.iter().enumerate() {
            if !(m.omega.is_finite() && m.omega > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "modes[{i}] ({}): omega must be finite and positive",
                    m.label
                )));
            }
            if !(m.kappa_int >= 0.0 && m.kappa_ext >= 0.0 && m.g.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "modes[{i}] ({}): dissipation must be nonnegative and g finite",
                    m.label
                )));
            }
        }
        for (i, m) in self.modes.iter().enumerate() {
            if self.modes[..i].iter().any(|p| p.label == m.label) {
                return Err(Error::InvalidInput(format!("duplicate mode label {}", m.label)));
            }
        }
        if let Some(fm) = &self.flux_map {
            if !(fm.omega_max > 0.0 && fm.omega_max.is_finite() && fm.alpha.is_finite()) {
                return bad("flux_map must have positive omega_max and finite alpha");
            }
        }
        Ok(())
    }
}

/// Arrowhead matrix of the excitation-conserving model: ancilla frequency
/// in the corner, bare mode frequencies on the rest of the diagonal and
/// the couplings in the first row/column. Index 0 is the ancilla.
pub fn build_rwa_matrix(device: &DeviceModel, omega_sq: f64) -> DMatrix<f64> {
    let n = device.n_modes();
    let mut t = DMatrix::zeros(n + 1, n + 1);
    t[(0, 0)] = omega_sq;
    for (i, m) in device.modes.iter().enumerate() {
        t[(i + 1, i + 1)] = m.omega;
        t[(0, i + 1)] = m.g;
        t[(i + 1, 0)] = m.g;
    }
    t
}

/// The two blocks of the full quadratic Hamiltonian. `t` multiplies the
/// excitation-conserving part, `u` the pair-creation part; `u` has zero
/// diagonal and `-g_i` in the first row/column.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub t: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

pub fn build_quadratic_form(device: &DeviceModel, omega_sq: f64) -> QuadraticForm {
    let n = device.n_modes();
    let t = build_rwa_matrix(device, omega_sq);
    let mut u = DMatrix::zeros(n + 1, n + 1);
    for (i, m) in device.modes.iter().enumerate() {
        u[(0, i + 1)] = -m.g;
        u[(i + 1, 0)] = -m.g;
    }
    QuadraticForm { t, u }
}

/// Ancilla bare frequency at coil voltage `v`, rad/s.
pub fn flux_to_frequency(map: &FluxMap, v: f64) -> f64 {
    map.omega_max * (map.alpha * (v - map.v0)).cos().abs().sqrt()
}

/// Result of [`fit_flux_map`].
#[derive(Debug, Clone)]
pub struct FluxMapFit {
    pub map: FluxMap,
    /// Root-mean-square frequency residual over the used samples, rad/s.
    pub residual_rms: f64,
    pub iterations: usize,
}

/// Near the half-flux points the tuning curve is singular and real devices
/// deviate from it; samples where the model's `|cos|` drops below this
/// bound are excluded from the fit residual.
const FLUX_FIT_COS_FLOOR: f64 = 1e-3;

/// Fit the tuning curve to `(voltage, omega)` samples (V, rad/s).
///
/// Needs at least four samples with a nonzero voltage spread. The guess is
/// optional; without one it is built from the sample extrema. Converges
/// when the relative loss change drops below 1e-10; anything else is a
/// non-convergence error carrying the final residual.
pub fn fit_flux_map(samples: &[(f64, f64)], guess: Option<FluxMap>) -> Result<FluxMapFit> {
    if samples.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "flux-map fit needs >= 4 samples, got {}",
            samples.len()
        )));
    }
    let vmin = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let vmax = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if !(vmax - vmin).is_finite() || vmax - vmin <= 0.0 {
        return Err(Error::InvalidInput(
            "flux-map fit needs a nondegenerate voltage range".into(),
        ));
    }

    let guess = guess.unwrap_or_else(|| initial_flux_guess(samples));
    let x0 = DVector::from_vec(vec![guess.omega_max, guess.alpha, guess.v0]);
    let scales = DVector::from_vec(vec![
        guess.omega_max,
        guess.alpha.abs().max(0.1),
        (vmax - vmin).max(1e-6),
    ]);

    let residual = |p: &DVector<f64>| {
        let map = FluxMap { omega_max: p[0], alpha: p[1], v0: p[2] };
        DVector::from_iterator(
            samples.len(),
            samples.iter().map(|&(v, w)| {
                if (map.alpha * (v - map.v0)).cos().abs() < FLUX_FIT_COS_FLOOR {
                    0.0
                } else {
                    flux_to_frequency(&map, v) - w
                }
            }),
        )
    };

    let opts = FitOptions { param_scales: Some(scales), ..FitOptions::default() };
    let report = levenberg_marquardt(residual, &x0, &opts)?;
    if !report.converged {
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            residual: (report.loss / samples.len() as f64).sqrt(),
        });
    }
    // The curve is even in alpha and invariant under omega_max sign flips
    // at fixed |omega_max|; report the canonical positive representatives.
    let map = FluxMap {
        omega_max: report.params[0].abs(),
        alpha: report.params[1].abs(),
        v0: report.params[2],
    };
    Ok(FluxMapFit {
        map,
        residual_rms: (report.loss / samples.len() as f64).sqrt(),
        iterations: report.iterations,
    })
}

fn initial_flux_guess(samples: &[(f64, f64)]) -> FluxMap {
    let (v_at_max, w_max) = samples
        .iter()
        .fold((0.0, f64::NEG_INFINITY), |acc, &(v, w)| if w > acc.1 { (v, w) } else { acc });
    // Use the most detuned sample to seed the slope: |cos| = (w/w_max)^2.
    let mut alpha: f64 = 1.0;
    let mut best_dist = 0.0;
    for &(v, w) in samples {
        let dv = (v - v_at_max).abs();
        if dv > best_dist && w > 0.0 && w < w_max {
            let c = (w / w_max).powi(2).clamp(-1.0, 1.0);
            alpha = c.acos() / dv;
            best_dist = dv;
        }
    }
    FluxMap { omega_max: w_max, alpha: alpha.max(1e-3), v0: v_at_max }
}

// ---------------------------------------------------------------------------
// Serialization. Files carry Hz / V; internal structs carry rad/s.
// ---------------------------------------------------------------------------

/// On-disk schema version accepted by [`DeviceModel::from_json_str`].
pub const DEVICE_SCHEMA: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DeviceDoc {
    schema: u32,
    ancilla: AncillaDoc,
    modes: Vec<ModeDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    flux_map: Option<FluxMapDoc>,
}

#[derive(Serialize, Deserialize)]
struct AncillaDoc {
    omega_hz: f64,
    chi_hz: f64,
    kappa_hz: f64,
    kappa_ext_hz: f64,
}

#[derive(Serialize, Deserialize)]
struct ModeDoc {
    label: String,
    omega_hz: f64,
    /// May be omitted for dark modes, in which case the mean internal
    /// dissipation of the resolvable (non-dark, non-spurious) modes is
    /// filled in on load.
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa_int_hz: Option<f64>,
    kappa_ext_hz: f64,
    g_hz: f64,
    family: ModeFamily,
}

#[derive(Serialize, Deserialize)]
struct FluxMapDoc {
    omega_max_hz: f64,
    alpha_rad_per_v: f64,
    v0_v: f64,
}

impl DeviceModel {
    pub fn to_json_string(&self) -> Result<String> {
        let doc = DeviceDoc {
            schema: DEVICE_SCHEMA,
            ancilla: AncillaDoc {
                omega_hz: units::to_hz(self.ancilla.omega),
                chi_hz: units::to_hz(self.ancilla.chi),
                kappa_hz: units::to_hz(self.ancilla.kappa),
                kappa_ext_hz: units::to_hz(self.ancilla.kappa_ext),
            },
            modes: self
                .modes
                .iter()
                .map(|m| ModeDoc {
                    label: m.label.clone(),
                    omega_hz: units::to_hz(m.omega),
                    kappa_int_hz: Some(units::to_hz(m.kappa_int)),
                    kappa_ext_hz: units::to_hz(m.kappa_ext),
                    g_hz: units::to_hz(m.g),
                    family: m.family,
                })
                .collect(),
            flux_map: self.flux_map.as_ref().map(|fm| FluxMapDoc {
                omega_max_hz: units::to_hz(fm.omega_max),
                alpha_rad_per_v: fm.alpha,
                v0_v: fm.v0,
            }),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: DeviceDoc = serde_json::from_str(s)?;
        if doc.schema != DEVICE_SCHEMA {
            return Err(Error::InvalidInput(format!(
                "unsupported device schema {} (expected {DEVICE_SCHEMA})",
                doc.schema
            )));
        }
        let resolvable: Vec<f64> = doc
            .modes
            .iter()
            .filter(|m| matches!(m.family, ModeFamily::Longitudinal | ModeFamily::Transverse))
            .filter_map(|m| m.kappa_int_hz)
            .collect();
        let fallback_kappa_int = if resolvable.is_empty() {
            None
        } else {
            Some(resolvable.iter().sum::<f64>() / resolvable.len() as f64)
        };
        let mut modes = Vec::with_capacity(doc.modes.len());
        for m in doc.modes {
            let kappa_int_hz = match m.kappa_int_hz {
                Some(k) => k,
                None => fallback_kappa_int.ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "mode {}: kappa_int_hz omitted and no resolvable modes to average",
                        m.label
                    ))
                })?,
            };
            modes.push(BareMode {
                label: m.label,
                omega: units::hz(m.omega_hz),
                kappa_int: units::hz(kappa_int_hz),
                kappa_ext: units::hz(m.kappa_ext_hz),
                g: units::hz(m.g_hz),
                family: m.family,
            });
        }
        let device = DeviceModel {
            ancilla: Ancilla {
                omega: units::hz(doc.ancilla.omega_hz),
                chi: units::hz(doc.ancilla.chi_hz),
                kappa: units::hz(doc.ancilla.kappa_hz),
                kappa_ext: units::hz(doc.ancilla.kappa_ext_hz),
            },
            modes,
            flux_map: doc.flux_map.map(|fm| FluxMap {
                omega_max: units::hz(fm.omega_max_hz),
                alpha: fm.alpha_rad_per_v,
                v0: fm.v0_v,
            }),
        };
        device.validate()?;
        Ok(device)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}
