//! Ready-made device fixtures.
//!
//! [`reference_device`] is a full-size stand-in for the class of devices
//! this crate models: a 29-mode surface-acoustic-wave cavity whose comb
//! alternates strongly coupled longitudinal modes (~3.8 MHz coupling,
//! ~8.6 MHz free spectral range) and weakly coupled transverse modes
//! (~1.4 MHz, offset ~1.9 MHz above their longitudinal neighbor), plus a
//! flux-tunable Kerr ancilla. Three comb positions carry no coupling at
//! all, eleven are dark from the measurement port. Tests, benchmarks and
//! the demo configs all run against this fixture so numbers stay
//! comparable across the crate.

use crate::model::{Ancilla, BareMode, DeviceModel, FluxMap, ModeFamily};
use crate::units::hz;

/// Longitudinal comb start (Hz) and free spectral range (Hz).
const LONG_START_HZ: f64 = 3.930e9;
const LONG_FSR_HZ: f64 = 8.6e6;

/// Per-longitudinal-mode parameters, comb order (b1, b3, ..., b29):
/// (transverse offset above this mode in MHz, g in MHz, kappa_ext in kHz,
/// dark from the measurement port).
const LONG_TABLE: [(f64, f64, f64, bool); 15] = [
    (1.9, 3.3, 0.0, true),   // b1  (band edge, unresolved)
    (2.1, 4.1, 6.0, false),  // b3
    (1.7, 3.6, 12.0, false), // b5
    (1.9, 2.7, 22.0, false), // b7
    (2.0, 0.0, 30.0, false), // b9  (uncoupled comb position)
    (1.9, 4.2, 40.0, false), // b11 (strongest external coupling)
    (2.1, 3.8, 35.0, false), // b13
    (1.8, 4.0, 26.0, false), // b15
    (1.9, 3.9, 18.0, false), // b17
    (2.0, 4.0, 11.0, false), // b19
    (2.1, 3.6, 0.0, true),   // b21 (weakly coupled to the launcher)
    (1.9, 3.9, 6.0, false),  // b23
    (2.0, 3.7, 4.0, false),  // b25
    (1.7, 3.7, 0.0, true),   // b27
    (1.6, 3.6, 3.0, false),  // b29
];

/// Per-transverse-mode parameters, comb order (b2, b4, ..., b28):
/// (g in MHz, kappa_ext in kHz, dark).
const TRANS_TABLE: [(f64, f64, bool); 14] = [
    (1.2, 0.0, true),   // b2
    (1.5, 0.0, true),   // b4
    (1.3, 0.0, true),   // b6
    (1.6, 3.0, false),  // b8
    (0.0, 3.0, false),  // b10 (uncoupled comb position)
    (1.4, 3.0, false),  // b12
    (1.85, 3.0, false), // b14
    (1.2, 0.0, true),   // b16
    (1.3, 3.0, false),  // b18
    (1.45, 0.0, true),  // b20
    (1.2, 3.0, false),  // b22
    (0.0, 0.0, true),   // b24 (uncoupled and unresolved)
    (1.15, 0.0, true),  // b26
    (1.4, 0.0, true),   // b28
];

/// Internal dissipation per family, kHz. Dark modes get the family-average
/// total rate as internal dissipation, following the convention of
/// assigning unresolved modes the mean of their resolved siblings.
const KAPPA_INT_LONG_KHZ: f64 = 80.0;
const KAPPA_INT_TRANS_KHZ: f64 = 315.0;
const KAPPA_DARK_LONG_KHZ: f64 = 95.0;
const KAPPA_DARK_TRANS_KHZ: f64 = 326.0;

/// Full-size 29-mode reference device.
pub fn reference_device() -> DeviceModel {
    let mut modes = Vec::with_capacity(29);
    for (k, &(toff_mhz, g_mhz, kext_khz, dark)) in LONG_TABLE.iter().enumerate() {
        let omega_long_hz = LONG_START_HZ + LONG_FSR_HZ * k as f64;
        let (kappa_int_khz, family) = if dark {
            (KAPPA_DARK_LONG_KHZ, ModeFamily::Dark)
        } else {
            (KAPPA_INT_LONG_KHZ, ModeFamily::Longitudinal)
        };
        modes.push(BareMode {
            label: format!("b{:02}", 2 * k + 1),
            omega: hz(omega_long_hz),
            kappa_int: hz(kappa_int_khz * 1e3),
            kappa_ext: hz(if dark { 0.0 } else { kext_khz * 1e3 }),
            g: hz(g_mhz * 1e6),
            family,
        });
        if k < TRANS_TABLE.len() {
            let (g_t_mhz, kext_t_khz, dark_t) = TRANS_TABLE[k];
            let (kappa_int_t_khz, family_t) = if dark_t {
                (KAPPA_DARK_TRANS_KHZ, ModeFamily::Dark)
            } else {
                (KAPPA_INT_TRANS_KHZ, ModeFamily::Transverse)
            };
            modes.push(BareMode {
                label: format!("b{:02}", 2 * k + 2),
                omega: hz(omega_long_hz + toff_mhz * 1e6),
                kappa_int: hz(kappa_int_t_khz * 1e3),
                kappa_ext: hz(if dark_t { 0.0 } else { kext_t_khz * 1e3 }),
                g: hz(g_t_mhz * 1e6),
                family: family_t,
            });
        }
    }
    modes.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    DeviceModel {
        ancilla: Ancilla {
            omega: hz(4.2e9),
            chi: -hz(0.57e6),
            kappa: hz(8.8e6),
            kappa_ext: hz(5.0e6),
        },
        modes,
        flux_map: Some(FluxMap { omega_max: hz(4.7095e9), alpha: 1.0852, v0: 0.0395 }),
    }
}

/// Cut-down version of [`reference_device`]: the `n` lowest comb positions
/// only, for quick tests and round-trip fits at desk scale.
pub fn reference_device_truncated(n: usize) -> DeviceModel {
    let mut d = reference_device();
    d.modes.truncate(n);
    d
}

/// Idealized comb for design studies: `n` identical acoustic modes with
/// uniform spacing centered on `center_hz`, plus a strongly nonlinear
/// ancilla. All inputs in plain Hz; `chi_tr_hz` carries its sign.
pub fn uniform_comb_device(
    n: usize,
    center_hz: f64,
    fsr_hz: f64,
    g_hz: f64,
    kappa_hz: f64,
    chi_tr_hz: f64,
    kappa_tr_hz: f64,
) -> DeviceModel {
    let lowest = center_hz - fsr_hz * (n as f64 - 1.0) / 2.0;
    let modes = (0..n)
        .map(|i| BareMode {
            label: format!("m{}", i + 1),
            omega: hz(lowest + fsr_hz * i as f64),
            kappa_int: hz(kappa_hz),
            kappa_ext: 0.0,
            g: hz(g_hz),
            family: ModeFamily::Longitudinal,
        })
        .collect();
    DeviceModel {
        ancilla: Ancilla {
            omega: hz(center_hz),
            chi: hz(chi_tr_hz),
            kappa: hz(kappa_tr_hz),
            kappa_ext: 0.0,
        },
        modes,
        flux_map: None,
    }
}
