//! Synthetic flux-sweep maps and their on-disk format.
//!
//! A sweep is a grid of complex scattering responses over a tuning axis
//! (coil voltage or bare ancilla frequency) and a probe-frequency axis. At
//! every tuning point the coupled system is diagonalized and the multimode
//! response is composed as the product of single-mode line shapes, one per
//! hybrid mode, each carrying the participation-weighted share of the
//! port's external coupling. Optional measurement noise is complex
//! Gaussian, i.i.d. per pixel, drawn from a per-row RNG substream so that
//! parallel and sequential generation produce identical maps.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Complex, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{diagonalize_rwa, hybrid_dissipation};
use crate::error::{Error, Result};
use crate::model::{build_rwa_matrix, flux_to_frequency, DeviceModel};
use crate::par::par_map_indexed;
use crate::scattering::{s21_notch, s33_reflection, LineShapeParams};
use crate::units;

/// Which scattering coefficient a sweep records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    /// Transmission past the ancilla feedline, notch configuration.
    S21,
    /// Reflection from the acoustic-port transducer.
    S33,
}

/// Kind tag for the tuning axis, used in serialized headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningKind {
    Voltage,
    OmegaSq,
}

/// The swept control variable: coil voltage (mapped through the device
/// tuning curve) or the bare ancilla frequency directly.
#[derive(Debug, Clone, PartialEq)]
pub enum TuningAxis {
    /// Coil voltages, V.
    Voltage(Vec<f64>),
    /// Bare ancilla frequencies, rad/s.
    OmegaSq(Vec<f64>),
}

impl TuningAxis {
    pub fn values(&self) -> &[f64] {
        match self {
            TuningAxis::Voltage(v) | TuningAxis::OmegaSq(v) => v,
        }
    }

    pub fn len(&self) -> usize {
        self.values().len()
    }

    pub fn is_empty(&self) -> bool {
        self.values().is_empty()
    }

    pub fn kind(&self) -> TuningKind {
        match self {
            TuningAxis::Voltage(_) => TuningKind::Voltage,
            TuningAxis::OmegaSq(_) => TuningKind::OmegaSq,
        }
    }
}

/// `xs` is finite and strictly monotone (either direction).
fn strictly_monotone(xs: &[f64]) -> bool {
    if xs.iter().any(|x| !x.is_finite()) {
        return false;
    }
    if xs.len() < 2 {
        return true;
    }
    let up = xs[1] > xs[0];
    xs.windows(2).all(|w| if up { w[1] > w[0] } else { w[1] < w[0] })
}

/// One measured or synthesized sweep map.
///
/// `response` is row-major: row `i` holds the trace at tuning point `i`
/// over all probe frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub tuning: TuningAxis,
    /// Probe frequencies, rad/s.
    pub probe: Vec<f64>,
    pub response: Vec<Complex<f64>>,
    pub port: Port,
    /// Probe power at the source, dBm.
    pub power_dbm: f64,
    /// Line attenuation magnitude, dB.
    pub attenuation_db: f64,
    /// Noise seed the map was generated with (0 for measured data).
    pub seed: u64,
}

impl SweepGrid {
    pub fn n_rows(&self) -> usize {
        self.tuning.len()
    }

    pub fn n_cols(&self) -> usize {
        self.probe.len()
    }

    /// Response at tuning row `i`, probe column `k`.
    pub fn at(&self, i: usize, k: usize) -> Complex<f64> {
        self.response[i * self.probe.len() + k]
    }

    /// Full trace at tuning row `i`.
    pub fn row(&self, i: usize) -> &[Complex<f64>] {
        &self.response[i * self.probe.len()..(i + 1) * self.probe.len()]
    }

    /// Check axis monotonicity, dimension consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        if self.tuning.is_empty() || self.probe.is_empty() {
            return Err(Error::InvalidInput("sweep axes must be nonempty".into()));
        }
        if !strictly_monotone(self.tuning.values()) {
            return Err(Error::InvalidInput(
                "tuning axis must be finite and strictly monotone".into(),
            ));
        }
        if !strictly_monotone(&self.probe) {
            return Err(Error::InvalidInput(
                "probe axis must be finite and strictly monotone".into(),
            ));
        }
        if self.response.len() != self.tuning.len() * self.probe.len() {
            return Err(Error::InvalidInput(format!(
                "response has {} entries for a {} x {} grid",
                self.response.len(),
                self.tuning.len(),
                self.probe.len()
            )));
        }
        if self.response.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("response contains non-finite values".into()));
        }
        Ok(())
    }

    /// Serialize to the portable text format: one `#`-prefixed JSON header
    /// line, a column-header line, then one CSV record per pixel with the
    /// tuning value (V for a voltage axis, Hz otherwise), the probe
    /// frequency in Hz and the complex response.
    pub fn to_text(&self) -> Result<String> {
        self.validate()?;
        let header = TextHeader {
            schema: 1,
            port: self.port,
            tuning: self.tuning.kind(),
            power_dbm: self.power_dbm,
            attenuation_db: self.attenuation_db,
            seed: self.seed,
            rows: self.n_rows(),
            cols: self.n_cols(),
        };
        let mut out = String::new();
        out.push_str("# ");
        out.push_str(&serde_json::to_string(&header)?);
        out.push_str("\ntuning,probe_hz,re,im\n");
        for (i, &t) in self.tuning.values().iter().enumerate() {
            let t_col = match self.tuning.kind() {
                TuningKind::Voltage => t,
                TuningKind::OmegaSq => units::to_hz(t),
            };
            for (k, &w) in self.probe.iter().enumerate() {
                let z = self.at(i, k);
                // `{:?}` prints the shortest representation that parses
                // back to the same f64.
                writeln!(out, "{:?},{:?},{:?},{:?}", t_col, units::to_hz(w), z.re, z.im)
                    .expect("string write cannot fail");
            }
        }
        Ok(out)
    }

    /// Parse the portable text format written by [`SweepGrid::to_text`].
    pub fn from_text(s: &str) -> Result<Self> {
        let mut lines = s.lines();
        let header_line = lines
            .next()
            .and_then(|l| l.strip_prefix("# "))
            .ok_or_else(|| Error::InvalidInput("missing `# {...}` header line".into()))?;
        let header: TextHeader = serde_json::from_str(header_line)?;
        if header.schema != 1 {
            return Err(Error::InvalidInput(format!(
                "unsupported sweep schema {}",
                header.schema
            )));
        }
        match lines.next() {
            Some("tuning,probe_hz,re,im") => {}
            other => {
                return Err(Error::InvalidInput(format!(
                    "bad column header line: {other:?}"
                )))
            }
        }
        let mut tuning = Vec::with_capacity(header.rows);
        let mut probe = Vec::with_capacity(header.cols);
        let mut response = Vec::with_capacity(header.rows * header.cols);
        for (li, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let mut next = |name: &str| -> Result<f64> {
                fields
                    .next()
                    .and_then(|f| f.trim().parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidInput(format!("record {li}: bad {name} field"))
                    })
            };
            let t = next("tuning")?;
            let w_hz = next("probe_hz")?;
            let re = next("re")?;
            let im = next("im")?;
            if li % header.cols == 0 {
                tuning.push(match header.tuning {
                    TuningKind::Voltage => t,
                    TuningKind::OmegaSq => units::hz(t),
                });
            }
            if li < header.cols {
                probe.push(units::hz(w_hz));
            }
            response.push(Complex::new(re, im));
        }
        if tuning.len() != header.rows || response.len() != header.rows * header.cols {
            return Err(Error::InvalidInput(format!(
                "body has {} records for a {} x {} grid",
                response.len(),
                header.rows,
                header.cols
            )));
        }
        let grid = SweepGrid {
            tuning: match header.tuning {
                TuningKind::Voltage => TuningAxis::Voltage(tuning),
                TuningKind::OmegaSq => TuningAxis::OmegaSq(tuning),
            },
            probe,
            response,
            port: header.port,
            power_dbm: header.power_dbm,
            attenuation_db: header.attenuation_db,
            seed: header.seed,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn save_text(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }

    pub fn load_text(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Serialize the whole grid as one JSON document.
    pub fn to_json_string(&self) -> Result<String> {
        self.validate()?;
        let doc = SweepGridDoc {
            schema: 1,
            port: self.port,
            tuning_kind: self.tuning.kind(),
            tuning: match self.tuning.kind() {
                TuningKind::Voltage => self.tuning.values().to_vec(),
                TuningKind::OmegaSq => {
                    self.tuning.values().iter().map(|&w| units::to_hz(w)).collect()
                }
            },
            probe_hz: self.probe.iter().map(|&w| units::to_hz(w)).collect(),
            power_dbm: self.power_dbm,
            attenuation_db: self.attenuation_db,
            seed: self.seed,
            response: self.response.iter().map(|z| [z.re, z.im]).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let doc: SweepGridDoc = serde_json::from_str(s)?;
        if doc.schema != 1 {
            return Err(Error::InvalidInput(format!("unsupported sweep schema {}", doc.schema)));
        }
        let grid = SweepGrid {
            tuning: match doc.tuning_kind {
                TuningKind::Voltage => TuningAxis::Voltage(doc.tuning),
                TuningKind::OmegaSq => {
                    TuningAxis::OmegaSq(doc.tuning.iter().map(|&f| units::hz(f)).collect())
                }
            },
            probe: doc.probe_hz.iter().map(|&f| units::hz(f)).collect(),
            response: doc.response.iter().map(|&[re, im]| Complex::new(re, im)).collect(),
            port: doc.port,
            power_dbm: doc.power_dbm,
            attenuation_db: doc.attenuation_db,
            seed: doc.seed,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct TextHeader {
    schema: u32,
    port: Port,
    tuning: TuningKind,
    power_dbm: f64,
    attenuation_db: f64,
    seed: u64,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct SweepGridDoc {
    schema: u32,
    port: Port,
    tuning_kind: TuningKind,
    /// V for a voltage axis, Hz for a frequency axis.
    tuning: Vec<f64>,
    probe_hz: Vec<f64>,
    power_dbm: f64,
    attenuation_db: f64,
    seed: u64,
    /// Row-major `[re, im]` pairs.
    response: Vec<[f64; 2]>,
}

/// Synthesize a sweep map of `device` over `tuning` x `probe`.
///
/// Per tuning point the coupled system is diagonalized in the
/// excitation-conserving approximation and the response is the product of
/// one line shape per hybrid mode `j` at its frequency and inherited total
/// rate, with the port coupling weighted by mode composition:
/// `|u_0j|^2` times the ancilla external rate for [`Port::S21`], the
/// composition-weighted sum of acoustic external rates for [`Port::S33`].
/// The Fano phase is zero; it exists to absorb backgrounds in measured
/// data. Gaussian noise of scale `noise_sigma` is added per quadrature
/// from a `(seed, row)` RNG substream, so the map is a pure function of
/// its arguments in both the parallel and sequential builds.
///
/// A voltage axis requires the device to carry a flux map.
/// Diagonalization failures are reported with the tuning row attached.
#[allow(clippy::too_many_arguments)]
pub fn synth_flux_sweep(
    device: &DeviceModel,
    tuning: &TuningAxis,
    probe: &[f64],
    port: Port,
    power_dbm: f64,
    attenuation_db: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<SweepGrid> {
    device.validate()?;
    if tuning.is_empty() || probe.is_empty() {
        return Err(Error::InvalidInput("sweep axes must be nonempty".into()));
    }
    if !strictly_monotone(tuning.values()) {
        return Err(Error::InvalidInput(
            "tuning axis must be finite and strictly monotone".into(),
        ));
    }
    if !strictly_monotone(probe) {
        return Err(Error::InvalidInput(
            "probe axis must be finite and strictly monotone".into(),
        ));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise sigma must be finite and nonnegative, got {noise_sigma:.3e}"
        )));
    }

    let omegas_sq: Vec<f64> = match tuning {
        TuningAxis::OmegaSq(ws) => ws.clone(),
        TuningAxis::Voltage(vs) => {
            let map = device.flux_map.as_ref().ok_or_else(|| {
                Error::InvalidInput("voltage axis needs a device flux map".into())
            })?;
            vs.iter().map(|&v| flux_to_frequency(map, v)).collect()
        }
    };

    let kappas = device.mode_kappas();
    let rows = par_map_indexed(&omegas_sq, |i, &omega_sq| {
        synth_row(device, &kappas, omega_sq, probe, port, noise_sigma, seed, i)
            .map_err(|e| e.at_grid_point(i))
    });

    let mut response = Vec::with_capacity(omegas_sq.len() * probe.len());
    for row in rows {
        response.extend(row?);
    }
    Ok(SweepGrid {
        tuning: tuning.clone(),
        probe: probe.to_vec(),
        response,
        port,
        power_dbm,
        attenuation_db,
        seed,
    })
}

/// One tuning row of the synthetic map.
#[allow(clippy::too_many_arguments)]
fn synth_row(
    device: &DeviceModel,
    kappas: &DVector<f64>,
    omega_sq: f64,
    probe: &[f64],
    port: Port,
    noise_sigma: f64,
    seed: u64,
    row: usize,
) -> Result<Vec<Complex<f64>>> {
    let spectrum = diagonalize_rwa(&build_rwa_matrix(device, omega_sq))?;
    let kappa_hybrid = hybrid_dissipation(&spectrum, device.ancilla.kappa, kappas)?;
    let n = spectrum.n_modes();
    let lines: Vec<LineShapeParams> = (0..n)
        .map(|j| {
            let kappa_c = match port {
                Port::S21 => spectrum.u[(0, j)].powi(2) * device.ancilla.kappa_ext,
                Port::S33 => (1..n)
                    .map(|i| spectrum.u[(i, j)].powi(2) * device.modes[i - 1].kappa_ext)
                    .sum(),
            };
            LineShapeParams {
                omega_r: spectrum.omegas[j],
                kappa_tot: kappa_hybrid[j],
                kappa_c,
                phi: 0.0,
            }
        })
        .collect();

    let one = Complex::new(1.0, 0.0);
    let mut out: Vec<Complex<f64>> = probe
        .iter()
        .map(|&omega| {
            lines.iter().fold(one, |acc, p| {
                acc * match port {
                    Port::S21 => s21_notch(omega, p),
                    Port::S33 => s33_reflection(omega, p),
                }
            })
        })
        .collect();

    if noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(row as u64);
        let normal = Normal::new(0.0, noise_sigma)
            .expect("validated sigma is a valid normal scale");
        for z in &mut out {
            let re = normal.sample(&mut rng);
            let im = normal.sample(&mut rng);
            *z += Complex::new(re, im);
        }
    }
    Ok(out)
}
