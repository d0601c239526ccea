//! Global fit of the linear coupled model to a map of extracted peaks.
//!
//! The free parameters are a caller-chosen subset of the bare couplings
//! and bare mode frequencies. The loss is built per tuning point: every
//! observed resonance is matched to the nearest eigenvalue of the coupled
//! matrix at that point and contributes its frequency difference, unless
//! the difference exceeds a rejection gate (spurious or edge resonances
//! then simply drop out). An optional second stage repeats the fit with
//! only the peaks inside a configurable sub-band, starting from the
//! first-stage solution.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fitting::lsq::{levenberg_marquardt, FitOptions, FitReport};
use crate::fitting::peaks::PeakSet;
use crate::model::{build_rwa_matrix, DeviceModel};
use crate::units;

/// Which per-mode parameters the fit may move.
#[derive(Debug, Clone)]
pub struct ParamMask {
    pub g: Vec<bool>,
    pub omega: Vec<bool>,
}

impl ParamMask {
    /// Everything fixed.
    pub fn none(n_modes: usize) -> Self {
        ParamMask { g: vec![false; n_modes], omega: vec![false; n_modes] }
    }

    /// All couplings free, frequencies fixed.
    pub fn all_g(n_modes: usize) -> Self {
        ParamMask { g: vec![true; n_modes], omega: vec![false; n_modes] }
    }

    pub fn n_free(&self) -> usize {
        self.g.iter().chain(&self.omega).filter(|&&b| b).count()
    }

    fn check(&self, n_modes: usize) -> Result<()> {
        if self.g.len() != n_modes || self.omega.len() != n_modes {
            return Err(Error::InvalidInput(format!(
                "mask covers {} / {} modes, device has {}",
                self.g.len(),
                self.omega.len(),
                n_modes
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MultimodeOptions {
    /// Second-stage band `(lo, hi)` in rad/s; `None` runs one stage.
    pub subband: Option<(f64, f64)>,
    /// Peak-to-eigenvalue rejection gate, rad/s; defaults to three times
    /// the median fitted linewidth of the peak set.
    pub match_gate: Option<f64>,
    /// Observations with a fitted total linewidth above this are left out
    /// of the fit. A branch much broader than the mechanical lines is
    /// dominated by the lossy tuning element; its center carries little
    /// mode-frequency information. `None` keeps everything.
    pub max_kappa: Option<f64>,
    /// Huber scale in rad/s. When set, matched residuals beyond this
    /// contribute linearly instead of quadratically (iteratively
    /// reweighted least squares), so a stray observation pulls on the
    /// parameters with bounded force. Pick it above the frequency scatter
    /// of clean extractions and below the typical offset of spurious
    /// ones. `None` keeps plain least squares.
    pub robust_delta: Option<f64>,
    /// Outlier cut as a multiple of the median absolute residual. When
    /// set, the stage ends with two trim-refit rounds: matched
    /// observations beyond the cut are dropped outright and the rest are
    /// refit at full weight. A Huber stage only bounds an outlier's pull;
    /// the trim removes it. `None` trims nothing.
    pub trim_mad: Option<f64>,
    pub fit: FitOptions,
}

impl Default for MultimodeOptions {
    fn default() -> Self {
        MultimodeOptions {
            subband: None,
            match_gate: None,
            max_kappa: None,
            robust_delta: None,
            trim_mad: None,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultimodeFitResult {
    /// Fitted (or passed-through) coupling per mode, rad/s.
    pub g: Vec<f64>,
    /// Fitted (or passed-through) bare frequency per mode, rad/s.
    pub omega: Vec<f64>,
    /// RMS of the matched frequency residuals over the full peak set at
    /// the solution, rad/s.
    pub residual_rms: f64,
    /// Matched observations at the solution.
    pub n_matched: usize,
    pub iterations: usize,
    /// Loss after every accepted optimizer step.
    pub loss_trace: Vec<f64>,
    pub covariance: Option<DMatrix<f64>>,
}

/// Starting-point helper: each free bare frequency is seeded midway
/// between its nearest fixed neighbors (extrapolated by the mean fixed
/// spacing at the edges), each free coupling at the mean nonzero coupling
/// of its mode family (falling back to the overall mean).
pub fn seed_hidden_modes(device: &DeviceModel, mask: &ParamMask) -> Result<DeviceModel> {
    mask.check(device.n_modes())?;
    let mut seeded = device.clone();
    let fixed: Vec<usize> =
        (0..device.n_modes()).filter(|&i| !mask.omega[i]).collect();
    if fixed.len() < 2 && mask.omega.iter().any(|&b| b) {
        return Err(Error::InvalidInput(
            "seeding hidden frequencies needs at least two fixed modes".into(),
        ));
    }
    let spacing = if fixed.len() >= 2 {
        (device.modes[fixed[fixed.len() - 1]].omega - device.modes[fixed[0]].omega)
            / (fixed[fixed.len() - 1] - fixed[0]) as f64
    } else {
        0.0
    };
    for i in 0..device.n_modes() {
        if !mask.omega[i] {
            continue;
        }
        let prev = fixed.iter().rev().find(|&&j| j < i);
        let next = fixed.iter().find(|&&j| j > i);
        seeded.modes[i].omega = match (prev, next) {
            (Some(&a), Some(&b)) => {
                let t = (i - a) as f64 / (b - a) as f64;
                device.modes[a].omega + t * (device.modes[b].omega - device.modes[a].omega)
            }
            (Some(&a), None) => device.modes[a].omega + spacing * (i - a) as f64,
            (None, Some(&b)) => device.modes[b].omega - spacing * (b - i) as f64,
            (None, None) => unreachable!("guarded by the fixed-mode count"),
        };
    }
    for i in 0..device.n_modes() {
        if !mask.g[i] {
            continue;
        }
        let family = device.modes[i].family;
        let of_family: Vec<f64> = (0..device.n_modes())
            .filter(|&j| !mask.g[j] && device.modes[j].family == family && device.modes[j].g > 0.0)
            .map(|j| device.modes[j].g)
            .collect();
        let any: Vec<f64> = (0..device.n_modes())
            .filter(|&j| !mask.g[j] && device.modes[j].g > 0.0)
            .map(|j| device.modes[j].g)
            .collect();
        let pool = if !of_family.is_empty() { &of_family } else { &any };
        seeded.modes[i].g = if pool.is_empty() {
            units::hz(1e6)
        } else {
            pool.iter().sum::<f64>() / pool.len() as f64
        };
    }
    Ok(seeded)
}

/// One observation: tuning row and observed resonance frequency.
type Obs = (usize, f64);

fn collect_obs(peaks: &PeakSet, band: Option<(f64, f64)>, max_kappa: Option<f64>) -> Vec<Obs> {
    let mut obs = Vec::new();
    for (t, entries) in peaks.entries.iter().enumerate() {
        for e in entries {
            // Flagged (non-converged) extractions carry their initial
            // guess, not a measurement; they stay out of the fit.
            if !e.converged {
                continue;
            }
            if max_kappa.is_some_and(|k| e.params.kappa_tot > k) {
                continue;
            }
            let w = e.params.omega_r;
            if band.is_none_or(|(lo, hi)| w >= lo && w <= hi) {
                obs.push((t, w));
            }
        }
    }
    obs
}

fn pack(device: &DeviceModel, mask: &ParamMask) -> DVector<f64> {
    let mut x = Vec::with_capacity(mask.n_free());
    for (i, &free) in mask.g.iter().enumerate() {
        if free {
            x.push(device.modes[i].g);
        }
    }
    for (i, &free) in mask.omega.iter().enumerate() {
        if free {
            x.push(device.modes[i].omega);
        }
    }
    DVector::from_vec(x)
}

fn unpack(x: &DVector<f64>, base: &DeviceModel, mask: &ParamMask) -> DeviceModel {
    let mut device = base.clone();
    let mut k = 0;
    for (i, &free) in mask.g.iter().enumerate() {
        if free {
            device.modes[i].g = x[k];
            k += 1;
        }
    }
    for (i, &free) in mask.omega.iter().enumerate() {
        if free {
            device.modes[i].omega = x[k];
            k += 1;
        }
    }
    device
}

/// Gated nearest-eigenvalue residuals of `device` against `obs`.
fn residuals(device: &DeviceModel, omega_sq: &[f64], obs: &[Obs], gate: f64) -> DVector<f64> {
    // One eigenvalue set per distinct tuning row, computed once.
    let mut eigs: Vec<Option<DVector<f64>>> = vec![None; omega_sq.len()];
    DVector::from_iterator(
        obs.len(),
        obs.iter().map(|&(t, w)| {
            let ev = eigs[t].get_or_insert_with(|| {
                build_rwa_matrix(device, omega_sq[t]).symmetric_eigenvalues()
            });
            let nearest = ev.iter().map(|&e| w - e).min_by(|a, b| a.abs().total_cmp(&b.abs()));
            match nearest {
                Some(d) if d.abs() <= gate => d,
                _ => 0.0,
            }
        }),
    )
}

/// Count of matched observations and their RMS at fixed parameters.
fn score(device: &DeviceModel, omega_sq: &[f64], obs: &[Obs], gate: f64) -> (usize, f64) {
    let r = residuals(device, omega_sq, obs, gate);
    let matched: Vec<f64> = obs
        .iter()
        .zip(r.iter())
        .filter(|&(&(t, w), &d)| {
            // A zero residual is a genuine match only if some eigenvalue
            // sits exactly there; re-check against the gate.
            d != 0.0 || {
                let ev = build_rwa_matrix(device, omega_sq[t]).symmetric_eigenvalues();
                ev.iter().any(|&e| (w - e).abs() <= gate && w == e)
            }
        })
        .map(|(_, &d)| d)
        .collect();
    if matched.is_empty() {
        return (0, 0.0);
    }
    let ss: f64 = matched.iter().map(|d| d * d).sum();
    (matched.len(), (ss / matched.len() as f64).sqrt())
}

/// Fit the free parameters of `known` to the peak map.
///
/// Needs at least three observations per free parameter. With an empty
/// mask no optimization runs and the result scores the known model as is.
/// Non-convergence within the iteration budget is an error; the accepted
/// per-step loss trace is logged before returning it.
pub fn fit_multimode(
    peaks: &PeakSet,
    known: &DeviceModel,
    mask: &ParamMask,
    opts: &MultimodeOptions,
) -> Result<MultimodeFitResult> {
    known.validate()?;
    mask.check(known.n_modes())?;
    if peaks.n_points() != peaks.entries.len() {
        return Err(Error::InvalidInput("peak set rows do not match its tuning axis".into()));
    }
    let gate = match opts.match_gate {
        Some(g) if g > 0.0 => g,
        Some(g) => {
            return Err(Error::InvalidInput(format!("match gate must be positive, got {g:.3e}")))
        }
        None => {
            let m = 3.0 * peaks.median_kappa();
            if m <= 0.0 {
                return Err(Error::InvalidInput(
                    "cannot derive a match gate from an empty peak set".into(),
                ));
            }
            m
        }
    };

    if let Some(k) = opts.max_kappa {
        if k <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "observation linewidth cutoff must be positive, got {k:.3e}"
            )));
        }
    }
    if let Some(d) = opts.robust_delta {
        if d <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "Huber scale must be positive, got {d:.3e}"
            )));
        }
    }
    if let Some(k) = opts.trim_mad {
        if k <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "trim multiplier must be positive, got {k:.3e}"
            )));
        }
    }
    let all_obs = collect_obs(peaks, None, opts.max_kappa);
    let n_free = mask.n_free();
    if all_obs.len() < 3 * n_free {
        return Err(Error::InvalidInput(format!(
            "{} observations cannot constrain {} free parameters (need 3x)",
            all_obs.len(),
            n_free
        )));
    }

    if n_free == 0 {
        let (n_matched, residual_rms) = score(known, &peaks.omega_sq, &all_obs, gate);
        return Ok(MultimodeFitResult {
            g: known.modes.iter().map(|m| m.g).collect(),
            omega: known.modes.iter().map(|m| m.omega).collect(),
            residual_rms,
            n_matched,
            iterations: 0,
            loss_trace: Vec::new(),
            covariance: None,
        });
    }

    let scales = {
        let mut s = Vec::with_capacity(n_free);
        for (i, &free) in mask.g.iter().enumerate() {
            if free {
                s.push(known.modes[i].g.abs().max(units::hz(0.5e6)));
            }
        }
        for &free in &mask.omega {
            if free {
                s.push(units::hz(1e6));
            }
        }
        DVector::from_vec(s)
    };
    let fit_opts = FitOptions { param_scales: Some(scales), ..opts.fit.clone() };

    // One stage is a Levenberg-Marquardt solve; with a Huber scale it is
    // wrapped in reweighting rounds, each restarting from the previous
    // solution with weights min(1, delta/|r|) frozen from its residuals,
    // until the weights stop moving. A trim multiplier appends two rounds
    // that zero-weight residuals beyond the cut and refit the rest plain.
    let run_stage = |obs: &[Obs], x0: &DVector<f64>| -> Result<FitReport> {
        let mut weights = vec![1.0f64; obs.len()];
        let mut x = x0.clone();
        let mut merged: Option<FitReport> = None;
        let solve = |weights: &[f64],
                     x: &DVector<f64>,
                     merged: &mut Option<FitReport>|
         -> Result<DVector<f64>> {
            let f = |x: &DVector<f64>| {
                let r = residuals(&unpack(x, known, mask), &peaks.omega_sq, obs, gate);
                DVector::from_iterator(
                    r.len(),
                    r.iter().zip(weights).map(|(&ri, &wi)| wi.sqrt() * ri),
                )
            };
            let rep = levenberg_marquardt(f, x, &fit_opts)?;
            *merged = Some(match merged.take() {
                None => rep.clone(),
                Some(prev) => FitReport {
                    iterations: prev.iterations + rep.iterations,
                    loss_trace: {
                        let mut t = prev.loss_trace;
                        t.extend(rep.loss_trace.iter().copied());
                        t
                    },
                    ..rep.clone()
                },
            });
            Ok(rep.params)
        };
        for _ in 0..8 {
            x = solve(&weights, &x, &mut merged)?;
            let Some(delta) = opts.robust_delta else { break };
            let r = residuals(&unpack(&x, known, mask), &peaks.omega_sq, obs, gate);
            let next: Vec<f64> = r
                .iter()
                .map(|&ri| if ri.abs() > delta { delta / ri.abs() } else { 1.0 })
                .collect();
            let moved =
                weights.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            weights = next;
            if moved < 1e-3 {
                break;
            }
        }
        if let Some(k) = opts.trim_mad {
            for _ in 0..2 {
                let r = residuals(&unpack(&x, known, mask), &peaks.omega_sq, obs, gate);
                let mut mags: Vec<f64> =
                    r.iter().map(|ri| ri.abs()).filter(|&a| a > 0.0).collect();
                if mags.is_empty() {
                    break;
                }
                mags.sort_by(f64::total_cmp);
                let mad = mags[mags.len() / 2];
                if mad <= 0.0 {
                    break;
                }
                let cut = k * mad;
                weights = r.iter().map(|&ri| if ri.abs() > cut { 0.0 } else { 1.0 }).collect();
                x = solve(&weights, &x, &mut merged)?;
            }
        }
        Ok(merged.expect("at least one optimizer round runs"))
    };

    let mut x = pack(known, mask);
    let coarse = run_stage(&all_obs, &x)?;
    x = coarse.params.clone();
    let mut iterations = coarse.iterations;
    let mut trace = coarse.loss_trace.clone();
    let mut covariance = coarse.covariance.clone();
    let mut converged = coarse.converged;

    if let Some((lo, hi)) = opts.subband {
        let band_obs = collect_obs(peaks, Some((lo.min(hi), lo.max(hi))), opts.max_kappa);
        if band_obs.len() < 3 * n_free {
            return Err(Error::InvalidInput(format!(
                "sub-band holds {} observations for {} free parameters (need 3x)",
                band_obs.len(),
                n_free
            )));
        }
        let refined = run_stage(&band_obs, &x)?;
        x = refined.params.clone();
        iterations += refined.iterations;
        trace.extend(refined.loss_trace);
        covariance = refined.covariance.clone();
        converged = refined.converged;
    }

    let fitted = unpack(&x, known, mask);
    let (n_matched, residual_rms) = score(&fitted, &peaks.omega_sq, &all_obs, gate);
    if !converged {
        log::warn!("multimode fit stopped without convergence; loss trace: {trace:?}");
        return Err(Error::NonConvergence { iterations, residual: residual_rms });
    }
    Ok(MultimodeFitResult {
        g: fitted.modes.iter().map(|m| m.g).collect(),
        omega: fitted.modes.iter().map(|m| m.omega).collect(),
        residual_rms,
        n_matched,
        iterations,
        loss_trace: trace,
        covariance,
    })
}
