//! Ancilla decay rate from hybrid linewidths.
//!
//! Each hybrid mode inherits dissipation from its constituents in
//! proportion to their weight in it. Subtracting the mechanical
//! contribution (bare linewidths are assumed known) leaves a residual
//! linear in the ancilla participation, and a weighted fit through the
//! origin of residual against participation yields the ancilla decay
//! rate with a scatter-based uncertainty.

use nalgebra::DVector;

use crate::bogoliubov::HybridSpectrum;
use crate::error::{Error, Result};
use crate::fitting::lsq::wls_through_origin;

/// One measured hybrid linewidth: tuning row, hybrid column, rate in
/// rad/s.
#[derive(Debug, Clone, Copy)]
pub struct KappaSample {
    pub tuning: usize,
    pub column: usize,
    pub kappa_obs: f64,
}

#[derive(Debug, Clone)]
pub struct KappaSqFit {
    /// Ancilla decay rate, rad/s.
    pub kappa_sq: f64,
    /// One-sigma uncertainty from the residual scatter, rad/s.
    pub sigma: f64,
    pub n_samples: usize,
    /// RMS of `kappa_obs` minus the model at the solution, rad/s.
    pub residual_rms: f64,
}

/// Fit the ancilla decay rate to linewidth samples.
///
/// `spectra[s.tuning]` must hold the hybrid decomposition the sample was
/// measured at, `bare_kappas` the known mechanical linewidths in mode
/// order. Needs at least ten samples; samples with only vanishing
/// ancilla participation cannot constrain the rate and participations
/// clustered to within 1% of full scale leave the slope degenerate with
/// an offset.
pub fn fit_kappa_sq(
    samples: &[KappaSample],
    spectra: &[HybridSpectrum],
    bare_kappas: &DVector<f64>,
) -> Result<KappaSqFit> {
    if samples.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "{} linewidth samples cannot support a rate fit (need 10)",
            samples.len()
        )));
    }
    let mut xs = Vec::with_capacity(samples.len());
    let mut ys = Vec::with_capacity(samples.len());
    for s in samples {
        let spec = spectra.get(s.tuning).ok_or_else(|| {
            Error::InvalidInput(format!("sample tuning index {} out of range", s.tuning))
        })?;
        let n = spec.n_modes();
        if s.column >= n {
            return Err(Error::InvalidInput(format!(
                "sample column {} out of range for {n} hybrid modes",
                s.column
            )));
        }
        if bare_kappas.len() != n - 1 {
            return Err(Error::InvalidInput(format!(
                "{} bare linewidths for {} mechanical modes",
                bare_kappas.len(),
                n - 1
            )));
        }
        if !s.kappa_obs.is_finite() || s.kappa_obs < 0.0 {
            return Err(Error::InvalidInput(format!(
                "observed linewidth {:.3e} is not physical",
                s.kappa_obs
            )));
        }
        let participation = spec.u[(0, s.column)].powi(2);
        let mechanical: f64 = (1..n)
            .map(|i| spec.u[(i, s.column)].powi(2) * bare_kappas[i - 1])
            .sum();
        xs.push(participation);
        ys.push(s.kappa_obs - mechanical);
    }
    let x_max = xs.iter().cloned().fold(f64::MIN, f64::max);
    let x_min = xs.iter().cloned().fold(f64::MAX, f64::min);
    if x_max < 1e-3 {
        return Err(Error::IllConditioned(
            "all samples have ancilla participation below 1e-3".into(),
        ));
    }
    if x_max - x_min < 0.01 {
        return Err(Error::InvalidInput(
            "participation spread below 0.01 cannot separate slope from offset".into(),
        ));
    }
    let weights = vec![1.0; xs.len()];
    let (kappa_sq, sigma) = wls_through_origin(&xs, &ys, &weights)?;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (y - kappa_sq * x).powi(2))
        .sum();
    Ok(KappaSqFit {
        kappa_sq,
        sigma,
        n_samples: xs.len(),
        residual_rms: (ss / xs.len() as f64).sqrt(),
    })
}
