//! Deterministic nonlinear least squares (Levenberg–Marquardt with
//! forward-difference Jacobians) plus small linear helpers.
//!
//! Every fitting protocol in the crate funnels through
//! [`levenberg_marquardt`]: the damping schedule, step sizes and stopping
//! rule are fixed, so a fit is a pure function of the residual callback and
//! the starting point. Convergence is declared when an accepted step
//! changes the loss by less than `loss_rel_tol` in relative terms (or when
//! the damping saturates with no downhill step left at machine scale).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Relative loss-change threshold for convergence.
    pub loss_rel_tol: f64,
    /// Relative forward-difference step for the Jacobian.
    pub jacobian_rel_step: f64,
    /// Typical magnitude per parameter, used to scale difference steps for
    /// parameters that sit at or near zero. Defaults to `|x0|` (or 1).
    pub param_scales: Option<DVector<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            loss_rel_tol: 1e-10,
            jacobian_rel_step: 1e-6,
            param_scales: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub params: DVector<f64>,
    /// Final sum of squared residuals.
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Loss after every accepted step (starting with the initial loss).
    pub loss_trace: Vec<f64>,
    /// `sigma^2 (J^T J)^{-1}` at the solution, when it exists.
    pub covariance: Option<DMatrix<f64>>,
}

const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_UP: f64 = 4.0;
const LAMBDA_DOWN: f64 = 3.0;
const LAMBDA_MAX: f64 = 1e12;
const LAMBDA_MIN: f64 = 1e-14;

/// Minimize `|f(x)|^2` starting from `x0`.
pub fn levenberg_marquardt<F>(f: F, x0: &DVector<f64>, opts: &FitOptions) -> Result<FitReport>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidInput("no free parameters".into()));
    }
    let scales: DVector<f64> = match &opts.param_scales {
        Some(s) => {
            if s.len() != n {
                return Err(Error::InvalidInput(format!(
                    "param_scales has length {}, expected {n}",
                    s.len()
                )));
            }
            s.map(|v| v.abs().max(1e-300))
        }
        None => x0.map(|v| if v.abs() > 0.0 { v.abs() } else { 1.0 }),
    };

    let mut x = x0.clone();
    let mut r = f(&x);
    let m = r.len();
    if m == 0 {
        return Err(Error::InvalidInput("residual vector is empty".into()));
    }
    let mut loss = r.norm_squared();
    if !loss.is_finite() {
        return Err(Error::InvalidInput(
            "residual is not finite at the starting point".into(),
        ));
    }

    let mut lambda = LAMBDA_INIT;
    let mut trace = vec![loss];
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = DMatrix::zeros(m, n);

    while iterations < opts.max_iterations && !converged {
        iterations += 1;

        for j in 0..n {
            let h = opts.jacobian_rel_step * x[j].abs().max(scales[j]);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = f(&xp);
            for i in 0..m {
                jac[(i, j)] = (rp[i] - r[i]) / h;
            }
        }
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &r;
        let diag_floor = jtj.diagonal().max() * 1e-14 + 1e-300;

        // Inner loop: raise damping until a step is accepted or damping
        // saturates.
        loop {
            let mut a = jtj.clone();
            for j in 0..n {
                a[(j, j)] += lambda * jtj[(j, j)].max(diag_floor);
            }
            let step = a.clone().lu().solve(&(-&jtr));
            let accepted = match step {
                Some(dx) => {
                    let xt = &x + &dx;
                    let rt = f(&xt);
                    let lt = rt.norm_squared();
                    if lt.is_finite() && lt < loss {
                        let rel_change = (loss - lt) / loss.max(f64::MIN_POSITIVE);
                        x = xt;
                        r = rt;
                        loss = lt;
                        trace.push(loss);
                        lambda = (lambda / LAMBDA_DOWN).max(LAMBDA_MIN);
                        if rel_change < opts.loss_rel_tol {
                            converged = true;
                        }
                        true
                    } else {
                        false
                    }
                }
                None => false,
            };
            if accepted {
                break;
            }
            lambda *= LAMBDA_UP;
            if lambda > LAMBDA_MAX {
                // No downhill step exists at machine scale: the loss cannot
                // be improved further, which is as converged as it gets.
                converged = true;
                break;
            }
        }
    }

    let covariance = if m > n {
        let sigma2 = loss / (m - n) as f64;
        let jtj = jac.transpose() * &jac;
        jtj.try_inverse().map(|inv| inv * sigma2)
    } else {
        None
    };

    Ok(FitReport { params: x, loss, iterations, converged, loss_trace: trace, covariance })
}

/// Ordinary least squares for `y = slope * x + intercept`.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// One-sigma uncertainties estimated from the residual variance.
    pub slope_sigma: f64,
    pub intercept_sigma: f64,
    pub residual_rms: f64,
}

pub fn ols_line(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return Err(Error::InvalidInput(format!(
            "line fit needs >= 3 paired samples, got {n} xs / {} ys",
            ys.len()
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::InvalidInput("line fit abscissa is degenerate".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let sigma2 = ss_res / (nf - 2.0);
    Ok(LinearFit {
        slope,
        intercept,
        slope_sigma: (sigma2 / sxx).sqrt(),
        intercept_sigma: (sigma2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        residual_rms: (ss_res / nf).sqrt(),
    })
}

/// Weighted least squares through the origin, `y = slope * x`; returns the
/// slope and its one-sigma uncertainty from the weighted residual variance.
pub fn wls_through_origin(xs: &[f64], ys: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    let n = xs.len();
    if n != ys.len() || n != weights.len() || n < 2 {
        return Err(Error::InvalidInput(
            "origin fit needs >= 2 samples with matching weights".into(),
        ));
    }
    let sxx: f64 = xs.iter().zip(weights).map(|(x, w)| w * x * x).sum();
    if sxx <= 0.0 {
        return Err(Error::IllConditioned("origin fit has zero weighted abscissa power".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).zip(weights).map(|((x, y), w)| w * x * y).sum();
    let slope = sxy / sxx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .zip(weights)
        .map(|((x, y), w)| w * (y - slope * x).powi(2))
        .sum();
    let sigma = (ss_res / (n as f64 - 1.0) / sxx).sqrt();
    Ok((slope, sigma))
}
