//! Normal-mode decomposition of the coupled quadratic model.
//!
//! Two routes to the hybrid modes:
//!
//! - [`diagonalize_rwa`] diagonalizes the excitation-conserving arrowhead
//!   matrix directly (real symmetric eigenproblem). This is the workhorse
//!   for sweeps, participation ratios and fits.
//! - [`diagonalize_symplectic`] keeps the pair-creation block and performs
//!   the full bosonic Bogoliubov transformation, i.e. finds real `u`, `v`
//!   with `a_k = sum_j u_kj c_j + v_kj c_j^dag` such that the quadratic
//!   form is diagonal and commutators are preserved. It uses the standard
//!   Cholesky route: factor the (positive definite) coefficient matrix
//!   `M = K^T K`, diagonalize `K Omega K^T` with `Omega = diag(+1, -1)`
//!   blocks, and assemble the transformation from the positive-frequency
//!   branch. Only stable, nondegenerate spectra are accepted.
//!
//! On top of the spectra sit the derived quantities: participation ratios
//! via eigenvalue derivatives ([`participation_by_derivative`], which by
//! the Hellmann–Feynman argument must agree with the squared ancilla row
//! of `u`), inherited dissipation ([`hybrid_dissipation`]), the hybrid
//! Kerr matrix ([`hybrid_kerr`]) and overlap-based branch tracking across
//! tuning steps ([`track_modes`], [`sweep_rwa`]).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{build_rwa_matrix, DeviceModel, QuadraticForm};
use crate::par::par_map;

/// Default tuning step for participation derivatives: 2π · 10 kHz.
pub const DEFAULT_PARTICIPATION_STEP: f64 = 2.0 * std::f64::consts::PI * 1.0e4;

/// Relative tolerance below which two positive normal-mode frequencies are
/// treated as degenerate by the symplectic route.
const DEGENERACY_REL_TOL: f64 = 1e-6;

/// Max allowed relative asymmetry of an input matrix.
const SYMMETRY_REL_TOL: f64 = 1e-9;

/// Max allowed residual of the symplectic condition `Q Omega Q^T = Omega`.
const SYMPLECTIC_RESIDUAL_TOL: f64 = 1e-9;

/// Hybrid normal modes of one tuning point.
///
/// Frequencies ascend; column `j` of `u` (and `v`, when present) holds the
/// transformation coefficients of hybrid mode `j`, with row 0 the ancilla
/// and row `i >= 1` bare mode `i-1`. `v` is `None` for the
/// excitation-conserving route. `mode_order[j]` is the persistent label
/// index of column `j` once the spectrum has been relabeled by tracking;
/// for a standalone diagonalization it is the identity.
#[derive(Debug, Clone)]
pub struct HybridSpectrum {
    pub omegas: DVector<f64>,
    pub u: DMatrix<f64>,
    pub v: Option<DMatrix<f64>>,
    pub mode_order: Vec<usize>,
}

impl HybridSpectrum {
    pub fn n_modes(&self) -> usize {
        self.omegas.len()
    }

    /// Ancilla participation `|u_0j|^2` per hybrid mode, in column order.
    pub fn participation(&self) -> Vec<f64> {
        (0..self.n_modes()).map(|j| self.u[(0, j)].powi(2)).collect()
    }

    /// Column index currently carrying tracked label `label`.
    pub fn column_of_label(&self, label: usize) -> Option<usize> {
        self.mode_order.iter().position(|&l| l == label)
    }
}

/// Diagonalize the excitation-conserving arrowhead matrix `t`.
///
/// `t` must be symmetric to 1e-9 relative. Eigenvalues come back ascending;
/// eigenvector signs are fixed so the largest-magnitude entry of each
/// column is positive.
pub fn diagonalize_rwa(t: &DMatrix<f64>) -> Result<HybridSpectrum> {
    let scale = t.abs().max();
    let max_asym = (t - t.transpose()).abs().max();
    if scale > 0.0 && max_asym > SYMMETRY_REL_TOL * scale {
        return Err(Error::NotSymmetric { max_asym: max_asym / scale });
    }
    let eig = t.clone().symmetric_eigen();
    let n = t.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let omegas = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut u = DMatrix::zeros(n, n);
    for (j, &k) in order.iter().enumerate() {
        u.set_column(j, &eig.eigenvectors.column(k));
    }
    fix_column_signs(&mut u, None);
    Ok(HybridSpectrum { omegas, u, v: None, mode_order: (0..n).collect() })
}

/// Full Bogoliubov diagonalization of the quadratic form `(t, u)`.
///
/// Returns the positive-frequency branch: ascending frequencies and the
/// real `(u, v)` blocks of the symplectic transformation
/// `Q = [[u, v], [v, u]]`, which satisfies `Q Omega Q^T = Omega` with
/// `Omega = diag(+1..+1, -1..-1)`.
///
/// Errors if the form is not symmetric, not positive definite (dynamical
/// instability), or if the positive branch has a zero or degenerate
/// frequency within 1e-6 relative.
pub fn diagonalize_symplectic(form: &QuadraticForm) -> Result<HybridSpectrum> {
    let n = form.t.nrows();
    if form.u.nrows() != n || !form.t.is_square() || !form.u.is_square() {
        return Err(Error::InvalidInput("quadratic form blocks must be square and same size".into()));
    }
    let scale0 = form.t.abs().max();
    for m in [&form.t, &form.u] {
        let max_asym = (m - m.transpose()).abs().max();
        if scale0 > 0.0 && max_asym > SYMMETRY_REL_TOL * scale0 {
            return Err(Error::NotSymmetric { max_asym: max_asym / scale0 });
        }
    }

    // Assemble M = [[T, U], [U, T]] / scale. Scaling keeps the Cholesky and
    // eigen solves near unit magnitude; the transformation Q is invariant.
    let scale = form.t.diagonal().amax().max(f64::MIN_POSITIVE);
    let dim = 2 * n;
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            let tij = form.t[(i, j)] / scale;
            let uij = form.u[(i, j)] / scale;
            m[(i, j)] = tij;
            m[(n + i, n + j)] = tij;
            m[(i, n + j)] = uij;
            m[(n + i, j)] = uij;
        }
    }

    let chol = m.clone().cholesky().ok_or_else(|| {
        Error::Unstable("coefficient matrix is not positive definite".into())
    })?;
    // M = K^T K with K = L^T; build A = K Omega K^T = L^T Omega L.
    let l = chol.l();
    let mut omega_l = l.clone(); // Omega * L, i.e. negate the lower block rows
    for i in n..dim {
        for j in 0..dim {
            omega_l[(i, j)] = -omega_l[(i, j)];
        }
    }
    let a = l.transpose() * omega_l;
    let eig = a.symmetric_eigen();

    // Positive branch, ascending.
    let mut pos: Vec<usize> = (0..dim).filter(|&k| eig.eigenvalues[k] > 0.0).collect();
    if pos.len() != n {
        return Err(Error::Unstable(format!(
            "positive-frequency branch has {} modes, expected {n}",
            pos.len()
        )));
    }
    pos.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]));
    let lam_max = eig.eigenvalues[pos[n - 1]];
    for w in 0..n {
        let lam = eig.eigenvalues[pos[w]];
        if lam <= DEGENERACY_REL_TOL * lam_max {
            return Err(Error::Unstable(format!(
                "normal-mode frequency {:.6e} rad/s at index {w} is zero within tolerance",
                lam * scale
            )));
        }
        if w > 0 {
            let prev = eig.eigenvalues[pos[w - 1]];
            if (lam - prev) <= DEGENERACY_REL_TOL * lam {
                return Err(Error::DegenerateSpectrum {
                    i: w - 1,
                    j: w,
                    a: prev * scale,
                    b: lam * scale,
                });
            }
        }
    }

    // T_pos = K^{-1} W E^{1/2}: solve the triangular system per column.
    let mut we = DMatrix::zeros(dim, n);
    for (j, &k) in pos.iter().enumerate() {
        let sqrt_e = eig.eigenvalues[k].sqrt();
        for i in 0..dim {
            we[(i, j)] = eig.eigenvectors[(i, k)] * sqrt_e;
        }
    }
    let t_pos = l
        .transpose()
        .solve_upper_triangular(&we)
        .ok_or_else(|| Error::Unstable("triangular back-substitution failed".into()))?;

    let mut u_block = t_pos.rows(0, n).into_owned();
    let mut v_block = t_pos.rows(n, n).into_owned();
    fix_column_signs(&mut u_block, Some(&mut v_block));

    // Verify the symplectic condition on the assembled Q.
    let resid = symplectic_residual(&u_block, &v_block);
    if resid > SYMPLECTIC_RESIDUAL_TOL {
        return Err(Error::Unstable(format!(
            "symplectic condition violated: residual {resid:.3e}"
        )));
    }

    let omegas = DVector::from_iterator(n, pos.iter().map(|&k| eig.eigenvalues[k] * scale));
    Ok(HybridSpectrum { omegas, u: u_block, v: Some(v_block), mode_order: (0..n).collect() })
}

/// Max-norm residual of `Q Omega Q^T - Omega` for `Q = [[u, v], [v, u]]`.
pub fn symplectic_residual(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let uu = u * u.transpose();
    let vv = v * v.transpose();
    let uv = u * v.transpose();
    let vu = v * u.transpose();
    let n = u.nrows();
    let mut resid: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            resid = resid.max((uu[(i, j)] - vv[(i, j)] - id).abs());
            resid = resid.max((uv[(i, j)] - vu[(i, j)]).abs());
        }
    }
    resid
}

/// Fix eigenvector signs: the largest-magnitude entry of each `u` column is
/// made positive (the matching `v` column flips with it).
fn fix_column_signs(u: &mut DMatrix<f64>, mut v: Option<&mut DMatrix<f64>>) {
    let (n, cols) = (u.nrows(), u.ncols());
    for j in 0..cols {
        let mut imax = 0;
        for i in 1..n {
            if u[(i, j)].abs() > u[(imax, j)].abs() {
                imax = i;
            }
        }
        if u[(imax, j)] < 0.0 {
            for i in 0..n {
                u[(i, j)] = -u[(i, j)];
            }
            if let Some(vm) = v.as_deref_mut() {
                for i in 0..n {
                    vm[(i, j)] = -vm[(i, j)];
                }
            }
        }
    }
}

/// Ancilla participation per hybrid mode from the tuning derivative of the
/// eigenfrequencies (central difference with branch tracking across the
/// step). By the Hellmann–Feynman theorem this equals `|u_0j|^2`.
///
/// `step` defaults to [`DEFAULT_PARTICIPATION_STEP`]. Entries come back in
/// the eigenvalue order of the center point and sum to 1 up to rounding
/// (the trace of the arrowhead is linear in the ancilla frequency).
pub fn participation_by_derivative(
    device: &DeviceModel,
    omega_sq: f64,
    step: Option<f64>,
) -> Result<Vec<f64>> {
    let h = step.unwrap_or(DEFAULT_PARTICIPATION_STEP);
    if !(h > 0.0) {
        return Err(Error::InvalidInput("participation step must be positive".into()));
    }
    let center = diagonalize_rwa(&build_rwa_matrix(device, omega_sq))?;
    let minus = diagonalize_rwa(&build_rwa_matrix(device, omega_sq - h))?;
    let plus = diagonalize_rwa(&build_rwa_matrix(device, omega_sq + h))?;
    let to_minus = track_modes(&center, &minus)?;
    let to_plus = track_modes(&center, &plus)?;
    for m in [&to_minus, &to_plus] {
        if let Some(&branch) = m.low_overlap.first() {
            return Err(Error::Tracking { branch, overlap: m.overlaps[branch] });
        }
    }
    Ok((0..center.n_modes())
        .map(|k| {
            (plus.omegas[to_plus.permutation[k]] - minus.omegas[to_minus.permutation[k]]) / (2.0 * h)
        })
        .collect())
}

/// Hybrid dissipation rates: each mode inherits the bare rates weighted by
/// its composition, `kappa_j = |u_0j|^2 kappa_ancilla + sum_i |u_ij|^2 kappa_i`.
pub fn hybrid_dissipation(
    spectrum: &HybridSpectrum,
    kappa_ancilla: f64,
    mode_kappas: &DVector<f64>,
) -> Result<DVector<f64>> {
    let n = spectrum.n_modes();
    if mode_kappas.len() != n - 1 {
        return Err(Error::InvalidInput(format!(
            "expected {} bare mode rates, got {}",
            n - 1,
            mode_kappas.len()
        )));
    }
    Ok(DVector::from_iterator(
        n,
        (0..n).map(|j| {
            let mut k = spectrum.u[(0, j)].powi(2) * kappa_ancilla;
            for i in 1..n {
                k += spectrum.u[(i, j)].powi(2) * mode_kappas[i - 1];
            }
            k
        }),
    ))
}

/// Hybrid Kerr matrix inherited from the ancilla's bare self-Kerr.
///
/// With quadrature weights `w_j = u_0j - v_0j` (`v = 0` for the
/// excitation-conserving route), the self-Kerr of mode `j` is
/// `chi w_j^4` and the cross-Kerr between distinct modes
/// `2 chi w_i^2 w_j^2`; every entry carries the sign of the bare `chi` and
/// the off-diagonal entries satisfy `chi_ij^2 = 4 chi_ii chi_jj`.
#[derive(Debug, Clone)]
pub struct KerrMatrix {
    pub chi: DMatrix<f64>,
}

impl KerrMatrix {
    /// Anharmonicity of hybrid mode `j`, reported as `2 chi_jj`.
    pub fn anharmonicity(&self, j: usize) -> f64 {
        2.0 * self.chi[(j, j)]
    }
}

pub fn hybrid_kerr(spectrum: &HybridSpectrum, chi_bare: f64) -> KerrMatrix {
    let n = spectrum.n_modes();
    let w2: Vec<f64> = (0..n)
        .map(|j| {
            let w = spectrum.u[(0, j)]
                - spectrum.v.as_ref().map_or(0.0, |v| v[(0, j)]);
            w * w
        })
        .collect();
    let mut chi = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            chi[(i, j)] = if i == j {
                chi_bare * w2[i] * w2[i]
            } else {
                2.0 * chi_bare * w2[i] * w2[j]
            };
        }
    }
    KerrMatrix { chi }
}

/// Result of matching the branches of two neighboring tuning points.
#[derive(Debug, Clone)]
pub struct ModeMatch {
    /// `permutation[k]` is the column of the *next* spectrum carrying the
    /// branch that was column `k` of the *previous* spectrum.
    pub permutation: Vec<usize>,
    /// Overlap achieved for each previous column.
    pub overlaps: Vec<f64>,
    /// Previous columns whose best overlap fell below 0.5 (branch identity
    /// uncertain, e.g. the step jumped across an entire avoided crossing).
    pub low_overlap: Vec<usize>,
    /// Assignments that were ambiguous within 1e-6 and were resolved by
    /// preferring the lower index.
    pub ambiguous: Vec<(usize, usize)>,
}

impl ModeMatch {
    /// Carry tracked labels through the match: entry `j` of the result is
    /// the label of next-column `j` given the previous column labels.
    pub fn relabel(&self, prev_order: &[usize]) -> Vec<usize> {
        let mut order = vec![0usize; prev_order.len()];
        for (k, &j) in self.permutation.iter().enumerate() {
            order[j] = prev_order[k];
        }
        order
    }
}

/// Tie-break window for greedy overlap assignment.
const TRACKING_TIE_TOL: f64 = 1e-6;

/// Match hybrid branches of `next` to those of `prev` by eigenvector
/// overlap (greedy on descending `|<u_prev | u_next>|`, conflicts resolved
/// in that order, exact ties broken toward the lower index with a logged
/// warning). Overlaps below 0.5 are flagged, not fatal.
pub fn track_modes(prev: &HybridSpectrum, next: &HybridSpectrum) -> Result<ModeMatch> {
    let n = prev.n_modes();
    if next.n_modes() != n {
        return Err(Error::InvalidInput(format!(
            "cannot track {} branches onto {}",
            n,
            next.n_modes()
        )));
    }
    let overlap = prev.u.transpose() * &next.u;
    let mut cands: Vec<(usize, usize, f64)> = Vec::with_capacity(n * n);
    for k in 0..n {
        for j in 0..n {
            cands.push((k, j, overlap[(k, j)].abs()));
        }
    }
    // Descending overlap; near-ties resolved deterministically by index.
    cands.sort_by(|a, b| {
        b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
    });

    let mut permutation = vec![usize::MAX; n];
    let mut overlaps = vec![0.0; n];
    let mut used_next = vec![false; n];
    let mut assigned = 0;
    let mut ambiguous = Vec::new();
    let mut idx = 0;
    while assigned < n && idx < cands.len() {
        let (k, j, o) = cands[idx];
        if permutation[k] == usize::MAX && !used_next[j] {
            // Peek for a competing assignment of equal merit.
            if let Some(&(k2, j2, o2)) = cands.get(idx + 1) {
                if (o - o2).abs() <= TRACKING_TIE_TOL
                    && ((k2 == k && !used_next[j2]) || (j2 == j && permutation[k2] == usize::MAX))
                    && (k2, j2) != (k, j)
                {
                    log::warn!(
                        "mode tracking tie at overlap {o:.6}: choosing ({k},{j}) over ({k2},{j2})"
                    );
                    ambiguous.push((k, j));
                }
            }
            permutation[k] = j;
            overlaps[k] = o;
            used_next[j] = true;
            assigned += 1;
        }
        idx += 1;
    }
    let low_overlap: Vec<usize> = (0..n).filter(|&k| overlaps[k] < 0.5).collect();
    for &k in &low_overlap {
        log::warn!(
            "mode tracking: branch {k} matched with overlap {:.3} < 0.5",
            overlaps[k]
        );
    }
    Ok(ModeMatch { permutation, overlaps, low_overlap, ambiguous })
}

/// One tracked tuning point of a sweep.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub omega_sq: f64,
    pub spectrum: HybridSpectrum,
}

/// Diagonalize the excitation-conserving model across a tuning grid and
/// relabel every point so `mode_order` follows branches continuously from
/// the first point (labels = eigenvalue order at the start).
///
/// Diagonalizations run per grid point (in parallel with the `parallel`
/// feature); the label propagation is a cheap sequential pass, so results
/// do not depend on the build.
pub fn sweep_rwa(device: &DeviceModel, omega_grid: &[f64]) -> Result<Vec<SweepPoint>> {
    if omega_grid.is_empty() {
        return Err(Error::InvalidInput("empty tuning grid".into()));
    }
    let spectra: Vec<Result<HybridSpectrum>> = par_map(omega_grid, |&w| {
        diagonalize_rwa(&build_rwa_matrix(device, w))
    });
    let mut points = Vec::with_capacity(omega_grid.len());
    for (i, s) in spectra.into_iter().enumerate() {
        let spectrum = s.map_err(|e| e.at_grid_point(i))?;
        points.push(SweepPoint { omega_sq: omega_grid[i], spectrum });
    }
    for i in 1..points.len() {
        let (a, b) = points.split_at_mut(i);
        let prev = &a[i - 1].spectrum;
        let next = &mut b[0].spectrum;
        let m = track_modes(prev, next).map_err(|e| e.at_grid_point(i))?;
        next.mode_order = m.relabel(&prev.mode_order);
    }
    Ok(points)
}
