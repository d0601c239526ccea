//! Exact diagonalization of the truncated nonlinear model.
//!
//! The linear theory in [`crate::bogoliubov`] treats the ancilla Kerr term
//! perturbatively; that breaks down once the anharmonicity is comparable to
//! the couplings. Here the ancilla plus `M` acoustic modes are each cut to
//! `d` levels and the resulting `d^(M+1)` Hamiltonian is diagonalized
//! exactly within the zero-, one- and two-excitation sectors, which is all
//! the transition (`ω̃_ge`) and anharmonicity (`2χ̃ = ω̃_gf − 2ω̃_ge`) data
//! needs. On top of that sits the acoustic-qubit design study: per hybrid
//! mode, an anharmonicity-to-decoherence ratio `η = 2|χ̃|/Γ₂` and a verdict.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::DeviceModel;
use crate::par::par_map_indexed;

/// Hard ceiling on the dense dimension unless overridden in [`TruncatedSystem::with_cap`].
pub const DEFAULT_DIMENSION_CAP: usize = 20_000;

/// Ancilla-weight ceiling for the `mechanical_qubit` verdict.
pub const MECHANICAL_PARTICIPATION_CAP: f64 = 0.20;

/// Default `η` threshold above which a hybrid mode counts as qubit-like.
pub const DEFAULT_ETA_THRESHOLD: f64 = 6.0;

/// A device restricted to `M` modes, every ring truncated to `levels` states.
#[derive(Debug, Clone)]
pub struct TruncatedSystem {
    pub device: DeviceModel,
    pub levels: usize,
    cap: usize,
}

impl TruncatedSystem {
    pub fn new(device: DeviceModel, levels: usize) -> Result<Self> {
        Self::with_cap(device, levels, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(device: DeviceModel, levels: usize, cap: usize) -> Result<Self> {
        device.validate()?;
        if levels < 3 {
            return Err(Error::InvalidInput(format!(
                "need at least 3 levels per mode for anharmonicities, got {levels}"
            )));
        }
        let rings = device.n_modes() + 1;
        let dim = levels
            .checked_pow(rings as u32)
            .ok_or(Error::DimensionCap { dim: usize::MAX, cap })?;
        if dim > cap {
            return Err(Error::DimensionCap { dim, cap });
        }
        Ok(Self { device, levels, cap })
    }

    /// Dense Hilbert-space dimension `levels^(M+1)`.
    pub fn dimension(&self) -> usize {
        self.levels.pow((self.device.n_modes() + 1) as u32)
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Occupation digits of basis state `index`, ancilla first.
    fn digits(&self, mut index: usize) -> Vec<usize> {
        let rings = self.device.n_modes() + 1;
        let mut out = vec![0; rings];
        for slot in (0..rings).rev() {
            out[slot] = index % self.levels;
            index /= self.levels;
        }
        out
    }

    fn total_number(&self, index: usize) -> usize {
        self.digits(index).iter().sum()
    }
}

/// Dense Hamiltonian `ω_tr n̂₀ + χ_tr n̂₀² + Σ ω_i n̂_i + Σ g_i (a†b_i + a b_i†)`
/// on the truncated tensor product. The ancilla frequency is the argument so
/// design sweeps can reuse one system; its Kerr comes from the device.
pub fn build_truncated_hamiltonian(sys: &TruncatedSystem, omega_tr: f64) -> DMatrix<f64> {
    let dim = sys.dimension();
    let d = sys.levels;
    let rings = sys.device.n_modes() + 1;
    let chi = sys.device.ancilla.chi;
    let mut h = DMatrix::zeros(dim, dim);

    // Strides of each ring in the row-major digit encoding, ancilla first.
    let mut stride = vec![1usize; rings];
    for slot in (0..rings - 1).rev() {
        stride[slot] = stride[slot + 1] * d;
    }

    for a in 0..dim {
        let n = sys.digits(a);
        let n0 = n[0] as f64;
        let mut diag = omega_tr * n0 + chi * n0 * n0;
        for (i, mode) in sys.device.modes.iter().enumerate() {
            diag += mode.omega * n[i + 1] as f64;
        }
        h[(a, a)] = diag;

        // Hopping a†b_i lowers ring i+1 and raises the ancilla.
        if n[0] + 1 < d {
            for (i, mode) in sys.device.modes.iter().enumerate() {
                if n[i + 1] == 0 {
                    continue;
                }
                let b = a + stride[0] - stride[i + 1];
                let amp = mode.g * ((n[0] + 1) as f64 * n[i + 1] as f64).sqrt();
                h[(a, b)] += amp;
                h[(b, a)] += amp;
            }
        }
    }
    h
}

/// Low-lying spectrum split by total excitation number.
#[derive(Debug, Clone)]
pub struct ExcitationSpectrum {
    /// Energy of the zero-excitation state.
    pub ground: f64,
    /// One-excitation transitions `ω̃_ge` (ascending) with squared weights
    /// on the bare basis, ancilla slot first.
    pub single: Vec<SingleLevel>,
    /// Two-excitation transitions `ω̃_gf` from the ground state, ascending.
    pub double: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SingleLevel {
    pub omega: f64,
    pub weights: Vec<f64>,
}

impl ExcitationSpectrum {
    /// Index of the single-excitation level with maximum weight on bare
    /// slot `slot` (0 = ancilla). Ties go to the lower level.
    pub fn level_of_bare(&self, slot: usize) -> usize {
        let mut best = 0;
        for (i, lvl) in self.single.iter().enumerate() {
            if lvl.weights[slot] > self.single[best].weights[slot] {
                best = i;
            }
        }
        best
    }
}

/// Extract the `N ≤ 2` spectrum of `h`.
///
/// The excitation-conserving Hamiltonian is block diagonal in the total
/// number; the blocks are read out directly after verifying that nothing
/// couples the low sectors to the rest. A nonzero element between sectors
/// means a non-excitation-conserving term got in, which this model has no
/// business containing, and is reported as [`Error::NumberNotConserved`].
pub fn excitation_spectrum(h: &DMatrix<f64>, sys: &TruncatedSystem) -> Result<ExcitationSpectrum> {
    let dim = sys.dimension();
    if h.nrows() != dim || h.ncols() != dim {
        return Err(Error::InvalidInput(format!(
            "hamiltonian is {}x{}, system dimension is {dim}",
            h.nrows(),
            h.ncols()
        )));
    }
    let number: Vec<usize> = (0..dim).map(|a| sys.total_number(a)).collect();
    let mut sector = vec![Vec::new(); 3];
    for (a, &n) in number.iter().enumerate() {
        if n <= 2 {
            sector[n].push(a);
        }
    }

    // One pass over the rows feeding the extraction: symmetry against the
    // mirrored element, and any coupling out of the number sector. The leak
    // gate is set against the sector spacing so the induced number drift
    // stays below 1e-6.
    let omega_floor = sys
        .device
        .modes
        .iter()
        .map(|m| m.omega)
        .fold(f64::INFINITY, f64::min)
        .min(sys.device.ancilla.omega + sys.device.ancilla.chi);
    let leak_tol = 1e-3 * omega_floor;
    let mut leak: f64 = 0.0;
    let mut max_asym: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for rows in &sector {
        for &a in rows {
            for b in 0..dim {
                let hab = h[(a, b)];
                scale = scale.max(hab.abs());
                max_asym = max_asym.max((hab - h[(b, a)]).abs());
                if number[b] != number[a] {
                    leak = leak.max(hab.abs());
                }
            }
        }
    }
    if max_asym > 1e-12 * scale.max(1.0) {
        return Err(Error::NotSymmetric { max_asym });
    }
    if leak > leak_tol {
        return Err(Error::NumberNotConserved { leak });
    }

    let ground = h[(sector[0][0], sector[0][0])];

    let extract = |rows: &[usize]| -> (Vec<f64>, DMatrix<f64>) {
        let m = rows.len();
        let mut block = DMatrix::zeros(m, m);
        for (p, &a) in rows.iter().enumerate() {
            for (q, &b) in rows.iter().enumerate() {
                block[(p, q)] = h[(a, b)];
            }
        }
        let eig = block.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vecs = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
        (vals, vecs)
    };

    let (e1, v1) = extract(&sector[1]);
    // Map each N=1 basis row back to the ring holding the excitation.
    let rings = sys.device.n_modes() + 1;
    let slot_of_row: Vec<usize> = sector[1]
        .iter()
        .map(|&a| sys.digits(a).iter().position(|&n| n == 1).unwrap())
        .collect();
    let single = (0..e1.len())
        .map(|c| {
            let mut weights = vec![0.0; rings];
            for (r, &slot) in slot_of_row.iter().enumerate() {
                weights[slot] = v1[(r, c)] * v1[(r, c)];
            }
            SingleLevel { omega: e1[c] - ground, weights }
        })
        .collect();

    let (e2, _) = extract(&sector[2]);
    let double = e2.into_iter().map(|e| e - ground).collect();

    Ok(ExcitationSpectrum { ground, single, double })
}

/// Anharmonicities `2χ̃ = ω̃_gf − 2 ω̃_ge` of one fundamental transition
/// against every two-excitation level.
#[derive(Debug, Clone)]
pub struct Anharmonicities {
    /// One entry per two-excitation level, in `double` order.
    pub values: Vec<f64>,
    /// The entry of smallest magnitude, sign preserved.
    pub min: f64,
}

pub fn anharmonicities(spec: &ExcitationSpectrum, level: usize) -> Anharmonicities {
    let ge = spec.single[level].omega;
    let values: Vec<f64> = spec.double.iter().map(|gf| gf - 2.0 * ge).collect();
    let min = values
        .iter()
        .copied()
        .min_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    Anharmonicities { values, min }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitVerdict {
    NotQubit,
    Qubit,
    MechanicalQubit,
}

/// Per-hybrid-mode outcome of the design study.
#[derive(Debug, Clone, serde::Serialize)]
pub struct QubitAssessment {
    /// Bare mode this hybrid level is associated with (maximum weight).
    pub label: String,
    /// Index into [`ExcitationSpectrum::single`].
    pub level: usize,
    /// Fundamental transition ω̃_ge (rad/s).
    pub omega: f64,
    /// Smallest-magnitude anharmonicity 2χ̃ (rad/s), sign preserved.
    pub anharmonicity: f64,
    /// Γ₂ = κ̃/2 with κ̃ composed from the single-excitation weights.
    pub gamma2: f64,
    pub eta: f64,
    pub ancilla_participation: f64,
    pub verdict: QubitVerdict,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct QubitDesignReport {
    /// Bare ancilla frequency this report was computed at (rad/s).
    pub omega_tr: f64,
    /// One entry per bare ring, ancilla first, then device mode order.
    pub entries: Vec<QubitAssessment>,
}

impl QubitDesignReport {
    /// Number of acoustic modes whose verdict is `mechanical_qubit`.
    pub fn mechanical_qubit_count(&self) -> usize {
        self.entries
            .iter()
            .skip(1)
            .filter(|e| e.verdict == QubitVerdict::MechanicalQubit)
            .count()
    }
}

/// Dissipation input of the design study: bare total rates, one ancilla
/// rate, and the qubit threshold on η.
#[derive(Debug, Clone)]
pub struct DissipationConfig {
    pub kappa_tr: f64,
    pub bare_kappas: Vec<f64>,
    pub eta_threshold: f64,
}

impl DissipationConfig {
    pub fn new(kappa_tr: f64, bare_kappas: Vec<f64>) -> Self {
        Self { kappa_tr, bare_kappas, eta_threshold: DEFAULT_ETA_THRESHOLD }
    }

    /// Bare rates straight off a device description.
    pub fn from_device(device: &DeviceModel) -> Self {
        Self::new(device.ancilla.kappa, device.mode_kappas().iter().copied().collect())
    }
}

pub fn classify_qubits(
    sys: &TruncatedSystem,
    omega_tr: f64,
    kappa_tr: f64,
    bare_kappas: &[f64],
    eta_threshold: f64,
) -> Result<QubitDesignReport> {
    if bare_kappas.len() != sys.device.n_modes() {
        return Err(Error::InvalidInput(format!(
            "{} bare dissipation rates for {} modes",
            bare_kappas.len(),
            sys.device.n_modes()
        )));
    }
    let h = build_truncated_hamiltonian(sys, omega_tr);
    let spec = excitation_spectrum(&h, sys)?;

    let entries = (0..sys.device.n_modes() + 1)
        .map(|slot| {
            let level = spec.level_of_bare(slot);
            let lvl = &spec.single[level];
            let anh = anharmonicities(&spec, level).min;
            let mut kappa = lvl.weights[0] * kappa_tr;
            for (i, &k) in bare_kappas.iter().enumerate() {
                kappa += lvl.weights[i + 1] * k;
            }
            let gamma2 = kappa / 2.0;
            let eta = anh.abs() / gamma2;
            let participation = lvl.weights[0];
            let verdict = if eta <= eta_threshold {
                QubitVerdict::NotQubit
            } else if participation < MECHANICAL_PARTICIPATION_CAP {
                QubitVerdict::MechanicalQubit
            } else {
                QubitVerdict::Qubit
            };
            let label = if slot == 0 {
                "ancilla".to_string()
            } else {
                sys.device.modes[slot - 1].label.clone()
            };
            QubitAssessment {
                label,
                level,
                omega: lvl.omega,
                anharmonicity: anh,
                gamma2,
                eta,
                ancilla_participation: participation,
                verdict,
            }
        })
        .collect();

    Ok(QubitDesignReport { omega_tr, entries })
}

/// One [`classify_qubits`] report per grid point, in grid order.
pub fn design_sweep(
    sys: &TruncatedSystem,
    omega_tr_grid: &[f64],
    config: &DissipationConfig,
) -> Result<Vec<QubitDesignReport>> {
    if omega_tr_grid.is_empty() {
        return Err(Error::InvalidInput("empty design grid".into()));
    }
    let reports = par_map_indexed(omega_tr_grid, |idx, &omega_tr| {
        classify_qubits(sys, omega_tr, config.kappa_tr, &config.bare_kappas, config.eta_threshold)
            .map_err(|e| e.at_grid_point(idx))
    });
    reports.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Ancilla, BareMode, ModeFamily};
    use crate::presets::uniform_comb_device;
    use approx::assert_relative_eq;

    fn bare_device(m: usize, omega: f64, chi: f64, g: f64) -> DeviceModel {
        let modes = (0..m)
            .map(|i| BareMode {
                label: format!("m{}", i + 1),
                omega,
                kappa_int: 1.0,
                kappa_ext: 0.0,
                g,
                family: ModeFamily::Longitudinal,
            })
            .collect();
        DeviceModel {
            ancilla: Ancilla { omega, chi, kappa: 1.0, kappa_ext: 0.0 },
            modes,
            flux_map: None,
        }
    }

    #[test]
    fn ancilla_alone_has_kerr_ladder() {
        let omega = 1.0e6;
        let chi = -100.0;
        let sys = TruncatedSystem::new(bare_device(0, omega, chi, 0.0), 3).unwrap();
        let h = build_truncated_hamiltonian(&sys, omega);
        let mut evals: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
        evals.sort_by(f64::total_cmp);
        let expect = [0.0, omega + chi, 2.0 * omega + 4.0 * chi];
        for (a, b) in evals.iter().zip(expect) {
            assert_relative_eq!(a, &b, epsilon = 1e-9 * omega);
        }
    }

    #[test]
    fn decoupled_energies_are_sums() {
        let omega = 1.0e6;
        let mut device = bare_device(2, omega, -50.0, 0.0);
        device.modes[0].omega = omega + 10.0;
        device.modes[1].omega = omega + 25.0;
        let sys = TruncatedSystem::new(device, 3).unwrap();
        let h = build_truncated_hamiltonian(&sys, omega);
        let spec = excitation_spectrum(&h, &sys).unwrap();
        assert_relative_eq!(spec.ground, 0.0, epsilon = 1e-12 * omega);
        let mut singles: Vec<f64> = spec.single.iter().map(|l| l.omega).collect();
        let mut expect = vec![omega - 50.0, omega + 10.0, omega + 25.0];
        singles.sort_by(f64::total_cmp);
        expect.sort_by(f64::total_cmp);
        for (a, b) in singles.iter().zip(&expect) {
            assert_relative_eq!(a, b, epsilon = 1e-9 * omega);
        }
        // Every weight vector is a unit vector on one bare slot.
        for lvl in &spec.single {
            let mut w = lvl.weights.clone();
            w.sort_by(f64::total_cmp);
            assert!(w[..w.len() - 1].iter().all(|&x| x < 1e-12));
            assert_relative_eq!(w[w.len() - 1], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        // 3^10 = 59049 over the default 20000 cap.
        let device = bare_device(9, 1.0e6, -10.0, 1.0);
        match TruncatedSystem::new(device.clone(), 3) {
            Err(Error::DimensionCap { dim: 59049, cap: 20000 }) => {}
            other => panic!("expected cap error, got {other:?}"),
        }
        assert!(TruncatedSystem::with_cap(device, 3, 60_000).is_ok());
    }

    #[test]
    fn needs_three_levels() {
        assert!(matches!(
            TruncatedSystem::new(bare_device(1, 1.0e6, -10.0, 1.0), 2),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn number_leak_is_detected() {
        let sys = TruncatedSystem::new(bare_device(1, 1.0e6, -50.0, 1.0), 3).unwrap();
        let mut h = build_truncated_hamiltonian(&sys, 1.0e6);
        // A counter-rotating-style element between N=0 and N=2.
        h[(0, 4)] = 2.0e4;
        h[(4, 0)] = 2.0e4;
        match excitation_spectrum(&h, &sys) {
            Err(Error::NumberNotConserved { leak }) => assert_relative_eq!(leak, 2.0e4),
            other => panic!("expected number leak, got {other:?}"),
        }
    }

    #[test]
    fn resonant_single_excitation_splitting_is_2g() {
        // Resonance in the dressed sense: the ancilla ge transition equals
        // the mode frequency, so the one-excitation block is degenerate.
        let omega = 1.0e6;
        let chi = -200.0;
        let g = 1.0;
        let mut device = bare_device(1, omega, chi, g);
        device.modes[0].omega = omega + chi;
        let sys = TruncatedSystem::new(device, 3).unwrap();
        let h = build_truncated_hamiltonian(&sys, omega);
        let spec = excitation_spectrum(&h, &sys).unwrap();
        let split = spec.single[1].omega - spec.single[0].omega;
        assert_relative_eq!(split, 2.0 * g, max_relative = 1e-10);
        for lvl in &spec.single {
            assert_relative_eq!(lvl.weights[0], 0.5, max_relative = 1e-9);
        }
    }

    #[test]
    fn manifold_sizes_at_five_modes() {
        let device = uniform_comb_device(5, 3.98e9, 15.0e6, 2.5e6, 50.0e3, -100.0e6, 300.0e3);
        let sys = TruncatedSystem::new(device, 3).unwrap();
        assert_eq!(sys.dimension(), 729);
        let h = build_truncated_hamiltonian(&sys, sys.device.ancilla.omega);
        let spec = excitation_spectrum(&h, &sys).unwrap();
        assert_eq!(spec.single.len(), 6);
        assert_eq!(spec.double.len(), 21);
        for lvl in &spec.single {
            assert_relative_eq!(lvl.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn hamiltonian_commutes_with_total_number() {
        let device = uniform_comb_device(3, 3.98e9, 15.0e6, 7.5e6, 50.0e3, -100.0e6, 300.0e3);
        let sys = TruncatedSystem::new(device, 3).unwrap();
        let h = build_truncated_hamiltonian(&sys, sys.device.ancilla.omega * 1.001);
        let dim = sys.dimension();
        let nop = DMatrix::from_fn(dim, dim, |a, b| {
            if a == b {
                sys.total_number(a) as f64
            } else {
                0.0
            }
        });
        let comm = &h * &nop - &nop * &h;
        assert!(comm.abs().max() < 1e-10 * h.abs().max());
    }

    #[test]
    fn linear_mode_has_zero_anharmonicity() {
        let mut device = bare_device(1, 1.0e6, -50.0, 0.0);
        device.modes[0].omega = 1.1e6;
        let sys = TruncatedSystem::new(device, 3).unwrap();
        let h = build_truncated_hamiltonian(&sys, 1.0e6);
        let spec = excitation_spectrum(&h, &sys).unwrap();
        let level = spec.level_of_bare(1);
        let anh = anharmonicities(&spec, level);
        assert!(anh.min.abs() < 1e-10);
        assert!(anh.values.iter().any(|v| v.abs() < 1e-10));
    }

    #[test]
    fn decoupled_design_has_no_qubits() {
        let mut device = uniform_comb_device(3, 3.98e9, 15.0e6, 0.0, 50.0e3, -100.0e6, 300.0e3);
        for m in &mut device.modes {
            m.g = 0.0;
        }
        let sys = TruncatedSystem::new(device, 3).unwrap();
        let cfg = DissipationConfig::from_device(&sys.device);
        let report = classify_qubits(
            &sys,
            sys.device.ancilla.omega,
            cfg.kappa_tr,
            &cfg.bare_kappas,
            cfg.eta_threshold,
        )
        .unwrap();
        assert_eq!(report.mechanical_qubit_count(), 0);
        for e in report.entries.iter().skip(1) {
            assert_eq!(e.verdict, QubitVerdict::NotQubit);
        }
    }

    #[test]
    fn single_point_sweep_matches_classify() {
        let device = uniform_comb_device(3, 3.98e9, 15.0e6, 7.5e6, 50.0e3, -100.0e6, 300.0e3);
        let sys = TruncatedSystem::new(device, 3).unwrap();
        let cfg = DissipationConfig::from_device(&sys.device);
        let omega_tr = sys.device.ancilla.omega + 2.0e6;
        let direct = classify_qubits(&sys, omega_tr, cfg.kappa_tr, &cfg.bare_kappas, cfg.eta_threshold).unwrap();
        let swept = design_sweep(&sys, &[omega_tr], &cfg).unwrap();
        assert_eq!(swept.len(), 1);
        for (a, b) in direct.entries.iter().zip(&swept[0].entries) {
            assert_eq!(a.label, b.label);
            assert_relative_eq!(a.eta, b.eta);
            assert_relative_eq!(a.anharmonicity, b.anharmonicity);
        }
    }

    /// Two-hybrid-mode anharmonicities in the two-level-ancilla limit:
    /// `2χ̃ = −Δ/2 ± ½(2√(Δ²+4g²) − √(Δ²+8g²))`.
    fn two_level_limit_pair(delta: f64, g: f64) -> [f64; 2] {
        let s = 2.0 * (delta * delta + 4.0 * g * g).sqrt() - (delta * delta + 8.0 * g * g).sqrt();
        [-delta / 2.0 + s / 2.0, -delta / 2.0 - s / 2.0]
    }

    #[test]
    fn strong_kerr_limit_tracks_two_level_closed_form() {
        // Residual finite-Kerr corrections scale as ~0.9 g²/|χ|, so the
        // 2%-of-scale band needs |χ| ≳ 80 g; pinned at 100 g and 300 g.
        let g = 1.0;
        let omega_r = 1.0e6;
        let scale = (2.0 - 2.0f64.sqrt()) * g;
        for chi_mult in [100.0, 300.0] {
            let chi = -chi_mult * g;
            for k in 0..41 {
                let delta = -4.0 * g + 8.0 * g * k as f64 / 40.0;
                let mut device = bare_device(1, omega_r, chi, g);
                device.ancilla.omega = omega_r + delta - chi;
                let sys = TruncatedSystem::new(device, 3).unwrap();
                let h = build_truncated_hamiltonian(&sys, sys.device.ancilla.omega);
                let spec = excitation_spectrum(&h, &sys).unwrap();
                let mut ed = [anharmonicities(&spec, 0).min, anharmonicities(&spec, 1).min];
                let mut closed = two_level_limit_pair(delta, g);
                ed.sort_by(f64::total_cmp);
                closed.sort_by(f64::total_cmp);
                for (e, c) in ed.iter().zip(&closed) {
                    assert!(
                        (e - c).abs() < 0.02 * scale,
                        "chi={chi_mult}g delta={delta}: ed {e} vs closed form {c}"
                    );
                }
                if delta == 0.0 {
                    assert!((ed[1] - scale).abs() < 0.02 * scale);
                    assert!((ed[0] + scale).abs() < 0.02 * scale);
                }
            }
        }
    }

    #[test]
    fn straddling_regime_flips_anharmonicity_sign() {
        let chi_tr = -100.0e6;
        let device = uniform_comb_device(1, 3.98e9, 15.0e6, 7.5e6, 50.0e3, chi_tr, 300.0e3);
        let sys = TruncatedSystem::new(device, 3).unwrap();
        let omega_mode = sys.device.modes[0].omega;
        let mut signs = Vec::new();
        for k in 0..100 {
            // omega_q detuned 0 < Delta < 2|chi| above the mode.
            let delta = crate::units::hz(0.2e6 + 199.6e6 * k as f64 / 99.0);
            let omega_tr = omega_mode + delta - sys.device.ancilla.chi;
            let h = build_truncated_hamiltonian(&sys, omega_tr);
            let spec = excitation_spectrum(&h, &sys).unwrap();
            let anh = anharmonicities(&spec, spec.level_of_bare(1)).min;
            signs.push(anh.signum());
        }
        assert!(signs.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn weak_kerr_matches_participation_prediction() {
        use crate::bogoliubov::{diagonalize_rwa, hybrid_kerr};
        use crate::model::build_rwa_matrix;
        let g = 1.0e3;
        let chi = -g / 20.0;
        let omega_r = 1.0e9;
        for delta in [0.0, g] {
            let mut device = bare_device(1, omega_r, chi, g);
            device.ancilla.omega = omega_r + delta - chi;
            let sys = TruncatedSystem::new(device.clone(), 3).unwrap();
            let h = build_truncated_hamiltonian(&sys, sys.device.ancilla.omega);
            let spec = excitation_spectrum(&h, &sys).unwrap();
            // The linear model sees the dressed ancilla transition.
            let lin = diagonalize_rwa(&build_rwa_matrix(&device, device.ancilla.omega + chi)).unwrap();
            let kerr = hybrid_kerr(&lin, chi);
            for level in 0..2 {
                let ed_anh = anharmonicities(&spec, level).min;
                let perturbative = kerr.anharmonicity(level);
                assert!(
                    (ed_anh - perturbative).abs() < 0.05 * perturbative.abs(),
                    "delta={delta}: ed {ed_anh} vs perturbative {perturbative}"
                );
            }
        }
    }

    #[test]
    fn five_mode_design_study_counts() {
        let fsr = 15.0e6;
        let center = 3.98e9;
        let chi_tr = -100.0e6;
        let max_count = |g_hz: f64, kappa_hz: f64, kappa_tr_hz: f64| -> usize {
            let device = uniform_comb_device(5, center, fsr, g_hz, kappa_hz, chi_tr, kappa_tr_hz);
            let sys = TruncatedSystem::new(device, 3).unwrap();
            let cfg = DissipationConfig::from_device(&sys.device);
            let grid: Vec<f64> = (0..61)
                .map(|i| {
                    crate::units::hz(center - 45.0e6 + 90.0e6 * i as f64 / 60.0)
                        - crate::units::hz(chi_tr)
                })
                .collect();
            design_sweep(&sys, &grid, &cfg)
                .unwrap()
                .iter()
                .map(|r| r.mechanical_qubit_count())
                .max()
                .unwrap()
        };
        assert_eq!(max_count(fsr / 6.0, 50.0e3, 300.0e3), 1);
        assert_eq!(max_count(fsr / 2.0, 50.0e3, 300.0e3), 4);
        // Reported degradation with transmon dissipation.
        assert_eq!(max_count(fsr / 2.0, 50.0e3, 600.0e3), 4);
        assert_eq!(max_count(fsr / 2.0, 50.0e3, 1000.0e3), 3);
        assert_eq!(max_count(fsr / 2.0, 50.0e3, 1500.0e3), 1);
    }

    #[test]
    fn sweep_error_carries_grid_index() {
        let device = uniform_comb_device(2, 3.98e9, 15.0e6, 2.5e6, 50.0e3, -100.0e6, 300.0e3);
        let sys = TruncatedSystem::new(device, 3).unwrap();
        let cfg = DissipationConfig { kappa_tr: 300.0e3, bare_kappas: vec![50.0e3], eta_threshold: 6.0 };
        match design_sweep(&sys, &[1.0, 2.0], &cfg) {
            Err(Error::AtGridPoint { index: 0, .. }) => {}
            other => panic!("expected indexed error, got {other:?}"),
        }
    }
}
