//! Dev scaffolding: design-study calibration numbers.

use sawkerr::ed::{
    anharmonicities, build_truncated_hamiltonian, classify_qubits, design_sweep,
    excitation_spectrum, DissipationConfig, TruncatedSystem,
};
use sawkerr::model::{Ancilla, BareMode, DeviceModel, ModeFamily};
use sawkerr::presets::uniform_comb_device;
use sawkerr::units::hz;

fn b2_pair(delta: f64, g: f64) -> (f64, f64) {
    let s = 2.0 * (delta * delta + 4.0 * g * g).sqrt() - (delta * delta + 8.0 * g * g).sqrt();
    (-delta / 2.0 + s / 2.0, -delta / 2.0 - s / 2.0)
}

fn main() {
    // 1. JC limit: M=1, chi = -100 g, Delta sweep.
    let g = 1.0;
    let omega_r = 1.0e6;
    for chi_mult in [50.0, 100.0, 300.0] {
        let chi = -chi_mult * g;
        let mut worst = 0.0f64;
        let mut at = 0.0;
        for k in 0..41 {
            let delta = -4.0 * g + 8.0 * g * k as f64 / 40.0;
            let device = DeviceModel {
                ancilla: Ancilla { omega: omega_r + delta - chi, chi, kappa: 1.0, kappa_ext: 0.0 },
                modes: vec![BareMode {
                    label: "m1".into(),
                    omega: omega_r,
                    kappa_int: 1.0,
                    kappa_ext: 0.0,
                    g,
                    family: ModeFamily::Longitudinal,
                }],
                flux_map: None,
            };
            let sys = TruncatedSystem::new(device, 3).unwrap();
            let h = build_truncated_hamiltonian(&sys, sys.device.ancilla.omega);
            let spec = excitation_spectrum(&h, &sys).unwrap();
            let e0 = anharmonicities(&spec, 0).min;
            let e1 = anharmonicities(&spec, 1).min;
            let (bp, bm) = b2_pair(delta, g);
            let mut ed = [e0, e1];
            let mut b2 = [bp, bm];
            ed.sort_by(f64::total_cmp);
            b2.sort_by(f64::total_cmp);
            for i in 0..2 {
                let dev = (ed[i] - b2[i]).abs();
                if dev > worst {
                    worst = dev;
                    at = delta;
                }
            }
            if k == 20 {
                println!(
                    "chi={chi_mult}g D=0: ed=({:.4}, {:.4})g  b2=({:.4}, {:.4})g  g(2-sqrt2)={:.4}",
                    ed[0], ed[1], b2[0], b2[1], (2.0 - 2.0f64.sqrt())
                );
            }
        }
        println!(
            "chi={chi_mult}g: worst |ed-b2| over Delta in [-4g,4g] = {:.4} g (at Delta={:.2}g), = {:.2}% of g(2-sqrt2)",
            worst, at, 100.0 * worst / (2.0 - 2.0f64.sqrt())
        );
    }

    // 2. Design study: qubit counts over an omega_q grid for both columns,
    //    baseline vs flip-chip, and the soft kappa_tr checks.
    let fsr = 15.0e6;
    let center = 3.98e9;
    let chi_tr = -100.0e6;
    let scan = |g_hz: f64, kappa_hz: f64, kappa_tr_hz: f64| -> (usize, f64, f64) {
        let device = uniform_comb_device(5, center, fsr, g_hz, kappa_hz, chi_tr, kappa_tr_hz);
        let sys = TruncatedSystem::new(device, 3).unwrap();
        let cfg = DissipationConfig::from_device(&sys.device);
        // omega_q = omega_tr + chi sweeps the band +- 3 FSR.
        let grid: Vec<f64> = (0..481)
            .map(|i| hz(center - 6.0 * fsr + 12.0 * fsr * i as f64 / 480.0) - hz(chi_tr))
            .collect();
        let reports = design_sweep(&sys, &grid, &cfg).unwrap();
        let mut max_count = 0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, r) in reports.iter().enumerate() {
            let c = r.mechanical_qubit_count();
            max_count = max_count.max(c);
            if c >= 1 {
                let wq = grid[i] + hz(chi_tr);
                lo = lo.min(wq);
                hi = hi.max(wq);
            }
        }
        (max_count, lo, hi)
    };

    let (c_left, lo_l, hi_l) = scan(fsr / 6.0, 50.0e3, 300.0e3);
    println!("left column  (g=FSR/6):  max count {}  interval [{:.2}, {:.2}] MHz",
        c_left, (lo_l / hz(1.0) - center) / 1e6, (hi_l / hz(1.0) - center) / 1e6);
    let (c_right, lo_r, hi_r) = scan(fsr / 2.0, 50.0e3, 300.0e3);
    println!("right column (g=FSR/2):  max count {}  interval [{:.2}, {:.2}] MHz",
        c_right, (lo_r / hz(1.0) - center) / 1e6, (hi_r / hz(1.0) - center) / 1e6);
    let (c_flip, lo_f, hi_f) = scan(fsr / 2.0, 25.0e3, 25.0e3);
    println!("flip-chip    (25/25):    max count {}  interval [{:.2}, {:.2}] MHz  wider={}",
        c_flip, (lo_f / hz(1.0) - center) / 1e6, (hi_f / hz(1.0) - center) / 1e6,
        (hi_f - lo_f) > (hi_r - lo_r));
    for ktr in [600.0e3, 1000.0e3, 1500.0e3] {
        let (c, _, _) = scan(fsr / 2.0, 50.0e3, ktr);
        println!("kappa_tr {:.0} kHz: max count {}", ktr / 1e3, c);
    }

    // 3. Straddling: signed min anharmonicity of the mode-dominant branch
    //    while omega_q sweeps from just above the mode through +2|chi|.
    let g_s = 7.5e6;
    let device = uniform_comb_device(1, center, fsr, g_s, 50.0e3, chi_tr, 300.0e3);
    let sys = TruncatedSystem::new(device, 3).unwrap();
    let mut prev_sign = 0.0f64;
    let mut flips = Vec::new();
    for k in 0..400 {
        let delta = 2.0e5 + (2.0 * chi_tr.abs() - 4.0e5) * k as f64 / 399.0;
        let omega_tr = hz(center + delta) - hz(chi_tr);
        let h = build_truncated_hamiltonian(&sys, omega_tr);
        let spec = excitation_spectrum(&h, &sys).unwrap();
        let lvl = spec.level_of_bare(1);
        let anh = anharmonicities(&spec, lvl).min;
        if prev_sign != 0.0 && anh.signum() != prev_sign {
            flips.push(delta / 1e6);
        }
        prev_sign = anh.signum();
    }
    println!("straddling sign flips at Delta = {:?} MHz", flips);
}
