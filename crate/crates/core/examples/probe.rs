//! Dev scaffolding: print calibration numbers for the reference device.

use nalgebra::DMatrix;
use sawkerr::bogoliubov::{diagonalize_rwa, diagonalize_symplectic, hybrid_kerr};
use sawkerr::model::{build_quadratic_form, build_rwa_matrix};
use sawkerr::presets::reference_device;
use sawkerr::units::{hz, to_hz};

fn main() {
    let d = reference_device();
    let n = d.n_modes() + 1;

    // 1. RWA vs symplectic across the band.
    let mut max_dw: f64 = 0.0;
    let mut max_v: f64 = 0.0;
    for k in 0..25 {
        let w = hz(3.935e9) + hz(5.0e6) * k as f64;
        let r = diagonalize_rwa(&build_rwa_matrix(&d, w)).unwrap();
        let s = diagonalize_symplectic(&build_quadratic_form(&d, w)).unwrap();
        for j in 0..n {
            max_dw = max_dw.max((r.omegas[j] - s.omegas[j]).abs());
        }
        max_v = max_v.max(s.v.as_ref().unwrap().abs().max());
    }
    println!("max |w_rwa - w_sympl| = 2pi * {:.1} Hz", to_hz(max_dw));
    println!("max |v| = {:.3e}", max_v);

    // 2. Participation maxima of the branches dominated by b11 / b12
    //    (max-weight labeling per tuning point).
    let grid: Vec<f64> = (0..2000)
        .map(|i| hz(3.930e9) + hz(0.065e6) * i as f64)
        .collect();
    let spectra: Vec<_> = grid
        .iter()
        .map(|&w| diagonalize_rwa(&build_rwa_matrix(&d, w)).unwrap())
        .collect();
    let max_weight_participation = |bare_idx: usize| -> (f64, f64) {
        let row = bare_idx + 1; // row 0 is the ancilla
        let mut best = (0.0f64, 0.0f64);
        for (i, s) in spectra.iter().enumerate() {
            let mut col = 0;
            for j in 1..n {
                if s.u[(row, j)].powi(2) > s.u[(row, col)].powi(2) {
                    col = j;
                }
            }
            let p = s.u[(0, col)].powi(2);
            if p > best.0 {
                best = (p, to_hz(grid[i]));
            }
        }
        best
    };
    for (idx, name) in [(10, "b11"), (11, "b12"), (7, "b08"), (12, "b13")] {
        let (p, at) = max_weight_participation(idx);
        println!("max participation of {name}-dominant branch: {:.4} at omega_sq = {:.4} GHz", p, at / 1e9);
    }

    // 3. SQ-rich branch participation in the uncoupled desert.
    let mut best = (0.0f64, 0.0f64, 0usize);
    for (i, s) in spectra.iter().enumerate() {
        for j in 0..n {
            let p = s.u[(0, j)].powi(2);
            if p > best.0 {
                best = (p, to_hz(grid[i]), j);
            }
        }
    }
    println!("global max SQ participation: {:.4} at {:.4} GHz (col {})", best.0, best.1 / 1e9, best.2);

    // 4. Cross-Kerr maxima with the pump tuning restricted to the
    //    uncoupled gap between b08 and b11 (the pumped-branch window).
    let chi = d.ancilla.chi;
    let probe_rows = [4usize, 6, 10, 11, 12, 13, 14]; // b5 b7 b11 b12 b13 b14 b15
    for (lo, hi) in [
        (3.9615e9, 3.9700e9),
        (3.9620e9, 3.9700e9),
        (3.9625e9, 3.9700e9),
        (3.9630e9, 3.9705e9),
    ] {
        let mut kerr_max = vec![0.0f64; probe_rows.len()];
        let mut pump_part = (1.0f64, 0.0f64);
        let m = 120;
        for i in 0..m {
            let w = hz(lo) + hz(hi - lo) * i as f64 / (m - 1) as f64;
            let s = diagonalize_rwa(&build_rwa_matrix(&d, w)).unwrap();
            let k: DMatrix<f64> = hybrid_kerr(&s, chi).chi;
            let mut pcol = 0;
            for j in 1..n {
                if s.u[(0, j)].powi(2) > s.u[(0, pcol)].powi(2) {
                    pcol = j;
                }
            }
            let pp = s.u[(0, pcol)].powi(2);
            pump_part = (pump_part.0.min(pp), pump_part.1.max(pp));
            for (pi, &bare) in probe_rows.iter().enumerate() {
                let row = bare + 1;
                let mut col = 0;
                for j in 1..n {
                    if s.u[(row, j)].powi(2) > s.u[(row, col)].powi(2) {
                        col = j;
                    }
                }
                if col != pcol {
                    kerr_max[pi] = kerr_max[pi].max(k[(col, pcol)].abs());
                }
            }
        }
        let vals: Vec<String> = probe_rows
            .iter()
            .zip(&kerr_max)
            .map(|(&b, &k)| format!("b{:02}:{:.1}", b + 1, to_hz(k) / 1e3))
            .collect();
        println!(
            "window [{:.4}, {:.4}] GHz  pump P {:.2}..{:.2}  kHz: {}",
            lo / 1e9, hi / 1e9, pump_part.0, pump_part.1, vals.join(" ")
        );
    }
}
