use sawkerr::bogoliubov::diagonalize_rwa;
use sawkerr::fitting::peaks::{extract_peak_set, ExtractOptions};
use sawkerr::model::build_rwa_matrix;
use sawkerr::presets;
use sawkerr::scattering::{synth_flux_sweep, Port, TuningAxis};
use sawkerr::units;

fn main() {
    let truth = presets::reference_device();
    let tuning: Vec<f64> =
        (0..12).map(|k| units::hz(3.932e9 + 116.0e6 * k as f64 / 11.0)).collect();
    let probe: Vec<f64> =
        (0..4534).map(|k| units::hz(3.922e9 + 136.0e6 * k as f64 / 4533.0)).collect();
    let grid = synth_flux_sweep(
        &truth,
        &TuningAxis::OmegaSq(tuning.clone()),
        &probe,
        Port::S21,
        -131.0,
        80.0,
        0.0,
        0,
    )
    .unwrap();
    let peaks = extract_peak_set(
        &grid,
        None,
        &ExtractOptions { prominence: 0.02, max_modes: 40, min_kappa: units::hz(0.05e6) },
    )
    .unwrap();

    let mut total = 0usize;
    let mut bad = [0usize; 4]; // >10 kHz, >100 kHz, >500 kHz, >2 MHz
    for (t, entries) in peaks.entries.iter().enumerate() {
        let eig = build_rwa_matrix(&truth, tuning[t]).symmetric_eigenvalues();
        let spec = diagonalize_rwa(&build_rwa_matrix(&truth, tuning[t])).unwrap();
        let n_conv = entries.iter().filter(|e| e.converged).count();
        let mut row_bad = Vec::new();
        for e in entries.iter().filter(|e| e.converged) {
            total += 1;
            let d = eig
                .iter()
                .map(|&x| (e.params.omega_r - x).abs())
                .fold(f64::INFINITY, f64::min);
            for (k, thr) in [10e3, 100e3, 500e3, 2000e3].iter().enumerate() {
                if d > units::hz(*thr) {
                    bad[k] += 1;
                }
            }
            if d > units::hz(100e3) {
                row_bad.push((
                    e.params.omega_r / units::hz(1e9),
                    d / units::hz(1e6),
                    e.params.kappa_tot / units::hz(1e6),
                    e.residual,
                ));
            }
        }
        let part = spec.participation();
        let pmax = part.iter().cloned().fold(0.0f64, f64::max);
        println!(
            "row {t:2} omega_sq {:.4} GHz: {} entries ({} conv), max part {:.2}",
            tuning[t] / units::hz(1e9),
            entries.len(),
            n_conv,
            pmax
        );
        for (w, d, k, r) in row_bad {
            println!("    bad: omega {w:.5} GHz off {d:.3} MHz kappa {k:.3} MHz res {r:.2e}");
        }
    }
    println!("total converged obs {total}");
    println!(
        "off by >10k/100k/500k/2M Hz: {}/{}/{}/{}",
        bad[0], bad[1], bad[2], bad[3]
    );
}
