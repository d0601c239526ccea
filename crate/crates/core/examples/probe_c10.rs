use sawkerr::fitting::lsq::FitOptions;
use sawkerr::fitting::multimode::{fit_multimode, seed_hidden_modes, MultimodeOptions, ParamMask};
use sawkerr::fitting::peaks::{extract_peak_set, ExtractOptions};
use sawkerr::model::build_rwa_matrix;
use sawkerr::presets;
use sawkerr::scattering::{synth_flux_sweep, Port, TuningAxis};
use sawkerr::units;

fn score_at_truth(
    truth: &sawkerr::model::DeviceModel,
    peaks: &sawkerr::fitting::peaks::PeakSet,
    label: &str,
) {
    let max_kappa = units::hz(1.5e6);
    let gate = units::hz(2.0e6);
    let mut n_obs = 0usize;
    let mut n_match = 0usize;
    let mut ss = 0.0f64;
    let mut worst: Vec<(usize, f64, f64, f64, f64)> = Vec::new();
    for (t, row) in peaks.entries.iter().enumerate() {
        let ev = build_rwa_matrix(truth, peaks.omega_sq[t]).symmetric_eigenvalues();
        for e in row {
            if !e.converged || e.params.kappa_tot > max_kappa {
                continue;
            }
            n_obs += 1;
            let d = ev
                .iter()
                .map(|&x| e.params.omega_r - x)
                .min_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap();
            if d.abs() <= gate {
                n_match += 1;
                ss += d * d;
                if d.abs() > units::hz(0.1e6) {
                    worst.push((
                        t,
                        e.params.omega_r,
                        d,
                        e.params.kappa_tot,
                        e.params.kappa_c / e.params.kappa_tot,
                    ));
                }
            }
        }
    }
    println!(
        "at truth [{label}]: {} obs, {} matched, rms {:.1} kHz, {} worse than 0.1 MHz",
        n_obs,
        n_match,
        (ss / n_match as f64).sqrt() / units::hz(1e3),
        worst.len()
    );
    worst.sort_by(|a, b| b.2.abs().total_cmp(&a.2.abs()));
    for (t, w, d, k, r) in worst.iter().take(24) {
        println!(
            "  junk: row {t:2} omega {:.4} GHz off {:+.3} MHz kappa {:.2} MHz kc/kt {:.2}",
            w / units::hz(1e9),
            d / units::hz(1e6),
            k / units::hz(1e6)
        , r);
    }
}

fn main() {
    let mut truth = presets::reference_device_truncated(10);
    let hidden = 4;
    truth.modes[hidden].omega -= units::hz(1.5e6);
    let free_g: Vec<usize> = truth
        .modes
        .iter()
        .enumerate()
        .filter(|(_, m)| m.g > 0.0)
        .map(|(i, _)| i)
        .collect();

    let tuning: Vec<f64> = (0..21).map(|k| units::hz(3.926e9 + 44.0e6 * k as f64 / 20.0)).collect();
    let probe: Vec<f64> =
        (0..2601).map(|k| units::hz(3.922e9 + 52.0e6 * k as f64 / 2600.0)).collect();
    let axis = TuningAxis::OmegaSq(tuning);

    let clean = synth_flux_sweep(&truth, &axis, &probe, Port::S21, -131.0, 80.0, 0.0, 0).unwrap();
    let depth = 1.0 - clean.response.iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    let sigma = 0.1 * depth;
    println!("depth {depth:.3} sigma {sigma:.4} prominence {:.3}", (4.5 * sigma).max(0.02));
    let ex_opts = ExtractOptions {
        prominence: (4.5 * sigma).max(0.02),
        max_modes: 16,
        min_kappa: units::hz(0.1e6),
    };

    // Noiseless extraction bias: residuals at truth with sigma = 0 are
    // pure line-shape model mismatch.
    let peaks0 = extract_peak_set(&clean, None, &ex_opts).unwrap();
    score_at_truth(&truth, &peaks0, "sigma=0");

    let seed = 0;
    let grid = synth_flux_sweep(&truth, &axis, &probe, Port::S21, -131.0, 80.0, sigma, seed).unwrap();
    let peaks = extract_peak_set(&grid, None, &ex_opts).unwrap();
    for (i, row) in peaks.entries.iter().enumerate() {
        let n_conv = row.iter().filter(|e| e.converged).count();
        let ks: Vec<String> = row
            .iter()
            .map(|e| {
                format!(
                    "{:.2}@{:.4}{}",
                    e.params.kappa_tot / units::hz(1e6),
                    e.params.omega_r / units::hz(1e9),
                    if e.converged { "" } else { "!" }
                )
            })
            .collect();
        println!("row {i:2}: {} conv of {}: {}", n_conv, row.len(), ks.join(" "));
    }

    // Score the filtered observations against the truth device: residuals
    // above the noise scale are extraction junk, not fit error.
    score_at_truth(&truth, &peaks, "noisy");

    let mut start = presets::reference_device_truncated(10);
    for &i in &free_g {
        start.modes[i].g *= 1.15;
    }
    let mut mask = ParamMask::none(10);
    for &i in &free_g {
        mask.g[i] = true;
    }
    mask.omega[hidden] = true;
    let seeded = seed_hidden_modes(&start, &mask).unwrap();
    let opts = MultimodeOptions {
        match_gate: Some(units::hz(2.0e6)),
        max_kappa: Some(units::hz(1.5e6)),
        robust_delta: Some(units::hz(0.1e6)),
        trim_mad: Some(6.0),
        fit: FitOptions { loss_rel_tol: 1e-8, ..FitOptions::default() },
        ..MultimodeOptions::default()
    };
    match fit_multimode(&peaks, &seeded, &mask, &opts) {
        Ok(res) => {
            println!(
                "ok: iters {} matched {} rms {:.1} kHz",
                res.iterations,
                res.n_matched,
                res.residual_rms / units::hz(1e3)
            );
            for &i in &free_g {
                println!(
                    "  g[{i}] {:.4} MHz truth {:.4} off {:.2}%",
                    res.g[i] / units::hz(1e6),
                    truth.modes[i].g / units::hz(1e6),
                    100.0 * (res.g[i] - truth.modes[i].g).abs() / truth.modes[i].g
                );
            }
            println!(
                "  w[hidden] {:.4} GHz truth {:.4} off {:.3} MHz",
                res.omega[hidden] / units::hz(1e9),
                truth.modes[hidden].omega / units::hz(1e9),
                (res.omega[hidden] - truth.modes[hidden].omega).abs() / units::hz(1e6)
            );
            let lt = &res.loss_trace;
            let tail: Vec<String> = lt.iter().rev().take(6).map(|l| format!("{l:.6e}")).collect();
            println!("  loss trace len {} tail {:?}", lt.len(), tail);
        }
        Err(e) => println!("fit error: {e}"),
    }
}
