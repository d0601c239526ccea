use nalgebra::Complex;
use sawkerr::fitting::peaks::{extract_peaks, ExtractOptions};
use sawkerr::scattering::{double_lorentzian, Port};
use sawkerr::units;

fn main() {
    let sigma = units::hz(50e3);
    let w1 = units::hz(3.95e9);
    let w2 = w1 + 2.0 * sigma;
    let n = 241;
    let probe: Vec<f64> = (0..n)
        .map(|k| units::hz(3.9485e9 + (3.9515e9 - 3.9485e9) * k as f64 / (n - 1) as f64))
        .collect();
    let trace: Vec<Complex<f64>> = probe
        .iter()
        .map(|&w| Complex::new(1.0 - double_lorentzian(w, 0.3, w1, sigma, 0.25, w2, sigma), 0.0))
        .collect();
    let peaks = extract_peaks(&probe, &trace, Port::S21, &ExtractOptions::default()).unwrap();
    println!("n entries: {}", peaks.len());
    for p in &peaks {
        println!(
            "  omega {:.6} GHz  d1 {:+.1} kHz  d2 {:+.1} kHz  kappa {:.1} kHz  conv {}  res {:.3e}",
            p.params.omega_r / (2.0 * std::f64::consts::PI * 1e9),
            (p.params.omega_r - w1) / (2.0 * std::f64::consts::PI * 1e3),
            (p.params.omega_r - w2) / (2.0 * std::f64::consts::PI * 1e3),
            p.params.kappa_tot / (2.0 * std::f64::consts::PI * 1e3),
            p.converged,
            p.residual
        );
    }
}
