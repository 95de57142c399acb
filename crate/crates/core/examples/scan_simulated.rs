//! Simulates an AR(1) series whose coefficient jumps from 0.1 to 0.6 and
//! runs the trimmed scan on it.

use elcpd::{gen_ar_change, trimmed_scan, NoiseModel, ScanOptions, SolverSettings, DEFAULT_BURN_IN};

fn main() -> Result<(), elcpd::ElError> {
    let series = gen_ar_change(400, 240, &[0.1], &[0.6], NoiseModel::Gaussian, DEFAULT_BURN_IN, 1)?;
    let scan = trimmed_scan(&series, 1, &ScanOptions::default(), &SolverSettings::default())?;
    println!("Z_n* = {:.3} at k = {} (true change after 240)", scan.z_star, scan.k_hat);
    if let (Some(t), Some(p)) = (scan.t_normalized, scan.p_value) {
        println!("normalized {t:.3}, asymptotic p-value {p:.4}, reject at 5%: {}", scan.reject);
    }
    Ok(())
}
