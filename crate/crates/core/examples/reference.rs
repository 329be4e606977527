//! Prints the reference SIR results: R0 at b = 0.047, the extinction
//! fraction, peak statistics and a calibration to R0 = 1.6.

use agentsim_core::calibrate::{calibrate_b, CalibrationSpec};
use agentsim_core::montecarlo::{estimate_r0, run_sir_ensemble, EnsembleSpec};
use agentsim_core::sir::SirParams;
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = SirParams::default();
    let clock = Instant::now();

    let r0 = estimate_r0(&params, 500, 7, None)?;
    println!("R0(b = 0.047) = {:.4} +/- {:.4}", r0.mean, r0.std_error);

    let wide = SirParams {
        contacts_min: 1,
        ..params.clone()
    };
    let r0_wide = estimate_r0(&wide, 500, 7, None)?;
    println!(
        "R0(b = 0.047, contacts 1..=8) = {:.4} +/- {:.4}",
        r0_wide.mean, r0_wide.std_error
    );

    let ens = run_sir_ensemble(&params, &EnsembleSpec::new(500, 120, 7))?;
    println!("extinction fraction = {:.3}", ens.extinction_fraction());
    println!("peaks = {:?}", ens.peak_stats());

    let calib = calibrate_b(&CalibrationSpec::new(1.6, 0.0, 0.2, 500, 7), &params)?;
    println!(
        "b* = {:.5} (estimate {:.4}, {} evaluations)",
        calib.b_star,
        calib.estimate,
        calib.evaluations.len()
    );
    println!("elapsed {:.1?}", clock.elapsed());
    Ok(())
}
