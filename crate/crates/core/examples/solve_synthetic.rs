//! Runs the blind solver on a small synthetic observation and prints the trace.
//!
//! A 64x64 scene at scale 2 with default settings; expect about a minute.

use mlmc::bench::Scenario;
use mlmc::degradation::{bicubic_upsample, psnr};
use mlmc::solver::{GroundTruth, Solver, SolverConfig};

fn main() -> mlmc::Result<()> {
    let sc = Scenario::desk(1, 64, 2, 0.0)?;
    let cfg = SolverConfig {
        iters: 20,
        seed: 1,
        ..SolverConfig::default()
    };
    let mut solver = Solver::new(sc.lr.clone(), cfg)?;
    let start = solver.reconstruction_error()?;
    let gt = GroundTruth {
        image: &sc.hr,
        kernel: &sc.kernel,
    };
    solver.run(Some(gt))?;

    println!("{:>3} {:>5} {:>11} {:>11} {:>9} {:>9}", "i", "phase", "loss", "sigma2", "k_psnr", "x_psnr");
    for r in solver.trace() {
        let loss = r.loss_mc.or(r.loss_ml).unwrap_or(0.0);
        let sigma2 = r.sigma2.map_or("-".to_string(), |v| format!("{v:.3e}"));
        println!(
            "{:>3} {:>5} {loss:>11.4e} {sigma2:>11} {:>9.2} {:>9.2}",
            r.i,
            r.phase,
            r.kernel_psnr.unwrap_or(f64::NAN),
            r.image_psnr.unwrap_or(f64::NAN)
        );
    }
    let steps = solver.steps();
    println!(
        "reconstruction error {start:.3e} -> {:.3e}; bicubic psnr {:.2}",
        solver.reconstruction_error()?,
        psnr(&bicubic_upsample(&sc.lr, 2), &sc.hr)?
    );
    println!("steps: kernel mc {} ml {}, image {}", steps.kernel_mc, steps.kernel_ml, steps.image);
    Ok(())
}
