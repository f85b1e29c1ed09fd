//! Compares the solver variants on a couple of small seeded scenarios.

use mlmc::bench::{run_suite, SuiteConfig, Variant, SUMMARY_HEADER};
use mlmc::models::{KernelGeneratorArch, RestorerArch};
use mlmc::solver::SolverConfig;

fn main() -> mlmc::Result<()> {
    let suite = SuiteConfig {
        seeds: vec![0, 1],
        hr_side: 64,
        solver: SolverConfig {
            iters: 8,
            restorer: RestorerArch {
                channels: 16,
                ..RestorerArch::default()
            },
            kernel_net: KernelGeneratorArch {
                hidden: 200,
                ..KernelGeneratorArch::default()
            },
            ..SolverConfig::default()
        },
    };
    println!("{SUMMARY_HEADER}");
    run_suite(&suite, &Variant::ALL, |r| println!("{}", r.csv_row()))?;
    Ok(())
}
