//! Checks every op's backward pass against central differences.

use mlmc::ad::{grad_check_all, GRAD_CHECK_TOLERANCE};

fn main() {
    let report = grad_check_all(0, 20, None);
    for (op, err) in &report.rows {
        let mark = if *err < GRAD_CHECK_TOLERANCE { "ok" } else { "FAIL" };
        println!("{:<12} {err:>10.2e}  {mark}", op.name());
    }
    println!("all passed: {}", report.passed());
}
