use anyhow::Result;

use stswin_core::verify;

pub fn run(quick: bool) -> Result<()> {
    let checks = if quick {
        let mut c = verify::tensor_invariant_suite();
        c.push(verify::shifted_window_suite(20));
        c.extend(verify::contrast_oracle_suite(56));
        c.extend(verify::reachability_suite());
        c.extend(verify::metrics_suite());
        c
    } else {
        verify::run_all()
    };
    let mut failed = 0;
    for check in &checks {
        let status = if check.passed { "PASS" } else { "FAIL" };
        if check.detail.is_empty() {
            println!("{status} {}", check.name);
        } else {
            println!("{status} {} — {}", check.name, check.detail);
        }
        if !check.passed {
            failed += 1;
        }
    }
    println!("{} checks, {} failed", checks.len(), failed);
    if failed > 0 {
        anyhow::bail!("{failed} verification checks failed");
    }
    Ok(())
}
