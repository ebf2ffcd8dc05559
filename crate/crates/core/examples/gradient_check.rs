//! Run the finite-difference gradient suite over every layer.

use ensemble_slu::nn::suite::{run_gradient_suite, SUITE_TOLERANCE};

fn main() -> ensemble_slu::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let t0 = std::time::Instant::now();
    for c in run_gradient_suite(seed, 20)? {
        let ok = if c.max_rel_err < SUITE_TOLERANCE { "ok" } else { "FAIL" };
        println!("{:<26} {:>2} trials  max rel err {:.2e}  {ok}", c.layer.name(), c.trials, c.max_rel_err);
    }
    println!("{:.1} s", t0.elapsed().as_secs_f64());
    Ok(())
}
