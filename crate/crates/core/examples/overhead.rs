//! Measures ciphertext overhead against policy size and fits a line.
//!
//! ```sh
//! cargo run --release --example overhead
//! ```

use aabac::bench::{linear_fit, run, Experiment};

fn main() {
    let exp = Experiment::Overhead;
    let result = run(exp, &exp.default_xs(), 10, 1);
    print!("{}", result.to_csv());
    let fit = linear_fit(&result.xs(), &result.means());
    println!(
        "# bytes = {:.1} * leaves + {:.1}  (R^2 = {:.4})",
        fit.slope, fit.intercept, fit.r_squared
    );
    let per_packet = 8_800.0;
    let at50 = fit.slope * 50.0 + fit.intercept;
    println!("# 50 leaves: {at50:.0} bytes, {:.2} packets of 8800 bytes", at50 / per_packet);
}
