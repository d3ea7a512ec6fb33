//! Re-weighting a source posterior by `w = P_T(y) / P_S(y)` recovers the
//! target posterior when only the label distribution moves.

use wdirl::classweight::{adjust_posterior, true_weight};
use wdirl::Matrix;

fn main() -> wdirl::Result<()> {
    let source_priors = [0.5, 0.5];
    let target_priors = [0.9, 0.1];
    let w = true_weight(&source_priors, &target_priors)?;
    println!("w* = {w:?}");

    // a few source posteriors, from confident to ambiguous
    let posterior = Matrix::from_rows(&[[0.99, 0.01], [0.7, 0.3], [0.5, 0.5], [0.2, 0.8], [0.05, 0.95]])?;
    let adjusted = adjust_posterior(&posterior, &w)?;
    println!("source P(y|x)     target P(y|x)");
    for (p, q) in posterior.iter_rows().zip(adjusted.iter_rows()) {
        println!("{:.3} {:.3}       {:.3} {:.3}", p[0], p[1], q[0], q[1]);
    }
    Ok(())
}
