//! Finite-difference verification of the autodiff tape, the losses, the
//! layers and each variant's training objective.

fn main() -> wdirl::Result<()> {
    let report = wdirl::gradcheck::run_gradcheck(wdirl::gradcheck::DEFAULT_CONFIGS, 0)?;
    println!("{report}");
    if !report.passed() {
        std::process::exit(1);
    }
    Ok(())
}
