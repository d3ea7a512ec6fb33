//! Unweighted distribution matching under label shift: with a large
//! invariance weight, CMD and DANN drag target predictions toward the source
//! label distribution, while the weighted, corrected variants keep tracking
//! the target.

use wdirl::data::{synth_gaussian_pair, GaussianPairSpec};
use wdirl::model::train;
use wdirl::{TrainConfig, Variant};

fn main() -> wdirl::Result<()> {
    let spec = GaussianPairSpec {
        n_test: 4000,
        ..GaussianPairSpec::binary([0.5, 0.5], [0.9, 0.1], 2000, 2000)
    };
    let task = synth_gaussian_pair(&spec, 1)?;
    let base = TrainConfig {
        alpha: 10.0,
        epochs: 30,
        report_best: false,
        seed: 1,
        ..TrainConfig::default()
    };
    println!("variant  epoch 1   epoch 10  epoch 30   (target accuracy / share predicted as class 0)");
    for v in [Variant::So, Variant::Cmd, Variant::CmdCorrected, Variant::Dann, Variant::DannCorrected] {
        let (_, rec) = train(&base.with_variant(v), &task.source, &task.target, &task.test)?;
        let cell = |e: usize| {
            let r = &rec.epochs[e - 1];
            format!("{:.3}/{:.2}", r.target_acc, r.majority_fraction)
        };
        println!("{:<8} {}  {}  {}", v.name(), cell(1), cell(10), cell(30));
    }
    Ok(())
}
