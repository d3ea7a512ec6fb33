//! Learning the class weight jointly with the representation, starting
//! from w = 1, and watching it approach the true weight.

use wdirl::classweight::true_weight;
use wdirl::data::{synth_gaussian_pair, GaussianPairSpec};
use wdirl::model::{train, WeightInit};
use wdirl::{TrainConfig, Variant};

fn main() -> wdirl::Result<()> {
    let (src, tgt) = ([0.5, 0.5], [0.8, 0.2]);
    let task = synth_gaussian_pair(&GaussianPairSpec::binary(src, tgt, 1000, 1000), 3)?;
    println!("w* = {:?}", true_weight(&src, &tgt)?);
    for v in [Variant::CmdWeighted, Variant::DannWeighted] {
        let cfg = TrainConfig {
            variant: v,
            epochs: 20,
            w_init: WeightInit::Uniform,
            ..TrainConfig::default()
        };
        let (_, rec) = train(&cfg, &task.source, &task.target, &task.test)?;
        let trace: Vec<String> = rec.epochs.iter().step_by(4).map(|e| format!("{:.3}", e.w[0])).collect();
        println!("{:<6} w_0 every 4 epochs: {}", v.name(), trace.join(" "));
    }
    Ok(())
}
