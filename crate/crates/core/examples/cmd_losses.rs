//! Central moment discrepancy and the class-weighted variants on small
//! feature samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wdirl::losses::{adversarial_loss_d, cmd, weighted_adversarial_loss_d, weighted_cmd, IntervalBounds};
use wdirl::Matrix;

fn sample(rng: &mut ChaCha8Rng, n: usize, center: f64) -> Matrix {
    let data = (0..n * 2).map(|_| (center + 0.1 * rng.random::<f64>()).clamp(0.0, 1.0)).collect();
    Matrix::new(n, 2, data).expect("finite")
}

fn main() -> wdirl::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let unit = IntervalBounds::unit();
    // source: 50 rows per class; target: 90 of class 0 and 10 of class 1
    let class0 = sample(&mut rng, 50, 0.2);
    let class1 = sample(&mut rng, 50, 0.7);
    let target = Matrix::vstack(&[&sample(&mut rng, 90, 0.2), &sample(&mut rng, 10, 0.7)])?;
    let pooled = Matrix::vstack(&[&class0, &class1])?;
    let priors = [0.5, 0.5];

    println!("cmd(source, target)             = {:.4}", cmd(&pooled, &target, 5, unit)?);
    for w in [[1.0, 1.0], [1.4, 0.6], [1.8, 0.2]] {
        let v = weighted_cmd(&[class0.clone(), class1.clone()], &priors, &w, &target, 5, unit)?;
        println!("weighted cmd, w = {w:?}       = {v:.4}");
    }

    let d_source = [vec![0.6; 50], vec![0.9; 50]];
    let d_target: Vec<f64> = [vec![0.6; 90], vec![0.9; 10]].concat();
    println!("adversarial loss                = {:.4}", adversarial_loss_d(&d_source.concat(), &d_target)?);
    println!(
        "weighted adversarial, w = (1.8, 0.2) = {:.4}",
        weighted_adversarial_loss_d(&d_source, &priors, &[1.8, 0.2], &d_target)?
    );
    Ok(())
}
