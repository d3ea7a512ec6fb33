//! Domain-invariance losses.
//!
//! Each loss comes in two forms: a direct evaluation on plain values (this
//! module) and a differentiable construction on a [`Tape`] ([`graph`]). The
//! two are computed independently and are cross-checked in tests.
//!
//! Central moments are marginal (per coordinate): the order-`k` statistic of
//! an `n x m` sample matrix is the `m`-vector of column means of
//! `(x - mean)^k`.

use crate::error::{Error, Result};
use crate::numkit::{Matrix, NodeId, Tape, LOG_EPS};

/// Moment order used unless configured otherwise.
pub const DEFAULT_ORDER: usize = 5;

/// Tolerance on `sum_i w_i * priors_i == 1` accepted by the weighted losses.
pub const WEIGHT_SUM_TOL: f64 = 1e-8;

/// The interval `[a, b]` that bounds every feature coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntervalBounds {
    a: f64,
    b: f64,
}

impl IntervalBounds {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::contract(format!("interval bounds need b > a, got [{a}, {b}]")));
        }
        Ok(Self { a, b })
    }

    /// `[0, 1]`, the range of a sigmoid encoder.
    pub fn unit() -> Self {
        Self { a: 0.0, b: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }
}

impl Default for IntervalBounds {
    fn default() -> Self {
        Self::unit()
    }
}

/// Where the higher-order statistics of a weighted class mixture are centred.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureCentering {
    /// Every class's order-`k` moment is taken about the weighted mixture
    /// mean, so the result is exactly the central moment of the reweighted
    /// source distribution. With `w = 1` and priors equal to the empirical
    /// class proportions this reproduces the pooled statistic.
    #[default]
    Mixture,
    /// Every class's order-`k` moment is taken about its own class mean
    /// before mixing.
    PerClass,
}

/// Mean and central moments of orders `2..=K`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentStats {
    pub mean: Vec<f64>,
    /// `central[k - 2]` holds the order-`k` moment.
    pub central: Vec<Vec<f64>>,
}

impl MomentStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Order-`k` central moment, `k >= 2`.
    pub fn order(&self, k: usize) -> &[f64] {
        &self.central[k - 2]
    }
}

pub fn moments(samples: &Matrix, order: usize) -> Result<MomentStats> {
    if samples.rows() == 0 {
        return Err(Error::contract("moments of an empty sample set"));
    }
    if order == 0 {
        return Err(Error::contract("moment order must be >= 1"));
    }
    let mean = samples.column_means().into_data();
    let central = moments_about(samples, &mean, order);
    Ok(MomentStats { mean, central })
}

/// Column means of `(x - center)^k` for `k = 2..=order`.
fn moments_about(samples: &Matrix, center: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = samples.rows() as f64;
    (2..=order)
        .map(|k| {
            let mut acc = vec![0.0; center.len()];
            for row in samples.iter_rows() {
                for ((a, x), c) in acc.iter_mut().zip(row).zip(center) {
                    *a += (x - c).powi(k as i32);
                }
            }
            acc.iter_mut().for_each(|a| *a /= n);
            acc
        })
        .collect()
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Central moment discrepancy between two sample sets.
pub fn cmd(source: &Matrix, target: &Matrix, order: usize, bounds: IntervalBounds) -> Result<f64> {
    if source.cols() != target.cols() {
        return Err(Error::Dimension {
            op: "cmd",
            left: source.shape(),
            right: target.shape(),
        });
    }
    let s = moments(source, order)?;
    let t = moments(target, order)?;
    Ok(combine(&s, &t, bounds))
}

fn combine(s: &MomentStats, t: &MomentStats, bounds: IntervalBounds) -> f64 {
    let width = bounds.width();
    let mut total = l2_dist(&s.mean, &t.mean) / width;
    for (k, (cs, ct)) in s.central.iter().zip(&t.central).enumerate() {
        total += l2_dist(cs, ct) / width.powi(k as i32 + 2);
    }
    total
}

/// Validates a class weighting: matching lengths, positive weights and
/// `sum_i w_i * priors_i == 1`.
pub fn check_class_weighting(priors: &[f64], w: &[f64]) -> Result<()> {
    if priors.len() != w.len() {
        return Err(Error::contract(format!(
            "{} priors but {} class weights",
            priors.len(),
            w.len()
        )));
    }
    if let Some(bad) = w.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::contract(format!("class weight {bad} is not positive")));
    }
    let total: f64 = priors.iter().zip(w).map(|(p, w)| p * w).sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::contract(format!(
            "sum of w_i * P_S(y=i) is {total}, expected 1"
        )));
    }
    Ok(())
}

/// CMD between the `w`-reweighted source class mixture and the target.
pub fn weighted_cmd(
    source_by_class: &[Matrix],
    priors: &[f64],
    w: &[f64],
    target: &Matrix,
    order: usize,
    bounds: IntervalBounds,
) -> Result<f64> {
    weighted_cmd_with(source_by_class, priors, w, target, order, bounds, MixtureCentering::default())
}

pub fn weighted_cmd_with(
    source_by_class: &[Matrix],
    priors: &[f64],
    w: &[f64],
    target: &Matrix,
    order: usize,
    bounds: IntervalBounds,
    centering: MixtureCentering,
) -> Result<f64> {
    if source_by_class.len() != priors.len() {
        return Err(Error::contract(format!(
            "{} class blocks but {} priors",
            source_by_class.len(),
            priors.len()
        )));
    }
    check_class_weighting(priors, w)?;
    for (i, block) in source_by_class.iter().enumerate() {
        if block.rows() == 0 {
            return Err(Error::contract(format!("source class {i} has no samples")));
        }
        if block.cols() != target.cols() {
            return Err(Error::Dimension {
                op: "weighted_cmd",
                left: block.shape(),
                right: target.shape(),
            });
        }
    }
    let t = moments(target, order)?;
    let coef: Vec<f64> = w.iter().zip(priors).map(|(w, p)| w * p).collect();
    let dim = target.cols();

    let class_means: Vec<Vec<f64>> = source_by_class
        .iter()
        .map(|b| b.column_means().into_data())
        .collect();
    let mut mean = vec![0.0; dim];
    for (c, mu) in coef.iter().zip(&class_means) {
        mean.iter_mut().zip(mu).for_each(|(m, v)| *m += c * v);
    }

    let mut central = vec![vec![0.0; dim]; order.saturating_sub(1)];
    for ((block, c), mu) in source_by_class.iter().zip(&coef).zip(&class_means) {
        let center = match centering {
            MixtureCentering::Mixture => &mean,
            MixtureCentering::PerClass => mu,
        };
        for (acc, m) in central.iter_mut().zip(moments_about(block, center, order)) {
            acc.iter_mut().zip(&m).for_each(|(a, v)| *a += c * v);
        }
    }
    Ok(combine(&MomentStats { mean, central }, &t, bounds))
}

fn mean_neg_ln(values: impl Iterator<Item = f64>) -> Result<f64> {
    let mut n = 0usize;
    let mut total = 0.0;
    for v in values {
        total -= v.max(LOG_EPS).ln();
        n += 1;
    }
    if n == 0 {
        return Err(Error::contract("adversarial loss over an empty sample set"));
    }
    Ok(total / n as f64)
}

/// Discriminator loss: `mean_S[ln 1/D] + mean_T[ln 1/(1-D)]`, where `D` is
/// the predicted probability of the source domain.
pub fn adversarial_loss_d(d_source: &[f64], d_target: &[f64]) -> Result<f64> {
    Ok(mean_neg_ln(d_source.iter().copied())? + mean_neg_ln(d_target.iter().map(|d| 1.0 - d))?)
}

/// Discriminator loss with the source term reweighted class by class.
pub fn weighted_adversarial_loss_d<S: AsRef<[f64]>>(
    d_source_by_class: &[S],
    priors: &[f64],
    w: &[f64],
    d_target: &[f64],
) -> Result<f64> {
    if d_source_by_class.len() != priors.len() {
        return Err(Error::contract(format!(
            "{} class blocks but {} priors",
            d_source_by_class.len(),
            priors.len()
        )));
    }
    check_class_weighting(priors, w)?;
    let mut source = 0.0;
    for ((block, wi), pi) in d_source_by_class.iter().zip(w).zip(priors) {
        source += wi * pi * mean_neg_ln(block.as_ref().iter().copied())?;
    }
    Ok(source + mean_neg_ln(d_target.iter().map(|d| 1.0 - d))?)
}

/// `sup + alpha * inv`.
pub fn task_loss(sup: f64, inv: f64, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::contract(format!("alpha must be >= 0, got {alpha}")));
    }
    Ok(sup + alpha * inv)
}

/// The same losses recorded on a [`Tape`].
pub mod graph {
    use super::*;

    /// Per-column mean and centred powers of a node, orders `2..=order`.
    fn central_terms(tape: &mut Tape, x: NodeId, center: NodeId, order: usize) -> Result<Vec<NodeId>> {
        let centred = tape.sub(x, center)?;
        (2..=order)
            .map(|k| {
                let p = tape.powi(centred, k as i32);
                tape.mean_rows(p)
            })
            .collect()
    }

    fn combine(
        tape: &mut Tape,
        s_mean: NodeId,
        t_mean: NodeId,
        s_central: &[NodeId],
        t_central: &[NodeId],
        bounds: IntervalBounds,
    ) -> Result<NodeId> {
        let width = bounds.width();
        let d = tape.sub(s_mean, t_mean)?;
        let n = tape.norm2(d);
        let mut total = tape.scale(n, 1.0 / width);
        for (k, (&cs, &ct)) in s_central.iter().zip(t_central).enumerate() {
            let d = tape.sub(cs, ct)?;
            let n = tape.norm2(d);
            let term = tape.scale(n, 1.0 / width.powi(k as i32 + 2));
            total = tape.add(total, term)?;
        }
        Ok(total)
    }

    fn check_dims(tape: &Tape, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        let (va, vb) = (tape.value(a), tape.value(b));
        if va.cols() != vb.cols() {
            return Err(Error::Dimension {
                op,
                left: va.shape(),
                right: vb.shape(),
            });
        }
        if va.rows() == 0 || vb.rows() == 0 {
            return Err(Error::contract(format!("{op} over an empty sample set")));
        }
        Ok(())
    }

    pub fn cmd(
        tape: &mut Tape,
        source: NodeId,
        target: NodeId,
        order: usize,
        bounds: IntervalBounds,
    ) -> Result<NodeId> {
        check_dims(tape, "cmd", source, target)?;
        let s_mean = tape.mean_rows(source)?;
        let t_mean = tape.mean_rows(target)?;
        let s_c = central_terms(tape, source, s_mean, order)?;
        let t_c = central_terms(tape, target, t_mean, order)?;
        combine(tape, s_mean, t_mean, &s_c, &t_c, bounds)
    }

    /// Coefficients `w_i * priors_i` as `1 x 1` nodes, after validating the
    /// weighting held in `w` (a `1 x L` node).
    fn mixture_coefficients(tape: &mut Tape, priors: &[f64], w: NodeId) -> Result<Vec<NodeId>> {
        let wv = tape.value(w);
        if wv.rows() != 1 {
            return Err(Error::contract("class weight node must be a single row"));
        }
        check_class_weighting(priors, wv.data())?;
        let p = tape.constant(Matrix::row_vector(priors));
        let c = tape.mul(w, p)?;
        (0..priors.len()).map(|i| tape.slice_cols(c, i, 1)).collect()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn weighted_cmd(
        tape: &mut Tape,
        source_by_class: &[NodeId],
        priors: &[f64],
        w: NodeId,
        target: NodeId,
        order: usize,
        bounds: IntervalBounds,
        centering: MixtureCentering,
    ) -> Result<NodeId> {
        if source_by_class.len() != priors.len() {
            return Err(Error::contract(format!(
                "{} class blocks but {} priors",
                source_by_class.len(),
                priors.len()
            )));
        }
        for &b in source_by_class {
            check_dims(tape, "weighted_cmd", b, target)?;
        }
        let coef = mixture_coefficients(tape, priors, w)?;

        let class_means = source_by_class
            .iter()
            .map(|&b| tape.mean_rows(b))
            .collect::<Result<Vec<_>>>()?;
        let mut mean = tape.mul(class_means[0], coef[0])?;
        for (&mu, &c) in class_means.iter().zip(&coef).skip(1) {
            let term = tape.mul(mu, c)?;
            mean = tape.add(mean, term)?;
        }

        let mut central: Vec<Option<NodeId>> = vec![None; order.saturating_sub(1)];
        for ((&block, &c), &mu) in source_by_class.iter().zip(&coef).zip(&class_means) {
            let center = match centering {
                MixtureCentering::Mixture => mean,
                MixtureCentering::PerClass => mu,
            };
            for (slot, m) in central.iter_mut().zip(central_terms(tape, block, center, order)?) {
                let term = tape.mul(m, c)?;
                *slot = Some(match *slot {
                    Some(acc) => tape.add(acc, term)?,
                    None => term,
                });
            }
        }
        let central: Vec<NodeId> = central.into_iter().flatten().collect();

        let t_mean = tape.mean_rows(target)?;
        let t_c = central_terms(tape, target, t_mean, order)?;
        combine(tape, mean, t_mean, &central, &t_c, bounds)
    }

    /// `mean(-ln(max(x, eps)))` over every entry.
    fn mean_neg_ln(tape: &mut Tape, x: NodeId) -> Result<NodeId> {
        let l = tape.ln(x, LOG_EPS);
        let m = tape.mean(l)?;
        Ok(tape.scale(m, -1.0))
    }

    fn target_term(tape: &mut Tape, d_target: NodeId) -> Result<NodeId> {
        let neg = tape.scale(d_target, -1.0);
        let one_minus = tape.add_scalar(neg, 1.0);
        mean_neg_ln(tape, one_minus)
    }

    pub fn adversarial_loss_d(tape: &mut Tape, d_source: NodeId, d_target: NodeId) -> Result<NodeId> {
        let s = mean_neg_ln(tape, d_source)?;
        let t = target_term(tape, d_target)?;
        tape.add(s, t)
    }

    pub fn weighted_adversarial_loss_d(
        tape: &mut Tape,
        d_source_by_class: &[NodeId],
        priors: &[f64],
        w: NodeId,
        d_target: NodeId,
    ) -> Result<NodeId> {
        if d_source_by_class.len() != priors.len() {
            return Err(Error::contract(format!(
                "{} class blocks but {} priors",
                d_source_by_class.len(),
                priors.len()
            )));
        }
        let coef = mixture_coefficients(tape, priors, w)?;
        let mut total = target_term(tape, d_target)?;
        for (&block, &c) in d_source_by_class.iter().zip(&coef) {
            let m = mean_neg_ln(tape, block)?;
            let term = tape.mul(m, c)?;
            total = tape.add(total, term)?;
        }
        Ok(total)
    }

    pub fn task_loss(tape: &mut Tape, sup: NodeId, inv: NodeId, alpha: f64) -> Result<NodeId> {
        if !(alpha >= 0.0) {
            return Err(Error::contract(format!("alpha must be >= 0, got {alpha}")));
        }
        let scaled = tape.scale(inv, alpha);
        tape.add(sup, scaled)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn col(values: &[f64]) -> Matrix {
        Matrix::column_vector(values)
    }

    #[test]
    fn moments_hand_values() {
        let s = moments(&Matrix::filled(4, 3, 0.7), 5).unwrap();
        assert_eq!(s.mean, vec![0.7; 3]);
        assert!(s.central.iter().flatten().all(|&v| v.abs() < 1e-15));

        let s = moments(&col(&[0.0, 1.0]), 2).unwrap();
        assert_eq!(s.mean, vec![0.5]);
        assert_eq!(s.order(2), &[0.25]);

        let s = moments(&col(&[-1.0, 0.0, 1.0]), 3).unwrap();
        assert_eq!(s.mean, vec![0.0]);
        assert!((s.order(2)[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.order(3), &[0.0]);

        assert!(moments(&Matrix::zeros(0, 2), 3).is_err());
        assert!(moments(&col(&[1.0]), 0).is_err());
    }

    #[test]
    fn cmd_hand_values() {
        let u = IntervalBounds::unit();
        let s = col(&[0.0, 1.0]);
        let t = col(&[0.5, 0.5]);
        assert_eq!(cmd(&s, &s, 5, u).unwrap(), 0.0);
        assert_eq!(cmd(&s, &t, 1, u).unwrap(), 0.0);
        assert!((cmd(&s, &t, 2, u).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            cmd(&Matrix::zeros(2, 2), &Matrix::zeros(2, 3), 2, u),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn bounds_scale_terms() {
        // width 2: mean term halves, order-2 term quarters
        let s = col(&[0.0, 1.0]);
        let t = col(&[1.0, 1.0]);
        let b = IntervalBounds::new(-1.0, 1.0).unwrap();
        let expected = 0.5 / 2.0 + 0.25 / 4.0;
        assert!((cmd(&s, &t, 2, b).unwrap() - expected).abs() < 1e-15);
        assert!(IntervalBounds::new(1.0, 1.0).is_err());
    }

    #[test]
    fn weighted_cmd_mixture_mean() {
        let u = IntervalBounds::unit();
        let classes = [col(&[0.0]), col(&[1.0])];
        let target = col(&[0.0, 0.0, 0.0, 1.0]);
        let v = weighted_cmd(&classes, &[0.5, 0.5], &[1.5, 0.5], &target, 1, u).unwrap();
        assert!(v.abs() < 1e-15);

        // sweep w1 over (0, 2) with w2 = 2 - w1: the mean term is |1 - w1/2 - 0.25|
        let at_opt = 0.0;
        let mut prev_left = f64::INFINITY;
        for i in 1..150 {
            let w1 = i as f64 * 0.01;
            let v = weighted_cmd(&classes, &[0.5, 0.5], &[w1, 2.0 - w1], &target, 1, u).unwrap();
            assert!((v - (0.75 - 0.5 * w1).abs()).abs() < 1e-12);
            assert!(v > at_opt);
            assert!(v < prev_left);
            prev_left = v;
        }
        for i in 151..200 {
            let w1 = i as f64 * 0.01;
            let v = weighted_cmd(&classes, &[0.5, 0.5], &[w1, 2.0 - w1], &target, 1, u).unwrap();
            assert!(v > at_opt);
        }
    }

    #[test]
    fn weighted_cmd_ones_equals_pooled() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Matrix::random_uniform(6, 3, 1.0, &mut rng).map(|v| v.abs());
        let b = Matrix::random_uniform(2, 3, 1.0, &mut rng).map(|v| v.abs());
        let t = Matrix::random_uniform(5, 3, 1.0, &mut rng).map(|v| v.abs());
        let pooled = Matrix::vstack(&[&a, &b]).unwrap();
        let priors = [0.75, 0.25];
        for k in 1..=6 {
            let u = IntervalBounds::unit();
            let plain = cmd(&pooled, &t, k, u).unwrap();
            let mixed = weighted_cmd(&[a.clone(), b.clone()], &priors, &[1.0, 1.0], &t, k, u).unwrap();
            assert!((plain - mixed).abs() < 1e-12, "k={k}: {plain} vs {mixed}");
        }
        // per-class centering agrees only on the mean term
        let per_class = weighted_cmd_with(
            &[a.clone(), b.clone()],
            &priors,
            &[1.0, 1.0],
            &t,
            1,
            IntervalBounds::unit(),
            MixtureCentering::PerClass,
        )
        .unwrap();
        assert!((per_class - cmd(&pooled, &t, 1, IntervalBounds::unit()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn per_class_centering_drops_between_class_spread() {
        // classes {0} and {1}: within-class moments vanish, pooled variance is 0.25
        let classes = [col(&[0.0]), col(&[1.0])];
        let target = col(&[0.5]);
        let u = IntervalBounds::unit();
        let per_class =
            weighted_cmd_with(&classes, &[0.5, 0.5], &[1.0, 1.0], &target, 2, u, MixtureCentering::PerClass)
                .unwrap();
        let mixture =
            weighted_cmd_with(&classes, &[0.5, 0.5], &[1.0, 1.0], &target, 2, u, MixtureCentering::Mixture)
                .unwrap();
        assert_eq!(per_class, 0.0);
        assert!((mixture - 0.25).abs() < 1e-15);
    }

    #[test]
    fn weighted_cmd_contract_errors() {
        let u = IntervalBounds::unit();
        let t = col(&[0.5]);
        let ok = [col(&[0.0]), col(&[1.0])];
        assert!(weighted_cmd(&[col(&[0.0]), Matrix::zeros(0, 1)], &[0.5, 0.5], &[1.0, 1.0], &t, 2, u).is_err());
        assert!(weighted_cmd(&ok, &[0.5, 0.5], &[1.0, 0.9], &t, 2, u).is_err());
        assert!(weighted_cmd(&ok, &[0.5, 0.5], &[2.0, 0.0], &t, 2, u).is_err());
        assert!(weighted_cmd(&ok, &[0.5, 0.5], &[2.5, -0.5], &t, 2, u).is_err());
        assert!(weighted_cmd(&ok, &[1.0], &[1.0], &t, 2, u).is_err());
    }

    #[test]
    fn adversarial_hand_values() {
        assert_eq!(adversarial_loss_d(&[1.0, 1.0], &[0.0]).unwrap(), 0.0);
        let chance = adversarial_loss_d(&[0.5; 3], &[0.5; 4]).unwrap();
        assert!((chance - 2.0 * std::f64::consts::LN_2).abs() < 1e-10);
        let v = adversarial_loss_d(&[0.9, 0.8], &[0.3]).unwrap();
        let expected = (-(0.9f64).ln() - (0.8f64).ln()) / 2.0 - (0.7f64).ln();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.52092).abs() < 1e-5);
        // clamped at the boundary, never infinite
        assert!(adversarial_loss_d(&[0.0], &[1.0]).unwrap().is_finite());
        assert!(adversarial_loss_d(&[], &[0.5]).is_err());
    }

    #[test]
    fn weighted_adversarial_hand_values() {
        let target = [0.3, 0.4];
        let t_term = -((0.7f64).ln() + (0.6f64).ln()) / 2.0;

        // equal class sizes, priors empirical, w = 1: same as pooled
        let c1 = [0.9, 0.7];
        let c2 = [0.6, 0.2];
        let pooled = adversarial_loss_d(&[0.9, 0.7, 0.6, 0.2], &target).unwrap();
        let w = weighted_adversarial_loss_d(&[&c1[..], &c2[..]], &[0.5, 0.5], &[1.0, 1.0], &target).unwrap();
        assert!((pooled - w).abs() < 1e-15);

        let v = weighted_adversarial_loss_d(&[vec![0.9; 3], vec![0.6; 2]], &[0.5, 0.5], &[1.2, 0.8], &target)
            .unwrap();
        let expected = 0.6 * -(0.9f64).ln() + 0.4 * -(0.6f64).ln() + t_term;
        assert!((v - expected).abs() < 1e-14);

        // nearly all weight on class 1
        let v = weighted_adversarial_loss_d(&[vec![0.9], vec![0.6]], &[0.5, 0.5], &[2.0 - 1e-12, 1e-12], &target)
            .unwrap();
        assert!((v - (-(0.9f64).ln() + t_term)).abs() < 1e-10);

        assert!(weighted_adversarial_loss_d(&[vec![0.9], vec![0.6]], &[0.5, 0.5], &[1.0, 2.0], &target).is_err());
    }

    #[test]
    fn task_loss_values() {
        assert_eq!(task_loss(1.0, 2.0, 0.0).unwrap(), 1.0);
        assert_eq!(task_loss(1.0, 2.0, 1.0).unwrap(), 3.0);
        assert!(task_loss(1.0, 2.0, -0.1).is_err());
    }

    #[test]
    fn graph_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = IntervalBounds::unit();
        for _ in 0..10 {
            let a = Matrix::random_uniform(5, 4, 1.0, &mut rng).sigmoid();
            let b = Matrix::random_uniform(3, 4, 1.0, &mut rng).sigmoid();
            let t = Matrix::random_uniform(7, 4, 1.0, &mut rng).sigmoid();
            let priors = [0.4, 0.6];
            let w = [1.5, 2.0 / 3.0];

            let mut tape = Tape::new();
            let (na, nb, nt) = (tape.constant(a.clone()), tape.constant(b.clone()), tape.constant(t.clone()));
            let nw = tape.constant(Matrix::row_vector(&w));
            let plain = graph::cmd(&mut tape, na, nt, 5, u).unwrap();
            assert!((tape.scalar(plain).unwrap() - cmd(&a, &t, 5, u).unwrap()).abs() < 1e-12);

            for centering in [MixtureCentering::Mixture, MixtureCentering::PerClass] {
                let g = graph::weighted_cmd(&mut tape, &[na, nb], &priors, nw, nt, 5, u, centering).unwrap();
                let d = weighted_cmd_with(&[a.clone(), b.clone()], &priors, &w, &t, 5, u, centering).unwrap();
                assert!((tape.scalar(g).unwrap() - d).abs() < 1e-12);
            }

            let ds = a.slice_rows(0, 5).unwrap().map(|v| v.clamp(0.01, 0.99));
            let dsc: Vec<f64> = ds.data().iter().take(5).copied().collect();
            let dt: Vec<f64> = b.data().iter().take(3).copied().collect();
            let nds = tape.constant(Matrix::column_vector(&dsc));
            let ndt = tape.constant(Matrix::column_vector(&dt));
            let adv = graph::adversarial_loss_d(&mut tape, nds, ndt).unwrap();
            assert!((tape.scalar(adv).unwrap() - adversarial_loss_d(&dsc, &dt).unwrap()).abs() < 1e-12);

            let n1 = tape.constant(Matrix::column_vector(&dsc[..2]));
            let n2 = tape.constant(Matrix::column_vector(&dsc[2..]));
            let wadv = graph::weighted_adversarial_loss_d(&mut tape, &[n1, n2], &priors, nw, ndt).unwrap();
            let direct = weighted_adversarial_loss_d(&[&dsc[..2], &dsc[2..]], &priors, &w, &dt).unwrap();
            assert!((tape.scalar(wadv).unwrap() - direct).abs() < 1e-12);
        }
    }
}
