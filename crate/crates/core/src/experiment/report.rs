use std::fmt::Write as _;

use serde::Serialize;

use crate::model::{EpochRecord, Variant};

fn quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn join6(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(";")
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; zero for a single value.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

/// One (task, variant) cell aggregated over seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub task: String,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub final_w: Vec<Vec<f64>>,
    pub shift_degree: f64,
}

impl ResultRow {
    pub fn mean_acc(&self) -> f64 {
        mean(&self.accuracies)
    }

    pub fn std_acc(&self) -> f64 {
        sample_std(&self.accuracies)
    }

    /// Per-class mean of the final weights over seeds.
    pub fn mean_w(&self) -> Vec<f64> {
        let classes = self.final_w.first().map_or(0, Vec::len);
        (0..classes)
            .map(|c| mean(&self.final_w.iter().map(|w| w[c]).collect::<Vec<_>>()))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub const HEADER: &'static str = "task,variant,mean_acc,std_acc,seeds,shift_degree,w_final";

    pub fn row(&self, task: &str, variant: Variant) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.task == task && r.variant == variant)
    }

    /// `w_final` is the seed-mean weight vector, `;`-separated.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{},{:.6},{}",
                quote(&r.task),
                r.variant,
                r.mean_acc(),
                r.std_acc(),
                r.seeds.len(),
                r.shift_degree,
                join6(&r.mean_w())
            )
            .expect("string write");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub task: String,
    pub target_priors: Vec<f64>,
    pub shift_degree: f64,
    pub variant: Variant,
    pub mean_acc: f64,
    pub so_mean_acc: f64,
}

impl SweepRow {
    /// `(acc - acc_SO) / acc_SO`.
    pub fn rel_improvement(&self) -> f64 {
        (self.mean_acc - self.so_mean_acc) / self.so_mean_acc
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub const HEADER: &'static str = "task,shift_degree,variant,mean_acc,so_mean_acc,rel_improvement";

    /// One variant's curve in grid order.
    pub fn curve(&self, variant: Variant) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.variant == variant).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.6},{},{:.6},{:.6},{:.6}",
                quote(&r.task),
                r.shift_degree,
                r.variant,
                r.mean_acc,
                r.so_mean_acc,
                r.rel_improvement()
            )
            .expect("string write");
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CollapseRow {
    pub variant: Variant,
    pub seed: u64,
    pub record: EpochRecord,
}

/// Per-epoch trace of every (variant, seed) run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CollapseTable {
    pub num_classes: usize,
    pub rows: Vec<CollapseRow>,
}

impl CollapseTable {
    pub fn header(&self) -> String {
        let mut h = "variant,seed,epoch,majority_fraction,target_acc,sup_loss,inv_loss".to_string();
        for c in 0..self.num_classes {
            write!(h, ",mass_{c}").expect("string write");
        }
        h
    }

    /// Seed-mean majority fraction per epoch for `variant`.
    pub fn mean_majority_fraction(&self, variant: Variant) -> Vec<f64> {
        let rows: Vec<&CollapseRow> = self.rows.iter().filter(|r| r.variant == variant).collect();
        let epochs = rows.iter().map(|r| r.record.epoch).max().unwrap_or(0);
        (1..=epochs)
            .map(|e| {
                let v: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.record.epoch == e)
                    .map(|r| r.record.majority_fraction)
                    .collect();
                mean(&v)
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header();
        out.push('\n');
        for r in &self.rows {
            let e = &r.record;
            write!(
                out,
                "{},{},{},{:.6},{:.6},{:.6},{:.6}",
                r.variant, r.seed, e.epoch, e.majority_fraction, e.target_acc, e.sup_loss, e.inv_loss
            )
            .expect("string write");
            for m in &e.posterior_mass {
                write!(out, ",{m:.6}").expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(accs: &[f64]) -> ResultRow {
        ResultRow {
            task: "t".into(),
            variant: Variant::Cmd,
            seeds: (0..accs.len() as u64).collect(),
            accuracies: accs.to_vec(),
            final_w: vec![vec![1.0, 1.0]; accs.len()],
            shift_degree: 0.0,
        }
    }

    #[test]
    fn stats() {
        let r = row(&[0.9, 0.8, 0.7]);
        assert!((r.mean_acc() - 0.8).abs() < 1e-12);
        assert!((r.std_acc() - 0.1).abs() < 1e-12);
        assert_eq!(row(&[0.5]).std_acc(), 0.0);
    }

    #[test]
    fn csv_layout() {
        let t = ResultTable {
            rows: vec![row(&[0.5, 0.25])],
        };
        let csv = t.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(ResultTable::HEADER));
        assert_eq!(lines.next(), Some("t,CMD,0.375000,0.176777,2,0.000000,1.000000;1.000000"));
        assert_eq!(quote("a,b"), "\"a,b\"");
    }

    #[test]
    fn relative_improvement() {
        let r = SweepRow {
            task: "t".into(),
            target_priors: vec![0.5, 0.5],
            shift_degree: 1.0,
            variant: Variant::Cmd,
            mean_acc: 0.9,
            so_mean_acc: 0.8,
        };
        assert!((r.rel_improvement() - 0.125).abs() < 1e-15);
    }
}
