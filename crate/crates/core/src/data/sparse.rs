//! Line-oriented sparse format: `label idx:val idx:val ...`, 0-based
//! indices in increasing order, labels are 0-based class indices. Unlabelled
//! files omit the label token. Blank lines are skipped and `#` starts a
//! trailing comment.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{LabeledDataset, SparseExample, UnlabeledDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum SparseFile {
    Labeled(LabeledDataset),
    Unlabeled(UnlabeledDataset),
}

pub fn load_sparse(path: impl AsRef<Path>, feature_dim: usize, labeled: bool) -> Result<SparseFile> {
    if labeled {
        load_labeled(path, feature_dim).map(SparseFile::Labeled)
    } else {
        load_unlabeled(path, feature_dim).map(SparseFile::Unlabeled)
    }
}

/// Loads a labelled file. The class count is one more than the largest
/// label seen.
pub fn load_labeled(path: impl AsRef<Path>, feature_dim: usize) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut examples = Vec::new();
    let mut labels = Vec::new();
    for_each_line(path, |line_no, tokens| {
        let mut tokens = tokens.into_iter();
        let Some(label) = tokens.next() else {
            return Ok(());
        };
        let label: usize = label.parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: format!("label `{label}` is not a class index"),
        })?;
        examples.push(parse_features(path, line_no, tokens, feature_dim)?);
        labels.push(label);
        Ok(())
    })?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(examples, labels, num_classes, feature_dim)
}

pub fn load_unlabeled(path: impl AsRef<Path>, feature_dim: usize) -> Result<UnlabeledDataset> {
    let path = path.as_ref();
    let mut examples = Vec::new();
    for_each_line(path, |line_no, tokens| {
        if tokens.is_empty() {
            return Ok(());
        }
        examples.push(parse_features(path, line_no, tokens.into_iter(), feature_dim)?);
        Ok(())
    })?;
    UnlabeledDataset::new(examples, feature_dim)
}

fn for_each_line(path: &Path, mut f: impl FnMut(usize, Vec<&str>) -> Result<()>) -> Result<()> {
    let reader = BufReader::new(File::open(path)?);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        f(i + 1, content.split_whitespace().collect())?;
    }
    Ok(())
}

fn parse_features<'a>(
    path: &Path,
    line: usize,
    tokens: impl Iterator<Item = &'a str>,
    feature_dim: usize,
) -> Result<SparseExample> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for tok in tokens {
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| parse_err(format!("token `{tok}` is not idx:val")))?;
        let idx: usize = idx
            .parse()
            .map_err(|_| parse_err(format!("feature index `{idx}` is not an integer")))?;
        let val: f64 = val
            .parse()
            .map_err(|_| parse_err(format!("feature value `{val}` is not a number")))?;
        if !val.is_finite() {
            return Err(parse_err(format!("feature value `{val}` is not finite")));
        }
        if idx >= feature_dim {
            return Err(Error::Range {
                path: path.to_path_buf(),
                line,
                index: idx,
                dim: feature_dim,
            });
        }
        if indices.last().is_some_and(|&last: &u32| last as usize >= idx) {
            return Err(parse_err(format!("feature index {idx} is not increasing")));
        }
        indices.push(idx as u32);
        values.push(val);
    }
    SparseExample::new(indices, values)
}

fn write_features(out: &mut impl Write, ex: &SparseExample) -> std::io::Result<()> {
    for (i, v) in ex.indices().iter().zip(ex.values()) {
        // `{}` on f64 prints the shortest string that parses back exactly
        write!(out, " {i}:{v}")?;
    }
    Ok(())
}

pub fn save_labeled(path: impl AsRef<Path>, ds: &LabeledDataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (ex, y) in ds.examples().iter().zip(ds.labels()) {
        write!(out, "{y}")?;
        write_features(&mut out, ex)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_unlabeled(path: impl AsRef<Path>, ds: &UnlabeledDataset) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for ex in ds.examples() {
        let mut line = Vec::new();
        write_features(&mut line, ex)?;
        // no label token, so drop the leading separator
        out.write_all(line.strip_prefix(b" ").unwrap_or(&line))?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_a_labeled_line() {
        let f = write_tmp("1 0:2.0 4:1.0\n");
        let ds = load_labeled(f.path(), 5).unwrap();
        assert_eq!(ds.labels(), &[1]);
        assert_eq!(ds.examples()[0].indices(), &[0, 4]);
        assert_eq!(ds.examples()[0].values(), &[2.0, 1.0]);
        assert_eq!(ds.num_classes(), 2);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let f = write_tmp("");
        assert!(load_labeled(f.path(), 10).unwrap().is_empty());
        assert!(load_unlabeled(f.path(), 10).unwrap().is_empty());
    }

    #[test]
    fn comments_and_blank_lines() {
        let f = write_tmp("# header\n\n0 1:1 # first\n1\n");
        let ds = load_labeled(f.path(), 3).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.examples()[1].nnz(), 0);
    }

    #[test]
    fn malformed_lines_report_line_number() {
        for (content, line) in [
            ("0 1:1\nx 1:1\n", 2),
            ("0 1:1\n0 1:1\n1 2-3\n", 3),
            ("0 a:1\n", 1),
            ("0 1:zz\n", 1),
            ("0 3:1 2:1\n", 1),
            ("0 1:inf\n", 1),
        ] {
            let f = write_tmp(content);
            match load_labeled(f.path(), 10) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{content:?}"),
                other => panic!("expected parse error for {content:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn index_out_of_range() {
        let f = write_tmp("0 1:1\n1 5:1\n");
        assert!(matches!(
            load_labeled(f.path(), 5),
            Err(Error::Range { line: 2, index: 5, dim: 5, .. })
        ));
    }

    #[test]
    fn unlabeled_round_trip() {
        let f = write_tmp("0:1.5 3:-2\n\n1:0.25\n");
        let ds = load_unlabeled(f.path(), 4).unwrap();
        assert_eq!(ds.len(), 2);
        let out = tempfile::NamedTempFile::new().unwrap();
        save_unlabeled(out.path(), &ds).unwrap();
        assert_eq!(load_unlabeled(out.path(), 4).unwrap(), ds);
        match load_sparse(out.path(), 4, false).unwrap() {
            SparseFile::Unlabeled(u) => assert_eq!(u, ds),
            SparseFile::Labeled(_) => panic!("expected unlabeled"),
        }
    }

    fn dataset_strategy() -> impl Strategy<Value = LabeledDataset> {
        let example = prop::collection::btree_map(0u32..50, -1e6f64..1e6, 0..8);
        prop::collection::vec((example, 0usize..4), 1..20).prop_map(|rows| {
            let mut examples = Vec::new();
            let mut labels = Vec::new();
            for (feat, y) in rows {
                let (i, v): (Vec<u32>, Vec<f64>) = feat.into_iter().unzip();
                examples.push(SparseExample::new(i, v).unwrap());
                labels.push(y);
            }
            let classes = labels.iter().max().unwrap() + 1;
            LabeledDataset::new(examples, labels, classes, 50).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn save_then_load_is_identity(ds in dataset_strategy()) {
            let out = tempfile::NamedTempFile::new().unwrap();
            save_labeled(out.path(), &ds).unwrap();
            prop_assert_eq!(load_labeled(out.path(), 50).unwrap(), ds);
        }
    }
}
