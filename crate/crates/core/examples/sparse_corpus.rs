//! Writing labelled pools in the sparse line format, then drawing a task
//! with fixed class counts and a test set that keeps the target ratio.

use wdirl::data::{build_task, load_labeled, save_labeled, shift_degree, LabeledDataset, SparseExample, TaskSpec};

fn pool(offset: u32) -> wdirl::Result<LabeledDataset> {
    let mut examples = Vec::new();
    let mut labels = Vec::new();
    for i in 0..400u32 {
        let y = (i % 2) as usize;
        let word = offset + 2 * (i % 5) + y as u32;
        examples.push(SparseExample::new(vec![word, 20 + i % 3], vec![1.0, 0.5])?);
        labels.push(y);
    }
    LabeledDataset::new(examples, labels, 2, 32)
}

fn main() -> wdirl::Result<()> {
    let dir = std::env::temp_dir().join("wdirl-sparse-example");
    std::fs::create_dir_all(&dir)?;
    save_labeled(dir.join("books.svm"), &pool(0)?)?;
    save_labeled(dir.join("kitchen.svm"), &pool(1)?)?;
    println!("first line: {}", std::fs::read_to_string(dir.join("books.svm"))?.lines().next().unwrap_or(""));

    let source_pool = load_labeled(dir.join("books.svm"), 32)?;
    let target_pool = load_labeled(dir.join("kitchen.svm"), 32)?;
    let spec = TaskSpec {
        source_counts: vec![100, 100],
        target_counts: vec![150, 50],
        test_matches_target_ratio: true,
        seed: 7,
    };
    let task = build_task(&source_pool, &target_pool, &spec)?;
    println!(
        "source {:?}, target {}, test {:?}, shift degree {:.2}",
        task.source.class_counts(),
        task.target.len(),
        task.test.class_counts(),
        shift_degree(&task.source.priors(), &task.test.priors())?
    );
    Ok(())
}
