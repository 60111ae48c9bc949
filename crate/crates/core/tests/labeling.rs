use std::path::PathBuf;

use hiersum_core::datagen::{label_document, score_sentence, tune_rule_weights, WEIGHT_GRID};
use hiersum_core::textprep::{prepare_document, read_corpus, Document};

fn hand_labeled() -> Vec<Document> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/labeled20.jsonl");
    read_corpus(path).unwrap().iter().map(prepare_document).collect()
}

/// Best accuracy over the grid, trying every distinct score as threshold.
fn exhaustive_best(docs: &[Document]) -> f64 {
    let mut rows = Vec::new();
    for d in docs {
        for (i, s) in d.sentences.iter().enumerate() {
            rows.push((score_sentence(s, d.highlights(), i).vector(), d.labels.as_ref().unwrap()[i]));
        }
    }
    let mut best = 0usize;
    let sizes: Vec<usize> = WEIGHT_GRID.iter().map(|g| g.len()).collect();
    let total: usize = sizes.iter().product();
    for mut code in 0..total {
        let mut w = [0.0; 5];
        for f in 0..5 {
            w[f] = WEIGHT_GRID[f][code % sizes[f]];
            code /= sizes[f];
        }
        let scores: Vec<f64> = rows.iter().map(|(x, _)| (0..5).map(|f| w[f] * x[f]).sum()).collect();
        let mut thresholds = scores.clone();
        thresholds.push(f64::INFINITY);
        for t in thresholds {
            let correct = scores.iter().zip(&rows).filter(|(s, (_, y))| u8::from(**s >= t) == *y).count();
            best = best.max(correct);
        }
    }
    best as f64 / rows.len() as f64
}

#[test]
fn tuned_rules_reach_85_percent_on_hand_labeled_docs() {
    let docs = hand_labeled();
    assert_eq!(docs.len(), 20);
    let tuned = tune_rule_weights(&docs).unwrap();
    println!("tuned rule {:?} accuracy {:.3}", tuned.weights, tuned.accuracy);
    assert!(tuned.accuracy >= 0.85, "accuracy {}", tuned.accuracy);
    assert_eq!(tuned.accuracy, exhaustive_best(&docs));

    let (mut correct, mut total) = (0, 0);
    for d in &docs {
        let got = label_document(d, d.highlights(), &tuned.weights);
        let gold = d.labels.as_ref().unwrap();
        correct += got.iter().zip(gold).filter(|(a, b)| a == b).count();
        total += gold.len();
    }
    assert_eq!(correct as f64 / total as f64, tuned.accuracy);
}
