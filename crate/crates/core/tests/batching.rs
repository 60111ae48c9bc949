use hiersum_core::encoder::{Encoder, ModelConfig};
use hiersum_core::tensor::{Graph, Mode, ParamStore, RngStream};
use hiersum_core::textprep::{build_vocab, pad_batch, BatchLimits, Document};

fn config(vocab: usize) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab,
        word_dim: 6,
        sent_dim: 8,
        doc_dim: 10,
        kernel_widths: vec![1, 2, 3],
        mlp_dim: 8,
        dropout: 0.5,
        init_range: 0.2,
        feed_attention: false,
    }
}

#[test]
fn masked_batch_matches_per_document_reader() {
    let docs = vec![
        Document::from_strs("a", &["the cat sat on the mat", "it purred"]),
        Document::from_strs("b", &["dogs bark", "birds sing at dawn", "the end", "a cat ran", "mat"]),
        Document::from_strs("c", &["one two three four five six seven eight"]),
    ];
    let vocab = build_vocab(&docs, 1, 0);
    let cfg = config(vocab.len());
    let mut store = ParamStore::<f32>::new();
    let enc = Encoder::new(&mut store, &cfg, &mut RngStream::new(3));
    let refs: Vec<&Document> = docs.iter().collect();
    let batch = pad_batch(&refs, &vocab, BatchLimits::default());

    let mut g = Graph::new();
    let batched = enc.encode_batch(&mut g, &store, &batch).unwrap();
    for (d, doc) in docs.iter().enumerate() {
        let ids: Vec<Vec<usize>> = doc.sentences.iter().map(|s| vocab.encode_all(s)).collect();
        let mut g1 = Graph::new();
        let single = enc.encode(&mut g1, &store, &ids, Mode::Eval, &mut RngStream::new(0)).unwrap();
        let (a, b) = (g.value(batched[d].states), g1.value(single.states));
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-5, "doc {d}: {x} vs {y}");
        }
        for (x, y) in g.value(batched[d].last_c).iter().zip(g1.value(single.last_c)) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}

#[test]
fn padding_sentences_do_not_change_real_states() {
    let short = Document::from_strs("a", &["x y z", "y"]);
    let long = Document::from_strs("b", &["x", "y", "z", "x y", "z z", "y x"]);
    let vocab = build_vocab(&[short.clone(), long.clone()], 1, 0);
    let mut store = ParamStore::<f64>::new();
    let enc = Encoder::new(&mut store, &config(vocab.len()), &mut RngStream::new(8));
    let alone = pad_batch(&[&short], &vocab, BatchLimits::default());
    let padded = pad_batch(&[&short, &long], &vocab, BatchLimits::default());
    let mut g = Graph::new();
    let a = enc.encode_batch(&mut g, &store, &alone).unwrap();
    let b = enc.encode_batch(&mut g, &store, &padded).unwrap();
    assert_eq!(g.value(a[0].states), g.value(b[0].states));
}
