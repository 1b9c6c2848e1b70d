use emoint::charlm::{train_char_lm, CharLmConfig};
use emoint::nn::CellKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scaled_config(kind: CellKind, steps: usize) -> CharLmConfig {
    CharLmConfig {
        cell_kind: kind,
        hidden_dim: 16,
        embedding_dim: Some(8),
        lr: 0.01,
        batch: 16,
        bptt_len: 32,
        steps,
        seed: 7,
        ..CharLmConfig::default()
    }
}

fn random_corpus(seed: u64, tweets: usize, len: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..tweets)
        .map(|_| (0..len).map(|_| ['a', 'b', 'c', 'd'][rng.gen_range(0..4)]).collect())
        .collect()
}

#[test]
fn deterministic_pattern_is_learned() {
    let corpus = vec!["abab".to_string(); 1000];
    for kind in [CellKind::Lstm, CellKind::Mlstm] {
        let run = train_char_lm(&corpus, &scaled_config(kind, 500)).unwrap();
        let ce = run.model.cross_entropy(&corpus).unwrap();
        println!("{kind}: abab cross-entropy {ce:.5} after {} steps", run.step_losses.len());
        assert!(ce < 0.05, "{kind}: {ce}");
    }
}

// Long tweets keep the <eos> share small, so the floor is close to ln 4.
#[test]
fn random_source_stays_at_entropy_floor() {
    let train = random_corpus(1, 1000, 500);
    let held_out = random_corpus(2, 40, 500);
    let run = train_char_lm(&train, &scaled_config(CellKind::Lstm, 500)).unwrap();
    let ce = run.model.cross_entropy(&held_out).unwrap();
    let tail: f64 = run.step_losses[450..].iter().sum::<f64>() / 50.0;
    println!("uniform 4-char held-out cross-entropy {ce:.5}, last 50 training steps {tail:.5}");
    assert!((ce - 4f64.ln()).abs() < 0.05, "{ce}");
}

#[test]
fn seeded_runs_give_identical_losses() {
    let corpus = random_corpus(3, 20, 30);
    let a = train_char_lm(&corpus, &scaled_config(CellKind::Mlstm, 30)).unwrap();
    let b = train_char_lm(&corpus, &scaled_config(CellKind::Mlstm, 30)).unwrap();
    assert_eq!(a.step_losses, b.step_losses);
    assert_eq!(a.model, b.model);
}
