//! Runs the BiLSTM sentence encoder and selective attention over one bag of a
//! small benchmark, before and after a few epochs of language-only training,
//! and prints attention weights and the output distribution.

use hrere::benchmark::{generate_benchmark, BenchmarkConfig};
use hrere::encoder::{forward_bag, QueryMode};
use hrere::kbe::ComplexEmbeddingTable;
use hrere::supervision::{Bag, LabeledDataset};
use hrere::training::{train_state, ModelConfig, ModelState, TrainingConfig, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn show(label: &str, state: &ModelState, data: &LabeledDataset, bag: &Bag) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cache = forward_bag(bag, &state.language, QueryMode::Mean, false, &mut rng);
    println!("{label}");
    println!("  sentence weights       {:.3?}", cache.sentence_weights);
    println!("  relation probabilities {:.3?} (gold {})", cache.probs, bag.rel);
    let s = &bag.sentences[0];
    let words: Vec<&str> = s.tokens[..s.real_len()].iter().map(|&t| data.vocab.token(t)).collect();
    let weights = cache.sentences[0].attention();
    let pairs: Vec<String> = words.iter().zip(weights).map(|(w, a)| format!("{w}:{a:.2}")).collect();
    println!("  word attention         {}", pairs.join(" "));
}

fn main() -> hrere::Result<()> {
    let bench = generate_benchmark(&BenchmarkConfig {
        entities: 40,
        relations: 4,
        triples: 150,
        train_bags: 200,
        test_bags: 20,
        na_pairs: 40,
        t: 3,
        l: 16,
        ..BenchmarkConfig::default()
    })?;
    let data = &bench.train;
    // The KB side is unused by the base variant; any table of the right shape will do.
    let knowledge = ComplexEmbeddingTable::zeros(data.num_entities, data.num_relations + 1, 4);
    let model = ModelConfig {
        d_s: 16,
        ..ModelConfig::default()
    };
    let state = ModelState::init(data, knowledge, &model, None, 5)?;

    // Prefer a bag whose sentences differ, so sentence attention has a choice.
    let bag = data
        .bags
        .iter()
        .find(|b| b.rel < data.num_relations && b.sentences.iter().any(|s| *s != b.sentences[0]))
        .unwrap_or(&data.bags[0]);
    show("untrained:", &state, data, bag);

    let config = TrainingConfig {
        variant: Variant::Base,
        epochs: 10,
        lr1: 5e-3,
        batch_size: 20,
        t: 3,
        l: 16,
        ..TrainingConfig::default()
    };
    let (state, log) = train_state(state, data, &config)?;
    show(&format!("after {} epochs (J_L {:.3}):", log.len(), log.last().unwrap().j_l), &state, data, bag);
    Ok(())
}
