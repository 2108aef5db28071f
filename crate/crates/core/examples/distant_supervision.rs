//! Generates a templated corpus for a synthetic KB and aligns it into
//! fixed-size bags: one bag set per KB relation of a pair, NA otherwise.

use hrere::kb::generate_synthetic_kb;
use hrere::supervision::{align_corpus, generate_synthetic_corpus, CorpusParams, Templates, Vocab};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hrere::Result<()> {
    let kb = generate_synthetic_kb(50, 4, 200, 3)?;
    let templates = Templates::synthetic(kb.num_relations());
    let corpus = generate_synthetic_corpus(
        &kb,
        &templates,
        &CorpusParams {
            max_sentences_per_fact: 3,
            na_pairs: 80,
            implicit_rate: 0.2,
            mislabel_rate: 0.05,
            seed: 3,
        },
    )?;
    println!("{} raw sentences, e.g.", corpus.len());
    for s in corpus.iter().take(3) {
        println!("  [{} | {}] {}", s.head, s.tail, s.tokens.join(" "));
    }

    let vocab = Vocab::from_corpus(&corpus);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (dataset, stats) = align_corpus(&kb, &corpus, &vocab, 3, 20, 0.3, &mut rng)?;
    let na = dataset.bags.iter().filter(|b| b.rel == dataset.num_relations).count();
    println!(
        "{} bags of T={} sentences (L={}), {na} labeled NA; vocab {}",
        dataset.bags.len(),
        dataset.t,
        dataset.l,
        vocab.len()
    );
    println!("{stats:?}");

    let bag = &dataset.bags[0];
    println!("first bag: ({}, {}) labeled {}", bag.head, bag.tail, kb.relations()[bag.rel].name);
    for s in &bag.sentences {
        let words: Vec<&str> = s.tokens[..s.real_len()].iter().map(|&id| vocab.token(id)).collect();
        println!("  head@{} tail@{}: {}", s.head_pos, s.tail_pos, words.join(" "));
    }
    Ok(())
}
