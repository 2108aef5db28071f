//! Pretrains ComplEx embeddings on a synthetic KB with 10% of its facts held
//! out, then compares held-out facts against random corruptions.

use hrere::kb::{generate_synthetic_kb, KnowledgeBase, Triple};
use hrere::kbe::{kb_relation_distribution, pretrain, KbeHyper};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> hrere::Result<()> {
    let kb = generate_synthetic_kb(100, 6, 1200, 11)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut triples = kb.triples().to_vec();
    triples.shuffle(&mut rng);
    let (held, kept) = triples.split_at(120);
    let train_kb = KnowledgeBase::new(kb.entity_symbols(), kb.relation_names(), kept.to_vec())?;

    let hyper = KbeHyper {
        d_k: 32,
        pretrain_epochs: 100,
        ..KbeHyper::default()
    };
    let table = pretrain(&train_kb, &hyper, 11)?;

    let corrupt: Vec<Triple> = held
        .iter()
        .map(|t| loop {
            let c = Triple::new(t.head, t.rel, rng.gen_range(0..kb.num_entities()));
            if c.head != c.tail && !kb.contains(&c) {
                break c;
            }
        })
        .collect();
    let mean = |ts: &[Triple]| ts.iter().map(|t| table.score(t.head, t.rel, t.tail)).sum::<f64>() / ts.len() as f64;
    println!("mean score: held-out facts {:.3}, corrupted tails {:.3}", mean(held), mean(&corrupt));

    // Unseen pairs lean toward NA, so rank only the relations of interest.
    let na = kb.na_id();
    let top_non_na = |h: usize, t: usize| -> hrere::Result<usize> {
        let p = kb_relation_distribution(&table, h, t)?;
        Ok((0..na).max_by(|&a, &b| p.probs[a].total_cmp(&p.probs[b])).unwrap())
    };
    let mut hits = 0;
    for t in held {
        hits += (top_non_na(t.head, t.tail)? == t.rel) as usize;
    }
    println!(
        "held-out facts whose relation ranks first among {na} relations: {hits}/{} (chance {:.0})",
        held.len(),
        held.len() as f64 / na as f64
    );

    let t = *held.iter().find(|t| top_non_na(t.head, t.tail).ok() == Some(t.rel)).unwrap_or(&held[0]);
    let p = kb_relation_distribution(&table, t.head, t.tail)?;
    println!("distribution for held-out pair ({}, {}), gold {}:", t.head, t.tail, kb.relations()[t.rel].name);
    for (r, prob) in p.probs.iter().enumerate() {
        println!("  {:<4} {prob:.3}", kb.relations()[r].name);
    }
    Ok(())
}
