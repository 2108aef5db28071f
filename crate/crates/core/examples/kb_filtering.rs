//! Builds a synthetic KB, keeps its best-connected entities, withholds a few
//! entity pairs and round-trips the result through the TSV format.

use hrere::kb::{generate_synthetic_kb, KnowledgeBase};

fn main() -> hrere::Result<()> {
    let kb = generate_synthetic_kb(60, 4, 300, 7)?;
    println!(
        "generated: {} entities, {} relations (+NA at id {}), {} triples",
        kb.num_entities(),
        kb.num_relations(),
        kb.na_id(),
        kb.triples().len()
    );

    let top = kb.degree_filter(30)?;
    println!("top 30 entities by degree keep {} triples", top.triples().len());

    let held_out: Vec<(usize, usize)> = top.triples().iter().take(10).map(|t| t.unordered_pair()).collect();
    let train = top.remove_test_pairs(&held_out);
    println!("withholding {} pairs leaves {} triples", held_out.len(), train.triples().len());

    let path = std::env::temp_dir().join("hrere-example-kb.tsv");
    train.save(&path)?;
    let back = KnowledgeBase::parse_tsv(&std::fs::read_to_string(&path)?)?;
    println!("reloaded {} triples from {}", back.triples().len(), path.display());
    for t in back.triples().iter().take(3) {
        let e = back.entities();
        println!("  {} --{}--> {}", e[t.head].symbol, back.relations()[t.rel].name, e[t.tail].symbol);
    }
    Ok(())
}
