//! Trains the language-only baseline and the full joint model on a noisy
//! benchmark, then ranks held-out predictions and reports P@N. The full
//! model's precision/recall curve is written as CSV and SVG.

use hrere::benchmark::{generate_benchmark, BenchmarkConfig};
use hrere::eval::evaluate;
use hrere::kbe::KbeHyper;
use hrere::plot::curve_svg;
use hrere::training::{train, ModelConfig, TrainingConfig, Variant};

fn main() -> hrere::Result<()> {
    let bench = generate_benchmark(&BenchmarkConfig {
        entities: 80,
        relations: 6,
        triples: 600,
        train_bags: 600,
        test_bags: 300,
        na_pairs: 300,
        t: 3,
        l: 20,
        implicit_rate: 0.3,
        mislabel_rate: 0.1,
        ..BenchmarkConfig::default()
    })?;
    let kbe = KbeHyper {
        d_k: 20,
        pretrain_epochs: 100,
        ..KbeHyper::default()
    };
    let out = std::env::temp_dir();
    for variant in [Variant::Base, Variant::Full] {
        let config = TrainingConfig {
            variant,
            epochs: 15,
            lr1: 2e-3,
            t: 3,
            l: 20,
            ..TrainingConfig::default()
        };
        let (state, _) = train(&bench.train, &bench.pretrain_kb(), &config, &ModelConfig::default(), &kbe)?;
        let ev = evaluate(&state, &bench.test.bags, bench.kb.triple_set(), config.inference_alpha())?;
        let p_at: Vec<String> = ev.p_at.iter().map(|(n, p)| format!("P@{n}% {p:.3}")).collect();
        println!("{variant:<5} {} ({} ranked predictions)", p_at.join("  "), ev.predictions.len());
        if variant == Variant::Full {
            std::fs::write(out.join("hrere-example-pr.csv"), ev.curve.to_csv())?;
            std::fs::write(out.join("hrere-example-pr.svg"), curve_svg(&ev.curve, "full"))?;
            println!("curve written to {}", out.join("hrere-example-pr.{csv,svg}").display());
        }
    }
    Ok(())
}
