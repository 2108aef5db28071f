//! Joint training of the language model and the KB embedding on a small
//! noise-free benchmark, printing the per-epoch loss terms.

use hrere::benchmark::{generate_benchmark, BenchmarkConfig};
use hrere::eval::bag_accuracy;
use hrere::kbe::KbeHyper;
use hrere::training::{loss_log_csv, train, ModelConfig, TrainingConfig, Variant};

fn main() -> hrere::Result<()> {
    let bench = generate_benchmark(&BenchmarkConfig {
        entities: 80,
        relations: 6,
        triples: 600,
        train_bags: 600,
        test_bags: 200,
        na_pairs: 300,
        t: 3,
        l: 20,
        ..BenchmarkConfig::default()
    })?;
    let config = TrainingConfig {
        variant: Variant::Full,
        epochs: 15,
        lr1: 2e-3,
        t: 3,
        l: 20,
        ..TrainingConfig::default()
    };
    let kbe = KbeHyper {
        d_k: 20,
        pretrain_epochs: 100,
        ..KbeHyper::default()
    };
    let (state, log) = train(&bench.train, &bench.pretrain_kb(), &config, &ModelConfig::default(), &kbe)?;
    print!("{}", loss_log_csv(&log));

    let alpha = config.inference_alpha();
    println!(
        "train accuracy: combined {:.3}, language only {:.3}, KB only {:.3}",
        bag_accuracy(&state, &bench.train.bags, alpha)?,
        bag_accuracy(&state, &bench.train.bags, 1.0)?,
        bag_accuracy(&state, &bench.train.bags, 0.0)?
    );
    Ok(())
}
