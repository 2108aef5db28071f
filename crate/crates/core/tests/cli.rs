use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hrere::benchmark::load_pairs;
use hrere::commands::{load_pretrain_kb, KB_FILE, TEST_FILE, TEST_PAIRS_FILE, TRAIN_FILE};
use hrere::kb::{load_kb, unordered};
use hrere::supervision::LabeledDataset;

const SMALL: &str = "\
entities=40
relations=4
triples=150
train_bags=120
test_bags=300
T=2
L=12
na_pairs=60
d_w=8
d_p=4
d_s=6
d_k=8
pretrain_epochs=5
epochs=1
batch_size=20
";

fn hrere(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrere"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .env("HRERE_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = hrere(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn setup(extra: &str) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.txt");
    let overridden: Vec<&str> = extra.lines().filter_map(|l| l.split('=').next()).collect();
    let base: String = SMALL
        .lines()
        .filter(|l| !overridden.contains(&l.split('=').next().unwrap()))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&cfg, format!("{base}{extra}")).unwrap();
    let cfg = cfg.display().to_string();
    (dir, cfg)
}

fn full_pipeline(dir: &Path, cfg: &str) {
    ok(dir, &["gen-data", "--config", cfg]);
    ok(dir, &["pretrain-kbe", "--config", cfg]);
    for v in ["base", "naive", "full", "weston"] {
        ok(dir, &["train", "--config", cfg, "--variant", v]);
        ok(dir, &["eval", "--config", cfg, "--variant", v]);
        ok(dir, &["plot", "--config", cfg, "--variant", v]);
    }
}

/// All files of a directory; manifests with their timing field removed.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name == "config.txt" {
            continue;
        }
        let mut bytes = fs::read(&path).unwrap();
        if name.starts_with("manifest-") {
            let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
            v.as_object_mut().unwrap().remove("timings_ms");
            bytes = serde_json::to_vec(&v).unwrap();
        }
        out.insert(name, bytes);
    }
    out
}

#[test]
fn gen_data_keeps_test_pairs_out_of_pretraining() {
    let (dir, cfg) = setup("");
    ok(dir.path(), &["gen-data", "--config", &cfg]);
    let kb = load_kb(dir.path().join(KB_FILE)).unwrap();
    let test_pairs: HashSet<(usize, usize)> =
        load_pairs(&kb, dir.path().join(TEST_PAIRS_FILE)).unwrap().into_iter().collect();
    assert!(!test_pairs.is_empty());
    let pretrain_pairs: HashSet<(usize, usize)> = load_pretrain_kb(dir.path())
        .unwrap()
        .triples()
        .iter()
        .map(|t| t.unordered_pair())
        .collect();
    assert!(test_pairs.is_disjoint(&pretrain_pairs));

    let train = LabeledDataset::load(dir.path().join(TRAIN_FILE)).unwrap();
    let test = LabeledDataset::load(dir.path().join(TEST_FILE)).unwrap();
    assert!(train.bags.iter().all(|b| !test_pairs.contains(&unordered(b.head, b.tail))));
    assert!(test.bags.iter().all(|b| test_pairs.contains(&unordered(b.head, b.tail))));
    assert!(dir.path().join("manifest-gen-data.json").exists());
}

#[test]
fn every_command_is_reproducible() {
    let (a, cfg_a) = setup("");
    let (b, cfg_b) = setup("");
    full_pipeline(a.path(), &cfg_a);
    full_pipeline(b.path(), &cfg_b);
    let (sa, sb) = (snapshot(a.path()), snapshot(b.path()));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (name, bytes) in &sa {
        assert!(bytes == &sb[name], "{name} differs between runs");
    }
    for expected in ["kbe.bin", "model-full-seed1.bin", "loss-full-seed1.csv", "pr-full-seed1.csv", "pat-full-seed1.csv", "pat-full-mean.csv", "pr-full-seed1.svg"] {
        assert!(sa.contains_key(expected), "missing {expected}");
    }
    let svg = String::from_utf8(sa["pr-weston-seed1.svg"].clone()).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);

    // a different seed changes the data
    let (c, cfg_c) = setup("");
    ok(c.path(), &["gen-data", "--config", &cfg_c, "--seed", "2"]);
    assert_ne!(fs::read(c.path().join(KB_FILE)).unwrap(), sa[KB_FILE]);
}

#[test]
fn zero_na_rate_yields_no_na_bags() {
    let (dir, cfg) = setup("na_rate=0\n");
    ok(dir.path(), &["gen-data", "--config", &cfg]);
    for file in [TRAIN_FILE, TEST_FILE] {
        let ds = LabeledDataset::load(dir.path().join(file)).unwrap();
        assert!(!ds.bags.is_empty());
        assert!(ds.bags.iter().all(|b| b.rel != ds.num_relations), "{file}");
    }
}

#[test]
fn base_needs_no_kb_embedding_but_full_does() {
    let (dir, cfg) = setup("");
    ok(dir.path(), &["gen-data", "--config", &cfg]);
    ok(dir.path(), &["train", "--config", &cfg, "--variant", "base"]);
    ok(dir.path(), &["eval", "--config", &cfg, "--variant", "base"]);
    let out = hrere(dir.path(), &["train", "--config", &cfg, "--variant", "full"]);
    assert_eq!(out.status.code(), Some(2));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("manifest-train-full.json")).unwrap()).unwrap();
    assert!(manifest["status"].as_str().unwrap().starts_with("error"));
}

#[test]
fn untrained_model_scores_near_base_rate() {
    // Balanced relations, so that no single relation's frequency dominates the
    // ranking of a near-constant untrained model.
    let (dir, cfg) = setup("entities=100\nrelations=12\ntriples=1200\ntest_bags=800\nepochs=0\npretrain_epochs=0\nruns=5\n");
    ok(dir.path(), &["gen-data", "--config", &cfg]);
    ok(dir.path(), &["pretrain-kbe", "--config", &cfg]);
    ok(dir.path(), &["train", "--config", &cfg, "--variant", "full"]);
    ok(dir.path(), &["eval", "--config", &cfg, "--variant", "full"]);
    for seed in 1..=5 {
        let curve = fs::read_to_string(dir.path().join(format!("pr-full-seed{seed}.csv"))).unwrap();
        // precision over the whole list is the positive base rate
        let base_rate: f64 = curve.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
        let pat = fs::read_to_string(dir.path().join(format!("pat-full-seed{seed}.csv"))).unwrap();
        let p10: f64 = pat.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert!((p10 - base_rate).abs() <= 0.15, "seed {seed}: P@10% {p10} vs base rate {base_rate}");
    }
}

#[test]
fn alpha_override_and_variant_mismatch() {
    let (dir, cfg) = setup("");
    ok(dir.path(), &["gen-data", "--config", &cfg]);
    ok(dir.path(), &["pretrain-kbe", "--config", &cfg]);
    ok(dir.path(), &["train", "--config", &cfg, "--variant", "full"]);
    ok(dir.path(), &["eval", "--config", &cfg, "--variant", "full"]);
    let default_curve = fs::read(dir.path().join("pr-full-seed1.csv")).unwrap();
    ok(dir.path(), &["eval", "--config", &cfg, "--variant", "full", "--alpha", "0"]);
    let kb_only = fs::read(dir.path().join("pr-full-seed1.csv")).unwrap();
    assert_ne!(default_curve, kb_only);

    fs::copy(dir.path().join("model-full-seed1.bin"), dir.path().join("model-naive-seed1.bin")).unwrap();
    let out = hrere(dir.path(), &["eval", "--config", &cfg, "--variant", "naive"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));
}

#[test]
fn exit_codes() {
    let (dir, cfg) = setup("");
    assert_eq!(hrere(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(hrere(dir.path(), &["train", "--variant", "best"]).status.code(), Some(1));
    assert_eq!(hrere(dir.path(), &["pretrain-kbe", "--config", &cfg]).status.code(), Some(2));
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "no_such_key=1\n").unwrap();
    assert_eq!(hrere(dir.path(), &["gen-data", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    fs::write(&bad, format!("{SMALL}lr1=nan\n")).unwrap();
    assert_eq!(hrere(dir.path(), &["gen-data", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(hrere(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn non_finite_training_exits_with_three() {
    let (dir, cfg) = setup("lr1=1e300\nepochs=3\n");
    ok(dir.path(), &["gen-data", "--config", &cfg]);
    let out = hrere(dir.path(), &["train", "--config", &cfg, "--variant", "base"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
