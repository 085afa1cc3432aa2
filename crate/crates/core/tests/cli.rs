use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use serde_json::Value;
use synthleak::planted::{generate, PlantedConfig};
use synthleak::run::{AttackReport, EvaluationDocument};
use synthleak::selection::{rank_by_density, select_recovered, NeighborIndex};
use synthleak::tabular::{load_table, Encoder, Schema};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synthleak"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn small_benchmark(dir: &Path) {
    let b = generate(&PlantedConfig {
        n_train: 200,
        n_planted: 10,
        copies: 4,
        n_synthetic: 600,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    std::fs::write(dir.join("schema.toml"), b.schema.to_toml_string()).unwrap();
    b.train.write_csv(dir.join("train.csv")).unwrap();
    b.synthetic.write_csv(dir.join("synthetic.csv")).unwrap();
}

fn error_record(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().rev().find(|l| l.starts_with('{')).expect("json error on stderr");
    serde_json::from_str(line).unwrap()
}

fn fixed_numbers(v: &Value, path: &str, bad: &mut Vec<String>) {
    match v {
        Value::Number(n) => {
            if !synthleak::decimal::is_fixed(&n.to_string()) && n.as_u64().is_none() {
                bad.push(format!("{path}={n}"));
            }
        }
        Value::Array(a) => a.iter().for_each(|x| fixed_numbers(x, path, bad)),
        Value::Object(m) => m.iter().for_each(|(k, x)| fixed_numbers(x, &format!("{path}.{k}"), bad)),
        _ => {}
    }
}

#[test]
fn attack_without_evolution_equals_selection() {
    let dir = tempfile::tempdir().unwrap();
    small_benchmark(dir.path());
    let out = run(
        &["attack", "--schema", "schema.toml", "--synthetic", "synthetic.csv", "--output-dir", "out"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = AttackReport::load(dir.path().join("out/attack_report.json")).unwrap();
    assert!(report.metrics.is_none() && report.evolution.is_none());
    // n_train defaults to the synthetic size without a training table
    assert_eq!(report.run.n_train, 600);

    let schema = Arc::new(Schema::load(dir.path().join("schema.toml")).unwrap());
    let syn = load_table(dir.path().join("synthetic.csv"), schema).unwrap();
    let enc = Encoder::fit(&syn).unwrap();
    let index = NeighborIndex::new(Arc::new(enc.encode(&syn).unwrap())).unwrap();
    let expected = select_recovered(&rank_by_density(&index, 5).unwrap(), 600, 0.05).unwrap();
    let ids: Vec<usize> = report.recovered.entries.iter().map(|e| e.row_id).collect();
    assert_eq!(ids, expected.ids());
    assert_eq!(report.recovered.n_recon, 30);

    let text = run(&["report", "--report", "out/attack_report.json"], dir.path());
    assert!(text.status.success());
    let text = String::from_utf8(text.stdout).unwrap();
    assert!(text.contains("No metric block"), "{text}");
}

#[test]
fn attack_evaluate_report_round() {
    let dir = tempfile::tempdir().unwrap();
    small_benchmark(dir.path());
    std::fs::write(
        dir.path().join("run.toml"),
        "schema = \"schema.toml\"\nsynthetic = \"synthetic.csv\"\ntraining = \"train.csv\"\noutput_dir = \"out\"\nseed = 3\n\n[evolution]\nenabled = true\nn_gen = 5\npop_size = 20\n",
    )
    .unwrap();
    let sub = tempfile::tempdir().unwrap();
    // config paths resolve against the config file, not the working directory
    let cfg = dir.path().join("run.toml");
    let out = run(&["attack", "--config", cfg.to_str().unwrap()], sub.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report_path = dir.path().join("out/attack_report.json");
    let report = AttackReport::load(&report_path).unwrap();
    let metrics = report.metrics.clone().unwrap();
    let evo = report.evolution.as_ref().unwrap();
    assert_eq!(evo.len(), report.recovered.entries.len());
    assert!(evo.iter().all(|e| e.history.len() == 6 && e.final_population.len() == 20));
    assert!(dir.path().join("out/timing.json").exists());

    // every non-integer number in the report is written with six decimals,
    // except raw sample values and the config echo
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    let mut bad = Vec::new();
    for key in ["metrics", "run"] {
        fixed_numbers(&raw[key], key, &mut bad);
    }
    for e in raw["recovered"]["entries"].as_array().unwrap() {
        for k in ["score", "harmonic_mean"] {
            fixed_numbers(&e[k], k, &mut bad);
        }
    }
    assert!(bad.is_empty(), "{bad:?}");

    // evaluate falls back on the report's own config
    let out = run(&["evaluate", "--report", report_path.to_str().unwrap()], sub.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = EvaluationDocument::load(dir.path().join("out/evaluation_report.json")).unwrap();
    assert_eq!(doc.samples_from, "evolved");
    assert_eq!(doc.metrics, metrics);

    for (format, marker) in [("text", "Unique Samples"), ("markdown", "| Unique Samples |")] {
        let out = run(&["report", "--report", report_path.to_str().unwrap(), "--format", format], sub.path());
        assert!(out.status.success());
        let s = String::from_utf8(out.stdout).unwrap();
        assert!(s.contains(marker), "{s}");
        assert!(s.contains(&synthleak::decimal::format(metrics.hit_rate)), "{s}");
        assert!(s.contains(&synthleak::decimal::format(metrics.dcr_mean)), "{s}");
    }
    let out = run(
        &["report", "--report", "out/evaluation_report.json"],
        dir.path(),
    );
    assert!(out.status.success());
}

#[test]
fn generate_writes_multiplier_rows_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    small_benchmark(dir.path());
    let args = [
        "generate", "--schema", "schema.toml", "--synthetic", "synthetic.csv", "--multiplier", "3",
        "--seed", "5", "--output-dir",
    ];
    let a = run(&[&args[..], &["a"]].concat(), dir.path());
    let b = run(&[&args[..], &["b"]].concat(), dir.path());
    assert!(a.status.success() && b.status.success());
    let ga = std::fs::read(dir.path().join("a/generated.csv")).unwrap();
    assert_eq!(ga, std::fs::read(dir.path().join("b/generated.csv")).unwrap());
    let schema = Arc::new(Schema::load(dir.path().join("schema.toml")).unwrap());
    let t = load_table(dir.path().join("a/generated.csv"), schema).unwrap();
    assert_eq!(t.len(), 1800);

    // a level-3 attack on the generated file ranks the same table as level-2
    let l2 = run(
        &["attack", "--schema", "schema.toml", "--synthetic", "synthetic.csv", "--level", "level-2",
          "--multiplier", "3", "--seed", "5", "--output-dir", "l2"],
        dir.path(),
    );
    let l3 = run(
        &["attack", "--schema", "schema.toml", "--synthetic", "synthetic.csv", "--level", "level-3",
          "--external-samples", "a/generated.csv", "--multiplier", "3", "--seed", "5", "--output-dir", "l3"],
        dir.path(),
    );
    assert!(l2.status.success() && l3.status.success());
    let r2 = AttackReport::load(dir.path().join("l2/attack_report.json")).unwrap();
    let r3 = AttackReport::load(dir.path().join("l3/attack_report.json")).unwrap();
    assert_eq!(r2.recovered, r3.recovered);
    assert_eq!(r2.run.attacker_rows, 1800);
}

#[test]
fn exit_codes_and_error_records() {
    let dir = tempfile::tempdir().unwrap();
    small_benchmark(dir.path());
    let base = ["attack", "--schema", "schema.toml", "--synthetic", "synthetic.csv"];

    let out = run(&[&base[..], &["--level", "level-3"]].concat(), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["class"], "input");

    let out = run(
        &[&base[..], &["--level", "level-3", "--external-samples", "missing.csv"]].concat(),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));

    let out = run(&[&base[..], &["--tau", "1.5"]].concat(), dir.path());
    assert_eq!(out.status.code(), Some(2));

    let mut text = std::fs::read_to_string(dir.path().join("synthetic.csv")).unwrap();
    text.push_str("abc,1,1,0.5,private,school,north,no\n");
    std::fs::write(dir.path().join("bad.csv"), text).unwrap();
    let out = run(
        &["attack", "--schema", "schema.toml", "--synthetic", "bad.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let rec = error_record(&out);
    assert_eq!(rec["error"]["class"], "data-validation");
    assert_eq!(rec["error"]["exit_code"], 3);

    let out = run(&["report", "--report", "nothing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(dir.path().join("corrupt.json"), "{\"format\": 1").unwrap();
    let out = run(&["report", "--report", "corrupt.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    let ok = run(&[&base[..], &["--output-dir", "o"]].concat(), dir.path());
    assert!(ok.status.success());
    let out = run(&["report", "--report", "o/attack_report.json", "--format", "html"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    // reports never share a stream with logs
    assert!(out.stdout.is_empty());
}

#[test]
fn weighted_ranking_with_external_predictions() {
    let dir = tempfile::tempdir().unwrap();
    small_benchmark(dir.path());
    // constant predictions: loss depends only on the label
    let schema = Arc::new(Schema::load(dir.path().join("schema.toml")).unwrap());
    let syn = load_table(dir.path().join("synthetic.csv"), schema).unwrap();
    let mut csv = String::from("row_id,prediction\n");
    for i in 0..syn.len() {
        csv.push_str(&format!("{i},0.9\n"));
    }
    std::fs::write(dir.path().join("pred.csv"), csv).unwrap();
    let out = run(
        &["attack", "--schema", "schema.toml", "--synthetic", "synthetic.csv", "--weights", "0.5,0.5",
          "--predictor", "external", "--predictions", "pred.csv", "--output-dir", "w"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r = AttackReport::load(dir.path().join("w/attack_report.json")).unwrap();
    assert_eq!(r.run.ranking, "weighted-external");
    // with p = 0.9 positives have the lower loss, so they lead the selection
    let first = &r.recovered.entries[0];
    assert_eq!(first.sample.last().unwrap(), "yes");
    assert!(first.loss.is_some());
}
