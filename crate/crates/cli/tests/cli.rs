use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const LAY: [&str; 12] = [
    "we", "can", "see", "it", "and", "you", "will", "like", "this", "help", "people", "water",
];
const SCI: [&str; 10] = [
    "characterization", "heterogeneous", "phosphorylation", "mitochondrial", "transcriptional", "stochastic",
    "morphogenesis", "spectroscopic", "thermodynamic", "polymorphism",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_simplicity"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn words(pool: &[&str], start: usize, n: usize, step: usize) -> String {
    (0..n).map(|i| pool[(start + i * step) % pool.len()]).collect::<Vec<_>>().join(" ")
}

/// Yoked corpus whose lay versions are built from common short words.
fn write_corpus(dir: &Path, pairs: usize) -> PathBuf {
    let mut lines = String::new();
    for i in 0..pairs {
        let sci = format!(
            "The {} of the {} within {}. In the {} of {} via {}.",
            words(&SCI, i, 3 + i % 5, 3),
            words(&SCI, i + 1, 2 + i % 3, 7),
            words(&SCI, i + 2, 4 + i % 4, 1),
            words(&SCI, i + 5, 2, 3),
            words(&SCI, i, 1 + i % 6, 7),
            words(&SCI, i + 3, 4, 1)
        );
        let lay = format!(
            "{}. {}. {} {}.",
            words(&LAY, i, 4 + i % 3, 5),
            words(&LAY, i + 1, 5 + i % 2, 7),
            words(&LAY, i + 2, 3 + i % 4, 1),
            words(&SCI, i, i % 3, 1)
        );
        for (kind, text) in [("abstract", sci), ("human_lay", lay)] {
            lines.push_str(&serde_json::json!({"id": format!("p{i:03}"), "kind": kind, "text": text}).to_string());
            lines.push('\n');
        }
    }
    let path = dir.join("corpus.jsonl");
    std::fs::write(&path, lines).unwrap();
    path
}

fn write_trials(dir: &Path) -> PathBuf {
    let mut csv = String::from("participant,stimulus,condition,clear,intelligent,credible,trustworthy\n");
    for p in 0..40 {
        let u = ((p * 37) % 11) as f64 / 5.0 - 1.0;
        for t in 0..3 {
            let pair = (p + t * 2) % 5;
            let gpt = (p + t) % 2 == 0;
            let stim = format!("s{}{}", pair, if gpt { "g" } else { "p" });
            let e = |k: usize| (((p * 31 + t * 17 + k * 7) % 13) as f64 - 6.0) / 6.0;
            let clear = 4.0 + if gpt { 1.5 } else { 0.0 } + u + 0.5 * e(0);
            let intel = 4.5 + u + 0.6 * e(1);
            csv.push_str(&format!(
                "p{p},{stim},{},{clear:.3},{intel:.3},{:.3},{:.3}\n",
                if gpt { "gpt" } else { "pnas" },
                intel + 0.3 * e(2),
                intel + 0.3 * e(3)
            ));
        }
    }
    let path = dir.join("trials.csv");
    std::fs::write(&path, csv).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn power_prints_the_sample_size() {
    let out = run(&["power", "--design", "t", "--d", "0.2", "--power", "0.8"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "788");
}

#[test]
fn summary_compare_reproduces_welch() {
    let out = run(&["compare", "--summary", "75.53,5.57,800", "69.84,7.45,800"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("= 17.30") && text.contains("d = 0.87"), "{text}");

    let out = run(&["compare", "--summary", "5,1,30", "5,1,30"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("= 0.00"));
}

#[test]
fn missing_lexicon_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 5);
    let out = run(&["score", "--in", s(&corpus), "--lexicon", "/no/such/lex.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("/no/such/lex.txt"));
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(run(&["power", "--design", "t", "--d", "0.2", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn analysis_failures_exit_1() {
    let out = run(&["power", "--design", "t", "--d", "0"]);
    assert_eq!(out.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.csv");
    std::fs::write(&path, "participant,stimulus,condition,clear\np1,s1,gpt,1\np1,s2,gpt,2\np2,s1,gpt,3\np2,s2,gpt,5\n")
        .unwrap();
    let out = run(&["lmm", "--trials", s(&path)]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn randomized_commands_demand_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 10);
    let out = run(&["sample", "--in", s(&corpus), "--n", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("--seed"));
    let out = run(&["compare", "--corpus", s(&corpus)]);
    assert_eq!(out.status.code(), Some(2));

    let config = dir.path().join("run.toml");
    std::fs::write(&config, "seed = 3\n").unwrap();
    assert!(run(&["--config", s(&config), "sample", "--in", s(&corpus), "--n", "3"]).status.success());
}

#[test]
fn csv_and_jsonl_scores_carry_identical_values() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 12);
    let csv = dir.path().join("scores.csv");
    let jsonl = dir.path().join("scores.jsonl");
    assert!(run(&["score", "--in", s(&corpus), "--out", s(&csv), "--index"]).status.success());
    assert!(run(&["score", "--in", s(&corpus), "--out", s(&jsonl), "--index"]).status.success());

    let mut reader = csv_rows(&csv);
    let header = reader.remove(0);
    let json: Vec<serde_json::Value> = std::fs::read_to_string(&jsonl)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(reader.len(), 24);
    assert_eq!(json.len(), 24);
    for (row, obj) in reader.iter().zip(&json) {
        for (name, cell) in header.iter().zip(row) {
            let value = &obj[name.as_str()];
            match value.as_f64() {
                Some(x) => assert_eq!(cell.parse::<f64>().unwrap(), x, "{name}"),
                None => assert_eq!(value.as_str().unwrap(), cell, "{name}"),
            }
        }
    }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn every_command_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = write_corpus(d, 30);
    let trials = write_trials(d);
    let pairs = d.join("pairs.csv");
    std::fs::write(&pairs, "id,score_a,score_b\nP1,79.31,48.65\nP2,76.64,46.32\nP3,79.07,52.14\n").unwrap();
    let scores = d.join("scores.csv");
    assert!(run(&["score", "--in", s(&corpus), "--out", s(&scores)]).status.success());

    let runs: Vec<(&str, Vec<String>)> = vec![
        ("score.csv", vec!["score", "--in", s(&corpus), "--index", "--out"]),
        (
            "compare.json",
            vec!["compare", "--corpus", s(&corpus), "--replicates", "1000", "--out"],
        ),
        (
            "scores-compare.json",
            vec!["compare", "--scores", s(&scores), "--a", "human_lay", "--b", "abstract", "--replicates", "1000", "--out"],
        ),
        ("themes.csv", vec!["themes", "--in", s(&corpus), "--k", "2", "--min-doc-fraction", "0.1", "--loadings"]),
        ("lmm.json", vec!["lmm", "--trials", s(&trials), "--out"]),
        ("select.csv", vec!["select", "--pairs", s(&pairs), "--k", "2", "--out"]),
        ("density.csv", vec!["density", "--scores", s(&scores), "--measure", "common_words", "--out"]),
        ("sample.jsonl", vec!["sample", "--in", s(&corpus), "--n", "7", "--out"]),
    ]
    .into_iter()
    .map(|(name, args)| (name, args.into_iter().map(str::to_string).collect()))
    .collect();

    for (name, args) in runs {
        let mut outputs = Vec::new();
        for round in 0..2 {
            let target = d.join(format!("{round}-{name}"));
            let out = bin().arg("--seed").arg("7").args(&args).arg(&target).output().unwrap();
            assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
            outputs.push(std::fs::read(&target).unwrap());
        }
        assert!(!outputs[0].is_empty(), "{name} is empty");
        assert_eq!(outputs[0], outputs[1], "{name} differs between runs");
    }
}

#[test]
fn seed_changes_the_bootstrap_interval() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = write_corpus(dir.path(), 30);
    let mut reports = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("r{seed}.json"));
        let status = run(&["--seed", seed, "compare", "--corpus", s(&corpus), "--replicates", "1000", "--out", s(&out)]);
        assert!(status.status.success());
        let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
        reports.push(v["comparisons"][0]["d_ci"]["lower"].as_f64().unwrap());
    }
    assert_ne!(reports[0], reports[1]);
}

#[test]
fn report_embeds_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(&config, "replicates = 1234\n[generation]\nmodel = \"m1\"\n").unwrap();
    let out = dir.path().join("r.json");
    let args = ["--config", s(&config), "compare", "--summary", "1,1,10", "2,1,10", "--out", s(&out)];
    assert!(run(&args).status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out).unwrap()).unwrap();
    assert_eq!(v["config"]["replicates"], 1234);
    assert_eq!(v["config"]["generation"]["model"], "m1");
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn help_lists_every_flag() {
    let text = String::from_utf8(run(&["compare", "--help"]).stdout).unwrap();
    for flag in ["--summary", "--scores", "--corpus", "--replicates", "--seed", "--config", "--jobs", "--out"] {
        assert!(text.contains(flag), "{flag} missing from help");
    }
}
