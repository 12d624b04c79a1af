//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test -p simplicity-cli --test acceptance`.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use simplicity_core::corpus::{select_stimuli, Corpus, DocKind, Document, StimulusScores};
use simplicity_core::genai::{
    batch_generate, read_audit, render_prompt, AttemptStatus, GenerationConfig, Generator, HttpTransport,
};
use simplicity_core::lexicon::{CommonWordList, Lexicon};
use simplicity_core::lmm::{fit_lmm, GroupingFactor, LmmOptions, MixedData};
use simplicity_core::mem::{extract_themes, DocTermMatrix, ThemeOptions};
use simplicity_core::pipeline::{run_yoked_comparison, Measure, RunContext};
use simplicity_core::stats::ols::{ols, Design};
use simplicity_core::stats::{
    bootstrap_d_ci, compare_summaries, cronbach_alpha_from_covariance, fisher_ci, power_n, BootstrapConfig,
    GroupSummary, PowerRequest,
};
use simplicity_core::textmetrics::{simplicity_index, AnalyticCalibration, ScoreCard, Scorer};

type Outcome = Result<String, String>;

/// Collects sub-check results into one verdict.
#[derive(Default)]
struct Checks {
    passed: Vec<String>,
    failed: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        if ok {
            self.passed.push(detail.into());
        } else {
            self.failed.push(detail.into());
        }
    }

    fn within(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        self.check((got - want).abs() <= tol, format!("{label} {got:.4} (want {want} ± {tol})"));
    }

    fn runtime(&mut self, label: &str, start: Instant, limit: Duration) {
        let took = start.elapsed();
        self.check(took < limit, format!("{label} {:.2}s (< {}s)", took.as_secs_f64(), limit.as_secs_f64()));
    }

    fn finish(self) -> Outcome {
        if self.failed.is_empty() {
            Ok(self.passed.join("; "))
        } else {
            Err(format!("FAILED: {} | ok: {}", self.failed.join("; "), self.passed.join("; ")))
        }
    }
}

fn summary(m: f64, sd: f64, n: usize) -> GroupSummary {
    GroupSummary::new(n, m, sd).expect("valid moments")
}

fn criterion_1() -> Outcome {
    let mut c = Checks::default();
    let cases: [(&str, GroupSummary, GroupSummary, &[(&str, f64, f64)]); 4] = [
        (
            "1b common words",
            summary(75.53, 5.57, 800),
            summary(69.84, 7.45, 800),
            &[("t", 17.31, 0.05), ("df", 1478.7, 2.0), ("d", 0.87, 0.01)],
        ),
        (
            "1b readability",
            summary(17.59, 11.15, 800),
            summary(12.86, 14.27, 800),
            &[("t", 7.39, 0.05), ("df", 1510.0, 2.0), ("d", 0.37, 0.01)],
        ),
        (
            "1b analytic",
            summary(92.73, 6.89, 800),
            summary(92.32, 7.48, 800),
            &[("t", 1.16, 0.05), ("d", 0.06, 0.01), ("p", 0.246, 0.02)],
        ),
        (
            "1a common words",
            summary(69.77, 7.14, 34584),
            summary(67.79, 6.60, 34584),
            &[("t", 37.79, 0.1), ("d", 0.29, 0.01)],
        ),
    ];
    for (name, a, b, targets) in cases {
        let start = Instant::now();
        let r = compare_summaries(&a, &b).map_err(|e| e.to_string())?;
        for &(stat, want, tol) in targets {
            let got = match stat {
                "t" => r.t,
                "df" => r.df,
                "d" => r.d,
                _ => r.p,
            };
            c.within(&format!("{name} {stat}"), got, want, tol);
        }
        c.runtime(name, start, Duration::from_secs(1));
    }
    c.finish()
}

fn criterion_2() -> Outcome {
    let mut c = Checks::default();
    let start = Instant::now();
    let t = power_n(&PowerRequest::two_sample_t(0.2, 0.05, 0.8)).map_err(|e| e.to_string())?;
    c.check(t.total_n == 788, format!("t-test N = {} (want 788)", t.total_n));
    let rm = power_n(&PowerRequest::rm_anova(0.1, 3, 0.05, 0.8)).map_err(|e| e.to_string())?;
    c.check(
        rm.total_n == 164,
        format!("RM-ANOVA N = {} at power {:.5} (want 164)", rm.total_n, rm.achieved_power),
    );
    c.runtime("both", start, Duration::from_secs(1));
    c.finish()
}

fn criterion_3() -> Outcome {
    let sd = [1.05, 1.16, 1.12];
    let r = [[1.0, 0.65, 0.65], [0.65, 1.0, 0.84], [0.65, 0.84, 1.0]];
    let cov = DMatrix::from_fn(3, 3, |i, j| r[i][j] * sd[i] * sd[j]);
    let alpha = cronbach_alpha_from_covariance(&cov).map_err(|e| e.to_string())?;
    let mut c = Checks::default();
    c.within("alpha", alpha, 0.88, 0.005);
    c.finish()
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn criterion_4() -> Outcome {
    let (lo, hi) = fisher_ci(0.84, 822).map_err(|e| e.to_string())?;
    let mut c = Checks::default();
    c.check(
        round2(lo) == 0.82 && round2(hi) == 0.86,
        format!("[{lo:.4}, {hi:.4}] rounds to [{:.2}, {:.2}] (want [.82, .86])", round2(lo), round2(hi)),
    );
    c.finish()
}

fn criterion_5() -> Outcome {
    let table = [
        ("P3", 79.07, 52.14),
        ("P5", 87.10, 62.81),
        ("P1", 79.31, 48.65),
        ("P4", 85.00, 59.66),
        ("P2", 76.64, 46.32),
    ];
    let pairs: Vec<StimulusScores> = table
        .iter()
        .map(|&(id, a, b)| StimulusScores {
            id: id.into(),
            score_a: a,
            score_b: b,
        })
        .collect();
    let picked = select_stimuli(&pairs, 5).map_err(|e| e.to_string())?;
    let order: Vec<&str> = picked.iter().map(|g| g.id.as_str()).collect();
    let mut c = Checks::default();
    c.check(order == ["P1", "P2", "P3", "P4", "P5"], format!("order {order:?}"));
    c.finish()
}

const LAY_WORDS: [&str; 24] = [
    "we", "can", "see", "it", "and", "you", "will", "like", "this", "they", "help", "people", "make", "food",
    "good", "but", "is", "so", "very", "work", "water", "home", "find", "new",
];
const SCI_WORDS: [&str; 16] = [
    "characterization", "heterogeneous", "phosphorylation", "mitochondrial", "transcriptional", "stochastic",
    "parameterization", "electrophysiological", "morphogenesis", "spectroscopic", "immunohistochemical",
    "thermodynamic", "polymorphism", "microenvironment", "biosynthetic", "quantification",
];
const SCI_FUNCTION: [&str; 7] = ["the", "of", "in", "within", "for", "via", "across"];

fn sentence(rng: &mut ChaCha8Rng, len: usize, lay: bool) -> String {
    let words: Vec<&str> = (0..len)
        .map(|i| match (lay, i % 2) {
            (true, _) => *LAY_WORDS.choose(rng).unwrap(),
            (false, 0) => *SCI_FUNCTION.choose(rng).unwrap(),
            (false, _) => *SCI_WORDS.choose(rng).unwrap(),
        })
        .collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

/// Lay versions: more common words, shorter words, shorter sentences.
fn direction_corpus(pairs: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    for i in 0..pairs {
        let id = format!("pair{i:03}");
        let n = rng.random_range(2..=3);
        let sci: Vec<String> = (0..n).map(|_| {
            let len = rng.random_range(20..=30);
            sentence(&mut rng, len, false)
        }).collect();
        let n = rng.random_range(3..=6);
        let lay: Vec<String> = (0..n).map(|_| {
            let len = rng.random_range(5..=8);
            sentence(&mut rng, len, true)
        }).collect();
        docs.push(Document::new(id.clone(), DocKind::Abstract, sci.join(" ")));
        docs.push(Document::new(id, DocKind::HumanLay, lay.join(" ")));
    }
    Corpus::from_documents(docs).expect("fixture is valid")
}

fn card(i: usize, common: f64, flesch: f64, analytic: f64) -> ScoreCard {
    ScoreCard {
        id: format!("d{i}"),
        kind: DocKind::Abstract,
        word_count: 100,
        common_pct: common,
        analytic_raw: 0.0,
        analytic_scaled: analytic,
        flesch,
        simplicity_z: None,
        categories: BTreeMap::new(),
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

fn criterion_6() -> Outcome {
    let mut c = Checks::default();

    let start = Instant::now();
    let scorer = Scorer::new(Lexicon::builtin(), CommonWordList::builtin(), AnalyticCalibration::default())
        .map_err(|e| e.to_string())?;
    let ctx = RunContext::new(6, 2000, serde_json::json!({"criterion": 6}));
    let report = run_yoked_comparison(&direction_corpus(200, 6), &scorer, &ctx).map_err(|e| e.to_string())?;
    let d = |m: Measure| report.comparisons.iter().find(|x| x.measure == m).map(|x| x.report.d).unwrap_or(f64::NAN);
    let (index, common, analytic, read) = (
        d(Measure::SimplicityIndex),
        d(Measure::CommonWords),
        d(Measure::Analytic),
        d(Measure::Readability),
    );
    c.check(
        index > 0.0 && common > 0.0 && read > 0.0 && analytic < 0.0,
        format!("direction d: index {index:.2}, common {common:.2}, readability {read:.2}, analytic {analytic:.2}"),
    );
    c.runtime("direction", start, Duration::from_secs(10));

    let start = Instant::now();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let sims = 1000;
    let mut covered = 0;
    for sim in 0..sims {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + sim);
        let a: Vec<f64> = (0..200).map(|_| 0.5 + normal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..200).map(|_| normal.sample(&mut rng)).collect();
        let config = BootstrapConfig {
            replicates: 5000,
            seed: sim,
        };
        let ci = bootstrap_d_ci(&a, &b, &config).map_err(|e| e.to_string())?;
        if ci.lower <= 0.5 && 0.5 <= ci.upper {
            covered += 1;
        }
    }
    let rate = covered as f64 / sims as f64;
    c.check((0.93..=0.97).contains(&rate), format!("bootstrap coverage {:.1}% (want 93-97%)", 100.0 * rate));
    c.runtime("coverage", start, Duration::from_secs(120));

    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let rows: Vec<(f64, f64, f64)> = (0..500)
        .map(|_| (rng.random_range(40.0..95.0), rng.random_range(-20.0..90.0), rng.random_range(5.0..99.0)))
        .collect();
    let mut cards: Vec<ScoreCard> = rows.iter().enumerate().map(|(i, r)| card(i, r.0, r.1, r.2)).collect();
    let std = simplicity_index(&mut cards, "all").map_err(|e| e.to_string())?;
    let (mut worst_mean, mut worst_sd) = (0.0f64, 0.0f64);
    for (m, get) in [
        (std.common, (|c: &ScoreCard| c.common_pct) as fn(&ScoreCard) -> f64),
        (std.flesch, |c: &ScoreCard| c.flesch),
        (std.analytic, |c: &ScoreCard| c.analytic_scaled),
    ] {
        let z: Vec<f64> = cards.iter().map(|c| m.z(get(c))).collect();
        let (zm, zsd) = mean_sd(&z);
        worst_mean = worst_mean.max(zm.abs());
        worst_sd = worst_sd.max((zsd - 1.0).abs());
    }
    c.check(worst_mean < 1e-9 && worst_sd < 1e-9, format!("z mean {worst_mean:.1e}, |sd-1| {worst_sd:.1e}"));

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let s: [f64; 3] = [rng.random_range(0.01..50.0), rng.random_range(0.01..50.0), rng.random_range(0.01..50.0)];
        let o: [f64; 3] = [rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0), rng.random_range(-500.0..500.0)];
        let mut moved: Vec<ScoreCard> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| card(i, s[0] * r.0 + o[0], s[1] * r.1 + o[1], s[2] * r.2 + o[2]))
            .collect();
        simplicity_index(&mut moved, "moved").map_err(|e| e.to_string())?;
        for (x, y) in cards.iter().zip(&moved) {
            worst = worst.max((x.simplicity_z.unwrap() - y.simplicity_z.unwrap()).abs());
        }
    }
    c.check(worst < 1e-9, format!("affine max diff {worst:.1e}"));
    c.finish()
}

fn one_way(groups: usize, per: usize, seed: u64) -> MixedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Normal::new(0.0, 1.2).unwrap();
    let e = Normal::new(0.0, 1.0).unwrap();
    let (mut y, mut ids) = (Vec::new(), Vec::new());
    for g in 0..groups {
        let ug = u.sample(&mut rng);
        for _ in 0..per {
            y.push(5.0 + ug + e.sample(&mut rng));
            ids.push(format!("p{g}"));
        }
    }
    let n = y.len();
    MixedData::new(y, Design::with_intercept(n), GroupingFactor::from_labels("participant", &ids), None).unwrap()
}

/// Closed-form ANOVA variance components for a balanced one-way layout.
fn anova_components(y: &[f64], groups: usize, per: usize) -> (f64, f64) {
    let grand = y.iter().sum::<f64>() / y.len() as f64;
    let means: Vec<f64> = y.chunks(per).map(|g| g.iter().sum::<f64>() / per as f64).collect();
    let ssb: f64 = means.iter().map(|m| per as f64 * (m - grand).powi(2)).sum();
    let ssw: f64 = y.chunks(per).zip(&means).map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sum();
    let msb = ssb / (groups - 1) as f64;
    let msw = ssw / (groups * (per - 1)) as f64;
    ((msb - msw) / per as f64, msw)
}

/// Noise that sums to zero within every participant and stimulus.
fn no_random_structure() -> (MixedData, Vec<f64>, Design) {
    let t = [1.0, -2.0, 0.5, 0.5, 1.5, -1.5];
    let (mut y, mut x, mut pid, mut sid) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..8 {
        for (j, tj) in t.iter().enumerate() {
            let cond = f64::from(u8::from((i + j) % 2 == 0));
            x.push(cond);
            y.push(2.0 + 0.7 * cond + 0.1 * (i as f64 - 3.5) * tj);
            pid.push(format!("p{i}"));
            sid.push(format!("s{j}"));
        }
    }
    let mut design = Design::with_intercept(y.len());
    design.push("condition", x).unwrap();
    let data = MixedData::new(
        y.clone(),
        design.clone(),
        GroupingFactor::from_labels("participant", &pid),
        Some(GroupingFactor::from_labels("stimulus", &sid)),
    )
    .unwrap();
    (data, y, design)
}

/// 274 participants, three distinct pairs each, random version per pair.
fn recovery_data(seed: u64) -> MixedData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (np, ns, ne) = (
        Normal::new(0.0, 0.7).unwrap(),
        Normal::new(0.0, 0.07).unwrap(),
        Normal::new(0.0, 0.5).unwrap(),
    );
    let stim: Vec<f64> = (0..10).map(|_| ns.sample(&mut rng)).collect();
    let (mut y, mut x, mut pid, mut sid) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for p in 0..274 {
        let u = np.sample(&mut rng);
        for pair in index::sample(&mut rng, 5, 3).into_iter() {
            let c = rng.random_range(0..2usize);
            let s = 2 * pair + c;
            y.push(3.0 + 1.5 * c as f64 + u + stim[s] + ne.sample(&mut rng));
            x.push(c as f64);
            pid.push(format!("p{p}"));
            sid.push(format!("s{s}"));
        }
    }
    let mut design = Design::with_intercept(y.len());
    design.push("condition", x).unwrap();
    MixedData::new(
        y,
        design,
        GroupingFactor::from_labels("participant", &pid),
        Some(GroupingFactor::from_labels("stimulus", &sid)),
    )
    .unwrap()
}

fn criterion_7() -> Outcome {
    let mut c = Checks::default();
    let start = Instant::now();
    let options = LmmOptions::default();

    let data = one_way(30, 6, 11);
    let (sb, sw) = anova_components(&data.response, 30, 6);
    let fit = fit_lmm(&data, &options).map_err(|e| e.to_string())?;
    let rel_p = (fit.sigma2_participant - sb).abs() / sb;
    let rel_e = (fit.sigma2_resid - sw).abs() / sw;
    c.check(rel_p < 1e-6 && rel_e < 1e-6, format!("ANOVA oracle rel err {rel_p:.1e}/{rel_e:.1e}"));

    let (data, y, design) = no_random_structure();
    let fit = fit_lmm(&data, &options).map_err(|e| e.to_string())?;
    let reference = ols(&y, &design).map_err(|e| e.to_string())?;
    let gap = reference
        .coefficients
        .iter()
        .map(|r| fit.coefficient(&r.term).map_or(f64::INFINITY, |m| (m.estimate - r.estimate).abs()))
        .fold(0.0, f64::max);
    c.check(gap < 1e-6, format!("OLS max |Δβ| {gap:.1e}"));

    let data = recovery_data(2024);
    let fit = fit_lmm(&data, &options).map_err(|e| e.to_string())?;
    let b = fit.coefficient("condition").map_or(f64::NAN, |x| x.estimate);
    c.within("recovered B", b, 1.5, 0.1);
    c.check(fit.r2m <= fit.r2c, format!("R2m {:.3} <= R2c {:.3}", fit.r2m, fit.r2c));
    c.runtime("lmm", start, Duration::from_secs(30));
    c.finish()
}

fn criterion_8() -> Outcome {
    let mut cells = DMatrix::zeros(20, 4);
    for d in 0..20 {
        let a = f64::from(u8::from(d % 2 == 0));
        let b = f64::from(u8::from((d / 2) % 2 == 0));
        cells[(d, 0)] = a;
        cells[(d, 1)] = a;
        cells[(d, 2)] = b;
        cells[(d, 3)] = b;
    }
    let dtm = DocTermMatrix::new(
        (0..20).map(|d| format!("d{d}")).collect(),
        ["gene", "protein", "climate", "carbon"].map(String::from).to_vec(),
        cells,
    )
    .map_err(|e| e.to_string())?;
    let sol = extract_themes(&dtm, &ThemeOptions::default()).map_err(|e| e.to_string())?;
    let mut c = Checks::default();
    let mut groups = sol.theme_terms.clone();
    groups.iter_mut().for_each(|g| g.sort());
    groups.sort();
    c.check(
        sol.k == 2 && groups == [vec!["carbon", "climate"], vec!["gene", "protein"]],
        format!("k = {}, groups {groups:?}", sol.k),
    );
    let drift = (0..4)
        .map(|i| {
            let before: f64 = sol.unrotated.row(i).iter().map(|x| x * x).sum();
            let after: f64 = sol.loadings.row(i).iter().map(|x| x * x).sum();
            (before - after).abs()
        })
        .fold(0.0, f64::max);
    c.check(drift < 1e-8, format!("communality drift {drift:.1e}"));
    let sum: f64 = sol.eigenvalues.iter().sum();
    c.check((sum - 4.0).abs() < 1e-9, format!("eigenvalue sum {sum:.12} for 4 terms"));
    c.finish()
}

type Handler = dyn Fn(&str) -> (u16, String) + Send + Sync;

/// Scripted chat-completion endpoint on a local port.
struct MockServer {
    url: String,
    bodies: Arc<Mutex<Vec<String>>>,
}

impl MockServer {
    fn start(handler: Arc<Handler>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind local port");
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&bodies);
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let (seen, handler) = (Arc::clone(&seen), Arc::clone(&handler));
                std::thread::spawn(move || serve(stream, &seen, &*handler));
            }
        });
        MockServer { url, bodies }
    }

    fn requests(&self) -> Vec<String> {
        self.bodies.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, seen: &Mutex<Vec<String>>, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut stream = stream;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let mut length = 0;
        loop {
            line.clear();
            if reader.read_line(&mut line).unwrap_or(0) == 0 {
                return;
            }
            let l = line.trim_end();
            if l.is_empty() {
                break;
            }
            if let Some((k, v)) = l.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0; length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let body = String::from_utf8_lossy(&body).into_owned();
        let (status, payload) = handler(&body);
        seen.lock().unwrap().push(body);
        let head = format!(
            "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n",
            payload.len()
        );
        if stream.write_all(head.as_bytes()).and_then(|_| stream.write_all(payload.as_bytes())).is_err() {
            return;
        }
    }
}

fn completion(text: &str) -> String {
    serde_json::json!({"id": "mock", "choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

/// Replies with the first eight words of the abstract inside the prompt.
fn echo_handler(body: &str) -> (u16, String) {
    let v: serde_json::Value = serde_json::from_str(body).unwrap_or_default();
    let prompt = v["messages"][0]["content"].as_str().unwrap_or_default();
    let abstract_text = prompt.split("\n\n").nth(1).unwrap_or_default();
    let short: Vec<&str> = abstract_text.split_whitespace().take(8).collect();
    (200, completion(&format!("In short: {}", short.join(" "))))
}

fn abstracts(n: usize) -> Corpus {
    Corpus::from_documents(
        (0..n)
            .map(|i| Document::new(format!("a{i:03}"), DocKind::Abstract, format!("Abstract {i} reports a finding about soil microbes.")))
            .collect(),
    )
    .unwrap()
}

fn quiet_config() -> GenerationConfig {
    GenerationConfig {
        jobs: 4,
        ..GenerationConfig::default()
    }
}

fn criterion_9() -> Outcome {
    let mut c = Checks::default();
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;

    let prompt = render_prompt(&abstracts(1).documents()[0]).map_err(|e| e.to_string())?;
    for phrase in ["no more than 120 words", "Write the significance statement here:"] {
        c.check(prompt.contains(phrase), format!("prompt has {phrase:?}"));
    }

    let long = vec!["word"; 150].join(" ");
    let reply = long.clone();
    let server = MockServer::start(Arc::new(move |_| (200, completion(&reply))));
    let generator = Generator::new(HttpTransport::new(server.url.clone(), None, Duration::from_secs(5)), quiet_config());
    let audit = dir.path().join("overlong.jsonl");
    let outcome = batch_generate(&abstracts(1), &generator, &audit).map_err(|e| e.to_string())?;
    let records = read_audit(&audit).map_err(|e| e.to_string())?;
    let statuses: Vec<AttemptStatus> = records.iter().map(|r| r.status).collect();
    c.check(
        outcome.rejected == ["a000"]
            && outcome.documents.is_empty()
            && statuses == [AttemptStatus::OverLimit, AttemptStatus::OverLimit, AttemptStatus::Rejected]
            && records.iter().all(|r| r.response_text == long),
        format!("over-length: {} requests, statuses {statuses:?}, untruncated", server.requests().len()),
    );

    let budget = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&budget);
    let flaky = MockServer::start(Arc::new(move |body| {
        if counter.fetch_add(1, Ordering::SeqCst) < 12 {
            echo_handler(body)
        } else {
            (400, r#"{"error":"interrupted"}"#.into())
        }
    }));
    let corpus = abstracts(30);
    let audit = dir.path().join("resume.jsonl");
    let first = Generator::new(HttpTransport::new(flaky.url.clone(), None, Duration::from_secs(5)), quiet_config());
    let partial = batch_generate(&corpus, &first, &audit).map_err(|e| e.to_string())?;
    let before: HashSet<String> = flaky.requests().into_iter().collect();

    let steady = MockServer::start(Arc::new(echo_handler));
    let second = Generator::new(HttpTransport::new(steady.url.clone(), None, Duration::from_secs(5)), quiet_config());
    let resumed = batch_generate(&corpus, &second, &audit).map_err(|e| e.to_string())?;
    let after = steady.requests();
    let repeats = after.iter().filter(|b| before.contains(*b) && echo_accepted(&audit, b)).count();
    c.check(
        partial.generated == 12 && resumed.resumed == 12 && after.len() == 18 && repeats == 0 && resumed.documents.len() == 30,
        format!(
            "resume: {} done before interruption, {} new requests, {} duplicates",
            partial.generated,
            after.len(),
            repeats
        ),
    );
    c.runtime("generation", start, Duration::from_secs(10));
    c.finish()
}

/// True when a request body with this prompt was already accepted.
fn echo_accepted(audit: &Path, body: &str) -> bool {
    let v: serde_json::Value = serde_json::from_str(body).unwrap_or_default();
    let prompt = v["messages"][0]["content"].as_str().unwrap_or_default();
    let Some(id) = prompt.split("Abstract ").nth(1).and_then(|s| s.split(' ').next()) else {
        return false;
    };
    let id = format!("a{:03}", id.parse::<usize>().unwrap_or(usize::MAX));
    read_audit(audit)
        .map(|r| r.iter().filter(|x| x.id == id && x.status == AttemptStatus::Accepted).count() > 1)
        .unwrap_or(false)
}

fn level(factor: &GroupingFactor, row: usize) -> &str {
    &factor.labels()[factor.codes()[row]]
}

fn cli(args: &[String]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_simplicity"))
        .args(args)
        .env("OPENAI_API_KEY", "")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(out.stdout)
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let p = |name: &str| d.join(name).to_string_lossy().into_owned();

    let corpus = direction_corpus(40, 10);
    let mut buf = Vec::new();
    corpus.write_jsonl(&mut buf).map_err(|e| e.to_string())?;
    std::fs::write(p("corpus.jsonl"), &buf).map_err(|e| e.to_string())?;
    let mut trials = String::from("participant,stimulus,condition,clear,intelligent,credible,trustworthy\n");
    let data = recovery_data(5);
    for i in 0..data.rows() {
        let cond = if data.design.column("condition").map_or(0.0, |c| c[i]) > 0.5 { "gpt" } else { "pnas" };
        let y = data.response[i];
        trials.push_str(&format!(
            "{},{},{cond},{y:.4},{:.4},{:.4},{:.4}\n",
            level(&data.participant, i),
            level(data.stimulus.as_ref().unwrap(), i),
            4.0 + 0.3 * y,
            3.8 + 0.35 * y + 0.1 * ((i % 7) as f64 - 3.0),
            3.9 + 0.32 * y - 0.1 * ((i % 5) as f64 - 2.0)
        ));
    }
    std::fs::write(p("trials.csv"), trials).map_err(|e| e.to_string())?;
    std::fs::write(
        p("pairs.csv"),
        "id,score_a,score_b\nP1,79.31,48.65\nP2,76.64,46.32\nP3,79.07,52.14\nP4,85.00,59.66\nP5,87.10,62.81\n",
    )
    .map_err(|e| e.to_string())?;
    cli(&["score", "--in", &p("corpus.jsonl"), "--out", &p("scores.csv")].map(String::from))?;
    let server = MockServer::start(Arc::new(echo_handler));

    let commands: Vec<(&str, Vec<String>, Option<&str>)> = vec![
        ("score", vec!["score", "--in", &p("corpus.jsonl"), "--index", "--out"].into_iter().map(String::from).collect(), Some("csv")),
        ("compare", vec!["compare", "--corpus", &p("corpus.jsonl"), "--replicates", "1000", "--out"].into_iter().map(String::from).collect(), Some("json")),
        ("compare-summary", vec!["compare", "--summary", "75.53,5.57,800", "69.84,7.45,800", "--out"].into_iter().map(String::from).collect(), Some("json")),
        ("generate", vec!["generate", "--in", &p("corpus.jsonl"), "--endpoint", &server.url, "--audit", "AUDIT", "--out"].into_iter().map(String::from).collect(), Some("jsonl")),
        ("themes", vec!["themes", "--in", &p("corpus.jsonl"), "--k", "2", "--loadings"].into_iter().map(String::from).collect(), Some("csv")),
        ("lmm", vec!["lmm", "--trials", &p("trials.csv"), "--out"].into_iter().map(String::from).collect(), Some("json")),
        ("power", vec!["power", "--design", "rm", "--f", "0.1", "--m", "3"].into_iter().map(String::from).collect(), None),
        ("select", vec!["select", "--pairs", &p("pairs.csv"), "--k", "5", "--out"].into_iter().map(String::from).collect(), Some("csv")),
        ("density", vec!["density", "--scores", &p("scores.csv"), "--svg", &p("density.svg"), "--out"].into_iter().map(String::from).collect(), Some("csv")),
        ("sample", vec!["sample", "--in", &p("corpus.jsonl"), "--n", "9", "--out"].into_iter().map(String::from).collect(), Some("jsonl")),
    ];

    let mut c = Checks::default();
    for (name, args, ext) in commands {
        let mut outputs = Vec::new();
        for round in 0..2 {
            let mut full: Vec<String> = vec!["--seed".into(), "42".into()];
            full.extend(args.iter().map(|a| if a == "AUDIT" { p(&format!("audit-{round}.jsonl")) } else { a.clone() }));
            let target = ext.map(|e| p(&format!("{name}-{round}.{e}")));
            if let Some(t) = &target {
                full.push(t.clone());
            }
            let stdout = cli(&full)?;
            outputs.push(match target {
                Some(t) => std::fs::read(t).map_err(|e| e.to_string())?,
                None => stdout,
            });
        }
        c.check(
            !outputs[0].is_empty() && outputs[0] == outputs[1],
            format!("{name} {}", if outputs[0] == outputs[1] { "identical" } else { "DIFFERS" }),
        );
    }
    c.finish()
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("summary-statistics reproduction", criterion_1),
        ("power analysis", criterion_2),
        ("Cronbach's alpha from moments", criterion_3),
        ("Fisher CI", criterion_4),
        ("stimulus selection", criterion_5),
        ("direction, coverage, standardization", criterion_6),
        ("LMM oracles and recovery", criterion_7),
        ("meaning extraction fixture", criterion_8),
        ("generation protocol", criterion_9),
        ("CLI determinism", criterion_10),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s): {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
