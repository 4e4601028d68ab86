//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.
//!
//! Every expected value here comes from an oracle written in this file or
//! from a hand computation, never from the library under test.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use enthymeme::annotation::{
    self, krippendorff_alpha, majority_vote, AnnotationItem, AnnotationStore, JudgmentRecord,
};
use enthymeme::corpus::{self, InputFormat, Split, TestSet};
use enthymeme::generator::Setting;
use enthymeme::metrics::bertscore::greedy_match;
use enthymeme::metrics::wilcoxon::signed_rank_test;
use enthymeme::metrics::{bleu, tokenize};
use enthymeme::sequencing::{build_decoder_target, build_encoder_input, extract_implicit_premise};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

const AMY_1: &str = "Amy was looking through her mother's old scrapbooks.";
const AMY_2: &str = "Amy realized her mother had dated her history professor.";
const AMY_H: &str = "Amy found pictures of her history professor and mother together.";

fn format_fidelity() -> Outcome {
    let start = Instant::now();
    let row1 = "Amy was looking through her mother's old scrapbooks. [SEP] Amy realized her mother had dated her history professor.";
    let row2 = "Amy was looking through her mother's old scrapbooks. [SEP] to find something [SEP] Amy realized her mother had dated her history professor.";
    let row3 = "Amy was looking through her mother's old scrapbooks. And since Amy found pictures of her history professor and mother together. Amy realized her mother had dated her history professor.";
    let got = (
        build_encoder_input(AMY_1, AMY_2, None).map(|e| e.text().to_string()),
        build_encoder_input(AMY_1, AMY_2, Some("to find something")).map(|e| e.text().to_string()),
        build_decoder_target(AMY_1, AMY_H, AMY_2).map(|d| d.text().to_string()),
    );
    let elapsed = start.elapsed();
    let rows_ok = matches!(&got, (Ok(a), Ok(b), Ok(c)) if a == row1 && b == row2 && c == row3);
    verdict(rows_ok && elapsed < Duration::from_secs(1), format!("3 rows byte-exact, {elapsed:?}"))
}

const SUBJECTS: &[&str] = &["Tom", "the city", "Maria", "students", "the council", "a neighbour", "Dr. Smith", "it"];
const VERBS: &[&str] = &["wanted", "found", "needs", "saw", "built", "lost", "helps", "chose"];
const OBJECTS: &[&str] = &["a new bike", "the old map", "more money", "its answer", "the U.S. report", "clean water", "a reason"];

fn sentence(rng: &mut ChaCha8Rng, capitalize: bool) -> String {
    let s = format!(
        "{} {} {}",
        SUBJECTS[rng.random_range(0..SUBJECTS.len())],
        VERBS[rng.random_range(0..VERBS.len())],
        OBJECTS[rng.random_range(0..OBJECTS.len())]
    );
    if capitalize {
        let mut c = s.chars();
        c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
    } else {
        s
    }
}

/// Case of the first letter and a terminal period are the declared normalizations.
fn normalized(s: &str) -> String {
    let s = s.trim().trim_end_matches('.');
    let mut c = s.chars();
    c.next().map(|f| f.to_lowercase().chain(c).collect()).unwrap_or_default()
}

fn round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut failures = 0;
    for _ in 0..200 {
        let first = format!("{}.", sentence(&mut rng, true));
        let second = format!("{}.", sentence(&mut rng, true));
        let period = rng.random_bool(0.5);
        let capitalize = rng.random_bool(0.5);
        let hyp = format!("{}{}", sentence(&mut rng, capitalize), if period { "." } else { "" });
        let ok = build_decoder_target(&first, &hyp, &second)
            .ok()
            .and_then(|t| extract_implicit_premise(t.text()).ok())
            .is_some_and(|e| !e.fallback && normalized(&e.premise) == normalized(&hyp));
        failures += usize::from(!ok);
    }
    verdict(failures == 0, format!("200 fixtures, {failures} failures"))
}

/// Independent sentence BLEU: clipped counts by direct enumeration, add-one
/// smoothing for orders >= 2 with no matches.
fn oracle_bleu(cand: &[&str], refs: &[Vec<&str>], max_n: usize) -> f64 {
    let grams = |t: &[&str], n: usize| -> Vec<String> {
        if t.len() < n {
            vec![]
        } else {
            (0..=t.len() - n).map(|i| t[i..i + n].join(" ")).collect()
        }
    };
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let cg = grams(cand, n);
        let mut matched = 0usize;
        let mut seen: Vec<&String> = Vec::new();
        for g in &cg {
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            let in_cand = cg.iter().filter(|x| *x == g).count();
            let max_ref = refs.iter().map(|r| grams(r, n).iter().filter(|x| *x == g).count()).max().unwrap_or(0);
            matched += in_cand.min(max_ref);
        }
        let p = match (n, matched) {
            (1, 0) => return 0.0,
            (_, 0) => 1.0 / (cg.len() as f64 + 1.0),
            _ => matched as f64 / cg.len() as f64,
        };
        log_sum += p.ln();
    }
    let c = cand.len();
    let r = refs.iter().map(Vec::len).min_by_key(|&r| (r.abs_diff(c), r)).unwrap();
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    bp * (log_sum / max_n as f64).exp()
}

fn bleu_oracle() -> Outcome {
    // (candidate, references, order, hand value when one exists)
    let cases: Vec<(&str, Vec<&str>, usize, Option<f64>)> = vec![
        ("the the the", vec!["the cat"], 1, Some(1.0 / 3.0)),
        ("the cat sat", vec!["the cat sat"], 1, Some(1.0)),
        ("the cat sat", vec!["the cat sat"], 2, Some(1.0)),
        ("the cat", vec!["the cat sat on the mat"], 1, Some((1.0f64 - 3.0).exp())),
        ("a b c d", vec!["a b x d"], 2, Some((0.75f64 / 3.0).sqrt())),
        ("a b c d", vec!["e f g h"], 1, Some(0.0)),
        ("a b c d", vec!["a x c y"], 2, Some((0.5f64 * 0.25).sqrt())),
        ("the cat the cat", vec!["the cat", "the cat the dog"], 2, Some((0.75f64 * 2.0 / 3.0).sqrt())),
        ("going to the store", vec!["went to the shop", "going to a store today"], 1, None),
        ("going to the store", vec!["went to the shop", "going to a store today"], 2, None),
        ("people should vote because voting matters", vec!["voting matters to people"], 2, None),
        ("x y x y x y", vec!["x y z", "y x y x"], 2, None),
    ];
    let mut worst = 0.0f64;
    for (cand, refs, n, hand) in &cases {
        let c: Vec<&str> = cand.split(' ').collect();
        let r: Vec<Vec<&str>> = refs.iter().map(|r| r.split(' ').collect()).collect();
        let expected = oracle_bleu(&c, &r, *n);
        if let Some(h) = hand {
            worst = worst.max((expected - h).abs());
        }
        let rt: Vec<_> = refs.iter().map(|r| tokenize(r)).collect();
        match bleu(&tokenize(cand), &rt, *n) {
            Ok(got) => worst = worst.max((got - expected).abs()),
            Err(_) => worst = f64::INFINITY,
        }
    }
    verdict(worst <= 1e-9, format!("{} cases, max error {worst:.1e}", cases.len()))
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).max(0.0)
}

/// Best total similarity over every map from one side's tokens to the other's.
fn best_assignment(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    let k = to.len();
    let total = k.pow(from.len() as u32);
    (0..total)
        .map(|mut code| {
            let mut s = 0.0;
            for f in from {
                s += cos(f, &to[code % k]);
                code /= k;
            }
            s
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn exhaustive_f1(cand: &[Vec<f64>], refs: &[Vec<f64>]) -> f64 {
    let p = best_assignment(cand, refs) / cand.len() as f64;
    let r = best_assignment(refs, cand) / refs.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn bertscore_oracle() -> Outcome {
    let v = |xs: &[f64]| xs.to_vec();
    type Vectors = Vec<Vec<f64>>;
    let cases: Vec<(Vectors, Vectors)> = vec![
        (vec![v(&[1., 0., 0.]), v(&[0., 1., 0.])], vec![v(&[1., 1., 0.]), v(&[0., 0., 1.])]),
        (vec![v(&[1., 2., 3.])], vec![v(&[3., 2., 1.]), v(&[1., 0., 0.]), v(&[0., 1., 1.])]),
        (vec![v(&[1., -1., 0.]), v(&[0.5, 0.5, 0.5]), v(&[2., 0., 1.])], vec![v(&[1., 0., 0.]), v(&[-1., 1., 0.])]),
        (vec![v(&[0.2, 0.9]), v(&[0.9, 0.2]), v(&[0.5, 0.5])], vec![v(&[1., 0.]), v(&[0., 1.]), v(&[0.7, 0.7])]),
        (vec![v(&[1., 1., 1., 1.]), v(&[1., 0., 1., 0.])], vec![v(&[0., 1., 0., 1.]), v(&[1., 1., 0., 0.]), v(&[0., 0., 0., 1.])]),
        (vec![v(&[3., 1.]), v(&[-2., 5.]), v(&[1., 1.]), v(&[4., -1.])], vec![v(&[1., 2.]), v(&[-1., 3.])]),
    ];
    let mut worst = 0.0f64;
    for (c, r) in &cases {
        match greedy_match(c, r) {
            Ok(s) => worst = worst.max((s.f1 - exhaustive_f1(c, r)).abs()),
            Err(_) => worst = f64::INFINITY,
        }
    }
    let same = vec![v(&[1., 2., 0.]), v(&[0., 1., 4.])];
    let identity = greedy_match(&same, &same).map(|s| s.f1).unwrap_or(f64::NAN);
    let orthogonal =
        greedy_match(&[v(&[1., 0., 0.]), v(&[0., 1., 0.])], &[v(&[0., 0., 1.])]).map(|s| s.f1).unwrap_or(f64::NAN);
    verdict(
        worst <= 1e-9 && identity == 1.0 && orthogonal == 0.0,
        format!("{} cases, max error {worst:.1e}; identity {identity}; orthogonal {orthogonal}", cases.len()),
    )
}

/// Two-sided p by listing every sign assignment, with midranks computed directly.
fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    let n = d.len();
    let rank = |x: f64| {
        let below = d.iter().filter(|y| y.abs() < x).count() as f64;
        let equal = d.iter().filter(|y| y.abs() == x).count() as f64;
        below + (equal + 1.0) / 2.0
    };
    let ranks: Vec<f64> = d.iter().map(|x| rank(x.abs())).collect();
    let observed: f64 = d.iter().zip(&ranks).filter(|(x, _)| **x > 0.0).map(|(_, r)| r).sum();
    let (mut lower, mut upper) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        lower += u64::from(w <= observed);
        upper += u64::from(w >= observed);
    }
    (2.0 * lower.min(upper) as f64 / f64::from(1u32 << n)).min(1.0)
}

fn wilcoxon_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..=10);
        // small integer scores so ties and zero differences occur
        let a: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect();
        let mut b: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..6u8))).collect();
        if a == b {
            b[0] += 1.0;
        }
        match signed_rank_test(&a, &b) {
            Ok(r) if r.p_value == enumerated_p(&a, &b) => {}
            _ => mismatches += 1,
        }
    }
    let five = signed_rank_test(&[2., 3., 4., 5., 6.], &[1., 1., 1., 1., 1.]).map(|r| r.p_value);
    verdict(
        mismatches == 0 && five.as_ref().is_ok_and(|p| *p == 0.0625),
        format!("100 seeded trials, {mismatches} mismatches; n=5 all positive p={five:?}"),
    )
}

fn alpha() -> Outcome {
    let perfect = krippendorff_alpha(&[
        vec![Some(true), Some(true), Some(true)],
        vec![Some(false), Some(false), None],
        vec![Some(true), None, Some(true)],
    ]);
    // units TT, TF, FF, FF: o_TT = 2, o_TF = o_FT = 1, o_FF = 4, so n_T = 3, n_F = 5, n = 8
    // and alpha = 1 - (n - 1) * 2 / (n^2 - n_T^2 - n_F^2) = 1 - 14/30 = 8/15
    let hand = krippendorff_alpha(&[
        vec![Some(true), Some(true)],
        vec![Some(true), Some(false)],
        vec![Some(false), Some(false)],
        vec![Some(false), Some(false)],
    ]);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let random: Vec<Vec<Option<bool>>> =
        (0..1000).map(|_| (0..3).map(|_| Some(rng.random_bool(0.5))).collect()).collect();
    let random = krippendorff_alpha(&random);
    let ok = perfect.as_ref().is_ok_and(|a| *a == 1.0)
        && hand.as_ref().is_ok_and(|a| (a - 8.0 / 15.0).abs() <= 1e-9)
        && random.as_ref().is_ok_and(|a| a.abs() < 0.1);
    verdict(ok, format!("perfect {perfect:?}; 4x2 {hand:?} (8/15); random n=1000 {random:?}"))
}

fn majority() -> Outcome {
    let mut wrong = 0;
    for bits in 0u8..8 {
        let triple: Vec<bool> = (0..3).map(|i| bits >> i & 1 == 1).collect();
        let expected = bits.count_ones() >= 2;
        wrong += usize::from(majority_vote(&triple).ok() != Some(expected));
    }
    let two_of_three = majority_vote(&[true, true, false]);
    verdict(wrong == 0 && two_of_three.as_ref().is_ok_and(|v| *v), format!("8 triples, {wrong} wrong"))
}

fn raw(var: &str) -> Option<PathBuf> {
    std::env::var_os(var).map(PathBuf::from).filter(|p| p.exists())
}

fn dataset_counts() -> Outcome {
    let mut checked = Vec::new();
    let mut failed = Vec::new();
    let mut record = |name: &str, got: Result<usize, corpus::CorpusError>, want: usize| {
        match got {
            Ok(n) if n == want => checked.push(format!("{name}={n}")),
            Ok(n) => failed.push(format!("{name}={n} (want {want})")),
            Err(e) => failed.push(format!("{name}: {e}")),
        }
    };
    if let Some(p) = raw("ENTHYMEME_RAW_D1") {
        record("D1 parsed", corpus::load_d1(&p, InputFormat::Arct).map(|l| l.stats.pre_filter_count()), 1654);
    }
    if let Some(p) = raw("ENTHYMEME_RAW_D2") {
        record("D2 kept", corpus::load_d2(&p, InputFormat::Forum).map(|l| l.stats.loaded_count), 494);
    }
    if let Some(p) = raw("ENTHYMEME_RAW_D3") {
        record("D3 kept", corpus::load_d3(&p, InputFormat::Microtext).map(|l| l.stats.loaded_count), 112);
    }
    for (var, split, want) in [
        ("ENTHYMEME_RAW_ART_TRAIN", Split::Train, 50481),
        ("ENTHYMEME_RAW_ART_VAL", Split::Validation, 7252),
        ("ENTHYMEME_RAW_ART_TEST", Split::Test, 14313),
    ] {
        if let Some(p) = raw(var) {
            record(&format!("ART {split}"), corpus::load_art(&p, split, InputFormat::Anlg).map(|l| l.stats.loaded_count), want);
        }
    }
    if checked.is_empty() && failed.is_empty() {
        return Outcome::Skip("no raw release supplied (set ENTHYMEME_RAW_D1/D2/D3/ART_TRAIN/ART_VAL/ART_TEST)".into());
    }
    let detail = checked.into_iter().chain(failed.iter().cloned()).collect::<Vec<_>>().join(", ");
    verdict(failed.is_empty(), detail)
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let outputs_a = common::stub_pipeline(a.path());
    let outputs_b = common::stub_pipeline(b.path());
    let elapsed = start.elapsed();
    let differing: Vec<String> = outputs_a
        .iter()
        .zip(&outputs_b)
        .filter(|(x, y)| std::fs::read(x).ok() != std::fs::read(y).ok())
        .map(|(x, _)| x.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let items = std::fs::read_to_string(a.path().join("d3.jsonl")).map(|s| s.lines().count()).unwrap_or(0);
    let manifests = outputs_a
        .iter()
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl" || e == "json"))
        .all(|p| enthymeme::manifest::manifest_path_for(p).exists());
    verdict(
        items == 20 && differing.is_empty() && manifests && elapsed < Duration::from_secs(30),
        format!("{items} items, two runs in {elapsed:.1?}, differing outputs {differing:?}, manifests present {manifests}"),
    )
}

fn annotation_simulation() -> Outcome {
    let mut es = common::enthymemes(5, TestSet::D1);
    es.extend(common::enthymemes(5, TestSet::D3));
    let mut gens = common::generations(&es[..5], Setting::FineTuned);
    gens.extend(common::generations(&es[5..], Setting::FineTunedKnowledge));
    let batch: Vec<AnnotationItem> = annotation::create_batch(&gens, &es, 5, 13).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("journal.jsonl");
    let store = AnnotationStore::open(batch.clone(), &journal).unwrap();
    let base = common::spawn_service(store);
    let cast = common::simulate_annotators(&base, &["ann-a", "ann-b", "ann-c"]);

    let mut per_item: HashMap<&str, Vec<bool>> = HashMap::new();
    for (item, _, vote) in &cast {
        per_item.entry(item.as_str()).or_default().push(*vote);
    }
    let over_judged = per_item.values().filter(|v| v.len() > 3).count();
    // hand count of majority-plausible items per test set
    let mut hand: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for item in &batch {
        let votes = &per_item[item.item_id.as_str()];
        let entry = hand.entry(item.dataset.to_string()).or_default();
        entry.0 += 1;
        entry.1 += usize::from(votes.iter().filter(|v| **v).count() >= 2);
    }
    let report: annotation::AggregateReport =
        reqwest::blocking::get(format!("{base}/report")).unwrap().json().unwrap();
    let journal_lines = std::fs::read_to_string(&journal).unwrap().lines().count();
    let journaled: Vec<JudgmentRecord> = enthymeme::jsonl::read_all(&journal).unwrap();
    let strict = annotation::aggregate(&batch, &journaled);
    let fractions_ok = report.groups.len() == hand.len()
        && report.groups.iter().all(|g| {
            let (n, yes) = hand[&g.dataset.to_string()];
            g.n_items == n && g.plausible_fraction == yes as f64 / n as f64
        });
    verdict(
        cast.len() == 30 && journal_lines == 30 && over_judged == 0 && fractions_ok && strict.is_ok(),
        format!(
            "{} judgments over {} items, journal {journal_lines} lines, over-judged {over_judged}, hand counts {hand:?}",
            cast.len(),
            batch.len()
        ),
    )
}

fn main() {
    let checks: [(&str, Check); 10] = [
        ("format_fidelity", format_fidelity),
        ("round_trip_200", round_trip),
        ("bleu_oracle", bleu_oracle),
        ("bertscore_oracle", bertscore_oracle),
        ("wilcoxon_exact", wilcoxon_exact),
        ("krippendorff_alpha", alpha),
        ("majority_vote", majority),
        ("dataset_counts", dataset_counts),
        ("end_to_end_stub_pipeline", end_to_end),
        ("annotation_simulation", annotation_simulation),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        match outcome {
            Outcome::Pass(d) => println!("PASS {name}: {d}"),
            Outcome::Skip(d) => println!("SKIP {name}: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name}: {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
