//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;
use tower::ServiceExt;

use claimsearch::enrich::{EnrichedClaim, EntityGazetteer};
use claimsearch::index::{Query, SearchContext, SearchIndex, SharedIndex};
use claimsearch::pipeline::{build_index, read_jsonl};
use claimsearch::verdict::{normalize, LabelLexicon, RatingInfo, Verdict};
use claimsearch::workflow::{execute_dag, validate_dag, DagError, DagRun, TaskFailure, TaskSpec, TaskState};
use claimsearch_cli::run_cli;
use claimsearch_server::{router, AppState};

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome, u64);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {{
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    }};
}

fn demo(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/demo").join(name)
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("claimsearch").chain(args.iter().copied());
    let code = run_cli(argv, &mut out, &mut err);
    if code != 0 {
        return Err(format!("claimsearch {} exited {code}: {}", args.join(" "), String::from_utf8_lossy(&err)));
    }
    String::from_utf8(out).map_err(|e| e.to_string())
}

fn cli_json(args: &[&str]) -> Result<Value, String> {
    let mut full = vec!["--format", "json"];
    full.extend_from_slice(args);
    serde_json::from_str(&cli(&full)?).map_err(|e| e.to_string())
}

/// Runs the four pipeline stages through the CLI into `work`.
struct DemoBuild {
    _dir: tempfile::TempDir,
    work: PathBuf,
}

impl DemoBuild {
    fn new() -> Result<Self, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let work = dir.path().to_path_buf();
        let p = |name: &str| work.join(name).display().to_string();
        let archive = demo("archive.jsonl").display().to_string();
        let gazetteer = demo("gazetteer.toml").display().to_string();
        cli(&["ingest", "--archive", &archive, "--out", &p("records.jsonl")])?;
        cli(&["normalize", "--input", &p("records.jsonl"), "--out", &p("normalized.jsonl")])?;
        cli(&["enrich", "--input", &p("normalized.jsonl"), "--gazetteer", &gazetteer, "--out", &p("enriched.jsonl")])?;
        cli(&["index", "--input", &p("enriched.jsonl"), "--out", &p("index.json")])?;
        Ok(Self { _dir: dir, work })
    }

    fn path(&self, name: &str) -> String {
        self.work.join(name).display().to_string()
    }

    fn search(&self, extra: &[&str]) -> Result<Value, String> {
        let index = self.path("index.json");
        let gazetteer = demo("gazetteer.toml").display().to_string();
        let mut args = vec!["search", "--index", &index, "--gazetteer", &gazetteer];
        args.extend_from_slice(extra);
        cli_json(&args)
    }
}

fn normalization_table() -> Outcome {
    let lexicon = LabelLexicon::seed();
    let expected = [Verdict::False, Verdict::Mixed, Verdict::Mixed, Verdict::Mixed, Verdict::True];
    for (value, want) in (1..=5).zip(expected) {
        let got = normalize(&RatingInfo::numeric(value as f64, 5.0, 1.0), &lexicon);
        ensure!(got == want, "rating {value} gave {got}, expected {want}");
    }
    Ok(())
}

fn normalization_totality() -> Outcome {
    let lexicon = LabelLexicon::seed();
    let mut rng = StdRng::seed_from_u64(2024);
    let labels = ["False", "Verdadeiro", "Falsch", "no idea", ""];
    let mut checked_scaling = 0;
    for i in 0..10_000 {
        let worst: f64 = rng.random_range(-10.0..10.0);
        let best = worst + rng.random_range(0.5..20.0);
        let value = rng.random_range(worst..=best);
        let rating = match i % 4 {
            0 => RatingInfo::default(),
            1 => RatingInfo::label(labels[rng.random_range(0..labels.len())]),
            _ => RatingInfo {
                rating_value: rng.random_bool(0.9).then_some(value),
                best_rating: rng.random_bool(0.9).then_some(best),
                worst_rating: rng.random_bool(0.9).then_some(worst),
                rating_label: rng.random_bool(0.5).then(|| labels[rng.random_range(0..labels.len())].into()),
            },
        };
        let verdict = normalize(&rating, &lexicon);
        ensure!(Verdict::ALL.contains(&verdict), "no verdict for {rating:?}");
        if let Some((v, b, w)) = rating.triple() {
            let p = (v - w) / (b - w);
            if [0.125, 0.375, 0.625, 0.875].iter().any(|m| (p - m).abs() < 1e-6) {
                continue;
            }
            let (a, c) = (rng.random_range(0.1..50.0), rng.random_range(-100.0..100.0));
            let scaled = RatingInfo::numeric(a * v + c, a * b + c, a * w + c);
            let scaled = RatingInfo { rating_label: rating.rating_label.clone(), ..scaled };
            let again = normalize(&scaled, &lexicon);
            ensure!(again == verdict, "{rating:?} -> {verdict}, rescaled -> {again}");
            checked_scaling += 1;
        }
    }
    ensure!(checked_scaling > 1000, "only {checked_scaling} rescaling checks ran");
    Ok(())
}

fn extraction_fidelity() -> Outcome {
    let pages = std::fs::read_dir(demo("pages")).map_err(|e| e.to_string())?.count();
    ensure!(pages >= 12, "fixture has {pages} pages");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("records.jsonl");
    let archive = demo("archive.jsonl").display().to_string();
    cli(&["ingest", "--archive", &archive, "--out", &out.display().to_string()])?;
    let produced = std::fs::read(&out).map_err(|e| e.to_string())?;
    let golden = std::fs::read(demo("golden_records.jsonl")).map_err(|e| e.to_string())?;
    ensure!(produced == golden, "records differ from golden_records.jsonl");
    let records: Vec<Value> = read_jsonl(&out).map_err(|e| e.to_string())?;
    let sources: std::collections::BTreeSet<&str> = records.iter().filter_map(|r| r["source_id"].as_str()).collect();
    ensure!(sources.len() >= 3, "only {} sources", sources.len());
    Ok(())
}

fn ranking_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0xbeef);
    let ctx = SearchContext::default();
    for round in 0..200 {
        let corpus = support::random_corpus(&mut rng);
        let mut index = SearchIndex::new();
        for c in &corpus {
            index.add_document(c.clone()).map_err(|e| e.to_string())?;
        }
        let q = support::random_query(&mut rng);
        let want = support::brute_force(&corpus, &q);
        let got = index.search(&q, &ctx).map_err(|e| e.to_string())?;
        ensure!(got.total_hits == want.len(), "round {round}: {} hits vs {}", got.total_hits, want.len());
        for (hit, (pos, score)) in got.hits.iter().zip(&want) {
            ensure!(hit.doc_id as usize == *pos, "round {round}: order differs");
            ensure!((hit.score - score).abs() <= 1e-9, "round {round}: score {} vs {score}", hit.score);
        }
    }
    Ok(())
}

fn demo_state() -> Result<AppState, String> {
    let build = DemoBuild::new()?;
    let index = SearchIndex::load(Path::new(&build.path("index.json"))).map_err(|e| e.to_string())?;
    let ctx = SearchContext {
        gazetteer: Arc::new(EntityGazetteer::load(&demo("gazetteer.toml")).map_err(|e| e.to_string())?),
        ..SearchContext::default()
    };
    Ok(AppState::new(SharedIndex::new(index), ctx, 10))
}

fn no_personalization() -> Outcome {
    let app = router(demo_state()?, &[]);
    let runtime = tokio::runtime::Builder::new_current_thread().build().map_err(|e| e.to_string())?;
    runtime.block_on(async {
        let mut rng = StdRng::seed_from_u64(99);
        let fetch = |uri: &str, rng: &mut StdRng| {
            let mut builder = Request::get(uri);
            for name in ["user-agent", "cookie", "accept-language", "x-forwarded-for", "referer", "dnt"] {
                if rng.random_bool(0.5) {
                    let v: String = (0..rng.random_range(1..30)).map(|_| rng.random_range('a'..='z')).collect();
                    builder = builder.header(name, v);
                }
            }
            let request = builder.body(Body::empty()).unwrap();
            let app = app.clone();
            async move {
                let response = app.oneshot(request).await.unwrap();
                let bytes = response.into_body().collect().await.unwrap().to_bytes();
                let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("elapsed_ms");
                serde_json::to_vec(&v).unwrap()
            }
        };
        let targets = ["/v1/search?q=refugees", "/v1/search?q=thunberg&expand=true&lang=pt,de"];
        let others = ["/v1/search?q=salario", "/v1/search?q=crime&verdict=FALSE", "/v1/stats"];
        for target in targets {
            let baseline = fetch(target, &mut rng).await;
            for i in 0..50 {
                let other = others[rng.random_range(0..others.len())];
                fetch(other, &mut rng).await;
                let body = fetch(target, &mut rng).await;
                ensure!(body == baseline, "{target}: replay {i} differs");
            }
        }
        Ok(())
    })
}

fn demo_refugees() -> Outcome {
    let build = DemoBuild::new()?;
    let page = build.search(&["--q", "refugees"])?;
    let hits = page["hits"].as_array().ok_or("no hits array")?;
    let hit = hits
        .iter()
        .find(|h| h["excerpt"].as_str().is_some_and(|e| e.contains("Crime in Germany is up 10% plus since migrants were accepted")))
        .ok_or("demo claim missing from results")?;
    ensure!(hit["verdict"] == "FALSE", "verdict {}", hit["verdict"]);
    ensure!(hit["country"] == "US", "country {}", hit["country"]);
    Ok(())
}

fn demo_mixed_claim() -> Outcome {
    let build = DemoBuild::new()?;
    let page = build.search(&["--q", "Paulo Arantes"])?;
    let hit = &page["hits"][0];
    ensure!(hit["verdict"] == "MIXED", "verdict {}", hit["verdict"]);
    for field in ["verdict", "review_title", "date_published", "country", "review_url", "excerpt"] {
        let filled = hit[field].as_str().is_some_and(|s| !s.trim().is_empty());
        ensure!(filled, "display field {field} is empty");
    }
    Ok(())
}

fn cross_language() -> Outcome {
    let build = DemoBuild::new()?;
    let portuguese = |page: &Value| -> Vec<String> {
        page["hits"]
            .as_array()
            .into_iter()
            .flatten()
            .filter(|h| h["language"] == "pt")
            .filter_map(|h| h["review_url"].as_str().map(str::to_string))
            .collect()
    };
    let off = portuguese(&build.search(&["--q", "refugees", "--page-size", "100"])?);
    let on = portuguese(&build.search(&["--q", "refugees", "--page-size", "100", "--expand"])?);
    ensure!(off.is_empty(), "Portuguese hits without expansion: {off:?}");
    ensure!(on.iter().any(|u| u.contains("aosfatos.org")), "expansion missed the Portuguese claim: {on:?}");
    Ok(())
}

fn table(run: &DagRun) -> Vec<(String, TaskState, u32)> {
    run.task_states.iter().map(|(id, s)| (id.clone(), *s, run.attempt_counts[id])).collect()
}

fn row(id: &str, state: TaskState, attempts: u32) -> (String, TaskState, u32) {
    (id.to_string(), state, attempts)
}

fn dag_semantics() -> Outcome {
    use TaskState::*;
    let ok = |_: &TaskSpec, _: u32| -> Result<(), TaskFailure> { Ok(()) };
    let err = |e: claimsearch::workflow::ExecuteError| e.to_string();

    let chain = [
        TaskSpec::new("index", "index", &["enrich"]),
        TaskSpec::new("enrich", "enrich", &["normalize"]),
        TaskSpec::new("normalize", "normalize", &["ingest"]),
        TaskSpec::new("ingest", "ingest", &[]),
    ];
    let order = validate_dag(&chain).map_err(|e| e.to_string())?;
    ensure!(order == ["ingest", "normalize", "enrich", "index"], "chain order {order:?}");
    let run = execute_dag(&chain, &ok, "chain", 2, &()).map_err(err)?;
    let want = vec![row("enrich", Success, 1), row("index", Success, 1), row("ingest", Success, 1), row("normalize", Success, 1)];
    ensure!(table(&run) == want, "chain table {:?}", table(&run));
    ensure!(run.start_order() == order, "chain start order {:?}", run.start_order());

    let failing = [
        TaskSpec::new("a", "x", &[]),
        TaskSpec::new("b", "x", &["a"]).with_retries(2, Duration::from_millis(1)),
        TaskSpec::new("c", "x", &["b"]),
    ];
    let fail_b = |t: &TaskSpec, _: u32| -> Result<(), TaskFailure> {
        if t.task_id == "b" {
            Err(TaskFailure::Failed("permanent".into()))
        } else {
            Ok(())
        }
    };
    let run = execute_dag(&failing, &fail_b, "fail", 2, &()).map_err(err)?;
    let want = vec![row("a", Success, 1), row("b", Failed, 3), row("c", Skipped, 0)];
    ensure!(table(&run) == want, "failure table {:?}", table(&run));

    let diamond = [
        TaskSpec::new("A", "x", &[]),
        TaskSpec::new("B", "x", &["A"]),
        TaskSpec::new("C", "x", &["A"]),
        TaskSpec::new("D", "x", &["B", "C"]),
    ];
    let spans: Mutex<BTreeMap<String, (Instant, Instant)>> = Mutex::default();
    let timed = |t: &TaskSpec, _: u32| -> Result<(), TaskFailure> {
        let start = Instant::now();
        std::thread::sleep(Duration::from_millis(10));
        spans.lock().unwrap().insert(t.task_id.clone(), (start, Instant::now()));
        Ok(())
    };
    let run = execute_dag(&diamond, &timed, "diamond", 4, &()).map_err(err)?;
    ensure!(table(&run).iter().all(|r| r.1 == Success && r.2 == 1), "diamond table {:?}", table(&run));
    let s = spans.into_inner().unwrap();
    ensure!(s["B"].0 >= s["A"].1 && s["C"].0 >= s["A"].1, "B or C started before A finished");
    ensure!(s["D"].0 >= s["B"].1 && s["D"].0 >= s["C"].1, "D started before B and C finished");
    run.check(&diamond)?;

    let cycle = [TaskSpec::new("a", "x", &["b"]), TaskSpec::new("b", "x", &["a"])];
    match validate_dag(&cycle) {
        Err(DagError::Cycle(names)) => ensure!(names.contains(&"a".into()) && names.contains(&"b".into()), "cycle {names:?}"),
        other => return Err(format!("cycle not detected: {other:?}")),
    }
    Ok(())
}

fn stats_conservation() -> Outcome {
    let build = DemoBuild::new()?;
    let stats = cli_json(&["stats", "--index", &build.path("index.json")])?;
    let counts = |key: &str| -> BTreeMap<String, u64> {
        stats[key]
            .as_object()
            .map(|m| m.iter().map(|(k, v)| (k.clone(), v.as_u64().unwrap_or(0))).collect())
            .unwrap_or_default()
    };
    let total = stats["total_documents"].as_u64().ok_or("no total")?;
    let lang = counts("by_language");
    let verdict = counts("by_verdict");
    ensure!(lang.values().sum::<u64>() == total, "languages sum to {}", lang.values().sum::<u64>());
    ensure!(verdict.values().sum::<u64>() == total, "verdicts sum to {}", verdict.values().sum::<u64>());
    ensure!(total == 14, "total {total}");
    let want_lang = BTreeMap::from([("de".to_string(), 3), ("en".to_string(), 6), ("pt".to_string(), 5)]);
    ensure!(lang == want_lang, "by_language {lang:?}");
    let want_verdict = BTreeMap::from([
        ("FALSE".to_string(), 7),
        ("MIXED".to_string(), 4),
        ("OTHER".to_string(), 1),
        ("TRUE".to_string(), 2),
    ]);
    ensure!(verdict == want_verdict, "by_verdict {verdict:?}");
    let by_year: u64 = stats["by_year"]
        .as_object()
        .ok_or("no by_year")?
        .values()
        .flat_map(|m| m.as_object().into_iter().flatten().map(|(_, v)| v.as_u64().unwrap_or(0)))
        .sum();
    ensure!(by_year == 14, "by_year sums to {by_year}");
    Ok(())
}

fn snapshot_round_trip() -> Outcome {
    let build = DemoBuild::new()?;
    let enriched: Vec<EnrichedClaim> = read_jsonl(Path::new(&build.path("enriched.jsonl"))).map_err(|e| e.to_string())?;
    let mut live = build_index(enriched, Default::default()).map_err(|e| e.to_string())?;
    let path = build.work.join("round-trip.json");
    live.save(&path).map_err(|e| e.to_string())?;
    let loaded = SearchIndex::load(&path).map_err(|e| e.to_string())?;
    let ctx = SearchContext {
        gazetteer: Arc::new(EntityGazetteer::load(&demo("gazetteer.toml")).map_err(|e| e.to_string())?),
        ..SearchContext::default()
    };
    let mut refugee_filter = Query::new("refugees");
    refugee_filter.filters.verdicts.insert(Verdict::False);
    let queries = [
        Query::new("refugees"),
        Query::new("Paulo Arantes"),
        Query::new("refugees").with_page(0, 100),
        Query::new("refugees").with_page(0, 100).expanded(true),
        refugee_filter,
        Query::new(""),
    ];
    for q in &queries {
        let a = serde_json::to_vec(&live.search(q, &ctx).map_err(|e| e.to_string())?.without_timing()).unwrap();
        let b = serde_json::to_vec(&loaded.search(q, &ctx).map_err(|e| e.to_string())?.without_timing()).unwrap();
        ensure!(a == b, "results differ after reload for {:?}", q.text);
    }
    Ok(())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("normalization table", normalization_table, 1),
        ("normalization totality and scale invariance", normalization_totality, 5),
        ("extraction fidelity", extraction_fidelity, 5),
        ("ranking oracle equivalence", ranking_oracle, 30),
        ("no personalization", no_personalization, 30),
        ("demo: refugees query", demo_refugees, 5),
        ("demo: MIXED claim display fields", demo_mixed_claim, 5),
        ("cross-language retrieval", cross_language, 5),
        ("DAG semantics", dag_semantics, 10),
        ("stats conservation", stats_conservation, 5),
        ("snapshot round-trip", snapshot_round_trip, 10),
    ];
    let mut failed = false;
    std::panic::set_hook(Box::new(|_| {}));
    for (name, check, limit) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let elapsed = started.elapsed();
        let outcome = outcome.and_then(|()| {
            if elapsed > Duration::from_secs(limit) {
                Err(format!("took {elapsed:?}, limit {limit} s"))
            } else {
                Ok(())
            }
        });
        match outcome {
            Ok(()) => println!("PASS  {name} ({:.0} ms)", elapsed.as_secs_f64() * 1000.0),
            Err(reason) => {
                failed = true;
                println!("FAIL  {name}: {reason}");
            }
        }
    }
    if failed {
        std::process::exit(1);
    }
}
