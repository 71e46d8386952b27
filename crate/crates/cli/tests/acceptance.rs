//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use recourse_core::blackbox::BlackBox;
use recourse_core::causal::CausalRuleSet;
use recourse_core::cost::Norm;
use recourse_core::learner::{extract_logic, fidelity_against, learn_rules, LearnerConfig};
use recourse_core::rules::{DecisionRule, DecisionRuleSet, Literal, Test};
use recourse_core::schema::{Dataset, FeatureKind, Schema, State, Value};
use recourse_core::search::{
    generate_candidates, mc3g, search, CandidateSource, Classes, CostMode, Mc3gConfig,
    SearchOutcome, SearchParams, Strategy,
};
use recourse_core::synth::{
    adult_like, german_like, integer_grid, random_world, surrogate_truth_schema, uniform_rows,
    World, WorldParams,
};
use recourse_core::Error;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["recourse"];
    argv.extend_from_slice(args);
    let code = recourse_cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:?}, limit {limit:?}"))
}

// Independent oracle for rule semantics, validity and cost.

fn scalar(v: Value) -> f64 {
    match v {
        Value::Num(x) => x,
        Value::Level(l) => l as f64,
    }
}

fn holds(lit: &Literal, s: &State) -> bool {
    let x = scalar(s.values()[lit.index()]);
    match lit.test() {
        Test::Eq(v) => x == scalar(v),
        Test::Neq(v) => x != scalar(v),
        Test::Le(v) => x <= scalar(v),
        Test::Lt(v) => x < scalar(v),
        Test::Gt(v) => x > scalar(v),
        Test::Ge(v) => x >= scalar(v),
        Test::Within(lo, hi) => scalar(lo) <= x && x <= scalar(hi),
    }
}

fn fires(rule: &DecisionRule, s: &State) -> bool {
    rule.body.iter().all(|l| holds(l, s)) && !rule.exceptions.iter().any(|e| fires(e, s))
}

fn consistent(c: &CausalRuleSet, s: &State) -> bool {
    c.rules()
        .iter()
        .all(|r| !r.antecedent.iter().all(|l| holds(l, s)) || holds(&r.consequent, s))
}

fn changed(s0: &State, s: &State) -> Vec<usize> {
    (0..s0.len())
        .filter(|&i| s0.values()[i] != s.values()[i])
        .collect()
}

fn induced(c: &CausalRuleSet, s0: &State, s: &State) -> BTreeSet<usize> {
    let diff = changed(s0, s);
    diff.iter()
        .copied()
        .filter(|&f| {
            c.rules().iter().any(|r| {
                r.consequent.index() == f
                    && r.antecedent.iter().all(|l| holds(l, s))
                    && r.antecedent.iter().any(|l| diff.contains(&l.index()))
                    && holds(&r.consequent, s)
                    && !holds(&r.consequent, s0)
            })
        })
        .collect()
}

fn valid(schema: &Schema, q: &DecisionRuleSet, c: &CausalRuleSet, s0: &State, s: &State) -> bool {
    let ind = induced(c, s0, s);
    consistent(c, s)
        && !q.rules.iter().any(|r| fires(r, s))
        && changed(s0, s)
            .into_iter()
            .all(|i| schema.features()[i].actionable || ind.contains(&i))
}

fn cost(
    schema: &Schema,
    c: &CausalRuleSet,
    s0: &State,
    s: &State,
    norm: Norm,
    mode: CostMode,
) -> f64 {
    let ind = induced(c, s0, s);
    let mut total = 0.0;
    for i in changed(s0, s) {
        let f = &schema.features()[i];
        let w = if mode == CostMode::Refined && ind.contains(&i) {
            0.0
        } else {
            f.weight
        };
        let d = if f.kind == FeatureKind::Categorical {
            1.0
        } else {
            (scalar(s.values()[i]) - scalar(s0.values()[i])) / f.norm_range()
        };
        total += match norm {
            Norm::L0 => w,
            Norm::L1 => w * d.abs(),
            Norm::L2 => w * d * d,
        };
    }
    total
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

const MODES: [CostMode; 2] = [CostMode::Refined, CostMode::Standard];

// Criteria.

fn john_fixture() -> Outcome {
    let start = Instant::now();
    let f = |n: &str| format!("{}/../../fixtures/loan/{n}", env!("CARGO_MANIFEST_DIR"));
    let (data, schema, causal, rules) = (
        f("data.csv"),
        f("schema.json"),
        f("causal.json"),
        f("rules.txt"),
    );
    let model = format!("rules:{rules}");
    let mut costs = Vec::new();
    for mode in ["mc3g", "standard"] {
        let (code, out, err) = cli(&[
            "explain",
            "--data",
            &data,
            "--schema",
            &schema,
            "--causal",
            &causal,
            "--model",
            &model,
            "--instance",
            ">10000,40000,599",
            "--norm",
            "l0",
            "--mode",
            mode,
        ]);
        ensure(code == 0, || format!("{mode}: exit {code}: {err}"))?;
        let doc: serde_json::Value = serde_json::from_str(&out).map_err(|e| e.to_string())?;
        let g = &doc["results"][0];
        let state = (
            &g["state"]["debt"],
            &g["state"]["balance"],
            &g["state"]["credit"],
        );
        ensure(
            state == (&"no_debt".into(), &"60000".into(), &"620".into()),
            || format!("{mode}: g = {}", g["state"]),
        )?;
        ensure(
            g["direct"] == serde_json::json!(["balance", "debt"]),
            || format!("direct = {}", g["direct"]),
        )?;
        ensure(g["induced"] == serde_json::json!(["credit"]), || {
            format!("induced = {}", g["induced"])
        })?;
        costs.push(g["cost"].as_f64().unwrap_or(f64::NAN));
    }
    ensure(costs == [2.0, 3.0], || {
        format!("L0 costs {costs:?}, expected [2, 3]")
    })?;
    within(start, Duration::from_secs(1))?;
    Ok(format!(
        "g=(no_debt,60000,620), L0 {} vs {} in {:?}",
        costs[0],
        costs[1],
        start.elapsed()
    ))
}

fn random_validity() -> Outcome {
    let start = Instant::now();
    let (mut searches, mut returned, mut seed) = (0usize, 0usize, 0u64);
    while searches < 600 {
        let w = random_world(1000 + seed, &WorldParams::default());
        seed += 1;
        let mut source = CandidateSource::new(Strategy::Hybrid);
        source.grid_cap = 20_000;
        for s0 in w.adverse_rows().into_iter().take(10) {
            let candidates =
                match generate_candidates(&source, &w.data, &w.decision, &w.causal, Some(&s0)) {
                    Err(Error::GridTooLarge { .. }) => w.data.rows().to_vec(),
                    other => other.map_err(|e| e.to_string())?,
                };
            for norm in Norm::ALL {
                for mode in MODES {
                    let out = search(
                        &w.schema,
                        &s0,
                        &w.decision,
                        &w.causal,
                        &candidates,
                        &w.schema.weights(),
                        SearchParams::new(norm, 3, mode),
                    )
                    .map_err(|e| e.to_string())?;
                    searches += 1;
                    let best = candidates
                        .iter()
                        .filter(|s| valid(&w.schema, &w.decision, &w.causal, &s0, s))
                        .map(|s| cost(&w.schema, &w.causal, &s0, s, norm, mode))
                        .min_by(f64::total_cmp);
                    for r in out.results() {
                        returned += 1;
                        ensure(
                            valid(&w.schema, &w.decision, &w.causal, &s0, &r.state),
                            || format!("world {}: invalid counterfactual {}", w.name, r.state),
                        )?;
                        let oracle = cost(&w.schema, &w.causal, &s0, &r.state, norm, mode);
                        ensure(close(oracle, r.cost.total), || {
                            format!("world {}: cost {} vs oracle {oracle}", w.name, r.cost.total)
                        })?;
                    }
                    let got = out.results().first().map(|r| r.cost.total);
                    ensure(
                        got.is_some() == best.is_some()
                            && got.zip(best).is_none_or(|(a, b)| close(a, b)),
                        || format!("world {}: minimum {got:?} vs oracle {best:?}", w.name),
                    )?;
                }
            }
        }
    }
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "{searches} searches over {seed} worlds, {returned} results, 0 violations"
    ))
}

fn strip_mode(csv: &str, mode: &str) -> Vec<String> {
    csv.lines()
        .skip(1)
        .filter_map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            (cells[1] == mode).then(|| [cells[0], cells[2], cells[3], cells[4]].join(","))
        })
        .collect()
}

fn bench_bundle(dir: &Path, world: &str, extra: &[&str]) -> Result<(String, String), String> {
    let bundle = dir.join(world);
    let b = bundle.to_str().unwrap();
    let (code, _, err) = cli(&[
        "gen", "--world", world, "--out", b, "--rows", "300", "--seed", "7",
    ]);
    ensure(code == 0, || format!("gen {world}: {err}"))?;
    let out = dir.join(format!("{world}-report"));
    let (data, schema, rules) = (
        format!("{b}/data.csv"),
        format!("{b}/schema.json"),
        format!("rules:{b}/rules.txt"),
    );
    let mut args = vec![
        "bench",
        "--data",
        &data,
        "--schema",
        &schema,
        "--model",
        &rules,
        "--out",
        out.to_str().unwrap(),
        "--mode",
        "both",
        "--norm",
        "l0,l1,l2",
    ];
    args.extend_from_slice(extra);
    let (code, _, err) = cli(&args);
    ensure(code == 0, || format!("bench {world}: exit {code}: {err}"))?;
    let csv = std::fs::read_to_string(out.join("report.csv")).map_err(|e| e.to_string())?;
    let json = std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?;
    Ok((csv, json))
}

fn no_causal_equivalence() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut lines = 0;
    for (world, k) in [("cars", "5"), ("adult", "3"), ("german", "1")] {
        let (csv, _) = bench_bundle(
            dir.path(),
            world,
            &["--k", k, "--sample", "120", "--seed", "3"],
        )?;
        let (a, b) = (strip_mode(&csv, "MC3G"), strip_mode(&csv, "standard"));
        ensure(!a.is_empty() && a == b, || {
            format!("{world}: MC3G rows {a:?} != standard rows {b:?}")
        })?;
        lines += a.len();
    }
    Ok(format!(
        "{lines} metric rows identical across modes (cars, adult, german without causal rules)"
    ))
}

fn refined_dominates() -> Outcome {
    let start = Instant::now();
    let mut worlds: Vec<World> = (0..40)
        .map(|s| random_world(2000 + s, &WorldParams::default()))
        .collect();
    worlds.push(adult_like(5, 300));
    worlds.push(german_like(5, 300));
    let (mut instances, mut strict, mut with_induced) = (0usize, 0usize, 0usize);
    for w in &worlds {
        let weights = w.schema.weights();
        for s0 in w.adverse_rows().into_iter().take(15) {
            for norm in Norm::ALL {
                let run = |mode| {
                    search(
                        &w.schema,
                        &s0,
                        &w.decision,
                        &w.causal,
                        w.data.rows(),
                        &weights,
                        SearchParams::new(norm, 3, mode),
                    )
                    .map_err(|e| e.to_string())
                };
                let (refined, standard) = (run(CostMode::Refined)?, run(CostMode::Standard)?);
                let (SearchOutcome::Found(a), SearchOutcome::Found(b)) = (&refined, &standard)
                else {
                    ensure(
                        refined.results().is_empty() && standard.results().is_empty(),
                        || "modes disagree on whether a counterfactual exists".into(),
                    )?;
                    continue;
                };
                instances += 1;
                for r in a {
                    ensure(r.cost.total <= r.standard_cost.total, || {
                        format!(
                            "{}: refined {} > standard {} for {}",
                            w.name, r.cost.total, r.standard_cost.total, r.state
                        )
                    })?;
                }
                let avg = |v: &[recourse_core::search::CounterfactualResult]| {
                    v.iter().map(|r| r.cost.total).sum::<f64>() / v.len() as f64
                };
                let (ma, sa) = (avg(a), avg(b));
                ensure(a.len() == b.len() && ma <= sa, || {
                    format!("{}: top-k avg {ma} > {sa}", w.name)
                })?;
                if a.iter().any(|r| !r.ledger.induced.is_empty()) {
                    with_induced += 1;
                }
                if b.iter().any(|r| !r.ledger.induced.is_empty()) {
                    ensure(ma < sa, || {
                        format!("{}: expected strict improvement, {ma} vs {sa}", w.name)
                    })?;
                    strict += 1;
                }
            }
        }
    }
    ensure(strict > 0, || {
        "no instance exercised an induced change".into()
    })?;
    within(start, Duration::from_secs(60))?;
    Ok(format!(
        "{instances} instance/norm pairs dominated; {strict} strict; {with_induced} with induced changes in MC3G top-k"
    ))
}

fn enumerate(schema: &Schema) -> Vec<State> {
    let sizes: Vec<u32> = schema
        .features()
        .iter()
        .map(|f| f.levels().unwrap().len() as u32)
        .collect();
    let total: u32 = sizes.iter().product();
    (0..total)
        .map(|mut n| {
            let mut v = vec![Value::Level(0); sizes.len()];
            for i in (0..sizes.len()).rev() {
                v[i] = Value::Level(n % sizes[i]);
                n /= sizes[i];
            }
            schema.state(v).unwrap()
        })
        .collect()
}

fn brute_force() -> Outcome {
    let start = Instant::now();
    let (mut worlds, mut seed, mut compared, mut states) = (0, 0u64, 0, 0usize);
    while worlds < 50 {
        let w = random_world(3000 + seed, &WorldParams::discrete());
        seed += 1;
        let Some(s0) = w.adverse_rows().into_iter().next() else {
            continue;
        };
        worlds += 1;
        let all = enumerate(&w.schema);
        ensure(all.len() <= 10_000, || {
            format!("{} has {} states", w.name, all.len())
        })?;
        states += all.len();
        let mut config = Mc3gConfig::new(Classes::new("bad", "good"));
        config.source = CandidateSource::new(Strategy::RuleGrid);
        let mut model = BlackBox::Rules(w.decision.clone());
        for norm in Norm::ALL {
            let got = mc3g(
                &mut model,
                &w.data,
                &s0,
                &w.causal,
                &config,
                SearchParams::new(norm, 1, CostMode::Refined),
            )
            .map_err(|e| e.to_string())?;
            let oracle = all
                .iter()
                .filter(|s| valid(&w.schema, &w.decision, &w.causal, &s0, s))
                .map(|s| cost(&w.schema, &w.causal, &s0, s, norm, CostMode::Refined))
                .min_by(f64::total_cmp);
            let got = got.results().first().map(|r| r.cost.total);
            ensure(
                got.is_some() == oracle.is_some()
                    && got.zip(oracle).is_none_or(|(a, b)| close(a, b)),
                || {
                    format!(
                        "{} {norm}: search {got:?} vs brute force {oracle:?}",
                        w.name
                    )
                },
            )?;
            compared += 1;
        }
    }
    within(start, Duration::from_secs(120))?;
    Ok(format!(
        "{compared} minima match over {worlds} worlds ({states} states enumerated)"
    ))
}

fn learner_fidelity() -> Outcome {
    let start = Instant::now();
    let (schema, truth) = surrogate_truth_schema();
    let grid = integer_grid(&schema);
    let grid_labels: Vec<String> = grid.iter().map(|s| truth.classify(s).to_string()).collect();
    let config = LearnerConfig::default();

    let rows = uniform_rows(11, &schema, 2000);
    let labels: Vec<String> = rows.iter().map(|s| truth.classify(s).to_string()).collect();
    let sample = Dataset::new(schema.clone(), rows, None).map_err(|e| e.to_string())?;
    let learned =
        learn_rules(&sample, &labels, "neg", "pos", &config).map_err(|e| e.to_string())?;
    let sampled = fidelity_against(&grid_labels, &learned, &grid).agreement_rate;
    ensure(sampled >= 0.95, || {
        format!("fidelity {sampled} from 2000 rows")
    })?;

    let full = Dataset::new(schema.clone(), grid.clone(), None).map_err(|e| e.to_string())?;
    let exact =
        learn_rules(&full, &grid_labels, "neg", "pos", &config).map_err(|e| e.to_string())?;
    let full_rate = fidelity_against(&grid_labels, &exact, &grid).agreement_rate;
    ensure(full_rate == 1.0, || {
        format!(
            "noiseless full-grid fidelity {full_rate}:\n{}",
            exact.to_text(&schema)
        )
    })?;
    within(start, Duration::from_secs(30))?;
    Ok(format!(
        "fidelity {sampled:.4} from 2000 rows, {full_rate} on full grid of {} states",
        grid.len()
    ))
}

fn parallel_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for seed in ["1", "2", "3"] {
        let bundle = dir.path().join(format!("adult-{seed}"));
        let b = bundle.to_str().unwrap();
        let (code, _, err) = cli(&[
            "gen", "--world", "adult", "--out", b, "--rows", "300", "--seed", seed,
        ]);
        ensure(code == 0, || err)?;
        let mut reports = Vec::new();
        for jobs in ["1", "8"] {
            let out = dir.path().join(format!("r-{seed}-{jobs}"));
            let (data, schema, causal) = (
                format!("{b}/data.csv"),
                format!("{b}/schema.json"),
                format!("{b}/causal.json"),
            );
            // The learned surrogate path: labels come from the data file.
            let (code, _, err) = cli(&[
                "bench",
                "--data",
                &data,
                "--schema",
                &schema,
                "--causal",
                &causal,
                "--undesired",
                "low",
                "--out",
                out.to_str().unwrap(),
                "--mode",
                "both",
                "--norm",
                "l0,l1,l2",
                "--k",
                "3",
                "--candidates",
                "hybrid",
                "--sample",
                "10",
                "--seed",
                seed,
                "--jobs",
                jobs,
            ]);
            ensure(code == 0, || {
                format!("seed {seed} jobs {jobs}: exit {code}: {err}")
            })?;
            let read = |n: &str| std::fs::read(out.join(n)).map_err(|e| e.to_string());
            reports.push((read("report.json")?, read("report.csv")?));
        }
        ensure(reports[0] == reports[1], || {
            format!("seed {seed}: --jobs 1 and --jobs 8 reports differ")
        })?;
    }
    Ok("report.json and report.csv byte-identical for --jobs 1/8 over seeds 1, 2, 3".into())
}

fn passthrough() -> Outcome {
    let config = LearnerConfig::default();
    let mut checked = 0;
    let mut worlds: Vec<World> = (0..30)
        .map(|s| random_world(4000 + s, &WorldParams::default()))
        .collect();
    worlds.push(adult_like(1, 50));
    worlds.push(german_like(1, 50));
    for w in &worlds {
        let mut model = BlackBox::Rules(w.decision.clone());
        let q = extract_logic(&mut model, &w.data, "ignored", "ignored", &config)
            .map_err(|e| e.to_string())?;
        ensure(
            q == w.decision && q.to_text(&w.schema) == w.decision.to_text(&w.schema),
            || format!("{}: rules changed on pass-through", w.name),
        )?;
        checked += 1;
    }
    Ok(format!("{checked} rule models returned unchanged"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 loan fixture exactness", john_fixture),
        ("2 validity on random causal worlds", random_validity),
        ("3 equivalence without causal rules", no_causal_equivalence),
        ("4 refined cost dominates standard", refined_dominates),
        ("5 agreement with brute force", brute_force),
        ("6 surrogate fidelity", learner_fidelity),
        ("7 determinism under parallelism", parallel_determinism),
        ("8 rule-model pass-through", passthrough),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        match check() {
            Ok(detail) => println!("PASS [{name}] {detail} ({:.2?})", start.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL [{name}] {why} ({:.2?})", start.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
