use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;
use std::time::Duration;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value as Json};

use recourse_core::bench::{benchmark_with_rules, BenchmarkSpec};
use recourse_core::blackbox::{BlackBox, PredictionTable, SubprocessModel};
use recourse_core::causal::CausalRuleSet;
use recourse_core::cost::{compute_weighted_lp, standard_cost, Norm};
use recourse_core::fixtures;
use recourse_core::learner::{fidelity_against, learn_rules, LearnerConfig};
use recourse_core::rules::{parse_rules, DecisionRuleSet};
use recourse_core::schema::{Dataset, Schema, State};
use recourse_core::search::{
    generate_candidates, search, with_jobs, CandidateSource, Classes, CostMode, Mc3gConfig,
    SearchOutcome, SearchParams, Strategy,
};
use recourse_core::synth::{self, WorldParams};

use crate::{
    recommendation, BenchArgs, CandidatesArg, Command, ExplainArgs, Failure, GenArgs, LearnArgs,
    ModeArg, ModelArgs, NormArg, SearchArgs, ValidateArgs, WorldArg, EXIT_ADAPTER,
    EXIT_NO_COUNTERFACTUAL,
};

type CmdResult<T = ()> = Result<T, Failure>;

pub(crate) fn dispatch(cmd: Command, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    match cmd {
        Command::Learn(a) => learn(a, out),
        Command::Explain(a) => explain(a, out),
        Command::Bench(a) => bench(a, out),
        Command::Validate(a) => validate(a, out, err),
        Command::Gen(a) => gen(a, out),
    }
}

fn in_file(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::config(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> CmdResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| in_file(path, e))
}

fn read_text(path: &Path) -> CmdResult<String> {
    fs::read_to_string(path).map_err(|e| in_file(path, e))
}

fn write_file(path: &Path, contents: &str) -> CmdResult {
    fs::write(path, contents).map_err(|e| in_file(path, e))
}

fn create_dir(path: &Path) -> CmdResult {
    fs::create_dir_all(path).map_err(|e| in_file(path, e))
}

fn load_schema(path: &Path) -> CmdResult<Schema> {
    Schema::from_json_reader(open(path)?).map_err(|e| in_file(path, e))
}

fn load_data(path: &Path, schema: &Schema) -> CmdResult<Dataset> {
    let header = csv::Reader::from_reader(open(path)?)
        .headers()
        .map_err(|e| in_file(path, e))?
        .clone();
    let labeled = header.iter().any(|h| h == "label") && schema.index_of("label").is_err();
    Dataset::read_csv(open(path)?, schema.clone(), labeled.then_some("label"))
        .map_err(|e| in_file(path, e))
}

fn load_causal(path: Option<&Path>, schema: &Schema) -> CmdResult<CausalRuleSet> {
    match path {
        Some(p) => CausalRuleSet::from_json_reader(open(p)?, schema).map_err(|e| in_file(p, e)),
        None => Ok(CausalRuleSet::empty(schema)),
    }
}

fn load_rules(path: &Path, schema: &Schema) -> CmdResult<DecisionRuleSet> {
    parse_rules(&read_text(path)?, schema).map_err(|e| in_file(path, e))
}

fn open_model(args: &ModelArgs, data: &Dataset) -> CmdResult<BlackBox> {
    let Some(spec) = &args.model else {
        return Ok(BlackBox::Predictions(PredictionTable::from_dataset(data)?));
    };
    let (kind, rest) = spec.split_once(':').ok_or_else(|| {
        Failure::config(format!("model `{spec}` must be rules:, exec: or preds:"))
    })?;
    match kind {
        "rules" => Ok(BlackBox::Rules(load_rules(Path::new(rest), data.schema())?)),
        "exec" => SubprocessModel::spawn_with_timeout(rest, Duration::from_secs(args.timeout))
            .map(BlackBox::Subprocess)
            .map_err(|e| Failure {
                code: EXIT_ADAPTER,
                message: format!("starting `{rest}`: {e}"),
            }),
        "preds" => {
            let path = Path::new(rest);
            PredictionTable::from_csv(open(path)?, data)
                .map(BlackBox::Predictions)
                .map_err(|e| in_file(path, e))
        }
        _ => Err(Failure::config(format!("unknown model kind `{kind}`"))),
    }
}

/// Decision rules for the model plus the labels they were checked against.
struct Surrogate {
    rules: DecisionRuleSet,
    labels: Vec<String>,
    classes: Classes,
}

fn favorable_label(labels: &[String], undesired: &str) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels.iter().filter(|l| *l != undesired) {
        *counts.entry(l).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
        .map_or_else(|| format!("not_{undesired}"), |(l, _)| l.to_string())
}

fn surrogate(model: &mut BlackBox, data: &Dataset, args: &ModelArgs) -> CmdResult<Surrogate> {
    if let Some(q) = model.rules() {
        let labels = data
            .rows()
            .iter()
            .map(|s| q.classify(s).to_string())
            .collect();
        return Ok(Surrogate {
            classes: Classes::new(&q.undesired, &q.favorable),
            rules: q.clone(),
            labels,
        });
    }
    let undesired = args.undesired.as_deref().ok_or_else(|| {
        Failure::config("--undesired is required unless the model is a rule file")
    })?;
    if data.is_empty() {
        return Err(recourse_core::Error::EmptyDataset.into());
    }
    let labels = model.predict(data.schema(), data.rows())?;
    let favorable = args
        .favorable
        .clone()
        .unwrap_or_else(|| favorable_label(&labels, undesired));
    let config = LearnerConfig {
        max_exception_depth: args.max_exception_depth,
        ..LearnerConfig::default()
    };
    let rules = learn_rules(data, &labels, undesired, &favorable, &config)?;
    Ok(Surrogate {
        rules,
        labels,
        classes: Classes::new(undesired, &favorable),
    })
}

fn learn(a: LearnArgs, out: &mut dyn Write) -> CmdResult {
    let schema = load_schema(&a.model.schema)?;
    let data = load_data(&a.model.data, &schema)?;
    let mut model = open_model(&a.model, &data)?;
    let s = surrogate(&mut model, &data, &a.model)?;
    let report = fidelity_against(&s.labels, &s.rules, data.rows());
    create_dir(&a.out)?;
    write_file(&a.out.join("rules.txt"), &s.rules.to_text(&schema))?;
    write_file(&a.out.join("fidelity.json"), &report.to_json())?;
    let _ = writeln!(
        out,
        "{} rules, {} literals, fidelity {:.4}",
        s.rules.rules.len(),
        report.literal_count,
        report.agreement_rate
    );
    Ok(())
}

fn norms(args: &SearchArgs) -> Vec<Norm> {
    let mut v: Vec<Norm> = Vec::new();
    for n in &args.norm {
        let n = match n {
            NormArg::L0 => Norm::L0,
            NormArg::L1 => Norm::L1,
            NormArg::L2 => Norm::L2,
        };
        if !v.contains(&n) {
            v.push(n);
        }
    }
    v
}

fn modes(args: &SearchArgs) -> Vec<CostMode> {
    match args.mode {
        ModeArg::Mc3g => vec![CostMode::Refined],
        ModeArg::Standard => vec![CostMode::Standard],
        ModeArg::Both => vec![CostMode::Refined, CostMode::Standard],
    }
}

fn source(args: &SearchArgs) -> CandidateSource {
    let mut s = CandidateSource::new(match args.candidates {
        CandidatesArg::Dataset => Strategy::DatasetRows,
        CandidatesArg::Grid => Strategy::RuleGrid,
        CandidatesArg::Hybrid => Strategy::Hybrid,
    });
    s.grid_cap = args.grid_cap;
    s
}

fn check_k(args: &SearchArgs) -> CmdResult {
    if args.k == 0 {
        return Err(Failure::config("--k must be at least 1"));
    }
    Ok(())
}

fn state_object(schema: &Schema, s: &State) -> Json {
    let mut m = Map::new();
    for (name, v) in schema.names().zip(schema.format_state(s)) {
        m.insert(name.to_string(), Json::String(v));
    }
    Json::Object(m)
}

fn select_instance(a: &ExplainArgs, data: &Dataset) -> CmdResult<State> {
    let schema = data.schema();
    match (a.row, &a.instance) {
        (Some(r), _) => data.rows().get(r).cloned().ok_or_else(|| {
            Failure::config(format!(
                "row {r} is past the end of the dataset ({} rows)",
                data.len()
            ))
        }),
        (None, Some(text)) => {
            let mut rdr = csv::ReaderBuilder::new()
                .has_headers(false)
                .trim(csv::Trim::All)
                .from_reader(text.as_bytes());
            let record = rdr
                .records()
                .next()
                .ok_or_else(|| Failure::config("--instance is empty"))?
                .map_err(|e| Failure::config(format!("--instance: {e}")))?;
            let cells: Vec<&str> = record.iter().collect();
            Ok(schema.parse_state(&cells)?)
        }
        (None, None) => Err(Failure::config("either --row or --instance is required")),
    }
}

fn explain(a: ExplainArgs, out: &mut dyn Write) -> CmdResult {
    check_k(&a.search)?;
    let schema = load_schema(&a.model.schema)?;
    let data = load_data(&a.model.data, &schema)?;
    let c = load_causal(a.search.causal.as_deref(), &schema)?;
    let s0 = select_instance(&a, &data)?;
    let mut model = open_model(&a.model, &data)?;
    let sur = surrogate(&mut model, &data, &a.model)?;
    let q = &sur.rules;
    if !q.is_decision_compliant(&s0) {
        return Err(recourse_core::Error::NotAdverse.into());
    }
    let norms = norms(&a.search);
    let modes = modes(&a.search);
    let weights = schema.weights();
    let candidates = generate_candidates(&source(&a.search), &data, q, &c, Some(&s0))?;
    let params = SearchParams::new(norms[0], a.search.k, modes[0]);
    let outcome = with_jobs(a.search.jobs, || {
        search(&schema, &s0, q, &c, &candidates, &weights, params)
    })??;
    let SearchOutcome::Found(results) = outcome else {
        return Err(Failure {
            code: EXIT_NO_COUNTERFACTUAL,
            message: format!(
                "no counterfactual found among {} candidates",
                candidates.len()
            ),
        });
    };

    let mut items = Vec::new();
    for r in &results {
        let mut costs = Map::new();
        for &mode in &modes {
            let mut per_norm = Map::new();
            for &n in &norms {
                let cost = match mode {
                    CostMode::Refined => {
                        compute_weighted_lp(&schema, &s0, &r.state, &r.ledger.adjusted_weights, n)?
                    }
                    CostMode::Standard => standard_cost(&schema, &s0, &r.state, n)?,
                };
                per_norm.insert(n.to_string(), json!(cost.total));
            }
            costs.insert(mode.label().to_string(), Json::Object(per_norm));
        }
        items.push(json!({
            "rank": r.rank,
            "state": state_object(&schema, &r.state),
            "direct": r.ledger.direct_names(&schema),
            "induced": r.ledger.induced_names(&schema),
            "cost": r.cost.total,
            "standard_cost": r.standard_cost.total,
            "costs": costs,
            "recommendation": recommendation(&schema, &s0, &r.state, &r.ledger),
        }));
    }
    let doc = json!({
        "instance": state_object(&schema, &s0),
        "outcome": q.undesired,
        "target": q.favorable,
        "mode": params.mode.label(),
        "norm": params.norm.to_string(),
        "candidates": candidates.len(),
        "results": items,
    });
    let text = serde_json::to_string_pretty(&doc).expect("json value serializes") + "\n";
    if let Some(path) = &a.out {
        write_file(path, &text)?;
    }
    let _ = out.write_all(text.as_bytes());
    Ok(())
}

fn bench(a: BenchArgs, out: &mut dyn Write) -> CmdResult {
    check_k(&a.search)?;
    let schema = load_schema(&a.model.schema)?;
    let data = load_data(&a.model.data, &schema)?;
    let c = load_causal(a.search.causal.as_deref(), &schema)?;
    let mut model = open_model(&a.model, &data)?;
    let sur = surrogate(&mut model, &data, &a.model)?;
    let mut instances: Vec<State> = data
        .rows()
        .iter()
        .filter(|s| sur.rules.is_decision_compliant(s))
        .cloned()
        .collect();
    if let Some(n) = a.sample {
        if n < instances.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let mut picked = sample(&mut rng, instances.len(), n).into_vec();
            picked.sort_unstable();
            instances = picked.into_iter().map(|i| instances[i].clone()).collect();
        }
    }
    let mut config = Mc3gConfig::new(sur.classes.clone());
    config.source = source(&a.search);
    let norms = norms(&a.search);
    let modes = modes(&a.search);
    let name = a.name.clone().unwrap_or_else(|| {
        a.model
            .data
            .file_stem()
            .map_or_else(|| "data".to_string(), |s| s.to_string_lossy().into_owned())
    });
    let spec = BenchmarkSpec {
        dataset_name: &name,
        norms: &norms,
        modes: &modes,
        k: a.search.k,
    };
    let report = with_jobs(a.search.jobs, || {
        benchmark_with_rules(
            &mut model, &data, &instances, &sur.rules, &c, &config, &spec,
        )
    })??;
    create_dir(&a.out)?;
    write_file(&a.out.join("report.json"), &(report.to_json() + "\n"))?;
    let csv = report.to_csv();
    write_file(&a.out.join("report.csv"), &csv)?;
    let _ = out.write_all(csv.as_bytes());
    Ok(())
}

fn validate(a: ValidateArgs, out: &mut dyn Write, err: &mut dyn Write) -> CmdResult {
    let schema = load_schema(&a.schema)?;
    let mut problems = 0;
    let mut report = |path: &Path, r: CmdResult| match r {
        Ok(()) => {
            let _ = writeln!(out, "{}: ok", path.display());
        }
        Err(f) => {
            problems += 1;
            let _ = writeln!(err, "{}", f.message);
        }
    };
    let actionable = schema.features().iter().any(|f| f.actionable);
    report(
        &a.schema,
        if actionable {
            Ok(())
        } else {
            Err(in_file(&a.schema, "no feature is actionable"))
        },
    );
    if let Some(p) = &a.rules {
        report(p, load_rules(p, &schema).map(|_| ()));
    }
    if let Some(p) = &a.causal {
        report(p, load_causal(Some(p), &schema).map(|_| ()));
    }
    if let Some(p) = &a.data {
        report(p, load_data(p, &schema).map(|_| ()));
    }
    if problems > 0 {
        return Err(Failure::config(format!(
            "{problems} file(s) failed validation"
        )));
    }
    Ok(())
}

fn gen(a: GenArgs, out: &mut dyn Write) -> CmdResult {
    let world = match a.world {
        WorldArg::Loan => {
            let data = fixtures::loan_dataset();
            let schema = data.schema().clone();
            let decision = fixtures::loan_rules(&schema);
            let labels = data
                .rows()
                .iter()
                .map(|s| decision.classify(s).to_string())
                .collect();
            synth::World {
                name: "loan".into(),
                causal: fixtures::loan_causal(&schema),
                data: data.with_labels(labels)?,
                decision,
                schema,
            }
        }
        WorldArg::Adult => synth::adult_like(a.seed, a.rows),
        WorldArg::German => synth::german_like(a.seed, a.rows),
        WorldArg::Cars => synth::cars_like(),
        WorldArg::Random => synth::random_world(
            a.seed,
            &WorldParams {
                rows: a.rows,
                ..WorldParams::default()
            },
        ),
    };
    create_dir(&a.out)?;
    write_file(&a.out.join("schema.json"), &(world.schema.to_json() + "\n"))?;
    write_file(
        &a.out.join("rules.txt"),
        &world.decision.to_text(&world.schema),
    )?;
    write_file(
        &a.out.join("causal.json"),
        &(world.causal.to_json(&world.schema) + "\n"),
    )?;
    let mut buf = Vec::new();
    world.data.write_csv(&mut buf)?;
    fs::write(a.out.join("data.csv"), buf).map_err(|e| in_file(&a.out, e))?;
    let _ = writeln!(
        out,
        "wrote {} ({} rows) to {}",
        world.name,
        world.data.len(),
        a.out.display()
    );
    Ok(())
}
