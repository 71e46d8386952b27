//! Synthetic worlds: schema, hidden decision rules, declared causal rules and
//! a labeled dataset of causally consistent rows.
//!
//! The named generators mimic the shape of the Adult, German credit and Car
//! evaluation benchmarks. Their causal graphs are illustrative, declared by
//! hand; they are not reproductions of any published rule set.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::causal::{CausalRule, CausalRuleSet};
use crate::rules::{parse_rules, DecisionRule, DecisionRuleSet, Literal, Test};
use crate::schema::{Dataset, Domain, FeatureKind, FeatureSchema, Schema, State, Value};

#[derive(Debug, Clone)]
pub struct World {
    pub name: String,
    pub schema: Schema,
    /// Ground-truth model.
    pub decision: DecisionRuleSet,
    pub causal: CausalRuleSet,
    /// Rows labeled by `decision`.
    pub data: Dataset,
}

impl World {
    pub fn adverse_rows(&self) -> Vec<State> {
        self.data
            .rows()
            .iter()
            .filter(|s| self.decision.is_decision_compliant(s))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct WorldParams {
    pub min_features: usize,
    pub max_features: usize,
    /// Chance that a feature is numeric (integer-valued interval).
    pub numeric_share: f64,
    pub max_levels: u32,
    pub causal_rules: usize,
    pub decision_rules: usize,
    pub rows: usize,
    /// Chance that a feature is non-actionable.
    pub immutable_share: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            min_features: 4,
            max_features: 8,
            numeric_share: 0.3,
            max_levels: 5,
            causal_rules: 3,
            decision_rules: 2,
            rows: 200,
            immutable_share: 0.15,
        }
    }
}

impl WorldParams {
    /// Discrete worlds whose full state space can be enumerated.
    pub fn discrete() -> Self {
        WorldParams {
            min_features: 4,
            max_features: 6,
            numeric_share: 0.0,
            max_levels: 4,
            ..WorldParams::default()
        }
    }
}

fn random_feature(rng: &mut ChaCha8Rng, i: usize, p: &WorldParams) -> FeatureSchema {
    let name = format!("f{i}");
    let mut f = if rng.gen_bool(p.numeric_share) {
        let hi = rng.gen_range(5..=40) as f64;
        FeatureSchema::numeric(&name, 0.0, hi)
    } else {
        let n = rng.gen_range(2..=p.max_levels.max(2));
        let levels: Vec<String> = (0..n).map(|l| format!("v{l}")).collect();
        if rng.gen_bool(0.3) {
            FeatureSchema::categorical(&name, &levels)
        } else {
            FeatureSchema::ordinal(&name, &levels)
        }
    };
    f.weight = [0.5, 1.0, 1.0, 1.5, 2.0][rng.gen_range(0..5)];
    if rng.gen_bool(p.immutable_share) {
        f.actionable = false;
    }
    f
}

/// A literal on feature `i` that is neither always true nor always false.
fn random_literal(rng: &mut ChaCha8Rng, schema: &Schema, i: usize) -> Literal {
    let f = schema.feature(i);
    let test = match (&f.kind, &f.domain) {
        (FeatureKind::Numeric, Domain::Interval { lo, hi }) => {
            let t = Value::num(rng.gen_range((*lo as i64 + 1)..(*hi as i64)) as f64);
            match rng.gen_range(0..4) {
                0 => Test::Le(t),
                1 => Test::Lt(t),
                2 => Test::Gt(t),
                _ => Test::Ge(t),
            }
        }
        (FeatureKind::Ordinal, Domain::Levels(l)) => {
            let n = l.len() as u32;
            match rng.gen_range(0..3) {
                0 => Test::Le(Value::Level(rng.gen_range(0..n - 1))),
                1 => Test::Gt(Value::Level(rng.gen_range(0..n - 1))),
                _ => Test::Eq(Value::Level(rng.gen_range(0..n))),
            }
        }
        (_, Domain::Levels(l)) => {
            let v = Value::Level(rng.gen_range(0..l.len() as u32));
            if rng.gen_bool(0.5) {
                Test::Eq(v)
            } else {
                Test::Neq(v)
            }
        }
        _ => unreachable!("validated schema"),
    };
    Literal::new(schema, &f.name, test).expect("literal built inside the domain")
}

fn distinct_features(rng: &mut ChaCha8Rng, pool: &[usize], n: usize) -> Vec<usize> {
    let mut v = pool.to_vec();
    v.shuffle(rng);
    v.truncate(n);
    v.sort_unstable();
    v
}

/// Random world with a DAG of causal rules whose edges always point from a
/// lower to a higher feature index.
pub fn random_world(seed: u64, p: &WorldParams) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(p.min_features..=p.max_features);
    let schema = Schema::new((0..n).map(|i| random_feature(&mut rng, i, p)).collect())
        .expect("valid schema");

    let mut causal = Vec::new();
    for _ in 0..p.causal_rules {
        let to = rng.gen_range(1..n);
        let upstream: Vec<usize> = (0..to).collect();
        let k = rng.gen_range(1..=2.min(upstream.len()));
        let ante = distinct_features(&mut rng, &upstream, k)
            .into_iter()
            .map(|i| random_literal(&mut rng, &schema, i))
            .collect();
        let cons = random_literal(&mut rng, &schema, to);
        causal.push(CausalRule::new(ante, cons).expect("consequent is downstream"));
    }
    let causal = CausalRuleSet::new(&schema, causal).expect("edges point forward");

    let all: Vec<usize> = (0..n).collect();
    let mut rules = Vec::new();
    for r in 0..p.decision_rules {
        let k = rng.gen_range(1..=3.min(n));
        let body = distinct_features(&mut rng, &all, k)
            .into_iter()
            .map(|i| random_literal(&mut rng, &schema, i))
            .collect();
        let mut rule = DecisionRule::new("bad", body);
        if r == 0 && rng.gen_bool(0.5) {
            let i = *all.choose(&mut rng).expect("nonempty");
            rule = rule.with_exception(DecisionRule::new(
                "bad",
                vec![random_literal(&mut rng, &schema, i)],
            ));
        }
        rules.push(rule);
    }
    let decision = DecisionRuleSet::new("bad", "good", rules).expect("uniform heads");
    let rows = sample_consistent(&mut rng, &schema, &causal, p.rows);
    build_world(format!("random-{seed}"), schema, decision, causal, rows)
}

fn build_world(
    name: String,
    schema: Schema,
    decision: DecisionRuleSet,
    causal: CausalRuleSet,
    rows: Vec<State>,
) -> World {
    let labels = rows
        .iter()
        .map(|s| decision.classify(s).to_string())
        .collect();
    let data = Dataset::new(schema.clone(), rows, Some(labels)).expect("rows sampled from domain");
    World {
        name,
        schema,
        decision,
        causal,
        data,
    }
}

/// Draws a value for feature `i` uniformly (integers for numeric domains).
fn draw(rng: &mut ChaCha8Rng, f: &FeatureSchema) -> Value {
    match &f.domain {
        Domain::Interval { lo, hi } => {
            Value::num(rng.gen_range(lo.ceil() as i64..=hi.floor() as i64) as f64)
        }
        Domain::Levels(l) => Value::Level(rng.gen_range(0..l.len() as u32)),
    }
}

/// Samples causally consistent states feature by feature in topological
/// order, redrawing a feature while a triggered consequent rejects it.
pub fn sample_consistent(
    rng: &mut ChaCha8Rng,
    schema: &Schema,
    c: &CausalRuleSet,
    n: usize,
) -> Vec<State> {
    let order = c.topological_order().to_vec();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        assert!(
            attempts < 100 * n + 1000,
            "causal rules are too restrictive to sample"
        );
        let mut s =
            State::from_values_unchecked(schema.features().iter().map(|f| draw(rng, f)).collect());
        for &i in &order {
            let f = schema.feature(i);
            for _ in 0..64 {
                let ok = c
                    .rules()
                    .iter()
                    .filter(|r| r.consequent.index() == i && r.antecedent_holds(&s))
                    .all(|r| r.consequent.holds(&s));
                if ok {
                    break;
                }
                s = s.with(i, draw(rng, f));
            }
        }
        if c.is_causally_consistent(&s) {
            out.push(s);
        }
    }
    out
}

fn literal(schema: &Schema, f: &str, t: Test) -> Literal {
    Literal::new(schema, f, t).expect("hand-written literal")
}

fn level(schema: &Schema, f: &str, name: &str) -> Value {
    schema
        .feature(schema.index_of(f).expect("known feature"))
        .parse_value(name)
        .expect("known level")
}

/// Adult-census-shaped world: income is low (`<=50K`) under the hidden rules.
pub fn adult_like(seed: u64, rows: usize) -> World {
    let schema = Schema::new(vec![
        FeatureSchema::numeric("age", 17.0, 90.0).immutable(),
        FeatureSchema::ordinal(
            "education",
            &["hs", "some_college", "bachelors", "masters", "doctorate"],
        ),
        FeatureSchema::categorical("marital_status", &["never_married", "married", "divorced"]),
        FeatureSchema::categorical(
            "relationship",
            &["unmarried", "husband", "wife", "own_child"],
        ),
        FeatureSchema::categorical(
            "occupation",
            &["service", "craft", "professional", "managerial"],
        ),
        FeatureSchema::numeric("hours_per_week", 1.0, 99.0),
        FeatureSchema::numeric("capital_gain", 0.0, 20000.0),
    ])
    .expect("adult schema");
    let lv = |f: &str, l: &str| level(&schema, f, l);
    let causal = CausalRuleSet::new(
        &schema,
        vec![
            CausalRule::new(
                vec![literal(
                    &schema,
                    "marital_status",
                    Test::Eq(lv("marital_status", "married")),
                )],
                literal(
                    &schema,
                    "relationship",
                    Test::Neq(lv("relationship", "unmarried")),
                ),
            ),
            CausalRule::new(
                vec![literal(
                    &schema,
                    "marital_status",
                    Test::Eq(lv("marital_status", "never_married")),
                )],
                literal(
                    &schema,
                    "relationship",
                    Test::Neq(lv("relationship", "husband")),
                ),
            ),
            CausalRule::new(
                vec![literal(
                    &schema,
                    "marital_status",
                    Test::Eq(lv("marital_status", "never_married")),
                )],
                literal(
                    &schema,
                    "relationship",
                    Test::Neq(lv("relationship", "wife")),
                ),
            ),
            CausalRule::new(
                vec![literal(
                    &schema,
                    "education",
                    Test::Gt(lv("education", "bachelors")),
                )],
                literal(
                    &schema,
                    "occupation",
                    Test::Neq(lv("occupation", "service")),
                ),
            ),
            CausalRule::new(
                vec![literal(&schema, "age", Test::Lt(Value::num(22.0)))],
                literal(
                    &schema,
                    "education",
                    Test::Le(lv("education", "some_college")),
                ),
            ),
        ]
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .expect("adult causal rules"),
    )
    .expect("adult causal graph");
    let decision = parse_rules(
        "@undesired low\n@default high\n\
         low :- education <= some_college, hours_per_week <= 40.\n\
         low :- relationship = unmarried, capital_gain <= 5000 except (occupation = managerial).\n\
         low :- occupation = service, hours_per_week <= 50.\n",
        &schema,
    )
    .expect("adult rules");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = sample_consistent(&mut rng, &schema, &causal, rows);
    build_world("adult".into(), schema, decision, causal, rows)
}

/// German-credit-shaped world: credit risk is `bad` under the hidden rules.
pub fn german_like(seed: u64, rows: usize) -> World {
    let schema = Schema::new(vec![
        FeatureSchema::numeric("age", 19.0, 75.0).immutable(),
        FeatureSchema::ordinal("savings", &["<100", "100-500", "500-1000", ">=1000"]),
        FeatureSchema::ordinal("employment", &["unemployed", "<1", "1-4", "4-7", ">=7"]),
        FeatureSchema::ordinal("checking", &["negative", "none", "low", "high"]),
        FeatureSchema::ordinal(
            "credit_history",
            &["critical", "delayed", "paid", "all_paid"],
        ),
        FeatureSchema::numeric("amount", 250.0, 18500.0),
        FeatureSchema::numeric("duration", 4.0, 72.0),
        FeatureSchema::categorical("housing", &["rent", "own", "free"]),
    ])
    .expect("german schema");
    let lv = |f: &str, l: &str| level(&schema, f, l);
    let causal = CausalRuleSet::new(
        &schema,
        vec![
            CausalRule::new(
                vec![literal(
                    &schema,
                    "savings",
                    Test::Gt(lv("savings", "100-500")),
                )],
                literal(&schema, "checking", Test::Neq(lv("checking", "negative"))),
            ),
            CausalRule::new(
                vec![literal(
                    &schema,
                    "employment",
                    Test::Gt(lv("employment", "1-4")),
                )],
                literal(
                    &schema,
                    "credit_history",
                    Test::Gt(lv("credit_history", "critical")),
                ),
            ),
            CausalRule::new(
                vec![literal(&schema, "amount", Test::Gt(Value::num(10000.0)))],
                literal(&schema, "duration", Test::Gt(Value::num(12.0))),
            ),
        ]
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .expect("german causal rules"),
    )
    .expect("german causal graph");
    let decision = parse_rules(
        "@undesired bad\n@default good\n\
         bad :- checking = negative, savings <= \"100-500\".\n\
         bad :- credit_history = critical, duration > 24.\n\
         bad :- employment <= \"<1\", amount > 5000 except (housing = own).\n",
        &schema,
    )
    .expect("german rules");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = sample_consistent(&mut rng, &schema, &causal, rows);
    build_world("german".into(), schema, decision, causal, rows)
}

/// Car-evaluation-shaped world without causal rules. The dataset is the full
/// 1,728-state grid, like the original benchmark.
pub fn cars_like() -> World {
    let schema = Schema::new(vec![
        FeatureSchema::ordinal("buying", &["vhigh", "high", "med", "low"]),
        FeatureSchema::ordinal("maint", &["vhigh", "high", "med", "low"]),
        FeatureSchema::ordinal("doors", &["2", "3", "4", "5more"]),
        FeatureSchema::ordinal("persons", &["2", "4", "more"]),
        FeatureSchema::ordinal("lug_boot", &["small", "med", "big"]),
        FeatureSchema::ordinal("safety", &["low", "med", "high"]),
    ])
    .expect("cars schema");
    let decision = parse_rules(
        "@undesired unacc\n@default acc\n\
         unacc :- persons = 2.\n\
         unacc :- safety = low.\n\
         unacc :- buying = vhigh, maint <= high.\n\
         unacc :- lug_boot = small, safety <= med except (buying >= med).\n",
        &schema,
    )
    .expect("cars rules");
    let causal = CausalRuleSet::empty(&schema);
    let rows = enumerate_states(&schema).expect("finite domains");
    build_world("cars".into(), schema, decision, causal, rows)
}

/// Every state of a schema with only categorical/ordinal features.
pub fn enumerate_states(schema: &Schema) -> Option<Vec<State>> {
    let sizes: Vec<u32> = schema
        .features()
        .iter()
        .map(|f| f.levels().map(|l| l.len() as u32))
        .collect::<Option<_>>()?;
    let mut out = Vec::new();
    let mut cur = vec![0u32; sizes.len()];
    loop {
        out.push(State::from_values_unchecked(
            cur.iter().map(|&l| Value::Level(l)).collect(),
        ));
        let mut i = sizes.len();
        loop {
            if i == 0 {
                return Some(out);
            }
            i -= 1;
            cur[i] += 1;
            if cur[i] < sizes[i] {
                break;
            }
            cur[i] = 0;
        }
    }
}

/// Ground truth for surrogate-fidelity checks: two rules of at most three
/// literals, one carrying an exception, over a grid of 50,904 integer states.
pub fn surrogate_truth_schema() -> (Schema, DecisionRuleSet) {
    let schema = Schema::new(vec![
        FeatureSchema::numeric("x", 0.0, 100.0),
        FeatureSchema::ordinal("y", &["y0", "y1", "y2", "y3", "y4", "y5"]),
        FeatureSchema::categorical("z", &["c0", "c1", "c2", "c3"]),
        FeatureSchema::numeric("w", 0.0, 20.0),
    ])
    .expect("truth schema");
    let q = parse_rules(
        "@undesired neg\n@default pos\n\
         neg :- x <= 40, y > y2 except (z = c2).\n\
         neg :- w > 12, z != c0, x > 70.\n",
        &schema,
    )
    .expect("truth rules");
    (schema, q)
}

/// Integer grid over numeric domains crossed with all levels.
pub fn integer_grid(schema: &Schema) -> Vec<State> {
    let axes: Vec<Vec<Value>> = schema
        .features()
        .iter()
        .map(|f| match &f.domain {
            Domain::Interval { lo, hi } => (lo.ceil() as i64..=hi.floor() as i64)
                .map(|x| Value::num(x as f64))
                .collect(),
            Domain::Levels(l) => (0..l.len() as u32).map(Value::Level).collect(),
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|p: Vec<Value>| {
                axis.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(State::from_values_unchecked).collect()
}

/// Uniform rows from the integer grid of `schema`.
pub fn uniform_rows(seed: u64, schema: &Schema, n: usize) -> Vec<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            State::from_values_unchecked(
                schema
                    .features()
                    .iter()
                    .map(|f| draw(&mut rng, f))
                    .collect(),
            )
        })
        .collect()
}
