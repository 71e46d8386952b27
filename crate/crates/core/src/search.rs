//! Minimal-cost counterfactual search.
//!
//! Every candidate state is checked for validity (causally consistent,
//! outside every decision rule, no direct change to a non-actionable
//! feature) and scored from the initial state. Valid candidates are ranked by
//! cost, then by number of direct changes, then by state order, so the result
//! does not depend on candidate order or on how evaluation is parallelized.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::blackbox::BlackBox;
use crate::causal::{check_candidate, CausalRuleSet, ChangeLedger};
use crate::cost::{weighted_lp_unchecked, CostBreakdown, Norm};
use crate::error::{Error, Result};
use crate::learner::{extract_logic, LearnerConfig};
use crate::rules::DecisionRuleSet;
use crate::schema::{Dataset, Domain, Schema, State, Value, Weights};

pub const DEFAULT_GRID_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum CostMode {
    /// Induced changes are free.
    #[serde(rename = "MC3G")]
    Refined,
    /// Every changed feature is charged at its schema weight.
    #[serde(rename = "standard")]
    Standard,
}

impl CostMode {
    pub fn label(self) -> &'static str {
        match self {
            CostMode::Refined => "MC3G",
            CostMode::Standard => "standard",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    DatasetRows,
    RuleGrid,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSource {
    pub strategy: Strategy,
    /// Grid step per numeric feature. Features not listed use 1 on integral
    /// domains and a hundredth of the normalization range otherwise.
    pub steps: BTreeMap<String, f64>,
    pub grid_cap: u128,
}

impl CandidateSource {
    pub fn new(strategy: Strategy) -> Self {
        CandidateSource {
            strategy,
            steps: BTreeMap::new(),
            grid_cap: DEFAULT_GRID_CAP,
        }
    }
}

impl Default for CandidateSource {
    fn default() -> Self {
        CandidateSource::new(Strategy::DatasetRows)
    }
}

/// Per-feature values of the rule grid: every level for categorical and
/// ordinal features; for numeric features the domain endpoints, the anchor's
/// value, and each rule threshold together with its neighbours one step away.
pub fn grid_axes(
    schema: &Schema,
    source: &CandidateSource,
    q: &DecisionRuleSet,
    c: &CausalRuleSet,
    anchor: Option<&State>,
) -> Vec<Vec<Value>> {
    let mut axes: Vec<BTreeSet<Value>> = vec![BTreeSet::new(); schema.len()];
    for (i, f) in schema.features().iter().enumerate() {
        match &f.domain {
            Domain::Levels(levels) => {
                axes[i].extend((0..levels.len() as u32).map(Value::Level));
            }
            Domain::Interval { lo, hi } => {
                axes[i].insert(Value::num(*lo));
                axes[i].insert(Value::num(*hi));
                if let Some(a) = anchor {
                    axes[i].insert(a.get(i));
                }
            }
        }
    }
    for lit in q.literals().chain(c.literals()) {
        let i = lit.index();
        let f = schema.feature(i);
        let Domain::Interval { lo, hi } = f.domain else {
            continue;
        };
        let step = source.steps.get(&f.name).copied().unwrap_or_else(|| {
            if lo.fract() == 0.0 && hi.fract() == 0.0 {
                1.0
            } else {
                f.norm_range() / 100.0
            }
        });
        for t in lit.test().thresholds() {
            let t = t.as_f64();
            for x in [t - step, t, t + step] {
                axes[i].insert(Value::num(x.clamp(lo, hi)));
            }
        }
    }
    axes.into_iter().map(|a| a.into_iter().collect()).collect()
}

/// Candidate states for the search. `anchor` is the initial state; it seeds
/// the numeric grid so unchanged values stay reachable.
pub fn generate_candidates(
    source: &CandidateSource,
    data: &Dataset,
    q: &DecisionRuleSet,
    c: &CausalRuleSet,
    anchor: Option<&State>,
) -> Result<Vec<State>> {
    let rows = || data.rows().to_vec();
    let grid = || -> Result<Vec<State>> {
        let axes = grid_axes(data.schema(), source, q, c, anchor);
        let size = axes
            .iter()
            .try_fold(1u128, |acc, a| acc.checked_mul(a.len() as u128))
            .unwrap_or(u128::MAX);
        if size > source.grid_cap {
            return Err(Error::GridTooLarge {
                size,
                cap: source.grid_cap,
            });
        }
        Ok(cross_product(&axes))
    };
    match source.strategy {
        Strategy::DatasetRows => Ok(rows()),
        Strategy::RuleGrid => grid(),
        Strategy::Hybrid => {
            let mut seen = HashSet::new();
            Ok(grid()?
                .into_iter()
                .chain(rows())
                .filter(|s| seen.insert(s.clone()))
                .collect())
        }
    }
}

fn cross_product(axes: &[Vec<Value>]) -> Vec<State> {
    let mut out = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for v in axis {
                let mut p = prefix.clone();
                p.push(*v);
                next.push(p);
            }
        }
        out = next;
    }
    out.into_iter().map(State::from_values_unchecked).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualResult {
    pub rank: usize,
    pub state: State,
    pub ledger: ChangeLedger,
    /// Cost under the mode used for ranking.
    pub cost: CostBreakdown,
    /// Cost charging every changed feature, for comparison.
    pub standard_cost: CostBreakdown,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found(Vec<CounterfactualResult>),
    NoCounterfactualFound,
}

impl SearchOutcome {
    pub fn results(&self) -> &[CounterfactualResult] {
        match self {
            SearchOutcome::Found(r) => r,
            SearchOutcome::NoCounterfactualFound => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub norm: Norm,
    pub k: usize,
    pub mode: CostMode,
}

impl SearchParams {
    pub fn new(norm: Norm, k: usize, mode: CostMode) -> Self {
        SearchParams { norm, k, mode }
    }
}

fn rank_order(a: &CounterfactualResult, b: &CounterfactualResult) -> Ordering {
    a.cost
        .total
        .total_cmp(&b.cost.total)
        .then(a.ledger.direct.len().cmp(&b.ledger.direct.len()))
        .then_with(|| a.state.cmp(&b.state))
}

/// Ranks `candidates` as counterfactuals for `s0` under already-extracted
/// decision rules `q`.
pub fn search(
    schema: &Schema,
    s0: &State,
    q: &DecisionRuleSet,
    c: &CausalRuleSet,
    candidates: &[State],
    weights: &Weights,
    params: SearchParams,
) -> Result<SearchOutcome> {
    if params.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    schema.check(s0)?;
    weights.validate(schema)?;
    if !q.is_decision_compliant(s0) {
        return Err(Error::NotAdverse);
    }
    for s in candidates {
        schema.check(s)?;
    }

    let mut valid: Vec<CounterfactualResult> = candidates
        .par_iter()
        .filter_map(|s| {
            if !c.is_causally_consistent(s) || q.is_decision_compliant(s) {
                return None;
            }
            let verdict = check_candidate(schema, s0, s, c, q, weights);
            if !verdict.valid {
                return None;
            }
            let standard = weighted_lp_unchecked(schema, s0, s, weights, params.norm);
            let cost = match params.mode {
                CostMode::Refined => weighted_lp_unchecked(
                    schema,
                    s0,
                    s,
                    &verdict.ledger.adjusted_weights,
                    params.norm,
                ),
                CostMode::Standard => standard.clone(),
            };
            Some(CounterfactualResult {
                rank: 0,
                state: s.clone(),
                ledger: verdict.ledger,
                cost,
                standard_cost: standard,
            })
        })
        .collect();
    valid.par_sort_unstable_by(rank_order);
    valid.dedup_by(|a, b| a.state == b.state);
    valid.truncate(params.k);
    if valid.is_empty() {
        return Ok(SearchOutcome::NoCounterfactualFound);
    }
    for (r, res) in valid.iter_mut().enumerate() {
        res.rank = r + 1;
    }
    Ok(SearchOutcome::Found(valid))
}

/// Which class labels the surrogate distinguishes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classes {
    pub undesired: String,
    pub favorable: String,
}

impl Classes {
    pub fn new(undesired: &str, favorable: &str) -> Self {
        Classes {
            undesired: undesired.to_string(),
            favorable: favorable.to_string(),
        }
    }
}

/// Everything the end-to-end search needs besides the model and the data.
#[derive(Debug, Clone)]
pub struct Mc3gConfig {
    pub classes: Classes,
    pub learner: LearnerConfig,
    pub source: CandidateSource,
    pub weights: Option<Weights>,
}

impl Mc3gConfig {
    pub fn new(classes: Classes) -> Self {
        Mc3gConfig {
            classes,
            learner: LearnerConfig::default(),
            source: CandidateSource::default(),
            weights: None,
        }
    }
}

/// Extracts decision rules from `model`, then returns the `k` cheapest
/// counterfactuals for `s0` among the configured candidates.
pub fn mc3g(
    model: &mut BlackBox,
    data: &Dataset,
    s0: &State,
    c: &CausalRuleSet,
    config: &Mc3gConfig,
    params: SearchParams,
) -> Result<SearchOutcome> {
    let schema = data.schema();
    let q = extract_logic(
        model,
        data,
        &config.classes.undesired,
        &config.classes.favorable,
        &config.learner,
    )?;
    let weights = config.weights.clone().unwrap_or_else(|| schema.weights());
    if !q.is_decision_compliant(s0) {
        return Err(Error::NotAdverse);
    }
    let candidates = generate_candidates(&config.source, data, &q, c, Some(s0))?;
    search(schema, s0, &q, c, &candidates, &weights, params)
}

/// Runs `f` on a pool of `jobs` threads (0 means the rayon default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rules::parse_rules;

    #[test]
    fn john_hand_grid() {
        let schema = fixtures::loan_schema();
        let q = fixtures::loan_rules(&schema);
        let c = fixtures::loan_causal(&schema);
        let s0 = fixtures::john(&schema);
        let grid: Vec<State> = [
            ["no_debt", "60000", "620"],
            ["<=10000", "60000", "610"],
            ["no_debt", "40000", "590"],
            ["no_debt", "60000", "599"],
            [">10000", "40000", "610"],
        ]
        .iter()
        .map(|r| schema.parse_state(r).unwrap())
        .collect();
        // (>10000, 40000, 610) escapes the rule with one direct change, so
        // drop it to reproduce the narrated recourse.
        let out = search(
            &schema,
            &s0,
            &q,
            &c,
            &grid[..4],
            &schema.weights(),
            SearchParams::new(Norm::L0, 3, CostMode::Refined),
        )
        .unwrap();
        let best = &out.results()[0];
        assert_eq!(best.state, grid[0]);
        assert_eq!(
            best.ledger.direct_names(&schema),
            ["balance", "debt"].map(String::from).into()
        );
        assert_eq!(
            best.ledger.induced_names(&schema),
            ["credit".to_string()].into()
        );
        assert_eq!(best.cost.total, 2.0);
        assert_eq!(best.standard_cost.total, 3.0);
        // Both no_debt rows with credit <= 599 are causally inconsistent.
        assert_eq!(out.results().len(), 2);

        let out = search(
            &schema,
            &s0,
            &q,
            &c,
            &grid,
            &schema.weights(),
            SearchParams::new(Norm::L0, 1, CostMode::Refined),
        )
        .unwrap();
        assert_eq!(out.results()[0].state, grid[4]);
    }

    #[test]
    fn favorable_instance_is_not_adverse() {
        let data = fixtures::loan_dataset();
        let schema = data.schema().clone();
        let c = fixtures::loan_causal(&schema);
        let mut model = BlackBox::Rules(DecisionRuleSet::empty("reject", "approve"));
        let cfg = Mc3gConfig::new(Classes::new("reject", "approve"));
        let err = mc3g(
            &mut model,
            &data,
            &fixtures::john(&schema),
            &c,
            &cfg,
            SearchParams::new(Norm::L0, 1, CostMode::Refined),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotAdverse));
    }

    #[test]
    fn mc3g_on_loan_dataset() {
        let data = fixtures::loan_dataset();
        let schema = data.schema().clone();
        let c = fixtures::loan_causal(&schema);
        let mut model = BlackBox::Rules(fixtures::loan_rules(&schema));
        let cfg = Mc3gConfig::new(Classes::new("reject", "approve"));
        let out = mc3g(
            &mut model,
            &data,
            &fixtures::john(&schema),
            &c,
            &cfg,
            SearchParams::new(Norm::L0, 5, CostMode::Refined),
        )
        .unwrap();
        let best = &out.results()[0];
        assert_eq!(
            schema.format_state(&best.state),
            ["no_debt", "60000", "620"]
        );
        assert_eq!(best.cost.total, 2.0);
        assert!(out
            .results()
            .windows(2)
            .all(|w| w[0].cost.total <= w[1].cost.total));
    }

    #[test]
    fn no_valid_candidate_is_a_status() {
        let data = fixtures::loan_dataset();
        let schema = data.schema().clone();
        let q = parse_rules("reject :- true", &schema).unwrap();
        let c = fixtures::loan_causal(&schema);
        let out = search(
            &schema,
            &fixtures::john(&schema),
            &q,
            &c,
            data.rows(),
            &schema.weights(),
            SearchParams::new(Norm::L1, 2, CostMode::Refined),
        )
        .unwrap();
        assert_eq!(out, SearchOutcome::NoCounterfactualFound);
    }

    #[test]
    fn dataset_rows_are_passed_through() {
        let data = fixtures::loan_dataset();
        let schema = data.schema().clone();
        let q = fixtures::loan_rules(&schema);
        let c = fixtures::loan_causal(&schema);
        let got = generate_candidates(&CandidateSource::default(), &data, &q, &c, None).unwrap();
        assert_eq!(got, data.rows());
    }

    #[test]
    fn grid_contains_rule_boundaries() {
        let data = fixtures::loan_dataset();
        let schema = data.schema().clone();
        let q = fixtures::loan_rules(&schema);
        let c = fixtures::loan_causal(&schema);
        let s0 = fixtures::john(&schema);
        let src = CandidateSource::new(Strategy::RuleGrid);
        let axes = grid_axes(&schema, &src, &q, &c, Some(&s0));
        let balance: Vec<f64> = axes[1].iter().map(|v| v.as_f64()).collect();
        let credit: Vec<f64> = axes[2].iter().map(|v| v.as_f64()).collect();
        assert_eq!(balance, vec![0.0, 40000.0, 59999.0, 60000.0, 60001.0, 1e6]);
        assert_eq!(credit, vec![300.0, 598.0, 599.0, 600.0, 601.0, 850.0]);
        assert_eq!(axes[0].len(), 3);
        let grid = generate_candidates(&src, &data, &q, &c, Some(&s0)).unwrap();
        assert_eq!(grid.len(), 3 * 6 * 6);

        let hybrid = generate_candidates(
            &CandidateSource::new(Strategy::Hybrid),
            &data,
            &q,
            &c,
            Some(&s0),
        )
        .unwrap();
        let unique: HashSet<&State> = hybrid.iter().collect();
        assert_eq!(unique.len(), hybrid.len());
        // John's row is already on the grid; the other five rows are not.
        assert_eq!(hybrid.len(), grid.len() + 5);

        let capped = CandidateSource {
            grid_cap: 10,
            ..src
        };
        assert!(matches!(
            generate_candidates(&capped, &data, &q, &c, Some(&s0)),
            Err(Error::GridTooLarge { size: 108, cap: 10 })
        ));
    }

    #[test]
    fn grid_search_finds_one_step_fix() {
        let data = fixtures::loan_dataset();
        let schema = data.schema().clone();
        let q = fixtures::loan_rules(&schema);
        let c = fixtures::loan_causal(&schema);
        let s0 = fixtures::john(&schema);
        let cands = generate_candidates(
            &CandidateSource::new(Strategy::RuleGrid),
            &data,
            &q,
            &c,
            Some(&s0),
        )
        .unwrap();
        let out = search(
            &schema,
            &s0,
            &q,
            &c,
            &cands,
            &schema.weights(),
            SearchParams::new(Norm::L1, 1, CostMode::Refined),
        )
        .unwrap();
        // Raising credit by one point is the smallest normalized move.
        assert_eq!(
            schema.format_state(&out.results()[0].state),
            [">10000", "40000", "600"]
        );
    }
}
