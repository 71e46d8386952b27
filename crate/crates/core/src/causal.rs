//! Causal rules, causal consistency and direct/induced change labeling.
//!
//! A causal rule `antecedent => consequent` constrains a state: whenever the
//! antecedent holds, the consequent must hold too. Rules form a directed
//! graph from antecedent features to the consequent feature, which must be
//! acyclic.
//!
//! A changed feature is *induced* when some rule with its consequent on that
//! feature has an antecedent that holds on the new state, at least one
//! changed antecedent feature, and a consequent that holds on the new state
//! but not on the original one. Every other changed feature is *direct*.
//! Induced changes carry zero weight in the refined cost.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{DecisionRuleSet, Literal, Test};
use crate::schema::{changed_indices, FeatureSchema, Schema, State, Value, Weights};

#[derive(Debug, Clone, PartialEq)]
pub struct CausalRule {
    pub antecedent: Vec<Literal>,
    pub consequent: Literal,
}

impl CausalRule {
    pub fn new(antecedent: Vec<Literal>, consequent: Literal) -> Result<Self> {
        if antecedent.iter().any(|l| l.index() == consequent.index()) {
            return Err(Error::InvalidConfig(format!(
                "causal rule on `{}` mentions its consequent feature in the antecedent",
                consequent.feature()
            )));
        }
        Ok(CausalRule {
            antecedent,
            consequent,
        })
    }

    pub fn antecedent_holds(&self, s: &State) -> bool {
        self.antecedent.iter().all(|l| l.holds(s))
    }

    pub fn is_satisfied(&self, s: &State) -> bool {
        !self.antecedent_holds(s) || self.consequent.holds(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalRuleSet {
    rules: Vec<CausalRule>,
    /// Features in topological order of the causal graph.
    order: Vec<usize>,
}

impl CausalRuleSet {
    pub fn new(schema: &Schema, rules: Vec<CausalRule>) -> Result<Self> {
        let order = topological_order(schema, &rules)?;
        Ok(CausalRuleSet { rules, order })
    }

    pub fn empty(schema: &Schema) -> Self {
        CausalRuleSet {
            rules: Vec::new(),
            order: (0..schema.len()).collect(),
        }
    }

    pub fn rules(&self) -> &[CausalRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.order
    }

    /// Appends a rule, re-validating acyclicity.
    pub fn push(&mut self, schema: &Schema, rule: CausalRule) -> Result<()> {
        let mut rules = self.rules.clone();
        rules.push(rule);
        *self = CausalRuleSet::new(schema, rules)?;
        Ok(())
    }

    pub fn is_causally_consistent(&self, s: &State) -> bool {
        self.rules.iter().all(|r| r.is_satisfied(s))
    }

    pub fn literals(&self) -> impl Iterator<Item = &Literal> {
        self.rules
            .iter()
            .flat_map(|r| r.antecedent.iter().chain(std::iter::once(&r.consequent)))
    }

    /// Labels every changed feature between `s0` and `s` as direct or
    /// induced. No consistency precondition; see [`classify_changes`].
    pub fn label_changes(&self, s0: &State, s: &State, weights: &Weights) -> ChangeLedger {
        let changed = changed_indices(s0, s);
        let is_changed = |i: usize| changed.binary_search(&i).is_ok();
        let mut induced = BTreeSet::new();
        for &f in &self.order {
            if !is_changed(f) {
                continue;
            }
            let triggered = self.rules.iter().any(|r| {
                r.consequent.index() == f
                    && r.antecedent_holds(s)
                    && r.antecedent.iter().any(|l| is_changed(l.index()))
                    && r.consequent.holds(s)
                    && !r.consequent.holds(s0)
            });
            if triggered {
                induced.insert(f);
            }
        }
        let direct: Vec<usize> = changed
            .iter()
            .copied()
            .filter(|i| !induced.contains(i))
            .collect();
        let mut adjusted = weights.clone();
        for &i in &induced {
            adjusted.0[i] = 0.0;
        }
        ChangeLedger {
            direct,
            induced: induced.into_iter().collect(),
            adjusted_weights: adjusted,
        }
    }

    pub fn to_json(&self, schema: &Schema) -> String {
        let raw: Vec<RawCausalRule> = self
            .rules
            .iter()
            .map(|r| RawCausalRule {
                antecedent: r
                    .antecedent
                    .iter()
                    .map(|l| raw_literal(schema, l))
                    .collect(),
                consequent: raw_literal(schema, &r.consequent),
            })
            .collect();
        serde_json::to_string_pretty(&raw).expect("causal rules serialize")
    }

    pub fn from_json_reader<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Self> {
        let raw: Vec<RawCausalRule> = serde_json::from_reader(reader)?;
        let rules = raw
            .iter()
            .map(|r| {
                let ante = r
                    .antecedent
                    .iter()
                    .map(|l| parse_raw_literal(schema, l))
                    .collect::<Result<Vec<_>>>()?;
                CausalRule::new(ante, parse_raw_literal(schema, &r.consequent)?)
            })
            .collect::<Result<Vec<_>>>()?;
        CausalRuleSet::new(schema, rules)
    }
}

/// Direct and induced changes between two states, with weights adjusted so
/// that induced features cost nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct ChangeLedger {
    pub direct: Vec<usize>,
    pub induced: Vec<usize>,
    pub adjusted_weights: Weights,
}

impl ChangeLedger {
    pub fn direct_names(&self, schema: &Schema) -> BTreeSet<String> {
        names(schema, &self.direct)
    }

    pub fn induced_names(&self, schema: &Schema) -> BTreeSet<String> {
        names(schema, &self.induced)
    }
}

fn names(schema: &Schema, idx: &[usize]) -> BTreeSet<String> {
    idx.iter()
        .map(|&i| schema.feature(i).name.clone())
        .collect()
}

pub fn is_causally_consistent(schema: &Schema, s: &State, c: &CausalRuleSet) -> Result<bool> {
    schema.check(s)?;
    Ok(c.is_causally_consistent(s))
}

/// Labels the changes from `s0` to a causally consistent `s`.
pub fn classify_changes(
    schema: &Schema,
    s0: &State,
    s: &State,
    c: &CausalRuleSet,
    weights: &Weights,
) -> Result<ChangeLedger> {
    schema.check(s0)?;
    schema.check(s)?;
    weights.validate(schema)?;
    if !c.is_causally_consistent(s) {
        return Err(Error::CausallyInconsistentInput);
    }
    Ok(c.label_changes(s0, s, weights))
}

/// Outcome of checking one candidate state.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub valid: bool,
    pub ledger: ChangeLedger,
}

/// Weights are adjusted first, then `s` is accepted iff it is causally
/// consistent, escapes every decision rule, and needs no direct change to a
/// non-actionable feature.
pub fn is_counterfactual(
    schema: &Schema,
    s0: &State,
    s: &State,
    c: &CausalRuleSet,
    q: &DecisionRuleSet,
    weights: &Weights,
) -> Result<Verdict> {
    schema.check(s0)?;
    schema.check(s)?;
    weights.validate(schema)?;
    Ok(check_candidate(schema, s0, s, c, q, weights))
}

pub(crate) fn check_candidate(
    schema: &Schema,
    s0: &State,
    s: &State,
    c: &CausalRuleSet,
    q: &DecisionRuleSet,
    weights: &Weights,
) -> Verdict {
    let ledger = c.label_changes(s0, s, weights);
    let feasible = ledger.direct.iter().all(|&i| schema.feature(i).actionable);
    let valid = feasible && c.is_causally_consistent(s) && !q.is_decision_compliant(s);
    Verdict { valid, ledger }
}

#[derive(Serialize, Deserialize)]
struct RawLiteral {
    feature: String,
    op: String,
    value: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct RawCausalRule {
    #[serde(rename = "if")]
    antecedent: Vec<RawLiteral>,
    #[serde(rename = "then")]
    consequent: RawLiteral,
}

fn raw_literal(schema: &Schema, l: &Literal) -> RawLiteral {
    let f = schema.feature(l.index());
    let (op, value) = match l.test() {
        Test::Eq(v) => ("=", f.value_to_json(v)),
        Test::Neq(v) => ("!=", f.value_to_json(v)),
        Test::Le(v) => ("<=", f.value_to_json(v)),
        Test::Lt(v) => ("<", f.value_to_json(v)),
        Test::Gt(v) => (">", f.value_to_json(v)),
        Test::Ge(v) => (">=", f.value_to_json(v)),
        Test::Within(a, b) => (
            "in",
            serde_json::json!([f.value_to_json(a), f.value_to_json(b)]),
        ),
    };
    RawLiteral {
        feature: l.feature().to_string(),
        op: op.to_string(),
        value,
    }
}

fn parse_raw_literal(schema: &Schema, raw: &RawLiteral) -> Result<Literal> {
    let f: &FeatureSchema = schema.feature(schema.index_of(&raw.feature)?);
    let value = |j: &serde_json::Value| -> Result<Value> {
        f.value_from_json(j).ok_or_else(|| Error::InvalidLiteral {
            feature: raw.feature.clone(),
            message: format!("value {j} is not in the domain"),
        })
    };
    let test = match raw.op.as_str() {
        "=" => Test::Eq(value(&raw.value)?),
        "!=" => Test::Neq(value(&raw.value)?),
        "<=" => Test::Le(value(&raw.value)?),
        "<" => Test::Lt(value(&raw.value)?),
        ">" => Test::Gt(value(&raw.value)?),
        ">=" => Test::Ge(value(&raw.value)?),
        "in" => match raw.value.as_array().map(Vec::as_slice) {
            Some([a, b]) => Test::Within(value(a)?, value(b)?),
            _ => {
                return Err(Error::InvalidLiteral {
                    feature: raw.feature.clone(),
                    message: "`in` needs a [lo, hi] pair".into(),
                })
            }
        },
        other => {
            return Err(Error::InvalidLiteral {
                feature: raw.feature.clone(),
                message: format!("unknown operator `{other}`"),
            })
        }
    };
    Literal::new(schema, &raw.feature, test)
}

/// Kahn's algorithm, lowest feature index first. On failure, reports one
/// cycle found by walking the remaining subgraph.
fn topological_order(schema: &Schema, rules: &[CausalRule]) -> Result<Vec<usize>> {
    let n = schema.len();
    let mut edges: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for r in rules {
        let to = r.consequent.index();
        for l in &r.antecedent {
            if l.index() == to {
                return Err(Error::CyclicCausalGraph {
                    cycle: vec![l.feature().to_string(), l.feature().to_string()],
                });
            }
            edges[l.index()].insert(to);
        }
    }
    let mut indegree = vec![0usize; n];
    for out in &edges {
        for &t in out {
            indegree[t] += 1;
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &t in &edges[i] {
            indegree[t] -= 1;
            if indegree[t] == 0 {
                ready.insert(t);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Every remaining node has a remaining predecessor; walk backwards until
    // a node repeats.
    let remaining: Vec<bool> = (0..n).map(|i| indegree[i] > 0).collect();
    let start = (0..n).find(|&i| remaining[i]).expect("cycle exists");
    let pred = |v: usize| {
        (0..n)
            .find(|&u| remaining[u] && edges[u].contains(&v))
            .expect("remaining node has a predecessor")
    };
    let mut path = vec![start];
    let mut v = start;
    loop {
        v = pred(v);
        if let Some(pos) = path.iter().position(|&p| p == v) {
            let mut cycle: Vec<usize> = path[pos..].to_vec();
            cycle.reverse();
            cycle.push(cycle[0]);
            return Err(Error::CyclicCausalGraph {
                cycle: cycle
                    .into_iter()
                    .map(|i| schema.feature(i).name.clone())
                    .collect(),
            });
        }
        path.push(v);
    }
}
