//! Rule extraction: pass-through for rule-based models, otherwise a
//! sequential-covering learner that mimics the model's labels with a
//! stratified rule set (rules with nested exceptions).
//!
//! Learning proceeds as follows. While undesired-class examples remain
//! uncovered, grow one rule by repeatedly adding the literal with the best
//! Gini impurity reduction on the examples the rule still covers. A rule is
//! closed once its precision reaches `purity_threshold` or no literal helps.
//! False positives of a closed rule become the positive examples of a
//! recursive call that learns its exceptions, up to `max_exception_depth`.
//! At the depth limit rules keep specializing until they are pure.

use serde::Serialize;

use crate::blackbox::BlackBox;
use crate::error::{Error, Result};
use crate::rules::{DecisionRule, DecisionRuleSet, Literal, Test, DEFAULT_MAX_EXCEPTION_DEPTH};
use crate::schema::{Dataset, FeatureKind, Schema, State, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitCandidates {
    /// Every label-boundary midpoint.
    AllMidpoints,
    /// At most `k` boundary midpoints, picked at evenly spaced ranks.
    Quantiles(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Impurity {
    Gini,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub max_exception_depth: usize,
    /// Top-level rules covering less than this fraction of the undesired
    /// examples are dropped.
    pub min_coverage_fraction: f64,
    pub split_candidates: SplitCandidates,
    pub impurity: Impurity,
    /// Precision at which a rule stops specializing and hands its false
    /// positives to exception learning.
    pub purity_threshold: f64,
    /// Recorded for reproducibility; literal ties are broken by feature
    /// index and threshold, so no step currently samples.
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            max_exception_depth: DEFAULT_MAX_EXCEPTION_DEPTH,
            min_coverage_fraction: 0.02,
            split_candidates: SplitCandidates::Quantiles(32),
            impurity: Impurity::Gini,
            purity_threshold: 0.9,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_coverage_fraction > 0.0 && self.min_coverage_fraction < 1.0) {
            return Err(Error::InvalidConfig(
                "min_coverage_fraction must lie in (0, 1)".into(),
            ));
        }
        if !(self.purity_threshold > 0.0 && self.purity_threshold <= 1.0) {
            return Err(Error::InvalidConfig(
                "purity_threshold must lie in (0, 1]".into(),
            ));
        }
        if let SplitCandidates::Quantiles(0) = self.split_candidates {
            return Err(Error::InvalidConfig(
                "quantile count must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Returns the model's rules unchanged when it is rule-based; otherwise
/// labels `data` with the model and learns a surrogate for `undesired`.
pub fn extract_logic(
    model: &mut BlackBox,
    data: &Dataset,
    undesired: &str,
    favorable: &str,
    config: &LearnerConfig,
) -> Result<DecisionRuleSet> {
    if let Some(q) = model.rules() {
        return Ok(q.clone());
    }
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = model.predict(data.schema(), data.rows())?;
    learn_rules(data, &labels, undesired, favorable, config)
}

/// Learns rules whose heads are `undesired`; every other label counts as
/// the favorable class.
pub fn learn_rules(
    data: &Dataset,
    labels: &[String],
    undesired: &str,
    favorable: &str,
    config: &LearnerConfig,
) -> Result<DecisionRuleSet> {
    config.validate()?;
    if labels.len() != data.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} labels for {} rows",
            labels.len(),
            data.len()
        )));
    }
    let positive: Vec<usize> = (0..data.len())
        .filter(|&i| labels[i] == undesired)
        .collect();
    let negative: Vec<usize> = (0..data.len())
        .filter(|&i| labels[i] != undesired)
        .collect();
    let learner = Learner {
        schema: data.schema(),
        rows: data.rows(),
        config,
        head: undesired,
    };
    let mut rules = learner.learn_set(&positive, &negative, 0);
    if !positive.is_empty() {
        let min = config.min_coverage_fraction * positive.len() as f64;
        rules.retain(|r| {
            let covered = positive
                .iter()
                .filter(|&&i| r.fires(&data.rows()[i]))
                .count();
            covered as f64 >= min
        });
    }
    DecisionRuleSet::new(undesired, favorable, rules)
}

struct Learner<'a> {
    schema: &'a Schema,
    rows: &'a [State],
    config: &'a LearnerConfig,
    head: &'a str,
}

/// A candidate literal with the examples it keeps.
struct Split {
    literal: Literal,
    pos: usize,
    neg: usize,
    gain: f64,
}

fn gini(p: usize, n: usize) -> f64 {
    let t = (p + n) as f64;
    if t == 0.0 {
        return 0.0;
    }
    2.0 * (p as f64) * (n as f64) / (t * t)
}

impl Learner<'_> {
    fn learn_set(&self, pos: &[usize], neg: &[usize], depth: usize) -> Vec<DecisionRule> {
        let mut rules = Vec::new();
        let mut remaining = pos.to_vec();
        while !remaining.is_empty() {
            let rule = self.learn_rule(&remaining, neg, depth);
            let before = remaining.len();
            remaining.retain(|&i| !rule.fires(&self.rows[i]));
            if remaining.len() == before {
                break;
            }
            rules.push(rule);
        }
        rules
    }

    fn learn_rule(&self, pos: &[usize], neg: &[usize], depth: usize) -> DecisionRule {
        let at_limit = depth >= self.config.max_exception_depth;
        let threshold = if at_limit {
            1.0
        } else {
            self.config.purity_threshold
        };
        let mut pos = pos.to_vec();
        let mut neg = neg.to_vec();
        let mut body: Vec<Literal> = Vec::new();
        loop {
            let precision = pos.len() as f64 / (pos.len() + neg.len()) as f64;
            if neg.is_empty() || precision >= threshold {
                break;
            }
            let Some(split) = self.best_split(&pos, &neg) else {
                break;
            };
            pos.retain(|&i| split.literal.holds(&self.rows[i]));
            neg.retain(|&i| split.literal.holds(&self.rows[i]));
            body.push(split.literal);
        }
        let mut rule = DecisionRule::new(self.head, body);
        if !neg.is_empty() && !at_limit {
            rule.exceptions = self.learn_set(&neg, &pos, depth + 1);
        }
        rule
    }

    /// Best literal by impurity reduction among those that keep at least one
    /// positive, drop at least one negative and do not lower precision. When
    /// nothing reduces impurity (e.g. XOR), falls back to the literal that
    /// keeps the most positives so the rule can still specialize.
    fn best_split(&self, pos: &[usize], neg: &[usize]) -> Option<Split> {
        let (p_all, n_all) = (pos.len(), neg.len());
        let total = (p_all + n_all) as f64;
        let parent = gini(p_all, n_all);
        let mut best: Option<Split> = None;
        let mut fallback: Option<Split> = None;
        for f in 0..self.schema.len() {
            for (literal, p, n) in self.candidates(f, pos, neg) {
                if p == 0 || n >= n_all {
                    continue;
                }
                // Compare cross-multiplied counts so equal ratios tie exactly.
                if (p * (p_all + n_all)) < (p_all * (p + n)) {
                    continue;
                }
                let kept = (p + n) as f64;
                let children =
                    kept / total * gini(p, n) + (total - kept) / total * gini(p_all - p, n_all - n);
                let gain = parent - children;
                let split = Split {
                    literal,
                    pos: p,
                    neg: n,
                    gain,
                };
                if gain > 1e-12 {
                    if best.as_ref().is_none_or(|b| split.gain > b.gain) {
                        best = Some(split);
                    }
                } else if fallback.as_ref().is_none_or(|b| {
                    (split.pos, std::cmp::Reverse(split.neg)) > (b.pos, std::cmp::Reverse(b.neg))
                }) {
                    fallback = Some(split);
                }
            }
        }
        best.or(fallback)
    }

    /// Candidate literals on feature `f`, in tie-break order, with the
    /// number of positives and negatives each one keeps.
    fn candidates(&self, f: usize, pos: &[usize], neg: &[usize]) -> Vec<(Literal, usize, usize)> {
        let feature = self.schema.feature(f);
        let mut points: Vec<(Value, bool)> = pos
            .iter()
            .map(|&i| (self.rows[i].get(f), true))
            .chain(neg.iter().map(|&i| (self.rows[i].get(f), false)))
            .collect();
        points.sort_by_key(|a| a.0);

        // (value, positives, negatives) per distinct value.
        let mut groups: Vec<(Value, usize, usize)> = Vec::new();
        for (v, is_pos) in points {
            match groups.last_mut() {
                Some(g) if g.0 == v => {
                    if is_pos {
                        g.1 += 1
                    } else {
                        g.2 += 1
                    }
                }
                _ => groups.push((v, usize::from(is_pos), usize::from(!is_pos))),
            }
        }
        let (p_all, n_all) = (pos.len(), neg.len());
        let name = feature.name.as_str();
        let lit = |t: Test| Literal::new(self.schema, name, t).expect("threshold taken from data");

        if feature.kind == FeatureKind::Categorical {
            let mut out = Vec::with_capacity(groups.len() * 2);
            for &(v, p, n) in &groups {
                out.push((lit(Test::Eq(v)), p, n));
                out.push((lit(Test::Neq(v)), p_all - p, n_all - n));
            }
            return out;
        }

        // Boundaries between adjacent distinct values whose labels are not
        // both pure and equal.
        let mut cuts: Vec<(usize, Value)> = Vec::new();
        for k in 0..groups.len().saturating_sub(1) {
            let (a, b) = (groups[k], groups[k + 1]);
            let pure_same = (a.2 == 0 && b.2 == 0) || (a.1 == 0 && b.1 == 0);
            if pure_same {
                continue;
            }
            let t = match feature.kind {
                FeatureKind::Numeric => {
                    let (x, y) = (a.0.as_f64(), b.0.as_f64());
                    Value::num(x + (y - x) / 2.0)
                }
                _ => a.0,
            };
            cuts.push((k, t));
        }
        if let SplitCandidates::Quantiles(q) = self.config.split_candidates {
            if cuts.len() > q {
                let len = cuts.len();
                let picked: Vec<(usize, Value)> = (0..q)
                    .map(|j| {
                        cuts[if q == 1 {
                            len / 2
                        } else {
                            j * (len - 1) / (q - 1)
                        }]
                    })
                    .collect();
                cuts = picked;
                cuts.dedup_by_key(|c| c.0);
            }
        }

        let mut prefix = Vec::with_capacity(groups.len());
        let (mut cp, mut cn) = (0, 0);
        for g in &groups {
            cp += g.1;
            cn += g.2;
            prefix.push((cp, cn));
        }
        let mut out = Vec::with_capacity(cuts.len() * 2);
        for (k, t) in cuts {
            let (lp, ln) = prefix[k];
            out.push((lit(Test::Le(t)), lp, ln));
            out.push((lit(Test::Gt(t)), p_all - lp, n_all - ln));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Confusion {
    /// Both say undesired.
    pub true_positive: usize,
    /// Rules say undesired, model says favorable.
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityReport {
    pub rows: usize,
    pub agreement_rate: f64,
    pub confusion: Confusion,
    pub rule_count: usize,
    pub literal_count: usize,
}

impl FidelityReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Agreement between the model's labels and the rule set's labels on
/// `data`.
pub fn fidelity(
    model: &mut BlackBox,
    rules: &DecisionRuleSet,
    data: &Dataset,
) -> Result<FidelityReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = model.predict(data.schema(), data.rows())?;
    Ok(fidelity_against(&labels, rules, data.rows()))
}

/// Same as [`fidelity`] with the reference labels already computed.
pub fn fidelity_against(
    labels: &[String],
    rules: &DecisionRuleSet,
    states: &[State],
) -> FidelityReport {
    let mut c = Confusion {
        true_positive: 0,
        false_positive: 0,
        true_negative: 0,
        false_negative: 0,
    };
    for (label, s) in labels.iter().zip(states) {
        let model_bad = *label == rules.undesired;
        let rules_bad = rules.is_decision_compliant(s);
        match (model_bad, rules_bad) {
            (true, true) => c.true_positive += 1,
            (false, true) => c.false_positive += 1,
            (false, false) => c.true_negative += 1,
            (true, false) => c.false_negative += 1,
        }
    }
    let agree = c.true_positive + c.true_negative;
    FidelityReport {
        rows: states.len(),
        agreement_rate: if states.is_empty() {
            0.0
        } else {
            agree as f64 / states.len() as f64
        },
        confusion: c,
        rule_count: rules.rules.len(),
        literal_count: rules.literal_count(),
    }
}
