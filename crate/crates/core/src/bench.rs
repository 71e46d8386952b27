//! Nearest/furthest counterfactual distances under both cost modes.
//!
//! For every adverse instance, norm and cost mode the top-`k` counterfactuals
//! are computed. Per (mode, norm) the report gives the mean distance of the
//! nearest result (`K=1`), of the `k`-th nearest (`K=k`, or the last one
//! returned when fewer exist) and of all returned results (`Avg`), plus the
//! share of returned states that are causally consistent and escape the
//! decision rules.

use std::io::Write;

use serde::Serialize;

use crate::blackbox::BlackBox;
use crate::causal::CausalRuleSet;
use crate::cost::Norm;
use crate::error::Result;
use crate::learner::extract_logic;
use crate::rules::DecisionRuleSet;
use crate::schema::{Dataset, Schema, State};
use crate::search::{
    generate_candidates, search, CostMode, Mc3gConfig, SearchOutcome, SearchParams,
};

pub const L2_NOTE: &str =
    "L2 is the weighted sum of squared normalized differences; no square root is taken";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceResult {
    pub instance: Vec<String>,
    pub mode: CostMode,
    pub norm: Norm,
    /// Costs of the returned counterfactuals, nearest first.
    pub costs: Vec<f64>,
    pub states: Vec<Vec<String>>,
    pub induced_counts: Vec<usize>,
    /// Standard-mode cost of each returned state.
    pub standard_costs: Vec<f64>,
    /// Whether the black box itself gives each returned state the favorable
    /// label; `None` when the model cannot score it (e.g. replayed
    /// predictions for states outside the dataset).
    pub blackbox_favorable: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub mode: CostMode,
    pub norm: Norm,
    pub instances: usize,
    pub found: usize,
    pub k1: Option<f64>,
    pub kk: Option<f64>,
    pub avg: Option<f64>,
    /// `None` when there are no causal rules to comply with.
    pub causal_compliance_pct: Option<f64>,
    pub blackbox_agreement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub dataset: String,
    pub k: usize,
    pub note: &'static str,
    pub rows: Vec<SummaryRow>,
    pub instances: Vec<InstanceResult>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "N/A".to_string(), |v| format!("{v}"))
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long-format CSV: `dataset,mode,norm,metric,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["dataset", "mode", "norm", "metric", "value"])?;
        let kk = format!("K={}", self.k);
        for r in &self.rows {
            let metrics = [
                ("K=1", fmt_opt(r.k1)),
                (kk.as_str(), fmt_opt(r.kk)),
                ("Avg", fmt_opt(r.avg)),
                ("CausalConsistency%", fmt_opt(r.causal_compliance_pct)),
            ];
            for (m, v) in metrics {
                w.write_record([
                    self.dataset.as_str(),
                    r.mode.label(),
                    &r.norm.to_string(),
                    m,
                    &v,
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn row(&self, mode: CostMode, norm: Norm) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.mode == mode && r.norm == norm)
    }
}

pub struct BenchmarkSpec<'a> {
    pub dataset_name: &'a str,
    pub norms: &'a [Norm],
    pub modes: &'a [CostMode],
    pub k: usize,
}

/// Extracts rules from `model` once, then benchmarks every instance.
/// Instances that are not adverse under the extracted rules are skipped.
pub fn benchmark(
    model: &mut BlackBox,
    data: &Dataset,
    instances: &[State],
    c: &CausalRuleSet,
    config: &Mc3gConfig,
    spec: &BenchmarkSpec<'_>,
) -> Result<BenchmarkReport> {
    let q = extract_logic(
        model,
        data,
        &config.classes.undesired,
        &config.classes.favorable,
        &config.learner,
    )?;
    benchmark_with_rules(model, data, instances, &q, c, config, spec)
}

pub fn benchmark_with_rules(
    model: &mut BlackBox,
    data: &Dataset,
    instances: &[State],
    q: &DecisionRuleSet,
    c: &CausalRuleSet,
    config: &Mc3gConfig,
    spec: &BenchmarkSpec<'_>,
) -> Result<BenchmarkReport> {
    let schema: &Schema = data.schema();
    let weights = config.weights.clone().unwrap_or_else(|| schema.weights());
    let adverse: Vec<&State> = instances
        .iter()
        .filter(|s| q.is_decision_compliant(s))
        .collect();

    // One slot per (mode, norm), filled instance by instance so candidates
    // are generated once per instance.
    let combos: Vec<(CostMode, Norm)> = spec
        .modes
        .iter()
        .flat_map(|&m| spec.norms.iter().map(move |&n| (m, n)))
        .collect();
    let mut per_combo: Vec<Vec<InstanceResult>> =
        vec![Vec::with_capacity(adverse.len()); combos.len()];
    let mut returned: Vec<Vec<State>> = vec![Vec::new(); combos.len()];
    for s0 in &adverse {
        let candidates = generate_candidates(&config.source, data, q, c, Some(s0))?;
        for (slot, &(mode, norm)) in combos.iter().enumerate() {
            let outcome = search(
                schema,
                s0,
                q,
                c,
                &candidates,
                &weights,
                SearchParams::new(norm, spec.k, mode),
            )?;
            let found = match outcome {
                SearchOutcome::Found(r) => r,
                SearchOutcome::NoCounterfactualFound => Vec::new(),
            };
            let states: Vec<State> = found.iter().map(|r| r.state.clone()).collect();
            let blackbox_favorable = if states.is_empty() {
                Some(Vec::new())
            } else {
                model.predict(schema, &states).ok().map(|labels| {
                    labels
                        .iter()
                        .map(|l| *l != config.classes.undesired)
                        .collect()
                })
            };
            per_combo[slot].push(InstanceResult {
                instance: schema.format_state(s0),
                mode,
                norm,
                costs: found.iter().map(|r| r.cost.total).collect(),
                states: states.iter().map(|s| schema.format_state(s)).collect(),
                induced_counts: found.iter().map(|r| r.ledger.induced.len()).collect(),
                standard_costs: found.iter().map(|r| r.standard_cost.total).collect(),
                blackbox_favorable,
            });
            returned[slot].extend(states);
        }
    }
    let rows = combos
        .iter()
        .zip(&per_combo)
        .zip(&returned)
        .map(|((&(mode, norm), inst), ret)| summarize(mode, norm, inst, ret, q, c))
        .collect();
    let results = per_combo.into_iter().flatten().collect();
    Ok(BenchmarkReport {
        dataset: spec.dataset_name.to_string(),
        k: spec.k,
        note: L2_NOTE,
        rows,
        instances: results,
    })
}

fn summarize(
    mode: CostMode,
    norm: Norm,
    per_instance: &[InstanceResult],
    returned: &[State],
    q: &DecisionRuleSet,
    c: &CausalRuleSet,
) -> SummaryRow {
    let found: Vec<&InstanceResult> = per_instance
        .iter()
        .filter(|r| !r.costs.is_empty())
        .collect();
    let k1 = mean(found.iter().map(|r| r.costs[0]));
    let kk = mean(found.iter().map(|r| *r.costs.last().expect("nonempty")));
    let avg = mean(
        found
            .iter()
            .map(|r| r.costs.iter().sum::<f64>() / r.costs.len() as f64),
    );
    let causal_compliance_pct = if c.is_empty() || returned.is_empty() {
        None
    } else {
        let ok = returned
            .iter()
            .filter(|s| c.is_causally_consistent(s) && !q.is_decision_compliant(s))
            .count();
        Some(100.0 * ok as f64 / returned.len() as f64)
    };
    let verdicts: Option<Vec<bool>> = per_instance
        .iter()
        .map(|r| r.blackbox_favorable.clone())
        .collect::<Option<Vec<Vec<bool>>>>()
        .map(|v| v.into_iter().flatten().collect());
    let blackbox_agreement_pct = verdicts
        .filter(|v| !v.is_empty())
        .map(|v| 100.0 * v.iter().filter(|&&b| b).count() as f64 / v.len() as f64);
    SummaryRow {
        mode,
        norm,
        instances: per_instance.len(),
        found: found.len(),
        k1,
        kk,
        avg,
        causal_compliance_pct,
        blackbox_agreement_pct,
    }
}
