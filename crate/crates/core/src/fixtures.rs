//! The loan micro-world: three features, one decision rule, one causal rule.
//!
//! John `(>10000, 40000, 599)` is rejected. Clearing his debt makes a credit
//! score above 599 follow automatically, so the cheapest recourse is
//! `(no_debt, 60000, 620)` with two direct changes.

use crate::causal::CausalRuleSet;
use crate::rules::{parse_rules, DecisionRuleSet};
use crate::schema::{Dataset, Schema, State};

pub const LOAN_SCHEMA_JSON: &str = include_str!("../../../fixtures/loan/schema.json");
pub const LOAN_RULES: &str = include_str!("../../../fixtures/loan/rules.txt");
pub const LOAN_CAUSAL_JSON: &str = include_str!("../../../fixtures/loan/causal.json");
pub const LOAN_DATA_CSV: &str = include_str!("../../../fixtures/loan/data.csv");

pub fn loan_schema() -> Schema {
    Schema::from_json_reader(LOAN_SCHEMA_JSON.as_bytes()).expect("loan schema fixture")
}

pub fn loan_rules(schema: &Schema) -> DecisionRuleSet {
    parse_rules(LOAN_RULES, schema).expect("loan rules fixture")
}

pub fn loan_causal(schema: &Schema) -> CausalRuleSet {
    CausalRuleSet::from_json_reader(LOAN_CAUSAL_JSON.as_bytes(), schema)
        .expect("loan causal fixture")
}

pub fn loan_dataset() -> Dataset {
    Dataset::read_csv(LOAN_DATA_CSV.as_bytes(), loan_schema(), None).expect("loan data fixture")
}

pub fn john(schema: &Schema) -> State {
    schema
        .parse_state(&[">10000", "40000", "599"])
        .expect("john fixture")
}
