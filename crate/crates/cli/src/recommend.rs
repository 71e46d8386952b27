use recourse_core::causal::ChangeLedger;
use recourse_core::schema::{Schema, State};

fn direction(schema: &Schema, i: usize, from: &State, to: &State) -> Option<bool> {
    schema
        .feature(i)
        .is_ordered()
        .then(|| to.get(i) > from.get(i))
}

/// Plain-language actions for a counterfactual: one imperative per direct
/// change, then one clause per change that follows from the causal rules.
pub fn recommendation(schema: &Schema, s0: &State, g: &State, ledger: &ChangeLedger) -> String {
    let mut parts = Vec::new();
    for &i in &ledger.direct {
        let f = schema.feature(i);
        let v = f.format_value(g.get(i));
        parts.push(match direction(schema, i, s0, g) {
            Some(true) => format!("increase {} to {v}", f.name),
            Some(false) => format!("decrease {} to {v}", f.name),
            None => format!("set {} to {v}", f.name),
        });
    }
    for &i in &ledger.induced {
        let f = schema.feature(i);
        let v = f.format_value(g.get(i));
        parts.push(match direction(schema, i, s0, g) {
            Some(true) => format!("{} increases to {v} automatically", f.name),
            Some(false) => format!("{} decreases to {v} automatically", f.name),
            None => format!("{} becomes {v} automatically", f.name),
        });
    }
    if parts.is_empty() {
        return "no change needed".to_string();
    }
    parts.join("; ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use recourse_core::fixtures;

    #[test]
    fn john() {
        let schema = fixtures::loan_schema();
        let c = fixtures::loan_causal(&schema);
        let s0 = fixtures::john(&schema);
        let g = schema.parse_state(&["no_debt", "60000", "620"]).unwrap();
        let ledger = c.label_changes(&s0, &g, &schema.weights());
        assert_eq!(
            recommendation(&schema, &s0, &g, &ledger),
            "decrease debt to no_debt; increase balance to 60000; credit increases to 620 automatically"
        );
    }
}
