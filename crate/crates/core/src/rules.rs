//! Stratified decision rules with exceptions, and their text format.
//!
//! A rule fires on a state when every body literal holds and none of its
//! exceptions fires. A rule set labels a state with the undesired class when
//! any rule fires and with the favorable class otherwise.
//!
//! Text format, one rule per line:
//!
//! ```text
//! % comment
//! @undesired reject
//! @default approve
//! reject :- balance < 60000, credit < 600.
//! reject :- debt = ">10000" except (balance > 500000).
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::schema::{Domain, FeatureKind, FeatureSchema, Schema, State, Value};

pub const DEFAULT_MAX_EXCEPTION_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Test {
    Eq(Value),
    Neq(Value),
    Le(Value),
    Lt(Value),
    Gt(Value),
    Ge(Value),
    /// Closed interval `[lo, hi]`.
    Within(Value, Value),
}

impl Test {
    fn symbol(&self) -> &'static str {
        match self {
            Test::Eq(_) => "=",
            Test::Neq(_) => "!=",
            Test::Le(_) => "<=",
            Test::Lt(_) => "<",
            Test::Gt(_) => ">",
            Test::Ge(_) => ">=",
            Test::Within(..) => "in",
        }
    }

    /// Values the test compares against, used to seed candidate grids.
    pub fn thresholds(&self) -> Vec<Value> {
        match *self {
            Test::Eq(v) | Test::Neq(v) | Test::Le(v) | Test::Lt(v) | Test::Gt(v) | Test::Ge(v) => {
                vec![v]
            }
            Test::Within(a, b) => vec![a, b],
        }
    }

    pub fn accepts(&self, v: Value) -> bool {
        let x = v.as_f64();
        match *self {
            Test::Eq(t) => v == t,
            Test::Neq(t) => v != t,
            Test::Le(t) => x <= t.as_f64(),
            Test::Lt(t) => x < t.as_f64(),
            Test::Gt(t) => x > t.as_f64(),
            Test::Ge(t) => x >= t.as_f64(),
            Test::Within(lo, hi) => x >= lo.as_f64() && x <= hi.as_f64(),
        }
    }
}

/// A single condition `feature OP value` bound to a schema position.
#[derive(Debug, Clone, PartialEq)]
pub struct Literal {
    feature: String,
    index: usize,
    test: Test,
}

impl Literal {
    pub fn new(schema: &Schema, feature: &str, test: Test) -> Result<Self> {
        let index = schema.index_of(feature)?;
        let f = schema.feature(index);
        let invalid = |m: &str| {
            Err(Error::InvalidLiteral {
                feature: feature.to_string(),
                message: m.to_string(),
            })
        };
        let ordered_only = !matches!(test, Test::Eq(_) | Test::Neq(_));
        if ordered_only && f.kind == FeatureKind::Categorical {
            return invalid("ordering comparison on a categorical feature");
        }
        for v in test.thresholds() {
            if !f.contains(v) {
                return invalid(&format!("value {} outside the domain", f.format_value(v)));
            }
        }
        if let Test::Within(lo, hi) = test {
            if lo.as_f64() > hi.as_f64() {
                return invalid("interval lower bound exceeds upper bound");
            }
        }
        Ok(Literal {
            feature: feature.to_string(),
            index,
            test,
        })
    }

    pub fn feature(&self) -> &str {
        &self.feature
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn test(&self) -> Test {
        self.test
    }

    pub fn holds(&self, s: &State) -> bool {
        self.test.accepts(s.get(self.index))
    }

    fn write(&self, schema: &Schema, out: &mut String) {
        let f = schema.feature(self.index);
        match self.test {
            Test::Within(lo, hi) => {
                let _ = write!(
                    out,
                    "{} in [{}, {}]",
                    quote(&self.feature),
                    render_value(f, lo),
                    render_value(f, hi)
                );
            }
            t => {
                let v = t.thresholds()[0];
                let _ = write!(
                    out,
                    "{} {} {}",
                    quote(&self.feature),
                    t.symbol(),
                    render_value(f, v)
                );
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRule {
    pub head: String,
    pub body: Vec<Literal>,
    /// Abnormality rules; the parent is blocked when any of them fires.
    pub exceptions: Vec<DecisionRule>,
}

impl DecisionRule {
    pub fn new(head: &str, body: Vec<Literal>) -> Self {
        DecisionRule {
            head: head.to_string(),
            body,
            exceptions: Vec::new(),
        }
    }

    pub fn with_exception(mut self, exception: DecisionRule) -> Self {
        self.exceptions.push(exception);
        self
    }

    pub fn fires(&self, s: &State) -> bool {
        self.body.iter().all(|l| l.holds(s)) && !self.exceptions.iter().any(|e| e.fires(s))
    }

    /// Nesting depth of exceptions (0 for a plain rule).
    pub fn exception_depth(&self) -> usize {
        self.exceptions
            .iter()
            .map(|e| 1 + e.exception_depth())
            .max()
            .unwrap_or(0)
    }

    pub fn literal_count(&self) -> usize {
        self.body.len()
            + self
                .exceptions
                .iter()
                .map(|e| e.literal_count())
                .sum::<usize>()
    }

    pub fn literals(&self) -> Box<dyn Iterator<Item = &Literal> + '_> {
        Box::new(
            self.body
                .iter()
                .chain(self.exceptions.iter().flat_map(|e| e.literals())),
        )
    }

    fn write_body(&self, schema: &Schema, out: &mut String) {
        if self.body.is_empty() {
            out.push_str("true");
        }
        for (i, l) in self.body.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            l.write(schema, out);
        }
        for e in &self.exceptions {
            out.push_str(" except (");
            e.write_body(schema, out);
            out.push(')');
        }
    }
}

/// Rules for the undesired class; everything else gets the favorable class.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionRuleSet {
    pub undesired: String,
    pub favorable: String,
    pub rules: Vec<DecisionRule>,
}

impl DecisionRuleSet {
    pub fn new(undesired: &str, favorable: &str, rules: Vec<DecisionRule>) -> Result<Self> {
        if undesired == favorable {
            return Err(Error::InvalidConfig(format!(
                "undesired and favorable classes are both `{undesired}`"
            )));
        }
        if let Some(r) = rules.iter().find(|r| r.head != undesired) {
            return Err(Error::InvalidConfig(format!(
                "rule head `{}` differs from undesired class `{undesired}`",
                r.head
            )));
        }
        Ok(DecisionRuleSet {
            undesired: undesired.to_string(),
            favorable: favorable.to_string(),
            rules,
        })
    }

    pub fn empty(undesired: &str, favorable: &str) -> Self {
        DecisionRuleSet {
            undesired: undesired.to_string(),
            favorable: favorable.to_string(),
            rules: Vec::new(),
        }
    }

    /// True iff some rule fires, i.e. `s` gets the undesired outcome.
    pub fn is_decision_compliant(&self, s: &State) -> bool {
        self.rules.iter().any(|r| r.fires(s))
    }

    pub fn classify(&self, s: &State) -> &str {
        if self.is_decision_compliant(s) {
            &self.undesired
        } else {
            &self.favorable
        }
    }

    pub fn literals(&self) -> impl Iterator<Item = &Literal> {
        self.rules.iter().flat_map(|r| r.literals())
    }

    pub fn literal_count(&self) -> usize {
        self.rules.iter().map(|r| r.literal_count()).sum()
    }

    pub fn max_exception_depth(&self) -> usize {
        self.rules
            .iter()
            .map(|r| r.exception_depth())
            .max()
            .unwrap_or(0)
    }

    pub fn to_text(&self, schema: &Schema) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "@undesired {}", quote(&self.undesired));
        let _ = writeln!(out, "@default {}", quote(&self.favorable));
        for r in &self.rules {
            let _ = write!(out, "{} :- ", quote(&r.head));
            r.write_body(schema, &mut out);
            out.push_str(".\n");
        }
        out
    }
}

pub fn rule_fires(schema: &Schema, rule: &DecisionRule, s: &State) -> Result<bool> {
    schema.check(s)?;
    Ok(rule.fires(s))
}

pub fn is_decision_compliant(schema: &Schema, s: &State, q: &DecisionRuleSet) -> Result<bool> {
    schema.check(s)?;
    Ok(q.is_decision_compliant(s))
}

pub fn serialize_rules(q: &DecisionRuleSet, schema: &Schema) -> String {
    q.to_text(schema)
}

pub fn parse_rules(text: &str, schema: &Schema) -> Result<DecisionRuleSet> {
    parse_rules_with_depth(text, schema, DEFAULT_MAX_EXCEPTION_DEPTH)
}

pub fn parse_rules_with_depth(
    text: &str,
    schema: &Schema,
    max_depth: usize,
) -> Result<DecisionRuleSet> {
    let mut undesired: Option<String> = None;
    let mut favorable: Option<String> = None;
    let mut rules = Vec::new();

    for (ln, line) in text.lines().enumerate() {
        let line_no = ln + 1;
        let tokens = lex(line, line_no)?;
        if tokens.is_empty() {
            continue;
        }
        let mut p = Parser {
            tokens,
            pos: 0,
            line: line_no,
            schema,
            max_depth,
        };
        if let Tok::Directive(d) = &p.peek().tok {
            let d = d.clone();
            let col = p.peek().col;
            p.pos += 1;
            let label = p.label()?;
            p.end()?;
            match d.as_str() {
                "undesired" => undesired = Some(label),
                "default" => favorable = Some(label),
                other => return Err(p.error_at(col, format!("unknown directive @{other}"))),
            }
            continue;
        }
        let head_col = p.peek().col;
        let head = p.label()?;
        p.expect(&Tok::Neck, "`:-`")?;
        let mut rule = p.body(&head, 0)?;
        rule.head = head.clone();
        p.end()?;
        match &undesired {
            Some(u) if *u != head => {
                return Err(p.error_at(
                    head_col,
                    format!("rule head `{head}` differs from undesired class `{u}`"),
                ))
            }
            None => undesired = Some(head),
            _ => {}
        }
        rules.push(rule);
    }

    let undesired = undesired.ok_or_else(|| Error::Parse {
        line: 1,
        column: 1,
        message: "no rules and no @undesired directive".into(),
    })?;
    let favorable = favorable.unwrap_or_else(|| format!("not_{undesired}"));
    DecisionRuleSet::new(&undesired, &favorable, rules)
}

fn render_value(f: &FeatureSchema, v: Value) -> String {
    match &f.domain {
        Domain::Levels(_) => quote(&f.format_value(v)),
        Domain::Interval { .. } => format!("{}", v.as_f64()),
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '-' | '+' | '.')
}

const KEYWORDS: [&str; 3] = ["except", "in", "true"];

fn quote(s: &str) -> String {
    let bare =
        !s.is_empty() && s.chars().all(is_word_char) && !s.ends_with('.') && !KEYWORDS.contains(&s);
    if bare {
        s.to_string()
    } else {
        let mut q = String::with_capacity(s.len() + 2);
        q.push('"');
        for c in s.chars() {
            if c == '"' || c == '\\' {
                q.push('\\');
            }
            q.push(c);
        }
        q.push('"');
        q
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Directive(String),
    Neck,
    Op(&'static str),
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Dot,
    End,
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    col: usize,
}

fn lex(line: &str, line_no: usize) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, m: String| Error::Parse {
        line: line_no,
        column: col,
        message: m,
    };
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '%' {
            break;
        }
        let two: String = chars[i..chars.len().min(i + 2)].iter().collect();
        let (tok, width) = match (c, two.as_str()) {
            (_, "=>") | (_, "=<") => return Err(err(col, format!("malformed operator `{two}`"))),
            (_, ":-") => (Tok::Neck, 2),
            (_, "!=") => (Tok::Op("!="), 2),
            (_, "<=") => (Tok::Op("<="), 2),
            (_, ">=") => (Tok::Op(">="), 2),
            ('<', _) => (Tok::Op("<"), 1),
            ('>', _) => (Tok::Op(">"), 1),
            ('=', _) => (Tok::Op("="), 1),
            (',', _) => (Tok::Comma, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('[', _) => (Tok::LBracket, 1),
            (']', _) => (Tok::RBracket, 1),
            ('"', _) => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None => return Err(err(col, "unterminated string".into())),
                        Some('"') => break,
                        Some('\\') => {
                            let n = chars
                                .get(j + 1)
                                .ok_or_else(|| err(j + 1, "dangling escape".into()))?;
                            s.push(*n);
                            j += 2;
                        }
                        Some(ch) => {
                            s.push(*ch);
                            j += 1;
                        }
                    }
                }
                (Tok::Str(s), j + 1 - i)
            }
            ('@', _) => {
                let mut j = i + 1;
                while j < chars.len() && chars[j].is_alphanumeric() {
                    j += 1;
                }
                (Tok::Directive(chars[i + 1..j].iter().collect()), j - i)
            }
            ('.', _) if chars.get(i + 1).is_none_or(|n| !n.is_alphanumeric()) => (Tok::Dot, 1),
            (c, _) if is_word_char(c) => {
                let mut j = i;
                while j < chars.len() && is_word_char(chars[j]) {
                    // A '.' only continues a word when followed by more word text.
                    if chars[j] == '.' && chars.get(j + 1).is_none_or(|n| !n.is_alphanumeric()) {
                        break;
                    }
                    j += 1;
                }
                (Tok::Word(chars[i..j].iter().collect()), j - i)
            }
            (c, _) => return Err(err(col, format!("unexpected character `{c}`"))),
        };
        out.push(Spanned { tok, col });
        i += width;
    }
    if !out.is_empty() {
        out.push(Spanned {
            tok: Tok::End,
            col: chars.len() + 1,
        });
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Spanned>,
    pos: usize,
    line: usize,
    schema: &'a Schema,
    max_depth: usize,
}

impl Parser<'_> {
    fn peek(&self) -> &Spanned {
        &self.tokens[self.pos.min(self.tokens.len() - 1)]
    }

    fn next(&mut self) -> Spanned {
        let t = self.peek().clone();
        if self.pos < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(&self, col: usize, message: String) -> Error {
        Error::Parse {
            line: self.line,
            column: col,
            message,
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> Result<()> {
        let t = self.next();
        if t.tok == *tok {
            Ok(())
        } else {
            Err(self.error_at(t.col, format!("expected {what}, found {:?}", t.tok)))
        }
    }

    fn label(&mut self) -> Result<String> {
        let t = self.next();
        match t.tok {
            Tok::Word(w) | Tok::Str(w) => Ok(w),
            other => Err(self.error_at(t.col, format!("expected a label, found {other:?}"))),
        }
    }

    fn end(&mut self) -> Result<()> {
        if self.peek().tok == Tok::Dot {
            self.pos += 1;
        }
        let t = self.next();
        if t.tok == Tok::End {
            Ok(())
        } else {
            Err(self.error_at(t.col, format!("unexpected trailing {:?}", t.tok)))
        }
    }

    fn body(&mut self, head: &str, depth: usize) -> Result<DecisionRule> {
        let mut rule = DecisionRule::new(head, Vec::new());
        if self.peek().tok == Tok::Word("true".into()) {
            self.pos += 1;
        } else {
            loop {
                rule.body.push(self.literal()?);
                if self.peek().tok == Tok::Comma {
                    self.pos += 1;
                } else {
                    break;
                }
            }
        }
        while self.peek().tok == Tok::Word("except".into()) {
            let col = self.next().col;
            if depth + 1 > self.max_depth {
                return Err(self.error_at(
                    col,
                    format!("exception nesting exceeds the limit of {}", self.max_depth),
                ));
            }
            self.expect(&Tok::LParen, "`(` after except")?;
            rule.exceptions.push(self.body(head, depth + 1)?);
            self.expect(&Tok::RParen, "`)`")?;
        }
        Ok(rule)
    }

    fn literal(&mut self) -> Result<Literal> {
        let ft = self.next();
        let feature = match ft.tok {
            Tok::Word(w) | Tok::Str(w) => w,
            other => {
                return Err(self.error_at(ft.col, format!("expected a feature, found {other:?}")))
            }
        };
        let index = self
            .schema
            .index_of(&feature)
            .map_err(|_| self.error_at(ft.col, format!("unknown feature `{feature}`")))?;
        let f = self.schema.feature(index);
        let ot = self.next();
        let test = match ot.tok {
            Tok::Word(ref w) if w == "in" => {
                self.expect(&Tok::LBracket, "`[`")?;
                let lo = self.value(f)?;
                self.expect(&Tok::Comma, "`,`")?;
                let hi = self.value(f)?;
                self.expect(&Tok::RBracket, "`]`")?;
                Test::Within(lo, hi)
            }
            Tok::Op(op) => {
                let v = self.value(f)?;
                match op {
                    "=" => Test::Eq(v),
                    "!=" => Test::Neq(v),
                    "<=" => Test::Le(v),
                    "<" => Test::Lt(v),
                    ">" => Test::Gt(v),
                    ">=" => Test::Ge(v),
                    _ => unreachable!(),
                }
            }
            other => {
                return Err(self.error_at(ot.col, format!("expected an operator, found {other:?}")))
            }
        };
        Literal::new(self.schema, &feature, test).map_err(|e| self.error_at(ft.col, e.to_string()))
    }

    fn value(&mut self, f: &FeatureSchema) -> Result<Value> {
        let t = self.next();
        let text = match t.tok {
            Tok::Word(w) | Tok::Str(w) => w,
            other => return Err(self.error_at(t.col, format!("expected a value, found {other:?}"))),
        };
        f.parse_value(&text).ok_or_else(|| {
            self.error_at(
                t.col,
                format!("`{text}` is not in the domain of `{}`", f.name),
            )
        })
    }
}
