//! Mamdani inference for the battery power share.
//!
//! Three inputs (normalized demand power, battery SOC, supercapacitor SOC)
//! map to `K_bat ∈ [0, 1]` through min conjunction, max aggregation and
//! centroid defuzzification. The rule base is plain text; see
//! `rules/default.rules` for the shipped one and the grammar.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points used for the centroid integral over the output domain.
pub const CENTROID_POINTS: usize = 501;
/// Grid resolution per input for the load-time coverage check.
pub const COVERAGE_GRID: usize = 21;

const DEFAULT_RULES: &str = include_str!("../rules/default.rules");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variable {
    Preq,
    SocBat,
    SocSc,
    Kbat,
}

impl Variable {
    pub const INPUTS: [Variable; 3] = [Variable::Preq, Variable::SocBat, Variable::SocSc];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Preq => "preq",
            Variable::SocBat => "socbat",
            Variable::SocSc => "socsc",
            Variable::Kbat => "kbat",
        }
    }

    pub fn domain(self) -> (f64, f64) {
        match self {
            Variable::Preq => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "preq" => Some(Variable::Preq),
            "socbat" => Some(Variable::SocBat),
            "socsc" => Some(Variable::SocSc),
            "kbat" => Some(Variable::Kbat),
            _ => None,
        }
    }

    fn input_index(self) -> Option<usize> {
        Self::INPUTS.iter().position(|&v| v == self)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Triangular([f64; 3]),
    Trapezoidal([f64; 4]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipFunction {
    pub label: String,
    pub shape: Shape,
}

impl MembershipFunction {
    pub fn new(label: impl Into<String>, shape: Shape) -> Result<Self, String> {
        let points: &[f64] = match &shape {
            Shape::Triangular(p) => p,
            Shape::Trapezoidal(p) => p,
        };
        if points.iter().any(|p| !p.is_finite()) {
            return Err("breakpoints must be finite".into());
        }
        if points.windows(2).any(|w| w[1] < w[0]) {
            return Err(format!("breakpoints {points:?} must be non-decreasing"));
        }
        Ok(Self { label: label.into(), shape })
    }

    fn corners(&self) -> [f64; 4] {
        match self.shape {
            Shape::Triangular([a, b, c]) => [a, b, b, c],
            Shape::Trapezoidal(p) => p,
        }
    }

    /// Degree of membership; coincident breakpoints make vertical shoulders.
    pub fn degree(&self, x: f64) -> f64 {
        let [a, b, c, d] = self.corners();
        if (b..=c).contains(&x) {
            1.0
        } else if x > a && x < b {
            (x - a) / (b - a)
        } else if x > c && x < d {
            (d - x) / (d - c)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    /// Term index per input (`preq`, `socbat`, `socsc`); `None` matches anything.
    pub antecedent: [Option<usize>; 3],
    pub consequent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyRuleBase {
    inputs: [Vec<MembershipFunction>; 3],
    output: Vec<MembershipFunction>,
    rules: Vec<Rule>,
    /// Output term degrees sampled on the centroid grid.
    output_samples: Vec<Vec<f64>>,
}

impl FuzzyRuleBase {
    /// Loads and validates a rule-base file (see `rules/default.rules`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut terms: BTreeMap<Variable, Vec<MembershipFunction>> = BTreeMap::new();
        let mut pending = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: line_no, message };
            let mut words = line.split_whitespace();
            match words.next() {
                Some("mf") => {
                    let fields: Vec<&str> = words.collect();
                    if fields.len() < 3 {
                        return Err(err(format!("incomplete membership function `{line}`")));
                    }
                    let var = Variable::parse(fields[0]).ok_or_else(|| err(format!("unknown variable `{}`", fields[0])))?;
                    let label = fields[1];
                    let nums = fields[3..]
                        .iter()
                        .map(|s| s.parse::<f64>().map_err(|_| err(format!("invalid breakpoint `{s}`"))))
                        .collect::<Result<Vec<_>>>()?;
                    let shape = match (fields[2], nums.as_slice()) {
                        ("tri", &[a, b, c]) => Shape::Triangular([a, b, c]),
                        ("trap", &[a, b, c, d]) => Shape::Trapezoidal([a, b, c, d]),
                        ("tri", _) => return Err(err("`tri` takes 3 breakpoints".into())),
                        ("trap", _) => return Err(err("`trap` takes 4 breakpoints".into())),
                        (other, _) => return Err(err(format!("unknown shape `{other}`"))),
                    };
                    let mf = MembershipFunction::new(label, shape).map_err(err)?;
                    let entry = terms.entry(var).or_default();
                    if entry.iter().any(|m| m.label == label) {
                        return Err(err(format!("duplicate term `{label}` for {var}")));
                    }
                    entry.push(mf);
                }
                Some("if") => pending.push((line_no, line.to_owned())),
                Some(other) => return Err(err(format!("unexpected keyword `{other}`"))),
                None => {}
            }
        }

        let lookup = |var: Variable, label: &str, line: usize| -> Result<usize> {
            terms
                .get(&var)
                .and_then(|t| t.iter().position(|m| m.label == label))
                .ok_or_else(|| Error::Parse { line, message: format!("unknown term `{label}` for {var}") })
        };

        let mut rules = Vec::with_capacity(pending.len());
        for (line, text) in pending {
            let err = |message: String| Error::Parse { line, message };
            let body = text.strip_prefix("if").unwrap_or(&text);
            let (cond, then) = body.split_once(" then ").ok_or_else(|| err("rule is missing `then`".into()))?;
            let mut antecedent = [None; 3];
            for clause in cond.split(" and ") {
                let (var, label) = parse_clause(clause).ok_or_else(|| err(format!("malformed clause `{}`", clause.trim())))?;
                let var = Variable::parse(var).ok_or_else(|| err(format!("unknown variable `{var}`")))?;
                let slot = var.input_index().ok_or_else(|| err(format!("{var} cannot appear in a condition")))?;
                if antecedent[slot].is_some() {
                    return Err(err(format!("{var} appears twice")));
                }
                antecedent[slot] = Some(lookup(var, label, line)?);
            }
            let (var, label) = parse_clause(then).ok_or_else(|| err(format!("malformed consequent `{}`", then.trim())))?;
            if Variable::parse(var) != Some(Variable::Kbat) {
                return Err(err(format!("consequent must be kbat, found `{var}`")));
            }
            let consequent = lookup(Variable::Kbat, label, line)?;
            rules.push(Rule { antecedent, consequent });
        }

        let mut take = |v: Variable| terms.remove(&v).unwrap_or_default();
        let inputs = [take(Variable::Preq), take(Variable::SocBat), take(Variable::SocSc)];
        let output = take(Variable::Kbat);
        Self::new(inputs, output, rules)
    }

    /// Assembles a rule base and runs the coverage checks.
    pub fn new(inputs: [Vec<MembershipFunction>; 3], output: Vec<MembershipFunction>, rules: Vec<Rule>) -> Result<Self> {
        for rule in &rules {
            for (slot, term) in rule.antecedent.iter().enumerate() {
                if let Some(t) = term {
                    if *t >= inputs[slot].len() {
                        return Err(Error::Parse { line: 0, message: format!("rule references missing term {t} of {}", Variable::INPUTS[slot]) });
                    }
                }
            }
            if rule.consequent >= output.len() {
                return Err(Error::Parse { line: 0, message: format!("rule references missing output term {}", rule.consequent) });
            }
        }
        let grid = centroid_grid();
        let output_samples: Vec<Vec<f64>> = output.iter().map(|mf| grid.iter().map(|&y| mf.degree(y)).collect()).collect();
        for (mf, samples) in output.iter().zip(&output_samples) {
            if samples.iter().all(|&d| d == 0.0) {
                return Err(Error::Parse { line: 0, message: format!("output term `{}` has no support on [0, 1]", mf.label) });
            }
        }
        if let Some(&y) = grid.iter().find(|&&y| output.iter().all(|mf| mf.degree(y) == 0.0)) {
            return Err(Error::Parse { line: 0, message: format!("output terms leave kbat={y} uncovered") });
        }

        let rb = Self { inputs, output, rules, output_samples };
        rb.check_coverage()?;
        Ok(rb)
    }

    pub fn default_rules() -> Self {
        Self::parse(DEFAULT_RULES).expect("shipped rule base is valid")
    }

    pub fn default_source() -> &'static str {
        DEFAULT_RULES
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn terms(&self, var: Variable) -> &[MembershipFunction] {
        match var.input_index() {
            Some(i) => &self.inputs[i],
            None => &self.output,
        }
    }

    fn check_coverage(&self) -> Result<()> {
        let axis = |var: Variable| -> Vec<f64> {
            let (lo, hi) = var.domain();
            (0..COVERAGE_GRID).map(|i| lo + (hi - lo) * i as f64 / (COVERAGE_GRID - 1) as f64).collect()
        };
        let [pa, ba, sa] = Variable::INPUTS.map(axis);
        for &p in &pa {
            for &b in &ba {
                for &s in &sa {
                    if self.firing([p, b, s]).iter().all(|&f| f <= 0.0) {
                        return Err(Error::Coverage { preq: p, socbat: b, socsc: s });
                    }
                }
            }
        }
        Ok(())
    }

    fn firing(&self, x: [f64; 3]) -> Vec<f64> {
        self.rules
            .iter()
            .map(|rule| {
                rule.antecedent
                    .iter()
                    .enumerate()
                    .filter_map(|(slot, term)| term.map(|t| self.inputs[slot][t].degree(x[slot])))
                    .fold(1.0, f64::min)
            })
            .collect()
    }

    /// `K_bat` for the given inputs; each is clamped to its domain first.
    pub fn evaluate(&self, p_req_norm: f64, soc_bat: f64, soc_sc: f64) -> f64 {
        let x = [p_req_norm.clamp(-1.0, 1.0), soc_bat.clamp(0.0, 1.0), soc_sc.clamp(0.0, 1.0)];
        let mut strength = vec![0.0f64; self.output.len()];
        for (rule, f) in self.rules.iter().zip(self.firing(x)) {
            strength[rule.consequent] = strength[rule.consequent].max(f);
        }

        let step = 1.0 / (CENTROID_POINTS - 1) as f64;
        let (mut moment, mut area) = (0.0, 0.0);
        for j in 0..CENTROID_POINTS {
            let mu = strength
                .iter()
                .zip(&self.output_samples)
                .map(|(&s, samples)| s.min(samples[j]))
                .fold(0.0, f64::max);
            let w = if j == 0 || j == CENTROID_POINTS - 1 { 0.5 } else { 1.0 };
            let y = j as f64 * step;
            moment += w * y * mu;
            area += w * mu;
        }
        if area > 0.0 {
            (moment / area).clamp(0.0, 1.0)
        } else {
            // nothing fired between coverage grid points: keep the load on the battery
            1.0
        }
    }
}

fn parse_clause(clause: &str) -> Option<(&str, &str)> {
    let (var, label) = clause.trim().split_once('=')?;
    let (var, label) = (var.trim(), label.trim());
    (!var.is_empty() && !label.is_empty() && !label.contains(char::is_whitespace)).then_some((var, label))
}

fn centroid_grid() -> Vec<f64> {
    (0..CENTROID_POINTS).map(|j| j as f64 / (CENTROID_POINTS - 1) as f64).collect()
}

/// Fuzzy controller settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzyConfig {
    /// Demand power that maps to `preq = 1`, W.
    pub p_norm: f64,
    /// Rule-base file; the shipped rule base is used when absent.
    pub rule_file: Option<std::path::PathBuf>,
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        Self { p_norm: 50_000.0, rule_file: None }
    }
}
