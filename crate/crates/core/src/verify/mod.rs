//! Named verification suites producing machine-readable reports.
//!
//! Each case draws from its own generator seeded by `case_seed(seed, index)`
//! and cases are collected in index order, so a report depends only on the
//! seed and the tolerance scale, never on scheduling.

mod core_suite;
mod examples;
mod flow;
mod flowlines;
mod operators;
mod traces;

use std::time::Instant;

use serde::Serialize;

use crate::error::{QcError, Result};
use crate::par::{self, Execution};
use crate::rng::{self, SplitMix64};

pub const SUITES: [&str; 6] = ["core", "operators", "examples", "flowlines", "traces", "flow"];

/// Where a case's expected value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// A closed-form value or identity stated for a specific example.
    ClosedForm,
    /// Holds by construction (null cases, conformal data, affine data).
    Identity,
    /// Compared against an independent computation (finite differences,
    /// convergence rates, brute force).
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    /// `|measured − expected| ≤ tolerance`.
    Abs,
    /// `|measured − expected| ≤ tolerance · |expected|`.
    Rel,
    /// `measured ≤ expected + tolerance`.
    AtMost,
    /// `measured ≥ expected − tolerance`.
    AtLeast,
}

impl Comparison {
    fn passes(self, m: f64, e: f64, tol: f64) -> bool {
        match self {
            Comparison::Abs => (m - e).abs() <= tol,
            Comparison::Rel => (m - e).abs() <= tol * e.abs(),
            Comparison::AtMost => m <= e + tol,
            Comparison::AtLeast => m >= e - tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub detail: Option<String>,
}

impl Outcome {
    pub fn abs(measured: f64, expected: f64, tolerance: f64) -> Self {
        Outcome { measured, expected, tolerance, comparison: Comparison::Abs, detail: None }
    }

    pub fn rel(measured: f64, expected: f64, tolerance: f64) -> Self {
        Outcome { measured, expected, tolerance, comparison: Comparison::Rel, detail: None }
    }

    /// `measured ≤ bound`.
    pub fn at_most(measured: f64, bound: f64) -> Self {
        Outcome { measured, expected: 0.0, tolerance: bound, comparison: Comparison::AtMost, detail: None }
    }

    /// `measured ≥ bound`.
    pub fn at_least(measured: f64, bound: f64) -> Self {
        Outcome { measured, expected: bound, tolerance: 0.0, comparison: Comparison::AtLeast, detail: None }
    }

    /// A yes/no property, reported as `1` or `0` against `1`.
    pub fn holds(ok: bool) -> Self {
        Outcome::at_least(if ok { 1.0 } else { 0.0 }, 1.0)
    }

    pub fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = Some(d.into());
        self
    }
}

/// Per-case state handed to case functions.
pub struct Ctx {
    pub rng: SplitMix64,
    pub exec: Execution,
}

pub(crate) type CaseFn = fn(&mut Ctx) -> Result<Outcome>;

pub(crate) struct CaseDef {
    pub id: &'static str,
    pub kind: CaseKind,
    pub run: CaseFn,
}

pub(crate) const fn case(id: &'static str, kind: CaseKind, run: CaseFn) -> CaseDef {
    CaseDef { id, kind, run }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRecord {
    pub id: String,
    pub kind: CaseKind,
    pub status: Status,
    pub comparison: Comparison,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub total: usize,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub suite: String,
    pub seed: u64,
    pub tol_scale: f64,
    pub cases: Vec<CaseRecord>,
    pub summary: Summary,
    /// Only filled when timing is requested, so reports stay reproducible.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.summary.failed == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Multiplies every case tolerance.
    pub tol_scale: f64,
    pub exec: Execution,
    pub timing: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { seed: 0, tol_scale: 1.0, exec: Execution::default(), timing: false }
    }
}

fn suite_cases(name: &str) -> Result<Vec<CaseDef>> {
    Ok(match name {
        "core" => core_suite::cases(),
        "operators" => operators::cases(),
        "examples" => examples::cases(),
        "flowlines" => flowlines::cases(),
        "traces" => traces::cases(),
        "flow" => flow::cases(),
        _ => return Err(QcError::UnknownSuite(name.to_string())),
    })
}

/// Case ids of a suite, in report order.
pub fn case_ids(name: &str) -> Result<Vec<&'static str>> {
    Ok(suite_cases(name)?.iter().map(|c| c.id).collect())
}

pub fn run_suite(name: &str, opts: &VerifyOptions) -> Result<VerificationReport> {
    if !(opts.tol_scale > 0.0 && opts.tol_scale.is_finite()) {
        return Err(QcError::InvalidParameter(format!("tolerance scale {} must be positive", opts.tol_scale)));
    }
    let defs = suite_cases(name)?;
    let start = Instant::now();
    let cases = par::map_indexed(opts.exec, defs.len(), |i| {
        let def = &defs[i];
        let mut ctx = Ctx { rng: rng::seeded(rng::case_seed(opts.seed, i as u64)), exec: opts.exec };
        let outcome = (def.run)(&mut ctx);
        record(def, outcome, opts.tol_scale)
    });
    let passed = cases.iter().filter(|c| c.status == Status::Pass).count();
    let summary = Summary { total: cases.len(), passed, failed: cases.len() - passed };
    Ok(VerificationReport {
        suite: name.to_string(),
        seed: opts.seed,
        tol_scale: opts.tol_scale,
        cases,
        summary,
        wall_time_s: opts.timing.then(|| start.elapsed().as_secs_f64()),
    })
}

fn record(def: &CaseDef, outcome: Result<Outcome>, scale: f64) -> CaseRecord {
    match outcome {
        Ok(o) => {
            let tolerance = o.tolerance * scale;
            let pass = o.comparison.passes(o.measured, o.expected, tolerance);
            CaseRecord {
                id: def.id.to_string(),
                kind: def.kind,
                status: if pass { Status::Pass } else { Status::Fail },
                comparison: o.comparison,
                measured: o.measured,
                expected: o.expected,
                tolerance,
                detail: o.detail,
            }
        }
        Err(e) => CaseRecord {
            id: def.id.to_string(),
            kind: def.kind,
            status: Status::Fail,
            comparison: Comparison::Abs,
            measured: f64::NAN,
            expected: f64::NAN,
            tolerance: f64::NAN,
            detail: Some(format!("error: {e}")),
        },
    }
}

/// Largest value of `f` over `count` draws, failing on the first error.
pub(crate) fn max_over(count: usize, mut f: impl FnMut() -> Result<f64>) -> Result<f64> {
    let mut m = 0.0_f64;
    for _ in 0..count {
        let v = f()?;
        if v.is_nan() {
            return Ok(f64::NAN);
        }
        m = m.max(v);
    }
    Ok(m)
}

/// Smallest value of `f` over `count` draws.
pub(crate) fn min_over(count: usize, mut f: impl FnMut() -> Result<f64>) -> Result<f64> {
    let mut m = f64::INFINITY;
    for _ in 0..count {
        let v = f()?;
        if v.is_nan() {
            return Ok(f64::NAN);
        }
        m = m.min(v);
    }
    Ok(m)
}
