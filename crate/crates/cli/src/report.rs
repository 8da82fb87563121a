//! Report rows, CSV output and JSON summaries.
//!
//! Numbers are written in a fixed scientific format and rows keep the order in
//! which experiments produce them, so identical inputs give identical bytes.

use std::io::Write;

use serde::Serialize;
use stoconv_core::estimators::RateFit;
use stoconv_core::McEstimate;

use crate::error::Result;

/// Standard errors added to an estimate before comparing it with a bound.
pub const SE_MULTIPLIER: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported for reference, not audited.
    Info,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Info => "info",
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub quantity: String,
    pub steps: Option<usize>,
    pub modes: Option<usize>,
    pub parameters: String,
    pub empirical: f64,
    pub std_error: f64,
    pub theoretical: Option<f64>,
    pub verdict: Verdict,
}

impl Row {
    pub fn new(experiment: &str, quantity: &str) -> Self {
        Row {
            experiment: experiment.to_string(),
            quantity: quantity.to_string(),
            steps: None,
            modes: None,
            parameters: String::new(),
            empirical: 0.0,
            std_error: 0.0,
            theoretical: None,
            verdict: Verdict::Info,
        }
    }

    pub fn cell(mut self, steps: Option<usize>, modes: Option<usize>) -> Self {
        self.steps = steps;
        self.modes = modes;
        self
    }

    pub fn params(mut self, parameters: &[(&str, f64)]) -> Self {
        self.parameters = format_params(parameters);
        self
    }

    pub fn estimate(mut self, e: &McEstimate) -> Self {
        self.empirical = e.value;
        self.std_error = e.std_error;
        self
    }

    pub fn value(mut self, v: f64) -> Self {
        self.empirical = v;
        self
    }

    /// Informational reference value.
    pub fn reference(mut self, v: f64) -> Self {
        self.theoretical = Some(v);
        self
    }

    /// Audited upper bound: passes when `empirical + 3 std_error <= bound`.
    pub fn bound(mut self, bound: f64) -> Self {
        self.theoretical = Some(bound);
        self.verdict = Verdict::from_bool(
            bound == f64::INFINITY || self.empirical + SE_MULTIPLIER * self.std_error <= bound,
        );
        self
    }

    /// Audited tolerance on a deterministic or already aggregated value.
    pub fn tolerance(mut self, tol: f64) -> Self {
        self.theoretical = Some(tol);
        self.verdict = Verdict::from_bool(self.empirical <= tol);
        self
    }

    pub fn verdict(mut self, v: Verdict) -> Self {
        self.verdict = v;
        self
    }

    /// `theoretical - (empirical + 3 std_error)` on audited rows.
    pub fn margin(&self) -> Option<f64> {
        if self.verdict == Verdict::Info {
            return None;
        }
        self.theoretical
            .map(|t| t - (self.empirical + SE_MULTIPLIER * self.std_error))
    }
}

pub fn format_params(parameters: &[(&str, f64)]) -> String {
    parameters
        .iter()
        .map(|(k, v)| format!("{k}={}", format_num(*v)))
        .collect::<Vec<_>>()
        .join(";")
}

/// Fixed-width scientific notation; `inf`/`-inf`/`nan` spelled out.
pub fn format_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.10e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub name: String,
    pub slope: f64,
    pub slope_std_error: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
    pub reference_slope: Option<f64>,
}

impl FitSummary {
    pub fn new(name: &str, fit: &RateFit, reference_slope: Option<f64>) -> Self {
        FitSummary {
            name: name.to_string(),
            slope: fit.slope,
            slope_std_error: fit.slope_std_error,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            points: fit.points.clone(),
            reference_slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub seed: u64,
    pub replications: usize,
    pub rows: Vec<Row>,
    pub fits: Vec<FitSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary<'a> {
    pub experiment: &'a str,
    pub seed: u64,
    pub replications: usize,
    pub rows: usize,
    pub passed: usize,
    pub failed: usize,
    /// Suprema over time are taken over grid nodes.
    pub time_supremum: &'static str,
    pub failures: Vec<&'a str>,
    pub fits: &'a [FitSummary],
    pub warnings: &'a [String],
}

impl Report {
    pub fn new(experiment: &str, seed: u64, replications: usize) -> Self {
        Report {
            experiment: experiment.to_string(),
            seed,
            replications,
            rows: Vec::new(),
            fits: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn failures(&self) -> impl Iterator<Item = &Row> {
        self.rows.iter().filter(|r| r.verdict == Verdict::Fail)
    }

    pub fn passed(&self) -> bool {
        self.failures().next().is_none()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "experiment",
            "quantity",
            "steps",
            "modes",
            "parameters",
            "empirical",
            "std_error",
            "theoretical",
            "margin",
            "verdict",
        ])?;
        let opt_usize = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_num = |v: Option<f64>| v.map(format_num).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.experiment.clone(),
                r.quantity.clone(),
                opt_usize(r.steps),
                opt_usize(r.modes),
                r.parameters.clone(),
                format_num(r.empirical),
                format_num(r.std_error),
                opt_num(r.theoretical),
                opt_num(r.margin()),
                r.verdict.as_str().to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 output")
    }

    pub fn summary(&self) -> Summary<'_> {
        let passed = self
            .rows
            .iter()
            .filter(|r| r.verdict == Verdict::Pass)
            .count();
        let failures: Vec<&str> = self.failures().map(|r| r.quantity.as_str()).collect();
        Summary {
            experiment: &self.experiment,
            seed: self.seed,
            replications: self.replications,
            rows: self.rows.len(),
            passed,
            failed: failures.len(),
            time_supremum: "grid nodes",
            failures,
            fits: &self.fits,
            warnings: &self.warnings,
        }
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("summary serializes")
    }
}
