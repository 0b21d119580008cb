use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::query::QueryMode;

use super::sweep::Selector;
use super::BenchError;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Rounds to 6 significant digits so reports are byte-stable.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// `count(true) / len`
pub fn success_fraction(outcomes: &[bool]) -> Result<f64, BenchError> {
    if outcomes.is_empty() {
        return Err(BenchError::EmptyOutcomes);
    }
    Ok(outcomes.iter().filter(|&&b| b).count() as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub haystack_size: usize,
    pub subset_fraction: f64,
    pub k: usize,
    pub objective: Selector,
    pub query_mode: QueryMode,
    pub ref_count: usize,
    pub augmented_count: usize,
    /// Completed trials.
    pub trials: usize,
    pub successes: usize,
    /// Trials that failed with an error; not counted in `trials`.
    pub errors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_error: Option<String>,
    /// `successes / trials`, or 0 when no trial completed.
    pub success_fraction: f64,
    pub mean_final_value: f64,
    pub mean_evaluations: f64,
    /// Mean mixture normalization constants over the cell's instances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_mixture_scales: Option<[f64; 3]>,
    /// Wall-clock timing; only present when requested since it breaks
    /// byte-reproducibility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_selection_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub format_version: u32,
    pub master_seed: u64,
    pub cells: Vec<CellReport>,
}

impl BenchReport {
    /// Canonical JSON: sorted keys, 6-significant-digit floats, trailing newline.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut text = serde_json::to_string_pretty(&sort_keys(value)).expect("value serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        serde_json::from_str(text).map_err(|e| BenchError::Config(format!("report: {e}")))
    }

    /// One row per cell, for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "haystack_size,subset_fraction,k,objective,query_mode,ref_count,augmented_count,trials,successes,errors,success_fraction\n",
        );
        for c in &self.cells {
            let mode = match c.query_mode {
                QueryMode::Anchor => "anchor",
                QueryMode::Target => "target",
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                c.haystack_size,
                c.subset_fraction,
                c.k,
                c.objective.label(),
                mode,
                c.ref_count,
                c.augmented_count,
                c.trials,
                c.successes,
                c.errors,
                c.success_fraction
            );
        }
        out
    }

    /// Human-readable table of the same data.
    pub fn summary_table(&self) -> String {
        let mut out = format!(
            "{:>8} {:>8} {:>6} {:<28} {:<6} {:>4} {:>3} {:>7} {:>7} {:>6}\n",
            "n", "fraction", "k", "objective", "mode", "refs", "aug", "trials", "success", "errors"
        );
        for c in &self.cells {
            let mode = match c.query_mode {
                QueryMode::Anchor => "anchor",
                QueryMode::Target => "target",
            };
            let _ = writeln!(
                out,
                "{:>8} {:>8} {:>6} {:<28} {:<6} {:>4} {:>3} {:>7} {:>7.4} {:>6}",
                c.haystack_size,
                c.subset_fraction,
                c.k,
                c.objective.label(),
                mode,
                c.ref_count,
                c.augmented_count,
                c.trials,
                c.success_fraction,
                c.errors
            );
        }
        out
    }
}

fn sort_keys(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().map(|(k, v)| (k, sort_keys(v))).collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sort_keys).collect()),
        Value::Number(n) => match n.as_f64() {
            Some(x) if !(n.is_u64() || n.is_i64()) => serde_json::Number::from_f64(round_sig(x)).map_or(Value::Null, Value::Number),
            _ => Value::Number(n),
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fractions() {
        assert_eq!(success_fraction(&[true, true, false, false]).unwrap(), 0.5);
        assert_eq!(success_fraction(&[true; 7]).unwrap(), 1.0);
        assert!(matches!(success_fraction(&[]), Err(BenchError::EmptyOutcomes)));
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(round_sig(0.123456789), 0.123457);
        assert_eq!(round_sig(123456789.0), 123457000.0);
        assert_eq!(round_sig(0.0), 0.0);
    }
}
