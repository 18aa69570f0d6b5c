//! Machine-readable run reports: stable JSON schema, atomic file writes.
//!
//! Reports deliberately avoid timestamps, absolute hostnames, and hash-map
//! ordering so that re-running an identical configuration reproduces the
//! bytes exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cmr::EstimatorKind;
use crate::data::{ContainmentReport, OutcomeSpace, OverlapReport};
use crate::error::{Error, Result};
use crate::robust::AmbiguityBoundsReport;

/// JSON Schema (subset) the shipped reports validate against.
pub const REPORT_SCHEMA: &str = include_str!("../../schemas/report.schema.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CmrSummary {
    pub kind: EstimatorKind,
    pub bound: f64,
    pub holdout_mse: Option<f64>,
    pub arm_residual_sd: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaResult {
    pub delta: f64,
    pub policy_file: String,
    pub policy_text: String,
    pub policy_depth: usize,
    /// Empirical worst-case welfare of the learned rule.
    pub robust_welfare: f64,
    /// The plug-in rule's welfare under this delta's scores.
    pub naive_policy_robust_welfare: f64,
    /// Whether the learned rule assigns exactly like the plug-in rule on
    /// the target sample.
    pub same_assignments_as_naive: bool,
    /// Covariate-shift-robust welfare of the learned rule, when `rho` set.
    pub rho_robust_welfare: Option<f64>,
    /// Hurwicz blend of the learned rule, when `hurwicz_alpha` set.
    pub hurwicz_welfare: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub overlap: OverlapReport,
    pub covariate_containment: ContainmentReport,
    pub ambiguity_bounds: Option<AmbiguityBoundsReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub seed: u64,
    /// Canonical echo of the resolved configuration.
    pub config: Value,
    pub outcome_space: OutcomeSpace,
    pub n_source: usize,
    pub n_target: usize,
    pub arms: Vec<String>,
    pub cmr: Option<CmrSummary>,
    pub results: Vec<DeltaResult>,
    pub diagnostics: Option<Diagnostics>,
    /// Free-form extra tables (simulation outputs).
    pub extra: Option<Value>,
}

impl RunReport {
    pub fn to_pretty_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)
            .map_err(|e| Error::Internal(format!("report serialization failed: {e}")))?;
        let schema: Value = serde_json::from_str(REPORT_SCHEMA)
            .map_err(|e| Error::Internal(format!("shipped schema is invalid JSON: {e}")))?;
        validate_schema(&value, &schema, "$")?;
        serde_json::to_string_pretty(&value)
            .map_err(|e| Error::Internal(format!("report rendering failed: {e}")))
    }

    /// Validate against the shipped schema and write atomically.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut body = self.to_pretty_json()?;
        body.push('\n');
        write_atomic(path, body.as_bytes())
    }
}

/// Write via a temp file in the same directory plus rename, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Minimal JSON-Schema-subset validator: `type`, `properties`, `required`,
/// `items`, `enum`, and boolean `additionalProperties`. Enough to pin the
/// report layout without an external validator dependency.
pub fn validate_schema(value: &Value, schema: &Value, path: &str) -> Result<()> {
    let fail = |msg: String| Err(Error::Internal(format!("report schema violation at {path}: {msg}")));

    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return fail(format!("{value} not in enum"));
        }
    }
    if let Some(ty) = schema.get("type") {
        let names: Vec<&str> = match ty {
            Value::String(s) => vec![s.as_str()],
            Value::Array(list) => list.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let matches = names.iter().any(|name| match *name {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "number" => value.is_number(),
            "integer" => value.is_i64() || value.is_u64(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            _ => false,
        });
        if !matches {
            return fail(format!("expected type {names:?}"));
        }
    }
    if let Some(props) = schema.get("properties").and_then(Value::as_object) {
        if let Some(obj) = value.as_object() {
            for (key, sub) in props {
                if let Some(v) = obj.get(key) {
                    validate_schema(v, sub, &format!("{path}.{key}"))?;
                }
            }
            if schema.get("additionalProperties") == Some(&Value::Bool(false)) {
                for key in obj.keys() {
                    if !props.contains_key(key) {
                        return fail(format!("unexpected property {key:?}"));
                    }
                }
            }
        }
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        if let Some(obj) = value.as_object() {
            for key in required.iter().filter_map(Value::as_str) {
                if !obj.contains_key(key) {
                    return fail(format!("missing required property {key:?}"));
                }
            }
        }
    }
    if let Some(items) = schema.get("items") {
        if let Some(list) = value.as_array() {
            for (i, v) in list.iter().enumerate() {
                validate_schema(v, items, &format!("{path}[{i}]"))?;
            }
        }
    }
    Ok(())
}

/// Render a delta-vs-welfare table as CSV (fixed column order) plus a
/// ready-to-run gnuplot script next to it.
pub fn write_sweep_csv(path: &Path, rows: &[DeltaResult]) -> Result<()> {
    let mut out = String::from("delta,robust_welfare_dr,robust_welfare_naive_policy,policy_file\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.delta, r.robust_welfare, r.naive_policy_robust_welfare, r.policy_file
        ));
    }
    write_atomic(path, out.as_bytes())?;

    let plot = format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'delta'\n\
         set ylabel 'worst-case welfare'\n\
         plot '{}' using 1:2 with linespoints, '' using 1:3 with linespoints\n",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("sweep.csv")
    );
    write_atomic(&path.with_extension("gnuplot"), plot.as_bytes())
}

/// Regret-table CSV with the documented column order.
pub fn write_regret_csv(path: &Path, rows: &[crate::sim::RegretRow]) -> Result<()> {
    let mut out =
        String::from("n_s,n_t,rep,seed,r_dro,naive_target_welfare,dr_target_welfare\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.n_s, r.n_t, r.rep, r.seed, r.r_dro, r.naive_target_welfare, r.dr_target_welfare
        ));
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_accepts_minimal_report() {
        let report = RunReport {
            tool: "drpl".into(),
            tool_version: "0.0.0".into(),
            command: "learn".into(),
            seed: 1,
            config: serde_json::json!({"seed": 1}),
            outcome_space: OutcomeSpace::nonnegative(),
            n_source: 4,
            n_target: 2,
            arms: vec!["A".into(), "B".into()],
            cmr: None,
            results: vec![],
            diagnostics: None,
            extra: None,
        };
        report.to_pretty_json().unwrap();
    }

    #[test]
    fn validator_catches_missing_required() {
        let schema = serde_json::json!({
            "type": "object",
            "required": ["alpha"],
            "properties": {"alpha": {"type": "number"}}
        });
        let ok = serde_json::json!({"alpha": 1.5});
        let bad = serde_json::json!({"beta": 1.5});
        assert!(validate_schema(&ok, &schema, "$").is_ok());
        assert!(validate_schema(&bad, &schema, "$").is_err());
    }

    #[test]
    fn validator_checks_types_and_enums() {
        let schema = serde_json::json!({"type": "string", "enum": ["a", "b"]});
        assert!(validate_schema(&serde_json::json!("a"), &schema, "$").is_ok());
        assert!(validate_schema(&serde_json::json!("c"), &schema, "$").is_err());
        assert!(validate_schema(&serde_json::json!(3), &schema, "$").is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
        assert!(!path.with_extension("tmp").exists());
    }
}
