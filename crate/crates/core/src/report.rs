//! Canonical report documents and per-round CSV export.
//!
//! Canonical JSON means: object keys sorted, floats rounded to nine
//! significant digits, two-space indentation, trailing newline. The same
//! input always yields the same bytes.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::error::Result;
use crate::observables::Outcomes;
use crate::protocol::{BaselineResult, RoundRecord, SessionConfig};
use crate::security::SecurityReport;

pub const TOOL_NAME: &str = "dqkd";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SIGNIFICANT_DIGITS: usize = 9;

/// What `run` and the network parties write to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub tool: String,
    pub version: String,
    pub config: SessionConfig,
    /// Set for `ent` and `pm` runs.
    pub security: Option<SecurityReport>,
    /// Set for `ekert` runs.
    pub baseline: Option<BaselineResult>,
}

impl ReportDocument {
    pub fn session(config: SessionConfig, security: SecurityReport) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: VERSION.into(),
            config,
            security: Some(security),
            baseline: None,
        }
    }

    pub fn baseline(config: SessionConfig, baseline: BaselineResult) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            version: VERSION.into(),
            config,
            security: None,
            baseline: Some(baseline),
        }
    }
}

/// Rounds `x` to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

fn canonicalize(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => n
            .as_f64()
            .and_then(|f| Number::from_f64(round_significant(f)))
            .map(Value::Number)
            .unwrap_or(Value::Null),
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        // serde_json's default map is ordered by key
        Value::Object(map) => {
            Value::Object(map.into_iter().map(|(k, v)| (k, canonicalize(v))).collect())
        }
        other => other,
    }
}

pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let tree = canonicalize(serde_json::to_value(value)?);
    let mut text = serde_json::to_string_pretty(&tree)?;
    text.push('\n');
    Ok(text)
}

fn triple(o: Option<Outcomes>) -> String {
    o.map(|o| {
        o.0.iter()
            .map(|v| if *v > 0 { "+1" } else { "-1" })
            .collect::<Vec<_>>()
            .join(" ")
    })
    .unwrap_or_default()
}

pub const CSV_HEADER: &str =
    "round_id,setting_a,setting_b,detected_a,detected_b,outcomes_a,outcomes_b,revealed";

pub fn write_rounds_csv<W: Write>(records: &[RoundRecord], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.round_id,
            r.setting_a,
            r.setting_b,
            r.detected_a,
            r.detected_b,
            triple(r.outcomes_a),
            triple(r.outcomes_b),
            r.revealed
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::Setting;
    use proptest::prelude::*;

    #[test]
    fn rounding() {
        assert_eq!(round_significant(2.0 / 9.0), 0.222222222);
        assert_eq!(round_significant(9.0), 9.0);
        assert_eq!(round_significant(-1.23456789012e-7), -1.23456789e-7);
    }

    #[test]
    fn canonical_json_sorts_keys_and_rounds() {
        #[derive(Serialize)]
        struct S {
            zeta: f64,
            alpha: u64,
        }
        let text = canonical_json(&S {
            zeta: 1.0 / 3.0,
            alpha: 3,
        })
        .unwrap();
        assert_eq!(text, "{\n  \"alpha\": 3,\n  \"zeta\": 0.333333333\n}\n");
    }

    #[test]
    fn csv_rows() {
        let rec = RoundRecord {
            round_id: 7,
            detected_a: true,
            detected_b: false,
            setting_a: Setting::A2,
            setting_b: Setting::B1,
            outcomes_a: Some(Outcomes([1, -1, -1])),
            outcomes_b: None,
            eve: None,
            revealed: false,
        };
        let mut buf = Vec::new();
        write_rounds_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().nth(1).unwrap(),
            "7,A2,B1,true,false,+1 -1 -1,,false"
        );
    }

    proptest! {
        #[test]
        fn rounding_is_idempotent(x in -1e6f64..1e6) {
            let once = round_significant(x);
            prop_assert_eq!(once, round_significant(once));
            prop_assert!((once - x).abs() <= x.abs() * 1e-8);
        }
    }
}
