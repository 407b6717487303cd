// SPDX-License-Identifier: Apache-2.0

//! Runner to harness protocol: one `METRIC <name> <value>` line per value on
//! standard output. Other lines are ignored.

use super::HarnessError;

pub const STARTUP_MS: &str = "startup_ms";
pub const EXEC_MS: &str = "exec_ms";
pub const RETURN_VALUE: &str = "return_value";
pub const FUEL_USED: &str = "fuel_used";

#[derive(Debug, Clone, PartialEq)]
pub struct RunnerMetrics {
    pub startup_ms: f64,
    pub exec_ms: f64,
    pub return_value: u64,
    pub fuel_used: Option<u64>,
}

impl RunnerMetrics {
    pub fn to_lines(&self) -> String {
        let mut out = format!(
            "METRIC {STARTUP_MS} {}\nMETRIC {EXEC_MS} {}\nMETRIC {RETURN_VALUE} {}\n",
            self.startup_ms, self.exec_ms, self.return_value
        );
        if let Some(fuel) = self.fuel_used {
            out.push_str(&format!("METRIC {FUEL_USED} {fuel}\n"));
        }
        out
    }
}

pub fn parse_metrics(stdout: &str) -> Result<RunnerMetrics, HarnessError> {
    let mut startup_ms = None;
    let mut exec_ms = None;
    let mut return_value = None;
    let mut fuel_used = None;
    for line in stdout.lines() {
        let mut words = line.split_whitespace();
        if words.next() != Some("METRIC") {
            continue;
        }
        let (Some(name), Some(value), None) = (words.next(), words.next(), words.next()) else {
            return Err(HarnessError::ProtocolParseError(format!("malformed line `{line}`")));
        };
        let bad = || HarnessError::ProtocolParseError(format!("bad value for {name}: `{value}`"));
        match name {
            STARTUP_MS => startup_ms = Some(duration(value).ok_or_else(bad)?),
            EXEC_MS => exec_ms = Some(duration(value).ok_or_else(bad)?),
            RETURN_VALUE => return_value = Some(value.parse().map_err(|_| bad())?),
            FUEL_USED => fuel_used = Some(value.parse().map_err(|_| bad())?),
            _ => {}
        }
    }
    let missing = |name: &str| HarnessError::ProtocolParseError(format!("missing metric {name}"));
    Ok(RunnerMetrics {
        startup_ms: startup_ms.ok_or_else(|| missing(STARTUP_MS))?,
        exec_ms: exec_ms.ok_or_else(|| missing(EXEC_MS))?,
        return_value: return_value.ok_or_else(|| missing(RETURN_VALUE))?,
        fuel_used,
    })
}

fn duration(text: &str) -> Option<f64> {
    let value: f64 = text.parse().ok()?;
    (value.is_finite() && value >= 0.0).then_some(value)
}
