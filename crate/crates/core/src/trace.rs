//! Per-pass variable traces and their comparison.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Named variables after one body pass. Integral values are stored as JSON
/// integers, positions as their decoded index (`null` when no position
/// matches).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub pass: usize,
    #[serde(flatten)]
    pub vars: Map<String, Value>,
}

impl Record {
    pub fn new(pass: usize) -> Self {
        Self {
            pass,
            vars: Map::new(),
        }
    }

    pub fn num(v: f64) -> Value {
        if v.fract() == 0.0 && v.abs() < 9.0e15 {
            Value::from(v as i64)
        } else {
            serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
        }
    }

    pub fn index(i: Option<usize>) -> Value {
        i.map_or(Value::Null, Value::from)
    }

    pub fn list(items: impl Iterator<Item = Value>) -> Value {
        Value::Array(items.collect())
    }

    pub fn set(&mut self, name: &str, v: Value) {
        self.vars.insert(name.to_string(), v);
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.vars.get(name)
    }
}

/// Records for pass 0 (the initial state) through the terminating pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub records: Vec<Record>,
}

impl ExecutionTrace {
    /// Number of body passes covered.
    pub fn passes(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    /// One JSON object per line.
    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| Error::Parse(e.to_string()))?);
        }
        Ok(Self { records })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub variable: String,
    pub expected: Value,
    pub actual: Value,
}

/// Where two traces first disagree.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceDiff {
    pub first_divergence: Option<usize>,
    /// Mismatching variables at the first divergent pass. A missing record
    /// shows up as a `"<pass>"` entry with a `null` side.
    pub mismatches: Vec<Mismatch>,
}

impl TraceDiff {
    pub fn is_empty(&self) -> bool {
        self.first_divergence.is_none()
    }
}

impl std::fmt::Display for TraceDiff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.first_divergence {
            None => write!(f, "traces agree"),
            Some(p) => {
                write!(f, "first divergence at pass {p}")?;
                for m in &self.mismatches {
                    write!(
                        f,
                        "\n  {}: expected {}, got {}",
                        m.variable, m.expected, m.actual
                    )?;
                }
                Ok(())
            }
        }
    }
}

/// Compares `actual` against `reference` pass by pass. Values are compared
/// exactly: integers and booleans as integers, positions by decoded index.
pub fn compare_traces(actual: &ExecutionTrace, reference: &ExecutionTrace) -> TraceDiff {
    let n = actual.records.len().min(reference.records.len());
    for t in 0..n {
        let (a, r) = (&actual.records[t], &reference.records[t]);
        let mut mismatches = Vec::new();
        for (name, want) in &r.vars {
            let got = a.vars.get(name).cloned().unwrap_or(Value::Null);
            if &got != want {
                mismatches.push(Mismatch {
                    variable: name.clone(),
                    expected: want.clone(),
                    actual: got,
                });
            }
        }
        for (name, got) in &a.vars {
            if !r.vars.contains_key(name) {
                mismatches.push(Mismatch {
                    variable: name.clone(),
                    expected: Value::Null,
                    actual: got.clone(),
                });
            }
        }
        if a.pass != r.pass {
            mismatches.push(Mismatch {
                variable: "pass".into(),
                expected: r.pass.into(),
                actual: a.pass.into(),
            });
        }
        if !mismatches.is_empty() {
            return TraceDiff {
                first_divergence: Some(r.pass),
                mismatches,
            };
        }
    }
    if actual.records.len() == reference.records.len() {
        return TraceDiff::default();
    }
    let present = |t: &ExecutionTrace| t.records.get(n).map_or(Value::Null, |r| r.pass.into());
    TraceDiff {
        first_divergence: Some(n),
        mismatches: vec![Mismatch {
            variable: "<pass>".into(),
            expected: present(reference),
            actual: present(actual),
        }],
    }
}
