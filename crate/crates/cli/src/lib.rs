//! Batch front-end for `phidecomp`: instance files, verdict reports, SDPA
//! export, the generated corpus and the self-test suites.

use std::fmt;

pub mod commands;
pub mod corpus;
pub mod instance;
pub mod report;
pub mod selftest;

/// Process exit codes. Stable contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Feasible = 0,
    Infeasible = 1,
    Undetermined = 2,
    /// Instance parse or validation failure.
    Invalid = 3,
    /// Bad command line.
    Usage = 4,
    Io = 5,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    pub fn invalid(message: String) -> Self {
        CliError {
            code: ExitCode::Invalid,
            message,
        }
    }

    pub fn usage(message: String) -> Self {
        CliError {
            code: ExitCode::Usage,
            message,
        }
    }

    pub fn io(message: String) -> Self {
        CliError {
            code: ExitCode::Io,
            message,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<phidecomp::Error> for CliError {
    fn from(e: phidecomp::Error) -> Self {
        match e {
            phidecomp::Error::Io(m) => CliError::io(m),
            phidecomp::Error::InvalidArgument(m) => CliError::usage(m),
            other => CliError::invalid(other.to_string()),
        }
    }
}

/// Seed precedence: explicit flag, then the instance file, then
/// `PHIDECOMP_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, instance: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(instance) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

pub const SEED_ENV: &str = "PHIDECOMP_SEED";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Pretty JSON with flat objects, arrays of scalars and arrays of such arrays
/// kept on one line, so a matrix prints one row per line.
pub fn to_json_compact<T: serde::Serialize>(value: &T) -> String {
    fn flat(v: &serde_json::Value) -> bool {
        match v {
            serde_json::Value::Array(a) => a.iter().all(|x| !x.is_array() && !x.is_object()),
            serde_json::Value::Object(_) => false,
            _ => true,
        }
    }
    fn inline(v: &serde_json::Value) -> String {
        match v {
            serde_json::Value::Array(a) => {
                let items: Vec<String> = a.iter().map(inline).collect();
                format!("[{}]", items.join(", "))
            }
            serde_json::Value::Object(m) => {
                let items: Vec<String> = m
                    .iter()
                    .map(|(k, x)| format!("{}: {}", serde_json::Value::from(k.as_str()), inline(x)))
                    .collect();
                format!("{{{}}}", items.join(", "))
            }
            other => other.to_string(),
        }
    }
    fn write(v: &serde_json::Value, indent: usize, out: &mut String) {
        let pad = "  ".repeat(indent + 1);
        match v {
            serde_json::Value::Object(m) if m.values().all(|x| !x.is_array() && !x.is_object()) => {
                out.push_str(&inline(v));
            }
            serde_json::Value::Array(a) if a.iter().all(flat) => out.push_str(&inline(v)),
            serde_json::Value::Array(a) => {
                out.push_str("[\n");
                for (i, x) in a.iter().enumerate() {
                    out.push_str(&pad);
                    write(x, indent + 1, out);
                    out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
                }
                out.push_str(&"  ".repeat(indent));
                out.push(']');
            }
            serde_json::Value::Object(m) => {
                out.push_str("{\n");
                for (i, (k, x)) in m.iter().enumerate() {
                    out.push_str(&pad);
                    out.push_str(&serde_json::Value::from(k.as_str()).to_string());
                    out.push_str(": ");
                    write(x, indent + 1, out);
                    out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
                }
                out.push_str(&"  ".repeat(indent));
                out.push('}');
            }
            other => out.push_str(&other.to_string()),
        }
    }
    let v = serde_json::to_value(value).expect("value serializes");
    let mut out = String::new();
    write(&v, 0, &mut out);
    out
}
