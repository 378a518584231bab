use std::fmt;

use kppfront::experiments::ExperimentError;
use kppfront::fixed_domain::FixedDomainError;
use kppfront::free_boundary::FreeBoundaryError;
use kppfront::semiwave::SemiwaveError;
use thiserror::Error;

/// One violated constraint of the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub constraint: String,
}

impl Violation {
    pub fn new(field: &str, constraint: String) -> Self {
        Self {
            field: field.to_string(),
            constraint,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.constraint)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{} constraint(s) violated: {}", .0.len(), join(.0))]
    Validation(Vec<Violation>),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    BracketInvalid(String),
    #[error("{0}")]
    Undecided(String),
    #[error("checkpoint format {found} is not {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("{0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint config differs in {0}")]
    ConfigDrift(String),
    #[error("{0} ordering violation(s)")]
    Violations(usize),
    #[error("{0}")]
    Fit(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Usage(String),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "ParseError",
            CliError::Validation(_) => "ValidationError",
            CliError::Io(_) => "IoError",
            CliError::BracketInvalid(_) => "BracketInvalid",
            CliError::Undecided(_) => "UndecidedBudget",
            CliError::VersionMismatch { .. } => "VersionMismatch",
            CliError::CorruptCheckpoint(_) => "CorruptCheckpoint",
            CliError::ConfigDrift(_) => "ConfigDrift",
            CliError::Violations(_) => "ComparisonViolation",
            CliError::Fit(_) => "FitFailure",
            CliError::Numerical(_) => "NumericalFailure",
            CliError::Usage(_) => "UsageError",
        }
    }

    /// Process exit status; 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Parse { .. } => 3,
            CliError::Validation(_) => 4,
            CliError::Io(_) => 5,
            CliError::BracketInvalid(_) => 6,
            CliError::Undecided(_) => 7,
            CliError::VersionMismatch { .. } => 8,
            CliError::CorruptCheckpoint(_) => 9,
            CliError::ConfigDrift(_) => 10,
            CliError::Violations(_) => 11,
            CliError::Fit(_) => 12,
            CliError::Numerical(_) => 13,
        }
    }

    /// `error code=<name> exit=<n> message=<json string>`, then one
    /// `violation` line per constraint.
    pub fn report(&self) -> String {
        let msg = serde_json::to_string(&self.to_string()).expect("string serializes");
        let mut out = format!("error code={} exit={} message={msg}", self.code(), self.exit_code());
        if let CliError::Validation(list) = self {
            for v in list {
                let c = serde_json::to_string(&v.constraint).expect("string serializes");
                out.push_str(&format!("\nviolation field={} constraint={c}", v.field));
            }
        }
        out
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<FreeBoundaryError> for CliError {
    fn from(e: FreeBoundaryError) -> Self {
        match e {
            FreeBoundaryError::BracketInvalid { .. } => CliError::BracketInvalid(e.to_string()),
            FreeBoundaryError::UndecidedBudget { .. } => CliError::Undecided(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<FixedDomainError> for CliError {
    fn from(e: FixedDomainError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<SemiwaveError> for CliError {
    fn from(e: SemiwaveError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Simulation(inner) => inner.into(),
            ExperimentError::WindowTooShort { .. } | ExperimentError::ModelMismatch { .. } => CliError::Fit(e.to_string()),
            ExperimentError::InvalidInput(_) => CliError::Numerical(e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        let all = [
            CliError::Parse { line: 1, column: 1, message: String::new() },
            CliError::Validation(vec![]),
            CliError::Io(String::new()),
            CliError::BracketInvalid(String::new()),
            CliError::Undecided(String::new()),
            CliError::VersionMismatch { found: 0, expected: 1 },
            CliError::CorruptCheckpoint(String::new()),
            CliError::ConfigDrift(String::new()),
            CliError::Violations(1),
            CliError::Fit(String::new()),
            CliError::Numerical(String::new()),
            CliError::Usage(String::new()),
        ];
        let mut codes: Vec<i32> = all.iter().map(|e| e.exit_code()).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), all.len());
        assert!(codes.iter().all(|&c| c != 0));
    }

    #[test]
    fn report_quotes_the_message() {
        let e = CliError::Validation(vec![Violation::new("kernel.exponent", "needs \"alpha > 1\"".into())]);
        let r = e.report();
        assert!(r.starts_with("error code=ValidationError exit=4 message=\""));
        assert!(r.contains("violation field=kernel.exponent constraint=\"needs \\\"alpha > 1\\\"\""));
    }
}
