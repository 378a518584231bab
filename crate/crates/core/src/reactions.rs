//! KPP reaction terms and their sampled hypothesis checks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of sample points used by the KPP checks on `(0, 2]`.
pub const KPP_SAMPLES: usize = 10_000;
const ENDPOINT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReactionError {
    #[error("invalid reaction parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("reaction is not KPP: {0}")]
    NotKpp(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReactionSpec {
    /// `f(u) = r u (1 - u)`.
    Logistic {
        #[serde(rename = "rate_per_time")]
        rate: f64,
    },
    /// `f(u) = r u (1 - u)(1 + b u)`.
    CubicKpp {
        #[serde(rename = "rate_per_time")]
        rate: f64,
        skew: f64,
    },
    /// Piecewise-linear `f` through `(u, f(u))` samples, `u[0] = 0`, extended
    /// linearly beyond the last sample.
    Tabulated { u: Vec<f64>, f: Vec<f64> },
}

impl ReactionSpec {
    pub fn logistic(rate: f64) -> Self {
        ReactionSpec::Logistic { rate }
    }
}

/// A validated KPP nonlinearity.
#[derive(Debug, Clone)]
pub struct Reaction {
    spec: ReactionSpec,
    f0: f64,
    f1: f64,
    k0: f64,
}

impl Reaction {
    pub fn new(spec: ReactionSpec) -> Result<Self, ReactionError> {
        match &spec {
            ReactionSpec::Logistic { rate } => check_rate(*rate)?,
            ReactionSpec::CubicKpp { rate, skew } => {
                check_rate(*rate)?;
                if !skew.is_finite() {
                    return Err(ReactionError::InvalidParameter {
                        name: "skew",
                        reason: "must be finite".into(),
                    });
                }
            }
            ReactionSpec::Tabulated { u, f } => {
                if u.len() != f.len() || u.len() < 3 {
                    return Err(ReactionError::InvalidParameter {
                        name: "u",
                        reason: "u and f must have equal length ≥ 3".into(),
                    });
                }
                if u[0] != 0.0 || u.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(ReactionError::InvalidParameter {
                        name: "u",
                        reason: "u must start at 0 and be strictly increasing".into(),
                    });
                }
                if f.iter().any(|v| !v.is_finite()) {
                    return Err(ReactionError::InvalidParameter {
                        name: "f",
                        reason: "values must be finite".into(),
                    });
                }
            }
        }
        let mut r = Reaction {
            spec,
            f0: 0.0,
            f1: 0.0,
            k0: 0.0,
        };
        r.f0 = r.derivative(0.0);
        r.f1 = r.derivative(1.0);
        r.check_kpp()?;
        r.k0 = r.compute_k0();
        Ok(r)
    }

    /// Reads a two-column `(u, f(u))` table.
    pub fn read_tabulated(path: &std::path::Path) -> Result<ReactionSpec, ReactionError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReactionError::InvalidParameter {
            name: "table",
            reason: format!("{}: {e}", path.display()),
        })?;
        let (u, f) = crate::kernels::parse_two_columns(&text)
            .map_err(|reason| ReactionError::InvalidParameter { name: "table", reason })?;
        Ok(ReactionSpec::Tabulated { u, f })
    }

    pub fn spec(&self) -> &ReactionSpec {
        &self.spec
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match &self.spec {
            ReactionSpec::Logistic { rate } => rate * u * (1.0 - u),
            ReactionSpec::CubicKpp { rate, skew } => rate * u * (1.0 - u) * (1.0 + skew * u),
            ReactionSpec::Tabulated { u: us, f } => {
                let i = segment(us, u);
                f[i] + (f[i + 1] - f[i]) * (u - us[i]) / (us[i + 1] - us[i])
            }
        }
    }

    pub fn derivative(&self, u: f64) -> f64 {
        match &self.spec {
            ReactionSpec::Logistic { rate } => rate * (1.0 - 2.0 * u),
            ReactionSpec::CubicKpp { rate, skew } => {
                // d/du [u - u² + b u² - b u³]
                rate * (1.0 + 2.0 * (skew - 1.0) * u - 3.0 * skew * u * u)
            }
            ReactionSpec::Tabulated { u: us, f } => {
                let i = segment(us, u);
                (f[i + 1] - f[i]) / (us[i + 1] - us[i])
            }
        }
    }

    /// `f'(0)`.
    pub fn f0(&self) -> f64 {
        self.f0
    }

    /// `f'(1)`.
    pub fn f1(&self) -> f64 {
        self.f1
    }

    /// Smallest sampled level beyond which `f ≤ 0`.
    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// Lipschitz constant of `f` on `[0, upper]`.
    pub fn lipschitz(&self, upper: f64) -> f64 {
        match &self.spec {
            ReactionSpec::Logistic { rate } => rate * 1f64.max(2.0 * upper - 1.0),
            _ => {
                let n = 4096;
                (0..=n)
                    .map(|k| self.derivative(upper * k as f64 / n as f64).abs())
                    .fold(0.0, f64::max)
            }
        }
    }

    fn check_kpp(&self) -> Result<(), ReactionError> {
        let f_zero = self.eval(0.0);
        let f_one = self.eval(1.0);
        if f_zero.abs() > ENDPOINT_TOL {
            return Err(ReactionError::NotKpp(format!("f(0) = {f_zero} ≠ 0")));
        }
        if f_one.abs() > ENDPOINT_TOL {
            return Err(ReactionError::NotKpp(format!("f(1) = {f_one} ≠ 0")));
        }
        if !(self.f0 > 0.0) {
            return Err(ReactionError::NotKpp(format!("f'(0) = {} must be > 0", self.f0)));
        }
        if !(self.f1 < 0.0) {
            return Err(ReactionError::NotKpp(format!("f'(1) = {} must be < 0", self.f1)));
        }
        // f(u)/u nonincreasing on (0, 2], starting from the limit f'(0)
        let mut prev = self.f0;
        for k in 1..=KPP_SAMPLES {
            let u = 2.0 * k as f64 / KPP_SAMPLES as f64;
            let q = self.eval(u) / u;
            if q > prev + 1e-12 * prev.abs().max(1.0) {
                return Err(ReactionError::NotKpp(format!(
                    "f(u)/u increases near u = {u:.4} ({prev:.6} -> {q:.6})"
                )));
            }
            prev = q;
        }
        Ok(())
    }

    fn compute_k0(&self) -> f64 {
        // f/u is nonincreasing, so f ≤ 0 from its first nonpositive sample on;
        // the sampled levels are scanned on (0, 2].
        (1..=KPP_SAMPLES)
            .map(|k| 2.0 * k as f64 / KPP_SAMPLES as f64)
            .find(|&u| self.eval(u) <= 0.0)
            .unwrap_or(2.0)
    }
}

fn check_rate(rate: f64) -> Result<(), ReactionError> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(ReactionError::InvalidParameter {
            name: "rate",
            reason: format!("must be finite and > 0, got {rate}"),
        })
    }
}

fn segment(us: &[f64], u: f64) -> usize {
    let n = us.len();
    match us.binary_search_by(|v| v.partial_cmp(&u).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(n - 2),
    }
}
