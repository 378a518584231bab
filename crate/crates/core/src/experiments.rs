//! Observables measured on simulation output: front speeds, acceleration
//! laws, bulk convergence to the saturated state and the comparison harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::free_boundary::{FreeBoundaryError, FrontState, InitialProfile, Outcome, SimConfig, Solver, TimeSeries};
use crate::kernels::Side;

/// Fewest samples a trailing window may hold.
pub const MIN_WINDOW_SAMPLES: usize = 10;
/// Smallest coefficient of determination accepted by [`fit_acceleration`].
pub const MIN_R2: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("trailing window holds {samples} samples, need at least {MIN_WINDOW_SAMPLES}")]
    WindowTooShort { samples: usize },
    #[error("model {model} does not fit the series (R² = {r2:.4} < {MIN_R2})")]
    ModelMismatch { model: &'static str, r2: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Simulation(#[from] FreeBoundaryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub side: Side,
    pub slope: f64,
    pub window: (f64, f64),
    pub stderr: f64,
    pub samples: usize,
    pub theory: Option<f64>,
    pub rel_error: Option<f64>,
}

/// Least-squares line `y = a + b x`, with the slope's standard error and R².
#[derive(Debug, Clone, Copy, PartialEq)]
struct LineFit {
    intercept: f64,
    slope: f64,
    stderr: f64,
    r2: f64,
}

fn line_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if xs.len() > 2 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    let r2 = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    LineFit {
        intercept,
        slope,
        stderr,
        r2,
    }
}

/// Rows whose time lies in the trailing window, never earlier than half the
/// horizon.
fn trailing(series: &TimeSeries, window_frac: f64) -> Result<(f64, f64, &[crate::free_boundary::Row]), ExperimentError> {
    if !(window_frac > 0.0 && window_frac <= 1.0) {
        return Err(ExperimentError::InvalidInput(format!("window_frac must lie in (0, 1], got {window_frac}")));
    }
    let Some(last) = series.last() else {
        return Err(ExperimentError::WindowTooShort { samples: 0 });
    };
    let t_hi = last.t;
    let t_lo = (t_hi * (1.0 - window_frac)).max(0.5 * t_hi);
    let k = series.rows.partition_point(|r| r.t < t_lo);
    let rows = &series.rows[k..];
    if rows.len() < MIN_WINDOW_SAMPLES {
        return Err(ExperimentError::WindowTooShort { samples: rows.len() });
    }
    Ok((t_lo, t_hi, rows))
}

/// Trailing least-squares speed of one front (`h` on the right, `-g` on the
/// left).
pub fn estimate_speed(
    series: &TimeSeries,
    side: Side,
    window_frac: f64,
    theory: Option<f64>,
) -> Result<SpeedEstimate, ExperimentError> {
    let (t_lo, t_hi, rows) = trailing(series, window_frac)?;
    let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
    let xs: Vec<f64> = rows
        .iter()
        .map(|r| match side {
            Side::Right => r.h,
            Side::Left => -r.g,
        })
        .collect();
    let fit = line_fit(&ts, &xs);
    Ok(SpeedEstimate {
        side,
        slope: fit.slope,
        window: (t_lo, t_hi),
        stderr: fit.stderr,
        samples: rows.len(),
        theory,
        rel_error: theory.map(|c| (fit.slope - c) / c),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum AccelModel {
    /// `h ≈ C t^p`.
    Power,
    /// `h ≈ C t ln t`.
    TLog,
    /// `h ≈ exp(K t^{1/β})`.
    ExpRoot { beta: f64 },
}

impl AccelModel {
    fn name(&self) -> &'static str {
        match self {
            AccelModel::Power => "power",
            AccelModel::TLog => "t_log",
            AccelModel::ExpRoot { .. } => "exp_root",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum AccelParams {
    Power { p: f64, c: f64 },
    TLog { c: f64 },
    ExpRoot { k: f64, beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelFit {
    pub params: AccelParams,
    /// R² in the transformed coordinates.
    pub r2: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Fits a growth law to the right front over the trailing half of the
/// horizon.
pub fn fit_acceleration(series: &TimeSeries, model: AccelModel) -> Result<AccelFit, ExperimentError> {
    let (t_lo, t_hi, rows) = trailing(series, 0.5)?;
    let rows: Vec<_> = rows.iter().filter(|r| r.t > 1.0 && r.h > 1.0).collect();
    if rows.len() < MIN_WINDOW_SAMPLES {
        return Err(ExperimentError::WindowTooShort { samples: rows.len() });
    }
    let (params, r2) = match model {
        AccelModel::Power => {
            let xs: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
            let f = line_fit(&xs, &ys);
            (
                AccelParams::Power {
                    p: f.slope,
                    c: f.intercept.exp(),
                },
                f.r2,
            )
        }
        AccelModel::TLog => {
            let xs: Vec<f64> = rows.iter().map(|r| r.t * r.t.ln()).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.h).collect();
            let c = xs.iter().zip(&ys).map(|(x, y)| y / x).sum::<f64>() / xs.len() as f64;
            (AccelParams::TLog { c }, line_fit(&xs, &ys).r2)
        }
        AccelModel::ExpRoot { beta } => {
            if !(beta > 1.0) {
                return Err(ExperimentError::InvalidInput(format!("β must exceed 1, got {beta}")));
            }
            let xs: Vec<f64> = rows.iter().map(|r| r.t.powf(1.0 / beta)).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.h.ln()).collect();
            let f = line_fit(&xs, &ys);
            (AccelParams::ExpRoot { k: f.slope, beta }, f.r2)
        }
    };
    if !(r2 >= MIN_R2) {
        return Err(ExperimentError::ModelMismatch { model: model.name(), r2 });
    }
    Ok(AccelFit {
        params,
        r2,
        window: (t_lo, t_hi),
        samples: rows.len(),
    })
}

/// Where the density is compared against its saturated level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "region", rename_all = "snake_case")]
pub enum BulkRegion {
    /// `[a t, b t]`, for finite-speed spreading.
    Speed { a: f64, b: f64 },
    /// `[(1-ε) g, (1-ε) h]`, for accelerating spreading.
    Shrunk { eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BulkReport {
    /// False for runs that did not spread; the other fields are then empty.
    pub applicable: bool,
    pub t: f64,
    pub region: Option<(f64, f64)>,
    pub nodes: usize,
    pub sup_deviation: f64,
}

/// `sup |u - level|` over the lattice nodes of the region at the final time.
pub fn bulk_convergence(state: &FrontState, outcome: Outcome, region: BulkRegion, level: f64) -> BulkReport {
    if outcome != Outcome::Spreading {
        return BulkReport {
            applicable: false,
            t: state.t,
            region: None,
            nodes: 0,
            sup_deviation: 0.0,
        };
    }
    let (lo, hi) = match region {
        BulkRegion::Speed { a, b } => (a * state.t, b * state.t),
        BulkRegion::Shrunk { eps } => ((1.0 - eps) * state.g, (1.0 - eps) * state.h),
    };
    let mut nodes = 0;
    let mut sup = 0.0f64;
    for (k, v) in state.u.iter().enumerate() {
        let x = state.x(k);
        if x >= lo && x <= hi {
            nodes += 1;
            sup = sup.max((v - level).abs());
        }
    }
    BulkReport {
        applicable: true,
        t: state.t,
        region: Some((lo, hi)),
        nodes,
        sup_deviation: sup,
    }
}

/// Scalings that turn the base run into the lower member of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub amplitude_scale: f64,
    pub mu_scale: f64,
    pub h0_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    Density { node: i64, lower: f64, upper: f64 },
    RightFront { lower: f64, upper: f64 },
    LeftFront { lower: f64, upper: f64 },
    Negative { node: i64, value: f64 },
    SupBound { sup: f64, bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub pair: usize,
    pub t: f64,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub pairs: Vec<PairSpec>,
    pub checks: usize,
    pub violations: Vec<Violation>,
}

impl HarnessReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Absolute slack allowed in every ordering comparison.
pub const ORDER_TOL: f64 = 1e-12;

fn scaled_initial(p: &InitialProfile, s: f64) -> InitialProfile {
    match p {
        InitialProfile::Cosine { amplitude } => InitialProfile::Cosine { amplitude: amplitude * s },
        InitialProfile::Parabola { amplitude } => InitialProfile::Parabola { amplitude: amplitude * s },
        InitialProfile::Samples { values } => InitialProfile::Samples {
            values: values.iter().map(|v| v * s).collect(),
        },
    }
}

/// Lower member of a pair. Sampled profiles keep `h0`, since a narrower
/// rescaling of arbitrary samples need not lie below the original.
pub fn lower_config(base: &SimConfig, pair: &PairSpec) -> SimConfig {
    let mut c = base.clone();
    c.initial = scaled_initial(&base.initial, pair.amplitude_scale);
    c.mu = base.mu * pair.mu_scale;
    if !matches!(base.initial, InitialProfile::Samples { .. }) {
        c.h0 = (base.h0 * pair.h0_scale).max(2.0 * base.dx);
    }
    c
}

/// Draws `n_pairs` ordered perturbations of `base` (which is the upper
/// member of every pair), integrates each pair in lockstep and checks the
/// ordering of `(u, g, h)`, positivity and the invariant bound every
/// `record_every` steps.
pub fn comparison_harness(base: &SimConfig, n_pairs: usize, seed: u64) -> Result<HarnessReport, ExperimentError> {
    base.validate().map_err(|e| ExperimentError::InvalidInput(e.join("; ")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<PairSpec> = (0..n_pairs)
        .map(|_| PairSpec {
            amplitude_scale: rng.random_range(0.3..=1.0),
            mu_scale: rng.random_range(0.25..=1.0),
            h0_scale: rng.random_range(0.5..=1.0),
        })
        .collect();
    let results: Result<Vec<(usize, Vec<Violation>)>, ExperimentError> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| check_pair(base, &lower_config(base, p), i))
        .collect();
    let mut report = HarnessReport {
        pairs,
        ..Default::default()
    };
    for (checks, v) in results? {
        report.checks += checks;
        report.violations.extend(v);
    }
    Ok(report)
}

/// Integrates `upper` and `lower` with a shared step and lattice and returns
/// the number of checkpoints and every violation found.
pub fn check_pair(upper: &SimConfig, lower: &SimConfig, pair: usize) -> Result<(usize, Vec<Violation>), ExperimentError> {
    if upper.dt != lower.dt || upper.dx != lower.dx {
        return Err(ExperimentError::InvalidInput("paired runs must share dx and dt".into()));
    }
    let mut a = Solver::new(lower)?;
    let mut b = Solver::new(upper)?;
    let bound = upper.bound().max(lower.bound());
    let total = (upper.t_max / upper.dt).round() as u64;
    let every = upper.record_every.max(1) as u64;
    let mut out = Vec::new();
    let mut checks = 0;
    let mut check = |lo: &FrontState, up: &FrontState, out: &mut Vec<Violation>| {
        checks += 1;
        let t = up.t;
        let mut push = |kind| out.push(Violation { pair, t, kind });
        if lo.h > up.h + ORDER_TOL {
            push(ViolationKind::RightFront { lower: lo.h, upper: up.h });
        }
        if lo.g < up.g - ORDER_TOL {
            push(ViolationKind::LeftFront { lower: lo.g, upper: up.g });
        }
        for st in [lo, up] {
            if let Some((k, v)) = st.u.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
                push(ViolationKind::Negative {
                    node: st.first + k as i64,
                    value: *v,
                });
            }
            let sup = st.sup();
            if sup > bound + ORDER_TOL {
                push(ViolationKind::SupBound { sup, bound });
            }
        }
        for (k, v) in lo.u.iter().enumerate() {
            let j = lo.first + k as i64;
            let w = up.at(j);
            if *v > w + ORDER_TOL {
                push(ViolationKind::Density { node: j, lower: *v, upper: w });
                break;
            }
        }
    };
    check(&a.state, &b.state, &mut out);
    while b.state.step < total {
        a.step()?;
        b.step()?;
        if b.state.step % every == 0 || b.state.step == total {
            check(&a.state, &b.state, &mut out);
        }
    }
    Ok((checks, out))
}
