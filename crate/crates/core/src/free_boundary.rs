//! Explicit front-tracking solver for the free-boundary problem.
//!
//! Nodes live on the lattice `x_j = j·dx` and the fronts `g < h` are stored as
//! exact reals. The density is the piecewise-linear interpolant through
//! `(g, 0)`, the interior lattice nodes and `(h, 0)`; the convolution is
//! integrated exactly against that interpolant (Toeplitz hat weights plus
//! corrections for the two partial end cells) and the front speeds are single
//! integrals against the tail function.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fixed_domain::FixedDomainError;
use crate::kernels::Kernel;
use crate::lattice::{left_half, right_half, ToeplitzConv};
use crate::quad::GaussLegendre;
use crate::reactions::Reaction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FreeBoundaryError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("time step {dt} violates the monotone bound dt·(d + Lip f) < 1 (= {product})")]
    StabilityViolation { dt: f64, product: f64 },
    #[error("sup u = {sup} exceeds the invariant bound {bound} at t = {t}")]
    BlowUp { t: f64, sup: f64, bound: f64 },
    #[error("invalid μ bracket ({lo}, {hi}): endpoint outcome {outcome:?}")]
    BracketInvalid { lo: f64, hi: f64, outcome: Outcome },
    #[error("classification undecided at T_max = {t_max} for μ = {mu}")]
    UndecidedBudget { mu: f64, t_max: f64 },
    #[error(transparent)]
    Fixed(#[from] FixedDomainError),
}

/// Initial density on `[-h0, h0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    /// `A cos(πx / 2h0)`.
    Cosine { amplitude: f64 },
    /// `A (1 - (x/h0)²)`.
    Parabola { amplitude: f64 },
    /// Values at equally spaced points of `[-h0, h0]`, endpoints included (and zero).
    Samples { values: Vec<f64> },
}

impl InitialProfile {
    pub fn eval(&self, x: f64, h0: f64) -> f64 {
        if x.abs() >= h0 {
            return 0.0;
        }
        match self {
            InitialProfile::Cosine { amplitude } => amplitude * (std::f64::consts::FRAC_PI_2 * x / h0).cos(),
            InitialProfile::Parabola { amplitude } => amplitude * (1.0 - (x / h0) * (x / h0)),
            InitialProfile::Samples { values } => {
                let m = values.len() - 1;
                let s = (x + h0) / (2.0 * h0) * m as f64;
                let i = (s.floor() as usize).min(m - 1);
                let w = s - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            InitialProfile::Cosine { amplitude } | InitialProfile::Parabola { amplitude } => *amplitude,
            InitialProfile::Samples { values } => values.iter().cloned().fold(0.0, f64::max),
        }
    }

    fn validate(&self, errs: &mut Vec<String>) {
        match self {
            InitialProfile::Cosine { amplitude } | InitialProfile::Parabola { amplitude } => {
                if !(amplitude.is_finite() && *amplitude > 0.0) {
                    errs.push(format!("initial amplitude must be > 0, got {amplitude}"));
                }
            }
            InitialProfile::Samples { values } => {
                if values.len() < 3 {
                    errs.push("initial samples need at least 3 values".into());
                } else {
                    if values[0] != 0.0 || values[values.len() - 1] != 0.0 {
                        errs.push("initial samples must vanish at ±h0".into());
                    }
                    let inner = &values[1..values.len() - 1];
                    if inner.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                        errs.push("initial samples must be positive inside (-h0, h0)".into());
                    }
                }
            }
        }
    }
}

/// When a run stops before `t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once [`classify_outcome`] decides, using this critical length.
    pub classify_with_ell_star: Option<f64>,
    pub thresholds: Thresholds,
    /// Stop when `h - g` reaches this length.
    pub max_length: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub kernel: Kernel,
    pub reaction: Reaction,
    pub d: f64,
    pub mu: f64,
    pub h0: f64,
    pub initial: InitialProfile,
    pub dx: f64,
    pub dt: f64,
    pub t_max: f64,
    pub picard_iters: usize,
    pub record_every: usize,
    pub stop: StopRule,
}

impl SimConfig {
    /// Config with the default spacing `core_width/8`, the default monotone
    /// step and a unit cosine bump.
    pub fn new(kernel: Kernel, reaction: Reaction, d: f64, mu: f64, h0: f64, t_max: f64) -> Self {
        let dx = kernel.core_width() / 8.0;
        let initial = InitialProfile::Cosine { amplitude: 1.0 };
        let dt = monotone_dt(d, mu, &reaction, initial.sup());
        Self {
            kernel,
            reaction,
            d,
            mu,
            h0,
            initial,
            dx,
            dt,
            t_max,
            picard_iters: 0,
            record_every: 1,
            stop: StopRule::default(),
        }
    }

    /// `max(‖u0‖_∞, K₀)`.
    pub fn bound(&self) -> f64 {
        self.initial.sup().max(self.reaction.k0())
    }

    /// Every violated constraint, not just the first.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut errs = Vec::new();
        for (name, v) in [("d", self.d), ("mu", self.mu), ("h0", self.h0), ("dx", self.dx), ("dt", self.dt), ("t_max", self.t_max)] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if self.dx > self.kernel.core_width() / 8.0 * (1.0 + 1e-12) {
            errs.push(format!(
                "dx = {} does not resolve the kernel core (need dx ≤ {})",
                self.dx,
                self.kernel.core_width() / 8.0
            ));
        }
        if self.h0 > 0.0 && self.dx > 0.0 && 2.0 * self.h0 < 4.0 * self.dx {
            errs.push(format!("initial interval 2·h0 = {} spans fewer than 4 cells", 2.0 * self.h0));
        }
        if self.record_every == 0 {
            errs.push("record_every must be ≥ 1".into());
        }
        self.initial.validate(&mut errs);
        if errs.is_empty() {
            let product = self.dt * (self.d + self.reaction.lipschitz(self.bound()));
            if product >= 1.0 {
                errs.push(format!("dt·(d + Lip f) = {product} ≥ 1"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

/// `0.9 / max(d + Lip f, μ·bound)`: keeps `u ↦ u + dt(-du + f(u))`
/// nondecreasing and the front update order preserving.
pub fn monotone_dt(d: f64, mu: f64, reaction: &Reaction, u0_sup: f64) -> f64 {
    let bound = u0_sup.max(reaction.k0());
    0.9 / (d + reaction.lipschitz(bound)).max(mu * bound)
}

/// Solution snapshot; `u[k]` is the density at lattice node `first + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontState {
    pub step: u64,
    pub t: f64,
    pub g: f64,
    pub h: f64,
    pub dx: f64,
    pub first: i64,
    pub u: Vec<f64>,
}

fn first_inside(g: f64, dx: f64) -> i64 {
    let mut j = (g / dx).floor() as i64 + 1;
    while (j as f64) * dx <= g {
        j += 1;
    }
    while ((j - 1) as f64) * dx > g {
        j -= 1;
    }
    j
}

fn last_inside(h: f64, dx: f64) -> i64 {
    let mut j = (h / dx).ceil() as i64 - 1;
    while (j as f64) * dx >= h {
        j -= 1;
    }
    while ((j + 1) as f64) * dx < h {
        j += 1;
    }
    j
}

impl FrontState {
    pub fn initial(cfg: &SimConfig) -> Self {
        let (g, h) = (-cfg.h0, cfg.h0);
        let first = first_inside(g, cfg.dx);
        let last = last_inside(h, cfg.dx);
        let u = (first..=last).map(|j| cfg.initial.eval(j as f64 * cfg.dx, cfg.h0)).collect();
        Self {
            step: 0,
            t: 0.0,
            g,
            h,
            dx: cfg.dx,
            first,
            u,
        }
    }

    pub fn x(&self, k: usize) -> f64 {
        (self.first + k as i64) as f64 * self.dx
    }

    pub fn last(&self) -> i64 {
        self.first + self.u.len() as i64 - 1
    }

    pub fn sup(&self) -> f64 {
        self.u.iter().cloned().fold(0.0, f64::max)
    }

    /// `∫_g^h u` for the piecewise-linear interpolant.
    pub fn mass(&self) -> f64 {
        let n = self.u.len();
        if n == 0 {
            return 0.0;
        }
        let mut acc = 0.5 * self.u[0] * (self.x(0) - self.g) + 0.5 * self.u[n - 1] * (self.h - self.x(n - 1));
        for k in 0..n - 1 {
            acc += 0.5 * (self.u[k] + self.u[k + 1]) * self.dx;
        }
        acc
    }

    /// Nodes including the two fronts, with zero density there.
    pub fn profile(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.u.len() + 2);
        out.push((self.g, 0.0));
        out.extend(self.u.iter().enumerate().map(|(k, v)| (self.x(k), *v)));
        out.push((self.h, 0.0));
        out
    }

    /// Density at lattice index `j` (zero outside the interior range).
    pub fn at(&self, j: i64) -> f64 {
        let k = j - self.first;
        if k < 0 || k as usize >= self.u.len() {
            0.0
        } else {
            self.u[k as usize]
        }
    }

    /// Re-grids to the interior lattice range of `(g, h)`: kept nodes keep
    /// their value, newly covered nodes start at 0.
    fn regrid(&mut self, g: f64, h: f64) {
        let first = first_inside(g, self.dx);
        let last = last_inside(h, self.dx);
        if first == self.first && last == self.last() {
            self.g = g;
            self.h = h;
            return;
        }
        let u = (first..=last).map(|j| self.at(j)).collect();
        self.first = first;
        self.u = u;
        self.g = g;
        self.h = h;
    }
}

/// Integrates `f` over `[a, b]` split at the breakpoints (ascending) inside it.
fn integrate_cell<F: FnMut(f64) -> f64>(rule: &GaussLegendre, a: f64, b: f64, breaks: &[f64], mut f: F) -> f64 {
    let lo = breaks.partition_point(|&p| p <= a);
    let hi = breaks.partition_point(|&p| p < b);
    if lo >= hi {
        return rule.integrate(a, b, f);
    }
    let mut acc = 0.0;
    let mut left = a;
    for &p in &breaks[lo..hi] {
        acc += rule.integrate(left, p, &mut f);
        left = p;
    }
    acc + rule.integrate(left, b, f)
}

/// `Σ_cells ∫ w(x) u(x) dx` for the piecewise-linear density, over cells that
/// meet `[x_lo, x_hi]`.
fn weighted_integral<W: Fn(f64) -> f64>(
    state: &FrontState,
    rule: &GaussLegendre,
    breaks: &[f64],
    x_lo: f64,
    x_hi: f64,
    w: W,
) -> f64 {
    let n = state.u.len();
    if n == 0 {
        return 0.0;
    }
    let mut acc = 0.0;
    let mut cell = |a: f64, b: f64, ua: f64, ub: f64| {
        if b <= x_lo || a >= x_hi || b <= a {
            return;
        }
        let len = b - a;
        acc += integrate_cell(rule, a, b, breaks, |x| w(x) * (ua + (ub - ua) * (x - a) / len));
    };
    cell(state.g, state.x(0), 0.0, state.u[0]);
    let k_lo = (((x_lo - state.x(0)) / state.dx).floor().max(0.0) as usize).min(n - 1);
    let k_hi = (((x_hi - state.x(0)) / state.dx).ceil().max(0.0) as usize).min(n - 1);
    for k in k_lo..k_hi {
        cell(state.x(k), state.x(k + 1), state.u[k], state.u[k + 1]);
    }
    cell(state.x(n - 1), state.h, state.u[n - 1], 0.0);
    acc
}

fn flux_rule() -> GaussLegendre {
    GaussLegendre::new(4)
}

/// `μ ∫_g^h K(h - x) u(x) dx`: the right front speed.
pub fn right_flux(state: &FrontState, kernel: &Kernel, mu: f64) -> f64 {
    right_flux_with(state, kernel, mu, &flux_rule())
}

/// `μ ∫_g^h ∫_{-∞}^{g} J(y - x) dy u(x) dx`: the (nonnegative) left front speed.
pub fn left_flux(state: &FrontState, kernel: &Kernel, mu: f64) -> f64 {
    left_flux_with(state, kernel, mu, &flux_rule())
}

fn right_flux_with(state: &FrontState, kernel: &Kernel, mu: f64, rule: &GaussLegendre) -> f64 {
    let h = state.h;
    let mut breaks: Vec<f64> = kernel.breakpoints().iter().map(|b| h - b).collect();
    breaks.reverse();
    let x_lo = match kernel.support() {
        Some((_, hi)) => h - hi,
        None => f64::NEG_INFINITY,
    };
    mu * weighted_integral(state, rule, &breaks, x_lo, f64::INFINITY, |x| kernel.tail(h - x))
}

fn left_flux_with(state: &FrontState, kernel: &Kernel, mu: f64, rule: &GaussLegendre) -> f64 {
    let g = state.g;
    let mut breaks: Vec<f64> = kernel.breakpoints().iter().map(|b| g - b).collect();
    breaks.reverse();
    let x_hi = match kernel.support() {
        Some((lo, _)) => g - lo,
        None => f64::INFINITY,
    };
    mu * weighted_integral(state, rule, &breaks, f64::NEG_INFINITY, x_hi, |x| kernel.cdf(g - x))
}

/// Offsets beyond which partial-cell corrections use the one-point centroid rule.
const FAR_OFFSET: i64 = 64;

/// Convolution, flux and reaction evaluation for one run.
pub struct Solver<'a> {
    cfg: &'a SimConfig,
    conv: ToeplitzConv,
    flux_rule: GaussLegendre,
    bound: f64,
    pub state: FrontState,
}

/// Rates of the current state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub right_flux: f64,
    pub left_flux: f64,
}

impl<'a> Solver<'a> {
    pub fn new(cfg: &'a SimConfig) -> Result<Self, FreeBoundaryError> {
        let state = FrontState::initial(cfg);
        Self::resume(cfg, state)
    }

    /// Continues from a saved state.
    pub fn resume(cfg: &'a SimConfig, state: FrontState) -> Result<Self, FreeBoundaryError> {
        cfg.validate().map_err(|e| FreeBoundaryError::InvalidConfig(e.join("; ")))?;
        if state.dx != cfg.dx {
            return Err(FreeBoundaryError::InvalidConfig(format!(
                "state spacing {} differs from config spacing {}",
                state.dx, cfg.dx
            )));
        }
        let bound = cfg.bound().max(state.sup());
        let product = cfg.dt * (cfg.d + cfg.reaction.lipschitz(bound));
        if product >= 1.0 {
            return Err(FreeBoundaryError::StabilityViolation { dt: cfg.dt, product });
        }
        Ok(Self {
            cfg,
            conv: ToeplitzConv::new(&cfg.kernel, cfg.dx),
            flux_rule: flux_rule(),
            bound,
            state,
        })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn rates(&self) -> Rates {
        Rates {
            right_flux: right_flux_with(&self.state, &self.cfg.kernel, self.cfg.mu, &self.flux_rule),
            left_flux: left_flux_with(&self.state, &self.cfg.kernel, self.cfg.mu, &self.flux_rule),
        }
    }

    /// `∫_g^h J(x_i - y) u(y) dy` at lattice targets `lo..lo+len`, which must
    /// cover the interior range of `st`.
    fn convolve(&mut self, st: &FrontState, lo: i64, len: usize) -> Vec<f64> {
        let kernel = &self.cfg.kernel;
        let n = st.u.len();
        let off = (st.first - lo) as usize;
        let mut src = vec![0.0; len];
        src[off..off + n].copy_from_slice(&st.u);
        let mut out = vec![0.0; len];
        self.conv.apply(kernel, &src, &mut out);

        let dx = st.dx;
        let a = st.first;
        let b = st.last();
        let wl = st.x(0) - st.g;
        let wr = st.h - st.x(n - 1);
        let (ua, ub) = (st.u[0], st.u[n - 1]);
        let w = &self.conv.weights;
        let rule = w.rule();
        let (m_lo, m_hi) = if w.is_bounded() {
            let (l, h) = w.window();
            (l - 1, h + 1)
        } else {
            (i64::MIN / 4, i64::MAX / 4)
        };
        let targets = lo..lo + len as i64;
        let mut correct = |node: i64, val: f64, width: f64, left: bool| {
            if val == 0.0 {
                return;
            }
            let i0 = targets.start.max(node + m_lo);
            let i1 = targets.end.min(node + m_hi + 1);
            for i in i0..i1 {
                let m = i - node;
                let r = m as f64 * dx;
                let (partial, full) = if left {
                    let p = if m.abs() > FAR_OFFSET {
                        0.5 * width * kernel.eval(r + width / 3.0)
                    } else {
                        left_half(kernel, rule, r, width)
                    };
                    (p, w.left(m))
                } else {
                    let p = if m.abs() > FAR_OFFSET {
                        0.5 * width * kernel.eval(r - width / 3.0)
                    } else {
                        right_half(kernel, rule, r, width)
                    };
                    (p, w.right(m))
                };
                out[(i - lo) as usize] += val * (partial - full);
            }
        };
        correct(a, ua, wl, true);
        correct(b, ub, wr, false);
        out
    }

    fn forcing(&self, u: f64, conv: f64) -> f64 {
        self.cfg.d * conv - self.cfg.d * u + self.cfg.reaction.eval(u)
    }

    /// Advances one step; returns the rates of the state before the step.
    ///
    /// A node covered during the step starts from `u = 0` at its covering
    /// time (front positions interpolated linearly within the step), so it
    /// carries the density accumulated over the covered fraction of `dt`.
    pub fn step(&mut self) -> Result<Rates, FreeBoundaryError> {
        let dt = self.cfg.dt;
        let old = self.state.clone();
        let rates = self.rates();
        let h_new = old.h + dt * rates.right_flux;
        let g_new = old.g - dt * rates.left_flux;
        let mut next = old.clone();
        next.regrid(g_new, h_new);
        let conv = self.convolve(&old, next.first, next.u.len());
        for (k, slot) in next.u.iter_mut().enumerate() {
            let j = next.first + k as i64;
            let u0 = old.at(j);
            let theta = covered_fraction(&old, g_new, h_new, j);
            *slot = u0 + theta * dt * self.forcing(u0, conv[k]);
        }
        if self.cfg.picard_iters > 0 {
            next = self.trapezoid(&old, rates, next);
        }
        for v in next.u.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        next.step = old.step + 1;
        next.t = next.step as f64 * dt;
        let sup = next.sup();
        if sup > self.bound * (1.0 + 1e-9) + 1e-12 {
            return Err(FreeBoundaryError::BlowUp {
                t: next.t,
                sup,
                bound: self.bound,
            });
        }
        self.state = next;
        Ok(rates)
    }

    /// Fixed-point sweeps of the trapezoidal step started from the Euler predictor.
    fn trapezoid(&mut self, old: &FrontState, old_rates: Rates, mut pred: FrontState) -> FrontState {
        let dt = self.cfg.dt;
        for _ in 0..self.cfg.picard_iters {
            let np = pred.u.len();
            let conv_old = self.convolve(old, pred.first, np);
            let conv_pred = self.convolve(&pred, pred.first, np);
            let rf = right_flux_with(&pred, &self.cfg.kernel, self.cfg.mu, &self.flux_rule);
            let lf = left_flux_with(&pred, &self.cfg.kernel, self.cfg.mu, &self.flux_rule);
            let h = old.h + 0.5 * dt * (old_rates.right_flux + rf);
            let g = old.g - 0.5 * dt * (old_rates.left_flux + lf);
            let mut u = vec![0.0; np];
            for (k, slot) in u.iter_mut().enumerate() {
                let j = pred.first + k as i64;
                let u0 = old.at(j);
                let theta = covered_fraction(old, pred.g, pred.h, j);
                *slot = u0 + 0.5 * theta * dt * (self.forcing(u0, conv_old[k]) + self.forcing(pred.u[k], conv_pred[k]));
            }
            pred.u = u;
            pred.regrid(g, h);
        }
        pred
    }
}

/// Fraction of the step during which lattice node `j` lies inside the domain:
/// 1 for nodes already covered, otherwise the time since the linearly
/// interpolated front passed it.
fn covered_fraction(old: &FrontState, g_new: f64, h_new: f64, j: i64) -> f64 {
    if j >= old.first && j <= old.last() {
        return 1.0;
    }
    let x = j as f64 * old.dx;
    let theta = if x >= old.h {
        (h_new - x) / (h_new - old.h)
    } else {
        (x - g_new) / (old.g - g_new)
    };
    theta.clamp(0.0, 1.0)
}

/// One recorded row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub t: f64,
    pub g: f64,
    pub h: f64,
    pub sup_u: f64,
    pub mass: f64,
    pub right_flux: f64,
    pub left_flux: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub rows: Vec<Row>,
}

pub const SERIES_HEADER: &str = "t,g,h,sup_u,mass,right_flux,left_flux";

impl TimeSeries {
    pub fn push_state(&mut self, st: &FrontState, rates: Rates) {
        self.rows.push(Row {
            t: st.t,
            g: st.g,
            h: st.h,
            sup_u: st.sup(),
            mass: st.mass(),
            right_flux: rates.right_flux,
            left_flux: rates.left_flux,
        });
    }

    pub fn last(&self) -> Option<&Row> {
        self.rows.last()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{SERIES_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t, r.g, r.h, r.sup_u, r.mass, r.right_flux, r.left_flux
            )?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, String> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == SERIES_HEADER => {}
            other => return Err(format!("expected header `{SERIES_HEADER}`, got {other:?}")),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| e.to_string())?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            let v = v.map_err(|e| format!("line {}: {e}", i + 2))?;
            if v.len() != 7 {
                return Err(format!("line {}: expected 7 columns, got {}", i + 2, v.len()));
            }
            rows.push(Row {
                t: v[0],
                g: v[1],
                h: v[2],
                sup_u: v[3],
                mass: v[4],
                right_flux: v[5],
                left_flux: v[6],
            });
        }
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Spreading,
    Vanishing,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub eps_vanish: f64,
    /// Margin above ℓ* as a fraction of ℓ*.
    pub margin_frac: f64,
    /// Relative length growth below which the fronts count as stalled.
    pub stall_rel: f64,
    /// Trailing fraction of the horizon used for the stall test.
    pub trailing_frac: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            eps_vanish: 1e-4,
            margin_frac: 0.05,
            stall_rel: 1e-6,
            trailing_frac: 0.1,
        }
    }
}

/// Spreading once `h - g` exceeds `ℓ*` plus the margin; vanishing when the
/// density is below `ε_vanish`, the length has stalled over the trailing part
/// of the horizon and stays within `ℓ*` plus the margin.
pub fn classify_outcome(series: &TimeSeries, ell_star: f64, th: &Thresholds) -> Outcome {
    let Some(last) = series.last() else {
        return Outcome::Undecided;
    };
    let margin = th.margin_frac * ell_star;
    let len = last.h - last.g;
    if len > ell_star + margin {
        return Outcome::Spreading;
    }
    if last.sup_u < th.eps_vanish && last.t > 0.0 {
        let t_from = last.t * (1.0 - th.trailing_frac);
        let k = series.rows.partition_point(|r| r.t < t_from);
        let early = &series.rows[k.min(series.rows.len() - 1)];
        let growth = (len - (early.h - early.g)) / len;
        if early.t < last.t && growth < th.stall_rel {
            return Outcome::Vanishing;
        }
    }
    Outcome::Undecided
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: TimeSeries,
    pub state: FrontState,
    pub outcome: Option<Outcome>,
}

/// Integrates from the initial data to `t_max` or until the stop rule fires.
pub fn run(cfg: &SimConfig) -> Result<RunOutput, FreeBoundaryError> {
    let solver = Solver::new(cfg)?;
    drive(solver, TimeSeries::default())
}

/// Continues a run from a saved state, appending to `series`.
pub fn run_from(cfg: &SimConfig, state: FrontState, mut series: TimeSeries) -> Result<RunOutput, FreeBoundaryError> {
    // an off-cadence final row belongs to the interrupted run only
    if !state.step.is_multiple_of(cfg.record_every.max(1) as u64) && series.last().is_some_and(|r| r.t == state.t) {
        series.rows.pop();
    }
    let solver = Solver::resume(cfg, state)?;
    drive(solver, series)
}

fn drive(mut solver: Solver<'_>, mut series: TimeSeries) -> Result<RunOutput, FreeBoundaryError> {
    let cfg = solver.cfg;
    let total = (cfg.t_max / cfg.dt).round() as u64;
    let stop = cfg.stop;
    let decide = |series: &TimeSeries| -> Option<Outcome> {
        let ell = stop.classify_with_ell_star?;
        match classify_outcome(series, ell, &stop.thresholds) {
            Outcome::Undecided => None,
            o => Some(o),
        }
    };
    let long_enough = |st: &FrontState| stop.max_length.is_some_and(|m| st.h - st.g >= m);
    let mut outcome = None;
    let every = cfg.record_every as u64;
    let mut recorded_last = false;
    if series.is_empty() {
        let rates = solver.rates();
        series.push_state(&solver.state, rates);
        recorded_last = true;
        outcome = decide(&series);
    }
    while outcome.is_none() && solver.state.step < total && !long_enough(&solver.state) {
        solver.step()?;
        recorded_last = false;
        if solver.state.step.is_multiple_of(every) {
            let rates = solver.rates();
            series.push_state(&solver.state, rates);
            recorded_last = true;
            outcome = decide(&series);
        }
    }
    if !recorded_last {
        let rates = solver.rates();
        series.push_state(&solver.state, rates);
        outcome = outcome.or_else(|| decide(&series));
    }
    if outcome.is_none() && stop.classify_with_ell_star.is_some() {
        outcome = Some(Outcome::Undecided);
    }
    Ok(RunOutput {
        series,
        state: solver.state,
        outcome,
    })
}

/// Runs `cfg` with classification enabled and returns the outcome.
pub fn classify_run(cfg: &SimConfig, ell_star: f64, th: Thresholds) -> Result<(Outcome, RunOutput), FreeBoundaryError> {
    let mut c = cfg.clone();
    c.stop.classify_with_ell_star = Some(ell_star);
    c.stop.thresholds = th;
    let out = run(&c)?;
    Ok((out.outcome.unwrap_or(Outcome::Undecided), out))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MuStar {
    pub mu_star: f64,
    /// Final bracket `(vanishing μ, spreading μ)`.
    pub bracket: (f64, f64),
    pub history: Vec<(f64, Outcome)>,
}

/// Critical expansion coefficient by bisection on the classified outcome.
///
/// `template.mu` is ignored; its `dt` is kept, so it must respect the
/// monotone bound at the upper bracket end.
pub fn mu_star(
    template: &SimConfig,
    bracket: (f64, f64),
    tol: f64,
    ell_star: f64,
    th: Thresholds,
) -> Result<MuStar, FreeBoundaryError> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi.is_finite()) {
        return Err(FreeBoundaryError::InvalidConfig(format!("μ bracket ({lo}, {hi}) must be positive")));
    }
    if lo >= hi {
        return Err(FreeBoundaryError::BracketInvalid {
            lo,
            hi,
            outcome: Outcome::Undecided,
        });
    }
    let probe = |mu: f64| -> Result<Outcome, FreeBoundaryError> {
        let mut c = template.clone();
        c.mu = mu;
        let (o, _) = classify_run(&c, ell_star, th)?;
        if o == Outcome::Undecided {
            return Err(FreeBoundaryError::UndecidedBudget { mu, t_max: c.t_max });
        }
        Ok(o)
    };
    let (a, b) = rayon::join(|| probe(lo), || probe(hi));
    let (oa, ob) = (a?, b?);
    if oa == ob || oa != Outcome::Vanishing {
        return Err(FreeBoundaryError::BracketInvalid {
            lo,
            hi,
            outcome: if oa == ob { oa } else { Outcome::Spreading },
        });
    }
    let mut history = vec![(lo, oa), (hi, ob)];
    while hi - lo > tol * 0.5 * (lo + hi) {
        let mid = 0.5 * (lo + hi);
        let o = probe(mid)?;
        history.push((mid, o));
        if o == Outcome::Vanishing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(MuStar {
        mu_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        history,
    })
}
