//! The truncated nonlocal operator on a fixed interval.
//!
//! `𝓛φ(x) = d ∫_{l₁}^{l₂} J(x-y) φ(y) dy - dφ + c φ' + f'(0) φ` is discretized
//! on a cell-centred grid. Cell weights are exact integrals of `J` (differences
//! of the tail function), so constants are integrated exactly; the drift is
//! upwinded so every off-diagonal entry stays nonnegative.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{Kernel, Side};
use crate::reactions::Reaction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FixedDomainError {
    #[error("empty interval ({0}, {1})")]
    IntervalEmpty(f64, f64),
    #[error("need at least 8 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("principal eigenvalue did not converge in {0} iterations")]
    NoConvergence(usize),
    #[error("critical length bracket failed: {0}")]
    BracketFailure(String),
    #[error("time step {dt} violates the monotone bound dt·(d + Lip f) < 1 (= {product})")]
    StabilityViolation { dt: f64, product: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// `(-l, l)`.
    pub fn symmetric(l: f64) -> Self {
        Self { lo: -l, hi: l }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Dense discretization of `𝓛^c_Ω` (row-major).
#[derive(Debug, Clone)]
pub struct OperatorDisc {
    pub interval: Interval,
    pub n: usize,
    pub nodes: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub d: f64,
    pub drift: f64,
    pub f0: f64,
}

impl OperatorDisc {
    pub fn spacing(&self) -> f64 {
        self.interval.length() / self.n as f64
    }

    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let v = &self.matrix * DVector::from_column_slice(phi);
        v.as_slice().to_vec()
    }
}

/// `∫_{a}^{b} J(x - y) dy` written as a tail-function difference without cancellation.
fn cell_mass(kernel: &Kernel, x: f64, a: f64, b: f64) -> f64 {
    let s1 = x - b;
    let s2 = x - a;
    if s2 <= 0.0 {
        kernel.cdf(s2) - kernel.cdf(s1)
    } else {
        kernel.tail(s1) - kernel.tail(s2)
    }
}

/// Assembles the operator on `interval` with `n` cell-centred nodes.
pub fn assemble(
    kernel: &Kernel,
    d: f64,
    drift: f64,
    f0: f64,
    interval: Interval,
    n: usize,
) -> Result<OperatorDisc, FixedDomainError> {
    if !(interval.hi > interval.lo) {
        return Err(FixedDomainError::IntervalEmpty(interval.lo, interval.hi));
    }
    if n < 8 {
        return Err(FixedDomainError::TooFewNodes(n));
    }
    let h = interval.length() / n as f64;
    let edges: Vec<f64> = (0..=n).map(|j| interval.lo + j as f64 * h).collect();
    let nodes: Vec<f64> = (0..n).map(|j| interval.lo + (j as f64 + 0.5) * h).collect();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = d * cell_mass(kernel, nodes[i], edges[j], edges[j + 1]);
        }
        m[(i, i)] += f0 - d;
        if drift > 0.0 {
            m[(i, i)] -= drift / h;
            if i + 1 < n {
                m[(i, i + 1)] += drift / h;
            }
        } else if drift < 0.0 {
            m[(i, i)] += drift / h;
            if i > 0 {
                m[(i, i - 1)] -= drift / h;
            }
        }
    }
    Ok(OperatorDisc {
        interval,
        n,
        nodes,
        matrix: m,
        d,
        drift,
        f0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenResult {
    pub interval: Interval,
    pub n: usize,
    pub lambda_p: f64,
    /// Positive eigenfunction, sup-normalized.
    pub eigenfunction: Vec<f64>,
    pub iterations: usize,
    /// `‖𝓛φ - λφ‖_∞` with `‖φ‖_∞ = 1`.
    pub residual: f64,
}

/// Collatz–Wielandt bounds `min/max (Bx)_i/x_i` of a positive vector.
fn cw_bounds(bx: &DVector<f64>, x: &DVector<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (a, b) in bx.iter().zip(x.iter()) {
        let r = a / b;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    (lo, hi)
}

fn normalize_sup(x: &mut DVector<f64>) {
    let m = x.iter().cloned().fold(0.0, f64::max);
    *x /= m;
}

/// Principal eigenvalue by shifted power iteration on `B = 𝓛 + sI`, which is
/// entrywise nonnegative and irreducible.
///
/// The Collatz–Wielandt quotients bracket `ρ(B)` at every step. When plain
/// power iteration stalls (small spectral gap on long intervals), the
/// iteration switches to the nonnegative resolvent `(σ - B)^{-1}` with `σ`
/// above the current upper bound, which has the same Perron vector.
pub fn principal_eigenvalue(
    op: &OperatorDisc,
    tol: f64,
    max_iter: usize,
) -> Result<EigenResult, FixedDomainError> {
    let n = op.n;
    let shift = op.d + op.f0.abs() + op.drift.abs() * n as f64 / op.interval.length();
    let mut b = op.matrix.clone();
    for i in 0..n {
        b[(i, i)] += shift;
    }
    let mut x = DVector::<f64>::from_element(n, 1.0);
    let mut iterations = 0;
    let scale = |v: f64| tol * v.abs().max(1.0);
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let plain = max_iter.min(300);
    while iterations < plain {
        let bx = &b * &x;
        let (l, h) = cw_bounds(&bx, &x);
        lo = l;
        hi = h;
        iterations += 1;
        x = bx;
        normalize_sup(&mut x);
        if hi - lo <= scale(hi - shift) {
            break;
        }
    }
    if hi - lo > scale(hi - shift) {
        let mut factor: Option<(f64, nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)> = None;
        while iterations < max_iter {
            let need = match &factor {
                None => true,
                Some((sigma, _)) => (sigma - hi) > 50.0 * (hi - lo),
            };
            if need {
                let sigma = hi + 0.05 * (hi - lo) + 1e-13 * hi.abs().max(1.0);
                let mut s = -b.clone();
                for i in 0..n {
                    s[(i, i)] += sigma;
                }
                factor = Some((sigma, s.lu()));
            }
            let (_, lu) = factor.as_ref().unwrap();
            let mut y = match lu.solve(&x) {
                Some(y) => y,
                None => return Err(FixedDomainError::NoConvergence(iterations)),
            };
            if y.iter().any(|v| !(*v > 0.0)) {
                // loss of positivity means σ sat on the spectrum; back off
                factor = None;
                hi += (hi - lo).max(1e-12);
                iterations += 1;
                continue;
            }
            normalize_sup(&mut y);
            x = y;
            let bx = &b * &x;
            let (l, h) = cw_bounds(&bx, &x);
            lo = lo.max(l);
            hi = hi.min(h);
            iterations += 1;
            if hi - lo <= scale(hi - shift) {
                break;
            }
        }
    }
    if hi - lo > scale(hi - shift) {
        return Err(FixedDomainError::NoConvergence(max_iter));
    }
    let bx = &b * &x;
    let rayleigh = bx.dot(&x) / x.dot(&x);
    let lambda = rayleigh.clamp(lo, hi) - shift;
    let lx = &op.matrix * &x;
    let residual = lx
        .iter()
        .zip(x.iter())
        .map(|(a, v)| (a - lambda * v).abs())
        .fold(0.0, f64::max);
    Ok(EigenResult {
        interval: op.interval,
        n,
        lambda_p: lambda,
        eigenfunction: x.as_slice().to_vec(),
        iterations,
        residual,
    })
}

/// Default tolerance for one eigenvalue evaluation.
pub const EIGEN_TOL: f64 = 1e-10;

/// `λ_p(𝓛⁰)` on `interval` with `n` nodes.
pub fn lambda_p(
    kernel: &Kernel,
    d: f64,
    f0: f64,
    interval: Interval,
    n: usize,
) -> Result<EigenResult, FixedDomainError> {
    let op = assemble(kernel, d, 0.0, f0, interval, n)?;
    principal_eigenvalue(&op, EIGEN_TOL, 200_000)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllStarOptions {
    /// Nodes per eigenvalue solve.
    pub n: usize,
    /// Absolute tolerance on ℓ*.
    pub tol: f64,
}

impl Default for EllStarOptions {
    fn default() -> Self {
        Self { n: 400, tol: 1e-4 }
    }
}

/// Critical length `ℓ* = 2 l*` with `λ_p(𝓛⁰_{(-l*, l*)}) = 0`; zero when `d ≤ f'(0)`.
pub fn ell_star(kernel: &Kernel, d: f64, f0: f64, opts: EllStarOptions) -> Result<f64, FixedDomainError> {
    if !(d > 0.0 && f0 > 0.0) {
        return Err(FixedDomainError::InvalidInput(format!("need d > 0 and f'(0) > 0, got d={d}, f0={f0}")));
    }
    if d <= f0 {
        return Ok(0.0);
    }
    let right = kernel.c_star(d, f0, Side::Right).speed;
    let left = kernel.c_star(d, f0, Side::Left).speed;
    if !(left < 0.0 && right > 0.0) {
        return Err(FixedDomainError::BracketFailure(format!(
            "kernel is not weakly non-symmetric (c-* = {left}, c+* = {right})"
        )));
    }
    let lam = |l: f64| lambda_p(kernel, d, f0, Interval::symmetric(l), opts.n).map(|r| r.lambda_p);
    let mut hi = kernel.core_width().max(1e-3);
    let mut tries = 0;
    while lam(hi)? <= 0.0 {
        hi *= 2.0;
        tries += 1;
        if tries > 30 {
            return Err(FixedDomainError::BracketFailure(format!(
                "λ_p stays ≤ 0 up to half-length {hi}"
            )));
        }
    }
    let mut lo = hi / 2.0;
    while lam(lo)? > 0.0 {
        hi = lo;
        lo /= 2.0;
        if lo < 1e-9 {
            return Err(FixedDomainError::BracketFailure("λ_p > 0 on vanishing intervals".into()));
        }
    }
    while 2.0 * (hi - lo) > 0.5 * opts.tol {
        let mid = 0.5 * (lo + hi);
        if lam(mid)? > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo + hi)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub nodes: Vec<f64>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

/// Explicit time stepping of `V_t = d∫J V - dV + f(V)` on a fixed interval;
/// `u0` holds cell-centred samples.
#[allow(clippy::too_many_arguments)]
pub fn evolve_fixed(
    kernel: &Kernel,
    reaction: &Reaction,
    d: f64,
    interval: Interval,
    u0: &[f64],
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory, FixedDomainError> {
    if u0.iter().any(|v| !(*v >= 0.0)) || u0.iter().all(|v| *v == 0.0) {
        return Err(FixedDomainError::InvalidInput("u0 must be nonnegative and not identically 0".into()));
    }
    let bound = u0.iter().cloned().fold(reaction.k0(), f64::max);
    let product = dt * (d + reaction.lipschitz(bound));
    if !(dt > 0.0) || product >= 1.0 {
        return Err(FixedDomainError::StabilityViolation { dt, product });
    }
    let op = assemble(kernel, d, 0.0, 0.0, interval, u0.len())?;
    let steps = (t_end / dt).round() as usize;
    let every = record_every.max(1);
    let mut v = DVector::from_column_slice(u0);
    let mut traj = Trajectory {
        nodes: op.nodes.clone(),
        times: vec![0.0],
        states: vec![u0.to_vec()],
    };
    for step in 1..=steps {
        let lv = &op.matrix * &v;
        for (vi, li) in v.iter_mut().zip(lv.iter()) {
            *vi = (*vi + dt * (li + reaction.eval(*vi))).max(0.0);
        }
        if step % every == 0 || step == steps {
            traj.times.push(step as f64 * dt);
            traj.states.push(v.as_slice().to_vec());
        }
    }
    Ok(traj)
}

/// Positive steady state `V_l` by time marching to `T = 500/|λ_p|` (capped).
pub fn steady_state(
    kernel: &Kernel,
    reaction: &Reaction,
    d: f64,
    interval: Interval,
    n: usize,
    dt: f64,
) -> Result<Vec<f64>, FixedDomainError> {
    let lam = lambda_p(kernel, d, reaction.f0(), interval, n)?.lambda_p;
    let t_end = (500.0 / lam.abs().max(1e-3)).min(5e4);
    let u0 = vec![1.0; n];
    let traj = evolve_fixed(kernel, reaction, d, interval, &u0, t_end, dt, usize::MAX)?;
    Ok(traj.last().to_vec())
}

/// One row of an eigenvalue sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l: f64,
    pub n: usize,
    pub lambda_p: f64,
    pub residual: f64,
    pub iterations: usize,
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "l,n,lambda_p,residual,iterations")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.l, r.n, r.lambda_p, r.residual, r.iterations)?;
    }
    Ok(())
}
