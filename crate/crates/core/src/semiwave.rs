//! Semi-wave profiles, the semi-wave/traveling-wave trichotomy and the
//! free-boundary speed `c₀`.
//!
//! The perturbed problem with floor `δ` (φ ≡ δ on `[0, ∞)`, φ(-∞) = 1) is solved
//! on `[-X, 0]` with the closure φ ≡ 1 beyond `-X`, by the monotone iteration
//!
//! ```text
//! P[Γ](x) = e^{Mx} δ + (1/c) ∫_x^0 e^{-M(ξ-x)} [d J∗Γ(ξ) + σ̃(Γ(ξ))] dξ,
//! σ̃(v) = f(v) + cMv - dv.
//! ```
//!
//! Letting `δ → 0` either pins the half-level anchor (a semi-wave) or pushes it
//! to `-∞` (a traveling wave).

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{Kernel, Side};
use crate::lattice::ToeplitzConv;
use crate::quad::GaussLegendre;
use crate::reactions::Reaction;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemiwaveError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("P-iteration did not converge in {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("truncation depth {depth} too shallow: φ(-X) = {phi_left}")]
    TruncationTooShallow { depth: f64, phi_left: f64 },
    #[error("half-level anchors {anchors:?} neither settle nor clear -X/2 = {half_depth}")]
    Inconclusive { anchors: Vec<f64>, half_depth: f64 },
    #[error("flux integral diverges: the kernel has no finite first moment on the {0:?} side")]
    DivergentFlux(Side),
    #[error("speed bracket failed: {0}")]
    BracketFailure(String),
}

/// Converged solution of the perturbed problem on the nodes `-X + i·h`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbedProfile {
    pub c: f64,
    pub delta: f64,
    pub m_const: f64,
    pub x_depth: f64,
    pub spacing: f64,
    pub phi: Vec<f64>,
    pub iterations: usize,
    pub sup_change: f64,
    /// Largest decrease of any node between consecutive iterates (0 for a
    /// monotone ascent).
    pub max_descent: f64,
}

impl PerturbedProfile {
    pub fn x(&self, i: usize) -> f64 {
        -self.x_depth + i as f64 * self.spacing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveKind {
    SemiWave,
    TravelingWave,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveProfile {
    pub kind: WaveKind,
    pub c: f64,
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    /// Largest x with φ = 1/2 before any shift.
    pub front_anchor: f64,
    /// Anchors along the δ sequence.
    pub anchors: Vec<f64>,
    /// Smallest floor used.
    pub delta: f64,
    pub x_depth: f64,
}

impl WaveProfile {
    pub fn spacing(&self) -> f64 {
        self.x[1] - self.x[0]
    }

    /// `∫_{-∞}^0 J(-y) φ(y) dy` with the closure φ ≡ 1 left of the grid.
    pub fn inflow(&self, kernel: &Kernel) -> f64 {
        let rule = GaussLegendre::new(6);
        let breaks: Vec<f64> = kernel.breakpoints().iter().rev().map(|b| -b).collect();
        let mut acc = kernel.tail(-self.x[0]);
        for k in 0..self.x.len() - 1 {
            let (a, b) = (self.x[k], self.x[k + 1]);
            if b > 0.0 {
                break;
            }
            let (pa, pb) = (self.phi[k], self.phi[k + 1]);
            acc += rule.integrate_split(a, b, &breaks, |y| kernel.eval(-y) * (pa + (pb - pa) * (y - a) / (b - a)));
        }
        acc
    }

    /// `φ'(0⁻)` by the one-sided second-order difference.
    pub fn slope_at_zero(&self) -> f64 {
        let n = self.phi.len() - 1;
        let h = self.spacing();
        (3.0 * self.phi[n] - 4.0 * self.phi[n - 1] + self.phi[n - 2]) / (2.0 * h)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "x,phi")?;
        for (x, p) in self.x.iter().zip(&self.phi) {
            writeln!(w, "{x:e},{p:e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveOptions {
    /// Initial truncation depth `X`.
    pub x_depth: f64,
    /// Largest depth reached by automatic growth.
    pub max_depth: f64,
    pub spacing: f64,
    /// Decreasing floors.
    pub deltas: Vec<f64>,
    /// Sup-norm change at which the P-iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Required closeness of φ(-X) to 1 (times 10).
    pub profile_tol: f64,
    /// Anchor movement below which the anchors count as settled.
    pub anchor_tol: f64,
}

impl WaveOptions {
    pub fn for_kernel(kernel: &Kernel) -> Self {
        Self {
            x_depth: 20.0 * kernel.core_width(),
            max_depth: 2560.0 * kernel.core_width(),
            spacing: kernel.core_width() / 50.0,
            deltas: vec![1e-3, 1e-4, 1e-5, 1e-6],
            tol: 1e-12,
            max_iter: 200_000,
            profile_tol: 1e-5,
            anchor_tol: 1e-2 * kernel.core_width(),
        }
    }
}

/// `M` for which `σ̃` is nondecreasing on `[0, 2]`, with a 0.1 margin.
pub fn m_const(c: f64, d: f64, reaction: &Reaction) -> f64 {
    (d + reaction.lipschitz(2.0)) / c + 0.1
}

/// `∫ J(x_i - y) φ(y) dy` at every grid node for the piecewise-linear `φ`
/// on `[x_0, x_n]`, closed by the constants `left` and `right` outside.
fn closed_convolution(
    conv: &mut ToeplitzConv,
    kernel: &Kernel,
    x0: f64,
    h: f64,
    phi: &[f64],
    left: f64,
    right: f64,
) -> Vec<f64> {
    let n = phi.len();
    let mut out = vec![0.0; n];
    conv.apply(kernel, phi, &mut out);
    let w = &conv.weights;
    let last = (n - 1) as i64;
    let xn = x0 + last as f64 * h;
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as i64;
        let x = x0 + i as f64 * h;
        *o += -phi[0] * w.left(i) - phi[n - 1] * w.right(i - last);
        *o += left * kernel.tail(x - x0) + right * kernel.cdf(x - xn);
    }
    out
}

/// Solves the perturbed problem by the monotone iteration from `Γ₀ ≡ δ`.
#[allow(clippy::too_many_arguments)]
pub fn iterate_p(
    c: f64,
    delta: f64,
    kernel: &Kernel,
    reaction: &Reaction,
    d: f64,
    x_depth: f64,
    n: usize,
    tol: f64,
    max_iter: usize,
) -> Result<PerturbedProfile, SemiwaveError> {
    iterate_p_with(c, delta, kernel, reaction, d, x_depth, n, tol, max_iter, |_| {})
}

/// As [`iterate_p`], handing every iterate to `observe`.
#[allow(clippy::too_many_arguments)]
pub fn iterate_p_with<F: FnMut(&[f64])>(
    c: f64,
    delta: f64,
    kernel: &Kernel,
    reaction: &Reaction,
    d: f64,
    x_depth: f64,
    n: usize,
    tol: f64,
    max_iter: usize,
    mut observe: F,
) -> Result<PerturbedProfile, SemiwaveError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(SemiwaveError::InvalidInput(format!("speed must be finite and > 0, got {c}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SemiwaveError::InvalidInput(format!("δ must lie in (0, 1), got {delta}")));
    }
    if !(x_depth > 0.0) || n < 8 {
        return Err(SemiwaveError::InvalidInput(format!("need X > 0 and n ≥ 8, got X={x_depth}, n={n}")));
    }
    let h = x_depth / n as f64;
    let m = m_const(c, d, reaction);
    let a = m * h;
    let decay = (-a).exp();
    // exact weights of ∫_0^h e^{-Ms} (linear g) ds
    let w_near = (a + (-a).exp_m1()) / (m * a);
    let w_far = (-(-a).exp_m1() - a * decay) / (m * a);
    let x0 = -x_depth;
    let lift: Vec<f64> = (0..=n).map(|i| (m * (x0 + i as f64 * h)).exp() * delta).collect();
    let sigma = |v: f64| reaction.eval(v) + c * m * v - d * v;

    let mut conv = ToeplitzConv::new(kernel, h);
    let mut phi = vec![delta; n + 1];
    let mut g = vec![0.0; n + 1];
    let mut next = vec![0.0; n + 1];
    let mut max_descent: f64 = 0.0;
    let mut change = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        let cv = closed_convolution(&mut conv, kernel, x0, h, &phi, 1.0, delta);
        for i in 0..=n {
            g[i] = d * cv[i] + sigma(phi[i]);
        }
        next[n] = delta;
        let mut running = 0.0;
        for i in (0..n).rev() {
            running = decay * running + w_near * g[i] + w_far * g[i + 1];
            next[i] = lift[i] + running / c;
        }
        change = 0.0;
        for (p, q) in phi.iter().zip(&next) {
            change = change.max((q - p).abs());
            max_descent = max_descent.max(p - q);
        }
        std::mem::swap(&mut phi, &mut next);
        iterations += 1;
        observe(&phi);
        if change < tol {
            break;
        }
    }
    if change >= tol {
        return Err(SemiwaveError::NoConvergence { iterations, change });
    }
    Ok(PerturbedProfile {
        c,
        delta,
        m_const: m,
        x_depth,
        spacing: h,
        phi,
        iterations,
        sup_change: change,
        max_descent,
    })
}

/// Largest x where the piecewise-linear `phi` crosses `level`.
fn anchor(x0: f64, h: f64, phi: &[f64], level: f64) -> f64 {
    for i in (0..phi.len() - 1).rev() {
        if phi[i] >= level && phi[i + 1] < level {
            let t = (phi[i] - level) / (phi[i] - phi[i + 1]);
            return x0 + (i as f64 + t) * h;
        }
    }
    if phi[0] < level {
        x0
    } else {
        x0 + (phi.len() - 1) as f64 * h
    }
}

/// Solves for one floor, doubling `X` until `φ(-X)` is close enough to 1.
fn solve_floor(
    c: f64,
    delta: f64,
    kernel: &Kernel,
    reaction: &Reaction,
    d: f64,
    opts: &WaveOptions,
    depth: &mut f64,
) -> Result<PerturbedProfile, SemiwaveError> {
    loop {
        let n = (*depth / opts.spacing).round() as usize;
        let p = iterate_p(c, delta, kernel, reaction, d, *depth, n, opts.tol, opts.max_iter)?;
        if p.phi[0] >= 1.0 - 10.0 * opts.profile_tol {
            return Ok(p);
        }
        if 2.0 * *depth > opts.max_depth {
            return Err(SemiwaveError::TruncationTooShallow {
                depth: *depth,
                phi_left: p.phi[0],
            });
        }
        *depth *= 2.0;
    }
}

/// Runs the floor sequence and classifies the limit as a semi-wave or a
/// traveling wave.
///
/// Anchors that settle (move less than `anchor_tol` between the last two
/// floors) give a semi-wave, returned as `(φ_δ - δ)/(1 - δ)` so that φ(0) = 0.
/// Anchors beyond `-X/2`, or anchors still moving by a non-shrinking amount
/// per floor (the logarithmic drift of a traveling wave), give a traveling
/// wave shifted to φ(0) = 1/2.
pub fn extract_wave(
    c: f64,
    kernel: &Kernel,
    reaction: &Reaction,
    d: f64,
    opts: &WaveOptions,
) -> Result<WaveProfile, SemiwaveError> {
    if opts.deltas.len() < 2 || opts.deltas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(SemiwaveError::InvalidInput("need a strictly decreasing δ sequence of length ≥ 2".into()));
    }
    let mut depth = opts.x_depth;
    let mut profiles = Vec::new();
    for &delta in &opts.deltas {
        let p = solve_floor(c, delta, kernel, reaction, d, opts, &mut depth)?;
        profiles.push(p);
    }
    // depth may have grown: redo shallower solves so anchors are comparable
    for p in profiles.iter_mut() {
        if p.x_depth != depth {
            *p = solve_floor(c, p.delta, kernel, reaction, d, opts, &mut depth)?;
        }
    }
    let anchors: Vec<f64> = profiles
        .iter()
        .map(|p| {
            let psi: Vec<f64> = p.phi.iter().map(|v| (v - p.delta) / (1.0 - p.delta)).collect();
            anchor(-p.x_depth, p.spacing, &psi, 0.5)
        })
        .collect();
    let k = anchors.len();
    let last = anchors[k - 1];
    let step_last = (anchors[k - 1] - anchors[k - 2]).abs();
    let half = -0.5 * depth;
    let p = profiles.pop().unwrap();
    let xs: Vec<f64> = (0..p.phi.len()).map(|i| p.x(i)).collect();
    let settled = step_last < opts.anchor_tol;
    let drifting = k >= 3 && {
        let step_prev = (anchors[k - 2] - anchors[k - 3]).abs();
        step_last >= opts.anchor_tol && step_last > 0.5 * step_prev && anchors[k - 1] < anchors[k - 2]
    };
    if settled && last > half {
        let psi = p.phi.iter().map(|v| ((v - p.delta) / (1.0 - p.delta)).max(0.0)).collect();
        return Ok(WaveProfile {
            kind: WaveKind::SemiWave,
            c,
            x: xs,
            phi: psi,
            front_anchor: last,
            anchors,
            delta: p.delta,
            x_depth: depth,
        });
    }
    if last < half || drifting {
        return Ok(WaveProfile {
            kind: WaveKind::TravelingWave,
            c,
            x: xs.iter().map(|x| x - last).collect(),
            phi: p.phi,
            front_anchor: last,
            anchors,
            delta: p.delta,
            x_depth: depth,
        });
    }
    Err(SemiwaveError::Inconclusive {
        anchors,
        half_depth: half,
    })
}

/// `M(c) = μ ∫_{-∞}^0 K(-x) φ(x) dx` with φ ≡ 1 left of the grid.
pub fn m_of_c(profile: &WaveProfile, kernel: &Kernel, mu: f64) -> Result<f64, SemiwaveError> {
    if profile.kind != WaveKind::SemiWave {
        return Err(SemiwaveError::InvalidInput("M(c) needs a semi-wave profile".into()));
    }
    let Some(tail) = kernel.tail_integral(-profile.x[0]) else {
        return Err(SemiwaveError::DivergentFlux(Side::Right));
    };
    let rule = GaussLegendre::new(6);
    let breaks: Vec<f64> = kernel.breakpoints().iter().rev().map(|b| -b).collect();
    let reach = kernel.support().map(|(_, hi)| -hi).unwrap_or(f64::NEG_INFINITY);
    let mut acc = 0.0;
    for k in 0..profile.x.len() - 1 {
        let (a, b) = (profile.x[k], profile.x[k + 1]);
        if b <= reach {
            continue;
        }
        let (pa, pb) = (profile.phi[k], profile.phi[k + 1]);
        let len = b - a;
        let lo = breaks.partition_point(|&p| p <= a);
        let hi = breaks.partition_point(|&p| p < b);
        acc += rule.integrate_split(a, b, &breaks[lo..hi], |x| kernel.tail(-x) * (pa + (pb - pa) * (x - a) / len));
    }
    Ok(mu * (acc + tail))
}

/// Residual `sup |d J∗φ - dφ + cφ' + f(φ)|` over interior nodes, with φ
/// closed by 1 on the left and by its last value on the right.
pub fn residual(profile: &WaveProfile, kernel: &Kernel, reaction: &Reaction, d: f64) -> f64 {
    let n = profile.phi.len();
    let h = profile.spacing();
    let mut conv = ToeplitzConv::new(kernel, h);
    let right = profile.phi[n - 1];
    let cv = closed_convolution(&mut conv, kernel, profile.x[0], h, &profile.phi, 1.0, right);
    let mut worst: f64 = 0.0;
    for (w, c) in profile.phi.windows(3).zip(&cv[1..]) {
        let p = w[1];
        let dp = (w[2] - w[0]) / (2.0 * h);
        let r = d * c - d * p + profile.c * dp + reaction.eval(p);
        worst = worst.max(r.abs());
    }
    worst
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedSolve {
    pub c0: f64,
    pub m_c0: f64,
    pub residual: f64,
    /// `(c, P(c))` for every probe.
    pub bracket_trace: Vec<(f64, f64)>,
}

impl SpeedSolve {
    pub fn write_record<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "c0 = {:.12e}", self.c0)?;
        writeln!(w, "m_c0 = {:.12e}", self.m_c0)?;
        writeln!(w, "residual = {:.3e}", self.residual)?;
        writeln!(w, "# c, P(c)")?;
        for (c, p) in &self.bracket_trace {
            writeln!(w, "{c:.12e}, {p:.6e}")?;
        }
        Ok(())
    }
}

/// `P(c) = c - M(c)`; a traveling-wave regime counts as `M = 0`.
fn p_of_c(
    c: f64,
    kernel: &Kernel,
    reaction: &Reaction,
    d: f64,
    mu: f64,
    opts: &WaveOptions,
) -> Result<f64, SemiwaveError> {
    let w = extract_wave(c, kernel, reaction, d, opts)?;
    match w.kind {
        WaveKind::SemiWave => Ok(c - m_of_c(&w, kernel, mu)?),
        WaveKind::TravelingWave => Ok(c),
    }
}

/// Root `c₀` of `c = M(c)` for the right front, by bisection.
pub fn find_c0(
    kernel: &Kernel,
    reaction: &Reaction,
    d: f64,
    mu: f64,
    tol: f64,
    opts: &WaveOptions,
) -> Result<SpeedSolve, SemiwaveError> {
    if !kernel.tail_class().j1_plus {
        return Err(SemiwaveError::DivergentFlux(Side::Right));
    }
    let cstar = kernel.c_star(d, reaction.f0(), Side::Right).speed;
    if !(cstar > 0.0) {
        return Err(SemiwaveError::BracketFailure(format!("c+* = {cstar} is not positive")));
    }
    let moment = kernel.first_moment_plus().unwrap_or(f64::INFINITY);
    let mut trace = Vec::new();
    // P(c) > 0 once c ≥ μ·∫_0^∞ K ≥ M(c)
    let mut hi = (mu * moment).min(0.95 * cstar);
    let (p_lo, p_hi) = rayon::join(
        || p_of_c(1e-3, kernel, reaction, d, mu, opts),
        || p_of_c(hi, kernel, reaction, d, mu, opts),
    );
    let (p_lo, mut p_hi) = (p_lo?, p_hi?);
    trace.push((1e-3, p_lo));
    trace.push((hi, p_hi));
    if p_lo >= 0.0 {
        return Err(SemiwaveError::BracketFailure(format!("P(1e-3) = {p_lo} is not negative")));
    }
    let mut tries = 0;
    while p_hi <= 0.0 {
        hi = 0.5 * (hi + cstar);
        p_hi = p_of_c(hi, kernel, reaction, d, mu, opts)?;
        trace.push((hi, p_hi));
        tries += 1;
        if tries > 20 {
            return Err(SemiwaveError::BracketFailure(format!("P stays ≤ 0 up to c = {hi}")));
        }
    }
    let mut lo = 1e-3;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let p = p_of_c(mid, kernel, reaction, d, mu, opts)?;
        trace.push((mid, p));
        if p < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c0 = 0.5 * (lo + hi);
    let w = extract_wave(c0, kernel, reaction, d, opts)?;
    let m = m_of_c(&w, kernel, mu)?;
    Ok(SpeedSolve {
        c0,
        m_c0: m,
        residual: (c0 - m).abs(),
        bracket_trace: trace,
    })
}

/// Speed `ĉ₀` of the left front, from the reflected kernel.
pub fn find_c0_left(
    kernel: &Kernel,
    reaction: &Reaction,
    d: f64,
    mu: f64,
    tol: f64,
    opts: &WaveOptions,
) -> Result<SpeedSolve, SemiwaveError> {
    if !kernel.tail_class().j1_minus {
        return Err(SemiwaveError::DivergentFlux(Side::Left));
    }
    find_c0(&kernel.reflect(), reaction, d, mu, tol, opts)
}
