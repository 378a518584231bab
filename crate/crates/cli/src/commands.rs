//! One function per subcommand. Each returns its one-line summary.

use std::io::Write;
use std::path::Path;

use kppfront::experiments::{comparison_harness, estimate_speed, fit_acceleration, AccelParams, SpeedEstimate, ViolationKind};
use kppfront::fixed_domain::{assemble, ell_star as ell_star_of, lambda_p, principal_eigenvalue, write_sweep_csv, Interval, SweepRow, EIGEN_TOL};
use kppfront::free_boundary::{classify_outcome, mu_star as mu_star_of, run as run_sim, run_from, Outcome, RunOutput};
use kppfront::semiwave::{extract_wave, find_c0, find_c0_left, m_of_c, residual, SpeedSolve, WaveKind};
use kppfront::Side;
use rayon::prelude::*;

use crate::checkpoint::{self, Payload, CHECKPOINT_VERSION};
use crate::config::{parse_config, to_toml, Resolved};
use crate::error::CliError;
use crate::output::RunDir;

const EIGEN_MAX_ITER: usize = 200_000;

fn finish(dir: &RunDir, plot: bool, summary: String) -> Result<String, CliError> {
    if plot {
        dir.write_plotscript()?;
    }
    Ok(format!("{summary} out={}", dir.path.display()))
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Spreading => "spreading",
        Outcome::Vanishing => "vanishing",
        Outcome::Undecided => "undecided",
    }
}

/// ℓ*, or 0 when `d ≤ f'(0)` and every run spreads.
fn critical_length(r: &Resolved) -> Result<f64, CliError> {
    let c = &r.config;
    Ok(ell_star_of(&r.kernel, c.model.d_per_time, r.reaction.f0(), c.ell_star.options())?)
}

fn write_series(dir: &mut RunDir, out: &RunOutput) -> Result<(), CliError> {
    dir.csv("series.csv", |w| out.series.write_csv(w))?;
    dir.csv("profile.csv", |w| {
        writeln!(w, "x,u")?;
        for (x, u) in out.state.profile() {
            writeln!(w, "{x:e},{u:e}")?;
        }
        Ok(())
    })
}

pub fn validate(path: &Path, echo: bool) -> Result<String, CliError> {
    let r = parse_config(path)?;
    if echo {
        return Ok(to_toml(&r.config).trim_end().to_string());
    }
    let s = &r.config.simulation;
    Ok(format!(
        "validate ok d={} mu={} dx={} dt={}",
        r.config.model.d_per_time,
        r.config.model.mu_per_time,
        s.dx_length.unwrap_or_default(),
        s.dt_time.unwrap_or_default()
    ))
}

pub fn simulate(path: &Path, plot: bool, stop_at: Option<f64>, resume: Option<&Path>) -> Result<String, CliError> {
    let r = parse_config(path)?;
    let mut cfg = r.sim();
    if let Some(t) = stop_at {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Usage(format!("--stop-at-time must be finite and > 0, got {t}")));
        }
        cfg.t_max = cfg.t_max.min(t);
    }
    let out = match resume {
        Some(p) => {
            let saved = checkpoint::load(p)?;
            checkpoint::check_drift(&saved.config, &r.config)?;
            run_from(&cfg, saved.state, saved.series)?
        }
        None => run_sim(&cfg)?,
    };
    let ell = critical_length(&r)?;
    let outcome = classify_outcome(&out.series, ell, &r.config.classify.thresholds());

    let mut dir = RunDir::create(&r.config, "simulate")?;
    write_series(&mut dir, &out)?;
    let payload = Payload {
        version: CHECKPOINT_VERSION,
        config: r.config.clone(),
        state: out.state.clone(),
        series: out.series.clone(),
    };
    checkpoint::save(&dir.path.join("checkpoint.json"), &payload)?;
    let st = &out.state;
    let slack = cfg.bound() - st.sup();
    finish(
        &dir,
        plot,
        format!(
            "simulate t={:.6e} g={:.9e} h={:.9e} sup_u={:.6e} outcome={} bound_slack={:.3e}",
            st.t,
            st.g,
            st.h,
            st.sup(),
            outcome_name(outcome),
            slack
        ),
    )
}

pub fn eigen(path: &Path, plot: bool) -> Result<String, CliError> {
    let r = parse_config(path)?;
    let c = &r.config;
    let (d, f0, n, drift) = (c.model.d_per_time, r.reaction.f0(), c.eigen.nodes, c.eigen.drift_speed);
    let rows = c
        .eigen
        .lengths_length
        .par_iter()
        .map(|&l| {
            let op = assemble(&r.kernel, d, drift, f0, Interval::new(0.0, l), n)?;
            let e = principal_eigenvalue(&op, EIGEN_TOL, EIGEN_MAX_ITER)?;
            Ok(SweepRow {
                l,
                n,
                lambda_p: e.lambda_p,
                residual: e.residual,
                iterations: e.iterations,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut dir = RunDir::create(c, "eigen")?;
    dir.csv("eigen.csv", |w| write_sweep_csv(&rows, w))?;
    let lo = rows.iter().map(|r| r.lambda_p).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.lambda_p).fold(f64::NEG_INFINITY, f64::max);
    let res = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    finish(
        &dir,
        plot,
        format!("eigen rows={} lambda_p_min={lo:.9e} lambda_p_max={hi:.9e} residual={res:.3e}", rows.len()),
    )
}

pub fn ell_star(path: &Path, plot: bool) -> Result<String, CliError> {
    let r = parse_config(path)?;
    let c = &r.config;
    let (d, f0) = (c.model.d_per_time, r.reaction.f0());
    let ell = critical_length(&r)?;
    // λ_p at the reported length, which should vanish
    let check = if ell > 0.0 {
        lambda_p(&r.kernel, d, f0, Interval::symmetric(0.5 * ell), c.ell_star.nodes)?.lambda_p
    } else {
        0.0
    };
    let mut dir = RunDir::create(c, "ell-star")?;
    dir.csv("ell_star.csv", |w| {
        writeln!(w, "d,f0,ell_star,lambda_p_at_ell_star")?;
        writeln!(w, "{d:e},{f0:e},{ell:e},{check:e}")
    })?;
    finish(&dir, plot, format!("ell-star ell_star={ell:.9e} residual={:.3e}", check.abs()))
}

pub fn mu_star(path: &Path, plot: bool) -> Result<String, CliError> {
    let r = parse_config(path)?;
    let c = &r.config;
    let ell = critical_length(&r)?;
    if ell <= 0.0 {
        return Err(CliError::Numerical(format!(
            "d = {} ≤ f'(0) = {}: every run spreads and μ* does not exist",
            c.model.d_per_time,
            r.reaction.f0()
        )));
    }
    let [lo, hi] = c.mu_star.bracket_per_time;
    let m = mu_star_of(&r.sim(), (lo, hi), c.mu_star.tol_rel, ell, c.classify.thresholds())?;
    let mut dir = RunDir::create(c, "mu-star")?;
    dir.csv("mu_star.csv", |w| {
        writeln!(w, "probe,mu,outcome")?;
        for (k, (mu, o)) in m.history.iter().enumerate() {
            writeln!(w, "{k},{mu:e},{}", outcome_name(*o))?;
        }
        Ok(())
    })?;
    let (a, b) = m.bracket;
    finish(
        &dir,
        plot,
        format!(
            "mu-star mu_star={:.9e} ell_star={ell:.6e} bracket=[{a:.6e},{b:.6e}] residual={:.3e}",
            m.mu_star,
            (b - a) / m.mu_star
        ),
    )
}

pub fn semiwave(path: &Path, plot: bool) -> Result<String, CliError> {
    let r = parse_config(path)?;
    let c = &r.config;
    let opts = r.wave_options();
    let d = c.model.d_per_time;
    let waves = c
        .semiwave
        .speeds_speed
        .par_iter()
        .map(|&s| {
            let w = extract_wave(s, &r.kernel, &r.reaction, d, &opts)?;
            let res = residual(&w, &r.kernel, &r.reaction, d);
            let m = match w.kind {
                WaveKind::SemiWave => m_of_c(&w, &r.kernel, c.model.mu_per_time).ok(),
                WaveKind::TravelingWave => None,
            };
            Ok((w, res, m))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut dir = RunDir::create(c, "semiwave")?;
    dir.csv("waves.csv", |f| {
        writeln!(f, "index,c,kind,front_anchor,residual,slope_at_zero,m_c")?;
        for (k, (w, res, m)) in waves.iter().enumerate() {
            let kind = match w.kind {
                WaveKind::SemiWave => "semi_wave",
                WaveKind::TravelingWave => "traveling_wave",
            };
            let m = m.map_or(String::new(), |v| format!("{v:e}"));
            writeln!(f, "{k},{:e},{kind},{:e},{res:e},{:e},{m}", w.c, w.front_anchor, w.slope_at_zero())?;
        }
        Ok(())
    })?;
    for (k, (w, _, _)) in waves.iter().enumerate() {
        dir.csv(&format!("wave_{k}.csv"), |f| w.write_csv(f))?;
    }
    let semi = waves.iter().filter(|(w, _, _)| w.kind == WaveKind::SemiWave).count();
    let worst = waves.iter().map(|(_, r, _)| *r).fold(0.0, f64::max);
    finish(
        &dir,
        plot,
        format!(
            "semiwave speeds={} semi_waves={semi} traveling_waves={} residual={worst:.3e}",
            waves.len(),
            waves.len() - semi
        ),
    )
}

fn speed_row(w: &mut impl Write, e: &SpeedEstimate, s: &SpeedSolve) -> std::io::Result<()> {
    let side = match e.side {
        Side::Right => "right",
        Side::Left => "left",
    };
    writeln!(
        w,
        "{side},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{}",
        s.c0,
        s.residual,
        e.slope,
        e.stderr,
        e.rel_error.unwrap_or(f64::NAN),
        e.window.0,
        e.window.1,
        s.m_c0,
        e.samples
    )
}

pub fn speed(path: &Path, plot: bool) -> Result<String, CliError> {
    let r = parse_config(path)?;
    let c = &r.config;
    let opts = r.wave_options();
    let (d, mu, tol) = (c.model.d_per_time, c.model.mu_per_time, c.speed.c0_tol_speed);
    let sim = r.sim();
    let (solves, out) = rayon::join(
        || -> Result<(SpeedSolve, SpeedSolve), CliError> {
            let right = find_c0(&r.kernel, &r.reaction, d, mu, tol, &opts)?;
            let left = if r.kernel.is_symmetric() {
                right.clone()
            } else {
                find_c0_left(&r.kernel, &r.reaction, d, mu, tol, &opts)?
            };
            Ok((right, left))
        },
        || run_sim(&sim),
    );
    let (right, left) = solves?;
    let out = out?;
    let frac = c.speed.window_frac;
    let er = estimate_speed(&out.series, Side::Right, frac, Some(right.c0))?;
    let el = estimate_speed(&out.series, Side::Left, frac, Some(left.c0))?;
    let mut dir = RunDir::create(c, "speed")?;
    dir.csv("speed.csv", |w| {
        writeln!(w, "side,c0,c0_residual,slope,slope_stderr,rel_error,window_lo,window_hi,m_c0,samples")?;
        speed_row(w, &er, &right)?;
        speed_row(w, &el, &left)
    })?;
    write_series(&mut dir, &out)?;
    finish(
        &dir,
        plot,
        format!(
            "speed c0_right={:.9e} slope_right={:.9e} c0_left={:.9e} slope_left={:.9e} rel_error={:.3e} residual={:.3e}",
            right.c0,
            er.slope,
            left.c0,
            el.slope,
            er.rel_error.unwrap_or(f64::NAN).max(el.rel_error.unwrap_or(f64::NAN)),
            right.residual.max(left.residual)
        ),
    )
}

pub fn accelerate(path: &Path, plot: bool) -> Result<String, CliError> {
    let r = parse_config(path)?;
    let c = &r.config;
    let mut sim = r.sim();
    sim.stop.max_length = Some(c.accelerate.stop_length);
    let out = run_sim(&sim)?;
    let fit = fit_acceleration(&out.series, c.accelerate.fit)?;
    let (name, params): (&str, Vec<(&str, f64)>) = match fit.params {
        AccelParams::Power { p, c } => ("power", vec![("p", p), ("c", c)]),
        AccelParams::TLog { c } => ("t_log", vec![("c", c)]),
        AccelParams::ExpRoot { k, beta } => ("exp_root", vec![("k", k), ("beta", beta)]),
    };
    let mut dir = RunDir::create(c, "accelerate")?;
    dir.csv("fit.csv", |w| {
        writeln!(w, "quantity,value")?;
        for (q, v) in &params {
            writeln!(w, "{q},{v:e}")?;
        }
        writeln!(w, "r2,{:e}", fit.r2)?;
        writeln!(w, "window_lo,{:e}", fit.window.0)?;
        writeln!(w, "window_hi,{:e}", fit.window.1)?;
        writeln!(w, "samples,{}", fit.samples)
    })?;
    write_series(&mut dir, &out)?;
    let shown = params.iter().map(|(q, v)| format!("{q}={v:.6e}")).collect::<Vec<_>>().join(" ");
    let last = out.series.last().expect("a run records its start");
    finish(
        &dir,
        plot,
        format!("accelerate model={name} {shown} t={:.6e} h={:.6e} r2={:.6}", last.t, last.h, fit.r2),
    )
}

pub fn harness(path: &Path, plot: bool) -> Result<String, CliError> {
    let r = parse_config(path)?;
    let c = &r.config;
    let report = comparison_harness(&r.sim(), c.harness.pairs, c.seed)?;
    let mut dir = RunDir::create(c, "harness")?;
    dir.csv("pairs.csv", |w| {
        writeln!(w, "pair,amplitude_scale,mu_scale,h0_scale")?;
        for (k, p) in report.pairs.iter().enumerate() {
            writeln!(w, "{k},{:e},{:e},{:e}", p.amplitude_scale, p.mu_scale, p.h0_scale)?;
        }
        Ok(())
    })?;
    dir.csv("violations.csv", |w| {
        writeln!(w, "pair,t,kind,node,a,b")?;
        for v in &report.violations {
            let (kind, node, a, b) = match v.kind {
                ViolationKind::Density { node, lower, upper } => ("density", node.to_string(), lower, upper),
                ViolationKind::RightFront { lower, upper } => ("right_front", String::new(), lower, upper),
                ViolationKind::LeftFront { lower, upper } => ("left_front", String::new(), lower, upper),
                ViolationKind::Negative { node, value } => ("negative", node.to_string(), value, 0.0),
                ViolationKind::SupBound { sup, bound } => ("sup_bound", String::new(), sup, bound),
            };
            writeln!(w, "{},{:e},{kind},{node},{a:e},{b:e}", v.pair, v.t)?;
        }
        Ok(())
    })?;
    let summary = finish(
        &dir,
        plot,
        format!(
            "harness pairs={} checks={} violations={}",
            report.pairs.len(),
            report.checks,
            report.violations.len()
        ),
    )?;
    if report.passed() {
        Ok(summary)
    } else {
        eprintln!("{summary}");
        Err(CliError::Violations(report.violations.len()))
    }
}
