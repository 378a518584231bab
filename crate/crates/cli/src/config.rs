//! Run configuration: one TOML file per experiment, units spelled out in the
//! key names.

use std::path::{Path, PathBuf};

use kppfront::experiments::AccelModel;
use kppfront::fixed_domain::EllStarOptions;
use kppfront::free_boundary::{monotone_dt, InitialProfile, SimConfig, StopRule, Thresholds};
use kppfront::kernels::KernelError;
use kppfront::reactions::ReactionError;
use kppfront::semiwave::WaveOptions;
use kppfront::{Kernel, KernelSpec, Reaction, ReactionSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub model: ModelBlock,
    pub kernel: KernelSpec,
    pub reaction: ReactionSpec,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub classify: ClassifyBlock,
    #[serde(default)]
    pub eigen: EigenBlock,
    #[serde(default)]
    pub ell_star: EllStarBlock,
    #[serde(default)]
    pub mu_star: MuStarBlock,
    #[serde(default)]
    pub semiwave: SemiwaveBlock,
    #[serde(default)]
    pub speed: SpeedBlock,
    #[serde(default)]
    pub accelerate: AccelerateBlock,
    #[serde(default)]
    pub harness: HarnessBlock,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub d_per_time: f64,
    pub mu_per_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationBlock {
    pub h0_length: f64,
    #[serde(rename = "T_max_time")]
    pub t_max_time: f64,
    /// Defaults to an eighth of the kernel core width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dx_length: Option<f64>,
    /// Defaults to the monotone step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_time: Option<f64>,
    pub record_every_steps: usize,
    pub picard_iters: usize,
    /// Stop once `h - g` reaches this length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_length: Option<f64>,
    pub initial: InitialProfile,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            h0_length: 1.0,
            t_max_time: 50.0,
            dx_length: None,
            dt_time: None,
            record_every_steps: 10,
            picard_iters: 0,
            stop_length: None,
            initial: InitialProfile::Cosine { amplitude: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyBlock {
    pub eps_vanish: f64,
    pub margin_frac: f64,
    pub stall_rel: f64,
    pub trailing_frac: f64,
}

impl Default for ClassifyBlock {
    fn default() -> Self {
        let t = Thresholds::default();
        Self {
            eps_vanish: t.eps_vanish,
            margin_frac: t.margin_frac,
            stall_rel: t.stall_rel,
            trailing_frac: t.trailing_frac,
        }
    }
}

impl ClassifyBlock {
    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            eps_vanish: self.eps_vanish,
            margin_frac: self.margin_frac,
            stall_rel: self.stall_rel,
            trailing_frac: self.trailing_frac,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenBlock {
    /// Interval lengths; each interval is `(0, l)`.
    pub lengths_length: Vec<f64>,
    pub nodes: usize,
    pub drift_speed: f64,
}

impl Default for EigenBlock {
    fn default() -> Self {
        Self {
            lengths_length: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            nodes: 512,
            drift_speed: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EllStarBlock {
    pub nodes: usize,
    pub tol_length: f64,
}

impl Default for EllStarBlock {
    fn default() -> Self {
        let o = EllStarOptions::default();
        Self {
            nodes: o.n,
            tol_length: o.tol,
        }
    }
}

impl EllStarBlock {
    pub fn options(&self) -> EllStarOptions {
        EllStarOptions {
            n: self.nodes,
            tol: self.tol_length,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuStarBlock {
    pub bracket_per_time: [f64; 2],
    pub tol_rel: f64,
}

impl Default for MuStarBlock {
    fn default() -> Self {
        Self {
            bracket_per_time: [1e-3, 3.0],
            tol_rel: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemiwaveBlock {
    pub speeds_speed: Vec<f64>,
    /// Defaults to a fiftieth of the kernel core width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing_length: Option<f64>,
    /// Defaults to twenty core widths.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_length: Option<f64>,
    pub deltas: Vec<f64>,
    pub tol: f64,
}

impl Default for SemiwaveBlock {
    fn default() -> Self {
        Self {
            speeds_speed: vec![0.1, 0.2],
            spacing_length: None,
            depth_length: None,
            deltas: vec![1e-3, 1e-4, 1e-5, 1e-6],
            tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedBlock {
    pub window_frac: f64,
    pub c0_tol_speed: f64,
}

impl Default for SpeedBlock {
    fn default() -> Self {
        Self {
            window_frac: 0.5,
            c0_tol_speed: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelerateBlock {
    pub fit: AccelModel,
    pub stop_length: f64,
}

impl Default for AccelerateBlock {
    fn default() -> Self {
        Self {
            fit: AccelModel::Power,
            stop_length: 1e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessBlock {
    pub pairs: usize,
}

impl Default for HarnessBlock {
    fn default() -> Self {
        Self { pairs: 20 }
    }
}

/// A validated configuration with its derived objects.
#[derive(Debug, Clone)]
pub struct Resolved {
    /// Echo with every defaulted numeric filled in.
    pub config: RunConfig,
    pub kernel: Kernel,
    pub reaction: Reaction,
}

impl Resolved {
    pub fn sim(&self) -> SimConfig {
        let c = &self.config;
        let s = &c.simulation;
        let mut sim = SimConfig::new(
            self.kernel.clone(),
            self.reaction.clone(),
            c.model.d_per_time,
            c.model.mu_per_time,
            s.h0_length,
            s.t_max_time,
        );
        sim.initial = s.initial.clone();
        sim.dx = s.dx_length.expect("resolved");
        sim.dt = s.dt_time.expect("resolved");
        sim.record_every = s.record_every_steps;
        sim.picard_iters = s.picard_iters;
        sim.stop = StopRule {
            classify_with_ell_star: None,
            thresholds: c.classify.thresholds(),
            max_length: s.stop_length,
        };
        sim
    }

    pub fn wave_options(&self) -> WaveOptions {
        let w = &self.config.semiwave;
        let mut o = WaveOptions::for_kernel(&self.kernel);
        o.spacing = w.spacing_length.expect("resolved");
        o.x_depth = w.depth_length.expect("resolved");
        o.max_depth = o.max_depth.max(o.x_depth);
        o.deltas = w.deltas.clone();
        o.tol = w.tol;
        o
    }
}

pub fn to_toml(config: &RunConfig) -> String {
    toml::to_string(config).expect("config serializes")
}

/// Line and column (both 1-based) of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

pub fn parse_str(text: &str) -> Result<RunConfig, CliError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        CliError::Parse {
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })
}

/// Reads, parses and validates; every violated constraint is reported.
pub fn parse_config(path: &Path) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    resolve(parse_str(&text)?)
}

fn positive(errs: &mut Vec<Violation>, field: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        errs.push(Violation::new(field, format!("must be finite and > 0, got {v}")));
    }
}

pub fn resolve(mut config: RunConfig) -> Result<Resolved, CliError> {
    let mut errs = Vec::new();
    let kernel = Kernel::new(config.kernel.clone())
        .map_err(|e| {
            let field = match &e {
                KernelError::InvalidParameter { name, .. } => format!("kernel.{name}"),
                _ => "kernel".to_string(),
            };
            errs.push(Violation::new(&field, e.to_string()));
        })
        .ok();
    let reaction = Reaction::new(config.reaction.clone())
        .map_err(|e| {
            let field = match &e {
                ReactionError::InvalidParameter { name, .. } => format!("reaction.{name}"),
                _ => "reaction".to_string(),
            };
            errs.push(Violation::new(&field, e.to_string()));
        })
        .ok();

    let m = &config.model;
    positive(&mut errs, "model.d_per_time", m.d_per_time);
    positive(&mut errs, "model.mu_per_time", m.mu_per_time);
    let s = &config.simulation;
    positive(&mut errs, "simulation.h0_length", s.h0_length);
    positive(&mut errs, "simulation.T_max_time", s.t_max_time);
    for (f, v) in [
        ("simulation.dx_length", s.dx_length),
        ("simulation.dt_time", s.dt_time),
        ("simulation.stop_length", s.stop_length),
    ] {
        if let Some(v) = v {
            positive(&mut errs, f, v);
        }
    }
    if s.record_every_steps == 0 {
        errs.push(Violation::new("simulation.record_every_steps", "must be ≥ 1".into()));
    }

    let c = config.classify;
    positive(&mut errs, "classify.eps_vanish", c.eps_vanish);
    positive(&mut errs, "classify.margin_frac", c.margin_frac);
    positive(&mut errs, "classify.stall_rel", c.stall_rel);
    if !(c.trailing_frac > 0.0 && c.trailing_frac < 1.0) {
        errs.push(Violation::new("classify.trailing_frac", format!("must lie in (0, 1), got {}", c.trailing_frac)));
    }

    let e = &config.eigen;
    if e.lengths_length.is_empty() {
        errs.push(Violation::new("eigen.lengths_length", "must not be empty".into()));
    }
    for v in &e.lengths_length {
        positive(&mut errs, "eigen.lengths_length", *v);
    }
    if e.nodes < 8 {
        errs.push(Violation::new("eigen.nodes", format!("must be ≥ 8, got {}", e.nodes)));
    }
    if !e.drift_speed.is_finite() {
        errs.push(Violation::new("eigen.drift_speed", "must be finite".into()));
    }

    if config.ell_star.nodes < 8 {
        errs.push(Violation::new("ell_star.nodes", format!("must be ≥ 8, got {}", config.ell_star.nodes)));
    }
    positive(&mut errs, "ell_star.tol_length", config.ell_star.tol_length);

    // bracket order is checked by mu-star itself
    for v in config.mu_star.bracket_per_time {
        positive(&mut errs, "mu_star.bracket_per_time", v);
    }
    let tol = config.mu_star.tol_rel;
    if !(tol > 0.0 && tol < 1.0) {
        errs.push(Violation::new("mu_star.tol_rel", format!("must lie in (0, 1), got {tol}")));
    }

    let w = &config.semiwave;
    for v in &w.speeds_speed {
        positive(&mut errs, "semiwave.speeds_speed", *v);
    }
    for (f, v) in [("semiwave.spacing_length", w.spacing_length), ("semiwave.depth_length", w.depth_length)] {
        if let Some(v) = v {
            positive(&mut errs, f, v);
        }
    }
    if w.deltas.len() < 2 || w.deltas.windows(2).any(|p| p[1] >= p[0] || p[1].is_nan()) || w.deltas.iter().any(|d| !(*d > 0.0 && *d < 1.0)) {
        errs.push(Violation::new("semiwave.deltas", "must be a strictly decreasing list of ≥ 2 values in (0, 1)".into()));
    }
    positive(&mut errs, "semiwave.tol", w.tol);

    let sp = config.speed;
    if !(sp.window_frac > 0.0 && sp.window_frac <= 1.0) {
        errs.push(Violation::new("speed.window_frac", format!("must lie in (0, 1], got {}", sp.window_frac)));
    }
    positive(&mut errs, "speed.c0_tol_speed", sp.c0_tol_speed);

    positive(&mut errs, "accelerate.stop_length", config.accelerate.stop_length);
    if let AccelModel::ExpRoot { beta } = config.accelerate.fit {
        if !(beta.is_finite() && beta > 1.0) {
            errs.push(Violation::new("accelerate.fit.beta", format!("must be > 1, got {beta}")));
        }
    }
    if config.harness.pairs == 0 {
        errs.push(Violation::new("harness.pairs", "must be ≥ 1".into()));
    }

    let (Some(kernel), Some(reaction)) = (kernel, reaction) else {
        return Err(CliError::Validation(errs));
    };
    if !errs.is_empty() {
        return Err(CliError::Validation(errs));
    }

    // fill the derived defaults, then let the solver check the combination
    let s = &mut config.simulation;
    s.dx_length.get_or_insert(kernel.core_width() / 8.0);
    let upper_mu = config.model.mu_per_time.max(config.mu_star.bracket_per_time[1]);
    s.dt_time
        .get_or_insert_with(|| monotone_dt(config.model.d_per_time, upper_mu, &reaction, s.initial.sup()));
    let w = &mut config.semiwave;
    w.spacing_length.get_or_insert(kernel.core_width() / 50.0);
    w.depth_length.get_or_insert(20.0 * kernel.core_width());

    let resolved = Resolved {
        config,
        kernel,
        reaction,
    };
    if let Err(list) = resolved.sim().validate() {
        let errs = list.into_iter().map(|m| Violation::new("simulation", m)).collect();
        return Err(CliError::Validation(errs));
    }
    Ok(resolved)
}
