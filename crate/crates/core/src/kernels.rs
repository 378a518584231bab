//! Dispersal kernels: construction, tail function, linear spreading speeds and
//! the flux moments that drive accelerated fronts.
//!
//! Every family is normalized to unit mass at construction. The tail function
//! `K(z) = ∫_z^∞ J` is closed-form for all parametric families except the
//! compact bump, which carries a Hermite-interpolated table (`K' = -J` is known
//! exactly, so the table is fourth-order accurate). Tabulated kernels are
//! piecewise linear and integrate exactly.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{integrate_geometric, GaussLegendre};

/// Default mass discarded outside the truncation radius.
pub const DEFAULT_MASS_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("kernel normalization failed: {0}")]
    NormalizationFailure(String),
    #[error("quadrature overflow: {0}")]
    QuadratureOverflow(String),
    #[error("kernel table: {0}")]
    Table(String),
}

/// Parametric family of a dispersal kernel (before shifting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFamily {
    /// `J = 1/(2a)` on `[-a, a]`.
    Uniform {
        #[serde(rename = "half_width_length")]
        half_width: f64,
    },
    /// `J = (a - |x|)/a²` on `[-a, a]`.
    Triangular {
        #[serde(rename = "half_width_length")]
        half_width: f64,
    },
    Gaussian {
        #[serde(rename = "std_dev_length")]
        std_dev: f64,
    },
    /// `J = e^{-|x|/b} / (2b)`.
    Laplace {
        #[serde(rename = "scale_length")]
        scale: f64,
    },
    /// Smooth compactly supported bump `C·exp(-1/(1-(x/a)²))`.
    CompactBump {
        #[serde(rename = "half_width_length")]
        half_width: f64,
    },
    /// `J = λ (ρ + |x|)^{-α}`, with ρ fixed by normalization.
    PowerTail { exponent: f64, tail_constant: f64 },
    /// `J = λ / ((ρ + |x|) ln(ρ + |x|)^β)`, with ρ > 1 fixed by normalization.
    LogTail { exponent: f64, tail_constant: f64 },
    /// Piecewise-linear density through the samples, zero outside.
    Tabulated { x: Vec<f64>, density: Vec<f64> },
}

// unknown keys are rejected by the flattened family, since serde cannot
// combine `deny_unknown_fields` with `flatten`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    /// Asymmetry offset: `J(x) = J₀(x - shift)`.
    #[serde(default, rename = "shift_length")]
    pub shift: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Self {
        Self { family, shift: 0.0 }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn uniform(a: f64) -> Self {
        Self::new(KernelFamily::Uniform { half_width: a })
    }

    pub fn gaussian(s: f64) -> Self {
        Self::new(KernelFamily::Gaussian { std_dev: s })
    }

    pub fn power_tail(alpha: f64, lambda: f64) -> Self {
        Self::new(KernelFamily::PowerTail {
            exponent: alpha,
            tail_constant: lambda,
        })
    }

    pub fn log_tail(beta: f64, lambda: f64) -> Self {
        Self::new(KernelFamily::LogTail {
            exponent: beta,
            tail_constant: lambda,
        })
    }

    /// Reads a two-column `(x, J(x))` table; whitespace or comma separated,
    /// `#` comments allowed, `x` strictly increasing.
    pub fn read_tabulated(path: &Path) -> Result<Self, KernelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| KernelError::Table(format!("{}: {e}", path.display())))?;
        let (x, density) = parse_two_columns(&text).map_err(KernelError::Table)?;
        Ok(Self::new(KernelFamily::Tabulated { x, density }))
    }
}

/// Parses two numeric columns, enforcing a strictly increasing first column.
pub fn parse_two_columns(text: &str) -> Result<(Vec<f64>, Vec<f64>), String> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if cols.len() != 2 {
            return Err(format!("line {}: expected 2 columns, found {}", lineno + 1, cols.len()));
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| format!("line {}: `{s}`: {e}", lineno + 1))
        };
        let x = parse(cols[0])?;
        let y = parse(cols[1])?;
        if let Some(&prev) = xs.last() {
            if x <= prev {
                return Err(format!("line {}: x must be strictly increasing", lineno + 1));
            }
        }
        xs.push(x);
        ys.push(y);
    }
    if xs.len() < 2 {
        return Err("need at least two rows".into());
    }
    Ok((xs, ys))
}

/// Which side of the kernel a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Right,
    Left,
}

/// Tail classification of a kernel, filled analytically from its family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailClass {
    pub thin_plus: bool,
    pub thin_minus: bool,
    /// `∫_0^∞ x J(x) dx < ∞`.
    pub j1_plus: bool,
    pub j1_minus: bool,
    /// `(α, λ)` when `J(x)|x|^α → λ`.
    pub heavy: Option<(f64, f64)>,
    /// `(β, λ)` when `J(x)|x|(ln|x|)^β → λ`.
    pub log_heavy: Option<(f64, f64)>,
}

impl TailClass {
    fn swapped(self) -> Self {
        Self {
            thin_plus: self.thin_minus,
            thin_minus: self.thin_plus,
            j1_plus: self.j1_minus,
            j1_minus: self.j1_plus,
            ..self
        }
    }

    pub fn j1(&self, side: Side) -> bool {
        match side {
            Side::Right => self.j1_plus,
            Side::Left => self.j1_minus,
        }
    }
}

/// Inner limit used by [`Kernel::flux_moment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerLimit {
    /// Integrate over `[-k, -δk]`.
    Linear,
    /// Integrate over `[-k, -k^δ]` (the `α = 2` regime).
    Power,
}

/// Result of the linear spreading speed minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CStar {
    /// `c₊*` or `c₋*`; `±∞` when the thin-tail condition fails on that side.
    pub speed: f64,
    /// Minimizing exponential rate when the speed is finite.
    pub rate: Option<f64>,
}

impl CStar {
    pub fn is_finite(&self) -> bool {
        self.speed.is_finite()
    }
}

/// Centered, unshifted, unit-mass base shape.
#[derive(Debug, Clone)]
enum Shape {
    Uniform { a: f64 },
    Triangular { a: f64 },
    Gaussian { s: f64 },
    Laplace { b: f64 },
    Bump { a: f64, norm: f64, table: HermiteTail },
    Power { alpha: f64, lambda: f64, rho: f64 },
    Log { beta: f64, lambda: f64, rho: f64 },
    Tabulated { x: Vec<f64>, j: Vec<f64>, lower: Vec<f64>, upper: Vec<f64> },
}

/// Tail values of a symmetric compact kernel on `[0, a]`, interpolated by cubic
/// Hermite using `K' = -J`.
#[derive(Debug, Clone)]
struct HermiteTail {
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl HermiteTail {
    fn eval(&self, z: f64) -> f64 {
        let last = self.values.len() - 1;
        let pos = z / self.step;
        if pos >= last as f64 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        let t = pos - i as f64;
        let h = self.step;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }
}

fn bump_profile(x: f64, a: f64) -> f64 {
    let r = x / a;
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

impl Shape {
    fn symmetric(&self) -> bool {
        !matches!(self, Shape::Tabulated { .. })
    }

    fn density(&self, y: f64) -> f64 {
        match self {
            Shape::Uniform { a } => {
                if y.abs() <= *a {
                    0.5 / a
                } else {
                    0.0
                }
            }
            Shape::Triangular { a } => ((a - y.abs()) / (a * a)).max(0.0),
            Shape::Gaussian { s } => (-0.5 * (y / s).powi(2)).exp() / (s * (2.0 * PI).sqrt()),
            Shape::Laplace { b } => (-y.abs() / b).exp() / (2.0 * b),
            Shape::Bump { a, norm, .. } => norm * bump_profile(y, *a),
            Shape::Power { alpha, lambda, rho } => lambda * (rho + y.abs()).powf(-alpha),
            Shape::Log { beta, lambda, rho } => {
                let r = rho + y.abs();
                lambda / (r * r.ln().powf(*beta))
            }
            Shape::Tabulated { x, j, .. } => {
                let n = x.len();
                if y < x[0] || y > x[n - 1] {
                    return 0.0;
                }
                let i = upper_segment(x, y);
                let t = (y - x[i]) / (x[i + 1] - x[i]);
                j[i] + t * (j[i + 1] - j[i])
            }
        }
    }

    /// `∫_z^∞ J₀` for `z ≥ 0` (symmetric shapes only).
    fn upper_tail(&self, z: f64) -> f64 {
        debug_assert!(z >= 0.0);
        match self {
            Shape::Uniform { a } => ((a - z) / (2.0 * a)).max(0.0),
            Shape::Triangular { a } => {
                if z >= *a {
                    0.0
                } else {
                    (a - z).powi(2) / (2.0 * a * a)
                }
            }
            Shape::Gaussian { s } => 0.5 * libm::erfc(z / (s * SQRT_2)),
            Shape::Laplace { b } => 0.5 * (-z / b).exp(),
            Shape::Bump { table, .. } => table.eval(z),
            Shape::Power { alpha, lambda, rho } => lambda * (rho + z).powf(1.0 - alpha) / (alpha - 1.0),
            Shape::Log { beta, lambda, rho } => {
                lambda * (rho + z).ln().powf(1.0 - beta) / (beta - 1.0)
            }
            Shape::Tabulated { .. } => unreachable!("tabulated shapes are not symmetric"),
        }
    }

    /// `∫_y^∞ J₀`.
    fn tail(&self, y: f64) -> f64 {
        if let Shape::Tabulated { x, j, upper, .. } = self {
            let n = x.len();
            if y <= x[0] {
                return 1.0;
            }
            if y >= x[n - 1] {
                return 0.0;
            }
            let i = upper_segment(x, y);
            let jy = self.density(y);
            upper[i + 1] + 0.5 * (jy + j[i + 1]) * (x[i + 1] - y)
        } else if y >= 0.0 {
            self.upper_tail(y)
        } else {
            1.0 - self.upper_tail(-y)
        }
    }

    /// `∫_{-∞}^y J₀`.
    fn cdf(&self, y: f64) -> f64 {
        if let Shape::Tabulated { x, j, lower, .. } = self {
            let n = x.len();
            if y <= x[0] {
                return 0.0;
            }
            if y >= x[n - 1] {
                return 1.0;
            }
            let i = upper_segment(x, y);
            let jy = self.density(y);
            lower[i] + 0.5 * (j[i] + jy) * (y - x[i])
        } else if y <= 0.0 {
            self.upper_tail(-y)
        } else {
            1.0 - self.upper_tail(y)
        }
    }

    /// `∫ J₀(y) e^{νy} dy`, `None` when divergent.
    fn mgf(&self, nu: f64, rule: &GaussLegendre) -> Option<f64> {
        if nu == 0.0 {
            return Some(1.0);
        }
        let v = match self {
            Shape::Uniform { a } => {
                let z = a * nu;
                z.sinh() / z
            }
            Shape::Triangular { a } => {
                let z = a * nu;
                if z.abs() < 1e-4 {
                    1.0 + z * z / 12.0
                } else {
                    2.0 * (z.cosh() - 1.0) / (z * z)
                }
            }
            Shape::Gaussian { s } => (0.5 * (s * nu).powi(2)).exp(),
            Shape::Laplace { b } => {
                if (b * nu).abs() >= 1.0 {
                    return None;
                }
                1.0 / (1.0 - (b * nu).powi(2))
            }
            Shape::Bump { a, .. } => {
                let cells = 64;
                let h = 2.0 * a / cells as f64;
                (0..cells)
                    .map(|k| {
                        let lo = -a + k as f64 * h;
                        rule.integrate(lo, lo + h, |y| self.density(y) * (nu * y).exp())
                    })
                    .sum()
            }
            Shape::Power { .. } | Shape::Log { .. } => return None,
            Shape::Tabulated { x, .. } => x
                .windows(2)
                .map(|w| rule.integrate(w[0], w[1], |y| self.density(y) * (nu * y).exp()))
                .sum(),
        };
        if v.is_finite() {
            Some(v)
        } else {
            None
        }
    }

    fn support(&self) -> Option<(f64, f64)> {
        match self {
            Shape::Uniform { a } | Shape::Triangular { a } | Shape::Bump { a, .. } => Some((-a, *a)),
            Shape::Tabulated { x, .. } => Some((x[0], x[x.len() - 1])),
            _ => None,
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            Shape::Uniform { a } | Shape::Bump { a, .. } => vec![-a, *a],
            Shape::Triangular { a } => vec![-a, 0.0, *a],
            Shape::Laplace { .. } | Shape::Power { .. } | Shape::Log { .. } => vec![0.0],
            Shape::Gaussian { .. } => vec![],
            Shape::Tabulated { x, .. } => x.clone(),
        }
    }

    fn sup(&self) -> f64 {
        match self {
            Shape::Uniform { a } => 0.5 / a,
            Shape::Triangular { a } => 1.0 / a,
            Shape::Gaussian { s } => 1.0 / (s * (2.0 * PI).sqrt()),
            Shape::Laplace { b } => 0.5 / b,
            Shape::Bump { norm, .. } => norm * (-1.0f64).exp(),
            Shape::Power { .. } | Shape::Log { .. } => self.density(0.0),
            Shape::Tabulated { j, .. } => j.iter().cloned().fold(0.0, f64::max),
        }
    }

    fn core_width(&self) -> f64 {
        match self {
            Shape::Uniform { a } | Shape::Triangular { a } | Shape::Bump { a, .. } => *a,
            Shape::Gaussian { s } => *s,
            Shape::Laplace { b } => *b,
            Shape::Power { rho, .. } | Shape::Log { rho, .. } => *rho,
            Shape::Tabulated { x, .. } => 0.5 * (x[x.len() - 1] - x[0]),
        }
    }

    /// `∫_y^∞ tail(s) ds` for symmetric shapes and `y ≥ 0`, `None` if divergent.
    fn upper_tail_integral(&self, y: f64, rule: &GaussLegendre) -> Option<f64> {
        match self {
            Shape::Uniform { a } => Some(if y >= *a { 0.0 } else { (a - y).powi(2) / (4.0 * a) }),
            Shape::Triangular { a } => Some(if y >= *a { 0.0 } else { (a - y).powi(3) / (6.0 * a * a) }),
            Shape::Laplace { b } => Some(0.5 * b * (-y / b).exp()),
            Shape::Power { alpha, lambda, rho } => {
                if *alpha <= 2.0 {
                    None
                } else {
                    Some(lambda * (rho + y).powf(2.0 - alpha) / ((alpha - 1.0) * (alpha - 2.0)))
                }
            }
            Shape::Log { .. } => None,
            Shape::Gaussian { s } => {
                let end = y.max(0.0) + 40.0 * s;
                Some(integrate_long(rule, y, end, &[], |z| self.upper_tail(z)))
            }
            Shape::Bump { a, .. } => Some(if y >= *a {
                0.0
            } else {
                integrate_long(rule, y, *a, &[], |z| self.upper_tail(z))
            }),
            Shape::Tabulated { .. } => unreachable!(),
        }
    }
}

/// Index `i` with `x[i] <= y < x[i+1]` (clamped to the last segment).
fn upper_segment(x: &[f64], y: f64) -> usize {
    let n = x.len();
    match x.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => (i - 1).min(n - 2),
    }
}

/// Integrates over `[a, b]` (both ≥ 0 not required) splitting at `breaks`:
/// short pieces get a fixed composite rule, long pieces a geometric partition
/// measured from the piece start.
pub(crate) fn integrate_long<F: Fn(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    breaks: &[f64],
    f: F,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut cuts: Vec<f64> = breaks.iter().cloned().filter(|&p| p > a && p < b).collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut acc = 0.0;
    let mut lo = a;
    for hi in cuts.into_iter().chain(std::iter::once(b)) {
        let len = hi - lo;
        if len <= 1.0 {
            let cells = 8;
            let h = len / cells as f64;
            for k in 0..cells {
                let c0 = lo + k as f64 * h;
                acc += rule.integrate(c0, c0 + h, &f);
            }
        } else {
            for k in 0..8 {
                let c0 = lo + k as f64 / 8.0;
                acc += rule.integrate(c0, c0 + 0.125, &f);
            }
            acc += integrate_geometric(rule, 1.0, len, 16, |t| f(lo + t));
        }
        lo = hi;
    }
    acc
}

/// An immutable, normalized dispersal kernel.
#[derive(Debug, Clone)]
pub struct Kernel {
    spec: KernelSpec,
    mirrored: bool,
    shape: Shape,
    tail_class: TailClass,
    trunc_radius: f64,
    mass_tol: f64,
    rule: GaussLegendre,
}

fn positive(name: &'static str, v: f64) -> Result<f64, KernelError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(KernelError::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {v}"),
        })
    }
}

impl Kernel {
    /// Builds and validates a kernel with the default mass tolerance.
    pub fn new(spec: KernelSpec) -> Result<Self, KernelError> {
        Self::with_mass_tol(spec, DEFAULT_MASS_TOL)
    }

    pub fn with_mass_tol(spec: KernelSpec, mass_tol: f64) -> Result<Self, KernelError> {
        if !spec.shift.is_finite() {
            return Err(KernelError::InvalidParameter {
                name: "shift",
                reason: "must be finite".into(),
            });
        }
        let rule = GaussLegendre::new(8);
        let thin = TailClass {
            thin_plus: true,
            thin_minus: true,
            j1_plus: true,
            j1_minus: true,
            heavy: None,
            log_heavy: None,
        };
        let (shape, tail_class) = match &spec.family {
            KernelFamily::Uniform { half_width } => {
                (Shape::Uniform { a: positive("half_width", *half_width)? }, thin)
            }
            KernelFamily::Triangular { half_width } => {
                (Shape::Triangular { a: positive("half_width", *half_width)? }, thin)
            }
            KernelFamily::Gaussian { std_dev } => (Shape::Gaussian { s: positive("std_dev", *std_dev)? }, thin),
            KernelFamily::Laplace { scale } => (Shape::Laplace { b: positive("scale", *scale)? }, thin),
            KernelFamily::CompactBump { half_width } => {
                let a = positive("half_width", *half_width)?;
                (build_bump(a, &rule), thin)
            }
            KernelFamily::PowerTail { exponent, tail_constant } => {
                let alpha = *exponent;
                if !(alpha.is_finite() && alpha > 1.0) {
                    return Err(KernelError::InvalidParameter {
                        name: "exponent",
                        reason: format!("power tail needs alpha > 1 for a normalizable kernel, got {alpha}"),
                    });
                }
                let lambda = positive("tail_constant", *tail_constant)?;
                // ∫J = 2λ ρ^{1-α}/(α-1) = 1
                let rho = (2.0 * lambda / (alpha - 1.0)).powf(1.0 / (alpha - 1.0));
                let j1 = alpha > 2.0;
                (
                    Shape::Power { alpha, lambda, rho },
                    TailClass {
                        thin_plus: false,
                        thin_minus: false,
                        j1_plus: j1,
                        j1_minus: j1,
                        heavy: Some((alpha, lambda)),
                        log_heavy: None,
                    },
                )
            }
            KernelFamily::LogTail { exponent, tail_constant } => {
                let beta = *exponent;
                if !(beta.is_finite() && beta > 1.0) {
                    return Err(KernelError::InvalidParameter {
                        name: "exponent",
                        reason: format!("log tail needs beta > 1 for a normalizable kernel, got {beta}"),
                    });
                }
                let lambda = positive("tail_constant", *tail_constant)?;
                // ∫J = 2λ (ln ρ)^{1-β}/(β-1) = 1
                let ln_rho = (2.0 * lambda / (beta - 1.0)).powf(1.0 / (beta - 1.0));
                let rho = ln_rho.exp();
                if !rho.is_finite() {
                    return Err(KernelError::InvalidParameter {
                        name: "tail_constant",
                        reason: "inner cutoff overflows; reduce the tail constant".into(),
                    });
                }
                (
                    Shape::Log { beta, lambda, rho },
                    TailClass {
                        thin_plus: false,
                        thin_minus: false,
                        j1_plus: false,
                        j1_minus: false,
                        heavy: None,
                        log_heavy: Some((beta, lambda)),
                    },
                )
            }
            KernelFamily::Tabulated { x, density } => (build_tabulated(x, density)?, thin),
        };
        let mut kernel = Self {
            spec,
            mirrored: false,
            shape,
            tail_class,
            trunc_radius: f64::INFINITY,
            mass_tol,
            rule,
        };
        let j0 = kernel.eval(0.0);
        if !(j0 > 0.0) {
            return Err(KernelError::InvalidParameter {
                name: "shift",
                reason: format!("J(0) must be positive, got {j0}"),
            });
        }
        kernel.trunc_radius = kernel.compute_trunc_radius();
        Ok(kernel)
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn is_mirrored(&self) -> bool {
        self.mirrored
    }

    pub fn tail_class(&self) -> TailClass {
        self.tail_class
    }

    pub fn trunc_radius(&self) -> f64 {
        self.trunc_radius
    }

    pub fn mass_tol(&self) -> f64 {
        self.mass_tol
    }

    /// True when `J(x) = J(-x)` exactly.
    pub fn is_symmetric(&self) -> bool {
        self.shape.symmetric() && self.spec.shift == 0.0
    }

    /// Maps a physical coordinate to the base-shape coordinate.
    #[inline]
    fn to_base(&self, x: f64) -> f64 {
        if self.mirrored {
            -x - self.spec.shift
        } else {
            x - self.spec.shift
        }
    }

    /// `J(x)`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.shape.density(self.to_base(x))
    }

    /// Tail function `K(z) = ∫_z^∞ J`.
    #[inline]
    pub fn tail(&self, z: f64) -> f64 {
        if self.mirrored {
            self.shape.cdf(-z - self.spec.shift)
        } else {
            self.shape.tail(z - self.spec.shift)
        }
    }

    /// `∫_{-∞}^x J = 1 - K(x)`, evaluated without cancellation.
    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        if self.mirrored {
            self.shape.tail(-x - self.spec.shift)
        } else {
            self.shape.cdf(x - self.spec.shift)
        }
    }

    /// `sup J`.
    pub fn sup(&self) -> f64 {
        self.shape.sup()
    }

    /// Length scale of the kernel core; lattices should resolve it with ≥ 8 cells.
    pub fn core_width(&self) -> f64 {
        self.shape.core_width()
    }

    /// Points where `J` has a jump or kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self
            .shape
            .breakpoints()
            .into_iter()
            .map(|p| if self.mirrored { -p - self.spec.shift } else { p + self.spec.shift })
            .collect();
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b
    }

    /// Closed support `[lo, hi]` for compactly supported kernels.
    pub fn support(&self) -> Option<(f64, f64)> {
        self.shape.support().map(|(lo, hi)| {
            if self.mirrored {
                (-hi - self.spec.shift, -lo - self.spec.shift)
            } else {
                (lo + self.spec.shift, hi + self.spec.shift)
            }
        })
    }

    /// `∫ J(x) e^{νx} dx`, `None` when the integral diverges.
    pub fn mgf(&self, nu: f64) -> Option<f64> {
        let s = self.spec.shift;
        if self.mirrored {
            self.shape.mgf(-nu, &self.rule).map(|m| m * (-nu * s).exp())
        } else {
            self.shape.mgf(nu, &self.rule).map(|m| m * (nu * s).exp())
        }
        .filter(|v| v.is_finite())
    }

    /// Kernel mass by quadrature over the truncation window plus the exact tails.
    pub fn mass(&self) -> f64 {
        let (lo, hi) = match self.support() {
            Some(s) => s,
            None => {
                let r = self.trunc_radius.min(1e6);
                (self.spec.shift - r, self.spec.shift + r)
            }
        };
        // integrate outward from the centre so cells grow with the distance
        let c = self.spec.shift.clamp(lo, hi);
        let breaks = self.breakpoints();
        let mirrored: Vec<f64> = breaks.iter().map(|b| 2.0 * c - b).collect();
        let right = integrate_long(&self.rule, c, hi, &breaks, |x| self.eval(x));
        let left = integrate_long(&self.rule, c, 2.0 * c - lo, &mirrored, |y| self.eval(2.0 * c - y));
        left + right + self.cdf(lo) + self.tail(hi)
    }

    fn compute_trunc_radius(&self) -> f64 {
        if let Some((lo, hi)) = self.support() {
            return lo.abs().max(hi.abs());
        }
        let tol = self.mass_tol;
        let outside = |r: f64| self.tail(r) + self.cdf(-r);
        let s = self.spec.shift.abs();
        match &self.shape {
            Shape::Power { alpha, lambda, rho } => {
                let r = (2.0 * lambda / ((alpha - 1.0) * tol)).powf(1.0 / (alpha - 1.0)) - rho;
                r.max(0.0) + s
            }
            Shape::Log { beta, lambda, rho } => {
                let ln_r = (tol * (beta - 1.0) / (2.0 * lambda)).powf(1.0 / (1.0 - beta));
                (ln_r.exp() - rho).max(0.0) + s
            }
            _ => {
                let mut hi = self.core_width() + s;
                while outside(hi) >= tol {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if outside(mid) >= tol {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }

    /// The kernel `x ↦ J(-x)`.
    pub fn reflect(&self) -> Kernel {
        let mut k = self.clone();
        k.mirrored = !self.mirrored;
        k.tail_class = self.tail_class.swapped();
        k
    }

    /// Linear spreading speed `c₊*` (right) or `c₋*` (left).
    ///
    /// `c₊* = inf_{ν>0} [d∫J e^{νx} - d + f0]/ν`, located by a log-grid scan and
    /// refined by golden section. `c₋*` is `-c₊*` of the reflected kernel.
    pub fn c_star(&self, d: f64, f0: f64, side: Side) -> CStar {
        match side {
            Side::Right => self.c_star_right(d, f0),
            Side::Left => {
                let r = self.reflect().c_star_right(d, f0);
                CStar {
                    speed: -r.speed,
                    rate: r.rate.map(|nu| -nu),
                }
            }
        }
    }

    fn c_star_right(&self, d: f64, f0: f64) -> CStar {
        let thin = self.tail_class.thin_plus;
        if !thin {
            return CStar {
                speed: f64::INFINITY,
                rate: None,
            };
        }
        let nu_max = self.nu_max();
        let quotient = |nu: f64| match self.mgf(nu) {
            Some(m) => (d * (m - 1.0) + f0) / nu,
            None => f64::INFINITY,
        };
        let nu_min = 1e-6;
        let samples = 600;
        let ratio = (nu_max / nu_min).powf(1.0 / (samples - 1) as f64);
        let grid: Vec<f64> = (0..samples).map(|i| nu_min * ratio.powi(i as i32)).collect();
        let vals: Vec<f64> = grid.iter().map(|&nu| quotient(nu)).collect();
        let (imin, _) = vals
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        let mut a = grid[imin.saturating_sub(1)];
        let mut b = grid[(imin + 1).min(samples - 1)];
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = quotient(x1);
        let mut f2 = quotient(x2);
        for _ in 0..200 {
            if (b - a) <= 1e-13 * b {
                break;
            }
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = quotient(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = quotient(x2);
            }
        }
        let nu = 0.5 * (a + b);
        CStar {
            speed: quotient(nu).min(vals[imin]),
            rate: Some(nu),
        }
    }

    /// Upper end of the exponential-rate search window: keeps `∫J e^{νx}`
    /// clear of overflow.
    fn nu_max(&self) -> f64 {
        let s = self.spec.shift.abs();
        match &self.shape {
            Shape::Laplace { b } => (1.0 - 1e-9) / b,
            Shape::Gaussian { s: sd } => 30.0 / sd,
            _ => {
                let reach = self
                    .support()
                    .map(|(lo, hi)| lo.abs().max(hi.abs()))
                    .unwrap_or(self.core_width() + s);
                (600.0 / reach).min(1e4)
            }
        }
    }

    /// Flux moment `A(k, δ) = ∫_{-k}^{-inner} ∫_0^∞ J(x - y) dy dx`, reduced to
    /// `∫_{inner}^{k} (1 - K(-z)) dz` with `inner = δk` or `k^δ`.
    pub fn flux_moment(&self, k: f64, delta: f64, inner: InnerLimit) -> Result<f64, KernelError> {
        if !(k.is_finite() && k > 1.0) {
            return Err(KernelError::InvalidParameter {
                name: "k",
                reason: format!("outer scale must be finite and > 1, got {k}"),
            });
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(KernelError::InvalidParameter {
                name: "delta",
                reason: format!("inner fraction must lie in [0, 1), got {delta}"),
            });
        }
        if k > 1e15 {
            return Err(KernelError::QuadratureOverflow(format!("k = {k} exceeds the quadrature range")));
        }
        let lo = match inner {
            InnerLimit::Linear => delta * k,
            InnerLimit::Power => k.powf(delta),
        };
        let breaks: Vec<f64> = self.breakpoints().into_iter().map(|b| -b).collect();
        Ok(integrate_long(&self.rule, lo, k, &breaks, |z| self.cdf(-z)))
    }

    /// `∫_a^∞ K(z) dz`, or `None` when the right first moment diverges.
    pub fn tail_integral(&self, a: f64) -> Option<f64> {
        if !self.tail_class.j1_plus {
            return None;
        }
        if let Some((_, hi)) = self.support() {
            if a >= hi {
                return Some(0.0);
            }
            return Some(integrate_long(&self.rule, a, hi, &self.breakpoints(), |z| self.tail(z)));
        }
        // symmetric shape: K(z) = K₀(z - s') with s' the effective shift
        let s_eff = if self.mirrored { -self.spec.shift } else { self.spec.shift };
        let y = a - s_eff;
        if y >= 0.0 {
            self.shape.upper_tail_integral(y, &self.rule)
        } else {
            let near = integrate_long(&self.rule, y, 0.0, &[], |v| self.shape.tail(v));
            self.shape.upper_tail_integral(0.0, &self.rule).map(|t| t + near)
        }
    }

    /// `∫_0^∞ x J(x) dx` (equal to `∫_0^∞ K`), `None` when infinite.
    pub fn first_moment_plus(&self) -> Option<f64> {
        self.tail_integral(0.0)
    }
}

fn build_bump(a: f64, rule: &GaussLegendre) -> Shape {
    let cells = 4096usize;
    let h = a / cells as f64;
    // unnormalized half-line increments from 0 to a
    let mut inc = vec![0.0; cells];
    for (k, slot) in inc.iter_mut().enumerate() {
        let lo = k as f64 * h;
        *slot = rule.integrate(lo, lo + h, |y| bump_profile(y, a));
    }
    let half: f64 = inc.iter().sum();
    let norm = 0.5 / half;
    let mut values = vec![0.0; cells + 1];
    for k in (0..cells).rev() {
        values[k] = values[k + 1] + norm * inc[k];
    }
    let slopes = (0..=cells).map(|k| -norm * bump_profile(k as f64 * h, a)).collect();
    Shape::Bump {
        a,
        norm,
        table: HermiteTail { step: h, values, slopes },
    }
}

fn build_tabulated(x: &[f64], density: &[f64]) -> Result<Shape, KernelError> {
    if x.len() != density.len() || x.len() < 2 {
        return Err(KernelError::Table("x and density must have equal length ≥ 2".into()));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().any(|v| !v.is_finite()) {
        return Err(KernelError::Table("x must be finite and strictly increasing".into()));
    }
    if density.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(KernelError::InvalidParameter {
            name: "density",
            reason: "tabulated density must be finite and nonnegative".into(),
        });
    }
    let mass: f64 = x
        .windows(2)
        .zip(density.windows(2))
        .map(|(xw, jw)| 0.5 * (jw[0] + jw[1]) * (xw[1] - xw[0]))
        .sum();
    if !(mass > 0.0) {
        return Err(KernelError::NormalizationFailure("tabulated kernel has zero mass".into()));
    }
    let j: Vec<f64> = density.iter().map(|v| v / mass).collect();
    let n = x.len();
    let mut lower = vec![0.0; n];
    for i in 1..n {
        lower[i] = lower[i - 1] + 0.5 * (j[i - 1] + j[i]) * (x[i] - x[i - 1]);
    }
    let mut upper = vec![0.0; n];
    for i in (0..n - 1).rev() {
        upper[i] = upper[i + 1] + 0.5 * (j[i] + j[i + 1]) * (x[i + 1] - x[i]);
    }
    Ok(Shape::Tabulated {
        x: x.to_vec(),
        j,
        lower,
        upper,
    })
}
