//! Small quadrature toolbox shared by the kernel, lattice and wave modules.

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds an `n`-point rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for k in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * k as f64 + 1.0) * z * p1 - k as f64 * p2) / (k as f64 + 1.0);
                }
                dp = nf * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` over `[a, b]`.
    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        if b <= a {
            return 0.0;
        }
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Integrates over `[a, b]` after splitting at every breakpoint inside it.
    pub fn integrate_split<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        breaks: &[f64],
        mut f: F,
    ) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut acc = 0.0;
        let mut lo = a;
        for &bp in breaks {
            if bp > lo && bp < b {
                acc += self.integrate(lo, bp, &mut f);
                lo = bp;
            }
        }
        acc + self.integrate(lo, b, &mut f)
    }
}

/// Adaptive Simpson quadrature with an absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Integrates a smooth positive-range function over `[a, b]` (0 < a < b) on a
/// geometric partition, which keeps the relative cell size bounded for
/// integrands that vary on the scale of `x` itself.
pub fn integrate_geometric<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    cells_per_decade: usize,
    mut f: F,
) -> f64 {
    debug_assert!(a > 0.0 && b >= a);
    if b <= a {
        return 0.0;
    }
    let decades = (b / a).log10().max(1e-3);
    let cells = ((decades * cells_per_decade as f64).ceil() as usize).max(1);
    let ratio = (b / a).powf(1.0 / cells as f64);
    let mut acc = 0.0;
    let mut lo = a;
    for k in 0..cells {
        let hi = if k + 1 == cells { b } else { lo * ratio };
        acc += rule.integrate(lo, hi, &mut f);
        lo = hi;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(5);
        // degree 9 is the exactness limit of a 5-point rule
        let v = rule.integrate(-1.0, 2.0, |x| x.powi(9) - 3.0 * x.powi(4) + 1.0);
        let exact = (2f64.powi(10) - 1.0) / 10.0 - 3.0 * (32.0 + 1.0) / 5.0 + 3.0;
        assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
    }

    #[test]
    fn split_handles_jump() {
        let rule = GaussLegendre::new(4);
        let step = |x: f64| if x < 0.3 { 1.0 } else { 0.0 };
        let v = rule.integrate_split(0.0, 1.0, &[0.3], step);
        assert!((v - 0.3).abs() < 1e-14);
    }

    #[test]
    fn simpson_matches_closed_form() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12, 40);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn geometric_partition_power_law() {
        let rule = GaussLegendre::new(8);
        let v = integrate_geometric(&rule, 1.0, 1e6, 8, |x| x.powf(-1.5));
        let exact = 2.0 * (1.0 - 1e-3);
        assert!((v - exact).abs() < 1e-10);
    }
}
