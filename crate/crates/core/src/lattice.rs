//! Product-integration weights of a kernel against piecewise-linear data on a
//! uniform lattice, and the Toeplitz convolution they define.
//!
//! For nodes `x_j = j·dx` and the hat basis `φ_j`, the weight of source `j` at
//! target `i` is `W(i-j) = ∫ J(x_i - y) φ_j(y) dy`, split into the two half
//! hats so that truncated end cells can be corrected individually.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::kernels::Kernel;
use crate::quad::GaussLegendre;

/// Offsets `m = i - j` for which the kernel can contribute, for compactly
/// supported (or effectively truncated) kernels.
fn offset_window(kernel: &Kernel, dx: f64) -> Option<(i64, i64)> {
    let (lo, hi) = match kernel.support() {
        Some(s) => s,
        None => {
            let r = kernel.trunc_radius();
            if r.is_finite() && r < 1e7 {
                let s = kernel.spec().shift;
                (-r - s.abs(), r + s.abs())
            } else {
                return None;
            }
        }
    };
    Some(((lo / dx).floor() as i64 - 1, (hi / dx).ceil() as i64 + 1))
}

/// `∫_{-len}^{0} J(r - y) (1 + y/len) dy`: left half hat of width `len`.
pub fn left_half(kernel: &Kernel, rule: &GaussLegendre, r: f64, len: f64) -> f64 {
    let breaks: Vec<f64> = kernel.breakpoints().into_iter().rev().map(|b| r - b).collect();
    rule.integrate_split(-len, 0.0, &breaks, |y| kernel.eval(r - y) * (1.0 + y / len))
}

/// `∫_0^{len} J(r - y) (1 - y/len) dy`: right half hat of width `len`.
pub fn right_half(kernel: &Kernel, rule: &GaussLegendre, r: f64, len: f64) -> f64 {
    let breaks: Vec<f64> = kernel.breakpoints().into_iter().rev().map(|b| r - b).collect();
    rule.integrate_split(0.0, len, &breaks, |y| kernel.eval(r - y) * (1.0 - y / len))
}

/// Half-hat weight tables indexed by offset, grown on demand for kernels
/// without compact support.
#[derive(Debug, Clone)]
pub struct HatWeights {
    dx: f64,
    lo: i64,
    left: Vec<f64>,
    right: Vec<f64>,
    full: Vec<f64>,
    bounded: bool,
    rule: GaussLegendre,
}

impl HatWeights {
    pub fn new(kernel: &Kernel, dx: f64) -> Self {
        let rule = GaussLegendre::new(6);
        let (lo, hi, bounded) = match offset_window(kernel, dx) {
            Some((lo, hi)) => (lo, hi, true),
            None => (-64, 64, false),
        };
        let mut w = Self {
            dx,
            lo,
            left: Vec::new(),
            right: Vec::new(),
            full: Vec::new(),
            bounded,
            rule,
        };
        w.fill(kernel, lo, hi);
        w
    }

    fn fill(&mut self, kernel: &Kernel, lo: i64, hi: i64) {
        self.lo = lo;
        let n = (hi - lo + 1) as usize;
        self.left = Vec::with_capacity(n);
        self.right = Vec::with_capacity(n);
        self.full = Vec::with_capacity(n);
        for m in lo..=hi {
            let r = m as f64 * self.dx;
            let l = left_half(kernel, &self.rule, r, self.dx);
            let rr = right_half(kernel, &self.rule, r, self.dx);
            self.left.push(l);
            self.right.push(rr);
            self.full.push(l + rr);
        }
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// True when all nonzero weights lie in a fixed window.
    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    /// Offset window `[lo, hi]` currently tabulated.
    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.lo + self.full.len() as i64 - 1)
    }

    /// Makes sure offsets in `[-reach, reach]` are tabulated.
    pub fn ensure_reach(&mut self, kernel: &Kernel, reach: i64) {
        if self.bounded {
            return;
        }
        let (lo, hi) = self.window();
        if lo <= -reach && hi >= reach {
            return;
        }
        let new_reach = reach.max(2 * hi.max(-lo));
        // existing entries are reused
        let old = (self.lo, self.left.clone(), self.right.clone());
        let new_lo = -new_reach;
        let n = (2 * new_reach + 1) as usize;
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        for m in -new_reach..=new_reach {
            let idx = (m - new_lo) as usize;
            let oi = m - old.0;
            if oi >= 0 && (oi as usize) < old.1.len() {
                left[idx] = old.1[oi as usize];
                right[idx] = old.2[oi as usize];
            } else {
                let r = m as f64 * self.dx;
                left[idx] = left_half(kernel, &self.rule, r, self.dx);
                right[idx] = right_half(kernel, &self.rule, r, self.dx);
            }
        }
        self.full = left.iter().zip(&right).map(|(a, b)| a + b).collect();
        self.left = left;
        self.right = right;
        self.lo = new_lo;
    }

    #[inline]
    fn get(table: &[f64], lo: i64, m: i64) -> f64 {
        let i = m - lo;
        if i < 0 || i as usize >= table.len() {
            0.0
        } else {
            table[i as usize]
        }
    }

    #[inline]
    pub fn full(&self, m: i64) -> f64 {
        Self::get(&self.full, self.lo, m)
    }

    #[inline]
    pub fn left(&self, m: i64) -> f64 {
        Self::get(&self.left, self.lo, m)
    }

    #[inline]
    pub fn right(&self, m: i64) -> f64 {
        Self::get(&self.right, self.lo, m)
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }
}

struct FftCache {
    capacity: usize,
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectrum: Vec<Complex<f64>>,
    buffer: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

/// Toeplitz convolution `out_i = Σ_j W(i-j) u_j` over consecutive lattice
/// nodes, by direct summation for banded weights and FFT otherwise.
pub struct ToeplitzConv {
    pub weights: HatWeights,
    fft: Option<FftCache>,
}

impl std::fmt::Debug for ToeplitzConv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToeplitzConv").field("weights", &self.weights).finish()
    }
}

impl Clone for ToeplitzConv {
    fn clone(&self) -> Self {
        Self {
            weights: self.weights.clone(),
            fft: None,
        }
    }
}

impl ToeplitzConv {
    pub fn new(kernel: &Kernel, dx: f64) -> Self {
        Self {
            weights: HatWeights::new(kernel, dx),
            fft: None,
        }
    }

    fn use_fft(&self, n: usize) -> bool {
        let (lo, hi) = self.weights.window();
        let band = if self.weights.is_bounded() {
            ((hi - lo + 1) as usize).min(2 * n)
        } else {
            2 * n
        };
        n >= 512 && band >= 256
    }

    pub fn apply(&mut self, kernel: &Kernel, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        debug_assert_eq!(out.len(), n);
        if n == 0 {
            return;
        }
        self.weights.ensure_reach(kernel, n as i64);
        if self.use_fft(n) {
            self.apply_fft(kernel, u, out);
        } else {
            self.apply_direct(u, out);
        }
    }

    fn apply_direct(&self, u: &[f64], out: &mut [f64]) {
        let n = u.len() as i64;
        let (lo, hi) = self.weights.window();
        for i in 0..n {
            let j_lo = (i - hi).max(0);
            let j_hi = (i - lo).min(n - 1);
            let mut acc = 0.0;
            let mut j = j_lo;
            while j <= j_hi {
                acc += self.weights.full(i - j) * u[j as usize];
                j += 1;
            }
            out[i as usize] = acc;
        }
    }

    fn apply_fft(&mut self, kernel: &Kernel, u: &[f64], out: &mut [f64]) {
        let n = u.len();
        let rebuild = match &self.fft {
            Some(c) => c.capacity < n,
            None => true,
        };
        if rebuild {
            let capacity = n.next_power_of_two().max(1024);
            self.weights.ensure_reach(kernel, capacity as i64);
            let size = 2 * capacity;
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(size);
            let inverse = planner.plan_fft_inverse(size);
            let mut spectrum = vec![Complex::new(0.0, 0.0); size];
            let cap = capacity as i64;
            for m in -(cap - 1)..cap {
                let idx = m.rem_euclid(size as i64) as usize;
                spectrum[idx] = Complex::new(self.weights.full(m), 0.0);
            }
            let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
            let mut scratch = vec![Complex::new(0.0, 0.0); scratch_len];
            forward.process_with_scratch(&mut spectrum, &mut scratch);
            self.fft = Some(FftCache {
                capacity,
                size,
                forward,
                inverse,
                spectrum,
                buffer: vec![Complex::new(0.0, 0.0); size],
                scratch,
            });
        }
        let cache = self.fft.as_mut().unwrap();
        for (b, v) in cache.buffer.iter_mut().zip(u.iter().chain(std::iter::repeat(&0.0))) {
            *b = Complex::new(*v, 0.0);
        }
        cache.forward.process_with_scratch(&mut cache.buffer, &mut cache.scratch);
        for (b, s) in cache.buffer.iter_mut().zip(&cache.spectrum) {
            *b *= s;
        }
        cache.inverse.process_with_scratch(&mut cache.buffer, &mut cache.scratch);
        let scale = 1.0 / cache.size as f64;
        for (o, b) in out.iter_mut().zip(&cache.buffer) {
            *o = b.re * scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    #[test]
    fn weights_sum_to_unit_mass() {
        let k = Kernel::new(KernelSpec::uniform(1.0)).unwrap();
        let w = HatWeights::new(&k, 0.1);
        let (lo, hi) = w.window();
        let total: f64 = (lo..=hi).map(|m| w.full(m)).sum::<f64>() * 1.0;
        // Σ_j W(i-j) = ∫J(x_i - y) Σφ_j(y) dy = 1
        assert!((total - 1.0).abs() < 1e-13, "{total}");
    }

    #[test]
    fn fft_matches_direct() {
        let k = Kernel::new(KernelSpec::power_tail(1.5, 0.25)).unwrap();
        let n = 1500;
        let u: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.013).sin().abs()).collect();
        let mut conv = ToeplitzConv::new(&k, 0.1);
        let mut a = vec![0.0; n];
        conv.apply(&k, &u, &mut a);
        assert!(conv.fft.is_some());
        let mut b = vec![0.0; n];
        conv.apply_direct(&u, &mut b);
        let err = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }
}
