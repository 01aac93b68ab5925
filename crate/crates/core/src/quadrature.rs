//! Adaptive Gauss–Kronrod quadrature of positive integrands given on the log scale.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

use crate::scalar::{CompensatedSum, Real};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes 1, 3, 5 and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Outcome of an adaptive integration on the log scale.
#[derive(Debug, Clone, Copy)]
pub struct LogIntegral<T: Real> {
    /// `ln ∫ exp(f)`.
    pub log_value: T,
    /// Estimated relative error.
    pub rel_error: T,
    pub converged: bool,
}

struct Panel<T: Real> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Panel<T> {}
impl<T: Real> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

fn gk15<T: Real, F: Fn(T) -> T>(f: &F, shift: T, a: T, b: T) -> (T, T) {
    let centre = (a + b) * T::c(0.5);
    let half = (b - a) * T::c(0.5);
    let ev = |u: T| {
        let v = f(u) - shift;
        if v.finite() { v.exp() } else { T::zero() }
    };
    let fc = ev(centre);
    let mut kron = fc * T::c(WGK[7]);
    let mut gauss = fc * T::c(WG[3]);
    for i in 0..7 {
        let dx = half * T::c(XGK[i]);
        let s = ev(centre - dx) + ev(centre + dx);
        kron += s * T::c(WGK[i]);
        if i % 2 == 1 {
            gauss += s * T::c(WG[i / 2]);
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).abs();
    (value, error)
}

/// Breakpoints refined geometrically toward both ends of `[a, b]`.
fn graded_panels<T: Real>(a: T, b: T) -> Vec<T> {
    let mut pts = vec![a];
    for k in (1..=16).rev() {
        pts.push(a + (b - a) * T::c(0.5 * 10f64.powi(-k)));
    }
    pts.push((a + b) * T::c(0.5));
    for k in 1..=16 {
        pts.push(b - (b - a) * T::c(0.5 * 10f64.powi(-k)));
    }
    pts.push(b);
    pts.dedup_by(|x, y| !(*x > *y));
    pts
}

/// Integrates `exp(log_f(u))` over `[a, b]`.
///
/// The integrand is rescaled by its largest value on a uniform probe so that
/// neither overflow nor underflow occurs for huge or tiny integrals.
pub fn integrate_log<T: Real, F: Fn(T) -> T>(log_f: F, a: T, b: T, rel_tol: T, max_panels: usize) -> LogIntegral<T> {
    let probes = 129;
    let mut shift = T::NEG_INFINITY;
    let mut probe = |u: T| {
        let v = log_f(u);
        if v.finite() && v > shift {
            shift = v;
        }
    };
    for i in 0..probes {
        probe(a + (b - a) * (T::from_usize_lossy(i) + T::c(0.5)) / T::from_usize_lossy(probes));
    }
    // geometric probes catch peaks squeezed against either endpoint
    for k in 1..=64 {
        let off = (b - a) * T::c(10f64.powf(-(k as f64) / 4.0));
        probe(a + off);
        probe(b - off);
    }
    if !shift.finite() {
        return LogIntegral { log_value: T::NEG_INFINITY, rel_error: T::INFINITY, converged: false };
    }
    // rounding in `log_f - shift` bounds the attainable accuracy
    let rel_tol = rel_tol.max(T::EPSILON * T::c(50.0) * (T::one() + shift.abs()));

    for _ in 0..2 {
        let mut heap = BinaryHeap::new();
        let mut total = T::zero();
        let mut err = T::zero();
        for (lo, hi) in graded_panels(a, b).into_iter().zip(graded_panels(a, b).into_iter().skip(1)) {
            let (v, e) = gk15(&log_f, shift, lo, hi);
            total += v;
            err += e;
            heap.push(Panel { a: lo, b: hi, value: v, error: e });
        }
        while heap.len() < max_panels && err > rel_tol * total.abs() {
            let worst = heap.pop().expect("non-empty");
            let mid = (worst.a + worst.b) * T::c(0.5);
            if !(mid > worst.a && mid < worst.b) {
                heap.push(worst);
                break;
            }
            let (v1, e1) = gk15(&log_f, shift, worst.a, mid);
            let (v2, e2) = gk15(&log_f, shift, mid, worst.b);
            total += v1 + v2 - worst.value;
            err += e1 + e2 - worst.error;
            heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
            heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
        }
        let mut sum = CompensatedSum::default();
        let mut esum = CompensatedSum::default();
        for p in heap.iter() {
            sum.add(p.value);
            esum.add(p.error);
        }
        let total = sum.value();
        let err = esum.value();
        if total > T::zero() && total.finite() {
            // Probe may have missed a narrow peak; a huge total means the scale was off.
            if total > T::c(1e200) {
                shift += total.ln();
                continue;
            }
            let rel = err / total;
            return LogIntegral { log_value: shift + total.ln(), rel_error: rel, converged: rel <= rel_tol };
        }
        return LogIntegral { log_value: T::NEG_INFINITY, rel_error: T::INFINITY, converged: false };
    }
    LogIntegral { log_value: T::NEG_INFINITY, rel_error: T::INFINITY, converged: false }
}
