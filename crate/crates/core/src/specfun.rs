//! Log-scale Gauss hypergeometric ₂F₁ and Appell F1.
//!
//! Results come back as `(sign, ln|value|)` with a convergence flag. A failed
//! status is not an error: callers fall back to a Laplace approximation.

use crate::quadrature::integrate_log;
use crate::scalar::Real;

/// Maximum number of series terms.
pub const SERIES_CAP: usize = 50_000;
const SERIES_TOL: f64 = 1e-16;
const QUAD_TOL: f64 = 1e-12;
const QUAD_PANELS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialValue<T: Real> {
    pub log_abs: T,
    pub sign: i8,
    pub status: Status,
}

impl<T: Real> SpecialValue<T> {
    pub fn converged(log_abs: T, sign: i8) -> Self {
        if log_abs.finite() || sign == 0 {
            Self { log_abs, sign, status: Status::Converged }
        } else {
            Self::failed()
        }
    }

    pub fn failed() -> Self {
        Self { log_abs: T::NAN, sign: 0, status: Status::Failed }
    }

    pub fn one() -> Self {
        Self { log_abs: T::zero(), sign: 1, status: Status::Converged }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn value(&self) -> T {
        let s = if self.sign < 0 { -T::one() } else if self.sign == 0 { T::zero() } else { T::one() };
        s * self.log_abs.exp()
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln|Γ(x)|`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    if x < T::c(0.5) {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let s = (T::pi() * x).sin().abs();
        return T::pi().ln() - s.ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::c(LANCZOS[0]);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        acc += T::c(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::c(LANCZOS_G + 0.5);
    T::c(0.5) * (T::two_pi()).ln() + (x + T::c(0.5)) * t.ln() - t + acc.ln()
}

fn is_nonpositive_integer<T: Real>(v: T) -> bool {
    v <= T::zero() && v == v.round()
}

/// Running signed sum of terms held as `(sign, ln|t|)`.
struct LogSeries<T: Real> {
    scale: T,
    sum: T,
    max_abs: T,
}

impl<T: Real> LogSeries<T> {
    fn new() -> Self {
        Self { scale: T::NEG_INFINITY, sum: T::zero(), max_abs: T::zero() }
    }

    fn add(&mut self, sign: T, log_abs: T) {
        if !self.scale.finite() {
            self.scale = log_abs;
        } else if log_abs > self.scale + T::c(300.0) {
            let r = (self.scale - log_abs).exp();
            self.sum *= r;
            self.max_abs *= r;
            self.scale = log_abs;
        }
        let t = (log_abs - self.scale).exp();
        self.sum += sign * t;
        if t > self.max_abs {
            self.max_abs = t;
        }
    }

    fn log_abs(&self) -> T {
        self.scale + self.sum.abs().ln()
    }

    fn relative(&self, log_abs: T) -> T {
        (log_abs - self.scale).exp() / self.sum.abs()
    }

    /// Digits lost to cancellation.
    fn cancellation(&self) -> T {
        self.max_abs / self.sum.abs()
    }
}

/// Direct power series `Σ (a)_k (b)_k / ((c)_k k!) x^k` for `|x| < 1`.
fn series_2f1<T: Real>(a: T, b: T, c: T, x: T) -> SpecialValue<T> {
    let mut s = LogSeries::new();
    let mut log_t = T::zero();
    let mut sign = T::one();
    s.add(sign, log_t);
    let tol = T::c(SERIES_TOL).max(T::EPSILON * T::c(0.01));
    for k in 0..SERIES_CAP {
        let kf = T::from_usize_lossy(k);
        let num = (a + kf) * (b + kf) * x;
        if num == T::zero() {
            return finish_series(&s);
        }
        let den = (c + kf) * (kf + T::one());
        let r = num / den;
        log_t += r.abs().ln();
        if r < T::zero() {
            sign = -sign;
        }
        s.add(sign, log_t);
        // stop once past the peak and the ratio guarantees a geometric tail
        let ratio_next = ((a + kf + T::one()) * (b + kf + T::one()) * x / ((c + kf + T::one()) * (kf + T::c(2.0)))).abs();
        if ratio_next < T::one() {
            let tail = s.relative(log_t) * ratio_next / (T::one() - ratio_next);
            if tail < tol {
                return finish_series(&s);
            }
        }
    }
    SpecialValue::failed()
}

fn finish_series<T: Real>(s: &LogSeries<T>) -> SpecialValue<T> {
    if s.sum == T::zero() {
        return SpecialValue { log_abs: T::NEG_INFINITY, sign: 0, status: Status::Converged };
    }
    if s.cancellation() > T::c(1e6) {
        return SpecialValue::failed();
    }
    SpecialValue::converged(s.log_abs(), if s.sum > T::zero() { 1 } else { -1 })
}

/// Log of the generalized Euler integral
/// `∫₀¹ u^{α-1} (1-u)^{β-1} Π (1 - u x_i)^{-e_i} du`, for `α, β > 0` and `x_i < 1`.
///
/// Both endpoints are desingularised by power substitutions on the two halves.
fn log_euler_integral<T: Real>(alpha: T, beta: T, factors: &[(T, T)]) -> Option<T> {
    if !(alpha > T::zero() && beta > T::zero()) || factors.iter().any(|&(x, _)| !(x < T::one())) {
        return None;
    }
    let half = T::c(0.5);
    let log_rest = |u: T| {
        let mut acc = T::zero();
        for &(x, e) in factors {
            if e != T::zero() {
                acc -= e * (-(u * x)).ln_1p();
            }
        }
        acc
    };
    // Left half: u = v^{1/α}, so u^{α-1} du = dv/α.
    let left_end = half.powf(alpha);
    let left = integrate_log(
        |v: T| {
            let u = v.powf(T::one() / alpha);
            (beta - T::one()) * (-u).ln_1p() + log_rest(u) - alpha.ln()
        },
        T::zero(),
        left_end,
        T::c(QUAD_TOL),
        QUAD_PANELS,
    );
    // Right half: 1 - u = w^{1/β}, so (1-u)^{β-1} du = dw/β.
    let right_end = half.powf(beta);
    let right = integrate_log(
        |w: T| {
            let one_minus = w.powf(T::one() / beta);
            let u = T::one() - one_minus;
            (alpha - T::one()) * u.ln() + log_rest(u) - beta.ln()
        },
        T::zero(),
        right_end,
        T::c(QUAD_TOL),
        QUAD_PANELS,
    );
    if !(left.converged && right.converged) {
        return None;
    }
    let (hi, lo) = if left.log_value > right.log_value {
        (left.log_value, right.log_value)
    } else {
        (right.log_value, left.log_value)
    };
    if !hi.finite() {
        return None;
    }
    Some(hi + (lo - hi).exp().ln_1p())
}

fn ln_beta<T: Real>(a: T, b: T) -> T {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn euler_2f1<T: Real>(a: T, b: T, c: T, x: T) -> SpecialValue<T> {
    // ₂F₁ = ∫ t^{b-1}(1-t)^{c-b-1}(1-xt)^{-a} dt / B(b, c-b); symmetric in a and b
    for (p, q) in [(b, a), (a, b)] {
        if p > T::zero() && c - p > T::zero() {
            if let Some(v) = log_euler_integral(p, c - p, &[(x, q)]) {
                return SpecialValue::converged(v - ln_beta(p, c - p), 1);
            }
        }
    }
    SpecialValue::failed()
}

/// Gauss hypergeometric function `₂F₁(a, b; c; x)` for `x < 1`.
pub fn gauss_2f1<T: Real>(a: T, b: T, c: T, x: T) -> SpecialValue<T> {
    if is_nonpositive_integer(c) || !(x < T::one()) || !x.finite() {
        return SpecialValue::failed();
    }
    if x == T::zero() || a == T::zero() || b == T::zero() {
        return SpecialValue::one();
    }
    if x < T::zero() {
        // Pfaff: (1-x)^{-b} ₂F₁(c-a, b; c; x/(x-1)), argument in (0, 1)
        let inner = gauss_2f1(c - a, b, c, x / (x - T::one()));
        if !inner.is_ok() {
            return inner;
        }
        return SpecialValue { log_abs: inner.log_abs - b * (-x).ln_1p(), ..inner };
    }
    let terminating = is_nonpositive_integer(a) || is_nonpositive_integer(b);
    let positive = a > T::zero() && b > T::zero() && c > T::zero();
    if terminating || positive || x <= T::c(0.5) {
        let s = series_2f1(a, b, c, x);
        if s.is_ok() {
            return s;
        }
    }
    euler_2f1(a, b, c, x)
}

/// Appell hypergeometric function of the first kind `F1(a; b1, b2; c; x, y)`,
/// evaluated through its Euler integral. Requires `a > 0`, `c - a > 0`, `x, y < 1`.
pub fn appell_f1<T: Real>(a: T, b1: T, b2: T, c: T, x: T, y: T) -> SpecialValue<T> {
    if !(a > T::zero() && c - a > T::zero()) || !(x < T::one() && y < T::one()) {
        return SpecialValue::failed();
    }
    if (x == T::zero() || b1 == T::zero()) && (y == T::zero() || b2 == T::zero()) {
        return SpecialValue::one();
    }
    match log_euler_integral(a, c - a, &[(x, b1), (y, b2)]) {
        Some(v) => SpecialValue::converged(v - ln_beta(a, c - a), 1),
        None => SpecialValue::failed(),
    }
}
