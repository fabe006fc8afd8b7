//! BFGS with a strong-Wolfe line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot, l2_norm, Scalar};

/// A differentiable objective.
pub trait Objective<T: Scalar> {
    fn value(&self, x: &[T]) -> T;

    fn value_and_gradient(&self, x: &[T]) -> (T, Vec<T>);
}

/// Wraps a value-only function, differentiating by central differences.
pub struct CentralDifferences<F> {
    pub f: F,
    pub relative_step: f64,
}

impl<F> CentralDifferences<F> {
    pub fn new(f: F) -> Self {
        CentralDifferences { f, relative_step: 1e-6 }
    }
}

impl<T: Scalar, F: Fn(&[T]) -> T> Objective<T> for CentralDifferences<F> {
    fn value(&self, x: &[T]) -> T {
        (self.f)(x)
    }

    fn value_and_gradient(&self, x: &[T]) -> (T, Vec<T>) {
        let fx = (self.f)(x);
        let mut probe = x.to_vec();
        let grad = (0..x.len())
            .map(|i| {
                let h = T::of(self.relative_step) * x[i].abs().max(T::one());
                probe[i] = x[i] + h;
                let up = (self.f)(&probe);
                probe[i] = x[i] - h;
                let down = (self.f)(&probe);
                probe[i] = x[i];
                (up - down) / (h + h)
            })
            .collect();
        (fx, grad)
    }
}

/// Objective given as a closure returning value and gradient together.
pub struct WithGradient<F>(pub F);

impl<T: Scalar, F: Fn(&[T]) -> (T, Vec<T>)> Objective<T> for WithGradient<F> {
    fn value(&self, x: &[T]) -> T {
        (self.0)(x).0
    }

    fn value_and_gradient(&self, x: &[T]) -> (T, Vec<T>) {
        (self.0)(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    pub grad_tolerance: f64,
    /// Recorded in the report; the iteration itself draws no random numbers.
    pub seed: u64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iter: 2000,
            grad_tolerance: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct MinimizeReport<T> {
    pub iterations: usize,
    pub function_evaluations: usize,
    pub final_value: T,
    pub final_gradient_norm: T,
    pub converged: bool,
    pub line_search_failed: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub solution: Vec<T>,
    pub report: MinimizeReport<T>,
}

struct Counted<'a, T: Scalar, O: Objective<T>> {
    inner: &'a O,
    evals: usize,
    _t: std::marker::PhantomData<T>,
}

impl<T: Scalar, O: Objective<T>> Counted<'_, T, O> {
    fn eval(&mut self, x: &[T]) -> (T, Vec<T>) {
        self.evals += 1;
        self.inner.value_and_gradient(x)
    }
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 60;

struct LinePoint<T> {
    alpha: T,
    value: T,
    slope: T,
    grad: Vec<T>,
}

/// Approximate Wolfe test for steps whose value change is lost in rounding:
/// the value may not rise beyond round-off and the slope must have flattened.
fn flat_but_curved<T: Scalar>(f0: T, slope0: T, cur: &LinePoint<T>) -> bool {
    let noise = T::of(100.0) * T::epsilon() * f0.abs().max(T::min_positive_value());
    cur.value <= f0 + noise && cur.slope.abs() <= -T::of(C2) * slope0 && cur.alpha > T::zero()
}

fn along<T: Scalar>(x: &[T], p: &[T], alpha: T) -> Vec<T> {
    x.iter().zip(p).map(|(&xi, &pi)| xi + alpha * pi).collect()
}

/// Minimizer of the cubic through two points with values and slopes, if it lies
/// safely inside the interval; otherwise the midpoint.
fn interpolate<T: Scalar>(lo: &LinePoint<T>, hi: &LinePoint<T>) -> T {
    let (a, b) = (lo.alpha, hi.alpha);
    let half = T::of(0.5);
    let mid = (a + b) * half;
    let d1 = lo.slope + hi.slope - T::of(3.0) * (lo.value - hi.value) / (a - b);
    let disc = d1 * d1 - lo.slope * hi.slope;
    if !(disc >= T::zero()) || !disc.is_finite() {
        return mid;
    }
    let sign = if b > a { T::one() } else { -T::one() };
    let d2 = sign * disc.sqrt();
    let denom = hi.slope - lo.slope + T::of(2.0) * d2;
    if denom == T::zero() {
        return mid;
    }
    let t = b - (b - a) * (hi.slope + d2 - d1) / denom;
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = (right - left) * T::of(0.1);
    if t.is_finite() && t > left + margin && t < right - margin {
        t
    } else {
        mid
    }
}

fn line_search<T: Scalar, O: Objective<T>>(
    obj: &mut Counted<'_, T, O>,
    x: &[T],
    f0: T,
    g0: &[T],
    p: &[T],
    alpha0: T,
) -> Option<LinePoint<T>> {
    let slope0 = dot(g0, p);
    let c1 = T::of(C1);
    let c2 = T::of(C2);
    let mut prev = LinePoint {
        alpha: T::zero(),
        value: f0,
        slope: slope0,
        grad: g0.to_vec(),
    };
    let mut alpha = alpha0;
    let mut evals = 0;
    let mut first = true;
    while evals < MAX_LINE_EVALS {
        let (value, grad) = obj.eval(&along(x, p, alpha));
        evals += 1;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            // overshoot into a non-finite region: shrink toward the last good point
            alpha = prev.alpha + (alpha - prev.alpha) * T::of(0.25);
            continue;
        }
        let cur = LinePoint {
            alpha,
            value,
            slope: dot(&grad, p),
            grad,
        };
        if flat_but_curved(f0, slope0, &cur) {
            return Some(cur);
        }
        if value > f0 + c1 * alpha * slope0 || (!first && value >= prev.value) {
            return zoom(obj, x, f0, slope0, p, prev, cur, evals);
        }
        if cur.slope.abs() <= -c2 * slope0 {
            return Some(cur);
        }
        if cur.slope >= T::zero() {
            return zoom(obj, x, f0, slope0, p, cur, prev, evals);
        }
        first = false;
        alpha = alpha * T::of(2.0);
        prev = cur;
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn zoom<T: Scalar, O: Objective<T>>(
    obj: &mut Counted<'_, T, O>,
    x: &[T],
    f0: T,
    slope0: T,
    p: &[T],
    mut lo: LinePoint<T>,
    mut hi: LinePoint<T>,
    mut evals: usize,
) -> Option<LinePoint<T>> {
    let c1 = T::of(C1);
    let c2 = T::of(C2);
    while evals < MAX_LINE_EVALS {
        let alpha = interpolate(&lo, &hi);
        let (value, grad) = obj.eval(&along(x, p, alpha));
        evals += 1;
        if !value.is_finite() {
            hi = LinePoint {
                alpha,
                value: T::infinity(),
                slope: T::zero(),
                grad,
            };
            continue;
        }
        let cur = LinePoint {
            alpha,
            value,
            slope: dot(&grad, p),
            grad,
        };
        if flat_but_curved(f0, slope0, &cur) {
            return Some(cur);
        }
        if value > f0 + c1 * alpha * slope0 || value >= lo.value {
            hi = cur;
        } else {
            if cur.slope.abs() <= -c2 * slope0 {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= T::zero() {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() <= T::epsilon() * lo.alpha.abs().max(T::one()) {
            break;
        }
    }
    // Wolfe curvature not met within budget; accept any sufficient decrease found.
    (lo.alpha > T::zero() && lo.value < f0).then_some(lo)
}

/// Quasi-Newton minimization with BFGS inverse-Hessian updates.
///
/// Stops when the Euclidean gradient norm reaches `grad_tolerance` or after
/// `max_iter` iterations. A line search that cannot make progress from both the
/// quasi-Newton and the steepest-descent direction ends the run with
/// `line_search_failed` set and the best iterate returned.
pub fn minimize<T: Scalar, O: Objective<T>>(objective: &O, x0: &[T], options: &MinimizeOptions) -> Result<Minimum<T>> {
    let mut obj = Counted {
        inner: objective,
        evals: 0,
        _t: std::marker::PhantomData,
    };
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = obj.eval(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("objective at the starting point".into()));
    }
    let tol = T::of(options.grad_tolerance);
    let mut h = identity(n);
    let mut fresh_h = true;
    let mut iterations = 0;
    let mut line_search_failed = false;

    while iterations < options.max_iter && l2_norm(&g) > tol {
        let mut p = neg_mat_vec(&h, &g, n);
        if dot(&p, &g) >= T::zero() {
            h = identity(n);
            fresh_h = true;
            p = g.iter().map(|&v| -v).collect();
        }
        let alpha0 = if iterations == 0 {
            T::one().min(T::one() / l2_norm(&g))
        } else {
            T::one()
        };
        let step = match line_search(&mut obj, &x, f, &g, &p, alpha0) {
            Some(s) => s,
            None if !fresh_h => {
                h = identity(n);
                fresh_h = true;
                continue;
            }
            None => {
                line_search_failed = true;
                break;
            }
        };
        let s: Vec<T> = p.iter().map(|&pi| step.alpha * pi).collect();
        let y: Vec<T> = step.grad.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        x = along(&x, &p, step.alpha);
        let improved = step.value < f;
        f = step.value;
        g = step.grad;
        iterations += 1;

        let sy = dot(&s, &y);
        if sy > T::epsilon() * l2_norm(&s) * l2_norm(&y) {
            if fresh_h {
                let scale = sy / dot(&y, &y);
                for i in 0..n {
                    h[i * n + i] = scale;
                }
                fresh_h = false;
            }
            bfgs_update(&mut h, &s, &y, sy, n);
        }
        if !improved && s.iter().all(|&v| v == T::zero()) {
            line_search_failed = true;
            break;
        }
    }
    let gnorm = l2_norm(&g);
    Ok(Minimum {
        solution: x,
        report: MinimizeReport {
            iterations,
            function_evaluations: obj.evals,
            final_value: f,
            final_gradient_norm: gnorm,
            converged: gnorm <= tol,
            line_search_failed,
            seed: options.seed,
        },
    })
}

fn identity<T: Scalar>(n: usize) -> Vec<T> {
    let mut h = vec![T::zero(); n * n];
    for i in 0..n {
        h[i * n + i] = T::one();
    }
    h
}

fn neg_mat_vec<T: Scalar>(h: &[T], g: &[T], n: usize) -> Vec<T> {
    (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], g)).collect()
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`
fn bfgs_update<T: Scalar>(h: &mut [T], s: &[T], y: &[T], sy: T, n: usize) {
    let rho = T::one() / sy;
    let hy: Vec<T> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (T::one() + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] = h[i * n + j] - rho * (hy[i] * s[j] + s[i] * hy[j]) + coef * s[i] * s[j];
        }
    }
}
