//! Derivative-free bounded scalar minimisation.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// First trial step of the bracketing phase.
    pub initial_step: f64,
    /// Absolute tolerance on the minimiser.
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.01,
            x_tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum<T> {
    pub x: T,
    pub fx: T,
    pub evaluations: usize,
    /// Best objective value after each accepted step, nonincreasing.
    pub history: Vec<T>,
}

struct Tracker<'a, T, F> {
    f: &'a mut F,
    best_x: T,
    best_f: T,
    evaluations: usize,
    history: Vec<T>,
}

impl<T: Real, F: FnMut(T) -> T> Tracker<'_, T, F> {
    /// Non-finite objective values count as +∞.
    fn eval(&mut self, x: T) -> T {
        self.evaluations += 1;
        let v = (self.f)(x);
        let v = if v.is_finite() { v } else { T::infinity() };
        if v < self.best_f {
            self.best_f = v;
            self.best_x = x;
            self.history.push(v);
        }
        v
    }
}

/// Local minimum of `f` on `[lo, hi]` near `start`.
///
/// A downhill march from `start` (step growing by the golden ratio)
/// brackets a minimum; Brent's method (golden-section steps with
/// parabolic interpolation when it is safe) then refines it. Returns a
/// model-explosion error when every evaluated value is non-finite.
pub fn minimize_bounded<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    lo: T,
    hi: T,
    start: T,
    opts: &MinimizeOptions,
) -> Result<Minimum<T>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::config(format!("invalid search interval [{lo}, {hi}]")));
    }
    let start = start.max(lo).min(hi);
    let mut t = Tracker {
        f: &mut f,
        best_x: start,
        best_f: T::infinity(),
        evaluations: 0,
        history: Vec::new(),
    };
    let golden = T::lit(1.618_033_988_749_895);
    let step0 = T::lit(opts.initial_step);

    // Bracketing.
    let f_start = t.eval(start);
    let right = (start + step0).min(hi);
    let left = (start - step0).max(lo);
    let f_right = t.eval(right);
    let f_left = t.eval(left);
    let (mut a, mut c) = (left, right);
    if !f_start.is_finite() && !f_right.is_finite() && !f_left.is_finite() {
        // Walk outwards until some finite value turns up.
        let mut step = step0;
        let (mut l, mut r) = (left, right);
        while !t.best_f.is_finite() && (l > lo || r < hi) {
            step *= golden;
            l = (start - step).max(lo);
            r = (start + step).min(hi);
            t.eval(l);
            t.eval(r);
        }
        a = (t.best_x - step).max(lo);
        c = (t.best_x + step).min(hi);
    } else if f_right < f_start || f_left < f_start {
        let dir = if f_right <= f_left { T::one() } else { -T::one() };
        let (mut prev, mut cur) = (start, if dir > T::zero() { right } else { left });
        let mut f_cur = f_right.min(f_left);
        let mut step = step0;
        loop {
            step *= golden;
            let next = (cur + dir * step).max(lo).min(hi);
            if next == cur {
                break;
            }
            let f_next = t.eval(next);
            if f_next >= f_cur {
                (prev, cur) = (prev, next);
                break;
            }
            prev = cur;
            cur = next;
            f_cur = f_next;
        }
        a = prev.min(cur);
        c = prev.max(cur);
        // The best point lies inside [a, c].
        if t.best_x < a || t.best_x > c {
            a = a.min(t.best_x);
            c = c.max(t.best_x);
        }
    }

    // Brent's method on [a, c] from the best point so far.
    let cgold = T::lit(0.381_966_011_250_105);
    let tol = T::lit(opts.x_tol);
    let mut x = t.best_x;
    let (mut w, mut v) = (x, x);
    let mut fx = t.best_f;
    let (mut fw, mut fv) = (fx, fx);
    let mut d = T::zero();
    let mut e = T::zero();
    for _ in 0..opts.max_iter {
        let xm = (a + c) / T::lit(2.0);
        let tol1 = tol + T::lit(1e-12) * x.abs();
        let tol2 = T::lit(2.0) * tol1;
        if (x - xm).abs() <= tol2 - (c - a) / T::lit(2.0) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 && fx.is_finite() && fw.is_finite() && fv.is_finite() {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = T::lit(2.0) * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            if p.abs() < (T::lit(0.5) * q * e_old).abs() && p > q * (a - x) && p < q * (c - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || c - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= xm { a - x } else { c - x };
            d = cgold * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > T::zero() {
            x + tol1
        } else {
            x - tol1
        };
        let fu = t.eval(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                c = x;
            }
            (v, fv) = (w, fw);
            (w, fw) = (x, fx);
            (x, fx) = (u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                c = u;
            }
            if fu <= fw || w == x {
                (v, fv) = (w, fw);
                (w, fw) = (u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }

    if !t.best_f.is_finite() {
        return Err(Error::ModelExplosion(format!(
            "objective non-finite at all {} evaluated points",
            t.evaluations
        )));
    }
    Ok(Minimum {
        x: t.best_x,
        fx: t.best_f,
        evaluations: t.evaluations,
        history: t.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let m = minimize_bounded(
            |x: f64| (x - 0.3).powi(2) + 1.0,
            -1.0,
            1.0,
            -0.8,
            &MinimizeOptions::default(),
        )
        .unwrap();
        assert!((m.x - 0.3).abs() < 1e-6, "{m:?}");
        assert!((m.fx - 1.0).abs() < 1e-12);
    }

    #[test]
    fn minimum_on_the_boundary() {
        let m = minimize_bounded(|x: f64| x, -0.9, 0.9, 0.5, &MinimizeOptions::default()).unwrap();
        assert!((m.x + 0.9).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn history_is_monotone() {
        let f = |x: f64| (50.0 * x * x).sin() + x * x;
        for start in [-0.7, -0.1, 0.2, 0.85] {
            let m = minimize_bounded(f, -0.9, 0.9, start, &MinimizeOptions::default()).unwrap();
            assert!(m.history.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(*m.history.last().unwrap(), m.fx);
        }
    }

    #[test]
    fn local_minimum_near_start() {
        // sin has minima at −π/2 + 2πk; start near 3π/2.
        let m = minimize_bounded(|x: f64| x.sin(), 0.0, 10.0, 4.5, &MinimizeOptions::default()).unwrap();
        assert!((m.x - 1.5 * std::f64::consts::PI).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn everywhere_infinite() {
        let r = minimize_bounded(|_: f64| f64::NAN, 0.0, 1.0, 0.5, &MinimizeOptions::default());
        assert!(matches!(r, Err(Error::ModelExplosion(_))));
    }

    #[test]
    fn partially_infinite_objective() {
        let f = |x: f64| if x > 0.5 { f64::INFINITY } else { (x - 0.2).powi(2) };
        let m = minimize_bounded(f, 0.0, 1.0, 0.6, &MinimizeOptions::default()).unwrap();
        assert!(m.fx.is_finite());
    }
}
