//! Derivative-free minimizers used by the distribution fits.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Box constraints; points are projected onto the box before evaluation.
#[derive(Debug, Clone)]
pub struct Bounds<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Scalar> Bounds<T> {
    fn project(&self, x: &mut [T]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.max(lo).min(hi);
        }
    }
}

/// Nelder–Mead simplex search inside a box.
///
/// Stops when the spread of objective values across the simplex drops below
/// `tol * (1 + |f_best|)`; `tol` is floored at a few machine epsilons of `T`.
pub fn nelder_mead<T, F>(
    mut f: F,
    start: &[T],
    step: &[T],
    bounds: &Bounds<T>,
    tol: T,
    max_iter: usize,
) -> Minimum<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    let dim = start.len();
    let tol = tol.max(T::epsilon() * T::lit(64.0));
    let (alpha, gamma, rho, sigma) = (T::one(), T::lit(2.0), T::lit(0.5), T::lit(0.5));
    let mut eval = |x: &mut Vec<T>| -> T {
        bounds.project(x);
        let v = f(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(dim + 1);
    let mut x0 = start.to_vec();
    let f0 = eval(&mut x0);
    simplex.push((x0.clone(), f0));
    for i in 0..dim {
        let mut xi = x0.clone();
        xi[i] += step[i];
        // stepping outside the box collapses the vertex; go the other way
        if xi[i] > bounds.upper[i] {
            xi[i] = x0[i] - step[i];
        }
        let fi = eval(&mut xi);
        simplex.push((xi, fi));
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if (worst - best).abs() <= tol * (T::one() + best.abs()) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![T::zero(); dim];
        for (x, _) in &simplex[..dim] {
            for (c, &v) in centroid.iter_mut().zip(x) {
                *c += v;
            }
        }
        for c in &mut centroid {
            *c /= T::of_usize(dim);
        }
        let along = |coef: T, x: &[T]| -> Vec<T> {
            centroid
                .iter()
                .zip(x)
                .map(|(&c, &w)| c + coef * (c - w))
                .collect()
        };

        let mut xr = along(alpha, &simplex[dim].0);
        let fr = eval(&mut xr);
        if fr < simplex[0].1 {
            let mut xe = along(gamma, &simplex[dim].0);
            let fe = eval(&mut xe);
            simplex[dim] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dim - 1].1 {
            simplex[dim] = (xr, fr);
        } else {
            let (mut xc, outside) = if fr < simplex[dim].1 {
                (along(rho, &simplex[dim].0), true)
            } else {
                (along(-rho, &simplex[dim].0), false)
            };
            let fc = eval(&mut xc);
            let accept = if outside { fc <= fr } else { fc < simplex[dim].1 };
            if accept {
                simplex[dim] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let mut xs: Vec<T> = x_best
                        .iter()
                        .zip(&vertex.0)
                        .map(|(&b, &v)| b + sigma * (v - b))
                        .collect();
                    let fs = eval(&mut xs);
                    *vertex = (xs, fs);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        iterations,
        converged,
    }
}

/// Brent's method for a one-dimensional minimum on `[a, b]`.
pub fn brent<T, F>(mut f: F, a: T, b: T, tol: T, max_iter: usize) -> (T, T)
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let golden = T::lit(0.381_966_011_250_105_1);
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + golden * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d = T::zero();
    let mut e = T::zero();
    let eps = T::epsilon().sqrt();
    let half = T::lit(0.5);

    for _ in 0..max_iter {
        let xm = half * (a + b);
        let tol1 = eps * x.abs() + tol;
        let tol2 = T::lit(2.0) * tol1;
        if (x - xm).abs() <= tol2 - half * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = T::lit(2.0) * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (half * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= xm { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > T::zero() {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let bounds = Bounds {
            lower: vec![-5.0, -5.0],
            upper: vec![5.0, 5.0],
        };
        let m = nelder_mead(rosen, &[-1.2, 1.0], &[0.1, 0.1], &bounds, 1e-14, 10_000);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m.x);
    }

    #[test]
    fn nelder_mead_respects_bounds() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2);
        let bounds = Bounds {
            lower: vec![0.0],
            upper: vec![1.0],
        };
        let m = nelder_mead(f, &[0.5], &[0.1], &bounds, 1e-12, 1000);
        assert_eq!(m.x[0], 0.0);
    }

    #[test]
    fn brent_parabola() {
        let (x, fx) = brent(|x: f64| (x - 0.3).powi(2) + 2.0, -1.0, 4.0, 1e-12, 200);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-12);
    }
}
