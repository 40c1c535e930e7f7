//! Bounded damped least squares (Levenberg-Marquardt with Marquardt scaling)
//! with a Nelder-Mead fallback for rank-deficient problems. Hand-rolled so
//! fits stay deterministic and dependency-free; the problems here have at
//! most a handful of parameters.

use crate::error::{fit, Result};

#[derive(Clone, Debug)]
pub struct Options {
    pub max_iterations: usize,
    /// Relative drop in the sum of squares below which the fit is converged.
    pub ftol: f64,
    /// Relative step size below which the fit is converged.
    pub xtol: f64,
    /// Relative perturbation for forward-difference Jacobians.
    pub rel_step: f64,
    pub lambda_init: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-12,
            xtol: 1e-12,
            rel_step: 1e-6,
            lambda_init: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub params: Vec<f64>,
    pub rss: f64,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub used_fallback: bool,
    /// rss / (m - n) * inverse(J^T J) at the solution; None when m <= n or
    /// the normal matrix is singular.
    pub covariance: Option<Vec<Vec<f64>>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn clamp_to(p: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..p.len() {
        p[i] = p[i].clamp(lower[i], upper[i]);
    }
}

/// Gaussian elimination with partial pivoting; None on (near-)singularity.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
        if !x[col].is_finite() {
            return None;
        }
    }
    Some(x)
}

fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        cols.push(solve(a.to_vec(), e)?);
    }
    // cols[j] is the j-th column of the inverse.
    let mut inv = vec![vec![0.0; n]; n];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

fn jacobian(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    p: &[f64],
    r0: &[f64],
    lower: &[f64],
    upper: &[f64],
    rel_step: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = p.len();
    let m = r0.len();
    let mut jac = vec![vec![0.0; n]; m];
    for j in 0..n {
        let h = rel_step * (p[j].abs() + 1e-3 * (upper[j] - lower[j]));
        let mut pj = p.to_vec();
        pj[j] = (p[j] + h).min(upper[j]);
        if pj[j] == p[j] {
            pj[j] = (p[j] - h).max(lower[j]);
        }
        let hh = pj[j] - p[j];
        if hh == 0.0 {
            return Err(fit(format!("parameter {j} has a degenerate bound interval")));
        }
        let rj = f(&pj)?;
        for i in 0..m {
            jac[i][j] = (rj[i] - r0[i]) / hh;
        }
    }
    Ok(jac)
}

fn normal_matrix(jac: &[Vec<f64>]) -> (Vec<Vec<f64>>, bool) {
    let m = jac.len();
    let n = jac[0].len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..m {
        for j in 0..n {
            for k in j..n {
                a[j][k] += jac[i][j] * jac[i][k];
            }
        }
    }
    for j in 0..n {
        for k in 0..j {
            a[j][k] = a[k][j];
        }
    }
    let mut healthy = true;
    for j in 0..n {
        if !(a[j][j].is_finite() && a[j][j] > 0.0) {
            healthy = false;
        }
    }
    (a, healthy)
}

/// Minimizes the sum of squared residuals subject to box bounds.
pub fn least_squares(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    initial: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &Options,
) -> Result<Outcome> {
    let n = initial.len();
    if n == 0 {
        return Err(fit("no free parameters".to_string()));
    }
    if lower.len() != n || upper.len() != n {
        return Err(fit("bound arrays must match the parameter count".to_string()));
    }
    for j in 0..n {
        if !(lower[j].is_finite() && upper[j].is_finite() && lower[j] < upper[j]) {
            return Err(fit(format!(
                "parameter {j} needs finite bounds with lower < upper, got [{}, {}]",
                lower[j], upper[j]
            )));
        }
    }
    let mut p = initial.to_vec();
    clamp_to(&mut p, lower, upper);

    let mut r = f(&p)?;
    let m = r.len();
    if m == 0 {
        return Err(fit("residual vector is empty".to_string()));
    }
    let mut rss = dot(&r, &r);
    if !rss.is_finite() {
        return Err(fit(format!("initial sum of squares is {rss}")));
    }

    let mut lambda = opts.lambda_init;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = jacobian(f, &p, &r, lower, upper, opts.rel_step)?;
        let (a, healthy) = normal_matrix(&jac);
        if !healthy {
            // A flat direction: the normal equations cannot be trusted.
            return nelder_mead_outcome(f, &p, lower, upper, opts);
        }
        let mut g = vec![0.0; n];
        for i in 0..m {
            for j in 0..n {
                g[j] += jac[i][j] * r[i];
            }
        }

        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = a.clone();
            for j in 0..n {
                damped[j][j] += lambda * a[j][j];
            }
            let rhs: Vec<f64> = g.iter().map(|x| -x).collect();
            let Some(step) = solve(damped, rhs) else {
                lambda *= 10.0;
                continue;
            };
            let mut p_new: Vec<f64> = p.iter().zip(&step).map(|(x, d)| x + d).collect();
            clamp_to(&mut p_new, lower, upper);
            if p_new == p {
                // Bounds absorbed the whole step.
                lambda *= 10.0;
                if lambda > 1e12 {
                    converged = true;
                    break;
                }
                continue;
            }
            let r_new = f(&p_new)?;
            let rss_new = dot(&r_new, &r_new);
            if rss_new.is_finite() && rss_new < rss {
                let step_rel = p_new
                    .iter()
                    .zip(&p)
                    .zip(lower.iter().zip(upper))
                    .map(|((new, old), (lo, hi))| (new - old).abs() / (old.abs() + 1e-3 * (hi - lo)))
                    .fold(0.0f64, f64::max);
                let drop = rss - rss_new;
                p = p_new;
                r = r_new;
                rss = rss_new;
                lambda = (lambda * 0.25).max(1e-14);
                accepted = true;
                if drop <= opts.ftol * rss.max(1e-300) || step_rel <= opts.xtol {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e12 {
                // No damped step improves: treat as a (possibly rough) minimum.
                converged = true;
                break;
            }
        }
        if converged || !accepted {
            break;
        }
    }

    let jac = jacobian(f, &p, &r, lower, upper, opts.rel_step)?;
    let (a, healthy) = normal_matrix(&jac);
    let covariance = if healthy && m > n {
        invert(&a).map(|inv| {
            let scale = rss / (m - n) as f64;
            inv.into_iter()
                .map(|row| row.into_iter().map(|v| v * scale).collect())
                .collect()
        })
    } else {
        None
    };

    Ok(Outcome { params: p, rss, residuals: r, iterations, converged, used_fallback: false, covariance })
}

fn rss_of(f: &dyn Fn(&[f64]) -> Result<Vec<f64>>, p: &[f64]) -> Result<f64> {
    let r = f(p)?;
    Ok(dot(&r, &r))
}

fn nelder_mead_outcome(
    f: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    p0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &Options,
) -> Result<Outcome> {
    let n = p0.len();
    let clamp1 = |x: f64, j: usize| x.clamp(lower[j], upper[j]);

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(p0.to_vec());
    for j in 0..n {
        let mut v = p0.to_vec();
        let h = 0.05 * (upper[j] - lower[j]);
        let stepped = clamp1(v[j] + h, j);
        v[j] = if stepped == v[j] { clamp1(v[j] - h, j) } else { stepped };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| rss_of(f, v)).collect::<Result<_>>()?;

    let max_iter = 400 * n.max(1) + opts.max_iterations;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];
        if (values[worst] - values[best]).abs() <= 1e-12 * (values[best].abs() + 1e-30) {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for &i in order.iter().take(n) {
            for j in 0..n {
                centroid[j] += simplex[i][j] / n as f64;
            }
        }
        let point = |coef: f64| -> Vec<f64> {
            (0..n)
                .map(|j| clamp1(centroid[j] + coef * (centroid[j] - simplex[worst][j]), j))
                .collect()
        };

        let reflected = point(1.0);
        let fr = rss_of(f, &reflected)?;
        if fr < values[best] {
            let expanded = point(2.0);
            let fe = rss_of(f, &expanded)?;
            if fe < fr {
                simplex[worst] = expanded;
                values[worst] = fe;
            } else {
                simplex[worst] = reflected;
                values[worst] = fr;
            }
        } else if fr < values[second_worst] {
            simplex[worst] = reflected;
            values[worst] = fr;
        } else {
            let contracted = point(-0.5);
            let fc = rss_of(f, &contracted)?;
            if fc < values[worst] {
                simplex[worst] = contracted;
                values[worst] = fc;
            } else {
                for &i in order.iter().skip(1) {
                    for j in 0..n {
                        simplex[i][j] =
                            clamp1(simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]), j);
                    }
                    values[i] = rss_of(f, &simplex[i])?;
                }
            }
        }
    }

    let best = (0..=n).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    let p = simplex[best].clone();
    let r = f(&p)?;
    let rss = dot(&r, &r);
    Ok(Outcome {
        params: p,
        rss,
        residuals: r,
        iterations,
        converged,
        used_fallback: true,
        covariance: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_linear_coefficients() {
        // y = 2 x + 1 sampled exactly.
        let xs: Vec<f64> = (0..20).map(|i| i as f64 / 4.0).collect();
        let f = |p: &[f64]| -> Result<Vec<f64>> {
            Ok(xs.iter().map(|&x| p[0] * x + p[1] - (2.0 * x + 1.0)).collect())
        };
        let out =
            least_squares(&f, &[0.5, 0.0], &[-10.0, -10.0], &[10.0, 10.0], &Options::default())
                .unwrap();
        assert!(out.converged);
        assert_relative_eq!(out.params[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(out.params[1], 1.0, epsilon = 1e-8);
        assert!(out.rss < 1e-16);
    }

    #[test]
    fn recovers_nonlinear_decay_rate() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let truth = |x: f64| 1.7 * (-0.6 * x).exp();
        let f = |p: &[f64]| -> Result<Vec<f64>> {
            Ok(xs.iter().map(|&x| p[0] * (-p[1] * x).exp() - truth(x)).collect())
        };
        let out = least_squares(&f, &[1.0, 0.2], &[0.01, 0.01], &[10.0, 5.0], &Options::default())
            .unwrap();
        assert!(out.converged);
        assert_relative_eq!(out.params[0], 1.7, epsilon = 1e-6);
        assert_relative_eq!(out.params[1], 0.6, epsilon = 1e-6);
        let cov = out.covariance.expect("well-posed problem has a covariance");
        assert!(cov[0][0] >= 0.0 && cov[1][1] >= 0.0);
    }

    #[test]
    fn respects_bounds() {
        // Unconstrained minimum at p = 3; bounds stop at 2.
        let f = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![p[0] - 3.0]) };
        let out = least_squares(&f, &[0.5], &[0.0], &[2.0], &Options::default()).unwrap();
        assert!(out.params[0] <= 2.0 + 1e-12);
        assert_relative_eq!(out.params[0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn falls_back_on_rank_deficiency() {
        // Second parameter has no effect: J^T J is singular.
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let f = |p: &[f64]| -> Result<Vec<f64>> {
            Ok(xs.iter().map(|&x| p[0] * x - 0.5 * x).collect())
        };
        let out =
            least_squares(&f, &[0.1, 0.3], &[-2.0, -2.0], &[2.0, 2.0], &Options::default()).unwrap();
        assert!(out.used_fallback);
        assert_relative_eq!(out.params[0], 0.5, epsilon = 1e-5);
        assert!(out.covariance.is_none());
    }

    #[test]
    fn rejects_bad_bounds() {
        let f = |p: &[f64]| -> Result<Vec<f64>> { Ok(vec![p[0]]) };
        assert!(least_squares(&f, &[0.0], &[1.0], &[0.0], &Options::default()).is_err());
        assert!(least_squares(&f, &[0.0], &[0.0], &[f64::INFINITY], &Options::default()).is_err());
    }

    #[test]
    fn propagates_model_errors() {
        let f = |_p: &[f64]| -> Result<Vec<f64>> { Err(crate::error::numeric("model blew up")) };
        assert!(least_squares(&f, &[0.5], &[0.0], &[1.0], &Options::default()).is_err());
    }

    #[test]
    fn solve_handles_permuted_systems() {
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let x = solve(a, vec![4.0, 5.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 2.0, epsilon = 1e-12);
        let singular = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve(singular, vec![1.0, 1.0]).is_none());
    }
}
