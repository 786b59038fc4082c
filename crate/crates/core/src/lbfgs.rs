//! Limited-memory BFGS with a strong-Wolfe line search.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    /// Iteration cap per call (the per-slice budget `Q`).
    pub max_iters: usize,
    /// History length of the two-loop recursion.
    pub memory: usize,
    pub grad_tol: f64,
    /// Strong-Wolfe sufficient-decrease and curvature constants.
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
    pub max_line_search_steps: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 100,
            memory: 10,
            grad_tol: 1e-8,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search_steps: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradTol,
    MaxIters,
    LineSearchFailed,
    StationaryStart,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub theta: Vec<f64>,
    pub cost: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

type CostFn<'a> = dyn FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + 'a;

/// Minimize `f` starting from `theta0`. Terminates on the gradient
/// tolerance, the iteration cap, or line-search failure (reported in the
/// outcome); the best iterate seen is always returned.
pub fn lbfgs_minimize(
    f: &mut CostFn<'_>,
    theta0: &[f64],
    cfg: &OptimizerConfig,
) -> Result<LbfgsOutcome> {
    if cfg.max_iters < 1 {
        return Err(Error::InvalidArgument("lbfgs: max_iters must be >= 1".into()));
    }
    let (mut cost, mut grad) = f(theta0)?;
    if !cost.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::OptimizerFailure(
            "non-finite cost or gradient at the start point".into(),
        ));
    }
    let mut x = theta0.to_vec();
    let mut best = (x.clone(), cost, norm(&grad));
    if norm(&grad) <= cfg.grad_tol {
        return Ok(LbfgsOutcome {
            theta: x,
            cost,
            grad_norm: norm(&grad),
            iterations: 0,
            termination: Termination::StationaryStart,
        });
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut termination = Termination::MaxIters;
    let mut iterations = 0usize;

    for _iter in 0..cfg.max_iters {
        // Two-loop recursion for the search direction.
        let mut q = grad.clone();
        let m = s_hist.len();
        let mut alphas = vec![0.0; m];
        for i in (0..m).rev() {
            alphas[i] = rho_hist[i] * dot(&s_hist[i], &q);
            axpy(&mut q, -alphas[i], &y_hist[i]);
        }
        if m > 0 {
            let gamma = dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]);
            for qi in q.iter_mut() {
                *qi *= gamma;
            }
        }
        for i in 0..m {
            let beta = rho_hist[i] * dot(&y_hist[i], &q);
            axpy(&mut q, alphas[i] - beta, &s_hist[i]);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut dg = dot(&dir, &grad);
        if dg >= 0.0 {
            // Not a descent direction (stale curvature); restart steepest.
            dir = grad.iter().map(|v| -v).collect();
            dg = dot(&dir, &grad);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        match strong_wolfe(f, &x, cost, &grad, &dir, dg, cfg)? {
            Some((step, new_cost, new_grad)) => {
                let mut s = dir.clone();
                for si in s.iter_mut() {
                    *si *= step;
                }
                let mut xnew = x.clone();
                axpy(&mut xnew, 1.0, &s);
                let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-14 * norm(&s) * norm(&y) {
                    if s_hist.len() == cfg.memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                        rho_hist.remove(0);
                    }
                    rho_hist.push(1.0 / sy);
                    s_hist.push(s);
                    y_hist.push(y);
                }
                x = xnew;
                cost = new_cost;
                grad = new_grad;
                iterations += 1;
                if cost < best.1 {
                    best = (x.clone(), cost, norm(&grad));
                }
                if norm(&grad) <= cfg.grad_tol {
                    termination = Termination::GradTol;
                    break;
                }
            }
            None => {
                termination = Termination::LineSearchFailed;
                break;
            }
        }
    }

    // Prefer the current iterate; fall back to the best seen if the last
    // line search left us somewhere worse.
    let (theta, cost, grad_norm) = if cost <= best.1 {
        (x, cost, norm(&grad))
    } else {
        best
    };
    Ok(LbfgsOutcome {
        theta,
        cost,
        grad_norm,
        iterations,
        termination,
    })
}

/// Strong-Wolfe line search (bracket and zoom). Returns
/// `(step, cost, grad)` or `None` on failure.
fn strong_wolfe(
    f: &mut CostFn<'_>,
    x0: &[f64],
    f0: f64,
    _g0: &[f64],
    dir: &[f64],
    dg0: f64,
    cfg: &OptimizerConfig,
) -> Result<Option<(f64, f64, Vec<f64>)>> {
    let eval = |f: &mut CostFn<'_>, step: f64| -> Result<Option<(f64, Vec<f64>, f64)>> {
        let mut xt = x0.to_vec();
        axpy(&mut xt, step, dir);
        let (c, g) = f(&xt)?;
        if !c.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Ok(None);
        }
        let d = dot(&g, dir);
        Ok(Some((c, g, d)))
    };

    let c1 = cfg.wolfe_c1;
    let c2 = cfg.wolfe_c2;
    let mut alpha_prev = 0.0;
    let mut f_prev = f0;
    let mut dg_prev = dg0;
    let mut alpha = 1.0;
    let mut bracket: Option<(f64, f64, f64, f64, f64, f64)> = None;
    for i in 0..cfg.max_line_search_steps {
        match eval(f, alpha)? {
            Some((fc, gc, dgc)) => {
                if fc > f0 + c1 * alpha * dg0 || (i > 0 && fc >= f_prev) {
                    bracket = Some((alpha_prev, f_prev, dg_prev, alpha, fc, dgc));
                    break;
                }
                if dgc.abs() <= -c2 * dg0 {
                    return Ok(Some((alpha, fc, gc)));
                }
                if dgc >= 0.0 {
                    bracket = Some((alpha, fc, dgc, alpha_prev, f_prev, dg_prev));
                    break;
                }
                alpha_prev = alpha;
                f_prev = fc;
                dg_prev = dgc;
                alpha *= 2.0;
            }
            None => {
                // Non-finite region: shrink toward the origin.
                alpha *= 0.25;
                if alpha < 1e-18 {
                    return Ok(None);
                }
            }
        }
    }
    let (mut lo, mut flo, mut dglo, mut hi, mut fhi, _dghi) = match bracket {
        Some(b) => b,
        None => return Ok(None),
    };

    for _ in 0..cfg.max_line_search_steps {
        // Quadratic interpolation with a bisection safeguard.
        let denom = flo - fhi + dglo * (hi - lo);
        let mut cand = if denom.abs() > 1e-300 {
            lo + 0.5 * dglo * (hi - lo) * (hi - lo) / denom
        } else {
            0.5 * (lo + hi)
        };
        let span = (hi - lo).abs();
        let lo_hi_min = lo.min(hi);
        let lo_hi_max = lo.max(hi);
        if !(cand.is_finite()) || cand <= lo_hi_min + 0.1 * span || cand >= lo_hi_max - 0.1 * span {
            cand = 0.5 * (lo + hi);
        }
        match eval(f, cand)? {
            Some((fc, gc, dgc)) => {
                if fc > f0 + c1 * cand * dg0 || fc >= flo {
                    hi = cand;
                    fhi = fc;
                } else {
                    if dgc.abs() <= -c2 * dg0 {
                        return Ok(Some((cand, fc, gc)));
                    }
                    if dgc * (hi - lo) >= 0.0 {
                        hi = lo;
                        fhi = flo;
                    }
                    lo = cand;
                    flo = fc;
                    dglo = dgc;
                }
            }
            None => {
                hi = cand;
                fhi = f0 + 1.0;
            }
        }
        if (hi - lo).abs() < 1e-16 {
            break;
        }
    }
    // Accept the best bracketed point if it at least decreases the cost.
    if flo < f0 {
        if let Some((fc, gc, _)) = eval(f, lo)? {
            return Ok(Some((lo, fc, gc)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges() {
        let c = [1.5, -2.0, 0.25, 4.0];
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let cost: f64 = x.iter().zip(&c).map(|(xi, ci)| (xi - ci) * (xi - ci)).sum();
            let grad: Vec<f64> = x.iter().zip(&c).map(|(xi, ci)| 2.0 * (xi - ci)).collect();
            Ok((cost, grad))
        };
        let cfg = OptimizerConfig {
            max_iters: 50,
            ..Default::default()
        };
        let out = lbfgs_minimize(&mut f, &[0.0; 4], &cfg).unwrap();
        for (xi, ci) in out.theta.iter().zip(&c) {
            assert!((xi - ci).abs() < 1e-8, "theta {:?}", out.theta);
        }
    }

    #[test]
    fn rosenbrock_converges() {
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            let cost = (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a);
            let grad = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            Ok((cost, grad))
        };
        let cfg = OptimizerConfig {
            max_iters: 200,
            grad_tol: 1e-10,
            ..Default::default()
        };
        let out = lbfgs_minimize(&mut f, &[-1.2, 1.0], &cfg).unwrap();
        assert!(
            (out.theta[0] - 1.0).abs() < 1e-5 && (out.theta[1] - 1.0).abs() < 1e-5,
            "theta {:?} after {} iters",
            out.theta,
            out.iterations
        );
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            Ok((x[0] * x[0], vec![2.0 * x[0]]))
        };
        let out = lbfgs_minimize(&mut f, &[0.0], &OptimizerConfig::default()).unwrap();
        assert_eq!(out.termination, Termination::StationaryStart);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn cost_never_increases() {
        let mut f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let cost = (x[0].sin() + 0.1 * x[0] * x[0]).cos() + x[1] * x[1];
            let h = 1e-7;
            let mut grad = vec![0.0; 2];
            for k in 0..2 {
                let mut xp = x.to_vec();
                xp[k] += h;
                let cp = (xp[0].sin() + 0.1 * xp[0] * xp[0]).cos() + xp[1] * xp[1];
                grad[k] = (cp - cost) / h;
            }
            Ok((cost, grad))
        };
        let (c0, _) = f(&[1.0, -2.0]).unwrap();
        let out = lbfgs_minimize(&mut f, &[1.0, -2.0], &OptimizerConfig::default()).unwrap();
        assert!(out.cost <= c0);
    }

    #[test]
    fn non_finite_start_errors() {
        let mut f = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((f64::NAN, vec![0.0])) };
        assert!(lbfgs_minimize(&mut f, &[1.0], &OptimizerConfig::default()).is_err());
    }
}
