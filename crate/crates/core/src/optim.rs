//! Projected BFGS for smooth objectives with simple bounds.
//!
//! Variables sitting on a bound whose gradient points outward are frozen
//! for the step; the remaining ones take a quasi-Newton direction and the
//! trial point is projected back onto the box. The inverse-Hessian
//! approximation is reset to a scaled identity whenever the direction stops
//! being a descent direction or the line search fails.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    fn project(&self, x: &mut [f64]) {
        for ((v, &l), &u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(l, u);
        }
    }
}

const STALL_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    pub max_iterations: usize,
    /// Euclidean norm of the projected gradient at which to stop.
    pub gradient_tolerance: f64,
    /// Relative objective change counted as a stalled iteration; a run of
    /// `STALL_LIMIT` stalled iterations ends the search unconverged.
    pub relative_tolerance: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            relative_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    Stagnation,
    LineSearchFailure,
    MaxIterations,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub projected_gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub reason: StopReason,
}

fn projected_gradient(x: &[f64], g: &[f64], bounds: &Bounds) -> Vec<f64> {
    x.iter()
        .zip(g)
        .zip(bounds.lower.iter().zip(&bounds.upper))
        .map(|((&xi, &gi), (&l, &u))| xi - (xi - gi).clamp(l, u))
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimize `f`, which returns the value and gradient or `None` when the
/// point is outside the objective's domain.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &OptimOptions) -> OptimOutcome
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let eval = |f: &mut F, x: &[f64]| -> Option<(f64, Vec<f64>)> {
        f(x).filter(|(v, g)| v.is_finite() && g.iter().all(|c| c.is_finite()))
    };
    let Some((mut fx, mut g)) = eval(&mut f, &x) else {
        return OptimOutcome {
            x,
            value: f64::NAN,
            gradient: vec![f64::NAN; n],
            projected_gradient_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
            reason: StopReason::NonFinite,
        };
    };

    let identity = |scale: f64| -> Vec<f64> {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = scale;
        }
        h
    };
    let mut h = identity(1.0);
    let mut fresh = true;
    let mut iterations = 0;
    let mut stalls = 0;

    let finish = |x: Vec<f64>, fx: f64, g: Vec<f64>, it: usize, reason: StopReason| {
        let pg = norm(&projected_gradient(&x, &g, bounds));
        OptimOutcome {
            converged: pg < opts.gradient_tolerance,
            projected_gradient_norm: pg,
            x,
            value: fx,
            gradient: g,
            iterations: it,
            reason,
        }
    };

    loop {
        let pg = projected_gradient(&x, &g, bounds);
        if norm(&pg) < opts.gradient_tolerance {
            return finish(x, fx, g, iterations, StopReason::GradientTolerance);
        }
        if iterations >= opts.max_iterations {
            return finish(x, fx, g, iterations, StopReason::MaxIterations);
        }

        let active: Vec<bool> = (0..n)
            .map(|i| {
                let (l, u) = (bounds.lower[i], bounds.upper[i]);
                l == u || (x[i] <= l && g[i] > 0.0) || (x[i] >= u && g[i] < 0.0)
            })
            .collect();
        let mut d = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                continue;
            }
            let mut acc = 0.0;
            for j in 0..n {
                if !active[j] {
                    acc -= h[i * n + j] * g[j];
                }
            }
            d[i] = acc;
        }
        if !(dot(&g, &d) < 0.0) {
            h = identity(1.0);
            fresh = true;
            for i in 0..n {
                d[i] = if active[i] { 0.0 } else { -g[i] };
            }
        }
        if fresh {
            // Keep the first (steepest-descent) step from overshooting wildly.
            let dn = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dn > 1.0 {
                for v in d.iter_mut() {
                    *v /= dn;
                }
            }
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            bounds.project(&mut xt);
            let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
            if norm(&step) == 0.0 {
                break;
            }
            if let Some((ft, gt)) = eval(&mut f, &xt) {
                let decrease = dot(&g, &step);
                if ft <= fx + 1e-4 * decrease {
                    accepted = Some((xt, ft, gt, step));
                    break;
                }
            }
            t *= 0.5;
        }
        iterations += 1;

        let Some((xt, ft, gt, s)) = accepted else {
            if fresh {
                return finish(x, fx, g, iterations, StopReason::LineSearchFailure);
            }
            h = identity(1.0);
            fresh = true;
            continue;
        };

        let y: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if fresh {
                let yy = dot(&y, &y);
                h = identity(sy / yy);
            }
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum()).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (s[i] * hy[j] + hy[i] * s[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }

        let rel = (fx - ft).abs() / fx.abs().max(1.0);
        x = xt;
        fx = ft;
        g = gt;
        if rel < opts.relative_tolerance {
            stalls += 1;
            let pgn = norm(&projected_gradient(&x, &g, bounds));
            if pgn < opts.gradient_tolerance {
                return finish(x, fx, g, iterations, StopReason::GradientTolerance);
            }
            if stalls >= STALL_LIMIT {
                return finish(x, fx, g, iterations, StopReason::Stagnation);
            }
        } else {
            stalls = 0;
        }
    }
}
