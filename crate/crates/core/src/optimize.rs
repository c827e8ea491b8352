//! Bounded local minimisation for MAP searches. The default engine is BFGS
//! with central-difference gradients, Armijo backtracking, and a step cap;
//! a Nelder-Mead simplex is available for objectives too rough for finite
//! differences. Iterates stay strictly inside the prior support, and a run
//! that stalls pinned to the boundary is returned flagged rather than hidden.

use crate::error::{fmt_vec, Error, Result};
use crate::linalg::Mat;
use crate::posterior::{NoiseView, PosteriorProblem};
use crate::real::Real;

/// Which local optimiser drives the MAP search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    /// BFGS with finite-difference gradients (default).
    QuasiNewtonFd,
    /// Derivative-free simplex.
    NelderMead,
}

/// Multistart and local-search settings shared by the mode-based estimators.
#[derive(Clone, Debug)]
pub struct SearchConfig<T> {
    /// Number of multistart runs `n`.
    pub starts: usize,
    pub optimizer: OptimizerKind,
    /// Iteration cap per local run.
    pub max_iters: usize,
    /// Relative projected-gradient tolerance: converged when
    /// `|pg|_inf <= tol * (1 + |f|)`.
    pub gradient_tolerance: T,
    /// Mode dedup radius as a fraction of the prior length scale.
    pub dedup_radius: T,
    /// Mixture weights below this are pruned.
    pub weight_floor: T,
    /// Line-search step cap as a fraction of the prior length scale.
    pub max_step_scale: T,
}

impl<T: Real> Default for SearchConfig<T> {
    fn default() -> Self {
        SearchConfig {
            starts: 20,
            optimizer: OptimizerKind::QuasiNewtonFd,
            // Converging runs stop within tens of iterations even on stiff
            // boundary-pinned modes; the cap is headroom that only cuts off
            // runs going nowhere.
            max_iters: 600,
            gradient_tolerance: T::of(1e-7),
            dedup_radius: T::of(1e-3),
            weight_floor: T::of(1e-12),
            max_step_scale: T::of(0.1),
        }
    }
}

/// Outcome of one local minimisation.
#[derive(Clone, Debug)]
pub struct MapResult<T> {
    pub location: Vec<T>,
    /// Objective value at `location`.
    pub value: T,
    pub converged: bool,
    pub iterations: usize,
    /// Whether the final iterate sits on the support boundary.
    pub on_boundary: bool,
}

/// Effective box: bounds pulled inward by a relative inset so the objective
/// is always evaluated strictly inside an open support.
struct Box<T> {
    lo: Vec<T>,
    hi: Vec<T>,
    span: Vec<T>,
}

impl<T: Real> Box<T> {
    fn from_bounds(n: usize, bounds: Option<(&[T], &[T])>) -> Self {
        match bounds {
            Some((lo, hi)) => {
                let inset = T::of(1e-12);
                let span: Vec<T> = lo.iter().zip(hi).map(|(&a, &b)| b - a).collect();
                Box {
                    lo: (0..n).map(|j| lo[j] + inset * span[j]).collect(),
                    hi: (0..n).map(|j| hi[j] - inset * span[j]).collect(),
                    span,
                }
            }
            None => Box {
                lo: vec![T::neg_infinity(); n],
                hi: vec![T::infinity(); n],
                span: vec![T::infinity(); n],
            },
        }
    }

    fn clamp(&self, x: &mut [T]) {
        for j in 0..x.len() {
            x[j] = x[j].max(self.lo[j]).min(self.hi[j]);
        }
    }

    fn on_boundary(&self, x: &[T]) -> bool {
        let rel = T::of(1e-9);
        x.iter().enumerate().any(|(j, &v)| {
            self.span[j].is_finite()
                && ((v - self.lo[j]).abs() <= rel * self.span[j]
                    || (self.hi[j] - v).abs() <= rel * self.span[j])
        })
    }
}

/// Minimises `f` from `start`, staying inside `bounds` when given.
///
/// `max_step` caps the 2-norm of any single step (absolute units). A start
/// with a non-finite objective is rejected; runs that stall before meeting
/// the gradient test come back with `converged = false`.
pub fn minimize<T: Real>(
    f: &mut dyn FnMut(&[T]) -> T,
    start: &[T],
    bounds: Option<(&[T], &[T])>,
    max_step: Option<T>,
    kind: OptimizerKind,
    max_iters: usize,
    gradient_tolerance: T,
) -> Result<MapResult<T>> {
    let boxb = Box::from_bounds(start.len(), bounds);
    let mut x0 = start.to_vec();
    boxb.clamp(&mut x0);
    let f0 = f(&x0);
    if !f0.is_finite() {
        return Err(Error::StartRejected {
            start: fmt_vec(start),
        });
    }
    match kind {
        OptimizerKind::QuasiNewtonFd => {
            bfgs(f, x0, f0, &boxb, max_step, max_iters, gradient_tolerance)
        }
        OptimizerKind::NelderMead => nelder_mead(f, x0, f0, &boxb, max_iters),
    }
}

/// Central-difference gradient with probes kept inside the effective box.
fn boxed_gradient<T: Real>(f: &mut dyn FnMut(&[T]) -> T, x: &[T], boxb: &Box<T>) -> Vec<T> {
    let h = T::of(1e-6);
    let mut g = vec![T::zero(); x.len()];
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let step = h * T::one().max(x[j].abs());
        let xp = (x[j] + step).min(boxb.hi[j]);
        let xm = (x[j] - step).max(boxb.lo[j]);
        if xp <= xm {
            g[j] = T::zero();
            continue;
        }
        probe[j] = xp;
        let fp = f(&probe);
        probe[j] = xm;
        let fm = f(&probe);
        probe[j] = x[j];
        g[j] = (fp - fm) / (xp - xm);
    }
    g
}

/// Coordinates where a bound blocks descent: at the wall with the gradient
/// pushing further out. These carry the constraint multiplier, not curvature.
fn blocked_mask<T: Real>(g: &[T], x: &[T], boxb: &Box<T>) -> Vec<bool> {
    let rel = T::of(1e-9);
    g.iter()
        .enumerate()
        .map(|(j, &gj)| {
            if !boxb.span[j].is_finite() {
                return false;
            }
            let at_lo = (x[j] - boxb.lo[j]).abs() <= rel * boxb.span[j];
            let at_hi = (boxb.hi[j] - x[j]).abs() <= rel * boxb.span[j];
            (at_lo && gj > T::zero()) || (at_hi && gj < T::zero())
        })
        .collect()
}

/// Gradient with components that push outside an active bound zeroed.
fn project_gradient<T: Real>(g: &[T], x: &[T], boxb: &Box<T>) -> Vec<T> {
    g.iter()
        .zip(blocked_mask(g, x, boxb))
        .map(|(&gj, blocked)| if blocked { T::zero() } else { gj })
        .collect()
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

fn two_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|x| *x * *x).sum::<T>().sqrt()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

#[allow(clippy::too_many_arguments)]
fn bfgs<T: Real>(
    f: &mut dyn FnMut(&[T]) -> T,
    mut x: Vec<T>,
    mut fx: T,
    boxb: &Box<T>,
    max_step: Option<T>,
    max_iters: usize,
    gtol: T,
) -> Result<MapResult<T>> {
    let n = x.len();
    let mut g = boxed_gradient(f, &x, boxb);
    let init_scale = T::one() / T::one().max(two_norm(&project_gradient(&g, &x, boxb)));
    let mut b = Mat::identity(n);
    b.scale_in_place(init_scale);

    let mut converged = false;
    let mut iterations = 0;
    // True while B is an untouched scaled identity. A line search that fails
    // along fresh steepest descent has hit the floor where no decrease is
    // measurable in floating point, which is numerical stationarity; the same
    // failure with accumulated curvature usually just means B went stale
    // (riding a bound corrupts it), so we rebuild B and try again.
    let mut fresh_b = true;

    for it in 0..max_iters {
        iterations = it;
        if g.iter().any(|v| !v.is_finite()) {
            break;
        }
        let pg = project_gradient(&g, &x, boxb);
        if inf_norm(&pg) <= gtol * (T::one() + fx.abs()) {
            converged = true;
            break;
        }

        // Search direction: -B pg, reset to steepest descent if not a descent
        // direction, then projected at active bounds and norm-capped. All of
        // the quasi-Newton algebra runs on the projected gradient: a pinned
        // coordinate keeps a large multiplier component that carries no
        // curvature and would otherwise drown the free coordinates.
        let mut p = b.matvec(&pg);
        for v in &mut p {
            *v = -*v;
        }
        if dot(&p, &pg) >= T::zero() {
            let scale = T::one() / T::one().max(two_norm(&pg));
            b = Mat::identity(n);
            b.scale_in_place(scale);
            fresh_b = true;
            p = pg.iter().map(|&v| -v * scale).collect();
        }
        let rel = T::of(1e-9);
        for j in 0..n {
            if boxb.span[j].is_finite() {
                let at_lo = (x[j] - boxb.lo[j]).abs() <= rel * boxb.span[j];
                let at_hi = (boxb.hi[j] - x[j]).abs() <= rel * boxb.span[j];
                if (at_lo && p[j] < T::zero()) || (at_hi && p[j] > T::zero()) {
                    p[j] = T::zero();
                }
            }
        }
        let pnorm = two_norm(&p);
        if pnorm == T::zero() || !pnorm.is_finite() {
            break;
        }
        if let Some(cap) = max_step {
            if pnorm > cap {
                let scale = cap / pnorm;
                for v in &mut p {
                    *v *= scale;
                }
            }
        }

        // Projected Armijo backtracking: clamp the trial point and test the
        // decrease against the displacement that actually survived the clamp,
        // so a wall ahead of one coordinate cannot starve the others.
        let c1 = T::of(1e-4);
        let mut alpha = T::one();
        let mut accepted = None;
        for _ in 0..60 {
            let mut xt: Vec<T> = x.iter().zip(&p).map(|(&a, &d)| a + alpha * d).collect();
            boxb.clamp(&mut xt);
            let moved: Vec<T> = xt.iter().zip(&x).map(|(&a, &b2)| a - b2).collect();
            let ds = dot(&g, &moved);
            if inf_norm(&moved) > T::zero() && ds < T::zero() {
                let ft = f(&xt);
                if ft.is_finite() && ft <= fx + c1 * ds {
                    accepted = Some((xt, ft));
                    break;
                }
            }
            alpha = alpha * T::of(0.5);
        }
        let Some((xt, ft)) = accepted else {
            if fresh_b {
                converged = true;
            } else {
                let scale = T::one() / T::one().max(two_norm(&pg));
                b = Mat::identity(n);
                b.scale_in_place(scale);
                fresh_b = true;
            }
            if converged {
                break;
            }
            continue;
        };

        let step: Vec<T> = xt.iter().zip(&x).map(|(&a, &b2)| a - b2).collect();
        let g_new = boxed_gradient(f, &xt, boxb);

        let tiny_step = inf_norm(&step) <= T::of(1e-11) * (T::one() + inf_norm(&x));
        let tiny_drop = (fx - ft).abs() <= T::of(1e-13) * (T::one() + fx.abs());

        // The curvature pair lives in the free subspace at the new point;
        // components pinned at a bound would feed the multiplier into B.
        let mask = blocked_mask(&g_new, &xt, boxb);
        let s: Vec<T> = step
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m { T::zero() } else { v })
            .collect();
        let y: Vec<T> = g_new
            .iter()
            .zip(&g)
            .zip(&mask)
            .map(|((&a, &b2), &m)| if m { T::zero() } else { a - b2 })
            .collect();

        let was_fresh = fresh_b;
        let sy = dot(&s, &y);
        if sy > T::of(1e-10) * two_norm(&s) * two_norm(&y) {
            // Inverse BFGS update: B <- (I - r s y^T) B (I - r y s^T) + r s s^T.
            let r = T::one() / sy;
            let by = b.matvec(&y);
            let yby = dot(&y, &by);
            for i in 0..n {
                for j in 0..n {
                    let v = b.at(i, j) - r * (s[i] * by[j] + by[i] * s[j])
                        + r * r * yby * s[i] * s[j]
                        + r * s[i] * s[j];
                    b.set(i, j, v);
                }
            }
            fresh_b = false;
        }

        x = xt;
        fx = ft;
        g = g_new;

        if tiny_step && tiny_drop {
            // The iterate cannot move at this scale.
            let pg = project_gradient(&g, &x, boxb);
            if inf_norm(&pg) <= gtol * (T::one() + fx.abs()) || was_fresh {
                converged = true;
                iterations = it + 1;
                break;
            }
            let scale = T::one() / T::one().max(two_norm(&pg));
            b = Mat::identity(n);
            b.scale_in_place(scale);
            fresh_b = true;
        }
        iterations = it + 1;
    }

    // The loop may exit via max_iters with the gradient test now satisfied.
    if !converged {
        let pg = project_gradient(&g, &x, boxb);
        if g.iter().all(|v| v.is_finite()) && inf_norm(&pg) <= gtol * (T::one() + fx.abs()) {
            converged = true;
        }
    }

    let on_boundary = boxb.on_boundary(&x);
    Ok(MapResult {
        location: x,
        value: fx,
        converged,
        iterations,
        on_boundary,
    })
}

fn nelder_mead<T: Real>(
    f: &mut dyn FnMut(&[T]) -> T,
    x0: Vec<T>,
    f0: T,
    boxb: &Box<T>,
    max_iters: usize,
) -> Result<MapResult<T>> {
    let n = x0.len();
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), f0));
    for j in 0..n {
        let mut v = x0.clone();
        let step = T::of(0.05) * T::one().max(x0[j].abs());
        v[j] = v[j] + step;
        boxb.clamp(&mut v);
        if v[j] == x0[j] {
            v[j] = x0[j] - step;
            boxb.clamp(&mut v);
        }
        let fv = f(&v);
        simplex.push((v, fv));
    }

    let mut iterations = 0;
    let mut converged = false;
    for it in 0..max_iters {
        iterations = it;
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diam = simplex[1..]
            .iter()
            .map(|(v, _)| {
                v.iter()
                    .zip(&simplex[0].0)
                    .map(|(&a, &b2)| (a - b2).abs())
                    .fold(T::zero(), |acc, d| acc.max(d))
            })
            .fold(T::zero(), |acc, d| acc.max(d));
        if (worst - best).abs() <= T::of(1e-12) * (T::one() + best.abs())
            && diam <= T::of(1e-9) * (T::one() + inf_norm(&simplex[0].0))
        {
            converged = true;
            break;
        }

        let centroid: Vec<T> = (0..n)
            .map(|j| {
                simplex[..n].iter().map(|(v, _)| v[j]).sum::<T>() / T::of(n as f64)
            })
            .collect();
        let eval = |f: &mut dyn FnMut(&[T]) -> T, coef: T| {
            let mut v: Vec<T> = (0..n)
                .map(|j| centroid[j] + coef * (centroid[j] - simplex[n].0[j]))
                .collect();
            boxb.clamp(&mut v);
            let fv = f(&v);
            (v, fv)
        };

        let (xr, fr) = eval(f, T::one());
        if fr < simplex[0].1 {
            let (xe, fe) = eval(f, T::of(2.0));
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = eval(f, T::of(-0.5));
            if fc < simplex[n].1 {
                simplex[n] = (xc, fc);
            } else {
                // Shrink towards the best vertex.
                let half = T::of(0.5);
                for k in 1..=n {
                    let v: Vec<T> = (0..n)
                        .map(|j| simplex[0].0[j] + half * (simplex[k].0[j] - simplex[0].0[j]))
                        .collect();
                    let fv = f(&v);
                    simplex[k] = (v, fv);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, fx) = simplex.swap_remove(0);
    let on_boundary = boxb.on_boundary(&x);
    Ok(MapResult {
        location: x,
        value: fx,
        converged,
        iterations,
        on_boundary,
    })
}

/// MAP search for one posterior problem: minimises the negative log kernel
/// from `start`, bounded by the prior support, with the step cap taken from
/// `cfg.max_step_scale` times the prior length scale.
pub fn find_map<T: Real>(
    prob: &PosteriorProblem<'_, T>,
    view: &NoiseView<'_, T>,
    start: &[T],
    cfg: &SearchConfig<T>,
) -> Result<MapResult<T>> {
    let max_step = cfg.max_step_scale * prob.prior.length_scale();
    let mut obj = |theta: &[T]| prob.neg_log_posterior(theta, view);
    minimize(
        &mut obj,
        start,
        prob.prior.support_bounds(),
        Some(max_step),
        cfg.optimizer,
        cfg.max_iters,
        cfg.gradient_tolerance,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{simulate_observations, ForwardModel, Prior};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn run(
        f: &mut dyn FnMut(&[f64]) -> f64,
        start: &[f64],
        bounds: Option<(&[f64], &[f64])>,
        kind: OptimizerKind,
    ) -> MapResult<f64> {
        minimize(f, start, bounds, None, kind, 500, 1e-8).unwrap()
    }

    #[test]
    fn sphere_minimum_is_found_from_a_far_start() {
        let c = [1.0, -2.0, 0.5];
        let mut f = |x: &[f64]| {
            x.iter()
                .zip(&c)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        };
        for kind in [OptimizerKind::QuasiNewtonFd, OptimizerKind::NelderMead] {
            let r = run(&mut f, &[5.0, 5.0, 5.0], None, kind);
            assert!(r.converged, "{kind:?} failed to converge");
            for j in 0..3 {
                assert!((r.location[j] - c[j]).abs() < 1e-5, "{kind:?}");
            }
        }
    }

    #[test]
    fn rosenbrock_valley_is_tracked_to_the_optimum() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = run(&mut f, &[-1.2, 1.0], None, OptimizerKind::QuasiNewtonFd);
        assert!(r.converged);
        assert!((r.location[0] - 1.0).abs() < 1e-4);
        assert!((r.location[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn a_start_at_the_minimum_converges_immediately() {
        let mut f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let r = run(&mut f, &[0.0, 0.0], None, OptimizerKind::QuasiNewtonFd);
        assert!(r.converged);
        assert!(r.iterations <= 2);
    }

    #[test]
    fn boundary_minimum_is_accepted_and_flagged() {
        let lo = [0.0];
        let hi = [10.0];
        let mut f = |x: &[f64]| (x[0] + 2.0) * (x[0] + 2.0);
        let r = run(
            &mut f,
            &[5.0],
            Some((&lo, &hi)),
            OptimizerKind::QuasiNewtonFd,
        );
        assert!(r.converged, "projected gradient should vanish at the wall");
        assert!(r.on_boundary);
        assert!(r.location[0] < 1e-6);
    }

    #[test]
    fn infinite_start_is_rejected_with_location() {
        let lo = [0.0];
        let hi = [1.0];
        let mut f = |x: &[f64]| {
            if x[0] > 0.5 {
                f64::INFINITY
            } else {
                x[0]
            }
        };
        // Start outside the finite region but inside the box.
        let err = minimize(
            &mut f,
            &[0.9],
            Some((&lo, &hi)),
            None,
            OptimizerKind::QuasiNewtonFd,
            100,
            1e-8,
        )
        .unwrap_err();
        assert!(err.to_string().contains("start rejected"), "{err}");
        assert!(err.to_string().contains("0.9"), "{err}");
    }

    #[test]
    fn step_cap_limits_single_moves_but_not_convergence() {
        let mut f = |x: &[f64]| (x[0] - 50.0) * (x[0] - 50.0);
        let r = minimize(
            &mut f,
            &[0.0],
            None,
            Some(1.0),
            OptimizerKind::QuasiNewtonFd,
            500,
            1e-8,
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.location[0] - 50.0).abs() < 1e-5);
        // At least 50 unit-capped steps were needed.
        assert!(r.iterations >= 50);
    }

    struct Line;
    impl ForwardModel<f64> for Line {
        fn param_dim(&self) -> usize {
            1
        }
        fn obs_dim(&self) -> usize {
            1
        }
        fn evaluate(&self, t: &[f64], _xi: &[f64]) -> Vec<f64> {
            vec![t[0]]
        }
        fn name(&self) -> &str {
            "line"
        }
    }

    #[test]
    fn map_of_a_conjugate_gaussian_problem_matches_the_closed_form() {
        let prior = Prior::gaussian(vec![1.0], vec![2.0]).unwrap();
        let sigma = 0.5;
        let m = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = simulate_observations(&Line, &[2.0], &[], sigma, m, &mut rng).unwrap();
        let ybar = data.mean_row()[0];
        // Posterior mean of a Gaussian-Gaussian model.
        let prec = m as f64 / (sigma * sigma) + 1.0 / 2.0;
        let want = (m as f64 * ybar / (sigma * sigma) + 1.0 / 2.0) / prec;

        let prob = crate::posterior::PosteriorProblem {
            model: &Line,
            prior: &prior,
            xi: &[],
            data: &data,
        };
        let cfg = SearchConfig::default();
        let view = NoiseView::Calibrated(sigma);
        for start in [-3.0, 0.0, 4.0] {
            let r = find_map(&prob, &view, &[start], &cfg).unwrap();
            assert!(r.converged);
            assert!(
                (r.location[0] - want).abs() < 1e-6,
                "start {start}: {} vs {want}",
                r.location[0]
            );
        }
    }
}
