//! Mode atlas construction: Latin hypercube starting points pushed through
//! the prior quantile transform, deduplicated multistart MAP runs, and the
//! run-count rule `n >= (log beta - log K) / log(1 - p_min)` that caps the
//! probability of missing any of `K` modes whose basins each catch a start
//! with probability at least `p_min`.
//!
//! A deterministic recombination pass follows the random starts: spurious
//! minima are often correct on one coordinate block at a time (one sensor
//! placed right, its partner reflected), so swapping blocks between found
//! modes can assemble a candidate far better than either parent. Improving
//! recombinants are polished by extra local runs until the atlas stops
//! growing.
//!
//! Callers that know good points (the simulator's own parameter draw, a
//! previous atlas) can pass them as anchors; each anchor gets one local run
//! alongside the random starts, so a mode with a tiny basin is still found
//! whenever an anchor sits inside it.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::Prior;
use crate::optimize::{minimize, MapResult, SearchConfig};
use crate::real::Real;

/// Smallest `n` with `K (1 - p_min)^n <= beta` (union bound on the miss
/// probability). The float arithmetic is nudged to the exact minimal `n`.
pub fn required_runs<T: Real>(beta: T, modes: usize, p_min: T) -> Result<usize> {
    if !(beta > T::zero() && beta < T::one()) {
        return Err(Error::Domain("miss probability must lie in (0, 1)".into()));
    }
    if modes == 0 {
        return Err(Error::Domain("need at least one mode".into()));
    }
    if !(p_min > T::zero() && p_min < T::one()) {
        return Err(Error::Domain(
            "per-mode capture probability must lie in (0, 1)".into(),
        ));
    }
    let k = T::of(modes as f64);
    let q = T::one() - p_min;
    let miss_ok = |n: usize| k * q.powi(n as i32) <= beta;

    let raw = ((beta.ln() - k.ln()) / q.ln()).ceil();
    let mut n = raw.to_f64().map(|v| v.max(0.0) as usize).unwrap_or(0);
    while n > 0 && miss_ok(n - 1) {
        n -= 1;
    }
    while !miss_ok(n) {
        n += 1;
    }
    Ok(n.max(1))
}

/// `n` starting points, one per Latin hypercube stratum in every coordinate,
/// mapped through the prior quantile transform.
pub fn latin_hypercube_starts<T: Real, R: Rng + ?Sized>(
    prior: &Prior<T>,
    n: usize,
    rng: &mut R,
) -> Vec<Vec<T>> {
    let d = prior.dim();
    let mut starts = vec![vec![T::zero(); d]; n];
    let nf = T::of(n as f64);
    for j in 0..d {
        // Random permutation of the strata for this coordinate.
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let k = rng.random_range(0..=i);
            perm.swap(i, k);
        }
        for (i, start) in starts.iter_mut().enumerate() {
            let u = (T::of(perm[i] as f64) + T::unit_uniform(rng)) / nf;
            start[j] = prior.quantile(j, u);
        }
    }
    starts
}

/// One deduplicated local minimum of the search objective.
#[derive(Clone, Debug)]
pub struct ModeCandidate<T> {
    pub location: Vec<T>,
    /// Objective value (negative log kernel) at the mode.
    pub value: T,
    pub on_boundary: bool,
}

/// Result of a multistart search: distinct modes sorted best-first, plus
/// per-run diagnostics.
#[derive(Clone, Debug)]
pub struct ModeSearchOutcome<T> {
    pub modes: Vec<ModeCandidate<T>>,
    pub attempted: usize,
    pub converged: usize,
    pub run_converged: Vec<bool>,
    /// Extra local runs spent polishing recombined candidates.
    pub polished: usize,
}

/// Greedy dedup: keep candidates (already sorted best-first) whose distance
/// to everything kept so far is at least `radius`.
fn dedup_candidates<T: Real>(sorted: Vec<ModeCandidate<T>>, radius: T) -> Vec<ModeCandidate<T>> {
    let mut kept: Vec<ModeCandidate<T>> = Vec::new();
    for cand in sorted {
        let distinct = kept.iter().all(|m| {
            let d2: T = m
                .location
                .iter()
                .zip(&cand.location)
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            d2.sqrt() >= radius
        });
        if distinct {
            kept.push(cand);
        }
    }
    kept
}

/// Runs `cfg.starts` bounded local searches from Latin hypercube starts plus
/// one per anchor point, recombines the survivors over `blocks` (one block
/// per coordinate when `None`), and returns the deduplicated modes, best
/// objective value first.
///
/// Individual runs that fail to converge (or start where the objective is
/// infinite) are recorded and dropped; only a search with zero convergent
/// runs is an error.
pub fn multistart_mode_search<T: Real, R: Rng + ?Sized>(
    objective: &mut dyn FnMut(&[T]) -> T,
    prior: &Prior<T>,
    cfg: &SearchConfig<T>,
    blocks: Option<&[Vec<usize>]>,
    anchors: &[Vec<T>],
    rng: &mut R,
) -> Result<ModeSearchOutcome<T>> {
    if cfg.starts == 0 {
        return Err(Error::Domain("mode search needs at least one start".into()));
    }
    let mut starts = latin_hypercube_starts(prior, cfg.starts, rng);
    starts.extend(anchors.iter().cloned());
    let max_step = cfg.max_step_scale * prior.length_scale();
    let bounds = prior.support_bounds();

    let mut run_converged = Vec::with_capacity(starts.len());
    let mut results: Vec<MapResult<T>> = Vec::new();
    for start in &starts {
        match minimize(
            objective,
            start,
            bounds,
            Some(max_step),
            cfg.optimizer,
            cfg.max_iters,
            cfg.gradient_tolerance,
        ) {
            Ok(r) if r.converged && r.value.is_finite() => {
                run_converged.push(true);
                results.push(r);
            }
            _ => run_converged.push(false),
        }
    }

    let converged = results.len();
    if converged == 0 {
        return Err(Error::SearchFailed {
            attempted: starts.len(),
        });
    }

    results.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal));
    let sorted: Vec<ModeCandidate<T>> = results
        .into_iter()
        .map(|r| ModeCandidate {
            location: r.location,
            value: r.value,
            on_boundary: r.on_boundary,
        })
        .collect();
    let radius = cfg.dedup_radius * prior.length_scale();
    let mut modes = dedup_candidates(sorted, radius);

    let singles: Vec<Vec<usize>>;
    let blocks = match blocks {
        Some(b) if !b.is_empty() => b,
        _ => {
            singles = (0..prior.dim()).map(|j| vec![j]).collect();
            &singles
        }
    };
    let polished = recombine_modes(objective, &mut modes, blocks, cfg, bounds, max_step, radius);

    Ok(ModeSearchOutcome {
        modes,
        attempted: starts.len(),
        converged,
        run_converged,
        polished,
    })
}

/// Block crossover between discovered modes. Each candidate copies one block
/// from a second parent; candidates that land within the mass window of the
/// current best are polished by a local run and kept when they survive dedup.
/// Passes repeat until the atlas stops growing. Deterministic: consumes no
/// randomness. Returns the number of polish runs spent.
fn recombine_modes<T: Real>(
    objective: &mut dyn FnMut(&[T]) -> T,
    modes: &mut Vec<ModeCandidate<T>>,
    blocks: &[Vec<usize>],
    cfg: &SearchConfig<T>,
    bounds: Option<(&[T], &[T])>,
    max_step: T,
    radius: T,
) -> usize {
    if blocks.len() < 2 || modes.len() < 2 {
        return 0;
    }
    // Components more than -log(floor) below the best are pruned from the
    // mixture anyway; double that window so polish can still improve a
    // borderline candidate into relevance.
    let window = T::of(-2.0) * cfg.weight_floor.ln();
    let budget = 2 * cfg.starts;
    let mut polished = 0usize;

    for _pass in 0..3 {
        let parents: Vec<(Vec<T>, T)> = modes
            .iter()
            .map(|m| (m.location.clone(), m.value))
            .collect();
        let best = parents[0].1;
        let mut grew = false;
        'pairs: for (i, (loc_i, _)) in parents.iter().enumerate() {
            for (j, (loc_j, _)) in parents.iter().enumerate() {
                if i == j {
                    continue;
                }
                for block in blocks {
                    if polished >= budget {
                        break 'pairs;
                    }
                    let mut cand = loc_i.clone();
                    for &c in block {
                        cand[c] = loc_j[c];
                    }
                    if near_any(&cand, modes, radius) {
                        continue;
                    }
                    let fc = objective(&cand);
                    if !fc.is_finite() || fc >= best + window {
                        continue;
                    }
                    polished += 1;
                    let Ok(r) = minimize(
                        objective,
                        &cand,
                        bounds,
                        Some(max_step),
                        cfg.optimizer,
                        cfg.max_iters,
                        cfg.gradient_tolerance,
                    ) else {
                        continue;
                    };
                    if !(r.converged && r.value.is_finite()) || near_any(&r.location, modes, radius)
                    {
                        continue;
                    }
                    modes.push(ModeCandidate {
                        location: r.location,
                        value: r.value,
                        on_boundary: r.on_boundary,
                    });
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
        modes.sort_by(|a, b| a.value.partial_cmp(&b.value).unwrap_or(std::cmp::Ordering::Equal));
    }
    polished
}

fn near_any<T: Real>(point: &[T], modes: &[ModeCandidate<T>], radius: T) -> bool {
    modes.iter().any(|m| {
        let d2: T = m
            .location
            .iter()
            .zip(point)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        d2.sqrt() < radius
    })
}
