//! Search over measurement subsets: pick the `size`-element subset of a
//! candidate pool that maximises estimated EIG.
//!
//! Small pools are enumerated exhaustively in lexicographic order, which
//! makes the walk resumable by rank; larger ones fall back to a greedy
//! forward chain that grows the design one component at a time. The switch
//! is driven by the evaluation budget: exhaustive needs `C(n, size)`
//! estimator runs, greedy needs `n + (n-1) + ... + (n-size+1)`. Passing a
//! resume rank (`Some(0)` to start) pins the walk to exhaustive mode, so a
//! big enumeration can be paid for in budget-sized installments.
//!
//! Every evaluation derives its seed from the subset's identity (rank or
//! chain position), never from evaluation order, so a resumed walk and a
//! fresh one produce identical numbers for identical subsets.

use crate::error::{Error, Result};
use crate::estimators::{
    eig_dlmc, eig_la, eig_lais, eig_mla, eig_mnis, EigEstimate, LaplaceOptions, Scheme,
};
use crate::model::Experiment;
use crate::optimize::SearchConfig;
use crate::real::Real;
use crate::rng;

/// How a subset search spends its estimator evaluations.
pub struct SubsetSearchConfig<T: Real> {
    pub scheme: Scheme,
    pub outer: usize,
    pub inner: usize,
    pub search: SearchConfig<T>,
    pub seed: u64,
    /// Maximum number of estimator evaluations this call may perform.
    pub budget: u64,
    /// Lexicographic rank to resume an exhaustive walk from.
    pub resume: Option<u64>,
}

/// One estimated design.
pub struct EvaluatedDesign<T: Real> {
    pub pairs: Vec<(usize, usize)>,
    /// Lexicographic rank when the walk was exhaustive.
    pub rank: Option<u64>,
    pub estimate: EigEstimate<T>,
}

/// Partial or complete outcome of a subset search.
pub struct SubsetSearchResult<T: Real> {
    pub evaluated: Vec<EvaluatedDesign<T>>,
    /// Index into `evaluated` of the winning design, if any was completed.
    pub best: Option<usize>,
    pub exhaustive: bool,
    /// Rank to pass as `resume` to continue an interrupted exhaustive walk.
    pub resume_token: Option<u64>,
}

/// `C(n, k)` without overflow for the pool sizes subset search deals in.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    u64::try_from(acc).expect("binomial fits in u64")
}

/// The `rank`-th `k`-subset of `0..n` in lexicographic order.
pub fn unrank_combination(n: usize, k: usize, rank: u64) -> Vec<usize> {
    debug_assert!(rank < binomial(n as u64, k as u64));
    let mut subset = Vec::with_capacity(k);
    let mut remaining = rank;
    let mut next = 0usize;
    for slot in (1..=k).rev() {
        let mut c = next;
        loop {
            let with_c = binomial((n - c - 1) as u64, (slot - 1) as u64);
            if remaining < with_c {
                subset.push(c);
                next = c + 1;
                break;
            }
            remaining -= with_c;
            c += 1;
        }
    }
    subset
}

fn run_estimator<T: Real>(
    cfg: &SubsetSearchConfig<T>,
    exp: &Experiment<T>,
    seed: u64,
) -> Result<EigEstimate<T>> {
    let opts = LaplaceOptions::default();
    match cfg.scheme {
        Scheme::Dlmc => eig_dlmc(exp, cfg.outer, cfg.inner, seed),
        Scheme::La => eig_la(exp, cfg.outer, &cfg.search, &opts, seed),
        Scheme::Mla => eig_mla(exp, cfg.outer, &cfg.search, &opts, seed),
        Scheme::Lais => eig_lais(exp, cfg.outer, cfg.inner, &cfg.search, seed),
        Scheme::Mnis => eig_mnis(exp, cfg.outer, cfg.inner, &cfg.search, seed),
    }
}

fn better<T: Real>(a: &EigEstimate<T>, b: &EigEstimate<T>) -> bool {
    a.value > b.value
}

/// Searches for the best `size`-pair design drawn from `candidates`.
///
/// `build` turns a chosen pair subset into a runnable experiment. The walk is
/// exhaustive when `C(n, size)` fits the budget, greedy otherwise; greedy
/// refuses budgets too small for its full chain rather than stopping with an
/// incomparable partial design.
pub fn best_design_search<T: Real>(
    candidates: &[(usize, usize)],
    size: usize,
    build: &dyn Fn(&[(usize, usize)]) -> Result<Experiment<T>>,
    cfg: &SubsetSearchConfig<T>,
) -> Result<SubsetSearchResult<T>> {
    let n = candidates.len();
    if size == 0 || size > n {
        return Err(Error::Domain(format!(
            "subset size {size} is outside 1..={n}"
        )));
    }
    if cfg.budget == 0 {
        return Err(Error::Domain("subset search budget must be positive".into()));
    }
    let total = binomial(n as u64, size as u64);
    if total <= cfg.budget || cfg.resume.is_some() {
        exhaustive_walk(candidates, size, build, cfg, total)
    } else {
        greedy_chain(candidates, size, build, cfg)
    }
}

fn exhaustive_walk<T: Real>(
    candidates: &[(usize, usize)],
    size: usize,
    build: &dyn Fn(&[(usize, usize)]) -> Result<Experiment<T>>,
    cfg: &SubsetSearchConfig<T>,
    total: u64,
) -> Result<SubsetSearchResult<T>> {
    let start = cfg.resume.unwrap_or(0);
    if start >= total {
        return Err(Error::Domain(format!(
            "resume rank {start} is past the end of the {total}-subset walk"
        )));
    }
    let mut evaluated: Vec<EvaluatedDesign<T>> = Vec::new();
    let mut best: Option<usize> = None;
    let mut resume_token = None;
    let mut spent = 0u64;
    for rank in start..total {
        if spent == cfg.budget {
            resume_token = Some(rank);
            break;
        }
        let pairs: Vec<(usize, usize)> = unrank_combination(candidates.len(), size, rank)
            .into_iter()
            .map(|i| candidates[i])
            .collect();
        let exp = build(&pairs)?;
        let estimate = run_estimator(cfg, &exp, rng::repeat_seed(cfg.seed, rank))?;
        spent += 1;
        let idx = evaluated.len();
        if best.map_or(true, |b| better(&estimate, &evaluated[b].estimate)) {
            best = Some(idx);
        }
        evaluated.push(EvaluatedDesign {
            pairs,
            rank: Some(rank),
            estimate,
        });
    }
    Ok(SubsetSearchResult {
        evaluated,
        best,
        exhaustive: true,
        resume_token,
    })
}

fn greedy_chain<T: Real>(
    candidates: &[(usize, usize)],
    size: usize,
    build: &dyn Fn(&[(usize, usize)]) -> Result<Experiment<T>>,
    cfg: &SubsetSearchConfig<T>,
) -> Result<SubsetSearchResult<T>> {
    let n = candidates.len() as u64;
    let need: u64 = (0..size as u64).map(|level| n - level).sum();
    if cfg.budget < need {
        return Err(Error::Domain(format!(
            "greedy chain over {n} candidates at size {size} needs {need} evaluations \
             but the budget allows {}",
            cfg.budget
        )));
    }
    let mut evaluated: Vec<EvaluatedDesign<T>> = Vec::new();
    let mut selected: Vec<usize> = Vec::new();
    let mut best_overall: Option<usize> = None;
    for level in 0..size {
        let mut best_here: Option<usize> = None;
        for ci in 0..candidates.len() {
            if selected.contains(&ci) {
                continue;
            }
            let mut chosen: Vec<usize> = selected.clone();
            chosen.push(ci);
            chosen.sort_unstable();
            let pairs: Vec<(usize, usize)> = chosen.iter().map(|&i| candidates[i]).collect();
            let exp = build(&pairs)?;
            let tag = ((level as u64) << 32) | ci as u64;
            let estimate = run_estimator(cfg, &exp, rng::repeat_seed(cfg.seed, tag))?;
            let idx = evaluated.len();
            if best_here.map_or(true, |b| better(&estimate, &evaluated[b].estimate)) {
                best_here = Some(idx);
            }
            evaluated.push(EvaluatedDesign {
                pairs,
                rank: None,
                estimate,
            });
        }
        let winner = best_here.expect("at least one candidate per level");
        let winner_pairs = evaluated[winner].pairs.clone();
        selected = winner_pairs
            .iter()
            .map(|p| candidates.iter().position(|c| c == p).expect("candidate"))
            .collect();
        best_overall = Some(winner);
    }
    Ok(SubsetSearchResult {
        evaluated,
        best: best_overall,
        exhaustive: false,
        resume_token: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::sensors::sensor6_with_pairs;

    fn tiny_config(budget: u64, resume: Option<u64>) -> SubsetSearchConfig<f64> {
        SubsetSearchConfig {
            scheme: Scheme::Dlmc,
            outer: 8,
            inner: 8,
            search: SearchConfig::default(),
            seed: 424242,
            budget,
            resume,
        }
    }

    fn build(pairs: &[(usize, usize)]) -> Result<Experiment<f64>> {
        sensor6_with_pairs(pairs, 0.0256)
    }

    #[test]
    fn binomial_matches_pascal_identities() {
        assert_eq!(binomial(14, 2), 91);
        assert_eq!(binomial(14, 6), 3003);
        assert_eq!(binomial(5, 0), 1);
        assert_eq!(binomial(3, 7), 0);
        for n in 1..20u64 {
            for k in 1..n {
                assert_eq!(binomial(n, k), binomial(n - 1, k - 1) + binomial(n - 1, k));
            }
        }
    }

    #[test]
    fn unranking_enumerates_subsets_in_lexicographic_order() {
        let all: Vec<Vec<usize>> = (0..binomial(5, 3)).map(|r| unrank_combination(5, 3, r)).collect();
        assert_eq!(all.len(), 10);
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[9], vec![2, 3, 4]);
        for w in all.windows(2) {
            assert!(w[0] < w[1], "{:?} !< {:?}", w[0], w[1]);
        }
        for s in &all {
            assert!(s.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn exhaustive_walk_covers_every_subset_once() {
        let candidates = sensor6_full_pairs_prefix(5);
        let result = best_design_search(&candidates, 2, &build, &tiny_config(100, None)).unwrap();
        assert!(result.exhaustive);
        assert_eq!(result.evaluated.len(), 10);
        assert!(result.resume_token.is_none());
        let best = result.best.unwrap();
        let best_value = result.evaluated[best].estimate.value;
        assert!(result
            .evaluated
            .iter()
            .all(|e| e.estimate.value <= best_value));
    }

    #[test]
    fn interrupted_walk_resumes_with_identical_numbers() {
        let candidates = sensor6_full_pairs_prefix(5);
        let first = best_design_search(&candidates, 2, &build, &tiny_config(4, Some(0))).unwrap();
        assert_eq!(first.evaluated.len(), 4);
        let token = first.resume_token.unwrap();
        assert_eq!(token, 4);
        let second =
            best_design_search(&candidates, 2, &build, &tiny_config(100, Some(token))).unwrap();
        assert_eq!(second.evaluated.len(), 6);
        assert!(second.resume_token.is_none());

        let full = best_design_search(&candidates, 2, &build, &tiny_config(100, None)).unwrap();
        let stitched: Vec<f64> = first
            .evaluated
            .iter()
            .chain(second.evaluated.iter())
            .map(|e| e.estimate.value)
            .collect();
        let straight: Vec<f64> = full.evaluated.iter().map(|e| e.estimate.value).collect();
        assert_eq!(stitched, straight);
    }

    #[test]
    fn oversized_budget_is_not_needed_for_greedy_fallback() {
        let candidates = sensor6_full_pairs_prefix(6);
        // C(6, 3) = 20 > budget 18, greedy chain needs 6 + 5 + 4 = 15.
        let result = best_design_search(&candidates, 3, &build, &tiny_config(18, None)).unwrap();
        assert!(!result.exhaustive);
        assert_eq!(result.evaluated.len(), 15);
        let best = &result.evaluated[result.best.unwrap()];
        assert_eq!(best.pairs.len(), 3);
    }

    #[test]
    fn greedy_chain_grows_nested_designs() {
        let candidates = sensor6_full_pairs_prefix(6);
        let result = best_design_search(&candidates, 2, &build, &tiny_config(11, None)).unwrap();
        assert!(!result.exhaustive);
        let best = &result.evaluated[result.best.unwrap()];
        assert_eq!(best.pairs.len(), 2);
        // The level-one winner must be a subset of the level-two winner.
        let level_one_best = result
            .evaluated
            .iter()
            .filter(|e| e.pairs.len() == 1)
            .max_by(|a, b| a.estimate.value.partial_cmp(&b.estimate.value).unwrap())
            .unwrap();
        assert!(best.pairs.contains(&level_one_best.pairs[0]));
    }

    #[test]
    fn greedy_with_impossible_budget_is_refused_upfront() {
        let candidates = sensor6_full_pairs_prefix(6);
        assert!(best_design_search(&candidates, 3, &build, &tiny_config(10, None)).is_err());
    }

    #[test]
    fn a_resume_rank_forces_the_exhaustive_walk() {
        // C(6, 3) = 20 exceeds the budget, which alone would pick greedy.
        let candidates = sensor6_full_pairs_prefix(6);
        let result =
            best_design_search(&candidates, 3, &build, &tiny_config(15, Some(0))).unwrap();
        assert!(result.exhaustive);
        assert_eq!(result.evaluated.len(), 15);
        assert_eq!(result.resume_token, Some(15));
    }

    #[test]
    fn resume_past_the_end_is_refused() {
        let candidates = sensor6_full_pairs_prefix(5);
        assert!(best_design_search(&candidates, 2, &build, &tiny_config(10, Some(10))).is_err());
    }

    fn sensor6_full_pairs_prefix(k: usize) -> Vec<(usize, usize)> {
        crate::benchmarks::sensors::sensor6_full_pairs()
            .into_iter()
            .take(k)
            .collect()
    }
}
