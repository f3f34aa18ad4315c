use serde::{Deserialize, Serialize};

use super::sandbox::{CandidateResult, CandidateStatus};
use super::EvalError;

/// How pass@k is computed from `n >= k` candidates per problem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassAtKMode {
    /// A problem counts as solved when any of its first `k` candidates passes.
    #[default]
    FirstK,
    /// `1 - C(n - c, k) / C(n, k)` averaged over problems.
    Unbiased,
}

pub trait Passed {
    fn passed(&self) -> bool;
}

impl Passed for bool {
    fn passed(&self) -> bool {
        *self
    }
}

impl Passed for CandidateStatus {
    fn passed(&self) -> bool {
        *self == CandidateStatus::Pass
    }
}

impl Passed for CandidateResult {
    fn passed(&self) -> bool {
        self.status.passed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassAtK {
    pub k: usize,
    /// Problems solved within the first `k` candidates.
    pub solved: usize,
    pub total: usize,
    pub value: f64,
}

/// Probability that a random size-`k` subset of `n` candidates, `c` of them
/// correct, contains a correct one.
pub fn unbiased_estimate(n: usize, c: usize, k: usize) -> f64 {
    if n - c < k {
        return 1.0;
    }
    1.0 - ((n - c + 1)..=n).map(|i| 1.0 - k as f64 / i as f64).product::<f64>()
}

/// `results` holds one ordered candidate list per problem.
pub fn pass_at_k<C: Passed>(results: &[Vec<C>], k: usize, mode: PassAtKMode) -> Result<PassAtK, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidConfig("k must be at least 1".into()));
    }
    if results.is_empty() {
        return Err(EvalError::EmptyBenchmark);
    }
    if let Some((problem, have)) = results
        .iter()
        .enumerate()
        .find(|(_, c)| c.len() < k)
        .map(|(i, c)| (i, c.len()))
    {
        return Err(EvalError::NotEnoughCandidates { problem, have, need: k });
    }
    let solved = results.iter().filter(|c| c[..k].iter().any(Passed::passed)).count();
    let total = results.len();
    let value = match mode {
        PassAtKMode::FirstK => solved as f64 / total as f64,
        PassAtKMode::Unbiased => {
            results
                .iter()
                .map(|c| unbiased_estimate(c.len(), c.iter().filter(|x| x.passed()).count(), k))
                .sum::<f64>()
                / total as f64
        }
    };
    Ok(PassAtK { k, solved, total, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_k_semantics() {
        // Problem 0 solved by its second candidate, problem 1 never, problem 2 by its first.
        let results = vec![vec![false, true], vec![false, false], vec![true, false]];
        let p1 = pass_at_k(&results, 1, PassAtKMode::FirstK).unwrap();
        assert_eq!((p1.solved, p1.total), (1, 3));
        assert!((p1.value - 1.0 / 3.0).abs() < 1e-12);
        let p2 = pass_at_k(&results, 2, PassAtKMode::FirstK).unwrap();
        assert_eq!(p2.solved, 2);
    }

    #[test]
    fn unbiased_matches_enumeration() {
        // n = 5, c = 2, k = 2: 1 - C(3,2)/C(5,2) = 1 - 3/10.
        assert!((unbiased_estimate(5, 2, 2) - 0.7).abs() < 1e-12);
        assert_eq!(unbiased_estimate(3, 3, 1), 1.0);
        assert_eq!(unbiased_estimate(4, 0, 2), 0.0);
    }

    #[test]
    fn rejects_short_lists() {
        assert!(matches!(
            pass_at_k(&[vec![true]], 2, PassAtKMode::FirstK),
            Err(EvalError::NotEnoughCandidates { problem: 0, have: 1, need: 2 })
        ));
        assert!(pass_at_k::<bool>(&[], 1, PassAtKMode::FirstK).is_err());
        assert!(pass_at_k(&[vec![true]], 0, PassAtKMode::FirstK).is_err());
    }
}
