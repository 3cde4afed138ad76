//! Parameter sets and permutation-aware distances between them.

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};

/// Largest k for which exhaustive permutation matching is attempted.
pub const MAX_MATCHING_K: usize = 8;

/// An ordered list of k regression vectors, one row per component.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    components: Array2<f64>,
}

impl ParameterSet {
    /// Builds a parameter set from a k-by-d matrix of components.
    pub fn new(components: Array2<f64>) -> Result<Self> {
        let (k, d) = components.dim();
        if k == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "parameter set requires k >= 1 and d >= 1, got k = {k}, d = {d}"
            )));
        }
        if components.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "parameter set contains a non-finite entry".into(),
            ));
        }
        Ok(Self { components })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("parameter set requires k >= 1".into()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(
                "components have differing dimensions".into(),
            ));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = Array2::from_shape_vec((rows.len(), d), flat).expect("checked shape");
        Self::new(m)
    }

    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn component(&self, j: usize) -> ArrayView1<'_, f64> {
        self.components.row(j)
    }

    pub fn components(&self) -> &Array2<f64> {
        &self.components
    }

    pub fn components_mut(&mut self) -> &mut Array2<f64> {
        &mut self.components
    }

    /// Euclidean norm of component j.
    pub fn component_norm(&self, j: usize) -> f64 {
        self.component(j).dot(&self.component(j)).sqrt()
    }

    pub fn max_component_norm(&self) -> f64 {
        (0..self.k())
            .map(|j| self.component_norm(j))
            .fold(0.0, f64::max)
    }

    /// Returns a new set with components reordered as `perm`, i.e. row j of
    /// the result is row `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "permutation length {} != k = {}",
                perm.len(),
                self.k()
            )));
        }
        let rows: Vec<Vec<f64>> = perm
            .iter()
            .map(|&j| self.component(j).to_vec())
            .collect();
        Self::from_rows(&rows)
    }
}

/// Distances between two parameter sets under the best component matching.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDistance {
    /// Per-component distances `|| a_j - b_matching[j] ||`.
    pub distances: Vec<f64>,
    /// The permutation of b's components that minimizes the maximum
    /// distance; ties broken by the lexicographically smallest permutation.
    pub matching: Vec<usize>,
}

impl ParamDistance {
    pub fn max(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }
}

/// Matches components of `b` to components of `a`, minimizing the largest
/// per-pair Euclidean distance over all permutations of `b`.
///
/// Exhaustive over all k! permutations; rejects k > [`MAX_MATCHING_K`]
/// because exactness matters more than scale at the k this crate targets.
pub fn param_distance(a: &ParameterSet, b: &ParameterSet) -> Result<ParamDistance> {
    if a.k() != b.k() || a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "parameter sets differ: ({}, {}) vs ({}, {})",
            a.k(),
            a.dim(),
            b.k(),
            b.dim()
        )));
    }
    let k = a.k();
    if k > MAX_MATCHING_K {
        return Err(Error::MatchingTooLarge {
            got: k,
            max: MAX_MATCHING_K,
        });
    }

    // Pairwise distance table: cost[i][j] = || a_i - b_j ||.
    let mut cost = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in 0..k {
            let diff = &a.component(i) - &b.component(j);
            cost[i][j] = diff.dot(&diff).sqrt();
        }
    }

    // Lexicographic enumeration; strict improvement keeps the earliest
    // (lexicographically smallest) permutation on ties.
    let mut best_perm: Option<Vec<usize>> = None;
    let mut best_max = f64::INFINITY;
    let mut perm: Vec<usize> = (0..k).collect();
    loop {
        let max = (0..k).map(|i| cost[i][perm[i]]).fold(0.0, f64::max);
        if max < best_max {
            best_max = max;
            best_perm = Some(perm.clone());
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }

    let matching = best_perm.expect("k >= 1 guarantees at least one permutation");
    let distances = (0..k).map(|i| cost[i][matching[i]]).collect();
    Ok(ParamDistance {
        distances,
        matching,
    })
}

/// Advances `perm` to its lexicographic successor; false once exhausted.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn basis(k: usize, d: usize) -> ParameterSet {
        let mut m = Array2::zeros((k, d));
        for j in 0..k {
            m[[j, j]] = 1.0;
        }
        ParameterSet::new(m).unwrap()
    }

    #[test]
    fn identical_sets_match_identity() {
        for k in 1..=4 {
            let a = basis(k, 5);
            let r = param_distance(&a, &a).unwrap();
            assert_eq!(r.matching, (0..k).collect::<Vec<_>>());
            assert!(r.distances.iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn swapped_pair_matches_by_swap() {
        let a = ParameterSet::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let b = ParameterSet::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let r = param_distance(&a, &b).unwrap();
        assert_eq!(r.matching, vec![1, 0]);
        assert_eq!(r.distances, vec![0.0, 0.0]);
    }

    #[test]
    fn rejects_mismatched_dims() {
        let a = basis(2, 3);
        let b = basis(2, 4);
        assert!(param_distance(&a, &b).is_err());
        let c = basis(3, 3);
        assert!(param_distance(&a, &c).is_err());
    }

    #[test]
    fn rejects_large_k() {
        let a = basis(9, 9);
        assert!(matches!(
            param_distance(&a, &a),
            Err(Error::MatchingTooLarge { got: 9, .. })
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ParameterSet::new(array![[f64::NAN, 0.0]]).is_err());
        assert!(ParameterSet::new(array![[f64::INFINITY]]).is_err());
    }

    #[test]
    fn next_permutation_is_lexicographic() {
        let mut p = vec![0usize, 1, 2];
        let mut seen = vec![p.clone()];
        while next_permutation(&mut p) {
            seen.push(p.clone());
        }
        assert_eq!(seen.len(), 6);
        let mut sorted = seen.clone();
        sorted.sort();
        assert_eq!(seen, sorted, "enumeration must be in lexicographic order");
    }
}
