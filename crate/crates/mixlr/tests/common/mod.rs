//! Shared helpers for the integration suites: independent oracles
//! (finite differences, brute-force enumerations) and random instance
//! construction. Everything here is deliberately written against the
//! mathematical definitions, not the library's internal code paths.

#![allow(dead_code)]

use mixlr::dataset::Dataset;
use mixlr::params::ParameterSet;
use mixlr::rng::RngStream;
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    RngStream::new(seed, stream).generator()
}

pub fn random_params<R: Rng>(gen: &mut R, k: usize, d: usize, scale: f64) -> ParameterSet {
    let rows: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(gen);
                    v * scale
                })
                .collect()
        })
        .collect();
    ParameterSet::from_rows(&rows).unwrap()
}

pub fn random_vector<R: Rng>(gen: &mut R, d: usize) -> Array1<f64> {
    Array1::from_iter((0..d).map(|_| StandardNormal.sample(gen)))
}

pub fn random_dataset<R: Rng>(gen: &mut R, n: usize, d: usize) -> Dataset {
    let cov = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(gen));
    let lab = Array1::from_iter((0..n).map(|_| {
        let v: f64 = StandardNormal.sample(gen);
        v
    }));
    Dataset::new(cov, lab, None).unwrap()
}

/// Squared residuals straight from the definition.
pub fn brute_squared_residuals(params: &ParameterSet, x: ArrayView1<'_, f64>, y: f64) -> Vec<f64> {
    (0..params.k())
        .map(|j| {
            let mut dot = 0.0;
            for a in 0..x.len() {
                dot += x[a] * params.component(j)[a];
            }
            (y - dot) * (y - dot)
        })
        .collect()
}

/// Central finite differences of `f` with respect to component `j` of the
/// parameters.
pub fn finite_difference_gradient<F>(
    params: &ParameterSet,
    j: usize,
    step: f64,
    mut f: F,
) -> Array1<f64>
where
    F: FnMut(&ParameterSet) -> f64,
{
    let d = params.dim();
    let mut grad = Array1::zeros(d);
    for a in 0..d {
        let mut plus = params.clone();
        plus.components_mut()[[j, a]] += step;
        let mut minus = params.clone();
        minus.components_mut()[[j, a]] -= step;
        grad[a] = (f(&plus) - f(&minus)) / (2.0 * step);
    }
    grad
}

/// All permutations of 0..k in lexicographic order.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn recurse(prefix: &mut Vec<usize>, remaining: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if remaining.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..remaining.len() {
            let v = remaining.remove(i);
            prefix.push(v);
            recurse(prefix, remaining, out);
            prefix.pop();
            remaining.insert(i, v);
        }
    }
    let mut out = Vec::new();
    recurse(&mut Vec::new(), &mut (0..k).collect(), &mut out);
    out
}

/// Euclidean distance between rows of two parameter sets.
pub fn row_distance(a: &ParameterSet, i: usize, b: &ParameterSet, j: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..a.dim() {
        let diff = a.component(i)[c] - b.component(j)[c];
        s += diff * diff;
    }
    s.sqrt()
}

/// Relative distance of two vectors against the norm of the reference.
pub fn relative_error(candidate: &Array1<f64>, reference: &Array1<f64>) -> f64 {
    let diff = candidate - reference;
    let num = diff.dot(&diff).sqrt();
    let den = reference.dot(reference).sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

/// Householder reflection matrix `I - 2 v v^T / ||v||^2`, an orthogonal map.
pub fn householder(v: &Array1<f64>) -> Array2<f64> {
    let d = v.len();
    let norm2 = v.dot(v);
    let mut q = Array2::eye(d);
    for i in 0..d {
        for j in 0..d {
            q[[i, j]] -= 2.0 * v[i] * v[j] / norm2;
        }
    }
    q
}
