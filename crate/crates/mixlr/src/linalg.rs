//! Small dense linear-algebra and statistics helpers.
//!
//! Everything here is deterministic: fixed iteration orders, fixed summation
//! orders, no randomized pivoting.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Neumaier-compensated sum over a fixed, index-ascending order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean with compensated summation, index-ascending.
pub fn compensated_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut count = 0usize;
    let sum = compensated_sum(values.into_iter().inspect(|_| count += 1));
    sum / count as f64
}

/// Empirical quantile with linear interpolation between order statistics.
/// `q` in [0, 1]; q = 0 is the minimum, q = 1 the maximum.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile level outside [0, 1]");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
/// Converges to machine precision for the small dense matrices this crate
/// produces (second-moment matrices, d up to a few hundred).
pub fn symmetric_eigenvalues(matrix: ArrayView2<'_, f64>) -> Array1<f64> {
    let d = matrix.nrows();
    assert_eq!(d, matrix.ncols(), "eigenvalues of a non-square matrix");
    let mut a = matrix.to_owned();

    let off_diag_norm = |a: &Array2<f64>| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                s += a[[i, j]] * a[[i, j]];
            }
        }
        s.sqrt()
    };

    let scale: f64 = (0..d).map(|i| a[[i, i]].abs()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-14 * scale;
    for _sweep in 0..100 {
        if off_diag_norm(&a) <= tol {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[[p, q]];
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..d {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = c * aip - s * aiq;
                    a[[i, q]] = s * aip + c * aiq;
                }
                for i in 0..d {
                    let api = a[[p, i]];
                    let aqi = a[[q, i]];
                    a[[p, i]] = c * api - s * aqi;
                    a[[q, i]] = s * api + c * aqi;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..d).map(|i| a[[i, i]]).collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Array1::from_vec(eig)
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration from a fixed starting vector.
pub fn psd_max_eigenvalue(matrix: ArrayView2<'_, f64>, tol: f64) -> f64 {
    let d = matrix.nrows();
    let mut v = Array1::from_elem(d, 1.0 / (d as f64).sqrt());
    // Deterministic tie-breaking perturbation so v is not orthogonal to the
    // leading eigenvector of structured matrices.
    for i in 0..d {
        v[i] += 1e-3 * ((i as f64) + 1.0) / (d as f64);
    }
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let mut w = matrix.dot(&v);
        let next = v.dot(&w);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        w /= norm;
        let delta = (next - lambda).abs();
        lambda = next;
        v = w;
        if delta <= tol * lambda.abs().max(1.0) {
            break;
        }
    }
    lambda
}

/// Smallest eigenvalue of a symmetric PSD matrix. Exact Jacobi solve for
/// d <= 64, shifted power iteration beyond that.
pub fn psd_min_eigenvalue(matrix: ArrayView2<'_, f64>, tol: f64) -> f64 {
    let d = matrix.nrows();
    if d <= 64 {
        return symmetric_eigenvalues(matrix)[0];
    }
    // sigma_min(M) = shift - lambda_max(shift I - M) for shift >= lambda_max(M).
    let shift = psd_max_eigenvalue(matrix, tol) * (1.0 + 1e-12) + tol;
    let mut shifted = matrix.to_owned() * -1.0;
    for i in 0..d {
        shifted[[i, i]] += shift;
    }
    let top = psd_max_eigenvalue(shifted.view(), tol);
    (shift - top).max(0.0)
}

fn normalize(v: &mut Array1<f64>) {
    let n = v.dot(v).sqrt();
    if n > 0.0 {
        *v /= n;
    }
}

/// (1/m) * sum of x_i x_i^T over the given rows.
pub fn second_moment(rows: ArrayView2<'_, f64>, indices: &[usize]) -> Array2<f64> {
    let d = rows.ncols();
    let mut m = Array2::<f64>::zeros((d, d));
    for &i in indices {
        let x = rows.row(i);
        for a in 0..d {
            let xa = x[a];
            for b in 0..d {
                m[[a, b]] += xa * x[b];
            }
        }
    }
    m / indices.len() as f64
}

/// Weighted least-squares line through (x_i, y_i): returns (slope, intercept).
pub fn weighted_linear_fit(xs: &[f64], ys: &[f64], ws: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    assert_eq!(xs.len(), ws.len());
    let wt: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / wt;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / wt;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Slope, intercept, and Pearson correlation of the least-squares line
/// through (x_i, y_i).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = compensated_mean(xs.iter().copied());
    let my = compensated_mean(ys.iter().copied());
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let corr = if sxx > 0.0 && syy > 0.0 {
        sxy / (sxx.sqrt() * syy.sqrt())
    } else {
        0.0
    };
    let _ = n;
    (slope, intercept, corr)
}

/// Dot product of two views; plain index-ascending loop so every call site
/// shares one summation order.
pub fn dot(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_matches_known_spectrum() {
        // Eigenvalues of [[2, 1], [1, 2]] are 1 and 3.
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let e = symmetric_eigenvalues(m.view());
        assert!((e[0] - 1.0).abs() < 1e-12);
        assert!((e[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn jacobi_diagonal_is_exact() {
        let m = array![[4.0, 0.0, 0.0], [0.0, 0.25, 0.0], [0.0, 0.0, 9.0]];
        let e = symmetric_eigenvalues(m.view());
        assert_eq!(e.to_vec(), vec![0.25, 4.0, 9.0]);
    }

    #[test]
    fn power_iteration_agrees_with_jacobi() {
        let m = array![
            [3.0, 0.5, 0.1],
            [0.5, 2.0, -0.3],
            [0.1, -0.3, 1.0]
        ];
        let top = psd_max_eigenvalue(m.view(), 1e-12);
        let all = symmetric_eigenvalues(m.view());
        assert!((top - all[2]).abs() < 1e-8);
    }

    #[test]
    fn min_eigen_large_path_matches_exact() {
        // 80-dimensional diagonal-ish matrix exercises the iterative branch.
        let d = 80;
        let mut m = Array2::<f64>::zeros((d, d));
        for i in 0..d {
            m[[i, i]] = 1.0 + i as f64 / 10.0;
        }
        m[[0, 0]] = 0.125;
        m[[0, 1]] = 0.01;
        m[[1, 0]] = 0.01;
        let min = psd_min_eigenvalue(m.view(), 1e-10);
        let exact = symmetric_eigenvalues(m.view())[0];
        assert!((min - exact).abs() < 1e-6, "{min} vs {exact}");
    }

    #[test]
    fn quantile_interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert_eq!(quantile(&v, 0.5), 2.5);
    }

    #[test]
    fn compensated_sum_beats_naive_on_cancellation() {
        let values = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (slope, intercept, corr) = linear_fit(&xs, &ys);
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((intercept - 1.0).abs() < 1e-12);
        assert!((corr - 1.0).abs() < 1e-12);
    }
}
