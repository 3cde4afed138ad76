//! Datasets of covariate/label pairs, optional generating truth, and the
//! flat-file serialization format.
//!
//! A dataset file holds a header line `n d k sigma misspec seed`, then one
//! line per sample `y x_1 ... x_d assignment`. Generating components live
//! in a companion file `<path>.components` with header `k d` and one line
//! per component. All floats are written with 17 significant digits, so a
//! save/load round trip is lossless.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::params::ParameterSet;

/// Metadata describing how a synthetic dataset was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// The generating (or reference) components.
    pub components: ParameterSet,
    /// Per-sample component assignment, indices into `components`.
    pub assignments: Vec<usize>,
    pub noise_sigma: f64,
    pub misspec_level: f64,
}

/// n covariate vectors in d dimensions plus n scalar labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: Array2<f64>,
    labels: Array1<f64>,
    pub truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn new(
        covariates: Array2<f64>,
        labels: Array1<f64>,
        truth: Option<GroundTruth>,
    ) -> Result<Self> {
        let (n, d) = covariates.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "dataset requires n >= 1 and d >= 1, got n = {n}, d = {d}"
            )));
        }
        if labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                n
            )));
        }
        if covariates.iter().any(|v| !v.is_finite()) || labels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "dataset contains a non-finite entry".into(),
            ));
        }
        if let Some(t) = &truth {
            if t.assignments.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} assignments for {} samples",
                    t.assignments.len(),
                    n
                )));
            }
            if t.components.dim() != d {
                return Err(Error::DimensionMismatch(format!(
                    "truth components have dimension {}, covariates {}",
                    t.components.dim(),
                    d
                )));
            }
            let k = t.components.k();
            if t.assignments.iter().any(|&a| a >= k) {
                return Err(Error::InvalidInput(
                    "assignment indexes a missing component".into(),
                ));
            }
        }
        Ok(Self {
            covariates,
            labels,
            truth,
        })
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn dim(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn covariates(&self) -> &Array2<f64> {
        &self.covariates
    }

    pub fn labels(&self) -> &Array1<f64> {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (ArrayView1<'_, f64>, f64) {
        (self.covariates.row(i), self.labels[i])
    }

    /// A new dataset restricted to `indices`, in the given order. Truth
    /// assignments follow along.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("subset of zero samples".into()));
        }
        let d = self.dim();
        let mut cov = Array2::zeros((indices.len(), d));
        let mut lab = Array1::zeros(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            cov.row_mut(row).assign(&self.covariates.row(i));
            lab[row] = self.labels[i];
        }
        let truth = self.truth.as_ref().map(|t| GroundTruth {
            components: t.components.clone(),
            assignments: indices.iter().map(|&i| t.assignments[i]).collect(),
            noise_sigma: t.noise_sigma,
            misspec_level: t.misspec_level,
        });
        Dataset::new(cov, lab, truth)
    }

    /// Writes the flat dataset file plus, when truth is present, the
    /// `<path>.components` companion.
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let (k, sigma, misspec) = match &self.truth {
            Some(t) => (t.components.k(), t.noise_sigma, t.misspec_level),
            None => (0, 0.0, 0.0),
        };
        let mut out = String::new();
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            self.n(),
            self.dim(),
            k,
            fmt_f64(sigma),
            fmt_f64(misspec),
            seed
        ));
        for i in 0..self.n() {
            out.push_str(&fmt_f64(self.labels[i]));
            for v in self.covariates.row(i) {
                out.push(' ');
                out.push_str(&fmt_f64(*v));
            }
            let a = self.truth.as_ref().map_or(0, |t| t.assignments[i]);
            out.push_str(&format!(" {a}\n"));
        }
        fs::write(path, out)?;

        if let Some(t) = &self.truth {
            let mut comp = String::new();
            comp.push_str(&format!("{} {}\n", t.components.k(), t.components.dim()));
            for j in 0..t.components.k() {
                let row: Vec<String> = t.components.component(j).iter().map(|v| fmt_f64(*v)).collect();
                comp.push_str(&row.join(" "));
                comp.push('\n');
            }
            fs::write(companion_path(path), comp)?;
        }
        Ok(())
    }

    /// Loads a dataset file; returns the dataset and the recorded seed.
    /// Truth is reconstructed when the companion file exists.
    pub fn load(path: &Path) -> Result<(Self, u64)> {
        let text = fs::read_to_string(path)?;
        let perr = |message: String| Error::Parse {
            path: path.display().to_string(),
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| perr("empty file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(perr(format!(
                "header needs 6 fields `n d k sigma misspec seed`, got {}",
                fields.len()
            )));
        }
        let n: usize = fields[0].parse().map_err(|e| perr(format!("n: {e}")))?;
        let d: usize = fields[1].parse().map_err(|e| perr(format!("d: {e}")))?;
        let k: usize = fields[2].parse().map_err(|e| perr(format!("k: {e}")))?;
        let sigma: f64 = fields[3].parse().map_err(|e| perr(format!("sigma: {e}")))?;
        let misspec: f64 = fields[4].parse().map_err(|e| perr(format!("misspec: {e}")))?;
        let seed: u64 = fields[5].parse().map_err(|e| perr(format!("seed: {e}")))?;

        let mut cov = Array2::zeros((n, d));
        let mut lab = Array1::zeros(n);
        let mut assignments = vec![0usize; n];
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| perr(format!("expected {n} sample lines, got {i}")))?;
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != d + 2 {
                return Err(perr(format!(
                    "sample line {i} needs {} fields, got {}",
                    d + 2,
                    vals.len()
                )));
            }
            lab[i] = vals[0]
                .parse()
                .map_err(|e| perr(format!("label {i}: {e}")))?;
            for c in 0..d {
                cov[[i, c]] = vals[1 + c]
                    .parse()
                    .map_err(|e| perr(format!("sample {i} coord {c}: {e}")))?;
            }
            assignments[i] = vals[d + 1]
                .parse()
                .map_err(|e| perr(format!("assignment {i}: {e}")))?;
        }

        let companion = companion_path(path);
        let truth = if k > 0 && companion.exists() {
            let ctext = fs::read_to_string(&companion)?;
            let mut clines = ctext.lines();
            let cheader = clines
                .next()
                .ok_or_else(|| perr("empty components file".into()))?;
            let cf: Vec<&str> = cheader.split_whitespace().collect();
            if cf.len() != 2 {
                return Err(perr("components header needs `k d`".into()));
            }
            let ck: usize = cf[0].parse().map_err(|e| perr(format!("k: {e}")))?;
            let cd: usize = cf[1].parse().map_err(|e| perr(format!("d: {e}")))?;
            if ck != k || cd != d {
                return Err(perr(format!(
                    "components file is {ck}x{cd}, header promised {k}x{d}"
                )));
            }
            let mut rows = Vec::with_capacity(k);
            for j in 0..k {
                let line = clines
                    .next()
                    .ok_or_else(|| perr(format!("expected {k} component lines, got {j}")))?;
                let row: std::result::Result<Vec<f64>, _> =
                    line.split_whitespace().map(str::parse).collect();
                let row = row.map_err(|e| perr(format!("component {j}: {e}")))?;
                if row.len() != d {
                    return Err(perr(format!("component {j} has {} coords", row.len())));
                }
                rows.push(row);
            }
            Some(GroundTruth {
                components: ParameterSet::from_rows(&rows)?,
                assignments,
                noise_sigma: sigma,
                misspec_level: misspec,
            })
        } else {
            None
        };

        Ok((Dataset::new(cov, lab, truth)?, seed))
    }
}

fn companion_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".components");
    s.into()
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset {
        let cov = array![[1.0, 2.0], [3.0, -4.0], [0.5, 0.25]];
        let lab = array![1.5, -2.0, 0.125];
        let truth = GroundTruth {
            components: ParameterSet::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap(),
            assignments: vec![0, 1, 0],
            noise_sigma: 0.1,
            misspec_level: 0.25,
        };
        Dataset::new(cov, lab, Some(truth)).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.txt");
        let data = toy();
        data.save(&path, 99).unwrap();
        let (loaded, seed) = Dataset::load(&path).unwrap();
        assert_eq!(seed, 99);
        assert_eq!(loaded, data);
        for (a, b) in loaded
            .covariates()
            .iter()
            .chain(loaded.labels().iter())
            .zip(data.covariates().iter().chain(data.labels().iter()))
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn round_trip_without_truth() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.txt");
        let data = Dataset::new(array![[0.1], [0.2]], array![1.0, 2.0], None).unwrap();
        data.save(&path, 7).unwrap();
        let (loaded, _) = Dataset::load(&path).unwrap();
        assert!(loaded.truth.is_none());
        assert_eq!(loaded.covariates(), data.covariates());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Dataset::new(array![[1.0]], array![1.0, 2.0], None).is_err());
        assert!(Dataset::new(
            Array2::<f64>::zeros((0, 2)),
            Array1::<f64>::zeros(0),
            None
        )
        .is_err());
    }

    #[test]
    fn rejects_invalid_assignment() {
        let truth = GroundTruth {
            components: ParameterSet::new(array![[1.0]]).unwrap(),
            assignments: vec![1],
            noise_sigma: 0.0,
            misspec_level: 0.0,
        };
        assert!(Dataset::new(array![[1.0]], array![1.0], Some(truth)).is_err());
    }

    #[test]
    fn subset_keeps_assignments_aligned() {
        let data = toy();
        let sub = data.subset(&[2, 0]).unwrap();
        assert_eq!(sub.n(), 2);
        assert_eq!(sub.labels()[0], 0.125);
        assert_eq!(sub.truth.as_ref().unwrap().assignments, vec![0, 0]);
    }
}
