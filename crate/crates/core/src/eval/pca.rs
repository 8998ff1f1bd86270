//! Principal components of activation sets, projections, and the seen/unseen
//! separation score.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ActivationSet;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `dim`.
    pub components: Vec<Vec<f64>>,
    /// Sample variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Numerical rank of the centered data.
    pub rank: usize,
    /// Set when more components were requested than the data's rank supports;
    /// the trailing components then span null directions.
    pub rank_deficient: bool,
}

impl PcaBasis {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and the matching eigenvectors as rows.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale: f64 = m.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off <= scale * 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| m[b * n + b].total_cmp(&m[a * n + a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|k| v[k * n + j]).collect())
        .collect();
    (values, vectors)
}

/// Flips `v` so that its largest-magnitude entry (first on ties) is positive.
pub fn sign_normalize(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Top-`k` principal components of the rows of `acts` (sample covariance with an
/// `n - 1` denominator).
pub fn fit_pca(acts: &ActivationSet, k: usize) -> Result<PcaBasis> {
    let (n, d) = (acts.rows(), acts.dim);
    if k == 0 || k > d {
        return Err(Error::Range {
            what: "number of components",
            value: k as f64,
            expected: "1 <= k <= dim",
        });
    }
    if n < k {
        return Err(Error::Structure(format!("{n} examples cannot support {k} components")));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(acts.row(i)) {
            *m += x;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let denom = (n.max(2) - 1) as f64;
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for ((c, &x), &m) in centered.iter_mut().zip(acts.row(i)).zip(&mean) {
            *c = x - m;
        }
        for a in 0..d {
            let ca = centered[a];
            for b in a..d {
                cov[a * d + b] += ca * centered[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            cov[a * d + b] /= denom;
            cov[b * d + a] = cov[a * d + b];
        }
    }
    let (values, mut vectors) = symmetric_eigen(&cov, d);
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = top * 1e-10 * d as f64;
    let rank = values.iter().filter(|&&v| v > tol && v > 0.0).count();
    vectors.truncate(k);
    for v in &mut vectors {
        sign_normalize(v);
    }
    Ok(PcaBasis {
        mean,
        components: vectors,
        explained_variance: values[..k].iter().map(|&v| v.max(0.0)).collect(),
        rank,
        rank_deficient: k > rank,
    })
}

/// `(rows - mean) . components^T`, an `n x k` matrix.
pub fn project(basis: &PcaBasis, acts: &ActivationSet) -> Result<Matrix> {
    if acts.dim != basis.dim() {
        return Err(Error::Structure(format!(
            "activation dim {} vs basis dim {}",
            acts.dim,
            basis.dim()
        )));
    }
    let k = basis.k();
    let mut data = Vec::with_capacity(acts.rows() * k);
    for i in 0..acts.rows() {
        let row = acts.row(i);
        for comp in &basis.components {
            let mut s = 0.0;
            for ((&x, &m), &c) in row.iter().zip(&basis.mean).zip(comp) {
                s += (x - m) * c;
            }
            data.push(s);
        }
    }
    Ok(Matrix::new(acts.rows(), k, data))
}

fn centroid(m: &Matrix) -> Vec<f64> {
    let mut c = vec![0.0; m.cols];
    for i in 0..m.rows {
        for (a, &x) in c.iter_mut().zip(m.row(i)) {
            *a += x;
        }
    }
    for a in &mut c {
        *a /= m.rows as f64;
    }
    c
}

/// Centroid distance divided by the pooled RMS distance of points to their own
/// group's centroid.
pub fn separation(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.cols != b.cols {
        return Err(Error::Structure(format!(
            "projection widths differ: {} vs {}",
            a.cols, b.cols
        )));
    }
    if a.rows == 0 || b.rows == 0 {
        return Err(Error::Empty("projected group"));
    }
    let (ca, cb) = (centroid(a), centroid(b));
    let dist = libm::sqrt(ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum());
    if dist == 0.0 {
        return Ok(0.0);
    }
    let mut ss = 0.0;
    for (m, c) in [(a, &ca), (b, &cb)] {
        for i in 0..m.rows {
            ss += m.row(i).iter().zip(c).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
    }
    let radius = libm::sqrt(ss / (a.rows + b.rows) as f64);
    if radius == 0.0 {
        // Two point masses: the normalizer is undefined, report the raw distance.
        return Ok(dist);
    }
    Ok(dist / radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> ActivationSet {
        let dim = rows[0].len();
        let v: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        ActivationSet::from_rows(0, dim, &v, "t")
    }

    #[test]
    fn symmetric_pair_gives_x_axis() {
        let b = fit_pca(&set(&[&[1.0, 0.0], &[-1.0, 0.0]]), 1).unwrap();
        assert!((b.components[0][0] - 1.0).abs() < 1e-12);
        assert!(b.components[0][1].abs() < 1e-12);
        assert!((b.explained_variance[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_projects_to_zero() {
        let s = set(&[&[3.0, 1.0, 2.0], &[3.0, 1.0, 2.0], &[3.0, 1.0, 2.0]]);
        let b = fit_pca(&s, 2).unwrap();
        assert_eq!(b.rank, 0);
        assert!(b.rank_deficient);
        let p = project(&b, &s).unwrap();
        assert!(p.data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rotated_plane_matches_hand_projection() {
        // Points along the 45-degree diagonal plus a small orthogonal spread.
        let s = set(&[&[2.0, 2.0], &[-2.0, -2.0], &[0.5, -0.5], &[-0.5, 0.5]]);
        let b = fit_pca(&s, 2).unwrap();
        let r = core::f64::consts::FRAC_1_SQRT_2;
        assert!((b.components[0][0] - r).abs() < 1e-12);
        assert!((b.components[0][1] - r).abs() < 1e-12);
        let p = project(&b, &s).unwrap();
        // (2, 2) . (r, r) = 4r
        assert!((p.row(0)[0] - 4.0 * r).abs() < 1e-12);
        // (0.5, -0.5) onto the second axis, sign-normalized to (-r, r) or (r, -r).
        assert!((p.row(2)[1].abs() - r).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let b = fit_pca(&set(&[&[1.0, 0.0], &[0.0, 1.0]]), 1).unwrap();
        let other = set(&[&[1.0, 0.0, 0.0]]);
        assert!(matches!(project(&b, &other), Err(Error::Structure(_))));
    }

    #[test]
    fn separation_formula_cases() {
        let a = Matrix::new(2, 2, alloc::vec![0.0, 1.0, 0.0, -1.0]);
        let b = Matrix::new(2, 2, alloc::vec![10.0, 1.0, 10.0, -1.0]);
        assert!((separation(&a, &b).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(separation(&a, &a).unwrap(), 0.0);
        let c = Matrix::new(1, 3, alloc::vec![0.0; 3]);
        assert!(separation(&a, &c).is_err());
    }
}
