//! Two-component PCA.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca2d {
    pub mean: Vec<f64>,
    /// Unit-length principal directions.
    pub components: [Vec<f64>; 2],
    pub coords: Vec<[f64; 2]>,
    /// Sample variance along each component.
    pub explained_variance: [f64; 2],
    /// Fraction of total variance along each component.
    pub explained_ratio: [f64; 2],
}

impl Pca2d {
    pub fn project(&self, x: &[f64]) -> [f64; 2] {
        let c: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        [dot(&c, &self.components[0]), dot(&c, &self.components[1])]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Flip so the largest-magnitude entry (first on ties) is positive.
fn orient(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        *v = -v.clone();
    }
}

/// Project mean-centered points onto their top two principal directions.
/// The eigenproblem is solved on whichever of the covariance (d×d) or Gram
/// (n×n) matrix is smaller.
pub fn pca_2d(points: &[Vec<f64>]) -> Result<Pca2d> {
    let n = points.len();
    if n < 2 {
        return Err(Error::EmptyInput("pca_2d needs at least two points"));
    }
    let d = points[0].len();
    if d < 2 {
        return Err(Error::InvalidArgument("pca_2d needs d >= 2".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: p.len() });
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, d, |i, j| points[i][j] - mean[j]);
    let denom = (n - 1) as f64;
    let total = x.iter().map(|v| v * v).sum::<f64>() / denom;
    if total <= 1e-300 || !total.is_finite() {
        return Err(Error::RankZero);
    }

    let (values, dirs): (Vec<f64>, Vec<DVector<f64>>) = if d <= n {
        let cov = x.transpose() * &x / denom;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals = order[..2].iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let vecs = order[..2].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
        (vals, vecs)
    } else {
        let gram = &x * x.transpose() / denom;
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let vals: Vec<f64> = order[..2].iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let vecs = order[..2]
            .iter()
            .enumerate()
            .map(|(r, &i)| {
                let u = eig.eigenvectors.column(i).into_owned();
                let v = x.transpose() * u;
                let norm = v.norm();
                if norm > 1e-12 && vals[r] > 0.0 {
                    v / norm
                } else {
                    DVector::zeros(d)
                }
            })
            .collect();
        (vals, vecs)
    };

    let mut dirs = dirs;
    // A zero second direction (rank-1 data through the Gram path) is replaced
    // by any unit vector orthogonal to the first.
    if dirs[1].norm() == 0.0 {
        let v0 = dirs[0].clone();
        let mut e = DVector::zeros(d);
        let j = (0..d).min_by(|&a, &b| v0[a].abs().total_cmp(&v0[b].abs())).unwrap_or(0);
        e[j] = 1.0;
        let v = &e - &v0 * v0.dot(&e);
        dirs[1] = v.normalize();
    }
    for v in dirs.iter_mut() {
        orient(v);
    }
    let components = [dirs[0].as_slice().to_vec(), dirs[1].as_slice().to_vec()];
    let coords = (0..n)
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            [dot(&row, &components[0]), dot(&row, &components[1])]
        })
        .collect();
    Ok(Pca2d {
        mean,
        components,
        coords,
        explained_variance: [values[0], values[1]],
        explained_ratio: [values[0] / total, values[1] / total],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    }

    /// Power iteration with deflation on the sample covariance.
    fn power_oracle(points: &[Vec<f64>]) -> [f64; 2] {
        let n = points.len();
        let d = points[0].len();
        let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let mut cov = vec![vec![0.0; d]; d];
        for p in points {
            for a in 0..d {
                for b in 0..d {
                    cov[a][b] += (p[a] - mean[a]) * (p[b] - mean[b]) / (n - 1) as f64;
                }
            }
        }
        let mut out = [0.0; 2];
        for slot in out.iter_mut() {
            let mut v: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 * 0.01).collect();
            let mut lam = 0.0;
            for _ in 0..5000 {
                let w: Vec<f64> = (0..d).map(|a| (0..d).map(|b| cov[a][b] * v[b]).sum()).collect();
                let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
                lam = norm;
                v = w.iter().map(|x| x / norm).collect();
            }
            *slot = lam;
            for a in 0..d {
                for b in 0..d {
                    cov[a][b] -= lam * v[a] * v[b];
                }
            }
        }
        out
    }

    #[test]
    fn line_has_no_second_component() {
        let dir: Vec<f64> = (0..10).map(|i| (i as f64 + 1.0).sqrt()).collect();
        let pts: Vec<Vec<f64>> = (0..8).map(|t| dir.iter().map(|v| v * t as f64 + 1.0).collect()).collect();
        let p = pca_2d(&pts).unwrap();
        assert!(p.explained_ratio[0] > 1.0 - 1e-9);
        assert!(p.explained_variance[1].abs() < 1e-9);
        assert!(dot(&p.components[0], &p.components[1]).abs() < 1e-8);
    }

    #[test]
    fn isotropic_cloud_matches_power_iteration() {
        let pts = gaussian(400, 3, 7);
        let p = pca_2d(&pts).unwrap();
        let oracle = power_oracle(&pts);
        approx::assert_relative_eq!(p.explained_variance[0], oracle[0], max_relative = 1e-6);
        approx::assert_relative_eq!(p.explained_variance[1], oracle[1], max_relative = 1e-6);
        assert!((p.explained_ratio[0] - p.explained_ratio[1]).abs() < 0.1);
    }

    #[test]
    fn gram_path_agrees_with_covariance_path() {
        let wide = gaussian(6, 40, 3);
        let p = pca_2d(&wide).unwrap();
        // Covariance-path oracle via nalgebra on the d×d matrix directly.
        let oracle = power_oracle(&wide);
        approx::assert_relative_eq!(p.explained_variance[0], oracle[0], max_relative = 1e-6);
        approx::assert_relative_eq!(p.explained_variance[1], oracle[1], max_relative = 1e-6);
        for c in &p.components {
            approx::assert_abs_diff_eq!(dot(c, c), 1.0, epsilon = 1e-9);
        }
        assert!(dot(&p.components[0], &p.components[1]).abs() < 1e-8);
    }

    #[test]
    fn clusters_separate_on_first_axis() {
        let mut pts = gaussian(50, 5, 1);
        for (i, p) in pts.iter_mut().enumerate() {
            p[2] += if i < 25 { 10.0 } else { -10.0 };
        }
        let r = pca_2d(&pts).unwrap();
        let (a, b): (Vec<_>, Vec<_>) = r.coords.iter().enumerate().partition(|(i, _)| *i < 25);
        let max_a = a.iter().map(|(_, c)| c[0]).fold(f64::MIN, f64::max);
        let min_a = a.iter().map(|(_, c)| c[0]).fold(f64::MAX, f64::min);
        let max_b = b.iter().map(|(_, c)| c[0]).fold(f64::MIN, f64::max);
        let min_b = b.iter().map(|(_, c)| c[0]).fold(f64::MAX, f64::min);
        assert!(min_a > max_b || min_b > max_a);
        // projection of the mean is the origin
        let o = r.project(&r.mean);
        assert!(o[0].abs() < 1e-12 && o[1].abs() < 1e-12);
        // sign convention
        for c in &r.components {
            let big = c.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(pca_2d(&[vec![1.0, 2.0], vec![1.0, 2.0]]), Err(Error::RankZero)));
        assert!(pca_2d(&[vec![1.0, 2.0]]).is_err());
        assert!(pca_2d(&[vec![1.0], vec![2.0]]).is_err());
    }
}
