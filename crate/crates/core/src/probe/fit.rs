//! L1-regularized logistic probe fitted by proximal coordinate descent.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PooledFeature;
use crate::error::{Error, Result};

pub const DEFAULT_C: f64 = 0.01;
pub const MAX_EPOCHS: usize = 10_000;
pub const TOLERANCE: f64 = 1e-8;

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^t) without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Per-dimension z-scoring. Constant dimensions get scale 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let d = rows[0].len();
        let m = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (a, x) in mean.iter_mut().zip(r.iter()) {
                *a += x;
            }
        }
        mean.iter_mut().for_each(|a| *a /= m);
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = (v / m).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

/// Standardized design matrix stored column-major, with labels.
#[derive(Debug, Clone)]
pub struct Design {
    pub m: usize,
    pub d: usize,
    pub cols: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Design {
    pub fn new(rows: &[Vec<f64>], labels: &[bool], standardizer: &Standardizer) -> Self {
        let m = rows.len();
        let d = standardizer.mean.len();
        let mut cols = vec![vec![0.0; m]; d];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in standardizer.apply(r).into_iter().enumerate() {
                cols[j][i] = v;
            }
        }
        Self { m, d, cols, y: labels.iter().map(|&b| b as u8 as f64).collect() }
    }

    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        let mut eta = vec![b; self.m];
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for (e, x) in eta.iter_mut().zip(&self.cols[j]) {
                    *e += wj * x;
                }
            }
        }
        eta
    }

    /// Mean logistic loss at (w, b).
    pub fn loss(&self, w: &[f64], b: f64) -> f64 {
        self.margins(w, b)
            .iter()
            .zip(&self.y)
            .map(|(&t, &y)| softplus(t) - y * t)
            .sum::<f64>()
            / self.m as f64
    }

    /// Gradient of the mean logistic loss: (∂/∂w, ∂/∂b).
    pub fn loss_gradient(&self, w: &[f64], b: f64) -> (Vec<f64>, f64) {
        let r: Vec<f64> = self.margins(w, b).iter().zip(&self.y).map(|(&t, &y)| sigmoid(t) - y).collect();
        let m = self.m as f64;
        let gw = self.cols.iter().map(|c| c.iter().zip(&r).map(|(x, r)| x * r).sum::<f64>() / m).collect();
        (gw, r.iter().sum::<f64>() / m)
    }

    pub fn objective(&self, w: &[f64], b: f64, lambda: f64) -> f64 {
        self.loss(w, b) + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub c: f64,
    pub max_epochs: usize,
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { c: DEFAULT_C, max_epochs: MAX_EPOCHS, tol: TOLERANCE }
    }
}

/// Fitted probe. Weights act on standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub d: usize,
    pub w: Vec<f64>,
    pub b: f64,
    pub c: f64,
    pub lambda: f64,
    pub m: usize,
    pub epochs: usize,
    pub converged: bool,
    pub objective: f64,
    pub standardizer: Standardizer,
}

#[derive(Serialize, Deserialize)]
struct ProbeFile {
    d: usize,
    b: f64,
    weights: Vec<(usize, f64)>,
    c: f64,
    lambda: f64,
    m: usize,
    epochs: usize,
    converged: bool,
    objective: f64,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl ProbeModel {
    pub fn nnz(&self) -> usize {
        self.w.iter().filter(|v| **v != 0.0).count()
    }

    pub fn predict_proba(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: z.len() });
        }
        let x = self.standardizer.apply(z);
        Ok(sigmoid(self.b + x.iter().zip(&self.w).map(|(a, b)| a * b).sum::<f64>()))
    }

    pub fn accuracy(&self, features: &[PooledFeature]) -> Result<f64> {
        let mut hits = 0;
        for f in features {
            hits += ((self.predict_proba(&f.z_bar)? >= 0.5) == f.label) as usize;
        }
        Ok(hits as f64 / features.len().max(1) as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ProbeFile {
            d: self.d,
            b: self.b,
            weights: self.w.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect(),
            c: self.c,
            lambda: self.lambda,
            m: self.m,
            epochs: self.epochs,
            converged: self.converged,
            objective: self.objective,
            mean: self.standardizer.mean.clone(),
            scale: self.standardizer.scale.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ProbeFile = serde_json::from_str(s)?;
        if f.mean.len() != f.d || f.scale.len() != f.d {
            return Err(Error::DimensionMismatch { expected: f.d, got: f.mean.len().min(f.scale.len()) });
        }
        let mut w = vec![0.0; f.d];
        for (i, v) in f.weights {
            *w.get_mut(i).ok_or(Error::IndexOutOfRange { index: i, dim: f.d })? = v;
        }
        Ok(Self {
            d: f.d,
            w,
            b: f.b,
            c: f.c,
            lambda: f.lambda,
            m: f.m,
            epochs: f.epochs,
            converged: f.converged,
            objective: f.objective,
            standardizer: Standardizer { mean: f.mean, scale: f.scale },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Check shapes, labels and finiteness; return (rows, labels).
pub(crate) fn unpack(features: &[PooledFeature]) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    if features.len() < 2 {
        return Err(Error::EmptyInput("probe needs at least two samples"));
    }
    let d = features[0].z_bar.len();
    if d == 0 {
        return Err(Error::EmptyInput("zero-dimensional features"));
    }
    for f in features {
        if f.z_bar.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: f.z_bar.len() });
        }
        if f.z_bar.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(f.logo_id.clone()));
        }
    }
    let labels: Vec<bool> = features.iter().map(|f| f.label).collect();
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    Ok((features.iter().map(|f| f.z_bar.clone()).collect(), labels))
}

/// Minimize mean logistic loss + λ‖w‖₁ with λ = 1/(C·M) on z-scored features.
pub fn fit_probe(features: &[PooledFeature], c: f64) -> Result<ProbeModel> {
    fit_probe_with(features, FitOptions { c, ..Default::default() })
}

pub fn fit_probe_with(features: &[PooledFeature], opts: FitOptions) -> Result<ProbeModel> {
    if !(opts.c > 0.0) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {}", opts.c)));
    }
    let (rows, labels) = unpack(features)?;
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let standardizer = Standardizer::fit(&refs);
    let design = Design::new(&rows, &labels, &standardizer);
    let lambda = 1.0 / (opts.c * design.m as f64);
    let sol = solve(&design, lambda, opts);
    Ok(ProbeModel {
        d: design.d,
        w: sol.w,
        b: sol.b,
        c: opts.c,
        lambda,
        m: design.m,
        epochs: sol.epochs,
        converged: sol.converged,
        objective: sol.objective,
        standardizer,
    })
}

pub struct Solution {
    pub w: Vec<f64>,
    pub b: f64,
    pub epochs: usize,
    pub converged: bool,
    pub objective: f64,
}

/// Coordinate descent with the quadratic majorizer 0.25·mean(x_j²) per
/// coordinate, so every step decreases the objective. Starts at
/// (0, logit of the base rate).
pub fn solve(design: &Design, lambda: f64, opts: FitOptions) -> Solution {
    let m = design.m as f64;
    let base = design.y.iter().sum::<f64>() / m;
    let mut b = (base / (1.0 - base)).ln();
    let mut w = vec![0.0; design.d];
    let mut eta = vec![b; design.m];
    let mut r: Vec<f64> = eta.iter().zip(&design.y).map(|(&t, &y)| sigmoid(t) - y).collect();
    let curv: Vec<f64> = design.cols.iter().map(|c| 0.25 * c.iter().map(|x| x * x).sum::<f64>() / m).collect();

    let objective = |w: &[f64], eta: &[f64]| {
        eta.iter().zip(&design.y).map(|(&t, &y)| softplus(t) - y * t).sum::<f64>() / m
            + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
    };
    let mut best = (objective(&w, &eta), w.clone(), b);
    let mut epochs = 0;
    let mut converged = false;

    while epochs < opts.max_epochs {
        epochs += 1;
        let mut max_step: f64 = 0.0;
        for j in 0..design.d {
            if curv[j] == 0.0 {
                continue;
            }
            let col = &design.cols[j];
            let g = col.iter().zip(&r).map(|(x, r)| x * r).sum::<f64>() / m;
            let new = soft_threshold(w[j] - g / curv[j], lambda / curv[j]);
            let delta = new - w[j];
            if delta != 0.0 {
                w[j] = new;
                for i in 0..design.m {
                    eta[i] += delta * col[i];
                    r[i] = sigmoid(eta[i]) - design.y[i];
                }
                max_step = max_step.max(delta.abs());
            }
        }
        let gb = r.iter().sum::<f64>() / m;
        let db = -gb / 0.25;
        if db != 0.0 {
            b += db;
            for i in 0..design.m {
                eta[i] += db;
                r[i] = sigmoid(eta[i]) - design.y[i];
            }
            max_step = max_step.max(db.abs());
        }
        let obj = objective(&w, &eta);
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
        if max_step < opts.tol {
            converged = true;
            break;
        }
    }
    if converged {
        let obj = objective(&w, &eta);
        return Solution { w, b, epochs, converged, objective: obj };
    }
    log::warn!("probe did not converge in {epochs} epochs; returning best iterate");
    Solution { w: best.1, b: best.2, epochs, converged, objective: best.0 }
}
