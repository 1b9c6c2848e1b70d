//! Linear ε-insensitive support vector regression.
//!
//! Features are z-scored with training statistics, then the dual
//!
//! ```text
//! max  D(β) = −½‖Σ β_i z_i‖² + Σ y_i β_i − ε Σ |β_i|
//! s.t. −C ≤ β_i ≤ C,  Σ β_i = 0
//! ```
//!
//! is solved with `β_i = α_i − α_i*`. Keeping a single signed variable per
//! example makes `α_i · α_i* = 0` hold identically. The equality constraint
//! comes from the bias term, so variables move in pairs `(β_i + δ, β_j − δ)`
//! and each pair step minimizes the one-dimensional piecewise quadratic
//! exactly. Sweeps visit examples in a seeded random order and pick, for
//! each, the partner that violates the optimality conditions most.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::matrix::dot;
use crate::nn::{Matrix, ModelFile};
use crate::seed::rng_from_seed;

pub const MODEL_KIND: &str = "svr";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            c: 1.0,
            epsilon: 0.05,
            tol: 1e-4,
            max_iter: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    /// Weights over standardized features.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub epsilon: f64,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub dual_objective: f64,
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrFit {
    pub model: SvrModel,
    /// `β_i = α_i − α_i*` at termination.
    pub dual: Vec<f64>,
    /// Entry 0 is the all-zero starting point, then one entry per sweep.
    pub log: Vec<SweepRecord>,
    pub converged: bool,
}

impl SvrFit {
    pub fn alphas(&self) -> (Vec<f64>, Vec<f64>) {
        let up = self.dual.iter().map(|b| b.max(0.0)).collect();
        let down = self.dual.iter().map(|b| (-b).max(0.0)).collect();
        (up, down)
    }
}

/// Per-column mean and population standard deviation; zero spread becomes 1.
pub fn fit_standardization(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() as f64;
    let d = x.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in x {
        for k in 0..d {
            var[k] += (row[k] - mean[k]).powi(2);
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / n).sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn standardize_with(mean: &[f64], std: &[f64], x: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(std).map(|((v, m), s)| (v - m) / s).collect()
}

/// Max-form dual objective for standardized features `z`.
pub fn dual_objective(beta: &[f64], z: &[Vec<f64>], y: &[f64], epsilon: f64) -> f64 {
    let d = z.first().map_or(0, Vec::len);
    let mut w = vec![0.0; d];
    for (b, zi) in beta.iter().zip(z) {
        for (wk, v) in w.iter_mut().zip(zi) {
            *wk += b * v;
        }
    }
    objective_from_w(&w, beta, y, epsilon)
}

fn objective_from_w(w: &[f64], beta: &[f64], y: &[f64], epsilon: f64) -> f64 {
    let lin: f64 = beta.iter().zip(y).map(|(b, yi)| b * yi).sum();
    let l1: f64 = beta.iter().map(|b| b.abs()).sum();
    -0.5 * dot(w, w) + lin - epsilon * l1
}

/// `|b + d| − |b|` without cancellation while the sign is unchanged.
fn abs_change(b: f64, d: f64) -> f64 {
    let moved = b + d;
    if b > 0.0 && moved >= 0.0 {
        d
    } else if b < 0.0 && moved <= 0.0 {
        -d
    } else {
        moved.abs() - b.abs()
    }
}

struct Solver<'a> {
    z: &'a [Vec<f64>],
    y: &'a [f64],
    c: f64,
    eps: f64,
    beta: Vec<f64>,
    w: Vec<f64>,
}

impl Solver<'_> {
    fn gradient(&self, i: usize) -> f64 {
        dot(&self.w, &self.z[i]) - self.y[i]
    }

    /// Rate of change of the (min-form) objective when `β_i` increases.
    fn d_up(&self, i: usize, g: f64) -> f64 {
        g + if self.beta[i] >= 0.0 { self.eps } else { -self.eps }
    }

    /// Rate of change when `β_i` decreases.
    fn d_down(&self, i: usize, g: f64) -> f64 {
        -g + if self.beta[i] > 0.0 { -self.eps } else { self.eps }
    }

    fn can_up(&self, i: usize) -> bool {
        self.beta[i] < self.c
    }

    fn can_down(&self, i: usize) -> bool {
        self.beta[i] > -self.c
    }

    fn max_violation(&self, g: &[f64]) -> f64 {
        let mut min_up = f64::INFINITY;
        let mut min_down = f64::INFINITY;
        for (i, &gi) in g.iter().enumerate() {
            if self.can_up(i) {
                min_up = min_up.min(self.d_up(i, gi));
            }
            if self.can_down(i) {
                min_down = min_down.min(self.d_down(i, gi));
            }
        }
        (-(min_up + min_down)).max(0.0)
    }

    /// Most violating partner for `i` against the cached gradients, if any
    /// pair containing `i` can still decrease the objective.
    fn partner(&self, i: usize, g: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        let mut consider = |j: usize, rate: f64| {
            if rate < 0.0 && best.is_none_or(|(_, r)| rate < r) {
                best = Some((j, rate));
            }
        };
        for j in 0..g.len() {
            if j == i {
                continue;
            }
            if self.can_up(i) && self.can_down(j) {
                consider(j, self.d_up(i, g[i]) + self.d_down(j, g[j]));
            }
            if self.can_down(i) && self.can_up(j) {
                consider(j, self.d_down(i, g[i]) + self.d_up(j, g[j]));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Exact minimizer of the objective change along `(β_i + δ, β_j − δ)`.
    fn pair_step(&self, i: usize, j: usize, gi: f64, gj: f64) -> f64 {
        let (bi, bj, c, eps) = (self.beta[i], self.beta[j], self.c, self.eps);
        let a: f64 = self.z[i].iter().zip(&self.z[j]).map(|(p, q)| (p - q) * (p - q)).sum();
        let b = gi - gj;
        let lo = (-c - bi).max(bj - c).min(0.0);
        let hi = (c - bi).min(bj + c).max(0.0);
        let phi = |d: f64| 0.5 * a * d * d + b * d + eps * (abs_change(bi, d) + abs_change(bj, -d));

        let mut candidates = vec![lo, hi, -bi, bj];
        if a > 0.0 {
            for si in [-1.0, 1.0] {
                for sj in [-1.0, 1.0] {
                    candidates.push(-(b + eps * si - eps * sj) / a);
                }
            }
        }
        let mut best = (0.0, 0.0);
        for d in candidates {
            let d = d.clamp(lo, hi);
            let v = phi(d);
            if v < best.1 {
                best = (d, v);
            }
        }
        best.0
    }

    fn apply(&mut self, i: usize, j: usize, delta: f64) {
        self.beta[i] = (self.beta[i] + delta).clamp(-self.c, self.c);
        self.beta[j] = (self.beta[j] - delta).clamp(-self.c, self.c);
        for ((wk, zi), zj) in self.w.iter_mut().zip(&self.z[i]).zip(&self.z[j]) {
            *wk += delta * (zi - zj);
        }
    }

    fn bias(&self, g: &[f64]) -> f64 {
        let free: Vec<f64> = (0..g.len())
            .filter(|&i| self.beta[i] != 0.0 && self.beta[i].abs() < self.c)
            .map(|i| -g[i] - self.eps * self.beta[i].signum())
            .collect();
        if !free.is_empty() {
            return free.iter().sum::<f64>() / free.len() as f64;
        }
        let mut lb = f64::NEG_INFINITY;
        let mut ub = f64::INFINITY;
        for (i, &gi) in g.iter().enumerate() {
            if self.can_up(i) {
                lb = lb.max(-self.d_up(i, gi));
            }
            if self.can_down(i) {
                ub = ub.min(self.d_down(i, gi));
            }
        }
        match (lb.is_finite(), ub.is_finite()) {
            (true, true) => 0.5 * (lb + ub),
            (true, false) => lb,
            (false, true) => ub,
            (false, false) => 0.0,
        }
    }
}

/// Trains on rows `x` with targets `y` in `[0, 1]`.
pub fn train_svr(x: &[Vec<f64>], y: &[f64], config: &SvrConfig) -> Result<SvrFit> {
    if x.is_empty() {
        return Err(Error::Empty("SVR training set".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} feature rows but {} targets", x.len(), y.len())));
    }
    if !(config.c > 0.0 && config.c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {}", config.c)));
    }
    if !(config.epsilon >= 0.0 && config.epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be non-negative, got {}", config.epsilon)));
    }
    let d = x[0].len();
    for (i, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::Shape(format!("row {i} has {} features, expected {d}", row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("row {i} contains a non-finite feature")));
        }
    }
    if let Some(bad) = y.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidArgument(format!("target {bad} is outside [0, 1]")));
    }

    let (mean, std) = fit_standardization(x);
    let z: Vec<Vec<f64>> = x.iter().map(|row| standardize_with(&mean, &std, row)).collect();
    let n = z.len();
    let mut solver = Solver {
        z: &z,
        y,
        c: config.c,
        eps: config.epsilon,
        beta: vec![0.0; n],
        w: vec![0.0; d],
    };
    let mut rng = rng_from_seed(config.seed);
    let mut order: Vec<usize> = (0..n).collect();

    let mut g: Vec<f64> = (0..n).map(|i| solver.gradient(i)).collect();
    let mut violation = solver.max_violation(&g);
    let mut log = vec![SweepRecord {
        sweep: 0,
        dual_objective: 0.0,
        max_violation: violation,
    }];
    let mut converged = violation < config.tol;

    let mut sweep = 0;
    while !converged && sweep < config.max_iter {
        sweep += 1;
        order.shuffle(&mut rng);
        for &i in &order {
            let Some(j) = solver.partner(i, &g) else { continue };
            let (gi, gj) = (solver.gradient(i), solver.gradient(j));
            let delta = solver.pair_step(i, j, gi, gj);
            if delta != 0.0 {
                solver.apply(i, j, delta);
            }
            g[i] = solver.gradient(i);
            g[j] = solver.gradient(j);
        }
        g = (0..n).map(|i| solver.gradient(i)).collect();
        violation = solver.max_violation(&g);
        log.push(SweepRecord {
            sweep,
            dual_objective: objective_from_w(&solver.w, &solver.beta, y, config.epsilon),
            max_violation: violation,
        });
        converged = violation < config.tol;
    }
    if !converged {
        log::warn!("SVR stopped after {sweep} sweeps with violation {violation:.3e} (tol {:.1e})", config.tol);
    }

    let bias = solver.bias(&g);
    let Solver { beta, w, .. } = solver;
    Ok(SvrFit {
        model: SvrModel {
            weights: w,
            bias,
            c: config.c,
            epsilon: config.epsilon,
            mean,
            std,
        },
        dual: beta,
        log,
        converged,
    })
}

impl SvrModel {
    /// A model over `dim` raw features with identity standardization.
    pub fn from_parts(weights: Vec<f64>, bias: f64) -> Self {
        let d = weights.len();
        SvrModel {
            weights,
            bias,
            c: 1.0,
            epsilon: 0.0,
            mean: vec![0.0; d],
            std: vec![1.0; d],
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "SVR expects {} features, got {}",
                self.feature_dim(),
                x.len()
            )));
        }
        Ok(standardize_with(&self.mean, &self.std, x))
    }

    /// The affine value before clamping.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64> {
        Ok(dot(&self.weights, &self.standardize(x)?) + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_raw(x)?.clamp(0.0, 1.0))
    }

    pub fn to_model_file(&self) -> ModelFile {
        let mut file = ModelFile::new(MODEL_KIND)
            .with_meta("bias", self.bias)
            .with_meta("c", self.c)
            .with_meta("epsilon", self.epsilon);
        for (name, v) in [("weights", &self.weights), ("mean", &self.mean), ("std", &self.std)] {
            file.tensors.push((name.to_string(), Matrix::column(v.clone())));
        }
        file
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        file.expect_kind(MODEL_KIND)?;
        let tensor = |name: &str| -> Result<Vec<f64>> {
            file.tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, m)| m.as_slice().to_vec())
                .ok_or_else(|| Error::ModelFormat(format!("missing tensor {name}")))
        };
        let model = SvrModel {
            weights: tensor("weights")?,
            bias: file.meta_f64("bias")?,
            c: file.meta_f64("c")?,
            epsilon: file.meta_f64("epsilon")?,
            mean: tensor("mean")?,
            std: tensor("std")?,
        };
        let d = model.weights.len();
        if model.mean.len() != d || model.std.len() != d {
            return Err(Error::ModelFormat("standardization statistics do not match weight length".into()));
        }
        if model.std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::ModelFormat("standard deviations must be positive".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_model_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        SvrModel::from_model_file(&ModelFile::load(path)?)
    }
}

pub fn predict_svr(model: &SvrModel, x: &[f64]) -> Result<f64> {
    model.predict(x)
}
