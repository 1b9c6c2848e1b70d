#![allow(dead_code, clippy::needless_range_loop)]

//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's numeric code paths.

use emoint::nn::{GruCellParams, LstmCellParams, Matrix, MlstmCellParams};
use rand::Rng;

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn row_dot(m: &Matrix, r: usize, v: &[f64]) -> f64 {
    let mut s = 0.0;
    for c in 0..m.cols() {
        s += m.get(r, c) * v[c];
    }
    s
}

fn bias(m: &Matrix, r: usize) -> f64 {
    m.get(r, 0)
}

pub fn naive_lstm(p: &LstmCellParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let mut h_out = vec![0.0; n];
    let mut c_out = vec![0.0; n];
    for k in 0..n {
        let i = sig(row_dot(&p.w_i, k, x) + row_dot(&p.u_i, k, h) + bias(&p.b_i, k));
        let f = sig(row_dot(&p.w_f, k, x) + row_dot(&p.u_f, k, h) + bias(&p.b_f, k));
        let o = sig(row_dot(&p.w_o, k, x) + row_dot(&p.u_o, k, h) + bias(&p.b_o, k));
        let g = (row_dot(&p.w_g, k, x) + row_dot(&p.u_g, k, h) + bias(&p.b_g, k)).tanh();
        c_out[k] = f * c[k] + i * g;
        h_out[k] = o * c_out[k].tanh();
    }
    (h_out, c_out)
}

pub fn naive_mlstm(p: &MlstmCellParams, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = h.len();
    let m: Vec<f64> = (0..n).map(|k| row_dot(&p.w_mx, k, x) * row_dot(&p.w_mh, k, h)).collect();
    naive_lstm(&p.gates, x, &m, c)
}

pub fn naive_gru(p: &GruCellParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = h.len();
    let z: Vec<f64> = (0..n)
        .map(|k| sig(row_dot(&p.w_z, k, x) + row_dot(&p.u_z, k, h) + bias(&p.b_z, k)))
        .collect();
    let r: Vec<f64> = (0..n)
        .map(|k| sig(row_dot(&p.w_r, k, x) + row_dot(&p.u_r, k, h) + bias(&p.b_r, k)))
        .collect();
    let rh: Vec<f64> = (0..n).map(|k| r[k] * h[k]).collect();
    (0..n)
        .map(|k| {
            let cand = (row_dot(&p.w_h, k, x) + row_dot(&p.u_h, k, &rh) + bias(&p.b_h, k)).tanh();
            (1.0 - z[k]) * h[k] + z[k] * cand
        })
        .collect()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Average ranks (1-based) by direct counting: O(n²).
pub fn naive_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&xi| {
            let less = x.iter().filter(|&&v| v < xi).count() as f64;
            let equal = x.iter().filter(|&&v| v == xi).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Textbook product-moment correlation via the two-pass formula with
/// separate standard deviations.
pub fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..x.len() {
        cov += (x[i] - mx) * (y[i] - my);
        vx += (x[i] - mx).powi(2);
        vy += (y[i] - my).powi(2);
    }
    (cov / n) / ((vx / n).sqrt() * (vy / n).sqrt())
}

pub fn naive_spearman(x: &[f64], y: &[f64]) -> f64 {
    naive_pearson(&naive_ranks(x), &naive_ranks(y))
}

/// Column z-scoring with population standard deviation (zero spread → 1).
pub fn naive_standardize(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut out = x.to_vec();
    for k in 0..d {
        let mean = x.iter().map(|r| r[k]).sum::<f64>() / n;
        let var = x.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in out.iter_mut() {
            r[k] = (r[k] - mean) / sd;
        }
    }
    out
}

/// ε-SVR dual objective (max form) by explicit double sum over the kernel.
pub fn naive_svr_dual(beta: &[f64], z: &[Vec<f64>], y: &[f64], eps: f64) -> f64 {
    let n = beta.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k: f64 = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum();
            quad += beta[i] * beta[j] * k;
        }
    }
    let lin: f64 = (0..n).map(|i| y[i] * beta[i] - eps * beta[i].abs()).sum();
    -0.5 * quad + lin
}

/// Maximizes the dual for four examples by exhaustive search over
/// `β_1..β_3` on a lattice, with `β_4 = −(β_1 + β_2 + β_3)`. A coarse pass
/// with `step` is followed by a fine pass around the best coarse point.
pub fn brute_force_svr_dual4(z: &[Vec<f64>], y: &[f64], eps: f64, c: f64, step: f64) -> (f64, [f64; 4]) {
    assert_eq!(z.len(), 4);
    let kernel: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..4).map(|j| z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum()).collect())
        .collect();
    let objective = |b: &[f64; 4]| {
        let mut quad = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                quad += b[i] * b[j] * kernel[i][j];
            }
        }
        -0.5 * quad + (0..4).map(|i| y[i] * b[i] - eps * b[i].abs()).sum::<f64>()
    };
    let search = |center: [f64; 3], radius: f64, step: f64, best: &mut (f64, [f64; 4])| {
        let m = (radius / step).round() as i64;
        for p in -m..=m {
            for q in -m..=m {
                for r in -m..=m {
                    let b1 = center[0] + p as f64 * step;
                    let b2 = center[1] + q as f64 * step;
                    let b3 = center[2] + r as f64 * step;
                    let b4 = -(b1 + b2 + b3);
                    let b = [b1, b2, b3, b4];
                    if b.iter().any(|v| v.abs() > c + 1e-12) {
                        continue;
                    }
                    let v = objective(&b);
                    if v > best.0 {
                        *best = (v, b);
                    }
                }
            }
        }
    };
    let mut best = (f64::NEG_INFINITY, [0.0; 4]);
    search([0.0; 3], c, step, &mut best);
    let coarse = best.1;
    search([coarse[0], coarse[1], coarse[2]], step, step / 20.0, &mut best);
    best
}
