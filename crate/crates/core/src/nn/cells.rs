//! LSTM, multiplicative LSTM and GRU cells.
//!
//! Every cell exposes a plain step function (`lstm_step`, `mlstm_step`,
//! `gru_step`) and, through [`Cell`], a cached step plus its exact backward
//! step used for backpropagation through time.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{check_len, sigmoid, Matrix};
use super::params::{prefixed, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Mlstm,
    Gru,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Mlstm => "mlstm",
            CellKind::Gru => "gru",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lstm" => Ok(CellKind::Lstm),
            "mlstm" => Ok(CellKind::Mlstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::InvalidArgument(format!("unknown cell kind {other:?}"))),
        }
    }
}

/// Recurrent state carried between steps. `c` is empty for GRU cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(kind: CellKind, hidden: usize) -> Self {
        let c = if kind == CellKind::Gru { Vec::new() } else { vec![0.0; hidden] };
        CellState {
            h: vec![0.0; hidden],
            c,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_g: Matrix,
    pub u_i: Matrix,
    pub u_f: Matrix,
    pub u_o: Matrix,
    pub u_g: Matrix,
    pub b_i: Matrix,
    pub b_f: Matrix,
    pub b_o: Matrix,
    pub b_g: Matrix,
}

impl LstmCellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Matrix::zeros(hidden_dim, input_dim);
        let u = || Matrix::zeros(hidden_dim, hidden_dim);
        let b = || Matrix::zeros(hidden_dim, 1);
        LstmCellParams {
            w_i: w(),
            w_f: w(),
            w_o: w(),
            w_g: w(),
            u_i: u(),
            u_f: u(),
            u_o: u(),
            u_g: u(),
            b_i: b(),
            b_f: b(),
            b_o: b(),
            b_g: b(),
        }
    }

    /// Glorot-uniform matrices, zero biases, forget-gate bias 1.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = LstmCellParams::zeros(input_dim, hidden_dim);
        for m in [&mut p.w_i, &mut p.w_f, &mut p.w_o, &mut p.w_g] {
            *m = Matrix::glorot(hidden_dim, input_dim, rng);
        }
        for m in [&mut p.u_i, &mut p.u_f, &mut p.u_o, &mut p.u_g] {
            *m = Matrix::glorot(hidden_dim, hidden_dim, rng);
        }
        p.b_f.fill(1.0);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_i.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, x) = (self.hidden_dim(), self.input_dim());
        for (name, m) in self.params() {
            let want = match name.as_bytes()[0] {
                b'w' => (h, x),
                b'u' => (h, h),
                _ => (h, 1),
            };
            if m.shape() != want {
                return Err(Error::Shape(format!("lstm {name}: expected {want:?}, got {:?}", m.shape())));
            }
        }
        Ok(())
    }
}

impl ParamSet for LstmCellParams {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("w_i".into(), &self.w_i),
            ("w_f".into(), &self.w_f),
            ("w_o".into(), &self.w_o),
            ("w_g".into(), &self.w_g),
            ("u_i".into(), &self.u_i),
            ("u_f".into(), &self.u_f),
            ("u_o".into(), &self.u_o),
            ("u_g".into(), &self.u_g),
            ("b_i".into(), &self.b_i),
            ("b_f".into(), &self.b_f),
            ("b_o".into(), &self.b_o),
            ("b_g".into(), &self.b_g),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_i,
            &mut self.w_f,
            &mut self.w_o,
            &mut self.w_g,
            &mut self.u_i,
            &mut self.u_f,
            &mut self.u_o,
            &mut self.u_g,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_g,
        ]
    }
}

/// Multiplicative LSTM: the gates see `m = (W_mx x) ⊙ (W_mh h_prev)` in
/// place of `h_prev`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlstmCellParams {
    pub gates: LstmCellParams,
    pub w_mx: Matrix,
    pub w_mh: Matrix,
}

impl MlstmCellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        MlstmCellParams {
            gates: LstmCellParams::zeros(input_dim, hidden_dim),
            w_mx: Matrix::zeros(hidden_dim, input_dim),
            w_mh: Matrix::zeros(hidden_dim, hidden_dim),
        }
    }

    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let gates = LstmCellParams::init(input_dim, hidden_dim, rng);
        let w_mx = Matrix::glorot(hidden_dim, input_dim, rng);
        let w_mh = Matrix::glorot(hidden_dim, hidden_dim, rng);
        MlstmCellParams { gates, w_mx, w_mh }
    }

    pub fn input_dim(&self) -> usize {
        self.gates.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.gates.hidden_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.gates.validate()?;
        let (h, x) = (self.hidden_dim(), self.input_dim());
        if self.w_mx.shape() != (h, x) || self.w_mh.shape() != (h, h) {
            return Err(Error::Shape(format!(
                "mlstm multiplicative weights: expected {:?} and {:?}, got {:?} and {:?}",
                (h, x),
                (h, h),
                self.w_mx.shape(),
                self.w_mh.shape()
            )));
        }
        Ok(())
    }
}

impl ParamSet for MlstmCellParams {
    fn params(&self) -> Vec<(String, &Matrix)> {
        let mut v = self.gates.params();
        v.push(("w_mx".into(), &self.w_mx));
        v.push(("w_mh".into(), &self.w_mh));
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.gates.params_mut();
        v.push(&mut self.w_mx);
        v.push(&mut self.w_mh);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCellParams {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Matrix,
    pub b_r: Matrix,
    pub b_h: Matrix,
}

impl GruCellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Matrix::zeros(hidden_dim, input_dim);
        let u = || Matrix::zeros(hidden_dim, hidden_dim);
        let b = || Matrix::zeros(hidden_dim, 1);
        GruCellParams {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = GruCellParams::zeros(input_dim, hidden_dim);
        for m in [&mut p.w_z, &mut p.w_r, &mut p.w_h] {
            *m = Matrix::glorot(hidden_dim, input_dim, rng);
        }
        for m in [&mut p.u_z, &mut p.u_r, &mut p.u_h] {
            *m = Matrix::glorot(hidden_dim, hidden_dim, rng);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (h, x) = (self.hidden_dim(), self.input_dim());
        for (name, m) in self.params() {
            let want = match name.as_bytes()[0] {
                b'w' => (h, x),
                b'u' => (h, h),
                _ => (h, 1),
            };
            if m.shape() != want {
                return Err(Error::Shape(format!("gru {name}: expected {want:?}, got {:?}", m.shape())));
            }
        }
        Ok(())
    }
}

impl ParamSet for GruCellParams {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("w_z".into(), &self.w_z),
            ("w_r".into(), &self.w_r),
            ("w_h".into(), &self.w_h),
            ("u_z".into(), &self.u_z),
            ("u_r".into(), &self.u_r),
            ("u_h".into(), &self.u_h),
            ("b_z".into(), &self.b_z),
            ("b_r".into(), &self.b_r),
            ("b_h".into(), &self.b_h),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }
}

/// `W x + U r + b` for one gate.
fn affine(w: &Matrix, x: &[f64], u: &Matrix, r: &[f64], b: &Matrix) -> Vec<f64> {
    let mut a = b.as_slice().to_vec();
    w.matvec_acc(x, &mut a);
    u.matvec_acc(r, &mut a);
    a
}

#[derive(Debug, Clone)]
struct LstmGates {
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// Gate equations shared by LSTM and mLSTM; `r` is the recurrent input
/// (`h_prev` for LSTM, `m` for mLSTM).
fn lstm_core(p: &LstmCellParams, x: &[f64], r: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>, LstmGates) {
    let i: Vec<f64> = affine(&p.w_i, x, &p.u_i, r, &p.b_i).into_iter().map(sigmoid).collect();
    let f: Vec<f64> = affine(&p.w_f, x, &p.u_f, r, &p.b_f).into_iter().map(sigmoid).collect();
    let o: Vec<f64> = affine(&p.w_o, x, &p.u_o, r, &p.b_o).into_iter().map(sigmoid).collect();
    let g: Vec<f64> = affine(&p.w_g, x, &p.u_g, r, &p.b_g).into_iter().map(f64::tanh).collect();
    let n = i.len();
    let mut c = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut tanh_c = vec![0.0; n];
    for k in 0..n {
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }
    (h, c, LstmGates { i, f, o, g, tanh_c })
}

/// Backward through [`lstm_core`]. Accumulates parameter gradients into `grads`
/// and input gradients into `dx`; returns `(dr, dc_prev)`.
#[allow(clippy::too_many_arguments)]
fn lstm_core_backward(
    p: &LstmCellParams,
    grads: &mut LstmCellParams,
    x: &[f64],
    r: &[f64],
    c_prev: &[f64],
    gates: &LstmGates,
    dh: &[f64],
    dc: &[f64],
    dx: &mut [f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = dh.len();
    let mut da_i = vec![0.0; n];
    let mut da_f = vec![0.0; n];
    let mut da_o = vec![0.0; n];
    let mut da_g = vec![0.0; n];
    let mut dc_prev = vec![0.0; n];
    for k in 0..n {
        let LstmGates { i, f, o, g, tanh_c } = gates;
        let d_o = dh[k] * tanh_c[k];
        let dc_total = dc[k] + dh[k] * o[k] * (1.0 - tanh_c[k] * tanh_c[k]);
        let d_i = dc_total * g[k];
        let d_g = dc_total * i[k];
        let d_f = dc_total * c_prev[k];
        dc_prev[k] = dc_total * f[k];
        da_i[k] = d_i * i[k] * (1.0 - i[k]);
        da_f[k] = d_f * f[k] * (1.0 - f[k]);
        da_o[k] = d_o * o[k] * (1.0 - o[k]);
        da_g[k] = d_g * (1.0 - g[k] * g[k]);
    }
    let mut dr = vec![0.0; r.len()];
    for (da, w, u, gw, gu, gb) in [
        (&da_i, &p.w_i, &p.u_i, &mut grads.w_i, &mut grads.u_i, &mut grads.b_i),
        (&da_f, &p.w_f, &p.u_f, &mut grads.w_f, &mut grads.u_f, &mut grads.b_f),
        (&da_o, &p.w_o, &p.u_o, &mut grads.w_o, &mut grads.u_o, &mut grads.b_o),
        (&da_g, &p.w_g, &p.u_g, &mut grads.w_g, &mut grads.u_g, &mut grads.b_g),
    ] {
        gw.outer_acc(da, x);
        gu.outer_acc(da, r);
        gb.add_column_acc(da);
        w.matvec_t_acc(da, dx);
        u.matvec_t_acc(da, &mut dr);
    }
    (dr, dc_prev)
}

fn check_lstm_inputs(input_dim: usize, hidden_dim: usize, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<()> {
    check_len("input x_t", x.len(), input_dim)?;
    check_len("h_prev", h_prev.len(), hidden_dim)?;
    check_len("c_prev", c_prev.len(), hidden_dim)
}

/// One LSTM step: returns `(h, c)`.
pub fn lstm_step(p: &LstmCellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    check_lstm_inputs(p.input_dim(), p.hidden_dim(), x, h_prev, c_prev)?;
    let (h, c, _) = lstm_core(p, x, h_prev, c_prev);
    Ok((h, c))
}

fn mlstm_m(p: &MlstmCellParams, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mx = p.w_mx.matvec(x);
    let mh = p.w_mh.matvec(h_prev);
    let m = mx.iter().zip(&mh).map(|(a, b)| a * b).collect();
    (m, mx, mh)
}

/// One multiplicative-LSTM step: returns `(h, c)`.
pub fn mlstm_step(p: &MlstmCellParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    p.validate()?;
    check_lstm_inputs(p.input_dim(), p.hidden_dim(), x, h_prev, c_prev)?;
    let (m, _, _) = mlstm_m(p, x, h_prev);
    let (h, c, _) = lstm_core(&p.gates, x, &m, c_prev);
    Ok((h, c))
}

#[derive(Debug, Clone)]
struct GruInternals {
    z: Vec<f64>,
    r: Vec<f64>,
    h_tilde: Vec<f64>,
    rh: Vec<f64>,
}

fn gru_core(p: &GruCellParams, x: &[f64], h_prev: &[f64]) -> (Vec<f64>, GruInternals) {
    let z: Vec<f64> = affine(&p.w_z, x, &p.u_z, h_prev, &p.b_z).into_iter().map(sigmoid).collect();
    let r: Vec<f64> = affine(&p.w_r, x, &p.u_r, h_prev, &p.b_r).into_iter().map(sigmoid).collect();
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
    let h_tilde: Vec<f64> = affine(&p.w_h, x, &p.u_h, &rh, &p.b_h).into_iter().map(f64::tanh).collect();
    let h = (0..z.len())
        .map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * h_tilde[k])
        .collect();
    (h, GruInternals { z, r, h_tilde, rh })
}

/// One GRU step: returns the next hidden state.
pub fn gru_step(p: &GruCellParams, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
    p.validate()?;
    check_len("input x_t", x.len(), p.input_dim())?;
    check_len("h_prev", h_prev.len(), p.hidden_dim())?;
    Ok(gru_core(p, x, h_prev).0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Lstm(LstmCellParams),
    Mlstm(MlstmCellParams),
    Gru(GruCellParams),
}

/// Everything a backward step needs from its forward step.
#[derive(Debug, Clone)]
pub struct StepCache {
    x: Vec<f64>,
    prev: CellState,
    inner: StepInner,
}

#[derive(Debug, Clone)]
enum StepInner {
    Lstm(LstmGates),
    Mlstm {
        gates: LstmGates,
        m: Vec<f64>,
        mx: Vec<f64>,
        mh: Vec<f64>,
    },
    Gru(GruInternals),
}

impl Cell {
    pub fn init<R: Rng>(kind: CellKind, input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        match kind {
            CellKind::Lstm => Cell::Lstm(LstmCellParams::init(input_dim, hidden_dim, rng)),
            CellKind::Mlstm => Cell::Mlstm(MlstmCellParams::init(input_dim, hidden_dim, rng)),
            CellKind::Gru => Cell::Gru(GruCellParams::init(input_dim, hidden_dim, rng)),
        }
    }

    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        match kind {
            CellKind::Lstm => Cell::Lstm(LstmCellParams::zeros(input_dim, hidden_dim)),
            CellKind::Mlstm => Cell::Mlstm(MlstmCellParams::zeros(input_dim, hidden_dim)),
            CellKind::Gru => Cell::Gru(GruCellParams::zeros(input_dim, hidden_dim)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            Cell::Lstm(_) => CellKind::Lstm,
            Cell::Mlstm(_) => CellKind::Mlstm,
            Cell::Gru(_) => CellKind::Gru,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Cell::Lstm(p) => p.input_dim(),
            Cell::Mlstm(p) => p.input_dim(),
            Cell::Gru(p) => p.input_dim(),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            Cell::Lstm(p) => p.hidden_dim(),
            Cell::Mlstm(p) => p.hidden_dim(),
            Cell::Gru(p) => p.hidden_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Cell::Lstm(p) => p.validate(),
            Cell::Mlstm(p) => p.validate(),
            Cell::Gru(p) => p.validate(),
        }
    }

    pub fn zero_state(&self) -> CellState {
        CellState::zeros(self.kind(), self.hidden_dim())
    }

    pub(crate) fn check_state(&self, s: &CellState) -> Result<()> {
        check_len("h state", s.h.len(), self.hidden_dim())?;
        let want_c = if self.kind() == CellKind::Gru { 0 } else { self.hidden_dim() };
        check_len("c state", s.c.len(), want_c)
    }

    /// Forward step without recording a cache.
    pub fn step(&self, x: &[f64], prev: &CellState) -> CellState {
        match self {
            Cell::Lstm(p) => {
                let (h, c, _) = lstm_core(p, x, &prev.h, &prev.c);
                CellState { h, c }
            }
            Cell::Mlstm(p) => {
                let (m, _, _) = mlstm_m(p, x, &prev.h);
                let (h, c, _) = lstm_core(&p.gates, x, &m, &prev.c);
                CellState { h, c }
            }
            Cell::Gru(p) => CellState {
                h: gru_core(p, x, &prev.h).0,
                c: Vec::new(),
            },
        }
    }

    pub fn step_cached(&self, x: &[f64], prev: &CellState) -> (CellState, StepCache) {
        let (next, inner) = match self {
            Cell::Lstm(p) => {
                let (h, c, gates) = lstm_core(p, x, &prev.h, &prev.c);
                (CellState { h, c }, StepInner::Lstm(gates))
            }
            Cell::Mlstm(p) => {
                let (m, mx, mh) = mlstm_m(p, x, &prev.h);
                let (h, c, gates) = lstm_core(&p.gates, x, &m, &prev.c);
                (CellState { h, c }, StepInner::Mlstm { gates, m, mx, mh })
            }
            Cell::Gru(p) => {
                let (h, internals) = gru_core(p, x, &prev.h);
                (CellState { h, c: Vec::new() }, StepInner::Gru(internals))
            }
        };
        let cache = StepCache {
            x: x.to_vec(),
            prev: prev.clone(),
            inner,
        };
        (next, cache)
    }

    /// Backward through one step. `d_next` holds `∂L/∂h_t` and `∂L/∂c_t`
    /// (`c` empty for GRU). Accumulates parameter gradients into `grads`
    /// (which must be the same cell kind) and `∂L/∂x_t` into `dx`; returns
    /// `∂L/∂state_{t-1}`.
    pub fn backward_step(&self, cache: &StepCache, d_next: &CellState, grads: &mut Cell, dx: &mut [f64]) -> CellState {
        match (self, grads, &cache.inner) {
            (Cell::Lstm(p), Cell::Lstm(g), StepInner::Lstm(gates)) => {
                let (dh_prev, dc_prev) = lstm_core_backward(
                    p,
                    g,
                    &cache.x,
                    &cache.prev.h,
                    &cache.prev.c,
                    gates,
                    &d_next.h,
                    &d_next.c,
                    dx,
                );
                CellState { h: dh_prev, c: dc_prev }
            }
            (Cell::Mlstm(p), Cell::Mlstm(g), StepInner::Mlstm { gates, m, mx, mh }) => {
                let (dm, dc_prev) = lstm_core_backward(
                    &p.gates,
                    &mut g.gates,
                    &cache.x,
                    m,
                    &cache.prev.c,
                    gates,
                    &d_next.h,
                    &d_next.c,
                    dx,
                );
                let dmx: Vec<f64> = dm.iter().zip(mh).map(|(a, b)| a * b).collect();
                let dmh: Vec<f64> = dm.iter().zip(mx).map(|(a, b)| a * b).collect();
                g.w_mx.outer_acc(&dmx, &cache.x);
                g.w_mh.outer_acc(&dmh, &cache.prev.h);
                p.w_mx.matvec_t_acc(&dmx, dx);
                let mut dh_prev = vec![0.0; dm.len()];
                p.w_mh.matvec_t_acc(&dmh, &mut dh_prev);
                CellState { h: dh_prev, c: dc_prev }
            }
            (Cell::Gru(p), Cell::Gru(g), StepInner::Gru(GruInternals { z, r, h_tilde, rh })) => {
                let h_prev = &cache.prev.h;
                let dh = &d_next.h;
                let n = dh.len();
                let mut dh_prev = vec![0.0; n];
                let mut da_z = vec![0.0; n];
                let mut da_h = vec![0.0; n];
                for k in 0..n {
                    dh_prev[k] = dh[k] * (1.0 - z[k]);
                    let dz = dh[k] * (h_tilde[k] - h_prev[k]);
                    da_z[k] = dz * z[k] * (1.0 - z[k]);
                    da_h[k] = dh[k] * z[k] * (1.0 - h_tilde[k] * h_tilde[k]);
                }
                g.w_h.outer_acc(&da_h, &cache.x);
                g.u_h.outer_acc(&da_h, rh);
                g.b_h.add_column_acc(&da_h);
                p.w_h.matvec_t_acc(&da_h, dx);
                let mut drh = vec![0.0; n];
                p.u_h.matvec_t_acc(&da_h, &mut drh);
                let mut da_r = vec![0.0; n];
                for k in 0..n {
                    dh_prev[k] += drh[k] * r[k];
                    let dr = drh[k] * h_prev[k];
                    da_r[k] = dr * r[k] * (1.0 - r[k]);
                }
                for (da, w, u, gw, gu, gb) in [
                    (&da_z, &p.w_z, &p.u_z, &mut g.w_z, &mut g.u_z, &mut g.b_z),
                    (&da_r, &p.w_r, &p.u_r, &mut g.w_r, &mut g.u_r, &mut g.b_r),
                ] {
                    gw.outer_acc(da, &cache.x);
                    gu.outer_acc(da, h_prev);
                    gb.add_column_acc(da);
                    w.matvec_t_acc(da, dx);
                    u.matvec_t_acc(da, &mut dh_prev);
                }
                CellState {
                    h: dh_prev,
                    c: Vec::new(),
                }
            }
            _ => panic!("backward_step: gradient container does not match cell kind"),
        }
    }
}

impl ParamSet for Cell {
    fn params(&self) -> Vec<(String, &Matrix)> {
        match self {
            Cell::Lstm(p) => prefixed("lstm", p.params()),
            Cell::Mlstm(p) => prefixed("mlstm", p.params()),
            Cell::Gru(p) => prefixed("gru", p.params()),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Cell::Lstm(p) => p.params_mut(),
            Cell::Mlstm(p) => p.params_mut(),
            Cell::Gru(p) => p.params_mut(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_lstm_from_zero_state_stays_zero() {
        let p = LstmCellParams::zeros(3, 4);
        let (h, c) = lstm_step(&p, &[1.0, -2.0, 0.5], &[0.0; 4], &[0.0; 4]).unwrap();
        assert!(h.iter().chain(&c).all(|&v| v == 0.0));
    }

    #[test]
    fn zero_lstm_halves_cell_state() {
        let p = LstmCellParams::zeros(2, 3);
        let c_prev = [0.8, -1.2, 3.0];
        let (h, c) = lstm_step(&p, &[0.3, 0.1], &[0.0; 3], &c_prev).unwrap();
        for k in 0..3 {
            assert_eq!(c[k], 0.5 * c_prev[k]);
            assert_eq!(h[k], 0.5 * (0.5 * c_prev[k]).tanh());
        }
    }

    #[test]
    fn mlstm_zero_hidden_ignores_recurrent_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = MlstmCellParams::init(3, 4, &mut rng);
        let mut q = p.clone();
        q.gates.u_i = Matrix::uniform(4, 4, 3.0, &mut rng);
        q.gates.u_g = Matrix::uniform(4, 4, 3.0, &mut rng);
        q.w_mh = Matrix::uniform(4, 4, 3.0, &mut rng);
        let x = [0.2, -0.7, 1.1];
        let c_prev = [0.1, 0.2, 0.3, 0.4];
        let a = mlstm_step(&p, &x, &[0.0; 4], &c_prev).unwrap();
        let b = mlstm_step(&q, &x, &[0.0; 4], &c_prev).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mlstm_identity_projections_give_elementwise_product() {
        let p = MlstmCellParams {
            gates: LstmCellParams::zeros(3, 3),
            w_mx: Matrix::identity(3),
            w_mh: Matrix::identity(3),
        };
        let (m, _, _) = mlstm_m(&p, &[1.0, 2.0, 3.0], &[0.5, -1.0, 0.0]);
        assert_eq!(m, vec![0.5, -2.0, 0.0]);
    }

    #[test]
    fn zero_gru_examples() {
        let p = GruCellParams::zeros(2, 3);
        assert_eq!(gru_step(&p, &[1.0, 1.0], &[0.0; 3]).unwrap(), vec![0.0; 3]);
        let v = [0.4, -2.0, 1.0];
        assert_eq!(gru_step(&p, &[1.0, 1.0], &v).unwrap(), vec![0.2, -1.0, 0.5]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = LstmCellParams::zeros(3, 4);
        assert!(matches!(lstm_step(&p, &[0.0; 2], &[0.0; 4], &[0.0; 4]), Err(Error::Shape(_))));
        let g = GruCellParams::zeros(3, 4);
        assert!(matches!(gru_step(&g, &[0.0; 3], &[0.0; 5]), Err(Error::Shape(_))));
        let mut bad = MlstmCellParams::zeros(3, 4);
        bad.w_mh = Matrix::zeros(4, 3);
        assert!(mlstm_step(&bad, &[0.0; 3], &[0.0; 4], &[0.0; 4]).is_err());
    }

    #[test]
    fn init_sets_forget_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmCellParams::init(5, 7, &mut rng);
        assert!(p.b_f.as_slice().iter().all(|&b| b == 1.0));
        assert!(p.b_i.as_slice().iter().all(|&b| b == 0.0));
        let s = (6.0f64 / 12.0).sqrt();
        assert!(p.w_i.as_slice().iter().all(|w| w.abs() <= s));
    }
}
