//! Two-layer GCN encoder with PReLU, a two-stage projection head, exact
//! hand-written reverse-mode gradients, and Adam.
//!
//! Shapes: features `N x F`, `w1: F x h`, `w2: h x o`, projection
//! `o x p` (+bias) then `p x p` (+bias). The encoder output `H` feeds
//! downstream evaluation; the projected `Z` feeds the contrastive loss.
//! Every view rebuilds its own message-passing operator, so degrees always
//! reflect the view's edge set.

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::matrix::Matrix;
use crate::rng::StreamRng;

#[derive(Debug, Clone)]
pub struct EncoderConfig {
    pub in_dim: usize,
    pub hidden_dim: usize,
    pub out_dim: usize,
    pub proj_dim: usize,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn new(in_dim: usize) -> Self {
        EncoderConfig {
            in_dim,
            hidden_dim: 512,
            out_dim: 256,
            proj_dim: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub w1: Matrix,
    pub w2: Matrix,
    /// PReLU negative slopes, one per GCN layer.
    pub prelu_slopes: Vec<f64>,
    pub proj_w1: Matrix,
    pub proj_b1: Vec<f64>,
    pub proj_w2: Matrix,
    pub proj_b2: Vec<f64>,
}

fn uniform_fan_in(rows: usize, cols: usize, rng: &mut StreamRng) -> Matrix {
    let scale = 1.0 / (rows as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.symmetric(scale))
}

impl EncoderParams {
    /// Symmetric uniform fan-in init; PReLU slopes start at 0.25.
    pub fn init(cfg: &EncoderConfig) -> Self {
        let mut rng = StreamRng::new(cfg.seed ^ 0x9a2f_11c7_55d3_0e41);
        EncoderParams {
            w1: uniform_fan_in(cfg.in_dim, cfg.hidden_dim, &mut rng),
            w2: uniform_fan_in(cfg.hidden_dim, cfg.out_dim, &mut rng),
            prelu_slopes: vec![0.25, 0.25],
            proj_w1: uniform_fan_in(cfg.out_dim, cfg.proj_dim, &mut rng),
            proj_b1: vec![0.0; cfg.proj_dim],
            proj_w2: uniform_fan_in(cfg.proj_dim, cfg.proj_dim, &mut rng),
            proj_b2: vec![0.0; cfg.proj_dim],
        }
    }

    /// Named parameter blocks with shapes, in a fixed order.
    pub fn blocks(&self) -> Vec<(&'static str, usize, usize, &[f64])> {
        vec![
            ("w1", self.w1.rows(), self.w1.cols(), self.w1.data()),
            ("w2", self.w2.rows(), self.w2.cols(), self.w2.data()),
            (
                "prelu_slopes",
                1,
                self.prelu_slopes.len(),
                &self.prelu_slopes,
            ),
            (
                "proj_w1",
                self.proj_w1.rows(),
                self.proj_w1.cols(),
                self.proj_w1.data(),
            ),
            ("proj_b1", 1, self.proj_b1.len(), &self.proj_b1),
            (
                "proj_w2",
                self.proj_w2.rows(),
                self.proj_w2.cols(),
                self.proj_w2.data(),
            ),
            ("proj_b2", 1, self.proj_b2.len(), &self.proj_b2),
        ]
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        match name {
            "w1" => Some(self.w1.data_mut()),
            "w2" => Some(self.w2.data_mut()),
            "prelu_slopes" => Some(&mut self.prelu_slopes),
            "proj_w1" => Some(self.proj_w1.data_mut()),
            "proj_b1" => Some(&mut self.proj_b1),
            "proj_w2" => Some(self.proj_w2.data_mut()),
            "proj_b2" => Some(&mut self.proj_b2),
            _ => None,
        }
    }
}

fn prelu(m: &Matrix, slope: f64) -> Matrix {
    m.map(|x| if x > 0.0 { x } else { slope * x })
}

/// Cached activations from one forward pass over one view.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub x: Matrix,
    pre1: Matrix,
    h1: Matrix,
    pre2: Matrix,
    /// Encoder output H (pre-projection); downstream evaluation reads this.
    pub embeddings: Matrix,
    proj_pre: Matrix,
    proj_hidden: Matrix,
    /// Projected embeddings Z; the contrastive loss reads this.
    pub z: Matrix,
}

fn check_dims(x: &Matrix, params: &EncoderParams, n: usize) -> Result<()> {
    if x.rows() != n {
        return Err(Error::DimensionMismatch(format!(
            "feature rows {} vs {} nodes",
            x.rows(),
            n
        )));
    }
    if x.cols() != params.w1.rows() {
        return Err(Error::DimensionMismatch(format!(
            "feature dim {} vs w1 input dim {}",
            x.cols(),
            params.w1.rows()
        )));
    }
    Ok(())
}

/// `H = PReLU(A_hat * PReLU(A_hat * X * W1) * W2)` plus the projection head;
/// all intermediates are retained for the backward pass.
pub fn forward(
    adj: &NormalizedAdjacency,
    x: Matrix,
    params: &EncoderParams,
) -> Result<ForwardTrace> {
    check_dims(&x, params, adj.num_nodes())?;
    let pre1 = adj.spmm(&x.matmul(&params.w1));
    let h1 = prelu(&pre1, params.prelu_slopes[0]);
    let pre2 = adj.spmm(&h1.matmul(&params.w2));
    let embeddings = prelu(&pre2, params.prelu_slopes[1]);

    let mut proj_pre = embeddings.matmul(&params.proj_w1);
    proj_pre.add_row_broadcast(&params.proj_b1);
    let proj_hidden = proj_pre.map(|v| v.max(0.0));
    let mut z = proj_hidden.matmul(&params.proj_w2);
    z.add_row_broadcast(&params.proj_b2);

    Ok(ForwardTrace {
        x,
        pre1,
        h1,
        pre2,
        embeddings,
        proj_pre,
        proj_hidden,
        z,
    })
}

/// Encoder-only pass; returns the embeddings H and the full trace.
pub fn gcn_forward(
    adj: &NormalizedAdjacency,
    x: Matrix,
    params: &EncoderParams,
) -> Result<(Matrix, ForwardTrace)> {
    let trace = forward(adj, x, params)?;
    Ok((trace.embeddings.clone(), trace))
}

/// Projection head alone: `Z = Linear(ReLU(Dense(H)))`.
pub fn project(h: &Matrix, params: &EncoderParams) -> Matrix {
    let mut pre = h.matmul(&params.proj_w1);
    pre.add_row_broadcast(&params.proj_b1);
    let hidden = pre.map(|v| v.max(0.0));
    let mut z = hidden.matmul(&params.proj_w2);
    z.add_row_broadcast(&params.proj_b2);
    z
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub w1: Matrix,
    pub w2: Matrix,
    pub prelu_slopes: Vec<f64>,
    pub proj_w1: Matrix,
    pub proj_b1: Vec<f64>,
    pub proj_w2: Matrix,
    pub proj_b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &EncoderParams) -> Self {
        Gradients {
            w1: Matrix::zeros(params.w1.rows(), params.w1.cols()),
            w2: Matrix::zeros(params.w2.rows(), params.w2.cols()),
            prelu_slopes: vec![0.0; params.prelu_slopes.len()],
            proj_w1: Matrix::zeros(params.proj_w1.rows(), params.proj_w1.cols()),
            proj_b1: vec![0.0; params.proj_b1.len()],
            proj_w2: Matrix::zeros(params.proj_w2.rows(), params.proj_w2.cols()),
            proj_b2: vec![0.0; params.proj_b2.len()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        self.w1.add_assign(&other.w1);
        self.w2.add_assign(&other.w2);
        for (a, b) in self.prelu_slopes.iter_mut().zip(&other.prelu_slopes) {
            *a += b;
        }
        self.proj_w1.add_assign(&other.proj_w1);
        for (a, b) in self.proj_b1.iter_mut().zip(&other.proj_b1) {
            *a += b;
        }
        self.proj_w2.add_assign(&other.proj_w2);
        for (a, b) in self.proj_b2.iter_mut().zip(&other.proj_b2) {
            *a += b;
        }
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        match name {
            "w1" => Some(self.w1.data()),
            "w2" => Some(self.w2.data()),
            "prelu_slopes" => Some(&self.prelu_slopes),
            "proj_w1" => Some(self.proj_w1.data()),
            "proj_b1" => Some(&self.proj_b1),
            "proj_w2" => Some(self.proj_w2.data()),
            "proj_b2" => Some(&self.proj_b2),
            _ => None,
        }
    }
}

/// Exact reverse pass through the projection head and both GCN layers.
/// `dz` is the loss gradient with respect to the trace's `z`.
pub fn backward(
    adj: &NormalizedAdjacency,
    trace: &ForwardTrace,
    params: &EncoderParams,
    dz: &Matrix,
) -> Result<Gradients> {
    if dz.rows() != trace.z.rows() || dz.cols() != trace.z.cols() {
        return Err(Error::DimensionMismatch(format!(
            "loss gradient {}x{} vs z {}x{}",
            dz.rows(),
            dz.cols(),
            trace.z.rows(),
            trace.z.cols()
        )));
    }

    // projection head
    let proj_b2 = dz.col_sums();
    let proj_w2 = trace.proj_hidden.matmul_tn(dz);
    let d_hidden = dz.matmul_nt(&params.proj_w2);
    let mut d_proj_pre = d_hidden;
    for (g, &pre) in d_proj_pre.data_mut().iter_mut().zip(trace.proj_pre.data()) {
        if pre <= 0.0 {
            *g = 0.0;
        }
    }
    let proj_b1 = d_proj_pre.col_sums();
    let proj_w1 = trace.embeddings.matmul_tn(&d_proj_pre);
    let d_emb = d_proj_pre.matmul_nt(&params.proj_w1);

    // second GCN layer
    let slope2 = params.prelu_slopes[1];
    let mut d_pre2 = d_emb;
    let mut d_slope2 = 0.0;
    for (g, &pre) in d_pre2.data_mut().iter_mut().zip(trace.pre2.data()) {
        if pre <= 0.0 {
            d_slope2 += *g * pre;
            *g *= slope2;
        }
    }
    let d_a2 = adj.spmm(&d_pre2); // A_hat is symmetric
    let w2 = trace.h1.matmul_tn(&d_a2);
    let d_h1 = d_a2.matmul_nt(&params.w2);

    // first GCN layer
    let slope1 = params.prelu_slopes[0];
    let mut d_pre1 = d_h1;
    let mut d_slope1 = 0.0;
    for (g, &pre) in d_pre1.data_mut().iter_mut().zip(trace.pre1.data()) {
        if pre <= 0.0 {
            d_slope1 += *g * pre;
            *g *= slope1;
        }
    }
    let d_a1 = adj.spmm(&d_pre1);
    let w1 = trace.x.matmul_tn(&d_a1);

    Ok(Gradients {
        w1,
        w2,
        prelu_slopes: vec![d_slope1, d_slope2],
        proj_w1,
        proj_b1,
        proj_w2,
        proj_b2,
    })
}

/// One-tensor Adam update with L2 weight decay folded into the gradient.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    name: &'static str,
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    debug_assert_eq!(theta.len(), grad.len());
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { param: name });
    }
    let bc1 = 1.0 - beta1.powi(step as i32);
    let bc2 = 1.0 - beta2.powi(step as i32);
    for i in 0..theta.len() {
        let g = grad[i] + weight_decay * theta[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Moments and step counter for the whole encoder.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    pub fn new(learning_rate: f64, weight_decay: f64, params: &EncoderParams) -> Self {
        AdamState {
            learning_rate,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
        }
    }
}

/// Standard Adam step over every parameter block; deterministic.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<()> {
    state.step += 1;
    let (lr, wd, b1, b2, eps, t) = (
        state.learning_rate,
        state.weight_decay,
        state.beta1,
        state.beta2,
        state.eps,
        state.step,
    );
    macro_rules! upd {
        ($name:literal, $theta:expr, $grad:expr, $m:expr, $v:expr) => {
            adam_update($name, $theta, $grad, $m, $v, t, lr, wd, b1, b2, eps)?;
        };
    }
    upd!(
        "w1",
        params.w1.data_mut(),
        grads.w1.data(),
        state.m.w1.data_mut(),
        state.v.w1.data_mut()
    );
    upd!(
        "w2",
        params.w2.data_mut(),
        grads.w2.data(),
        state.m.w2.data_mut(),
        state.v.w2.data_mut()
    );
    upd!(
        "prelu_slopes",
        &mut params.prelu_slopes,
        &grads.prelu_slopes,
        &mut state.m.prelu_slopes,
        &mut state.v.prelu_slopes
    );
    upd!(
        "proj_w1",
        params.proj_w1.data_mut(),
        grads.proj_w1.data(),
        state.m.proj_w1.data_mut(),
        state.v.proj_w1.data_mut()
    );
    upd!(
        "proj_b1",
        &mut params.proj_b1,
        &grads.proj_b1,
        &mut state.m.proj_b1,
        &mut state.v.proj_b1
    );
    upd!(
        "proj_w2",
        params.proj_w2.data_mut(),
        grads.proj_w2.data(),
        state.m.proj_w2.data_mut(),
        state.v.proj_w2.data_mut()
    );
    upd!(
        "proj_b2",
        &mut params.proj_b2,
        &grads.proj_b2,
        &mut state.m.proj_b2,
        &mut state.v.proj_b2
    );
    Ok(())
}
