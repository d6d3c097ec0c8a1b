//! Cosine-similarity InfoNCE objective over two view embeddings.
//!
//! For node i the positive pair is (u_i, v_i); negatives are every other
//! embedding in both views. The printed per-pair log-ratio is non-positive,
//! so the training loss is its negated mean over both anchor directions:
//! `L = -(1/2N) * sum_i [ l(u_i, v_i) + l(v_i, u_i) ]`.
//!
//! Similarity rows are processed in fixed-size blocks with log-sum-exp
//! stabilization, so no N x N matrix is ever materialized and results are
//! identical across thread counts.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const BLOCK: usize = 256;

/// Per-pair terms and their aggregate.
#[derive(Debug, Clone)]
pub struct LossBreakdown {
    pub total: f64,
    pub pair_uv: Vec<f64>,
    pub pair_vu: Vec<f64>,
    pub temperature: f64,
}

/// Cosine similarity; zero-norm vectors compare as 0 (degenerate embedding).
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len());
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        log::warn!("cosine similarity of a zero-norm vector; returning 0");
        return 0.0;
    }
    dot / (nu.sqrt() * nv.sqrt())
}

fn check_pair(z_u: &Matrix, z_v: &Matrix, tau: f64) -> Result<()> {
    if tau <= 0.0 {
        return Err(Error::invalid("temperature", format!("{tau} <= 0")));
    }
    if z_u.rows() != z_v.rows() || z_u.cols() != z_v.cols() {
        return Err(Error::DimensionMismatch(format!(
            "view embeddings {}x{} vs {}x{}",
            z_u.rows(),
            z_u.cols(),
            z_v.rows(),
            z_v.cols()
        )));
    }
    Ok(())
}

/// Rows scaled to unit norm; zero rows stay zero.
fn normalize_rows(z: &Matrix) -> (Matrix, Vec<f64>) {
    let mut out = z.clone();
    let mut norms = Vec::with_capacity(z.rows());
    for i in 0..z.rows() {
        let n = z.row(i).iter().map(|x| x * x).sum::<f64>().sqrt();
        norms.push(n);
        if n > 0.0 {
            for v in out.row_mut(i) {
                *v /= n;
            }
        } else {
            log::warn!("zero-norm embedding row {i}; treated as all-zero direction");
        }
    }
    (out, norms)
}

fn copy_rows(m: &Matrix, start: usize, end: usize) -> Matrix {
    let mut out = Matrix::zeros(end - start, m.cols());
    for i in start..end {
        out.row_mut(i - start).copy_from_slice(m.row(i));
    }
    out
}

/// log-sum-exp over `sim/tau` for one anchor row; `skip` marks the intra-view
/// self-similarity to exclude.
fn anchor_lse(inter: &[f64], intra: &[f64], skip: usize, tau: f64) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for &s in inter {
        max = max.max(s / tau);
    }
    for (j, &s) in intra.iter().enumerate() {
        if j != skip {
            max = max.max(s / tau);
        }
    }
    let mut sum = 0.0;
    for &s in inter {
        sum += (s / tau - max).exp();
    }
    for (j, &s) in intra.iter().enumerate() {
        if j != skip {
            sum += (s / tau - max).exp();
        }
    }
    max + sum.ln()
}

/// Blocked pass over anchors of `a` against the two similarity targets;
/// returns (per-anchor log-sum-exp, per-anchor positive log term).
fn anchor_pass(a: &Matrix, other: &Matrix, tau: f64) -> (Vec<f64>, Vec<f64>) {
    let n = a.rows();
    let mut lse = vec![0.0; n];
    let mut pair = vec![0.0; n];
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        let block = copy_rows(a, start, end);
        let inter = block.matmul_nt(other); // s(a_i, other_j)
        let intra = block.matmul_nt(a); // s(a_i, a_j)
        let out: Vec<(f64, f64)> = (0..end - start)
            .into_par_iter()
            .map(|r| {
                let i = start + r;
                let l = anchor_lse(inter.row(r), intra.row(r), i, tau);
                (l, inter.get(r, i) / tau - l)
            })
            .collect();
        for (r, (l, p)) in out.into_iter().enumerate() {
            lse[start + r] = l;
            pair[start + r] = p;
        }
    }
    (lse, pair)
}

/// The log-ratio term for anchor `u_i` against positive `v_i` (0-based `i`).
pub fn pair_log_term(z_u: &Matrix, z_v: &Matrix, i: usize, tau: f64) -> Result<f64> {
    check_pair(z_u, z_v, tau)?;
    if i >= z_u.rows() {
        return Err(Error::invalid("i", format!("{i} >= {}", z_u.rows())));
    }
    let (u, _) = normalize_rows(z_u);
    let (v, _) = normalize_rows(z_v);
    let inter: Vec<f64> = (0..v.rows())
        .map(|j| u.row(i).iter().zip(v.row(j)).map(|(a, b)| a * b).sum())
        .collect();
    let intra: Vec<f64> = (0..u.rows())
        .map(|j| u.row(i).iter().zip(u.row(j)).map(|(a, b)| a * b).sum())
        .collect();
    Ok(inter[i] / tau - anchor_lse(&inter, &intra, i, tau))
}

/// Full objective; see the module docs for the aggregation.
pub fn contrastive_loss(z1: &Matrix, z2: &Matrix, tau: f64) -> Result<LossBreakdown> {
    check_pair(z1, z2, tau)?;
    let (u, _) = normalize_rows(z1);
    let (v, _) = normalize_rows(z2);
    let (_, pair_uv) = anchor_pass(&u, &v, tau);
    let (_, pair_vu) = anchor_pass(&v, &u, tau);
    Ok(assemble(pair_uv, pair_vu, tau))
}

fn assemble(pair_uv: Vec<f64>, pair_vu: Vec<f64>, tau: f64) -> LossBreakdown {
    let n = pair_uv.len();
    let total = if n == 0 {
        0.0
    } else {
        -(pair_uv.iter().sum::<f64>() + pair_vu.iter().sum::<f64>()) / (2.0 * n as f64)
    };
    LossBreakdown {
        total,
        pair_uv,
        pair_vu,
        temperature: tau,
    }
}

/// One anchor direction of the fused loss+gradient sweep: every similarity
/// block is computed once, converted in place into softmax coefficient
/// blocks, and consumed by the four gradient products. Returns the
/// per-anchor pair terms.
fn fused_direction(
    a: &Matrix,
    b: &Matrix,
    tau: f64,
    scale: f64,
    da: &mut Matrix,
    db: &mut Matrix,
) -> Vec<f64> {
    let n = a.rows();
    let mut pair = vec![0.0; n];
    for start in (0..n).step_by(BLOCK) {
        let end = (start + BLOCK).min(n);
        let rows = end - start;
        let block = copy_rows(a, start, end);
        let mut c_inter = block.matmul_nt(b);
        let mut c_intra = block.matmul_nt(a);
        let pair_block: Vec<f64> = c_inter
            .data_mut()
            .par_chunks_mut(n)
            .zip(c_intra.data_mut().par_chunks_mut(n))
            .enumerate()
            .map(|(r, (row_inter, row_intra))| {
                let i = start + r;
                let lse = anchor_lse(row_inter, row_intra, i, tau);
                let term = row_inter[i] / tau - lse;
                for (j, s) in row_inter.iter_mut().enumerate() {
                    let soft = (*s / tau - lse).exp();
                    *s = (soft - if j == i { 1.0 } else { 0.0 }) * scale;
                }
                for (j, s) in row_intra.iter_mut().enumerate() {
                    *s = if j == i {
                        0.0
                    } else {
                        (*s / tau - lse).exp() * scale
                    };
                }
                term
            })
            .collect();
        pair[start..end].copy_from_slice(&pair_block);
        // d a_block += C_inter * b + C_intra * a
        let mut da_block = c_inter.matmul(b);
        da_block.add_assign(&c_intra.matmul(a));
        for r in 0..rows {
            for (x, y) in da.row_mut(start + r).iter_mut().zip(da_block.row(r)) {
                *x += y;
            }
        }
        // scattered halves: d b += C_inter^T * a_block, d a += C_intra^T * a_block
        db.add_assign(&c_inter.matmul_tn(&block));
        da.add_assign(&c_intra.matmul_tn(&block));
    }
    pair
}

/// Loss plus exact gradients with respect to both raw (pre-normalization)
/// view embeddings.
pub fn contrastive_loss_and_grad(
    z1: &Matrix,
    z2: &Matrix,
    tau: f64,
) -> Result<(LossBreakdown, Matrix, Matrix)> {
    check_pair(z1, z2, tau)?;
    let n = z1.rows();
    let p = z1.cols();
    let (u, nu) = normalize_rows(z1);
    let (v, nv) = normalize_rows(z2);

    let mut du = Matrix::zeros(n, p);
    let mut dv = Matrix::zeros(n, p);
    let scale = 1.0 / (2.0 * n as f64 * tau);
    let pair_uv = fused_direction(&u, &v, tau, scale, &mut du, &mut dv);
    let pair_vu = fused_direction(&v, &u, tau, scale, &mut dv, &mut du);

    // chain through row normalization: dz = (I - u u^T) du / ||z||
    let unnormalize = |d: &Matrix, unit: &Matrix, norms: &[f64]| -> Matrix {
        let mut out = Matrix::zeros(n, p);
        for (i, &norm) in norms.iter().enumerate() {
            if norm == 0.0 {
                continue;
            }
            let g = d.row(i);
            let e = unit.row(i);
            let proj: f64 = g.iter().zip(e).map(|(a, b)| a * b).sum();
            for ((o, &gi), &ei) in out.row_mut(i).iter_mut().zip(g).zip(e) {
                *o = (gi - proj * ei) / norm;
            }
        }
        out
    };

    let dz1 = unnormalize(&du, &u, &nu);
    let dz2 = unnormalize(&dv, &v, &nv);
    Ok((assemble(pair_uv, pair_vu, tau), dz1, dz2))
}
