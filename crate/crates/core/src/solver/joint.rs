//! The joint bilinear fit of per-pixel weights and per-band shared values:
//! damped Gauss-Newton outer iterations with preconditioned conjugate
//! gradient inner solves and a block Jacobi preconditioner (3x3 blocks for
//! each pixel's free weights, scalar blocks for shared values).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::corner_indices;

use super::SolverOptions;

const DET_CHUNK: usize = 4096;

/// Deterministic dot product: fixed-size chunk partials summed in order,
/// so results are identical at any thread count.
fn det_dot(a: &[f64], b: &[f64]) -> f64 {
    a.par_chunks(DET_CHUNK)
        .zip(b.par_chunks(DET_CHUNK))
        .map(|(ca, cb)| ca.iter().zip(cb).map(|(x, y)| x * y).sum::<f64>())
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

fn det_sumsq(a: &[f64]) -> f64 {
    det_dot(a, a)
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n_rows: usize,
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(out.len(), self.n_rows);
        let indptr = &self.indptr;
        let indices = &self.indices;
        let data = &self.data;
        out.par_iter_mut().enumerate().for_each(|(row, o)| {
            let mut acc = 0.0;
            for k in indptr[row]..indptr[row + 1] {
                acc += data[k] * x[indices[k] as usize];
            }
            *o = acc;
        });
    }

    pub fn transpose(&self) -> Csr {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.indices {
            counts[c as usize + 1] += 1;
        }
        for i in 0..self.n_cols {
            counts[i + 1] += counts[i];
        }
        let indptr = counts.clone();
        let nnz = self.data.len();
        let mut indices = vec![0u32; nnz];
        let mut data = vec![0.0; nnz];
        let mut cursor = counts;
        for row in 0..self.n_rows {
            for k in self.indptr[row]..self.indptr[row + 1] {
                let c = self.indices[k] as usize;
                let dst = cursor[c];
                cursor[c] += 1;
                indices[dst] = row as u32;
                data[dst] = self.data[k];
            }
        }
        Csr {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            indptr,
            indices,
            data,
        }
    }

    /// Per-column sums of squared entries (the diagonal of J'J).
    pub fn column_sumsq(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_cols];
        for (k, &c) in self.indices.iter().enumerate() {
            d[c as usize] += self.data[k] * self.data[k];
        }
        d
    }
}

/// The assembled joint problem: residuals are, in fixed order, the per-band
/// data misfits, then four weight hinge penalties per pixel, then two bound
/// hinge penalties per shared value.
pub struct JointSystem {
    pub width: usize,
    pub height: usize,
    pub n_bands: usize,
    lat_w: usize,
    obs: Vec<Vec<f64>>,
    bounds: Vec<(f64, f64)>,
    /// per pixel: index of its 3-parameter weight block, if constrained
    w_block: Vec<Option<u32>>,
    n_w_blocks: usize,
    /// per band, per lattice point: variable index
    s_var: Vec<Vec<Option<u32>>>,
    /// ordered list of (band, lattice index) for shared-value variables
    s_list: Vec<(u32, u32)>,
    /// ordered list of pixels owning a weight block
    w_pixels: Vec<u32>,
    data_rows: Vec<(u32, u32)>,
    n_vars: usize,
    n_residuals: usize,
    sqrt_mu: f64,
}

impl JointSystem {
    /// Builds the system from per-band normalized observations and the
    /// validity pattern of the initial shared values.
    pub fn new(
        width: usize,
        height: usize,
        obs: Vec<Vec<f64>>,
        obs_valid: Vec<Vec<bool>>,
        s_valid: Vec<Vec<bool>>,
        bounds: Vec<(f64, f64)>,
        bound_penalty_weight: f64,
    ) -> Result<Self> {
        let n_bands = obs.len();
        if n_bands == 0 {
            return Err(Error::Precondition("joint fit needs at least one band".into()));
        }
        let n_pix = width * height;
        let lat_w = width + 1;
        let lat_h = height + 1;
        for b in 0..n_bands {
            if obs[b].len() != n_pix || obs_valid[b].len() != n_pix {
                return Err(Error::Dimension("observation size mismatch".into()));
            }
            if s_valid[b].len() != lat_w * lat_h {
                return Err(Error::Dimension("lattice size mismatch".into()));
            }
        }

        // weight blocks: pixels with at least one valid observation
        let mut w_block = vec![None; n_pix];
        let mut w_pixels = Vec::new();
        for p in 0..n_pix {
            if (0..n_bands).any(|b| obs_valid[b][p]) {
                w_block[p] = Some(w_pixels.len() as u32);
                w_pixels.push(p as u32);
            }
        }
        let n_w_blocks = w_pixels.len();

        let mut s_var = vec![vec![None; lat_w * lat_h]; n_bands];
        let mut s_list = Vec::new();
        for b in 0..n_bands {
            for l in 0..lat_w * lat_h {
                if s_valid[b][l] {
                    s_var[b][l] = Some((3 * n_w_blocks + s_list.len()) as u32);
                    s_list.push((b as u32, l as u32));
                }
            }
        }
        let n_vars = 3 * n_w_blocks + s_list.len();

        let mut data_rows = Vec::new();
        for b in 0..n_bands {
            for p in 0..n_pix {
                if obs_valid[b][p] {
                    data_rows.push((b as u32, p as u32));
                }
            }
        }
        let n_residuals = data_rows.len() + 4 * n_w_blocks + 2 * s_list.len();

        // penalty scale follows the data magnitude
        let mut sumsq = 0.0;
        let mut count = 0usize;
        for b in 0..n_bands {
            for p in 0..n_pix {
                if obs_valid[b][p] {
                    sumsq += obs[b][p] * obs[b][p];
                    count += 1;
                }
            }
        }
        let mean_sq = if count > 0 { sumsq / count as f64 } else { 1.0 };
        let sqrt_mu = (bound_penalty_weight * mean_sq.max(1e-12)).sqrt();

        Ok(JointSystem {
            width,
            height,
            n_bands,
            lat_w,
            obs,
            bounds,
            w_block,
            n_w_blocks,
            s_var,
            s_list,
            w_pixels,
            data_rows,
            n_vars,
            n_residuals,
            sqrt_mu,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_residuals(&self) -> usize {
        self.n_residuals
    }

    /// Variable vector from uniform initial weights and initial shared values.
    pub fn initial_vector(&self, s_init: &[Vec<f64>]) -> Vec<f64> {
        let mut x = vec![0.25; self.n_vars];
        for (i, &(b, l)) in self.s_list.iter().enumerate() {
            x[3 * self.n_w_blocks + i] = s_init[b as usize][l as usize];
        }
        x
    }

    fn w_of(&self, x: &[f64], block: u32) -> [f64; 4] {
        let base = 3 * block as usize;
        let w0 = x[base];
        let w1 = x[base + 1];
        let w2 = x[base + 2];
        [w0, w1, w2, 1.0 - w0 - w1 - w2]
    }

    fn corners_of(&self, pixel: u32) -> [usize; 4] {
        let px = pixel as usize % self.width;
        let py = pixel as usize / self.width;
        let c = corner_indices(px, py);
        [
            c[0].1 * self.lat_w + c[0].0,
            c[1].1 * self.lat_w + c[1].0,
            c[2].1 * self.lat_w + c[2].0,
            c[3].1 * self.lat_w + c[3].0,
        ]
    }

    /// Full residual vector at x, in the fixed layout.
    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_residuals];
        let n_data = self.data_rows.len();
        {
            let (data_part, rest) = r.split_at_mut(n_data);
            data_part
                .par_iter_mut()
                .enumerate()
                .for_each(|(i, out)| {
                    let (b, p) = self.data_rows[i];
                    let block = self.w_block[p as usize].unwrap();
                    let w = self.w_of(x, block);
                    let corners = self.corners_of(p);
                    let mut pred = 0.0;
                    for k in 0..4 {
                        let sv = self.s_var[b as usize][corners[k]]
                            .map(|v| x[v as usize])
                            .unwrap_or(0.0);
                        pred += w[k] * sv;
                    }
                    *out = pred - self.obs[b as usize][p as usize];
                });
            let (w_part, s_part) = rest.split_at_mut(4 * self.n_w_blocks);
            w_part.par_chunks_mut(4).enumerate().for_each(|(bi, chunk)| {
                let w = self.w_of(x, bi as u32);
                for k in 0..4 {
                    chunk[k] = self.sqrt_mu * w[k].min(0.0);
                }
            });
            s_part.par_chunks_mut(2).enumerate().for_each(|(si, chunk)| {
                let (b, _) = self.s_list[si];
                let (lo, hi) = self.bounds[b as usize];
                let s = x[3 * self.n_w_blocks + si];
                chunk[0] = self.sqrt_mu * (s - lo).min(0.0);
                chunk[1] = self.sqrt_mu * (s - hi).max(0.0);
            });
        }
        r
    }

    /// Sparse Jacobian of the residual vector at x (same row layout).
    pub fn jacobian(&self, x: &[f64]) -> Csr {
        let n_data = self.data_rows.len();
        let mut indptr = Vec::with_capacity(self.n_residuals + 1);
        indptr.push(0usize);
        let mut nnz = 0usize;
        for _ in 0..n_data {
            nnz += 7;
            indptr.push(nnz);
        }
        for &p in &self.w_pixels {
            let block = self.w_block[p as usize].unwrap();
            let w = self.w_of(x, block);
            for k in 0..4 {
                if w[k] < 0.0 {
                    nnz += if k < 3 { 1 } else { 3 };
                }
                indptr.push(nnz);
            }
        }
        for (si, &(b, _)) in self.s_list.iter().enumerate() {
            let (lo, hi) = self.bounds[b as usize];
            let s = x[3 * self.n_w_blocks + si];
            if s < lo {
                nnz += 1;
            }
            indptr.push(nnz);
            if s > hi {
                nnz += 1;
            }
            indptr.push(nnz);
        }

        let mut indices = vec![0u32; nnz];
        let mut data = vec![0.0; nnz];
        let mut k = 0usize;
        for i in 0..n_data {
            let (b, p) = self.data_rows[i];
            let block = self.w_block[p as usize].unwrap();
            let base = 3 * block as usize;
            let w = self.w_of(x, block);
            let corners = self.corners_of(p);
            let mut sv = [0.0; 4];
            let mut svar = [u32::MAX; 4];
            for c in 0..4 {
                if let Some(v) = self.s_var[b as usize][corners[c]] {
                    sv[c] = x[v as usize];
                    svar[c] = v;
                }
            }
            // d/dw_j = S_j - S_3 for the three free weight parameters
            for j in 0..3 {
                indices[k] = (base + j) as u32;
                data[k] = sv[j] - sv[3];
                k += 1;
            }
            for c in 0..4 {
                indices[k] = svar[c];
                data[k] = w[c];
                k += 1;
            }
        }
        for (bi, _) in self.w_pixels.iter().enumerate() {
            let base = 3 * bi;
            let w = self.w_of(x, bi as u32);
            for j in 0..3 {
                if w[j] < 0.0 {
                    indices[k] = (base + j) as u32;
                    data[k] = self.sqrt_mu;
                    k += 1;
                }
            }
            if w[3] < 0.0 {
                for j in 0..3 {
                    indices[k] = (base + j) as u32;
                    data[k] = -self.sqrt_mu;
                    k += 1;
                }
            }
        }
        for (si, &(b, _)) in self.s_list.iter().enumerate() {
            let (lo, hi) = self.bounds[b as usize];
            let var = (3 * self.n_w_blocks + si) as u32;
            let s = x[var as usize];
            if s < lo {
                indices[k] = var;
                data[k] = self.sqrt_mu;
                k += 1;
            }
            if s > hi {
                indices[k] = var;
                data[k] = self.sqrt_mu;
                k += 1;
            }
        }
        debug_assert_eq!(k, nnz);
        Csr {
            n_rows: self.n_residuals,
            n_cols: self.n_vars,
            indptr,
            indices,
            data,
        }
    }

    /// Sum of squared data misfits at x, excluding the penalty rows.
    pub fn data_objective(&self, x: &[f64]) -> f64 {
        let r = self.residuals(x);
        det_sumsq(&r[..self.data_rows.len()])
    }

    /// Projects a parameter vector onto the feasible region: weight
    /// quadruples onto the simplex, shared values into their band ranges.
    /// Used to re-start the solver when the bound penalty is escalated.
    pub fn project_feasible(&self, x: &mut [f64]) {
        for bi in 0..self.n_w_blocks {
            let o = 3 * bi;
            let mut w = [x[o], x[o + 1], x[o + 2], 1.0 - x[o] - x[o + 1] - x[o + 2]];
            let mut sum = 0.0;
            for wk in w.iter_mut() {
                *wk = wk.max(0.0);
                sum += *wk;
            }
            if sum <= 0.0 {
                w = [0.25; 4];
                sum = 1.0;
            }
            x[o] = w[0] / sum;
            x[o + 1] = w[1] / sum;
            x[o + 2] = w[2] / sum;
        }
        for (si, &(b, _)) in self.s_list.iter().enumerate() {
            let (lo, hi) = self.bounds[b as usize];
            let xi = &mut x[3 * self.n_w_blocks + si];
            *xi = xi.clamp(lo, hi);
        }
    }

    fn check_initial(&self, x: &[f64]) -> Result<()> {
        for bi in 0..self.n_w_blocks {
            let w = self.w_of(x, bi as u32);
            for k in 0..4 {
                if w[k] < -1e-9 {
                    return Err(Error::Precondition(format!(
                        "initial weights off the simplex at pixel block {}: w[{}] = {}",
                        bi, k, w[k]
                    )));
                }
            }
        }
        for (si, &(b, _)) in self.s_list.iter().enumerate() {
            let (lo, hi) = self.bounds[b as usize];
            let tol = 1e-6 * (hi - lo).max(1.0);
            let s = x[3 * self.n_w_blocks + si];
            if s < lo - tol || s > hi + tol {
                return Err(Error::Precondition(format!(
                    "initial shared value out of bounds: {} outside [{}, {}]",
                    s, lo, hi
                )));
            }
        }
        Ok(())
    }

    fn locate_bad_residual(&self, r: &[f64]) -> String {
        for (i, v) in r.iter().enumerate() {
            if !v.is_finite() {
                if i < self.data_rows.len() {
                    let (b, p) = self.data_rows[i];
                    return format!(
                        "non-finite data residual at band {}, pixel ({}, {})",
                        b,
                        p as usize % self.width,
                        p as usize / self.width
                    );
                }
                return format!("non-finite penalty residual at row {}", i);
            }
        }
        "non-finite residual".into()
    }

    /// Runs the damped Gauss-Newton loop from `x0`.
    pub fn solve(&self, x0: Vec<f64>, opts: &SolverOptions) -> Result<JointSolution> {
        opts.validate()?;
        self.check_initial(&x0)?;
        let mut x = x0;
        let mut r = self.residuals(&x);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(self.locate_bad_residual(&r)));
        }
        let mut cost = det_sumsq(&r);
        let initial_objective = cost;
        let mut history = vec![cost];
        let mut damping = 1e-4;
        let mut cg_total = 0usize;
        let mut outer = 0usize;

        while outer < opts.max_outer_iterations {
            outer += 1;
            let jac = self.jacobian(&x);
            let jt = jac.transpose();
            let mut g = vec![0.0; self.n_vars];
            jt.matvec(&r, &mut g);
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if gmax <= opts.gradient_tolerance * (1.0 + cost) {
                break;
            }
            let diag = jac.column_sumsq();
            let mut accepted = false;
            let mut rel_dec = 0.0;
            for _ in 0..12 {
                let precond = BlockJacobi::build(self, &jac, &diag, damping);
                let (delta, iters) =
                    pcg(&jac, &jt, &diag, damping, &g, &precond, opts.cg_max_iterations);
                cg_total += iters;
                let x_new: Vec<f64> =
                    x.iter().zip(&delta).map(|(a, d)| a + d).collect();
                let r_new = self.residuals(&x_new);
                if r_new.iter().any(|v| !v.is_finite()) {
                    damping *= 10.0;
                    continue;
                }
                let cost_new = det_sumsq(&r_new);
                if cost_new < cost {
                    rel_dec = (cost - cost_new) / cost.max(1e-300);
                    x = x_new;
                    r = r_new;
                    cost = cost_new;
                    history.push(cost);
                    damping = (damping * 0.3).max(1e-12);
                    accepted = true;
                    break;
                }
                damping *= 10.0;
            }
            if !accepted || rel_dec < 1e-13 {
                break;
            }
        }

        Ok(JointSolution {
            x,
            objective: cost,
            initial_objective,
            outer_iterations: outer,
            cg_iterations: cg_total,
            objective_history: history,
        })
    }

    /// Per-pixel weight quadruples from a solution vector; pixels without a
    /// weight block keep the uniform initialization.
    pub fn weights(&self, x: &[f64]) -> Vec<[f64; 4]> {
        (0..self.width * self.height)
            .map(|p| match self.w_block[p] {
                Some(b) => self.w_of(x, b),
                None => [0.25; 4],
            })
            .collect()
    }

    /// Per-band shared-value grids from a solution vector; lattice points
    /// without a variable keep their initial value.
    pub fn shared(&self, x: &[f64], s_init: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = s_init.to_vec();
        for (i, &(b, l)) in self.s_list.iter().enumerate() {
            out[b as usize][l as usize] = x[3 * self.n_w_blocks + i];
        }
        out
    }
}

/// Result of the joint solve.
#[derive(Debug, Clone)]
pub struct JointSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub outer_iterations: usize,
    pub cg_iterations: usize,
    pub objective_history: Vec<f64>,
}

/// Block Jacobi preconditioner for J'J + damping * diag(J'J): one 3x3 block
/// per pixel weight triple, scalar blocks for shared values.
struct BlockJacobi {
    n_w_blocks: usize,
    /// inverted 3x3 blocks, row-major
    w_inv: Vec<[f64; 9]>,
    s_inv: Vec<f64>,
}

impl BlockJacobi {
    fn build(sys: &JointSystem, jac: &Csr, diag: &[f64], damping: f64) -> BlockJacobi {
        let nb = sys.n_w_blocks;
        let mut w_acc = vec![[0.0f64; 9]; nb];
        let mut s_acc = vec![0.0f64; sys.s_list.len()];
        let w_limit = (3 * nb) as u32;
        for row in 0..jac.n_rows {
            let lo = jac.indptr[row];
            let hi = jac.indptr[row + 1];
            // gather the (at most 3) weight entries of this row; they always
            // belong to a single pixel block by construction
            let mut wcols = [0usize; 3];
            let mut wvals = [0.0f64; 3];
            let mut nw = 0usize;
            for k in lo..hi {
                let c = jac.indices[k];
                if c < w_limit {
                    wcols[nw] = c as usize;
                    wvals[nw] = jac.data[k];
                    nw += 1;
                } else {
                    s_acc[c as usize - w_limit as usize] += jac.data[k] * jac.data[k];
                }
            }
            if nw > 0 {
                let block = wcols[0] / 3;
                let acc = &mut w_acc[block];
                for a in 0..nw {
                    let ia = wcols[a] % 3;
                    for b in 0..nw {
                        let ib = wcols[b] % 3;
                        acc[ia * 3 + ib] += wvals[a] * wvals[b];
                    }
                }
            }
        }
        let mut w_inv = vec![[0.0f64; 9]; nb];
        for bi in 0..nb {
            let mut m = w_acc[bi];
            for j in 0..3 {
                m[j * 3 + j] += damping * diag[3 * bi + j] + 1e-12;
            }
            w_inv[bi] = invert3(&m);
        }
        let s_inv = s_acc
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let d = v + damping * diag[3 * nb + i] + 1e-12;
                1.0 / d
            })
            .collect();
        BlockJacobi {
            n_w_blocks: nb,
            w_inv,
            s_inv,
        }
    }

    fn apply(&self, r: &[f64], out: &mut [f64]) {
        let nb = self.n_w_blocks;
        let (w_out, s_out) = out.split_at_mut(3 * nb);
        let (w_r, s_r) = r.split_at(3 * nb);
        w_out
            .par_chunks_mut(3)
            .zip(w_r.par_chunks(3))
            .zip(self.w_inv.par_iter())
            .for_each(|((o, rr), inv)| {
                for i in 0..3 {
                    o[i] = inv[i * 3] * rr[0] + inv[i * 3 + 1] * rr[1] + inv[i * 3 + 2] * rr[2];
                }
            });
        s_out
            .par_iter_mut()
            .zip(s_r.par_iter())
            .zip(self.s_inv.par_iter())
            .for_each(|((o, rr), inv)| *o = rr * inv);
    }
}

fn invert3(m: &[f64; 9]) -> [f64; 9] {
    let det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
        + m[2] * (m[3] * m[7] - m[4] * m[6]);
    let scale = m[0].abs().max(m[4].abs()).max(m[8].abs()).max(1e-30);
    if det.abs() < 1e-14 * scale * scale * scale {
        // fall back to the diagonal
        let mut out = [0.0; 9];
        for j in 0..3 {
            out[j * 3 + j] = 1.0 / m[j * 3 + j].max(1e-12);
        }
        return out;
    }
    let inv_det = 1.0 / det;
    [
        (m[4] * m[8] - m[5] * m[7]) * inv_det,
        (m[2] * m[7] - m[1] * m[8]) * inv_det,
        (m[1] * m[5] - m[2] * m[4]) * inv_det,
        (m[5] * m[6] - m[3] * m[8]) * inv_det,
        (m[0] * m[8] - m[2] * m[6]) * inv_det,
        (m[2] * m[3] - m[0] * m[5]) * inv_det,
        (m[3] * m[7] - m[4] * m[6]) * inv_det,
        (m[1] * m[6] - m[0] * m[7]) * inv_det,
        (m[0] * m[4] - m[1] * m[3]) * inv_det,
    ]
}

/// Preconditioned CG on the damped normal equations, solving
/// (J'J + damping * D) delta = -g.
fn pcg(
    jac: &Csr,
    jt: &Csr,
    diag: &[f64],
    damping: f64,
    g: &[f64],
    precond: &BlockJacobi,
    max_iters: usize,
) -> (Vec<f64>, usize) {
    let n = g.len();
    let b: Vec<f64> = g.iter().map(|v| -v).collect();
    let bnorm = det_sumsq(&b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return (x, 0);
    }
    let mut r = b.clone();
    let mut z = vec![0.0; n];
    precond.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = det_dot(&r, &z);
    let mut tmp_rows = vec![0.0; jac.n_rows];
    let mut ap = vec![0.0; n];
    let mut iters = 0usize;
    let tol = 1e-6 * bnorm;
    for _ in 0..max_iters {
        iters += 1;
        jac.matvec(&p, &mut tmp_rows);
        jt.matvec(&tmp_rows, &mut ap);
        ap.par_iter_mut()
            .zip(p.par_iter())
            .zip(diag.par_iter())
            .for_each(|((a, pv), d)| *a += damping * d * pv);
        let pap = det_dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            break;
        }
        let alpha = rz / pap;
        x.par_iter_mut()
            .zip(p.par_iter())
            .for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut()
            .zip(ap.par_iter())
            .for_each(|(ri, ai)| *ri -= alpha * ai);
        if det_sumsq(&r).sqrt() <= tol {
            break;
        }
        precond.apply(&r, &mut z);
        let rz_new = det_dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut()
            .zip(z.par_iter())
            .for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    (x, iters)
}
