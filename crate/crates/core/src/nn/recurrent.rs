//! Recurrent cells: GRU and a linear time-variant (selective) state-space
//! cell.

use crate::error::{dim_mismatch, invalid, Result};

/// GRU weights with gates stacked in `(z, r, n)` order.
///
/// ```text
/// z  = sigmoid(W_z x + U_z h + b_z)
/// r  = sigmoid(W_r x + U_r h + b_r)
/// n  = tanh(W_n x + r * (U_n h) + b_n)
/// h' = (1 - z) * n + z * h
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub input_size: usize,
    pub hidden_size: usize,
    /// `[3H, I]`
    pub w_x: Vec<f32>,
    /// `[3H, H]`
    pub w_h: Vec<f32>,
    /// `[3H]`
    pub bias: Vec<f32>,
}

impl GruParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        GruParams {
            input_size,
            hidden_size,
            w_x: vec![0.0; 3 * hidden_size * input_size],
            w_h: vec![0.0; 3 * hidden_size * hidden_size],
            bias: vec![0.0; 3 * hidden_size],
        }
    }

    pub(super) fn validate(&self) -> Result<()> {
        let (i, h) = (self.input_size, self.hidden_size);
        if h == 0 {
            return Err(invalid("GRU hidden size must be positive"));
        }
        for (name, got, want) in [
            ("gru w_x", self.w_x.len(), 3 * h * i),
            ("gru w_h", self.w_h.len(), 3 * h * h),
            ("gru bias", self.bias.len(), 3 * h),
        ] {
            if got != want {
                return Err(dim_mismatch(name, &[want], &[got]));
            }
        }
        Ok(())
    }
}

fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

fn matvec_row(w: &[f32], row: usize, cols: usize, v: &[f32]) -> f32 {
    w[row * cols..(row + 1) * cols]
        .iter()
        .zip(v)
        .fold(0.0, |acc, (a, b)| acc + a * b)
}

pub fn gru_cell(x: &[f32], h: &[f32], p: &GruParams) -> Result<Vec<f32>> {
    if x.len() != p.input_size || h.len() != p.hidden_size {
        return Err(dim_mismatch(
            "gru_cell",
            &[p.input_size, p.hidden_size],
            &[x.len(), h.len()],
        ));
    }
    let (ni, nh) = (p.input_size, p.hidden_size);
    Ok((0..nh)
        .map(|j| {
            let gate = |g: usize| g * nh + j;
            let z = sigmoid(
                matvec_row(&p.w_x, gate(0), ni, x) + matvec_row(&p.w_h, gate(0), nh, h) + p.bias[gate(0)],
            );
            let r = sigmoid(
                matvec_row(&p.w_x, gate(1), ni, x) + matvec_row(&p.w_h, gate(1), nh, h) + p.bias[gate(1)],
            );
            let n = (matvec_row(&p.w_x, gate(2), ni, x)
                + r * matvec_row(&p.w_h, gate(2), nh, h)
                + p.bias[gate(2)])
                .tanh();
            (1.0 - z) * n + z * h[j]
        })
        .collect())
}

/// Selective state-space cell over a `D`-channel input with an `N`-wide
/// state per channel.
///
/// The step size, input and output projections are computed from the
/// current input:
///
/// ```text
/// delta = softplus(W_delta u + b_delta)        [D]
/// B = W_B u,  C = W_C u                        [N]
/// x'[d, n] = exp(delta[d] * A[d, n]) * x[d, n] + delta[d] * B[n] * u[d]
/// y[d] = sum_n C[n] * x'[d, n] + D_skip[d] * u[d]
/// ```
///
/// The output reads the updated state `x'`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsmParams {
    pub d_model: usize,
    pub d_state: usize,
    /// `[D, N]`, normally negative.
    pub a: Vec<f32>,
    /// `[D, D]`
    pub w_delta: Vec<f32>,
    /// `[D]`
    pub b_delta: Vec<f32>,
    /// `[N, D]`
    pub w_b: Vec<f32>,
    /// `[N, D]`
    pub w_c: Vec<f32>,
    /// `[D]`
    pub d_skip: Vec<f32>,
}

impl SsmParams {
    pub(super) fn validate(&self) -> Result<()> {
        let (d, n) = (self.d_model, self.d_state);
        if d == 0 || n == 0 {
            return Err(invalid("SSM dims must be positive"));
        }
        for (name, got, want) in [
            ("ssm a", self.a.len(), d * n),
            ("ssm w_delta", self.w_delta.len(), d * d),
            ("ssm b_delta", self.b_delta.len(), d),
            ("ssm w_b", self.w_b.len(), n * d),
            ("ssm w_c", self.w_c.len(), n * d),
            ("ssm d_skip", self.d_skip.len(), d),
        ] {
            if got != want {
                return Err(dim_mismatch(name, &[want], &[got]));
            }
        }
        Ok(())
    }
}

pub fn softplus(v: f32) -> f32 {
    if v > 20.0 {
        v
    } else {
        v.exp().ln_1p()
    }
}

/// One recurrence step with explicit `delta`, `B` and `C`. Returns
/// `(y, x')`; `x` is `[D, N]` row-major.
#[allow(clippy::too_many_arguments)]
pub fn ssm_update(
    a: &[f32],
    delta: &[f32],
    b: &[f32],
    c: &[f32],
    d_skip: &[f32],
    u: &[f32],
    x: &[f32],
) -> (Vec<f32>, Vec<f32>) {
    let (d, n) = (u.len(), b.len());
    let mut next = vec![0.0f32; d * n];
    let mut y = vec![0.0f32; d];
    for i in 0..d {
        let mut acc = 0.0f32;
        for k in 0..n {
            let s = (delta[i] * a[i * n + k]).exp() * x[i * n + k] + delta[i] * b[k] * u[i];
            next[i * n + k] = s;
            acc += c[k] * s;
        }
        y[i] = acc + d_skip[i] * u[i];
    }
    (y, next)
}

pub fn ltv_ssm_cell(u: &[f32], x: &[f32], p: &SsmParams) -> Result<(Vec<f32>, Vec<f32>)> {
    let (d, n) = (p.d_model, p.d_state);
    if u.len() != d || x.len() != d * n {
        return Err(dim_mismatch("ltv_ssm_cell", &[d, d * n], &[u.len(), x.len()]));
    }
    let delta: Vec<f32> = (0..d)
        .map(|i| softplus(matvec_row(&p.w_delta, i, d, u) + p.b_delta[i]))
        .collect();
    let b: Vec<f32> = (0..n).map(|k| matvec_row(&p.w_b, k, d, u)).collect();
    let c: Vec<f32> = (0..n).map(|k| matvec_row(&p.w_c, k, d, u)).collect();
    Ok(ssm_update(&p.a, &delta, &b, &c, &p.d_skip, u, x))
}
