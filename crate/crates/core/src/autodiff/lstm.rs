//! Fused single-direction LSTM layer with hand-written backpropagation
//! through time. Gate layout along the 4H axis is `[input, forget, cell, output]`.

use super::ops::sigmoid;
use super::{Graph, Op, Var};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{matmul_into, matmul_nt_into, Tensor};

/// Parameter nodes of one LSTM direction: `w` is D×4H, `u` is H×4H, `b` is 4H.
#[derive(Clone, Copy, Debug)]
pub struct LstmWeights {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

pub(crate) struct LstmCache {
    hidden: usize,
    reverse: bool,
    /// Post-activation gates per step, T×4H in time order.
    gates: Vec<f64>,
    /// Cell states per step, T×H in time order.
    cells: Vec<f64>,
    /// Hidden outputs per step, T×H in time order.
    hiddens: Vec<f64>,
}

impl Graph<'_> {
    /// Runs an LSTM over the rows of `x` (T×D), forward in time or, when
    /// `reverse` is set, from the last row to the first. Returns T×H with row
    /// `t` holding the hidden state produced at input row `t`.
    pub fn lstm(&mut self, x: Var, weights: LstmWeights, reverse: bool) -> Result<Var> {
        let (value, cache) = lstm_forward(
            self.value(x),
            self.value(weights.w),
            self.value(weights.u),
            self.value(weights.b),
            reverse,
        )?;
        Ok(self.push(
            value,
            Op::Lstm {
                inputs: [x, weights.w, weights.u, weights.b],
                cache: Box::new(cache),
            },
        ))
    }
}

pub(crate) fn lstm_forward(
    x: &Tensor,
    w: &Tensor,
    u: &Tensor,
    b: &Tensor,
    reverse: bool,
) -> Result<(Tensor, LstmCache)> {
    let (t_len, d) = x.dims2()?;
    let (dw, h4) = w.dims2()?;
    let (hu, h4u) = u.dims2()?;
    if h4 % 4 != 0 || dw != d || hu * 4 != h4 || h4u != h4 || b.len() != h4 {
        return Err(shape_err(
            "lstm",
            format!(
                "x {:?}, w {:?}, u {:?}, b {:?}",
                x.shape(),
                w.shape(),
                u.shape(),
                b.shape()
            ),
        ));
    }
    if t_len == 0 {
        return Err(Error::InvalidArgument("lstm: empty sequence".into()));
    }
    let h = hu;
    // Input projections for every step at once.
    let mut pre = vec![0.0; t_len * h4];
    matmul_into(x.data(), w.data(), &mut pre, t_len, d, h4);
    let mut gates = vec![0.0; t_len * h4];
    let mut cells = vec![0.0; t_len * h];
    let mut hiddens = vec![0.0; t_len * h];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for step in 0..t_len {
        let t = if reverse { t_len - 1 - step } else { step };
        let z = &mut pre[t * h4..(t + 1) * h4];
        for (zi, bi) in z.iter_mut().zip(b.data()) {
            *zi += bi;
        }
        matmul_into(&h_prev, u.data(), z, 1, h, h4);
        let gt = &mut gates[t * h4..(t + 1) * h4];
        for j in 0..h {
            let i_g = sigmoid(z[j]);
            let f_g = sigmoid(z[h + j]);
            let g_g = z[2 * h + j].tanh();
            let o_g = sigmoid(z[3 * h + j]);
            gt[j] = i_g;
            gt[h + j] = f_g;
            gt[2 * h + j] = g_g;
            gt[3 * h + j] = o_g;
            let c = f_g * c_prev[j] + i_g * g_g;
            cells[t * h + j] = c;
            hiddens[t * h + j] = o_g * c.tanh();
        }
        h_prev.copy_from_slice(&hiddens[t * h..(t + 1) * h]);
        c_prev.copy_from_slice(&cells[t * h..(t + 1) * h]);
    }
    let out = Tensor::new(vec![t_len, h], hiddens.clone())?;
    Ok((
        out,
        LstmCache {
            hidden: h,
            reverse,
            gates,
            cells,
            hiddens,
        },
    ))
}

pub(crate) fn lstm_backward(
    cache: &LstmCache,
    g_out: &Tensor,
    x: &Tensor,
    w: &Tensor,
    u: &Tensor,
) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
    let h = cache.hidden;
    let h4 = 4 * h;
    let (t_len, d) = x.dims2()?;
    let mut dz_all = vec![0.0; t_len * h4];
    let mut gu = vec![0.0; h * h4];
    let mut gb = vec![0.0; h4];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let zeros = vec![0.0; h];
    for step in (0..t_len).rev() {
        let t = if cache.reverse { t_len - 1 - step } else { step };
        let prev = if step == 0 {
            None
        } else if cache.reverse {
            Some(t + 1)
        } else {
            Some(t - 1)
        };
        let (h_prev, c_prev) = match prev {
            Some(p) => (&cache.hiddens[p * h..(p + 1) * h], &cache.cells[p * h..(p + 1) * h]),
            None => (&zeros[..], &zeros[..]),
        };
        let gt = &cache.gates[t * h4..(t + 1) * h4];
        let dz = &mut dz_all[t * h4..(t + 1) * h4];
        for j in 0..h {
            let (i_g, f_g, g_g, o_g) = (gt[j], gt[h + j], gt[2 * h + j], gt[3 * h + j]);
            let c = cache.cells[t * h + j];
            let tc = c.tanh();
            let dh = g_out.data()[t * h + j] + dh_next[j];
            let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
            dz[j] = dc * g_g * i_g * (1.0 - i_g);
            dz[h + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
            dz[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
            dz[3 * h + j] = dh * tc * o_g * (1.0 - o_g);
            dc_next[j] = dc * f_g;
        }
        for (a, v) in gb.iter_mut().zip(dz.iter()) {
            *a += v;
        }
        // gU += h_prevᵀ dz
        for (r, &hv) in h_prev.iter().enumerate() {
            if hv == 0.0 {
                continue;
            }
            for (a, v) in gu[r * h4..(r + 1) * h4].iter_mut().zip(dz.iter()) {
                *a += hv * v;
            }
        }
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        matmul_nt_into(dz, u.data(), &mut dh_next, 1, h4, h);
    }
    let mut gx = vec![0.0; t_len * d];
    matmul_nt_into(&dz_all, w.data(), &mut gx, t_len, h4, d);
    let mut gw = vec![0.0; d * h4];
    crate::tensor::matmul_tn_into(x.data(), &dz_all, &mut gw, t_len, d, h4);
    Ok((
        Tensor::new(vec![t_len, d], gx)?,
        Tensor::new(vec![d, h4], gw)?,
        Tensor::new(vec![h, h4], gu)?,
        Tensor::new(vec![h4], gb)?,
    ))
}
