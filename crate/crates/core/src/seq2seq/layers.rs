//! Batched LSTM / GRU recurrences with explicit backward passes.
//!
//! Input projections (`x_t W_x + b`) are computed by the caller, since the
//! encoder uses a dense matmul over feature rows and the decoders use a row
//! lookup for one-hot tokens. Gate blocks are laid out side by side along
//! the last axis: LSTM `[i, f, g, o]`, GRU `[r, z, n]`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Axis, NdFloat};

#[inline]
pub(crate) fn sigmoid<F: NdFloat>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// Row-wise softmax in place.
pub(crate) fn softmax_rows<F: NdFloat>(m: &mut Array2<F>) {
    for mut row in m.rows_mut() {
        let max = row.fold(F::neg_infinity(), |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LstmTrace<F> {
    /// `h_0 ..= h_T`, each `(B, H)`.
    pub hs: Vec<Array2<F>>,
    /// `c_0 ..= c_T`.
    pub cs: Vec<Array2<F>>,
    /// Activated gates per step, `(B, 4H)`.
    gates: Vec<Array2<F>>,
    tanh_c: Vec<Array2<F>>,
}

impl<F: NdFloat> LstmTrace<F> {
    pub fn last_h(&self) -> &Array2<F> {
        self.hs.last().expect("trace holds h_0")
    }

    pub fn last_c(&self) -> &Array2<F> {
        self.cs.last().expect("trace holds c_0")
    }

    /// `h_1 ..= h_T`.
    pub fn outputs(&self) -> &[Array2<F>] {
        &self.hs[1..]
    }
}

pub(crate) fn lstm_forward<F: NdFloat>(
    xproj: &[Array2<F>],
    w_h: &Array2<F>,
    h0: Array2<F>,
    c0: Array2<F>,
) -> LstmTrace<F> {
    let hidden = w_h.nrows();
    let batch = h0.nrows();
    let steps = xproj.len();
    let mut trace = LstmTrace {
        hs: Vec::with_capacity(steps + 1),
        cs: Vec::with_capacity(steps + 1),
        gates: Vec::with_capacity(steps),
        tanh_c: Vec::with_capacity(steps),
    };
    trace.hs.push(h0);
    trace.cs.push(c0);
    for xp in xproj {
        let mut z = xp.clone();
        general_mat_mul(F::one(), trace.last_h(), w_h, F::one(), &mut z);
        let c_prev = trace.last_c();
        let mut c = Array2::zeros((batch, hidden));
        let mut tc = Array2::zeros((batch, hidden));
        let mut h = Array2::zeros((batch, hidden));
        for b in 0..batch {
            let zr = z.row_mut(b).into_slice().expect("standard layout");
            for v in &mut zr[..2 * hidden] {
                *v = sigmoid(*v);
            }
            for v in &mut zr[2 * hidden..3 * hidden] {
                *v = v.tanh();
            }
            for v in &mut zr[3 * hidden..] {
                *v = sigmoid(*v);
            }
            let (zi, rest) = zr.split_at(hidden);
            let (zf, rest) = rest.split_at(hidden);
            let (zg, zo) = rest.split_at(hidden);
            let cp = c_prev.row(b);
            let cp = cp.as_slice().expect("standard layout");
            let cr = c.row_mut(b).into_slice().expect("standard layout");
            let tr = tc.row_mut(b).into_slice().expect("standard layout");
            let hr = h.row_mut(b).into_slice().expect("standard layout");
            for j in 0..hidden {
                let cv = zf[j] * cp[j] + zi[j] * zg[j];
                let t = cv.tanh();
                cr[j] = cv;
                tr[j] = t;
                hr[j] = zo[j] * t;
            }
        }
        trace.gates.push(z);
        trace.tanh_c.push(tc);
        trace.cs.push(c);
        trace.hs.push(h);
    }
    trace
}

#[derive(Debug)]
pub(crate) struct LstmBackward<F> {
    /// Gradient w.r.t. each step's input projection, `(B, 4H)`.
    pub dxproj: Vec<Array2<F>>,
    pub dw_h: Array2<F>,
    pub dh0: Array2<F>,
    pub dc0: Array2<F>,
}

/// `dh_out[t]` is the loss gradient w.r.t. `h_{t+1}` coming from layers
/// above (absent for an encoder whose outputs are unused); `dh_last` and
/// `dc_last` are extra gradients on the final state.
pub(crate) fn lstm_backward<F: NdFloat>(
    trace: &LstmTrace<F>,
    w_h: &Array2<F>,
    dh_out: Option<&[Array2<F>]>,
    dh_last: Array2<F>,
    dc_last: Array2<F>,
) -> LstmBackward<F> {
    let hidden = w_h.nrows();
    let steps = trace.gates.len();
    let batch = dh_last.nrows();
    let mut dxproj = vec![Array2::zeros((0, 0)); steps];
    let mut dh_next = dh_last;
    let mut dc_next = dc_last;
    for t in (0..steps).rev() {
        let gates = &trace.gates[t];
        let tc = &trace.tanh_c[t];
        let c_prev = &trace.cs[t];
        let mut dh = dh_next;
        if let Some(out) = dh_out {
            dh += &out[t];
        }
        let mut dz = Array2::zeros((batch, 4 * hidden));
        let mut dc_prev = Array2::zeros((batch, hidden));
        for b in 0..batch {
            let gr = gates.row(b);
            let gr = gr.as_slice().expect("standard layout");
            let (gi, rest) = gr.split_at(hidden);
            let (gf, rest) = rest.split_at(hidden);
            let (gg, go) = rest.split_at(hidden);
            let tcr = tc.row(b);
            let tcr = tcr.as_slice().expect("standard layout");
            let cpr = c_prev.row(b);
            let cpr = cpr.as_slice().expect("standard layout");
            let dhr = dh.row(b);
            let dhr = dhr.as_slice().expect("standard layout");
            let dcn = dc_next.row(b);
            let dcn = dcn.as_slice().expect("standard layout");
            let dzr = dz.row_mut(b).into_slice().expect("standard layout");
            let (dzi, rest) = dzr.split_at_mut(hidden);
            let (dzf, rest) = rest.split_at_mut(hidden);
            let (dzg, dzo) = rest.split_at_mut(hidden);
            let dcp = dc_prev.row_mut(b).into_slice().expect("standard layout");
            for j in 0..hidden {
                let (i, f, g, o) = (gi[j], gf[j], gg[j], go[j]);
                let tcv = tcr[j];
                let dhv = dhr[j];
                let dc = dcn[j] + dhv * o * (F::one() - tcv * tcv);
                dzi[j] = dc * g * i * (F::one() - i);
                dzf[j] = dc * cpr[j] * f * (F::one() - f);
                dzg[j] = dc * i * (F::one() - g * g);
                dzo[j] = dhv * tcv * o * (F::one() - o);
                dcp[j] = dc * f;
            }
        }
        dh_next = dz.dot(&w_h.t());
        dc_next = dc_prev;
        dxproj[t] = dz;
    }
    // one product over all steps instead of a rank-B update per step
    let hs: Vec<_> = trace.hs[..steps].iter().map(|h| h.view()).collect();
    let dzs: Vec<_> = dxproj.iter().map(|d| d.view()).collect();
    let dw_h = if steps == 0 {
        Array2::zeros(w_h.raw_dim())
    } else {
        let hs = ndarray::concatenate(Axis(0), &hs).expect("uniform batch");
        let dzs = ndarray::concatenate(Axis(0), &dzs).expect("uniform batch");
        hs.t().dot(&dzs)
    };
    LstmBackward {
        dxproj,
        dw_h,
        dh0: dh_next,
        dc0: dc_next,
    }
}

#[derive(Debug, Clone)]
pub(crate) struct GruTrace<F> {
    /// `h_0 ..= h_T`.
    pub hs: Vec<Array2<F>>,
    r: Vec<Array2<F>>,
    z: Vec<Array2<F>>,
    n: Vec<Array2<F>>,
    /// Recurrent part of the candidate pre-activation, `h W_hn + b_hn`.
    hn: Vec<Array2<F>>,
}

impl<F: NdFloat> GruTrace<F> {
    pub fn outputs(&self) -> &[Array2<F>] {
        &self.hs[1..]
    }
}

/// Reset gate applied after the recurrent matmul:
/// `n = tanh(x W_xn + b_xn + r * (h W_hn + b_hn))`, `h' = z h + (1 - z) n`.
pub(crate) fn gru_forward<F: NdFloat>(
    xproj: &[Array2<F>],
    w_h: &Array2<F>,
    b_h: &Array1<F>,
    h0: Array2<F>,
) -> GruTrace<F> {
    let hidden = w_h.nrows();
    let batch = h0.nrows();
    let steps = xproj.len();
    let mut trace = GruTrace {
        hs: Vec::with_capacity(steps + 1),
        r: Vec::with_capacity(steps),
        z: Vec::with_capacity(steps),
        n: Vec::with_capacity(steps),
        hn: Vec::with_capacity(steps),
    };
    trace.hs.push(h0);
    for xp in xproj {
        let h_prev = trace.hs.last().unwrap();
        let hp = h_prev.dot(w_h) + b_h;
        let mut r = Array2::zeros((batch, hidden));
        let mut z = Array2::zeros((batch, hidden));
        let mut n = Array2::zeros((batch, hidden));
        let mut hn = Array2::zeros((batch, hidden));
        let mut h = Array2::zeros((batch, hidden));
        for b in 0..batch {
            for j in 0..hidden {
                let rv = sigmoid(xp[[b, j]] + hp[[b, j]]);
                let zv = sigmoid(xp[[b, hidden + j]] + hp[[b, hidden + j]]);
                let hnv = hp[[b, 2 * hidden + j]];
                let nv = (xp[[b, 2 * hidden + j]] + rv * hnv).tanh();
                r[[b, j]] = rv;
                z[[b, j]] = zv;
                hn[[b, j]] = hnv;
                n[[b, j]] = nv;
                h[[b, j]] = zv * h_prev[[b, j]] + (F::one() - zv) * nv;
            }
        }
        trace.r.push(r);
        trace.z.push(z);
        trace.n.push(n);
        trace.hn.push(hn);
        trace.hs.push(h);
    }
    trace
}

#[derive(Debug)]
pub(crate) struct GruBackward<F> {
    pub dxproj: Vec<Array2<F>>,
    pub dw_h: Array2<F>,
    pub db_h: Array1<F>,
    pub dh0: Array2<F>,
}

pub(crate) fn gru_backward<F: NdFloat>(
    trace: &GruTrace<F>,
    w_h: &Array2<F>,
    dh_out: &[Array2<F>],
) -> GruBackward<F> {
    let hidden = w_h.nrows();
    let steps = trace.r.len();
    let batch = trace.hs[0].nrows();
    let mut dw_h = Array2::zeros(w_h.raw_dim());
    let mut db_h = Array1::zeros(3 * hidden);
    let mut dxproj = vec![Array2::zeros((0, 0)); steps];
    let mut dh_next = Array2::zeros((batch, hidden));
    for t in (0..steps).rev() {
        let dh = &dh_next + &dh_out[t];
        let h_prev = &trace.hs[t];
        let (r, z, n, hn) = (&trace.r[t], &trace.z[t], &trace.n[t], &trace.hn[t]);
        let mut dx = Array2::zeros((batch, 3 * hidden));
        let mut dhp = Array2::zeros((batch, 3 * hidden));
        let mut dh_prev = Array2::zeros((batch, hidden));
        for b in 0..batch {
            for j in 0..hidden {
                let (rv, zv, nv, hnv) = (r[[b, j]], z[[b, j]], n[[b, j]], hn[[b, j]]);
                let dhv = dh[[b, j]];
                let dan = dhv * (F::one() - zv) * (F::one() - nv * nv);
                let daz = dhv * (h_prev[[b, j]] - nv) * zv * (F::one() - zv);
                let dar = dan * hnv * rv * (F::one() - rv);
                dx[[b, j]] = dar;
                dx[[b, hidden + j]] = daz;
                dx[[b, 2 * hidden + j]] = dan;
                dhp[[b, j]] = dar;
                dhp[[b, hidden + j]] = daz;
                dhp[[b, 2 * hidden + j]] = dan * rv;
                dh_prev[[b, j]] = dhv * zv;
            }
        }
        general_mat_mul(F::one(), &h_prev.t(), &dhp, F::one(), &mut dw_h);
        db_h += &dhp.sum_axis(Axis(0));
        dh_prev += &dhp.dot(&w_h.t());
        dh_next = dh_prev;
        dxproj[t] = dx;
    }
    GruBackward {
        dxproj,
        dw_h,
        db_h,
        dh0: dh_next,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn softmax_is_normalized_and_stable() {
        let mut m = array![[1000.0f64, 1000.0, 999.0], [-5.0, 0.0, 5.0]];
        softmax_rows(&mut m);
        for row in m.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|v| v.is_finite()));
        }
        assert!((m[[0, 0]] - m[[0, 1]]).abs() < 1e-15);
    }

    #[test]
    fn lstm_step_matches_hand_computation() {
        // H = 1, B = 1, w_h = 0: gates come straight from the projection
        let xp = array![[0.0f64, 0.0, 1.0, 0.0]];
        let trace = lstm_forward(&[xp], &Array2::zeros((1, 4)), Array2::zeros((1, 1)), array![[2.0]]);
        let (i, f, g, o) = (0.5, 0.5, 1f64.tanh(), 0.5);
        let c = f * 2.0 + i * g;
        assert!((trace.last_c()[[0, 0]] - c).abs() < 1e-12);
        assert!((trace.last_h()[[0, 0]] - o * c.tanh()).abs() < 1e-12);
    }

    #[test]
    fn gru_with_closed_update_gate_keeps_state() {
        // huge z pre-activation: h' ≈ h
        let xp = array![[0.0f64, 50.0, 3.0]];
        let trace = gru_forward(&[xp], &Array2::zeros((1, 3)), &Array1::zeros(3), array![[0.25]]);
        assert!((trace.outputs()[0][[0, 0]] - 0.25).abs() < 1e-12);
    }
}
