use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayView3, ArrayViewD, ArrayViewMutD, Axis, NdFloat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{DecoderKind, ModelConfig};
use super::layers::{
    gru_backward, gru_forward, lstm_backward, lstm_forward, softmax_rows, GruTrace, LstmTrace,
};
use crate::corpus::PAD;
use crate::error::{Error, Result};

/// Probability floor applied before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<F> {
    /// `(in, 4H)`, gate blocks `[i, f, g, o]`.
    pub w_x: Array2<F>,
    /// `(H, 4H)`.
    pub w_h: Array2<F>,
    /// `(4H,)`.
    pub b: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams<F> {
    /// `(in, 3H)`, gate blocks `[r, z, n]`.
    pub w_x: Array2<F>,
    pub w_h: Array2<F>,
    pub b_x: Array1<F>,
    pub b_h: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecoderParams<F> {
    Lstm(LstmParams<F>),
    Gru(GruParams<F>),
    BiLstm {
        fwd: LstmParams<F>,
        bwd: LstmParams<F>,
    },
}

/// All trainable tensors. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub encoder: LstmParams<F>,
    pub decoder: DecoderParams<F>,
    /// `(decoder_out, V)`.
    pub head_w: Array2<F>,
    pub head_b: Array1<F>,
}

fn lstm_zeros<F: NdFloat>(input: usize, hidden: usize) -> LstmParams<F> {
    LstmParams {
        w_x: Array2::zeros((input, 4 * hidden)),
        w_h: Array2::zeros((hidden, 4 * hidden)),
        b: Array1::zeros(4 * hidden),
    }
}

impl<F: NdFloat> Params<F> {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let (d, h, v) = (cfg.feature_dim, cfg.hidden_dim, cfg.vocab_size);
        let decoder = match cfg.decoder {
            DecoderKind::Lstm => DecoderParams::Lstm(lstm_zeros(v, h)),
            DecoderKind::Gru => DecoderParams::Gru(GruParams {
                w_x: Array2::zeros((v, 3 * h)),
                w_h: Array2::zeros((h, 3 * h)),
                b_x: Array1::zeros(3 * h),
                b_h: Array1::zeros(3 * h),
            }),
            DecoderKind::BiLstm => DecoderParams::BiLstm {
                fwd: lstm_zeros(v, h),
                bwd: lstm_zeros(v, h),
            },
        };
        Self {
            encoder: lstm_zeros(d, h),
            decoder,
            head_w: Array2::zeros((cfg.decoder_out_dim(), v)),
            head_b: Array1::zeros(v),
        }
    }

    /// Weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` with fan-in
    /// the matrix's row count; biases zero except LSTM forget gates (1.0).
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut params = Self::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = cfg.hidden_dim;
        for (name, mut tensor) in params.named_mut() {
            if tensor.ndim() == 2 {
                let bound = 1.0 / (tensor.shape()[0] as f64).sqrt();
                tensor.mapv_inplace(|_| F::from(rng.random_range(-bound..bound)).unwrap());
            } else if name.ends_with("/b") && name != "head/b" {
                // LSTM bias blocks are [i, f, g, o]
                tensor
                    .slice_axis_mut(Axis(0), (hidden..2 * hidden).into())
                    .fill(F::one());
            }
        }
        params
    }

    /// Tensors in a fixed order with stable names.
    pub fn named(&self) -> Vec<(&'static str, ArrayViewD<'_, F>)> {
        fn lstm<'a, F>(out: &mut Vec<(&'static str, ArrayViewD<'a, F>)>, names: [&'static str; 3], p: &'a LstmParams<F>) {
            out.push((names[0], p.w_x.view().into_dyn()));
            out.push((names[1], p.w_h.view().into_dyn()));
            out.push((names[2], p.b.view().into_dyn()));
        }
        let mut out = Vec::new();
        lstm(&mut out, ["encoder/w_x", "encoder/w_h", "encoder/b"], &self.encoder);
        match &self.decoder {
            DecoderParams::Lstm(p) => lstm(&mut out, ["decoder/w_x", "decoder/w_h", "decoder/b"], p),
            DecoderParams::Gru(p) => {
                out.push(("decoder/w_x", p.w_x.view().into_dyn()));
                out.push(("decoder/w_h", p.w_h.view().into_dyn()));
                out.push(("decoder/b_x", p.b_x.view().into_dyn()));
                out.push(("decoder/b_h", p.b_h.view().into_dyn()));
            }
            DecoderParams::BiLstm { fwd, bwd } => {
                lstm(&mut out, ["decoder_fwd/w_x", "decoder_fwd/w_h", "decoder_fwd/b"], fwd);
                lstm(&mut out, ["decoder_bwd/w_x", "decoder_bwd/w_h", "decoder_bwd/b"], bwd);
            }
        }
        out.push(("head/w", self.head_w.view().into_dyn()));
        out.push(("head/b", self.head_b.view().into_dyn()));
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, ArrayViewMutD<'_, F>)> {
        fn lstm<'a, F>(out: &mut Vec<(&'static str, ArrayViewMutD<'a, F>)>, names: [&'static str; 3], p: &'a mut LstmParams<F>) {
            out.push((names[0], p.w_x.view_mut().into_dyn()));
            out.push((names[1], p.w_h.view_mut().into_dyn()));
            out.push((names[2], p.b.view_mut().into_dyn()));
        }
        let mut out = Vec::new();
        lstm(&mut out, ["encoder/w_x", "encoder/w_h", "encoder/b"], &mut self.encoder);
        match &mut self.decoder {
            DecoderParams::Lstm(p) => lstm(&mut out, ["decoder/w_x", "decoder/w_h", "decoder/b"], p),
            DecoderParams::Gru(p) => {
                out.push(("decoder/w_x", p.w_x.view_mut().into_dyn()));
                out.push(("decoder/w_h", p.w_h.view_mut().into_dyn()));
                out.push(("decoder/b_x", p.b_x.view_mut().into_dyn()));
                out.push(("decoder/b_h", p.b_h.view_mut().into_dyn()));
            }
            DecoderParams::BiLstm { fwd, bwd } => {
                lstm(&mut out, ["decoder_fwd/w_x", "decoder_fwd/w_h", "decoder_fwd/b"], fwd);
                lstm(&mut out, ["decoder_bwd/w_x", "decoder_bwd/w_h", "decoder_bwd/b"], bwd);
            }
        }
        out.push(("head/w", self.head_w.view_mut().into_dyn()));
        out.push(("head/b", self.head_b.view_mut().into_dyn()));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Element-type conversion with the same structure.
    pub fn cast<G: NdFloat>(&self, cfg: &ModelConfig) -> Params<G> {
        let mut out = Params::<G>::zeros(cfg);
        for ((_, src), (_, mut dst)) in self.named().into_iter().zip(out.named_mut()) {
            dst.zip_mut_with(&src, |d, &s| *d = G::from(s).unwrap());
        }
        out
    }
}

enum DecoderTrace<F> {
    Lstm(LstmTrace<F>),
    Gru(GruTrace<F>),
    BiLstm { fwd: LstmTrace<F>, bwd: LstmTrace<F> },
}

struct Trace<F> {
    /// Encoder input flattened to `(B * T_enc, D)`, row `b * T_enc + t`.
    enc_x: Array2<F>,
    enc: LstmTrace<F>,
    dec: DecoderTrace<F>,
    /// Decoder outputs per step, `(B, decoder_out)`.
    outs: Vec<Array2<F>>,
    /// Softmax outputs per step, `(B, V)`.
    probs: Vec<Array2<F>>,
}

/// Encoder final state that seeds the decoder.
#[derive(Debug, Clone)]
pub struct EncoderState<F> {
    pub h: Array2<F>,
    pub c: Array2<F>,
}

/// LSTM encoder over frame features feeding an LSTM, GRU or BiLSTM decoder
/// over one-hot tokens, with a dense softmax head per decoder step.
///
/// State bridging: the LSTM decoder and the forward half of the BiLSTM get
/// the encoder's `(h, c)`; the GRU gets `h`; the backward half of the BiLSTM
/// starts from zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq<F> {
    pub config: ModelConfig,
    pub params: Params<F>,
}

fn lookup<F: NdFloat>(w_x: &Array2<F>, bias: &Array1<F>, ids: ArrayView2<usize>, t: usize) -> Array2<F> {
    let batch = ids.nrows();
    let mut out = Array2::zeros((batch, w_x.ncols()));
    for b in 0..batch {
        let mut row = out.row_mut(b);
        row.assign(&w_x.row(ids[[b, t]]));
        row += bias;
    }
    out
}

fn scatter_rows<F: NdFloat>(dw_x: &mut Array2<F>, db: &mut Array1<F>, dxproj: &Array2<F>, ids: ArrayView2<usize>, t: usize) {
    for b in 0..ids.nrows() {
        let mut row = dw_x.row_mut(ids[[b, t]]);
        row += &dxproj.row(b);
    }
    *db += &dxproj.sum_axis(Axis(0));
}

impl<F: NdFloat> Seq2Seq<F> {
    /// Builds a model with seeded initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn from_params(config: ModelConfig, params: Params<F>) -> Result<Self> {
        config.validate()?;
        let expected = Params::<F>::zeros(&config);
        for ((name, want), (_, got)) in expected.named().iter().zip(params.named()) {
            if want.shape() != got.shape() {
                return Err(Error::Config(format!(
                    "parameter {name} has shape {:?}, config implies {:?}",
                    got.shape(),
                    want.shape()
                )));
            }
        }
        if expected.named().len() != params.named().len() {
            return Err(Error::Config("parameter set does not match decoder kind".into()));
        }
        Ok(Self { config, params })
    }

    pub fn cast<G: NdFloat>(&self) -> Seq2Seq<G> {
        Seq2Seq {
            config: self.config.clone(),
            params: self.params.cast(&self.config),
        }
    }

    fn check_encoder_input(&self, x: &ArrayView3<F>) -> Result<()> {
        let (_, steps, dim) = x.dim();
        if steps != self.config.encoder_steps {
            return Err(Error::Shape {
                axis: "encoder time steps",
                expected: self.config.encoder_steps,
                found: steps,
            });
        }
        if dim != self.config.feature_dim {
            return Err(Error::Shape {
                axis: "feature dim",
                expected: self.config.feature_dim,
                found: dim,
            });
        }
        Ok(())
    }

    fn check_ids(&self, ids: &ArrayView2<usize>) -> Result<()> {
        match ids.iter().find(|&&id| id >= self.config.vocab_size) {
            Some(&id) => Err(Error::InvalidId {
                id,
                size: self.config.vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Runs the encoder; returns the flattened input and the trace.
    fn run_encoder(&self, x: ArrayView3<F>) -> (Array2<F>, LstmTrace<F>) {
        let (batch, steps, dim) = x.dim();
        let hidden = self.config.hidden_dim;
        let enc_x = x
            .as_standard_layout()
            .into_owned()
            .into_shape_with_order((batch * steps, dim))
            .expect("contiguous");
        let p = &self.params.encoder;
        let proj = enc_x.dot(&p.w_x);
        let xproj: Vec<Array2<F>> = (0..steps)
            .map(|t| &proj.slice(s![t..;steps, ..]) + &p.b)
            .collect();
        let trace = lstm_forward(
            &xproj,
            &p.w_h,
            Array2::zeros((batch, hidden)),
            Array2::zeros((batch, hidden)),
        );
        (enc_x, trace)
    }

    fn run_decoder(&self, h0: &Array2<F>, c0: &Array2<F>, ids: ArrayView2<usize>) -> (DecoderTrace<F>, Vec<Array2<F>>) {
        let steps = ids.ncols();
        match &self.params.decoder {
            DecoderParams::Lstm(p) => {
                let xp: Vec<_> = (0..steps).map(|t| lookup(&p.w_x, &p.b, ids, t)).collect();
                let tr = lstm_forward(&xp, &p.w_h, h0.clone(), c0.clone());
                let outs = tr.outputs().to_vec();
                (DecoderTrace::Lstm(tr), outs)
            }
            DecoderParams::Gru(p) => {
                let xp: Vec<_> = (0..steps).map(|t| lookup(&p.w_x, &p.b_x, ids, t)).collect();
                let tr = gru_forward(&xp, &p.w_h, &p.b_h, h0.clone());
                let outs = tr.outputs().to_vec();
                (DecoderTrace::Gru(tr), outs)
            }
            DecoderParams::BiLstm { fwd, bwd } => {
                let xf: Vec<_> = (0..steps).map(|t| lookup(&fwd.w_x, &fwd.b, ids, t)).collect();
                let trf = lstm_forward(&xf, &fwd.w_h, h0.clone(), c0.clone());
                // backward direction walks positions T-1 .. 0 from a zero state
                let xb: Vec<_> = (0..steps).rev().map(|t| lookup(&bwd.w_x, &bwd.b, ids, t)).collect();
                let zeros = Array2::zeros(h0.raw_dim());
                let trb = lstm_forward(&xb, &bwd.w_h, zeros.clone(), zeros);
                let outs = (0..steps)
                    .map(|t| {
                        ndarray::concatenate(
                            Axis(1),
                            &[trf.outputs()[t].view(), trb.outputs()[steps - 1 - t].view()],
                        )
                        .expect("same batch")
                    })
                    .collect();
                (DecoderTrace::BiLstm { fwd: trf, bwd: trb }, outs)
            }
        }
    }

    fn head(&self, outs: &[Array2<F>]) -> Vec<Array2<F>> {
        outs.iter()
            .map(|o| {
                let mut logits = o.dot(&self.params.head_w) + &self.params.head_b;
                softmax_rows(&mut logits);
                logits
            })
            .collect()
    }

    fn trace(&self, x: ArrayView3<F>, ids: ArrayView2<usize>) -> Trace<F> {
        let (enc_x, enc) = self.run_encoder(x);
        let (dec, outs) = self.run_decoder(enc.last_h(), enc.last_c(), ids);
        let probs = self.head(&outs);
        Trace {
            enc_x,
            enc,
            dec,
            outs,
            probs,
        }
    }

    /// `(B, T_dec, V)` next-token distributions for integer decoder inputs.
    /// Any decoder length ≥ 1 is accepted.
    pub fn forward_ids(&self, encoder_input: ArrayView3<F>, input_ids: ArrayView2<usize>) -> Result<Array3<F>> {
        self.check_encoder_input(&encoder_input)?;
        if input_ids.nrows() != encoder_input.dim().0 {
            return Err(Error::Shape {
                axis: "decoder batch",
                expected: encoder_input.dim().0,
                found: input_ids.nrows(),
            });
        }
        self.check_ids(&input_ids)?;
        let probs = self.trace(encoder_input, input_ids).probs;
        Ok(stack_steps(&probs))
    }

    /// One-hot contract: `decoder_input` is `(B, 10, V)` with one-hot rows.
    pub fn forward(&self, encoder_input: ArrayView3<F>, decoder_input: ArrayView3<F>) -> Result<Array3<F>> {
        let (batch, steps, vocab) = decoder_input.dim();
        if batch != encoder_input.dim().0 {
            return Err(Error::Shape {
                axis: "decoder batch",
                expected: encoder_input.dim().0,
                found: batch,
            });
        }
        if steps != self.config.decoder_steps {
            return Err(Error::Shape {
                axis: "decoder time steps",
                expected: self.config.decoder_steps,
                found: steps,
            });
        }
        if vocab != self.config.vocab_size {
            return Err(Error::Shape {
                axis: "vocab",
                expected: self.config.vocab_size,
                found: vocab,
            });
        }
        let mut ids = Array2::zeros((batch, steps));
        for ((b, t), id) in ids.indexed_iter_mut() {
            let row = decoder_input.slice(s![b, t, ..]);
            let hot: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != F::zero())
                .map(|(i, _)| i)
                .collect();
            match hot.as_slice() {
                [i] if row[*i] == F::one() => *id = *i,
                _ => {
                    return Err(Error::Config(format!(
                        "decoder input row ({b}, {t}) is not one-hot"
                    )))
                }
            }
        }
        self.forward_ids(encoder_input, ids.view())
    }

    /// Encoder final state for a single `(T_enc, D)` feature matrix.
    pub fn encode(&self, features: ArrayView2<F>) -> Result<EncoderState<F>> {
        let x = features.insert_axis(Axis(0));
        self.check_encoder_input(&x)?;
        let (_, tr) = self.run_encoder(x);
        Ok(EncoderState {
            h: tr.last_h().clone(),
            c: tr.last_c().clone(),
        })
    }

    /// Distribution at the last position after feeding `prefix` from `state`.
    /// Bidirectional decoders re-run both directions over the whole prefix.
    pub fn next_token_probs(&self, state: &EncoderState<F>, prefix: &[usize]) -> Result<Array1<F>> {
        let ids = Array2::from_shape_vec((1, prefix.len()), prefix.to_vec())
            .map_err(|_| Error::Config("empty decoder prefix".into()))?;
        if prefix.is_empty() {
            return Err(Error::Config("empty decoder prefix".into()));
        }
        self.check_ids(&ids.view())?;
        let (_, outs) = self.run_decoder(&state.h, &state.c, ids.view());
        let last = outs.last().expect("non-empty prefix");
        let probs = self.head(std::slice::from_ref(last));
        Ok(probs[0].row(0).to_owned())
    }

    /// Mean cross-entropy against `target_ids` and its gradient.
    pub fn loss_and_grads(
        &self,
        encoder_input: ArrayView3<F>,
        input_ids: ArrayView2<usize>,
        target_ids: ArrayView2<usize>,
    ) -> Result<(F, Params<F>)> {
        self.check_encoder_input(&encoder_input)?;
        self.check_ids(&input_ids)?;
        self.check_ids(&target_ids)?;
        if input_ids.dim() != target_ids.dim() || input_ids.nrows() != encoder_input.dim().0 {
            return Err(Error::Shape {
                axis: "target batch",
                expected: input_ids.nrows(),
                found: target_ids.nrows(),
            });
        }
        let trace = self.trace(encoder_input, input_ids);
        let (loss, dlogits) = cross_entropy_ids(&trace.probs, target_ids, self.config.mask_pad_loss);
        let grads = self.backward(&trace, input_ids, &dlogits);
        Ok((loss, grads))
    }

    /// Loss only (validation).
    pub fn loss_ids(&self, encoder_input: ArrayView3<F>, input_ids: ArrayView2<usize>, target_ids: ArrayView2<usize>) -> Result<F> {
        let probs = self.forward_ids(encoder_input, input_ids)?;
        let per_step: Vec<Array2<F>> = probs.axis_iter(Axis(1)).map(|p| p.to_owned()).collect();
        Ok(cross_entropy_ids(&per_step, target_ids, self.config.mask_pad_loss).0)
    }

    fn backward(&self, trace: &Trace<F>, ids: ArrayView2<usize>, dlogits: &[Array2<F>]) -> Params<F> {
        let cfg = &self.config;
        let p = &self.params;
        let mut g = Params::<F>::zeros(cfg);
        let steps = ids.ncols();
        let hidden = cfg.hidden_dim;

        let mut douts = Vec::with_capacity(steps);
        for (out, dl) in trace.outs.iter().zip(dlogits) {
            ndarray::linalg::general_mat_mul(F::one(), &out.t(), dl, F::one(), &mut g.head_w);
            g.head_b += &dl.sum_axis(Axis(0));
            douts.push(dl.dot(&p.head_w.t()));
        }

        let batch = ids.nrows();
        let zeros = || Array2::<F>::zeros((batch, hidden));
        let (dh_enc, dc_enc) = match (&trace.dec, &p.decoder, &mut g.decoder) {
            (DecoderTrace::Lstm(tr), DecoderParams::Lstm(pp), DecoderParams::Lstm(gg)) => {
                let bw = lstm_backward(tr, &pp.w_h, Some(&douts), zeros(), zeros());
                for (t, dx) in bw.dxproj.iter().enumerate() {
                    scatter_rows(&mut gg.w_x, &mut gg.b, dx, ids, t);
                }
                gg.w_h = bw.dw_h;
                (bw.dh0, bw.dc0)
            }
            (DecoderTrace::Gru(tr), DecoderParams::Gru(pp), DecoderParams::Gru(gg)) => {
                let bw = gru_backward(tr, &pp.w_h, &douts);
                for (t, dx) in bw.dxproj.iter().enumerate() {
                    scatter_rows(&mut gg.w_x, &mut gg.b_x, dx, ids, t);
                }
                gg.w_h = bw.dw_h;
                gg.b_h = bw.db_h;
                (bw.dh0, zeros())
            }
            (
                DecoderTrace::BiLstm { fwd: trf, bwd: trb },
                DecoderParams::BiLstm { fwd: pf, bwd: pb },
                DecoderParams::BiLstm { fwd: gf, bwd: gb },
            ) => {
                let d_f: Vec<_> = douts.iter().map(|d| d.slice(s![.., ..hidden]).to_owned()).collect();
                let d_b: Vec<_> = (0..steps)
                    .rev()
                    .map(|t| douts[t].slice(s![.., hidden..]).to_owned())
                    .collect();
                let bwf = lstm_backward(trf, &pf.w_h, Some(&d_f), zeros(), zeros());
                let bwb = lstm_backward(trb, &pb.w_h, Some(&d_b), zeros(), zeros());
                for (t, dx) in bwf.dxproj.iter().enumerate() {
                    scatter_rows(&mut gf.w_x, &mut gf.b, dx, ids, t);
                }
                for (s_, dx) in bwb.dxproj.iter().enumerate() {
                    scatter_rows(&mut gb.w_x, &mut gb.b, dx, ids, steps - 1 - s_);
                }
                gf.w_h = bwf.dw_h;
                gb.w_h = bwb.dw_h;
                (bwf.dh0, bwf.dc0)
            }
            _ => unreachable!("trace and parameters share the decoder kind"),
        };

        let enc_steps = cfg.encoder_steps;
        let bw = lstm_backward(&trace.enc, &p.encoder.w_h, None, dh_enc, dc_enc);
        let mut dproj = Array2::<F>::zeros((batch * enc_steps, 4 * hidden));
        for (t, dx) in bw.dxproj.iter().enumerate() {
            dproj.slice_mut(s![t..;enc_steps, ..]).assign(dx);
        }
        g.encoder.w_x = trace.enc_x.t().dot(&dproj);
        g.encoder.b = dproj.sum_axis(Axis(0));
        g.encoder.w_h = bw.dw_h;
        g
    }
}

fn stack_steps<F: NdFloat>(per_step: &[Array2<F>]) -> Array3<F> {
    let views: Vec<_> = per_step.iter().map(|p| p.view()).collect();
    ndarray::stack(Axis(1), &views).expect("uniform step shapes")
}

/// Returns the mean loss over included cells and `dL/dlogits` per step.
fn cross_entropy_ids<F: NdFloat>(probs: &[Array2<F>], targets: ArrayView2<usize>, mask_pad: bool) -> (F, Vec<Array2<F>>) {
    let floor = F::from(PROB_FLOOR).unwrap();
    let included = |id: usize| !(mask_pad && id == PAD);
    let n = targets.iter().filter(|&&id| included(id)).count();
    let mut grads: Vec<Array2<F>> = probs.iter().map(|p| Array2::zeros(p.raw_dim())).collect();
    if n == 0 {
        log::warn!("every target cell is masked; loss defined as 0");
        return (F::zero(), grads);
    }
    let scale = F::one() / F::from(n).unwrap();
    let mut total = F::zero();
    for (t, (p, g)) in probs.iter().zip(grads.iter_mut()).enumerate() {
        for b in 0..p.nrows() {
            let id = targets[[b, t]];
            if !included(id) {
                continue;
            }
            total -= p[[b, id]].max(floor).ln();
            let mut row = g.row_mut(b);
            row.assign(&p.row(b));
            row *= scale;
            row[id] -= scale;
        }
    }
    (total * scale, grads)
}

/// Categorical cross-entropy of `(B, T, V)` distributions against one-hot
/// targets, averaged over (sample, step) cells. With `mask_pad`, cells whose
/// target is `<pad>` are left out; if none remain the loss is 0.
pub fn loss<F: NdFloat>(probs: ArrayView3<F>, targets: ArrayView3<F>, mask_pad: bool) -> F {
    assert_eq!(probs.dim(), targets.dim(), "probability and target shapes differ");
    let floor = F::from(PROB_FLOOR).unwrap();
    let (batch, steps, _) = probs.dim();
    let mut total = F::zero();
    let mut n = 0usize;
    for b in 0..batch {
        for t in 0..steps {
            let y = targets.slice(s![b, t, ..]);
            if mask_pad && y[PAD] == F::one() {
                continue;
            }
            let p = probs.slice(s![b, t, ..]);
            let cell = y
                .iter()
                .zip(p.iter())
                .filter(|(&yv, _)| yv != F::zero())
                .fold(F::zero(), |acc, (&yv, &pv)| acc - yv * pv.min(F::one()).max(floor).ln());
            total += cell;
            n += 1;
        }
    }
    if n == 0 {
        log::warn!("every target cell is masked; loss defined as 0");
        return F::zero();
    }
    total / F::from(n).unwrap()
}
