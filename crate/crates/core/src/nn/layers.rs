use rand::Rng;

use super::graph::{Graph, Mat, Var};
use super::params::{ParamId, ParamStore};
use super::NnError;

/// `x W + b`, `W: in × out`, `b: 1 × out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        gain: f64,
        rng: &mut R,
    ) -> Self {
        let w = store.add_glorot(format!("{name}.w"), input, output, gain, rng);
        let b = store.add(format!("{name}.b"), Mat::zeros((1, output)));
        Self { w, b, input, output }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var, NnError> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        g.affine(x, w, b)
    }
}

/// Hidden and cell state, each `batch × hidden`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// Standard LSTM cell. Gate columns are ordered input, forget, candidate,
/// output; all four read the concatenation `[x, h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmCell {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add_glorot(format!("{name}.w"), input + hidden, 4 * hidden, 1.0, rng);
        let mut bias = Mat::zeros((1, 4 * hidden));
        bias.slice_mut(ndarray::s![.., hidden..2 * hidden]).fill(1.0);
        let b = store.add(format!("{name}.b"), bias);
        Self { w, b, input, hidden }
    }

    pub fn step(&self, g: &mut Graph, x: Var, state: LstmState) -> Result<LstmState, NnError> {
        let hsz = self.hidden;
        if g.shape(x).1 != self.input || g.shape(state.h).1 != hsz || g.shape(state.c).1 != hsz {
            return Err(NnError::Shape {
                op: "lstm_step",
                left: g.shape(x),
                right: g.shape(state.h),
            });
        }
        let xh = g.concat_cols(x, state.h)?;
        let w = g.param(self.w);
        let b = g.param(self.b);
        let z = g.affine(xh, w, b)?;
        let zi = g.slice_cols(z, 0, hsz)?;
        let zf = g.slice_cols(z, hsz, hsz)?;
        let zg = g.slice_cols(z, 2 * hsz, hsz)?;
        let zo = g.slice_cols(z, 3 * hsz, hsz)?;
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let keep = g.mul(f, state.c)?;
        let write = g.mul(i, cand)?;
        let c = g.add(keep, write)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}

/// Alternating mutual gating of input and hidden state before the cell.
/// Odd rounds rescale `x` by `2σ(h Q)`, even rounds rescale `h` by `2σ(x R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mogrifier {
    /// `hidden × input`, used on rounds 1, 3, 5, ...
    pub q: Vec<ParamId>,
    /// `input × hidden`, used on rounds 2, 4, ...
    pub r: Vec<ParamId>,
    pub rounds: usize,
    pub input: usize,
    pub hidden: usize,
}

impl Mogrifier {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rounds: usize,
        rng: &mut R,
    ) -> Self {
        let q = (0..rounds.div_ceil(2))
            .map(|k| store.add_glorot(format!("{name}.q{k}"), hidden, input, 1.0, rng))
            .collect();
        let r = (0..rounds / 2)
            .map(|k| store.add_glorot(format!("{name}.r{k}"), input, hidden, 1.0, rng))
            .collect();
        Self {
            q,
            r,
            rounds,
            input,
            hidden,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, h: Var) -> Result<(Var, Var), NnError> {
        if g.shape(x).1 != self.input || g.shape(h).1 != self.hidden {
            return Err(NnError::Shape {
                op: "mogrify",
                left: g.shape(x),
                right: g.shape(h),
            });
        }
        let (mut x, mut h) = (x, h);
        for round in 1..=self.rounds {
            if round % 2 == 1 {
                let q = g.param(self.q[round / 2]);
                let z = g.matmul(h, q)?;
                let s = g.sigmoid(z);
                let gate = g.scale(s, 2.0);
                x = g.mul(gate, x)?;
            } else {
                let r = g.param(self.r[round / 2 - 1]);
                let z = g.matmul(x, r)?;
                let s = g.sigmoid(z);
                let gate = g.scale(s, 2.0);
                h = g.mul(gate, h)?;
            }
        }
        Ok((x, h))
    }
}

/// Mogrifier pre-transformation followed by a standard LSTM cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MogrifierLstm {
    pub mogrifier: Mogrifier,
    pub cell: LstmCell,
}

impl MogrifierLstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rounds: usize,
        rng: &mut R,
    ) -> Self {
        let mogrifier = Mogrifier::new(store, &format!("{name}.mog"), input, hidden, rounds, rng);
        let cell = LstmCell::new(store, &format!("{name}.cell"), input, hidden, rng);
        Self { mogrifier, cell }
    }

    pub fn step(&self, g: &mut Graph, x: Var, state: LstmState) -> Result<LstmState, NnError> {
        let (x, h) = self.mogrifier.forward(g, x, state.h)?;
        self.cell.step(g, x, LstmState { h, c: state.c })
    }
}
