//! Tape-based reverse-mode differentiation over dense row-major matrices.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and the backward sweep is a single reverse pass.
//! Parameters are borrowed from a [`ParamStore`], never copied.

use ndarray::{s, Array2, Axis, Zip};

use super::params::{Gradients, ParamId, ParamStore};
use super::NnError;

pub type Mat = Array2<f64>;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    /// Right operand may be a `1 × c` row broadcast over the left's rows.
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize, usize),
    /// Row sums: `n × c → n × 1`.
    SumCols(Var),
    /// `Σ_ij x_ij`: `→ 1 × 1`.
    Sum(Var),
    /// `Σ_ij w_ij x_ij` with fixed weights of the same shape: `→ 1 × 1`.
    WeightedSum(Var, Mat),
    /// `1 × c → n × c`.
    RepeatRows(Var),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Mat,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        match &self.nodes[v.0].op {
            Op::Param(id) => self.store.value(*id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    /// Scalar value of a `1 × 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Mat) -> Var {
        self.push(Op::Input, value)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Op::Param(id), Mat::zeros((0, 0)))
    }

    fn broadcast_ok(a: (usize, usize), b: (usize, usize)) -> bool {
        a == b || (b.0 == 1 && b.1 == a.1)
    }

    fn check_broadcast(&self, a: Var, b: Var, op: &'static str) -> Result<(), NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if Self::broadcast_ok(sa, sb) {
            Ok(())
        } else {
            Err(NnError::Shape { op, left: sa, right: sb })
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(NnError::Shape { op: "matmul", left: sa, right: sb });
        }
        let v = self.value(a).dot(self.value(b));
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.check_broadcast(a, b, "add")?;
        let v = self.value(a) + self.value(b);
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.check_broadcast(a, b, "sub")?;
        let v = self.value(a) - self.value(b);
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.check_broadcast(a, b, "mul")?;
        let v = self.value(a) * self.value(b);
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(Op::Scale(a, k), v)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) + k;
        self.push(Op::AddScalar(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(Op::Exp(a), v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(Op::Square(a), v)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(Op::Clamp(a, lo, hi), v)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(NnError::Shape { op: "minimum", left: sa, right: sb });
        }
        let mut v = self.value(a).clone();
        Zip::from(&mut v).and(self.value(b)).for_each(|x, &y| *x = x.min(y));
        Ok(self.push(Op::Minimum(a, b), v))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.0 != sb.0 {
            return Err(NnError::Shape { op: "concat_cols", left: sa, right: sb });
        }
        let v = ndarray::concatenate(Axis(1), &[self.value(a).view(), self.value(b).view()])
            .expect("row counts checked");
        Ok(self.push(Op::ConcatCols(a, b), v))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let sa = self.shape(a);
        if start + len > sa.1 {
            return Err(NnError::Shape { op: "slice_cols", left: sa, right: (start, len) });
        }
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        Ok(self.push(Op::SliceCols(a, start, len), v))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(Op::SumCols(a), v)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Mat::from_elem((1, 1), self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn weighted_sum(&mut self, a: Var, weights: Mat) -> Result<Var, NnError> {
        let sa = self.shape(a);
        if sa != weights.dim() {
            return Err(NnError::Shape { op: "weighted_sum", left: sa, right: weights.dim() });
        }
        let total = (self.value(a) * &weights).sum();
        Ok(self.push(Op::WeightedSum(a, weights), Mat::from_elem((1, 1), total)))
    }

    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var, NnError> {
        let sa = self.shape(a);
        if sa.0 != 1 {
            return Err(NnError::Shape { op: "repeat_rows", left: sa, right: (n, sa.1) });
        }
        let v = self
            .value(a)
            .broadcast((n, sa.1))
            .expect("single row broadcasts")
            .to_owned();
        Ok(self.push(Op::RepeatRows(a), v))
    }

    /// Affine map `x W + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Reverse sweep from a `1 × 1` loss. Returns parameter gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NnError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(NnError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Mat>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Mat::ones((1, 1)));
        let mut out = Gradients::zeros_like(self.store);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    let gb = reduce_to(&g, self.shape(*b));
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, gb);
                }
                Op::Sub(a, b) => {
                    let gb = -reduce_to(&g, self.shape(*b));
                    acc(&mut grads, *a, g);
                    acc(&mut grads, *b, gb);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let ga = &g * vb;
                    let gb = reduce_to(&(&g * va), vb.dim());
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g * *k),
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::Sigmoid(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = g;
                    Zip::from(&mut ga).and(y).for_each(|g, &y| *g *= y * (1.0 - y));
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let mut ga = g;
                    Zip::from(&mut ga).and(y).for_each(|g, &y| *g *= 1.0 - y * y);
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g * &self.nodes[i].value;
                    acc(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g * self.value(*a) * 2.0;
                    acc(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(self.value(*a)).for_each(|g, &x| {
                        if x < *lo || x > *hi {
                            *g = 0.0;
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Minimum(a, b) => {
                    let mut ga = g.clone();
                    let mut gb = g;
                    Zip::from(&mut ga)
                        .and(&mut gb)
                        .and(self.value(*a))
                        .and(self.value(*b))
                        .for_each(|ga, gb, &x, &y| {
                            if x <= y {
                                *gb = 0.0;
                            } else {
                                *ga = 0.0;
                            }
                        });
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.shape(*a).1;
                    acc(&mut grads, *a, g.slice(s![.., ..ca]).to_owned());
                    acc(&mut grads, *b, g.slice(s![.., ca..]).to_owned());
                }
                Op::SliceCols(a, start, len) => {
                    let mut ga = Mat::zeros(self.shape(*a));
                    ga.slice_mut(s![.., *start..*start + *len]).assign(&g);
                    acc(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let ga = g.broadcast(self.shape(*a)).expect("column broadcast").to_owned();
                    acc(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Mat::from_elem(self.shape(*a), g[[0, 0]]);
                    acc(&mut grads, *a, ga);
                }
                Op::WeightedSum(a, w) => {
                    let ga = w * g[[0, 0]];
                    acc(&mut grads, *a, ga);
                }
                Op::RepeatRows(a) => {
                    let ga = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *a, ga);
                }
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

/// Sums a gradient down to a broadcast operand's shape.
fn reduce_to(g: &Mat, shape: (usize, usize)) -> Mat {
    if g.dim() == shape {
        g.clone()
    } else {
        g.sum_axis(Axis(0)).insert_axis(Axis(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quadratic_gradient_is_twice_params() {
        let mut store = ParamStore::default();
        let id = store.add("w", array![[1.5, -2.0], [0.25, 3.0]]);
        let mut g = Graph::new(&store);
        let w = g.param(id);
        let sq = g.square(w);
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(id), &(store.value(id) * 2.0));
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut store = ParamStore::default();
        let id = store.add("w", array![[1.0, 2.0]]);
        let mut g = Graph::new(&store);
        let _w = g.param(id);
        let c = g.input(array![[4.0]]);
        let grads = g.backward(c).unwrap();
        assert!(grads.get(id).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let x = g.input(Mat::zeros((2, 1)));
        assert!(matches!(g.backward(x), Err(NnError::NonScalarLoss((2, 1)))));
    }

    #[test]
    fn shape_errors() {
        let store = ParamStore::default();
        let mut g = Graph::new(&store);
        let a = g.input(Mat::zeros((2, 3)));
        let b = g.input(Mat::zeros((2, 2)));
        assert!(g.matmul(a, b).is_err());
        assert!(g.add(a, b).is_err());
        assert!(g.slice_cols(a, 2, 2).is_err());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut store = ParamStore::default();
        let id = store.add("w", array![[2.0]]);
        for _ in 0..3 {
            let grads = {
                let mut g = Graph::new(&store);
                let w = g.param(id);
                let sq = g.square(w);
                let loss = g.sum(sq);
                g.backward(loss).unwrap()
            };
            store.accumulate(&grads);
        }
        assert_eq!(store.grad(id)[[0, 0]], 12.0);
        store.zero_grad();
        assert_eq!(store.grad(id)[[0, 0]], 0.0);
    }
}
