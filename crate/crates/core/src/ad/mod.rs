//! Define-by-run reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] records every op applied during a forward pass. Nodes are
//! appended in evaluation order, so walking them in reverse is a valid
//! topological order for the backward pass and each node is visited once.
//!
//! ```
//! use mlmc::ad::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let w = g.param(Tensor::new(vec![1], vec![3.0]).unwrap());
//! let loss = g.sq_norm(w).unwrap();
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap(), &[6.0]);
//! ```

mod adam;
mod gradcheck;
mod ops;
mod tensor;

pub use adam::{Adam, AdamConfig, Param};
pub use gradcheck::{grad_check, grad_check_all, GradCheckReport, GRAD_CHECK_TOLERANCE};
pub use ops::{ConvSpec, Op, OpKind, PadMode};
pub use tensor::Tensor;

pub(crate) use ops::conv2d_forward;

use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

struct Node {
    value: Tensor,
    op: Option<Op>,
    inputs: Vec<Var>,
    requires_grad: bool,
}

/// Computation graph for a single forward/backward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    fault: Option<(OpKind, f64)>,
}

/// Gradients of a scalar loss with respect to the trainable leaves of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Scales the input gradients produced by every `kind` op by `factor`.
    /// Only used to prove that the gradient checker catches a broken rule.
    #[doc(hidden)]
    pub fn inject_fault(&mut self, kind: OpKind, factor: f64) {
        self.fault = Some((kind, factor));
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, None, Vec::new(), false)
    }

    /// Trainable leaf; its gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, None, Vec::new(), true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Option<Op>, inputs: Vec<Var>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            inputs,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Applies `op` to `inputs` and records the edge for the backward pass.
    pub fn forward(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        let value = {
            let refs: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            ops::forward(&op, &refs)?
        };
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, Some(op), inputs.to_vec(), requires_grad))
    }

    /// Gradients of a `[1]`-shaped loss with respect to every trainable leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).shape();
        if shape != [1] {
            return Err(Error::NonScalarLoss(shape.to_vec()));
        }
        Ok(self.backward_with_seed(loss, vec![1.0]))
    }

    /// Vector-Jacobian product: propagates `seed` (same length as `output`)
    /// back to the trainable leaves.
    pub fn vjp(&self, output: Var, seed: Vec<f64>) -> Result<Gradients> {
        let n = self.value(output).len();
        if seed.len() != n {
            return Err(Error::shape(
                "vjp",
                format!("seed of length {} for output of length {n}", seed.len()),
            ));
        }
        Ok(self.backward_with_seed(output, seed))
    }

    fn backward_with_seed(&self, output: Var, seed: Vec<f64>) -> Gradients {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(seed);
        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            let Some(op) = &node.op else { continue };
            let Some(grad) = grads[idx].take() else {
                continue;
            };
            if !node.requires_grad {
                continue;
            }
            let inputs: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
            let needs: Vec<bool> = node
                .inputs
                .iter()
                .map(|v| self.nodes[v.0].requires_grad)
                .collect();
            let mut input_grads = ops::backward(op, &inputs, &node.value, &grad, &needs);
            if let Some((kind, factor)) = self.fault {
                if kind == op.kind() {
                    input_grads
                        .iter_mut()
                        .flatten()
                        .for_each(|g| g.iter_mut().for_each(|v| *v *= factor));
                }
            }
            for (v, g) in node.inputs.iter().zip(input_grads) {
                let Some(g) = g else { continue };
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        // Intermediate gradients were consumed above; only leaves remain.
        Gradients { grads }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(Op::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(Op::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(Op::Mul, &[a, b])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.forward(Op::Scale(c), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.forward(Op::MatMul, &[a, b])
    }

    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
        match bias {
            Some(b) => self.forward(Op::Conv2d(spec), &[x, w, b]),
            None => self.forward(Op::Conv2d(spec), &[x, w]),
        }
    }

    pub fn upsample(&mut self, x: Var, factor: usize) -> Result<Var> {
        self.forward(Op::Upsample(factor), &[x])
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.forward(Op::Concat, parts)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.forward(Op::LeakyRelu(slope), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.forward(Op::Sigmoid, &[x])
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.forward(Op::Softmax, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.forward(Op::Sum, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.forward(Op::Mean, &[x])
    }

    pub fn pow(&mut self, x: Var, exponent: f64) -> Result<Var> {
        self.forward(Op::Pow(exponent), &[x])
    }

    pub fn sq_norm(&mut self, x: Var) -> Result<Var> {
        self.forward(Op::SqNorm, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        self.forward(Op::Reshape(shape), &[x])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn add_elementwise() {
        let mut g = Graph::new();
        let a = g.constant(t(vec![2], vec![1.0, 2.0]));
        let b = g.constant(t(vec![2], vec![3.0, 4.0]));
        let c = g.add(a, b).unwrap();
        assert_eq!(g.value(c).data(), &[4.0, 6.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![4]).unwrap());
        let s = g.softmax(a).unwrap();
        assert_eq!(g.value(s).data(), &[0.25; 4]);
    }

    #[test]
    fn conv_reflect_preserves_constants() {
        let mut g = Graph::new();
        let x = g.constant(t(vec![1, 1, 5, 5], vec![1.0; 25]));
        let w = g.constant(t(
            vec![1, 1, 3, 3],
            vec![0.1, 0.2, 0.05, 0.1, 0.1, 0.05, 0.2, 0.1, 0.1],
        ));
        let y = g.conv2d(x, w, None, ConvSpec::same(3, PadMode::Reflect)).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1, 5, 5]);
        for v in g.value(y).data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_reports_shapes() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::zeros(vec![2]).unwrap());
        let b = g.constant(Tensor::zeros(vec![3]).unwrap());
        let err = g.add(a, b).unwrap_err().to_string();
        assert!(err.contains("[2]") && err.contains("[3]"), "{err}");
    }

    #[test]
    fn pow_rejects_negative_base_with_fractional_exponent() {
        let mut g = Graph::new();
        let a = g.constant(t(vec![2], vec![1.0, -2.0]));
        assert!(matches!(g.pow(a, 0.5), Err(Error::NegativeBase { .. })));
        assert!(g.pow(a, 2.0).is_ok());
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let w = g.param(Tensor::from_fn(vec![2, 3], || 0.7).unwrap());
        let s = g.sum(w).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let w = g.param(Tensor::zeros(vec![2]).unwrap());
        let y = g.scale(w, 2.0).unwrap();
        assert!(matches!(g.backward(y), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut g = Graph::new();
        let w = g.param(t(vec![2], vec![1.0, 2.0]));
        let c = g.constant(t(vec![2], vec![3.0, 4.0]));
        let p = g.mul(w, c).unwrap();
        let s = g.sum(p).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap(), &[3.0, 4.0]);
        assert!(grads.get(c).is_none());
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // loss = sum(w*w) through two uses of the same node
        let mut g = Graph::new();
        let w = g.param(t(vec![3], vec![1.0, -2.0, 0.5]));
        let sq = g.mul(w, w).unwrap();
        let s = g.sum(sq).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(w).unwrap(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn conv_mse_gradient_matches_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |x: &[f64], w: &[f64]| -> (f64, Option<(Vec<f64>, Vec<f64>)>) {
            let mut g = Graph::new();
            let xv = g.param(t(vec![1, 1, 4, 4], x.to_vec()));
            let wv = g.param(t(vec![1, 1, 3, 3], w.to_vec()));
            let tv = g.constant(t(vec![1, 1, 4, 4], target.clone()));
            let y = g.conv2d(xv, wv, None, ConvSpec::same(3, PadMode::Zero)).unwrap();
            let d = g.sub(y, tv).unwrap();
            let sq = g.mul(d, d).unwrap();
            let l = g.mean(sq).unwrap();
            let mut grads = g.backward(l).unwrap();
            (
                g.value(l).item(),
                Some((grads.take(xv).unwrap(), grads.take(wv).unwrap())),
            )
        };
        let (_, gr) = loss(&x, &w);
        let (gx, gw) = gr.unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..16 {
            let (mut p, mut m) = (x.clone(), x.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (loss(&p, &w).0 - loss(&m, &w).0) / (2.0 * h);
            worst = worst.max((fd - gx[i]).abs() / fd.abs().max(gx[i].abs()).max(1e-3));
        }
        for i in 0..9 {
            let (mut p, mut m) = (w.clone(), w.clone());
            p[i] += h;
            m[i] -= h;
            let fd = (loss(&x, &p).0 - loss(&x, &m).0) / (2.0 * h);
            worst = worst.max((fd - gw[i]).abs() / fd.abs().max(gw[i].abs()).max(1e-3));
        }
        assert!(worst < 1e-6, "max relative error {worst}");
    }
}
