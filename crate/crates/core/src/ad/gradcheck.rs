//! Central finite-difference verification of every registered op.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{ConvSpec, Op, OpKind, PadMode};
use super::tensor::Tensor;
use super::Graph;

pub const GRAD_CHECK_TOLERANCE: f64 = 1e-6;
const STEP: f64 = 1e-5;

/// Per-op worst relative error over all trials.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub rows: Vec<(OpKind, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|(_, e)| *e < GRAD_CHECK_TOLERANCE)
    }

    pub fn failures(&self) -> impl Iterator<Item = &(OpKind, f64)> {
        self.rows.iter().filter(|(_, e)| !(*e < GRAD_CHECK_TOLERANCE))
    }
}

/// Max over `trials` random cases of `|analytic - numeric| / max(|analytic|, |numeric|, 1)`.
pub fn grad_check<R: Rng>(kind: OpKind, trials: usize, rng: &mut R) -> f64 {
    check_with_fault(kind, trials, rng, None)
}

/// Runs [`grad_check`] for every op in [`OpKind::ALL`] from a single seed.
pub fn grad_check_all(seed: u64, trials: usize, fault: Option<(OpKind, f64)>) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = OpKind::ALL
        .into_iter()
        .map(|k| (k, check_with_fault(k, trials, &mut rng, fault)))
        .collect();
    GradCheckReport { rows }
}

fn check_with_fault<R: Rng>(
    kind: OpKind,
    trials: usize,
    rng: &mut R,
    fault: Option<(OpKind, f64)>,
) -> f64 {
    (0..trials.max(1))
        .map(|_| {
            let (op, inputs) = random_case(kind, rng);
            let out_len = {
                let refs: Vec<&Tensor> = inputs.iter().collect();
                super::ops::forward(&op, &refs).expect("generated case is valid").len()
            };
            let seed: Vec<f64> = (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect();
            trial_error(&op, &inputs, &seed, fault)
        })
        .fold(0.0, f64::max)
}

fn projected(op: &Op, inputs: &[Tensor], seed: &[f64]) -> f64 {
    let refs: Vec<&Tensor> = inputs.iter().collect();
    let out = super::ops::forward(op, &refs).expect("perturbed case stays valid");
    out.data().iter().zip(seed).map(|(a, b)| a * b).sum()
}

fn trial_error(op: &Op, inputs: &[Tensor], seed: &[f64], fault: Option<(OpKind, f64)>) -> f64 {
    let mut g = Graph::new();
    if let Some((k, f)) = fault {
        g.inject_fault(k, f);
    }
    let vars: Vec<_> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = g.forward(op.clone(), &vars).expect("generated case is valid");
    let grads = g.vjp(out, seed.to_vec()).expect("seed matches output");

    let mut worst: f64 = 0.0;
    let mut work = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.get(*v).expect("every input is trainable");
        for j in 0..inputs[i].len() {
            let orig = work[i].data()[j];
            work[i].data_mut()[j] = orig + STEP;
            let fp = projected(op, &work, seed);
            work[i].data_mut()[j] = orig - STEP;
            let fm = projected(op, &work, seed);
            work[i].data_mut()[j] = orig;
            let numeric = (fp - fm) / (2.0 * STEP);
            let a = analytic[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        }
    }
    worst
}

fn dim<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

fn uniform<R: Rng>(rng: &mut R, shape: Vec<usize>, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, || rng.random_range(lo..hi)).expect("positive dims")
}

/// Values with magnitude in `[0.05, 1)` and random sign, away from the kink at 0.
fn away_from_zero<R: Rng>(rng: &mut R, shape: Vec<usize>) -> Tensor {
    Tensor::from_fn(shape, || {
        let m = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
    .expect("positive dims")
}

fn random_case<R: Rng>(kind: OpKind, rng: &mut R) -> (Op, Vec<Tensor>) {
    let shape2 = |rng: &mut R| vec![dim(rng, 1, 6), dim(rng, 1, 6)];
    match kind {
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            let s = shape2(rng);
            let op = match kind {
                OpKind::Add => Op::Add,
                OpKind::Sub => Op::Sub,
                _ => Op::Mul,
            };
            (op, vec![uniform(rng, s.clone(), -1.0, 1.0), uniform(rng, s, -1.0, 1.0)])
        }
        OpKind::Scale => {
            let c = rng.random_range(-2.0..2.0);
            let s = shape2(rng);
            (Op::Scale(c), vec![uniform(rng, s, -1.0, 1.0)])
        }
        OpKind::MatMul => {
            let (m, k, n) = (dim(rng, 1, 6), dim(rng, 1, 6), dim(rng, 1, 6));
            (
                Op::MatMul,
                vec![uniform(rng, vec![m, k], -1.0, 1.0), uniform(rng, vec![k, n], -1.0, 1.0)],
            )
        }
        OpKind::Conv2d => {
            let (n, c, o) = (dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 1, 3));
            let (h, w) = (dim(rng, 3, 6), dim(rng, 3, 6));
            let (kh, kw) = (dim(rng, 1, 3), dim(rng, 1, 3));
            let stride = dim(rng, 1, 2);
            let mode = if rng.random_bool(0.5) {
                PadMode::Reflect
            } else {
                PadMode::Zero
            };
            let pad = dim(rng, 0, 2);
            let spec = ConvSpec::new(stride, pad, mode);
            let mut inputs = vec![
                uniform(rng, vec![n, c, h, w], -1.0, 1.0),
                uniform(rng, vec![o, c, kh, kw], -1.0, 1.0),
            ];
            if rng.random_bool(0.5) {
                inputs.push(uniform(rng, vec![o], -1.0, 1.0));
            }
            (Op::Conv2d(spec), inputs)
        }
        OpKind::Upsample => {
            let s = vec![dim(rng, 1, 2), dim(rng, 1, 3), dim(rng, 1, 3), dim(rng, 1, 3)];
            let f = dim(rng, 2, 3);
            (Op::Upsample(f), vec![uniform(rng, s, -1.0, 1.0)])
        }
        OpKind::Concat => {
            let (n, h, w) = (dim(rng, 1, 2), dim(rng, 1, 4), dim(rng, 1, 4));
            let parts = dim(rng, 2, 3);
            let inputs = (0..parts)
                .map(|_| {
                    let c = dim(rng, 1, 3);
                    uniform(rng, vec![n, c, h, w], -1.0, 1.0)
                })
                .collect();
            (Op::Concat, inputs)
        }
        OpKind::LeakyRelu => {
            let s = shape2(rng);
            (Op::LeakyRelu(0.1), vec![away_from_zero(rng, s)])
        }
        OpKind::Sigmoid => {
            let s = shape2(rng);
            (Op::Sigmoid, vec![uniform(rng, s, -3.0, 3.0)])
        }
        OpKind::Softmax => {
            let s = shape2(rng);
            (Op::Softmax, vec![uniform(rng, s, -2.0, 2.0)])
        }
        OpKind::Sum | OpKind::Mean | OpKind::SqNorm => {
            let s = shape2(rng);
            let op = match kind {
                OpKind::Sum => Op::Sum,
                OpKind::Mean => Op::Mean,
                _ => Op::SqNorm,
            };
            (op, vec![uniform(rng, s, -1.0, 1.0)])
        }
        OpKind::Pow => {
            let p = rng.random_range(0.3..3.0);
            let s = shape2(rng);
            (Op::Pow(p), vec![uniform(rng, s, 0.2, 2.0)])
        }
        OpKind::Reshape => {
            let s = shape2(rng);
            let target = vec![s[1], s[0]];
            (Op::Reshape(target), vec![uniform(rng, s, -1.0, 1.0)])
        }
    }
}
