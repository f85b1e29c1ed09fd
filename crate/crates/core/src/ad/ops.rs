//! Forward and vector-Jacobian rules for every registered op.

use std::fmt;
use std::str::FromStr;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Boundary handling for [`Op::Conv2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PadMode {
    Zero,
    /// Mirror without repeating the edge sample (`dcb|abcd|cba`).
    Reflect,
}

/// Stride and symmetric padding of a 2D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub stride: usize,
    pub pad: usize,
    pub mode: PadMode,
}

impl ConvSpec {
    pub fn new(stride: usize, pad: usize, mode: PadMode) -> Self {
        Self { stride, pad, mode }
    }

    /// Stride-1 convolution that preserves spatial size for an odd kernel side.
    pub fn same(side: usize, mode: PadMode) -> Self {
        Self::new(1, side / 2, mode)
    }
}

/// A differentiable operation together with its attributes.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Scale(f64),
    MatMul,
    /// Inputs `[x, w]` or `[x, w, bias]` with `x: [N, C, H, W]`,
    /// `w: [O, C, kh, kw]`, `bias: [O]`. Computes cross-correlation.
    Conv2d(ConvSpec),
    /// Nearest-neighbour upsampling of the two trailing axes of a 4D tensor.
    Upsample(usize),
    /// Concatenation along axis 1.
    Concat,
    LeakyRelu(f64),
    Sigmoid,
    /// Softmax over all elements, shape preserved.
    Softmax,
    Sum,
    Mean,
    Pow(f64),
    SqNorm,
    Reshape(Vec<usize>),
}

/// Attribute-free identifier of an op, used by the gradient checker and CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Add,
    Sub,
    Mul,
    Scale,
    MatMul,
    Conv2d,
    Upsample,
    Concat,
    LeakyRelu,
    Sigmoid,
    Softmax,
    Sum,
    Mean,
    Pow,
    SqNorm,
    Reshape,
}

impl OpKind {
    pub const ALL: [OpKind; 16] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::MatMul,
        OpKind::Conv2d,
        OpKind::Upsample,
        OpKind::Concat,
        OpKind::LeakyRelu,
        OpKind::Sigmoid,
        OpKind::Softmax,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::Pow,
        OpKind::SqNorm,
        OpKind::Reshape,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale => "scale",
            OpKind::MatMul => "matmul",
            OpKind::Conv2d => "conv2d",
            OpKind::Upsample => "upsample",
            OpKind::Concat => "concat",
            OpKind::LeakyRelu => "leaky_relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Softmax => "softmax",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Pow => "pow",
            OpKind::SqNorm => "sq_norm",
            OpKind::Reshape => "reshape",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown op `{s}`")))
    }
}

impl Op {
    pub fn kind(&self) -> OpKind {
        match self {
            Op::Add => OpKind::Add,
            Op::Sub => OpKind::Sub,
            Op::Mul => OpKind::Mul,
            Op::Scale(_) => OpKind::Scale,
            Op::MatMul => OpKind::MatMul,
            Op::Conv2d(_) => OpKind::Conv2d,
            Op::Upsample(_) => OpKind::Upsample,
            Op::Concat => OpKind::Concat,
            Op::LeakyRelu(_) => OpKind::LeakyRelu,
            Op::Sigmoid => OpKind::Sigmoid,
            Op::Softmax => OpKind::Softmax,
            Op::Sum => OpKind::Sum,
            Op::Mean => OpKind::Mean,
            Op::Pow(_) => OpKind::Pow,
            Op::SqNorm => OpKind::SqNorm,
            Op::Reshape(_) => OpKind::Reshape,
        }
    }

    fn arity_ok(&self, n: usize) -> bool {
        match self {
            Op::Add | Op::Sub | Op::Mul | Op::MatMul => n == 2,
            Op::Conv2d(_) => n == 2 || n == 3,
            Op::Concat => n >= 2,
            _ => n == 1,
        }
    }
}

pub(crate) fn forward(op: &Op, inputs: &[&Tensor]) -> Result<Tensor> {
    if !op.arity_ok(inputs.len()) {
        return Err(Error::shape(
            op.kind().name(),
            format!("wrong number of inputs: {}", inputs.len()),
        ));
    }
    match op {
        Op::Add => zip_same(op, inputs, |a, b| a + b),
        Op::Sub => zip_same(op, inputs, |a, b| a - b),
        Op::Mul => zip_same(op, inputs, |a, b| a * b),
        Op::Scale(c) => map(inputs[0], |a| a * c),
        Op::MatMul => matmul_forward(inputs[0], inputs[1]),
        Op::Conv2d(spec) => conv2d_forward(inputs[0], inputs[1], inputs.get(2).copied(), *spec),
        Op::Upsample(f) => upsample_forward(inputs[0], *f),
        Op::Concat => concat_forward(inputs),
        Op::LeakyRelu(slope) => map(inputs[0], |a| if a > 0.0 { a } else { slope * a }),
        Op::Sigmoid => map(inputs[0], sigmoid),
        Op::Softmax => Ok(softmax(inputs[0])),
        Op::Sum => Ok(Tensor::scalar(inputs[0].data().iter().sum())),
        Op::Mean => {
            let x = inputs[0];
            Ok(Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64))
        }
        Op::Pow(p) => {
            let x = inputs[0];
            if p.fract() != 0.0 {
                if let Some(&b) = x.data().iter().find(|&&b| b < 0.0) {
                    return Err(Error::NegativeBase {
                        base: b,
                        exponent: *p,
                    });
                }
            }
            map(x, |a| a.powf(*p))
        }
        Op::SqNorm => Ok(Tensor::scalar(inputs[0].data().iter().map(|a| a * a).sum())),
        Op::Reshape(shape) => inputs[0].clone().reshaped(shape.clone()),
    }
}

/// Vector-Jacobian products for each input; `None` where `needs[i]` is false.
pub(crate) fn backward(
    op: &Op,
    inputs: &[&Tensor],
    output: &Tensor,
    grad: &[f64],
    needs: &[bool],
) -> Vec<Option<Vec<f64>>> {
    let want = |i: usize| needs.get(i).copied().unwrap_or(false);
    match op {
        Op::Add => vec![
            want(0).then(|| grad.to_vec()),
            want(1).then(|| grad.to_vec()),
        ],
        Op::Sub => vec![
            want(0).then(|| grad.to_vec()),
            want(1).then(|| grad.iter().map(|g| -g).collect()),
        ],
        Op::Mul => {
            let (a, b) = (inputs[0].data(), inputs[1].data());
            vec![
                want(0).then(|| grad.iter().zip(b).map(|(g, b)| g * b).collect()),
                want(1).then(|| grad.iter().zip(a).map(|(g, a)| g * a).collect()),
            ]
        }
        Op::Scale(c) => vec![Some(grad.iter().map(|g| g * c).collect())],
        Op::MatMul => matmul_backward(inputs[0], inputs[1], grad, want(0), want(1)),
        Op::Conv2d(spec) => conv2d_backward(inputs, grad, *spec, needs),
        Op::Upsample(f) => vec![Some(upsample_backward(inputs[0].shape(), *f, grad))],
        Op::Concat => concat_backward(inputs, grad, needs),
        Op::LeakyRelu(slope) => vec![Some(
            inputs[0]
                .data()
                .iter()
                .zip(grad)
                .map(|(&a, g)| if a > 0.0 { *g } else { slope * g })
                .collect(),
        )],
        Op::Sigmoid => vec![Some(
            output
                .data()
                .iter()
                .zip(grad)
                .map(|(y, g)| g * y * (1.0 - y))
                .collect(),
        )],
        Op::Softmax => {
            let y = output.data();
            let dot: f64 = y.iter().zip(grad).map(|(y, g)| y * g).sum();
            vec![Some(y.iter().zip(grad).map(|(y, g)| y * (g - dot)).collect())]
        }
        Op::Sum => vec![Some(vec![grad[0]; inputs[0].len()])],
        Op::Mean => {
            let n = inputs[0].len();
            vec![Some(vec![grad[0] / n as f64; n])]
        }
        Op::Pow(p) => vec![Some(
            inputs[0]
                .data()
                .iter()
                .zip(grad)
                .map(|(&a, g)| {
                    if a == 0.0 && *p < 1.0 {
                        // subgradient convention at the cusp
                        0.0
                    } else {
                        g * p * a.powf(p - 1.0)
                    }
                })
                .collect(),
        )],
        Op::SqNorm => vec![Some(inputs[0].data().iter().map(|a| 2.0 * a * grad[0]).collect())],
        Op::Reshape(_) => vec![Some(grad.to_vec())],
    }
}

fn zip_same(op: &Op, inputs: &[&Tensor], f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    let (a, b) = (inputs[0], inputs[1]);
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op.kind().name(),
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Result<Tensor> {
    Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect())
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax(x: &Tensor) -> Tensor {
    let max = x.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.data().iter().map(|v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Tensor::new(x.shape().to_vec(), out).expect("shape preserved")
}

/// `c = alpha * op(a) * op(b) + beta * c`, all row-major. `op(a)` is `m x k`
/// and `op(b)` is `k x n`; `ta`/`tb` mark operands stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the bounds above cover every element addressed by these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn matmul_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
        return Err(Error::shape("matmul", format!("{sa:?} x {sb:?}")));
    }
    let (m, k, n) = (sa[0], sa[1], sb[1]);
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), false, b.data(), false, 0.0, &mut out);
    Tensor::new(vec![m, n], out)
}

fn matmul_backward(
    a: &Tensor,
    b: &Tensor,
    grad: &[f64],
    need_a: bool,
    need_b: bool,
) -> Vec<Option<Vec<f64>>> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let ga = need_a.then(|| {
        let mut ga = vec![0.0; m * k];
        gemm(m, n, k, grad, false, b.data(), true, 0.0, &mut ga);
        ga
    });
    let gb = need_b.then(|| {
        let mut gb = vec![0.0; k * n];
        gemm(k, m, n, a.data(), true, grad, false, 0.0, &mut gb);
        gb
    });
    vec![ga, gb]
}

/// Geometry of a convolution call, validated once.
struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    /// Padded row index -> source row (None = zero padding).
    rows: Vec<Option<usize>>,
    cols: Vec<Option<usize>>,
    stride: usize,
}

fn pad_map(len: usize, pad: usize, mode: PadMode) -> Vec<Option<usize>> {
    (0..len + 2 * pad)
        .map(|p| {
            let i = p as isize - pad as isize;
            let n = len as isize;
            if (0..n).contains(&i) {
                Some(i as usize)
            } else {
                match mode {
                    PadMode::Zero => None,
                    PadMode::Reflect => {
                        let r = if i < 0 { -i } else { 2 * (n - 1) - i };
                        Some(r as usize)
                    }
                }
            }
        })
        .collect()
}

fn conv_geom(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, spec: ConvSpec) -> Result<ConvGeom> {
    let (sx, sw) = (x.shape(), w.shape());
    if sx.len() != 4 || sw.len() != 4 {
        return Err(Error::shape(
            "conv2d",
            format!("expected 4D input and weight, got {sx:?} and {sw:?}"),
        ));
    }
    let (n, c, h, wd) = (sx[0], sx[1], sx[2], sx[3]);
    let (o, ci, kh, kw) = (sw[0], sw[1], sw[2], sw[3]);
    if ci != c {
        return Err(Error::shape(
            "conv2d",
            format!("input {sx:?} has {c} channels but weight {sw:?} expects {ci}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return Err(Error::shape(
                "conv2d",
                format!("bias {:?} does not match {o} output channels", b.shape()),
            ));
        }
    }
    if spec.stride == 0 {
        return Err(Error::shape("conv2d", "stride must be positive"));
    }
    if spec.mode == PadMode::Reflect && (spec.pad >= h || spec.pad >= wd) {
        return Err(Error::shape(
            "conv2d",
            format!("reflect padding {} needs spatial dims > pad, got {h}x{wd}", spec.pad),
        ));
    }
    let (hp, wp) = (h + 2 * spec.pad, wd + 2 * spec.pad);
    if hp < kh || wp < kw {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {kh}x{kw} larger than padded input {hp}x{wp}"),
        ));
    }
    Ok(ConvGeom {
        n,
        c,
        h,
        w: wd,
        o,
        kh,
        kw,
        ho: (hp - kh) / spec.stride + 1,
        wo: (wp - kw) / spec.stride + 1,
        rows: pad_map(h, spec.pad, spec.mode),
        cols: pad_map(wd, spec.pad, spec.mode),
        stride: spec.stride,
    })
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_px(&self) -> usize {
        self.ho * self.wo
    }

    /// Unfolds one image `[C, H, W]` into `[C*kh*kw, Ho*Wo]`.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let opx = self.out_px();
        for ch in 0..self.c {
            let plane = &x[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = ((ch * self.kh + i) * self.kw + j) * opx;
                    let dst = &mut cols[row..row + opx];
                    for oy in 0..self.ho {
                        let src_row = self.rows[oy * self.stride + i];
                        let line = &mut dst[oy * self.wo..(oy + 1) * self.wo];
                        match src_row {
                            None => line.fill(0.0),
                            Some(r) => {
                                let src = &plane[r * self.w..(r + 1) * self.w];
                                for (ox, v) in line.iter_mut().enumerate() {
                                    *v = match self.cols[ox * self.stride + j] {
                                        Some(cidx) => src[cidx],
                                        None => 0.0,
                                    };
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: accumulates `cols` into `dx`.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let opx = self.out_px();
        for ch in 0..self.c {
            let plane = &mut dx[ch * self.h * self.w..(ch + 1) * self.h * self.w];
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = ((ch * self.kh + i) * self.kw + j) * opx;
                    let src = &cols[row..row + opx];
                    for oy in 0..self.ho {
                        let Some(r) = self.rows[oy * self.stride + i] else {
                            continue;
                        };
                        let line = &src[oy * self.wo..(oy + 1) * self.wo];
                        let dst = &mut plane[r * self.w..(r + 1) * self.w];
                        for (ox, v) in line.iter().enumerate() {
                            if let Some(cidx) = self.cols[ox * self.stride + j] {
                                dst[cidx] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
    spec: ConvSpec,
) -> Result<Tensor> {
    let g = conv_geom(x, w, bias, spec)?;
    let (patch, opx) = (g.patch(), g.out_px());
    let in_sz = g.c * g.h * g.w;
    let out_sz = g.o * opx;
    let mut out = vec![0.0; g.n * out_sz];
    let mut cols = vec![0.0; patch * opx];
    for b in 0..g.n {
        g.im2col(&x.data()[b * in_sz..(b + 1) * in_sz], &mut cols);
        let dst = &mut out[b * out_sz..(b + 1) * out_sz];
        gemm(g.o, patch, opx, w.data(), false, &cols, false, 0.0, dst);
        if let Some(bias) = bias {
            for (oc, &bv) in bias.data().iter().enumerate() {
                dst[oc * opx..(oc + 1) * opx].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    Tensor::new(vec![g.n, g.o, g.ho, g.wo], out)
}

fn conv2d_backward(
    inputs: &[&Tensor],
    grad: &[f64],
    spec: ConvSpec,
    needs: &[bool],
) -> Vec<Option<Vec<f64>>> {
    let (x, w) = (inputs[0], inputs[1]);
    let bias = inputs.get(2).copied();
    let g = conv_geom(x, w, bias, spec).expect("validated in forward");
    let (patch, opx) = (g.patch(), g.out_px());
    let in_sz = g.c * g.h * g.w;
    let out_sz = g.o * opx;
    let want = |i: usize| needs.get(i).copied().unwrap_or(false);

    let mut dx = want(0).then(|| vec![0.0; x.len()]);
    let mut dw = want(1).then(|| vec![0.0; w.len()]);
    let mut db = (bias.is_some() && want(2)).then(|| vec![0.0; g.o]);

    let mut cols = vec![0.0; patch * opx];
    let mut dcols = vec![0.0; patch * opx];
    for b in 0..g.n {
        let go = &grad[b * out_sz..(b + 1) * out_sz];
        if let Some(dw) = dw.as_mut() {
            g.im2col(&x.data()[b * in_sz..(b + 1) * in_sz], &mut cols);
            gemm(g.o, opx, patch, go, false, &cols, true, 1.0, dw);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(patch, g.o, opx, w.data(), true, go, false, 0.0, &mut dcols);
            g.col2im(&dcols, &mut dx[b * in_sz..(b + 1) * in_sz]);
        }
        if let Some(db) = db.as_mut() {
            for (oc, acc) in db.iter_mut().enumerate() {
                *acc += go[oc * opx..(oc + 1) * opx].iter().sum::<f64>();
            }
        }
    }
    let mut out = vec![dx, dw];
    if bias.is_some() {
        out.push(db);
    }
    out
}

fn upsample_forward(x: &Tensor, f: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 || f == 0 {
        return Err(Error::shape(
            "upsample",
            format!("expected 4D input and positive factor, got {s:?} x{f}"),
        ));
    }
    let (planes, h, w) = (s[0] * s[1], s[2], s[3]);
    let (h2, w2) = (h * f, w * f);
    let mut out = vec![0.0; planes * h2 * w2];
    for p in 0..planes {
        let src = &x.data()[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
        for y in 0..h2 {
            let srow = &src[(y / f) * w..(y / f + 1) * w];
            for (xx, v) in dst[y * w2..(y + 1) * w2].iter_mut().enumerate() {
                *v = srow[xx / f];
            }
        }
    }
    Tensor::new(vec![s[0], s[1], h2, w2], out)
}

fn upsample_backward(shape: &[usize], f: usize, grad: &[f64]) -> Vec<f64> {
    let (planes, h, w) = (shape[0] * shape[1], shape[2], shape[3]);
    let (h2, w2) = (h * f, w * f);
    let mut dx = vec![0.0; planes * h * w];
    for p in 0..planes {
        let src = &grad[p * h2 * w2..(p + 1) * h2 * w2];
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for y in 0..h2 {
            let drow = &mut dst[(y / f) * w..(y / f + 1) * w];
            for (xx, v) in src[y * w2..(y + 1) * w2].iter().enumerate() {
                drow[xx / f] += v;
            }
        }
    }
    dx
}

fn concat_forward(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs[0].shape();
    if first.len() < 2 {
        return Err(Error::shape("concat", format!("rank < 2: {first:?}")));
    }
    for t in &inputs[1..] {
        let s = t.shape();
        if s.len() != first.len() || s[0] != first[0] || s[2..] != first[2..] {
            return Err(Error::shape("concat", format!("{first:?} vs {s:?}")));
        }
    }
    let outer = first[0];
    let inner: usize = first[2..].iter().product();
    let total_c: usize = inputs.iter().map(|t| t.shape()[1]).sum();
    let mut out = Vec::with_capacity(outer * total_c * inner);
    for b in 0..outer {
        for t in inputs {
            let block = t.shape()[1] * inner;
            out.extend_from_slice(&t.data()[b * block..(b + 1) * block]);
        }
    }
    let mut shape = first.to_vec();
    shape[1] = total_c;
    Tensor::new(shape, out)
}

fn concat_backward(inputs: &[&Tensor], grad: &[f64], needs: &[bool]) -> Vec<Option<Vec<f64>>> {
    let first = inputs[0].shape();
    let outer = first[0];
    let inner: usize = first[2..].iter().product();
    let total_c: usize = inputs.iter().map(|t| t.shape()[1]).sum();
    let mut out: Vec<Option<Vec<f64>>> = inputs
        .iter()
        .zip(needs)
        .map(|(t, &n)| n.then(|| Vec::with_capacity(t.len())))
        .collect();
    for b in 0..outer {
        let mut offset = b * total_c * inner;
        for (t, slot) in inputs.iter().zip(out.iter_mut()) {
            let block = t.shape()[1] * inner;
            if let Some(g) = slot {
                g.extend_from_slice(&grad[offset..offset + block]);
            }
            offset += block;
        }
    }
    out
}
