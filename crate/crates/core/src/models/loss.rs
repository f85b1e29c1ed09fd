//! Reconstruction losses and the residual-based noise-variance estimate.

use crate::ad::{ConvSpec, Graph, PadMode, Tensor, Var};
use crate::degradation::blur_downsample;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::kernel::Kernel;

/// Lower bound applied to every noise-variance estimate.
pub const SIGMA2_FLOOR: f64 = 1e-6;

/// Differentiable `(x ⊗ k)↓s` for `x: [1, C, H, W]` and `k: [1, 1, side, side]`;
/// returns `[C, 1, h, w]`.
pub fn degrade_graph(g: &mut Graph, x: Var, k: Var, scale: usize) -> Result<Var> {
    let xs = g.value(x).shape().to_vec();
    let ks = g.value(k).shape().to_vec();
    let [1, c, h, w] = xs[..] else {
        return Err(Error::shape("degrade", format!("expected [1, C, H, W], got {xs:?}")));
    };
    let [1, 1, side, side2] = ks[..] else {
        return Err(Error::shape("degrade", format!("expected [1, 1, k, k], got {ks:?}")));
    };
    if side != side2 || side % 2 == 0 {
        return Err(Error::shape("degrade", format!("kernel must be square and odd, got {ks:?}")));
    }
    let planes = g.reshape(x, vec![c, 1, h, w])?;
    g.conv2d(planes, k, None, ConvSpec::new(scale.max(1), side / 2, PadMode::Reflect))
}

fn lr_tensor(y: &Image) -> Tensor {
    let (h, w, c) = y.dims();
    Tensor::new(vec![c, 1, h, w], y.data().to_vec()).expect("dims are positive")
}

/// Scalar pieces of a recorded hyper-Laplacian loss.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    /// `data / σ² + reg`, the differentiable node.
    pub total: Var,
    /// `‖y − (x ⊗ k)↓s‖²_F`.
    pub data: f64,
    /// `ρ Σ_c (‖f_c ⊗ x‖²_F)^η`.
    pub reg: f64,
}

/// Hyper-Laplacian reconstruction loss
/// `(1/σ²)‖y − (x ⊗ k)↓s‖²_F + ρ Σ_c (‖f_c ⊗ x‖²_F)^η`
/// with forward differences `f_1 = [1, −1]`, `f_2 = [1, −1]ᵀ`.
/// `sigma2` is a constant here and is floored at [`SIGMA2_FLOOR`].
#[allow(clippy::too_many_arguments)]
pub fn hyper_laplacian_loss(
    g: &mut Graph,
    x: Var,
    y: &Image,
    k: Var,
    scale: usize,
    sigma2: f64,
    rho: f64,
    eta: f64,
) -> Result<LossTerms> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Config(format!("eta must lie in (0, 1], got {eta}")));
    }
    if rho < 0.0 {
        return Err(Error::Config(format!("rho must be >= 0, got {rho}")));
    }
    let sigma2 = sigma2.max(SIGMA2_FLOOR);
    let pred = degrade_graph(g, x, k, scale)?;
    if g.value(pred).shape() != lr_tensor(y).shape() {
        return Err(Error::shape(
            "reconstruction",
            format!(
                "prediction {:?} vs observation {:?}",
                g.value(pred).shape(),
                lr_tensor(y).shape()
            ),
        ));
    }
    let target = g.constant(lr_tensor(y));
    let resid = g.sub(target, pred)?;
    let sq = g.sq_norm(resid)?;
    let data = g.value(sq).item();
    let mut total = g.scale(sq, 1.0 / sigma2)?;
    let mut reg = 0.0;
    if rho > 0.0 {
        let xs = g.value(x).shape().to_vec();
        let planes = g.reshape(x, vec![xs[1], 1, xs[2], xs[3]])?;
        let valid = ConvSpec::new(1, 0, PadMode::Zero);
        for filter in [vec![1, 1, 1, 2], vec![1, 1, 2, 1]] {
            let f = g.constant(Tensor::new(filter, vec![1.0, -1.0])?);
            let d = g.conv2d(planes, f, None, valid)?;
            let n = g.sq_norm(d)?;
            let p = g.pow(n, eta)?;
            let term = g.scale(p, rho)?;
            reg += g.value(term).item();
            total = g.add(total, term)?;
        }
    }
    Ok(LossTerms { total, data, reg })
}

/// `‖y − (x ⊗ k)↓s‖²_F`.
pub fn reconstruction_error(y: &Image, x: &Image, k: &Kernel, scale: usize) -> Result<f64> {
    let pred = blur_downsample(x, k, scale)?;
    if pred.len() != y.data().len() {
        return Err(Error::shape(
            "reconstruction",
            format!("LR {:?} does not match HR {:?} at scale {scale}", y.dims(), x.dims()),
        ));
    }
    Ok(y.data().iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Mean squared LR residual over all pixels and channels, floored at
/// [`SIGMA2_FLOOR`].
pub fn estimate_noise_variance(y: &Image, x: &Image, k: &Kernel, scale: usize) -> Result<f64> {
    let sse = reconstruction_error(y, x, k, scale)?;
    Ok((sse / y.data().len() as f64).max(SIGMA2_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degradation::{degrade, DegradationConfig};
    use crate::kernel::{gaussian_kernel, GaussianParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kern() -> Kernel {
        gaussian_kernel(
            &GaussianParams {
                sigma1: 1.1,
                sigma2: 0.6,
                theta: 0.5,
                center: (0.0, 0.0),
            },
            7,
        )
        .unwrap()
    }

    fn kvar(g: &mut Graph, k: &Kernel) -> Var {
        g.constant(Tensor::new(vec![1, 1, k.side(), k.side()], k.grid().to_vec()).unwrap())
    }

    #[test]
    fn perfect_constant_fit_has_zero_loss() {
        let x = Image::filled(16, 16, 3, 0.4).unwrap();
        let k = kern();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = degrade(&x, &k, &DegradationConfig::new(2, 0.0, 0), &mut rng).unwrap();
        let mut g = Graph::new();
        let xv = g.param(x.to_tensor());
        let kv = kvar(&mut g, &k);
        let t = hyper_laplacian_loss(&mut g, xv, &y, kv, 2, 1e-3, 1e-2, 0.67).unwrap();
        assert!(g.value(t.total).item().abs() < 1e-20);
    }

    #[test]
    fn rho_zero_isolates_data_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Image::from_fn(16, 16, 1, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
        let y = Image::from_fn(8, 8, 1, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
        let k = kern();
        let mut g = Graph::new();
        let xv = g.param(x.to_tensor());
        let kv = kvar(&mut g, &k);
        let t = hyper_laplacian_loss(&mut g, xv, &y, kv, 2, 0.02, 0.0, 0.67).unwrap();
        let sse = reconstruction_error(&y, &x, &k, 2).unwrap();
        assert_eq!(t.reg, 0.0);
        assert!((g.value(t.total).item() - sse / 0.02).abs() < 1e-12 * sse / 0.02);
        // doubling σ² halves the data term exactly
        let mut g2 = Graph::new();
        let xv = g2.param(x.to_tensor());
        let kv = kvar(&mut g2, &k);
        let t2 = hyper_laplacian_loss(&mut g2, xv, &y, kv, 2, 0.04, 0.0, 0.67).unwrap();
        assert_eq!(g2.value(t2.total).item() * 2.0, g.value(t.total).item());
    }

    #[test]
    fn noise_variance_examples() {
        let x = Image::filled(16, 16, 1, 0.5).unwrap();
        let k = kern();
        let exact = Image::filled(8, 8, 1, 0.5).unwrap();
        assert_eq!(estimate_noise_variance(&exact, &x, &k, 2).unwrap(), SIGMA2_FLOOR);
        let off = Image::filled(8, 8, 1, 0.6).unwrap();
        assert!((estimate_noise_variance(&off, &x, &k, 2).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn noise_variance_ignores_channel_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Image::from_fn(16, 16, 3, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
        let y = Image::from_fn(8, 8, 3, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
        let perm = [2, 0, 1];
        let xp = Image::from_fn(16, 16, 3, |r, c, ch| x.get(r, c, perm[ch])).unwrap();
        let yp = Image::from_fn(8, 8, 3, |r, c, ch| y.get(r, c, perm[ch])).unwrap();
        let a = estimate_noise_variance(&y, &x, &kern(), 2).unwrap();
        let b = estimate_noise_variance(&yp, &xp, &kern(), 2).unwrap();
        assert!((a - b).abs() < 1e-15);
    }
}
