//! Forward degradation `y = (x ⊗ k)↓s + n` and image/kernel quality metrics.
//!
//! The blur is a cross-correlation with reflect padding, and downsampling
//! keeps every `s`-th sample starting at index 0. Both the sampler and the
//! networks use the same orientation, so kernels compare elementwise.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::ad::{conv2d_forward, ConvSpec, PadMode, Tensor};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::kernel::{kernel_side, Kernel};

/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegradationConfig {
    pub scale: usize,
    /// Standard deviation of the additive noise as a fraction of the peak value.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl DegradationConfig {
    pub fn new(scale: usize, noise_sigma: f64, seed: u64) -> Self {
        Self {
            scale,
            noise_sigma,
            seed,
        }
    }

    pub fn kernel_side(&self) -> usize {
        kernel_side(self.scale)
    }
}

fn kernel_tensor(k: &Kernel) -> Tensor {
    let s = k.side();
    Tensor::new(vec![1, 1, s, s], k.grid().to_vec()).expect("kernel dims are positive")
}

/// Strided correlation of every channel of `x` with `k`, without clamping.
/// Returns channel-planar samples of size `ceil(h/stride) x ceil(w/stride)`.
pub fn correlate(x: &Image, k: &Kernel, stride: usize) -> Result<Vec<f64>> {
    let (h, w, c) = x.dims();
    let pad = k.side() / 2;
    if pad >= h || pad >= w {
        return Err(Error::InvalidImage(format!(
            "image {h}x{w} too small for a {0}x{0} kernel with reflect padding",
            k.side()
        )));
    }
    let xt = Tensor::new(vec![c, 1, h, w], x.data().to_vec())?;
    let out = conv2d_forward(&xt, &kernel_tensor(k), None, ConvSpec::new(stride.max(1), pad, PadMode::Reflect))?;
    Ok(out.into_data())
}

/// `x ⊗ k` with reflect padding; same spatial size as `x`.
pub fn blur(x: &Image, k: &Kernel) -> Result<Image> {
    let (h, w, c) = x.dims();
    Image::new(h, w, c, correlate(x, k, 1)?)
}

/// Keeps every `s`-th pixel starting at `(0, 0)`.
pub fn downsample(x: &Image, s: usize) -> Image {
    let s = s.max(1);
    let (h, w, c) = x.dims();
    Image::from_fn(h.div_ceil(s), w.div_ceil(s), c, |y, xx, ch| x.get(y * s, xx * s, ch))
        .expect("non-empty geometry")
}

/// `(x ⊗ k)↓s` computed in one strided pass, unclamped.
pub fn blur_downsample(x: &Image, k: &Kernel, s: usize) -> Result<Vec<f64>> {
    correlate(x, k, s)
}

/// `clamp((x ⊗ k)↓s + n, 0, 1)` with `n ~ N(0, noise_sigma²)` per sample.
pub fn degrade<R: Rng>(x: &Image, k: &Kernel, cfg: &DegradationConfig, rng: &mut R) -> Result<Image> {
    let (h, w, c) = x.dims();
    let s = cfg.scale.max(1);
    let mut lr = blur_downsample(x, k, s)?;
    if cfg.noise_sigma > 0.0 {
        let noise = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| Error::Config(format!("noise sigma {}: {e}", cfg.noise_sigma)))?;
        lr.iter_mut().for_each(|v| *v += noise.sample(rng));
    }
    Image::new(h.div_ceil(s), w.div_ceil(s), c, lr)
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b, "mse")?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

fn psnr_from(peak: f64, mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (peak * peak / mse).log10()).min(PSNR_CAP)
    }
}

/// `10 log10(1 / MSE)` over all channels, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from(1.0, mse(a, b)?))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;

fn ssim_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" Gaussian filtering of one plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let n = win.len();
    let (ho, wo) = (h - n + 1, w - n + 1);
    let mut tmp = vec![0.0; h * wo];
    for y in 0..h {
        for x in 0..wo {
            tmp[y * wo + x] = (0..n).map(|j| win[j] * plane[y * w + x + j]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for y in 0..ho {
        for x in 0..wo {
            out[y * wo + x] = (0..n).map(|i| win[i] * tmp[(y + i) * wo + x]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11x11 Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03,
/// peak 1, evaluated where the window fits and averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b, "ssim")?;
    let (h, w, c) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidImage(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let win = ssim_window();
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut total = 0.0;
    for ch in 0..c {
        let (pa, pb) = (a.plane(ch), b.plane(ch));
        let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { pa.iter().zip(pb).map(|(x, y)| f(*x, *y)).collect() };
        let mu_a = filter_valid(pa, h, w, &win);
        let mu_b = filter_valid(pb, h, w, &win);
        let aa = filter_valid(&prod(|x, _| x * x), h, w, &win);
        let bb = filter_valid(&prod(|_, y| y * y), h, w, &win);
        let ab = filter_valid(&prod(|x, y| x * y), h, w, &win);
        let mut acc = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / mu_a.len() as f64;
    }
    Ok(total / c as f64)
}

/// Peak used by [`kernel_psnr`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KernelPeak {
    /// Peak is the maximum of the ground-truth kernel.
    #[default]
    GroundTruthMax,
    /// Peak fixed at 1.
    Unit,
}

/// `10 log10(peak² / MSE(k_est, k_gt))`, capped at [`PSNR_CAP`].
pub fn kernel_psnr(k_est: &Kernel, k_gt: &Kernel) -> Result<f64> {
    kernel_psnr_with(k_est, k_gt, KernelPeak::GroundTruthMax)
}

pub fn kernel_psnr_with(k_est: &Kernel, k_gt: &Kernel, peak: KernelPeak) -> Result<f64> {
    let n = (k_gt.side() * k_gt.side()) as f64;
    let mse = k_est.sq_distance(k_gt)? / n;
    let peak = match peak {
        KernelPeak::GroundTruthMax => k_gt.max(),
        KernelPeak::Unit => 1.0,
    };
    Ok(psnr_from(peak, mse))
}

/// Catmull-Rom weight (`a = -0.5`) for offset `t` from a sample.
fn cubic(t: f64) -> f64 {
    const A: f64 = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (A + 2.0) * t.powi(3) - (A + 3.0) * t.powi(2) + 1.0
    } else if t < 2.0 {
        A * t.powi(3) - 5.0 * A * t.powi(2) + 8.0 * A * t - 4.0 * A
    } else {
        0.0
    }
}

/// Bicubic upsampling by `s`. HR pixel `X` samples LR coordinate `X / s`, which
/// aligns LR pixel `j` with HR pixel `s·j` as produced by [`downsample`].
/// Borders replicate the edge sample.
pub fn bicubic_upsample(y: &Image, s: usize) -> Image {
    let s = s.max(1);
    let (h, w, c) = y.dims();
    let (hh, ww) = (h * s, w * s);
    let taps = |pos: usize, len: usize| -> [(usize, f64); 4] {
        let u = pos as f64 / s as f64;
        let base = u.floor();
        let t = u - base;
        let mut out = [(0usize, 0.0f64); 4];
        for (k, slot) in out.iter_mut().enumerate() {
            let idx = base as isize + k as isize - 1;
            let clamped = idx.clamp(0, len as isize - 1) as usize;
            *slot = (clamped, cubic(t - (k as f64 - 1.0)));
        }
        out
    };
    let rows: Vec<_> = (0..hh).map(|y| taps(y, h)).collect();
    let cols: Vec<_> = (0..ww).map(|x| taps(x, w)).collect();
    Image::from_fn(hh, ww, c, |yy, xx, ch| {
        let mut acc = 0.0;
        for &(r, wr) in &rows[yy] {
            for &(cc, wc) in &cols[xx] {
                acc += wr * wc * y.get(r, cc, ch);
            }
        }
        acc
    })
    .expect("non-empty geometry")
}
