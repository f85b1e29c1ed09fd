//! Blur kernels and the random kernel families used for Monte Carlo sampling.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Square, odd-sided, nonnegative grid that sums to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    side: usize,
    grid: Vec<f64>,
}

impl Kernel {
    /// Validates an already-normalized grid.
    pub fn new(side: usize, grid: Vec<f64>) -> Result<Self> {
        check_side(side)?;
        if grid.len() != side * side {
            return Err(Error::InvalidKernel(format!(
                "side {side} needs {} entries, got {}",
                side * side,
                grid.len()
            )));
        }
        if let Some(v) = grid.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidKernel(format!("entry {v} is negative or non-finite")));
        }
        let sum: f64 = grid.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidKernel(format!("entries sum to {sum}, expected 1")));
        }
        Ok(Self { side, grid })
    }

    /// Clamps negatives to zero and rescales to unit sum.
    pub fn normalized(side: usize, mut grid: Vec<f64>) -> Result<Self> {
        check_side(side)?;
        grid.iter_mut().for_each(|v| *v = v.max(0.0));
        let sum: f64 = grid.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidKernel(format!("cannot normalize, mass {sum}")));
        }
        grid.iter_mut().for_each(|v| *v /= sum);
        Self::new(side, grid)
    }

    /// Unit mass at the center.
    pub fn delta(side: usize) -> Result<Self> {
        Self::delta_at(side, side / 2, side / 2)
    }

    fn delta_at(side: usize, row: usize, col: usize) -> Result<Self> {
        check_side(side)?;
        let mut grid = vec![0.0; side * side];
        grid[row * side + col] = 1.0;
        Ok(Self { side, grid })
    }

    pub fn uniform(side: usize) -> Result<Self> {
        check_side(side)?;
        let v = 1.0 / (side * side) as f64;
        Ok(Self {
            side,
            grid: vec![v; side * side],
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Row-major entries.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.grid[row * self.side + col]
    }

    pub fn max(&self) -> f64 {
        self.grid.iter().cloned().fold(0.0, f64::max)
    }

    /// Squared Frobenius distance to another kernel of the same side.
    pub fn sq_distance(&self, other: &Kernel) -> Result<f64> {
        if self.side != other.side {
            return Err(Error::InvalidKernel(format!(
                "side mismatch: {} vs {}",
                self.side, other.side
            )));
        }
        Ok(self
            .grid
            .iter()
            .zip(&other.grid)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

fn check_side(side: usize) -> Result<()> {
    if side % 2 == 1 {
        Ok(())
    } else {
        Err(Error::InvalidKernel(format!("side must be odd and positive, got {side}")))
    }
}

/// Kernel side used by the solver for a given scale factor.
pub fn kernel_side(scale: usize) -> usize {
    4 * scale + 3
}

/// Parameters of an anisotropic Gaussian: per-axis standard deviations before
/// rotation, the rotation angle and an offset of the mean from the grid center.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianParams {
    pub sigma1: f64,
    pub sigma2: f64,
    pub theta: f64,
    /// `(row, col)` offset of the mean from the geometric center, in pixels.
    pub center: (f64, f64),
}

/// Discretized `exp(-½ (h-h₀)ᵀ C⁻¹ (h-h₀))` with `C = R(θ) diag(σ1², σ2²) R(θ)ᵀ`,
/// normalized on the grid. `σ1` runs along columns when `θ = 0`.
pub fn gaussian_kernel(p: &GaussianParams, side: usize) -> Result<Kernel> {
    check_side(side)?;
    if !(p.sigma1 > 0.0 && p.sigma2 > 0.0) {
        return Err(Error::InvalidKernel(format!(
            "sigmas must be positive, got {} and {}",
            p.sigma1, p.sigma2
        )));
    }
    let (s, c) = p.theta.sin_cos();
    let (v1, v2) = (p.sigma1 * p.sigma1, p.sigma2 * p.sigma2);
    // C = R diag(v1, v2) Rᵀ over (x = col, y = row)
    let cxx = c * c * v1 + s * s * v2;
    let cyy = s * s * v1 + c * c * v2;
    let cxy = c * s * (v1 - v2);
    let det = cxx * cyy - cxy * cxy;
    let (ixx, iyy, ixy) = (cyy / det, cxx / det, -cxy / det);

    let mid = (side / 2) as f64;
    let (my, mx) = (mid + p.center.0, mid + p.center.1);
    let mut grid = Vec::with_capacity(side * side);
    for row in 0..side {
        let dy = row as f64 - my;
        for col in 0..side {
            let dx = col as f64 - mx;
            let q = ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy;
            grid.push((-0.5 * q).exp());
        }
    }
    let sum: f64 = grid.iter().sum();
    if !(sum > f64::MIN_POSITIVE) || !sum.is_finite() {
        let clamp = |v: f64| v.round().clamp(0.0, (side - 1) as f64) as usize;
        return Kernel::delta_at(side, clamp(my), clamp(mx));
    }
    grid.iter_mut().for_each(|v| *v /= sum);
    Ok(Kernel { side, grid })
}

/// Ranges for drawing random Gaussian kernel parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingRanges {
    pub width: (f64, f64),
    pub angle: (f64, f64),
    pub center_jitter: f64,
    /// Draw a support radius per kernel and zero the mass outside it.
    pub vary_support: bool,
}

impl SamplingRanges {
    /// Widths in `[0.175 s, 2.5 s]`, angles in `[0, π]`.
    pub fn in_range(scale: usize) -> Self {
        let s = scale as f64;
        Self {
            width: (0.175 * s, 2.5 * s),
            angle: (0.0, PI),
            center_jitter: 1.0,
            vary_support: false,
        }
    }

    /// Widths in `[0.35 s, 5 s]`, beyond the in-range family.
    pub fn out_of_distribution(scale: usize) -> Self {
        let s = scale as f64;
        Self {
            width: (0.35 * s, 5.0 * s),
            ..Self::in_range(scale)
        }
    }
}

fn uniform_in<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

pub fn sample_gaussian_params<R: Rng>(rng: &mut R, ranges: &SamplingRanges) -> GaussianParams {
    let sigma1 = uniform_in(rng, ranges.width);
    let sigma2 = uniform_in(rng, ranges.width);
    let theta = uniform_in(rng, ranges.angle);
    let j = ranges.center_jitter;
    let cy = uniform_in(rng, (-j, j));
    let cx = uniform_in(rng, (-j, j));
    GaussianParams {
        sigma1,
        sigma2,
        theta,
        center: (cy, cx),
    }
}

/// One random Gaussian kernel, optionally truncated to a random support radius.
pub fn sample_gaussian_kernel<R: Rng>(rng: &mut R, side: usize, ranges: &SamplingRanges) -> Result<Kernel> {
    let p = sample_gaussian_params(rng, ranges);
    let k = gaussian_kernel(&p, side)?;
    if !ranges.vary_support || side < 3 {
        return Ok(k);
    }
    let max_r = side / 2;
    let radius = rng.random_range(max_r.div_ceil(2).max(1)..=max_r);
    let mid = side / 2;
    let mut grid = k.grid;
    for row in 0..side {
        for col in 0..side {
            if row.abs_diff(mid) > radius || col.abs_diff(mid) > radius {
                grid[row * side + col] = 0.0;
            }
        }
    }
    Kernel::normalized(side, grid).or_else(|_| Kernel::delta(side))
}

/// `count` independent Gaussian kernels.
pub fn sample_kernel_batch<R: Rng>(
    rng: &mut R,
    count: usize,
    side: usize,
    ranges: &SamplingRanges,
) -> Result<Vec<Kernel>> {
    (0..count).map(|_| sample_gaussian_kernel(rng, side, ranges)).collect()
}

/// Random-walk camera-shake kernel: a smooth trajectory of `steps` unit moves,
/// splatted bilinearly, blurred with a unit Gaussian, then normalized.
pub fn motion_kernel<R: Rng>(rng: &mut R, side: usize, steps: usize) -> Result<Kernel> {
    check_side(side)?;
    if steps == 0 {
        return Err(Error::InvalidKernel("motion kernel needs at least one step".into()));
    }
    let turn = Normal::new(0.0, 0.6).expect("valid std");
    let mut heading = rng.random_range(0.0..2.0 * PI);
    let mut pts = vec![(0.0f64, 0.0f64)];
    for _ in 1..steps {
        heading += turn.sample(rng);
        let (y, x) = *pts.last().expect("non-empty");
        pts.push((y + heading.sin(), x + heading.cos()));
    }
    let n = pts.len() as f64;
    let (my, mx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (y, x)| (a + y / n, b + x / n));
    let mid = (side / 2) as f64;
    let hi = (side - 1) as f64;

    let mut canvas = vec![0.0; side * side];
    for (y, x) in pts {
        let y = (y - my + mid).clamp(0.0, hi);
        let x = (x - mx + mid).clamp(0.0, hi);
        let (y0, x0) = (y.floor() as usize, x.floor() as usize);
        let (fy, fx) = (y - y0 as f64, x - x0 as f64);
        let (y1, x1) = ((y0 + 1).min(side - 1), (x0 + 1).min(side - 1));
        canvas[y0 * side + x0] += (1.0 - fy) * (1.0 - fx);
        canvas[y0 * side + x1] += (1.0 - fy) * fx;
        canvas[y1 * side + x0] += fy * (1.0 - fx);
        canvas[y1 * side + x1] += fy * fx;
    }

    let smooth = gaussian_kernel(
        &GaussianParams {
            sigma1: 1.0,
            sigma2: 1.0,
            theta: 0.0,
            center: (0.0, 0.0),
        },
        3,
    )?;
    let mut out = vec![0.0; side * side];
    for row in 0..side {
        for col in 0..side {
            let mut acc = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let (r, c) = ((row + i).checked_sub(1), (col + j).checked_sub(1));
                    if let (Some(r), Some(c)) = (r, c) {
                        if r < side && c < side {
                            acc += smooth.get(i, j) * canvas[r * side + c];
                        }
                    }
                }
            }
            out[row * side + col] = acc;
        }
    }
    Kernel::normalized(side, out)
}
