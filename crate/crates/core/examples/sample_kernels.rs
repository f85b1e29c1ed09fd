//! Draws kernels from the three samplers and prints their spread.

use mlmc::kernel::{motion_kernel, sample_gaussian_kernel, Kernel, SamplingRanges};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Centroid offset and second moment about the centroid.
fn moments(k: &Kernel) -> (f64, f64) {
    let n = k.side();
    let c = (n / 2) as f64;
    let (mut my, mut mx) = (0.0, 0.0);
    for r in 0..n {
        for col in 0..n {
            my += k.get(r, col) * (r as f64 - c);
            mx += k.get(r, col) * (col as f64 - c);
        }
    }
    let mut spread = 0.0;
    for r in 0..n {
        for col in 0..n {
            spread += k.get(r, col) * ((r as f64 - c - my).powi(2) + (col as f64 - c - mx).powi(2));
        }
    }
    ((my * my + mx * mx).sqrt(), spread)
}

fn summarize(name: &str, kernels: &[Kernel]) {
    let n = kernels.len() as f64;
    let (mut off, mut spread, mut peak, mut mass_err) = (0.0, 0.0, 0.0, 0.0f64);
    for k in kernels {
        let (o, s) = moments(k);
        off += o / n;
        spread += s / n;
        peak += k.max() / n;
        mass_err = mass_err.max((k.grid().iter().sum::<f64>() - 1.0).abs());
    }
    println!("{name:<14} {off:>8.3} {spread:>8.3} {peak:>8.4} {mass_err:>10.1e}");
}

fn main() -> mlmc::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draws = 2000;
    println!("{:<14} {:>8} {:>8} {:>8} {:>10}", "sampler", "offset", "spread", "peak", "|mass-1|");
    for scale in [2, 4] {
        let side = mlmc::kernel::kernel_side(scale);
        let inr = SamplingRanges::in_range(scale);
        let ood = SamplingRanges::out_of_distribution(scale);
        let a: Vec<Kernel> = (0..draws).map(|_| sample_gaussian_kernel(&mut rng, side, &inr)).collect::<Result<_, _>>()?;
        let b: Vec<Kernel> = (0..draws).map(|_| sample_gaussian_kernel(&mut rng, side, &ood)).collect::<Result<_, _>>()?;
        let c: Vec<Kernel> = (0..draws).map(|_| motion_kernel(&mut rng, side, 3 * side)).collect::<Result<_, _>>()?;
        println!("scale {scale}, {side}x{side}");
        summarize("  gaussian", &a);
        summarize("  ood", &b);
        summarize("  motion", &c);
    }
    Ok(())
}
