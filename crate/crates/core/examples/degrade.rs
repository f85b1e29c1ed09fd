//! Blur, decimate and corrupt a synthetic scene, then score the bicubic baseline.
//!
//! ```text
//! cargo run --release --example degrade -- [seed]
//! ```

use mlmc::degradation::{bicubic_upsample, degrade, psnr, ssim, DegradationConfig};
use mlmc::kernel::{gaussian_kernel, kernel_side, GaussianParams};
use mlmc::scene::synthetic_scene;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mlmc::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hr = synthetic_scene(&mut rng, 96, 96, 3)?;

    let params = GaussianParams {
        sigma1: 2.2,
        sigma2: 1.1,
        theta: 0.6,
        center: (0.0, 0.0),
    };
    println!("seed {seed}, 96x96 RGB scene, kernel {params:?}");
    println!("{:>5} {:>7} {:>8} {:>8} {:>8}", "scale", "noise", "lr", "psnr", "ssim");
    for scale in [2, 3, 4] {
        let k = gaussian_kernel(&params, kernel_side(scale))?;
        for noise in [0.0, 0.0392] {
            let y = degrade(&hr, &k, &DegradationConfig::new(scale, noise, seed), &mut rng)?;
            let up = bicubic_upsample(&y, scale);
            println!(
                "{scale:>5} {noise:>7.4} {:>8} {:>8.2} {:>8.4}",
                format!("{}x{}", y.height(), y.width()),
                psnr(&up, &hr)?,
                ssim(&up, &hr)?
            );
        }
    }
    Ok(())
}
