//! Trains the kernel generator to reproduce a fixed anisotropic Gaussian.

use mlmc::ad::{Adam, AdamConfig, Graph, Tensor};
use mlmc::degradation::{kernel_psnr_with, KernelPeak};
use mlmc::kernel::{gaussian_kernel, GaussianParams};
use mlmc::models::{KernelGenerator, KernelGeneratorArch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mlmc::Result<()> {
    let side = 11;
    let target = gaussian_kernel(
        &GaussianParams {
            sigma1: 2.5,
            sigma2: 1.2,
            theta: 1.0,
            center: (0.0, 0.0),
        },
        side,
    )?;
    let arch = KernelGeneratorArch {
        hidden: 200,
        ..KernelGeneratorArch::default()
    };
    let mut net = KernelGenerator::new(side, arch, &mut ChaCha8Rng::seed_from_u64(0));
    let mut adam = Adam::new(net.params(), AdamConfig::default());
    let t = Tensor::new(vec![1, 1, side, side], target.grid().to_vec())?;

    for step in 0..=300 {
        let mut g = Graph::new();
        let (k, vars) = net.forward(&mut g)?;
        let tv = g.constant(t.clone());
        let d = g.sub(k, tv)?;
        let l = g.sq_norm(d)?;
        if step % 50 == 0 {
            let est = net.kernel()?;
            println!(
                "step {step:>3}  ||k - k_gt||^2 {:.3e}  kernel psnr {:.2} dB",
                g.value(l).item(),
                kernel_psnr_with(&est, &target, KernelPeak::GroundTruthMax)?
            );
        }
        let mut grads = g.backward(l)?;
        let grads: Vec<Vec<f64>> = vars.iter().map(|v| grads.take(*v).expect("param leaf")).collect();
        adam.step(net.params_mut(), &grads, 1e-4)?;
    }
    Ok(())
}
