use mlmc::ad::{ConvSpec, Graph, PadMode, Tensor};
use mlmc::degradation::{blur, degrade, psnr, DegradationConfig};
use mlmc::image::Image;
use mlmc::io::{kernel_from_text, kernel_to_text};
use mlmc::kernel::{gaussian_kernel, motion_kernel, sample_gaussian_kernel, kernel_side, GaussianParams, Kernel, SamplingRanges};
use mlmc::solver::compute_mc_weights;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn image(h: usize, w: usize, c: usize, data: Vec<f64>) -> Image {
    Image::new(h, w, c, data).unwrap()
}

fn pixels(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..1.0f64, n)
}

fn gaussian() -> impl Strategy<Value = GaussianParams> {
    (0.3..4.0f64, 0.3..4.0f64, 0.0..std::f64::consts::PI, -1.0..1.0f64, -1.0..1.0f64).prop_map(
        |(sigma1, sigma2, theta, cy, cx)| GaussianParams {
            sigma1,
            sigma2,
            theta,
            center: (cy, cx),
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-30.0..30.0f64, 1..40)) {
        let mut g = Graph::new();
        let n = logits.len();
        let x = g.param(Tensor::new(vec![1, n], logits).unwrap());
        let p = g.softmax(x).unwrap();
        let v = g.value(p).data();
        prop_assert!(v.iter().all(|&q| q > 0.0));
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vjp_is_linear_in_the_seed(
        xs in prop::collection::vec(-2.0..2.0f64, 6),
        seed in prop::collection::vec(-1.0..1.0f64, 6),
        c in -3.0..3.0f64,
    ) {
        let mut g = Graph::new();
        let x = g.param(Tensor::new(vec![2, 3], xs).unwrap());
        let h = g.sigmoid(x).unwrap();
        let y = g.mul(h, x).unwrap();
        let a = g.vjp(y, seed.clone()).unwrap();
        let b = g.vjp(y, seed.iter().map(|s| c * s).collect()).unwrap();
        for (u, v) in a.get(x).unwrap().iter().zip(b.get(x).unwrap()) {
            prop_assert!((c * u - v).abs() <= 1e-12 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn reflect_conv_keeps_constants(value in 0.0..1.0f64, p in gaussian()) {
        let k = gaussian_kernel(&p, 7).unwrap();
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![1, 1, 12, 10], vec![value; 120]).unwrap());
        let w = g.constant(Tensor::new(vec![1, 1, 7, 7], k.grid().to_vec()).unwrap());
        let y = g.conv2d(x, w, None, ConvSpec::same(7, PadMode::Reflect)).unwrap();
        prop_assert!(g.value(y).data().iter().all(|v| (v - value).abs() < 1e-12));
    }

    #[test]
    fn blur_commutes_with_mixing(a in pixels(3 * 144), b in pixels(3 * 144), alpha in 0.0..1.0f64, p in gaussian()) {
        let k = gaussian_kernel(&p, 9).unwrap();
        let (ia, ib) = (image(12, 12, 3, a.clone()), image(12, 12, 3, b.clone()));
        let mix = a.iter().zip(&b).map(|(u, v)| alpha * u + (1.0 - alpha) * v).collect();
        let lhs = blur(&image(12, 12, 3, mix), &k).unwrap();
        let (ba, bb) = (blur(&ia, &k).unwrap(), blur(&ib, &k).unwrap());
        for ((l, u), v) in lhs.data().iter().zip(ba.data()).zip(bb.data()) {
            prop_assert!((l - (alpha * u + (1.0 - alpha) * v)).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_unit_scale_degradation_is_identity(data in pixels(20 * 20), seed in any::<u64>()) {
        let x = image(20, 20, 1, data);
        let cfg = DegradationConfig::new(1, 0.0, seed);
        let y = degrade(&x, &Kernel::delta(cfg.kernel_side()).unwrap(), &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(y, x);
    }

    #[test]
    fn psnr_is_symmetric_and_falls_with_error(data in pixels(256), noise in pixels(256), amp in 0.01..0.2f64) {
        let x = image(16, 16, 1, data.clone());
        let near: Vec<f64> = data.iter().zip(&noise).map(|(v, n)| v + amp * (n - 0.5)).collect();
        let far: Vec<f64> = data.iter().zip(&noise).map(|(v, n)| v + 2.0 * amp * (n - 0.5)).collect();
        let (near, far) = (image(16, 16, 1, near), image(16, 16, 1, far));
        prop_assert_eq!(psnr(&x, &near).unwrap(), psnr(&near, &x).unwrap());
        prop_assert!(psnr(&x, &near).unwrap() > psnr(&x, &far).unwrap());
    }

    #[test]
    fn sampled_kernels_are_valid(seed in any::<u64>(), scale in 1usize..5, ood in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = kernel_side(scale);
        let ranges = if ood { SamplingRanges::out_of_distribution(scale) } else { SamplingRanges::in_range(scale) };
        for k in [sample_gaussian_kernel(&mut rng, side, &ranges).unwrap(), motion_kernel(&mut rng, side, 2 * side).unwrap()] {
            prop_assert!(k.grid().iter().all(|&v| v >= 0.0));
            prop_assert!((k.grid().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_text_is_lossless(p in gaussian()) {
        let k = gaussian_kernel(&p, 11).unwrap();
        prop_assert_eq!(kernel_from_text(&kernel_to_text(&k)).unwrap(), k);
    }

    #[test]
    fn better_samples_weigh_more(seed in any::<u64>(), eps in 1e-8..1e-2f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Image::from_fn(16, 16, 1, |y, x, _| ((y * 7 + x * 3) % 11) as f64 / 10.0).unwrap();
        let truth = sample_gaussian_kernel(&mut rng, 5, &SamplingRanges::in_range(1)).unwrap();
        let y = degrade(&x, &truth, &DegradationConfig::new(1, 0.0, 0), &mut rng).unwrap();
        let batch: Vec<Kernel> = (0..6).map(|_| sample_gaussian_kernel(&mut rng, 5, &SamplingRanges::in_range(1)).unwrap()).collect();
        let k_est = Kernel::uniform(5).unwrap();
        let w = compute_mc_weights(&y, &x, &batch, &k_est, 1, eps).unwrap();
        for (i, wi) in w.iter().enumerate() {
            for (j, wj) in w.iter().enumerate() {
                let (ni, nj) = (1.0 / wi, 1.0 / wj);
                if ni < nj {
                    prop_assert!(wi > wj, "{i} vs {j}");
                }
            }
        }
    }
}
