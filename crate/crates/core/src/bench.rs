//! Seeded desk-scale scenarios and the ablation comparisons run on them.

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::degradation::{bicubic_upsample, degrade, kernel_psnr_with, psnr, ssim, DegradationConfig};
use crate::error::Result;
use crate::image::Image;
use crate::kernel::{sample_gaussian_kernel, Kernel, SamplingRanges};
use crate::scene::synthetic_scene;
use crate::solver::{GroundTruth, Solver, SolverConfig};

/// Noise level of the noisy scenarios, as a fraction of the peak value.
pub const NOISE_SIGMA: f64 = 0.0392;

/// A synthetic observation with its ground truth.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub seed: u64,
    pub scale: usize,
    pub noise_sigma: f64,
    pub hr: Image,
    pub kernel: Kernel,
    pub lr: Image,
}

impl Scenario {
    /// `side × side` RGB scene, blurred by an in-range Gaussian kernel and
    /// decimated by `scale`, plus optional noise.
    pub fn desk(seed: u64, side: usize, scale: usize, noise_sigma: f64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let hr = synthetic_scene(&mut rng, side, side, 3)?;
        let kernel = sample_gaussian_kernel(&mut rng, crate::kernel::kernel_side(scale), &SamplingRanges::in_range(scale))?;
        let lr = degrade(&hr, &kernel, &DegradationConfig::new(scale, noise_sigma, seed), &mut rng)?;
        Ok(Self {
            seed,
            scale,
            noise_sigma,
            hr,
            kernel,
            lr,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    NoMc,
    NoMeta,
    /// Noisy observation, hyper-Laplacian term on.
    NoisyPrior,
    /// Noisy observation, `rho = 0`.
    NoisyPlain,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoMc,
        Variant::NoMeta,
        Variant::NoisyPrior,
        Variant::NoisyPlain,
    ];

    pub fn noise_sigma(self) -> f64 {
        match self {
            Variant::NoisyPrior | Variant::NoisyPlain => NOISE_SIGMA,
            _ => 0.0,
        }
    }

    pub fn configure(self, base: &SolverConfig) -> SolverConfig {
        let mut cfg = base.clone();
        match self {
            Variant::Full | Variant::NoisyPrior => {}
            Variant::NoMc => cfg.no_mc = true,
            Variant::NoMeta => cfg.no_meta = true,
            Variant::NoisyPlain => cfg.rho = 0.0,
        }
        cfg
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::NoMc => "no-mc",
            Variant::NoMeta => "no-meta",
            Variant::NoisyPrior => "noisy-prior",
            Variant::NoisyPlain => "noisy-plain",
        })
    }
}

/// Suite layout: scene size, scale and the base solver setting.
#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub seeds: Vec<u64>,
    pub hr_side: usize,
    pub solver: SolverConfig,
}

impl Default for SuiteConfig {
    /// 128×128 scenes at scale 2, 30 outer iterations, seeds 0..5.
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            hr_side: 128,
            solver: SolverConfig {
                iters: 30,
                ..SolverConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub variant: Variant,
    pub seed: u64,
    /// `‖y − (x̂ ⊗ k̂)↓s‖²` before any update.
    pub recon_initial: f64,
    pub recon_final: f64,
    pub image_psnr: f64,
    pub image_ssim: f64,
    pub bicubic_psnr: f64,
    pub kernel_psnr: f64,
    pub wall_seconds: f64,
}

pub const SUMMARY_HEADER: &str =
    "variant,seed,recon_initial,recon_final,image_psnr,image_ssim,bicubic_psnr,kernel_psnr,wall_seconds";

impl RunSummary {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:.4},{:.4},{:.4},{:.4},{:.1}",
            self.variant,
            self.seed,
            self.recon_initial,
            self.recon_final,
            self.image_psnr,
            self.image_ssim,
            self.bicubic_psnr,
            self.kernel_psnr,
            self.wall_seconds
        )
    }
}

/// Solves one scenario with `cfg` (its seed is replaced by the scenario seed).
pub fn run_scenario(sc: &Scenario, variant: Variant, cfg: &SolverConfig) -> Result<RunSummary> {
    let cfg = SolverConfig {
        seed: sc.seed,
        scale: sc.scale,
        ..variant.configure(cfg)
    };
    let peak = cfg.kernel_peak;
    let start = Instant::now();
    let mut solver = Solver::new(sc.lr.clone(), cfg)?;
    let recon_initial = solver.reconstruction_error()?;
    solver.run(None::<GroundTruth<'_>>)?;
    let recon_final = solver.reconstruction_error()?;
    let x = solver.image()?;
    let k = solver.kernel()?;
    Ok(RunSummary {
        variant,
        seed: sc.seed,
        recon_initial,
        recon_final,
        image_psnr: psnr(&x, &sc.hr)?,
        image_ssim: ssim(&x, &sc.hr)?,
        bicubic_psnr: psnr(&bicubic_upsample(&sc.lr, sc.scale), &sc.hr)?,
        kernel_psnr: kernel_psnr_with(&k, &sc.kernel, peak)?,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs every `(seed, variant)` pair, calling `progress` after each run.
pub fn run_suite(
    suite: &SuiteConfig,
    variants: &[Variant],
    mut progress: impl FnMut(&RunSummary),
) -> Result<Vec<RunSummary>> {
    let mut out = Vec::new();
    for &seed in &suite.seeds {
        let clean = Scenario::desk(seed, suite.hr_side, suite.solver.scale, 0.0)?;
        let noisy = if variants.iter().any(|v| v.noise_sigma() > 0.0) {
            Some(Scenario::desk(seed, suite.hr_side, suite.solver.scale, NOISE_SIGMA)?)
        } else {
            None
        };
        for &v in variants {
            let sc = if v.noise_sigma() > 0.0 {
                noisy.as_ref().expect("built above")
            } else {
                &clean
            };
            let r = run_scenario(sc, v, &suite.solver)?;
            progress(&r);
            out.push(r);
        }
    }
    Ok(out)
}

/// Pass count over seeds for one comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub name: String,
    pub passed: usize,
    pub total: usize,
    pub required: usize,
}

impl Verdict {
    pub fn ok(&self) -> bool {
        self.total > 0 && self.passed >= self.required
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<44} {}/{} seeds (need {})  {}",
            self.name,
            self.passed,
            self.total,
            self.required,
            if self.ok() { "PASS" } else { "FAIL" }
        )
    }
}

/// Thresholds for the convergence checks.
#[derive(Clone, Copy, Debug)]
pub struct Thresholds {
    pub recon_ratio: f64,
    pub bicubic_margin_db: f64,
    pub kernel_psnr_db: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            recon_ratio: 0.1,
            bicubic_margin_db: 0.5,
            kernel_psnr_db: 35.0,
        }
    }
}

fn by_variant(runs: &[RunSummary], v: Variant) -> Vec<&RunSummary> {
    runs.iter().filter(|r| r.variant == v).collect()
}

fn paired(runs: &[RunSummary], a: Variant, b: Variant) -> Vec<(&RunSummary, &RunSummary)> {
    by_variant(runs, a)
        .into_iter()
        .filter_map(|ra| runs.iter().find(|rb| rb.variant == b && rb.seed == ra.seed).map(|rb| (ra, rb)))
        .collect()
}

fn fraction(n: usize, num: usize, den: usize) -> usize {
    (n * num).div_ceil(den)
}

/// Convergence of the full method: reconstruction drop, gain over bicubic and
/// kernel accuracy, each alone and jointly, on at least 4 of 5 seeds.
pub fn convergence_verdicts(runs: &[RunSummary], t: Thresholds) -> Vec<Verdict> {
    let full = by_variant(runs, Variant::Full);
    let need = fraction(full.len(), 4, 5);
    let count = |f: &dyn Fn(&RunSummary) -> bool| full.iter().filter(|r| f(r)).count();
    let a = |r: &RunSummary| r.recon_final <= t.recon_ratio * r.recon_initial;
    let b = |r: &RunSummary| r.image_psnr >= r.bicubic_psnr + t.bicubic_margin_db;
    let c = |r: &RunSummary| r.kernel_psnr >= t.kernel_psnr_db;
    let verdict = |name: String, passed| Verdict {
        name,
        passed,
        total: full.len(),
        required: need,
    };
    vec![
        verdict(format!("reconstruction <= {} x initial", t.recon_ratio), count(&a)),
        verdict(format!("image PSNR >= bicubic + {} dB", t.bicubic_margin_db), count(&b)),
        verdict(format!("kernel PSNR >= {} dB", t.kernel_psnr_db), count(&c)),
        verdict("all three on the same seed".into(), count(&|r| a(r) && b(r) && c(r))),
    ]
}

/// Full method against the two ablations.
pub fn ablation_verdicts(runs: &[RunSummary]) -> Vec<Verdict> {
    let mc = paired(runs, Variant::Full, Variant::NoMc);
    let meta = paired(runs, Variant::Full, Variant::NoMeta);
    vec![
        Verdict {
            name: "kernel PSNR full >= no-mc".into(),
            passed: mc.iter().filter(|(f, a)| f.kernel_psnr >= a.kernel_psnr).count(),
            total: mc.len(),
            required: fraction(mc.len(), 4, 5),
        },
        Verdict {
            name: "image PSNR full >= no-meta".into(),
            passed: meta.iter().filter(|(f, a)| f.image_psnr >= a.image_psnr).count(),
            total: meta.len(),
            required: fraction(meta.len(), 4, 5),
        },
    ]
}

/// Hyper-Laplacian term against none, on noisy observations.
pub fn noise_verdict(runs: &[RunSummary]) -> Verdict {
    let pairs = paired(runs, Variant::NoisyPrior, Variant::NoisyPlain);
    Verdict {
        name: "noisy image PSNR prior >= plain".into(),
        passed: pairs.iter().filter(|(p, q)| p.image_psnr >= q.image_psnr).count(),
        total: pairs.len(),
        required: fraction(pairs.len(), 3, 5),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(variant: Variant, seed: u64, image_psnr: f64, kernel_psnr: f64) -> RunSummary {
        RunSummary {
            variant,
            seed,
            recon_initial: 100.0,
            recon_final: 5.0,
            image_psnr,
            image_ssim: 0.9,
            bicubic_psnr: 25.0,
            kernel_psnr,
            wall_seconds: 1.0,
        }
    }

    #[test]
    fn scenario_is_seeded_and_consistent() {
        let a = Scenario::desk(3, 32, 2, 0.0).unwrap();
        let b = Scenario::desk(3, 32, 2, 0.0).unwrap();
        assert_eq!(a.lr, b.lr);
        assert_eq!(a.kernel, b.kernel);
        assert_eq!(a.lr.dims(), (16, 16, 3));
        assert_eq!(a.kernel.side(), 11);
        let n = Scenario::desk(3, 32, 2, NOISE_SIGMA).unwrap();
        assert_eq!(n.hr, a.hr);
        assert_ne!(n.lr, a.lr);
    }

    #[test]
    fn verdict_counting() {
        let mut runs = Vec::new();
        for s in 0..5 {
            runs.push(run(Variant::Full, s, 26.0, 36.0));
            runs.push(run(Variant::NoMc, s, 26.0, if s == 0 { 40.0 } else { 30.0 }));
            runs.push(run(Variant::NoMeta, s, if s < 2 { 27.0 } else { 25.0 }, 30.0));
        }
        let conv = convergence_verdicts(&runs, Thresholds::default());
        assert!(conv.iter().all(Verdict::ok), "{conv:?}");
        let abl = ablation_verdicts(&runs);
        assert_eq!((abl[0].passed, abl[0].ok()), (4, true));
        assert_eq!((abl[1].passed, abl[1].ok()), (3, false));
        assert!(!noise_verdict(&runs).ok());
    }
}
