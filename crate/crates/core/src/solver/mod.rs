//! The MLMC alternation: Monte Carlo kernel approximation (MCKA) followed by
//! meta-learned alternating optimization (MLAO), repeated `I` times.
//!
//! A single kernel network is shared by both phases. Each phase keeps its own
//! Adam moments for it, so the very different loss scales of the two phases do
//! not leak into each other's step sizes.

mod config;
mod trace;

pub use config::SolverConfig;
pub use trace::{read_trace, write_trace, Phase, TraceRecord, TRACE_HEADER};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ad::{Adam, AdamConfig, Graph, Tensor, Var};
use crate::degradation::{bicubic_upsample, kernel_psnr_with, psnr};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::kernel::{sample_kernel_batch, Kernel};
use crate::models::{
    estimate_noise_variance, hyper_laplacian_loss, reconstruction_error, ImageRestorer, KernelGenerator,
};

/// Smallest accepted LR side.
pub const MIN_LR_SIDE: usize = 16;

/// Monte Carlo weights `ω_τ = 1/ν_τ` with
/// `ν_τ = ‖y − (x ⊗ k_τ)↓s‖² + ‖k_est − k_τ‖² + ε`.
pub fn compute_mc_weights(
    y: &Image,
    x: &Image,
    batch: &[Kernel],
    k_est: &Kernel,
    scale: usize,
    epsilon: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Config("Monte Carlo batch is empty".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    batch
        .iter()
        .map(|kg| {
            let nu = reconstruction_error(y, x, kg, scale)? + k_est.sq_distance(kg)? + epsilon;
            Ok(1.0 / nu)
        })
        .collect()
}

/// What one MCKA call did.
#[derive(Clone, Debug, Default)]
pub struct McReport {
    pub batch: Vec<Kernel>,
    /// Weights used at each inner step `l`.
    pub weights: Vec<Vec<f64>>,
    /// `L_MC` at each inner step.
    pub losses: Vec<f64>,
}

/// What one MLAO call did, indexed `[q][p]`.
#[derive(Clone, Debug, Default)]
pub struct MlReport {
    pub re_losses: Vec<Vec<f64>>,
    pub sigma2: Vec<Vec<f64>>,
    pub ml_losses: Vec<f64>,
}

/// Optimizer step counts, per parameter group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepCounts {
    pub kernel_mc: u64,
    pub kernel_ml: u64,
    pub image: u64,
}

/// Final estimates and the convergence trace.
#[derive(Clone, Debug)]
pub struct Solution {
    pub image: Image,
    pub kernel: Kernel,
    pub trace: Vec<TraceRecord>,
}

/// Ground truth used only for trace metrics.
#[derive(Clone, Copy, Debug)]
pub struct GroundTruth<'a> {
    pub image: &'a Image,
    pub kernel: &'a Kernel,
}

/// Solver state: both networks, their optimizers, the sampler stream and the
/// trace so far.
pub struct Solver {
    cfg: SolverConfig,
    y: Image,
    kernel_net: KernelGenerator,
    image_net: ImageRestorer,
    adam_mc: Adam,
    adam_ml: Adam,
    adam_x: Adam,
    sampler: ChaCha8Rng,
    iteration: usize,
    trace: Vec<TraceRecord>,
}

fn kernel_tensor(k: &Kernel) -> Tensor {
    Tensor::new(vec![1, 1, k.side(), k.side()], k.grid().to_vec()).expect("side is positive")
}

fn take_all(grads: &mut crate::ad::Gradients, vars: &[Var]) -> Vec<Vec<f64>> {
    vars.iter()
        .map(|v| grads.take(*v).expect("parameter leaves always receive a gradient"))
        .collect()
}

impl Solver {
    pub fn new(y: Image, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let (h, w, c) = y.dims();
        if h < MIN_LR_SIDE || w < MIN_LR_SIDE {
            return Err(Error::InvalidImage(format!(
                "LR image is {h}x{w}; both sides must be at least {MIN_LR_SIDE}"
            )));
        }
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut sampler = ChaCha8Rng::seed_from_u64(cfg.seed);
        sampler.set_stream(1);
        let image_net = ImageRestorer::new(h * cfg.scale, w * cfg.scale, c, cfg.restorer, &mut init)?;
        let kernel_net = KernelGenerator::new(cfg.kernel_side(), cfg.kernel_net, &mut init);
        let adam = AdamConfig::default();
        Ok(Self {
            adam_mc: Adam::new(kernel_net.params(), adam),
            adam_ml: Adam::new(kernel_net.params(), adam),
            adam_x: Adam::new(image_net.params(), adam),
            cfg,
            y,
            kernel_net,
            image_net,
            sampler,
            iteration: 0,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn observation(&self) -> &Image {
        &self.y
    }

    pub fn kernel_net(&self) -> &KernelGenerator {
        &self.kernel_net
    }

    pub fn image_net(&self) -> &ImageRestorer {
        &self.image_net
    }

    /// Completed outer iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn steps(&self) -> StepCounts {
        StepCounts {
            kernel_mc: self.adam_mc.steps(),
            kernel_ml: self.adam_ml.steps(),
            image: self.adam_x.steps(),
        }
    }

    pub fn image(&self) -> Result<Image> {
        self.image_net.image()
    }

    pub fn kernel(&self) -> Result<Kernel> {
        self.kernel_net.kernel()
    }

    /// `‖y − (x̂ ⊗ k̂)↓s‖²` for the current network outputs.
    pub fn reconstruction_error(&self) -> Result<f64> {
        reconstruction_error(&self.y, &self.image()?, &self.kernel()?, self.cfg.scale)
    }

    fn net_kernel(&self, g: &Graph, k: Var, phase: &'static str, at: &str) -> Result<Kernel> {
        let grid = g.value(k).data().to_vec();
        if grid.iter().any(|v| !v.is_finite()) {
            return Err(self.diverged(phase, format!("{at}: non-finite kernel estimate")));
        }
        Kernel::normalized(self.cfg.kernel_side(), grid)
    }

    fn diverged(&self, phase: &'static str, detail: String) -> Error {
        Error::Diverged {
            phase,
            iteration: self.iteration,
            detail,
        }
    }

    /// Samples `T` kernels, then takes `L` weighted Adam steps on the kernel
    /// network. A no-op when `no_mc` is set.
    pub fn mcka_phase(&mut self, x_current: &Image) -> Result<McReport> {
        let mut report = McReport::default();
        if self.cfg.no_mc {
            return Ok(report);
        }
        let side = self.cfg.kernel_side();
        report.batch = sample_kernel_batch(&mut self.sampler, self.cfg.samples, side, &self.cfg.ranges())?;
        let targets: Vec<Tensor> = report.batch.iter().map(kernel_tensor).collect();
        for l in 1..=self.cfg.mc_steps {
            let mut g = Graph::new();
            let (k, vars) = self.kernel_net.forward(&mut g)?;
            let k_est = self.net_kernel(&g, k, "MCKA", &format!("l={l}"))?;
            let mut weights = compute_mc_weights(
                &self.y,
                x_current,
                &report.batch,
                &k_est,
                self.cfg.scale,
                self.cfg.epsilon,
            )?;
            if self.cfg.normalize_weights {
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
            }
            let mut loss = None;
            for (tau, (target, &w)) in targets.iter().zip(&weights).enumerate() {
                let t = g.constant(target.clone());
                let d = g.sub(k, t)?;
                let n = g.sq_norm(d)?;
                let term = g.scale(n, w)?;
                if !g.value(term).item().is_finite() {
                    return Err(self.diverged("MCKA", format!("l={l}, tau={}, weight={w}", tau + 1)));
                }
                loss = Some(match loss {
                    None => term,
                    Some(acc) => g.add(acc, term)?,
                });
            }
            let loss = loss.expect("batch is nonempty");
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(self.diverged("MCKA", format!("l={l}, loss={value}")));
            }
            let mut grads = g.backward(loss)?;
            let grads = take_all(&mut grads, &vars);
            self.adam_mc
                .step(self.kernel_net.params_mut(), &grads, self.cfg.lr_mc)
                .map_err(|e| self.diverged("MCKA", format!("l={l}: {e}")))?;
            report.weights.push(weights);
            report.losses.push(value);
        }
        Ok(report)
    }

    /// `Q` meta-updates; each runs `P` image-network steps against the kernel
    /// `k^q` and then one kernel step on the weighted mean of their losses.
    /// With `no_meta` the kernel network is instead stepped after every
    /// image step.
    pub fn mlao_phase(&mut self) -> Result<MlReport> {
        let cfg = self.cfg.clone();
        let side = cfg.kernel_side();
        let p_count = cfg.inner_steps as f64;
        let mut report = MlReport::default();
        for q in 1..=cfg.meta_steps {
            let mut gk = Graph::new();
            let (mut k, mut kvars) = self.kernel_net.forward(&mut gk)?;
            let mut meta_seed = vec![0.0; side * side];
            let mut losses = Vec::with_capacity(cfg.inner_steps);
            let mut sigmas = Vec::with_capacity(cfg.inner_steps);
            for p in 1..=cfg.inner_steps {
                let kernel = self.net_kernel(&gk, k, "MLAO", &format!("q={q}, p={p}"))?;
                let mut g = Graph::new();
                let (x, xvars) = self.image_net.forward(&mut g)?;
                let x_img = Image::from_tensor(g.value(x))?;
                let sigma2 = estimate_noise_variance(&self.y, &x_img, &kernel, cfg.scale)?;
                let kv = g.param(gk.value(k).clone());
                let terms = hyper_laplacian_loss(&mut g, x, &self.y, kv, cfg.scale, sigma2, cfg.rho, cfg.eta)?;
                let value = g.value(terms.total).item();
                if !value.is_finite() {
                    return Err(self.diverged("MLAO", format!("q={q}, p={p}, loss={value}")));
                }
                let mut grads = g.backward(terms.total)?;
                let x_grads = take_all(&mut grads, &xvars);
                let k_grad = grads.take(kv).expect("kernel leaf receives a gradient");
                self.adam_x
                    .step(self.image_net.params_mut(), &x_grads, cfg.lr_x)
                    .map_err(|e| self.diverged("MLAO", format!("q={q}, p={p}: {e}")))?;
                losses.push(value);
                sigmas.push(sigma2);

                if cfg.no_meta {
                    let mut kg = gk.vjp(k, k_grad)?;
                    let grads = take_all(&mut kg, &kvars);
                    self.adam_ml
                        .step(self.kernel_net.params_mut(), &grads, cfg.lr_ml)
                        .map_err(|e| self.diverged("MLAO", format!("q={q}, p={p}: {e}")))?;
                    gk = Graph::new();
                    (k, kvars) = self.kernel_net.forward(&mut gk)?;
                } else {
                    let w = cfg.meta_weights[p - 1] / p_count;
                    meta_seed.iter_mut().zip(&k_grad).for_each(|(a, g)| *a += w * g);
                }
            }
            let meta = losses.iter().zip(&cfg.meta_weights).map(|(l, w)| w * l).sum::<f64>() / p_count;
            if !meta.is_finite() {
                return Err(self.diverged("MLAO", format!("q={q}, meta-loss={meta}")));
            }
            if !cfg.no_meta {
                let mut kg = gk.vjp(k, meta_seed)?;
                let grads = take_all(&mut kg, &kvars);
                self.adam_ml
                    .step(self.kernel_net.params_mut(), &grads, cfg.lr_ml)
                    .map_err(|e| self.diverged("MLAO", format!("q={q}: {e}")))?;
            }
            report.re_losses.push(losses);
            report.sigma2.push(sigmas);
            report.ml_losses.push(meta);
        }
        Ok(report)
    }

    fn metrics(&self, x: Option<&Image>, gt: Option<GroundTruth<'_>>) -> Result<(Option<f64>, Option<f64>)> {
        let Some(gt) = gt else {
            return Ok((None, None));
        };
        let k = kernel_psnr_with(&self.kernel()?, gt.kernel, self.cfg.kernel_peak)?;
        let x = match x {
            Some(x) => psnr(x, gt.image)?,
            None => psnr(&self.image()?, gt.image)?,
        };
        Ok((Some(k), Some(x)))
    }

    /// One outer iteration: MCKA then MLAO, appending two trace records.
    pub fn step(&mut self, gt: Option<GroundTruth<'_>>) -> Result<()> {
        self.iteration += 1;
        let i = self.iteration;

        let start = Instant::now();
        let from_net = !(self.cfg.bicubic_first_iter && i == 1);
        let x_current = if from_net {
            self.image()?
        } else {
            bicubic_upsample(&self.y, self.cfg.scale)
        };
        let mc = self.mcka_phase(&x_current)?;
        let (kernel_psnr, image_psnr) = self.metrics(from_net.then_some(&x_current), gt)?;
        self.trace.push(TraceRecord {
            i,
            phase: Phase::Mcka,
            loss_mc: mc.losses.last().copied(),
            loss_re: None,
            loss_ml: None,
            sigma2: None,
            kernel_psnr,
            image_psnr,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });

        let start = Instant::now();
        let ml = self.mlao_phase()?;
        let (kernel_psnr, image_psnr) = self.metrics(None, gt)?;
        self.trace.push(TraceRecord {
            i,
            phase: Phase::Mlao,
            loss_mc: None,
            loss_re: ml.re_losses.last().and_then(|r| r.last()).copied(),
            loss_ml: ml.ml_losses.last().copied(),
            sigma2: ml.sigma2.last().and_then(|s| s.last()).copied(),
            kernel_psnr,
            image_psnr,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        Ok(())
    }

    /// Runs the remaining outer iterations.
    pub fn run(&mut self, gt: Option<GroundTruth<'_>>) -> Result<()> {
        while self.iteration < self.cfg.iters {
            self.step(gt)?;
        }
        Ok(())
    }

    pub fn into_solution(self) -> Result<Solution> {
        Ok(Solution {
            image: self.image()?,
            kernel: self.kernel()?,
            trace: self.trace,
        })
    }
}

/// Runs all `I` outer iterations on `y` and returns `(x̂, k̂, trace)`.
pub fn solve(y: &Image, cfg: &SolverConfig, gt: Option<GroundTruth<'_>>) -> Result<Solution> {
    let mut solver = Solver::new(y.clone(), cfg.clone())?;
    solver.run(gt)?;
    solver.into_solution()
}
