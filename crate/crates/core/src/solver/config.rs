use std::fmt::Display;
use std::str::FromStr;

use crate::degradation::KernelPeak;
use crate::error::{Error, Result};
use crate::kernel::{kernel_side, SamplingRanges};
use crate::models::{KernelGeneratorArch, RestorerArch};

/// Every knob of the solver. `Default` gives the reference setting at scale 2.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Outer iterations `I`.
    pub iters: usize,
    /// Kernel-network steps per MCKA phase `L`.
    pub mc_steps: usize,
    /// Meta-updates per MLAO phase `Q`.
    pub meta_steps: usize,
    /// Image-network steps per meta-update `P`.
    pub inner_steps: usize,
    /// Monte Carlo kernels per MCKA phase `T`.
    pub samples: usize,
    pub lr_mc: f64,
    pub lr_ml: f64,
    pub lr_x: f64,
    /// Stabilizer added to every weight denominator.
    pub epsilon: f64,
    pub rho: f64,
    pub eta: f64,
    /// `ω^p` for each inner step; length must equal `inner_steps`.
    pub meta_weights: Vec<f64>,
    pub scale: usize,
    /// Explicit Monte Carlo sampling ranges; `None` derives them from
    /// `scale` and `ood_kernels`.
    pub sampling: Option<SamplingRanges>,
    pub seed: u64,
    pub no_mc: bool,
    pub no_meta: bool,
    pub ood_kernels: bool,
    /// Rescale Monte Carlo weights to sum to one.
    pub normalize_weights: bool,
    /// Use the bicubic upsample of `y` as the image estimate in the first
    /// MCKA phase.
    pub bicubic_first_iter: bool,
    pub kernel_peak: KernelPeak,
    pub restorer: RestorerArch,
    pub kernel_net: KernelGeneratorArch,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            iters: 100,
            mc_steps: 1,
            meta_steps: 5,
            inner_steps: 5,
            samples: 10,
            lr_mc: 1e-4,
            lr_ml: 1e-5,
            lr_x: 0.002,
            epsilon: 1e-5,
            rho: 1e-4,
            eta: 0.67,
            meta_weights: vec![1.0; 5],
            scale: 2,
            sampling: None,
            seed: 0,
            no_mc: false,
            no_meta: false,
            ood_kernels: false,
            normalize_weights: false,
            bicubic_first_iter: false,
            kernel_peak: KernelPeak::GroundTruthMax,
            restorer: RestorerArch::default(),
            kernel_net: KernelGeneratorArch::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("expected a boolean for `{key}`, got `{value}`"))),
    }
}

fn parse_pair(key: &str, value: &str) -> Result<(f64, f64)> {
    let (a, b) = value
        .split_once(',')
        .ok_or_else(|| Error::Config(format!("expected `lo,hi` for `{key}`, got `{value}`")))?;
    Ok((parse(key, a)?, parse(key, b)?))
}

impl SolverConfig {
    /// Kernel side `4s + 3`.
    pub fn kernel_side(&self) -> usize {
        kernel_side(self.scale)
    }

    pub fn ranges(&self) -> SamplingRanges {
        match self.sampling {
            Some(r) => r,
            None if self.ood_kernels => SamplingRanges::out_of_distribution(self.scale),
            None => SamplingRanges::in_range(self.scale),
        }
    }

    /// Sets `inner_steps` and resets the meta weights to all ones.
    pub fn with_inner_steps(mut self, p: usize) -> Self {
        self.inner_steps = p;
        self.meta_weights = vec![1.0; p];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("mc_steps", self.mc_steps),
            ("meta_steps", self.meta_steps),
            ("inner_steps", self.inner_steps),
            ("samples", self.samples),
            ("scale", self.scale),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        for (name, v) in [("lr_mc", self.lr_mc), ("lr_ml", self.lr_ml), ("lr_x", self.lr_x)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::Config(format!("rho must be >= 0, got {}", self.rho)));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.meta_weights.len() != self.inner_steps {
            return Err(Error::Config(format!(
                "meta_weights has {} entries but inner_steps is {}",
                self.meta_weights.len(),
                self.inner_steps
            )));
        }
        if self.meta_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("meta_weights must be finite and >= 0".into()));
        }
        let r = self.ranges();
        if !(r.width.0 > 0.0 && r.width.0 <= r.width.1) {
            return Err(Error::Config(format!("bad width range {:?}", r.width)));
        }
        Ok(())
    }

    /// Applies one `key = value` setting. Keys match [`Self::to_pairs`].
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "iters" => self.iters = parse(key, value)?,
            "mc_steps" => self.mc_steps = parse(key, value)?,
            "meta_steps" => self.meta_steps = parse(key, value)?,
            "inner_steps" => {
                let p: usize = parse(key, value)?;
                if p != self.meta_weights.len() {
                    self.meta_weights = vec![1.0; p];
                }
                self.inner_steps = p;
            }
            "samples" => self.samples = parse(key, value)?,
            "lr_mc" => self.lr_mc = parse(key, value)?,
            "lr_ml" => self.lr_ml = parse(key, value)?,
            "lr_x" => self.lr_x = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "rho" => self.rho = parse(key, value)?,
            "eta" => self.eta = parse(key, value)?,
            "meta_weights" => {
                self.meta_weights = value
                    .split(',')
                    .map(|w| parse(key, w))
                    .collect::<Result<_>>()?
            }
            "scale" => self.scale = parse(key, value)?,
            "sampling" => {
                self.sampling = match value.trim() {
                    "auto" => None,
                    _ => {
                        let f: Vec<&str> = value.split(';').collect();
                        let [w, a, j, v] = f[..] else {
                            return Err(Error::Config(format!(
                                "sampling expects `auto` or `wlo,whi;alo,ahi;jitter;vary`, got `{value}`"
                            )));
                        };
                        Some(SamplingRanges {
                            width: parse_pair(key, w)?,
                            angle: parse_pair(key, a)?,
                            center_jitter: parse(key, j)?,
                            vary_support: parse_bool(key, v)?,
                        })
                    }
                }
            }
            "seed" => self.seed = parse(key, value)?,
            "no_mc" => self.no_mc = parse_bool(key, value)?,
            "no_meta" => self.no_meta = parse_bool(key, value)?,
            "ood_kernels" => self.ood_kernels = parse_bool(key, value)?,
            "normalize_weights" => self.normalize_weights = parse_bool(key, value)?,
            "bicubic_first_iter" => self.bicubic_first_iter = parse_bool(key, value)?,
            "kernel_peak" => {
                self.kernel_peak = match value.trim() {
                    "gt_max" => KernelPeak::GroundTruthMax,
                    "unit" => KernelPeak::Unit,
                    other => return Err(Error::Config(format!("kernel_peak must be gt_max or unit, got `{other}`"))),
                }
            }
            "restorer_depth" => self.restorer.depth = parse(key, value)?,
            "restorer_channels" => self.restorer.channels = parse(key, value)?,
            "restorer_skip_channels" => self.restorer.skip_channels = parse(key, value)?,
            "restorer_input_channels" => self.restorer.input_channels = parse(key, value)?,
            "restorer_slope" => self.restorer.slope = parse(key, value)?,
            "restorer_noise_scale" => self.restorer.noise_scale = parse(key, value)?,
            "kernel_input_dim" => self.kernel_net.input_dim = parse(key, value)?,
            "kernel_hidden" => self.kernel_net.hidden = parse(key, value)?,
            "kernel_slope" => self.kernel_net.slope = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// All settings as `(key, value)` strings; feeding them back through
    /// [`Self::set`] reproduces `self` exactly.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        fn s(v: impl Display) -> String {
            v.to_string()
        }
        let sampling = match self.sampling {
            None => "auto".to_string(),
            Some(r) => format!(
                "{},{};{},{};{};{}",
                r.width.0, r.width.1, r.angle.0, r.angle.1, r.center_jitter, r.vary_support
            ),
        };
        let weights: Vec<String> = self.meta_weights.iter().map(f64::to_string).collect();
        vec![
            ("iters", s(self.iters)),
            ("mc_steps", s(self.mc_steps)),
            ("meta_steps", s(self.meta_steps)),
            ("inner_steps", s(self.inner_steps)),
            ("samples", s(self.samples)),
            ("lr_mc", s(self.lr_mc)),
            ("lr_ml", s(self.lr_ml)),
            ("lr_x", s(self.lr_x)),
            ("epsilon", s(self.epsilon)),
            ("rho", s(self.rho)),
            ("eta", s(self.eta)),
            ("meta_weights", weights.join(",")),
            ("scale", s(self.scale)),
            ("sampling", sampling),
            ("seed", s(self.seed)),
            ("no_mc", s(self.no_mc)),
            ("no_meta", s(self.no_meta)),
            ("ood_kernels", s(self.ood_kernels)),
            ("normalize_weights", s(self.normalize_weights)),
            ("bicubic_first_iter", s(self.bicubic_first_iter)),
            (
                "kernel_peak",
                match self.kernel_peak {
                    KernelPeak::GroundTruthMax => "gt_max".into(),
                    KernelPeak::Unit => "unit".into(),
                },
            ),
            ("restorer_depth", s(self.restorer.depth)),
            ("restorer_channels", s(self.restorer.channels)),
            ("restorer_skip_channels", s(self.restorer.skip_channels)),
            ("restorer_input_channels", s(self.restorer.input_channels)),
            ("restorer_slope", s(self.restorer.slope)),
            ("restorer_noise_scale", s(self.restorer.noise_scale)),
            ("kernel_input_dim", s(self.kernel_net.input_dim)),
            ("kernel_hidden", s(self.kernel_net.hidden)),
            ("kernel_slope", s(self.kernel_net.slope)),
        ]
    }

    /// Parses flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
