//! Command-line front end: `synth`, `solve`, `eval`, `gradcheck`, `bench`.
//!
//! Exit status is 0 on success, 1 for usage and input errors and 2 when a
//! run aborts numerically or a gradient check fails.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ad::{grad_check_all, OpKind, GRAD_CHECK_TOLERANCE};
use crate::bench::{self, RunSummary, SuiteConfig, Thresholds, Variant, SUMMARY_HEADER};
use crate::degradation::{degrade, kernel_psnr_with, psnr, ssim, DegradationConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{
    read_image, read_kernel_text, write_image, write_kernel_image, write_kernel_text, RunManifest,
};
use crate::kernel::{gaussian_kernel, motion_kernel, sample_gaussian_params, Kernel, SamplingRanges};
use crate::solver::{write_trace, GroundTruth, Solver, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Smallest accepted HR side for `synth`.
pub const MIN_HR_SIDE: usize = 32;

const KERNEL_ZOOM: usize = 8;

#[derive(Parser, Debug)]
#[command(name = "mlmc", version, about = "Blind single-image super-resolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Degrade an HR image with a random kernel and write the LR observation.
    Synth(SynthArgs),
    /// Estimate the HR image and blur kernel from an LR observation.
    Solve(SolveArgs),
    /// Compare a result with ground truth.
    Eval(EvalArgs),
    /// Check analytic gradients of every differentiable op.
    Gradcheck(GradcheckArgs),
    /// Run the seeded scenario suite and print the summary table.
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. `--set lr_x=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Random seed [env: MLMC_SEED, default 0].
    #[arg(long, env = "MLMC_SEED", hide_env = true)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scale: Option<usize>,
    /// Outer iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Skip the Monte Carlo kernel phase.
    #[arg(long)]
    pub no_mc: bool,
    /// Update the kernel after every image step instead of meta-updates.
    #[arg(long)]
    pub no_meta: bool,
    /// Sample Monte Carlo kernels from the wider width range.
    #[arg(long)]
    pub ood_kernels: bool,
}

impl ConfigArgs {
    pub fn build(&self) -> Result<SolverConfig> {
        let mut cfg = SolverConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
            cfg.apply_text(&text).map_err(|e| Error::file(path, e))?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k, v)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(s) = self.scale {
            cfg.scale = s;
        }
        if let Some(i) = self.iters {
            cfg.iters = i;
        }
        cfg.no_mc |= self.no_mc;
        cfg.no_meta |= self.no_meta;
        cfg.ood_kernels |= self.ood_kernels;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelMode {
    /// Anisotropic Gaussian from the in-range family.
    Gaussian,
    /// Anisotropic Gaussian from the wider width range.
    Ood,
    /// Random camera-shake trajectory.
    Motion,
    /// Identity kernel, for debugging.
    Delta,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// HR input image (PNG, PGM or PPM).
    #[arg(long)]
    pub hr: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelMode::Gaussian)]
    pub kernel: KernelMode,
    /// Noise standard deviation as a fraction of the peak value.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// LR observation(s). Several inputs each get a subdirectory of `--out`.
    #[arg(long, required_unless_present = "from")]
    pub lr: Vec<PathBuf>,
    /// Take the LR and ground-truth paths from a `synth` manifest.
    #[arg(long, conflicts_with = "lr")]
    pub from: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth HR image, for metrics only.
    #[arg(long)]
    pub gt_hr: Option<PathBuf>,
    /// Ground-truth kernel text matrix, for metrics only.
    #[arg(long)]
    pub gt_kernel: Option<PathBuf>,
    /// Write zero wall-clock times to the trace so reruns are byte-identical.
    #[arg(long)]
    pub no_timing: bool,
    /// Also report PSNR on the luma channel.
    #[arg(long)]
    pub luma: bool,
    /// Images solved concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "from")]
    pub sr: Option<PathBuf>,
    #[arg(long, required_unless_present = "from")]
    pub hr: Option<PathBuf>,
    #[arg(long)]
    pub kest: Option<PathBuf>,
    #[arg(long)]
    pub kgt: Option<PathBuf>,
    /// Take all paths from a `solve` manifest.
    #[arg(long)]
    pub from: Option<PathBuf>,
    /// CSV file for the metric row.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also report PSNR on the luma channel.
    #[arg(long)]
    pub luma: bool,
    /// Kernel PSNR peak: `gt_max` or `unit`.
    #[arg(long, default_value = "gt_max")]
    pub kernel_peak: String,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, env = "MLMC_SEED", hide_env = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// Scale the backward pass of one op, to exercise the failure path.
    #[arg(long, hide = true)]
    pub inject_fault: Option<String>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// HR scene side.
    #[arg(long, default_value_t = 128)]
    pub side: usize,
    /// Comma-separated subset of full,no-mc,no-meta,noisy-prior,noisy-plain.
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    /// Directory for `summary.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Solve(a) => solve(&a),
        Command::Eval(a) => eval(&a),
        Command::Gradcheck(a) => gradcheck(&a),
        Command::Bench(a) => bench_cmd(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged { .. } | Error::NonFiniteGradient { .. } => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

fn largest_multiple(n: usize, m: usize) -> usize {
    n / m * m
}

fn synth(a: &SynthArgs) -> Result<i32> {
    let start = Instant::now();
    let cfg = a.config.build()?;
    let s = cfg.scale;
    let hr = read_image(&a.hr)?;
    let (h, w, _) = hr.dims();
    if h < MIN_HR_SIDE || w < MIN_HR_SIDE {
        return Err(Error::file(
            &a.hr,
            format!("image is {h}x{w}; both sides must be at least {MIN_HR_SIDE}"),
        ));
    }
    let m = s * cfg.restorer.multiple();
    let hr = hr.center_crop(largest_multiple(h, m), largest_multiple(w, m))?;
    let side = cfg.kernel_side();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut metrics = std::collections::BTreeMap::new();
    let kernel = match a.kernel {
        KernelMode::Gaussian | KernelMode::Ood => {
            let ranges = if a.kernel == KernelMode::Ood {
                SamplingRanges::out_of_distribution(s)
            } else {
                SamplingRanges::in_range(s)
            };
            let p = sample_gaussian_params(&mut rng, &ranges);
            metrics.insert("sigma1".to_string(), p.sigma1);
            metrics.insert("sigma2".to_string(), p.sigma2);
            metrics.insert("theta".to_string(), p.theta);
            gaussian_kernel(&p, side)?
        }
        KernelMode::Motion => motion_kernel(&mut rng, side, 4 * side)?,
        KernelMode::Delta => Kernel::delta(side)?,
    };
    let lr = degrade(&hr, &kernel, &DegradationConfig::new(s, a.noise, cfg.seed), &mut rng)?;

    create_dir(&a.out)?;
    let outputs = [
        ("hr", a.out.join("hr.png")),
        ("lr", a.out.join("lr.png")),
        ("kernel_text", a.out.join("kernel.txt")),
        ("kernel_image", a.out.join("kernel.png")),
    ];
    write_image(&outputs[0].1, &hr)?;
    write_image(&outputs[1].1, &lr)?;
    write_kernel_text(&outputs[2].1, &kernel)?;
    write_kernel_image(&outputs[3].1, &kernel, KERNEL_ZOOM)?;
    metrics.insert("noise_sigma".to_string(), a.noise);
    let manifest = RunManifest {
        command: "synth".into(),
        config: cfg.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        inputs: [("hr".to_string(), a.hr.clone())].into(),
        outputs: outputs.iter().map(|(k, p)| (k.to_string(), p.clone())).collect(),
        seed: cfg.seed,
        wall_seconds: start.elapsed().as_secs_f64(),
        metrics,
    };
    manifest.write(&a.out.join("manifest.json"))?;
    println!(
        "wrote {} ({}x{} -> {}x{}, kernel {side}x{side})",
        a.out.display(),
        hr.height(),
        hr.width(),
        lr.height(),
        lr.width()
    );
    Ok(EXIT_OK)
}

/// Crops `y` so that `s·h` and `s·w` are multiples of `multiple`, returning the
/// crop offset in LR pixels.
fn fit_observation(y: &Image, s: usize, multiple: usize) -> Result<(Image, usize, usize)> {
    let step = multiple / gcd(s, multiple);
    let (h, w, _) = y.dims();
    let (nh, nw) = (largest_multiple(h, step), largest_multiple(w, step));
    if nh == 0 || nw == 0 {
        return Err(Error::InvalidImage(format!("{h}x{w} is too small to crop to a multiple of {step}")));
    }
    let (top, left) = ((h - nh) / 2, (w - nw) / 2);
    Ok((y.crop(top, left, nh, nw)?, top, left))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct SolveJob {
    lr: PathBuf,
    out: PathBuf,
    gt_hr: Option<PathBuf>,
    gt_kernel: Option<PathBuf>,
}

fn solve(a: &SolveArgs) -> Result<i32> {
    let cfg = a.config.build()?;
    let mut jobs = Vec::new();
    if let Some(from) = &a.from {
        let m = RunManifest::read(from)?;
        let get = |k: &str| m.outputs.get(k).cloned();
        jobs.push(SolveJob {
            lr: get("lr").ok_or_else(|| Error::file(from, "manifest has no `lr` output"))?,
            out: a.out.clone(),
            gt_hr: a.gt_hr.clone().or_else(|| get("hr")),
            gt_kernel: a.gt_kernel.clone().or_else(|| get("kernel_text")),
        });
    } else if a.lr.len() == 1 {
        jobs.push(SolveJob {
            lr: a.lr[0].clone(),
            out: a.out.clone(),
            gt_hr: a.gt_hr.clone(),
            gt_kernel: a.gt_kernel.clone(),
        });
    } else {
        if a.gt_hr.is_some() || a.gt_kernel.is_some() {
            return Err(Error::Config("ground truth can only be given for a single input".into()));
        }
        for (n, lr) in a.lr.iter().enumerate() {
            let stem = lr.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            jobs.push(SolveJob {
                lr: lr.clone(),
                out: a.out.join(format!("{n:03}_{stem}")),
                gt_hr: None,
                gt_kernel: None,
            });
        }
    }
    let workers = a.jobs.clamp(1, jobs.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<()>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let n = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(n) else { break };
                let r = solve_one(job, &cfg, a);
                *slots[n].lock().expect("no panics while holding the lock") = Some(r);
            });
        }
    });
    let results = slots
        .into_iter()
        .map(|m| m.into_inner().expect("no poisoned slots").expect("every job ran"));
    let mut worst = EXIT_OK;
    for (job, r) in jobs.iter().zip(results) {
        if let Err(e) = r {
            eprintln!("error: {}: {e}", job.lr.display());
            worst = worst.max(exit_code(&e));
        }
    }
    Ok(worst)
}

fn solve_one(job: &SolveJob, cfg: &SolverConfig, a: &SolveArgs) -> Result<()> {
    let start = Instant::now();
    let s = cfg.scale;
    let y_full = read_image(&job.lr)?;
    let (y, top, left) = fit_observation(&y_full, s, cfg.restorer.multiple())?;
    if y.dims() != y_full.dims() {
        eprintln!(
            "note: cropped {}x{} observation to {}x{}",
            y_full.height(),
            y_full.width(),
            y.height(),
            y.width()
        );
    }
    let gt_hr = match &job.gt_hr {
        Some(p) => {
            let hr = read_image(p)?;
            let (h, w, _) = y.dims();
            Some(hr.crop(top * s, left * s, h * s, w * s).map_err(|e| Error::file(p, e))?)
        }
        None => None,
    };
    let gt_kernel = job.gt_kernel.as_deref().map(read_kernel_text).transpose()?;
    let gt = match (&gt_hr, &gt_kernel) {
        (Some(image), Some(kernel)) => Some(GroundTruth { image, kernel }),
        _ => None,
    };

    create_dir(&job.out)?;
    let paths = [
        ("sr", job.out.join("sr.png")),
        ("kernel_image", job.out.join("kernel.png")),
        ("kernel_text", job.out.join("kernel.txt")),
        ("trace", job.out.join("trace.csv")),
    ];
    let write_trace_file = |solver: &Solver| -> Result<()> {
        let mut rows = solver.trace().to_vec();
        if a.no_timing {
            rows.iter_mut().for_each(|r| r.wall_ms = 0.0);
        }
        let file = fs::File::create(&paths[3].1).map_err(|e| Error::file(&paths[3].1, e))?;
        write_trace(std::io::BufWriter::new(file), &rows)
    };

    let mut solver = Solver::new(y.clone(), cfg.clone())?;
    while solver.iteration() < cfg.iters {
        if let Err(e) = solver.step(gt) {
            write_trace_file(&solver)?;
            return Err(e);
        }
    }
    write_trace_file(&solver)?;
    let x = solver.image()?;
    let k = solver.kernel()?;
    write_image(&paths[0].1, &x)?;
    write_kernel_image(&paths[1].1, &k, KERNEL_ZOOM)?;
    write_kernel_text(&paths[2].1, &k)?;

    let mut metrics = std::collections::BTreeMap::new();
    metrics.insert("reconstruction_error".to_string(), solver.reconstruction_error()?);
    if let Some(hr) = &gt_hr {
        metrics.insert("image_psnr".into(), psnr(&x, hr)?);
        metrics.insert("image_ssim".into(), ssim(&x, hr)?);
        if a.luma {
            metrics.insert("luma_psnr".into(), psnr(&x.luma(), &hr.luma())?);
        }
    }
    if let Some(kgt) = &gt_kernel {
        metrics.insert("kernel_psnr".into(), kernel_psnr_with(&k, kgt, cfg.kernel_peak)?);
    }
    let mut inputs = std::collections::BTreeMap::from([("lr".to_string(), job.lr.clone())]);
    if let Some(p) = &job.gt_hr {
        inputs.insert("gt_hr".into(), p.clone());
    }
    if let Some(p) = &job.gt_kernel {
        inputs.insert("gt_kernel".into(), p.clone());
    }
    let manifest = RunManifest {
        command: "solve".into(),
        config: cfg.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        inputs,
        outputs: paths.iter().map(|(k, p)| (k.to_string(), p.clone())).collect(),
        seed: cfg.seed,
        wall_seconds: if a.no_timing { 0.0 } else { start.elapsed().as_secs_f64() },
        metrics: metrics.clone(),
    };
    manifest.write(&job.out.join("manifest.json"))?;
    let report: Vec<String> = metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    println!("{}: {}", job.out.display(), report.join(" "));
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<i32> {
    let manifest = a.from.as_deref().map(RunManifest::read).transpose()?;
    let pick = |explicit: &Option<PathBuf>, section: &str, key: &str| -> Option<PathBuf> {
        explicit.clone().or_else(|| {
            let m = manifest.as_ref()?;
            let map = if section == "outputs" { &m.outputs } else { &m.inputs };
            map.get(key).cloned()
        })
    };
    let sr_path = pick(&a.sr, "outputs", "sr").ok_or_else(|| Error::Config("no SR image given".into()))?;
    let hr_path = pick(&a.hr, "inputs", "gt_hr").ok_or_else(|| Error::Config("no HR image given".into()))?;
    let kest = pick(&a.kest, "outputs", "kernel_text");
    let kgt = pick(&a.kgt, "inputs", "gt_kernel");
    let peak = {
        let mut c = SolverConfig::default();
        c.set("kernel_peak", &a.kernel_peak)?;
        c.kernel_peak
    };

    let sr = read_image(&sr_path)?;
    let hr = read_image(&hr_path)?;
    if sr.dims() != hr.dims() {
        return Err(Error::shape(
            "eval",
            format!(
                "{} is {:?} but {} is {:?} (height, width, channels)",
                sr_path.display(),
                sr.dims(),
                hr_path.display(),
                hr.dims()
            ),
        ));
    }
    let mut header = vec!["image_psnr", "image_ssim"];
    let mut row = vec![psnr(&sr, &hr)?, ssim(&sr, &hr)?];
    if let (Some(e), Some(g)) = (&kest, &kgt) {
        header.push("kernel_psnr");
        row.push(kernel_psnr_with(&read_kernel_text(e)?, &read_kernel_text(g)?, peak)?);
    }
    if a.luma {
        header.push("luma_psnr");
        row.push(psnr(&sr.luma(), &hr.luma())?);
    }
    let text = format!(
        "{}\n{}\n",
        header.join(","),
        row.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(",")
    );
    print!("{text}");
    let out = a.out.clone().or_else(|| a.from.as_ref().and_then(|f| f.parent()).map(|d| d.join("eval.csv")));
    if let Some(out) = out {
        fs::write(&out, &text).map_err(|e| Error::file(&out, e))?;
    }
    Ok(EXIT_OK)
}

fn gradcheck(a: &GradcheckArgs) -> Result<i32> {
    if a.trials == 0 {
        return Err(Error::Config("--trials must be >= 1".into()));
    }
    let fault = a
        .inject_fault
        .as_deref()
        .map(|name| name.parse::<OpKind>().map(|k| (k, 1.5)))
        .transpose()?;
    let report = grad_check_all(a.seed, a.trials, fault);
    let mut out = std::io::stdout().lock();
    writeln!(out, "{:<12} {:>14}  result", "op", "max_rel_err")?;
    for (kind, err) in &report.rows {
        let verdict = if *err < GRAD_CHECK_TOLERANCE { "PASS" } else { "FAIL" };
        writeln!(out, "{:<12} {:>14.3e}  {verdict}", kind.name(), err)?;
    }
    let failed = report.failures().count();
    writeln!(
        out,
        "{} of {} ops within {GRAD_CHECK_TOLERANCE:e} ({} trials, seed {})",
        report.rows.len() - failed,
        report.rows.len(),
        a.trials,
        a.seed
    )?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_NUMERICAL })
}

fn parse_variant(name: &str) -> Result<Variant> {
    Variant::ALL
        .into_iter()
        .find(|v| v.to_string() == name.trim())
        .ok_or_else(|| Error::Config(format!("unknown variant `{name}`")))
}

fn bench_cmd(a: &BenchArgs) -> Result<i32> {
    let solver = {
        let mut c = a.config.clone();
        c.iters = c.iters.or(Some(30));
        c.build()?
    };
    let first = solver.seed;
    let suite = SuiteConfig {
        seeds: (first..first + a.seeds as u64).collect(),
        hr_side: a.side,
        solver,
    };
    let variants: Vec<Variant> = if a.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variants.iter().map(|v| parse_variant(v)).collect::<Result<_>>()?
    };
    println!("{SUMMARY_HEADER}");
    let runs = bench::run_suite(&suite, &variants, |r: &RunSummary| println!("{}", r.csv_row()))?;
    println!();
    let mut verdicts = bench::convergence_verdicts(&runs, Thresholds::default());
    verdicts.extend(bench::ablation_verdicts(&runs));
    verdicts.push(bench::noise_verdict(&runs));
    for v in verdicts.iter().filter(|v| v.total > 0) {
        println!("{v}");
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let mut text = format!("{SUMMARY_HEADER}\n");
        for r in &runs {
            text.push_str(&r.csv_row());
            text.push('\n');
        }
        let path = dir.join("summary.csv");
        fs::write(&path, text).map_err(|e| Error::file(&path, e))?;
    }
    Ok(EXIT_OK)
}
