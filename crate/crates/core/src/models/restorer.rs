use rand::Rng;

use crate::ad::{ConvSpec, Graph, PadMode, Param, Tensor, Var};
use crate::error::{Error, Result};
use crate::image::Image;

/// Encoder-decoder with skip connections, DIP style.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RestorerArch {
    /// Number of stride-2 levels; HR sides must be divisible by `2^depth`.
    pub depth: usize,
    pub channels: usize,
    pub skip_channels: usize,
    pub input_channels: usize,
    pub slope: f64,
    /// Upper bound of the `Uniform(0, noise_scale)` fixed input.
    pub noise_scale: f64,
}

impl Default for RestorerArch {
    fn default() -> Self {
        Self {
            depth: 3,
            channels: 32,
            skip_channels: 4,
            input_channels: 16,
            slope: 0.1,
            noise_scale: 0.1,
        }
    }
}

impl RestorerArch {
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }
}

/// Image restorer `G_x(z_x, φ_x)` producing an HR image in `(0, 1)`.
#[derive(Clone, Debug)]
pub struct ImageRestorer {
    arch: RestorerArch,
    height: usize,
    width: usize,
    out_channels: usize,
    z: Tensor,
    params: Vec<Param>,
}

struct Level {
    down: (usize, usize),
    conv: (usize, usize),
    skip: (usize, usize),
    up: (usize, usize),
    up_mix: (usize, usize),
}

fn conv_param<R: Rng>(
    params: &mut Vec<Param>,
    rng: &mut R,
    name: &str,
    out_c: usize,
    in_c: usize,
    k: usize,
    slope: f64,
) -> Result<(usize, usize)> {
    let fan_in = (in_c * k * k) as f64;
    let bound = (6.0 / ((1.0 + slope * slope) * fan_in)).sqrt();
    let w = Tensor::from_fn(vec![out_c, in_c, k, k], || rng.random_range(-bound..bound))?;
    params.push(Param::new(format!("{name}.w"), w));
    params.push(Param::new(format!("{name}.b"), Tensor::zeros(vec![out_c])?));
    Ok((params.len() - 2, params.len() - 1))
}

impl ImageRestorer {
    pub fn new<R: Rng>(
        height: usize,
        width: usize,
        out_channels: usize,
        arch: RestorerArch,
        rng: &mut R,
    ) -> Result<Self> {
        let m = arch.multiple();
        if height == 0 || width == 0 || !height.is_multiple_of(m) || !width.is_multiple_of(m) {
            return Err(Error::InvalidImage(format!(
                "restorer needs HR sides divisible by {m}; pad or crop {height}x{width} to {}x{}",
                height.div_ceil(m).max(1) * m,
                width.div_ceil(m).max(1) * m
            )));
        }
        if arch.depth == 0 {
            return Err(Error::Config("restorer depth must be >= 1".into()));
        }
        let z = Tensor::from_fn(vec![1, arch.input_channels, height, width], || {
            rng.random_range(0.0..arch.noise_scale)
        })?;
        let mut params = Vec::new();
        let (c, s) = (arch.channels, arch.skip_channels);
        for l in 1..=arch.depth {
            let in_c = if l == 1 { arch.input_channels } else { c };
            conv_param(&mut params, rng, &format!("enc{l}.down"), c, in_c, 3, arch.slope)?;
            conv_param(&mut params, rng, &format!("enc{l}.conv"), c, c, 3, arch.slope)?;
            conv_param(&mut params, rng, &format!("skip{l}"), s, in_c, 1, arch.slope)?;
            conv_param(&mut params, rng, &format!("dec{l}.conv"), c, c + s, 3, arch.slope)?;
            conv_param(&mut params, rng, &format!("dec{l}.mix"), c, c, 1, arch.slope)?;
        }
        conv_param(&mut params, rng, "out", out_channels, c, 1, arch.slope)?;
        Ok(Self {
            arch,
            height,
            width,
            out_channels,
            z,
            params,
        })
    }

    pub fn arch(&self) -> &RestorerArch {
        &self.arch
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.out_channels)
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn input(&self) -> &Tensor {
        &self.z
    }

    fn level(&self, l: usize) -> Level {
        let base = (l - 1) * 10;
        Level {
            down: (base, base + 1),
            conv: (base + 2, base + 3),
            skip: (base + 4, base + 5),
            up: (base + 6, base + 7),
            up_mix: (base + 8, base + 9),
        }
    }

    /// Records the forward pass; returns the `[1, C, H, W]` output and the
    /// parameter leaves in [`Self::params`] order.
    pub fn forward(&self, g: &mut Graph) -> Result<(Var, Vec<Var>)> {
        let vars: Vec<Var> = self.params.iter().map(|p| g.param(p.value.clone())).collect();
        let slope = self.arch.slope;
        let zero3 = ConvSpec::same(3, PadMode::Zero);
        let down3 = ConvSpec::new(2, 1, PadMode::Zero);
        let one = ConvSpec::new(1, 0, PadMode::Zero);
        let conv = |g: &mut Graph, x: Var, (w, b): (usize, usize), spec: ConvSpec| -> Result<Var> {
            let y = g.conv2d(x, vars[w], Some(vars[b]), spec)?;
            g.leaky_relu(y, slope)
        };

        let mut x = g.constant(self.z.clone());
        let mut skips = Vec::with_capacity(self.arch.depth);
        for l in 1..=self.arch.depth {
            let lv = self.level(l);
            skips.push(conv(g, x, lv.skip, one)?);
            let d = conv(g, x, lv.down, down3)?;
            x = conv(g, d, lv.conv, zero3)?;
        }
        for l in (1..=self.arch.depth).rev() {
            let lv = self.level(l);
            let u = g.upsample(x, 2)?;
            let cat = g.concat(&[u, skips[l - 1]])?;
            let d = conv(g, cat, lv.up, zero3)?;
            x = conv(g, d, lv.up_mix, one)?;
        }
        let n = self.params.len();
        let logits = g.conv2d(x, vars[n - 2], Some(vars[n - 1]), one)?;
        let out = g.sigmoid(logits)?;
        Ok((out, vars))
    }

    /// Current output `G_x(z_x, φ_x)`.
    pub fn image(&self) -> Result<Image> {
        let mut g = Graph::new();
        let (x, _) = self.forward(&mut g)?;
        Image::from_tensor(g.value(x))
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}
