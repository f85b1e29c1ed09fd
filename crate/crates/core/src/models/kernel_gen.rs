use rand::Rng;

use crate::ad::{Graph, Param, Tensor, Var};
use crate::error::Result;
use crate::kernel::Kernel;

/// Shallow fully connected generator `z_k → hidden → side²` with a softmax
/// head, so every output is a positive grid with unit mass.
#[derive(Clone, Debug)]
pub struct KernelGenerator {
    side: usize,
    z: Tensor,
    params: Vec<Param>,
    slope: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelGeneratorArch {
    pub input_dim: usize,
    pub hidden: usize,
    /// Negative-side slope of the hidden activation.
    pub slope: f64,
}

impl Default for KernelGeneratorArch {
    fn default() -> Self {
        Self {
            input_dim: 64,
            hidden: 1000,
            slope: 0.1,
        }
    }
}

pub(crate) fn uniform_init<R: Rng>(rng: &mut R, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let a = (1.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, || rng.random_range(-a..a)).expect("positive dims")
}

impl KernelGenerator {
    pub fn new<R: Rng>(side: usize, arch: KernelGeneratorArch, rng: &mut R) -> Self {
        let z = Tensor::from_fn(vec![1, arch.input_dim], || rng.random_range(0.0..1.0)).expect("positive dims");
        let out = side * side;
        let params = vec![
            Param::new("kernel.w1", uniform_init(rng, vec![arch.input_dim, arch.hidden], arch.input_dim)),
            Param::new("kernel.b1", uniform_init(rng, vec![1, arch.hidden], arch.input_dim)),
            Param::new("kernel.w2", uniform_init(rng, vec![arch.hidden, out], arch.hidden)),
            Param::new("kernel.b2", uniform_init(rng, vec![1, out], arch.hidden)),
        ];
        Self {
            side,
            z,
            params,
            slope: arch.slope,
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// The fixed latent input.
    pub fn input(&self) -> &Tensor {
        &self.z
    }

    /// Records the forward pass; returns the `[1, 1, side, side]` kernel and
    /// the parameter leaves in [`Self::params`] order.
    pub fn forward(&self, g: &mut Graph) -> Result<(Var, Vec<Var>)> {
        let vars: Vec<Var> = self.params.iter().map(|p| g.param(p.value.clone())).collect();
        let z = g.constant(self.z.clone());
        let h = g.matmul(z, vars[0])?;
        let h = g.add(h, vars[1])?;
        let h = g.leaky_relu(h, self.slope)?;
        let logits = g.matmul(h, vars[2])?;
        let logits = g.add(logits, vars[3])?;
        let k = g.softmax(logits)?;
        let k = g.reshape(k, vec![1, 1, self.side, self.side])?;
        Ok((k, vars))
    }

    /// Current kernel `G_k(z_k, φ_k)`.
    pub fn kernel(&self) -> Result<Kernel> {
        let mut g = Graph::new();
        let (k, _) = self.forward(&mut g)?;
        Kernel::new(self.side, g.value(k).data().to_vec())
    }
}
