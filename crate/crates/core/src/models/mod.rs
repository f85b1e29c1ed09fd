//! Trainable networks, the reconstruction loss, and parameter snapshots.

mod kernel_gen;
mod loss;
mod restorer;

pub use kernel_gen::{KernelGenerator, KernelGeneratorArch};
pub use loss::{
    degrade_graph, estimate_noise_variance, hyper_laplacian_loss, reconstruction_error, LossTerms,
    SIGMA2_FLOOR,
};
pub use restorer::{ImageRestorer, RestorerArch};

use std::fs;
use std::path::Path;

use crate::ad::{Param, Tensor};
use crate::error::{Error, Result};

/// Writes `params` as a little-endian `f64` blob plus a text manifest with one
/// `name dim0xdim1x...` line per tensor, in blob order.
pub fn save_params(params: &[Param], blob: &Path, manifest: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(params.iter().map(|p| p.value.len() * 8).sum());
    let mut text = String::new();
    for p in params {
        for v in p.value.data() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let dims: Vec<String> = p.value.shape().iter().map(usize::to_string).collect();
        text.push_str(&format!("{} {}\n", p.name, dims.join("x")));
    }
    fs::write(blob, bytes)?;
    fs::write(manifest, text)?;
    Ok(())
}

/// Inverse of [`save_params`].
pub fn load_params(blob: &Path, manifest: &Path) -> Result<Vec<Param>> {
    let bytes = fs::read(blob)?;
    let text = fs::read_to_string(manifest)?;
    let mut offset = 0;
    let mut params = Vec::new();
    for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |msg: &str| Error::file(manifest, format!("line {}: {msg}", lineno + 1));
        let (name, dims) = line.rsplit_once(' ').ok_or_else(|| bad("expected `name shape`"))?;
        let shape = dims
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("malformed shape"))?;
        let n: usize = shape.iter().product();
        let end = offset + n * 8;
        if end > bytes.len() {
            return Err(Error::file(blob, "blob shorter than manifest"));
        }
        let data = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        offset = end;
        params.push(Param::new(name, Tensor::new(shape, data)?));
    }
    if offset != bytes.len() {
        return Err(Error::file(blob, "blob longer than manifest"));
    }
    Ok(params)
}
