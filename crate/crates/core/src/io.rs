//! Files: 8-bit rasters (PNG, PGM, PPM), kernel matrices and run manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kernel::Kernel;

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "pgm" | "ppm" | "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(Error::file(path, "unsupported image extension (use .png, .pgm or .ppm)")),
    }
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Reads an 8-bit grayscale or color raster. Grayscale files give one channel,
/// everything else three.
pub fn read_image(path: &Path) -> Result<Image> {
    format_for(path)?;
    let img = image::open(path).map_err(|e| Error::file(path, e))?;
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_)
    );
    if gray {
        let g = img.to_luma8();
        let (w, h) = g.dimensions();
        Image::new(h as usize, w as usize, 1, g.pixels().map(|p| p[0] as f64 / 255.0).collect())
    } else {
        let rgb = img.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        Image::from_fn(h, w, 3, |y, x, c| rgb.get_pixel(x as u32, y as u32)[c] as f64 / 255.0)
    }
}

/// Writes an 8-bit raster; the format follows the extension. A `.pgm` target
/// stores the luma of color images.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let format = format_for(path)?;
    let wants_gray = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    let (h, w, c) = img.dims();
    let dynamic = if c == 1 || wants_gray {
        let src = if c == 1 { img.clone() } else { img.luma() };
        DynamicImage::ImageLuma8(GrayImage::from_fn(w as u32, h as u32, |x, y| {
            image::Luma([quantize(src.get(y as usize, x as usize, 0))])
        }))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_fn(w as u32, h as u32, |x, y| {
            let (y, x) = (y as usize, x as usize);
            image::Rgb([
                quantize(img.get(y, x, 0)),
                quantize(img.get(y, x, 1)),
                quantize(img.get(y, x, 2)),
            ])
        }))
    };
    dynamic.save_with_format(path, format).map_err(|e| Error::file(path, e))
}

/// Row-major text matrix, one row per line. Values are written with enough
/// digits to parse back exactly.
pub fn kernel_to_text(k: &Kernel) -> String {
    let n = k.side();
    let mut out = String::new();
    for row in 0..n {
        let line: Vec<String> = (0..n).map(|col| format!("{:?}", k.get(row, col))).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn kernel_from_text(text: &str) -> Result<Kernel> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| Error::InvalidKernel(format!("bad number `{v}`"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidKernel("kernel text must be a non-empty square matrix".into()));
    }
    Kernel::new(n, rows.concat())
}

pub fn write_kernel_text(path: &Path, k: &Kernel) -> Result<()> {
    fs::write(path, kernel_to_text(k)).map_err(|e| Error::file(path, e))
}

pub fn read_kernel_text(path: &Path) -> Result<Kernel> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    kernel_from_text(&text).map_err(|e| Error::file(path, e))
}

/// Grayscale picture of `k` scaled so its maximum is white, each kernel cell
/// drawn as a `zoom × zoom` block.
pub fn write_kernel_image(path: &Path, k: &Kernel, zoom: usize) -> Result<()> {
    let n = k.side();
    let zoom = zoom.max(1);
    let peak = k.max().max(f64::MIN_POSITIVE);
    let img = Image::from_fn(n * zoom, n * zoom, 1, |y, x, _| k.get(y / zoom, x / zoom) / peak)?;
    write_image(path, &img)
}

/// Record of one CLI run, written next to its outputs as JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, PathBuf>,
    pub outputs: BTreeMap<String, PathBuf>,
    pub seed: u64,
    pub wall_seconds: f64,
    pub metrics: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::file(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::file(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::file(path, e))
    }

    /// Paths in `outputs` that do not exist on disk.
    pub fn missing_outputs(&self) -> Vec<&Path> {
        self.outputs.values().map(PathBuf::as_path).filter(|p| !p.exists()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{gaussian_kernel, GaussianParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(c: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(c as u64);
        Image::from_fn(13, 17, c, |_, _, _| rng.random_range(0.0..1.0)).unwrap()
    }

    fn max_err(a: &Image, b: &Image) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn rasters_round_trip_within_one_level() {
        let dir = tempfile::tempdir().unwrap();
        for (name, c) in [("a.png", 3), ("b.png", 1), ("c.ppm", 3), ("d.pgm", 1)] {
            let img = random_image(c);
            let path = dir.path().join(name);
            write_image(&path, &img).unwrap();
            let back = read_image(&path).unwrap();
            assert_eq!(back.dims(), img.dims(), "{name}");
            assert!(max_err(&img, &back) <= 0.5 / 255.0 + 1e-12, "{name}");
            write_image(&path, &back).unwrap();
            assert_eq!(read_image(&path).unwrap(), back, "{name} second pass");
        }
    }

    #[test]
    fn unsupported_extension_names_the_path() {
        let err = write_image(Path::new("/tmp/x.bmpx"), &random_image(1)).unwrap_err();
        assert!(err.to_string().contains("x.bmpx"));
        assert!(read_image(Path::new("/definitely/missing.png")).is_err());
    }

    #[test]
    fn kernel_text_round_trip_is_exact() {
        let k = gaussian_kernel(
            &GaussianParams {
                sigma1: 1.3,
                sigma2: 0.7,
                theta: 0.9,
                center: (0.2, -0.4),
            },
            11,
        )
        .unwrap();
        assert_eq!(kernel_from_text(&kernel_to_text(&k)).unwrap(), k);
        assert!(kernel_from_text("1 0\n0").is_err());
        assert!(kernel_from_text("0.5 0.5\n0 0").is_err());
    }

    #[test]
    fn kernel_image_is_max_normalized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.png");
        write_kernel_image(&path, &Kernel::uniform(5).unwrap(), 3).unwrap();
        let img = read_image(&path).unwrap();
        assert_eq!(img.dims(), (15, 15, 1));
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest {
            command: "solve".into(),
            seed: 7,
            wall_seconds: 0.1 + 0.2,
            ..RunManifest::default()
        };
        m.metrics.insert("image_psnr".into(), 31.234567890123);
        m.outputs.insert("sr".into(), dir.path().join("nope.png"));
        let path = dir.path().join("manifest.json");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), m);
        assert_eq!(m.missing_outputs().len(), 1);
    }
}
