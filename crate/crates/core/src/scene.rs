//! Procedural test scenes with edges, smooth shading and texture.

use rand::Rng;

use crate::error::Result;
use crate::image::Image;

enum Shape {
    Disk { cy: f64, cx: f64, r: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
    Stripes { freq: f64, angle: f64 },
}

struct Layer {
    shape: Shape,
    color: [f64; 3],
    alpha: f64,
}

impl Layer {
    fn coverage(&self, y: f64, x: f64) -> f64 {
        match self.shape {
            Shape::Disk { cy, cx, r } => {
                let d = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
                (r - d + 0.5).clamp(0.0, 1.0)
            }
            Shape::Rect { y0, x0, y1, x1 } => {
                let inside = |a: f64, lo: f64, hi: f64| (a - lo + 0.5).min(hi - a + 0.5).clamp(0.0, 1.0);
                inside(y, y0, y1) * inside(x, x0, x1)
            }
            Shape::Stripes { freq, angle } => {
                let t = y * angle.sin() + x * angle.cos();
                0.5 + 0.5 * (t * freq).sin()
            }
        }
    }
}

/// A `height × width` scene of overlapping disks, rectangles and stripe
/// patches over a shaded background. `channels` is 1 or 3.
pub fn synthetic_scene<R: Rng>(rng: &mut R, height: usize, width: usize, channels: usize) -> Result<Image> {
    let (h, w) = (height as f64, width as f64);
    let color = |rng: &mut R| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
    let base = color(rng);
    let tilt = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    let mut layers = Vec::new();
    for _ in 0..rng.random_range(10..16) {
        let shape = match rng.random_range(0..5) {
            0 | 1 => Shape::Disk {
                cy: rng.random_range(0.0..h),
                cx: rng.random_range(0.0..w),
                r: rng.random_range(0.05..0.25) * h.min(w),
            },
            2 | 3 => {
                let (cy, cx) = (rng.random_range(0.0..h), rng.random_range(0.0..w));
                let (hh, hw) = (rng.random_range(0.05..0.3) * h, rng.random_range(0.05..0.3) * w);
                Shape::Rect {
                    y0: cy - hh,
                    x0: cx - hw,
                    y1: cy + hh,
                    x1: cx + hw,
                }
            }
            _ => Shape::Stripes {
                freq: rng.random_range(0.3..1.2),
                angle: rng.random_range(0.0..std::f64::consts::PI),
            },
        };
        let alpha = match shape {
            Shape::Stripes { .. } => rng.random_range(0.15..0.35),
            _ => rng.random_range(0.6..1.0),
        };
        layers.push(Layer {
            shape,
            color: color(rng),
            alpha,
        });
    }
    let mut planes = vec![[0.0; 3]; height * width];
    for (idx, px) in planes.iter_mut().enumerate() {
        let (y, x) = ((idx / width) as f64, (idx % width) as f64);
        let shade = 0.8 + tilt.0 * (y / h - 0.5) + tilt.1 * (x / w - 0.5);
        let mut c = base.map(|v| 0.2 + 0.6 * v * shade);
        for l in &layers {
            let a = l.alpha * l.coverage(y, x);
            for ch in 0..3 {
                c[ch] = (1.0 - a) * c[ch] + a * l.color[ch];
            }
        }
        *px = c;
    }
    Image::from_fn(height, width, channels, |y, x, ch| {
        let c = planes[y * width + x];
        if channels == 1 {
            0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
        } else {
            c[ch]
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scenes_are_seeded_and_textured() {
        let make = |s| synthetic_scene(&mut ChaCha8Rng::seed_from_u64(s), 64, 48, 3).unwrap();
        let a = make(1);
        assert_eq!(a, make(1));
        assert_ne!(a, make(2));
        assert_eq!(a.dims(), (64, 48, 3));
        let mean = a.data().iter().sum::<f64>() / a.data().len() as f64;
        let var = a.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.data().len() as f64;
        assert!(var > 1e-3, "variance {var}");
    }
}
