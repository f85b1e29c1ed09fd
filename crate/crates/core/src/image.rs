use crate::ad::Tensor;
use crate::error::{Error, Result};

/// `height x width x channels` image with values in `[0, 1]`.
///
/// Stored channel-planar (`[C][H][W]`) so it maps directly onto `[1, C, H, W]`
/// tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from planar data, clamping every value into `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::InvalidImage(format!(
                "unsupported geometry {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::InvalidImage(format!(
                "{height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        for v in &mut data {
            *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Channel-planar samples.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// `[1, C, H, W]` tensor view of the samples.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            vec![1, self.channels, self.height, self.width],
            self.data.clone(),
        )
        .expect("dims are positive")
    }

    /// Inverse of [`Image::to_tensor`]; accepts `[1, C, H, W]` or `[C, 1, H, W]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [1, c, h, w] | [c, 1, h, w] => Self::new(h, w, c, t.data().to_vec()),
            _ => Err(Error::InvalidImage(format!(
                "tensor {:?} is not a single image",
                t.shape()
            ))),
        }
    }

    /// Central crop of the given size.
    pub fn center_crop(&self, height: usize, width: usize) -> Result<Self> {
        let top = self.height.saturating_sub(height) / 2;
        let left = self.width.saturating_sub(width) / 2;
        self.crop(top, left, height, width)
    }

    /// The `height × width` window whose top-left sample is `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::InvalidImage(format!(
                "cannot crop {}x{} to {height}x{width} at ({top}, {left})",
                self.height, self.width
            )));
        }
        Self::from_fn(height, width, self.channels, |y, x, c| self.get(y + top, x + left, c))
    }

    /// Rec. 601 luma as a single-channel image; grayscale images are returned as is.
    pub fn luma(&self) -> Self {
        if self.channels == 1 {
            return self.clone();
        }
        Self::from_fn(self.height, self.width, 1, |y, x, _| {
            0.299 * self.get(y, x, 0) + 0.587 * self.get(y, x, 1) + 0.114 * self.get(y, x, 2)
        })
        .expect("same geometry")
    }

    pub(crate) fn same_shape(&self, other: &Image, what: &'static str) -> Result<()> {
        if self.dims() == other.dims() {
            Ok(())
        } else {
            Err(Error::shape(
                what,
                format!("{:?} vs {:?} (height, width, channels)", self.dims(), other.dims()),
            ))
        }
    }
}
