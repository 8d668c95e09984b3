//! Dense floating-point images stored as channel planes.

use std::fmt;

use crate::error::{Error, Result};

/// Height, width and channel count of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A finite-valued image with `channels` planes of `height * width` pixels.
///
/// Pixels are stored channel-major, then row-major within each plane, which
/// is also the payload order of the predictor wire protocol. Ingested images
/// are normalized to `[-1, 1]`; intermediate tensors (latents, noise) may
/// leave that range.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if shape.height == 0 || shape.width == 0 || shape.channels == 0 {
            return Err(Error::InvalidImage(format!("degenerate shape {shape}")));
        }
        if data.len() != shape.len() {
            return Err(Error::InvalidImage(format!(
                "{} values for shape {shape}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pixel {pos} is {}", data[pos])));
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        assert!(!shape.is_empty() && value.is_finite());
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    /// Single-channel image from row-major values.
    pub fn from_gray(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(Shape::new(height, width, 1), data)
    }

    /// Builds a single-channel image from a pixel function `f(row, col)`.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::from_gray(height, width, data).expect("pixel function produced invalid data")
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[f64] {
        let n = self.shape.plane_len();
        &self.data[channel * n..(channel + 1) * n]
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.shape.height + row) * self.shape.width + col]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, row: usize, col: usize, value: f64) {
        let idx = (channel * self.shape.height + row) * self.shape.width + col;
        self.data[idx] = value;
    }

    pub fn ensure_same_shape(&self, other: &ImageTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(self.shape, other.shape));
        }
        Ok(())
    }

    /// Elementwise map; the result must stay finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ImageTensor> {
        ImageTensor::new(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two same-shaped images.
    pub fn zip_map(&self, other: &ImageTensor, f: impl Fn(f64, f64) -> f64) -> Result<ImageTensor> {
        self.ensure_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        ImageTensor::new(self.shape, data)
    }

    /// Equal-weight channel mean, producing a single-channel image.
    pub fn luminance(&self) -> ImageTensor {
        if self.shape.channels == 1 {
            return self.clone();
        }
        let n = self.shape.plane_len();
        let k = self.shape.channels as f64;
        let data = (0..n)
            .map(|i| {
                (0..self.shape.channels)
                    .map(|c| self.data[c * n + i])
                    .sum::<f64>()
                    / k
            })
            .collect();
        ImageTensor {
            shape: Shape::new(self.shape.height, self.shape.width, 1),
            data,
        }
    }

    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(ImageTensor::new(Shape::new(2, 2, 1), vec![0.0; 3]).is_err());
        assert!(matches!(
            ImageTensor::new(Shape::new(1, 2, 1), vec![0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(ImageTensor::new(Shape::new(0, 2, 1), vec![]).is_err());
    }

    #[test]
    fn indexing_is_channel_major() {
        let img = ImageTensor::new(Shape::new(2, 3, 2), (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(img.get(0, 1, 2), 5.0);
        assert_eq!(img.get(1, 0, 0), 6.0);
        assert_eq!(img.plane(1), &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }

    #[test]
    fn luminance_is_channel_mean() {
        let img = ImageTensor::new(Shape::new(1, 2, 3), vec![0.0, 1.0, 0.3, 1.0, 0.6, 1.0]).unwrap();
        let lum = img.luminance();
        assert_eq!(lum.channels(), 1);
        assert!((lum.as_slice()[0] - 0.3).abs() < 1e-15);
        assert!((lum.as_slice()[1] - 1.0).abs() < 1e-15);
    }
}
