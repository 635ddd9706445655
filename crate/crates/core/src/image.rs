//! Dense row-major 2D images.

use crate::error::{Error, Result};
use crate::linalg;

/// A real-valued image stored row-major.
///
/// All entries are finite; constructors taking external data check this.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::dims(height * width, data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite pixel at index {i}"
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Builds an image without the finiteness scan. Length must still match.
    pub(crate) fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_vec(height, width, vec![0.0; height * width])
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        Self::from_vec(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::from_vec(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_shape(&self, height: usize, width: usize) -> Result<()> {
        if self.shape() != (height, width) {
            return Err(Error::dims(
                format!("{height}x{width}"),
                format!("{}x{}", self.height, self.width),
            ));
        }
        Ok(())
    }

    pub fn dot(&self, other: &Image) -> f64 {
        linalg::dot(&self.data, &other.data)
    }

    pub fn norm(&self) -> f64 {
        linalg::norm(&self.data)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Self::from_vec(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Circular shift: output(r, c) = self(r - dr, c - dc) with wrap-around.
    pub fn roll(&self, dr: isize, dc: isize) -> Image {
        let (h, w) = (self.height as isize, self.width as isize);
        Image::from_fn(self.height, self.width, |r, c| {
            let sr = (r as isize - dr).rem_euclid(h) as usize;
            let sc = (c as isize - dc).rem_euclid(w) as usize;
            self.get(sr, sc)
        })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
