//! Single-instance binary masks stored as a row-major bit set.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("mask grid must be at least 1x1, got {0}x{1}")]
    EmptyGrid(u32, u32),
    #[error("run lengths sum to {runs}, expected {pixels} pixels")]
    LengthMismatch { runs: u64, pixels: u64 },
    #[error("malformed run-length text: {0}")]
    MalformedRle(String),
    #[error("pixel ({0}, {1}) lies outside the grid")]
    OutOfBounds(u32, u32),
}

const WORD: usize = 64;

/// A set of pixels on a `width` x `height` grid.
///
/// The pixel count is cached and kept in sync by every mutating method.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
    area: u64,
}

impl BinaryMask {
    /// An empty mask. Panics if either side is zero.
    pub fn new(width: u32, height: u32) -> Self {
        Self::try_new(width, height).expect("mask grid must be non-empty")
    }

    pub fn try_new(width: u32, height: u32) -> Result<Self, MaskError> {
        if width == 0 || height == 0 {
            return Err(MaskError::EmptyGrid(width, height));
        }
        let len = width as usize * height as usize;
        Ok(Self {
            width,
            height,
            words: vec![0; len.div_ceil(WORD)],
            area: 0,
        })
    }

    pub fn full(width: u32, height: u32) -> Self {
        let mut m = Self::new(width, height);
        for i in 0..m.len() {
            m.insert_index(i);
        }
        m
    }

    /// Builds a mask from a predicate evaluated at every `(x, y)`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                if f(x, y) {
                    m.insert_index(y as usize * width as usize + x as usize);
                }
            }
        }
        m
    }

    /// Builds a mask from row-major flat indices. Duplicates are ignored.
    pub fn from_indices(width: u32, height: u32, indices: impl IntoIterator<Item = usize>) -> Result<Self, MaskError> {
        let mut m = Self::try_new(width, height)?;
        for i in indices {
            if i >= m.len() {
                return Err(MaskError::OutOfBounds(
                    (i % width as usize) as u32,
                    (i / width as usize) as u32,
                ));
            }
            m.insert_index(i);
        }
        Ok(m)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Number of grid cells, `width * height`.
    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.area == 0
    }

    pub fn area(&self) -> u64 {
        self.area
    }

    #[inline]
    pub fn contains_index(&self, i: usize) -> bool {
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height && self.contains_index(self.index(x, y))
    }

    #[inline]
    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub(crate) fn insert_index(&mut self, i: usize) {
        let w = &mut self.words[i / WORD];
        let bit = 1u64 << (i % WORD);
        if *w & bit == 0 {
            *w |= bit;
            self.area += 1;
        }
    }

    pub fn insert(&mut self, x: u32, y: u32) -> Result<(), MaskError> {
        if x >= self.width || y >= self.height {
            return Err(MaskError::OutOfBounds(x, y));
        }
        let i = self.index(x, y);
        self.insert_index(i);
        Ok(())
    }

    /// Row-major flat indices of set pixels, ascending.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * WORD + tz)
            })
        })
    }

    /// Set pixels as `(x, y)`, row-major.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.indices().map(move |i| ((i % w) as u32, (i / w) as u32))
    }

    /// First set pixel in row-major order as `(row, col)`.
    pub fn first_pixel(&self) -> Option<(u32, u32)> {
        self.pixels().next().map(|(x, y)| (y, x))
    }

    fn check_dims(&self, other: &Self) -> Result<(), MaskError> {
        if self.dims() != other.dims() {
            return Err(MaskError::DimensionMismatch(
                self.width,
                self.height,
                other.width,
                other.height,
            ));
        }
        Ok(())
    }

    pub fn intersection_area(&self, other: &Self) -> Result<u64, MaskError> {
        self.check_dims(other)?;
        Ok(self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum())
    }

    pub fn union(&self, other: &Self) -> Result<Self, MaskError> {
        self.check_dims(other)?;
        let words: Vec<u64> = self.words.iter().zip(&other.words).map(|(a, b)| a | b).collect();
        let area = words.iter().map(|w| w.count_ones() as u64).sum();
        Ok(Self {
            width: self.width,
            height: self.height,
            words,
            area,
        })
    }

    pub fn intersection(&self, other: &Self) -> Result<Self, MaskError> {
        self.check_dims(other)?;
        let words: Vec<u64> = self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect();
        let area = words.iter().map(|w| w.count_ones() as u64).sum();
        Ok(Self {
            width: self.width,
            height: self.height,
            words,
            area,
        })
    }

    /// In-place union. Dimensions must match.
    pub fn union_with(&mut self, other: &Self) -> Result<(), MaskError> {
        self.check_dims(other)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
        self.area = self.words.iter().map(|w| w.count_ones() as u64).sum();
        Ok(())
    }

    /// Inclusive bounding box `(x_min, y_min, x_max, y_max)`, `None` when empty.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let mut it = self.pixels();
        let (x0, y0) = it.next()?;
        let (mut xmin, mut ymin, mut xmax, mut ymax) = (x0, y0, x0, y0);
        for (x, y) in it {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
        Some((xmin, ymin, xmax, ymax))
    }
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryMask({}x{}, area={})", self.width, self.height, self.area)
    }
}

/// Intersection over union. Two empty masks agree perfectly and score 1.0.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, MaskError> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}
