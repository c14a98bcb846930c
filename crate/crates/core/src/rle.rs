//! Row-major run-length codec for [`BinaryMask`].
//!
//! Runs alternate between unset and set pixels and always start with an
//! unset run, which may have length zero. The text form is the run lengths
//! separated by single spaces, e.g. `"1 2"` for the 3x1 row `0 1 1`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mask::{BinaryMask, MaskError};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Rle {
    pub counts: Vec<u64>,
}

impl Rle {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

impl fmt::Display for Rle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for c in &self.counts {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{c}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for Rle {
    type Err = MaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let counts = s
            .split_ascii_whitespace()
            .map(|t| t.parse::<u64>().map_err(|_| MaskError::MalformedRle(t.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Rle { counts })
    }
}

pub fn rle_encode(mask: &BinaryMask) -> Rle {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for i in 0..mask.len() {
        let v = mask.contains_index(i);
        if v != current {
            counts.push(run);
            run = 0;
            current = v;
        }
        run += 1;
    }
    counts.push(run);
    Rle { counts }
}

pub fn rle_decode(rle: &Rle, width: u32, height: u32) -> Result<BinaryMask, MaskError> {
    let mut mask = BinaryMask::try_new(width, height)?;
    let pixels = mask.len() as u64;
    let total = rle.total();
    if total != pixels {
        return Err(MaskError::LengthMismatch { runs: total, pixels });
    }
    let mut pos = 0usize;
    for (k, &c) in rle.counts.iter().enumerate() {
        let end = pos + c as usize;
        if k % 2 == 1 {
            for i in pos..end {
                mask.insert_index(i);
            }
        }
        pos = end;
    }
    Ok(mask)
}

/// JSON form of a single mask: `{"counts": "...", "height": h, "width": w}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub counts: String,
    pub height: u32,
    pub width: u32,
}

impl RleMask {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        RleMask {
            counts: rle_encode(mask).to_string(),
            height: mask.height(),
            width: mask.width(),
        }
    }

    pub fn to_mask(&self) -> Result<BinaryMask, MaskError> {
        rle_decode(&self.counts.parse()?, self.width, self.height)
    }
}
