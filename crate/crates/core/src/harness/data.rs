use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub const IDX_UBYTE_3D_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub pixels: Vec<f64>,
    /// Subpopulation tag for generated data; `None` for ingested files.
    pub fine_detail: Option<bool>,
}

/// Balanced member / held-out split of square-or-rectangular images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub height: usize,
    pub width: usize,
    pub members: Vec<Sample>,
    pub held_out: Vec<Sample>,
    pub warnings: Vec<String>,
}

impl DatasetSplit {
    /// Shuffles samples with `seed` and puts `⌊n/2⌋` of them in the member set.
    pub fn balanced(height: usize, width: usize, mut samples: Vec<Sample>, seed: u64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput("need at least two samples to split".into()));
        }
        samples.shuffle(&mut RngStream::new(seed, u64::MAX).rng());
        let mut warnings = Vec::new();
        let n = samples.len();
        if n % 2 == 1 {
            warnings.push(format!(
                "odd sample count {n}: {} members, {} held-out",
                n / 2,
                n - n / 2
            ));
        }
        let mut held_out = samples.split_off(n / 2);
        let mut members = samples;
        members.sort_by_key(|s| s.id);
        held_out.sort_by_key(|s| s.id);
        Ok(Self {
            height,
            width,
            members,
            held_out,
            warnings,
        })
    }

    /// Members then held-out, each paired with its membership label.
    pub fn labeled(&self) -> impl Iterator<Item = (&Sample, bool)> {
        self.members
            .iter()
            .map(|s| (s, true))
            .chain(self.held_out.iter().map(|s| (s, false)))
    }

    pub fn len(&self) -> usize {
        self.members.len() + self.held_out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Grating frequency of the fine subpopulation, in cycles per image width.
const TEXTURE_CYCLES: f64 = 2.5;

pub const GENERATORS: &[&str] = &["two-scale-blobs"];

/// Generates a registered synthetic dataset.
///
/// `two-scale-blobs` draws a small smooth Gaussian bump on even ids and a
/// broad bump carrying a grating anchored at its center on odd ids, giving a
/// low-detail and a high-detail subpopulation over the same four parameters
/// (center, width, amplitude).
pub fn generate_synthetic(generator: &str, samples: usize, side: usize, seed: u64) -> Result<DatasetSplit> {
    if !GENERATORS.contains(&generator) {
        return Err(Error::Config(format!(
            "unknown generator `{generator}` (known: {})",
            GENERATORS.join(", ")
        )));
    }
    if side == 0 {
        return Err(Error::Config("image side must be positive".into()));
    }
    let all = (0..samples as u64)
        .map(|id| {
            let fine = id % 2 == 1;
            Sample {
                id,
                pixels: two_scale_blob(side, fine, RngStream::new(seed, id)),
                fine_detail: Some(fine),
            }
        })
        .collect();
    DatasetSplit::balanced(side, side, all, seed)
}

fn two_scale_blob(side: usize, fine: bool, stream: RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    let cx = rng.random_range(0.3..0.7);
    let cy = rng.random_range(0.3..0.7);
    let sigma: f64 = if fine {
        rng.random_range(0.18..0.28)
    } else {
        rng.random_range(0.06..0.10)
    };
    let amp = rng.random_range(0.6..1.0);
    let n = side as f64;
    let mut pixels = Vec::with_capacity(side * side);
    for row in 0..side {
        for col in 0..side {
            let du = (col as f64 + 0.5) / n - cx;
            let dv = (row as f64 + 0.5) / n - cy;
            let mut value = amp * (-(du * du + dv * dv) / (2.0 * sigma * sigma)).exp();
            if fine {
                value *= 0.5 + 0.5 * (2.0 * PI * TEXTURE_CYCLES * (du + dv) * FRAC_1_SQRT_2).cos();
            }
            pixels.push(2.0 * value - 1.0);
        }
    }
    pixels
}

/// Images parsed from an IDX file, scaled to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<Vec<f64>>,
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxImages> {
    let word = |offset: usize| -> Result<usize> {
        bytes
            .get(offset..offset + 4)
            .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")) as usize)
            .ok_or(Error::Format {
                offset: bytes.len(),
                message: "header truncated".into(),
            })
    };
    let magic = word(0)? as u32;
    if magic != IDX_UBYTE_3D_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic 0x{magic:08x}, expected 0x{IDX_UBYTE_3D_MAGIC:08x}"),
        });
    }
    let (count, rows, cols) = (word(4)?, word(8)?, word(12)?);
    let per_image = rows * cols;
    let expected = count
        .checked_mul(per_image)
        .and_then(|n| n.checked_add(16))
        .ok_or(Error::Format {
            offset: 4,
            message: "header dimensions overflow".into(),
        })?;
    if bytes.len() != expected {
        return Err(Error::Format {
            offset: bytes.len().min(expected),
            message: format!(
                "header declares {count}x{rows}x{cols} ({expected} bytes), file has {} bytes",
                bytes.len()
            ),
        });
    }
    let images = if per_image == 0 {
        vec![Vec::new(); count]
    } else {
        bytes[16..]
            .chunks_exact(per_image)
            .map(|img| img.iter().map(|&p| p as f64 / 255.0 * 2.0 - 1.0).collect())
            .collect()
    };
    Ok(IdxImages { rows, cols, images })
}

pub fn ingest_idx(path: &Path) -> Result<IdxImages> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_idx(&bytes)
}

/// Pads images with background (`-1`) up to power-of-two sides.
pub fn pad_to_power_of_two(images: &IdxImages) -> (usize, usize, Vec<Vec<f64>>) {
    let h = images.rows.next_power_of_two();
    let w = images.cols.next_power_of_two();
    let padded = images
        .images
        .iter()
        .map(|img| {
            let mut out = vec![-1.0; h * w];
            for r in 0..images.rows {
                out[r * w..r * w + images.cols].copy_from_slice(&img[r * images.cols..(r + 1) * images.cols]);
            }
            out
        })
        .collect();
    (h, w, padded)
}
