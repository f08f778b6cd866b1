use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;

use super::{DataError, Room, RoomPoint, RoomType};
use crate::tensor::{Scalar, Tensor, TensorError};

/// A full-height column of a room's points over one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub room: String,
    pub room_type: RoomType,
    /// Grid index (i, j) along x and y.
    pub cell: (usize, usize),
    /// XY corner of the cell in room coordinates.
    pub origin: [f64; 2],
    pub size: f64,
    pub points: Vec<RoomPoint>,
    pub labels: Vec<usize>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn center(&self) -> [f64; 2] {
        [self.origin[0] + self.size / 2.0, self.origin[1] + self.size / 2.0]
    }

    /// The label seen most often; ties go to the smaller class id.
    pub fn dominant_label(&self) -> Option<usize> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_default() += 1;
        }
        counts
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .map(|(l, _)| l)
    }
}

/// Axis-aligned bounds of a room's points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl RoomBounds {
    pub fn of(points: &[RoomPoint]) -> Result<Self, DataError> {
        let first = points.first().ok_or_else(|| DataError::Invalid("no points".into()))?;
        let mut b = RoomBounds {
            min: first.xyz,
            max: first.xyz,
        };
        for p in points {
            for k in 0..3 {
                b.min[k] = b.min[k].min(p.xyz[k]);
                b.max[k] = b.max[k].max(p.xyz[k]);
            }
        }
        Ok(b)
    }

    /// `(v - min) / (max - min)`, or 0.5 when the extent on that axis is zero.
    pub fn normalize(&self, xyz: [f64; 3]) -> [f64; 3] {
        let mut out = [0.5; 3];
        for k in 0..3 {
            let extent = self.max[k] - self.min[k];
            if extent > 0.0 {
                out[k] = ((xyz[k] - self.min[k]) / extent).clamp(0.0, 1.0);
            }
        }
        out
    }
}

fn cell_index(v: f64, min: f64, size: f64) -> usize {
    ((v - min) / size).floor() as usize
}

/// Splits a room into a half-open XY grid anchored at the room minimum.
/// Empty cells are omitted; blocks come out in (i, j) order.
pub fn partition_blocks(room: &Room, block_size: f64) -> Result<Vec<Block>, DataError> {
    if !(block_size > 0.0 && block_size.is_finite()) {
        return Err(DataError::Invalid(format!("block size must be positive, got {block_size}")));
    }
    let bounds = RoomBounds::of(&room.points)?;
    let mut cells: BTreeMap<(usize, usize), Block> = BTreeMap::new();
    for (p, &l) in room.points.iter().zip(&room.labels) {
        let i = cell_index(p.xyz[0], bounds.min[0], block_size);
        let j = cell_index(p.xyz[1], bounds.min[1], block_size);
        let block = cells.entry((i, j)).or_insert_with(|| Block {
            room: room.name.clone(),
            room_type: room.room_type,
            cell: (i, j),
            origin: [
                bounds.min[0] + i as f64 * block_size,
                bounds.min[1] + j as f64 * block_size,
            ],
            size: block_size,
            points: Vec::new(),
            labels: Vec::new(),
        });
        block.points.push(*p);
        block.labels.push(l);
    }
    Ok(cells.into_values().collect())
}

/// Per-block network input: one row of 9 features per point.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub const COLUMNS: usize = 9;

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * Self::COLUMNS..(i + 1) * Self::COLUMNS]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            vec![self.rows, Self::COLUMNS],
            self.data.iter().map(|&v| T::lit(v)).collect(),
        )
        .expect("row-major P×9")
    }
}

/// Block-centered XYZ (Z unshifted), RGB / 255, room-normalized XYZ.
pub fn featurize_with_bounds(block: &Block, bounds: &RoomBounds) -> FeatureMatrix {
    let [cx, cy] = block.center();
    let mut data = Vec::with_capacity(block.len() * FeatureMatrix::COLUMNS);
    for p in &block.points {
        data.extend_from_slice(&[p.xyz[0] - cx, p.xyz[1] - cy, p.xyz[2]]);
        data.extend(p.rgb.iter().map(|&c| f64::from(c) / 255.0));
        data.extend_from_slice(&bounds.normalize(p.xyz));
    }
    FeatureMatrix {
        rows: block.len(),
        data,
    }
}

pub fn featurize_block(block: &Block, room: &Room) -> Result<FeatureMatrix, DataError> {
    if block.room != room.name {
        return Err(DataError::Invalid(format!(
            "block of room {} featurized against room {}",
            block.room, room.name
        )));
    }
    Ok(featurize_with_bounds(block, &RoomBounds::of(&room.points)?))
}

/// Row indices giving exactly `p` points: a uniform subset without
/// replacement when there are more, every point plus uniform draws with
/// replacement when there are fewer.
pub fn resample_indices<R: Rng + ?Sized>(count: usize, p: usize, rng: &mut R) -> Result<Vec<usize>, DataError> {
    if count == 0 {
        return Err(DataError::EmptyBlock);
    }
    if p == 0 {
        return Err(DataError::Invalid("points per block must be at least 1".into()));
    }
    Ok(match count.cmp(&p) {
        std::cmp::Ordering::Equal => (0..count).collect(),
        std::cmp::Ordering::Greater => index::sample(rng, count, p).into_vec(),
        std::cmp::Ordering::Less => {
            let mut idx: Vec<usize> = (0..count).collect();
            idx.extend((count..p).map(|_| rng.gen_range(0..count)));
            idx
        }
    })
}

pub fn resample_block<R: Rng + ?Sized>(block: &Block, p: usize, rng: &mut R) -> Result<Block, DataError> {
    let idx = resample_indices(block.len(), p, rng)?;
    Ok(Block {
        points: idx.iter().map(|&i| block.points[i]).collect(),
        labels: idx.iter().map(|&i| block.labels[i]).collect(),
        ..block.clone()
    })
}

/// Network-ready block: features and labels as tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSample<T> {
    pub features: Tensor<T>,
    pub labels: Vec<usize>,
}

impl<T: Scalar> BlockSample<T> {
    pub fn new(features: Tensor<T>, labels: Vec<usize>) -> Result<Self, TensorError> {
        if features.shape().first() != Some(&labels.len()) {
            return Err(TensorError::ShapeMismatch {
                op: "block_sample",
                left: features.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        Ok(Self { features, labels })
    }

    pub fn from_block(block: &Block, bounds: &RoomBounds) -> Self {
        Self {
            features: featurize_with_bounds(block, bounds).to_tensor(),
            labels: block.labels.clone(),
        }
    }

    pub fn points(&self) -> usize {
        self.labels.len()
    }
}
