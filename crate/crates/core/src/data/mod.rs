//! Room ingestion, block partitioning, featurization and synthetic data.
//!
//! Room files hold one point per line, `x y z r g b label_id`, with `#`
//! comments; the file stem is `<room_type>_<index>`. A dataset directory
//! holds `classes.txt` (`label_id class_name` per line) and one
//! subdirectory of room files per area.

mod block;
mod ply;
mod room;
mod synth;

pub use block::{
    featurize_block, featurize_with_bounds, partition_blocks, resample_block, resample_indices, Block,
    BlockSample, FeatureMatrix, RoomBounds,
};
pub use ply::{default_color, export_ply, ply_text, ply_vertex_count, Palette};
pub use room::{
    list_areas, load_area, load_dataset, load_room, parse_room, parse_room_name, room_to_text, write_dataset,
    write_room, Area, ClassVocab, Room, RoomPoint, RoomType, S3DIS_ROOM_COUNTS, VOCAB_FILE,
};
pub use synth::{
    generate_synthetic_area, generate_synthetic_dataset, patch_point_count, room_patches, structure_patches,
    AreaSpec, FurnitureSpec, Mount, Patch, RoomTemplate, SyntheticSpec,
};

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: color component {value} outside 0-255")]
    Color { line: usize, value: i64 },
    #[error("line {line}: label {label} is not in the class vocabulary")]
    UnknownLabel { line: usize, label: usize },
    #[error("room `{0}` has no points")]
    EmptyRoom(String),
    #[error("cannot resample an empty block")]
    EmptyBlock,
    #[error("`{0}` is not a `<room_type>_<index>` room name")]
    RoomName(String),
    #[error("palette has no color for class {0}")]
    Palette(usize),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        source: Box<DataError>,
    },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (DataError::Io { .. } | DataError::InFile { .. }) => e,
            e => DataError::InFile {
                path: path.to_path_buf(),
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, without file context.
    pub fn root(&self) -> &DataError {
        match self {
            DataError::InFile { source, .. } => source.root(),
            e => e,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self.root(), DataError::Io { .. })
    }
}
