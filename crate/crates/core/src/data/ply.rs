use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Block, DataError};

/// Distinct base colors for the first classes; later ids cycle with a shift.
const PALETTE: [[u8; 3]; 13] = [
    [233, 229, 107],
    [95, 156, 196],
    [179, 116, 81],
    [241, 149, 131],
    [81, 163, 148],
    [77, 174, 84],
    [108, 135, 75],
    [41, 49, 101],
    [79, 79, 76],
    [223, 52, 52],
    [89, 47, 95],
    [81, 109, 114],
    [233, 233, 229],
];

pub fn default_color(class: usize) -> [u8; 3] {
    let base = PALETTE[class % PALETTE.len()];
    let shift = (class / PALETTE.len()) as u8;
    base.map(|c| c.wrapping_add(shift.wrapping_mul(37)))
}

/// Class id → RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Palette {
    colors: Vec<[u8; 3]>,
}

impl Palette {
    pub fn new(colors: Vec<[u8; 3]>) -> Self {
        Self { colors }
    }

    pub fn default_for(classes: usize) -> Self {
        Self::new((0..classes).map(default_color).collect())
    }

    pub fn color(&self, class: usize) -> Result<[u8; 3], DataError> {
        self.colors.get(class).copied().ok_or(DataError::Palette(class))
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Parses `class_id r g b` lines; ids must be contiguous from 0.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| DataError::Parse {
                line: i + 1,
                message: m.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err("expected `class_id r g b`"));
            }
            let id: usize = fields[0].parse().map_err(|_| err("bad class id"))?;
            let mut rgb = [0u8; 3];
            for k in 0..3 {
                rgb[k] = fields[k + 1].parse().map_err(|_| err("color components must be 0-255"))?;
            }
            entries.push((id, rgb));
        }
        entries.sort();
        let mut colors = Vec::new();
        for (id, rgb) in entries {
            if id != colors.len() {
                return Err(DataError::Palette(colors.len()));
            }
            colors.push(rgb);
        }
        Ok(Self::new(colors))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }
}

/// ASCII PLY text for a block, vertices colored by `labels`.
pub fn ply_text(block: &Block, labels: &[usize], palette: &Palette) -> Result<String, DataError> {
    if labels.len() != block.len() {
        return Err(DataError::Invalid(format!(
            "{} labels for a block of {} points",
            labels.len(),
            block.len()
        )));
    }
    let mut out = String::with_capacity(64 * (block.len() + 4));
    let _ = write!(
        out,
        "ply\nformat ascii 1.0\ncomment room {} cell {} {}\nelement vertex {}\n\
         property float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        block.room,
        block.cell.0,
        block.cell.1,
        block.len()
    );
    for (p, &l) in block.points.iter().zip(labels) {
        let [r, g, b] = palette.color(l)?;
        let _ = writeln!(out, "{:.3} {:.3} {:.3} {r} {g} {b}", p.xyz[0], p.xyz[1], p.xyz[2]);
    }
    Ok(out)
}

pub fn export_ply(block: &Block, labels: &[usize], palette: &Palette, path: &Path) -> Result<(), DataError> {
    let text = ply_text(block, labels, palette)?;
    fs::write(path, text).map_err(|e| DataError::io(path, e))
}

/// Vertex count declared in a PLY header.
pub fn ply_vertex_count(text: &str) -> Option<usize> {
    text.lines()
        .take_while(|l| *l != "end_header")
        .find_map(|l| l.strip_prefix("element vertex "))
        .and_then(|n| n.trim().parse().ok())
}
