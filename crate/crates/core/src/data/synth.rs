//! Procedural indoor rooms with exact per-point labels.
//!
//! A room is a box with floor, ceiling and four walls, plus furniture: boxes
//! standing on the floor (top and four sides are sampled) and thin panels
//! mounted on a wall. Every planar patch receives `round(area × density)`
//! uniformly placed points, colored from its class base color with a
//! per-object offset and per-point noise.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Area, ClassVocab, DataError, Room, RoomPoint, RoomType};
use crate::seed::stream_rng;

fn default_density() -> f64 {
    60.0
}
fn default_object_jitter() -> f64 {
    30.0
}
fn default_point_noise() -> f64 {
    12.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mount {
    #[default]
    Floor,
    Wall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureSpec {
    pub class: String,
    /// Inclusive range of instances per room.
    pub count: [usize; 2],
    /// Box extent range (x, y, z); for wall panels x is the width along the
    /// wall and z the height, y is ignored.
    pub size_min: [f64; 3],
    pub size_max: [f64; 3],
    #[serde(default)]
    pub mount: Mount,
    /// Height range of a wall panel's lower edge.
    #[serde(default)]
    pub elevation: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomTemplate {
    pub room_type: RoomType,
    pub size_min: [f64; 3],
    pub size_max: [f64; 3],
    #[serde(default)]
    pub furniture: Vec<FurnitureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSpec {
    pub name: String,
    /// Room type and number of rooms of that type.
    pub rooms: Vec<(RoomType, usize)>,
}

/// Everything needed to generate a synthetic dataset. Loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Class vocabulary; must contain `floor`, `ceiling` and `wall`.
    pub classes: Vec<String>,
    /// Points per square meter of surface.
    #[serde(default = "default_density")]
    pub density: f64,
    /// Half-width of the uniform color offset applied per object.
    #[serde(default = "default_object_jitter")]
    pub object_jitter: f64,
    /// Half-width of the uniform color noise applied per point.
    #[serde(default = "default_point_noise")]
    pub point_noise: f64,
    /// Base colors by class name; classes not listed use the default palette.
    #[serde(default)]
    pub class_colors: BTreeMap<String, [u8; 3]>,
    pub templates: Vec<RoomTemplate>,
    pub areas: Vec<AreaSpec>,
}

/// An axis-aligned rectangle `origin + a·u + b·v`, a and b in [0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub origin: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
    pub label: usize,
}

impl Patch {
    pub fn area(&self) -> f64 {
        norm(self.u) * norm(self.v)
    }
}

fn norm(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Millimeter grid, so the text format round-trips exactly.
fn quantize(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn uniform3(rng: &mut ChaCha8Rng, lo: [f64; 3], hi: [f64; 3]) -> [f64; 3] {
    [uniform(rng, lo[0], hi[0]), uniform(rng, lo[1], hi[1]), uniform(rng, lo[2], hi[2])]
}

/// Floor, ceiling and the four walls of a `w × l × h` room at the origin.
pub fn structure_patches(dims: [f64; 3], floor: usize, ceiling: usize, wall: usize) -> Vec<Patch> {
    let [w, l, h] = dims;
    vec![
        Patch { origin: [0.0, 0.0, 0.0], u: [w, 0.0, 0.0], v: [0.0, l, 0.0], label: floor },
        Patch { origin: [0.0, 0.0, h], u: [w, 0.0, 0.0], v: [0.0, l, 0.0], label: ceiling },
        Patch { origin: [0.0, 0.0, 0.0], u: [w, 0.0, 0.0], v: [0.0, 0.0, h], label: wall },
        Patch { origin: [0.0, l, 0.0], u: [w, 0.0, 0.0], v: [0.0, 0.0, h], label: wall },
        Patch { origin: [0.0, 0.0, 0.0], u: [0.0, l, 0.0], v: [0.0, 0.0, h], label: wall },
        Patch { origin: [w, 0.0, 0.0], u: [0.0, l, 0.0], v: [0.0, 0.0, h], label: wall },
    ]
}

/// Top and four sides of a box standing on the floor.
fn box_patches(corner: [f64; 3], size: [f64; 3], label: usize) -> Vec<Patch> {
    let [x, y, z] = corner;
    let [sx, sy, sz] = size;
    vec![
        Patch { origin: [x, y, z + sz], u: [sx, 0.0, 0.0], v: [0.0, sy, 0.0], label },
        Patch { origin: [x, y, z], u: [sx, 0.0, 0.0], v: [0.0, 0.0, sz], label },
        Patch { origin: [x, y + sy, z], u: [sx, 0.0, 0.0], v: [0.0, 0.0, sz], label },
        Patch { origin: [x, y, z], u: [0.0, sy, 0.0], v: [0.0, 0.0, sz], label },
        Patch { origin: [x + sx, y, z], u: [0.0, sy, 0.0], v: [0.0, 0.0, sz], label },
    ]
}

const PANEL_OFFSET: f64 = 0.02;

/// A vertical panel just inside one of the four walls.
fn wall_panel(rng: &mut ChaCha8Rng, dims: [f64; 3], width: f64, height: f64, bottom: f64, label: usize) -> Patch {
    let [w, l, h] = dims;
    let wall = rng.gen_range(0..4);
    let along = if wall < 2 { w } else { l };
    let width = width.min(along);
    let height = height.min(h);
    let bottom = bottom.clamp(0.0, h - height);
    let start = uniform(rng, 0.0, along - width);
    let (origin, u) = match wall {
        0 => ([start, PANEL_OFFSET, bottom], [width, 0.0, 0.0]),
        1 => ([start, l - PANEL_OFFSET, bottom], [width, 0.0, 0.0]),
        2 => ([PANEL_OFFSET, start, bottom], [0.0, width, 0.0]),
        _ => ([w - PANEL_OFFSET, start, bottom], [0.0, width, 0.0]),
    };
    Patch { origin, u, v: [0.0, 0.0, height], label }
}

/// Points placed on one patch: `round(area × density)`.
pub fn patch_point_count(patch: &Patch, density: f64) -> usize {
    (patch.area() * density).round() as usize
}

fn jitter(rng: &mut ChaCha8Rng, base: [u8; 3], amount: f64) -> [f64; 3] {
    base.map(|c| f64::from(c) + uniform(rng, -amount, amount))
}

fn to_rgb(c: [f64; 3]) -> [u8; 3] {
    c.map(|v| v.round().clamp(0.0, 255.0) as u8)
}

impl SyntheticSpec {
    pub fn vocab(&self) -> Result<ClassVocab, DataError> {
        ClassVocab::new(self.classes.clone())
    }

    fn class_id(&self, name: &str) -> Result<usize, DataError> {
        self.classes
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DataError::Invalid(format!("synthetic spec: class `{name}` is not in the vocabulary")))
    }

    pub fn base_color(&self, class: usize) -> [u8; 3] {
        self.class_colors
            .get(&self.classes[class])
            .copied()
            .unwrap_or_else(|| super::default_color(class))
    }

    pub fn template(&self, room_type: RoomType) -> Option<&RoomTemplate> {
        self.templates.iter().find(|t| t.room_type == room_type)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Invalid(format!("synthetic spec: {m}")));
        self.vocab()?;
        for c in ["floor", "ceiling", "wall"] {
            self.class_id(c)?;
        }
        for c in self.class_colors.keys() {
            self.class_id(c)?;
        }
        if !(self.density > 0.0 && self.density.is_finite()) {
            return bad(format!("density must be positive, got {}", self.density));
        }
        if !(self.object_jitter >= 0.0 && self.point_noise >= 0.0) {
            return bad("color noise must be non-negative".into());
        }
        for t in &self.templates {
            if (0..3).any(|k| !(t.size_min[k] > 0.0 && t.size_min[k] <= t.size_max[k])) {
                return bad(format!("{}: room size range must be positive and ordered", t.room_type));
            }
            for f in &t.furniture {
                self.class_id(&f.class)?;
                if f.count[0] > f.count[1] || f.elevation[0] > f.elevation[1] {
                    return bad(format!("{}: `{}` ranges must be ordered", t.room_type, f.class));
                }
                if (0..3).any(|k| !(f.size_min[k] >= 0.0 && f.size_min[k] <= f.size_max[k])) {
                    return bad(format!("{}: `{}` size range must be ordered", t.room_type, f.class));
                }
            }
        }
        if self.areas.is_empty() {
            return bad("no areas".into());
        }
        for a in &self.areas {
            if a.rooms.iter().all(|&(_, n)| n == 0) {
                return bad(format!("area {} has no rooms", a.name));
            }
            for (t, n) in &a.rooms {
                if *n > 0 && self.template(*t).is_none() {
                    return bad(format!("area {} uses room type {t} without a template", a.name));
                }
            }
        }
        Ok(())
    }

    /// Three small areas (A, B, C) over nine classes.
    pub fn desk_default() -> Self {
        use Mount::{Floor, Wall};
        use RoomType::*;
        let f = |class: &str, count: [usize; 2], lo: [f64; 3], hi: [f64; 3], mount: Mount, elevation: [f64; 2]| {
            FurnitureSpec {
                class: class.into(),
                count,
                size_min: lo,
                size_max: hi,
                mount,
                elevation,
            }
        };
        let door = |n: [usize; 2]| f("door", n, [0.85, 0.0, 2.0], [1.0, 0.0, 2.1], Wall, [0.0, 0.0]);
        let window = |n: [usize; 2]| f("window", n, [0.8, 0.0, 1.0], [1.6, 0.0, 1.3], Wall, [0.8, 1.1]);
        let board = |n: [usize; 2]| f("board", n, [1.2, 0.0, 0.9], [2.4, 0.0, 1.2], Wall, [0.9, 1.1]);
        let table = |n: [usize; 2], lo: [f64; 3], hi: [f64; 3]| f("table", n, lo, hi, Floor, [0.0, 0.0]);
        let chair = |n: [usize; 2]| f("chair", n, [0.45, 0.45, 0.8], [0.55, 0.55, 1.0], Floor, [0.0, 0.0]);
        let bookcase = |n: [usize; 2]| f("bookcase", n, [0.8, 0.3, 1.6], [1.2, 0.45, 2.2], Floor, [0.0, 0.0]);
        let desk = ([1.2, 0.6, 0.72], [1.8, 0.9, 0.78]);
        let tmpl = |room_type, lo, hi, furniture| RoomTemplate {
            room_type,
            size_min: lo,
            size_max: hi,
            furniture,
        };
        let templates = vec![
            tmpl(Office, [3.0, 3.0, 2.7], [4.5, 5.0, 3.1], vec![
                door([1, 1]), window([0, 2]), board([0, 1]),
                table([1, 2], desk.0, desk.1), chair([1, 3]), bookcase([0, 2]),
            ]),
            tmpl(ConferenceRoom, [4.0, 5.0, 2.8], [6.0, 7.0, 3.2], vec![
                door([1, 2]), window([1, 3]), board([1, 1]),
                table([1, 1], [2.0, 1.0, 0.72], [3.2, 1.4, 0.78]), chair([6, 10]),
            ]),
            tmpl(Auditorium, [8.0, 10.0, 4.0], [10.0, 12.0, 5.0], vec![
                door([2, 3]), board([1, 2]), chair([20, 30]),
            ]),
            tmpl(Lobby, [5.0, 5.0, 3.0], [7.0, 8.0, 3.6], vec![
                door([2, 4]), window([1, 3]), chair([2, 5]), table([0, 1], desk.0, desk.1),
            ]),
            tmpl(Lounge, [4.0, 4.0, 2.8], [6.0, 6.0, 3.2], vec![
                door([1, 2]), window([1, 2]), chair([3, 6]), table([1, 2], [0.8, 0.8, 0.45], [1.2, 1.2, 0.55]),
            ]),
            tmpl(Hallway, [1.6, 6.0, 2.7], [2.4, 10.0, 3.0], vec![door([2, 5]), window([0, 1])]),
            tmpl(CopyRoom, [2.5, 3.0, 2.7], [3.5, 4.0, 3.0], vec![
                door([1, 1]), table([1, 2], [1.0, 0.6, 0.9], [1.4, 0.8, 1.0]), bookcase([1, 2]),
            ]),
            tmpl(Pantry, [2.5, 2.5, 2.7], [3.5, 4.0, 3.0], vec![
                door([1, 1]), table([1, 1], [0.9, 0.9, 0.72], [1.2, 1.2, 0.78]), chair([0, 2]), bookcase([0, 1]),
            ]),
            tmpl(OpenSpace, [6.0, 6.0, 3.0], [9.0, 9.0, 3.6], vec![
                door([1, 3]), window([2, 4]), table([2, 4], desk.0, desk.1), chair([4, 8]),
            ]),
            tmpl(Storage, [2.0, 2.5, 2.6], [3.0, 4.0, 3.0], vec![door([1, 1]), bookcase([2, 4])]),
            tmpl(Wc, [2.0, 2.0, 2.6], [3.0, 3.0, 2.9], vec![door([1, 2])]),
        ];
        let area = |name: &str, rooms: Vec<(RoomType, usize)>| AreaSpec {
            name: name.into(),
            rooms,
        };
        SyntheticSpec {
            classes: ["ceiling", "floor", "wall", "door", "window", "table", "chair", "bookcase", "board"]
                .map(String::from)
                .to_vec(),
            density: default_density(),
            object_jitter: default_object_jitter(),
            point_noise: default_point_noise(),
            class_colors: BTreeMap::new(),
            templates,
            areas: vec![
                area("A", vec![(Office, 3), (ConferenceRoom, 1), (Hallway, 2), (Storage, 1), (Pantry, 1), (Wc, 1)]),
                area("B", vec![(Office, 3), (ConferenceRoom, 1), (Hallway, 2), (Lounge, 1), (CopyRoom, 1), (Wc, 1)]),
                area("C", vec![(Office, 3), (ConferenceRoom, 1), (Hallway, 2), (Storage, 1), (Lobby, 1)]),
            ],
        }
    }
}

/// Samples the labeled patches of one room.
pub fn room_patches(spec: &SyntheticSpec, template: &RoomTemplate, rng: &mut ChaCha8Rng) -> Result<(Vec<Patch>, [f64; 3]), DataError> {
    let dims = uniform3(rng, template.size_min, template.size_max).map(|v| (v * 100.0).round() / 100.0);
    let mut patches = structure_patches(
        dims,
        spec.class_id("floor")?,
        spec.class_id("ceiling")?,
        spec.class_id("wall")?,
    );
    for f in &template.furniture {
        let label = spec.class_id(&f.class)?;
        let count = rng.gen_range(f.count[0]..=f.count[1]);
        for _ in 0..count {
            let size = uniform3(rng, f.size_min, f.size_max);
            match f.mount {
                Mount::Floor => {
                    let size = [size[0].min(dims[0]), size[1].min(dims[1]), size[2].min(dims[2])];
                    let corner = [
                        uniform(rng, 0.0, dims[0] - size[0]),
                        uniform(rng, 0.0, dims[1] - size[1]),
                        0.0,
                    ];
                    patches.extend(box_patches(corner, size, label));
                }
                Mount::Wall => {
                    let bottom = uniform(rng, f.elevation[0], f.elevation[1]);
                    patches.push(wall_panel(rng, dims, size[0], size[2], bottom, label));
                }
            }
        }
    }
    Ok((patches, dims))
}

fn sample_patches(spec: &SyntheticSpec, patches: &[Patch], rng: &mut ChaCha8Rng) -> (Vec<RoomPoint>, Vec<usize>) {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for patch in patches {
        let object_color = jitter(rng, spec.base_color(patch.label), spec.object_jitter);
        for _ in 0..patch_point_count(patch, spec.density) {
            let (a, b): (f64, f64) = (rng.gen(), rng.gen());
            let xyz = [0, 1, 2].map(|k| quantize(patch.origin[k] + a * patch.u[k] + b * patch.v[k]));
            let rgb = to_rgb(object_color.map(|c| c + uniform(rng, -spec.point_noise, spec.point_noise)));
            points.push(RoomPoint { xyz, rgb });
            labels.push(patch.label);
        }
    }
    (points, labels)
}

/// Generates one area. Each room draws from its own stream of `seed`.
pub fn generate_synthetic_area(spec: &SyntheticSpec, area: &AreaSpec, seed: u64) -> Result<Area, DataError> {
    spec.validate()?;
    let mut rooms = Vec::new();
    let mut stream = 0u64;
    for &(room_type, count) in &area.rooms {
        let template = spec
            .template(room_type)
            .ok_or_else(|| DataError::Invalid(format!("no template for room type {room_type}")))?;
        for i in 0..count {
            let mut rng = stream_rng(seed, stream);
            stream += 1;
            let (patches, _) = room_patches(spec, template, &mut rng)?;
            let (points, labels) = sample_patches(spec, &patches, &mut rng);
            if points.is_empty() {
                return Err(DataError::EmptyRoom(format!("{room_type}_{}", i + 1)));
            }
            rooms.push(Room {
                name: format!("{room_type}_{}", i + 1),
                room_type,
                points,
                labels,
            });
        }
    }
    Ok(Area {
        name: area.name.clone(),
        rooms,
        vocab: spec.vocab()?,
    })
}

/// Every area of the spec; area `i` uses sub-seed `i` of `seed`.
pub fn generate_synthetic_dataset(spec: &SyntheticSpec, seed: u64) -> Result<Vec<Area>, DataError> {
    spec.areas
        .iter()
        .enumerate()
        .map(|(i, a)| generate_synthetic_area(spec, a, crate::seed::derive_seed(seed, i as u64)))
        .collect()
}
