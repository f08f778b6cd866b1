use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DataError;

/// The eleven room types of the S3DIS building survey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoomType {
    #[serde(rename = "office")]
    Office,
    #[serde(rename = "conferenceRoom")]
    ConferenceRoom,
    #[serde(rename = "auditorium")]
    Auditorium,
    #[serde(rename = "lobby")]
    Lobby,
    #[serde(rename = "lounge")]
    Lounge,
    #[serde(rename = "hallway")]
    Hallway,
    #[serde(rename = "copyRoom")]
    CopyRoom,
    #[serde(rename = "pantry")]
    Pantry,
    #[serde(rename = "openspace")]
    OpenSpace,
    #[serde(rename = "storage")]
    Storage,
    #[serde(rename = "WC")]
    Wc,
}

impl RoomType {
    pub const ALL: [RoomType; 11] = [
        RoomType::Office,
        RoomType::ConferenceRoom,
        RoomType::Auditorium,
        RoomType::Lobby,
        RoomType::Lounge,
        RoomType::Hallway,
        RoomType::CopyRoom,
        RoomType::Pantry,
        RoomType::OpenSpace,
        RoomType::Storage,
        RoomType::Wc,
    ];

    /// File-name prefix, as used in S3DIS room names.
    pub fn as_str(self) -> &'static str {
        match self {
            RoomType::Office => "office",
            RoomType::ConferenceRoom => "conferenceRoom",
            RoomType::Auditorium => "auditorium",
            RoomType::Lobby => "lobby",
            RoomType::Lounge => "lounge",
            RoomType::Hallway => "hallway",
            RoomType::CopyRoom => "copyRoom",
            RoomType::Pantry => "pantry",
            RoomType::OpenSpace => "openspace",
            RoomType::Storage => "storage",
            RoomType::Wc => "WC",
        }
    }
}

impl fmt::Display for RoomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoomType {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoomType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| DataError::RoomName(s.to_string()))
    }
}

/// Rooms per type in each S3DIS area, in [`RoomType::ALL`] order.
pub const S3DIS_ROOM_COUNTS: [(&str, [usize; 11]); 6] = [
    ("Area_1", [31, 2, 0, 0, 0, 8, 1, 1, 0, 0, 1]),
    ("Area_2", [14, 1, 2, 0, 0, 12, 0, 0, 0, 9, 2]),
    ("Area_3", [10, 1, 0, 0, 2, 6, 0, 0, 0, 2, 2]),
    ("Area_4", [22, 3, 0, 2, 0, 14, 0, 0, 0, 4, 2]),
    ("Area_5", [42, 3, 0, 1, 0, 15, 0, 1, 0, 4, 2]),
    ("Area_6", [37, 1, 0, 0, 1, 6, 1, 1, 1, 0, 0]),
];

/// One scanned point: position in meters and 8-bit color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoomPoint {
    pub xyz: [f64; 3],
    pub rgb: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    pub name: String,
    pub room_type: RoomType,
    pub points: Vec<RoomPoint>,
    pub labels: Vec<usize>,
}

impl Room {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self, vocab: &ClassVocab) -> Result<(), DataError> {
        if self.points.is_empty() {
            return Err(DataError::EmptyRoom(self.name.clone()));
        }
        if self.points.len() != self.labels.len() {
            return Err(DataError::Invalid(format!(
                "room {} has {} points but {} labels",
                self.name,
                self.points.len(),
                self.labels.len()
            )));
        }
        if let Some(p) = self.points.iter().find(|p| p.xyz.iter().any(|v| !v.is_finite())) {
            return Err(DataError::Invalid(format!("room {} has a non-finite point {:?}", self.name, p.xyz)));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= vocab.len()) {
            return Err(DataError::UnknownLabel { line: 0, label: l });
        }
        Ok(())
    }
}

/// Splits `office_12` into its type and index.
pub fn parse_room_name(name: &str) -> Result<(RoomType, usize), DataError> {
    let (prefix, index) = name
        .rsplit_once('_')
        .ok_or_else(|| DataError::RoomName(name.to_string()))?;
    let index = index.parse().map_err(|_| DataError::RoomName(name.to_string()))?;
    Ok((prefix.parse().map_err(|_| DataError::RoomName(name.to_string()))?, index))
}

/// Semantic class names, indexed by label id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassVocab {
    names: Vec<String>,
}

impl ClassVocab {
    pub fn new(names: Vec<String>) -> Result<Self, DataError> {
        if names.is_empty() {
            return Err(DataError::Invalid("empty class vocabulary".into()));
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Parses `label_id class_name` lines; ids must be exactly 0..n.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(id), Some(name), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(DataError::Parse {
                    line: i + 1,
                    message: "expected `label_id class_name`".into(),
                });
            };
            let id: usize = id.parse().map_err(|_| DataError::Parse {
                line: i + 1,
                message: format!("bad label id `{id}`"),
            })?;
            entries.push((id, name.to_string()));
        }
        entries.sort();
        for (expected, (id, _)) in entries.iter().enumerate() {
            if *id != expected {
                return Err(DataError::Invalid(format!(
                    "class ids must be contiguous from 0; missing or duplicate id near {expected}"
                )));
            }
        }
        Self::new(entries.into_iter().map(|(_, n)| n).collect())
    }

    pub fn to_text(&self) -> String {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| format!("{i} {n}\n"))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::parse(&text).map_err(|e| e.in_file(path))
    }
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

/// Parses the canonical room text format (`x y z r g b label_id` per line).
pub fn parse_room(name: &str, text: &str, vocab: &ClassVocab) -> Result<Room, DataError> {
    let (room_type, _) = parse_room_name(name)?;
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let mut xyz = [0.0; 3];
        for (k, slot) in xyz.iter_mut().enumerate() {
            let v: f64 = fields[k].parse().map_err(|_| DataError::Parse {
                line: line_no,
                message: format!("bad coordinate `{}`", fields[k]),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    line: line_no,
                    message: format!("non-finite coordinate `{}`", fields[k]),
                });
            }
            *slot = v;
        }
        let mut rgb = [0u8; 3];
        for (k, slot) in rgb.iter_mut().enumerate() {
            let v: i64 = fields[3 + k].parse().map_err(|_| DataError::Parse {
                line: line_no,
                message: format!("bad color `{}`", fields[3 + k]),
            })?;
            *slot = u8::try_from(v).map_err(|_| DataError::Color { line: line_no, value: v })?;
        }
        let label: usize = fields[6].parse().map_err(|_| DataError::Parse {
            line: line_no,
            message: format!("bad label `{}`", fields[6]),
        })?;
        if label >= vocab.len() {
            return Err(DataError::UnknownLabel { line: line_no, label });
        }
        points.push(RoomPoint { xyz, rgb });
        labels.push(label);
    }
    if points.is_empty() {
        return Err(DataError::EmptyRoom(name.to_string()));
    }
    Ok(Room {
        name: name.to_string(),
        room_type,
        points,
        labels,
    })
}

pub fn load_room(path: &Path, vocab: &ClassVocab) -> Result<Room, DataError> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| DataError::RoomName(path.display().to_string()))?;
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_room(name, &text, vocab).map_err(|e| e.in_file(path))
}

/// Canonical text for a room; coordinates are written at millimeter
/// resolution.
pub fn room_to_text(room: &Room) -> String {
    let mut out = String::with_capacity(room.len() * 40);
    for (p, l) in room.points.iter().zip(&room.labels) {
        use std::fmt::Write;
        let _ = writeln!(
            out,
            "{:.3} {:.3} {:.3} {} {} {} {}",
            p.xyz[0], p.xyz[1], p.xyz[2], p.rgb[0], p.rgb[1], p.rgb[2], l
        );
    }
    out
}

pub fn write_room(dir: &Path, room: &Room) -> Result<PathBuf, DataError> {
    let path = dir.join(format!("{}.txt", room.name));
    fs::write(&path, room_to_text(room)).map_err(|e| DataError::io(&path, e))?;
    Ok(path)
}

/// One building area: a named list of rooms over a shared class vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Area {
    pub name: String,
    pub rooms: Vec<Room>,
    pub vocab: ClassVocab,
}

impl Area {
    pub fn point_count(&self) -> usize {
        self.rooms.iter().map(Room::len).sum()
    }

    pub fn room_types(&self) -> Vec<RoomType> {
        let mut t: Vec<RoomType> = self.rooms.iter().map(|r| r.room_type).collect();
        t.sort();
        t.dedup();
        t
    }
}

/// Loads every `*.txt` room in `dir`, sorted by file name.
pub fn load_area(dir: &Path, vocab: &ClassVocab) -> Result<Area, DataError> {
    let name = dir
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| DataError::Invalid(format!("bad area directory {}", dir.display())))?
        .to_string();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let rooms = files
        .iter()
        .map(|p| load_room(p, vocab))
        .collect::<Result<Vec<_>, _>>()?;
    if rooms.is_empty() {
        return Err(DataError::Invalid(format!("area {} has no room files", dir.display())));
    }
    Ok(Area {
        name,
        rooms,
        vocab: vocab.clone(),
    })
}

pub const VOCAB_FILE: &str = "classes.txt";

/// Lists the area directories of a dataset root, sorted by name.
pub fn list_areas(root: &Path) -> Result<Vec<String>, DataError> {
    let mut names: Vec<String> = fs::read_dir(root)
        .map_err(|e| DataError::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(str::to_string))
        .collect();
    names.sort();
    Ok(names)
}

/// Loads `classes.txt` and the named areas from a dataset root.
pub fn load_dataset(root: &Path, areas: &[String]) -> Result<(ClassVocab, Vec<Area>), DataError> {
    let vocab = ClassVocab::load(&root.join(VOCAB_FILE))?;
    let areas = areas
        .iter()
        .map(|a| load_area(&root.join(a), &vocab))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((vocab, areas))
}

/// Writes `classes.txt` and one directory per area.
pub fn write_dataset(root: &Path, areas: &[Area]) -> Result<(), DataError> {
    fs::create_dir_all(root).map_err(|e| DataError::io(root, e))?;
    if let Some(first) = areas.first() {
        let path = root.join(VOCAB_FILE);
        fs::write(&path, first.vocab.to_text()).map_err(|e| DataError::io(&path, e))?;
    }
    for area in areas {
        let dir = root.join(&area.name);
        fs::create_dir_all(&dir).map_err(|e| DataError::io(&dir, e))?;
        for room in &area.rooms {
            write_room(&dir, room)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> ClassVocab {
        ClassVocab::new(vec!["floor".into(), "wall".into()]).unwrap()
    }

    #[test]
    fn three_line_room() {
        let text = "# header\n0 0 0 10 20 30 0\n1.5 0 2 255 255 255 1\n0.5 0.5 0 0 0 0 0 # trailing\n";
        let room = parse_room("office_1", text, &vocab()).unwrap();
        assert_eq!(room.len(), 3);
        assert_eq!(room.labels, vec![0, 1, 0]);
        assert_eq!(room.room_type, RoomType::Office);
        assert_eq!(room.points[1].rgb, [255, 255, 255]);
    }

    #[test]
    fn empty_room_is_an_error() {
        assert!(matches!(
            parse_room("office_1", "# nothing\n\n", &vocab()),
            Err(DataError::EmptyRoom(_))
        ));
    }

    #[test]
    fn color_out_of_range() {
        let err = parse_room("office_1", "0 0 0 10 10 10 0\n0 0 0 300 0 0 0\n", &vocab()).unwrap_err();
        assert!(matches!(err, DataError::Color { line: 2, value: 300 }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_room("office_1", "0 0 0 1 1 1 0\n0 0 zero 1 1 1 0\n", &vocab()).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }));
        let err = parse_room("office_1", "0 0 0 1 1 1\n", &vocab()).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 1, .. }));
    }

    #[test]
    fn unknown_label() {
        let err = parse_room("office_1", "0 0 0 1 1 1 2\n", &vocab()).unwrap_err();
        assert!(matches!(err, DataError::UnknownLabel { line: 1, label: 2 }));
    }

    #[test]
    fn room_names() {
        assert_eq!(parse_room_name("conferenceRoom_2").unwrap(), (RoomType::ConferenceRoom, 2));
        assert_eq!(parse_room_name("WC_1").unwrap(), (RoomType::Wc, 1));
        assert!(parse_room_name("kitchen_1").is_err());
        assert!(parse_room_name("office").is_err());
    }

    #[test]
    fn text_round_trip() {
        let room = parse_room("hallway_3", "0.125 -2 1.5 1 2 3 1\n4 5 6 7 8 9 0\n", &vocab()).unwrap();
        let back = parse_room("hallway_3", &room_to_text(&room), &vocab()).unwrap();
        assert_eq!(room, back);
    }

    #[test]
    fn vocab_parse_and_print() {
        let v = ClassVocab::parse("1 wall\n0 floor\n").unwrap();
        assert_eq!(v.names(), &["floor".to_string(), "wall".to_string()]);
        assert_eq!(ClassVocab::parse(&v.to_text()).unwrap(), v);
        assert!(ClassVocab::parse("0 floor\n2 wall\n").is_err());
    }

    #[test]
    fn table_totals_match_building_survey() {
        let total: usize = S3DIS_ROOM_COUNTS.iter().map(|(_, c)| c.iter().sum::<usize>()).sum();
        assert_eq!(total, 270);
        let offices: usize = S3DIS_ROOM_COUNTS.iter().map(|(_, c)| c[0]).sum();
        let hallways: usize = S3DIS_ROOM_COUNTS.iter().map(|(_, c)| c[5]).sum();
        assert_eq!((offices, hallways), (156, 61));
        let area1_types = S3DIS_ROOM_COUNTS[0].1.iter().filter(|&&c| c > 0).count();
        assert_eq!(area1_types, 6);
    }
}
