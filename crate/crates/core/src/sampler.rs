//! N-way K-shot episodes over blocks.
//!
//! A sample is one block of one room. Its category is either the room type
//! of its source room or the block's dominant semantic class. An episode
//! picks `n` categories uniformly without replacement among those holding
//! at least `k + t·k` samples, then draws `k` support and `t·k` query
//! samples per category without replacement. Each drawn sample also gets a
//! resample seed, so a block is materialized to a fixed point count
//! reproducibly.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{partition_blocks, resample_block, Area, Block, BlockSample, ClassVocab, DataError, RoomBounds};
use crate::seed::stream_rng;
use crate::tensor::Scalar;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid episode spec: {0}")]
    Spec(String),
    #[error("no samples to index")]
    EmptyIndex,
    #[error(
        "{n}-way episodes need {n} categories with at least {needed} samples each, but only {eligible} qualify; \
         too small: {short}"
    )]
    Capacity {
        n: usize,
        needed: usize,
        eligible: usize,
        short: String,
    },
    #[error("unknown sample {0}")]
    UnknownSample(String),
    #[error("episode manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoryMode {
    #[default]
    RoomType,
    SemanticComposition,
}

impl fmt::Display for CategoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CategoryMode::RoomType => "room_type",
            CategoryMode::SemanticComposition => "semantic_composition",
        })
    }
}

fn default_n() -> usize {
    2
}
fn default_k() -> usize {
    6
}
fn default_t() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Query multiplier: `t·k` query samples per category.
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default)]
    pub category_mode: CategoryMode,
}

impl Default for EpisodeSpec {
    fn default() -> Self {
        Self {
            n: default_n(),
            k: default_k(),
            t: default_t(),
            category_mode: CategoryMode::RoomType,
        }
    }
}

impl EpisodeSpec {
    pub fn new(n: usize, k: usize, t: usize) -> Self {
        Self {
            n,
            k,
            t,
            category_mode: CategoryMode::RoomType,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.n == 0 || self.k == 0 || self.t == 0 {
            return Err(SamplerError::Spec(format!(
                "n, k and t must be at least 1 (got n={}, k={}, t={})",
                self.n, self.k, self.t
            )));
        }
        Ok(())
    }

    /// Samples a category must hold to be drawn.
    pub fn per_category(&self) -> usize {
        self.k + self.t * self.k
    }

    pub fn support_size(&self) -> usize {
        self.n * self.k
    }

    pub fn query_size(&self) -> usize {
        self.t * self.n * self.k
    }
}

/// Where a sample comes from: area, room and grid cell.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SampleId {
    pub area: String,
    pub room: String,
    pub cell: (usize, usize),
}

impl fmt::Display for SampleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}[{},{}]", self.area, self.room, self.cell.0, self.cell.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub id: SampleId,
    pub block: Block,
    pub bounds: RoomBounds,
}

/// Every block of a set of areas, in area / room / cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePool {
    entries: Vec<PoolEntry>,
    vocab: ClassVocab,
}

impl SamplePool {
    pub fn from_areas(areas: &[Area], block_size: f64) -> Result<Self, SamplerError> {
        let vocab = areas.first().ok_or(SamplerError::EmptyIndex)?.vocab.clone();
        let mut entries = Vec::new();
        for area in areas {
            if area.vocab != vocab {
                return Err(SamplerError::Data(DataError::Invalid(format!(
                    "area {} uses a different class vocabulary",
                    area.name
                ))));
            }
            for room in &area.rooms {
                let bounds = RoomBounds::of(&room.points)?;
                for block in partition_blocks(room, block_size)? {
                    entries.push(PoolEntry {
                        id: SampleId {
                            area: area.name.clone(),
                            room: room.name.clone(),
                            cell: block.cell,
                        },
                        block,
                        bounds,
                    });
                }
            }
        }
        Ok(Self { entries, vocab })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn get(&self, i: usize) -> Option<&PoolEntry> {
        self.entries.get(i)
    }

    pub fn vocab(&self) -> &ClassVocab {
        &self.vocab
    }

    pub fn position(&self, id: &SampleId) -> Option<usize> {
        self.entries.iter().position(|e| &e.id == id)
    }

    /// The block resampled to `points` rows with the item's seed, then
    /// featurized against its room's bounds.
    pub fn materialize<T: Scalar>(&self, item: &EpisodeItem, points: usize) -> Result<BlockSample<T>, SamplerError> {
        let entry = self
            .entries
            .get(item.sample)
            .ok_or_else(|| SamplerError::UnknownSample(item.sample.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(item.resample_seed);
        let block = resample_block(&entry.block, points, &mut rng)?;
        Ok(BlockSample::from_block(&block, &entry.bounds))
    }
}

/// Category name → pool indices, both in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryIndex {
    mode: CategoryMode,
    categories: BTreeMap<String, Vec<usize>>,
}

impl CategoryIndex {
    pub fn mode(&self) -> CategoryMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.categories.keys().map(String::as_str).collect()
    }

    pub fn samples(&self, category: &str) -> Option<&[usize]> {
        self.categories.get(category).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.categories.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Categories holding at least `needed` samples.
    pub fn eligible(&self, needed: usize) -> Vec<&str> {
        self.iter().filter(|(_, s)| s.len() >= needed).map(|(c, _)| c).collect()
    }

    fn check_capacity(&self, spec: &EpisodeSpec) -> Result<Vec<&str>, SamplerError> {
        let needed = spec.per_category();
        let eligible = self.eligible(needed);
        if eligible.len() < spec.n {
            let short: Vec<String> = self
                .iter()
                .filter(|(_, s)| s.len() < needed)
                .map(|(c, s)| format!("{c} has {}", s.len()))
                .collect();
            return Err(SamplerError::Capacity {
                n: spec.n,
                needed,
                eligible: eligible.len(),
                short: if short.is_empty() { "none".into() } else { short.join(", ") },
            });
        }
        Ok(eligible)
    }
}

pub fn index_categories(pool: &SamplePool, mode: CategoryMode) -> Result<CategoryIndex, SamplerError> {
    if pool.is_empty() {
        return Err(SamplerError::EmptyIndex);
    }
    let mut categories: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, e) in pool.entries.iter().enumerate() {
        let name = match mode {
            CategoryMode::RoomType => e.block.room_type.to_string(),
            CategoryMode::SemanticComposition => {
                let label = e.block.dominant_label().ok_or(SamplerError::EmptyIndex)?;
                pool.vocab.name(label).unwrap_or("?").to_string()
            }
        };
        categories.entry(name).or_default().push(i);
    }
    Ok(CategoryIndex { mode, categories })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpisodeItem {
    /// Index into the sample pool.
    pub sample: usize,
    /// Position of the item's category in [`Episode::categories`].
    pub category: usize,
    pub resample_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub categories: Vec<String>,
    pub support: Vec<EpisodeItem>,
    pub query: Vec<EpisodeItem>,
}

/// Support and query blocks ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData<T> {
    pub support: Vec<BlockSample<T>>,
    pub query: Vec<BlockSample<T>>,
}

impl Episode {
    pub fn materialize<T: Scalar>(&self, pool: &SamplePool, points: usize) -> Result<TaskData<T>, SamplerError> {
        let load = |items: &[EpisodeItem]| {
            items
                .iter()
                .map(|it| pool.materialize(it, points))
                .collect::<Result<Vec<_>, _>>()
        };
        Ok(TaskData {
            support: load(&self.support)?,
            query: load(&self.query)?,
        })
    }
}

pub fn sample_episode<R: Rng + ?Sized>(
    index: &CategoryIndex,
    spec: &EpisodeSpec,
    rng: &mut R,
) -> Result<Episode, SamplerError> {
    spec.validate()?;
    let eligible = index.check_capacity(spec)?;
    let chosen = index::sample(rng, eligible.len(), spec.n).into_vec();
    let mut episode = Episode {
        categories: Vec::with_capacity(spec.n),
        support: Vec::with_capacity(spec.support_size()),
        query: Vec::with_capacity(spec.query_size()),
    };
    for (pos, &c) in chosen.iter().enumerate() {
        let name = eligible[c];
        let samples = &index.categories[name];
        let draw = index::sample(rng, samples.len(), spec.per_category()).into_vec();
        episode.categories.push(name.to_string());
        for (j, &d) in draw.iter().enumerate() {
            let item = EpisodeItem {
                sample: samples[d],
                category: pos,
                resample_seed: rng.gen(),
            };
            if j < spec.k {
                episode.support.push(item);
            } else {
                episode.query.push(item);
            }
        }
    }
    Ok(episode)
}

/// A lazily enumerated sequence of episodes; episode `i` is drawn from
/// sub-seed `i` of the master seed, so any episode can be produced
/// independently of the others.
#[derive(Debug, Clone)]
pub struct TaskDistribution<'a> {
    index: &'a CategoryIndex,
    spec: EpisodeSpec,
    seed: u64,
    count: usize,
}

pub fn build_task_distribution<'a>(
    index: &'a CategoryIndex,
    spec: EpisodeSpec,
    count: usize,
    seed: u64,
) -> Result<TaskDistribution<'a>, SamplerError> {
    spec.validate()?;
    index.check_capacity(&spec)?;
    Ok(TaskDistribution {
        index,
        spec,
        seed,
        count,
    })
}

impl<'a> TaskDistribution<'a> {
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn spec(&self) -> &EpisodeSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn episode(&self, i: usize) -> Result<Episode, SamplerError> {
        if i >= self.count {
            return Err(SamplerError::Spec(format!("episode {i} of {}", self.count)));
        }
        sample_episode(self.index, &self.spec, &mut stream_rng(self.seed, i as u64))
    }

    pub fn iter(&self) -> impl Iterator<Item = Result<Episode, SamplerError>> + '_ {
        (0..self.count).map(|i| self.episode(i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub sample: SampleId,
    pub category: String,
    pub resample_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEpisode {
    pub categories: Vec<String>,
    pub support: Vec<ManifestItem>,
    pub query: Vec<ManifestItem>,
}

/// Sample identities of a list of episodes, for exact replay.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeManifest {
    pub spec: EpisodeSpec,
    pub seed: u64,
    pub episodes: Vec<ManifestEpisode>,
}

impl EpisodeManifest {
    pub fn new(pool: &SamplePool, spec: EpisodeSpec, seed: u64, episodes: &[Episode]) -> Result<Self, SamplerError> {
        let item = |e: &Episode, it: &EpisodeItem| -> Result<ManifestItem, SamplerError> {
            Ok(ManifestItem {
                sample: pool
                    .get(it.sample)
                    .ok_or_else(|| SamplerError::UnknownSample(it.sample.to_string()))?
                    .id
                    .clone(),
                category: e.categories[it.category].clone(),
                resample_seed: it.resample_seed,
            })
        };
        let episodes = episodes
            .iter()
            .map(|e| {
                Ok(ManifestEpisode {
                    categories: e.categories.clone(),
                    support: e.support.iter().map(|it| item(e, it)).collect::<Result<_, _>>()?,
                    query: e.query.iter().map(|it| item(e, it)).collect::<Result<_, _>>()?,
                })
            })
            .collect::<Result<_, SamplerError>>()?;
        Ok(Self { spec, seed, episodes })
    }

    /// Rebuilds the episodes against a pool loaded from the same data.
    pub fn resolve(&self, pool: &SamplePool) -> Result<Vec<Episode>, SamplerError> {
        let lookup: BTreeMap<&SampleId, usize> = pool.entries.iter().enumerate().map(|(i, e)| (&e.id, i)).collect();
        let item = |me: &ManifestEpisode, it: &ManifestItem| -> Result<EpisodeItem, SamplerError> {
            Ok(EpisodeItem {
                sample: *lookup
                    .get(&it.sample)
                    .ok_or_else(|| SamplerError::UnknownSample(it.sample.to_string()))?,
                category: me
                    .categories
                    .iter()
                    .position(|c| c == &it.category)
                    .ok_or_else(|| SamplerError::Manifest(format!("category {} not listed", it.category)))?,
                resample_seed: it.resample_seed,
            })
        };
        self.episodes
            .iter()
            .map(|me| {
                Ok(Episode {
                    categories: me.categories.clone(),
                    support: me.support.iter().map(|it| item(me, it)).collect::<Result<_, _>>()?,
                    query: me.query.iter().map(|it| item(me, it)).collect::<Result<_, _>>()?,
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SamplerError> {
        serde_json::from_str(text).map_err(|e| SamplerError::Manifest(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), SamplerError> {
        fs::write(path, self.to_json()).map_err(|e| SamplerError::Data(DataError::Io {
            path: path.to_path_buf(),
            source: e,
        }))
    }

    pub fn load(path: &Path) -> Result<Self, SamplerError> {
        let text = fs::read_to_string(path).map_err(|e| {
            SamplerError::Data(DataError::Io {
                path: path.to_path_buf(),
                source: e,
            })
        })?;
        Self::from_json(&text)
    }
}
