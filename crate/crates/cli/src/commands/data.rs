use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use metaseg_core::data::{
    generate_synthetic_dataset, partition_blocks, write_dataset, Area, SyntheticSpec, VOCAB_FILE,
};
use metaseg_core::sampler::{index_categories, CategoryMode, SamplePool};
use serde::Serialize;

use super::{data_root, load_areas};
use crate::error::{io, CliError, Result};
use crate::manifest::RunManifest;
use crate::Globals;

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator spec (TOML); the built-in desk-scale layout when omitted.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Block edge used for the reported block counts.
    #[arg(long, default_value_t = 1.0)]
    pub block_size: f64,
}

#[derive(Debug, Serialize)]
struct AreaCounts {
    area: String,
    rooms: usize,
    points: usize,
    blocks: usize,
    room_types: BTreeMap<String, usize>,
}

fn count(area: &Area, block_size: f64) -> Result<AreaCounts> {
    let mut blocks = 0;
    let mut room_types = BTreeMap::new();
    for room in &area.rooms {
        blocks += partition_blocks(room, block_size)?.len();
        *room_types.entry(room.room_type.to_string()).or_insert(0) += 1;
    }
    Ok(AreaCounts {
        area: area.name.clone(),
        rooms: area.rooms.len(),
        points: area.rooms.iter().map(|r| r.points.len()).sum(),
        blocks,
        room_types,
    })
}

fn print_counts(counts: &[AreaCounts]) {
    for c in counts {
        let types: Vec<String> = c.room_types.iter().map(|(t, n)| format!("{t} {n}")).collect();
        println!(
            "{}: {} rooms, {} points, {} blocks ({})",
            c.area,
            c.rooms,
            c.points,
            c.blocks,
            types.join(", ")
        );
    }
    let rooms: usize = counts.iter().map(|c| c.rooms).sum();
    let blocks: usize = counts.iter().map(|c| c.blocks).sum();
    println!("total: {} areas, {rooms} rooms, {blocks} blocks", counts.len());
}

fn check_block_size(b: f64) -> Result<()> {
    if b > 0.0 && b.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("block size must be positive, got {b}")))
    }
}

fn load_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn synth(g: &Globals, args: SynthArgs) -> Result<()> {
    check_block_size(args.block_size)?;
    let out = g.out()?;
    let spec = match &args.spec {
        Some(p) => load_spec(p)?,
        None => SyntheticSpec::desk_default(),
    };
    spec.validate().map_err(|e| CliError::Usage(format!("invalid synthetic spec: {e}")))?;
    let seed = g.seed_or(0);
    let areas = generate_synthetic_dataset(&spec, seed)?;
    write_dataset(out, &areas)?;

    let counts = areas.iter().map(|a| count(a, args.block_size)).collect::<Result<Vec<_>>>()?;
    print_counts(&counts);

    #[derive(Serialize)]
    struct Settings<'a> {
        spec: &'a SyntheticSpec,
        seed: u64,
        block_size: f64,
    }
    let mut m = RunManifest::new(
        "synth",
        &Settings {
            spec: &spec,
            seed,
            block_size: args.block_size,
        },
    );
    m.seed("master", seed);
    if let Some(p) = &args.spec {
        m.input_file("spec", p)?;
    }
    m.output(out, Path::new(VOCAB_FILE))?;
    for area in &areas {
        for room in &area.rooms {
            m.output(out, &Path::new(&area.name).join(format!("{}.txt", room.name)))?;
        }
    }
    m.write(out, "counts.json", serde_json::to_string_pretty(&counts).expect("counts serialize"))?;
    m.save(out)
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dataset root; defaults to the config's `data.root`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Areas to load; defaults to the config's areas, else all.
    #[arg(long, value_delimiter = ',')]
    pub areas: Vec<String>,
    #[arg(long)]
    pub block_size: Option<f64>,
}

pub fn ingest(g: &Globals, args: IngestArgs) -> Result<()> {
    let cfg = g.run_config()?;
    let root = data_root(args.data.as_deref(), cfg.as_ref())?;
    let mut names = args.areas.clone();
    if names.is_empty() {
        if let Some(c) = &cfg {
            names.extend(c.data.train_areas.iter().chain(&c.data.test_areas).cloned());
            names.sort();
            names.dedup();
        }
    }
    let block_size = args.block_size.or(cfg.as_ref().map(|c| c.data.block_size)).unwrap_or(1.0);
    check_block_size(block_size)?;
    let (vocab, areas) = load_areas(&root, &names)?;
    let counts = areas.iter().map(|a| count(a, block_size)).collect::<Result<Vec<_>>>()?;
    println!("classes: {}", vocab.names().join(", "));
    print_counts(&counts);

    let pool = SamplePool::from_areas(&areas, block_size)?;
    let mut categories = BTreeMap::new();
    for mode in [CategoryMode::RoomType, CategoryMode::SemanticComposition] {
        let index = index_categories(&pool, mode)?;
        let sizes: BTreeMap<String, usize> = index.iter().map(|(n, s)| (n.to_string(), s.len())).collect();
        let listed: Vec<String> = sizes.iter().map(|(n, s)| format!("{n} {s}")).collect();
        let label = match mode {
            CategoryMode::RoomType => "room_type",
            CategoryMode::SemanticComposition => "semantic_composition",
        };
        println!("categories ({label}): {}", listed.join(", "));
        categories.insert(label, sizes);
    }

    if let Some(out) = &g.out {
        let area_names: Vec<&str> = areas.iter().map(|a| a.name.as_str()).collect();
        let mut m = RunManifest::new(
            "ingest",
            &serde_json::json!({ "areas": area_names, "block_size": block_size }),
        );
        for a in &area_names {
            m.input_tree(&format!("area/{a}"), &root.join(a))?;
        }
        m.input_file("classes", &root.join(VOCAB_FILE))?;
        let summary = serde_json::json!({ "areas": counts, "categories": categories });
        m.write(out, "summary.json", serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
        m.save(out)?;
    }
    Ok(())
}
