use std::path::{Path, PathBuf};

use clap::Args;
use metaseg_core::data::{
    featurize_block, load_room, partition_blocks, ply_text, ClassVocab, Palette, VOCAB_FILE,
};
use metaseg_core::model::{load_checkpoint, peek_checkpoint, predict_labels, predict_logits, ModelParams};
use metaseg_core::tensor::{Precision, Scalar};

use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::Globals;

#[derive(Debug, Args)]
pub struct ExportPlyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Room file inside a dataset area directory.
    #[arg(long)]
    pub room: PathBuf,
    /// Class vocabulary; defaults to `classes.txt` in the dataset root
    /// above the room's area.
    #[arg(long)]
    pub classes: Option<PathBuf>,
    /// `class_id r g b` lines; must cover every class.
    #[arg(long)]
    pub palette: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub block_size: f64,
}

fn default_vocab_path(room: &Path) -> PathBuf {
    room.parent()
        .and_then(Path::parent)
        .map(|root| root.join(VOCAB_FILE))
        .unwrap_or_else(|| PathBuf::from(VOCAB_FILE))
}

/// Every point of every block is predicted; no resampling, so the PLY
/// vertex counts add up to the room's point count.
pub fn export_ply(g: &Globals, args: ExportPlyArgs) -> Result<()> {
    if !(args.block_size > 0.0 && args.block_size.is_finite()) {
        return Err(CliError::Usage(format!("block size must be positive, got {}", args.block_size)));
    }
    let out = g.out()?;
    let vocab_path = args.classes.clone().unwrap_or_else(|| default_vocab_path(&args.room));
    let vocab = ClassVocab::load(&vocab_path)?;
    let palette = match &args.palette {
        Some(p) => {
            let palette = Palette::load(p).map_err(|e| CliError::Usage(format!("palette: {e}")))?;
            if palette.len() < vocab.len() {
                let missing = vocab.name(palette.len()).unwrap_or("?");
                return Err(CliError::Usage(format!(
                    "palette {} has no colour for class {} ({missing})",
                    p.display(),
                    palette.len()
                )));
            }
            palette
        }
        None => Palette::default_for(vocab.len()),
    };
    let mut m = RunManifest::new(
        "export-ply",
        &serde_json::json!({ "block_size": args.block_size, "room": args.room.file_stem().map(|s| s.to_string_lossy()) }),
    );
    m.input_file("checkpoint", &args.checkpoint)?;
    m.input_file("room", &args.room)?;
    m.input_file("classes", &vocab_path)?;
    if let Some(p) = &args.palette {
        m.input_file("palette", p)?;
    }
    let written = match peek_checkpoint(&args.checkpoint)?.precision {
        Precision::F32 => export_as::<f32>(&args, &vocab, &palette, out, &mut m)?,
        Precision::F64 => export_as::<f64>(&args, &vocab, &palette, out, &mut m)?,
    };
    println!("wrote {written} PLY files to {}", out.display());
    m.save(out)
}

fn export_as<T: Scalar>(
    args: &ExportPlyArgs,
    vocab: &ClassVocab,
    palette: &Palette,
    out: &Path,
    m: &mut RunManifest,
) -> Result<usize> {
    let model: ModelParams<T> = load_checkpoint(&args.checkpoint)?;
    if model.config.num_classes != vocab.len() {
        return Err(CliError::Usage(format!(
            "checkpoint predicts {} classes but the vocabulary has {}",
            model.config.num_classes,
            vocab.len()
        )));
    }
    let room = load_room(&args.room, vocab)?;
    let blocks = partition_blocks(&room, args.block_size)?;
    let mut written = 0;
    for block in &blocks {
        let features = featurize_block(block, &room)?.to_tensor::<T>();
        let predicted = predict_labels(&predict_logits(&model, &features)?);
        let stem = format!("{}_{}_{}", room.name, block.cell.0, block.cell.1);
        m.write(out, format!("{stem}_pred.ply"), ply_text(block, &predicted, palette)?)?;
        m.write(out, format!("{stem}_truth.ply"), ply_text(block, &block.labels, palette)?)?;
        written += 2;
    }
    Ok(written)
}
