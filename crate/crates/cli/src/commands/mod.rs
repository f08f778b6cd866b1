mod data;
mod eval;
mod export;
mod gradcheck;
mod train;

use std::path::{Path, PathBuf};

use metaseg_core::config::RunConfig;
use metaseg_core::data::{list_areas, load_dataset, Area, ClassVocab};

pub use data::{ingest, synth, IngestArgs, SynthArgs};
pub use eval::{adapt_eval, cross_validate, AdaptEvalArgs, CrossValidateArgs};
pub use export::{export_ply, ExportPlyArgs};
pub use gradcheck::{gradcheck, GradcheckArgs};
pub use train::pretrain;

use crate::error::{CliError, Result};

/// Dataset root from the flag, else from the config file.
fn data_root(flag: Option<&Path>, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    let root = flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.map(|c| c.data.root.clone()))
        .ok_or_else(|| CliError::Usage("no dataset given: pass --data or --config".into()))?;
    if !root.is_dir() {
        return Err(CliError::Usage(format!("dataset root {} does not exist", root.display())));
    }
    Ok(root)
}

fn load_areas(root: &Path, names: &[String]) -> Result<(ClassVocab, Vec<Area>)> {
    let names = if names.is_empty() { list_areas(root)? } else { names.to_vec() };
    for n in &names {
        if !root.join(n).is_dir() {
            return Err(CliError::Usage(format!("no area {n} under {}", root.display())));
        }
    }
    Ok(load_dataset(root, &names)?)
}
