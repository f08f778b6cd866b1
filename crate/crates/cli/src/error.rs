use std::path::PathBuf;

use metaseg_core::config::ConfigError;
use metaseg_core::data::DataError;
use metaseg_core::meta::MetaError;
use metaseg_core::metrics::MetricsError;
use metaseg_core::model::ModelError;
use metaseg_core::sampler::SamplerError;
use thiserror::Error;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_CAPACITY: u8 = 4;
pub const EXIT_IO: u8 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("gradient check failed")]
    GradcheckFailed,
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}

fn data_code(e: &DataError) -> u8 {
    if e.is_io() {
        EXIT_IO
    } else {
        EXIT_USAGE
    }
}

fn sampler_code(e: &SamplerError) -> u8 {
    match e {
        SamplerError::Capacity { .. } => EXIT_CAPACITY,
        SamplerError::Data(d) => data_code(d),
        _ => EXIT_USAGE,
    }
}

fn model_code(e: &ModelError) -> u8 {
    match e {
        ModelError::Io(_) => EXIT_IO,
        ModelError::Config(_) | ModelError::Checkpoint(_) | ModelError::Precision { .. } | ModelError::InputWidth { .. } => {
            EXIT_USAGE
        }
        _ => EXIT_FAILURE,
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_IO,
            CliError::GradcheckFailed | CliError::Metrics(_) => EXIT_FAILURE,
            CliError::Data(e) => data_code(e),
            CliError::Sampler(e) => sampler_code(e),
            CliError::Model(e) => model_code(e),
            CliError::Meta(e) => match e {
                MetaError::Divergence { .. } => EXIT_DIVERGENCE,
                MetaError::Config(_) => EXIT_USAGE,
                // only the CLI's own observers fail, and only on writes
                MetaError::Observer(_) => EXIT_IO,
                MetaError::Sampler(s) => sampler_code(s),
                MetaError::Model(m) => model_code(m),
                _ => EXIT_FAILURE,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes() {
        let cap = SamplerError::Capacity {
            n: 2,
            needed: 12,
            eligible: 1,
            short: "WC has 3".into(),
        };
        assert_eq!(CliError::from(MetaError::Sampler(cap)).exit_code(), EXIT_CAPACITY);
        let div = MetaError::Divergence { step: 3, loss: f64::NAN };
        assert_eq!(CliError::from(div).exit_code(), EXIT_DIVERGENCE);
        let missing = DataError::Io {
            path: "x".into(),
            source: std::io::Error::from(std::io::ErrorKind::NotFound),
        };
        assert_eq!(CliError::from(missing).exit_code(), EXIT_IO);
        assert_eq!(CliError::from(DataError::Palette(4)).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Usage("no".into()).exit_code(), EXIT_USAGE);
    }
}
