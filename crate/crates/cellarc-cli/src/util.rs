//! Shared CLI plumbing: error type, atomic writes, results loading.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use cellarc::checkpoint::CheckpointError;
use cellarc::codec::CodecError;
use cellarc::dataset::DatasetError;
use cellarc::eval::{EvalError, TaskResult};
use cellarc::frames::FrameError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Frames(#[from] FrameError),
    #[error("i/o failed on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("could not parse {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("no tasks found in {0}")]
    NoTasks(PathBuf),
    #[error("no variants requested")]
    NoVariants,
    #[error("strict threshold {strict} must not exceed loose threshold {loose}")]
    ThresholdOrder { strict: f64, loose: f64 },
    #[error("no results under {0}; run `cellarc solve` first")]
    NoResults(PathBuf),
    #[error("task has {count} test pairs, pair index {pair} is out of range")]
    PairOutOfRange { pair: usize, count: usize },
    #[error("could not build the worker pool: {0}")]
    Pool(String),
}

pub fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Writes `bytes` to `path` through a same-directory temp file and a rename,
/// so readers never observe a half-written file.
pub fn atomic_write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = tmp_path(path);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Pretty-prints `value` as JSON (newline-terminated) and writes it atomically.
pub fn atomic_write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable value");
    text.push('\n');
    atomic_write_bytes(path, text.as_bytes())
}

pub fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

/// Loads every task result under `<out>/results/<variant>/<task>.json`,
/// sorted by variant then task id so downstream output is deterministic.
pub fn load_results(out: &Path) -> Result<Vec<TaskResult>, CliError> {
    let results_dir = out.join("results");
    if !results_dir.is_dir() {
        return Err(CliError::NoResults(out.to_owned()));
    }
    let mut results = Vec::new();
    let mut variant_dirs: Vec<PathBuf> = fs::read_dir(&results_dir)
        .map_err(io_err(&results_dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    variant_dirs.sort();
    for dir in variant_dirs {
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(io_err(&dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        files.sort();
        for file in files {
            let text = fs::read_to_string(&file).map_err(io_err(&file))?;
            let result: TaskResult =
                serde_json::from_str(&text).map_err(|source| CliError::Json {
                    path: file.clone(),
                    source,
                })?;
            results.push(result);
        }
    }
    if results.is_empty() {
        return Err(CliError::NoResults(out.to_owned()));
    }
    Ok(results)
}
