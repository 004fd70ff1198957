//! Loading, validation, and padding of ARC-style grid tasks.
//!
//! A task is a JSON file with `train` and `test` arrays of `{input, output}`
//! grid pairs, each grid a row-major array of color indices `0..=9` with side
//! lengths `1..=30`. Everything downstream assumes those invariants, so they
//! are enforced here, once, at the boundary.
//!
//! Two dataset-shaping operations are provided:
//!
//! - [`filter_same_size`] keeps only tasks whose outputs match their inputs'
//!   shape (the cellular automaton writes in place and cannot resize).
//! - [`apply_max_padding`] embeds every grid in a fixed 30×30 canvas filled
//!   with a dedicated pad color, which makes *all* tasks same-size at the cost
//!   of an 11th palette entry.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::Deserialize;
use thiserror::Error;

/// Largest grid side length accepted by the loader.
pub const MAX_SIDE: usize = 30;
/// Largest color index that can appear in an ARC grid.
pub const MAX_COLOR: u8 = 9;
/// Color index used for padding cells; deliberately one past [`MAX_COLOR`]
/// so padded grids use an 11-entry palette and pad cells stay distinguishable.
pub const PAD_COLOR: u8 = 10;

/// Errors from constructing a single grid.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("grid is empty")]
    Empty,
    #[error("rows have differing lengths ({first} vs {other})")]
    Ragged { first: usize, other: usize },
    #[error("dimensions {height}x{width} outside 1..={max}", max = MAX_SIDE)]
    DimensionOutOfRange { height: usize, width: usize },
    #[error("cell value {0} out of range 0..={max}", max = PAD_COLOR)]
    ValueOutOfRange(i64),
}

/// Errors from loading or reshaping tasks.
#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("failed to parse {path}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("task {task_id}: cell value {value} out of range 0..={max}", max = MAX_COLOR)]
    ValueOutOfRange { task_id: String, value: i64 },
    #[error("task {task_id}: invalid grid")]
    Grid {
        task_id: String,
        #[source]
        source: GridError,
    },
    #[error("task {task_id} has no {section} pairs")]
    EmptySection {
        task_id: String,
        section: &'static str,
    },
    #[error("padding requested with policy mode {0:?}")]
    WrongPaddingMode(PaddingMode),
    #[error("task {task_id}: grid {height}x{width} exceeds padded canvas {pad_h}x{pad_w}")]
    ExceedsPadCanvas {
        task_id: String,
        height: usize,
        width: usize,
        pad_h: usize,
        pad_w: usize,
    },
}

/// A validated, rectangular color grid.
#[derive(Clone, PartialEq, Eq)]
pub struct Grid {
    cells: Array2<u8>,
}

impl Grid {
    /// Builds a grid from row-major data, enforcing rectangularity, side
    /// lengths `1..=30`, and values `0..=10` (pad color included).
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self, GridError> {
        let height = rows.len();
        if height == 0 {
            return Err(GridError::Empty);
        }
        let width = rows[0].len();
        if width == 0 {
            return Err(GridError::Empty);
        }
        for row in rows {
            if row.len() != width {
                return Err(GridError::Ragged {
                    first: width,
                    other: row.len(),
                });
            }
        }
        if height > MAX_SIDE || width > MAX_SIDE {
            return Err(GridError::DimensionOutOfRange { height, width });
        }
        let mut cells = Array2::zeros((height, width));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v > PAD_COLOR {
                    return Err(GridError::ValueOutOfRange(v as i64));
                }
                cells[[i, j]] = v;
            }
        }
        Ok(Grid { cells })
    }

    /// A grid of the given shape filled with a single color.
    pub fn filled(height: usize, width: usize, value: u8) -> Result<Self, GridError> {
        if height == 0 || width == 0 {
            return Err(GridError::Empty);
        }
        if height > MAX_SIDE || width > MAX_SIDE {
            return Err(GridError::DimensionOutOfRange { height, width });
        }
        if value > PAD_COLOR {
            return Err(GridError::ValueOutOfRange(value as i64));
        }
        Ok(Grid {
            cells: Array2::from_elem((height, width), value),
        })
    }

    pub fn height(&self) -> usize {
        self.cells.nrows()
    }

    pub fn width(&self) -> usize {
        self.cells.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.cells.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.cells[[row, col]]
    }

    pub fn cells(&self) -> &Array2<u8> {
        &self.cells
    }

    /// Largest color index present.
    pub fn max_color(&self) -> u8 {
        self.cells.iter().copied().max().unwrap_or(0)
    }

    /// Occurrence count per color index `0..=10`.
    pub fn color_counts(&self) -> [usize; PAD_COLOR as usize + 1] {
        let mut counts = [0usize; PAD_COLOR as usize + 1];
        for &v in &self.cells {
            counts[v as usize] += 1;
        }
        counts
    }

    /// Embeds the grid in the top-left corner of a `pad_h`×`pad_w` canvas
    /// filled with `pad_value`.
    fn padded(&self, pad_h: usize, pad_w: usize, pad_value: u8) -> Grid {
        let mut cells = Array2::from_elem((pad_h, pad_w), pad_value);
        cells
            .slice_mut(ndarray::s![..self.height(), ..self.width()])
            .assign(&self.cells);
        Grid { cells }
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Grid {}x{}", self.height(), self.width())?;
        for row in self.cells.rows() {
            for v in row {
                write!(f, "{v:X}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// One demonstration or test pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPair {
    pub input: Grid,
    pub output: Grid,
}

impl GridPair {
    /// True when the output grid has a different shape than the input.
    pub fn size_changing(&self) -> bool {
        self.input.dims() != self.output.dims()
    }
}

/// A full task: identifier plus demonstration and test pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRecord {
    pub task_id: String,
    pub train_pairs: Vec<GridPair>,
    pub test_pairs: Vec<GridPair>,
    /// True when any pair (train or test) changes grid shape.
    pub size_changing: bool,
}

impl TaskRecord {
    pub fn new(
        task_id: impl Into<String>,
        train_pairs: Vec<GridPair>,
        test_pairs: Vec<GridPair>,
    ) -> Result<Self, DatasetError> {
        let task_id = task_id.into();
        if train_pairs.is_empty() {
            return Err(DatasetError::EmptySection {
                task_id,
                section: "train",
            });
        }
        if test_pairs.is_empty() {
            return Err(DatasetError::EmptySection {
                task_id,
                section: "test",
            });
        }
        let size_changing = train_pairs
            .iter()
            .chain(&test_pairs)
            .any(GridPair::size_changing);
        Ok(TaskRecord {
            task_id,
            train_pairs,
            test_pairs,
            size_changing,
        })
    }

    /// Largest color index across all grids of the task.
    pub fn max_color(&self) -> u8 {
        self.train_pairs
            .iter()
            .chain(&self.test_pairs)
            .flat_map(|p| [p.input.max_color(), p.output.max_color()])
            .max()
            .unwrap_or(0)
    }
}

/// How a run treats tasks whose outputs differ in shape from their inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    /// Drop size-changing tasks; grids are encoded at their native size.
    IgnoreResizing,
    /// Keep every task and embed all grids in a fixed padded canvas.
    MaximalPadding,
}

/// Padding parameters for [`PaddingMode::MaximalPadding`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, Deserialize)]
pub struct PaddingPolicy {
    pub mode: PaddingMode,
    pub pad_value: u8,
    pub pad_to: (usize, usize),
}

impl PaddingPolicy {
    pub fn ignore_resizing() -> Self {
        PaddingPolicy {
            mode: PaddingMode::IgnoreResizing,
            pad_value: PAD_COLOR,
            pad_to: (MAX_SIDE, MAX_SIDE),
        }
    }

    pub fn maximal() -> Self {
        PaddingPolicy {
            mode: PaddingMode::MaximalPadding,
            pad_value: PAD_COLOR,
            pad_to: (MAX_SIDE, MAX_SIDE),
        }
    }
}

impl Default for PaddingPolicy {
    fn default() -> Self {
        PaddingPolicy::maximal()
    }
}

#[derive(Deserialize)]
struct RawPair {
    input: Vec<Vec<i64>>,
    output: Vec<Vec<i64>>,
}

#[derive(Deserialize)]
struct RawTask {
    train: Vec<RawPair>,
    test: Vec<RawPair>,
}

fn grid_from_raw(task_id: &str, raw: &[Vec<i64>]) -> Result<Grid, DatasetError> {
    // Range-check on i64 first so negative or huge values produce a value
    // error rather than a conversion artifact.
    let mut rows = Vec::with_capacity(raw.len());
    for raw_row in raw {
        let mut row = Vec::with_capacity(raw_row.len());
        for &v in raw_row {
            if !(0..=MAX_COLOR as i64).contains(&v) {
                return Err(DatasetError::ValueOutOfRange {
                    task_id: task_id.to_owned(),
                    value: v,
                });
            }
            row.push(v as u8);
        }
        rows.push(row);
    }
    Grid::from_rows(&rows).map_err(|source| DatasetError::Grid {
        task_id: task_id.to_owned(),
        source,
    })
}

/// Loads a single task from an ARC JSON file. The task id is the file stem.
pub fn load_task(path: &Path) -> Result<TaskRecord, DatasetError> {
    let task_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned());
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    let raw: RawTask = serde_json::from_str(&text).map_err(|source| DatasetError::Parse {
        path: path.to_owned(),
        source,
    })?;
    let convert = |raws: &[RawPair]| -> Result<Vec<GridPair>, DatasetError> {
        raws.iter()
            .map(|p| {
                Ok(GridPair {
                    input: grid_from_raw(&task_id, &p.input)?,
                    output: grid_from_raw(&task_id, &p.output)?,
                })
            })
            .collect()
    };
    let train_pairs = convert(&raw.train)?;
    let test_pairs = convert(&raw.test)?;
    TaskRecord::new(task_id, train_pairs, test_pairs)
}

/// Loads every `*.json` task in a directory, sorted by task id.
pub fn load_dataset(dir: &Path) -> Result<Vec<TaskRecord>, DatasetError> {
    let entries = std::fs::read_dir(dir).map_err(|source| DatasetError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_task(p)).collect()
}

/// Keeps only tasks where every pair preserves grid shape. Order and task
/// content are untouched.
pub fn filter_same_size(tasks: Vec<TaskRecord>) -> Vec<TaskRecord> {
    tasks.into_iter().filter(|t| !t.size_changing).collect()
}

/// Pads every grid of the task to the policy's canvas, anchored top-left.
///
/// The result is never size-changing: all grids share the canvas shape.
pub fn apply_max_padding(
    task: &TaskRecord,
    policy: &PaddingPolicy,
) -> Result<TaskRecord, DatasetError> {
    if policy.mode != PaddingMode::MaximalPadding {
        return Err(DatasetError::WrongPaddingMode(policy.mode));
    }
    let (pad_h, pad_w) = policy.pad_to;
    let pad_grid = |g: &Grid| -> Result<Grid, DatasetError> {
        let (h, w) = g.dims();
        if h > pad_h || w > pad_w {
            return Err(DatasetError::ExceedsPadCanvas {
                task_id: task.task_id.clone(),
                height: h,
                width: w,
                pad_h,
                pad_w,
            });
        }
        Ok(g.padded(pad_h, pad_w, policy.pad_value))
    };
    let pad_pairs = |pairs: &[GridPair]| -> Result<Vec<GridPair>, DatasetError> {
        pairs
            .iter()
            .map(|p| {
                Ok(GridPair {
                    input: pad_grid(&p.input)?,
                    output: pad_grid(&p.output)?,
                })
            })
            .collect()
    };
    TaskRecord::new(
        task.task_id.clone(),
        pad_pairs(&task.train_pairs)?,
        pad_pairs(&task.test_pairs)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_task(dir: &Path, name: &str, json: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(json.as_bytes()).unwrap();
        path
    }

    const MINIMAL: &str = r#"{
        "train": [
            {"input": [[0, 1], [2, 3]], "output": [[3, 2], [1, 0]]},
            {"input": [[5]], "output": [[6]]}
        ],
        "test": [
            {"input": [[9, 9]], "output": [[0, 0]]}
        ]
    }"#;

    #[test]
    fn loads_minimal_task() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_task(dir.path(), "aabbccdd.json", MINIMAL);
        let task = load_task(&path).unwrap();
        assert_eq!(task.task_id, "aabbccdd");
        assert_eq!(task.train_pairs.len(), 2);
        assert_eq!(task.test_pairs.len(), 1);
        assert_eq!(task.train_pairs[0].input.get(1, 0), 2);
        assert_eq!(task.train_pairs[0].output.get(0, 1), 2);
        assert!(!task.size_changing);
        assert_eq!(task.max_color(), 9);
    }

    #[test]
    fn rejects_out_of_range_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_task(
            dir.path(),
            "bad.json",
            r#"{"train": [{"input": [[10]], "output": [[0]]}],
                "test": [{"input": [[0]], "output": [[0]]}]}"#,
        );
        match load_task(&path) {
            Err(DatasetError::ValueOutOfRange { value: 10, .. }) => {}
            other => panic!("expected value error, got {other:?}"),
        }
        let path = write_task(
            dir.path(),
            "neg.json",
            r#"{"train": [{"input": [[-1]], "output": [[0]]}],
                "test": [{"input": [[0]], "output": [[0]]}]}"#,
        );
        assert!(matches!(
            load_task(&path),
            Err(DatasetError::ValueOutOfRange { value: -1, .. })
        ));
    }

    #[test]
    fn rejects_oversized_and_ragged_grids() {
        let big_row = vec![0i64; 31];
        let json = format!(
            r#"{{"train": [{{"input": [{row}], "output": [[0]]}}],
                 "test": [{{"input": [[0]], "output": [[0]]}}]}}"#,
            row = serde_json::to_string(&big_row).unwrap()
        );
        let dir = tempfile::tempdir().unwrap();
        let path = write_task(dir.path(), "wide.json", &json);
        assert!(matches!(
            load_task(&path),
            Err(DatasetError::Grid {
                source: GridError::DimensionOutOfRange {
                    height: 1,
                    width: 31
                },
                ..
            })
        ));

        assert_eq!(
            Grid::from_rows(&[vec![0, 1], vec![2]]),
            Err(GridError::Ragged { first: 2, other: 1 })
        );
        assert_eq!(Grid::from_rows(&[]), Err(GridError::Empty));
    }

    #[test]
    fn rejects_missing_sections() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_task(
            dir.path(),
            "no_test.json",
            r#"{"train": [{"input": [[0]], "output": [[0]]}], "test": []}"#,
        );
        assert!(matches!(
            load_task(&path),
            Err(DatasetError::EmptySection {
                section: "test",
                ..
            })
        ));
        let path = write_task(dir.path(), "no_train_key.json", r#"{"test": []}"#);
        assert!(matches!(load_task(&path), Err(DatasetError::Parse { .. })));
    }

    #[test]
    fn flags_size_changing_tasks_and_filters_them() {
        let dir = tempfile::tempdir().unwrap();
        write_task(
            dir.path(),
            "b_resize.json",
            r#"{"train": [{"input": [[1, 1, 1], [1, 1, 1], [1, 1, 1]],
                           "output": [[1, 1, 1, 1, 1], [1, 1, 1, 1, 1], [1, 1, 1, 1, 1],
                                      [1, 1, 1, 1, 1], [1, 1, 1, 1, 1]]}],
                "test": [{"input": [[1]], "output": [[1]]}]}"#,
        );
        write_task(dir.path(), "a_same.json", MINIMAL);
        let tasks = load_dataset(dir.path()).unwrap();
        // Sorted by id regardless of directory order.
        assert_eq!(tasks[0].task_id, "a_same");
        assert_eq!(tasks[1].task_id, "b_resize");
        assert!(tasks[1].size_changing);

        let kept = filter_same_size(tasks);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].task_id, "a_same");
        // Idempotent: filtering again changes nothing.
        let again = filter_same_size(kept.clone());
        assert_eq!(again, kept);
    }

    #[test]
    fn maximal_padding_fills_canvas_with_pad_color() {
        let input = Grid::from_rows(&[vec![1, 1, 1], vec![1, 1, 1], vec![1, 1, 1]]).unwrap();
        let output = Grid::filled(5, 5, 2).unwrap();
        let task = TaskRecord::new(
            "t",
            vec![GridPair {
                input: input.clone(),
                output,
            }],
            vec![GridPair {
                input: input.clone(),
                output: input,
            }],
        )
        .unwrap();
        assert!(task.size_changing);

        let padded = apply_max_padding(&task, &PaddingPolicy::maximal()).unwrap();
        assert!(!padded.size_changing);
        let pg = &padded.train_pairs[0].input;
        assert_eq!(pg.dims(), (30, 30));
        // Content kept top-left, the rest is pad color: 9 ones + 891 pads.
        let counts = pg.color_counts();
        assert_eq!(counts[1], 9);
        assert_eq!(counts[PAD_COLOR as usize], 900 - 9);
        assert_eq!(pg.get(0, 0), 1);
        assert_eq!(pg.get(2, 2), 1);
        assert_eq!(pg.get(3, 3), PAD_COLOR);
        assert_eq!(pg.get(29, 29), PAD_COLOR);

        let wrong = apply_max_padding(&padded, &PaddingPolicy::ignore_resizing());
        assert!(matches!(wrong, Err(DatasetError::WrongPaddingMode(_))));
    }
}
