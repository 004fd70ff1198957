//! The `solve` verb: train → checkpoint → score → report, resumable.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use cellarc::checkpoint::save_checkpoint;
use cellarc::codec::Palette;
use cellarc::dataset::{
    apply_max_padding, filter_same_size, load_dataset, PaddingMode, PaddingPolicy, TaskRecord,
};
use cellarc::engram::{VariantName, VariantSpec};
use cellarc::eval::{score_task, summarize, EvalConfig, TaskResult};
use cellarc::report::{render_csv, render_markdown};
use cellarc::trainer::{derive_task_seed, train_task, TrainConfig};

use crate::util::{atomic_write_bytes, atomic_write_json, io_err, load_results, CliError};
use crate::SolveArgs;

/// Everything fixed at launch, persisted before any training starts.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub dataset: String,
    pub variants: Vec<VariantName>,
    pub padding: PaddingMode,
    pub seed: u64,
    pub eval: EvalConfig,
    /// Per-task configs swap in the derived task seed; everything else is
    /// taken verbatim from this template.
    pub train_defaults: TrainConfig,
    pub tasks_per_variant: BTreeMap<String, usize>,
}

struct Job {
    spec: VariantSpec,
    task: TaskRecord,
    palette: Palette,
}

struct RunDirs {
    checkpoints: PathBuf,
    results: PathBuf,
    logs: PathBuf,
}

enum Outcome {
    Skipped,
    Scored { solved_loose: bool },
    Failed,
}

pub fn run(args: SolveArgs) -> Result<(), CliError> {
    let (strict, loose) = (args.thresholds[0], args.thresholds[1]);
    if strict > loose {
        return Err(CliError::ThresholdOrder { strict, loose });
    }
    let mut variants: Vec<VariantName> = Vec::new();
    for v in &args.variants {
        if !variants.contains(v) {
            variants.push(*v);
        }
    }
    if variants.is_empty() {
        return Err(CliError::NoVariants);
    }

    let eval_cfg = EvalConfig {
        strict_threshold: strict,
        loose_threshold: loose,
        power_watts: args.power_watts,
        price_per_kwh: args.price_per_kwh,
        ..EvalConfig::default()
    };
    let train_defaults = TrainConfig {
        seed: args.seed,
        iterations: args.iterations,
        ..TrainConfig::default()
    };

    let base = load_dataset(&args.dataset)?;
    if base.is_empty() {
        return Err(CliError::NoTasks(args.dataset.clone()));
    }
    let cli_mode: PaddingMode = args.padding.into();

    // Task sets by effective padding. Variants that train on padded grids
    // always use the padded set with its extra pad color; the rest follow
    // the --padding flag.
    let same_size = filter_same_size(base.clone());
    let needs_padded = variants
        .iter()
        .any(|&v| VariantSpec::of(v).maximal_padding)
        || cli_mode == PaddingMode::MaximalPadding;
    let padded: Vec<TaskRecord> = if needs_padded {
        let policy = PaddingPolicy::maximal();
        base.iter()
            .map(|t| apply_max_padding(t, &policy))
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    let mut jobs = Vec::new();
    let mut tasks_per_variant = BTreeMap::new();
    for &name in &variants {
        let spec = VariantSpec::of(name);
        let padded_run = spec.maximal_padding || cli_mode == PaddingMode::MaximalPadding;
        let (tasks, palette) = if padded_run {
            (&padded, Palette::arc_padded())
        } else {
            (&same_size, Palette::arc())
        };
        tasks_per_variant.insert(name.as_str().to_string(), tasks.len());
        for task in tasks {
            jobs.push(Job {
                spec: spec.clone(),
                task: task.clone(),
                palette: palette.clone(),
            });
        }
    }
    jobs.sort_by(|a, b| {
        (a.spec.name.as_str(), a.task.task_id.as_str())
            .cmp(&(b.spec.name.as_str(), b.task.task_id.as_str()))
    });

    let dirs = RunDirs {
        checkpoints: args.out.join("checkpoints"),
        results: args.out.join("results"),
        logs: args.out.join("logs"),
    };
    for &name in &variants {
        for root in [&dirs.checkpoints, &dirs.results, &dirs.logs] {
            let dir = root.join(name.as_str());
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
    }

    let manifest = RunManifest {
        schema_version: cellarc::eval::RESULT_SCHEMA_VERSION,
        dataset: args.dataset.display().to_string(),
        variants: variants.clone(),
        padding: cli_mode,
        seed: args.seed,
        eval: eval_cfg.clone(),
        train_defaults: train_defaults.clone(),
        tasks_per_variant,
    };
    atomic_write_json(&args.out.join("run_manifest.json"), &manifest)?;

    println!(
        "solving {} tasks × variants [{}] → {} jobs, out: {}",
        base.len(),
        variants
            .iter()
            .map(|v| v.as_str())
            .collect::<Vec<_>>()
            .join(", "),
        jobs.len(),
        args.out.display()
    );

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    let outcomes: Vec<Outcome> = pool.install(|| {
        jobs.par_iter()
            .map(|job| process_job(job, &dirs, &args, &train_defaults, &eval_cfg))
            .collect()
    });

    let skipped = outcomes.iter().filter(|o| matches!(o, Outcome::Skipped)).count();
    let failed = outcomes.iter().filter(|o| matches!(o, Outcome::Failed)).count();
    let solved = outcomes
        .iter()
        .filter(|o| matches!(o, Outcome::Scored { solved_loose: true }))
        .count();
    println!(
        "done: {} jobs ({} solved loose this run, {} failed, {} resumed from disk)",
        jobs.len(),
        solved,
        failed,
        skipped
    );

    let results = load_results(&args.out)?;
    write_reports(&args.out, &results, &eval_cfg)
}

fn process_job(
    job: &Job,
    dirs: &RunDirs,
    args: &SolveArgs,
    train_defaults: &TrainConfig,
    eval_cfg: &EvalConfig,
) -> Outcome {
    let variant = job.spec.name;
    let task_id = job.task.task_id.as_str();
    let result_path = dirs
        .results
        .join(variant.as_str())
        .join(format!("{task_id}.json"));
    if result_path.exists() && !args.force {
        return Outcome::Skipped;
    }

    let task_seed = derive_task_seed(args.seed, task_id);
    let cfg = TrainConfig {
        seed: task_seed,
        ..train_defaults.clone()
    };

    let result = train_and_score(job, dirs, &cfg, eval_cfg);
    let outcome = match &result {
        r if r.is_ok() => {
            let m = r.metrics.as_ref().expect("ok result has metrics");
            println!(
                "[{variant}] {task_id}: log-loss {:.2}, strict {}, loose {}, exact {}, {:.1}s",
                m.log_loss,
                m.solved_strict,
                m.solved_loose,
                m.exact_match,
                m.wall_seconds_train + m.wall_seconds_eval,
            );
            Outcome::Scored {
                solved_loose: m.solved_loose,
            }
        }
        r => {
            println!(
                "[{variant}] {task_id}: FAILED — {}",
                r.error.as_deref().unwrap_or("unknown error")
            );
            Outcome::Failed
        }
    };

    if let Err(e) = atomic_write_json(&result_path, &result) {
        println!("[{variant}] {task_id}: could not write result: {e}");
        return Outcome::Failed;
    }
    outcome
}

fn train_and_score(
    job: &Job,
    dirs: &RunDirs,
    cfg: &TrainConfig,
    eval_cfg: &EvalConfig,
) -> TaskResult {
    let variant = job.spec.name;
    let task_id = job.task.task_id.as_str();
    let fail = |msg: String| TaskResult::failure(task_id, variant, cfg.seed, msg);

    let log_path = dirs
        .logs
        .join(variant.as_str())
        .join(format!("{task_id}.jsonl"));
    let mut log_file = match fs::File::create(&log_path) {
        Ok(f) => BufWriter::new(f),
        Err(e) => return fail(format!("could not open training log: {e}")),
    };

    let trained = match train_task::<f32>(
        &job.task,
        &job.spec,
        cfg,
        &job.palette,
        Some(&mut log_file),
    ) {
        Ok(t) => t,
        Err(e) => return fail(format!("training failed: {e}")),
    };

    let ckpt_path = dirs
        .checkpoints
        .join(variant.as_str())
        .join(format!("{task_id}.ckpt"));
    let ckpt_tmp = crate::util::tmp_path(&ckpt_path);
    if let Err(e) = save_checkpoint(&ckpt_tmp, &trained, job.palette.len() as u32)
        .map_err(CliError::from)
        .and_then(|()| fs::rename(&ckpt_tmp, &ckpt_path).map_err(io_err(&ckpt_path)))
    {
        return fail(format!("could not write checkpoint: {e}"));
    }

    match score_task(&trained, &job.task, eval_cfg, &job.palette) {
        Ok(result) => result,
        Err(e) => fail(format!("scoring failed: {e}")),
    }
}

/// Renders report.md / report.csv from results and prints the markdown.
pub fn write_reports(
    out: &Path,
    results: &[TaskResult],
    eval_cfg: &EvalConfig,
) -> Result<(), CliError> {
    let report = summarize(results, eval_cfg)?;
    let md = render_markdown(&report);
    atomic_write_bytes(&out.join("report.md"), md.as_bytes())?;
    atomic_write_bytes(&out.join("report.csv"), render_csv(&report).as_bytes())?;
    print!("{md}");
    Ok(())
}
