//! The `report` verb: rebuild summaries from a run directory, optionally
//! re-thresholded.

use cellarc::eval::{EvalConfig, TaskResult};

use crate::commands::solve::{write_reports, RunManifest};
use crate::util::{load_results, CliError};
use crate::ReportArgs;

pub fn run(args: ReportArgs) -> Result<(), CliError> {
    // The manifest supplies the run's own thresholds and cost assumptions;
    // flags override them, and defaults cover runs with no manifest.
    let mut eval_cfg = read_manifest_eval(&args).unwrap_or_default();
    if let Some(t) = &args.thresholds {
        if t[0] > t[1] {
            return Err(CliError::ThresholdOrder {
                strict: t[0],
                loose: t[1],
            });
        }
        eval_cfg.strict_threshold = t[0];
        eval_cfg.loose_threshold = t[1];
    }
    if let Some(w) = args.power_watts {
        eval_cfg.power_watts = w;
    }
    if let Some(p) = args.price_per_kwh {
        eval_cfg.price_per_kwh = p;
    }

    let mut results = load_results(&args.out)?;
    rethreshold(&mut results, &eval_cfg);
    write_reports(&args.out, &results, &eval_cfg)
}

fn read_manifest_eval(args: &ReportArgs) -> Option<EvalConfig> {
    let text = std::fs::read_to_string(args.out.join("run_manifest.json")).ok()?;
    let manifest: RunManifest = serde_json::from_str(&text).ok()?;
    Some(manifest.eval)
}

/// Re-derives solved flags from each stored log-loss so the report always
/// matches the thresholds it prints.
fn rethreshold(results: &mut [TaskResult], cfg: &EvalConfig) {
    for r in results {
        if let Some(m) = r.metrics.as_mut() {
            (m.solved_strict, m.solved_loose) = cfg.classify(m.log_loss);
        }
    }
}
