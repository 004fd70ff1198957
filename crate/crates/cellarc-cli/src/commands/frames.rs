//! The `frames` verb: visualize a checkpointed model's rollout on a task.

use cellarc::checkpoint::load_checkpoint;
use cellarc::codec::{encode_grid, Palette};
use cellarc::dataset::{apply_max_padding, load_task, PaddingPolicy};
use cellarc::frames::{export_frames, record_rollout};
use cellarc::trainer::derive_stream_seed;

use crate::util::CliError;
use crate::FramesArgs;

pub fn run(args: FramesArgs) -> Result<(), CliError> {
    let (trained, palette_size) = load_checkpoint(&args.checkpoint)?;
    let palette = Palette::new(palette_size as usize)?;

    let mut task = load_task(&args.task)?;
    if trained.variant.maximal_padding {
        task = apply_max_padding(&task, &PaddingPolicy::maximal())?;
    }
    let count = task.test_pairs.len();
    let pair = task
        .test_pairs
        .get(args.pair)
        .ok_or(CliError::PairOutOfRange {
            pair: args.pair,
            count,
        })?;

    let x0 = encode_grid::<f32>(&pair.input, &palette)?;
    let states = record_rollout(
        &trained.model,
        x0,
        args.steps,
        derive_stream_seed(trained.seed, "frames"),
    );
    let export = export_frames(&states, &args.out, args.scale, !args.no_gif)?;

    println!(
        "[{}] {}: wrote {} frames to {}",
        trained.variant.name,
        task.task_id,
        export.png_paths.len(),
        args.out.display()
    );
    if let Some(gif) = export.gif_path {
        println!("animation: {}", gif.display());
    }
    Ok(())
}
