//! The `dataset-stats` verb: quick shape of a task directory.

use cellarc::dataset::load_dataset;

use crate::util::CliError;
use crate::StatsArgs;

pub fn run(args: StatsArgs) -> Result<(), CliError> {
    let tasks = load_dataset(&args.dataset)?;
    if tasks.is_empty() {
        return Err(CliError::NoTasks(args.dataset.clone()));
    }

    let total = tasks.len();
    let size_changing = tasks.iter().filter(|t| t.size_changing).count();
    let train_pairs: usize = tasks.iter().map(|t| t.train_pairs.len()).sum();
    let test_pairs: usize = tasks.iter().map(|t| t.test_pairs.len()).sum();
    let max_color = tasks.iter().map(|t| t.max_color()).max().unwrap_or(0);

    let mut min_side = usize::MAX;
    let mut max_side = 0usize;
    for task in &tasks {
        for pair in task.train_pairs.iter().chain(&task.test_pairs) {
            for grid in [&pair.input, &pair.output] {
                min_side = min_side.min(grid.height()).min(grid.width());
                max_side = max_side.max(grid.height()).max(grid.width());
            }
        }
    }

    println!("dataset: {}", args.dataset.display());
    println!("tasks: {total}");
    println!(
        "size-preserving: {} (kept by --padding ignore)",
        total - size_changing
    );
    println!("size-changing: {size_changing} (kept only by --padding max)");
    println!("demonstration pairs: {train_pairs}, test pairs: {test_pairs}");
    println!("grid sides: {min_side}..{max_side}, highest color index: {max_color}");
    Ok(())
}
