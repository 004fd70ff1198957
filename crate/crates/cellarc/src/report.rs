//! Rendering run summaries for humans (markdown) and spreadsheets (CSV).
//!
//! All loss figures are **natural logarithms** of mean squared error; the
//! rendered tables repeat that so a reader never mistakes them for log10.

use std::fmt::Write as _;

use crate::eval::{RunReport, UnionSummary, VariantSummary};

fn fmt_log_loss(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        "—".into()
    }
}

fn fmt_pct(v: f64) -> String {
    format!("{:.1}%", v * 100.0)
}

fn fmt_wall(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.1}")
    } else {
        "—".into()
    }
}

fn fmt_cost(v: f64) -> String {
    if v.is_finite() {
        format!("${v:.6}")
    } else {
        "—".into()
    }
}

fn union_label(u: &UnionSummary, sep: &str) -> String {
    u.variants
        .iter()
        .map(|v| v.as_str())
        .collect::<Vec<_>>()
        .join(sep)
}

/// Human-readable run summary.
pub fn render_markdown(report: &RunReport) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Per-task training summary");
    let _ = writeln!(md);
    let _ = writeln!(
        md,
        "Loss figures are **natural-log** mean squared errors. A task counts as \
         solved when ln(MSE) ≤ {:.1} (strict) or ≤ {:.1} (loose); thresholds are \
         inclusive and failed tasks count as unsolved.",
        report.strict_threshold, report.loose_threshold
    );
    let _ = writeln!(md);
    let _ = writeln!(md, "## Variants");
    let _ = writeln!(md);
    let _ = writeln!(
        md,
        "| variant | tasks | errors | mean log(loss) | solved ≤ {:.1} | solved ≤ {:.1} | exact | mean wall s/task | cost $/task |",
        report.strict_threshold, report.loose_threshold
    );
    let _ = writeln!(md, "|---|---:|---:|---:|---:|---:|---:|---:|---:|");
    for v in &report.variants {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            v.variant.as_str(),
            v.tasks,
            v.errors,
            fmt_log_loss(v.mean_log_loss),
            fmt_pct(v.solve_rate_strict),
            fmt_pct(v.solve_rate_loose),
            fmt_pct(v.exact_rate),
            fmt_wall(v.mean_wall_seconds),
            fmt_cost(v.cost_per_task_usd),
        );
    }
    if !report.unions.is_empty() {
        let _ = writeln!(md);
        let _ = writeln!(md, "## Unions");
        let _ = writeln!(md);
        let _ = writeln!(
            md,
            "A union solves a task when any member solves it; its mean log(loss) \
             is the arithmetic mean of the members' means."
        );
        let _ = writeln!(md);
        let _ = writeln!(
            md,
            "| ensemble | mean log(loss) | solved ≤ {:.1} | solved ≤ {:.1} |",
            report.strict_threshold, report.loose_threshold
        );
        let _ = writeln!(md, "|---|---:|---:|---:|");
        for u in &report.unions {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} |",
                union_label(u, " ∪ "),
                fmt_log_loss(u.mean_log_loss),
                fmt_pct(u.solve_rate_strict),
                fmt_pct(u.solve_rate_loose),
            );
        }
    }
    let _ = writeln!(md);
    let _ = writeln!(
        md,
        "Cost assumes {:.0} W draw at ${:.2}/kWh.",
        report.power_watts, report.price_per_kwh
    );
    md
}

fn csv_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn csv_variant_row(v: &VariantSummary) -> String {
    format!(
        "{},variant,{},{},{},{},{},{},{},{}",
        v.variant.as_str(),
        v.tasks,
        v.errors,
        csv_num(v.mean_log_loss),
        csv_num(v.solve_rate_strict),
        csv_num(v.solve_rate_loose),
        csv_num(v.exact_rate),
        csv_num(v.mean_wall_seconds),
        csv_num(v.cost_per_task_usd),
    )
}

fn csv_union_row(u: &UnionSummary) -> String {
    format!(
        "{},union,,,{},{},{},,,",
        union_label(u, "+"),
        csv_num(u.mean_log_loss),
        csv_num(u.solve_rate_strict),
        csv_num(u.solve_rate_loose),
    )
}

/// Machine-readable run summary: one row per variant, one per union.
/// Rates are fractions (0..1), losses are natural logs, at full precision.
pub fn render_csv(report: &RunReport) -> String {
    let mut csv = String::from(
        "name,kind,tasks,errors,mean_log_loss,solve_rate_strict,solve_rate_loose,\
         exact_rate,mean_wall_seconds,cost_usd_per_task\n",
    );
    for v in &report.variants {
        csv.push_str(&csv_variant_row(v));
        csv.push('\n');
    }
    for u in &report.unions {
        csv.push_str(&csv_union_row(u));
        csv.push('\n');
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engram::VariantName;
    use crate::eval::RESULT_SCHEMA_VERSION;

    fn sample_report() -> RunReport {
        RunReport {
            schema_version: RESULT_SCHEMA_VERSION,
            strict_threshold: -7.0,
            loose_threshold: -6.0,
            power_watts: 200.0,
            price_per_kwh: 0.37,
            variants: vec![
                VariantSummary {
                    variant: VariantName::Nca,
                    tasks: 262,
                    errors: 0,
                    mean_log_loss: -4.31,
                    solve_rate_strict: 0.107,
                    solve_rate_loose: 0.156,
                    exact_rate: 0.095,
                    mean_wall_seconds: 60.0,
                    cost_per_task_usd: 1.2333333333333334e-3,
                },
                VariantSummary {
                    variant: VariantName::V1,
                    tasks: 262,
                    errors: 2,
                    mean_log_loss: -3.63,
                    solve_rate_strict: 0.065,
                    solve_rate_loose: 0.099,
                    exact_rate: 0.05,
                    mean_wall_seconds: 80.0,
                    cost_per_task_usd: 1.6444444444444446e-3,
                },
            ],
            unions: vec![UnionSummary {
                variants: vec![VariantName::Nca, VariantName::V1],
                mean_log_loss: -3.97,
                solve_rate_strict: 0.145,
                solve_rate_loose: 0.187,
            }],
        }
    }

    #[test]
    fn markdown_lays_out_variant_and_union_tables() {
        let md = render_markdown(&sample_report());
        assert!(md.contains("natural-log"));
        assert!(md.contains("| NCA | 262 | 0 | -4.31 | 10.7% | 15.6% | 9.5% | 60.0 | $0.001233 |"));
        assert!(md.contains("| v1 | 262 | 2 | -3.63 | 6.5% |"));
        assert!(md.contains("| NCA ∪ v1 | -3.97 | 14.5% | 18.7% |"));
        assert!(md.contains("solved ≤ -7.0"));
        assert!(md.contains("200 W draw at $0.37/kWh"));
    }

    #[test]
    fn csv_rows_keep_full_precision_and_plus_labels() {
        let csv = render_csv(&sample_report());
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("name,kind,tasks"));
        assert!(lines[1].starts_with("NCA,variant,262,0,-4.31,0.107,0.156,"));
        // Costs keep enough digits to round-trip exactly.
        let cost: f64 = lines[1].split(',').next_back().unwrap().parse().unwrap();
        assert_eq!(cost, 1.2333333333333334e-3);
        assert!(lines[3].starts_with("NCA+v1,union,,,-3.97,0.145,0.187"));
        // Every row has the same column count.
        for line in &lines {
            assert_eq!(line.matches(',').count(), 9, "bad row: {line}");
        }
    }

    #[test]
    fn missing_aggregates_render_as_blanks_not_nan() {
        let mut report = sample_report();
        report.variants[0].mean_log_loss = f64::NAN;
        report.variants[0].mean_wall_seconds = f64::NAN;
        report.variants[0].cost_per_task_usd = f64::NAN;
        let md = render_markdown(&report);
        assert!(md.contains("| NCA | 262 | 0 | — |"));
        let csv = render_csv(&report);
        assert!(csv.lines().nth(1).unwrap().starts_with("NCA,variant,262,0,,"));
        assert!(!csv.contains("NaN"));
    }
}
