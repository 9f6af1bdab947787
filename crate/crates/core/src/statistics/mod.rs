//! Per-region Dice scoring, paired regime comparison and report emission.

mod compare;
mod regions;
mod report;
mod scores;
mod wilcoxon;

pub use compare::{
    better_ratio, compare, per_epoch_curves, Arm, Comparison, ComparisonResult, SubjectSet, SIGNIFICANCE_LEVEL,
};
pub use regions::{dice, region_mask, RegionKind};
pub use report::{
    curves_csv, curves_grid_svg, curves_svg, format_cell, format_p, format_ratio, render_csv, render_text, Curves,
    ReportTable, BOLD, REPORT_CSV_HEADER,
};
pub use scores::{region_dice, score_runs, ScoreTable, SCORES_HEADER};
pub use wilcoxon::{wilcoxon_one_sided, WilcoxonResult, EXACT_LIMIT};
