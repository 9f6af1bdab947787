//! Text, CSV and SVG renderings of comparison results.

use std::fmt::Write;

use super::compare::{Comparison, ComparisonResult};
use super::regions::RegionKind;

/// Marker wrapped around significant cells in the text table.
pub const BOLD: &str = "**";

/// `0.877`, `0.005`, or `5.659e-09` below 0.001.
pub fn format_p(p: f64) -> String {
    if p >= 0.001 {
        return format!("{p:.3}");
    }
    let s = format!("{p:.3e}");
    let (mantissa, exp) = s.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn format_ratio(ratio: f64) -> String {
    format!("{ratio:.1}")
}

/// `ratio (p=...)`, wrapped in bold markers when significant.
pub fn format_cell(r: &ComparisonResult) -> String {
    let cell = format!("{} (p={})", format_ratio(r.better_ratio), format_p(r.p_value));
    if r.significant {
        format!("{BOLD}{cell}{BOLD}")
    } else {
        cell
    }
}

/// Headline rows: one per comparison, one result per region.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub epoch: usize,
    pub rows: Vec<(Comparison, Vec<ComparisonResult>)>,
}

const LABEL_WIDTH: usize = 26;
const CELL_WIDTH: usize = 26;

pub fn render_text(table: &ReportTable) -> String {
    let mut out = String::new();
    writeln!(out, "Ratio in % of subjects better than baseline (epoch {})", table.epoch).unwrap();
    writeln!(out, "p-values: one-sided Wilcoxon signed-rank test; {BOLD}bold{BOLD} = significant (p < 0.05)").unwrap();
    writeln!(out).unwrap();
    let mut header = format!("{:<LABEL_WIDTH$}", "");
    for region in RegionKind::ALL {
        header.push_str(&format!("{:<CELL_WIDTH$}", region.title()));
    }
    writeln!(out, "{}", header.trim_end()).unwrap();
    for (cmp, results) in &table.rows {
        let mut line = format!("{:<LABEL_WIDTH$}", cmp.label());
        for r in results {
            line.push_str(&format!("{:<CELL_WIDTH$}", format_cell(r)));
        }
        writeln!(out, "{}", line.trim_end()).unwrap();
    }
    out
}

pub const REPORT_CSV_HEADER: &str = "comparison,region,n,better_ratio,p_value,significant,w_statistic,p_value_full";

/// Machine-readable twin of [`render_text`]; `better_ratio` and `p_value`
/// carry the exact strings printed in the text table.
pub fn render_csv(table: &ReportTable) -> String {
    let mut out = String::from(REPORT_CSV_HEADER);
    out.push('\n');
    for (cmp, results) in &table.rows {
        for r in results {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                cmp.file_stem(),
                r.region,
                r.n,
                format_ratio(r.better_ratio),
                format_p(r.p_value),
                r.significant,
                r.w_statistic,
                r.p_value
            )
            .unwrap();
        }
    }
    out
}

/// One curve per region.
pub type Curves = Vec<(RegionKind, Vec<(usize, f64)>)>;

pub fn curves_csv(curves: &Curves) -> String {
    let mut out = String::from("region,epoch,better_ratio\n");
    for (region, points) in curves {
        for (epoch, ratio) in points {
            writeln!(out, "{region},{epoch},{ratio}").unwrap();
        }
    }
    out
}

const COLORS: [&str; 3] = ["#d62728", "#1f77b4", "#2ca02c"];
const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 320.0;

/// SVG group drawing one panel at the origin.
fn panel(title: &str, curves: &Curves) -> String {
    let (left, right, top, bottom) = (56.0, 16.0, 36.0, 44.0);
    let plot_w = PANEL_W - left - right;
    let plot_h = PANEL_H - top - bottom;
    let max_epoch = curves.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0)).max().unwrap_or(1).max(2);
    let x = |epoch: usize| left + plot_w * (epoch as f64 - 1.0) / (max_epoch as f64 - 1.0);
    let y = |ratio: f64| top + plot_h * (1.0 - ratio / 100.0);

    let mut g = String::new();
    writeln!(g, r#"<rect x="0" y="0" width="{PANEL_W}" height="{PANEL_H}" fill="white"/>"#).unwrap();
    writeln!(
        g,
        r#"<text x="{}" y="22" font-size="15" text-anchor="middle" font-family="sans-serif">{}</text>"#,
        PANEL_W / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(g, r#"<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#)
        .unwrap();
    for tick in [0.0, 25.0, 50.0, 75.0, 100.0] {
        writeln!(
            g,
            r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end" font-family="sans-serif">{tick}</text>"#,
            left - 6.0,
            y(tick) + 4.0
        )
        .unwrap();
    }
    let step = (max_epoch / 10).max(1);
    for epoch in (1..=max_epoch).filter(|e| (e - 1) % step == 0 || *e == max_epoch) {
        writeln!(
            g,
            r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle" font-family="sans-serif">{epoch}</text>"#,
            x(epoch),
            top + plot_h + 16.0
        )
        .unwrap();
    }
    writeln!(
        g,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle" font-family="sans-serif">epoch</text>"#,
        left + plot_w / 2.0,
        PANEL_H - 8.0
    )
    .unwrap();
    writeln!(
        g,
        r#"<text x="14" y="{0}" font-size="12" text-anchor="middle" font-family="sans-serif" transform="rotate(-90 14 {0})">% better than baseline</text>"#,
        top + plot_h / 2.0
    )
    .unwrap();
    writeln!(
        g,
        r#"<line x1="{left}" y1="{0:.1}" x2="{1}" y2="{0:.1}" stroke="gray" stroke-dasharray="4 3"/>"#,
        y(50.0),
        left + plot_w
    )
    .unwrap();
    for (i, (region, points)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = points.iter().map(|&(e, r)| format!("{:.1},{:.1}", x(e), y(r))).collect();
        writeln!(g, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, coords.join(" "))
            .unwrap();
        let ly = top + 14.0 + 16.0 * i as f64;
        writeln!(
            g,
            r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{2}" y="{3}" font-size="11" font-family="sans-serif">{4}</text>"#,
            left + plot_w - 70.0,
            left + plot_w - 52.0,
            left + plot_w - 46.0,
            ly + 4.0,
            region.title()
        )
        .unwrap();
    }
    g
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Standalone SVG line chart of better-ratio over epochs.
pub fn curves_svg(title: &str, curves: &Curves) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PANEL_W}\" height=\"{PANEL_H}\" viewBox=\"0 0 {PANEL_W} {PANEL_H}\">\n{}</svg>\n",
        panel(title, curves)
    )
}

/// All panels in a two-column grid, row-major.
pub fn curves_grid_svg(panels: &[(String, Curves)]) -> String {
    let rows = panels.len().div_ceil(2);
    let (w, h) = (2.0 * PANEL_W, rows as f64 * PANEL_H);
    let mut out =
        format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
    for (i, (title, curves)) in panels.iter().enumerate() {
        let (cx, cy) = ((i % 2) as f64 * PANEL_W, (i / 2) as f64 * PANEL_H);
        out.push_str(&format!("<g transform=\"translate({cx} {cy})\">\n{}</g>\n", panel(title, curves)));
    }
    out.push_str("</svg>\n");
    out
}
