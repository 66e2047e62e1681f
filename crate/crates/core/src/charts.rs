//! Static SVG chart emitters: importance bars, confusion heatmap, and the
//! 2-D embedding scatter. Hand-rolled markup, deterministic byte-for-byte.

use std::fmt::Write;

/// Category palette, cycled when labels outnumber it.
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(out, "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"white\"/>");
}

/// Horizontal bar chart of the `top` largest importances, descending.
pub fn importance_bars_svg(names: &[String], importances: &[f64], top: usize) -> String {
    let mut order: Vec<usize> = (0..names.len().min(importances.len())).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]));
    order.truncate(top);

    let label_w = 230.0;
    let bar_max_w = 420.0;
    let bar_h = 18.0;
    let gap = 6.0;
    let margin = 16.0;
    let width = label_w + bar_max_w + 80.0;
    let height = margin * 2.0 + order.len() as f64 * (bar_h + gap);
    let peak = order.first().map(|&i| importances[i]).unwrap_or(0.0).max(f64::MIN_POSITIVE);

    let mut out = String::new();
    svg_open(&mut out, width, height);
    for (rank, &i) in order.iter().enumerate() {
        let y = margin + rank as f64 * (bar_h + gap);
        let w = bar_max_w * (importances[i] / peak).max(0.0);
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            label_w - 8.0,
            y + bar_h - 5.0,
            xml_escape(&names[i])
        );
        let _ = writeln!(
            out,
            "<rect class=\"bar\" x=\"{label_w:.1}\" y=\"{y:.1}\" width=\"{w:.2}\" height=\"{bar_h:.1}\" fill=\"{}\"/>",
            PALETTE[0]
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\">{:.4}</text>",
            label_w + w + 6.0,
            y + bar_h - 5.0,
            importances[i]
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Blue-scale fill between white (0) and a dark blue (1).
fn heat_color(fraction: f64) -> String {
    let t = fraction.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(247.0, 8.0), lerp(251.0, 48.0), lerp(255.0, 107.0))
}

/// Confusion-matrix heatmap; rows are true classes, columns predictions,
/// cells shaded by row-normalized fraction with raw counts printed.
pub fn confusion_heatmap_svg(classes: &[String], confusion: &[Vec<u64>]) -> String {
    let k = classes.len();
    let cell = 52.0;
    let left = 150.0;
    let top = 110.0;
    let width = left + k as f64 * cell + 20.0;
    let height = top + k as f64 * cell + 20.0;

    let mut out = String::new();
    svg_open(&mut out, width, height);
    for (j, name) in classes.iter().enumerate() {
        let x = left + j as f64 * cell + cell / 2.0;
        let _ = writeln!(
            out,
            "<text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"start\" \
             transform=\"rotate(-45 {x:.1} {:.1})\">{}</text>",
            top - 10.0,
            top - 10.0,
            xml_escape(name)
        );
    }
    for (i, name) in classes.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>",
            left - 8.0,
            top + i as f64 * cell + cell / 2.0 + 4.0,
            xml_escape(name)
        );
    }
    for (i, row) in confusion.iter().enumerate() {
        let row_total: u64 = row.iter().sum();
        for (j, &count) in row.iter().enumerate() {
            let x = left + j as f64 * cell;
            let y = top + i as f64 * cell;
            let fraction = if row_total == 0 {
                0.0
            } else {
                count as f64 / row_total as f64
            };
            let _ = writeln!(
                out,
                "<rect class=\"cell\" x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" \
                 fill=\"{}\" stroke=\"#ccc\"/>",
                heat_color(fraction)
            );
            let text_fill = if fraction > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                out,
                "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"{text_fill}\">{}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0,
                confusion[i][j]
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter of embedding coordinates, one dot per point, colored by label,
/// with a legend of the distinct labels in first-appearance order.
pub fn embedding_scatter_svg(points: &[[f64; 2]], labels: &[String]) -> String {
    let plot_w = 560.0;
    let plot_h = 480.0;
    let margin = 20.0;
    let legend_w = 170.0;
    let width = margin * 2.0 + plot_w + legend_w;
    let height = margin * 2.0 + plot_h;

    let mut distinct: Vec<&String> = Vec::new();
    for label in labels {
        if !distinct.contains(&label) {
            distinct.push(label);
        }
    }
    let color_of = |label: &String| {
        let idx = distinct.iter().position(|l| *l == label).unwrap_or(0);
        PALETTE[idx % PALETTE.len()]
    };

    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        min_x = min_x.min(p[0]);
        max_x = max_x.max(p[0]);
        min_y = min_y.min(p[1]);
        max_y = max_y.max(p[1]);
    }
    // Constant span keeps the projection finite when all points coincide.
    let span_x = (max_x - min_x).max(1e-9);
    let span_y = (max_y - min_y).max(1e-9);

    let mut out = String::new();
    svg_open(&mut out, width, height);
    let _ = writeln!(
        out,
        "<rect x=\"{margin:.1}\" y=\"{margin:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" \
         fill=\"none\" stroke=\"#999\"/>"
    );
    for (p, label) in points.iter().zip(labels) {
        let x = margin + (p[0] - min_x) / span_x * plot_w;
        // SVG y grows downward.
        let y = margin + (max_y - p[1]) / span_y * plot_h;
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.75\"/>",
            color_of(label)
        );
    }
    for (i, label) in distinct.iter().enumerate() {
        let x = margin + plot_w + 16.0;
        let y = margin + 10.0 + i as f64 * 20.0;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>",
            y - 10.0,
            PALETTE[i % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{y:.1}\">{}</text>",
            x + 18.0,
            xml_escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}
