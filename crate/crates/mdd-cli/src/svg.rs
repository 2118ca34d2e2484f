//! Minimal static SVG charts for the report command.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 140.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;

const COLORS: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn plot_w() -> f64 {
    WIDTH - MARGIN_L - MARGIN_R
}

fn plot_h() -> f64 {
    HEIGHT - MARGIN_T - MARGIN_B
}

/// One named series of (x, y) points.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.08;
        (lo - pad, hi + pad)
    }
}

/// Renders a line chart with one polyline per series.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (x_lo, x_hi) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y_lo, y_hi) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let sx = |x: f64| MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w();
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h();

    let mut out = chart_head(title);
    axes(&mut out, x_label, y_label);
    for tick in 0..=4 {
        let fy = y_lo + (y_hi - y_lo) * tick as f64 / 4.0;
        let y = sy(fy);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{fy:.3}</text>"##,
            MARGIN_L + plot_w(),
            MARGIN_L - 6.0,
            y + 4.0
        );
        let fx = x_lo + (x_hi - x_lo) * tick as f64 / 4.0;
        let x = sx(fx);
        let _ = writeln!(
            out,
            r##"<text x="{x:.1}" y="{:.1}" font-size="11" text-anchor="middle">{fx:.2}</text>"##,
            MARGIN_T + plot_h() + 18.0
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"##,
            pts.join(" ")
        );
        for &(x, y) in &s.points {
            let _ = writeln!(
                out,
                r##"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"##,
                sx(x),
                sy(y)
            );
        }
        let ly = MARGIN_T + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="12" height="3" fill="{color}"/><text x="{:.1}" y="{:.1}" font-size="12">{}</text>"##,
            WIDTH - MARGIN_R + 10.0,
            ly + 4.0,
            WIDTH - MARGIN_R + 28.0,
            ly + 9.0,
            s.label
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Renders a vertical bar chart.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let (_, y_hi) = bounds(bars.iter().map(|b| b.1).chain(std::iter::once(0.0)));
    let mut out = chart_head(title);
    axes(&mut out, "", y_label);
    let n = bars.len().max(1) as f64;
    let slot = plot_w() / n;
    let bar_w = (slot * 0.7).min(40.0);
    for tick in 0..=4 {
        let fy = y_hi * tick as f64 / 4.0;
        let y = MARGIN_T + (1.0 - fy / y_hi) * plot_h();
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_L}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{fy:.3}</text>"##,
            MARGIN_L + plot_w(),
            MARGIN_L - 6.0,
            y + 4.0
        );
    }
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = MARGIN_L + slot * (i as f64 + 0.5);
        let h = (v / y_hi) * plot_h();
        let _ = writeln!(
            out,
            r##"<rect x="{:.1}" y="{:.1}" width="{bar_w:.1}" height="{h:.1}" fill="#1f77b4"/>"##,
            x - bar_w / 2.0,
            MARGIN_T + plot_h() - h
        );
        let _ = writeln!(
            out,
            r##"<text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle">{label}</text>"##,
            MARGIN_T + plot_h() + 14.0
        );
    }
    out.push_str("</svg>\n");
    out
}

fn chart_head(title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif">"##
    );
    let _ = writeln!(
        out,
        r##"<text x="{:.1}" y="22" font-size="15" text-anchor="middle">{title}</text>"##,
        MARGIN_L + plot_w() / 2.0
    );
    out
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let x0 = MARGIN_L;
    let y0 = MARGIN_T + plot_h();
    let _ = writeln!(
        out,
        r##"<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="#333"/><line x1="{x0}" y1="{y0}" x2="{:.1}" y2="{y0}" stroke="#333"/>"##,
        MARGIN_L + plot_w()
    );
    if !x_label.is_empty() {
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{x_label}</text>"##,
            MARGIN_L + plot_w() / 2.0,
            HEIGHT - 12.0
        );
    }
    if !y_label.is_empty() {
        let _ = writeln!(
            out,
            r##"<text x="16" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.1})">{y_label}</text>"##,
            MARGIN_T + plot_h() / 2.0,
            MARGIN_T + plot_h() / 2.0
        );
    }
}
