//! Static SVG plot of mean cumulative cost with a ±1 std band.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CongoError, Result};
use crate::harness::table::{AggregateRow, ResultTable};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick positions at 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|f| f * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let mut v = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while v <= hi + step * 1e-9 {
        out.push(v);
        v += step;
    }
    out
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e6 || v.abs() < 1e-3) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders the aggregate rows of `table` as an SVG document.
pub fn render_svg(table: &ResultTable, title: &str) -> Result<String> {
    let agg = table.aggregate();
    if agg.is_empty() {
        return Err(CongoError::config("no aggregate rows to plot"));
    }
    let series: Vec<(&str, Vec<&AggregateRow>)> = table
        .optimizers
        .iter()
        .map(|name| {
            (
                name.as_str(),
                agg.iter()
                    .filter(|a| &a.optimizer == name)
                    .collect::<Vec<_>>(),
            )
        })
        .filter(|(_, rows)| !rows.is_empty())
        .collect();

    let x_max = agg.iter().map(|a| a.round).max().unwrap_or(1) as f64;
    let x_min = 1f64.min(x_max);
    let y_lo = agg
        .iter()
        .map(|a| a.mean_cum_cost - a.std_cum_cost)
        .fold(f64::INFINITY, f64::min);
    let y_hi = agg
        .iter()
        .map(|a| a.mean_cum_cost + a.std_cum_cost)
        .fold(f64::NEG_INFINITY, f64::max);
    let (y_lo, y_hi) = if y_hi > y_lo {
        (y_lo, y_hi)
    } else {
        (y_lo - 1.0, y_hi + 1.0)
    };
    let (plot_w, plot_h) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let sx = |x: f64| {
        LEFT + if x_max > x_min {
            (x - x_min) / (x_max - x_min) * plot_w
        } else {
            plot_w / 2.0
        }
    };
    let sy = |y: f64| TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut svg = String::new();
    let w = &mut svg;
    // Writing into a String cannot fail.
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        w,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        w,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(title)
    );

    let _ = writeln!(w, r#"<g class="axes" stroke="black" fill="none">"#);
    let _ = writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}"/>"#
    );
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, r#"<g class="ticks" fill="black">"#);
    for t in ticks(x_min, x_max, 8) {
        let x = sx(t);
        let _ = writeln!(
            w,
            r#"<line x1="{x:.2}" y1="{b}" x2="{x:.2}" y2="{b2}" stroke="black"/><text x="{x:.2}" y="{ty}" text-anchor="middle">{}</text>"#,
            tick_label(t),
            b = TOP + plot_h,
            b2 = TOP + plot_h + 5.0,
            ty = TOP + plot_h + 20.0
        );
    }
    for t in ticks(y_lo, y_hi, 6) {
        let y = sy(t);
        let _ = writeln!(
            w,
            r#"<line x1="{l2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{tx}" y="{ty:.2}" text-anchor="end">{}</text>"#,
            tick_label(t),
            l2 = LEFT - 5.0,
            tx = LEFT - 8.0,
            ty = y + 4.0
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(
        w,
        r#"<text class="xlabel" x="{}" y="{}" text-anchor="middle">round</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        w,
        r#"<text class="ylabel" x="20" y="{cy}" text-anchor="middle" transform="rotate(-90 20 {cy})">mean cumulative cost</text>"#,
        cy = TOP + plot_h / 2.0
    );

    for (i, (name, rows)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let upper = rows
            .iter()
            .map(|a| (sx(a.round as f64), sy(a.mean_cum_cost + a.std_cum_cost)));
        let lower = rows
            .iter()
            .rev()
            .map(|a| (sx(a.round as f64), sy(a.mean_cum_cost - a.std_cum_cost)));
        let band: Vec<String> = upper
            .chain(lower)
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect();
        let line: Vec<String> = rows
            .iter()
            .map(|a| format!("{:.2},{:.2}", sx(a.round as f64), sy(a.mean_cum_cost)))
            .collect();
        let _ = writeln!(
            w,
            r#"<g class="series" data-optimizer="{n}"><polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/><polyline class="mean" points="{}" fill="none" stroke="{color}" stroke-width="2"/></g>"#,
            band.join(" "),
            line.join(" "),
            n = escape(name)
        );
    }

    let _ = writeln!(w, r#"<g class="legend">"#);
    for (i, (name, _)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            w,
            r#"<g class="legend-entry"><line x1="{x}" y1="{y}" x2="{x2}" y2="{y}" stroke="{color}" stroke-width="3"/><text x="{tx}" y="{ty}">{}</text></g>"#,
            escape(name),
            x2 = x + 25.0,
            tx = x + 32.0,
            ty = y + 4.0
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}

pub fn emit_plot(table: &ResultTable, title: &str, path: &Path) -> Result<()> {
    let svg = render_svg(table, title)?;
    std::fs::write(path, svg).map_err(|e| CongoError::io(path, e))
}
