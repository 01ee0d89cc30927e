//! Static SVG panels: delta heatmap, radar and Pareto scatter per
//! `(model, domain)` grid.

use std::fmt::Write as _;

use super::{fmt_pp, PlotData};
use crate::analytics::{HeatmapGrid, ParetoSeries, RadarSeries, TrainDomain};

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 340.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Diverging blue (gain) / red (loss) scale saturating at 20pp.
fn delta_color(v: f64) -> String {
    let t = (v.abs() / 20.0).min(1.0);
    let fade = |c: f64| (255.0 - (255.0 - c) * t).round() as u8;
    if v >= 0.0 {
        format!("#{:02x}{:02x}{:02x}", fade(33.0), fade(102.0), fade(172.0))
    } else {
        format!("#{:02x}{:02x}{:02x}", fade(178.0), fade(24.0), fade(43.0))
    }
}

fn title(out: &mut String, x: f64, y: f64, text: &str) {
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" font-weight="bold">{}</text>"#,
        x,
        y,
        esc(text)
    );
}

fn heatmap(out: &mut String, g: &HeatmapGrid, ox: f64, oy: f64) {
    title(
        out,
        ox + 10.0,
        oy + 18.0,
        &format!("{} / {}: delta vs base (pp)", g.model, g.train_domain),
    );
    let left = ox + 80.0;
    let top = oy + 40.0;
    let cols = g.conditions.len().max(1) as f64;
    let cw = (PANEL_W - 100.0) / cols;
    let ch = 44.0;
    for (ri, b) in g.benchmarks.iter().enumerate() {
        let y = top + ri as f64 * ch;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#,
            left - 6.0,
            y + ch / 2.0 + 4.0,
            b
        );
        for (ci, v) in g.cells[ri].iter().enumerate() {
            let x = left + ci as f64 * cw;
            let _ = writeln!(
                out,
                r##"<rect x="{x:.1}" y="{y:.1}" width="{cw:.1}" height="{ch:.1}" fill="{}" stroke="#ffffff"/>"##,
                delta_color(*v)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{}</text>"#,
                x + cw / 2.0,
                y + ch / 2.0 + 4.0,
                fmt_pp(*v)
            );
        }
    }
    let label_y = top + g.benchmarks.len() as f64 * ch + 10.0;
    for (ci, c) in g.conditions.iter().enumerate() {
        let x = left + ci as f64 * cw + cw / 2.0;
        let _ = writeln!(
            out,
            r#"<text x="{x:.1}" y="{label_y:.1}" font-size="9" text-anchor="end" transform="rotate(-35 {x:.1} {label_y:.1})">{}</text>"#,
            esc(c)
        );
    }
}

fn radar(out: &mut String, series: &[&RadarSeries], ox: f64, oy: f64) {
    let Some(first) = series.first() else { return };
    title(
        out,
        ox + 10.0,
        oy + 18.0,
        &format!("{} / {}: accuracy", first.model, first.train_domain),
    );
    let cx = ox + 150.0;
    let cy = oy + 180.0;
    let radius = 110.0;
    let n = first.axes.len().max(1);
    let point = |i: usize, v: f64| {
        let angle = -std::f64::consts::FRAC_PI_2 + std::f64::consts::TAU * i as f64 / n as f64;
        (cx + radius * v * angle.cos(), cy + radius * v * angle.sin())
    };
    for ring in [0.25, 0.5, 0.75, 1.0] {
        let pts: Vec<String> = (0..n)
            .map(|i| {
                let (x, y) = point(i, ring);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(
            out,
            r##"<polygon points="{}" fill="none" stroke="#cccccc"/>"##,
            pts.join(" ")
        );
    }
    for (i, axis) in first.axes.iter().enumerate() {
        let (x, y) = point(i, 1.0);
        let (lx, ly) = point(i, 1.15);
        let _ = writeln!(
            out,
            r##"<line x1="{cx:.1}" y1="{cy:.1}" x2="{x:.1}" y2="{y:.1}" stroke="#999999"/>"##
        );
        let _ = writeln!(
            out,
            r#"<text x="{lx:.1}" y="{ly:.1}" font-size="10" text-anchor="middle">{axis}</text>"#
        );
    }
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let (x, y) = point(i, v.clamp(0.0, 1.0));
                format!("{x:.1},{y:.1}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.08" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = oy + 50.0 + k as f64 * 16.0;
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}" font-size="10">{}</text>"#,
            ox + 295.0,
            ly - 9.0,
            ox + 310.0,
            ly,
            esc(&s.condition)
        );
    }
}

fn pareto(out: &mut String, s: &ParetoSeries, ox: f64, oy: f64) {
    title(
        out,
        ox + 10.0,
        oy + 18.0,
        &format!("{} / {}: params vs mean accuracy", s.model, s.train_domain),
    );
    if s.points.is_empty() {
        return;
    }
    let (left, right, top, bottom) = (
        ox + 60.0,
        ox + PANEL_W - 20.0,
        oy + 40.0,
        oy + PANEL_H - 50.0,
    );
    let max_p = s
        .points
        .iter()
        .map(|p| p.trainable_params_m)
        .fold(0.0, f64::max)
        * 1.1;
    let (mut lo, mut hi) = s.points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| {
        (lo.min(p.mean_accuracy), hi.max(p.mean_accuracy))
    });
    lo -= 0.01;
    hi += 0.01;
    let sx = |p: f64| left + (right - left) * p / max_p.max(f64::EPSILON);
    let sy = |a: f64| bottom - (bottom - top) * (a - lo) / (hi - lo);
    let _ = writeln!(
        out,
        r##"<line x1="{left:.1}" y1="{bottom:.1}" x2="{right:.1}" y2="{bottom:.1}" stroke="#333333"/><line x1="{left:.1}" y1="{top:.1}" x2="{left:.1}" y2="{bottom:.1}" stroke="#333333"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">trainable params (M)</text>"#,
        (left + right) / 2.0,
        bottom + 30.0
    );
    for (v, y) in [(lo, bottom), (hi, top)] {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{v:.3}</text>"#,
            left - 4.0,
            y + 3.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="9" text-anchor="end">{:.1}</text>"#,
        right,
        bottom + 14.0,
        max_p
    );
    let mut frontier: Vec<_> = s.points.iter().filter(|p| !p.dominated).collect();
    frontier.sort_by(|a, b| a.trainable_params_m.total_cmp(&b.trainable_params_m));
    let line: Vec<String> = frontier
        .iter()
        .map(|p| format!("{:.1},{:.1}", sx(p.trainable_params_m), sy(p.mean_accuracy)))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-dasharray="4 3"/>"##,
        line.join(" ")
    );
    for p in &s.points {
        let (x, y) = (sx(p.trainable_params_m), sy(p.mean_accuracy));
        let fill = if p.dominated { "#ffffff" } else { "#1f77b4" };
        let _ = writeln!(
            out,
            r##"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="{fill}" stroke="#1f77b4"/><text x="{:.1}" y="{:.1}" font-size="9">{}</text>"##,
            x + 6.0,
            y - 4.0,
            esc(&p.condition)
        );
    }
}

/// All panels, one row per `(model, domain)` grid.
pub fn render_svg(plot: &PlotData) -> String {
    let mut keys: Vec<(&str, TrainDomain)> = plot
        .heatmaps
        .iter()
        .map(|h| (h.model.as_str(), h.train_domain))
        .chain(
            plot.pareto
                .iter()
                .map(|p| (p.model.as_str(), p.train_domain)),
        )
        .chain(
            plot.radar
                .iter()
                .map(|r| (r.model.as_str(), r.train_domain)),
        )
        .collect();
    keys.sort();
    keys.dedup();

    let width = PANEL_W * 3.0;
    let height = (PANEL_H * keys.len() as f64).max(PANEL_H);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(
        out,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    );
    for (row, (model, domain)) in keys.iter().enumerate() {
        let oy = row as f64 * PANEL_H;
        if let Some(g) = plot
            .heatmaps
            .iter()
            .find(|h| h.model == *model && h.train_domain == *domain)
        {
            heatmap(&mut out, g, 0.0, oy);
        }
        let series: Vec<&RadarSeries> = plot
            .radar
            .iter()
            .filter(|r| r.model == *model && r.train_domain == *domain)
            .collect();
        radar(&mut out, &series, PANEL_W, oy);
        if let Some(p) = plot
            .pareto
            .iter()
            .find(|p| p.model == *model && p.train_domain == *domain)
        {
            pareto(&mut out, p, 2.0 * PANEL_W, oy);
        }
    }
    out.push_str("</svg>\n");
    out
}
