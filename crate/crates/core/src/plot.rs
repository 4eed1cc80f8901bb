//! Minimal deterministic SVG output. Plots are a convenience; the CSV files
//! are the record.

use std::fmt::Write;

use crate::experiments::{CurveBundle, ProbeRow};

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

pub(crate) fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub(crate) fn header(out: &mut String, width: u32, height: u32) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
}

/// Language probability per layer with CI error bars over `layers` (inclusive).
pub fn curves_svg(bundle: &CurveBundle, title: &str, layers: (usize, usize)) -> String {
    let (lo, hi) = (
        layers.0.min(bundle.num_layers),
        layers.1.min(bundle.num_layers),
    );
    let (w, h) = (640u32, 360u32);
    let (left, right, top, bottom) = (50.0, 110.0, 30.0, 40.0);
    let pw = f64::from(w) - left - right;
    let ph = f64::from(h) - top - bottom;
    let span = (hi.saturating_sub(lo)).max(1) as f64;
    let x = |layer: usize| left + (layer - lo) as f64 / span * pw;
    let y = |p: f64| top + (1.0 - p.clamp(0.0, 1.0)) * ph;

    let mut out = String::new();
    header(&mut out, w, h);
    let _ = writeln!(out, r#"<text x="{left}" y="18">{}</text>"#, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{left}" y="{top}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{tick:.2}</text>"#,
            left - 4.0,
            y(tick) + 4.0
        );
    }
    let step = ((hi - lo) / 10).max(1);
    for layer in (lo..=hi).step_by(step) {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{layer}</text>"#,
            x(layer),
            top + ph + 14.0
        );
    }
    for (i, curve) in bundle.curves.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = (lo..=hi)
            .map(|l| format!("{:.2},{:.2}", x(l), y(curve.mean[l])))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        for l in lo..=hi {
            let (m, c) = (curve.mean[l], curve.ci_halfwidth[l]);
            let _ = writeln!(
                out,
                r#"<line x1="{0:.2}" x2="{0:.2}" y1="{1:.2}" y2="{2:.2}" stroke="{colour}"/>"#,
                x(l),
                y(m - c),
                y(m + c)
            );
        }
        let ly = top + 12.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{colour}">{} (n={})</text>"#,
            left + pw + 10.0,
            escape(&curve.language),
            curve.n
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Heat table: one row per layer, top-k tokens as cells, coloured by the
/// layer's entropy (blue = concentrated, red = dispersed).
pub fn probe_svg(rows: &[ProbeRow], vocab_size: usize) -> String {
    let k = rows.first().map_or(0, |r| r.top_tokens.len());
    let (cell_w, cell_h, left, top) = (90.0, 18.0, 60.0, 24.0);
    let w = (left + cell_w * k as f64 + 90.0) as u32;
    let h = (top + cell_h * rows.len() as f64 + 10.0) as u32;
    let max_bits = (vocab_size.max(2) as f64).log2();
    let mut out = String::new();
    header(&mut out, w, h);
    let _ = writeln!(out, r#"<text x="4" y="16">layer</text>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="16">entropy</text>"#,
        left + cell_w * k as f64 + 6.0
    );
    for (i, row) in rows.iter().enumerate() {
        let t = (row.entropy_bits / max_bits).clamp(0.0, 1.0);
        let red = (255.0 * t).round() as u8;
        let blue = (255.0 * (1.0 - t)).round() as u8;
        let y = top + cell_h * i as f64;
        let _ = writeln!(
            out,
            r#"<text x="4" y="{:.2}">{}</text>"#,
            y + 13.0,
            row.layer
        );
        for (j, tok) in row.top_tokens.iter().enumerate() {
            let x = left + cell_w * j as f64;
            let _ = writeln!(
                out,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{cell_w}" height="{cell_h}" fill="#{red:02x}60{blue:02x}" fill-opacity="{:.3}" stroke="white"/>"##,
                0.25 + 0.75 * tok.prob.clamp(0.0, 1.0)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}">{} {:.2}</text>"#,
                x + 3.0,
                y + 13.0,
                escape(&tok.token),
                tok.prob
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{:.2}</text>"#,
            left + cell_w * k as f64 + 6.0,
            y + 13.0,
            row.entropy_bits
        );
    }
    out.push_str("</svg>\n");
    out
}
