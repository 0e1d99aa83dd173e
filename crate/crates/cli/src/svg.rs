//! Dependency-free SVG charts: line plots for training curves and bar
//! charts for ablations and per-class scores.

use std::fmt::Write as _;

const W: f64 = 720.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#3465a4", "#cc3333", "#2e8b57", "#b8860b", "#6a4fa3", "#777777"];

fn header(title: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(
        s,
        r#"<rect width="{W}" height="{H}" fill="white"/><text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if (hi - lo).abs() < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = (hi - lo) * 0.06;
        (lo - pad, hi + pad)
    }
}

/// Multi-series line chart; each series is (label, points sorted by x).
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut svg = header(title);
    let pts: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    if pts.is_empty() {
        svg.push_str("</svg>");
        return svg;
    }
    // The x axis (epochs/steps) keeps its true extent; only y gets padding.
    let (mut x0, mut x1) = (
        pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    if (x1 - x0).abs() < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let (y0, y1) = nice_range(
        pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    // Axes with a handful of ticks.
    let _ = write!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{:.3}</text><text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
            sx(fx),
            H - MARGIN + 18.0,
            fx,
            MARGIN - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text><text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        W / 2.0,
        H - 12.0,
        escape(x_label),
        H / 2.0,
        escape(y_label),
        y = H / 2.0
    );

    for (si, (label, points)) in series.iter().enumerate() {
        let color = COLORS[si % COLORS.len()];
        let path: Vec<String> = points.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = write!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
            path.join(" ")
        );
        let _ = write!(
            svg,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            W - MARGIN - 150.0,
            MARGIN + 16.0 * si as f64,
            W - MARGIN - 136.0,
            MARGIN + 16.0 * si as f64 + 9.0,
            escape(label)
        );
    }
    svg.push_str("</svg>");
    svg
}

/// Vertical bar chart of (label, value) pairs.
pub fn bar_chart(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let mut svg = header(title);
    if bars.is_empty() {
        svg.push_str("</svg>");
        return svg;
    }
    let hi = bars.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max).max(0.0);
    let lo = bars.iter().map(|b| b.1).fold(f64::INFINITY, f64::min).min(0.0);
    let (y0, y1) = nice_range(lo, hi);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let slot = (W - 2.0 * MARGIN) / bars.len() as f64;
    let _ = write!(
        svg,
        r#"<line x1="{m}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{m}" y1="{t}" x2="{m}" y2="{b}" stroke="black"/>"#,
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN
    );
    for i in 0..=4 {
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = write!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text>"#,
            MARGIN - 6.0,
            sy(fy) + 4.0,
            fy
        );
    }
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = MARGIN + slot * i as f64 + slot * 0.15;
        let (top, bottom) = if *v >= 0.0 { (sy(*v), sy(0.0).min(H - MARGIN)) } else { (sy(0.0), sy(*v)) };
        let _ = write!(
            svg,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
            x,
            top,
            slot * 0.7,
            (bottom - top).max(0.5),
            COLORS[i % COLORS.len()]
        );
        let _ = write!(
            svg,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text><text x="{:.2}" y="{:.2}" text-anchor="middle">{:.3}</text>"#,
            x + slot * 0.35,
            H - MARGIN + 18.0,
            escape(label),
            x + slot * 0.35,
            top - 4.0,
            v
        );
    }
    let _ = write!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {y})">{}</text>"#,
        H / 2.0,
        escape(y_label),
        y = H / 2.0
    );
    svg.push_str("</svg>");
    svg
}
