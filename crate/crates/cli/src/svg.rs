//! Minimal SVG 1.1 line chart with error bars on log-log axes.

use std::fmt::Write;

pub struct Series {
    pub name: String,
    /// `(x, y, half-width of the error bar)`.
    pub points: Vec<(f64, f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn log_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| *v > 0.0 && v.is_finite()) {
        lo = lo.min(v.log10());
        hi = hi.max(v.log10());
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = log_range(all().map(|p| p.0));
    let (y0, y1) = log_range(all().flat_map(|p| [p.1, p.1 + p.2, p.1 - p.2]));
    let floor = 10f64.powf(y0);
    let px = |x: f64| LEFT + (x.log10() - x0) / (x1 - x0) * (WIDTH - LEFT - RIGHT);
    let py = |y: f64| TOP + (y1 - y.max(floor).log10()) / (y1 - y0) * (HEIGHT - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15" font-family="sans-serif">{}</text>"#, WIDTH / 2.0, escape(title));
    let (bx, by) = (LEFT, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<g stroke="black" stroke-width="1"><line x1="{bx}" y1="{by}" x2="{}" y2="{by}"/><line x1="{bx}" y1="{TOP}" x2="{bx}" y2="{by}"/></g>"#, WIDTH - RIGHT);

    let mut xs: Vec<f64> = all().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for x in xs {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="11" font-family="sans-serif">{x}</text>"#, px(x), by + 16.0);
    }
    for k in (y0.ceil() as i32)..=(y1.floor() as i32) {
        let y = 10f64.powi(k);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="11" font-family="sans-serif">1e{k}</text>"#, bx - 6.0, py(y) + 4.0);
        let _ = writeln!(s, r##"<line x1="{bx}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="#dddddd" stroke-width="0.5"/>"##, py(y), WIDTH - RIGHT);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12" font-family="sans-serif">{} (log scale)</text>"#, (LEFT + WIDTH - RIGHT) / 2.0, HEIGHT - 18.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="18" y="{0}" text-anchor="middle" font-size="12" font-family="sans-serif" transform="rotate(-90 18 {0})">{1} (log scale)</text>"#, (TOP + by) / 2.0, escape(y_label));

    for (i, ser) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = ser.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let _ = writeln!(s, r#"<g id="series-{}">"#, escape(&ser.name));
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#, pts.join(" "));
        for &(x, y, e) in &ser.points {
            let (cx, top, bot) = (px(x), py(y + e), py(y - e));
            let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{top:.2}" x2="{cx:.2}" y2="{bot:.2}" stroke="{colour}" stroke-width="1"/>"#);
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#, py(y));
        }
        let _ = writeln!(s, "</g>");
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 16.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-size="12" font-family="sans-serif">{}</text>"#, lx + 26.0, ly + 4.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}
