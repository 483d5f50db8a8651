//! Static SVG fan charts: observed history, per-model median lines and the
//! BDARMA 90% band. One file per component, each with its own y range.

use std::fmt::Write as _;

use bdarma::backtest::{ModelKind, QuantileRow};
use bdarma::series::{CompositionalSeries, YearMonth};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 32.0;
const BOTTOM: f64 = 40.0;
/// Months of history drawn before the forecast origin.
pub const HISTORY: usize = 36;

fn colour(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Bdarma => "#1f77b4",
        ModelKind::Tvar2 => "#d62728",
        ModelKind::AlrRw => "#2ca02c",
        ModelKind::Snaive => "#9467bd",
    }
}

struct Frame {
    t0: YearMonth,
    months: f64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn x(&self, d: YearMonth) -> f64 {
        LEFT + (WIDTH - LEFT - RIGHT) * self.t0.months_until(d) as f64 / self.months.max(1.0)
    }

    fn y(&self, v: f64) -> f64 {
        TOP + (HEIGHT - TOP - BOTTOM) * (self.hi - v) / (self.hi - self.lo)
    }
}

fn polyline(out: &mut String, pts: &[(f64, f64)], stroke: &str, extra: &str) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        out,
        r#"<polyline fill="none" stroke="{stroke}" stroke-width="1.6" {extra} points="{}"/>"#,
        coords.join(" ")
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG document for one component. `rows` may hold every component; only
/// `component` is drawn.
pub fn fan_chart(series: &CompositionalSeries, component: usize, rows: &[QuantileRow]) -> String {
    let label = &series.labels()[component];
    let rows: Vec<&QuantileRow> = rows.iter().filter(|r| &r.component == label).collect();
    let n_hist = HISTORY.min(series.len());
    let first_row = series.len() - n_hist;
    let history: Vec<(YearMonth, f64)> =
        (first_row..series.len()).map(|i| (series.date(i), series.shares(i)[component])).collect();
    let last = rows.iter().map(|r| r.date).max().unwrap_or(series.end());

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in history.iter().map(|p| p.1).chain(rows.iter().flat_map(|r| [r.q05, r.q50, r.q95])) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let pad = ((hi - lo) * 0.08).max(1e-4);
    let frame = Frame { t0: history[0].0, months: history[0].0.months_until(last) as f64, lo: lo - pad, hi: hi + pad };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{LEFT}" y="20" font-size="14">{}</text>"#, escape(label));

    // Axes and ticks.
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (TOP, HEIGHT - BOTTOM);
    let _ = writeln!(out, r##"<path d="M{x0},{y0} V{y1} H{x1}" fill="none" stroke="#333"/>"##);
    for k in 0..=4 {
        let v = frame.lo + (frame.hi - frame.lo) * k as f64 / 4.0;
        let y = frame.y(v);
        let _ = writeln!(out, r##"<line x1="{}" x2="{x0}" y1="{y:.2}" y2="{y:.2}" stroke="#333"/>"##, x0 - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.4}</text>"#, x0 - 6.0, y + 4.0);
    }
    let mut d = frame.t0;
    while d <= last {
        if d.month() == 1 || d.month() == 7 {
            let x = frame.x(d);
            let _ = writeln!(out, r##"<line x1="{x:.2}" x2="{x:.2}" y1="{y1}" y2="{}" stroke="#333"/>"##, y1 + 4.0);
            let _ = writeln!(out, r#"<text x="{x:.2}" y="{}" text-anchor="middle">{d}</text>"#, y1 + 16.0);
        }
        d = d.succ();
    }

    // Band first so lines draw over it.
    let band: Vec<&&QuantileRow> = rows.iter().filter(|r| r.model == ModelKind::Bdarma).collect();
    if !band.is_empty() {
        let mut pts: Vec<String> = band.iter().map(|r| format!("{:.2},{:.2}", frame.x(r.date), frame.y(r.q95))).collect();
        pts.extend(band.iter().rev().map(|r| format!("{:.2},{:.2}", frame.x(r.date), frame.y(r.q05))));
        let _ = writeln!(
            out,
            r#"<polygon fill="{}" fill-opacity="0.25" stroke="{}" stroke-opacity="0.6" points="{}"/>"#,
            colour(ModelKind::Bdarma),
            colour(ModelKind::Bdarma),
            pts.join(" ")
        );
    }

    let hist_pts: Vec<(f64, f64)> = history.iter().map(|(d, v)| (frame.x(*d), frame.y(*v))).collect();
    polyline(&mut out, &hist_pts, "#000", "");

    let mut legend = vec![("observed".to_string(), "#000")];
    for m in ModelKind::ALL {
        let mine: Vec<&&QuantileRow> = rows.iter().filter(|r| r.model == m).collect();
        if mine.is_empty() {
            continue;
        }
        // Anchor each median line at the last observation.
        let mut pts = vec![*hist_pts.last().expect("series is not empty")];
        pts.extend(mine.iter().map(|r| (frame.x(r.date), frame.y(r.q50))));
        polyline(&mut out, &pts, colour(m), r#"stroke-dasharray="5,3""#);
        for (x, y) in &pts[1..] {
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.8" fill="{}"/>"#, colour(m));
        }
        legend.push((format!("{m} median"), colour(m)));
    }
    if !band.is_empty() {
        legend.push(("BDARMA 90%".into(), colour(ModelKind::Bdarma)));
    }
    for (i, (name, c)) in legend.iter().enumerate() {
        let y = TOP + 14.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(out, r#"<rect x="{lx}" y="{}" width="14" height="3" fill="{c}"/>"#, y - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, lx + 20.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}
