//! Self-contained SVG charts: quiver fields, diagram scatters, trajectories and line
//! charts. No external references; the only `url(#..)` targets live in the same file.

use std::fmt::Write;

use hardneg_core::dynamics::{FieldArrow, VectorField};

const PANEL: f64 = 360.0;
const PAD: f64 = 56.0;
const BLUE: &str = "#1f77b4";
const RED: &str = "#d62728";
const GREY: &str = "#888888";

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// A rectangular plotting area mapping data coordinates to pixels (y grows upward).
#[derive(Debug, Clone, Copy)]
struct Frame {
    left: f64,
    top: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * PANEL
    }

    fn py(&self, y: f64) -> f64 {
        self.top + PANEL - (y - self.y.0) / (self.y.1 - self.y.0) * PANEL
    }

    fn axes(
        &self,
        out: &mut String,
        title: &str,
        xlabel: &str,
        ylabel: &str,
        ticks: (&[f64], &[f64]),
    ) {
        let (l, t) = (self.left, self.top);
        let _ = writeln!(
            out,
            r#"<rect x="{l:.2}" y="{t:.2}" width="{PANEL:.2}" height="{PANEL:.2}" fill="white" stroke="black"/>"#
        );
        for &v in ticks.0 {
            let x = self.px(v);
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
                t + PANEL,
                t + PANEL + 5.0,
                t + PANEL + 18.0,
                tick_label(v)
            );
        }
        for &v in ticks.1 {
            let y = self.py(v);
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{l:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
                l - 5.0,
                l - 8.0,
                y + 4.0,
                tick_label(v)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="14" text-anchor="middle">{}</text>"#,
            l + PANEL / 2.0,
            t - 12.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            l + PANEL / 2.0,
            t + PANEL + 36.0,
            escape(xlabel)
        );
        let (cx, cy) = (l - 40.0, t + PANEL / 2.0);
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{cy:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 {cx:.2} {cy:.2})">{}</text>"#,
            escape(ylabel)
        );
    }

    fn diagonal(&self, out: &mut String) {
        let lo = self.x.0.max(self.y.0);
        let hi = self.x.1.min(self.y.1);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{GREY}" stroke-dasharray="5,4"/>"#,
            self.px(lo),
            self.py(lo),
            self.px(hi),
            self.py(hi)
        );
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.2}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn document(width: f64, height: f64, body: &str) -> String {
    format!(
        concat!(
            r#"<?xml version="1.0" encoding="UTF-8"?>"#,
            "\n",
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif">"#,
            "\n",
            r#"<rect width="100%" height="100%" fill="white"/>"#,
            "\n{body}</svg>\n"
        ),
        w = width,
        h = height,
        body = body
    )
}

const DIAGRAM_TICKS: [f64; 5] = [-1.0, -0.5, 0.0, 0.5, 1.0];

fn diagram_frame(left: f64) -> Frame {
    Frame {
        left,
        top: PAD,
        x: (-1.0, 1.0),
        y: (-1.0, 1.0),
    }
}

type Pick = fn(&FieldArrow) -> (f64, f64);

/// Two side-by-side panels: the raw step and the step after entanglement. Arrow length is
/// proportional to step size, normalised per panel so the longest arrow spans most of one
/// grid cell.
pub fn quiver(field: &VectorField, title: &str) -> String {
    let mut body = String::new();
    let _ = writeln!(
        body,
        r#"<defs><marker id="head" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="5" markerHeight="5" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="{BLUE}"/></marker></defs>"#
    );
    let _ = writeln!(
        body,
        r#"<text x="{:.2}" y="22" font-size="15" text-anchor="middle">{}</text>"#,
        PAD + PANEL + PAD / 2.0,
        escape(title)
    );
    let grid = field.grid;
    let xr = grid.s_ap_range;
    let yr = grid.s_an_range;
    let cell = PANEL / (grid.resolution.max(2) - 1) as f64;
    let panels: [(&str, Pick); 2] = [
        ("step", |a| (a.d_sap, a.d_san)),
        ("step with entanglement", |a| (a.d_sap_total, a.d_san_total)),
    ];
    for (k, (name, pick)) in panels.iter().enumerate() {
        let frame = Frame {
            left: PAD + k as f64 * (PANEL + PAD),
            top: PAD,
            x: xr,
            y: yr,
        };
        let ticks = [0.0, 0.25, 0.5, 0.75, 1.0];
        let xt: Vec<f64> = ticks.iter().map(|t| xr.0 + t * (xr.1 - xr.0)).collect();
        let yt: Vec<f64> = ticks.iter().map(|t| yr.0 + t * (yr.1 - yr.0)).collect();
        frame.axes(&mut body, name, "S_ap", "S_an", (&xt, &yt));
        frame.diagonal(&mut body);
        let max = field
            .arrows
            .iter()
            .map(|a| {
                let (u, v) = pick(a);
                u.hypot(v)
            })
            .fold(0.0, f64::max);
        if max == 0.0 {
            continue;
        }
        let scale = 0.9 * cell / max;
        for a in &field.arrows {
            let (u, v) = pick(a);
            let len = u.hypot(v) * scale;
            if len < 0.5 {
                continue;
            }
            let (x0, y0) = (frame.px(a.s_ap), frame.py(a.s_an));
            let (dx, dy) = (u / u.hypot(v) * len, -v / u.hypot(v) * len);
            let _ = writeln!(
                body,
                r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{:.2}" y2="{:.2}" stroke="{BLUE}" stroke-width="1" marker-end="url(#head)"/>"#,
                x0 + dx,
                y0 + dy
            );
        }
    }
    document(2.0 * PANEL + 3.0 * PAD, PANEL + 2.0 * PAD, &body)
}

/// Diagram scatter with the `S_an = S_ap` diagonal; `hard` points are drawn in red.
pub fn scatter(points: &[(f64, f64, bool)], title: &str) -> String {
    let mut body = String::new();
    let frame = diagram_frame(PAD);
    frame.axes(
        &mut body,
        title,
        "S_ap (easiest positive)",
        "S_an (hardest negative)",
        (&DIAGRAM_TICKS, &DIAGRAM_TICKS),
    );
    frame.diagonal(&mut body);
    for &(x, y, hard) in points {
        let _ = writeln!(
            body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
            frame.px(x),
            frame.py(y),
            if hard { RED } else { BLUE }
        );
    }
    let hard = points.iter().filter(|p| p.2).count();
    let lx = PAD + PANEL + 12.0;
    let _ = writeln!(
        body,
        r#"<circle cx="{lx:.2}" cy="{:.2}" r="4" fill="{BLUE}"/><text x="{:.2}" y="{:.2}" font-size="11">easy ({})</text>"#,
        PAD + 10.0,
        lx + 8.0,
        PAD + 14.0,
        points.len() - hard
    );
    let _ = writeln!(
        body,
        r#"<circle cx="{lx:.2}" cy="{:.2}" r="4" fill="{RED}"/><text x="{:.2}" y="{:.2}" font-size="11">hard ({hard})</text>"#,
        PAD + 28.0,
        lx + 8.0,
        PAD + 32.0
    );
    document(PANEL + 2.0 * PAD + 90.0, PANEL + 2.0 * PAD, &body)
}

/// A diagram-space path, start marked with a hollow circle.
pub fn trajectory(points: &[(f64, f64)], title: &str) -> String {
    let mut body = String::new();
    let frame = diagram_frame(PAD);
    frame.axes(
        &mut body,
        title,
        "S_ap",
        "S_an",
        (&DIAGRAM_TICKS, &DIAGRAM_TICKS),
    );
    frame.diagonal(&mut body);
    let mut pts = String::new();
    for &(x, y) in points {
        let _ = write!(pts, "{:.2},{:.2} ", frame.px(x), frame.py(y));
    }
    let _ = writeln!(
        body,
        r#"<polyline points="{}" fill="none" stroke="{RED}" stroke-width="1.5"/>"#,
        pts.trim_end()
    );
    if let Some(&(x, y)) = points.first() {
        let _ = writeln!(
            body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="black"/>"#,
            frame.px(x),
            frame.py(y)
        );
    }
    document(PANEL + 2.0 * PAD, PANEL + 2.0 * PAD, &body)
}

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = [BLUE, RED, "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let xr = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = padded_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let frame = Frame {
        left: PAD,
        top: PAD,
        x: xr,
        y: yr,
    };
    let ticks = |r: (f64, f64)| -> Vec<f64> {
        (0..5).map(|i| r.0 + (r.1 - r.0) * i as f64 / 4.0).collect()
    };
    let mut body = String::new();
    frame.axes(&mut body, title, xlabel, ylabel, (&ticks(xr), &ticks(yr)));
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for &(x, y) in &s.points {
            let _ = write!(pts, "{:.2},{:.2} ", frame.px(x), frame.py(y));
        }
        let _ = writeln!(
            body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.trim_end()
        );
        let y = PAD + 10.0 + 18.0 * k as f64;
        let _ = writeln!(
            body,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            PAD + PANEL + 10.0,
            PAD + PANEL + 26.0,
            PAD + PANEL + 30.0,
            y + 4.0,
            escape(s.name)
        );
    }
    document(PANEL + 2.0 * PAD + 110.0, PANEL + 2.0 * PAD, &body)
}
