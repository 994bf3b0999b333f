//! CSV tables and a minimal SVG line-plot emitter.

use std::fmt::Write as _;

use super::align::AlignmentStats;
use super::fitting::CedCurve;

/// Scores of one group (a speaker, or all speakers pooled).
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRow {
    pub group: String,
    pub stats: AlignmentStats,
}

pub fn scores_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from("group,n,hits,substitutions,deletions,insertions,correctness,accuracy\n");
    for r in rows {
        let s = &r.stats;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.4},{:.4}",
            r.group,
            s.n,
            s.hits(),
            s.substitutions,
            s.deletions,
            s.insertions,
            s.correctness(),
            s.accuracy()
        );
    }
    out
}

pub fn ced_csv(curves: &[(String, CedCurve)]) -> String {
    let mut out = String::from("model,threshold,proportion\n");
    for (name, c) in curves {
        for (t, p) in c.thresholds.iter().zip(&c.proportions) {
            let _ = writeln!(out, "{name},{t:.6},{p:.6}");
        }
    }
    out
}

/// One row per fitted frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FitRow {
    pub model: String,
    pub sentence: String,
    pub frame: usize,
    pub final_cost: f64,
    pub converged: bool,
    pub error: Option<f64>,
}

pub fn fit_log_csv(rows: &[FitRow]) -> String {
    let mut out = String::from("model,sentence,frame,final_cost,converged,error\n");
    for r in rows {
        let err = r.error.map(|e| format!("{e:.8}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{:.6e},{},{err}",
            r.model, r.sentence, r.frame, r.final_cost, r.converged
        );
    }
    out
}

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

/// Line plot of several series on shared axes.
pub fn line_plot_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 160.0, 40.0, 60.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    y0 = y0.min(0.0);
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pw = w - left - right;
    let ph = h - top - bottom;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - (y - y0) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(title)
    );
    for t in nice_ticks(x0, x1) {
        let x = sx(t);
        let _ = writeln!(out, r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/>"##, top + ph);
        let _ = writeln!(out, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, top + ph + 16.0, fmt_tick(t));
    }
    for t in nice_ticks(y0, y1) {
        let y = sy(t);
        let _ = writeln!(out, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, left + pw);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, left - 6.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(
        out,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + pw / 2.0,
        h - 18.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            path.join(" ")
        );
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name));
    }
    out.push_str("</svg>\n");
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_table() {
        let rows = vec![ScoreRow {
            group: "pooled".into(),
            stats: AlignmentStats {
                n: 3,
                substitutions: 1,
                deletions: 0,
                insertions: 1,
            },
        }];
        let csv = scores_csv(&rows);
        assert_eq!(csv.lines().nth(1).unwrap(), "pooled,3,2,1,0,1,66.6667,33.3333");
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let s = line_plot_svg(
            "CED <test>",
            "error",
            "proportion",
            &[Series {
                name: "a&b".into(),
                points: vec![(0.0, 0.0), (0.01, 0.5), (0.02, 1.0)],
            }],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("CED &lt;test&gt;") && s.contains("a&amp;b"));
        assert_eq!(s.matches("<polyline").count(), 1);
        assert!(line_plot_svg("empty", "x", "y", &[]).contains("</svg>"));
    }

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.0, 0.05);
        assert_eq!(t.first().copied(), Some(0.0));
        assert!((t.last().unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(fmt_tick(0.0100), "0.01");
    }
}
