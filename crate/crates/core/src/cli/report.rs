use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::trajectory::{
    associate, evaluate, umeyama_align, MetricsReport, Trajectory, ASSOCIATION_TOLERANCE,
};

/// Smallest fraction of estimate poses that must associate with the
/// reference.
pub const MIN_ASSOCIATION: f64 = 0.5;

/// One evaluated estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub metrics: MetricsReport,
    /// The estimate after similarity alignment onto the reference.
    pub aligned: Trajectory,
}

pub fn evaluate_named(
    name: &str,
    estimate: &Trajectory,
    reference: &Trajectory,
    delta_frames: usize,
) -> Result<EvalRow> {
    let assoc = associate(estimate, reference, ASSOCIATION_TOLERANCE);
    if assoc.matched_fraction() < MIN_ASSOCIATION {
        return Err(Error::param(format!(
            "{name}: only {:.1}% of poses match reference timestamps (need {:.0}%)",
            100.0 * assoc.matched_fraction(),
            100.0 * MIN_ASSOCIATION
        )));
    }
    let metrics = evaluate(estimate, reference, delta_frames)?;
    let alignment = umeyama_align(estimate, reference, true)?;
    Ok(EvalRow {
        name: name.to_string(),
        metrics,
        aligned: estimate.similarity_transformed(&alignment),
    })
}

/// Fixed-width text table.
pub fn format_table(rows: &[EvalRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(0).max(8);
    let mut out = format!(
        "{:<width$}  {:>10}  {:>8}  {:>10}  {:>10}\n",
        "Sequence", "Length (m)", "# poses", "ATE (m)", "RTE (m)"
    );
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{:<width$}  {:>10.4}  {:>8}  {:>10.4}  {:>10.4}",
            r.name, m.length, m.pose_count, m.ate_rmse, m.rte_rmse
        );
    }
    out
}

/// CSV with full-precision values (shortest round-trip formatting).
pub fn format_csv(rows: &[EvalRow]) -> String {
    let mut out = String::from("name,length_m,poses,ate_m,rte_m\n");
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&r.name),
            m.length,
            m.pose_count,
            m.ate_rmse,
            m.rte_rmse
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 480.0;
const MARGIN: f64 = 50.0;

struct Series<'a> {
    name: &'a str,
    color: &'a str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

/// Maps data bounds onto the plot area; `equal` keeps the aspect ratio.
struct Frame {
    x0: f64,
    y0: f64,
    sx: f64,
    sy: f64,
}

impl Frame {
    fn fit(series: &[Series], equal: bool) -> Frame {
        let pts = series.iter().flat_map(|s| s.points.iter());
        let (mut xmin, mut xmax, mut ymin, mut ymax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
        if !xmin.is_finite() {
            (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
        }
        let span = |lo: f64, hi: f64| if hi - lo > 1e-12 { hi - lo } else { 1.0 };
        let (w, h) = (PLOT_W - 2.0 * MARGIN, PLOT_H - 2.0 * MARGIN);
        let (mut sx, mut sy) = (w / span(xmin, xmax), h / span(ymin, ymax));
        if equal {
            let s = sx.min(sy);
            (sx, sy) = (s, s);
        }
        Frame {
            x0: xmin,
            y0: ymin,
            sx,
            sy,
        }
    }

    fn map(&self, (x, y): (f64, f64)) -> (f64, f64) {
        (
            MARGIN + (x - self.x0) * self.sx,
            PLOT_H - MARGIN - (y - self.y0) * self.sy,
        )
    }
}

fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series], equal: bool) -> String {
    let frame = Frame::fit(series, equal);
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_W}\" height=\"{PLOT_H}\" viewBox=\"0 0 {PLOT_W} {PLOT_H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n\
         <text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 {})\">{}</text>\n\
         <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>\n",
        PLOT_W / 2.0,
        xml_escape(title),
        PLOT_W / 2.0,
        PLOT_H - 12.0,
        xml_escape(xlabel),
        PLOT_H / 2.0,
        PLOT_H / 2.0,
        xml_escape(ylabel),
        PLOT_W - 2.0 * MARGIN,
        PLOT_H - 2.0 * MARGIN,
    );
    for (i, s) in series.iter().enumerate() {
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&p| {
                let (x, y) = frame.map(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash} points=\"{}\"/>",
            s.color,
            pts.join(" ")
        );
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            out,
            "<line x1=\"{x1}\" y1=\"{ly}\" x2=\"{x2}\" y2=\"{ly}\" stroke=\"{c}\" stroke-width=\"2\"{dash}/>\
             <text x=\"{tx}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"11\">{name}</text>",
            x1 = PLOT_W - MARGIN - 150.0,
            x2 = PLOT_W - MARGIN - 125.0,
            c = s.color,
            tx = PLOT_W - MARGIN - 120.0,
            ty = ly + 4.0,
            name = xml_escape(s.name),
        );
    }
    out.push_str("</svg>\n");
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn series_from<'a>(
    reference: &Trajectory,
    rows: &'a [EvalRow],
    f: impl Fn(f64, &Vector3<f64>) -> (f64, f64),
) -> Vec<Series<'a>> {
    let mut out = vec![Series {
        name: "reference",
        color: "#000000",
        dashed: true,
        points: reference
            .poses()
            .iter()
            .map(|p| f(p.timestamp(), &p.position()))
            .collect(),
    }];
    for (i, r) in rows.iter().enumerate() {
        out.push(Series {
            name: &r.name,
            color: PALETTE[i % PALETTE.len()],
            dashed: false,
            points: r
                .aligned
                .poses()
                .iter()
                .map(|p| f(p.timestamp(), &p.position()))
                .collect(),
        });
    }
    out
}

/// Top-down view of the reference and the aligned estimates.
pub fn xy_plot_svg(reference: &Trajectory, rows: &[EvalRow]) -> String {
    let series = series_from(reference, rows, |_, p| (p.x, p.y));
    svg_plot("Trajectories (x-y)", "x (m)", "y (m)", &series, true)
}

/// One plot per axis against time.
pub fn axis_plot_svg(reference: &Trajectory, rows: &[EvalRow], axis: usize) -> String {
    let name = ["x", "y", "z"][axis];
    let series = series_from(reference, rows, |t, p| (t, p[axis]));
    svg_plot(
        &format!("{name} over time"),
        "time (s)",
        &format!("{name} (m)"),
        &series,
        false,
    )
}
