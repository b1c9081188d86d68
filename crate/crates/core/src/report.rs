//! Metrics CSV and scatter-plot emission.

use std::fmt::Write as _;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;

pub const METRICS_HEADER: &str =
    "step,v_sup,v_labeller,v_unsup,v_full,label_agreement,mean_iou,mmd2,marginal_tv,pseudo_label_acc";

fn cell(v: Option<f64>) -> String {
    // `{}` on f64 prints the shortest string that parses back to the same value.
    v.map(|v| format!("{v}")).unwrap_or_default()
}

pub fn metrics_csv_string(history: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in history {
        let b = &r.breakdown;
        let cells = [
            r.step.to_string(),
            cell(Some(b.v_sup)),
            cell(Some(b.v_labeller)),
            cell(r.has_unsup.then_some(b.v_unsup)),
            cell(Some(b.v_full)),
            cell(Some(r.label_agreement)),
            cell(Some(r.mean_iou)),
            cell(Some(r.mmd2)),
            cell(r.marginal_tv),
            cell(r.pseudo_label_acc),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn emit_metrics_csv(history: &[MetricsRecord], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_csv_string(history)).map_err(|e| Error::io(path, e))
}

/// One parsed CSV row: the step and the nine value columns (`None` when empty).
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    pub values: [Option<f64>; 9],
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let csv_err = |message: String| Error::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
    let header = reader.headers().map_err(|e| csv_err(e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != METRICS_HEADER {
        return Err(csv_err("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_err(e.to_string()))?;
        let step = rec[0].parse().map_err(|_| csv_err(format!("bad step `{}`", &rec[0])))?;
        let mut values = [None; 9];
        for (i, v) in values.iter_mut().enumerate() {
            let s = &rec[i + 1];
            if !s.is_empty() {
                *v = Some(s.parse().map_err(|_| csv_err(format!("bad number `{s}`")))?);
            }
        }
        rows.push(MetricsRow { step, values });
    }
    Ok(rows)
}

const SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// Scatter plot of 2-D samples: real points as circles, generated points as
/// crosses, colored by class label (`labels` covers real rows then fake rows).
pub fn scatter_svg(real: &Tensor, fake: &Tensor, labels: &[usize]) -> Result<String> {
    for t in [real, fake] {
        if t.numel() > 0 && (t.rank() != 2 || t.last_dim() != 2) {
            return Err(Error::shape("emit_scatter_svg", &[t.shape()]));
        }
    }
    let n_real = if real.numel() == 0 { 0 } else { real.rows() };
    let n_fake = if fake.numel() == 0 { 0 } else { fake.rows() };
    if labels.len() != n_real + n_fake {
        return Err(Error::invalid(format!(
            "{} labels for {} points",
            labels.len(),
            n_real + n_fake
        )));
    }
    let points: Vec<&[f64]> = (0..n_real).map(|i| real.row(i)).chain((0..n_fake).map(|i| fake.row(i))).collect();
    let (mut lo, mut hi) = ([-1.0f64, -1.0], [1.0f64, 1.0]);
    if !points.is_empty() {
        lo = [f64::INFINITY; 2];
        hi = [f64::NEG_INFINITY; 2];
        for p in &points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
    }
    for k in 0..2 {
        let span = (hi[k] - lo[k]).max(1e-9);
        lo[k] -= 0.1 * span;
        hi[k] += 0.1 * span;
    }
    let inner = SIZE - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - lo[0]) / (hi[0] - lo[0]) * inner;
    let py = |y: f64| SIZE - MARGIN - (y - lo[1]) / (hi[1] - lo[1]) * inner;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="800" viewBox="0 0 800 800">"#
    );
    let _ = writeln!(s, r##"<rect width="800" height="800" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r##"<g id="axes" stroke="#000000" fill="none"><rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}"/></g>"##
    );
    let _ = writeln!(
        s,
        r#"<g id="ticks" font-size="12" font-family="sans-serif"><text x="{MARGIN}" y="{:.2}">{:.3}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{:.3}</text><text x="4" y="{:.2}">{:.3}</text><text x="4" y="{:.2}">{:.3}</text></g>"#,
        SIZE - MARGIN + 16.0,
        lo[0],
        SIZE - MARGIN,
        SIZE - MARGIN + 16.0,
        hi[0],
        SIZE - MARGIN,
        lo[1],
        MARGIN + 12.0,
        hi[1]
    );
    let color = |l: usize| PALETTE[l % PALETTE.len()];
    let _ = writeln!(s, r#"<g id="real">"#);
    for (p, &l) in points[..n_real].iter().zip(labels) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="none" stroke="{}"/>"#,
            px(p[0]),
            py(p[1]),
            color(l)
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, r#"<g id="fake">"#);
    for (p, &l) in points[n_real..].iter().zip(&labels[n_real..]) {
        let (x, y) = (px(p[0]), py(p[1]));
        let _ = writeln!(
            s,
            r#"<path class="cross" d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{}"/>"#,
            x - 3.0,
            y - 3.0,
            x + 3.0,
            y + 3.0,
            x - 3.0,
            y + 3.0,
            x + 3.0,
            y - 3.0,
            color(l)
        );
    }
    let _ = writeln!(s, "</g>");
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let _ = writeln!(s, r#"<g id="legend" font-size="12" font-family="sans-serif">"#);
    let _ = writeln!(
        s,
        r##"<text x="{:.2}" y="20">o real  x generated</text>"##,
        SIZE - 220.0
    );
    for (i, c) in classes.iter().enumerate() {
        let y = 40.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">class {c}</text>"#,
            SIZE - 220.0,
            y - 9.0,
            color(*c),
            SIZE - 204.0,
            y
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_scatter_svg(real: &Tensor, fake: &Tensor, labels: &[usize], path: &Path) -> Result<()> {
    let svg = scatter_svg(real, fake, labels)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
