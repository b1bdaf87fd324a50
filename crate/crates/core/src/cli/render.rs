//! Static SVG scatter plots of embeddings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];
const UNLABELED_COLOR: &str = "#999999";
const UNLABELED_NAME: &str = "(unlabeled)";
const LEGEND_WIDTH: f64 = 150.0;
const MARGIN: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotOptions {
    pub width: u32,
    pub height: u32,
    pub radius: f64,
    /// Explicit label → CSS color assignments; other labels use the palette.
    pub colors: BTreeMap<String, String>,
    /// Per-point text template, e.g. `{id}_{agg0}`.
    pub annotate: Option<String>,
    /// Camera for 3-D embeddings, in degrees.
    pub azimuth: f64,
    pub elevation: f64,
    pub title: Option<String>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            width: 800,
            height: 600,
            radius: 4.0,
            colors: BTreeMap::new(),
            annotate: None,
            azimuth: 30.0,
            elevation: 20.0,
            title: None,
        }
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Formats an aggregate for annotations: integers without decimals,
/// everything else with two.
fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.2}")
    }
}

/// Expands `{id}`, `{label}`, `{index}` and `{aggN}` placeholders.
pub fn annotation_text(template: &str, id: &str, label: Option<&str>, index: usize, aggregates: Option<&[f64]>) -> Result<String> {
    let mut out = String::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let end = rest[start..]
            .find('}')
            .map(|e| start + e)
            .ok_or_else(|| Error::Validation(format!("unclosed placeholder in {template:?}")))?;
        let key = &rest[start + 1..end];
        match key {
            "id" => out.push_str(id),
            "label" => out.push_str(label.unwrap_or("")),
            "index" => out.push_str(&index.to_string()),
            _ => {
                let idx: usize = key
                    .strip_prefix("agg")
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| Error::Validation(format!("unknown placeholder {{{key}}}")))?;
                let value = aggregates
                    .and_then(|a| a.get(idx))
                    .ok_or_else(|| Error::Validation(format!("no aggregate value for {{{key}}}")))?;
                out.push_str(&format_value(*value));
            }
        }
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Screen-plane coordinates and depth of every point. 3-D embeddings are
/// rotated by the azimuth about the third axis, tilted by the elevation
/// and projected orthographically.
fn project(embedding: &Embedding, opts: &PlotOptions) -> Result<Vec<(f64, f64, f64)>> {
    let y = &embedding.coords;
    match embedding.dim() {
        2 => Ok((0..y.nrows()).map(|i| (y[(i, 0)], y[(i, 1)], 0.0)).collect()),
        3 => {
            let (sa, ca) = opts.azimuth.to_radians().sin_cos();
            let (se, ce) = opts.elevation.to_radians().sin_cos();
            Ok((0..y.nrows())
                .map(|i| {
                    let (x0, y0, z0) = (y[(i, 0)], y[(i, 1)], y[(i, 2)]);
                    let xr = x0 * ca - y0 * sa;
                    let yr = x0 * sa + y0 * ca;
                    (xr, z0 * ce + yr * se, yr * ce - z0 * se)
                })
                .collect())
        }
        d => Err(Error::Dimension(format!("cannot plot a {d}-dimensional embedding"))),
    }
}

/// Renders one circle per point colored by label, a legend with one entry
/// per distinct label and optional per-point annotations.
pub fn render_scatter(embedding: &Embedding, opts: &PlotOptions, annotations: Option<&[String]>) -> Result<String> {
    let k = embedding.len();
    if let Some(a) = annotations {
        if a.len() != k {
            return Err(Error::Contract(format!("{} annotations for {k} points", a.len())));
        }
    }
    let points = project(embedding, opts)?;

    let labels: BTreeSet<Option<&str>> = embedding.labels.iter().map(|l| l.as_deref()).collect();
    let mut colors: BTreeMap<Option<&str>, String> = BTreeMap::new();
    let mut next = 0;
    for label in &labels {
        let color = match label {
            None => UNLABELED_COLOR.to_string(),
            Some(l) => match opts.colors.get(*l) {
                Some(c) => c.clone(),
                None => {
                    if !opts.colors.is_empty() {
                        log::warn!("label {l:?} missing from the color map; using the palette");
                    }
                    let c = PALETTE[next % PALETTE.len()].to_string();
                    next += 1;
                    c
                }
            },
        };
        colors.insert(*label, color);
    }

    let (w, h) = (opts.width as f64, opts.height as f64);
    let plot_w = (w - LEGEND_WIDTH - 2.0 * MARGIN).max(10.0);
    let plot_h = (h - 2.0 * MARGIN).max(10.0);
    let bounds = |f: fn(&(f64, f64, f64)) -> f64| {
        points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    };
    let (x_lo, x_hi) = bounds(|p| p.0);
    let (y_lo, y_hi) = bounds(|p| p.1);
    let span = (x_hi - x_lo).max(y_hi - y_lo);
    let scale = if span > 0.0 { plot_w.min(plot_h) / span } else { 1.0 };
    let (x_mid, y_mid) = ((x_lo + x_hi) / 2.0, (y_lo + y_hi) / 2.0);
    let to_screen = |p: &(f64, f64, f64)| {
        (
            MARGIN + plot_w / 2.0 + (p.0 - x_mid) * scale,
            MARGIN + plot_h / 2.0 - (p.1 - y_mid) * scale,
        )
    };

    // far points first so nearer ones are drawn on top
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| points[b].2.total_cmp(&points[a].2).then(a.cmp(&b)));

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        opts.width, opts.height, opts.width, opts.height
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{}" height="{}" fill="white"/>"#, opts.width, opts.height);
    if let Some(title) = &opts.title {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="18" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
            MARGIN + plot_w / 2.0,
            escape(title)
        );
    }
    let _ = writeln!(svg, r#"<g class="points">"#);
    for &i in &order {
        let (sx, sy) = to_screen(&points[i]);
        let color = &colors[&embedding.labels[i].as_deref()];
        let _ = writeln!(
            svg,
            r#"<circle class="point" cx="{sx:.2}" cy="{sy:.2}" r="{:.2}" fill="{}" fill-opacity="0.85" stroke="black" stroke-width="0.5"><title>{}</title></circle>"#,
            opts.radius,
            escape(color),
            escape(&embedding.ids[i])
        );
    }
    let _ = writeln!(svg, "</g>");
    if let Some(texts) = annotations {
        let _ = writeln!(svg, r#"<g class="annotations" font-family="sans-serif" font-size="9">"#);
        for &i in &order {
            let (sx, sy) = to_screen(&points[i]);
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
                sx + opts.radius + 1.0,
                sy - opts.radius - 1.0,
                escape(&texts[i])
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(svg, r#"<g class="legend" font-family="sans-serif" font-size="12">"#);
    let legend_x = w - LEGEND_WIDTH;
    for (n, (label, color)) in colors.iter().enumerate() {
        let y = MARGIN + 20.0 * n as f64;
        let _ = writeln!(
            svg,
            r#"<g class="legend-entry"><rect x="{legend_x:.2}" y="{:.2}" width="12" height="12" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
            y,
            escape(color),
            legend_x + 18.0,
            y + 10.0,
            escape(label.unwrap_or(UNLABELED_NAME))
        );
    }
    let _ = writeln!(svg, "</g>");
    svg.push_str("</svg>\n");
    Ok(svg)
}
