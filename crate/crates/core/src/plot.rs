//! Twelve-panel SVG overlays of a reference record and generated records.
//!
//! Reference traces are black, two-lead synthesis blue and single-lead
//! synthesis red. Output is plain text with fixed number formatting, so equal
//! inputs give byte-identical files.

use std::fmt::Write as _;

use thiserror::Error;

use crate::signal::{seconds_to_samples, EcgRecord, LeadId};

pub const REFERENCE_COLOR: &str = "black";
pub const T2T_COLOR: &str = "blue";
pub const S2E_COLOR: &str = "red";
pub const DEFAULT_WINDOW_S: f64 = 2.0;

const PANEL_W: f64 = 320.0;
const PANEL_H: f64 = 120.0;
const COLUMNS: usize = 3;
const MARGIN: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("window of {requested} samples exceeds the {available} available")]
    WindowTooLong { requested: usize, available: usize },
    #[error("sampling rates differ: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("window must be positive")]
    EmptyWindow,
}

fn polyline(out: &mut String, xs: &[f32], x0: f64, y0: f64, lo: f64, hi: f64, color: &str) {
    let n = xs.len();
    let span = (hi - lo).max(1e-6);
    let dx = (PANEL_W - 2.0 * MARGIN) / (n.max(2) - 1) as f64;
    let _ = write!(out, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"");
    for (k, &v) in xs.iter().enumerate() {
        let x = x0 + MARGIN + k as f64 * dx;
        let y = y0 + PANEL_H - MARGIN - (v as f64 - lo) / span * (PANEL_H - 2.0 * MARGIN);
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    out.push_str("\"/>\n");
}

/// Draw the first `window_s` seconds of each lead.
pub fn render_overlay(
    reference: &EcgRecord,
    t2t: Option<&EcgRecord>,
    s2e: Option<&EcgRecord>,
    window_s: f64,
) -> Result<String, PlotError> {
    let fs = reference.sampling_rate;
    let n = seconds_to_samples(window_s, fs);
    if n == 0 {
        return Err(PlotError::EmptyWindow);
    }
    let traces: Vec<(&EcgRecord, &str)> = std::iter::once((reference, REFERENCE_COLOR))
        .chain(t2t.map(|r| (r, T2T_COLOR)))
        .chain(s2e.map(|r| (r, S2E_COLOR)))
        .collect();
    for (r, _) in &traces {
        if r.sampling_rate != fs {
            return Err(PlotError::RateMismatch(fs, r.sampling_rate));
        }
        if r.len() < n {
            return Err(PlotError::WindowTooLong {
                requested: n,
                available: r.len(),
            });
        }
    }
    let rows = LeadId::ALL.len().div_ceil(COLUMNS);
    let (w, h) = (PANEL_W * COLUMNS as f64, PANEL_H * rows as f64);
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    for (k, lead) in LeadId::ALL.iter().enumerate() {
        let x0 = (k % COLUMNS) as f64 * PANEL_W;
        let y0 = (k / COLUMNS) as f64 * PANEL_H;
        let shown: Vec<(&[f32], &str)> = traces
            .iter()
            .filter_map(|(r, c)| r.lead(*lead).map(|xs| (&xs[..n], *c)))
            .collect();
        let lo = shown.iter().flat_map(|s| s.0).fold(f64::INFINITY, |a, &v| a.min(v as f64));
        let hi = shown.iter().flat_map(|s| s.0).fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
        let _ = writeln!(out, "<g class=\"panel\" id=\"lead-{}\">", lead.name());
        let _ = writeln!(
            out,
            "<rect x=\"{x0:.0}\" y=\"{y0:.0}\" width=\"{PANEL_W:.0}\" height=\"{PANEL_H:.0}\" fill=\"none\" stroke=\"#ccc\"/>"
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            x0 + 4.0,
            y0 + 14.0,
            lead.name()
        );
        for (xs, color) in shown {
            polyline(&mut out, xs, x0, y0, lo, hi, color);
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</svg>");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_record, BeatTemplate};
    use crate::Label;

    #[test]
    fn panels_colors_and_vertex_counts() {
        let r = generate_record(&BeatTemplate::default(), Label::Normal, 70.0, 3.0, 250, 1, 0).unwrap();
        let svg = render_overlay(&r, Some(&r), None, 2.0).unwrap();
        assert_eq!(svg.matches("<g class=\"panel\"").count(), 12);
        assert_eq!(svg.matches("stroke=\"black\"").count(), 12);
        assert_eq!(svg.matches("stroke=\"blue\"").count(), 12);
        assert_eq!(svg.matches("stroke=\"red\"").count(), 0);
        let first = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(first.split(' ').count(), 500);
        assert!(svg.contains(">aVR</text>"));
    }

    #[test]
    fn window_longer_than_record() {
        let r = generate_record(&BeatTemplate::default(), Label::Normal, 70.0, 1.0, 250, 1, 0).unwrap();
        assert_eq!(
            render_overlay(&r, None, None, 2.0),
            Err(PlotError::WindowTooLong {
                requested: 500,
                available: 250
            })
        );
    }
}
