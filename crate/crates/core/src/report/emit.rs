use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::LabeledImage;
use crate::error::{Error, Result};

/// Header plus rows, quoted only where a field needs it.
pub fn emit_csv(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Usage(format!(
                "csv row {i} has {} fields, header has {}",
                row.len(),
                header.len()
            )));
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Data(format!("csv write: {e}"));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::Data(format!("csv flush: {}", e.error())))
}

/// One named line in a plot.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { name: name.into(), points }
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
        .replace('\'', "&apos;")
}

/// Range padded by 5% on each side; a zero-width range becomes `v ± 1`.
fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    } else {
        (lo - 1.0, hi + 1.0)
    }
}

/// Line chart with one polyline per series and a legend.
pub fn emit_svg_plot(series: &[Series], width: u32, height: u32, title: &str) -> Result<Vec<u8>> {
    if series.is_empty() {
        return Err(Error::Usage("plot needs at least one series".into()));
    }
    for s in series {
        if s.points.is_empty() {
            return Err(Error::Usage(format!("series `{}` is empty", s.name)));
        }
        if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Data(format!("series `{}` has a non-finite value", s.name)));
        }
    }
    if width < 200 || height < 150 {
        return Err(Error::Usage(format!("plot size {width}x{height} below 200x150")));
    }
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);
    let (left, right, top, bottom) = (60.0, 20.0, 40.0, 40.0);
    let pw = width as f64 - left - right;
    let ph = height as f64 - top - bottom;
    let px = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| top + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width as f64 / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<g stroke="black"><line x1="{left}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{b}"/></g>"#,
        b = top + ph,
        r = left + pw
    );
    for (v, anchor_y) in [(y0, top + ph), (y1, top + 10.0)] {
        let _ = writeln!(out, r#"<text x="{}" y="{anchor_y}" text-anchor="end" font-size="10">{v:.4}</text>"#, left - 4.0);
    }
    for (v, anchor_x) in [(x0, left), (x1, left + pw)] {
        let _ = writeln!(out, r#"<text x="{anchor_x}" y="{}" text-anchor="middle" font-size="10">{v:.2}</text>"#, top + ph + 14.0);
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            pts.join(" ")
        );
        if s.points.len() == 1 {
            let (x, y) = s.points[0];
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = top + 12.0 + 14.0 * i as f64;
        let lx = left + pw - 110.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            lx + 16.0,
            lx + 20.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out.into_bytes())
}

/// Red at `s = 0` to yellow at `s = 1`.
pub fn heat(s: f64) -> [f64; 3] {
    [255.0, 255.0 * s, 0.0]
}

/// Channel-mean intensity rescaled to 0..=255 over the image.
pub fn grayscale(image: &LabeledImage) -> Vec<f64> {
    let plane = image.plane();
    let mean: Vec<f64> = (0..plane)
        .map(|i| (0..image.channels).map(|c| image.pixels[c * plane + i]).sum::<f64>() / image.channels as f64)
        .collect();
    let lo = mean.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mean.iter()
        .map(|v| if hi > lo { 255.0 * (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Binary P6 image of `(1 − αs)·gray + αs·heat(s)` per pixel.
pub fn emit_ppm_overlay(image: &LabeledImage, saliency: &[f64], alpha: f64) -> Result<Vec<u8>> {
    if saliency.len() != image.plane() {
        return Err(Error::dim("saliency pixels", image.plane(), saliency.len()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("overlay alpha {alpha} outside [0, 1]")));
    }
    if let Some(bad) = saliency.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::Parameter(format!("saliency value {bad} outside [0, 1]")));
    }
    let gray = grayscale(image);
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    for (g, &s) in gray.iter().zip(saliency) {
        let a = alpha * s;
        for h in heat(s) {
            out.push(((1.0 - a) * g + a * h).round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(out)
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
