//! Hand-rolled standalone SVG emission: line plots for step-count sweeps
//! and heatmaps for variance fields. Plots are presentation artifacts —
//! the numbers they draw always live in an accompanying CSV.

use crate::error::{Error, Result};
use crate::fields::Grid;
use std::fmt::Write as _;
use std::path::Path;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

/// One named polyline.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: &'a [(f64, f64)],
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 10_000.0 || a < 0.001 {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.4}")
    }
}

/// Writes a line plot of one or more series with axes, ticks, and a
/// legend.
pub fn line_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Parameter("line plot needs at least one point".into()));
    }
    let (width, height) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (72.0, 24.0, 40.0, 52.0);
    let (pw, ph) = (width - ml - mr, height - mt - mb);

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in s.points {
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::Numerical("line plot got a non-finite point".into()));
            }
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if x_max == x_min {
        x_min -= 0.5;
        x_max += 0.5;
    }
    if y_max == y_min {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let y_pad = 0.05 * (y_max - y_min);
    y_min -= y_pad;
    y_max += y_pad;

    let px = |x: f64| ml + (x - x_min) / (x_max - x_min) * pw;
    let py = |y: f64| mt + ph - (y - y_min) / (y_max - y_min) * ph;

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        width / 2.0,
        esc(title)
    );

    // Axes and ticks.
    let _ = write!(
        svg,
        "<line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        mt + ph,
        ml + pw,
        mt + ph,
        mt + ph
    );
    for i in 0..=4 {
        let fx = x_min + (x_max - x_min) * i as f64 / 4.0;
        let fy = y_min + (y_max - y_min) * i as f64 / 4.0;
        let (tx, ty) = (px(fx), py(fy));
        let _ = write!(
            svg,
            "<line x1=\"{tx}\" y1=\"{}\" x2=\"{tx}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{tx}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
             <line x1=\"{}\" y1=\"{ty}\" x2=\"{ml}\" y2=\"{ty}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n",
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 20.0,
            fmt_tick(fx),
            ml - 5.0,
            ml - 8.0,
            ty + 4.0,
            fmt_tick(fy)
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        ml + pw / 2.0,
        height - 12.0,
        esc(x_label),
        mt + ph / 2.0,
        mt + ph / 2.0,
        esc(y_label)
    );

    // Series polylines, markers, legend.
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut pts = String::new();
        for &(x, y) in s.points {
            let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
        }
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            pts.trim_end()
        );
        for &(x, y) in s.points {
            let _ = write!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>\n",
                px(x),
                py(y)
            );
        }
        let ly = mt + 16.0 * si as f64 + 8.0;
        let _ = write!(
            svg,
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"3\"/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            ml + pw - 130.0,
            ml + pw - 110.0,
            ml + pw - 104.0,
            ly + 4.0,
            esc(s.label)
        );
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg)?;
    Ok(())
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Three-stop sequential colormap (dark blue → teal → yellow).
fn colormap(t: f64) -> String {
    let stops = [(11.0, 29.0, 81.0), (38.0, 166.0, 154.0), (255.0, 238.0, 88.0)];
    let t = t.clamp(0.0, 1.0);
    let (lo, hi, u) = if t < 0.5 {
        (stops[0], stops[1], t * 2.0)
    } else {
        (stops[1], stops[2], (t - 0.5) * 2.0)
    };
    format!(
        "rgb({},{},{})",
        lerp(lo.0, hi.0, u).round() as u8,
        lerp(lo.1, hi.1, u).round() as u8,
        lerp(lo.2, hi.2, u).round() as u8
    )
}

/// Writes an h×w field as a colored-cell heatmap with a min/max annotated
/// colorbar.
pub fn heatmap(path: &Path, title: &str, g: &Grid) -> Result<()> {
    let (h, w) = (g.h(), g.w());
    let cell = (360.0 / h.max(w) as f64).clamp(6.0, 28.0);
    let (ml, mt) = (24.0, 44.0);
    let width = ml + w as f64 * cell + 96.0;
    let height = mt + h as f64 * cell + 24.0;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in g.values() {
        if !v.is_finite() {
            return Err(Error::Numerical("heatmap got a non-finite value".into()));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        width / 2.0,
        esc(title)
    );
    for r in 0..h {
        for c in 0..w {
            let t = (g.at(r, c) - lo) / span;
            let _ = write!(
                svg,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{cell:.2}\" height=\"{cell:.2}\" fill=\"{}\"/>\n",
                ml + c as f64 * cell,
                mt + r as f64 * cell,
                colormap(t)
            );
        }
    }
    // Colorbar.
    let bar_x = ml + w as f64 * cell + 18.0;
    let bar_h = h as f64 * cell;
    for i in 0..32 {
        let t = 1.0 - i as f64 / 31.0;
        let _ = write!(
            svg,
            "<rect x=\"{bar_x:.2}\" y=\"{:.2}\" width=\"14\" height=\"{:.2}\" fill=\"{}\"/>\n",
            mt + bar_h * i as f64 / 32.0,
            bar_h / 32.0 + 0.5,
            colormap(t)
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"{}\">{}</text>\n<text x=\"{}\" y=\"{}\">{}</text>\n</svg>\n",
        bar_x + 18.0,
        mt + 10.0,
        fmt_tick(hi),
        bar_x + 18.0,
        mt + bar_h,
        fmt_tick(lo)
    );
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn line_plot_writes_deterministic_svg() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.svg");
        let pts = [(1.0, 0.1), (2.0, 0.4), (4.0, 0.5)];
        let series = [Series { label: "oracle", points: &pts }];
        line_plot(&path, "variance vs steps", "N", "mu_V", &series).unwrap();
        let a = std::fs::read(&path).unwrap();
        line_plot(&path, "variance vs steps", "N", "mu_V", &series).unwrap();
        let b = std::fs::read(&path).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains("polyline"));
        assert!(text.contains("oracle"));
    }

    #[test]
    fn line_plot_rejects_empty_and_nonfinite() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("p.svg");
        assert!(line_plot(&path, "t", "x", "y", &[]).is_err());
        let bad = [(0.0, f64::NAN)];
        let series = [Series { label: "s", points: &bad }];
        assert!(line_plot(&path, "t", "x", "y", &series).is_err());
    }

    #[test]
    fn heatmap_covers_all_cells() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("h.svg");
        let g = Grid::new(3, 4, (0..12).map(|i| i as f64).collect()).unwrap();
        heatmap(&path, "field", &g).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // 12 cells + 32 colorbar segments + background.
        assert_eq!(text.matches("<rect").count(), 12 + 32 + 1);
    }

    #[test]
    fn titles_are_escaped() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("e.svg");
        let g = Grid::filled(2, 2, 1.0);
        heatmap(&path, "a < b & c", &g).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("a &lt; b &amp; c"));
    }
}
