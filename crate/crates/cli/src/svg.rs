//! Minimal SVG scatter plots. Every eigenvalue is drawn as one
//! `<circle class="eig">` element.

use std::fmt::Write;

use num_complex::Complex64;

const PANEL: f64 = 260.0;
const MARGIN: f64 = 30.0;

fn header(width: f64, height: f64) -> String {
    format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
         <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    )
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// One panel per epsilon: unit circle, axes and the eigenvalues.
pub fn spectrum_plot(panels: &[(f64, Vec<Complex64>)]) -> String {
    let cols = panels.len().clamp(1, 4);
    let rows = panels.len().div_ceil(cols).max(1);
    let width = cols as f64 * (PANEL + MARGIN) + MARGIN;
    let height = rows as f64 * (PANEL + 2.0 * MARGIN) + MARGIN;
    let mut out = header(width, height);
    let r = PANEL / 2.0 * 0.9;
    for (p, (eps, values)) in panels.iter().enumerate() {
        let cx = MARGIN + (p % cols) as f64 * (PANEL + MARGIN) + PANEL / 2.0;
        let cy = MARGIN + (p / cols) as f64 * (PANEL + 2.0 * MARGIN) + MARGIN + PANEL / 2.0;
        let _ = writeln!(out, "<g class=\"panel\">");
        let _ = writeln!(
            out,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"12\">eps = {}</text>",
            cy - PANEL / 2.0 - 8.0,
            escape(&format!("{eps:e}"))
        );
        let _ = writeln!(
            out,
            "<line x1=\"{:.1}\" y1=\"{cy:.1}\" x2=\"{:.1}\" y2=\"{cy:.1}\" stroke=\"#bbb\"/>",
            cx - PANEL / 2.0,
            cx + PANEL / 2.0
        );
        let _ = writeln!(
            out,
            "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"#bbb\"/>",
            cy - PANEL / 2.0,
            cy + PANEL / 2.0
        );
        let _ = writeln!(
            out,
            "<circle class=\"unit\" cx=\"{cx:.1}\" cy=\"{cy:.1}\" r=\"{r:.1}\" fill=\"none\" stroke=\"#888\"/>"
        );
        for z in values {
            let x = cx + r * z.re.clamp(-1.1, 1.1);
            let y = cy - r * z.im.clamp(-1.1, 1.1);
            let _ = writeln!(
                out,
                "<circle class=\"eig\" cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"2.5\" fill=\"#c03\"><title>{:.6} {:+.6}i</title></circle>",
                z.re, z.im
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    out
}

/// Real eigenvalues against epsilon on a logarithmic axis, one polyline per rank.
pub fn sweep_plot(rows: &[(f64, Vec<f64>)]) -> String {
    let (w, h) = (640.0, 400.0);
    let (x0, x1, y0, y1) = (60.0, w - 20.0, h - 40.0, 20.0);
    let mut out = header(w, h);
    let logs: Vec<f64> = rows.iter().map(|(e, _)| e.log10()).collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let vmin = rows
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0, f64::min)
        .max(-1.0);
    let px = |l: f64| x0 + (x1 - x0) * (l - lo) / span;
    let py = |v: f64| y0 + (y1 - y0) * (v - vmin) / (1.0 - vmin).max(1e-12);
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>"
    );
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>"
    );
    let mut decade = lo.ceil();
    while decade <= hi {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">1e{decade}</text>",
            px(decade),
            y0 + 16.0
        );
        decade += 1.0;
    }
    for v in [vmin, 0.5 * (vmin + 1.0), 1.0] {
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"11\">{v:.2}</text>",
            x0 - 6.0,
            py(v) + 4.0
        );
    }
    let ranks = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for rank in 0..ranks {
        let pts: Vec<String> = rows
            .iter()
            .zip(&logs)
            .filter_map(|((_, v), l)| v.get(rank).map(|y| format!("{:.2},{:.2}", px(*l), py(*y))))
            .collect();
        let _ = writeln!(
            out,
            "<polyline class=\"curve\" fill=\"none\" stroke=\"#36c\" points=\"{}\"/>",
            pts.join(" ")
        );
    }
    for ((_, v), l) in rows.iter().zip(&logs) {
        for y in v {
            let _ = writeln!(
                out,
                "<circle class=\"eig\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"#c03\"/>",
                px(*l),
                py(*y)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}
