//! Static SVG and CSV output of the real and generated NLL density curves.

use std::fmt::Write as _;

use crate::benchmark::DensityCurves;

pub fn curves_csv(c: &DensityCurves) -> String {
    let mut s = String::from("nll,f_real,f_generated\n");
    for ((g, r), q) in c.grid.iter().zip(&c.real).zip(&c.generated) {
        let _ = writeln!(s, "{g:?},{r:?},{q:?}");
    }
    s
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn polyline(xs: &[f64], ys: &[f64], x0: f64, x1: f64, ymax: f64, color: &str) -> String {
    let pw = WIDTH - 2.0 * MARGIN;
    let ph = HEIGHT - 2.0 * MARGIN;
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let px = MARGIN + (x - x0) / (x1 - x0) * pw;
            let py = HEIGHT - MARGIN - y / ymax * ph;
            format!("{px:.2},{py:.2}")
        })
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        pts.join(" ")
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn curves_svg(c: &DensityCurves, title: &str) -> String {
    let (x0, x1) = (c.grid[0], c.grid[c.grid.len() - 1]);
    let ymax = c
        .real
        .iter()
        .chain(&c.generated)
        .cloned()
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE)
        * 1.05;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    s.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{b}\" stroke=\"black\"/>",
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    s.push_str(&polyline(&c.grid, &c.real, x0, x1, ymax, "#1f77b4"));
    s.push_str(&polyline(&c.grid, &c.generated, x0, x1, ymax, "#d62728"));
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"25\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        "<text x=\"{MARGIN}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\">{x0:.3}</text>\n<text x=\"{r}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{x1:.3}</text>",
        y = HEIGHT - MARGIN + 16.0,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(
        s,
        "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">NLL (real: blue, generated: red)</text>",
        x = WIDTH / 2.0,
        y = HEIGHT - 12.0
    );
    s.push_str("</svg>\n");
    s
}
