//! Minimal SVG rendering of one forecast curve: observed log rates as
//! circles, the predictive mean as a solid path and the interval bounds as
//! dashed paths.

use std::fmt::Write;

pub struct CurvePlot<'a> {
    pub title: String,
    pub ages: &'a [u32],
    pub observed: &'a [Option<f64>],
    pub mean: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| lo + (hi - lo) * i as f64 / count as f64).collect()
}

pub fn render(plot: &CurvePlot) -> String {
    let x_lo = f64::from(plot.ages[0]);
    let x_hi = f64::from(plot.ages[plot.ages.len() - 1]).max(x_lo + 1.0);
    let values = plot
        .lower
        .iter()
        .chain(plot.upper)
        .chain(plot.mean)
        .chain(plot.observed.iter().flatten())
        .copied()
        .filter(|v| v.is_finite());
    let (mut y_lo, mut y_hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (-1.0, 0.0);
    }
    let pad = 0.05 * (y_hi - y_lo).max(1e-6);
    let (y_lo, y_hi) = (y_lo - pad, y_hi + pad);

    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
    let path = |ys: &[f64]| -> String {
        let mut d = String::new();
        for (i, (&a, &y)) in plot.ages.iter().zip(ys).enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            write!(d, "{cmd}{:.2},{:.2} ", sx(f64::from(a)), sy(y)).unwrap();
        }
        d.trim_end().to_string()
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(&plot.title)
    )
    .unwrap();

    // Axes.
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    writeln!(s, r#"<g stroke="black" stroke-width="1">"#).unwrap();
    writeln!(s, r#"<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/>"#).unwrap();
    writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/>"#).unwrap();
    writeln!(s, "</g>").unwrap();
    writeln!(s, r#"<g font-family="sans-serif" font-size="11">"#).unwrap();
    for x in ticks(x_lo, x_hi, 5) {
        writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{x:.0}</text>"#, sx(x), bottom + 16.0).unwrap();
    }
    for y in ticks(y_lo, y_hi, 5) {
        writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{y:.2}</text>"#, left - 6.0, sy(y) + 4.0).unwrap();
    }
    writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">age</text>"#, WIDTH / 2.0, HEIGHT - 15.0).unwrap();
    writeln!(
        s,
        r#"<text x="15" y="{}" text-anchor="middle" transform="rotate(-90 15 {})">log rate</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )
    .unwrap();
    writeln!(s, "</g>").unwrap();

    writeln!(s, r#"<g id="observed" fill="black">"#).unwrap();
    for (&a, v) in plot.ages.iter().zip(plot.observed) {
        if let Some(v) = v {
            writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, sx(f64::from(a)), sy(*v)).unwrap();
        }
    }
    writeln!(s, "</g>").unwrap();
    writeln!(s, r#"<path id="mean" d="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, path(plot.mean)).unwrap();
    for (id, ys) in [("lower95", plot.lower), ("upper95", plot.upper)] {
        writeln!(
            s,
            r#"<path id="{id}" d="{}" fill="none" stroke="steelblue" stroke-width="1" stroke-dasharray="5,4"/>"#,
            path(ys)
        )
        .unwrap();
    }
    writeln!(s, "</svg>").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_curve_does_not_divide_by_zero() {
        let ages = [0, 1, 2];
        let flat = [-4.0; 3];
        let svg = render(&CurvePlot {
            title: "a < b".into(),
            ages: &ages,
            observed: &[Some(-4.0), None, Some(-4.0)],
            mean: &flat,
            lower: &flat,
            upper: &flat,
        });
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches("<circle").count(), 2);
    }
}
