//! Minimal SVG rendering of a precision/recall curve.

use std::fmt::Write as _;

use crate::eval::PrCurve;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 56.0;

/// Parses `recall,precision` CSV as written by [`PrCurve::to_csv`].
pub fn parse_curve_csv(text: &str) -> crate::Result<PrCurve> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = line
            .split_once(',')
            .and_then(|(r, p)| Some((r.trim().parse().ok()?, p.trim().parse().ok()?)));
        let point = parsed.ok_or_else(|| crate::Error::Parse {
            line: i + 1,
            msg: format!("expected `recall,precision`, got {line:?}"),
        })?;
        points.push(point);
    }
    Ok(PrCurve { points })
}

/// Axes with tick labels, one polyline for the curve.
pub fn curve_svg(curve: &PrCurve, title: &str) -> String {
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |r: f64| MARGIN + r.clamp(0.0, 1.0) * plot_w;
    let y = |p: f64| HEIGHT - MARGIN - p.clamp(0.0, 1.0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (x(0.0), y(0.0), x(1.0), y(1.0));
    let _ = writeln!(
        s,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="10">{v:.1}</text>"#,
            x(v),
            y0 + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-family="sans-serif" font-size="10">{v:.1}</text>"#,
            x0 - 6.0,
            y(v) + 3.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">Recall</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">Precision</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    let pts: Vec<String> = curve
        .points
        .iter()
        .map(|&(r, p)| format!("{:.2},{:.2}", x(r), y(p)))
        .collect();
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
        pts.join(" ")
    );
    s.push_str("</svg>\n");
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_single_polyline() {
        let curve = PrCurve {
            points: vec![(0.5, 1.0), (1.0, 0.5)],
        };
        assert_eq!(parse_curve_csv(&curve.to_csv()).unwrap(), curve);
        let svg = curve_svg(&curve, "a <b>");
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains("Recall") && svg.contains("Precision") && svg.contains("a &lt;b&gt;"));
        assert!(parse_curve_csv("recall,precision\nx,1\n").is_err());
    }
}
