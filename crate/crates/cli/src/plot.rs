//! Self-contained SVG scatter plots of projected activations.

use std::fmt::Write;

use seat_core::eval::LayerProjection;

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 48.0;

fn color(dataset: &str) -> &'static str {
    match dataset {
        "factual" => "#1f77b4",
        "finetune" => "#2ca02c",
        "unseen" => "#d62728",
        "unverifiable" => "#7f7f7f",
        _ => "#9467bd",
    }
}

pub fn scatter_svg(proj: &LayerProjection, title: &str) -> String {
    let pts: Vec<(&str, f64, f64)> = proj
        .points
        .iter()
        .map(|p| {
            let x = p.coords.first().copied().unwrap_or(0.0);
            let y = p.coords.get(1).copied().unwrap_or(0.0);
            (p.dataset.as_str(), x, y)
        })
        .collect();
    let bounds = |f: fn(&(&str, f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else {
            (lo.min(0.0) - 1.0, hi.max(0.0) + 1.0)
        }
    };
    let (x0, x1) = bounds(|p| p.1);
    let (y0, y1) = bounds(|p| p.2);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#,
        WIDTH / 2.0
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">PC1</text>"#,
        WIDTH / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">PC2</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0
    );
    for (dataset, x, y) in &pts {
        let _ = writeln!(
            svg,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{}" fill-opacity="0.75"><title>{dataset}</title></circle>"#,
            sx(*x),
            sy(*y),
            color(dataset)
        );
    }
    let mut seen: Vec<&str> = Vec::new();
    for (dataset, _, _) in &pts {
        if !seen.contains(dataset) {
            seen.push(dataset);
        }
    }
    for (i, dataset) in seen.iter().enumerate() {
        let y = MARGIN + 14.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 110.0;
        let _ = writeln!(
            svg,
            r#"<circle cx="{x}" cy="{}" r="4" fill="{}"/><text x="{}" y="{y}">{dataset}</text>"#,
            y - 4.0,
            color(dataset),
            x + 10.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use seat_core::eval::ProjectedPoint;

    #[test]
    fn one_circle_per_point() {
        let proj = LayerProjection {
            layer: 1,
            explained_variance: vec![1.0, 0.5],
            points: vec![
                ProjectedPoint { dataset: "factual".into(), coords: vec![0.0, 1.0] },
                ProjectedPoint { dataset: "unseen".into(), coords: vec![2.0, -1.0] },
                ProjectedPoint { dataset: "unseen".into(), coords: vec![2.0, -1.0] },
            ],
        };
        let svg = scatter_svg(&proj, "layer 1");
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<circle").count(), 3 + 2);
    }
}
