use std::fmt::Write;

use pestctl_core::equilibria::Equilibrium;
use pestctl_core::State;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const MAX_POINTS: usize = 4000;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

pub struct PhasePlot<'a> {
    pub trajectories: Vec<&'a [State]>,
    pub nullclines: Vec<Vec<State>>,
    pub equilibria: &'a [Equilibrium],
}

struct Frame {
    x_max: f64,
    y_max: f64,
}

impl Frame {
    fn px(&self, s: &State) -> (f64, f64) {
        let w = WIDTH - 2.0 * MARGIN;
        let h = HEIGHT - 2.0 * MARGIN;
        (
            MARGIN + w * s.x / self.x_max,
            HEIGHT - MARGIN - h * s.y / self.y_max,
        )
    }

    fn contains(&self, s: &State) -> bool {
        s.is_finite() && s.x >= 0.0 && s.y >= 0.0 && s.x <= self.x_max && s.y <= self.y_max
    }
}

/// Axis span rounded up to a 1/2/5 multiple of a power of ten.
fn nice_ceiling(v: f64) -> f64 {
    if !(v.is_finite() && v > 0.0) {
        return 1.0;
    }
    let p = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|f| f * p)
        .find(|&c| c >= v * (1.0 - 1e-12))
        .unwrap_or(10.0 * p)
}

fn polyline(out: &mut String, frame: &Frame, pts: &[State], style: &str) {
    let stride = pts.len().div_ceil(MAX_POINTS).max(1);
    let mut segment: Vec<(f64, f64)> = Vec::new();
    let flush = |segment: &mut Vec<(f64, f64)>, out: &mut String| {
        if segment.len() > 1 {
            let coords: Vec<String> = segment
                .iter()
                .map(|(x, y)| format!("{x:.2},{y:.2}"))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" {style} points="{}"/>"#,
                coords.join(" ")
            );
        }
        segment.clear();
    };
    let last = pts.len().saturating_sub(1);
    for (i, s) in pts.iter().enumerate() {
        if i % stride != 0 && i != last {
            continue;
        }
        if frame.contains(s) {
            segment.push(frame.px(s));
        } else {
            flush(&mut segment, out);
        }
    }
    flush(&mut segment, out);
}

pub fn render(plot: &PhasePlot, x_label: &str, y_label: &str) -> String {
    let points = plot
        .trajectories
        .iter()
        .flat_map(|t| t.iter())
        .chain(plot.equilibria.iter().map(|e| &e.location))
        .filter(|s| s.is_finite());
    let (mut x_max, mut y_max) = (0.0f64, 0.0f64);
    for s in points {
        x_max = x_max.max(s.x);
        y_max = y_max.max(s.y);
    }
    let frame = Frame {
        x_max: nice_ceiling(1.05 * x_max),
        y_max: nice_ceiling(1.05 * y_max),
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );

    let (x0, y0) = (MARGIN, HEIGHT - MARGIN);
    let (x1, y1) = (WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (tx, _) = frame.px(&State::new(f * frame.x_max, 0.0));
        let (_, ty) = frame.px(&State::new(0.0, f * frame.y_max));
        let _ = writeln!(
            out,
            r#"<line x1="{tx:.2}" y1="{y0}" x2="{tx:.2}" y2="{:.2}" stroke="black"/><text x="{tx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            tick_label(f * frame.x_max)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{ty:.2}" x2="{x0}" y2="{ty:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            ty + 4.0,
            tick_label(f * frame.y_max)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        0.5 * (x0 + x1),
        HEIGHT - 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{y_label}</text>"#,
        0.5 * (y0 + y1),
        0.5 * (y0 + y1)
    );

    for n in &plot.nullclines {
        polyline(
            &mut out,
            &frame,
            n,
            r##"stroke="#888888" stroke-dasharray="4 3""##,
        );
    }
    for (i, t) in plot.trajectories.iter().enumerate() {
        let style = format!(
            r#"stroke="{}" stroke-width="1.2""#,
            COLORS[i % COLORS.len()]
        );
        polyline(&mut out, &frame, t, &style);
    }
    for e in plot.equilibria {
        if !frame.contains(&e.location) {
            continue;
        }
        let (cx, cy) = frame.px(&e.location);
        let fill = if e.class.is_attracting() {
            "black"
        } else {
            "white"
        };
        let _ = writeln!(
            out,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="{fill}" stroke="black"><title>{:?} {}</title></circle>"#,
            e.label,
            e.class.as_str()
        );
    }
    out.push_str("</svg>\n");
    out
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nice_ceilings() {
        assert_eq!(nice_ceiling(0.73), 1.0);
        assert_eq!(nice_ceiling(1.3), 2.0);
        assert_eq!(nice_ceiling(3.0), 5.0);
        assert_eq!(nice_ceiling(5.0), 5.0);
        assert_eq!(nice_ceiling(0.0), 1.0);
    }

    #[test]
    fn renders_polylines_and_ticks() {
        let pts = [
            State::new(0.1, 0.2),
            State::new(0.2, 0.4),
            State::new(0.3, 0.3),
        ];
        let svg = render(
            &PhasePlot {
                trajectories: vec![&pts],
                nullclines: vec![vec![State::new(0.0, 0.0), State::new(0.0, 0.5)]],
                equilibria: &[],
            },
            "x",
            "y",
        );
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">0.5</text>"));
        assert!(svg.ends_with("</svg>\n"));
    }
}
