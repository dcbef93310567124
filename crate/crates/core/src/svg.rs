//! Schematic SVG drawings of self-similar fans in the (x₁, t) half-plane.
//!
//! Lines are spread out by rank rather than drawn to scale, so that thin
//! wedges stay visible; each line carries its true slope as a label.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const ORIGIN_X: f64 = WIDTH / 2.0;
const ORIGIN_Y: f64 = HEIGHT - 50.0;
const TOP_Y: f64 = 60.0;
const SPREAD: f64 = 260.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FanLine {
    pub slope: f64,
    pub label: String,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanDiagram {
    pub title: String,
    /// Drawn in any order; regions are read left to right between them.
    pub lines: Vec<FanLine>,
    /// One label per gap between consecutive solid lines, plus the two outer regions.
    pub regions: Vec<String>,
    /// Slopes bounding a wedge to shade.
    pub highlight: Option<([f64; 2], String)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Monotone map from slope to horizontal offset at the top of the drawing.
struct Layout {
    knots: Vec<(f64, f64)>,
}

impl Layout {
    fn new(slopes: &[f64]) -> Self {
        let mut neg: Vec<f64> = slopes.iter().copied().filter(|s| *s < 0.0).collect();
        let mut pos: Vec<f64> = slopes.iter().copied().filter(|s| *s > 0.0).collect();
        neg.sort_by(f64::total_cmp);
        neg.dedup();
        pos.sort_by(f64::total_cmp);
        pos.dedup();
        let mut knots = Vec::new();
        let m = neg.len();
        for (k, s) in neg.iter().enumerate() {
            knots.push((*s, -SPREAD * (m - k) as f64 / (m + 1) as f64));
        }
        knots.push((0.0, 0.0));
        let m = pos.len();
        for (k, s) in pos.iter().enumerate() {
            knots.push((*s, SPREAD * (k + 1) as f64 / (m + 1) as f64));
        }
        Self { knots }
    }

    fn offset(&self, slope: f64) -> f64 {
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if slope <= first.0 {
            return if slope < first.0 { first.1.min(0.0) - 40.0 } else { first.1 };
        }
        if slope >= last.0 {
            return if slope > last.0 { last.1.max(0.0) + 40.0 } else { last.1 };
        }
        let k = self.knots.partition_point(|(s, _)| *s <= slope);
        let (s0, x0) = self.knots[k - 1];
        let (s1, x1) = self.knots[k];
        x0 + (x1 - x0) * (slope - s0) / (s1 - s0)
    }

    fn top(&self, slope: f64) -> (f64, f64) {
        (ORIGIN_X + self.offset(slope), TOP_Y)
    }
}

impl FanDiagram {
    pub fn render(&self) -> String {
        let slopes: Vec<f64> = self.lines.iter().map(|l| l.slope).filter(|s| s.is_finite()).collect();
        let layout = Layout::new(&slopes);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            ORIGIN_X,
            escape(&self.title)
        );

        if let Some(([a, b], label)) = &self.highlight {
            let (xa, ya) = layout.top(*a);
            let (xb, yb) = layout.top(*b);
            let _ = writeln!(
                out,
                r##"<polygon points="{ORIGIN_X},{ORIGIN_Y} {xa:.2},{ya:.2} {xb:.2},{yb:.2}" fill="#f4c542" fill-opacity="0.45" stroke="none"/>"##
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-style="italic">{}</text>"#,
                0.5 * (xa + xb),
                TOP_Y - 8.0,
                escape(label)
            );
        }

        let _ =
            writeln!(out, r#"<line x1="20" y1="{ORIGIN_Y}" x2="{}" y2="{ORIGIN_Y}" stroke="black"/>"#, WIDTH - 20.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">x₁</text>"#, WIDTH - 30.0, ORIGIN_Y + 18.0);
        let _ = writeln!(
            out,
            r##"<line x1="{ORIGIN_X}" y1="{ORIGIN_Y}" x2="{ORIGIN_X}" y2="{}" stroke="#999" stroke-dasharray="2,3"/>"##,
            TOP_Y - 20.0
        );
        let _ = writeln!(out, r#"<text x="{}" y="{}">t</text>"#, ORIGIN_X + 6.0, TOP_Y - 22.0);
        let _ = writeln!(out, r#"<text x="{ORIGIN_X}" y="{}" text-anchor="middle">0</text>"#, ORIGIN_Y + 18.0);

        let mut sorted: Vec<&FanLine> = self.lines.iter().filter(|l| l.slope.is_finite()).collect();
        sorted.sort_by(|a, b| a.slope.total_cmp(&b.slope));
        for (k, line) in sorted.iter().enumerate() {
            let (x, y) = layout.top(line.slope);
            let dash = if line.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            let _ = writeln!(
                out,
                r#"<line x1="{ORIGIN_X}" y1="{ORIGIN_Y}" x2="{x:.2}" y2="{y:.2}" stroke="black" stroke-width="1.5"{dash}/>"#
            );
            // Stagger labels vertically so neighbours do not overlap.
            let ly = ORIGIN_Y - (ORIGIN_Y - TOP_Y) * (0.92 - 0.1 * (k % 3) as f64);
            let lx = ORIGIN_X + (x - ORIGIN_X) * (ORIGIN_Y - ly) / (ORIGIN_Y - TOP_Y);
            let anchor = if x < ORIGIN_X { "end" } else { "start" };
            let pad = if x < ORIGIN_X { -6.0 } else { 6.0 };
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{ly:.2}" text-anchor="{anchor}">{} = {:.6}</text>"#,
                lx + pad,
                escape(&line.label),
                line.slope
            );
        }

        let solid: Vec<f64> = sorted.iter().filter(|l| !l.dashed).map(|l| layout.offset(l.slope)).collect();
        if self.regions.len() == solid.len() + 1 {
            let y = ORIGIN_Y - 0.45 * (ORIGIN_Y - TOP_Y);
            let frac = (ORIGIN_Y - y) / (ORIGIN_Y - TOP_Y);
            let mut edges = vec![-ORIGIN_X + 20.0];
            edges.extend(solid.iter().map(|x| x * frac));
            edges.push(ORIGIN_X - 20.0);
            for (k, label) in self.regions.iter().enumerate() {
                let x = ORIGIN_X + 0.5 * (edges[k] + edges[k + 1]);
                let _ = write!(out, r##"<text x="{x:.2}" y="{y:.2}" text-anchor="middle" fill="#1f4e9c">"##);
                for (i, part) in label.split('\n').enumerate() {
                    let dy = if i == 0 { 0.0 } else { 15.0 };
                    let _ = write!(out, r#"<tspan x="{x:.2}" dy="{dy}">{}</tspan>"#, escape(part));
                }
                out.push_str("</text>\n");
            }
        }
        out.push_str("</svg>\n");
        out
    }
}
