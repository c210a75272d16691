//! Static SVG of output-space trajectories over the region outlines.
//!
//! Each two-dimensional output block gets the same shared axes. Jump
//! instants are marked by the observation reached: diamond for o1, circle
//! for o2, square for o3 and onward cycling. A cross marks the start.

use std::fmt::Write as _;

use super::{HybridArc, HybridSystem};
use crate::plant::Norm;

#[derive(Debug, Clone)]
pub struct PlotOptions {
    pub width: f64,
    pub height: f64,
    /// Output-index pairs to draw; all 2-D region blocks when empty.
    pub pairs: Vec<(usize, usize)>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { width: 640.0, height: 520.0, pairs: Vec::new() }
    }
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

pub fn render_svg(system: &HybridSystem, arcs: &[HybridArc], opts: &PlotOptions) -> String {
    let mut pairs = opts.pairs.clone();
    if pairs.is_empty() {
        for region in system.regions().values() {
            for b in &region.blocks {
                if let [a, c] = b.outputs[..] {
                    if !pairs.contains(&(a, c)) {
                        pairs.push((a, c));
                    }
                }
            }
        }
    }

    // Bounds over regions and trajectories.
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let mut grow = |x: f64, y: f64| {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    };
    for region in system.regions().values() {
        for b in &region.blocks {
            if pairs.iter().any(|&p| b.outputs[..] == [p.0, p.1]) {
                grow(b.center[0] - b.radius, b.center[1] - b.radius);
                grow(b.center[0] + b.radius, b.center[1] + b.radius);
            }
        }
    }
    for arc in arcs {
        for (_, _, _, zeta) in arc.points() {
            let y = system.output(zeta);
            for &(a, c) in &pairs {
                grow(y[a], y[c]);
            }
        }
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let pad = 0.05 * (x1 - x0).max(y1 - y0).max(1e-9);
    let (x0, x1, y0, y1) = (x0 - pad, x1 + pad, y0 - pad, y1 + pad);
    let scale = ((opts.width - 40.0) / (x1 - x0)).min((opts.height - 40.0) / (y1 - y0));
    let px = |x: f64| 20.0 + (x - x0) * scale;
    let py = |y: f64| opts.height - 20.0 - (y - y0) * scale;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = opts.width,
        h = opts.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    for region in system.regions().values() {
        for b in &region.blocks {
            if !pairs.iter().any(|&p| b.outputs[..] == [p.0, p.1]) {
                continue;
            }
            let (cx, cy, r) = (b.center[0], b.center[1], b.radius);
            let style = r##"fill="#eeeeee" stroke="#555555" stroke-width="1""##;
            match b.norm {
                Norm::Two => {
                    let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" {style}/>"#, px(cx), py(cy), r * scale);
                }
                Norm::Inf => {
                    let _ = writeln!(
                        svg,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" {style}/>"#,
                        px(cx - r),
                        py(cy + r),
                        2.0 * r * scale,
                        2.0 * r * scale
                    );
                }
                Norm::One => {
                    let _ = writeln!(
                        svg,
                        r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" {style}/>"#,
                        px(cx + r),
                        py(cy),
                        px(cx),
                        py(cy + r),
                        px(cx - r),
                        py(cy),
                        px(cx),
                        py(cy - r)
                    );
                }
            }
        }
    }

    for (k, &(a, c)) in pairs.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        for arc in arcs {
            let pts: Vec<String> = arc
                .points()
                .map(|(_, _, _, z)| {
                    let y = system.output(z);
                    format!("{:.2},{:.2}", px(y[a]), py(y[c]))
                })
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.2"/>"#,
                pts.join(" ")
            );
            let y = system.output(&arc.segments[0].start().zeta);
            let (sx, sy) = (px(y[a]), py(y[c]));
            let _ = writeln!(
                svg,
                r#"<path d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="{color}" stroke-width="2"/>"#,
                sx - 5.0,
                sy - 5.0,
                sx + 5.0,
                sy + 5.0,
                sx - 5.0,
                sy + 5.0,
                sx + 5.0,
                sy - 5.0
            );
            for jump in &arc.jumps {
                let y = system.output(&jump.zeta);
                let (mx, my) = (px(y[a]), py(y[c]));
                let _ = writeln!(svg, "{}", marker(jump.pre.o, mx, my, color));
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn marker(o: usize, x: f64, y: f64, color: &str) -> String {
    let s = 4.0;
    match (o + 2) % 3 {
        0 => format!(
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="{color}"/>"#,
            x,
            y - s,
            x + s,
            y,
            x,
            y + s,
            x - s,
            y
        ),
        1 => format!(r#"<circle cx="{x:.2}" cy="{y:.2}" r="{s}" fill="{color}"/>"#),
        _ => format!(
            r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}" fill="{color}"/>"#,
            x - s,
            y - s,
            2.0 * s,
            2.0 * s
        ),
    }
}
