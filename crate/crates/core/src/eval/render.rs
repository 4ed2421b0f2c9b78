use std::fmt::Write;

use crate::sketch::{arc_sweep, Canvas, Primitive, PrimitiveKind, Sketch};
use crate::solver::SketchStatus;

const SIZE: f64 = 512.0;

struct Frame {
    canvas: Canvas,
    scale: f64,
}

impl Frame {
    fn x(&self, x: f64) -> f64 {
        (x - self.canvas.min[0]) * self.scale
    }

    fn y(&self, y: f64) -> f64 {
        SIZE - (y - self.canvas.min[1]) * self.scale
    }

    fn path(&self, p: &Primitive) -> String {
        let v = &p.params;
        match p.kind {
            PrimitiveKind::Point => String::new(),
            PrimitiveKind::Line => {
                format!("M {:.3} {:.3} L {:.3} {:.3}", self.x(v[0]), self.y(v[1]), self.x(v[2]), self.y(v[3]))
            }
            PrimitiveKind::Circle => {
                let r = v[2] * self.scale;
                let (cx, cy) = (self.x(v[0]), self.y(v[1]));
                format!(
                    "M {:.3} {cy:.3} A {r:.3} {r:.3} 0 1 0 {:.3} {cy:.3} A {r:.3} {r:.3} 0 1 0 {:.3} {cy:.3}",
                    cx - r,
                    cx + r,
                    cx - r
                )
            }
            PrimitiveKind::Arc => {
                let (a0, a1) = (v[3], v[3] + arc_sweep(v[3], v[4]));
                let r = v[2] * self.scale;
                let large = (a1 - a0 > std::f64::consts::PI) as u8;
                // Counter-clockwise in model space is clockwise (sweep 0) after the y flip.
                format!(
                    "M {:.3} {:.3} A {r:.3} {r:.3} 0 {large} 0 {:.3} {:.3}",
                    self.x(v[0] + v[2] * a0.cos()),
                    self.y(v[1] + v[2] * a0.sin()),
                    self.x(v[0] + v[2] * a1.cos()),
                    self.y(v[1] + v[2] * a1.sin())
                )
            }
        }
    }
}

/// Renders solved geometry: fully constrained primitives in black, the rest
/// in blue, and optionally the original input curves overlaid in red.
pub fn render_svg(sketch: &Sketch, status: &SketchStatus, original: Option<&Sketch>) -> String {
    let mut canvas = sketch.canvas;
    if let Some(o) = original {
        for axis in 0..2 {
            canvas.min[axis] = canvas.min[axis].min(o.canvas.min[axis]);
            canvas.max[axis] = canvas.max[axis].max(o.canvas.max[axis]);
        }
    }
    let extent = canvas.extent(0).max(canvas.extent(1));
    let frame = Frame { canvas, scale: SIZE / extent };
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    if let Some(o) = original {
        let _ = writeln!(out, r#"<g id="original" fill="none" stroke-width="1">"#);
        for p in o.primitives.iter().filter(|p| p.kind != PrimitiveKind::Point) {
            let _ = writeln!(out, r#"<path d="{}" stroke="red"/>"#, frame.path(p));
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, r#"<g id="sketch" stroke-width="2">"#);
    for p in &sketch.primitives {
        let fc = status.per_entity_fc.get(&p.id).copied().unwrap_or(false);
        let color = if fc { "black" } else { "blue" };
        if p.kind == PrimitiveKind::Point {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.3}" cy="{:.3}" r="3" fill="{color}"/>"#,
                frame.x(p.params[0]),
                frame.y(p.params[1])
            );
        } else {
            let _ = writeln!(out, r#"<path d="{}" fill="none" stroke="{color}"/>"#, frame.path(p));
        }
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}
