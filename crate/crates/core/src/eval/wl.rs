use std::f64::consts::TAU;

use sha2::{Digest, Sha256};

use crate::sketch::{ConstraintSequence, PrimitiveKind, Sketch};

/// Refinement rounds for the Weisfeiler-Lehman hash.
pub const WL_ITERATIONS: usize = 3;
/// Quantization used when comparing generations for diversity.
pub const DEFAULT_WL_BINS: usize = 4;

fn digest(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0x1f]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn node_label(sketch: &Sketch, id: usize, bins: usize) -> String {
    let p = &sketch.primitives[id];
    let c = &sketch.canvas;
    let xy = |x: f64, y: f64| format!("{},{}", c.bin(x, 0, bins), c.bin(y, 1, bins));
    let len = |r: f64| ((bins as f64 * r / c.extent(0)).floor().max(0.0) as usize).min(bins - 1);
    let ang = |a: f64| ((bins as f64 * a.rem_euclid(TAU) / TAU).floor() as usize).min(bins - 1);
    let v = &p.params;
    let geom = match p.kind {
        PrimitiveKind::Point => xy(v[0], v[1]),
        PrimitiveKind::Line => format!("{};{}", xy(v[0], v[1]), xy(v[2], v[3])),
        PrimitiveKind::Circle => format!("{};{}", xy(v[0], v[1]), len(v[2])),
        PrimitiveKind::Arc => format!("{};{};{},{}", xy(v[0], v[1]), len(v[2]), ang(v[3]), ang(v[4])),
    };
    format!("{:?}|{}|{}", p.kind, p.fixed as u8, geom)
}

/// Weisfeiler-Lehman digest of the primitive/constraint graph.
///
/// Nodes are primitives labeled by kind, fixed flag and geometry quantized to
/// `bins` cells per axis. Two-operand constraints are undirected edges labeled
/// by kind; Tangent and Midpoint also carry the operand role. One-operand
/// constraints fold into the node label. Dimension values are ignored.
pub fn wl_hash(sketch: &Sketch, constraints: &ConstraintSequence, bins: usize) -> String {
    let n = sketch.len();
    let bins = bins.max(1);
    let mut unary: Vec<Vec<String>> = vec![Vec::new(); n];
    let mut adj: Vec<Vec<(String, usize)>> = vec![Vec::new(); n];
    for c in constraints.iter() {
        let kind = format!("{:?}", c.kind);
        match c.refs.as_slice() {
            [a] if *a < n => unary[*a].push(kind),
            [a, b] if *a < n && *b < n => {
                let (ra, rb) = if c.kind.is_symmetric() { ("s", "s") } else { ("0", "1") };
                if a == b {
                    unary[*a].push(format!("{kind}@loop"));
                } else {
                    // Label seen from the node: (edge kind, neighbor's role).
                    adj[*a].push((format!("{kind}:{rb}"), *b));
                    adj[*b].push((format!("{kind}:{ra}"), *a));
                }
            }
            _ => {}
        }
    }
    let mut labels: Vec<String> = (0..n)
        .map(|i| {
            unary[i].sort();
            digest(&[&node_label(sketch, i, bins), &unary[i].join(",")])
        })
        .collect();
    let mut history: Vec<String> = labels.clone();
    for _ in 0..WL_ITERATIONS {
        labels = (0..n)
            .map(|i| {
                let mut neigh: Vec<String> = adj[i].iter().map(|(e, j)| format!("{e}>{}", labels[*j])).collect();
                neigh.sort();
                digest(&[&labels[i], &neigh.join(",")])
            })
            .collect();
        history.extend(labels.iter().cloned());
    }
    history.sort();
    let refs: Vec<&str> = history.iter().map(String::as_str).collect();
    digest(&refs)
}
