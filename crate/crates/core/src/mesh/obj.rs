//! Wavefront OBJ subset: `v`, `f` and comments. Everything else is skipped.

use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::Array2;

use super::{MeshError, Topology, TriMesh};

#[derive(Debug, thiserror::Error)]
pub enum ObjError {
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unsupported face with {arity} vertices (only triangles)")]
    UnsupportedFace { line: usize, arity: usize },
    #[error("line {line}: vertex index {index} out of range (file has {num_vertices} vertices)")]
    Index {
        line: usize,
        index: i64,
        num_vertices: usize,
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

pub fn parse_obj(text: &str) -> Result<TriMesh, ObjError> {
    let mut verts: Vec<[f64; 3]> = Vec::new();
    // raw 1-based (or negative) indices plus the line they came from
    let mut raw_faces: Vec<(usize, [i64; 3], usize)> = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        let mut toks = line.split_whitespace();
        let Some(tag) = toks.next() else { continue };
        match tag {
            "v" => {
                let coords: Vec<&str> = toks.collect();
                // an optional 4th (w) component or vertex colors are tolerated
                if coords.len() < 3 {
                    return Err(ObjError::Malformed {
                        line: lineno,
                        reason: format!("vertex needs 3 coordinates, found {}", coords.len()),
                    });
                }
                let mut p = [0.0; 3];
                for (k, tok) in coords.iter().take(3).enumerate() {
                    p[k] = tok.parse::<f64>().map_err(|_| ObjError::Malformed {
                        line: lineno,
                        reason: format!("bad coordinate {tok:?}"),
                    })?;
                    if !p[k].is_finite() {
                        return Err(ObjError::Malformed {
                            line: lineno,
                            reason: format!("non-finite coordinate {tok:?}"),
                        });
                    }
                }
                verts.push(p);
            }
            "f" => {
                let items: Vec<&str> = toks.collect();
                if items.len() != 3 {
                    if items.len() < 3 {
                        return Err(ObjError::Malformed {
                            line: lineno,
                            reason: format!("face needs 3 vertices, found {}", items.len()),
                        });
                    }
                    return Err(ObjError::UnsupportedFace {
                        line: lineno,
                        arity: items.len(),
                    });
                }
                let mut idx = [0i64; 3];
                for (k, item) in items.iter().enumerate() {
                    let head = item.split('/').next().unwrap_or("");
                    idx[k] = head.parse::<i64>().map_err(|_| ObjError::Malformed {
                        line: lineno,
                        reason: format!("bad face index {item:?}"),
                    })?;
                }
                raw_faces.push((lineno, idx, verts.len()));
            }
            _ => {}
        }
    }

    let n = verts.len();
    let mut faces = Vec::with_capacity(raw_faces.len());
    for (line, idx, seen_so_far) in raw_faces {
        let mut f = [0usize; 3];
        for k in 0..3 {
            let i = idx[k];
            let resolved = if i > 0 {
                i - 1
            } else if i < 0 {
                seen_so_far as i64 + i
            } else {
                -1
            };
            if resolved < 0 || resolved as usize >= n {
                return Err(ObjError::Index {
                    line,
                    index: i,
                    num_vertices: n,
                });
            }
            f[k] = resolved as usize;
        }
        faces.push(f);
    }
    let topology = Arc::new(Topology::new(n, faces)?);
    let mut vertices = Array2::zeros((n, 3));
    for (i, p) in verts.iter().enumerate() {
        for k in 0..3 {
            vertices[[i, k]] = p[k];
        }
    }
    Ok(TriMesh::new(topology, vertices)?)
}

pub fn serialize_obj(mesh: &TriMesh) -> String {
    let mut out = String::with_capacity(mesh.num_vertices() * 48);
    for row in mesh.vertices().rows() {
        let _ = writeln!(
            out,
            "v {} {} {}",
            format_sig(row[0], 9),
            format_sig(row[1], 9),
            format_sig(row[2], 9)
        );
    }
    for f in mesh.topology().faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

/// Format with `digits` significant digits, `%g` style: fixed notation for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn format_sig(x: f64, digits: usize) -> String {
    assert!(digits >= 1);
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        return format!("{m}e{exp}");
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let fixed = format!("{:.*}", decimals, x);
    trim_zeros(&fixed).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
