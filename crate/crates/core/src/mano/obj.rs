use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Triangle mesh read back from Wavefront OBJ (vertices and faces only).
#[derive(Clone, Debug, PartialEq)]
pub struct ObjMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[usize; 3]>,
}

/// Writes `v` and 1-based `f` records. Floats use the shortest
/// representation that round-trips.
pub fn write_obj<W: Write>(mut out: W, vertices: &[[f64; 3]], faces: &[[usize; 3]]) -> Result<()> {
    for v in vertices {
        writeln!(out, "v {} {} {}", v[0], v[1], v[2])?;
    }
    for f in faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

/// Reads `v` and triangular `f` records; other records are ignored.
/// Face entries may carry `/vt/vn` suffixes.
pub fn read_obj<R: BufRead>(input: R) -> Result<ObjMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let mut fields = line.split_whitespace();
        let bad = |what: &str| Error::parse(format!("line {}: {what}", n + 1));
        match fields.next() {
            Some("v") => {
                let mut v = [0.0; 3];
                for c in v.iter_mut() {
                    *c = fields
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad("malformed vertex"))?;
                }
                vertices.push(v);
            }
            Some("f") => {
                let idx: Vec<usize> = fields
                    .map(|s| {
                        s.split('/')
                            .next()
                            .and_then(|i| i.parse::<usize>().ok())
                            .filter(|&i| i >= 1)
                            .map(|i| i - 1)
                            .ok_or_else(|| bad("malformed face index"))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() != 3 {
                    return Err(bad("only triangular faces are supported"));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            _ => {}
        }
    }
    if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= vertices.len())) {
        return Err(Error::parse(format!("face {f:?} references a missing vertex")));
    }
    Ok(ObjMesh { vertices, faces })
}
