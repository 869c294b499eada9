//! Plain-text mesh format.
//!
//! Line 1: `nv nt ne_tagged`; then `nv` lines `x y`; then `nt` lines
//! `v1 v2 v3` (1-based); then `ne_tagged` lines `va vb tag` with tag `N`
//! or `D`. Every border edge must be tagged.

use super::{EdgeClass, Mesh, MeshBuilder};
use crate::error::MeshError;
use std::fmt::Write as _;
use std::path::Path;

pub fn read_mesh_file(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|e| MeshError::Format(e.to_string()))?;
    parse_mesh(&text)
}

pub fn parse_mesh(text: &str) -> Result<Mesh, MeshError> {
    let mut tokens = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split_whitespace());
    let mut next = |what: &str| {
        tokens
            .next()
            .ok_or_else(|| MeshError::Format(format!("unexpected end of file reading {what}")))
    };
    let parse_usize = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| MeshError::Format(format!("bad {what}: {s:?}")))
    };
    let parse_f64 = |s: &str, what: &str| {
        s.parse::<f64>()
            .map_err(|_| MeshError::Format(format!("bad {what}: {s:?}")))
    };

    let nv = parse_usize(next("nv")?, "vertex count")?;
    let nt = parse_usize(next("nt")?, "triangle count")?;
    let ne = parse_usize(next("ne_tagged")?, "tagged edge count")?;

    let mut coords = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = parse_f64(next("x")?, "coordinate")?;
        let y = parse_f64(next("y")?, "coordinate")?;
        coords.push((x, y));
    }
    let mut tris = Vec::with_capacity(nt);
    for _ in 0..nt {
        let mut t = [0usize; 3];
        for v in &mut t {
            let one_based = parse_usize(next("vertex id")?, "vertex id")?;
            if one_based == 0 {
                return Err(MeshError::Format("vertex ids are 1-based".into()));
            }
            *v = one_based - 1;
        }
        tris.push(t);
    }
    let mut tags = Vec::with_capacity(ne);
    for _ in 0..ne {
        let a = parse_usize(next("edge vertex")?, "edge vertex")? - 1;
        let b = parse_usize(next("edge vertex")?, "edge vertex")? - 1;
        let tag = match next("tag")? {
            "N" | "n" => EdgeClass::Neumann,
            "D" | "d" => EdgeClass::Dirichlet,
            other => return Err(MeshError::Format(format!("unknown tag {other:?}"))),
        };
        tags.push((a, b, tag));
    }
    MeshBuilder::new(coords, tris).tag_all(tags).build()
}

pub fn write_mesh_file(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let mut out = String::new();
    let tagged: Vec<_> = mesh.edges.iter().filter(|e| e.is_border()).collect();
    writeln!(
        out,
        "{} {} {}",
        mesh.counts.vertices,
        mesh.counts.triangles,
        tagged.len()
    )
    .unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{:.17} {:.17}", v.x, v.y).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(
            out,
            "{} {} {}",
            t.vertices[0] + 1,
            t.vertices[1] + 1,
            t.vertices[2] + 1
        )
        .unwrap();
    }
    for e in tagged {
        let tag = match e.class {
            EdgeClass::Neumann => "N",
            EdgeClass::Dirichlet => "D",
            EdgeClass::Internal => unreachable!(),
        };
        writeln!(out, "{} {} {}", e.a + 1, e.b + 1, tag).unwrap();
    }
    std::fs::write(path, out).map_err(|e| MeshError::Format(e.to_string()))
}
