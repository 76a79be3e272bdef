//! Plain-text mesh format, one record per line:
//!
//! ```text
//! v <id> <x> <y>
//! e <id> <v0> <v1> <v2> <v3> <level> <degree>
//! ```
//!
//! Ids are dense and in order. Coordinates are written with 17 significant
//! digits so that reading and re-writing reproduces the text exactly. Only
//! active elements are written; the refinement tree is not preserved.

use std::fmt::Write as _;

use super::{Mesh, Point};
use crate::error::{Error, Result};

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {:.16e} {:.16e}", v.id, v.coords[0], v.coords[1]);
    }
    for (id, el) in mesh.active_elements().enumerate() {
        let [a, b, c, d] = el.vertices;
        let _ = writeln!(out, "e {id} {a} {b} {c} {d} {} {}", el.level, el.degree);
    }
    out
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| Error::Parse { line, msg: format!("missing {what}") })?;
    tok.parse().map_err(|_| Error::Parse { line, msg: format!("bad {what} '{tok}'") })
}

pub fn read_mesh(text: &str) -> Result<Mesh> {
    let mut coords: Vec<Point> = Vec::new();
    let mut elems: Vec<([usize; 4], u32, usize)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut toks = trimmed.split_whitespace();
        let tag = toks.next().unwrap_or_default();
        match tag {
            "v" => {
                let id: usize = field(toks.next(), line, "vertex id")?;
                if id != coords.len() {
                    return Err(Error::Parse { line, msg: format!("vertex id {id} out of order") });
                }
                let x: f64 = field(toks.next(), line, "x coordinate")?;
                let y: f64 = field(toks.next(), line, "y coordinate")?;
                if !(x.is_finite() && y.is_finite()) {
                    return Err(Error::Parse { line, msg: "non-finite coordinate".into() });
                }
                coords.push([x, y]);
            }
            "e" => {
                let id: usize = field(toks.next(), line, "element id")?;
                if id != elems.len() {
                    return Err(Error::Parse { line, msg: format!("element id {id} out of order") });
                }
                let mut v = [0usize; 4];
                for slot in &mut v {
                    *slot = field(toks.next(), line, "vertex reference")?;
                    if *slot >= coords.len() {
                        return Err(Error::Parse {
                            line,
                            msg: format!("element references undefined vertex {slot}"),
                        });
                    }
                }
                let level: u32 = field(toks.next(), line, "level")?;
                let degree: usize = field(toks.next(), line, "degree")?;
                if degree == 0 || degree > super::MAX_DEGREE {
                    return Err(Error::Parse { line, msg: format!("unsupported degree {degree}") });
                }
                elems.push((v, level, degree));
            }
            other => {
                return Err(Error::Parse { line, msg: format!("unknown record '{other}'") });
            }
        }
        if toks.next().is_some() {
            return Err(Error::Parse { line, msg: "trailing tokens".into() });
        }
    }
    Mesh::from_parts_with_levels(coords, elems)
}
