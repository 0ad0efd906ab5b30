//! Plain-text mesh format.
//!
//! ```text
//! vertices N cells M
//! x y                 (N lines)
//! i j k b             (M lines, 0-based vertex indices, b = boundary-cell flag)
//! ```

use std::io::{BufRead, Write};

use super::Mesh;
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &Mesh, mut w: W) -> Result<()> {
    writeln!(w, "vertices {} cells {}", mesh.num_vertices(), mesh.num_cells())?;
    for p in mesh.vertices() {
        writeln!(w, "{} {}", p[0], p[1])?;
    }
    for (c, t) in mesh.cells().iter().enumerate() {
        writeln!(w, "{} {} {} {}", t[0], t[1], t[2], mesh.is_boundary_cell(c) as u8)?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what}")))
}

/// Reads a mesh. Boundary flags in the file are informational; the boundary
/// is recomputed from topology.
pub fn read_mesh<R: BufRead>(r: R) -> Result<Mesh> {
    let mut lines = r
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
    let (ln, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let header = header?;
    let mut tok = header.split_whitespace();
    if tok.next() != Some("vertices") {
        return Err(parse_err(ln, "expected 'vertices'"));
    }
    let nv: usize = field(tok.next(), ln, "vertex count")?;
    if tok.next() != Some("cells") {
        return Err(parse_err(ln, "expected 'cells'"));
    }
    let nc: usize = field(tok.next(), ln, "cell count")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "truncated vertex block"))?;
        let l = l?;
        let mut t = l.split_whitespace();
        vertices.push([field(t.next(), ln, "x")?, field(t.next(), ln, "y")?]);
    }
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "truncated cell block"))?;
        let l = l?;
        let mut t = l.split_whitespace();
        let cell = [
            field(t.next(), ln, "vertex index")?,
            field(t.next(), ln, "vertex index")?,
            field(t.next(), ln, "vertex index")?,
        ];
        let _flag: u8 = field(t.next(), ln, "boundary flag")?;
        cells.push(cell);
    }
    Mesh::new(vertices, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::mesh::{generate_structured, perturb_interior, refine_uniform};

    #[test]
    fn round_trip_is_exact() {
        let m = generate_structured(4, &BoundingBox::new([-1.0, -1.0], [1.0, 1.0])).unwrap();
        let m = perturb_interior(&refine_uniform(&m).unwrap(), 0.3, 3).unwrap();
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).unwrap();
        let back = read_mesh(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn malformed_input() {
        assert!(read_mesh(&b""[..]).is_err());
        assert!(read_mesh(&b"vertices 3 cells 1\n0 0\n1 0\n"[..]).is_err());
        assert!(read_mesh(&b"vertices 3 cells 1\n0 0\n1 0\n0 1\n0 1 x 0\n"[..]).is_err());
        let ok = read_mesh(&b"vertices 3 cells 1\n0 0\n1 0\n0 1\n0 1 2 1\n"[..]).unwrap();
        assert_eq!(ok.num_cells(), 1);
    }
}
