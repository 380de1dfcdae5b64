//! Plain-text mesh format:
//!
//! ```text
//! nodes N triangles T
//! x y            (N lines)
//! i j k          (T lines, 0-based)
//! periodic P     (optional)
//! left right     (P lines)
//! ```

use std::io::{BufRead, Write};

use super::Mesh;
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &Mesh, mut w: W) -> Result<()> {
    writeln!(
        w,
        "nodes {} triangles {}",
        mesh.nodes().len(),
        mesh.triangles().len()
    )?;
    for p in mesh.nodes() {
        writeln!(w, "{} {}", p[0], p[1])?;
    }
    for t in mesh.triangles() {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    if mesh.is_periodic() {
        writeln!(w, "periodic {}", mesh.periodic_pairs().len())?;
        for (l, r) in mesh.periodic_pairs() {
            writeln!(w, "{l} {r}")?;
        }
    }
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<Option<String>> {
        loop {
            match self.inner.next() {
                None => return Ok(None),
                Some(l) => {
                    self.line += 1;
                    let l = l?;
                    if !l.trim().is_empty() {
                        return Ok(Some(l));
                    }
                }
            }
        }
    }

    fn expect(&mut self, what: &str) -> Result<String> {
        self.next()?
            .ok_or_else(|| self.err(format!("unexpected end of file, expected {what}")))
    }

    fn err(&self, message: String) -> Error {
        Error::Format {
            line: self.line,
            message,
        }
    }

    fn fields<T: std::str::FromStr>(&self, s: &str, n: usize) -> Result<Vec<T>> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        if parts.len() != n {
            return Err(self.err(format!("expected {n} fields, found {}", parts.len())));
        }
        parts
            .iter()
            .map(|p| {
                p.parse::<T>()
                    .map_err(|_| self.err(format!("cannot parse '{p}'")))
            })
            .collect()
    }
}

pub fn read_mesh<R: BufRead>(r: R) -> Result<Mesh> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let header = lines.expect("header")?;
    let h: Vec<&str> = header.split_whitespace().collect();
    let (n, t) = match h.as_slice() {
        ["nodes", n, "triangles", t] => (
            n.parse::<usize>()
                .map_err(|_| lines.err(format!("bad node count '{n}'")))?,
            t.parse::<usize>()
                .map_err(|_| lines.err(format!("bad triangle count '{t}'")))?,
        ),
        _ => return Err(lines.err("expected 'nodes N triangles T'".into())),
    };
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        let l = lines.expect("node coordinates")?;
        let v: Vec<f64> = lines.fields(&l, 2)?;
        nodes.push([v[0], v[1]]);
    }
    let mut triangles = Vec::with_capacity(t);
    for _ in 0..t {
        let l = lines.expect("triangle indices")?;
        let v: Vec<usize> = lines.fields(&l, 3)?;
        triangles.push([v[0], v[1], v[2]]);
    }
    let mut periodic = Vec::new();
    if let Some(l) = lines.next()? {
        let count = match l.split_whitespace().collect::<Vec<_>>().as_slice() {
            ["periodic", p] => p
                .parse::<usize>()
                .map_err(|_| lines.err(format!("bad pair count '{p}'")))?,
            _ => return Err(lines.err(format!("unexpected line '{l}'"))),
        };
        for _ in 0..count {
            let l = lines.expect("periodic pair")?;
            let v: Vec<usize> = lines.fields(&l, 2)?;
            periodic.push((v[0], v[1]));
        }
        if let Some(extra) = lines.next()? {
            return Err(lines.err(format!("trailing content '{extra}'")));
        }
    }
    Mesh::from_parts(nodes, triangles, periodic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_graph_mesh;

    #[test]
    fn round_trip_periodic_mesh() {
        let h = |x: f64| Ok(1.0 + 0.3 * (2.0 * std::f64::consts::PI * x).sin());
        let m = build_graph_mesh(h, (0.0, 1.0), 9, 4, true).unwrap();
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).unwrap();
        let back = read_mesh(buf.as_slice()).unwrap();
        assert_eq!(back.nodes(), m.nodes());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.periodic_pairs(), m.periodic_pairs());
        assert_eq!(back.dofs(), m.dofs());
    }

    #[test]
    fn malformed_input_names_the_line() {
        let src = "nodes 3 triangles 1\n0 0\n1 0\n0 oops\n0 1 2\n";
        match read_mesh(src.as_bytes()).unwrap_err() {
            Error::Format { line, .. } => assert_eq!(line, 4),
            e => panic!("unexpected {e}"),
        }
        assert!(read_mesh("points 3".as_bytes()).is_err());
    }

    #[test]
    fn clockwise_triangle_rejected() {
        let src = "nodes 3 triangles 1\n0 0\n1 0\n0 1\n0 2 1\n";
        assert!(matches!(read_mesh(src.as_bytes()), Err(Error::Mesh(_))));
    }
}
