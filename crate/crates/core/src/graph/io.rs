use std::fmt::Write as _;
use std::path::Path;

use super::Graph;
use crate::{Error, Result};

/// Reads a graph in edge-list format: `#` comments, a `N M` header, then
/// `M` lines of `u v w`.
pub fn load_graph(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_graph(&text)
}

pub fn parse_graph(text: &str) -> Result<Graph> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line, header) = lines.next().ok_or(Error::Parse {
        line: 0,
        message: "missing `N M` header".into(),
    })?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(Error::Parse {
            line,
            message: format!("expected `N M`, found `{header}`"),
        });
    }
    let n = parse_field::<usize>(fields[0], line, "node count")?;
    let m = parse_field::<usize>(fields[1], line, "edge count")?;

    let mut edges = Vec::with_capacity(m);
    for (line, body) in lines {
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected `u v w`, found `{body}`"),
            });
        }
        edges.push((
            parse_field::<usize>(fields[0], line, "node id")?,
            parse_field::<usize>(fields[1], line, "node id")?,
            parse_field::<f64>(fields[2], line, "weight")?,
        ));
    }
    if edges.len() != m {
        return Err(Error::Parse {
            line: 0,
            message: format!("header declares {m} edges but {} were listed", edges.len()),
        });
    }
    Graph::new(n, edges)
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} `{s}`"),
    })
}

/// Serializes a graph with edges sorted by `(u, v)`.
pub fn write_graph(graph: &Graph) -> String {
    let mut edges = graph.edges().to_vec();
    edges.sort_by_key(|e| (e.u, e.v));
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", graph.node_count(), edges.len());
    for e in edges {
        let _ = writeln!(out, "{} {} {}", e.u, e.v, e.w);
    }
    out
}

pub fn save_graph(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_graph(graph)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_path_graph() {
        let g = parse_graph("# path\n3 2\n0 1 1.0\n1 2 1.0\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
    }

    #[test]
    fn rejects_self_loop_and_malformed_lines() {
        assert!(matches!(
            parse_graph("2 1\n0 0 1.0\n"),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(
            parse_graph("2 1\n0 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(parse_graph("2 2\n0 1 1\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_graph("x 1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn writer_sorts_edges() {
        let g = Graph::new(3, [(2, 1, 1.0), (0, 2, 0.5)]).unwrap();
        assert_eq!(write_graph(&g), "3 2\n0 2 0.5\n1 2 1\n");
        assert_eq!(parse_graph(&write_graph(&g)).unwrap().edge_count(), 2);
    }
}
