//! Text formats for graphs and quadratic games.
//!
//! Graph files:
//!
//! ```text
//! # directed 3-ring
//! nodes 3
//! edge 1 2 1.0     # information flows 1 -> 2, sets a_21
//! edge 2 3 1.0
//! edge 3 1 1.0
//! ```
//!
//! Game files list `Q_i` row by row and `b_i` on one line, players 1-based:
//!
//! ```text
//! players 2
//! Q 1
//! 2 1
//! 1 0
//! b 1
//! -2 0
//! Q 2
//! 0 1
//! 1 2
//! b 2
//! 0 -4
//! ```

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::digraph::{DiGraph, GraphError};
use crate::game::{GameError, QuadraticGame};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing `{0}` header")]
    MissingHeader(&'static str),
    #[error("missing record `{0}`")]
    MissingRecord(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Game(#[from] GameError),
}

fn syntax(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Syntax { line, message: message.into() }
}

/// Non-empty lines with comments stripped, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(k, raw)| {
        let line = raw.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((k + 1, line))
    })
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, FormatError> {
    tok.parse().map_err(|_| syntax(line, format!("invalid {what} `{tok}`")))
}

pub fn parse_graph(text: &str) -> Result<DiGraph, FormatError> {
    let mut n: Option<usize> = None;
    let mut edges = Vec::new();
    for (line, content) in content_lines(text) {
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks.as_slice() {
            ["nodes", count] => {
                if n.is_some() {
                    return Err(syntax(line, "duplicate `nodes` header"));
                }
                n = Some(parse_num(count, line, "node count")?);
            }
            ["edge", from, to, weight] => {
                let n = n.ok_or(FormatError::MissingHeader("nodes"))?;
                let from: usize = parse_num(from, line, "node index")?;
                let to: usize = parse_num(to, line, "node index")?;
                let weight: f64 = parse_num(weight, line, "weight")?;
                for idx in [from, to] {
                    if idx == 0 || idx > n {
                        return Err(syntax(line, format!("node {idx} outside 1..={n}")));
                    }
                }
                if from == to {
                    return Err(syntax(line, format!("self-loop at node {from}")));
                }
                if !(weight > 0.0) || !weight.is_finite() {
                    return Err(syntax(line, format!("edge weight must be positive, got {weight}")));
                }
                edges.push((from - 1, to - 1, weight));
            }
            _ => return Err(syntax(line, format!("unrecognised record `{content}`"))),
        }
    }
    let n = n.ok_or(FormatError::MissingHeader("nodes"))?;
    Ok(DiGraph::from_edges(n, &edges)?)
}

pub fn write_graph(graph: &DiGraph) -> String {
    let n = graph.n();
    let mut out = format!("nodes {n}\n");
    for to in 0..n {
        for from in 0..n {
            let w = graph.weights()[(to, from)];
            if w > 0.0 {
                let _ = writeln!(out, "edge {} {} {}", from + 1, to + 1, format_float(w));
            }
        }
    }
    out
}

pub fn parse_game(text: &str) -> Result<QuadraticGame, FormatError> {
    let mut lines = content_lines(text);
    let (line, header) = lines.next().ok_or(FormatError::MissingHeader("players"))?;
    let n: usize = match header.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["players", count] => parse_num(count, line, "player count")?,
        _ => return Err(FormatError::MissingHeader("players")),
    };
    if n < 2 {
        return Err(syntax(line, format!("need at least 2 players, got {n}")));
    }
    let mut q: Vec<Option<DMatrix<f64>>> = vec![None; n];
    let mut b: Vec<Option<DVector<f64>>> = vec![None; n];

    while let Some((line, content)) = lines.next() {
        let toks: Vec<&str> = content.split_whitespace().collect();
        let (kind, player) = match toks.as_slice() {
            [kind @ ("Q" | "b"), idx] => (*kind, parse_num::<usize>(idx, line, "player index")?),
            _ => return Err(syntax(line, format!("expected `Q <i>` or `b <i>`, got `{content}`"))),
        };
        if player == 0 || player > n {
            return Err(syntax(line, format!("player {player} outside 1..={n}")));
        }
        let slot = player - 1;
        if kind == "Q" {
            if q[slot].is_some() {
                return Err(syntax(line, format!("duplicate Q {player}")));
            }
            let mut rows = Vec::with_capacity(n * n);
            for _ in 0..n {
                rows.extend(read_row(&mut lines, n, line)?);
            }
            q[slot] = Some(DMatrix::from_row_slice(n, n, &rows));
        } else {
            if b[slot].is_some() {
                return Err(syntax(line, format!("duplicate b {player}")));
            }
            b[slot] = Some(DVector::from_vec(read_row(&mut lines, n, line)?));
        }
    }
    let q = q
        .into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| FormatError::MissingRecord(format!("Q {}", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    let b = b
        .into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| FormatError::MissingRecord(format!("b {}", i + 1))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuadraticGame::new(q, b)?)
}

pub fn write_game(game: &QuadraticGame) -> String {
    use crate::game::Game;
    let n = game.players();
    let mut out = format!("players {n}\n");
    for i in 0..n {
        let _ = writeln!(out, "Q {}", i + 1);
        for r in 0..n {
            let row: Vec<String> = (0..n).map(|c| format_float(game.q(i)[(r, c)])).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        let _ = writeln!(out, "b {}", i + 1);
        let row: Vec<String> = game.b(i).iter().map(|v| format_float(*v)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

fn read_row(lines: &mut dyn Iterator<Item = (usize, &str)>, n: usize, after: usize) -> Result<Vec<f64>, FormatError> {
    let (line, content) = lines.next().ok_or_else(|| syntax(after, "unexpected end of file"))?;
    let row: Vec<f64> = content.split_whitespace().map(|t| parse_num(t, line, "number")).collect::<Result<_, _>>()?;
    if row.len() != n {
        return Err(syntax(line, format!("expected {n} numbers, got {}", row.len())));
    }
    Ok(row)
}

/// Shortest text that parses back to exactly `x`, in exponent form outside
/// `[1e-4, 1e15)`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}

/// Matrix rows separated by `;`, entries by whitespace or commas.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>, String> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|row| {
            row.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| format!("invalid number `{t}`")))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let cols = rows.first().map_or(0, |r| r.len());
    if cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err("matrix rows must be non-empty and of equal length".into());
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}
