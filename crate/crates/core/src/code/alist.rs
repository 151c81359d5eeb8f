//! MacKay alist format for sparse parity-check matrices.
//!
//! ```text
//! n m
//! max_col_degree max_row_degree
//! col_degree_1 ... col_degree_n
//! row_degree_1 ... row_degree_m
//! <n lines: 1-based row indices of each column, optionally zero padded>
//! <m lines: 1-based column indices of each row, optionally zero padded>
//! ```
//!
//! [`to_alist`] writes the canonical form: no zero padding, single spaces, one trailing
//! newline per line.

use super::{CodeFamily, LinearCode};
use crate::error::{Error, Result};
use crate::gf2::Gf2Matrix;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank line as parsed integers, with its 1-based line number.
    fn next_ints(&mut self, what: &str) -> Result<(usize, Vec<i64>)> {
        for (i, line) in self.inner.by_ref() {
            let line_no = i + 1;
            self.last = line_no;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<i64>().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("expected integer, found {t:?}"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok((line_no, vals));
        }
        Err(Error::Parse {
            line: self.last + 1,
            message: format!("unexpected end of file while reading {what}"),
        })
    }
}

fn perr<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse {
        line,
        message: message.into(),
    })
}

fn positive(line: usize, v: i64, what: &str) -> Result<usize> {
    if v <= 0 {
        return perr(line, format!("{what} must be positive, got {v}"));
    }
    Ok(v as usize)
}

/// Reads one adjacency line: `degree` indices in `1..=bound`, then only zero padding.
fn adjacency(line: usize, vals: &[i64], degree: usize, max_degree: usize, bound: usize) -> Result<Vec<usize>> {
    if vals.len() != degree && vals.len() != max_degree {
        return perr(
            line,
            format!(
                "expected {degree} entries (or {max_degree} zero padded), found {}",
                vals.len()
            ),
        );
    }
    let (idx, pad) = vals.split_at(degree);
    if pad.iter().any(|&p| p != 0) {
        return perr(line, "nonzero entry beyond the declared degree");
    }
    let mut out = Vec::with_capacity(degree);
    for &v in idx {
        if v < 1 || v as usize > bound {
            return perr(line, format!("index {v} out of range 1..={bound}"));
        }
        let z = v as usize - 1;
        if out.contains(&z) {
            return perr(line, format!("duplicate index {v}"));
        }
        out.push(z);
    }
    Ok(out)
}

/// Parses alist text into a dense parity-check matrix.
pub fn parse_alist(text: &str) -> Result<Gf2Matrix> {
    let mut lines = Lines::new(text);

    let (l, header) = lines.next_ints("header")?;
    if header.len() != 2 {
        return perr(l, "header must be `n m`");
    }
    let n = positive(l, header[0], "n")?;
    let m = positive(l, header[1], "m")?;

    let (l, maxes) = lines.next_ints("maximum degrees")?;
    if maxes.len() != 2 {
        return perr(l, "second line must be `max_col_degree max_row_degree`");
    }
    let max_col = positive(l, maxes[0], "max column degree")?;
    let max_row = positive(l, maxes[1], "max row degree")?;

    let (l, col_deg) = lines.next_ints("column degrees")?;
    if col_deg.len() != n {
        return perr(
            l,
            format!(
                "header declares n = {n} but {} column degrees are listed",
                col_deg.len()
            ),
        );
    }
    let (l_rows, row_deg) = lines.next_ints("row degrees")?;
    if row_deg.len() != m {
        return perr(
            l_rows,
            format!("header declares m = {m} but {} row degrees are listed", row_deg.len()),
        );
    }
    let col_deg = col_deg
        .iter()
        .map(|&d| positive(l, d, "column degree"))
        .collect::<Result<Vec<_>>>()?;
    let row_deg = row_deg
        .iter()
        .map(|&d| positive(l_rows, d, "row degree"))
        .collect::<Result<Vec<_>>>()?;
    if col_deg.iter().any(|&d| d > max_col) || col_deg.iter().max() != Some(&max_col) {
        return perr(l, "column degrees disagree with the declared maximum");
    }
    if row_deg.iter().any(|&d| d > max_row) || row_deg.iter().max() != Some(&max_row) {
        return perr(l_rows, "row degrees disagree with the declared maximum");
    }
    if col_deg.iter().sum::<usize>() != row_deg.iter().sum::<usize>() {
        return perr(l_rows, "column and row degrees count different numbers of edges");
    }

    let mut h = Gf2Matrix::zeros(m, n);
    for (j, &d) in col_deg.iter().enumerate() {
        let (l, vals) = lines.next_ints("column adjacency")?;
        for r in adjacency(l, &vals, d, max_col, m)? {
            h.set(r, j, true);
        }
    }
    for (r, &d) in row_deg.iter().enumerate() {
        let (l, vals) = lines.next_ints("row adjacency")?;
        let cols = adjacency(l, &vals, d, max_row, n)?;
        let listed: Vec<usize> = {
            let mut c = cols.clone();
            c.sort_unstable();
            c
        };
        if listed != h.row_support(r) {
            return perr(l, format!("row {} disagrees with the column lists", r + 1));
        }
    }
    Ok(h)
}

/// Loads a code from alist text; `G` is derived from `H`.
pub fn load_alist(id: impl Into<String>, family: CodeFamily, text: &str) -> Result<LinearCode> {
    LinearCode::from_parity_check(id, family, parse_alist(text)?)
}

/// Canonical alist serialization of `h`.
pub fn to_alist(h: &Gf2Matrix) -> String {
    let (m, n) = (h.rows(), h.cols());
    let cols: Vec<Vec<usize>> = (0..n).map(|j| (0..m).filter(|&r| h.get(r, j)).collect()).collect();
    let rows: Vec<Vec<usize>> = (0..m).map(|r| h.row_support(r)).collect();
    let join = |v: &[usize], offset: usize| v.iter().map(|x| (x + offset).to_string()).collect::<Vec<_>>().join(" ");
    let degrees = |lists: &[Vec<usize>]| lists.iter().map(Vec::len).collect::<Vec<_>>();
    let mut out = String::new();
    out.push_str(&format!("{n} {m}\n"));
    let (cd, rd) = (degrees(&cols), degrees(&rows));
    out.push_str(&format!(
        "{} {}\n",
        cd.iter().max().copied().unwrap_or(0),
        rd.iter().max().copied().unwrap_or(0)
    ));
    out.push_str(&join(&cd, 0));
    out.push('\n');
    out.push_str(&join(&rd, 0));
    out.push('\n');
    for c in &cols {
        out.push_str(&join(c, 1));
        out.push('\n');
    }
    for r in &rows {
        out.push_str(&join(r, 1));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::bundled_alist;

    const HAMMING_BY_HAND: &str =
        "7 3\n3 4\n1 1 2 1 2 2 3\n4 4 4\n1\n2\n1 2\n3\n1 3\n2 3\n1 2 3\n1 3 5 7\n2 3 6 7\n4 5 6 7\n";

    #[test]
    fn hand_written_hamming_round_trips() {
        let h = parse_alist(HAMMING_BY_HAND).unwrap();
        let expected = Gf2Matrix::from_rows(&[
            vec![1, 0, 1, 0, 1, 0, 1],
            vec![0, 1, 1, 0, 0, 1, 1],
            vec![0, 0, 0, 1, 1, 1, 1],
        ]);
        assert_eq!(h, expected);
        let code = load_alist("h74", CodeFamily::Hamming, HAMMING_BY_HAND).unwrap();
        assert_eq!((code.n(), code.k()), (7, 4));
        assert!(code.generator().mul(&h.transpose()).is_zero());
        assert_eq!(to_alist(&h), HAMMING_BY_HAND);
    }

    #[test]
    fn zero_padded_lists_are_accepted() {
        let padded = "3 2\n2 2\n1 2 1\n2 2\n1 0\n1 2\n2 0\n1 2\n2 3\n";
        let h = parse_alist(padded).unwrap();
        assert_eq!(h.to_rows(), vec![vec![1, 1, 0], vec![0, 1, 1]]);
    }

    #[test]
    fn short_column_degree_list_is_rejected() {
        let bad = "10 3\n3 4\n1 1 2 1 2 2 3 1 1\n4 4 4\n";
        match parse_alist(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs_report_line_numbers() {
        let cases: &[(&str, usize)] = &[
            ("7\n", 1),
            ("7 x\n", 1),
            // row index 4 is out of range for m = 3
            ("7 3\n3 4\n1 1 2 1 2 2 3\n4 4 4\n4\n", 5),
            // row list contradicts the column lists
            (
                "7 3\n3 4\n1 1 2 1 2 2 3\n4 4 4\n1\n2\n1 2\n3\n1 3\n2 3\n1 2 3\n1 3 5 6\n2 3 6 7\n4 5 6 7\n",
                12,
            ),
            // truncated file
            ("7 3\n3 4\n1 1 2 1 2 2 3\n4 4 4\n1\n2\n", 7),
            // degree sums differ
            ("3 2\n2 2\n1 2 1\n2 1\n", 4),
        ];
        for (text, want) in cases {
            match parse_alist(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, *want, "{text:?}"),
                other => panic!("expected parse error for {text:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn bundled_files_are_canonical() {
        for id in crate::code::bundled_ids() {
            let text = bundled_alist(id).unwrap();
            let h = parse_alist(text).unwrap();
            assert_eq!(to_alist(&h), text, "{id}");
        }
    }

    #[test]
    fn ldpc_121_60_dimensions() {
        let code = load_alist("x", CodeFamily::Ldpc, bundled_alist("ldpc_121_60").unwrap()).unwrap();
        assert_eq!((code.n(), code.k()), (121, 60));
    }
}
