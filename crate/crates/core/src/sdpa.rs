//! Sparse SDPA text format (`.dat-s`), writer and parser.
//!
//! Grammar (one item per line, `"` or `*` lines before the first item are
//! comments):
//!
//! ```text
//! m                      number of constraint matrices
//! nblocks                number of blocks
//! s_1 s_2 ... s_nblocks  block sizes (negative = diagonal block)
//! c_1 c_2 ... c_m        right-hand side
//! k b i j v              entry (i, j), i <= j, of block b of matrix F_k
//! ```
//!
//! Matrix `F_0` is the objective; the described problem is
//! `max F_0•Y  s.t.  F_k•Y = c_k (k = 1..m),  Y ⪰ 0`. Indices `k`, `b`, `i`,
//! `j` are 1-based except `k = 0` for the objective. Entries are written in
//! sorted `(k, b, i, j)` order with shortest round-trip float formatting.

use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SdpaEntry {
    pub matrix: usize,
    pub block: usize,
    pub i: usize,
    pub j: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdpaProblem {
    pub num_constraints: usize,
    pub block_sizes: Vec<i64>,
    pub rhs: Vec<f64>,
    pub entries: Vec<SdpaEntry>,
}

impl SdpaProblem {
    pub fn sort_entries(&mut self) {
        self.entries
            .sort_by_key(|e| (e.matrix, e.block, e.i, e.j));
    }

    pub fn to_text(&self, comment: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(c) = comment {
            for line in c.lines() {
                let _ = writeln!(out, "\"{line}");
            }
        }
        let _ = writeln!(out, "{}", self.num_constraints);
        let _ = writeln!(out, "{}", self.block_sizes.len());
        let sizes: Vec<String> = self.block_sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "{}", sizes.join(" "));
        let rhs: Vec<String> = self.rhs.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", rhs.join(" "));
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {} {} {:e}", e.matrix, e.block, e.i, e.j, e.value);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .skip_while(|(_, l)| l.starts_with('"') || l.starts_with('*'));

        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Malformed(format!("unexpected end of file, expected {what}")))
        };
        let clean = |l: &str| l.replace([',', '{', '}', '(', ')'], " ");

        let (ln, l) = next("constraint count")?;
        let num_constraints = parse_first::<usize>(&clean(l), ln)?;
        let (ln, l) = next("block count")?;
        let nblocks = parse_first::<usize>(&clean(l), ln)?;
        let (ln, l) = next("block sizes")?;
        let block_sizes = parse_all::<i64>(&clean(l), ln)?;
        if block_sizes.len() < nblocks {
            return Err(Error::Malformed(format!(
                "line {ln}: expected {nblocks} block sizes, found {}",
                block_sizes.len()
            )));
        }
        let block_sizes = block_sizes[..nblocks].to_vec();
        let (ln, l) = next("right-hand side")?;
        let rhs = parse_all::<f64>(&clean(l), ln)?;
        if rhs.len() < num_constraints {
            return Err(Error::Malformed(format!(
                "line {ln}: expected {num_constraints} right-hand side values, found {}",
                rhs.len()
            )));
        }
        let rhs = rhs[..num_constraints].to_vec();

        let mut entries = Vec::new();
        for (ln, l) in lines {
            let toks: Vec<&str> = l.split_whitespace().collect();
            if toks.len() < 5 {
                return Err(Error::Malformed(format!("line {ln}: entry needs 5 fields")));
            }
            let idx = |t: &str| {
                t.parse::<usize>()
                    .map_err(|_| Error::Malformed(format!("line {ln}: bad index `{t}`")))
            };
            let entry = SdpaEntry {
                matrix: idx(toks[0])?,
                block: idx(toks[1])?,
                i: idx(toks[2])?,
                j: idx(toks[3])?,
                value: toks[4]
                    .parse()
                    .map_err(|_| Error::Malformed(format!("line {ln}: bad value `{}`", toks[4])))?,
            };
            if entry.matrix > num_constraints
                || entry.block == 0
                || entry.block > nblocks
                || entry.i == 0
                || entry.j == 0
            {
                return Err(Error::Malformed(format!("line {ln}: index out of range")));
            }
            let size = block_sizes[entry.block - 1].unsigned_abs() as usize;
            if entry.i > size || entry.j > size {
                return Err(Error::Malformed(format!(
                    "line {ln}: entry ({}, {}) outside block of size {size}",
                    entry.i, entry.j
                )));
            }
            entries.push(entry);
        }
        Ok(SdpaProblem {
            num_constraints,
            block_sizes,
            rhs,
            entries,
        })
    }
}

fn parse_first<T: std::str::FromStr>(line: &str, ln: usize) -> Result<T> {
    line.split_whitespace()
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Malformed(format!("line {ln}: cannot parse `{line}`")))
}

fn parse_all<T: std::str::FromStr>(line: &str, ln: usize) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Malformed(format!("line {ln}: cannot parse `{t}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SdpaProblem {
        SdpaProblem {
            num_constraints: 2,
            block_sizes: vec![2, -3],
            rhs: vec![1.0, -0.1],
            entries: vec![
                SdpaEntry { matrix: 0, block: 1, i: 1, j: 1, value: 2.5 },
                SdpaEntry { matrix: 1, block: 1, i: 1, j: 2, value: 1.0 / 3.0 },
                SdpaEntry { matrix: 2, block: 2, i: 3, j: 3, value: -7e-300 },
            ],
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let p = sample();
        let text = p.to_text(Some("generated\nby a test"));
        assert!(text.starts_with("\"generated\n\"by a test\n2\n2\n2 -3\n"));
        assert_eq!(SdpaProblem::parse(&text).unwrap(), p);
    }

    #[test]
    fn parses_classic_punctuation() {
        let text = "\"comment\n2 =mdim\n1 =nblocks\n{2}\n{1.0, 2.0}\n1 1 1 1 1.0\n2 1 2 2 1.0\n";
        let p = SdpaProblem::parse(text).unwrap();
        assert_eq!(p.block_sizes, vec![2]);
        assert_eq!(p.rhs, vec![1.0, 2.0]);
        assert_eq!(p.entries.len(), 2);
    }

    #[test]
    fn rejects_out_of_range_entries() {
        let text = "1\n1\n2\n1.0\n1 1 3 3 1.0\n";
        assert!(matches!(SdpaProblem::parse(text), Err(Error::Malformed(_))));
        let text = "1\n1\n2\n";
        assert!(SdpaProblem::parse(text).is_err());
    }
}
