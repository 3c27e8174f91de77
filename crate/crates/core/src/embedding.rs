//! Row-normalized document (or user) embedding matrices and their text file.
//!
//! The file is a header line `n q` followed by `n` lines of `q` reals written
//! in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;

use slatelab_autodiff::Tensor;

use crate::error::{invalid, parse_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    q: usize,
    table: Tensor,
}

impl EmbeddingMatrix {
    /// Normalizes every row of an `n x q` table; a zero or non-finite row is
    /// rejected with its index.
    pub fn normalized(n: usize, q: usize, mut data: Vec<f64>) -> Result<Self> {
        if data.len() != n * q || q == 0 {
            return Err(invalid(format!("embedding table has {} values, expected {n} x {q}", data.len())));
        }
        for (i, row) in data.chunks_mut(q).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(invalid(format!("embedding row {i} has norm {norm} and cannot be normalized")));
            }
            row.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Self { n, q, table: Tensor::new(vec![n, q], data)? })
    }

    /// Takes rows that are already unit norm as they are.
    pub(crate) fn from_unit_rows(n: usize, q: usize, data: Vec<f64>) -> Result<Self> {
        Ok(Self { n, q, table: Tensor::new(vec![n, q], data)? })
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.shape().len() != 2 {
            return Err(invalid(format!("embedding tensor must be 2-d, got {:?}", t.shape())));
        }
        Self::normalized(t.rows(), t.cols(), t.data().to_vec())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.table.data()[i * self.q..(i + 1) * self.q]
    }

    pub fn data(&self) -> &[f64] {
        self.table.data()
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.table
    }

    /// Rows `ids` stacked into a `[ids.len(), q]` tensor.
    pub fn gather(&self, ids: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(ids.len() * self.q);
        for &i in ids {
            data.extend_from_slice(self.row(i));
        }
        Tensor::new(vec![ids.len(), self.q], data).expect("shape matches data")
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        self.row(a).iter().zip(self.row(b)).map(|(x, y)| x * y).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.q);
        for i in 0..self.n {
            for (j, x) in self.row(i).iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{x:?}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text form; every row must already have unit norm within
    /// `1e-6`, and values are kept bit-for-bit.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing `n q` header"))?;
        let dims = header
            .split_ascii_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| parse_err(1, format!("bad dimension `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        let [n, q] = dims[..] else {
            return Err(parse_err(1, "header must be `n q`"));
        };
        if q == 0 || n.checked_mul(q).is_none_or(|s| s > text.len()) {
            return Err(parse_err(1, format!("implausible dimensions {n} x {q}")));
        }
        let mut data = Vec::with_capacity(n * q);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            if line.trim().is_empty() {
                continue;
            }
            if rows == n {
                return Err(parse_err(lineno, format!("more than {n} rows")));
            }
            let before = data.len();
            for t in line.split_ascii_whitespace() {
                match t.parse::<f64>() {
                    Ok(x) if x.is_finite() => data.push(x),
                    _ => return Err(parse_err(lineno, format!("bad value `{t}`"))),
                }
            }
            if data.len() - before != q {
                return Err(parse_err(lineno, format!("expected {q} values, found {}", data.len() - before)));
            }
            rows += 1;
        }
        if rows != n {
            return Err(parse_err(rows + 2, format!("expected {n} rows, found {rows}")));
        }
        for (i, row) in data.chunks(q).enumerate() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(parse_err(i + 2, format!("row {i} has norm {norm}, expected 1")));
            }
        }
        Ok(Self { n, q, table: Tensor::new(vec![n, q], data)? })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Unnormalized per-user feature rows (the response model's user embeddings).
#[derive(Clone, Debug, PartialEq)]
pub struct UserTable {
    table: Tensor,
}

impl UserTable {
    pub fn new(table: Tensor) -> Result<Self> {
        if table.shape().len() != 2 || table.cols() == 0 {
            return Err(invalid(format!("user table must be 2-d with columns, got {:?}", table.shape())));
        }
        Ok(Self { table })
    }

    pub fn users(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn row(&self, u: usize) -> Result<&[f64]> {
        if u >= self.users() {
            return Err(invalid(format!("unknown user {u}; table has {} users", self.users())));
        }
        Ok(self.table.row(u))
    }
}
