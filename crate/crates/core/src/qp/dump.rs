//! Plain-text problem dump.
//!
//! ```text
//! qp v1
//! dims <n> <m_eq> <m_in>
//! H          followed by n rows of n numbers
//! f          followed by 1 row of n numbers
//! Aeq        followed by m_eq rows of n numbers
//! beq        followed by 1 row of m_eq numbers
//! Ain        followed by m_in rows of n numbers
//! lower      followed by 1 row of m_in numbers
//! upper      followed by 1 row of m_in numbers
//! ```
//!
//! Numbers are whitespace separated and written in shortest round-trip form, so
//! a dump parses back to a bit-identical problem. Unbounded sides are `inf` and
//! `-inf`. An empty block keeps its header and a blank line for a zero-length row.
//! Lines starting with `#` are ignored.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use super::{QpError, QpProblem};

pub fn write_dump(p: &QpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "qp v1");
    let _ = writeln!(out, "dims {} {} {}", p.num_vars(), p.num_eq(), p.num_ineq());
    write_matrix(&mut out, "H", &p.hessian);
    write_row(&mut out, "f", p.linear.iter());
    write_matrix(&mut out, "Aeq", &p.eq_matrix);
    write_row(&mut out, "beq", p.eq_rhs.iter());
    write_matrix(&mut out, "Ain", &p.ineq_matrix);
    write_row(&mut out, "lower", p.lower.iter());
    write_row(&mut out, "upper", p.upper.iter());
    out
}

fn join<'a>(values: impl Iterator<Item = &'a f64>) -> String {
    values.map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn write_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name}");
    for r in m.row_iter() {
        let _ = writeln!(out, "{}", join(r.iter()));
    }
}

fn write_row<'a>(out: &mut String, name: &str, values: impl Iterator<Item = &'a f64>) {
    let _ = writeln!(out, "{name}");
    let _ = writeln!(out, "{}", join(values));
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str), QpError> {
        for (i, line) in self.inner.by_ref() {
            if !line.trim_start().starts_with('#') {
                return Ok((i + 1, line.trim()));
            }
        }
        Err(QpError::Parse("unexpected end of input".into()))
    }

    fn expect(&mut self, header: &str) -> Result<(), QpError> {
        let (no, line) = self.next_line()?;
        if line != header {
            return Err(QpError::Parse(format!("line {no}: expected `{header}`, found `{line}`")));
        }
        Ok(())
    }

    fn numbers(&mut self, len: usize) -> Result<Vec<f64>, QpError> {
        let (no, line) = self.next_line()?;
        let values =
            line.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| QpError::Parse(format!("line {no}: `{t}`: {e}")))).collect::<Result<Vec<_>, _>>()?;
        if values.len() != len {
            return Err(QpError::Parse(format!("line {no}: expected {len} numbers, found {}", values.len())));
        }
        Ok(values)
    }

    fn matrix(&mut self, header: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, QpError> {
        self.expect(header)?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.numbers(cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn vector(&mut self, header: &str, len: usize) -> Result<DVector<f64>, QpError> {
        self.expect(header)?;
        Ok(DVector::from_vec(self.numbers(len)?))
    }
}

pub fn parse_dump(text: &str) -> Result<QpProblem, QpError> {
    let mut lines = Lines { inner: text.lines().enumerate().peekable() };
    lines.expect("qp v1")?;
    let (no, dims) = lines.next_line()?;
    let parts: Vec<&str> = dims.split_whitespace().collect();
    let dims: Vec<usize> = match parts.as_slice() {
        ["dims", rest @ ..] if rest.len() == 3 => {
            rest.iter().map(|t| t.parse::<usize>().map_err(|e| QpError::Parse(format!("line {no}: `{t}`: {e}")))).collect::<Result<_, _>>()?
        }
        _ => return Err(QpError::Parse(format!("line {no}: expected `dims <n> <m_eq> <m_in>`"))),
    };
    let (n, me, mi) = (dims[0], dims[1], dims[2]);
    let problem = QpProblem {
        hessian: lines.matrix("H", n, n)?,
        linear: lines.vector("f", n)?,
        eq_matrix: lines.matrix("Aeq", me, n)?,
        eq_rhs: lines.vector("beq", me)?,
        ineq_matrix: lines.matrix("Ain", mi, n)?,
        lower: lines.vector("lower", mi)?,
        upper: lines.vector("upper", mi)?,
    };
    problem.validate()?;
    Ok(problem)
}
