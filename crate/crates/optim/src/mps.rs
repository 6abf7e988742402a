//! Fixed-format MPS writer.
//!
//! Fields start at columns 2, 5, 15, 25, 40 and 50. A name or number wider
//! than its field pushes the rest of the line right, separated by one space,
//! which free-format readers and most fixed-format readers accept.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::MpsError;
use crate::model::{MixedIntegerProgram, Sense};
use crate::Scalar;

const MAX_NAME: usize = 255;
const FIELD_COLUMNS: [usize; 6] = [1, 4, 14, 24, 39, 49];

struct Line {
    buf: String,
}

impl Line {
    fn new() -> Self {
        Self {
            buf: String::with_capacity(64),
        }
    }

    fn field(&mut self, index: usize, text: &str) -> &mut Self {
        let col = FIELD_COLUMNS[index];
        if self.buf.len() < col {
            let pad = col - self.buf.len();
            self.buf.extend(std::iter::repeat(' ').take(pad));
        } else {
            self.buf.push(' ');
        }
        self.buf.push_str(text);
        self
    }

    fn finish(&mut self, out: &mut String) {
        out.push_str(self.buf.trim_end());
        out.push('\n');
        self.buf.clear();
    }
}

/// Shortest decimal text that parses back to `v`.
fn number<T: Scalar>(v: T) -> String {
    if v == T::zero() {
        return "0".into();
    }
    let plain = format!("{v}");
    let sci = format!("{v:e}");
    if sci.len() < plain.len() {
        sci
    } else {
        plain
    }
}

fn check_name(name: &str) -> Result<(), MpsError> {
    if name.len() > MAX_NAME {
        return Err(MpsError::NameTooLong(name.to_string()));
    }
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return Err(MpsError::InvalidName(name.to_string()));
    }
    Ok(())
}

/// Renders `program` as fixed-format MPS text.
pub fn to_mps_string<T: Scalar>(program: &MixedIntegerProgram<T>) -> Result<String, MpsError> {
    program.validate()?;
    let row_names: HashSet<&str> = program.rows().iter().map(|r| r.name.as_str()).collect();
    for v in program.variables() {
        check_name(&v.name)?;
    }
    for r in program.rows() {
        check_name(&r.name)?;
    }
    let mut obj = String::from("COST");
    while row_names.contains(obj.as_str()) {
        obj.push('_');
    }
    let model_name = if program.name().is_empty() || check_name(program.name()).is_err() {
        "MODEL"
    } else {
        program.name()
    };

    let n = program.num_vars();
    let mut columns: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for (i, row) in program.rows().iter().enumerate() {
        for &(v, a) in &row.coeffs {
            columns[v.index()].push((i, a));
        }
    }

    let mut out = String::with_capacity(64 * (n + program.num_rows()));
    let mut line = Line::new();
    out.push_str("NAME          ");
    out.push_str(model_name);
    out.push('\n');

    out.push_str("ROWS\n");
    line.field(0, "N").field(1, &obj).finish(&mut out);
    for row in program.rows() {
        let tag = match row.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        line.field(0, tag).field(1, &row.name).finish(&mut out);
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut markers = 0usize;
    for (j, var) in program.variables().iter().enumerate() {
        if var.integer != in_int {
            let tag = if var.integer { "'INTORG'" } else { "'INTEND'" };
            line.field(1, &format!("MRK{markers:04}"))
                .field(2, "'MARKER'")
                .field(4, tag)
                .finish(&mut out);
            markers += 1;
            in_int = var.integer;
        }
        let mut entries: Vec<(&str, T)> = Vec::with_capacity(columns[j].len() + 1);
        let c = program.objective()[j];
        if c != T::zero() || columns[j].is_empty() {
            entries.push((&obj, c));
        }
        for &(i, a) in &columns[j] {
            entries.push((&program.rows()[i].name, a));
        }
        for pair in entries.chunks(2) {
            line.field(1, &var.name)
                .field(2, pair[0].0)
                .field(3, &number(pair[0].1));
            if let Some(&(r, a)) = pair.get(1) {
                line.field(4, r).field(5, &number(a));
            }
            line.finish(&mut out);
        }
    }
    if in_int {
        line.field(1, &format!("MRK{markers:04}"))
            .field(2, "'MARKER'")
            .field(4, "'INTEND'")
            .finish(&mut out);
    }

    out.push_str("RHS\n");
    if program.offset() != T::zero() {
        line.field(1, "RHS")
            .field(2, &obj)
            .field(3, &number(-program.offset()))
            .finish(&mut out);
    }
    for row in program.rows() {
        if row.rhs != T::zero() {
            line.field(1, "RHS")
                .field(2, &row.name)
                .field(3, &number(row.rhs))
                .finish(&mut out);
        }
    }

    if program.rows().iter().any(|r| r.range.is_some()) {
        out.push_str("RANGES\n");
        for row in program.rows() {
            if let Some(r) = row.range {
                line.field(1, "RNG")
                    .field(2, &row.name)
                    .field(3, &number(r))
                    .finish(&mut out);
            }
        }
    }

    out.push_str("BOUNDS\n");
    for var in program.variables() {
        let (l, u) = (var.lower, var.upper);
        let mut bound = |kind: &str, value: Option<T>| {
            line.field(0, kind).field(1, "BND").field(2, &var.name);
            if let Some(v) = value {
                line.field(3, &number(v));
            }
            line.finish(&mut out);
        };
        if l == u {
            bound("FX", Some(l));
            continue;
        }
        match (l.is_finite(), u.is_finite()) {
            (false, false) => bound("FR", None),
            (false, true) => {
                bound("MI", None);
                bound("UP", Some(u));
            }
            (true, false) => {
                if l != T::zero() || var.integer {
                    bound("LO", Some(l));
                }
                if var.integer {
                    bound("PL", None);
                }
            }
            (true, true) => {
                if l != T::zero() || var.integer || u < T::zero() {
                    bound("LO", Some(l));
                }
                bound("UP", Some(u));
            }
        }
    }
    out.push_str("ENDATA\n");
    Ok(out)
}

pub fn write_mps<T: Scalar, W: Write>(
    program: &MixedIntegerProgram<T>,
    mut writer: W,
) -> Result<(), MpsError> {
    let text = to_mps_string(program)?;
    writer.write_all(text.as_bytes())?;
    writer.flush()?;
    Ok(())
}

/// Writes `program` to `path` in fixed-format MPS.
pub fn export_mps<T: Scalar>(
    program: &MixedIntegerProgram<T>,
    path: impl AsRef<Path>,
) -> Result<(), MpsError> {
    let text = to_mps_string(program)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fields_land_on_fixed_columns() {
        let mut l = Line::new();
        let mut out = String::new();
        l.field(0, "N").field(1, "COST").finish(&mut out);
        assert_eq!(out, " N  COST\n");
        out.clear();
        l.field(1, "x")
            .field(2, "COST")
            .field(3, "1")
            .field(4, "r1")
            .field(5, "2.5")
            .finish(&mut out);
        assert_eq!(out, "    x         COST      1              r1        2.5\n");
    }

    #[test]
    fn long_fields_overflow_with_one_space() {
        let mut l = Line::new();
        let mut out = String::new();
        l.field(1, "a_rather_long_name").field(2, "COST").finish(&mut out);
        assert_eq!(out, "    a_rather_long_name COST\n");
    }

    #[test]
    fn numbers_are_shortest_round_trip() {
        assert_eq!(number(3.0f64), "3");
        assert_eq!(number(0.1f64), "0.1");
        assert_eq!(number(1e-12f64), "1e-12");
        assert_eq!(number(-0.0f64), "0");
        assert_eq!(number(1.0e20f64), "1e20");
        assert_eq!(number(0.1f32), "0.1");
        for v in [1.0 / 3.0, 12345.678901234, -7.25e-9, 6.02e23] {
            assert_eq!(number(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn bad_names_are_rejected() {
        let mut p = MixedIntegerProgram::<f64>::new("t");
        p.add_var("has space", 0.0, 1.0);
        assert!(matches!(to_mps_string(&p), Err(MpsError::InvalidName(_))));
        let mut p = MixedIntegerProgram::<f64>::new("t");
        p.add_var("x".repeat(256), 0.0, 1.0);
        assert!(matches!(to_mps_string(&p), Err(MpsError::NameTooLong(_))));
    }
}
