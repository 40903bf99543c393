//! EIKF1 text format and small output helpers.
//!
//! ```text
//! EIKF1 vector
//! nx ny
//! x0 y0 dx dy
//! <ny rows of nx entries, y-outer>
//! ```
//! Vector entries are `vx vy` pairs. Masked-out nodes are written as `nan`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid2, ScalarField, UnitVectorField, Vec2, VectorField};

/// Any field that can be stored in an EIKF1 file.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyField {
    Scalar(ScalarField),
    Vector(VectorField),
}

impl AnyField {
    pub fn grid(&self) -> &Grid2 {
        match self {
            AnyField::Scalar(f) => f.grid(),
            AnyField::Vector(f) => f.grid(),
        }
    }

    /// The vector field as a unit field, renormalizing read-back rounding.
    pub fn into_unit(self) -> Result<UnitVectorField> {
        match self {
            AnyField::Vector(f) => UnitVectorField::normalized(f, 1e-6),
            AnyField::Scalar(_) => Err(Error::config("expected a vector field, found scalar")),
        }
    }
}

impl From<ScalarField> for AnyField {
    fn from(f: ScalarField) -> Self {
        AnyField::Scalar(f)
    }
}

impl From<VectorField> for AnyField {
    fn from(f: VectorField) -> Self {
        AnyField::Vector(f)
    }
}

impl From<UnitVectorField> for AnyField {
    fn from(f: UnitVectorField) -> Self {
        AnyField::Vector(f.into_field())
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn header(out: &mut String, kind: &str, g: &Grid2) {
    let _ = writeln!(out, "EIKF1 {kind}");
    let _ = writeln!(out, "{} {}", g.nx(), g.ny());
    let o = g.origin();
    let _ = writeln!(out, "{} {} {} {}", num(o.x), num(o.y), num(g.dx()), num(g.dx()));
}

pub fn format_scalar(f: &ScalarField) -> String {
    let g = f.grid();
    let mut out = String::with_capacity(g.len() * 24 + 64);
    header(&mut out, "scalar", g);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            if i > 0 {
                out.push(' ');
            }
            match f.at(i, j) {
                Some(v) => out.push_str(&num(v)),
                None => out.push_str("nan"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn format_vector(f: &VectorField) -> String {
    let g = f.grid();
    let mut out = String::with_capacity(g.len() * 48 + 64);
    header(&mut out, "vector", g);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            if i > 0 {
                out.push(' ');
            }
            match f.at(i, j) {
                Some(v) => {
                    out.push_str(&num(v.x));
                    out.push(' ');
                    out.push_str(&num(v.y));
                }
                None => out.push_str("nan nan"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn format_field(f: &AnyField) -> String {
    match f {
        AnyField::Scalar(s) => format_scalar(s),
        AnyField::Vector(v) => format_vector(v),
    }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::format(line, format!("cannot parse number {tok:?}")))
}

pub fn parse_field(text: &str) -> Result<AnyField> {
    let mut lines = text.lines().enumerate().map(|(k, l)| (k + 1, l.trim()));
    let mut next = |what: &str| -> Result<(usize, &str)> {
        lines
            .next()
            .ok_or_else(|| Error::format(0, format!("unexpected end of file, expected {what}")))
    };

    let (ln, head) = next("header")?;
    let vector = match head.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["EIKF1", "scalar"] => false,
        ["EIKF1", "vector"] => true,
        _ => return Err(Error::format(ln, format!("bad header {head:?}"))),
    };

    let (ln, dims) = next("node counts")?;
    let dims: Vec<&str> = dims.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(Error::format(ln, "expected \"nx ny\""));
    }
    let nx: usize = dims[0]
        .parse()
        .map_err(|_| Error::format(ln, format!("bad nx {:?}", dims[0])))?;
    let ny: usize = dims[1]
        .parse()
        .map_err(|_| Error::format(ln, format!("bad ny {:?}", dims[1])))?;

    let (ln, geo) = next("geometry")?;
    let geo: Vec<&str> = geo.split_whitespace().collect();
    if geo.len() != 4 {
        return Err(Error::format(ln, "expected \"x0 y0 dx dy\""));
    }
    let g: Vec<f64> = geo
        .iter()
        .map(|t| parse_f64(t, ln))
        .collect::<Result<_>>()?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(ln, "non-finite geometry entry"));
    }
    if (g[2] - g[3]).abs() > 1e-12 * g[2].abs().max(1.0) {
        return Err(Error::format(ln, "dx and dy must agree (square cells)"));
    }
    let grid = Grid2::new(nx, ny, Vec2::new(g[0], g[1]), g[2])
        .map_err(|e| Error::format(ln, e.to_string()))?;

    let per = if vector { 2 } else { 1 };
    let mut svals = Vec::new();
    let mut vvals = Vec::new();
    let mut mask = Vec::with_capacity(grid.len());
    let mut rows = 0usize;
    let mut last_line = ln;
    for (ln, row) in lines {
        last_line = ln;
        if row.is_empty() {
            continue;
        }
        if rows == ny {
            return Err(Error::format(ln, format!("more than {ny} value rows")));
        }
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() != nx * per {
            return Err(Error::format(
                ln,
                format!("expected {} entries, found {}", nx * per, toks.len()),
            ));
        }
        for chunk in toks.chunks(per) {
            let vals: Vec<f64> = chunk
                .iter()
                .map(|t| parse_f64(t, ln))
                .collect::<Result<_>>()?;
            let masked = vals.iter().all(|v| v.is_nan());
            if !masked && vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(ln, "non-finite entry"));
            }
            mask.push(!masked);
            if vector {
                vvals.push(if masked { Vec2::ZERO } else { Vec2::new(vals[0], vals[1]) });
            } else {
                svals.push(if masked { 0.0 } else { vals[0] });
            }
        }
        rows += 1;
    }
    if rows != ny {
        return Err(Error::format(
            last_line,
            format!("expected {ny} value rows, found {rows}"),
        ));
    }
    Ok(if vector {
        AnyField::Vector(Field::from_parts(grid, vvals, mask)?)
    } else {
        AnyField::Scalar(Field::from_parts(grid, svals, mask)?)
    })
}

pub fn read_field(path: impl AsRef<Path>) -> Result<AnyField> {
    let text = fs::read_to_string(path)?;
    parse_field(&text)
}

pub fn write_field(field: &AnyField, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, format_field(field).as_bytes())
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Minimal CSV builder: a header row and rows of pre-formatted cells.
#[derive(Clone, Debug, Default)]
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        let mut text = columns.join(",");
        text.push('\n');
        Csv { text }
    }

    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        let line: Vec<&str> = cells.iter().map(|c| c.as_ref()).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, self.text.as_bytes())
    }
}

/// Number formatting used in every CSV: full precision, locale-free.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.12e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid4() -> Grid2 {
        Grid2::new(4, 4, Vec2::new(-1.0, -1.0), 2.0 / 3.0).unwrap()
    }

    #[test]
    fn constant_round_trip() {
        let f = VectorField::filled(grid4(), Vec2::new(0.6, 0.8));
        let back = parse_field(&format_vector(&f)).unwrap();
        assert_eq!(back, AnyField::Vector(f));
    }

    #[test]
    fn masked_scalar_round_trip() {
        let f = ScalarField::from_fn(grid4(), |p| (p.x > 0.0).then_some(p.y * 1.0 / 3.0));
        let text = format_scalar(&f);
        assert!(text.contains("nan"));
        assert_eq!(parse_field(&text).unwrap(), AnyField::Scalar(f));
    }

    #[test]
    fn row_count_mismatch_reports_line() {
        // 15 value rows (one per line) cannot describe a 4x4 grid
        let mut text = String::from("EIKF1 vector\n4 4\n0 0 1 1\n");
        for _ in 0..15 {
            text.push_str("1 0\n");
        }
        match parse_field(&text) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_field("EIKF2 scalar\n"), Err(Error::Format { line: 1, .. })));
        let inf = "EIKF1 scalar\n2 2\n0 0 1 1\n1 inf\n1 1\n";
        assert!(matches!(parse_field(inf), Err(Error::Format { line: 4, .. })));
        let short = "EIKF1 scalar\n2 2\n0 0 1 1\n1 1\n";
        assert!(matches!(parse_field(short), Err(Error::Format { .. })));
        let aniso = "EIKF1 scalar\n2 2\n0 0 1 2\n1 1\n1 1\n";
        assert!(matches!(parse_field(aniso), Err(Error::Format { line: 3, .. })));
    }

    #[test]
    fn atomic_write_and_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.eikf");
        let f = ScalarField::from_fn(grid4(), |p| Some(p.x.exp()));
        write_field(&f.clone().into(), &path).unwrap();
        assert_eq!(read_field(&path).unwrap(), AnyField::Scalar(f));
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(leftovers.len(), 1);
    }
}
