//! Field serialization: CSV for numbers, binary PGM for quick-look images.
//!
//! CSV layout: the first line is `nx,ny,dx,dy` for the field's grid, followed
//! by `ny` lines, one per row `j = 0, 1, ...`, each holding `nx` values in
//! ascending `i`. Values use the shortest decimal form that round-trips.
//!
//! PGM layout: `P5`, maxval 255, image rows from `j = ny - 1` (top) down to
//! `j = 0`, so the inlet edge sits at the bottom of the picture.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::grid::{Grid, ScalarField};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Format {
        path: String,
        line: usize,
        msg: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn field_to_csv(field: &ScalarField) -> String {
    let g = field.grid();
    let mut out = String::with_capacity(g.len() * 20);
    writeln!(out, "{},{},{},{}", g.nx(), g.ny(), g.dx(), g.dy()).unwrap();
    for row in field.values().chunks(g.nx()) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn export_field_csv(field: &ScalarField, path: impl AsRef<Path>) -> Result<(), ExportError> {
    let path = path.as_ref();
    fs::write(path, field_to_csv(field)).map_err(io_err(path))
}

pub fn parse_field_csv(text: &str, origin: &str) -> Result<ScalarField, ExportError> {
    let fail = |line: usize, msg: String| ExportError::Format {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| fail(1, "empty file".into()))?;
    let parts: Vec<&str> = header.split(',').map(str::trim).collect();
    let [nx, ny, dx, dy] = parts[..] else {
        return Err(fail(
            1,
            format!("expected header nx,ny,dx,dy, got `{header}`"),
        ));
    };
    let bad_header = |e: &dyn std::fmt::Display| fail(1, format!("bad header: {e}"));
    let nx: usize = nx.parse().map_err(|e| bad_header(&e))?;
    let ny: usize = ny.parse().map_err(|e| bad_header(&e))?;
    let dx: f64 = dx.parse().map_err(|e| bad_header(&e))?;
    let dy: f64 = dy.parse().map_err(|e| bad_header(&e))?;
    let grid = Grid::new(nx, ny, dx, dy).map_err(|e| bad_header(&e))?;

    let mut values = Vec::with_capacity(grid.len());
    let mut rows = 0;
    for (n, line) in lines {
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|e| fail(n + 1, format!("`{}`: {e}", tok.trim())))?;
            values.push(v);
        }
        if values.len() - before != nx {
            return Err(fail(
                n + 1,
                format!("expected {nx} values, got {}", values.len() - before),
            ));
        }
        rows += 1;
    }
    if rows != ny {
        return Err(fail(ny + 1, format!("expected {ny} rows, got {rows}")));
    }
    ScalarField::from_vec(grid, values).map_err(|e| fail(0, e.to_string()))
}

pub fn read_field_csv(path: impl AsRef<Path>) -> Result<ScalarField, ExportError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_field_csv(&text, &path.display().to_string())
}

/// Maps `value` into `0..=255`: 0 at `lo`, 255 at `hi`, rounding half up,
/// clamped outside the range. A degenerate range maps everything to 0.
#[inline]
pub fn quantize(value: f64, lo: f64, hi: f64) -> u8 {
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return 0;
    }
    let scaled = ((value - lo) / (hi - lo) * 255.0 + 0.5).floor();
    scaled.clamp(0.0, 255.0) as u8
}

pub fn heatmap_pgm(field: &ScalarField, range: Option<(f64, f64)>) -> Vec<u8> {
    let g = field.grid();
    let (lo, hi) = range.unwrap_or_else(|| (field.min(), field.max()));
    let mut out = format!("P5\n{} {}\n255\n", g.nx(), g.ny()).into_bytes();
    out.reserve(g.len());
    for row in field.values().chunks(g.nx()).rev() {
        out.extend(row.iter().map(|&v| quantize(v, lo, hi)));
    }
    out
}

pub fn export_heatmap(
    field: &ScalarField,
    path: impl AsRef<Path>,
    range: Option<(f64, f64)>,
) -> Result<(), ExportError> {
    let path = path.as_ref();
    fs::write(path, heatmap_pgm(field, range)).map_err(io_err(path))
}
