//! PGM (P2/P5, maxval 255) and a lossless text grid format.
//!
//! The text grid is a `ROWS COLS` header line followed by whitespace
//! separated decimals in row-major order. Values are written in Rust's
//! shortest round-trip form, so reading back gives identical bits.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Reads PGM bytes, returning values on the 0..=255 scale.
pub fn parse_pgm(bytes: &[u8]) -> Result<Grid> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("unexpected end of PGM data".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| {
        s.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad PGM number '{s}'")))
    };
    let cols = num(token()?)?;
    let rows = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval != 255 {
        return Err(Error::Parse(format!("only maxval 255 is supported, got {maxval}")));
    }
    if rows == 0 || cols == 0 {
        return Err(Error::Parse("empty PGM image".into()));
    }
    let n = rows * cols;
    let data = match magic.as_str() {
        "P2" => {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                let x = num(token()?)?;
                if x > 255 {
                    return Err(Error::Parse(format!("PGM sample {x} exceeds maxval")));
                }
                v.push(x as f64);
            }
            v
        }
        "P5" => {
            // Exactly one whitespace byte separates the header from the raster.
            let start = pos + 1;
            if bytes.len() < start + n {
                return Err(Error::Parse("truncated P5 raster".into()));
            }
            bytes[start..start + n].iter().map(|&b| b as f64).collect()
        }
        m => return Err(Error::Parse(format!("unsupported PGM magic '{m}'"))),
    };
    Grid::new(rows, cols, data)
}

fn to_byte(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Binary P5 encoding, values rounded to nearest and clamped to 0..=255.
pub fn encode_pgm(g: &Grid) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", g.cols(), g.rows()).into_bytes();
    out.extend(g.as_slice().iter().map(|&v| to_byte(v)));
    out
}

/// ASCII P2 encoding with the same quantisation as [`encode_pgm`].
pub fn encode_pgm_ascii(g: &Grid) -> String {
    let mut s = format!("P2\n{} {}\n255\n", g.cols(), g.rows());
    for r in 0..g.rows() {
        let row: Vec<String> = (0..g.cols()).map(|c| to_byte(g.get(r, c)).to_string()).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_grid_text(text: &str) -> Result<Grid> {
    let mut it = text.split_ascii_whitespace();
    let mut dim = |what: &str| -> Result<usize> {
        it.next()
            .ok_or_else(|| Error::Parse(format!("missing {what} in grid header")))?
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad {what} in grid header")))
    };
    let rows = dim("ROWS")?;
    let cols = dim("COLS")?;
    let data = it
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad grid value '{t}'")))
        })
        .collect::<Result<Vec<f64>>>()?;
    if data.len() != rows * cols {
        return Err(Error::Parse(format!(
            "grid header says {rows}x{cols} but {} values follow",
            data.len()
        )));
    }
    Grid::new(rows, cols, data)
}

pub fn encode_grid_text(g: &Grid) -> String {
    let mut s = format!("{} {}\n", g.rows(), g.cols());
    for r in 0..g.rows() {
        let row: Vec<String> = (0..g.cols()).map(|c| format!("{:?}", g.get(r, c))).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Reads a `.pgm` file or a text grid (anything else).
pub fn read_image(path: &Path) -> Result<Grid> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        parse_pgm(&bytes)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| Error::Parse("grid file is not UTF-8".into()))?;
        parse_grid_text(&text)
    }
}

pub fn write_pgm(path: &Path, g: &Grid) -> Result<()> {
    Ok(fs::write(path, encode_pgm(g))?)
}

pub fn write_grid_text(path: &Path, g: &Grid) -> Result<()> {
    Ok(fs::write(path, encode_grid_text(g))?)
}
