//! `SMOE v1` text model format.
//!
//! ```text
//! SMOE v1
//! <width> <height> <K>
//! <mu_x> <mu_y> <a11> <a21> <a22> <m> <alpha>    (K lines)
//! ```
//!
//! Floats are written with 17 significant digits so a load of a saved model
//! reproduces every value exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Kernel, SmoeModel, PARAMS_PER_KERNEL};
use crate::error::{Error, Result};

const MAGIC: &str = "SMOE v1";

pub fn write_model<W: Write>(model: &SmoeModel, mut out: W) -> Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{} {} {}", model.width(), model.height(), model.len())?;
    for k in model.kernels() {
        let p = k.params();
        let fields: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", fields.join(" "))?;
    }
    Ok(())
}

pub fn save_model(model: &SmoeModel, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_model(model, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SmoeModel> {
    let text = fs::read_to_string(path)?;
    parse_model(&text)
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::parse(line, format!("invalid {name} `{raw}`")))
}

pub fn parse_model(text: &str) -> Result<SmoeModel> {
    let mut lines = text.split('\n');
    match lines.next() {
        Some(MAGIC) => {}
        Some(other) => {
            return Err(Error::parse(
                1,
                format!("expected `{MAGIC}` header, found `{other}`"),
            ))
        }
        None => return Err(Error::parse(1, "empty file")),
    }

    let header = lines
        .next()
        .ok_or_else(|| Error::parse(2, "missing size line"))?;
    let parts: Vec<&str> = header.split(' ').collect();
    if parts.len() != 3 {
        return Err(Error::parse(
            2,
            format!(
                "expected `<width> <height> <K>`, found {} fields",
                parts.len()
            ),
        ));
    }
    let width: usize = parse_field(2, "width", parts[0])?;
    let height: usize = parse_field(2, "height", parts[1])?;
    let count: usize = parse_field(2, "kernel count", parts[2])?;
    if width == 0 || height == 0 {
        return Err(Error::parse(2, "width and height must be positive"));
    }
    if count == 0 {
        return Err(Error::parse(2, "model must contain at least one kernel"));
    }

    let mut kernels = Vec::with_capacity(count);
    for i in 0..count {
        let line_no = i + 3;
        let line = lines
            .next()
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::parse(line_no, format!("missing kernel {} of {count}", i + 1)))?;
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != PARAMS_PER_KERNEL {
            return Err(Error::parse(
                line_no,
                format!(
                    "expected {PARAMS_PER_KERNEL} fields, found {}",
                    fields.len()
                ),
            ));
        }
        let mut p = [0.0; PARAMS_PER_KERNEL];
        for (slot, raw) in p.iter_mut().zip(&fields) {
            let v: f64 = parse_field(line_no, "number", raw)?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, format!("non-finite value `{raw}`")));
            }
            *slot = v;
        }
        if p[6] < 0.0 {
            return Err(Error::parse(line_no, "alpha must be non-negative"));
        }
        kernels.push(Kernel::from_params(p));
    }
    let trailing_line = count + 3;
    for (offset, rest) in lines.enumerate() {
        if !rest.is_empty() {
            return Err(Error::parse(
                trailing_line + offset,
                "unexpected content after the last kernel",
            ));
        }
    }
    SmoeModel::new(kernels, width, height)
}
