//! Binary PGM (P5) rendering of scalar fields.
//!
//! Values are min-max normalized to `[0, 1]` and quantized to one byte per
//! pixel (`round(255 * v)`, half away from zero); a constant field therefore
//! renders as uniform gray 128. The header is exactly `P5\n<W> <H>\n255\n`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::minmax_normalize_f64;

/// Render a row-major `height x width` field into PGM bytes.
pub fn pgm_bytes(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    if width == 0 || height == 0 {
        return Err(Error::arg(
            "io.pgm_bytes",
            format!("grid {width}x{height} has no pixels"),
        ));
    }
    if values.len() != width * height {
        return Err(Error::shape(
            "io.pgm_bytes",
            format!(
                "{} values do not fill a {width}x{height} grid",
                values.len()
            ),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::arg("io.pgm_bytes", format!("non-finite value {bad}")));
    }
    let normalized = minmax_normalize_f64(values);
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(normalized.iter().map(|v| (255.0 * v).round() as u8));
    Ok(bytes)
}

/// Render a field to a PGM file on disk.
pub fn write_pgm(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let bytes = pgm_bytes(width, height, values)?;
    let mut file = File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}
