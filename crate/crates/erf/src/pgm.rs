//! Binary greymap (P5, maxval 255).

use std::io::Write;
use std::path::Path;

use crate::ErfError;

pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<(), ErfError> {
    if pixels.len() != width * height {
        return Err(ErfError::Format(format!("{} pixels for a {width}x{height} image", pixels.len())));
    }
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "P5\n{width} {height}\n255\n")?;
    f.write_all(pixels)?;
    f.flush()?;
    Ok(())
}

/// Returns `(width, height, pixels)`.
pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>), ErfError> {
    let bytes = std::fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ErfError::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let num = |s: &str| s.parse::<usize>().map_err(|_| ErfError::Format(format!("bad PGM header field {s:?}")));
    if fields[0] != "P5" || num(&fields[3])? != 255 {
        return Err(ErfError::Format("only P5 with maxval 255 is supported".into()));
    }
    let (w, h) = (num(&fields[1])?, num(&fields[2])?);
    let data = bytes.get(pos..pos + w * h).ok_or_else(|| ErfError::Format("truncated PGM data".into()))?;
    Ok((w, h, data.to_vec()))
}
