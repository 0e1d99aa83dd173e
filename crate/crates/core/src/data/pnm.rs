//! Binary PPM (P6) and PGM (P5) reading and writing.
//!
//! The writers emit a canonical header (`P6\n{w} {h}\n255\n`) so that a
//! load/save round trip is byte-identical; the readers accept arbitrary
//! whitespace and `#` comments per the PNM convention.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::DataError;

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

fn malformed(path: &Path, detail: &str) -> DataError {
    DataError::Malformed { path: path.display().to_string(), detail: detail.to_string() }
}

fn write_pnm(path: &Path, magic: &str, w: usize, h: usize, data: &[u8]) -> Result<(), DataError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = BufWriter::new(f);
    let go = |out: &mut BufWriter<File>| -> std::io::Result<()> {
        write!(out, "{magic}\n{w} {h}\n255\n")?;
        out.write_all(data)?;
        out.flush()
    };
    go(&mut out).map_err(|e| io_err(path, e))
}

pub fn write_ppm(path: &Path, w: usize, h: usize, rgb: &[u8]) -> Result<(), DataError> {
    assert_eq!(rgb.len(), w * h * 3, "ppm payload size");
    write_pnm(path, "P6", w, h, rgb)
}

pub fn write_pgm(path: &Path, w: usize, h: usize, gray: &[u8]) -> Result<(), DataError> {
    assert_eq!(gray.len(), w * h, "pgm payload size");
    write_pnm(path, "P5", w, h, gray)
}

struct HeaderReader<'a, R: Read> {
    inner: &'a mut R,
    path: &'a Path,
}

impl<R: Read> HeaderReader<'_, R> {
    fn byte(&mut self) -> Result<Option<u8>, DataError> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(None),
            Ok(_) => Ok(Some(b[0])),
            Err(e) => Err(io_err(self.path, e)),
        }
    }

    /// Next whitespace-delimited token, skipping `#` comments.
    fn token(&mut self) -> Result<String, DataError> {
        let mut tok = String::new();
        loop {
            match self.byte()? {
                None => {
                    if tok.is_empty() {
                        return Err(malformed(self.path, "unexpected end of header"));
                    }
                    return Ok(tok);
                }
                Some(b) if (b as char).is_whitespace() => {
                    if !tok.is_empty() {
                        return Ok(tok);
                    }
                }
                Some(b'#') => {
                    // Skip to end of line.
                    while let Some(b) = self.byte()? {
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(b) => tok.push(b as char),
            }
        }
    }
}

fn read_pnm(path: &Path, magic: &str) -> Result<(usize, usize, Vec<u8>), DataError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(f);
    let (w, h) = {
        let mut hr = HeaderReader { inner: &mut r, path };
        let got = hr.token()?;
        if got != magic {
            return Err(malformed(path, &format!("expected {magic}, found {got:?}")));
        }
        let w: usize = hr.token()?.parse().map_err(|_| malformed(path, "bad width"))?;
        let h: usize = hr.token()?.parse().map_err(|_| malformed(path, "bad height"))?;
        let maxval: usize = hr.token()?.parse().map_err(|_| malformed(path, "bad maxval"))?;
        if maxval != 255 {
            return Err(malformed(path, &format!("unsupported maxval {maxval}")));
        }
        (w, h)
    };
    let channels = if magic == "P6" { 3 } else { 1 };
    let mut data = vec![0u8; w * h * channels];
    r.read_exact(&mut data).map_err(|e| io_err(path, e))?;
    Ok((w, h, data))
}

pub fn read_ppm(path: &Path) -> Result<(usize, usize, Vec<u8>), DataError> {
    read_pnm(path, "P6")
}

pub fn read_pgm(path: &Path) -> Result<(usize, usize, Vec<u8>), DataError> {
    read_pnm(path, "P5")
}
