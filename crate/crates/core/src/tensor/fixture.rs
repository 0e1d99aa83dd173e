//! Binary tensor dump format for fixtures and checkpoints.
//!
//! Layout: 8-byte magic `TNSR0001`, u32 rank, `rank` u32 dims, then the
//! row-major f64 payload. All integers and floats little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::Tensor;

const MAGIC: &[u8; 8] = b"TNSR0001";

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad magic bytes, not a TNSR0001 file")]
    BadMagic { path: String },
    #[error("{path}: truncated or oversized payload")]
    BadPayload { path: String },
}

fn io_err(path: &Path, source: std::io::Error) -> FixtureError {
    FixtureError::Io { path: path.display().to_string(), source }
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<(), FixtureError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(f);
    let mut go = || -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(t.rank() as u32).to_le_bytes())?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in t.data().iter() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    };
    go().map_err(|e| io_err(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor, FixtureError> {
    let f = File::open(path).map_err(|e| io_err(path, e))?;
    let mut r = BufReader::new(f);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| io_err(path, e))?;
    if &magic != MAGIC {
        return Err(FixtureError::BadMagic { path: path.display().to_string() });
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf).map_err(|e| io_err(path, e))?;
    let rank = u32::from_le_bytes(u32buf) as usize;
    if rank > 8 {
        return Err(FixtureError::BadPayload { path: path.display().to_string() });
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        r.read_exact(&mut u32buf).map_err(|e| io_err(path, e))?;
        shape.push(u32::from_le_bytes(u32buf) as usize);
    }
    let numel: usize = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    let mut f64buf = [0u8; 8];
    for _ in 0..numel {
        r.read_exact(&mut f64buf).map_err(|e| io_err(path, e))?;
        data.push(f64::from_le_bytes(f64buf));
    }
    // Must be exactly at EOF.
    if r.read(&mut [0u8; 1]).map_err(|e| io_err(path, e))? != 0 {
        return Err(FixtureError::BadPayload { path: path.display().to_string() });
    }
    Ok(Tensor::from_vec(&shape, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tnsr");
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let t = Tensor::randn(&[3, 4, 2], 1.0, &mut rng);
        write_tensor(&path, &t).unwrap();
        let back = read_tensor(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert!(back.to_vec().iter().zip(t.to_vec()).all(|(a, b)| a.to_bits() == b.to_bits()));
        // Scalars (rank 0) round-trip too.
        let s = Tensor::scalar(-0.5);
        write_tensor(&path, &s).unwrap();
        assert_eq!(read_tensor(&path).unwrap().item(), -0.5);
    }

    #[test]
    fn bad_magic_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tnsr");
        std::fs::write(&path, b"NOTATNSRxxxx").unwrap();
        match read_tensor(&path) {
            Err(FixtureError::BadMagic { .. }) => {}
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }
}
