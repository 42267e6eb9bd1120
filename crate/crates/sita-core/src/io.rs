//! Binary frame-matrix files ("SITF"): magic bytes, two u32 little-endian
//! dimensions T and D, then T*D f32 little-endian values, row-major. Used for
//! corpus features and cached teacher logits.

use crate::error::{Result, SitaError};
use crate::math::FrameSequence;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SITF";

pub fn write_sitf(path: &Path, frames: &FrameSequence) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + frames.data().len() * 4);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(frames.n_frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(frames.dim() as u32).to_le_bytes());
    for &v in frames.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| SitaError::io(path.display().to_string(), e))?;
    file.write_all(&buf)
        .map_err(|e| SitaError::io(path.display().to_string(), e))
}

pub fn read_sitf(path: &Path) -> Result<FrameSequence> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| SitaError::io(path.display().to_string(), e))?;
    let malformed = |reason: &str| SitaError::MalformedFile {
        path: path.display().to_string(),
        reason: reason.into(),
    };
    if bytes.len() < 12 || &bytes[0..4] != MAGIC {
        return Err(malformed("missing SITF header"));
    }
    let t = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = 12 + t * d * 4;
    if bytes.len() != expected {
        return Err(malformed(&format!(
            "expected {expected} bytes for {t}x{d}, found {}",
            bytes.len()
        )));
    }
    let mut data = Vec::with_capacity(t * d);
    for chunk in bytes[12..].chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    FrameSequence::new(data, t, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_values() {
        let dir = std::env::temp_dir().join("sita_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("rt.sitf");
        let values: Vec<f64> = (0..12).map(|i| (i as f64 * 0.37 - 2.0) as f32 as f64).collect();
        let fr = FrameSequence::new(values.clone(), 3, 4).unwrap();
        write_sitf(&path, &fr).unwrap();
        let back = read_sitf(&path).unwrap();
        assert_eq!(back.n_frames(), 3);
        assert_eq!(back.dim(), 4);
        assert_eq!(back.data(), fr.data());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = std::env::temp_dir().join("sita_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.sitf");
        std::fs::write(&path, b"SITF\x02\x00\x00\x00\x02\x00\x00\x00ab").unwrap();
        assert!(matches!(
            read_sitf(&path),
            Err(SitaError::MalformedFile { .. })
        ));
        std::fs::remove_file(&path).ok();
    }
}
