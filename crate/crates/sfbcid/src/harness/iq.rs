//! IQ capture files: little-endian 32-bit float interleaved I,Q samples,
//! antennas concatenated in order, with a structured-text metadata sidecar
//! at `<path>.meta` describing the frame geometry.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::txchain::TimeDomainFrame;

/// Sidecar metadata for one capture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IqMeta {
    pub version: u32,
    pub n: usize,
    pub nu: usize,
    pub n_b: usize,
    pub n_r: usize,
    pub sample_format: String,
}

impl IqMeta {
    pub fn for_frame(frame: &TimeDomainFrame) -> Self {
        Self {
            version: 1,
            n: frame.n,
            nu: frame.nu,
            n_b: frame.n_symbols,
            n_r: frame.n_antennas(),
            sample_format: "f32le".to_string(),
        }
    }

    pub fn samples_per_antenna(&self) -> usize {
        self.n_b * (self.n + self.nu)
    }
}

fn meta_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".meta");
    PathBuf::from(os)
}

fn capture_error(path: &Path, message: impl Into<String>) -> HarnessError {
    HarnessError::Capture {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Writes the frame as interleaved little-endian f32 I,Q with its metadata
/// sidecar. Samples survive a write/read/write cycle bit-exactly.
pub fn write_capture(path: &Path, frame: &TimeDomainFrame) -> Result<(), HarnessError> {
    let meta = IqMeta::for_frame(frame);
    let mut bytes = Vec::with_capacity(frame.n_antennas() * meta.samples_per_antenna() * 8);
    for stream in &frame.samples {
        for sample in stream {
            bytes.extend_from_slice(&(sample.re as f32).to_le_bytes());
            bytes.extend_from_slice(&(sample.im as f32).to_le_bytes());
        }
    }
    std::fs::write(path, bytes)?;
    let text = toml::to_string(&meta).map_err(|e| capture_error(path, e.to_string()))?;
    std::fs::write(meta_path(path), text)?;
    Ok(())
}

/// Reads a capture and its sidecar back into a frame. Length mismatches
/// report the byte offset where the file ran short.
pub fn read_capture(path: &Path) -> Result<(TimeDomainFrame, IqMeta), HarnessError> {
    let meta_file = meta_path(path);
    let meta_text = std::fs::read_to_string(&meta_file)
        .map_err(|e| capture_error(&meta_file, format!("metadata sidecar: {e}")))?;
    let meta: IqMeta =
        toml::from_str(&meta_text).map_err(|e| capture_error(&meta_file, e.to_string()))?;
    if meta.sample_format != "f32le" {
        return Err(capture_error(
            path,
            format!("unsupported sample format '{}'", meta.sample_format),
        ));
    }
    let bytes = std::fs::read(path)?;
    let expected = meta.n_r * meta.samples_per_antenna() * 8;
    if bytes.len() != expected {
        let offset = bytes.len();
        return Err(capture_error(
            path,
            format!("expected {expected} bytes, file ends at byte {offset}"),
        ));
    }
    let mut samples = Vec::with_capacity(meta.n_r);
    let per_antenna = meta.samples_per_antenna();
    for ant in 0..meta.n_r {
        let mut stream = Vec::with_capacity(per_antenna);
        for s in 0..per_antenna {
            let base = (ant * per_antenna + s) * 8;
            let re = f32::from_le_bytes(bytes[base..base + 4].try_into().unwrap());
            let im = f32::from_le_bytes(bytes[base + 4..base + 8].try_into().unwrap());
            stream.push(Complex64::new(re as f64, im as f64));
        }
        samples.push(stream);
    }
    Ok((
        TimeDomainFrame {
            n: meta.n,
            nu: meta.nu,
            n_symbols: meta.n_b,
            samples,
        },
        meta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::txchain::{assemble_grid, map_symbols, ofdm_modulate, CodeId, ModulationScheme, SymbolBlock};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn temp_file(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join("sfbcid-iq-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    fn sample_frame() -> TimeDomainFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let blocks: Vec<SymbolBlock> = (0..8 * 2)
            .map(|_| SymbolBlock(map_symbols(&mut rng, ModulationScheme::QPSK, 2).unwrap()))
            .collect();
        let grid = assemble_grid(CodeId::Al, &blocks, 16, 2, 0.7).unwrap();
        ofdm_modulate(&grid, 4)
    }

    #[test]
    fn capture_round_trip_is_bit_exact() {
        let path = temp_file("roundtrip.iq");
        let frame = sample_frame();
        write_capture(&path, &frame).unwrap();
        let first = std::fs::read(&path).unwrap();
        let (read_back, meta) = read_capture(&path).unwrap();
        assert_eq!(meta.n, 16);
        assert_eq!(meta.n_r, 2);
        let path2 = temp_file("roundtrip2.iq");
        write_capture(&path2, &read_back).unwrap();
        let second = std::fs::read(&path2).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn truncated_capture_reports_offset() {
        let path = temp_file("truncated.iq");
        let frame = sample_frame();
        write_capture(&path, &frame).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        let err = read_capture(&path).unwrap_err();
        let message = err.to_string();
        assert!(
            message.contains(&format!("byte {}", bytes.len() - 5)),
            "message: {message}"
        );
    }

    #[test]
    fn missing_sidecar_is_an_error() {
        let path = temp_file("lonely.iq");
        std::fs::write(&path, b"abc").unwrap();
        let _ = std::fs::remove_file(meta_path(&path));
        assert!(read_capture(&path).is_err());
    }
}
