use std::path::Path;

use hound::{SampleFormat, WavReader};

use crate::error::{Error, Result};

/// A decoded mono recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    /// File stem, e.g. `101_1b1_Al_sc_Meditron`.
    pub id: String,
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Recording {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Decodes a WAV file. Integer PCM (16/24/32 bit) is scaled to [-1, 1);
/// 32-bit float is taken as-is. Multichannel audio is averaged to mono.
pub fn read_wav(path: &Path) -> Result<Recording> {
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    let reader = WavReader::open(path).map_err(|e| Error::Recording {
        recording: id.clone(),
        message: e.to_string(),
    })?;
    decode(reader, id)
}

pub fn decode_wav_bytes(id: &str, bytes: &[u8]) -> Result<Recording> {
    decode(WavReader::new(std::io::Cursor::new(bytes))?, id.to_string())
}

fn decode<R: std::io::Read>(reader: WavReader<R>, id: String) -> Result<Recording> {
    let spec = reader.spec();
    let fail = |message: String| Error::Recording {
        recording: id.clone(),
        message,
    };
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<std::result::Result<_, _>>()?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(fail(format!(
                "unsupported sample format {fmt:?} with {bits} bits"
            )))
        }
    };
    let channels = spec.channels.max(1) as usize;
    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    if samples.is_empty() {
        return Err(fail("no audio samples".into()));
    }
    if spec.sample_rate == 0 {
        return Err(fail("sample rate is zero".into()));
    }
    Ok(Recording {
        id,
        samples,
        sample_rate: spec.sample_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use hound::{WavSpec, WavWriter};

    fn encode(spec: WavSpec, frames: &[i32]) -> Vec<u8> {
        let mut cursor = std::io::Cursor::new(Vec::new());
        {
            let mut w = WavWriter::new(&mut cursor, spec).unwrap();
            for &s in frames {
                w.write_sample(s).unwrap();
            }
            w.finalize().unwrap();
        }
        cursor.into_inner()
    }

    #[test]
    fn pcm16_is_scaled() {
        let spec = WavSpec {
            channels: 1,
            sample_rate: 4000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let rec = decode_wav_bytes("a", &encode(spec, &[16384, -32768, 0])).unwrap();
        assert_eq!(rec.samples, vec![0.5, -1.0, 0.0]);
        assert_eq!(rec.sample_rate, 4000);
    }

    #[test]
    fn stereo24_is_averaged() {
        let spec = WavSpec {
            channels: 2,
            sample_rate: 44100,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let full = 1 << 23;
        let rec = decode_wav_bytes("b", &encode(spec, &[full / 2, 0, -full, full / 2])).unwrap();
        assert_eq!(rec.samples, vec![0.25, -0.25]);
    }
}
