//! Minimal RIFF/WAVE support: 16-bit PCM in, 16-bit PCM mono out.
//!
//! The reader walks the chunk list (skipping unknown chunks, honouring the
//! even-byte padding rule), accepts mono or stereo — stereo is averaged to
//! mono — and normalizes samples to `[-1, 1]` by dividing by 32768, so
//! full-scale positive is 32767/32768. Compressed, float, and non-16-bit
//! files are rejected with an audio error rather than silently mangled.

use std::path::Path;

use crate::error::{Error, Result};

/// Decoded audio: mono samples in `[-1, 1]` plus the file's sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct WavAudio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl WavAudio {
    /// The samples linearly resampled to `rate` (a copy when rates match).
    pub fn resampled(&self, rate: u32) -> Result<Vec<f64>> {
        resample_linear(&self.samples, self.sample_rate, rate)
    }
}

fn audio_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Audio {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Reads a 16-bit PCM WAV file, averaging stereo down to mono.
pub fn read_wav(path: impl AsRef<Path>) -> Result<WavAudio> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(audio_err(path, "not a RIFF/WAVE file"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (code, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut cursor = 12;
    while cursor + 8 <= bytes.len() {
        let id = &bytes[cursor..cursor + 4];
        let size = u32::from_le_bytes(bytes[cursor + 4..cursor + 8].try_into().unwrap()) as usize;
        let body_start = cursor + 8;
        let body_end = body_start + size;
        if body_end > bytes.len() {
            return Err(audio_err(path, format!("truncated chunk {id:?}")));
        }
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(audio_err(path, "fmt chunk too short"));
                }
                fmt = Some((
                    u16::from_le_bytes(body[0..2].try_into().unwrap()),
                    u16::from_le_bytes(body[2..4].try_into().unwrap()),
                    u32::from_le_bytes(body[4..8].try_into().unwrap()),
                    u16::from_le_bytes(body[14..16].try_into().unwrap()),
                ));
            }
            b"data" => data = Some(body),
            _ => {} // unknown chunk: skip
        }
        // Chunk bodies are padded to even length.
        cursor = body_end + (size & 1);
    }

    let (code, channels, sample_rate, bits) =
        fmt.ok_or_else(|| audio_err(path, "missing fmt chunk"))?;
    if code != 1 {
        return Err(audio_err(
            path,
            format!("unsupported format code {code} (only 16-bit PCM is supported)"),
        ));
    }
    if bits != 16 {
        return Err(audio_err(
            path,
            format!("unsupported bit depth {bits} (only 16-bit PCM is supported)"),
        ));
    }
    if channels != 1 && channels != 2 {
        return Err(audio_err(
            path,
            format!("unsupported channel count {channels} (mono or stereo only)"),
        ));
    }
    if sample_rate == 0 {
        return Err(audio_err(path, "sample rate is zero"));
    }
    let data = data.ok_or_else(|| audio_err(path, "missing data chunk"))?;

    let frame_bytes = 2 * channels as usize;
    let frames = data.len() / frame_bytes;
    let mut samples = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut acc = 0.0;
        for c in 0..channels as usize {
            let o = f * frame_bytes + 2 * c;
            acc += i16::from_le_bytes(data[o..o + 2].try_into().unwrap()) as f64;
        }
        samples.push(acc / channels as f64 / 32768.0);
    }
    Ok(WavAudio {
        samples,
        sample_rate,
    })
}

/// Writes mono samples as 16-bit PCM, clamping to `[-1, 1]` and scaling by
/// 32767 so that ±1.0 maps onto the extreme representable codes.
pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate: u32) -> Result<()> {
    let path = path.as_ref();
    if sample_rate == 0 {
        return Err(Error::InvalidConfig("sample rate must be positive".into()));
    }
    let data_len = 2 * samples.len() as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(2 * sample_rate).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let q = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Linear interpolation resampling. The output holds
/// `len * to / from` samples; output sample `j` reads the input at position
/// `j * from / to`, blending the two neighbouring samples.
pub fn resample_linear(samples: &[f64], from: u32, to: u32) -> Result<Vec<f64>> {
    if from == 0 || to == 0 {
        return Err(Error::InvalidConfig(
            "resampling rates must be positive".into(),
        ));
    }
    if from == to || samples.is_empty() {
        return Ok(samples.to_vec());
    }
    let n_out = (samples.len() as u64 * to as u64 / from as u64) as usize;
    let step = from as f64 / to as f64;
    let mut out = Vec::with_capacity(n_out);
    for j in 0..n_out {
        let t = j as f64 * step;
        let i0 = t as usize;
        let i1 = (i0 + 1).min(samples.len() - 1);
        let frac = t - i0 as f64;
        out.push(samples[i0] * (1.0 - frac) + samples[i1] * frac);
    }
    Ok(out)
}
