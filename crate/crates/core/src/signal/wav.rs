//! Mono 16-bit PCM RIFF/WAVE reader and writer.

use std::fs;
use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let data_len = clip.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        let v = (s.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let fail = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]);

    if bytes.len() < 12 {
        return Err(fail(bytes.len(), "missing RIFF header".into()));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(fail(0, "not a RIFF/WAVE file".into()));
    }

    let mut pos = 12;
    let mut format: Option<u32> = None;
    loop {
        if pos + 8 > bytes.len() {
            let missing = if format.is_none() { "fmt " } else { "data" };
            return Err(fail(pos, format!("missing '{missing}' chunk")));
        }
        let id = &bytes[pos..pos + 4];
        let size = u32_at(pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(fail(body, "truncated 'fmt ' chunk".into()));
                }
                let (encoding, channels, bits) = (u16_at(body), u16_at(body + 2), u16_at(body + 14));
                if encoding != 1 || channels != 1 || bits != 16 {
                    return Err(fail(
                        body,
                        format!("unsupported encoding {encoding}, {channels} channels, {bits} bits; need mono 16-bit PCM"),
                    ));
                }
                format = Some(u32_at(body + 4));
            }
            b"data" => {
                let Some(sample_rate) = format else {
                    return Err(fail(pos, "'data' chunk before 'fmt ' chunk".into()));
                };
                if body + size > bytes.len() {
                    return Err(fail(bytes.len(), format!("truncated 'data' chunk: {size} bytes declared")));
                }
                let samples = bytes[body..body + size]
                    .chunks_exact(2)
                    .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
                    .collect();
                return Ok(AudioClip::new(samples, sample_rate));
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
}
