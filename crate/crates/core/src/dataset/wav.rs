//! Minimal RIFF/WAVE PCM16 reader and writer.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("malformed WAV header: {0}")]
    MalformedHeader(String),
    #[error("unsupported codec: format tag {format_tag}, {bits} bits per sample")]
    UnsupportedCodec { format_tag: u16, bits: u16 },
    #[error("WAV data chunk is empty")]
    EmptyData,
}

/// Decoded mono audio.
#[derive(Clone, Debug, PartialEq)]
pub struct WavAudio {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

const PCM_SCALE: f32 = 32768.0;

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Format {
    tag: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

/// Decodes a PCM16 WAV container; stereo (or wider) input is downmixed by channel mean.
pub fn decode_wav(bytes: &[u8]) -> Result<WavAudio, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::MalformedHeader("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| {
                WavError::MalformedHeader(format!(
                    "chunk {:?} overruns file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(WavError::MalformedHeader("fmt chunk too short".into()));
                }
                format = Some(Format {
                    tag: u16_at(body, 0),
                    channels: u16_at(body, 2),
                    sample_rate: u32_at(body, 4),
                    bits: u16_at(body, 14),
                });
            }
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let format = format.ok_or_else(|| WavError::MalformedHeader("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| WavError::MalformedHeader("no data chunk".into()))?;
    if format.tag != 1 || format.bits != 16 {
        return Err(WavError::UnsupportedCodec {
            format_tag: format.tag,
            bits: format.bits,
        });
    }
    if format.channels == 0 || format.sample_rate == 0 {
        return Err(WavError::MalformedHeader("zero channels or sample rate".into()));
    }
    let channels = format.channels as usize;
    let frame_bytes = 2 * channels;
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(WavError::EmptyData);
    }

    let samples = (0..frames)
        .map(|f| {
            let frame = &data[f * frame_bytes..(f + 1) * frame_bytes];
            if channels == 1 {
                i16::from_le_bytes([frame[0], frame[1]]) as f32 / PCM_SCALE
            } else {
                let sum: f32 = frame
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / PCM_SCALE)
                    .sum();
                sum / channels as f32
            }
        })
        .collect();

    Ok(WavAudio {
        samples,
        sample_rate: format.sample_rate,
    })
}

fn to_pcm16(x: f32) -> i16 {
    (x * PCM_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

/// Encodes mono samples as a canonical 44-byte-header PCM16 WAV file.
pub fn encode_wav(samples: &[f32], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + samples.len() * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        out.extend_from_slice(&to_pcm16(s).to_le_bytes());
    }
    out
}
