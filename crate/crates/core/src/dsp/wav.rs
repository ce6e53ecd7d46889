use super::{AudioBuffer, DspError};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xfffe;

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

struct Format {
    codec: u16,
    channels: u16,
    sample_rate: u32,
    bits: u16,
}

/// Reads 16-bit PCM or 32-bit float RIFF/WAVE; stereo is averaged to mono.
pub fn read_wav(bytes: &[u8]) -> Result<AudioBuffer, DspError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(DspError::MalformedRiff("missing RIFF/WAVE header".into()));
    }
    let mut pos = 12;
    let mut format: Option<Format> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = le_u32(&bytes[pos + 4..pos + 8]) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(DspError::MalformedRiff("fmt chunk shorter than 16 bytes".into()));
                }
                let mut codec = le_u16(&body[0..2]);
                if codec == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(DspError::MalformedRiff("truncated WAVE_FORMAT_EXTENSIBLE".into()));
                    }
                    codec = le_u16(&body[24..26]);
                }
                format = Some(Format {
                    codec,
                    channels: le_u16(&body[2..4]),
                    sample_rate: le_u32(&body[4..8]),
                    bits: le_u16(&body[14..16]),
                });
            }
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {}
        }
        pos = body_start.saturating_add(size).saturating_add(size & 1);
    }
    let format = format.ok_or_else(|| DspError::MalformedRiff("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| DspError::MalformedRiff("no data chunk".into()))?;
    if format.channels == 0 || format.channels > 2 {
        return Err(DspError::UnsupportedCodec(format!(
            "{} channels (1 or 2 supported)",
            format.channels
        )));
    }
    if format.sample_rate == 0 {
        return Err(DspError::MalformedRiff("zero sample rate".into()));
    }
    let decoded: Vec<f64> = match (format.codec, format.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64 / 32768.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect(),
        (codec, bits) => {
            return Err(DspError::UnsupportedCodec(format!(
                "format tag {codec:#06x} with {bits} bits per sample"
            )))
        }
    };
    if decoded.iter().any(|s| !s.is_finite()) {
        return Err(DspError::InvalidAudio("non-finite float sample".into()));
    }
    let channels = format.channels as usize;
    let samples = decoded
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioBuffer {
        sample_rate: format.sample_rate,
        samples,
    })
}

/// Writes mono 16-bit PCM with a canonical 44-byte header. Samples are
/// clamped to `[-1, 1)` full scale.
pub fn write_wav(audio: &AudioBuffer) -> Vec<u8> {
    let data_len = (audio.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&audio.sample_rate.to_le_bytes());
    out.extend_from_slice(&(audio.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &audio.samples {
        let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.extend_from_slice(&q.to_le_bytes());
    }
    out
}
