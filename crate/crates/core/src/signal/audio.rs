//! PCM16 mono readers for NIST SPHERE and RIFF WAVE, plus writers used to
//! materialise synthetic corpora.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("unrecognised audio container (magic {0:?})")]
    UnknownFormat(String),
    #[error("unsupported audio: {0}")]
    Unsupported(String),
    #[error("malformed audio header: {0}")]
    Malformed(String),
}

/// Decoded audio, samples scaled to [-1, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> Waveform<T> {
    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Decodes a NIST SPHERE (`NIST_1A`) or RIFF WAVE PCM16 mono file.
pub fn decode_audio<T: Real>(bytes: &[u8]) -> Result<Waveform<T>, AudioError> {
    if bytes.starts_with(b"NIST_1A") {
        decode_sphere(bytes)
    } else if bytes.starts_with(b"RIFF") {
        decode_wav(bytes)
    } else {
        let head = &bytes[..bytes.len().min(8)];
        Err(AudioError::UnknownFormat(
            String::from_utf8_lossy(head).into_owned(),
        ))
    }
}

fn pcm16_to_real<T: Real>(data: &[u8], big_endian: bool, count: usize) -> Vec<T> {
    let scale = T::lit(1.0 / 32768.0);
    data.chunks_exact(2)
        .take(count)
        .map(|b| {
            let v = if big_endian {
                i16::from_be_bytes([b[0], b[1]])
            } else {
                i16::from_le_bytes([b[0], b[1]])
            };
            T::lit(v as f64) * scale
        })
        .collect()
}

fn decode_sphere<T: Real>(bytes: &[u8]) -> Result<Waveform<T>, AudioError> {
    let preamble = bytes
        .get(..16)
        .ok_or_else(|| AudioError::Malformed("truncated".into()))?;
    let preamble = String::from_utf8_lossy(preamble);
    let header_len: usize = preamble
        .lines()
        .nth(1)
        .and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| AudioError::Malformed("missing header length".into()))?;
    let header = bytes
        .get(..header_len)
        .ok_or_else(|| AudioError::Malformed("header longer than file".into()))?;
    let header = String::from_utf8_lossy(header);

    let mut sample_rate = None;
    let mut channels = 1u32;
    let mut sample_bytes = 2u32;
    let mut sample_count = None;
    let mut big_endian = false;
    for line in header.lines().skip(2) {
        let line = line.trim();
        if line == "end_head" {
            break;
        }
        let mut parts = line.splitn(3, ' ');
        let (Some(key), Some(_ty), Some(value)) = (parts.next(), parts.next(), parts.next()) else {
            continue;
        };
        let int = || {
            value
                .trim()
                .parse::<u64>()
                .map_err(|_| AudioError::Malformed(format!("field {key}: `{value}`")))
        };
        match key {
            "sample_rate" => sample_rate = Some(int()? as u32),
            "channel_count" => channels = int()? as u32,
            "sample_n_bytes" => sample_bytes = int()? as u32,
            "sample_count" => sample_count = Some(int()? as usize),
            "sample_byte_format" => big_endian = value.trim() == "10",
            "sample_coding" if value.trim() != "pcm" => {
                return Err(AudioError::Unsupported(format!(
                    "sample coding `{}`",
                    value.trim()
                )));
            }
            _ => {}
        }
    }
    let sample_rate =
        sample_rate.ok_or_else(|| AudioError::Malformed("missing sample_rate".into()))?;
    if channels != 1 {
        return Err(AudioError::Unsupported(format!("{channels} channels")));
    }
    if sample_bytes != 2 {
        return Err(AudioError::Unsupported(format!(
            "{}-bit samples",
            sample_bytes * 8
        )));
    }
    if sample_rate == 0 {
        return Err(AudioError::Malformed("sample_rate 0".into()));
    }
    let data = &bytes[header_len..];
    let count = sample_count.unwrap_or(data.len() / 2).min(data.len() / 2);
    Ok(Waveform {
        samples: pcm16_to_real(data, big_endian, count),
        sample_rate,
    })
}

fn u16_at(b: &[u8], at: usize) -> Result<u16, AudioError> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| AudioError::Malformed("truncated fmt chunk".into()))
}

fn u32_at(b: &[u8], at: usize) -> Result<u32, AudioError> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| AudioError::Malformed("truncated chunk header".into()))
}

fn decode_wav<T: Real>(bytes: &[u8]) -> Result<Waveform<T>, AudioError> {
    if bytes.get(8..12) != Some(b"WAVE") {
        return Err(AudioError::Malformed("RIFF file without WAVE tag".into()));
    }
    let mut pos = 12;
    let mut format = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4)? as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                let tag = u16_at(body, 0)?;
                let channels = u16_at(body, 2)?;
                let rate = u32_at(body, 4)?;
                let bits = u16_at(body, 14)?;
                if tag != 1 && tag != 0xFFFE {
                    return Err(AudioError::Unsupported(format!("WAVE format tag {tag:#x}")));
                }
                if channels != 1 {
                    return Err(AudioError::Unsupported(format!("{channels} channels")));
                }
                if bits != 16 {
                    return Err(AudioError::Unsupported(format!("{bits}-bit samples")));
                }
                if rate == 0 {
                    return Err(AudioError::Malformed("sample rate 0".into()));
                }
                format = Some(rate);
            }
            b"data" => {
                let rate = format.ok_or_else(|| AudioError::Malformed("data before fmt".into()))?;
                return Ok(Waveform {
                    samples: pcm16_to_real(body, false, body.len() / 2),
                    sample_rate: rate,
                });
            }
            _ => {}
        }
        pos = body_start + size + (size & 1);
    }
    Err(AudioError::Malformed("no data chunk".into()))
}

fn quantize<T: Real>(samples: &[T]) -> impl Iterator<Item = i16> + '_ {
    samples.iter().map(|&s| {
        let v = (s.to_f64_lossy() * 32768.0).round();
        v.clamp(-32768.0, 32767.0) as i16
    })
}

/// Encodes mono PCM16 RIFF WAVE.
pub fn encode_wav<T: Real>(samples: &[T], sample_rate: u32) -> Vec<u8> {
    let data_len = samples.len() as u32 * 2;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for v in quantize(samples) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Encodes a 1024-byte-header NIST SPHERE file, little-endian PCM16.
pub fn encode_sphere<T: Real>(samples: &[T], sample_rate: u32) -> Vec<u8> {
    let fields = format!(
        "NIST_1A\n   1024\nsample_count -i {}\nsample_rate -i {}\nchannel_count -i 1\n\
         sample_n_bytes -i 2\nsample_byte_format -s2 01\nsample_coding -s3 pcm\nend_head\n",
        samples.len(),
        sample_rate
    );
    let mut out = fields.into_bytes();
    out.resize(1024, b' ');
    for v in quantize(samples) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_with(values: &[i16], rate: u32) -> Vec<u8> {
        let mut b = encode_wav::<f64>(&[], rate);
        let data_len = values.len() as u32 * 2;
        b[4..8].copy_from_slice(&(36 + data_len).to_le_bytes());
        b[40..44].copy_from_slice(&data_len.to_le_bytes());
        for v in values {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    #[test]
    fn pcm_scaling() {
        let w: Waveform<f64> = decode_audio(&wav_with(&[16384, -32768, 0, 32767], 16000)).unwrap();
        assert_eq!(w.samples[0], 0.5);
        assert_eq!(w.samples[1], -1.0);
        assert_eq!(w.samples[2], 0.0);
        assert!(w.samples[3] < 1.0);
        assert_eq!(w.sample_rate, 16000);
    }

    #[test]
    fn sphere_header_echo() {
        let s = encode_sphere(&[0.5f64, -0.25, 0.0], 16000);
        assert_eq!(&s[..7], b"NIST_1A");
        let w: Waveform<f32> = decode_audio(&s).unwrap();
        assert_eq!(w.sample_rate, 16000);
        assert_eq!(w.samples, vec![0.5, -0.25, 0.0]);
    }

    #[test]
    fn sphere_big_endian_and_shorten() {
        let mut s = encode_sphere(&[0.5f64], 8000);
        let text = String::from_utf8_lossy(&s[..1024]).replace("-s2 01", "-s2 10");
        s[..1024].copy_from_slice(text.as_bytes());
        s[1024..1026].copy_from_slice(&16384i16.to_be_bytes());
        let w: Waveform<f64> = decode_audio(&s).unwrap();
        assert_eq!(w.samples, vec![0.5]);

        let text = String::from_utf8_lossy(&s[..1024])
            .replace("-s3 pcm", "-s26 pcm,embedded-shorten-v2.00");
        let mut t = text.into_bytes();
        t.truncate(1024);
        assert!(matches!(
            decode_audio::<f64>(&t),
            Err(AudioError::Unsupported(_))
        ));
    }

    #[test]
    fn rejects_unknown_and_unsupported() {
        assert!(matches!(
            decode_audio::<f64>(b"OggS...."),
            Err(AudioError::UnknownFormat(_))
        ));
        let mut stereo = wav_with(&[1, 2], 16000);
        stereo[22..24].copy_from_slice(&2u16.to_le_bytes());
        assert!(matches!(
            decode_audio::<f64>(&stereo),
            Err(AudioError::Unsupported(_))
        ));
        let mut eight_bit = wav_with(&[1, 2], 16000);
        eight_bit[34..36].copy_from_slice(&8u16.to_le_bytes());
        assert!(matches!(
            decode_audio::<f64>(&eight_bit),
            Err(AudioError::Unsupported(_))
        ));
    }

    #[test]
    fn wav_round_trip_quantised() {
        let x: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.1).sin() * 0.7).collect();
        let w: Waveform<f64> = decode_audio(&encode_wav(&x, 16000)).unwrap();
        for (a, b) in x.iter().zip(&w.samples) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
        }
    }
}
