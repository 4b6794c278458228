//! 16-bit PCM WAV input and output.

use std::io::{Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

/// The only rate the feature extractor accepts.
pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported audio format: {0}")]
    Format(String),
    #[error("malformed wav data: {0}")]
    Parse(String),
    #[error("invalid signal: {0}")]
    Invalid(String),
}

impl From<hound::Error> for AudioError {
    fn from(e: hound::Error) -> Self {
        match e {
            hound::Error::IoError(io) if io.kind() == std::io::ErrorKind::UnexpectedEof => {
                AudioError::Parse("file is truncated".into())
            }
            hound::Error::IoError(io) => AudioError::Io(io),
            hound::Error::Unsupported => AudioError::Format("encoding not supported".into()),
            other => AudioError::Parse(other.to_string()),
        }
    }
}

/// Mono samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::Invalid("signal has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(AudioError::Invalid("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal, AudioError> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match AudioError::from(e) {
        AudioError::Io(io) => AudioError::Io(std::io::Error::new(
            io.kind(),
            format!("{}: {io}", path.display()),
        )),
        other => other,
    })?;
    decode(reader)
}

/// Reads a WAV stream: RIFF container, 16-bit integer PCM, mono, 16 kHz.
pub fn read_wav_from<R: Read>(reader: R) -> Result<AudioSignal, AudioError> {
    decode(WavReader::new(reader)?)
}

fn decode<R: Read>(reader: WavReader<R>) -> Result<AudioSignal, AudioError> {
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::Format(format!(
            "expected 16-bit integer PCM, found {}-bit {:?}",
            spec.bits_per_sample, spec.sample_format
        )));
    }
    if spec.channels != 1 {
        return Err(AudioError::Format(format!(
            "expected mono, found {} channels",
            spec.channels
        )));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(AudioError::Format(format!(
            "expected {SAMPLE_RATE} Hz, found {} Hz",
            spec.sample_rate
        )));
    }
    let expected = reader.len() as usize;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| match e {
            hound::Error::IoError(io) => AudioError::Parse(format!("file is truncated ({io})")),
            other => other.into(),
        })?;
    if samples.len() != expected {
        return Err(AudioError::Parse(format!(
            "file is truncated: header declares {expected} samples, found {}",
            samples.len()
        )));
    }
    AudioSignal::new(samples, spec.sample_rate)
}

/// Quantises to 16-bit PCM (clipping to the representable range).
pub fn write_wav_to<W: Write + Seek>(writer: W, signal: &AudioSignal) -> Result<(), AudioError> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::new(writer, spec)?;
    for &s in &signal.samples {
        w.write_sample((s * 32768.0).round().clamp(-32768.0, 32767.0) as i16)?;
    }
    w.finalize()?;
    Ok(())
}

pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<(), AudioError> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_wav_to(file, signal)
}

#[cfg(test)]
mod tests {
    use std::io::Cursor;

    use super::*;

    fn encode(samples: &[i16], spec: WavSpec) -> Vec<u8> {
        let mut buf = Cursor::new(Vec::new());
        let mut w = WavWriter::new(&mut buf, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        buf.into_inner()
    }

    fn mono16() -> WavSpec {
        WavSpec {
            channels: 1,
            sample_rate: SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        }
    }

    #[test]
    fn one_second_has_16000_samples() {
        let bytes = encode(&vec![0; 16_000], mono16());
        let s = read_wav_from(Cursor::new(bytes)).unwrap();
        assert_eq!(s.len(), 16_000);
        assert!(s.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaling_boundaries() {
        let bytes = encode(&[-32768, 32767, 16384], mono16());
        let s = read_wav_from(Cursor::new(bytes)).unwrap();
        assert_eq!(s.samples()[0], -1.0);
        assert!(s.samples()[1] < 1.0);
        assert_eq!(s.samples()[2], 0.5);
    }

    #[test]
    fn rejects_other_layouts() {
        let stereo = encode(
            &[0, 0],
            WavSpec {
                channels: 2,
                ..mono16()
            },
        );
        assert!(matches!(
            read_wav_from(Cursor::new(stereo)),
            Err(AudioError::Format(_))
        ));
        let rate = encode(
            &[0],
            WavSpec {
                sample_rate: 8000,
                ..mono16()
            },
        );
        assert!(matches!(
            read_wav_from(Cursor::new(rate)),
            Err(AudioError::Format(_))
        ));
    }

    #[test]
    fn truncated_file_is_a_parse_error() {
        let mut bytes = encode(&[1; 100], mono16());
        bytes.truncate(bytes.len() - 51);
        let r = read_wav_from(Cursor::new(bytes));
        assert!(matches!(r, Err(AudioError::Parse(_))), "{r:?}");
    }

    #[test]
    fn write_then_read_round_trips() {
        let samples: Vec<f64> = (0..50).map(|i| (i as f64 - 25.0) / 32768.0).collect();
        let sig = AudioSignal::new(samples, SAMPLE_RATE).unwrap();
        let mut buf = Cursor::new(Vec::new());
        write_wav_to(&mut buf, &sig).unwrap();
        buf.set_position(0);
        assert_eq!(read_wav_from(buf).unwrap(), sig);
    }

    #[test]
    fn empty_signal_rejected() {
        assert!(AudioSignal::new(vec![], SAMPLE_RATE).is_err());
        assert!(AudioSignal::new(vec![0.0], 0).is_err());
    }
}
