//! Waveform ingestion: WAV decoding, DC conditioning and band-limited
//! resampling onto the analysis rates.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical rate for pitch, perturbation, MFCC and MPS analysis.
pub const ANALYSIS_RATE: u32 = 16_000;

/// Rate used for the nonlinear measures (DFA, RPDE). Taken as 22 500 Hz.
pub const NONLINEAR_RATE: u32 = 22_500;

/// Mono waveform with its sample rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    /// Builds a clip, rejecting empty or non-finite input.
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.is_empty() {
            return Err(Error::invalid("clip has no samples"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("clip contains non-finite samples"));
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

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn rms(&self) -> f64 {
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64).sqrt()
    }
}

/// Decodes a PCM WAV file into a mono, DC-free clip scaled to [-1, 1].
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| classify_hound_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::NonPcm {
            path: path.to_path_buf(),
            reason: format!("{channels} channels (expected mono or stereo)"),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| classify_hound_error(path, e))?
        }
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| classify_hound_error(path, e))?,
        (format, bits) => {
            return Err(Error::NonPcm {
                path: path.to_path_buf(),
                reason: format!("{bits}-bit {format:?} samples"),
            })
        }
    };

    let mut mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if mono.is_empty() {
        return Err(Error::EmptyAudio {
            path: path.to_path_buf(),
        });
    }
    if mono.iter().any(|s| !s.is_finite()) {
        return Err(Error::UnreadableAudio {
            path: path.to_path_buf(),
            reason: "non-finite float samples".into(),
        });
    }

    let mean = mono.iter().sum::<f64>() / mono.len() as f64;
    for s in &mut mono {
        *s = (*s - mean).clamp(-1.0, 1.0);
    }
    AudioClip::new(mono, spec.sample_rate)
}

fn classify_hound_error(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::Unsupported | hound::Error::InvalidSampleFormat => Error::NonPcm {
            path: path.to_path_buf(),
            reason: err.to_string(),
        },
        other => Error::UnreadableAudio {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

/// Writes a mono 16-bit PCM WAV. Samples outside [-1, 1] are clipped.
pub fn write_wav_i16(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let path = path.as_ref();
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::invalid(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    for &s in &clip.samples {
        let code = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(code).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}

// Windowed-sinc design: Kaiser beta 8.6 gives roughly 85 dB stopband; the
// cutoff sits at 0.475 x min(rate) so content below 0.45 x min(rate) passes.
const KAISER_BETA: f64 = 8.6;
const ZERO_CROSSINGS: f64 = 96.0;
const CUTOFF_FRACTION: f64 = 0.475;

/// Band-limited resampling with a Kaiser-windowed sinc kernel.
///
/// Output length is `round(len * target / source)`. Resampling to the clip's
/// own rate returns the samples untouched.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if target_rate == 0 {
        return Err(Error::invalid("target rate must be positive"));
    }
    let src = clip.sample_rate as u64;
    let dst = target_rate as u64;
    if src == dst {
        return Ok(clip.clone());
    }

    let g = gcd(src, dst);
    let up = dst / g;
    let down = src / g;

    // Cutoff in cycles per input sample.
    let fc = CUTOFF_FRACTION * (dst.min(src) as f64) / src as f64;
    let half_width = ZERO_CROSSINGS / (2.0 * fc);
    let reach = half_width.floor() as i64;
    let i0_beta = bessel_i0(KAISER_BETA);

    let kernel = |d: f64| -> f64 {
        if d.abs() >= half_width {
            return 0.0;
        }
        let r = d / half_width;
        let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
        2.0 * fc * sinc(2.0 * fc * d) * window
    };

    // One tap table per output phase when the phase count is manageable.
    let taps_per_phase = (2 * reach + 2) as usize;
    let tables: Option<Vec<Vec<f64>>> = (up <= 4096).then(|| {
        (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                (0..taps_per_phase)
                    .map(|j| {
                        let k = j as i64 - reach;
                        kernel(frac - k as f64)
                    })
                    .collect()
            })
            .collect()
    });

    let x = clip.samples();
    let n_in = x.len() as i64;
    let n_out = ((x.len() as u64 * up + down / 2) / down).max(1) as usize;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out as u64 {
        let num = n * down;
        let base = (num / up) as i64;
        let phase = (num % up) as usize;
        let mut acc = 0.0;
        match &tables {
            Some(tables) => {
                let table = &tables[phase];
                let lo = base - reach;
                let skip = (-lo).max(0) as usize;
                let start = lo.max(0);
                let end = (lo + table.len() as i64).min(n_in);
                if end > start {
                    let xs = &x[start as usize..end as usize];
                    acc = xs.iter().zip(&table[skip..]).map(|(a, b)| a * b).sum();
                }
            }
            None => {
                let t = num as f64 / up as f64;
                for k in (base - reach - 1)..=(base + reach + 1) {
                    if k >= 0 && k < n_in {
                        acc += x[k as usize] * kernel(t - k as f64);
                    }
                }
            }
        }
        out.push(acc);
    }
    AudioClip::new(out, target_rate)
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
