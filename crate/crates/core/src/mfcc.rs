//! Mel-cepstral front end: framing, mel filterbank, DCT and regression
//! deltas.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    pub frame_len: f64,
    pub frame_hop: f64,
    pub n_mels: usize,
    /// Cepstral coefficients kept, starting at c1 (c0 is dropped).
    pub n_coeffs: usize,
    pub preemphasis: f64,
    /// Half-width of the delta regression window in frames.
    pub delta_window: usize,
    pub low_freq: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub high_freq: Option<f64>,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            frame_len: 0.025,
            frame_hop: 0.010,
            n_mels: 23,
            n_coeffs: 13,
            preemphasis: 0.97,
            delta_window: 2,
            low_freq: 20.0,
            high_freq: None,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

#[cfg(test)]
fn mel_to_hz(m: f64) -> f64 {
    700.0 * ((m / 1127.0).exp() - 1.0)
}

/// Triangular filters on the mel scale, one row per filter over the
/// `n_fft / 2 + 1` power bins.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: f64, low: f64, high: f64) -> Vec<Vec<f64>> {
    let n_bins = n_fft / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(low), hz_to_mel(high));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64)
        .collect();
    (0..n_mels)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..n_bins)
                .map(|b| {
                    let mel = hz_to_mel(b as f64 * sample_rate / n_fft as f64);
                    if mel > l && mel < r {
                        if mel <= c {
                            (mel - l) / (c - l)
                        } else {
                            (r - mel) / (r - c)
                        }
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Frame-major cepstra (`frames × n_coeffs`) and frame centre times.
pub struct Cepstra {
    pub coeffs: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

pub fn mfcc(clip: &AudioClip, cfg: &MfccConfig) -> Result<Cepstra> {
    let sr = clip.sample_rate() as f64;
    let win = (cfg.frame_len * sr).round() as usize;
    let hop = (cfg.frame_hop * sr).round() as usize;
    if win < 2 || hop == 0 {
        return Err(Error::invalid("MFCC frame geometry is degenerate"));
    }
    if cfg.n_coeffs + 1 > cfg.n_mels {
        return Err(Error::invalid("more cepstral coefficients than mel bands"));
    }
    let x = clip.samples();
    if x.len() < win {
        return Err(Error::TooShort("clip shorter than one MFCC frame".into()));
    }
    let n_fft = win.next_power_of_two();
    let high = cfg.high_freq.unwrap_or(sr / 2.0).min(sr / 2.0);
    let bank = mel_filterbank(cfg.n_mels, n_fft, sr, cfg.low_freq, high);
    let window: Vec<f64> = (0..win)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (win - 1) as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let n_frames = (x.len() - win) / hop + 1;
    let mut coeffs = Vec::with_capacity(n_frames);
    let mut times = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];

    for f in 0..n_frames {
        let frame = &x[f * hop..f * hop + win];
        let mean = frame.iter().sum::<f64>() / win as f64;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for i in 0..win {
            let prev = if i == 0 { frame[0] } else { frame[i - 1] } - mean;
            let cur = frame[i] - mean;
            buf[i].re = (cur - cfg.preemphasis * prev) * window[i];
        }
        fft.process(&mut buf);
        let power: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        let log_mel: Vec<f64> = bank
            .iter()
            .map(|filt| {
                let e: f64 = filt.iter().zip(&power).map(|(w, p)| w * p).sum();
                e.max(1e-10).ln()
            })
            .collect();
        coeffs.push(dct_ii(&log_mel, 1, cfg.n_coeffs));
        times.push((f * hop) as f64 / sr + cfg.frame_len / 2.0);
    }
    Ok(Cepstra { coeffs, times })
}

/// Orthonormal DCT-II coefficients `first..first + count`.
fn dct_ii(input: &[f64], first: usize, count: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (first..first + count)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * input
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Regression deltas over ±`width` frames with edge replication.
pub fn deltas(frames: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    if frames.is_empty() {
        return Vec::new();
    }
    let last = frames.len() as isize - 1;
    let dim = frames[0].len();
    let norm: f64 = 2.0 * (1..=width).map(|n| (n * n) as f64).sum::<f64>();
    (0..frames.len() as isize)
        .map(|t| {
            (0..dim)
                .map(|d| {
                    (1..=width as isize)
                        .map(|n| {
                            let fwd = &frames[(t + n).clamp(0, last) as usize];
                            let back = &frames[(t - n).clamp(0, last) as usize];
                            n as f64 * (fwd[d] - back[d])
                        })
                        .sum::<f64>()
                        / norm
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_round_trip() {
        for f in [0.0, 100.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
    }

    #[test]
    fn filterbank_peaks_are_unity_and_ordered() {
        let bank = mel_filterbank(23, 512, 16_000.0, 20.0, 8000.0);
        assert_eq!(bank.len(), 23);
        let mut prev = 0;
        for filt in &bank {
            let (argmax, max) = filt
                .iter()
                .enumerate()
                .fold((0, 0.0), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
            assert!(max > 0.5 && max <= 1.0);
            assert!(argmax >= prev);
            prev = argmax;
        }
    }

    #[test]
    fn dct_of_constant_has_only_dc() {
        let c = dct_ii(&[3.0; 23], 0, 13);
        assert!((c[0] - 3.0 * 23f64.sqrt()).abs() < 1e-12);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn deltas_of_linear_ramp_are_slope() {
        let frames: Vec<Vec<f64>> = (0..10).map(|t| vec![2.0 * t as f64]).collect();
        let d = deltas(&frames, 2);
        for row in &d[2..8] {
            assert!((row[0] - 2.0).abs() < 1e-12);
        }
    }
}
