//! Modulation power spectrum: the 2D Fourier amplitude of short patches of
//! a log-magnitude Gaussian spectrogram, averaged over the recording and
//! cropped to a 41 × 77 grid (temporal × spectral modulation).
//!
//! Frames and patches are laid out symmetrically about the clip centre, so
//! reversing a waveform mirrors the temporal-modulation axis exactly.

use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioClip};
use crate::error::{Error, Result};

pub const TEMPORAL_BINS: usize = 41;
pub const SPECTRAL_BINS: usize = 77;
pub const FEATURE_LEN: usize = TEMPORAL_BINS * SPECTRAL_BINS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpsConfig {
    /// Spectrogram frame step (s).
    pub time_step: f64,
    /// Spectrogram frequency bin spacing (Hz).
    pub freq_step: f64,
    /// Gaussian window standard deviation in frequency (Hz); the time
    /// standard deviation is its dual, 1 / (2π σ_f).
    pub sigma_f: f64,
    /// Window truncation in standard deviations.
    pub truncation: f64,
    /// Log floor below the clip maximum (dB).
    pub floor_db: f64,
    pub patch_frames: usize,
    pub patch_step: usize,
    /// Subtract the patch mean before the 2D transform.
    pub mean_subtract: bool,
}

impl Default for MpsConfig {
    fn default() -> Self {
        Self {
            time_step: 0.001,
            freq_step: 50.0,
            sigma_f: 50.0,
            truncation: 3.0,
            floor_db: 80.0,
            patch_frames: 100,
            patch_step: 10,
            mean_subtract: true,
        }
    }
}

/// Log-magnitude spectrogram in dB, indexed `[frequency][frame]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub log_magnitude: Vec<Vec<f64>>,
    pub freq_step: f64,
    pub time_step: f64,
    /// Frame centre times (s).
    pub times: Vec<f64>,
}

impl Spectrogram {
    pub fn n_freqs(&self) -> usize {
        self.log_magnitude.len()
    }

    pub fn n_frames(&self) -> usize {
        self.times.len()
    }
}

pub fn gaussian_spectrogram(clip: &AudioClip, cfg: &MpsConfig) -> Result<Spectrogram> {
    let sr = clip.sample_rate() as f64;
    let n_fft = (sr / cfg.freq_step).round() as usize;
    let hop = (sr * cfg.time_step).round() as usize;
    if n_fft < 4 || hop == 0 || !(cfg.sigma_f > 0.0) {
        return Err(Error::invalid("spectrogram geometry is degenerate"));
    }
    let x = clip.samples();
    let sigma_t = sr / (2.0 * PI * cfg.sigma_f);
    // Window parity follows the clip length so frame centres can sit
    // symmetrically about the clip centre.
    let half = (cfg.truncation * sigma_t).floor() as usize;
    let win_len = (2 * half + 1 + (1 - x.len() % 2)).min(n_fft);
    if x.len() < win_len {
        return Err(Error::TooShort(format!(
            "{} samples, spectrogram window needs {win_len}",
            x.len()
        )));
    }
    let mid = (win_len as f64 - 1.0) / 2.0;
    let window: Vec<f64> = (0..win_len)
        .map(|i| (-0.5 * ((i as f64 - mid) / sigma_t).powi(2)).exp())
        .collect();

    let span = x.len() - win_len;
    let mut n_frames = span / hop + 1;
    // An even frame count keeps the patch grid symmetric as well.
    if n_frames % 2 == 1 && n_frames > 1 {
        n_frames -= 1;
    }
    let first = (span - (n_frames - 1) * hop) / 2;

    let n_bins = n_fft / 2;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut mags = vec![vec![0.0; n_frames]; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut peak = 0.0f64;
    for f in 0..n_frames {
        let start = first + f * hop;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for i in 0..win_len {
            buf[i].re = x[start + i] * window[i];
        }
        fft.process(&mut buf);
        for (k, row) in mags.iter_mut().enumerate() {
            let m = buf[k].norm();
            row[f] = m;
            peak = peak.max(m);
        }
    }
    let peak_db = 20.0 * peak.max(1e-300).log10();
    let floor = if peak > 0.0 { peak_db - cfg.floor_db } else { -cfg.floor_db };
    let log_magnitude = mags
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|m| if m > 0.0 { (20.0 * m.log10()).max(floor) } else { floor })
                .collect()
        })
        .collect();
    let times = (0..n_frames)
        .map(|f| (first + f * hop) as f64 / sr + mid / sr)
        .collect();
    Ok(Spectrogram {
        log_magnitude,
        freq_step: sr / n_fft as f64,
        time_step: hop as f64 / sr,
        times,
    })
}

/// Averaged modulation amplitude, indexed `[temporal][spectral]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpsMatrix {
    pub power: Vec<Vec<f64>>,
    /// Temporal modulation frequencies (Hz), −200 to 200.
    pub temporal_axis: Vec<f64>,
    /// Spectral modulation frequencies (cycles/kHz), 0 to 9.5.
    pub spectral_axis: Vec<f64>,
    pub n_windows: usize,
}

pub fn temporal_axis() -> Vec<f64> {
    let c = (TEMPORAL_BINS / 2) as i32;
    (-c..=c).map(|k| 10.0 * k as f64).collect()
}

pub fn spectral_axis() -> Vec<f64> {
    (0..SPECTRAL_BINS).map(|k| 0.125 * k as f64).collect()
}

/// Column names of the flattened vector, temporal-major.
pub fn feature_names() -> Vec<String> {
    let s_axis = spectral_axis();
    temporal_axis()
        .iter()
        .flat_map(|t| s_axis.iter().map(move |s| format!("mps_t{t:+.0}_s{s:.3}")))
        .collect()
}

/// Window count for a spectrogram of `frames` frames.
pub fn window_count(frames: usize, cfg: &MpsConfig) -> usize {
    if frames < cfg.patch_frames {
        0
    } else {
        (frames - cfg.patch_frames) / cfg.patch_step + 1
    }
}

pub fn modulation_power_spectrum(spec: &Spectrogram, cfg: &MpsConfig) -> Result<MpsMatrix> {
    let frames = spec.n_frames();
    let n_win = window_count(frames, cfg);
    if n_win == 0 {
        return Err(Error::TooShort(format!(
            "{frames} spectrogram frames, need {}",
            cfg.patch_frames
        )));
    }
    let t_len = cfg.patch_frames;
    let f_len = spec.n_freqs();
    let kt_max = (TEMPORAL_BINS / 2) as isize;
    if (t_len as isize) < 2 * kt_max + 1 || f_len < 2 * SPECTRAL_BINS {
        return Err(Error::invalid(
            "patch too small for the 41 × 77 modulation grid",
        ));
    }
    let slack = frames - t_len - (n_win - 1) * cfg.patch_step;
    let offset = slack / 2;

    let mut planner = FftPlanner::<f64>::new();
    let fft_t = planner.plan_fft_forward(t_len);
    let fft_f = planner.plan_fft_forward(f_len);

    let window = |w: usize| -> Vec<f64> {
        let start = offset + w * cfg.patch_step;
        let mean = if cfg.mean_subtract {
            spec.log_magnitude
                .iter()
                .map(|row| row[start..start + t_len].iter().sum::<f64>())
                .sum::<f64>()
                / (t_len * f_len) as f64
        } else {
            0.0
        };
        // Transform along time, keep the cropped temporal bins, then along
        // frequency.
        let mut cols = vec![vec![Complex::new(0.0, 0.0); f_len]; TEMPORAL_BINS];
        let mut buf = vec![Complex::new(0.0, 0.0); t_len];
        for (fi, row) in spec.log_magnitude.iter().enumerate() {
            for (b, v) in buf.iter_mut().zip(&row[start..start + t_len]) {
                *b = Complex::new(v - mean, 0.0);
            }
            fft_t.process(&mut buf);
            for (ci, kt) in (-kt_max..=kt_max).enumerate() {
                cols[ci][fi] = buf[kt.rem_euclid(t_len as isize) as usize];
            }
        }
        let mut out = Vec::with_capacity(FEATURE_LEN);
        for col in cols.iter_mut() {
            fft_f.process(col);
            out.extend(col[..SPECTRAL_BINS].iter().map(|c| c.norm()));
        }
        out
    };
    let per_window = crate::par::map_range(n_win, window);
    let mut acc = vec![0.0; FEATURE_LEN];
    for w in &per_window {
        for (a, v) in acc.iter_mut().zip(w) {
            *a += v;
        }
    }
    let scale = 1.0 / n_win as f64;
    let mut m = from_feature_vector(&acc.iter().map(|v| v * scale).collect::<Vec<_>>())?;
    m.n_windows = n_win;
    Ok(m)
}

/// Resamples to the analysis rate and computes the MPS.
pub fn compute_mps(clip: &AudioClip, cfg: &MpsConfig) -> Result<MpsMatrix> {
    let base = audio::resample(clip, audio::ANALYSIS_RATE)?;
    let spec = gaussian_spectrogram(&base, cfg)?;
    modulation_power_spectrum(&spec, cfg)
}

/// Temporal-major flattening: element `k` is `power[k / 77][k % 77]`.
pub fn mps_feature_vector(m: &MpsMatrix) -> Vec<f64> {
    m.power.iter().flatten().copied().collect()
}

pub fn from_feature_vector(v: &[f64]) -> Result<MpsMatrix> {
    if v.len() != FEATURE_LEN {
        return Err(Error::DimensionMismatch {
            expected: FEATURE_LEN,
            found: v.len(),
        });
    }
    Ok(MpsMatrix {
        power: v.chunks(SPECTRAL_BINS).map(<[f64]>::to_vec).collect(),
        temporal_axis: temporal_axis(),
        spectral_axis: spectral_axis(),
        n_windows: 0,
    })
}
