//! The fifteen sustained-phonation features across seven deficit
//! dimensions. Features that cannot be computed on a recording are
//! reported as `None` with a reason, never as an error, so cohort tables
//! keep one row per recording.

use std::collections::BTreeMap;
use std::fmt;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioClip};
use crate::error::{Error, Result};
use crate::mfcc::{self, MfccConfig};
use crate::nonlinear::{self, DfaConfig, RpdeConfig};
use crate::pitch::{self, PitchConfig, PitchTrack, PulseSequence, VoicedSegment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    AirflowInsufficiency,
    Aperiodicity,
    IrregularVibration,
    SignalPerturbation,
    IncreasedNoise,
    VocalTremor,
    ArticulatoryDeficiency,
}

impl Dimension {
    pub const COUNT: usize = 7;

    pub fn key(self) -> &'static str {
        match self {
            Dimension::AirflowInsufficiency => "airflow_insufficiency",
            Dimension::Aperiodicity => "aperiodicity",
            Dimension::IrregularVibration => "irregular_vibration",
            Dimension::SignalPerturbation => "signal_perturbation",
            Dimension::IncreasedNoise => "increased_noise",
            Dimension::VocalTremor => "vocal_tremor",
            Dimension::ArticulatoryDeficiency => "articulatory_deficiency",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Mpt,
    FirstBreak,
    NVoiceBreaks,
    DegPitchBreaks,
    DegVocalArrests,
    F0Sd,
    Rpde,
    JitterLocal,
    ShimmerLocal,
    Hnr,
    Dfa,
    Ftri,
    Atri,
    MeanSdMfcc,
    MeanSdDeltaMfcc,
}

impl Feature {
    pub const ALL: [Feature; 15] = [
        Feature::Mpt,
        Feature::FirstBreak,
        Feature::NVoiceBreaks,
        Feature::DegPitchBreaks,
        Feature::DegVocalArrests,
        Feature::F0Sd,
        Feature::Rpde,
        Feature::JitterLocal,
        Feature::ShimmerLocal,
        Feature::Hnr,
        Feature::Dfa,
        Feature::Ftri,
        Feature::Atri,
        Feature::MeanSdMfcc,
        Feature::MeanSdDeltaMfcc,
    ];

    /// The thirteen features used by the models (tremor indices excluded).
    pub fn model_set() -> impl Iterator<Item = Feature> {
        Self::ALL.into_iter().filter(|f| !f.is_tremor())
    }

    pub fn is_tremor(self) -> bool {
        matches!(self, Feature::Ftri | Feature::Atri)
    }

    pub fn key(self) -> &'static str {
        match self {
            Feature::Mpt => "mpt",
            Feature::FirstBreak => "first_break",
            Feature::NVoiceBreaks => "n_voice_breaks",
            Feature::DegPitchBreaks => "deg_pitch_breaks",
            Feature::DegVocalArrests => "deg_vocal_arrests",
            Feature::F0Sd => "f0_sd",
            Feature::Rpde => "rpde",
            Feature::JitterLocal => "jitter_local",
            Feature::ShimmerLocal => "shimmer_local",
            Feature::Hnr => "hnr",
            Feature::Dfa => "dfa",
            Feature::Ftri => "ftri",
            Feature::Atri => "atri",
            Feature::MeanSdMfcc => "mean_sd_mfcc",
            Feature::MeanSdDeltaMfcc => "mean_sd_delta_mfcc",
        }
    }

    pub fn from_key(key: &str) -> Option<Feature> {
        Self::ALL.into_iter().find(|f| f.key() == key)
    }

    pub fn label(self) -> &'static str {
        match self {
            Feature::Mpt => "Maximum Phonation Time",
            Feature::FirstBreak => "First Occurrence of Voice Break",
            Feature::NVoiceBreaks => "Number of Voice Breaks",
            Feature::DegPitchBreaks => "Degree of Pitch Breaks",
            Feature::DegVocalArrests => "Degree of Vocal Arrests",
            Feature::F0Sd => "F0 SD",
            Feature::Rpde => "Recurrence Period Density Entropy",
            Feature::JitterLocal => "Jitter (local)",
            Feature::ShimmerLocal => "Shimmer (local)",
            Feature::Hnr => "Harmonics to Noise Ratio",
            Feature::Dfa => "Detrended Fluctuation Analysis",
            Feature::Ftri => "Frequency Tremor Intensity Index",
            Feature::Atri => "Amplitude Tremor Intensity Index",
            Feature::MeanSdMfcc => "Mean of SD of MFCC",
            Feature::MeanSdDeltaMfcc => "Mean of SD of Delta MFCC",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Feature::Mpt | Feature::FirstBreak => "s",
            Feature::NVoiceBreaks => "count",
            Feature::DegPitchBreaks
            | Feature::DegVocalArrests
            | Feature::JitterLocal
            | Feature::ShimmerLocal
            | Feature::Ftri
            | Feature::Atri => "%",
            Feature::F0Sd => "Hz",
            Feature::Hnr => "dB",
            Feature::Rpde | Feature::Dfa | Feature::MeanSdMfcc | Feature::MeanSdDeltaMfcc => "",
        }
    }

    pub fn dimension(self) -> Dimension {
        match self {
            Feature::Mpt | Feature::FirstBreak => Dimension::AirflowInsufficiency,
            Feature::NVoiceBreaks | Feature::DegPitchBreaks | Feature::DegVocalArrests => {
                Dimension::Aperiodicity
            }
            Feature::F0Sd | Feature::Rpde => Dimension::IrregularVibration,
            Feature::JitterLocal | Feature::ShimmerLocal => Dimension::SignalPerturbation,
            Feature::Hnr | Feature::Dfa => Dimension::IncreasedNoise,
            Feature::Ftri | Feature::Atri => Dimension::VocalTremor,
            Feature::MeanSdMfcc | Feature::MeanSdDeltaMfcc => Dimension::ArticulatoryDeficiency,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Per-recording phonatory feature vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhonatoryFeatures {
    pub mpt: f64,
    /// Start of the earliest voice break; `None` for break-free phonation.
    pub first_break: Option<f64>,
    pub n_voice_breaks: u32,
    pub deg_pitch_breaks: f64,
    pub deg_vocal_arrests: f64,
    pub f0_sd: Option<f64>,
    pub rpde: Option<f64>,
    pub jitter_local: Option<f64>,
    pub shimmer_local: Option<f64>,
    pub hnr: Option<f64>,
    pub dfa: Option<f64>,
    pub ftri: Option<f64>,
    pub atri: Option<f64>,
    pub mean_sd_mfcc: Option<f64>,
    pub mean_sd_delta_mfcc: Option<f64>,
    /// End of the last voiced segment (0 without phonation); stands in for
    /// `first_break` when no break occurs.
    pub phonation_end: f64,
    /// Reasons for every feature reported as not computable.
    pub not_computable: BTreeMap<Feature, String>,
}

impl PhonatoryFeatures {
    /// Table value of a feature. `first_break` falls back to the end of
    /// phonation when no break occurred.
    pub fn get(&self, feature: Feature) -> Option<f64> {
        match feature {
            Feature::Mpt => Some(self.mpt),
            Feature::FirstBreak => Some(self.first_break.unwrap_or(self.phonation_end)),
            Feature::NVoiceBreaks => Some(self.n_voice_breaks as f64),
            Feature::DegPitchBreaks => Some(self.deg_pitch_breaks),
            Feature::DegVocalArrests => Some(self.deg_vocal_arrests),
            Feature::F0Sd => self.f0_sd,
            Feature::Rpde => self.rpde,
            Feature::JitterLocal => self.jitter_local,
            Feature::ShimmerLocal => self.shimmer_local,
            Feature::Hnr => self.hnr,
            Feature::Dfa => self.dfa,
            Feature::Ftri => self.ftri,
            Feature::Atri => self.atri,
            Feature::MeanSdMfcc => self.mean_sd_mfcc,
            Feature::MeanSdDeltaMfcc => self.mean_sd_delta_mfcc,
        }
    }

    /// Sets a feature from its table value (inverse of [`get`](Self::get)
    /// for everything but the `first_break` fallback).
    pub fn set(&mut self, feature: Feature, value: Option<f64>) {
        match feature {
            Feature::Mpt => self.mpt = value.unwrap_or(0.0),
            Feature::FirstBreak => self.first_break = value,
            Feature::NVoiceBreaks => self.n_voice_breaks = value.unwrap_or(0.0).round() as u32,
            Feature::DegPitchBreaks => self.deg_pitch_breaks = value.unwrap_or(0.0),
            Feature::DegVocalArrests => self.deg_vocal_arrests = value.unwrap_or(0.0),
            Feature::F0Sd => self.f0_sd = value,
            Feature::Rpde => self.rpde = value,
            Feature::JitterLocal => self.jitter_local = value,
            Feature::ShimmerLocal => self.shimmer_local = value,
            Feature::Hnr => self.hnr = value,
            Feature::Dfa => self.dfa = value,
            Feature::Ftri => self.ftri = value,
            Feature::Atri => self.atri = value,
            Feature::MeanSdMfcc => self.mean_sd_mfcc = value,
            Feature::MeanSdDeltaMfcc => self.mean_sd_delta_mfcc = value,
        }
    }

    pub fn is_computable(&self, feature: Feature) -> bool {
        self.get(feature).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoiceBreakConfig {
    /// Shortest unvoiced gap counted as a voice break (s).
    pub break_min_gap: f64,
    /// Shortest gap counted towards the degree of vocal arrests (s).
    pub arrest_min: f64,
    /// Deviation from the running median, in octaves, that marks a pitch break.
    pub pitch_break_octaves: f64,
    /// Running-median length in frames.
    pub median_frames: usize,
}

impl Default for VoiceBreakConfig {
    fn default() -> Self {
        Self {
            break_min_gap: 0.060,
            arrest_min: 0.090,
            pitch_break_octaves: 0.5,
            median_frames: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TremorConfig {
    pub min_voiced: f64,
    pub band_low: f64,
    pub band_high: f64,
}

impl Default for TremorConfig {
    fn default() -> Self {
        Self {
            min_voiced: 1.5,
            band_low: 1.5,
            band_high: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub pitch: PitchConfig,
    pub breaks: VoiceBreakConfig,
    pub tremor: TremorConfig,
    pub mfcc: MfccConfig,
    pub dfa: DfaConfig,
    pub rpde: RpdeConfig,
    pub rates: AnalysisRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisRates {
    pub analysis: u32,
    pub nonlinear: u32,
}

impl Default for AnalysisRates {
    fn default() -> Self {
        Self {
            analysis: audio::ANALYSIS_RATE,
            nonlinear: audio::NONLINEAR_RATE,
        }
    }
}

/// Total voiced duration.
pub fn maximum_phonation_time(segments: &[VoicedSegment]) -> f64 {
    segments.iter().map(VoicedSegment::duration).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceBreaks {
    pub first_break: Option<f64>,
    pub n_breaks: u32,
    pub deg_pitch_breaks: f64,
    pub deg_vocal_arrests: f64,
}

pub fn voice_break_analysis(
    track: &PitchTrack,
    segments: &[VoicedSegment],
    clip_duration: f64,
    cfg: &VoiceBreakConfig,
) -> VoiceBreaks {
    let (Some(first), Some(last)) = (segments.first(), segments.last()) else {
        return VoiceBreaks {
            first_break: None,
            n_breaks: 0,
            deg_pitch_breaks: 0.0,
            deg_vocal_arrests: 0.0,
        };
    };
    let span = last.end - first.start;
    let gaps: Vec<(f64, f64)> = segments
        .windows(2)
        .map(|w| (w[0].end, w[1].start - w[0].end))
        .filter(|&(_, len)| len >= cfg.break_min_gap - 1e-9)
        .collect();
    let arrests: f64 = gaps
        .iter()
        .filter(|&&(_, len)| len >= cfg.arrest_min - 1e-9)
        .map(|&(_, len)| len)
        .sum();

    // Pitch breaks: voiced frames far from the running median of their run.
    let mut flagged = 0usize;
    let mut i = 0;
    while i < track.len() {
        if !track.voiced[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < track.len() && track.voiced[i] {
            i += 1;
        }
        let run = &track.f0[start..i];
        let half = cfg.median_frames / 2;
        for (k, &f) in run.iter().enumerate() {
            let lo = k.saturating_sub(half);
            let hi = (k + half + 1).min(run.len());
            let mut window = run[lo..hi].to_vec();
            window.sort_by(f64::total_cmp);
            let median = window[window.len() / 2];
            if (f / median).log2().abs() >= cfg.pitch_break_octaves {
                flagged += 1;
            }
        }
    }
    let pct = |d: f64| if span > 0.0 { (100.0 * d / span).clamp(0.0, 100.0) } else { 0.0 };
    VoiceBreaks {
        first_break: gaps.first().map(|&(s, _)| s.clamp(0.0, clip_duration)),
        n_breaks: gaps.len() as u32,
        deg_pitch_breaks: pct(flagged as f64 * track.hop),
        deg_vocal_arrests: pct(arrests),
    }
}

/// Sample standard deviation of F0 over voiced frames.
pub fn f0_sd(track: &PitchTrack) -> Result<f64> {
    let values: Vec<f64> = track.voiced_f0().collect();
    sample_sd(&values).ok_or_else(|| Error::not_computable("fewer than 2 voiced frames"))
}

fn sample_sd(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// `100 × mean|v_i − v_{i−1}| / mean(v)` over consecutive same-group values.
pub fn local_perturbation(values: &[f64], groups: &[usize]) -> Option<f64> {
    let diffs: Vec<f64> = (1..values.len())
        .filter(|&i| groups[i] == groups[i - 1])
        .map(|i| (values[i] - values[i - 1]).abs())
        .collect();
    if diffs.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean <= 0.0 {
        return None;
    }
    Some(100.0 * diffs.iter().sum::<f64>() / diffs.len() as f64 / mean)
}

pub fn jitter_local(pulses: &PulseSequence) -> Result<f64> {
    local_perturbation(&pulses.periods, &pulses.period_segments)
        .ok_or_else(|| Error::not_computable("no segment with three consecutive pulses"))
}

pub fn shimmer_local(pulses: &PulseSequence) -> Result<f64> {
    // Same precondition as jitter: at least one pair of consecutive periods.
    jitter_local(pulses)?;
    local_perturbation(&pulses.amplitudes, &pulses.segments)
        .ok_or_else(|| Error::not_computable("no segment with three consecutive pulses"))
}

/// Mean over voiced frames of `10·log10(r / (1 − r))`, with `r` the
/// normalised autocorrelation at the tracked pitch lag, each frame clipped
/// to [−10, 40] dB.
pub fn hnr(clip: &AudioClip, track: &PitchTrack) -> Result<f64> {
    let sr = clip.sample_rate() as f64;
    let x = clip.samples();
    let win = (track.frame_len * sr).round() as usize;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..track.len() {
        if !track.voiced[i] {
            continue;
        }
        let start = ((track.times[i] * sr).round() as usize).saturating_sub(win / 2);
        let lag = sr / track.f0[i];
        let base = lag.round() as usize;
        let r = |l: usize| nccf(x, start, win, l);
        let (_, peak) = pitch::parabolic_peak(r(base - 1), r(base), r(base + 1));
        let peak = peak.max(r(base));
        let db = if peak >= 1.0 {
            40.0
        } else if peak <= 0.0 {
            -10.0
        } else {
            (10.0 * (peak / (1.0 - peak)).log10()).clamp(-10.0, 40.0)
        };
        total += db;
        count += 1;
    }
    if count == 0 {
        return Err(Error::not_computable("no voiced frames"));
    }
    Ok(total / count as f64)
}

fn nccf(x: &[f64], start: usize, win: usize, lag: usize) -> f64 {
    let (mut num, mut e0, mut e1) = (0.0, 0.0, 0.0);
    for n in start..(start + win).min(x.len()) {
        let a = x[n];
        let b = x.get(n + lag).copied().unwrap_or(0.0);
        num += a * b;
        e0 += a * a;
        e1 += b * b;
    }
    let d = (e0 * e1).sqrt();
    if d > 0.0 {
        num / d
    } else {
        0.0
    }
}

/// RPDE of a clip on the nonlinear-analysis branch.
pub fn rpde(clip: &AudioClip, cfg: &RpdeConfig) -> Result<f64> {
    nonlinear::rpde(clip.samples(), cfg)
}

/// DFA exponent of a clip, normalised as α / (1 + α).
pub fn dfa(clip: &AudioClip, cfg: &DfaConfig) -> Result<f64> {
    nonlinear::dfa(clip.samples(), cfg)
}

/// Pitch-synchronous RMS per voiced frame (two local periods), 0 elsewhere.
pub fn amplitude_contour(clip: &AudioClip, track: &PitchTrack) -> Vec<f64> {
    let sr = clip.sample_rate() as f64;
    let x = clip.samples();
    (0..track.len())
        .map(|i| {
            if !track.voiced[i] {
                return 0.0;
            }
            let len = (2.0 * sr / track.f0[i]).round() as usize;
            let centre = (track.times[i] * sr).round() as usize;
            let lo = centre.saturating_sub(len / 2);
            let hi = (lo + len).min(x.len());
            if hi <= lo {
                return 0.0;
            }
            (x[lo..hi].iter().map(|s| s * s).sum::<f64>() / (hi - lo) as f64).sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TremorEstimate {
    pub index: f64,
    /// Frequency of the strongest in-band autocorrelation peak (Hz).
    pub frequency: Option<f64>,
    pub correlation: f64,
    /// Band-limited modulation depth relative to the contour mean.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TremorIndices {
    pub ftri: std::result::Result<TremorEstimate, String>,
    pub atri: std::result::Result<TremorEstimate, String>,
}

/// Frequency and amplitude tremor intensity on the longest voiced run.
pub fn tremor_indices(track: &PitchTrack, envelope: &[f64], cfg: &TremorConfig) -> TremorIndices {
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < track.len() {
        if !track.voiced[i] {
            i += 1;
            continue;
        }
        let s = i;
        while i < track.len() && track.voiced[i] {
            i += 1;
        }
        if best.is_none_or(|(bs, be)| i - s > be - bs) {
            best = Some((s, i));
        }
    }
    let gate = |msg: String| TremorIndices {
        ftri: Err(msg.clone()),
        atri: Err(msg),
    };
    let Some((s, e)) = best else {
        return gate("no voiced frames".into());
    };
    let run_secs = (e - s) as f64 * track.hop;
    if run_secs + 1e-9 < cfg.min_voiced {
        return gate(format!(
            "longest voiced run {run_secs:.2} s is shorter than {:.2} s",
            cfg.min_voiced
        ));
    }
    let rate = 1.0 / track.hop;
    TremorIndices {
        ftri: contour_tremor(&track.f0[s..e], rate, cfg),
        atri: if envelope.len() >= e {
            contour_tremor(&envelope[s..e], rate, cfg)
        } else {
            Err("amplitude contour shorter than the pitch track".into())
        },
    }
}

fn contour_tremor(
    contour: &[f64],
    rate: f64,
    cfg: &TremorConfig,
) -> std::result::Result<TremorEstimate, String> {
    let n = contour.len();
    let mean = contour.iter().sum::<f64>() / n as f64;
    if !(mean > 0.0) {
        return Err("contour has no positive mean".into());
    }
    // Remove the least-squares line.
    let points: Vec<(f64, f64)> = contour.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
    let slope = nonlinear::least_squares_slope(&points);
    let tc = (n as f64 - 1.0) / 2.0;
    let detrended: Vec<f64> = contour
        .iter()
        .enumerate()
        .map(|(i, &v)| v - mean - slope * (i as f64 - tc))
        .collect();

    let lag_lo = (rate / cfg.band_high).floor().max(1.0) as usize;
    let lag_hi = ((rate / cfg.band_low).ceil() as usize).min(n.saturating_sub(2));
    if lag_hi <= lag_lo + 1 {
        return Err("contour too short for the tremor band".into());
    }
    let ac: Vec<f64> = (0..=lag_hi + 1).map(|k| lagged_correlation(&detrended, k)).collect();
    let peaks: Vec<usize> = (lag_lo.max(1)..=lag_hi)
        .filter(|&k| ac[k] > 0.0 && ac[k] >= ac[k - 1] && ac[k] > ac[k + 1])
        .collect();
    // Multiples of the tremor period correlate almost as strongly as the
    // period itself; take the shortest lag close to the strongest peak.
    let strongest = peaks.iter().map(|&k| ac[k]).fold(0.0, f64::max);
    let peak = peaks.into_iter().find(|&k| ac[k] >= 0.9 * strongest);

    let band = band_pass(&detrended, rate, cfg.band_low, cfg.band_high);
    let rms = (band.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    // Sinusoid-equivalent half peak-to-trough amplitude.
    let depth = std::f64::consts::SQRT_2 * rms / mean;

    match peak {
        Some(k) => {
            let (offset, value) = pitch::parabolic_peak(ac[k - 1], ac[k], ac[k + 1]);
            let corr = value.clamp(0.0, 1.0);
            Ok(TremorEstimate {
                index: 100.0 * depth * corr,
                frequency: Some(rate / (k as f64 + offset)),
                correlation: corr,
                depth,
            })
        }
        None => Ok(TremorEstimate {
            index: 0.0,
            frequency: None,
            correlation: 0.0,
            depth,
        }),
    }
}

fn lagged_correlation(x: &[f64], k: usize) -> f64 {
    if k >= x.len() {
        return 0.0;
    }
    let (mut num, mut e0, mut e1) = (0.0, 0.0, 0.0);
    for i in 0..x.len() - k {
        num += x[i] * x[i + k];
        e0 += x[i] * x[i];
        e1 += x[i + k] * x[i + k];
    }
    let d = (e0 * e1).sqrt();
    if d > 0.0 {
        num / d
    } else {
        0.0
    }
}

/// Brick-wall FFT band-pass.
fn band_pass(x: &[f64], rate: f64, lo: f64, hi: f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k) as f64;
        let f = bin * rate / n as f64;
        if f < lo || f > hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfccStats {
    pub mean_sd_mfcc: f64,
    pub mean_sd_delta_mfcc: f64,
    pub voiced_frames: usize,
}

/// Mean over c1..c13 of the per-coefficient standard deviation across
/// voiced frames, for the cepstra and their deltas.
pub fn mfcc_stats(clip: &AudioClip, track: &PitchTrack, cfg: &MfccConfig) -> Result<MfccStats> {
    let cep = mfcc::mfcc(clip, cfg)?;
    let delta = mfcc::deltas(&cep.coeffs, cfg.delta_window);
    let voiced: Vec<usize> = cep
        .times
        .iter()
        .enumerate()
        .filter(|(_, &t)| !track.is_empty() && track.voiced[track.frame_at(t)])
        .map(|(i, _)| i)
        .collect();
    if voiced.len() < 5 {
        return Err(Error::not_computable(format!(
            "{} voiced MFCC frames, need at least 5",
            voiced.len()
        )));
    }
    let mean_sd = |rows: &[Vec<f64>]| -> f64 {
        let dim = rows[0].len();
        (0..dim)
            .map(|d| {
                let col: Vec<f64> = voiced.iter().map(|&i| rows[i][d]).collect();
                sample_sd(&col).unwrap_or(0.0)
            })
            .sum::<f64>()
            / dim as f64
    };
    Ok(MfccStats {
        mean_sd_mfcc: mean_sd(&cep.coeffs),
        mean_sd_delta_mfcc: mean_sd(&delta),
        voiced_frames: voiced.len(),
    })
}

/// Intermediate products of [`extract_all`], kept for export and plotting.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub features: PhonatoryFeatures,
    pub track: PitchTrack,
    pub segments: Vec<VoicedSegment>,
    pub pulses: PulseSequence,
    pub tremor: TremorIndices,
}

/// Computes every phonatory feature of a clip at any input rate.
pub fn extract_all(clip: &AudioClip, cfg: &ExtractionConfig) -> Result<PhonatoryFeatures> {
    extract_detailed(clip, cfg).map(|e| e.features)
}

pub fn extract_detailed(clip: &AudioClip, cfg: &ExtractionConfig) -> Result<Extraction> {
    let base = audio::resample(clip, cfg.rates.analysis)?;
    let track = pitch::track_pitch(&base, &cfg.pitch)?;
    let segments = pitch::voiced_segments(&track, cfg.breaks.break_min_gap.max(track.hop))?;
    let segments = pitch::refine_segments(&base, &segments, track.frame_len / 2.0);
    let breaks = voice_break_analysis(&track, &segments, base.duration(), &cfg.breaks);
    let pulses = pitch::extract_pulses(&base, &track, &cfg.pitch);

    let mut feats = PhonatoryFeatures {
        mpt: maximum_phonation_time(&segments),
        first_break: breaks.first_break,
        n_voice_breaks: breaks.n_breaks,
        deg_pitch_breaks: breaks.deg_pitch_breaks,
        deg_vocal_arrests: breaks.deg_vocal_arrests,
        phonation_end: segments.last().map_or(0.0, |s| s.end),
        ..PhonatoryFeatures::default()
    };
    let record = |feats: &mut PhonatoryFeatures, feature: Feature, value: Result<f64>| match value {
        Ok(v) => feats.set(feature, Some(v)),
        Err(e) => {
            feats.set(feature, None);
            feats.not_computable.insert(feature, e.to_string());
        }
    };

    record(&mut feats, Feature::F0Sd, f0_sd(&track));
    record(&mut feats, Feature::JitterLocal, jitter_local(&pulses));
    record(&mut feats, Feature::ShimmerLocal, shimmer_local(&pulses));
    record(&mut feats, Feature::Hnr, hnr(&base, &track));

    // Nonlinear measures on the phonation span of the higher-rate branch.
    let nonlinear_clip = audio::resample(clip, cfg.rates.nonlinear)?;
    let span = match (segments.first(), segments.last()) {
        (Some(a), Some(b)) => {
            let sr = nonlinear_clip.sample_rate() as f64;
            let lo = ((a.start * sr).floor() as usize).min(nonlinear_clip.len());
            let hi = ((b.end * sr).ceil() as usize).min(nonlinear_clip.len());
            &nonlinear_clip.samples()[lo..hi.max(lo)]
        }
        _ => nonlinear_clip.samples(),
    };
    record(&mut feats, Feature::Rpde, nonlinear::rpde(span, &cfg.rpde));
    record(&mut feats, Feature::Dfa, nonlinear::dfa(span, &cfg.dfa));

    let envelope = amplitude_contour(&base, &track);
    let tremor = tremor_indices(&track, &envelope, &cfg.tremor);
    let as_result = |r: &std::result::Result<TremorEstimate, String>| match r {
        Ok(t) => Ok(t.index),
        Err(msg) => Err(Error::not_computable(msg.clone())),
    };
    record(&mut feats, Feature::Ftri, as_result(&tremor.ftri));
    record(&mut feats, Feature::Atri, as_result(&tremor.atri));

    match mfcc_stats(&base, &track, &cfg.mfcc) {
        Ok(m) => {
            feats.mean_sd_mfcc = Some(m.mean_sd_mfcc);
            feats.mean_sd_delta_mfcc = Some(m.mean_sd_delta_mfcc);
        }
        Err(e) => {
            for f in [Feature::MeanSdMfcc, Feature::MeanSdDeltaMfcc] {
                feats.not_computable.insert(f, e.to_string());
            }
        }
    }

    Ok(Extraction {
        features: feats,
        track,
        segments,
        pulses,
        tremor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(f0: &[f64]) -> PitchTrack {
        PitchTrack {
            times: (0..f0.len()).map(|i| (i as f64 + 0.5) * 0.01).collect(),
            f0: f0.to_vec(),
            voiced: f0.iter().map(|&f| f > 0.0).collect(),
            nccf: vec![0.9; f0.len()],
            hop: 0.01,
            frame_len: 0.04,
        }
    }

    fn seg(start: f64, end: f64) -> VoicedSegment {
        VoicedSegment { start, end }
    }

    #[test]
    fn seven_dimensions_cover_fifteen_features() {
        let dims: std::collections::BTreeSet<_> =
            Feature::ALL.iter().map(|f| f.dimension()).collect();
        assert_eq!(dims.len(), Dimension::COUNT);
        assert_eq!(Feature::model_set().count(), 13);
        for f in Feature::ALL {
            assert_eq!(Feature::from_key(f.key()), Some(f));
        }
    }

    #[test]
    fn mpt_is_additive() {
        assert_eq!(maximum_phonation_time(&[seg(0.0, 2.0)]), 2.0);
        assert!((maximum_phonation_time(&[seg(0.0, 0.8), seg(1.0, 2.0)]) - 1.8).abs() < 1e-12);
        assert_eq!(maximum_phonation_time(&[]), 0.0);
    }

    #[test]
    fn continuous_phonation_has_no_breaks() {
        let t = track(&[150.0; 200]);
        let b = voice_break_analysis(&t, &[seg(0.0, 2.0)], 2.0, &VoiceBreakConfig::default());
        assert_eq!(b.n_breaks, 0);
        assert_eq!(b.first_break, None);
        assert_eq!(b.deg_pitch_breaks, 0.0);
        assert_eq!(b.deg_vocal_arrests, 0.0);
    }

    #[test]
    fn single_gap_is_one_break() {
        let mut f0 = vec![150.0; 200];
        f0[80..100].iter_mut().for_each(|f| *f = 0.0);
        let t = track(&f0);
        let segs = pitch::voiced_segments(&t, 0.06).unwrap();
        let b = voice_break_analysis(&t, &segs, 2.0, &VoiceBreakConfig::default());
        assert_eq!(b.n_breaks, 1);
        assert!((b.first_break.unwrap() - 0.8).abs() <= 0.02);
        assert!((b.deg_vocal_arrests - 10.0).abs() < 1e-9);
    }

    #[test]
    fn octave_jumps_counted_as_pitch_breaks() {
        // Ramp 140 → 160 Hz; every tenth frame forced one octave up.
        let f0: Vec<f64> = (0..200)
            .map(|i| {
                let base = 140.0 + 20.0 * i as f64 / 199.0;
                if i % 10 == 5 {
                    2.0 * base
                } else {
                    base
                }
            })
            .collect();
        let t = track(&f0);
        let b = voice_break_analysis(&t, &[seg(0.0, 2.0)], 2.0, &VoiceBreakConfig::default());
        assert!((b.deg_pitch_breaks - 10.0).abs() <= 2.0, "{}", b.deg_pitch_breaks);
    }

    #[test]
    fn f0_sd_closed_forms() {
        assert_eq!(f0_sd(&track(&[150.0; 20])).unwrap(), 0.0);
        assert!((f0_sd(&track(&[140.0, 0.0, 150.0, 160.0])).unwrap() - 10.0).abs() < 1e-12);
        assert!(f0_sd(&track(&[0.0, 150.0, 0.0])).is_err());
    }

    #[test]
    fn vibrato_sd_is_rms_of_sinusoid() {
        // 5 Hz, ±6 Hz vibrato sampled at 100 frames/s over 4 s.
        let f0: Vec<f64> = (0..400)
            .map(|i| 150.0 + 6.0 * (2.0 * std::f64::consts::PI * 5.0 * i as f64 * 0.01).sin())
            .collect();
        let sd = f0_sd(&track(&f0)).unwrap();
        assert!((sd - 6.0 / 2f64.sqrt()).abs() < 0.3, "{sd}");
    }

    fn pulses(periods: &[f64], amps: &[f64]) -> PulseSequence {
        let mut t = 0.0;
        let mut times = vec![0.0];
        for p in periods {
            t += p;
            times.push(t);
        }
        PulseSequence {
            segments: vec![0; times.len()],
            pulse_times: times,
            amplitudes: amps.to_vec(),
            period_segments: vec![0; periods.len()],
            periods: periods.to_vec(),
        }
    }

    #[test]
    fn jitter_closed_forms() {
        let p = pulses(&[0.01; 10], &[1.0; 11]);
        assert_eq!(jitter_local(&p).unwrap(), 0.0);
        let alt: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 0.0101 } else { 0.0099 }).collect();
        let p = pulses(&alt, &[1.0; 11]);
        assert!((jitter_local(&p).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn shimmer_closed_forms() {
        let p = pulses(&[0.01; 9], &[1.0; 10]);
        assert_eq!(shimmer_local(&p).unwrap(), 0.0);
        let amps: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { 0.9 }).collect();
        let p = pulses(&[0.01; 9], &amps);
        assert!((shimmer_local(&p).unwrap() - 100.0 * 0.1 / 0.95).abs() < 1e-9);
    }

    #[test]
    fn perturbation_needs_three_pulses_in_a_segment() {
        let p = pulses(&[0.01], &[1.0, 1.0]);
        assert!(jitter_local(&p).is_err());
        assert!(shimmer_local(&p).is_err());
        let mut p = pulses(&[0.01, 0.01], &[1.0, 1.0, 1.0]);
        p.period_segments = vec![0, 1];
        p.segments = vec![0, 0, 1];
        assert!(jitter_local(&p).is_err());
    }

    #[test]
    fn short_run_gates_tremor() {
        let t = track(&[150.0; 80]);
        let env = vec![0.5; 80];
        let r = tremor_indices(&t, &env, &TremorConfig::default());
        assert!(r.ftri.is_err() && r.atri.is_err());
    }

    #[test]
    fn flat_contours_have_no_tremor() {
        let t = track(&[150.0; 300]);
        let env = vec![0.5; 300];
        let r = tremor_indices(&t, &env, &TremorConfig::default());
        assert_eq!(r.ftri.unwrap().index, 0.0);
        assert_eq!(r.atri.unwrap().index, 0.0);
    }

    #[test]
    fn sinusoidal_contour_tremor() {
        let f0: Vec<f64> = (0..300)
            .map(|i| 150.0 * (1.0 + 0.04 * (2.0 * std::f64::consts::PI * 5.0 * i as f64 * 0.01).sin()))
            .collect();
        let t = track(&f0);
        let r = tremor_indices(&t, &f0, &TremorConfig::default());
        let est = r.ftri.unwrap();
        assert!((est.frequency.unwrap() - 5.0).abs() < 0.5);
        assert!((est.depth - 0.04).abs() < 0.004, "{}", est.depth);
        assert!((est.index - 100.0 * 0.04 * est.correlation).abs() < 0.4);
    }
}
