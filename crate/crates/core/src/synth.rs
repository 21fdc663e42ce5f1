//! Source-filter sustained-vowel generator with recorded ground truth, and a
//! cohort generator built on top of it. These stand in for clinical
//! recordings when validating the feature extractors end to end.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::{self, AudioClip};
use crate::dataset::{Group, ManifestRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    /// Nominal fundamental frequency in Hz.
    pub f0: f64,
    /// Phonation length in seconds (excluding lead/tail silence).
    pub duration: f64,
    /// Standard deviation of the per-cycle period perturbation, percent.
    pub jitter_pct: f64,
    /// Standard deviation of the per-cycle amplitude perturbation, percent.
    pub shimmer_pct: f64,
    pub tremor_freq: f64,
    /// Fractional depth of the slow period and amplitude modulation.
    pub tremor_depth: f64,
    /// Silent intervals `(start, end)` in phonation time.
    pub break_schedule: Vec<(f64, f64)>,
    /// Additive white noise level relative to the voiced signal power.
    pub noise_snr: Option<f64>,
    /// Cascade of `(centre Hz, bandwidth Hz)` resonators.
    pub formants: Vec<(f64, f64)>,
    /// Relative linear drift of every formant centre over the phonation.
    pub formant_drift: f64,
    pub lead_silence: f64,
    pub tail_silence: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            f0: 150.0,
            duration: 2.0,
            jitter_pct: 0.0,
            shimmer_pct: 0.0,
            tremor_freq: 5.0,
            tremor_depth: 0.0,
            break_schedule: Vec::new(),
            noise_snr: None,
            formants: vec![(800.0, 160.0), (1200.0, 200.0)],
            formant_drift: 0.0,
            lead_silence: 0.0,
            tail_silence: 0.0,
            sample_rate: audio::ANALYSIS_RATE,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if !(60.0..=400.0).contains(&self.f0) {
            return Err(Error::invalid(format!("f0 {} Hz outside [60, 400]", self.f0)));
        }
        if !(self.duration > 0.0) {
            return Err(Error::invalid("duration must be positive"));
        }
        if self.jitter_pct < 0.0 || self.shimmer_pct < 0.0 {
            return Err(Error::invalid("perturbation levels must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.tremor_depth) || self.tremor_freq < 0.0 {
            return Err(Error::invalid("tremor depth must lie in [0, 1), frequency ≥ 0"));
        }
        if self.lead_silence < 0.0 || self.tail_silence < 0.0 {
            return Err(Error::invalid("silence padding must be non-negative"));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.sample_rate < 8_000 {
            return Err(Error::invalid("sample rate below 8 kHz"));
        }
        for &(fc, bw) in &self.formants {
            if !(fc > 0.0 && fc * (1.0 + self.formant_drift.abs()) < nyquist && bw > 0.0) {
                return Err(Error::invalid(format!("formant ({fc}, {bw}) is not realizable")));
            }
        }
        let mut prev_end = 0.0;
        for &(s, e) in &self.break_schedule {
            if !(s >= prev_end && e > s && e <= self.duration) {
                return Err(Error::invalid(format!(
                    "break ({s}, {e}) must be ordered, disjoint and inside [0, {}]",
                    self.duration
                )));
            }
            prev_end = e;
        }
        Ok(())
    }

    fn in_break(&self, t: f64) -> bool {
        self.break_schedule.iter().any(|&(s, e)| t >= s && t < e)
    }
}

/// What the generator actually produced, in clip time (lead silence
/// included).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Glottal cycle onsets.
    pub onsets: Vec<f64>,
    /// Per-cycle amplitude multipliers.
    pub amplitudes: Vec<f64>,
    /// Voiced interval index of each cycle.
    pub segments: Vec<usize>,
    /// Consecutive same-interval onset differences.
    pub periods: Vec<f64>,
    pub period_segments: Vec<usize>,
    pub voiced_intervals: Vec<(f64, f64)>,
}

impl SynthTruth {
    /// Amplitude pairs of consecutive same-interval cycles.
    pub fn amplitude_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (1..self.amplitudes.len())
            .filter(|&i| self.segments[i] == self.segments[i - 1])
            .map(|i| (self.amplitudes[i - 1], self.amplitudes[i]))
    }

    pub fn phonation_time(&self) -> f64 {
        self.voiced_intervals.iter().map(|(s, e)| e - s).sum()
    }
}

#[derive(Debug, Clone)]
pub struct SynthVowel {
    pub clip: AudioClip,
    pub truth: SynthTruth,
}

const EXCITATION_OVERSAMPLING: u32 = 8;

/// Rosenberg glottal flow pulse with unit peak.
fn rosenberg_flow(tau: f64, open: f64, close: f64) -> f64 {
    if tau < 0.0 || tau > open + close {
        0.0
    } else if tau <= open {
        0.5 * (1.0 - (PI * tau / open).cos())
    } else {
        (PI * (tau - open) / (2.0 * close)).cos()
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 3.0 {
            return z * sigma;
        }
    }
}

/// Pulse train through a cascade of two-pole resonators, with per-cycle
/// jitter/shimmer, sinusoidal tremor, silent breaks and additive noise.
pub fn synth_vowel(p: &SynthParams) -> Result<SynthVowel> {
    p.validate()?;
    let sr = p.sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let total = p.lead_silence + p.duration + p.tail_silence;
    let n = (total * sr).round() as usize;
    let lead = p.lead_silence;

    let t0 = 1.0 / p.f0;
    let open = 0.4 * t0;
    let close = 0.16 * t0;
    let sigma_j = p.jitter_pct / 100.0;
    let sigma_s = p.shimmer_pct / 100.0;

    // Cycle schedule in phonation time.
    let mut cycles: Vec<(f64, f64)> = Vec::new();
    let mut t = 0.0;
    while t < p.duration {
        let modulation = (2.0 * PI * p.tremor_freq * t).sin() * p.tremor_depth;
        let jit = truncated_normal(&mut rng, sigma_j);
        let shim = truncated_normal(&mut rng, sigma_s);
        cycles.push((t, (1.0 + shim) * (1.0 + modulation)));
        t += t0 * (1.0 + jit) * (1.0 + modulation);
    }

    // Voiced intervals: phonation minus breaks.
    let mut voiced_intervals = Vec::new();
    let mut cursor = 0.0;
    for &(s, e) in &p.break_schedule {
        if s > cursor {
            voiced_intervals.push((cursor, s));
        }
        cursor = e;
    }
    if cursor < p.duration {
        voiced_intervals.push((cursor, p.duration));
    }

    // The flow pulse has a slope discontinuity at closure, so it is
    // rendered oversampled and decimated to stay band-limited.
    let os_rate = p.sample_rate * EXCITATION_OVERSAMPLING;
    let os_sr = os_rate as f64;
    let os_n = n * EXCITATION_OVERSAMPLING as usize;
    let mut excitation = vec![0.0; os_n];
    let mut truth = SynthTruth {
        voiced_intervals: voiced_intervals
            .iter()
            .map(|&(s, e)| (s + lead, e + lead))
            .collect(),
        ..SynthTruth::default()
    };
    for &(onset, amp) in &cycles {
        if p.in_break(onset) {
            continue;
        }
        let seg = voiced_intervals
            .iter()
            .position(|&(s, e)| onset >= s && onset < e)
            .unwrap_or(0);
        let abs_onset = onset + lead;
        if let (Some(&prev), Some(&prev_seg)) = (truth.onsets.last(), truth.segments.last()) {
            if prev_seg == seg {
                truth.periods.push(abs_onset - prev);
                truth.period_segments.push(seg);
            }
        }
        truth.onsets.push(abs_onset);
        truth.amplitudes.push(amp);
        truth.segments.push(seg);

        let first = (abs_onset * os_sr).ceil() as usize;
        let last = (((abs_onset + open + close) * os_sr).floor() as usize).min(os_n.saturating_sub(1));
        for (i, e) in excitation.iter_mut().enumerate().take(last + 1).skip(first) {
            *e += amp * rosenberg_flow(i as f64 / os_sr - abs_onset, open, close);
        }
    }
    let mut flow =
        audio::resample(&AudioClip::new(excitation, os_rate)?, p.sample_rate)?.into_samples();
    flow.resize(n, 0.0);
    // Lip radiation as a first difference.
    let excitation: Vec<f64> = (0..n)
        .map(|i| flow[i] - if i > 0 { flow[i - 1] } else { 0.0 })
        .collect();

    // Resonator cascade, optionally with drifting centre frequencies.
    let mut signal = excitation;
    for &(fc, bw) in &p.formants {
        let r = (-PI * bw / sr).exp();
        let (mut y1, mut y2) = (0.0, 0.0);
        for (i, s) in signal.iter_mut().enumerate() {
            let progress = ((i as f64 / sr - lead) / p.duration).clamp(0.0, 1.0);
            let f = fc * (1.0 + p.formant_drift * progress);
            let a1 = 2.0 * r * (2.0 * PI * f / sr).cos();
            let a2 = -r * r;
            let y = (1.0 - a1 - a2) * *s + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            *s = y;
        }
    }

    // Silence outside the voiced intervals (cuts resonator ringing).
    for (i, s) in signal.iter_mut().enumerate() {
        let tc = i as f64 / sr;
        if !truth.voiced_intervals.iter().any(|&(a, b)| tc >= a && tc < b) {
            *s = 0.0;
        }
    }

    if let Some(snr) = p.noise_snr {
        let voiced: Vec<f64> = signal
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let tc = *i as f64 / sr;
                truth.voiced_intervals.iter().any(|&(a, b)| tc >= a && tc < b)
            })
            .map(|(_, &s)| s)
            .collect();
        let power = voiced.iter().map(|s| s * s).sum::<f64>() / voiced.len().max(1) as f64;
        let sigma = (power / 10f64.powf(snr / 10.0)).sqrt();
        for s in signal.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *s += sigma * z;
        }
    }

    let mean = signal.iter().sum::<f64>() / n.max(1) as f64;
    signal.iter_mut().for_each(|s| *s -= mean);
    let peak = signal.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let gain = 0.9 / peak;
        signal.iter_mut().for_each(|s| *s *= gain);
    }

    Ok(SynthVowel {
        clip: AudioClip::new(signal, p.sample_rate)?,
        truth,
    })
}

/// Uniform range `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range(pub f64, pub f64);

impl Range {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.1 <= self.0 {
            self.0
        } else {
            rng.random_range(self.0..=self.1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub group: Group,
    pub count: usize,
    /// Latent severity drawn uniformly from this range (0 healthy, 1 severe).
    pub severity: Range,
}

/// Healthy-voice parameter distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoiceDistribution {
    pub f0: Range,
    pub duration: Range,
    pub jitter_pct: Range,
    pub shimmer_pct: Range,
    pub noise_snr: Range,
    pub tremor_freq: Range,
    pub tremor_depth: Range,
}

impl Default for VoiceDistribution {
    fn default() -> Self {
        Self {
            f0: Range(100.0, 220.0),
            duration: Range(5.0, 7.0),
            jitter_pct: Range(0.2, 0.6),
            shimmer_pct: Range(2.0, 4.0),
            noise_snr: Range(25.0, 35.0),
            tremor_freq: Range(4.0, 7.0),
            tremor_depth: Range(0.0, 0.01),
        }
    }
}

/// How latent severity degrades the voice (values reached at severity 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeverityEffects {
    /// Fraction of phonation duration lost.
    pub duration_loss: f64,
    pub extra_jitter_pct: f64,
    pub extra_shimmer_pct: f64,
    pub snr_loss_db: f64,
    /// Expected voice breaks per second of phonation.
    pub break_rate: f64,
    pub extra_tremor_depth: f64,
    pub formant_drift: f64,
}

impl Default for SeverityEffects {
    fn default() -> Self {
        Self {
            duration_loss: 0.6,
            extra_jitter_pct: 1.0,
            extra_shimmer_pct: 3.0,
            snr_loss_db: 10.0,
            break_rate: 0.4,
            extra_tremor_depth: 0.03,
            formant_drift: 0.15,
        }
    }
}

/// Linear severity-to-score map with Gaussian noise, clipped to `bounds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreMap {
    pub at_zero: f64,
    pub at_one: f64,
    pub noise_sd: f64,
    pub bounds: Range,
}

impl ScoreMap {
    fn sample(&self, severity: f64, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        let v = self.at_zero + (self.at_one - self.at_zero) * severity + self.noise_sd * z;
        v.clamp(self.bounds.0, self.bounds.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreModel {
    pub cuhdrs: ScoreMap,
    pub tfc: ScoreMap,
    pub tms: ScoreMap,
}

impl Default for ScoreModel {
    fn default() -> Self {
        Self {
            cuhdrs: ScoreMap {
                at_zero: 18.0,
                at_one: 4.0,
                noise_sd: 1.0,
                bounds: Range(0.0, 20.0),
            },
            tfc: ScoreMap {
                at_zero: 13.0,
                at_one: 6.0,
                noise_sd: 0.7,
                bounds: Range(0.0, 13.0),
            },
            tms: ScoreMap {
                at_zero: 0.0,
                at_one: 60.0,
                noise_sd: 4.0,
                bounds: Range(0.0, 124.0),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub seed: u64,
    pub groups: Vec<GroupSpec>,
    #[serde(default)]
    pub voice: VoiceDistribution,
    #[serde(default)]
    pub effects: SeverityEffects,
    #[serde(default)]
    pub scores: ScoreModel,
}

impl CohortSpec {
    /// Three groups with the given sizes and severity ranges.
    pub fn with_groups(seed: u64, groups: [(Group, usize, Range); 3]) -> Self {
        Self {
            seed,
            groups: groups
                .into_iter()
                .map(|(group, count, severity)| GroupSpec {
                    group,
                    count,
                    severity,
                })
                .collect(),
            voice: VoiceDistribution::default(),
            effects: SeverityEffects::default(),
            scores: ScoreModel::default(),
        }
    }

    /// 24 controls, 16 premanifest and 45 manifest carriers with
    /// severity increasing across the groups.
    pub fn study_scale(seed: u64) -> Self {
        Self::with_groups(
            seed,
            [
                (Group::Control, 24, Range(0.0, 0.05)),
                (Group::PreHd, 16, Range(0.0, 0.2)),
                (Group::Hd, 45, Range(0.3, 1.0)),
            ],
        )
    }

    /// Every group drawn from the same severity distribution.
    pub fn null(seed: u64, counts: [usize; 3]) -> Self {
        Self::with_groups(
            seed,
            [
                (Group::Control, counts[0], Range(0.0, 1.0)),
                (Group::PreHd, counts[1], Range(0.0, 1.0)),
                (Group::Hd, counts[2], Range(0.0, 1.0)),
            ],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.len() < 2 {
            return Err(Error::invalid("a cohort needs at least two groups"));
        }
        for g in &self.groups {
            if g.count < 2 {
                return Err(Error::invalid(format!("group {} has fewer than 2 subjects", g.group)));
            }
            if !(0.0..=1.0).contains(&g.severity.0) || !(0.0..=1.0).contains(&g.severity.1) {
                return Err(Error::invalid("severity ranges must lie in [0, 1]"));
            }
        }
        let tfc = &self.scores.tfc.bounds;
        if tfc.0 < 0.0 || tfc.1 > 13.0 {
            return Err(Error::invalid("TFC bounds must lie within [0, 13]"));
        }
        Ok(())
    }

    pub fn subject_count(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }
}

/// One generated subject: parameters, latent severity, clinical scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSubject {
    pub subject_id: String,
    pub group: Group,
    pub severity: f64,
    pub cuhdrs: Option<f64>,
    pub tfc: Option<f64>,
    pub tms: Option<f64>,
    pub params: SynthParams,
}

/// Draws subject parameters; deterministic in `spec.seed`.
pub fn cohort_subjects(spec: &CohortSpec) -> Result<Vec<SyntheticSubject>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(spec.subject_count());
    let v = &spec.voice;
    let fx = &spec.effects;
    for g in &spec.groups {
        for k in 0..g.count {
            let s = g.severity.sample(&mut rng);
            let duration = v.duration.sample(&mut rng) * (1.0 - fx.duration_loss * s);
            let mut params = SynthParams {
                f0: v.f0.sample(&mut rng),
                duration,
                jitter_pct: v.jitter_pct.sample(&mut rng) + fx.extra_jitter_pct * s,
                shimmer_pct: v.shimmer_pct.sample(&mut rng) + fx.extra_shimmer_pct * s,
                noise_snr: Some(v.noise_snr.sample(&mut rng) - fx.snr_loss_db * s),
                tremor_freq: v.tremor_freq.sample(&mut rng),
                tremor_depth: (v.tremor_depth.sample(&mut rng) + fx.extra_tremor_depth * s)
                    .min(0.5),
                formant_drift: fx.formant_drift * s * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                lead_silence: 0.2,
                tail_silence: 0.2,
                seed: rng.random(),
                ..SynthParams::default()
            };
            params.break_schedule = draw_breaks(&mut rng, duration, fx.break_rate * s);
            let carrier = g.group != Group::Control;
            let scores = &spec.scores;
            let cuhdrs = scores.cuhdrs.sample(s, &mut rng);
            let tfc = scores.tfc.sample(s, &mut rng);
            let tms = scores.tms.sample(s, &mut rng);
            out.push(SyntheticSubject {
                subject_id: format!("{}{:03}", g.group.short_code(), k + 1),
                group: g.group,
                severity: s,
                cuhdrs: carrier.then_some(cuhdrs),
                tfc: carrier.then_some(tfc),
                tms: carrier.then_some(tms),
                params,
            });
        }
    }
    Ok(out)
}

/// Poisson-count breaks of 80-250 ms placed in the middle of the phonation.
fn draw_breaks(rng: &mut ChaCha8Rng, duration: f64, rate: f64) -> Vec<(f64, f64)> {
    let expected = rate * duration;
    // Knuth's Poisson sampler; counts are small.
    let limit = (-expected).exp();
    let mut count = 0usize;
    let mut prod: f64 = rng.random();
    while prod > limit && count < 20 {
        count += 1;
        prod *= rng.random::<f64>();
    }
    let mut starts: Vec<f64> = (0..count)
        .map(|_| rng.random_range(0.5..(duration - 0.5).max(0.51)))
        .collect();
    starts.sort_by(f64::total_cmp);
    let mut breaks: Vec<(f64, f64)> = Vec::new();
    for s in starts {
        let len = rng.random_range(0.08..0.25);
        let e = (s + len).min(duration - 0.2);
        let ok = breaks.last().is_none_or(|&(_, pe)| s > pe + 0.2);
        if ok && e > s + 0.06 {
            breaks.push((s, e));
        }
    }
    breaks
}

/// Writes `wav/<id>.wav`, `truth/<id>.json`, `manifest.csv` and
/// `cohort.json` under `out_dir`. Byte-identical for a fixed spec.
pub fn synth_cohort(spec: &CohortSpec, out_dir: &Path) -> Result<Vec<SyntheticSubject>> {
    let subjects = cohort_subjects(spec)?;
    std::fs::create_dir_all(out_dir.join("wav"))?;
    std::fs::create_dir_all(out_dir.join("truth"))?;

    let render = |s: &SyntheticSubject| -> Result<()> {
        let vowel = synth_vowel(&s.params)?;
        audio::write_wav_i16(out_dir.join("wav").join(format!("{}.wav", s.subject_id)), &vowel.clip)?;
        let truth = serde_json::json!({
            "subject": s,
            "truth": vowel.truth,
        });
        std::fs::write(
            out_dir.join("truth").join(format!("{}.json", s.subject_id)),
            serde_json::to_string_pretty(&truth)?,
        )?;
        Ok(())
    };
    crate::par::try_for_each(&subjects, render)?;

    let rows: Vec<ManifestRow> = subjects
        .iter()
        .map(|s| ManifestRow {
            path: format!("wav/{}.wav", s.subject_id),
            subject_id: s.subject_id.clone(),
            group: s.group,
            cuhdrs: s.cuhdrs,
            tfc: s.tfc,
            tms: s.tms,
        })
        .collect();
    crate::dataset::write_manifest(out_dir.join("manifest.csv"), &rows)?;
    std::fs::write(out_dir.join("cohort.json"), serde_json::to_string_pretty(spec)?)?;
    Ok(subjects)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_parameters() {
        let bad = [
            SynthParams {
                f0: 30.0,
                ..SynthParams::default()
            },
            SynthParams {
                duration: 0.0,
                ..SynthParams::default()
            },
            SynthParams {
                break_schedule: vec![(1.0, 1.5), (1.2, 1.8)],
                ..SynthParams::default()
            },
            SynthParams {
                break_schedule: vec![(1.5, 2.5)],
                ..SynthParams::default()
            },
        ];
        for p in bad {
            assert!(synth_vowel(&p).is_err(), "{p:?}");
        }
    }

    #[test]
    fn clean_generator_has_constant_periods() {
        let v = synth_vowel(&SynthParams::default()).unwrap();
        let t0 = 1.0 / 150.0;
        assert!(v.truth.periods.iter().all(|p| (p - t0).abs() < 1e-12));
        assert!(v.truth.amplitudes.iter().all(|a| (a - 1.0).abs() < 1e-12));
        assert!((v.truth.phonation_time() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn peak_is_bounded_and_deterministic() {
        let p = SynthParams {
            jitter_pct: 2.0,
            shimmer_pct: 8.0,
            tremor_depth: 0.2,
            noise_snr: Some(0.0),
            seed: 9,
            ..SynthParams::default()
        };
        let a = synth_vowel(&p).unwrap();
        let b = synth_vowel(&p).unwrap();
        assert_eq!(a.clip, b.clip);
        assert!(a.clip.samples().iter().all(|s| s.abs() <= 1.0));
    }

    #[test]
    fn breaks_are_silent() {
        let p = SynthParams {
            break_schedule: vec![(0.8, 1.0)],
            ..SynthParams::default()
        };
        let v = synth_vowel(&p).unwrap();
        let sr = 16_000.0;
        let gap = &v.clip.samples()[(0.81 * sr) as usize..(0.99 * sr) as usize];
        let mean = v.clip.samples().iter().sum::<f64>() / v.clip.len() as f64;
        assert!(gap.iter().all(|s| (s - gap[0]).abs() < 1e-12 && s.abs() < 1e-3 + mean.abs()));
        assert_eq!(v.truth.voiced_intervals, vec![(0.0, 0.8), (1.0, 2.0)]);
        assert!(v.truth.onsets.iter().all(|&t| !(0.8..1.0).contains(&t)));
    }

    #[test]
    fn cohort_counts_and_scores() {
        let spec = CohortSpec::study_scale(3);
        let subjects = cohort_subjects(&spec).unwrap();
        assert_eq!(subjects.len(), 85);
        for s in &subjects {
            match s.group {
                Group::Control => assert!(s.tms.is_none()),
                _ => {
                    let tfc = s.tfc.unwrap();
                    assert!((0.0..=13.0).contains(&tfc));
                }
            }
            assert!(s.params.validate().is_ok());
        }
        assert_eq!(subjects, cohort_subjects(&spec).unwrap());
    }

    #[test]
    fn invalid_cohort_rejected() {
        let mut spec = CohortSpec::study_scale(0);
        spec.groups[0].count = 1;
        assert!(cohort_subjects(&spec).is_err());
    }
}
