//! Framewise F0 tracking (normalized cross-correlation with Viterbi
//! smoothing), voiced-segment segmentation and glottal pulse marking.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PitchConfig {
    /// Lowest admissible F0 in Hz.
    pub floor: f64,
    /// Highest admissible F0 in Hz.
    pub ceiling: f64,
    /// Frame hop in seconds.
    pub frame_hop: f64,
    /// Correlation window length in seconds.
    pub frame_len: f64,
    /// Minimum NCCF peak for a voiced frame.
    pub voicing_threshold: f64,
    /// Minimum frame RMS as a fraction of clip RMS for a voiced frame.
    pub energy_gate: f64,
    /// Viterbi transition cost per octave of F0 change.
    pub octave_jump_cost: f64,
    /// Local cost per octave of lag above the shortest lag; breaks ties
    /// between a period and its multiples.
    pub octave_cost: f64,
    /// Candidates kept per frame.
    pub max_candidates: usize,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            floor: 60.0,
            ceiling: 400.0,
            frame_hop: 0.010,
            frame_len: 0.040,
            voicing_threshold: 0.45,
            energy_gate: 0.01,
            octave_jump_cost: 0.35,
            octave_cost: 0.02,
            max_candidates: 5,
        }
    }
}

impl PitchConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.floor > 0.0 && self.floor < self.ceiling && self.ceiling < nyquist) {
            return Err(Error::invalid(format!(
                "pitch range must satisfy 0 < floor ({}) < ceiling ({}) < {nyquist}",
                self.floor, self.ceiling
            )));
        }
        if !(self.frame_hop > 0.0 && self.frame_hop <= self.frame_len) {
            return Err(Error::invalid("frame hop must be positive and ≤ frame length"));
        }
        if !(self.voicing_threshold > 0.0 && self.voicing_threshold < 1.0) {
            return Err(Error::invalid("voicing threshold must lie in (0, 1)"));
        }
        if self.max_candidates == 0 {
            return Err(Error::invalid("at least one pitch candidate is required"));
        }
        Ok(())
    }
}

/// Framewise F0 with hard voicing decisions; unvoiced frames carry f0 = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    pub times: Vec<f64>,
    pub f0: Vec<f64>,
    pub voiced: Vec<bool>,
    /// Peak normalized cross-correlation per frame (0 when no candidate).
    pub nccf: Vec<f64>,
    pub hop: f64,
    /// Analysis frame length (s).
    pub frame_len: f64,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn voiced_f0(&self) -> impl Iterator<Item = f64> + '_ {
        self.f0
            .iter()
            .zip(&self.voiced)
            .filter(|(_, &v)| v)
            .map(|(&f, _)| f)
    }

    pub fn voiced_count(&self) -> usize {
        self.voiced.iter().filter(|&&v| v).count()
    }

    /// Index of the frame whose centre is closest to `t`.
    pub fn frame_at(&self, t: f64) -> usize {
        if self.times.is_empty() {
            return 0;
        }
        let rel = ((t - self.times[0]) / self.hop).round();
        rel.clamp(0.0, (self.times.len() - 1) as f64) as usize
    }

    /// CSV with columns `time,f0,voiced`.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "time,f0,voiced")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{:.6},{:.6},{}",
                self.times[i], self.f0[i], self.voiced[i] as u8
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoicedSegment {
    pub start: f64,
    pub end: f64,
}

impl VoicedSegment {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// One mark per glottal cycle. Periods only join pulses of the same
/// segment; `period_segments[i]` names the segment of `periods[i]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub pulse_times: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub segments: Vec<usize>,
    pub periods: Vec<f64>,
    pub period_segments: Vec<usize>,
}

impl PulseSequence {
    pub fn len(&self) -> usize {
        self.pulse_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulse_times.is_empty()
    }

    /// CSV with columns `pulse_time,period,amplitude`; the period column is
    /// the interval to the previous same-segment pulse, empty for the first
    /// pulse of a segment.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "pulse_time,period,amplitude")?;
        for i in 0..self.len() {
            let period = if i > 0 && self.segments[i] == self.segments[i - 1] {
                format!("{:.9}", self.pulse_times[i] - self.pulse_times[i - 1])
            } else {
                String::new()
            };
            writeln!(
                out,
                "{:.9},{},{:.9}",
                self.pulse_times[i], period, self.amplitudes[i]
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    lag: f64,
    strength: f64,
}

/// Tracks F0 with per-frame NCCF peak picking and Viterbi smoothing over
/// each run of voiced frames.
pub fn track_pitch(clip: &AudioClip, cfg: &PitchConfig) -> Result<PitchTrack> {
    let sr = clip.sample_rate() as f64;
    cfg.validate(clip.sample_rate())?;
    let x = clip.samples();
    let win = (cfg.frame_len * sr).round() as usize;
    let hop = (cfg.frame_hop * sr).round().max(1.0) as usize;
    if x.len() < win || win < 2 {
        return Err(Error::TooShort(format!(
            "clip of {:.3} s is shorter than one {:.3} s frame",
            clip.duration(),
            cfg.frame_len
        )));
    }
    let min_lag = ((sr / cfg.ceiling).floor() as usize).max(2);
    let max_lag = (sr / cfg.floor).ceil() as usize;

    let mut energy_prefix = Vec::with_capacity(x.len() + 1);
    energy_prefix.push(0.0);
    for &s in x {
        energy_prefix.push(energy_prefix.last().unwrap() + s * s);
    }
    let energy = |a: usize, b: usize| {
        let a = a.min(x.len());
        let b = b.min(x.len());
        (energy_prefix[b] - energy_prefix[a]).max(0.0)
    };
    let clip_rms = clip.rms();

    let n_frames = (x.len() - win) / hop + 1;
    let mut times = Vec::with_capacity(n_frames);
    let mut voiced = Vec::with_capacity(n_frames);
    let mut peaks = Vec::with_capacity(n_frames);
    let mut candidates: Vec<Vec<Candidate>> = Vec::with_capacity(n_frames);
    let mut r = vec![0.0; max_lag + 2];

    for f in 0..n_frames {
        let start = f * hop;
        times.push((start as f64 + win as f64 / 2.0) / sr);
        let e0 = energy(start, start + win);
        let frame_rms = (e0 / win as f64).sqrt();

        for lag in (min_lag - 1)..=(max_lag + 1) {
            let e1 = energy(start + lag, start + lag + win);
            let denom = (e0 * e1).sqrt();
            if denom <= f64::MIN_POSITIVE {
                r[lag] = 0.0;
                continue;
            }
            let end = (start + win).min(x.len().saturating_sub(lag));
            let num: f64 = if end > start {
                x[start..end]
                    .iter()
                    .zip(&x[start + lag..end + lag])
                    .map(|(a, b)| a * b)
                    .sum()
            } else {
                0.0
            };
            r[lag] = num / denom;
        }

        let mut cands: Vec<Candidate> = (min_lag..=max_lag)
            .filter(|&l| r[l] > 0.0 && r[l] >= r[l - 1] && r[l] > r[l + 1])
            .map(|l| {
                let (offset, peak) = parabolic_peak(r[l - 1], r[l], r[l + 1]);
                let lag = (l as f64 + offset).clamp(sr / cfg.ceiling, sr / cfg.floor);
                Candidate {
                    lag,
                    strength: peak.min(1.0),
                }
            })
            .collect();
        cands.sort_by(|a, b| b.strength.total_cmp(&a.strength));
        cands.truncate(cfg.max_candidates);
        let best = cands.first().map_or(0.0, |c| c.strength);
        peaks.push(best);
        voiced.push(
            best >= cfg.voicing_threshold && frame_rms >= cfg.energy_gate * clip_rms && best > 0.0,
        );
        candidates.push(cands);
    }

    let mut f0 = vec![0.0; n_frames];
    let mut i = 0;
    while i < n_frames {
        if !voiced[i] {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n_frames && voiced[i] {
            i += 1;
        }
        let lags = viterbi_path(&candidates[run_start..i], min_lag as f64, cfg);
        for (k, lag) in lags.into_iter().enumerate() {
            f0[run_start + k] = (sr / lag).clamp(cfg.floor, cfg.ceiling);
        }
    }

    Ok(PitchTrack {
        times,
        f0,
        voiced,
        nccf: peaks,
        hop: hop as f64 / sr,
        frame_len: win as f64 / sr,
    })
}

/// Vertex of the parabola through three equally spaced points, as
/// (offset from the middle sample, interpolated value).
pub(crate) fn parabolic_peak(left: f64, mid: f64, right: f64) -> (f64, f64) {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < f64::EPSILON * mid.abs().max(1e-300) || denom >= 0.0 {
        return (0.0, mid);
    }
    let offset = (0.5 * (left - right) / denom).clamp(-0.5, 0.5);
    (offset, mid - 0.25 * (left - right) * offset)
}

fn viterbi_path(frames: &[Vec<Candidate>], min_lag: f64, cfg: &PitchConfig) -> Vec<f64> {
    let local = |c: &Candidate| (1.0 - c.strength) + cfg.octave_cost * (c.lag / min_lag).log2();
    let mut cost: Vec<f64> = frames[0].iter().map(local).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(frames.len());
    back.push(vec![0; frames[0].len()]);
    for t in 1..frames.len() {
        let mut next = Vec::with_capacity(frames[t].len());
        let mut ptr = Vec::with_capacity(frames[t].len());
        for c in &frames[t] {
            let (arg, best) = frames[t - 1]
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    (
                        j,
                        cost[j] + cfg.octave_jump_cost * (c.lag / p.lag).log2().abs(),
                    )
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("voiced frames have candidates");
            next.push(best + local(c));
            ptr.push(arg);
        }
        cost = next;
        back.push(ptr);
    }
    let mut state = cost
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(j, _)| j)
        .unwrap_or(0);
    let mut lags = vec![0.0; frames.len()];
    for t in (0..frames.len()).rev() {
        lags[t] = frames[t][state].lag;
        state = back[t][state];
    }
    lags
}

/// Maximal runs of voiced frames; unvoiced gaps shorter than `min_gap`
/// seconds are bridged. Each frame covers ±hop/2 around its centre.
pub fn voiced_segments(track: &PitchTrack, min_gap: f64) -> Result<Vec<VoicedSegment>> {
    if min_gap + 1e-12 < track.hop {
        return Err(Error::invalid(format!(
            "min_gap {min_gap} s is below the frame hop {} s",
            track.hop
        )));
    }
    let half = track.hop / 2.0;
    let mut runs: Vec<VoicedSegment> = Vec::new();
    let mut i = 0;
    while i < track.len() {
        if !track.voiced[i] {
            i += 1;
            continue;
        }
        let first = i;
        while i < track.len() && track.voiced[i] {
            i += 1;
        }
        runs.push(VoicedSegment {
            start: (track.times[first] - half).max(0.0),
            end: track.times[i - 1] + half,
        });
    }

    let mut merged: Vec<VoicedSegment> = Vec::with_capacity(runs.len());
    for seg in runs {
        match merged.last_mut() {
            Some(prev) if seg.start - prev.end < min_gap - 1e-9 => prev.end = seg.end,
            _ => merged.push(seg),
        }
    }
    Ok(merged)
}

/// Pulls segment edges inward to the first and last sample above the
/// presence gate, moving each edge by at most `reach` seconds.
pub fn refine_segments(clip: &AudioClip, segments: &[VoicedSegment], reach: f64) -> Vec<VoicedSegment> {
    let sr = clip.sample_rate() as f64;
    let x = clip.samples();
    let reach = (reach * sr).round() as usize;
    segments
        .iter()
        .map(|seg| {
            let lo = ((seg.start * sr).round() as usize).min(x.len());
            let hi = ((seg.end * sr).round() as usize).min(x.len());
            let run = &x[lo..hi.max(lo)];
            let gate = PRESENCE_GATE * run.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let (Some(first), Some(last)) = (
                run.iter().position(|v| v.abs() > gate),
                run.iter().rposition(|v| v.abs() > gate),
            ) else {
                return *seg;
            };
            let start = lo + first.min(reach);
            let end = hi.max(lo) - (run.len() - 1 - last).min(reach);
            if end <= start {
                return *seg;
            }
            VoicedSegment {
                start: start as f64 / sr,
                end: end as f64 / sr,
            }
        })
        .collect()
}

/// Fraction of the run's peak magnitude below which edge samples are
/// treated as silence.
const PRESENCE_GATE: f64 = 0.02;
/// Largest ratio between consecutive periods, or consecutive amplitudes,
/// still joined into one segment.
const MAX_PERIOD_FACTOR: f64 = 1.3;
const MAX_AMPLITUDE_FACTOR: f64 = 1.6;

/// Marks one pulse per glottal cycle at the waveform peak of each
/// predicted period window, seeded from the frame F0.
pub fn extract_pulses(clip: &AudioClip, track: &PitchTrack, cfg: &PitchConfig) -> PulseSequence {
    let sr = clip.sample_rate() as f64;
    let x = clip.samples();
    let mut out = PulseSequence::default();
    let Ok(runs) = voiced_segments(track, track.hop) else {
        return out;
    };
    let min_period = 0.8 / cfg.ceiling;
    let max_period = 1.25 / cfg.floor;
    let mut segment_id = 0usize;

    for run in runs {
        let lo = ((run.start * sr).round() as usize).min(x.len());
        let hi = ((run.end * sr).round() as usize).min(x.len());
        // Voiced runs are frame-quantised; shrink them to where the
        // waveform actually carries signal.
        let peak_abs = x[lo..hi].iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let gate = PRESENCE_GATE * peak_abs;
        let Some(first_loud) = x[lo..hi].iter().position(|s| s.abs() > gate) else {
            continue;
        };
        let last_loud = x[lo..hi].iter().rposition(|s| s.abs() > gate).unwrap_or(first_loud);
        let seg_start = lo + first_loud;
        let seg_end = lo + last_loud + 1;
        let period_at = |pos: f64| -> f64 {
            let f = track.f0[track.frame_at(pos / sr)];
            if f > 0.0 {
                sr / f
            } else {
                let fallback = track
                    .voiced_f0()
                    .next()
                    .unwrap_or((cfg.floor * cfg.ceiling).sqrt());
                sr / fallback
            }
        };

        let first_period = period_at(seg_start as f64);
        let first_end = seg_start + first_period.ceil() as usize;
        if first_end >= seg_end {
            continue;
        }
        // Polarity of the dominant excursion over the first few cycles.
        let probe_end = (seg_start + (3.0 * first_period) as usize).min(seg_end);
        let (pos_max, neg_max) = x[seg_start..probe_end]
            .iter()
            .fold((0.0f64, 0.0f64), |(p, n), &s| (p.max(s), n.max(-s)));
        let polarity = if neg_max > pos_max { -1.0 } else { 1.0 };

        let Some(mut pos) = peak_in(x, seg_start, first_end, polarity) else {
            continue;
        };
        let mut last_time: Option<f64> = None;
        let mut last_period: Option<f64> = None;
        loop {
            let (t_refined, amp) = refine(x, pos, polarity);
            let t = t_refined / sr;
            if let (Some(prev), Some(&prev_amp)) = (last_time, out.amplitudes.last()) {
                let period = t - prev;
                let plausible = period >= min_period
                    && period <= max_period
                    && last_period.is_none_or(|lp: f64| {
                        period.max(lp) <= MAX_PERIOD_FACTOR * period.min(lp)
                    })
                    && amp.max(prev_amp) <= MAX_AMPLITUDE_FACTOR * amp.min(prev_amp);
                if plausible {
                    out.periods.push(period);
                    out.period_segments.push(segment_id);
                    last_period = Some(period);
                } else {
                    segment_id += 1;
                    last_period = None;
                }
            }
            out.pulse_times.push(t);
            out.amplitudes.push(amp);
            out.segments.push(segment_id);
            last_time = Some(t);

            let period = period_at(pos as f64);
            let lo = pos + (0.7 * period).round() as usize;
            let hi = pos + (1.3 * period).round() as usize + 1;
            if hi > seg_end {
                break;
            }
            match peak_in(x, lo, hi, polarity) {
                Some(next) if next > pos => pos = next,
                _ => break,
            }
        }
        segment_id += 1;
    }
    out
}

fn peak_in(x: &[f64], lo: usize, hi: usize, polarity: f64) -> Option<usize> {
    let hi = hi.min(x.len());
    if lo >= hi {
        return None;
    }
    let mut best = lo;
    for i in lo + 1..hi {
        if polarity * x[i] > polarity * x[best] {
            best = i;
        }
    }
    Some(best)
}

/// Sub-sample peak of `polarity · x` near `pos` by band-limited (Hann-
/// windowed sinc) interpolation, searched by golden section.
fn refine(x: &[f64], pos: usize, polarity: f64) -> (f64, f64) {
    const HALF: isize = 16;
    let value = |t: f64| -> f64 {
        let centre = t.floor() as isize;
        let mut acc = 0.0;
        for k in (centre - HALF + 1)..=(centre + HALF) {
            if k < 0 || k as usize >= x.len() {
                continue;
            }
            let d = t - k as f64;
            let w = 0.5 * (1.0 + (std::f64::consts::PI * d / HALF as f64).cos());
            acc += x[k as usize] * sinc(d) * w;
        }
        polarity * acc
    };
    let (mut a, mut b) = (pos as f64 - 1.0, pos as f64 + 1.0);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (value(c), value(d));
    for _ in 0..40 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = value(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = value(d);
        }
    }
    let t = 0.5 * (a + b);
    let v = value(t);
    let at_sample = polarity * x[pos];
    if v >= at_sample {
        (t, v)
    } else {
        (pos as f64, at_sample)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, secs: f64) -> AudioClip {
        let sr = 16_000.0;
        let n = (sr * secs) as usize;
        AudioClip::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / sr).sin())
                .collect(),
            16_000,
        )
        .unwrap()
    }

    fn track_from(voiced: &[bool], hop: f64) -> PitchTrack {
        PitchTrack {
            times: (0..voiced.len()).map(|i| (i as f64 + 0.5) * hop).collect(),
            f0: voiced.iter().map(|&v| if v { 150.0 } else { 0.0 }).collect(),
            voiced: voiced.to_vec(),
            nccf: vec![0.9; voiced.len()],
            hop,
            frame_len: 0.04,
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = PitchConfig::default();
        assert!(cfg.validate(16_000).is_ok());
        cfg.ceiling = 9000.0;
        assert!(cfg.validate(16_000).is_err());
        let cfg = PitchConfig {
            frame_hop: 0.05,
            ..PitchConfig::default()
        };
        assert!(cfg.validate(16_000).is_err());
    }

    #[test]
    fn too_short_clip_is_an_error() {
        let clip = sine(150.0, 0.02);
        assert!(matches!(
            track_pitch(&clip, &PitchConfig::default()),
            Err(Error::TooShort(_))
        ));
    }

    #[test]
    fn parabolic_vertex_exact_on_parabola() {
        // y = 1 - (x - 0.3)^2 sampled at -1, 0, 1
        let f = |x: f64| 1.0 - (x - 0.3) * (x - 0.3);
        let (o, v) = parabolic_peak(f(-1.0), f(0.0), f(1.0));
        assert!((o - 0.3).abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_voiced_is_one_segment() {
        let t = track_from(&[true; 200], 0.01);
        let segs = voiced_segments(&t, 0.05).unwrap();
        assert_eq!(segs.len(), 1);
        assert!((segs[0].start - 0.0).abs() < 1e-12);
        assert!((segs[0].end - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gap_bridging_follows_min_gap() {
        let mut v = vec![true; 200];
        for f in v.iter_mut().skip(80).take(20) {
            *f = false;
        }
        let t = track_from(&v, 0.01);
        assert_eq!(voiced_segments(&t, 0.05).unwrap().len(), 2);
        assert_eq!(voiced_segments(&t, 0.3).unwrap().len(), 1);
        assert!(voiced_segments(&t, 0.001).is_err());
    }

    #[test]
    fn refinement_snaps_edges_to_signal_within_reach() {
        let sr = 16_000;
        let x: Vec<f64> = (0..sr)
            .map(|i| if (4000..12000).contains(&i) { (i as f64 * 0.3).sin() } else { 0.0 })
            .collect();
        let clip = AudioClip::new(x, sr as u32).unwrap();
        let seg = [VoicedSegment { start: 0.24, end: 0.77 }];
        let r = refine_segments(&clip, &seg, 0.02)[0];
        assert!((r.start - 0.25).abs() < 2e-4, "{r:?}");
        assert!((r.end - 0.75).abs() < 2e-4, "{r:?}");
        let r = refine_segments(&clip, &seg, 0.005)[0];
        assert!((r.start - 0.245).abs() < 1e-9 && (r.end - 0.765).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn empty_pulses_for_unvoiced_track() {
        let clip = sine(100.0, 1.0);
        let t = track_from(&vec![false; 96], 0.01);
        assert!(extract_pulses(&clip, &t, &PitchConfig::default()).is_empty());
    }

    #[test]
    fn csv_headers() {
        let t = track_from(&[true, false], 0.01);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("time,f0,voiced\n"));
        assert_eq!(s.lines().count(), 3);
    }
}
