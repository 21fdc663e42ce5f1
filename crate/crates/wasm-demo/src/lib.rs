//! Browser bindings: synthesise and analyse a sustained vowel, render its
//! modulation power spectrum, and compare groups of feature values.
//!
//! Every entry point takes and returns JSON strings so the page needs no
//! generated type bindings.

use phonation::mps::{self, MpsConfig};
use phonation::phonatory::{self, ExtractionConfig, Feature};
use phonation::stats::{self, GroupedSamples, PairTest};
use phonation::synth::{self, SynthParams};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Voice parameters exposed on the page.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoiceParams {
    pub f0: f64,
    pub duration: f64,
    pub jitter_pct: f64,
    pub shimmer_pct: f64,
    pub tremor_freq: f64,
    pub tremor_depth: f64,
    /// Additive noise level in dB; `None` for a clean signal.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for VoiceParams {
    fn default() -> Self {
        Self {
            f0: 150.0,
            duration: 2.0,
            jitter_pct: 0.5,
            shimmer_pct: 3.0,
            tremor_freq: 5.0,
            tremor_depth: 0.0,
            snr_db: Some(30.0),
            seed: 1,
        }
    }
}

impl VoiceParams {
    fn synth_params(&self) -> SynthParams {
        SynthParams {
            f0: self.f0,
            duration: self.duration,
            jitter_pct: self.jitter_pct,
            shimmer_pct: self.shimmer_pct,
            tremor_freq: self.tremor_freq,
            tremor_depth: self.tremor_depth,
            noise_snr: self.snr_db,
            lead_silence: 0.1,
            tail_silence: 0.1,
            seed: self.seed,
            ..SynthParams::default()
        }
    }
}

#[derive(Debug, Serialize)]
struct FeatureRow {
    key: &'static str,
    label: &'static str,
    unit: &'static str,
    value: Option<f64>,
}

fn parse<T: for<'de> Deserialize<'de>>(json: &str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("invalid input: {e}"))
}

/// Min/max envelope of `x` in `bins` columns.
fn envelope(x: &[f64], bins: usize) -> Vec<[f64; 2]> {
    let bins = bins.clamp(1, x.len().max(1));
    (0..bins)
        .map(|b| {
            let lo = b * x.len() / bins;
            let hi = ((b + 1) * x.len() / bins).max(lo + 1).min(x.len());
            x[lo..hi]
                .iter()
                .fold([f64::INFINITY, f64::NEG_INFINITY], |[a, b], &v| [a.min(v), b.max(v)])
        })
        .collect()
}

/// Synthesises a vowel and extracts every phonatory feature.
pub fn analyze_vowel_json(params: &str) -> Result<String, String> {
    let p: VoiceParams = parse(params)?;
    let vowel = synth::synth_vowel(&p.synth_params()).map_err(|e| e.to_string())?;
    let ex = phonatory::extract_detailed(&vowel.clip, &ExtractionConfig::default())
        .map_err(|e| e.to_string())?;
    let features: Vec<FeatureRow> = Feature::ALL
        .iter()
        .map(|&f| FeatureRow {
            key: f.key(),
            label: f.label(),
            unit: f.unit(),
            value: ex.features.get(f),
        })
        .collect();
    let truth = &vowel.truth;
    let amps: Vec<f64> = truth.amplitudes.clone();
    let pitch: Vec<Option<f64>> = ex
        .track
        .f0
        .iter()
        .zip(&ex.track.voiced)
        .map(|(&f, &v)| v.then_some(f))
        .collect();
    Ok(json!({
        "duration": vowel.clip.duration(),
        "waveform": envelope(vowel.clip.samples(), 800),
        "pitch": { "times": ex.track.times, "f0": pitch },
        "features": features,
        "not_computable": ex.features.not_computable,
        "truth": {
            "jitter_local": phonatory::local_perturbation(&truth.periods, &truth.period_segments),
            "shimmer_local": phonatory::local_perturbation(&amps, &truth.segments),
            "pulses": truth.onsets.len(),
        },
    })
    .to_string())
}

/// Modulation power spectrum of the synthesised vowel, in dB below its peak.
pub fn modulation_spectrum_json(params: &str) -> Result<String, String> {
    let p: VoiceParams = parse(params)?;
    let vowel = synth::synth_vowel(&p.synth_params()).map_err(|e| e.to_string())?;
    let m = mps::compute_mps(&vowel.clip, &MpsConfig::default()).map_err(|e| e.to_string())?;
    let peak = m.power.iter().flatten().fold(f64::MIN_POSITIVE, |a, &b| a.max(b));
    let db: Vec<Vec<f64>> = m
        .power
        .iter()
        .map(|row| row.iter().map(|&v| 20.0 * (v.max(peak * 1e-6) / peak).log10()).collect())
        .collect();
    Ok(json!({
        "temporal_axis": m.temporal_axis,
        "spectral_axis": m.spectral_axis,
        "power_db": db,
        "n_windows": m.n_windows,
    })
    .to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupInput {
    groups: Vec<(String, Vec<f64>)>,
    #[serde(default = "default_alpha")]
    alpha: f64,
}

fn default_alpha() -> f64 {
    0.05
}

/// Kruskal-Wallis across all groups, then every pairwise comparison with
/// the normality and variance gates and a Bonferroni correction.
pub fn compare_groups_json(input: &str) -> Result<String, String> {
    let input: GroupInput = parse(input)?;
    let grouped = GroupedSamples::new(input.groups.clone()).map_err(|e| e.to_string())?;
    let kw = stats::kruskal_wallis(&grouped).map_err(|e| e.to_string())?;
    let groups = &input.groups;
    let n_pairs = groups.len() * (groups.len() - 1) / 2;
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let (a, b) = (&groups[i].1, &groups[j].1);
            let ks = [stats::ks_normality(a).ok(), stats::ks_normality(b).ok()].map(|r| r.map(|t| t.p_value));
            let lev = GroupedSamples::from_slices(&[a, b])
                .and_then(|g| stats::levene(&g))
                .ok()
                .map(|t| t.p_value);
            let test = PairTest::select(ks, lev, input.alpha);
            let p = match test {
                PairTest::TTest => stats::t_test_independent(a, b).map(|t| t.p_value),
                PairTest::MannWhitney => stats::mann_whitney_u(a, b).map(|t| t.p_value),
            }
            .ok();
            let p_corrected = p.map(|p| stats::bonferroni(&[p], n_pairs)[0]);
            pairs.push(json!({
                "a": groups[i].0,
                "b": groups[j].0,
                "test": test.name(),
                "p": p,
                "p_corrected": p_corrected,
                "stars": p_corrected.map_or("", stats::stars),
                "cohens_d": stats::cohens_d(a, b).ok(),
            }));
        }
    }
    Ok(json!({
        "kw": { "h": kw.statistic, "p": kw.p_value, "stars": stats::stars(kw.p_value) },
        "pairs": pairs,
    })
    .to_string())
}

fn to_js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn analyze_vowel(params: &str) -> Result<String, JsError> {
    to_js(analyze_vowel_json(params))
}

#[wasm_bindgen]
pub fn modulation_spectrum(params: &str) -> Result<String, JsError> {
    to_js(modulation_spectrum_json(params))
}

#[wasm_bindgen]
pub fn compare_groups(input: &str) -> Result<String, JsError> {
    to_js(compare_groups_json(input))
}
