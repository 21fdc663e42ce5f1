//! Group-comparison tests and the two analysis protocols: per-feature
//! Kruskal-Wallis with gated pairwise post-hoc tests, and per-bin
//! Kruskal-Wallis over the flattened modulation power spectrum with
//! Benjamini-Hochberg correction.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};

use crate::dataset::{FeatureTable, Group};
use crate::error::{Error, Result};
use crate::matrix::{self, Sidecar};
use crate::mps;
use crate::par;
use crate::phonatory::{Dimension, Feature};

/// Statistic and two-sided p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Labelled samples, one list per group, missing values already removed.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSamples {
    pub groups: Vec<(String, Vec<f64>)>,
}

impl GroupedSamples {
    pub fn new(groups: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::invalid("at least two groups are required"));
        }
        if let Some((label, _)) = groups.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::invalid(format!("group {label} is empty")));
        }
        if groups.iter().flat_map(|(_, v)| v).any(|x| !x.is_finite()) {
            return Err(Error::invalid("samples must be finite"));
        }
        Ok(Self { groups })
    }

    pub fn from_slices(groups: &[&[f64]]) -> Result<Self> {
        Self::new(
            groups
                .iter()
                .enumerate()
                .map(|(i, g)| (format!("g{i}"), g.to_vec()))
                .collect(),
        )
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|(_, v)| v.len()).sum()
    }

    fn slices(&self) -> Vec<&[f64]> {
        self.groups.iter().map(|(_, v)| v.as_slice()).collect()
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Mid-ranks (1-based) of `x` and the tie term Σ(t³ − t).
fn midranks(x: &[f64]) -> (Vec<f64>, f64) {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut ties = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    (ranks, ties)
}

fn kw_statistic(groups: &[&[f64]]) -> Result<f64> {
    let pooled: Vec<f64> = groups.iter().flat_map(|g| g.iter().copied()).collect();
    let n = pooled.len() as f64;
    let (ranks, ties) = midranks(&pooled);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        return Err(Error::not_computable("all values are identical"));
    }
    let mut offset = 0;
    let mut sum = 0.0;
    for g in groups {
        let r: f64 = ranks[offset..offset + g.len()].iter().sum();
        sum += r * r / g.len() as f64;
        offset += g.len();
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    Ok((h / correction).max(0.0))
}

/// Tie-corrected Kruskal-Wallis H with a chi-square p-value on k − 1
/// degrees of freedom.
pub fn kruskal_wallis(g: &GroupedSamples) -> Result<TestResult> {
    if g.total() < 5 {
        return Err(Error::invalid("Kruskal-Wallis needs at least 5 observations"));
    }
    let h = kw_statistic(&g.slices())?;
    let chi = ChiSquared::new((g.groups.len() - 1) as f64).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic: h,
        p_value: chi.sf(h).clamp(0.0, 1.0),
    })
}

/// Kruskal-Wallis H with a Monte Carlo permutation p-value,
/// (1 + #{H* ≥ H}) / (1 + permutations).
pub fn kruskal_wallis_permutation(
    g: &GroupedSamples,
    permutations: usize,
    seed: u64,
) -> Result<TestResult> {
    let observed = kruskal_wallis(g)?.statistic;
    let sizes: Vec<usize> = g.groups.iter().map(|(_, v)| v.len()).collect();
    let mut pooled: Vec<f64> = g.groups.iter().flat_map(|(_, v)| v.iter().copied()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..permutations {
        pooled.shuffle(&mut rng);
        let mut parts = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for &s in &sizes {
            parts.push(&pooled[offset..offset + s]);
            offset += s;
        }
        if kw_statistic(&parts)? >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok(TestResult {
        statistic: observed,
        p_value: (1 + hits) as f64 / (1 + permutations) as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U of the first sample: pairs (a, b) with a > b, ties counting half.
    pub u: f64,
    pub p_value: f64,
}

/// Mann-Whitney U, two-sided, normal approximation with tie and
/// continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("Mann-Whitney needs two non-empty samples"));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let r1: f64 = ranks[..a.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if var <= 0.0 {
        return Ok(MannWhitney { u, p_value: 1.0 });
    }
    let z = ((u - n1 * n2 / 2.0).abs() - 0.5).max(0.0) / var.sqrt();
    let p = 2.0 * Normal::standard().sf(z);
    Ok(MannWhitney {
        u,
        p_value: p.min(1.0),
    })
}

/// Student's two-sample t-test with pooled variance.
pub fn t_test_independent(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("t-test needs at least two samples per group"));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let df = n1 + n2 - 2.0;
    let pooled = ((n1 - 1.0) * variance(a) + (n2 - 1.0) * variance(b)) / df;
    let se = (pooled * (1.0 / n1 + 1.0 / n2)).sqrt();
    if se <= 0.0 || !se.is_finite() {
        return Err(Error::not_computable("zero variance in both samples"));
    }
    let t = (mean(a) - mean(b)) / se;
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic: t,
        p_value: (2.0 * dist.sf(t.abs())).min(1.0),
    })
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-transformed series, fast for small arguments.
        let k = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20).map(|j| (-((2 * j - 1) as f64).powi(2) * k).exp()).sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|j| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov-Smirnov test against a normal with the sample
/// mean and standard deviation; asymptotic p with Stephens' small-sample
/// scaling of the statistic.
pub fn ks_normality(a: &[f64]) -> Result<TestResult> {
    if a.len() < 5 {
        return Err(Error::invalid("KS normality needs at least 5 samples"));
    }
    let sd = variance(a).sqrt();
    if sd <= 0.0 || !sd.is_finite() {
        return Err(Error::not_computable("zero variance"));
    }
    let normal = Normal::new(mean(a), sd).expect("positive sd");
    let mut x = a.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal.cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    Ok(TestResult {
        statistic: d,
        p_value: kolmogorov_sf((sqrt_n + 0.12 + 0.11 / sqrt_n) * d),
    })
}

/// Levene's test for equal variances, centred on group means.
pub fn levene(g: &GroupedSamples) -> Result<TestResult> {
    if g.groups.iter().any(|(_, v)| v.len() < 2) {
        return Err(Error::invalid("Levene needs at least two samples per group"));
    }
    let z: Vec<Vec<f64>> = g
        .groups
        .iter()
        .map(|(_, v)| {
            let m = mean(v);
            v.iter().map(|x| (x - m).abs()).collect()
        })
        .collect();
    let k = z.len() as f64;
    let n = g.total() as f64;
    let grand = z.iter().flatten().sum::<f64>() / n;
    let between: f64 = z.iter().map(|zi| zi.len() as f64 * (mean(zi) - grand).powi(2)).sum();
    let within: f64 = z
        .iter()
        .map(|zi| {
            let m = mean(zi);
            zi.iter().map(|v| (v - m).powi(2)).sum::<f64>()
        })
        .sum();
    if within <= 0.0 {
        return Err(Error::not_computable("zero within-group spread of deviations"));
    }
    let w = (n - k) / (k - 1.0) * between / within;
    let f = FisherSnedecor::new(k - 1.0, n - k).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic: w,
        p_value: f.sf(w).clamp(0.0, 1.0),
    })
}

/// (mean(a) − mean(b)) / pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("Cohen's d needs at least two samples per group"));
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let pooled = (((n1 - 1.0) * variance(a) + (n2 - 1.0) * variance(b)) / (n1 + n2 - 2.0)).sqrt();
    if pooled <= 0.0 || !pooled.is_finite() {
        return Err(Error::not_computable("zero pooled standard deviation"));
    }
    Ok((mean(a) - mean(b)) / pooled)
}

pub fn bonferroni(p: &[f64], m: usize) -> Vec<f64> {
    p.iter().map(|&v| (v * m as f64).min(1.0)).collect()
}

/// Benjamini-Hochberg step-up adjusted p-values, returned in input order.
pub fn fdr_bh(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; n];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p[i] * (n as f64 / (rank + 1) as f64));
        adjusted[i] = running.min(1.0);
    }
    adjusted
}

/// Significance marker for a corrected p-value.
pub fn stars(p: f64) -> &'static str {
    if p <= 0.001 {
        "***"
    } else if p <= 0.01 {
        "**"
    } else if p <= 0.05 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairTest {
    #[serde(rename = "t-test")]
    TTest,
    #[serde(rename = "mann-whitney")]
    MannWhitney,
}

impl PairTest {
    pub fn name(self) -> &'static str {
        match self {
            PairTest::TTest => "t-test",
            PairTest::MannWhitney => "mann-whitney",
        }
    }

    /// Parametric test only when every gate p-value is known and above
    /// `alpha`.
    pub fn select(ks_p: [Option<f64>; 2], levene_p: Option<f64>, alpha: f64) -> PairTest {
        let pass = |p: Option<f64>| p.is_some_and(|p| p > alpha);
        if pass(ks_p[0]) && pass(ks_p[1]) && pass(levene_p) {
            PairTest::TTest
        } else {
            PairTest::MannWhitney
        }
    }
}

/// The three post-hoc comparisons, in reporting order.
pub const PAIRS: [(Group, Group); 3] = [
    (Group::Hd, Group::PreHd),
    (Group::Hd, Group::Control),
    (Group::PreHd, Group::Control),
];

fn pair_key(pair: (Group, Group)) -> String {
    format!("{}_{}", pair.0.label(), pair.1.label())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    /// Normality and equal-variance gates pass when p exceeds this.
    pub gate_alpha: f64,
    pub alpha: f64,
    /// Bonferroni factor on the Kruskal-Wallis p-values.
    pub kw_correction: usize,
    /// Bonferroni factor on each feature's pairwise p-values.
    pub pair_correction: usize,
    /// Monte Carlo permutations for Kruskal-Wallis; 0 uses chi-square.
    pub permutations: usize,
    /// Permutation seed; set by the caller, not read from config files.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            gate_alpha: 0.05,
            alpha: 0.05,
            kw_correction: Dimension::COUNT,
            pair_correction: PAIRS.len(),
            permutations: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: Group,
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub first: Group,
    pub second: Group,
    pub test: Option<PairTest>,
    pub ks_p: [Option<f64>; 2],
    pub levene_p: Option<f64>,
    pub statistic: Option<f64>,
    pub p_raw: Option<f64>,
    pub p_corrected: Option<f64>,
    pub cohens_d: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub feature: Feature,
    pub groups: Vec<GroupSummary>,
    pub kw_h: Option<f64>,
    pub kw_p: Option<f64>,
    pub kw_p_corrected: Option<f64>,
    pub pairs: Vec<PairComparison>,
    pub note: Option<String>,
}

impl FeatureStats {
    pub fn significant(&self, alpha: f64) -> bool {
        self.kw_p_corrected.is_some_and(|p| p <= alpha)
    }

    pub fn pair(&self, first: Group, second: Group) -> Option<&PairComparison> {
        self.pairs.iter().find(|p| p.first == first && p.second == second)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub config: StatsConfig,
    pub features: Vec<FeatureStats>,
}

impl StatReport {
    pub fn feature(&self, f: Feature) -> Option<&FeatureStats> {
        self.features.iter().find(|s| s.feature == f)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// One row per feature: group summaries as "mean (sd)", the
    /// Kruskal-Wallis result and, per pair, test, p-values, d and stars.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = vec!["feature".into(), "dimension".into()];
        for g in Group::ALL {
            header.push(format!("n_{}", g.label()));
            header.push(format!("{}_mean_sd", g.label()));
        }
        header.extend(["kw_h", "kw_p", "kw_p_corrected", "kw_stars"].map(String::from));
        for pair in PAIRS {
            let k = pair_key(pair);
            for col in ["test", "p", "p_corrected", "d", "stars"] {
                header.push(format!("{k}_{col}"));
            }
        }
        header.push("note".into());
        w.write_record(&header)?;
        let num = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for s in &self.features {
            let mut row = vec![s.feature.key().to_string(), s.feature.dimension().to_string()];
            for g in Group::ALL {
                let summary = s.groups.iter().find(|x| x.group == g);
                row.push(summary.map_or(0, |x| x.n).to_string());
                row.push(match summary.and_then(|x| x.mean.zip(x.sd)) {
                    Some((m, sd)) => format!("{m:.3} ({sd:.3})"),
                    None => String::new(),
                });
            }
            row.push(num(s.kw_h));
            row.push(num(s.kw_p));
            row.push(num(s.kw_p_corrected));
            row.push(s.kw_p_corrected.map(stars).unwrap_or_default().to_string());
            for pair in PAIRS {
                match s.pair(pair.0, pair.1) {
                    Some(c) => {
                        row.push(c.test.map(|t| t.name()).unwrap_or_default().to_string());
                        row.push(num(c.p_raw));
                        row.push(num(c.p_corrected));
                        row.push(num(c.cohens_d));
                        row.push(c.p_corrected.map(stars).unwrap_or_default().to_string());
                    }
                    None => row.extend(std::iter::repeat_n(String::new(), 5)),
                }
            }
            row.push(s.note.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn summarize(group: Group, v: &[f64]) -> GroupSummary {
    GroupSummary {
        group,
        n: v.len(),
        mean: (!v.is_empty()).then(|| mean(v)),
        sd: (v.len() >= 2).then(|| variance(v).sqrt()),
    }
}

fn compare_pair(a: &[f64], b: &[f64], pair: (Group, Group), cfg: &StatsConfig) -> PairComparison {
    let mut out = PairComparison {
        first: pair.0,
        second: pair.1,
        test: None,
        ks_p: [None, None],
        levene_p: None,
        statistic: None,
        p_raw: None,
        p_corrected: None,
        cohens_d: None,
        note: None,
    };
    if a.len() < 2 || b.len() < 2 {
        out.note = Some(format!("fewer than 2 samples (n = {}, {})", a.len(), b.len()));
        return out;
    }
    out.ks_p = [ks_normality(a).ok().map(|r| r.p_value), ks_normality(b).ok().map(|r| r.p_value)];
    out.levene_p = levene_pair(a, b);
    let mut test = PairTest::select(out.ks_p, out.levene_p, cfg.gate_alpha);
    let mut result = match test {
        PairTest::TTest => t_test_independent(a, b).ok(),
        PairTest::MannWhitney => None,
    };
    if result.is_none() {
        test = PairTest::MannWhitney;
        result = mann_whitney_u(a, b).ok().map(|r| TestResult {
            statistic: r.u,
            p_value: r.p_value,
        });
    }
    out.test = Some(test);
    out.statistic = result.map(|r| r.statistic);
    out.p_raw = result.map(|r| r.p_value);
    out.p_corrected = out.p_raw.map(|p| (p * cfg.pair_correction as f64).min(1.0));
    out.cohens_d = cohens_d(a, b).ok();
    out
}

fn levene_pair(a: &[f64], b: &[f64]) -> Option<f64> {
    let g = GroupedSamples::from_slices(&[a, b]).ok()?;
    levene(&g).ok().map(|r| r.p_value)
}

/// Per-feature protocol on available cases: Kruskal-Wallis across the
/// groups present, Bonferroni over the feature dimensions, then gated
/// pairwise tests with a per-feature correction and Cohen's d.
pub fn run_phonatory_protocol(table: &FeatureTable, cfg: &StatsConfig) -> StatReport {
    let features = Feature::ALL
        .iter()
        .enumerate()
        .map(|(i, &feature)| {
            let samples: Vec<Vec<f64>> = Group::ALL
                .iter()
                .map(|&g| {
                    table
                        .rows
                        .iter()
                        .filter(|r| r.group == g)
                        .filter_map(|r| r.phonatory.get(feature))
                        .filter(|v| v.is_finite())
                        .collect()
                })
                .collect();
            let present: Vec<(String, Vec<f64>)> = Group::ALL
                .iter()
                .zip(&samples)
                .filter(|(_, v)| !v.is_empty())
                .map(|(g, v)| (g.label().to_string(), v.clone()))
                .collect();
            let kw = GroupedSamples::new(present).and_then(|g| {
                if cfg.permutations > 0 {
                    kruskal_wallis_permutation(&g, cfg.permutations, cfg.seed.wrapping_add(i as u64))
                } else {
                    kruskal_wallis(&g)
                }
            });
            let (kw_h, kw_p, note) = match kw {
                Ok(r) => (Some(r.statistic), Some(r.p_value), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            FeatureStats {
                feature,
                groups: Group::ALL.iter().zip(&samples).map(|(&g, v)| summarize(g, v)).collect(),
                kw_h,
                kw_p,
                kw_p_corrected: kw_p.map(|p| (p * cfg.kw_correction as f64).min(1.0)),
                pairs: PAIRS
                    .iter()
                    .map(|&pair| {
                        compare_pair(&samples[pair.0.index()], &samples[pair.1.index()], pair, cfg)
                    })
                    .collect(),
                note,
            }
        })
        .collect();
    StatReport {
        config: *cfg,
        features,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpsStatReport {
    pub n_per_group: Vec<(Group, usize)>,
    pub h: Vec<f64>,
    pub p_raw: Vec<f64>,
    pub p_adjusted: Vec<f64>,
    /// Bins where every subject has the same value; H = 0, p = 1.
    pub constant: Vec<bool>,
    pub alpha: f64,
    pub fraction_raw: f64,
    pub fraction_adjusted: f64,
}

impl MpsStatReport {
    /// Writes `h.bin`, `p_raw.bin`, `p_fdr.bin` (with sidecars) and
    /// `mps_summary.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (name, data) in [("h", &self.h), ("p_raw", &self.p_raw), ("p_fdr", &self.p_adjusted)] {
            let meta = serde_json::json!({ "quantity": name });
            matrix::write_matrix(dir.join(format!("{name}.bin")), data, &Sidecar::mps(meta))?;
        }
        let summary = serde_json::json!({
            "bins": self.h.len(),
            "n_per_group": self.n_per_group,
            "alpha": self.alpha,
            "fraction_raw": self.fraction_raw,
            "fraction_adjusted": self.fraction_adjusted,
            "constant_bins": self.constant.iter().filter(|&&c| c).count(),
        });
        std::fs::write(dir.join("mps_summary.json"), serde_json::to_string_pretty(&summary)?)?;
        Ok(())
    }
}

/// Per-bin Kruskal-Wallis over flattened MPS vectors with BH correction
/// across all bins.
pub fn run_mps_protocol(groups: &[Group], vectors: &[Vec<f64>], alpha: f64) -> Result<MpsStatReport> {
    if groups.len() != vectors.len() {
        return Err(Error::DimensionMismatch {
            expected: groups.len(),
            found: vectors.len(),
        });
    }
    let bins = vectors.first().map_or(0, Vec::len);
    if bins == 0 {
        return Err(Error::invalid("no MPS vectors"));
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != bins) {
        return Err(Error::DimensionMismatch {
            expected: bins,
            found: v.len(),
        });
    }
    let present: Vec<Group> = Group::ALL.into_iter().filter(|g| groups.contains(g)).collect();
    let n_per_group: Vec<(Group, usize)> = present
        .iter()
        .map(|&g| (g, groups.iter().filter(|&&x| x == g).count()))
        .collect();
    if n_per_group.len() < 2 || n_per_group.iter().any(|&(_, n)| n < 2) {
        return Err(Error::invalid("need at least two groups with two subjects each"));
    }
    let members: Vec<Vec<usize>> = present
        .iter()
        .map(|&g| (0..groups.len()).filter(|&i| groups[i] == g).collect())
        .collect();
    let per_bin: Vec<(f64, f64, bool)> = par::map_range(bins, |b| {
        let samples: Vec<Vec<f64>> = members
            .iter()
            .map(|idx| idx.iter().map(|&i| vectors[i][b]).collect())
            .collect();
        let slices: Vec<&[f64]> = samples.iter().map(Vec::as_slice).collect();
        match kw_statistic(&slices) {
            Ok(h) => {
                let chi = ChiSquared::new((slices.len() - 1) as f64).expect("positive degrees of freedom");
                (h, chi.sf(h).clamp(0.0, 1.0), false)
            }
            Err(_) => (0.0, 1.0, true),
        }
    });
    let h: Vec<f64> = per_bin.iter().map(|r| r.0).collect();
    let p_raw: Vec<f64> = per_bin.iter().map(|r| r.1).collect();
    let constant: Vec<bool> = per_bin.iter().map(|r| r.2).collect();
    let p_adjusted = fdr_bh(&p_raw);
    let frac = |p: &[f64]| p.iter().filter(|&&x| x <= alpha).count() as f64 / bins as f64;
    Ok(MpsStatReport {
        n_per_group,
        fraction_raw: frac(&p_raw),
        fraction_adjusted: frac(&p_adjusted),
        h,
        p_raw,
        p_adjusted,
        constant,
        alpha,
    })
}

/// Runs the MPS protocol on every table row that carries a full MPS vector.
pub fn run_mps_protocol_table(table: &FeatureTable, alpha: f64) -> Result<MpsStatReport> {
    let (groups, vectors): (Vec<Group>, Vec<Vec<f64>>) = table
        .rows
        .iter()
        .filter_map(|r| {
            r.mps
                .as_ref()
                .filter(|v| v.len() == mps::FEATURE_LEN)
                .map(|v| (r.group, v.clone()))
        })
        .unzip();
    run_mps_protocol(&groups, &vectors, alpha)
}
