//! Subject metadata, manifests and per-subject feature tables.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mps;
use crate::phonatory::{ExtractionConfig, Feature, PhonatoryFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    #[serde(rename = "C")]
    Control,
    #[serde(rename = "preHD")]
    PreHd,
    #[serde(rename = "HD")]
    Hd,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Control, Group::PreHd, Group::Hd];

    pub fn label(self) -> &'static str {
        match self {
            Group::Control => "C",
            Group::PreHd => "preHD",
            Group::Hd => "HD",
        }
    }

    /// Prefix used in generated subject ids.
    pub fn short_code(self) -> &'static str {
        match self {
            Group::Control => "C",
            Group::PreHd => "P",
            Group::Hd => "H",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Group> {
        Self::ALL.get(i).copied()
    }

    pub fn is_carrier(self) -> bool {
        self != Group::Control
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.label() == s.trim())
            .ok_or_else(|| Error::data(format!("unknown group {s:?}, expected C, preHD or HD")))
    }
}

/// Clinical score used as a regression target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Cuhdrs,
    Tfc,
    Tms,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Cuhdrs, Target::Tfc, Target::Tms];

    pub fn key(self) -> &'static str {
        match self {
            Target::Cuhdrs => "cuhdrs",
            Target::Tfc => "tfc",
            Target::Tms => "tms",
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.key() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown target {s:?}")))
    }
}

/// One manifest line. Scores may be empty for controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub subject_id: String,
    pub group: Group,
    pub cuhdrs: Option<f64>,
    pub tfc: Option<f64>,
    pub tms: Option<f64>,
}

impl ManifestRow {
    pub fn score(&self, target: Target) -> Option<f64> {
        match target {
            Target::Cuhdrs => self.cuhdrs,
            Target::Tfc => self.tfc,
            Target::Tms => self.tms,
        }
    }

    /// Audio path, relative entries resolved against `base`.
    pub fn resolve(&self, base: &Path) -> PathBuf {
        let p = Path::new(&self.path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }
}

const MANIFEST_COLUMNS: [&str; 6] = ["path", "subject_id", "group", "cuhdrs", "tfc", "tms"];

/// Parses and validates a manifest: exact header, known groups, numeric
/// scores, unique non-empty subject ids. Audio files are not opened here.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != MANIFEST_COLUMNS {
        return Err(Error::data(format!(
            "{}: header must be {}",
            path.display(),
            MANIFEST_COLUMNS.join(",")
        )));
    }
    let mut rows = Vec::new();
    let mut seen = HashSet::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let at = |msg: String| Error::data(format!("{} row {}: {msg}", path.display(), line + 2));
        let score = |i: usize| -> Result<Option<f64>> {
            let cell = &record[i];
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| at(format!("{} is not a number: {cell:?}", MANIFEST_COLUMNS[i])))
        };
        let row = ManifestRow {
            path: record[0].to_string(),
            subject_id: record[1].to_string(),
            group: record[2].parse().map_err(|e: Error| at(e.to_string()))?,
            cuhdrs: score(3)?,
            tfc: score(4)?,
            tms: score(5)?,
        };
        if row.path.is_empty() || row.subject_id.is_empty() {
            return Err(at("path and subject_id must be non-empty".into()));
        }
        if !seen.insert(row.subject_id.clone()) {
            return Err(at(format!("duplicate subject_id {}", row.subject_id)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_manifest(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MANIFEST_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.path.clone(),
            r.subject_id.clone(),
            r.group.to_string(),
            fmt_opt(r.cuhdrs),
            fmt_opt(r.tfc),
            fmt_opt(r.tms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Feature families of the models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// The thirteen phonatory features (tremor indices excluded).
    Phonatory,
    /// The 3157 modulation power spectrum cells.
    Mps,
    /// Phonatory followed by MPS (3170 columns).
    Combined,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Phonatory, FeatureSet::Mps, FeatureSet::Combined];

    pub fn key(self) -> &'static str {
        match self {
            FeatureSet::Phonatory => "phonatory",
            FeatureSet::Mps => "mps",
            FeatureSet::Combined => "combined",
        }
    }

    pub fn dimension(self) -> usize {
        self.column_names().len()
    }

    pub fn uses_mps(self) -> bool {
        self != FeatureSet::Phonatory
    }

    pub fn column_names(self) -> Vec<String> {
        let phon = || Feature::model_set().map(|f| f.key().to_string());
        match self {
            FeatureSet::Phonatory => phon().collect(),
            FeatureSet::Mps => mps::feature_names(),
            FeatureSet::Combined => phon().chain(mps::feature_names()).collect(),
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.key() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("unknown feature set {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub group: Group,
    pub cuhdrs: Option<f64>,
    pub tfc: Option<f64>,
    pub tms: Option<f64>,
    pub phonatory: PhonatoryFeatures,
    pub mps: Option<Vec<f64>>,
}

impl SubjectRecord {
    pub fn score(&self, target: Target) -> Option<f64> {
        match target {
            Target::Cuhdrs => self.cuhdrs,
            Target::Tfc => self.tfc,
            Target::Tms => self.tms,
        }
    }

    /// Feature vector for `set`, or `None` when any entry is missing.
    pub fn features(&self, set: FeatureSet) -> Option<Vec<f64>> {
        let phon = || -> Option<Vec<f64>> {
            Feature::model_set().map(|f| self.phonatory.get(f)).collect()
        };
        let mps = || self.mps.as_ref().filter(|v| v.len() == mps::FEATURE_LEN).cloned();
        match set {
            FeatureSet::Phonatory => phon(),
            FeatureSet::Mps => mps(),
            FeatureSet::Combined => {
                let mut v = phon()?;
                v.extend(mps()?);
                Some(v)
            }
        }
    }
}

/// Rows with every column of a feature set present.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub x: Vec<Vec<f64>>,
    pub columns: Vec<String>,
    pub subject_ids: Vec<String>,
    pub groups: Vec<Group>,
    /// Indices into the source table of the kept rows.
    pub rows: Vec<usize>,
    /// Subject ids dropped for missing values.
    pub dropped: Vec<String>,
}

impl DesignMatrix {
    pub fn labels(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.index()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub rows: Vec<SubjectRecord>,
}

impl FeatureTable {
    pub fn new(rows: Vec<SubjectRecord>) -> Self {
        Self { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Gene carriers only, as used for score regression.
    pub fn carriers(&self) -> FeatureTable {
        FeatureTable::new(self.rows.iter().filter(|r| r.group.is_carrier()).cloned().collect())
    }

    pub fn design_matrix(&self, set: FeatureSet) -> DesignMatrix {
        let mut out = DesignMatrix {
            x: Vec::new(),
            columns: set.column_names(),
            subject_ids: Vec::new(),
            groups: Vec::new(),
            rows: Vec::new(),
            dropped: Vec::new(),
        };
        for (i, r) in self.rows.iter().enumerate() {
            match r.features(set) {
                Some(v) => {
                    out.x.push(v);
                    out.subject_ids.push(r.subject_id.clone());
                    out.groups.push(r.group);
                    out.rows.push(i);
                }
                None => out.dropped.push(r.subject_id.clone()),
            }
        }
        out
    }

    /// Writes one CSV row per subject: metadata, the fifteen feature values
    /// (empty when not computable), break bookkeeping and one computability
    /// flag per feature.
    pub fn write_phonatory_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(phonatory_header())?;
        for r in &self.rows {
            let p = &r.phonatory;
            let mut rec = vec![
                r.subject_id.clone(),
                r.group.to_string(),
                fmt_opt(r.cuhdrs),
                fmt_opt(r.tfc),
                fmt_opt(r.tms),
            ];
            rec.extend(Feature::ALL.iter().map(|&f| fmt_opt(p.get(f))));
            rec.push(format!("{}", p.phonation_end));
            rec.push(u8::from(p.first_break.is_some()).to_string());
            rec.extend(Feature::ALL.iter().map(|&f| u8::from(p.is_computable(f)).to_string()));
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`write_phonatory_csv`](Self::write_phonatory_csv).
    /// MPS vectors are not part of the file and are left empty.
    pub fn read_phonatory_csv(path: impl AsRef<Path>) -> Result<FeatureTable> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        if header != phonatory_header() {
            return Err(Error::data(format!("{}: unexpected feature table header", path.display())));
        }
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let at = |msg: String| Error::data(format!("{} row {}: {msg}", path.display(), line + 2));
            let num = |i: usize| -> Result<Option<f64>> {
                let cell = &record[i];
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|_| at(format!("{} is not a number", header[i])))
                }
            };
            let mut p = PhonatoryFeatures::default();
            for (k, &f) in Feature::ALL.iter().enumerate() {
                p.set(f, num(5 + k)?);
                if &record[22 + k] == "0" {
                    p.not_computable.insert(f, "not computable".into());
                }
            }
            p.phonation_end = num(20)?.unwrap_or(0.0);
            if &record[21] == "0" {
                p.first_break = None;
            }
            rows.push(SubjectRecord {
                subject_id: record[0].to_string(),
                group: record[1].parse().map_err(|e: Error| at(e.to_string()))?,
                cuhdrs: num(2)?,
                tfc: num(3)?,
                tms: num(4)?,
                phonatory: p,
                mps: None,
            });
        }
        Ok(FeatureTable { rows })
    }
}

fn phonatory_header() -> Vec<String> {
    let mut h: Vec<String> = ["subject_id", "group", "cuhdrs", "tfc", "tms"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(Feature::ALL.iter().map(|f| f.key().to_string()));
    h.push("phonation_end".into());
    h.push("has_break".into());
    h.extend(Feature::ALL.iter().map(|f| format!("{}_computable", f.key())));
    h
}

/// Problem met while processing one manifest row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowIssue {
    pub subject_id: String,
    pub path: String,
    /// `audio`, `phonatory` or `mps`.
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchExtraction {
    pub table: FeatureTable,
    /// Full MPS matrices, aligned with `table.rows`.
    pub mps: Vec<Option<mps::MpsMatrix>>,
    /// Rows that failed (absent from the table) or lost their MPS.
    pub issues: Vec<RowIssue>,
}

/// Extracts phonatory features and, when `mps_cfg` is given, the MPS of
/// every manifest row, in parallel. A row whose audio or phonatory
/// analysis fails is reported and skipped; an MPS failure keeps the row
/// without MPS. Output order follows the manifest.
pub fn extract_manifest(
    rows: &[ManifestRow],
    base: &Path,
    cfg: &ExtractionConfig,
    mps_cfg: Option<&mps::MpsConfig>,
) -> BatchExtraction {
    let outcomes = crate::par::map(rows, |row| {
        let issue = |stage: &str, e: Error| RowIssue {
            subject_id: row.subject_id.clone(),
            path: row.path.clone(),
            stage: stage.to_string(),
            reason: e.to_string(),
        };
        let clip = crate::audio::load_wav(row.resolve(base)).map_err(|e| issue("audio", e))?;
        let phonatory = crate::phonatory::extract_all(&clip, cfg).map_err(|e| issue("phonatory", e))?;
        let (matrix, mps_issue) = match mps_cfg.map(|c| mps::compute_mps(&clip, c)) {
            Some(Ok(m)) => (Some(m), None),
            Some(Err(e)) => (None, Some(issue("mps", e))),
            None => (None, None),
        };
        let record = SubjectRecord {
            subject_id: row.subject_id.clone(),
            group: row.group,
            cuhdrs: row.cuhdrs,
            tfc: row.tfc,
            tms: row.tms,
            phonatory,
            mps: matrix.as_ref().map(mps::mps_feature_vector),
        };
        Ok::<_, RowIssue>((record, matrix, mps_issue))
    });
    let mut out = BatchExtraction {
        table: FeatureTable::default(),
        mps: Vec::new(),
        issues: Vec::new(),
    };
    for o in outcomes {
        match o {
            Ok((record, matrix, issue)) => {
                out.table.rows.push(record);
                out.mps.push(matrix);
                out.issues.extend(issue);
            }
            Err(issue) => out.issues.push(issue),
        }
    }
    out
}
