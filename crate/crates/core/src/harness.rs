//! Batch evaluation over dataset manifests.
//!
//! A manifest lists reference/distorted pairs with optional saliency maps,
//! fixations and subjective scores. [`run_metrics`] evaluates the requested
//! metrics per record (in parallel, output in manifest order) and
//! [`run_correlate`] compares metric columns with MOS.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image_core::{load_image, to_grayscale, RasterImage};
use crate::quality::{
    ew_psnr, ew_ssim, ms_ssim, psnr, ssim, SsimParams, DEFAULT_PSNR_CAP_DB, MS_SSIM_WEIGHTS,
};
use crate::saliency::{self, FixationSet, SaliencyMap, KLD_EPSILON};
use crate::stats::{fraccp, plcc, srocc, ScoredGroup};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Overrides the worker count for batch evaluation.
pub const THREADS_ENV: &str = "SALIQA_THREADS";

pub const MANIFEST_COLUMNS: [&str; 9] = [
    "record_id",
    "reference_path",
    "distorted_path",
    "saliency_path",
    "fixations_path",
    "group_id",
    "preset",
    "bpp",
    "mos",
];

/// Fixed six-decimal rendering used in every CSV the toolkit writes.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        let s = format!("{v:.6}");
        // avoid "-0.000000"
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    }
}

/// Worker count: explicit request, then `SALIQA_THREADS`, then available cores.
pub fn resolve_threads(requested: Option<usize>) -> usize {
    requested
        .filter(|n| *n > 0)
        .or_else(|| {
            std::env::var(THREADS_ENV)
                .ok()
                .and_then(|v| v.trim().parse::<usize>().ok())
                .filter(|n| *n > 0)
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRecord {
    pub record_id: String,
    pub reference_path: PathBuf,
    pub distorted_path: PathBuf,
    pub saliency_path: Option<PathBuf>,
    pub fixations_path: Option<PathBuf>,
    pub group_id: String,
    pub preset: String,
    pub bpp: Option<f64>,
    pub mos: Option<f64>,
}

/// Loads and validates a manifest; relative paths resolve against its directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let mut idx = [0usize; 9];
    for (slot, column) in idx.iter_mut().zip(MANIFEST_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == column)
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                column: column.to_string(),
            })?;
    }

    let mut records = Vec::new();
    let mut seen_ids = HashSet::new();
    let mut group_refs: HashMap<String, PathBuf> = HashMap::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let field = |i: usize| record.get(idx[i]).unwrap_or("").trim();
        let record_id = field(0).to_string();
        let fail = |msg: String| {
            Error::Validation(format!(
                "{} row {} (record `{record_id}`): {msg}",
                path.display(),
                row + 2
            ))
        };
        if record_id.is_empty() {
            return Err(fail("empty record_id".into()));
        }
        if !seen_ids.insert(record_id.clone()) {
            return Err(fail("duplicate record_id".into()));
        }
        let required = |i: usize| -> Result<PathBuf> {
            let raw = field(i);
            if raw.is_empty() {
                return Err(fail(format!("empty {}", MANIFEST_COLUMNS[i])));
            }
            let p = base.join(raw);
            if !p.is_file() {
                return Err(fail(format!(
                    "{} does not exist: {}",
                    MANIFEST_COLUMNS[i],
                    p.display()
                )));
            }
            Ok(p)
        };
        let optional = |i: usize| -> Result<Option<PathBuf>> {
            if field(i).is_empty() {
                Ok(None)
            } else {
                required(i).map(Some)
            }
        };
        let number = |i: usize| -> Result<Option<f64>> {
            let raw = field(i);
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| fail(format!("bad {} `{raw}`", MANIFEST_COLUMNS[i])))
        };

        let reference_path = required(1)?;
        let distorted_path = required(2)?;
        let saliency_path = optional(3)?;
        let fixations_path = optional(4)?;
        let group_id = field(5).to_string();
        if group_id.is_empty() {
            return Err(fail("empty group_id".into()));
        }
        let bpp = number(7)?;
        if bpp.is_some_and(|b| b < 0.0) {
            return Err(fail("bpp must be nonnegative".into()));
        }
        let mos = number(8)?;
        match group_refs.get(&group_id) {
            Some(existing) if *existing != reference_path => {
                return Err(fail(format!(
                    "group `{group_id}` already uses reference {}",
                    existing.display()
                )));
            }
            Some(_) => {}
            None => {
                group_refs.insert(group_id.clone(), reference_path.clone());
            }
        }
        records.push(ManifestRecord {
            record_id,
            reference_path,
            distorted_path,
            saliency_path,
            fixations_path,
            group_id,
            preset: field(6).to_string(),
            bpp,
            mos,
        });
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Metric {
    Psnr,
    Ssim,
    MsSsim,
    EwPsnr,
    EwSsim,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Psnr,
        Metric::Ssim,
        Metric::MsSsim,
        Metric::EwPsnr,
        Metric::EwSsim,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Psnr => "psnr",
            Metric::Ssim => "ssim",
            Metric::MsSsim => "ms-ssim",
            Metric::EwPsnr => "ew-psnr",
            Metric::EwSsim => "ew-ssim",
        }
    }

    pub fn needs_saliency(&self) -> bool {
        matches!(self, Metric::EwPsnr | Metric::EwSsim)
    }

    /// Parses a comma-separated list such as `psnr,ssim,ew-psnr`.
    pub fn parse_list(list: &str) -> Result<Vec<Metric>> {
        let metrics = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Metric>>>()?;
        if metrics.is_empty() {
            return Err(Error::Parameter("no metrics requested".into()));
        }
        Ok(metrics)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| {
                Error::Parameter(format!(
                    "unknown metric `{s}` (expected one of psnr, ssim, ms-ssim, ew-psnr, ew-ssim)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub psnr_cap_db: f64,
    pub ssim: SsimParams,
    pub ms_ssim_weights: Vec<f64>,
    /// `None` defers to [`resolve_threads`].
    pub threads: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            psnr_cap_db: DEFAULT_PSNR_CAP_DB,
            ssim: SsimParams::default(),
            ms_ssim_weights: MS_SSIM_WEIGHTS.to_vec(),
            threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Value { value: f64, capped: bool },
    Error(String),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value { value, .. } => Some(*value),
            Cell::Error(_) => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Value { value, .. } => format_value(*value),
            Cell::Error(msg) => format!("error: {msg}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub record_id: String,
    pub cells: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub toolkit_version: String,
}

impl MetricReport {
    pub fn has_errors(&self) -> bool {
        self.rows
            .iter()
            .any(|r| r.cells.iter().any(|c| matches!(c, Cell::Error(_))))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let header: Vec<&str> = std::iter::once("record_id")
            .chain(self.columns.iter().map(String::as_str))
            .collect();
        let to_err = |e: csv::Error| Error::Validation(format!("writing report: {e}"));
        writer.write_record(&header).map_err(to_err)?;
        for row in &self.rows {
            let fields: Vec<String> = std::iter::once(row.record_id.clone())
                .chain(row.cells.iter().map(Cell::render))
                .collect();
            writer.write_record(&fields).map_err(to_err)?;
        }
        writer
            .flush()
            .map_err(|e| Error::Validation(format!("writing report: {e}")))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads any `record_id,<column>...` CSV; externally produced score columns are fine.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let id_col = headers
            .iter()
            .position(|h| h.trim() == "record_id")
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                column: "record_id".into(),
            })?;
        let value_cols: Vec<usize> = (0..headers.len()).filter(|i| *i != id_col).collect();
        let columns = value_cols
            .iter()
            .map(|&i| headers[i].trim().to_string())
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let cells = value_cols
                .iter()
                .map(|&i| {
                    let raw = record.get(i).unwrap_or("").trim();
                    match raw.parse::<f64>() {
                        Ok(v) if v.is_finite() => Cell::Value {
                            value: v,
                            capped: false,
                        },
                        _ => Cell::Error(raw.trim_start_matches("error: ").to_string()),
                    }
                })
                .collect();
            rows.push(ReportRow {
                record_id: record.get(id_col).unwrap_or("").trim().to_string(),
                cells,
            });
        }
        Ok(Self {
            columns,
            rows,
            toolkit_version: TOOLKIT_VERSION.to_string(),
        })
    }
}

fn load_saliency_for(path: &Path, width: usize, height: usize) -> Result<SaliencyMap> {
    SaliencyMap::load(path)?.resized(width, height)
}

fn evaluate_record(record: &ManifestRecord, metrics: &[Metric], config: &EvalConfig) -> Vec<Cell> {
    let images = load_image(&record.reference_path).and_then(|r| {
        let d = load_image(&record.distorted_path)?;
        let (r, d) = (to_grayscale(&r), to_grayscale(&d));
        if r.width() != d.width() || r.height() != d.height() {
            return Err(Error::Parameter(format!(
                "reference {}x{} and distorted {}x{} differ in size",
                r.width(),
                r.height(),
                d.width(),
                d.height()
            )));
        }
        Ok((r, d))
    });
    let (reference, distorted) = match images {
        Ok(pair) => pair,
        Err(e) => return vec![Cell::Error(e.to_string()); metrics.len()],
    };

    let saliency = if metrics.iter().any(Metric::needs_saliency) {
        Some(match &record.saliency_path {
            Some(p) => load_saliency_for(p, reference.width(), reference.height())
                .map_err(|e| e.to_string()),
            None => Err("record has no saliency map".to_string()),
        })
    } else {
        None
    };

    metrics
        .iter()
        .map(|metric| {
            let result = compute(*metric, &reference, &distorted, saliency.as_ref(), config);
            match result {
                Ok((value, capped)) => Cell::Value { value, capped },
                Err(msg) => Cell::Error(msg),
            }
        })
        .collect()
}

fn compute(
    metric: Metric,
    reference: &RasterImage,
    distorted: &RasterImage,
    saliency: Option<&std::result::Result<SaliencyMap, String>>,
    config: &EvalConfig,
) -> std::result::Result<(f64, bool), String> {
    let sal = || -> std::result::Result<&SaliencyMap, String> {
        match saliency {
            Some(Ok(map)) => Ok(map),
            Some(Err(msg)) => Err(msg.clone()),
            None => Err("saliency not loaded".to_string()),
        }
    };
    let out = match metric {
        Metric::Psnr => psnr(reference, distorted, config.psnr_cap_db).map(|s| (s.value, s.capped)),
        Metric::Ssim => ssim(reference, distorted, &config.ssim).map(|s| (s.mean, false)),
        Metric::MsSsim => {
            ms_ssim(reference, distorted, &config.ssim, &config.ms_ssim_weights).map(|v| (v, false))
        }
        Metric::EwPsnr => ew_psnr(reference, distorted, sal()?, config.psnr_cap_db)
            .map(|s| (s.value, s.capped)),
        Metric::EwSsim => ew_ssim(reference, distorted, sal()?, &config.ssim).map(|v| (v, false)),
    };
    out.map_err(|e| e.to_string())
}

/// Evaluates `metrics` on every record. Per-record failures become error cells.
pub fn run_metrics(
    records: &[ManifestRecord],
    metrics: &[Metric],
    config: &EvalConfig,
) -> Result<MetricReport> {
    if metrics.is_empty() {
        return Err(Error::Parameter("no metrics requested".into()));
    }
    let threads = resolve_threads(config.threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start {threads} workers: {e}")))?;
    let rows = pool.install(|| {
        records
            .par_iter()
            .map(|record| ReportRow {
                record_id: record.record_id.clone(),
                cells: evaluate_record(record, metrics, config),
            })
            .collect::<Vec<_>>()
    });
    Ok(MetricReport {
        columns: metrics.iter().map(|m| m.name().to_string()).collect(),
        rows,
        toolkit_version: TOOLKIT_VERSION.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationRow {
    pub metric: String,
    /// Records with a numeric value for this metric.
    pub n: usize,
    pub srocc: Option<f64>,
    pub plcc: Option<f64>,
    pub fraccp: Option<f64>,
}

/// SROCC and PLCC over all records and FracCP over groups, per report column.
pub fn run_correlate(report: &MetricReport, records: &[ManifestRecord]) -> Result<Vec<CorrelationRow>> {
    let mut by_id: HashMap<&str, &ManifestRecord> = HashMap::new();
    for record in records {
        if record.mos.is_none() {
            return Err(Error::Validation(format!(
                "record `{}` has no mos",
                record.record_id
            )));
        }
        by_id.insert(record.record_id.as_str(), record);
    }
    if report.rows.len() < 3 {
        return Err(Error::Validation(format!(
            "correlation needs at least 3 records, report has {}",
            report.rows.len()
        )));
    }
    let joined = report
        .rows
        .iter()
        .map(|row| {
            by_id
                .get(row.record_id.as_str())
                .map(|rec| (row, *rec))
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "report record `{}` is not in the manifest",
                        row.record_id
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(report
        .columns
        .iter()
        .enumerate()
        .map(|(col, name)| {
            let mut preds = Vec::new();
            let mut mos = Vec::new();
            let mut groups: Vec<ScoredGroup> = Vec::new();
            let mut group_index: HashMap<&str, usize> = HashMap::new();
            for (row, record) in &joined {
                if let Some(v) = row.cells[col].value() {
                    let m = record.mos.expect("checked above");
                    preds.push(v);
                    mos.push(m);
                    let gi = *group_index.entry(record.group_id.as_str()).or_insert_with(|| {
                        groups.push(ScoredGroup::new(record.group_id.clone(), Vec::new()));
                        groups.len() - 1
                    });
                    groups[gi].items.push((v, m));
                }
            }
            CorrelationRow {
                metric: name.clone(),
                n: preds.len(),
                srocc: srocc(&preds, &mos).ok(),
                plcc: plcc(&preds, &mos).ok(),
                fraccp: fraccp(&groups).ok(),
            }
        })
        .collect())
}

pub fn write_correlation_csv(rows: &[CorrelationRow], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Validation(format!("writing correlation table: {e}"));
    writer
        .write_record(["metric", "n", "srocc", "plcc", "fraccp"])
        .map_err(to_err)?;
    let opt = |v: Option<f64>| v.map(format_value).unwrap_or_else(|| "NA".to_string());
    for row in rows {
        writer
            .write_record([
                row.metric.clone(),
                row.n.to_string(),
                opt(row.srocc),
                opt(row.plcc),
                opt(row.fraccp),
            ])
            .map_err(to_err)?;
    }
    writer
        .flush()
        .map_err(|e| Error::Validation(format!("writing correlation table: {e}")))
}

/// NSS/SIM/CC/KLD of one predicted map against its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyScores {
    pub nss: Option<f64>,
    pub sim: f64,
    pub cc: f64,
    pub kld: f64,
}

/// Scores `pred` against `gt` after resizing `pred` to the ground-truth grid.
///
/// With `histogram_match` set, the prediction is first mapped onto the value
/// distribution of the ground truth.
pub fn score_saliency(
    pred: &SaliencyMap,
    gt: &SaliencyMap,
    fixations: Option<&FixationSet>,
    histogram_match: bool,
) -> Result<SaliencyScores> {
    let mut pred = pred.resized(gt.width(), gt.height())?;
    if histogram_match {
        pred = saliency::map_transform(&pred, gt.values())?;
    }
    Ok(SaliencyScores {
        nss: fixations.map(|f| saliency::nss(&pred, f)).transpose()?,
        sim: saliency::sim(&pred, gt)?,
        cc: saliency::cc(&pred, gt)?,
        kld: saliency::kld(&pred, gt, KLD_EPSILON)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyRow {
    pub name: String,
    pub scores: std::result::Result<SaliencyScores, String>,
}

const MAP_EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "jpg", "jpeg"];

fn find_by_stem(dir: &Path, stem: &str, extensions: &[&str]) -> Option<PathBuf> {
    extensions
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.is_file())
}

/// Pairs every map in `pred_dir` with the same-stem map in `gt_dir` (and
/// `<stem>.csv` fixations when a fixation directory is given), sorted by name.
pub fn run_salmetrics(
    pred_dir: &Path,
    gt_dir: &Path,
    fixations_dir: Option<&Path>,
    histogram_match: bool,
) -> Result<Vec<SaliencyRow>> {
    let entries = std::fs::read_dir(pred_dir).map_err(|e| Error::io(pred_dir, e))?;
    let mut preds: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| MAP_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    preds.sort();

    Ok(preds
        .par_iter()
        .map(|pred_path| {
            let name = pred_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            let scores = (|| -> Result<SaliencyScores> {
                let gt_path = find_by_stem(gt_dir, &name, &MAP_EXTENSIONS).ok_or_else(|| {
                    Error::Validation(format!("no ground-truth map for `{name}`"))
                })?;
                let pred = SaliencyMap::load(pred_path)?;
                let gt = SaliencyMap::load(&gt_path)?;
                let fixations = match fixations_dir {
                    Some(dir) => match find_by_stem(dir, &name, &["csv"]) {
                        Some(p) => Some(FixationSet::load_csv(p, gt.width(), gt.height())?),
                        None => None,
                    },
                    None => None,
                };
                score_saliency(&pred, &gt, fixations.as_ref(), histogram_match)
            })()
            .map_err(|e| e.to_string());
            SaliencyRow { name, scores }
        })
        .collect())
}

pub fn write_saliency_csv(rows: &[SaliencyRow], out: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Validation(format!("writing saliency table: {e}"));
    writer
        .write_record(["name", "nss", "sim", "cc", "kld"])
        .map_err(to_err)?;
    for row in rows {
        let fields = match &row.scores {
            Ok(s) => [
                row.name.clone(),
                s.nss.map(format_value).unwrap_or_else(|| "NA".into()),
                format_value(s.sim),
                format_value(s.cc),
                format_value(s.kld),
            ],
            Err(msg) => {
                let cell = format!("error: {msg}");
                [row.name.clone(), cell.clone(), cell.clone(), cell.clone(), cell]
            }
        };
        writer.write_record(&fields).map_err(to_err)?;
    }
    writer
        .flush()
        .map_err(|e| Error::Validation(format!("writing saliency table: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_formatting() {
        assert_eq!(format_value(1.0), "1.000000");
        assert_eq!(format_value(48.13080360867909), "48.130804");
        assert_eq!(format_value(-0.0000001), "0.000000");
        assert_eq!(format_value(f64::NAN), "nan");
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert_eq!(
            Metric::parse_list("psnr, EW_SSIM").unwrap(),
            vec![Metric::Psnr, Metric::EwSsim]
        );
        assert!(Metric::parse_list("vif").is_err());
        assert!(Metric::parse_list("").is_err());
    }

    #[test]
    fn explicit_threads_win() {
        assert_eq!(resolve_threads(Some(3)), 3);
        assert!(resolve_threads(None) >= 1);
    }

    fn report(values: &[(&str, f64)]) -> MetricReport {
        MetricReport {
            columns: vec!["m".into()],
            rows: values
                .iter()
                .map(|(id, v)| ReportRow {
                    record_id: id.to_string(),
                    cells: vec![Cell::Value {
                        value: *v,
                        capped: false,
                    }],
                })
                .collect(),
            toolkit_version: TOOLKIT_VERSION.into(),
        }
    }

    fn record(id: &str, group: &str, mos: Option<f64>) -> ManifestRecord {
        ManifestRecord {
            record_id: id.into(),
            reference_path: PathBuf::from(format!("{group}.png")),
            distorted_path: PathBuf::from(format!("{id}.png")),
            saliency_path: None,
            fixations_path: None,
            group_id: group.into(),
            preset: String::new(),
            bpp: None,
            mos,
        }
    }

    #[test]
    fn correlate_identity_and_negation() {
        let mos = [1.0, 3.0, 2.0, 5.0, 4.0, 0.5];
        let records: Vec<ManifestRecord> = mos
            .iter()
            .enumerate()
            .map(|(i, m)| record(&format!("r{i}"), if i < 3 { "g1" } else { "g2" }, Some(*m)))
            .collect();
        let ids: Vec<String> = (0..6).map(|i| format!("r{i}")).collect();
        let same: Vec<(&str, f64)> = ids.iter().map(String::as_str).zip(mos).collect();
        let rows = run_correlate(&report(&same), &records).unwrap();
        assert_eq!(rows[0].srocc, Some(1.0));
        assert!((rows[0].plcc.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rows[0].fraccp, Some(1.0));

        let neg: Vec<(&str, f64)> = ids.iter().map(String::as_str).zip(mos.map(|m| -m)).collect();
        let rows = run_correlate(&report(&neg), &records).unwrap();
        assert_eq!(rows[0].srocc, Some(-1.0));
        assert_eq!(rows[0].fraccp, Some(0.0));
    }

    #[test]
    fn correlate_requires_mos() {
        let records = vec![record("a", "g", Some(1.0)), record("b", "g", None), record("c", "g", Some(2.0))];
        let r = report(&[("a", 1.0), ("b", 2.0), ("c", 3.0)]);
        assert!(matches!(run_correlate(&r, &records), Err(Error::Validation(_))));
    }

    #[test]
    fn report_csv_round_trip() {
        let mut r = report(&[("a", 1.5), ("b", 2.25)]);
        r.rows[1].cells[0] = Cell::Error("boom".into());
        let text = r.to_csv_string();
        assert_eq!(text, "record_id,m\na,1.500000\nb,error: boom\n");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, &text).unwrap();
        let back = MetricReport::load_csv(&p).unwrap();
        assert_eq!(back.rows[0].cells[0].value(), Some(1.5));
        assert_eq!(back.rows[1].cells[0], Cell::Error("boom".into()));
        assert!(back.has_errors());
    }
}
