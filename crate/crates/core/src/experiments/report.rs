use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::signal::{periodogram, write_wav, AudioClip};

/// F0 bands relative to the training range `[L, U]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    /// `f <= L/2`
    #[serde(rename = "under_half_L")]
    UnderHalfL,
    /// `L/2 < f <= L`
    #[serde(rename = "above_half_L")]
    AboveHalfL,
    /// `L < f <= U`
    #[serde(rename = "inside")]
    Inside,
    /// `U < f <= 3U/2`
    #[serde(rename = "under_3half_U")]
    UnderThreeHalfU,
    /// `f > 3U/2`
    #[serde(rename = "above_3half_U")]
    AboveThreeHalfU,
    /// Mean over the five bands.
    #[serde(rename = "average")]
    Average,
}

impl Band {
    pub const TEST_BANDS: [Band; 5] = [
        Band::UnderHalfL,
        Band::AboveHalfL,
        Band::Inside,
        Band::UnderThreeHalfU,
        Band::AboveThreeHalfU,
    ];

    /// Every band is closed at its upper edge, so `L` itself is outside the
    /// training range while `U` is inside.
    pub fn classify(f0_hz: f64, lower: f64, upper: f64) -> Band {
        if f0_hz <= lower / 2.0 {
            Band::UnderHalfL
        } else if f0_hz <= lower {
            Band::AboveHalfL
        } else if f0_hz <= upper {
            Band::Inside
        } else if f0_hz <= 1.5 * upper {
            Band::UnderThreeHalfU
        } else {
            Band::AboveThreeHalfU
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::UnderHalfL => "under_half_L",
            Band::AboveHalfL => "above_half_L",
            Band::Inside => "inside",
            Band::UnderThreeHalfU => "under_3half_U",
            Band::AboveThreeHalfU => "above_3half_U",
            Band::Average => "average",
        }
    }
}

/// Score of one generated test utterance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRow {
    pub profile: String,
    pub model: String,
    /// Empty for networks without adaptive blocks.
    pub dense_factor: Option<u32>,
    pub f0_hz: f64,
    pub phase_index: usize,
    pub band: Band,
    pub snr_db: f64,
    pub measured_f0_hz: f64,
    /// `ln(measured) - ln(f0)`.
    pub log_f0_error: f64,
    /// False when no spectral peak was found; the measured F0 then sits at
    /// the search floor.
    pub tone_detected: bool,
    #[serde(skip)]
    pub audio: Option<AudioClip>,
}

/// Per-band aggregate of one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandAggregate {
    pub model: String,
    pub dense_factor: Option<u32>,
    pub band: Band,
    pub mean_snr_db: f64,
    /// Root mean square of the member rows' log-F0 errors; for `average`,
    /// the mean over the five bands.
    pub mean_logf0_rmse: f64,
    pub n: usize,
    /// Half-width of the 95% Student-t interval of the mean SNR.
    pub snr_ci95_db: f64,
}

/// Training summary of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub model: String,
    pub dense_factor: Option<u32>,
    pub parameters: usize,
    /// `ok` or `failed: <reason>`.
    pub status: String,
    pub steps: usize,
    /// Mean of the last 50 training losses.
    pub final_train_loss: Option<f64>,
    pub heldout_loss: Option<f64>,
    pub from_cache: bool,
    /// Wall time of training, kept across cache hits.
    #[serde(default)]
    pub train_seconds: Option<f64>,
    /// Wall time of generating and scoring the test grid.
    #[serde(default)]
    pub eval_seconds: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub profile: String,
    /// Training F0 range `(L, U)` the bands are relative to.
    pub train_range_hz: (f64, f64),
    pub runs: Vec<RunSummary>,
    pub groups: Vec<BandAggregate>,
    pub rows: Vec<UtteranceRow>,
}

impl EvalReport {
    pub fn group(&self, model: &str, dense_factor: Option<u32>, band: Band) -> Option<&BandAggregate> {
        self.groups
            .iter()
            .find(|g| g.model == model && g.dense_factor == dense_factor && g.band == band)
    }

    /// Appends another report's runs, rows and groups.
    pub fn extend(&mut self, other: EvalReport) {
        if self.profile.is_empty() {
            self.profile = other.profile;
            self.train_range_hz = other.train_range_hz;
        }
        self.runs.extend(other.runs);
        self.groups.extend(other.groups);
        self.rows.extend(other.rows);
    }
}

fn ci95(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    t * (var / n as f64).sqrt()
}

/// Groups rows by model and dense factor (in order of first appearance) and
/// aggregates each band plus the five-band average.
///
/// Panics if a row's band disagrees with its frequency.
pub fn band_group_metrics(rows: &[UtteranceRow], lower: f64, upper: f64) -> Vec<BandAggregate> {
    let mut keys: Vec<(String, Option<u32>)> = Vec::new();
    for r in rows {
        let k = (r.model.clone(), r.dense_factor);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::new();
    for (model, a) in keys {
        let mut band_rows = Vec::new();
        for band in Band::TEST_BANDS {
            let members: Vec<&UtteranceRow> = rows
                .iter()
                .filter(|r| r.model == model && r.dense_factor == a)
                .filter(|r| {
                    let b = Band::classify(r.f0_hz, lower, upper);
                    assert_eq!(b, r.band, "{} Hz row filed under {:?}", r.f0_hz, r.band);
                    b == band
                })
                .collect();
            if members.is_empty() {
                continue;
            }
            let n = members.len();
            let snr: Vec<f64> = members.iter().map(|r| r.snr_db).collect();
            let agg = BandAggregate {
                model: model.clone(),
                dense_factor: a,
                band,
                mean_snr_db: snr.iter().sum::<f64>() / n as f64,
                mean_logf0_rmse: (members.iter().map(|r| r.log_f0_error.powi(2)).sum::<f64>() / n as f64).sqrt(),
                n,
                snr_ci95_db: ci95(&snr),
            };
            band_rows.push(agg);
        }
        let k = band_rows.len() as f64;
        let average = BandAggregate {
            model: model.clone(),
            dense_factor: a,
            band: Band::Average,
            mean_snr_db: band_rows.iter().map(|g| g.mean_snr_db).sum::<f64>() / k,
            mean_logf0_rmse: band_rows.iter().map(|g| g.mean_logf0_rmse).sum::<f64>() / k,
            n: band_rows.iter().map(|g| g.n).sum(),
            snr_ci95_db: f64::NAN,
        };
        out.extend(band_rows);
        out.push(average);
    }
    out
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: String,
    pub dense_factor: Option<u32>,
    pub band: Band,
    pub mean_snr_db: f64,
    pub mean_logf0_rmse: f64,
    pub n: usize,
}

impl From<&BandAggregate> for SummaryRow {
    fn from(g: &BandAggregate) -> Self {
        SummaryRow {
            model: g.model.clone(),
            dense_factor: g.dense_factor,
            band: g.band,
            mean_snr_db: g.mean_snr_db,
            mean_logf0_rmse: g.mean_logf0_rmse,
            n: g.n,
        }
    }
}

/// Files written by [`emit_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct ReportPaths {
    pub summary: PathBuf,
    pub per_utterance: PathBuf,
    pub json: PathBuf,
    pub psd: Vec<PathBuf>,
    pub wavs: Vec<PathBuf>,
}

/// `<model>_<a>_<f0hz>_<phaseidx>`, with `na` for fixed networks.
pub fn utterance_stem(row: &UtteranceRow) -> String {
    let a = row.dense_factor.map_or_else(|| "na".to_string(), |a| a.to_string());
    format!("{}_{}_{}_{}", row.model, a, row.f0_hz, row.phase_index)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Format {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("{other:?}"),
        },
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv`, `per_utterance.csv` and `report.json` into `dir`,
/// plus `psd/*.csv` and `wav/*.wav` for rows that kept their audio.
pub fn emit_report(report: &EvalReport, dir: &Path, psd_max_hz: Option<f64>, wavs: bool) -> Result<ReportPaths> {
    if report.groups.is_empty() && report.runs.is_empty() {
        return Err(Error::data("report is empty"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = dir.join("summary.csv");
    write_csv(&summary, report.groups.iter().map(SummaryRow::from))?;
    let per_utterance = dir.join("per_utterance.csv");
    write_csv(&per_utterance, &report.rows)?;
    let json = dir.join("report.json");
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&json, text).map_err(|e| Error::io(&json, e))?;

    let mut paths = ReportPaths {
        summary,
        per_utterance,
        json,
        psd: Vec::new(),
        wavs: Vec::new(),
    };
    for row in &report.rows {
        let Some(audio) = &row.audio else { continue };
        let stem = utterance_stem(row);
        if let Some(max_hz) = psd_max_hz {
            let psd_dir = dir.join("psd");
            fs::create_dir_all(&psd_dir).map_err(|e| Error::io(&psd_dir, e))?;
            let path = psd_dir.join(format!("{stem}.csv"));
            let psd = periodogram(audio)?;
            #[derive(Serialize)]
            struct PsdRow {
                freq_hz: f64,
                power: f64,
            }
            let rows = psd
                .freqs_hz
                .iter()
                .zip(&psd.power)
                .take_while(|(f, _)| **f <= max_hz)
                .map(|(&freq_hz, &power)| PsdRow { freq_hz, power });
            write_csv(&path, rows)?;
            paths.psd.push(path);
        }
        if wavs {
            let wav_dir = dir.join("wav");
            fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
            let path = wav_dir.join(format!("{stem}.wav"));
            write_wav(&path, audio)?;
            paths.wavs.push(path);
        }
    }
    Ok(paths)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(model: &str, a: Option<u32>, f0: f64, snr: f64, err: f64) -> UtteranceRow {
        UtteranceRow {
            profile: "desk".into(),
            model: model.into(),
            dense_factor: a,
            f0_hz: f0,
            phase_index: 0,
            band: Band::classify(f0, 80.0, 400.0),
            snr_db: snr,
            measured_f0_hz: f0 * err.exp(),
            log_f0_error: err,
            tone_detected: true,
            audio: None,
        }
    }

    #[test]
    fn band_boundaries() {
        let c = |f| Band::classify(f, 80.0, 400.0);
        assert_eq!(c(40.0), Band::UnderHalfL);
        assert_eq!(c(50.0), Band::AboveHalfL);
        assert_eq!(c(80.0), Band::AboveHalfL);
        assert_eq!(c(100.0), Band::Inside);
        assert_eq!(c(400.0), Band::Inside);
        assert_eq!(c(450.0), Band::UnderThreeHalfU);
        assert_eq!(c(600.0), Band::UnderThreeHalfU);
        assert_eq!(c(650.0), Band::AboveThreeHalfU);
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let rows = vec![
            row("pQPNet", Some(8), 10.0, 10.0, 0.3),
            row("pQPNet", Some(8), 20.0, 20.0, -0.4),
            row("pQPNet", Some(8), 200.0, 30.0, 0.0),
            row("WNc", None, 10.0, 1.0, 2.0),
        ];
        let g = band_group_metrics(&rows, 80.0, 400.0);
        assert_eq!(g.len(), 3 + 2);
        let under = &g[0];
        assert_eq!((under.band, under.n), (Band::UnderHalfL, 2));
        assert_eq!(under.mean_snr_db, 15.0);
        assert!((under.mean_logf0_rmse - (0.125f64).sqrt()).abs() < 1e-15);
        let avg = &g[2];
        assert_eq!(avg.band, Band::Average);
        assert_eq!(avg.mean_snr_db, 22.5);
        assert_eq!(avg.n, 3);
        assert_eq!(g[3].model, "WNc");
        assert_eq!(g[4].mean_logf0_rmse, 2.0);
    }

    #[test]
    fn ci_uses_student_t() {
        // n = 2: t(0.975, 1) = 12.706
        let c = ci95(&[0.0, 2.0]);
        assert!((c - 12.7062 * (2.0f64 / 2.0).sqrt()).abs() < 1e-3);
        assert!(ci95(&[1.0]).is_nan());
    }

    #[test]
    #[should_panic]
    fn misfiled_row_panics() {
        let mut r = row("WNc", None, 10.0, 1.0, 0.0);
        r.band = Band::Inside;
        band_group_metrics(&[r], 80.0, 400.0);
    }

    #[test]
    fn summary_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row("pQPNet", Some(8), 10.0, 10.123456789, 0.3), row("WNc", None, 700.0, -3.5, 1.0 / 3.0)];
        let report = EvalReport {
            profile: "desk".into(),
            train_range_hz: (80.0, 400.0),
            groups: band_group_metrics(&rows, 80.0, 400.0),
            rows,
            runs: vec![],
        };
        let paths = emit_report(&report, dir.path(), None, false).unwrap();
        let text = fs::read_to_string(&paths.summary).unwrap();
        assert_eq!(text.lines().next().unwrap(), "model,dense_factor,band,mean_snr_db,mean_logf0_rmse,n");
        let back = read_summary(&paths.summary).unwrap();
        let expected: Vec<SummaryRow> = report.groups.iter().map(SummaryRow::from).collect();
        assert_eq!(back, expected);
        let per = fs::read_to_string(&paths.per_utterance).unwrap();
        assert_eq!(per.lines().count(), 3);
    }

    #[test]
    fn psd_dump_peaks_at_the_tone() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = row("pQPNet", Some(8), 500.0, 0.0, 0.0);
        r.audio = Some(crate::signal::synth_sinusoid(500.0, 1.0, 22_050, 0.2, 0.5).unwrap());
        let report = EvalReport {
            profile: "desk".into(),
            train_range_hz: (80.0, 400.0),
            groups: band_group_metrics(std::slice::from_ref(&r), 80.0, 400.0),
            rows: vec![r],
            runs: vec![],
        };
        let paths = emit_report(&report, dir.path(), Some(2000.0), true).unwrap();
        assert_eq!(paths.psd.len(), 1);
        assert!(paths.wavs[0].ends_with("wav/pQPNet_8_500_0.wav"));
        let mut rd = csv::Reader::from_path(&paths.psd[0]).unwrap();
        assert_eq!(rd.headers().unwrap(), vec!["freq_hz", "power"]);
        let (mut best_f, mut best_p) = (0.0, f64::NEG_INFINITY);
        for rec in rd.records() {
            let rec = rec.unwrap();
            let (f, p): (f64, f64) = (rec[0].parse().unwrap(), rec[1].parse().unwrap());
            if p > best_p {
                (best_f, best_p) = (f, p);
            }
        }
        assert!((best_f - 500.0).abs() <= 1.0);
    }

    #[test]
    fn empty_report_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&EvalReport::default(), dir.path(), None, false).is_err());
    }
}
