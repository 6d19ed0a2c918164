//! File formats: CSV schemas and JSON artifacts.
//!
//! All numeric CSV output uses Rust's shortest round-trip float formatting,
//! so re-ingestion reproduces values to the bit. Parse errors carry the
//! file path and 1-based line number.

use crate::data::{
    FeatureSeries, NormalizationParams, PipelineError, PricePoint, PriceSeries, SplitBoundaries,
    SplitSpec, VolatilitySample,
};
use crate::pmc::FilterRun;
use crate::train::ForecastModel;
use chrono::{DateTime, NaiveDateTime};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: expected header {expected:?}, got {got:?}")]
    Header {
        path: String,
        expected: &'static str,
        got: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn check_header(path: &Path, got: &str, expected: &'static str) -> Result<(), FormatError> {
    let trimmed = got.trim_start_matches('\u{feff}').trim();
    if trimmed != expected {
        return Err(FormatError::Header {
            path: path.display().to_string(),
            expected,
            got: trimmed.to_string(),
        });
    }
    Ok(())
}

/// Accepts integer epoch seconds, RFC 3339, or a naive UTC datetime with a
/// 'T' or space separator. Returns whole minutes since the epoch.
fn parse_timestamp(raw: &str) -> Option<i64> {
    if let Ok(seconds) = raw.parse::<i64>() {
        return Some(seconds.div_euclid(60));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp().div_euclid(60));
    }
    for format in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(raw, format) {
            return Some(dt.and_utc().timestamp().div_euclid(60));
        }
    }
    None
}

pub const PRICE_HEADER: &str = "timestamp,open";

/// Reads a 1-minute price CSV: `timestamp,open`, with timestamps as epoch
/// seconds or ISO-8601 datetimes, strictly increasing, opens positive.
pub fn read_price_csv(path: impl AsRef<Path>) -> Result<PriceSeries, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "empty file"))?;
    check_header(path, header, PRICE_HEADER)?;
    let mut points = Vec::new();
    let mut prev: Option<i64> = None;
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let mut fields = row.split(',');
        let (Some(ts_raw), Some(open_raw), None) = (fields.next(), fields.next(), fields.next())
        else {
            return Err(parse_error(path, line, "expected exactly 2 fields"));
        };
        let timestamp = parse_timestamp(ts_raw.trim()).ok_or_else(|| {
            parse_error(
                path,
                line,
                format!("unparseable timestamp {:?}", ts_raw.trim()),
            )
        })?;
        let open: f64 = open_raw.trim().parse().map_err(|_| {
            parse_error(
                path,
                line,
                format!("unparseable open {:?}", open_raw.trim()),
            )
        })?;
        if !(open.is_finite() && open > 0.0) {
            return Err(parse_error(
                path,
                line,
                format!("open must be positive, got {open}"),
            ));
        }
        if let Some(p) = prev {
            if timestamp <= p {
                return Err(parse_error(
                    path,
                    line,
                    format!("timestamps must be strictly increasing ({p} then {timestamp})"),
                ));
            }
        }
        prev = Some(timestamp);
        points.push(PricePoint { timestamp, open });
    }
    Ok(PriceSeries::new(points)?)
}

/// Writes the price CSV this crate ingests; timestamps as epoch seconds.
pub fn write_price_csv(path: impl AsRef<Path>, prices: &PriceSeries) -> Result<(), FormatError> {
    let mut out = String::with_capacity(prices.len() * 24 + 16);
    out.push_str(PRICE_HEADER);
    out.push('\n');
    for p in prices.points() {
        writeln!(out, "{},{}", p.timestamp * 60, p.open).expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub const FEATURE_HEADER: &str = "index,sigma2,u60sq,sigma2_norm,u60sq_norm";

/// Feature CSV: raw per-hour values plus their normalized counterparts.
/// Requires normalization statistics to be attached.
pub fn write_feature_csv(
    path: impl AsRef<Path>,
    features: &FeatureSeries,
) -> Result<(), FormatError> {
    let pairs = features.normalized_pairs()?;
    let mut out = String::with_capacity(features.len() * 64 + 48);
    out.push_str(FEATURE_HEADER);
    out.push('\n');
    for (i, (sample, pair)) in features.samples().iter().zip(&pairs).enumerate() {
        writeln!(
            out,
            "{i},{},{},{},{}",
            sample.sigma2, sample.u60sq, pair[0], pair[1]
        )
        .expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads the raw feature columns back; normalization comes from the
/// sidecar, not from the derived `_norm` columns.
pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<FeatureSeries, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "empty file"))?;
    check_header(path, header, FEATURE_HEADER)?;
    let mut samples = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_error(path, line, "expected exactly 5 fields"));
        }
        let index: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line, "unparseable index"))?;
        if index != samples.len() {
            return Err(parse_error(
                path,
                line,
                format!("index {index} out of order (expected {})", samples.len()),
            ));
        }
        let value = |k: usize, name: &str| -> Result<f64, FormatError> {
            fields[k]
                .trim()
                .parse()
                .map_err(|_| parse_error(path, line, format!("unparseable {name}")))
        };
        samples.push(VolatilitySample {
            sigma2: value(1, "sigma2")?,
            u60sq: value(2, "u60sq")?,
        });
    }
    Ok(FeatureSeries::from_samples(samples))
}

/// JSON sidecar written next to a feature CSV: everything needed to
/// reproduce the normalized view and the chronological split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSidecar {
    pub window: usize,
    pub split: SplitSpec,
    pub boundaries: SplitBoundaries,
    pub normalization: NormalizationParams,
}

/// Reads a feature CSV plus its sidecar and reattaches the normalization.
pub fn read_features(
    csv_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
) -> Result<(FeatureSeries, FeatureSidecar), FormatError> {
    let raw = read_feature_csv(&csv_path)?;
    let sidecar: FeatureSidecar = read_json(&sidecar_path)?;
    let expected = sidecar.split.boundaries(raw.len())?;
    if expected != sidecar.boundaries {
        return Err(parse_error(
            sidecar_path.as_ref(),
            1,
            format!(
                "sidecar boundaries {:?} do not match the split over {} rows",
                sidecar.boundaries,
                raw.len()
            ),
        ));
    }
    let features = FeatureSeries::with_norm(raw.samples().to_vec(), sidecar.normalization);
    Ok((features, sidecar))
}

/// Reference from a saved model back to the feature normalization it was
/// trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReference {
    pub path: String,
    pub sha256: String,
}

/// A trained model on disk: its kind tag and parameters, the seed that
/// produced it, and where its normalization came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_ref: Option<NormReference>,
    #[serde(flatten)]
    pub model: ForecastModel,
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), FormatError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).map_err(|source| FormatError::Json {
        path: path.display().to_string(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| FormatError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Trajectory CSV pairing each filter step's posterior with its
/// prediction: `t,state0,...,stateN-1,prediction`, T−1 rows.
pub fn write_posterior_csv(path: impl AsRef<Path>, run: &FilterRun) -> Result<(), FormatError> {
    let n = run.posteriors.first().map_or(0, |p| p.len());
    let mut out = String::new();
    out.push('t');
    for x in 0..n {
        write!(out, ",state{x}").expect("string write");
    }
    out.push_str(",prediction\n");
    for (t, pred) in run.predictions.iter().enumerate() {
        write!(out, "{t}").expect("string write");
        for &p in run.posteriors[t].probs() {
            write!(out, ",{p}").expect("string write");
        }
        writeln!(out, ",{pred}").expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Plot-ready trajectory CSV: `t,pred,state0,...,stateN-1,argmax`.
pub fn write_report_csv(path: impl AsRef<Path>, run: &FilterRun) -> Result<(), FormatError> {
    let n = run.posteriors.first().map_or(0, |p| p.len());
    let mut out = String::new();
    out.push_str("t,pred");
    for x in 0..n {
        write!(out, ",state{x}").expect("string write");
    }
    out.push_str(",argmax\n");
    for (t, pred) in run.predictions.iter().enumerate() {
        write!(out, "{t},{pred}").expect("string write");
        for &p in run.posteriors[t].probs() {
            write!(out, ",{p}").expect("string write");
        }
        writeln!(out, ",{}", run.posteriors[t].argmax()).expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub const REGIME_HEADER: &str = "hour,regime";

/// Ground-truth regime CSV: `hour,regime`.
pub fn write_regimes_csv(path: impl AsRef<Path>, regimes: &[usize]) -> Result<(), FormatError> {
    let mut out = String::with_capacity(regimes.len() * 8 + 16);
    out.push_str(REGIME_HEADER);
    out.push('\n');
    for (hour, r) in regimes.iter().enumerate() {
        writeln!(out, "{hour},{r}").expect("string write");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_regimes_csv(path: impl AsRef<Path>) -> Result<Vec<usize>, FormatError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "empty file"))?;
    check_header(path, header, REGIME_HEADER)?;
    let mut regimes = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != 2 {
            return Err(parse_error(path, line, "expected exactly 2 fields"));
        }
        let hour: usize = fields[0]
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line, "unparseable hour"))?;
        if hour != regimes.len() {
            return Err(parse_error(
                path,
                line,
                format!("hour {hour} out of order (expected {})", regimes.len()),
            ));
        }
        regimes.push(
            fields[1]
                .trim()
                .parse()
                .map_err(|_| parse_error(path, line, "unparseable regime"))?,
        );
    }
    Ok(regimes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BaseKind;
    use crate::pmc::PmcModel;
    use crate::train::Dataset;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    fn price_series(seed: u64, len: usize) -> PriceSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut open = 100.0;
        let points = (0..len)
            .map(|i| {
                open *= (rng.random_range(-0.001..0.001f64)).exp();
                PricePoint {
                    timestamp: i as i64,
                    open,
                }
            })
            .collect();
        PriceSeries::new(points).unwrap()
    }

    #[test]
    fn price_csv_round_trips_bitwise() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("prices.csv");
        let prices = price_series(1, 500);
        write_price_csv(&path, &prices).unwrap();
        let back = read_price_csv(&path).unwrap();
        assert_eq!(prices, back);
    }

    #[test]
    fn shortest_float_formatting_survives_reingestion() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("prices.csv");
        let awkward = 0.1 + 0.2;
        let prices = PriceSeries::new(vec![
            PricePoint {
                timestamp: 0,
                open: awkward,
            },
            PricePoint {
                timestamp: 1,
                open: 1.0 / 3.0,
            },
        ])
        .unwrap();
        write_price_csv(&path, &prices).unwrap();
        let back = read_price_csv(&path).unwrap();
        assert_eq!(back.points()[0].open.to_bits(), awkward.to_bits());
        assert_eq!(back.points()[1].open.to_bits(), (1.0f64 / 3.0).to_bits());
    }

    #[test]
    fn timestamp_formats_agree() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("prices.csv");
        // 2023-01-02T03:04:00 UTC is epoch second 1672628640.
        fs::write(
            &path,
            "timestamp,open\n\
             1672628640,100.0\n\
             2023-01-02T03:05:00,101.0\n\
             2023-01-02 03:06:00,102.0\n\
             2023-01-02T03:07:00+00:00,103.0\n",
        )
        .unwrap();
        let prices = read_price_csv(&path).unwrap();
        let minutes: Vec<i64> = prices.points().iter().map(|p| p.timestamp).collect();
        assert_eq!(minutes, vec![27877144, 27877145, 27877146, 27877147]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("prices.csv");

        fs::write(&path, "timestamp,open\n60,1.0\n120,oops\n").unwrap();
        let err = read_price_csv(&path).unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 3, .. }), "{err}");

        fs::write(&path, "timestamp,open\n120,1.0\n60,2.0\n").unwrap();
        let err = read_price_csv(&path).unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 3, .. }), "{err}");

        fs::write(&path, "timestamp,open\n60,1.0,9\n").unwrap();
        let err = read_price_csv(&path).unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 2, .. }), "{err}");

        fs::write(&path, "time,open\n60,1.0\n").unwrap();
        let err = read_price_csv(&path).unwrap_err();
        assert!(matches!(err, FormatError::Header { .. }), "{err}");

        fs::write(&path, "timestamp,open\n60,-1.0\n").unwrap();
        let err = read_price_csv(&path).unwrap_err();
        assert!(matches!(err, FormatError::Parse { line: 2, .. }), "{err}");
    }

    fn small_dataset() -> Dataset {
        let prices = price_series(9, 60 * 40 + 1);
        Dataset::from_prices(&prices, 60, SplitSpec::default()).unwrap()
    }

    #[test]
    fn feature_csv_and_sidecar_round_trip() {
        let dir = tempdir().unwrap();
        let csv = dir.path().join("features.csv");
        let json = dir.path().join("features.norm.json");
        let dataset = small_dataset();
        write_feature_csv(&csv, &dataset.features).unwrap();
        let sidecar = FeatureSidecar {
            window: dataset.window,
            split: dataset.split_spec,
            boundaries: dataset.boundaries,
            normalization: *dataset.features.norm().unwrap(),
        };
        write_json(&json, &sidecar).unwrap();
        let (features, back) = read_features(&csv, &json).unwrap();
        assert_eq!(back, sidecar);
        assert_eq!(features.samples(), dataset.features.samples());
        assert_eq!(
            features.normalized_pairs().unwrap(),
            dataset.features.normalized_pairs().unwrap()
        );
    }

    #[test]
    fn inconsistent_sidecar_is_rejected() {
        let dir = tempdir().unwrap();
        let csv = dir.path().join("features.csv");
        let json = dir.path().join("features.norm.json");
        let dataset = small_dataset();
        write_feature_csv(&csv, &dataset.features).unwrap();
        let mut sidecar = FeatureSidecar {
            window: dataset.window,
            split: dataset.split_spec,
            boundaries: dataset.boundaries,
            normalization: *dataset.features.norm().unwrap(),
        };
        sidecar.boundaries.train_end += 1;
        write_json(&json, &sidecar).unwrap();
        assert!(matches!(
            read_features(&csv, &json),
            Err(FormatError::Parse { .. })
        ));
    }

    #[test]
    fn model_file_round_trips_with_kind_tag() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let file = ModelFile {
            seed: 17,
            norm_ref: Some(NormReference {
                path: "features.norm.json".into(),
                sha256: "abc123".into(),
            }),
            model: crate::train::ForecastModel::Pmc(
                PmcModel::init(2, BaseKind::Garch, 17).unwrap(),
            ),
        };
        write_json(&path, &file).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"kind\": \"pmc\""));
        let back: ModelFile = read_json(&path).unwrap();
        assert_eq!(file, back);
    }

    #[test]
    fn trajectory_csvs_have_the_documented_schemas() {
        let dir = tempdir().unwrap();
        let model = PmcModel::init(2, BaseKind::Garch, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let feats: Vec<[f64; 2]> = (0..6)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let run = model.filter(&feats).unwrap();

        let posterior_path = dir.path().join("trajectory.csv");
        write_posterior_csv(&posterior_path, &run).unwrap();
        let text = fs::read_to_string(&posterior_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,state0,state1,prediction"));
        assert_eq!(lines.count(), 5);

        let report_path = dir.path().join("report.csv");
        write_report_csv(&report_path, &run).unwrap();
        let text = fs::read_to_string(&report_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,pred,state0,state1,argmax"));
        for (t, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 5);
            assert_eq!(fields[0].parse::<usize>().unwrap(), t);
            let s0: f64 = fields[2].parse().unwrap();
            let s1: f64 = fields[3].parse().unwrap();
            assert!((s0 + s1 - 1.0).abs() <= 1e-9);
            let argmax: usize = fields[4].parse().unwrap();
            assert_eq!(argmax, if s1 > s0 { 1 } else { 0 });
        }
    }

    #[test]
    fn regime_csv_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("regimes.csv");
        let regimes = vec![0, 0, 1, 1, 1, 0];
        write_regimes_csv(&path, &regimes).unwrap();
        assert_eq!(read_regimes_csv(&path).unwrap(), regimes);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("hour,regime\n0,0\n"));
    }
}
