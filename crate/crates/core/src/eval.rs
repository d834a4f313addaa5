//! RMSE, the month-holdout experiment and its CSV/SVG artifacts.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{AnyModel, DeepTfp, Lstm, LstmConfig, ModelConfig, ModelError, ModelKind, Persistence};
use crate::series::{split_by_month, DataError, FlowSeries, WindowSpec, YearMonth};
use crate::trainer::{train, TrainConfig, TrainError, TrainReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("rmse needs equal lengths, got {actual} and {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("rmse of an empty sequence")]
    Empty,
    #[error("series ends in {0}, which is not a complete month")]
    IncompleteMonth(YearMonth),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// `sqrt(mean((predicted - actual)²))`.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(EvalError::Empty);
    }
    let sse: f64 = actual.iter().zip(predicted).map(|(a, p)| (p - a) * (p - a)).sum();
    Ok((sse / actual.len() as f64).sqrt())
}

/// Which months train the models; the last month of the series is always
/// the test month.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    /// The two months before the test month.
    TwoMonths,
    /// Only the month before the test month.
    OneMonth,
}

impl Protocol {
    pub fn train_months(self, test: YearMonth) -> Vec<YearMonth> {
        match self {
            Protocol::TwoMonths => vec![test.prev().prev(), test.prev()],
            Protocol::OneMonth => vec![test.prev()],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::TwoMonths => "4a",
            Protocol::OneMonth => "4b",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "4a" => Ok(Protocol::TwoMonths),
            "4b" => Ok(Protocol::OneMonth),
            other => Err(format!("unknown protocol {other:?}, expected 4a or 4b")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub spec: WindowSpec,
    pub model: ModelConfig,
    pub lstm_hidden: usize,
    pub train: TrainConfig,
    /// Seed for parameter initialization.
    pub init_seed: u64,
    pub models: Vec<ModelKind>,
    /// When set, each trained model writes its run under `<root>/<model>`.
    pub run_root: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: Protocol::TwoMonths,
            spec: WindowSpec::default(),
            model: ModelConfig::default(),
            lstm_hidden: 16,
            train: TrainConfig::default(),
            init_seed: 1,
            models: vec![ModelKind::DeepTfp, ModelKind::Lstm, ModelKind::Persistence],
            run_root: None,
        }
    }
}

impl ExperimentConfig {
    /// Hex SHA-256 of every setting that affects results.
    pub fn digest(&self, series: &FlowSeries) -> String {
        let mut train = self.train.clone();
        train.run_dir = None;
        let text = format!(
            "{:?}|{:?}|{:?}|{}|{:?}|{}|{:?}|{}|{}|{}x{}",
            self.protocol,
            self.spec,
            self.model,
            self.lstm_hidden,
            train,
            self.init_seed,
            self.models,
            series.start_timestamp(),
            series.len(),
            series.rows(),
            series.cols()
        );
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Results of one model over the test month.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelResult {
    pub kind: ModelKind,
    /// Road-averaged prediction per test interval.
    pub predicted: Vec<f64>,
    /// Mean over roads of the squared error per test interval.
    pub interval_mse: Vec<f64>,
    /// Over all roads and intervals, in flow units.
    pub rmse: f64,
    pub train_report: Option<TrainReport>,
    pub model: AnyModel,
}

impl ModelResult {
    /// RMSE between the road-averaged actual and predicted curves.
    pub fn curve_rmse(&self, actual: &[f64]) -> f64 {
        rmse(actual, &self.predicted).unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub name: String,
    pub timestamps: Vec<DateTime<Utc>>,
    /// Road-averaged observed flow per test interval.
    pub actual: Vec<f64>,
    pub models: Vec<ModelResult>,
    pub config_digest: String,
}

impl EvalReport {
    pub fn result(&self, kind: ModelKind) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.kind == kind)
    }

    /// `timestamp,actual,<model>_pred,<model>_mse,...`
    pub fn report_csv(&self) -> String {
        let mut out = String::from("timestamp,actual");
        for m in &self.models {
            write!(out, ",{0}_pred,{0}_mse", m.kind).unwrap();
        }
        out.push('\n');
        for (i, ts) in self.timestamps.iter().enumerate() {
            write!(out, "{},{}", ts.format("%Y-%m-%dT%H:%M:%SZ"), self.actual[i]).unwrap();
            for m in &self.models {
                write!(out, ",{},{}", m.predicted[i], m.interval_mse[i]).unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// `model,rmse,curve_rmse`, one row per model.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("model,rmse,curve_rmse\n");
        for m in &self.models {
            writeln!(out, "{},{},{}", m.kind, m.rmse, m.curve_rmse(&self.actual)).unwrap();
        }
        out
    }

    /// Line chart of the actual curve and each model's curve.
    pub fn comparison_svg(&self) -> String {
        const W: f64 = 1200.0;
        const H: f64 = 400.0;
        const PAD: f64 = 40.0;
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
        let mut series: Vec<(String, &[f64])> = vec![("actual".into(), &self.actual)];
        series.extend(self.models.iter().map(|m| (m.kind.to_string(), m.predicted.as_slice())));
        let (lo, hi) = series
            .iter()
            .flat_map(|(_, v)| v.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let n = self.actual.len().max(2) - 1;

        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
        );
        writeln!(svg, "<title>{}</title>", escape(&self.name)).unwrap();
        writeln!(
            svg,
            "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#999\"/>",
            W - 2.0 * PAD,
            H - 2.0 * PAD
        )
        .unwrap();
        for (k, (label, values)) in series.iter().enumerate() {
            let color = colors[k % colors.len()];
            let points: Vec<String> = values
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let x = PAD + (W - 2.0 * PAD) * i as f64 / n as f64;
                    let y = H - PAD - (H - 2.0 * PAD) * (v - lo) / span;
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" points=\"{}\"><title>{}</title></polyline>",
                points.join(" "),
                escape(label)
            )
            .unwrap();
            writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" fill=\"{color}\" font-size=\"12\">{}</text>",
                PAD + 10.0 + 120.0 * k as f64,
                PAD - 10.0,
                escape(label)
            )
            .unwrap();
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// The last month of `series`, which must end on its final interval.
pub fn last_full_month(series: &FlowSeries) -> Result<YearMonth> {
    let month = series.month_of(series.len() - 1);
    let end = series.timestamp(series.len() - 1) + chrono::Duration::seconds(series.interval_seconds());
    if end != month.next().start() {
        return Err(EvalError::IncompleteMonth(month));
    }
    Ok(month)
}

fn build_model(kind: ModelKind, config: &ExperimentConfig, rows: usize, cols: usize) -> Result<AnyModel> {
    Ok(match kind {
        ModelKind::DeepTfp => AnyModel::DeepTfp(DeepTfp::new(config.model, config.spec, rows, cols, config.init_seed)?),
        ModelKind::Lstm => {
            let lstm = LstmConfig {
                hidden: config.lstm_hidden,
                ..LstmConfig::for_spec(&config.spec)
            };
            AnyModel::Lstm(Lstm::new(lstm, config.spec, rows, cols, config.init_seed)?)
        }
        ModelKind::Persistence => AnyModel::Persistence(Persistence::new(config.spec, rows, cols)),
    })
}

/// Trains each model on the protocol's training months, then predicts every
/// interval of the final month one step ahead from observed history.
pub fn run_experiment(series: Arc<FlowSeries>, config: &ExperimentConfig) -> Result<EvalReport> {
    let test_month = last_full_month(&series)?;
    let train_months = config.protocol.train_months(test_month);
    let (train_set, test_set) = split_by_month(Arc::clone(&series), config.spec, &train_months, test_month)?;
    let frames = test_set.normalized_frames();
    let norm = *test_set.normalizer();
    let ts: Vec<usize> = test_set.instances().iter().map(|i| i.t).collect();
    let cells = series.cells() as f64;
    let actual: Vec<f64> = ts.iter().map(|&t| series.frame(t).iter().sum::<f64>() / cells).collect();

    let mut models = Vec::new();
    for &kind in &config.models {
        let mut model = build_model(kind, config, series.rows(), series.cols())?;
        let train_report = if kind == ModelKind::Persistence {
            None
        } else {
            let mut tc = config.train.clone();
            tc.run_dir = config.run_root.as_ref().map(|r| r.join(kind.as_str()));
            Some(train(&mut model, &train_set, &tc)?)
        };
        let preds = model.as_forecaster().predict(frames, &ts)?;
        let mut predicted = Vec::with_capacity(ts.len());
        let mut interval_mse = Vec::with_capacity(ts.len());
        for (&t, p) in ts.iter().zip(&preds) {
            let p = norm.inverse_all(p);
            let obs = series.frame(t);
            predicted.push(p.iter().sum::<f64>() / cells);
            interval_mse.push(obs.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / cells);
        }
        let rmse = (interval_mse.iter().sum::<f64>() / interval_mse.len() as f64).sqrt();
        models.push(ModelResult {
            kind,
            predicted,
            interval_mse,
            rmse,
            train_report,
            model,
        });
    }
    Ok(EvalReport {
        name: format!("protocol {} test {}", config.protocol, test_month),
        timestamps: ts.iter().map(|&t| series.timestamp(t)).collect(),
        actual,
        models,
        config_digest: config.digest(&series),
    })
}

/// Writes `report.csv`, `summary.csv` and `comparison.svg` into `dir`.
pub fn emit_artifacts(report: &EvalReport, dir: &Path) -> Result<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, body) in [
        ("report.csv", report.report_csv()),
        ("summary.csv", report.summary_csv()),
        ("comparison.svg", report.comparison_svg()),
    ] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate, CityConfig};
    use crate::trainer::OptimizerKind;

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&[2.0], &[5.0]).unwrap(), 3.0);
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(EvalError::LengthMismatch { .. })));
        assert!(matches!(rmse(&[], &[]), Err(EvalError::Empty)));
    }

    #[test]
    fn protocols_differ_only_in_training_months() {
        let dec = YearMonth::new(2016, 12);
        assert_eq!(Protocol::TwoMonths.train_months(dec), vec![YearMonth::new(2016, 10), YearMonth::new(2016, 11)]);
        assert_eq!(Protocol::OneMonth.train_months(dec), vec![YearMonth::new(2016, 11)]);
        assert_eq!("4a".parse::<Protocol>().unwrap(), Protocol::TwoMonths);
        assert!("4c".parse::<Protocol>().is_err());
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            protocol: Protocol::OneMonth,
            ..ExperimentConfig::default()
        };
        let city = generate(&CityConfig {
            rows: 2,
            cols: 2,
            ..CityConfig::default()
        })
        .unwrap();
        assert_ne!(a.digest(&city.series), b.digest(&city.series));
    }

    fn quiet_city() -> Arc<FlowSeries> {
        let cfg = CityConfig {
            rows: 3,
            cols: 3,
            noise: 0.0,
            incident_rate: 0.0,
            weekend_damping: 0.0,
            ..CityConfig::default()
        };
        Arc::new(generate(&cfg).unwrap().series)
    }

    #[test]
    fn persistence_lags_a_daily_oracle_on_a_noiseless_city() {
        let series = quiet_city();
        let config = ExperimentConfig {
            models: vec![ModelKind::Persistence],
            ..ExperimentConfig::default()
        };
        let report = run_experiment(Arc::clone(&series), &config).unwrap();
        assert_eq!(report.actual.len(), 31 * 96);
        let persistence = report.result(ModelKind::Persistence).unwrap();
        assert!(persistence.rmse > 1.0);

        // Predicting the value one day earlier is exact on this city.
        let (first, last) = series.month_range(YearMonth::new(2016, 12)).unwrap();
        let (actual, daily): (Vec<f64>, Vec<f64>) = (first..=last)
            .flat_map(|t| series.frame(t).iter().copied().zip(series.frame(t - 96).iter().copied()))
            .unzip();
        assert_eq!(rmse(&actual, &daily).unwrap(), 0.0);
    }

    #[test]
    fn report_is_internally_consistent_and_artifacts_are_well_formed() {
        let series = quiet_city();
        let config = ExperimentConfig {
            spec: WindowSpec {
                closeness: 2,
                period_len: 1,
                trend_len: 1,
                period: 96,
                trend: 672,
            },
            model: ModelConfig {
                features: 2,
                residual_units: 1,
                kernel_size: 3,
                ar_lags: 2,
            },
            lstm_hidden: 3,
            train: TrainConfig {
                max_epochs: 1,
                patience: 0,
                batch_size: 256,
                optimizer: OptimizerKind::Adam,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let report = run_experiment(Arc::clone(&series), &config).unwrap();
        assert_eq!(report.models.len(), 3);
        for m in &report.models {
            assert_eq!(m.predicted.len(), report.actual.len());
            let recomputed = (m.interval_mse.iter().sum::<f64>() / m.interval_mse.len() as f64).sqrt();
            assert!((recomputed - m.rmse).abs() < 1e-9);
        }

        let dir = tempfile::tempdir().unwrap();
        emit_artifacts(&report, dir.path()).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 4);
        let rows = fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(rows.lines().count(), 1 + 2976);
        let svg = fs::read_to_string(dir.path().join("comparison.svg")).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let lines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
        assert_eq!(lines, 4);

        let again = run_experiment(series, &config).unwrap();
        assert_eq!(again.report_csv(), report.report_csv());
        assert_eq!(again.summary_csv(), report.summary_csv());
    }

    #[test]
    fn incomplete_final_month_is_rejected() {
        let series = quiet_city();
        let cut = series.truncated(series.len() - 5);
        assert!(matches!(
            run_experiment(Arc::new(cut), &ExperimentConfig::default()),
            Err(EvalError::IncompleteMonth(_))
        ));
    }
}
