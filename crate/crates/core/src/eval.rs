//! Detector evaluation kit.
//!
//! Case-level detection over labeled kinematic series, confusion-matrix
//! indices, ROC sweeps, and threshold fitting (regression slope plus
//! percentile intercepts of the speed-detrended inverse-TTC at brake
//! onset). A deterministic synthetic-case generator makes the fitting
//! pipeline testable without field data.
//!
//! Percentiles use the nearest-rank convention throughout.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::{
    assess, inverse_ttc, time_margin, ttc, KinematicPair, RiskError, RiskLevel, RiskThresholds,
};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("detections and labels have different lengths")]
    LengthMismatch,
    #[error("case series is empty")]
    EmptyCase,
    #[error("brake onset index {onset} outside series of length {len}")]
    OnsetOutOfRange { onset: usize, len: usize },
    #[error("dangerous case is missing its brake onset")]
    MissingOnset,
    #[error("need at least {need} dangerous cases, got {got}")]
    TooFewCases { need: usize, got: usize },
    #[error("host speeds at onset are (near-)constant; slope is unidentifiable")]
    DegenerateSpeeds,
    #[error("ROC needs both dangerous and normal cases")]
    OneSidedLabels,
    #[error("risk computation failed: {0}")]
    Risk(#[from] RiskError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest error: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    Dangerous,
    Normal,
}

/// One time-stamped kinematic sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedSample<T> {
    pub time: T,
    pub pair: KinematicPair<T>,
}

/// A labeled evaluation case: a kinematic series plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCase<T> {
    pub samples: Vec<TimedSample<T>>,
    pub label: CaseLabel,
    /// Sample index at which the driver braked (dangerous cases).
    pub brake_onset: Option<usize>,
}

impl<T: Real> LabeledCase<T> {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.samples.is_empty() {
            return Err(EvalError::EmptyCase);
        }
        if let Some(onset) = self.brake_onset {
            if onset >= self.samples.len() {
                return Err(EvalError::OnsetOutOfRange {
                    onset,
                    len: self.samples.len(),
                });
            }
        }
        Ok(())
    }
}

/// Case-level detector: triggers if any sample fires.
#[derive(Debug, Clone, PartialEq)]
pub enum Detector<T: Real> {
    /// Trigger when TTC drops to the threshold, s.
    TtcThreshold(T),
    /// Trigger when TM drops to the threshold, s.
    TmThreshold(T),
    /// Trigger when the combined risk level reaches `min_level`.
    Combined {
        thresholds: RiskThresholds<T>,
        min_level: RiskLevel,
    },
}

/// True iff any sample of the case triggers the detector.
pub fn detect<T: Real>(case: &LabeledCase<T>, detector: &Detector<T>) -> Result<bool, EvalError> {
    case.validate()?;
    for s in &case.samples {
        let fired = match detector {
            Detector::TtcThreshold(tau) => ttc(&s.pair)? <= *tau,
            Detector::TmThreshold(tau) => time_margin(&s.pair)? <= *tau,
            Detector::Combined {
                thresholds,
                min_level,
            } => assess(&s.pair, thresholds)?.level >= *min_level,
        };
        if fired {
            return Ok(true);
        }
    }
    Ok(false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

/// The six evaluation indices derived from the confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionIndices {
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub tn_rate: f64,
    pub accuracy: f64,
    pub precision: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn indices(&self) -> ConfusionIndices {
        ConfusionIndices {
            tp_rate: ratio(self.tp, self.tp + self.fn_),
            fp_rate: ratio(self.fp, self.fp + self.tn),
            fn_rate: ratio(self.fn_, self.tp + self.fn_),
            tn_rate: ratio(self.tn, self.fp + self.tn),
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision: ratio(self.tp, self.tp + self.fp),
        }
    }
}

/// Tally detections against labels.
pub fn confusion(detections: &[bool], labels: &[CaseLabel]) -> Result<ConfusionMatrix, EvalError> {
    if detections.is_empty() {
        return Err(EvalError::Empty);
    }
    if detections.len() != labels.len() {
        return Err(EvalError::LengthMismatch);
    }
    let mut m = ConfusionMatrix::default();
    for (&d, &l) in detections.iter().zip(labels) {
        match (l, d) {
            (CaseLabel::Dangerous, true) => m.tp += 1,
            (CaseLabel::Dangerous, false) => m.fn_ += 1,
            (CaseLabel::Normal, true) => m.fp += 1,
            (CaseLabel::Normal, false) => m.tn += 1,
        }
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorFamily {
    Ttc,
    Tm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint<T> {
    pub fp_rate: T,
    pub tp_rate: T,
    pub threshold: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve<T> {
    pub points: Vec<RocPoint<T>>,
}

impl<T: Real> RocCurve<T> {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<(), EvalError> {
        writeln!(w, "threshold,fp_rate,tp_rate")?;
        for p in &self.points {
            writeln!(w, "{},{},{}", p.threshold, p.fp_rate, p.tp_rate)?;
        }
        Ok(())
    }
}

/// Sweep a "trigger when measure <= threshold" detector family over a
/// threshold grid. Dangerous cases feed the TP rate, normal cases the
/// FP rate.
pub fn roc_sweep<T: Real>(
    cases: &[LabeledCase<T>],
    family: DetectorFamily,
    grid: &[T],
) -> Result<RocCurve<T>, EvalError> {
    if grid.is_empty() || cases.is_empty() {
        return Err(EvalError::Empty);
    }
    let n_dangerous = cases
        .iter()
        .filter(|c| c.label == CaseLabel::Dangerous)
        .count();
    let n_normal = cases.len() - n_dangerous;
    if n_dangerous == 0 || n_normal == 0 {
        return Err(EvalError::OneSidedLabels);
    }
    let mut points = Vec::with_capacity(grid.len());
    for &tau in grid {
        let det = match family {
            DetectorFamily::Ttc => Detector::TtcThreshold(tau),
            DetectorFamily::Tm => Detector::TmThreshold(tau),
        };
        let mut tp = 0usize;
        let mut fp = 0usize;
        for c in cases {
            if detect(c, &det)? {
                match c.label {
                    CaseLabel::Dangerous => tp += 1,
                    CaseLabel::Normal => fp += 1,
                }
            }
        }
        points.push(RocPoint {
            fp_rate: T::of(ratio(fp, n_normal)),
            tp_rate: T::of(ratio(tp, n_dangerous)),
            threshold: tau,
        });
    }
    Ok(RocCurve { points })
}

/// Nearest-rank percentile of a sample: the ceil(p/100 * n)-th smallest
/// value (1-indexed). `p` in (0, 100].
pub fn nearest_rank_percentile<T: Real>(values: &[T], p: f64) -> Result<T, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-NaN percentile input"));
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, n) - 1])
}

/// Minimum number of dangerous cases accepted by [`fit_thresholds`].
pub const MIN_FIT_CASES: usize = 20;

/// Fit risk thresholds from dangerous cases with known brake onsets.
///
/// Inverse-TTC at onset is regressed on host speed by ordinary least
/// squares; the 5th/50th/95th nearest-rank percentiles of the
/// speed-detrended residuals give the intercepts. TM bounds are raw
/// percentiles of TM at onset (ascending: 95th, 50th, 5th), with no
/// speed detrending. Floors keep their defaults.
pub fn fit_thresholds<T: Real>(cases: &[LabeledCase<T>]) -> Result<RiskThresholds<T>, EvalError> {
    let mut speeds = Vec::new();
    let mut ittcs = Vec::new();
    let mut tms = Vec::new();
    for c in cases.iter().filter(|c| c.label == CaseLabel::Dangerous) {
        c.validate()?;
        let onset = c.brake_onset.ok_or(EvalError::MissingOnset)?;
        let s = &c.samples[onset];
        speeds.push(s.pair.host_speed);
        ittcs.push(inverse_ttc(ttc(&s.pair)?));
        tms.push(time_margin(&s.pair)?);
    }
    let n = speeds.len();
    if n < MIN_FIT_CASES {
        return Err(EvalError::TooFewCases {
            need: MIN_FIT_CASES,
            got: n,
        });
    }

    let nf = T::of_usize(n);
    let mean_v = speeds.iter().fold(T::zero(), |a, b| a + *b) / nf;
    let mean_y = ittcs.iter().fold(T::zero(), |a, b| a + *b) / nf;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (v, y) in speeds.iter().zip(&ittcs) {
        let dv = *v - mean_v;
        sxx += dv * dv;
        sxy += dv * (*y - mean_y);
    }
    if sxx <= T::of(1e-9) {
        return Err(EvalError::DegenerateSpeeds);
    }
    let slope = sxy / sxx;

    let residuals: Vec<T> = speeds
        .iter()
        .zip(&ittcs)
        .map(|(v, y)| *y - slope * *v)
        .collect();

    let mut thr = RiskThresholds::default();
    thr.ittc_slope = slope;
    thr.ittc_intercepts.c5 = nearest_rank_percentile(&residuals, 5.0)?;
    thr.ittc_intercepts.c50 = nearest_rank_percentile(&residuals, 50.0)?;
    thr.ittc_intercepts.c95 = nearest_rank_percentile(&residuals, 95.0)?;
    thr.tm_bounds.pr1 = nearest_rank_percentile(&tms, 95.0)?;
    thr.tm_bounds.pr2 = nearest_rank_percentile(&tms, 50.0)?;
    thr.tm_bounds.pr3 = nearest_rank_percentile(&tms, 5.0)?;
    Ok(thr)
}

/// Synthetic-case generator settings. The dangerous onsets follow
/// `1/TTC = slope * v + c` over a full-factorial speed-by-intercept
/// grid, so the OLS slope is recovered exactly in the noiseless case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig<T> {
    pub slope: T,
    /// Intercept grid bounds; must keep 1/TTC positive over the speed
    /// range.
    pub intercept_min: T,
    pub intercept_max: T,
    pub speed_min: T,
    pub speed_max: T,
    pub n_speeds: usize,
    pub n_intercepts: usize,
    /// Additive Gaussian noise on 1/TTC at onset.
    pub noise_sigma: T,
    pub seed: u64,
    /// Normal (no-conflict) cases to append for ROC work.
    pub n_normal: usize,
}

impl<T: Real> Default for SynthConfig<T> {
    fn default() -> Self {
        Self {
            slope: T::of(-0.0717),
            intercept_min: T::of(2.6),
            intercept_max: T::of(3.8),
            speed_min: T::of(5.0),
            speed_max: T::of(30.0),
            n_speeds: 10,
            n_intercepts: 5,
            noise_sigma: T::zero(),
            seed: 0,
            n_normal: 50,
        }
    }
}

fn lerp<T: Real>(a: T, b: T, i: usize, n: usize) -> T {
    if n <= 1 {
        return a;
    }
    a + (b - a) * T::of_usize(i) / T::of_usize(n - 1)
}

/// Generate labeled synthetic cases per the config.
pub fn generate_cases<T: Real>(config: &SynthConfig<T>) -> Result<Vec<LabeledCase<T>>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let closing = T::of(2.0);
    let mut cases = Vec::new();
    for si in 0..config.n_speeds {
        let v = lerp(config.speed_min, config.speed_max, si, config.n_speeds);
        for ci in 0..config.n_intercepts {
            let c = lerp(
                config.intercept_min,
                config.intercept_max,
                ci,
                config.n_intercepts,
            );
            let noise = if config.noise_sigma > T::zero() {
                // Box-Muller.
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                config.noise_sigma * T::of(z)
            } else {
                T::zero()
            };
            let ittc = config.slope * v + c + noise;
            if ittc <= T::zero() {
                return Err(EvalError::Manifest(
                    "intercept grid drives 1/TTC nonpositive; raise intercept_min".into(),
                ));
            }
            let gap = closing / ittc;
            let pair = KinematicPair::with_default_decel(gap, v, v - closing)?;
            // Three samples: approach, onset, post-onset.
            let far = KinematicPair::with_default_decel(gap + closing, v, v - closing)?;
            let samples = vec![
                TimedSample {
                    time: T::zero(),
                    pair: far,
                },
                TimedSample {
                    time: T::of(0.5),
                    pair,
                },
                TimedSample {
                    time: T::one(),
                    pair,
                },
            ];
            cases.push(LabeledCase {
                samples,
                label: CaseLabel::Dangerous,
                brake_onset: Some(1),
            });
        }
    }
    for i in 0..config.n_normal {
        // Wide gaps, slow closing: low risk throughout.
        let v = lerp(config.speed_min, config.speed_max, i % config.n_speeds, config.n_speeds);
        let gap = T::of(150.0) + T::of_usize(i);
        let pair = KinematicPair::with_default_decel(gap, v, v - T::of(0.5))?;
        cases.push(LabeledCase {
            samples: vec![
                TimedSample {
                    time: T::zero(),
                    pair,
                },
                TimedSample {
                    time: T::one(),
                    pair,
                },
            ],
            label: CaseLabel::Normal,
            brake_onset: None,
        });
    }
    Ok(cases)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    file: String,
    label: CaseLabel,
    brake_onset: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CaseRow<T> {
    time: T,
    gap: T,
    host_speed: T,
    target_speed: T,
}

/// Write a case set as one CSV per case plus `manifest.csv`.
pub fn write_cases<T: Real + Serialize>(
    dir: &Path,
    cases: &[LabeledCase<T>],
) -> Result<(), EvalError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = csv::Writer::from_path(dir.join("manifest.csv"))?;
    for (i, case) in cases.iter().enumerate() {
        case.validate()?;
        let name = format!("case_{i:04}.csv");
        let mut w = csv::Writer::from_path(dir.join(&name))?;
        for s in &case.samples {
            w.serialize(CaseRow {
                time: s.time,
                gap: s.pair.gap,
                host_speed: s.pair.host_speed,
                target_speed: s.pair.target_speed,
            })?;
        }
        w.flush()?;
        manifest.serialize(ManifestRow {
            file: name,
            label: case.label,
            brake_onset: case.brake_onset,
        })?;
    }
    manifest.flush()?;
    Ok(())
}

/// Read a case set written by [`write_cases`].
pub fn read_cases<T: Real + for<'de> Deserialize<'de>>(
    dir: &Path,
) -> Result<Vec<LabeledCase<T>>, EvalError> {
    let manifest_path = dir.join("manifest.csv");
    if !manifest_path.exists() {
        return Err(EvalError::Manifest(format!(
            "missing manifest: {}",
            manifest_path.display()
        )));
    }
    let mut cases = Vec::new();
    let mut reader = csv::Reader::from_path(&manifest_path)?;
    for row in reader.deserialize() {
        let row: ManifestRow = row?;
        let mut samples = Vec::new();
        let mut case_reader = csv::Reader::from_path(dir.join(&row.file))?;
        for s in case_reader.deserialize() {
            let s: CaseRow<T> = s?;
            samples.push(TimedSample {
                time: s.time,
                pair: KinematicPair::with_default_decel(s.gap, s.host_speed, s.target_speed)?,
            });
        }
        let case = LabeledCase {
            samples,
            label: row.label,
            brake_onset: row.brake_onset,
        };
        case.validate()?;
        cases.push(case);
    }
    Ok(cases)
}
