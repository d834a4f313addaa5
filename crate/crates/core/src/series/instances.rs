use std::sync::Arc;

use super::{DataError, FlowSeries, Normalizer, Result, YearMonth};

/// Window lengths and spans for the closeness, period and trend inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    /// `l_c`: most recent frames.
    pub closeness: usize,
    /// `l_p`: frames spaced one period apart.
    pub period_len: usize,
    /// `l_q`: frames spaced one trend span apart.
    pub trend_len: usize,
    /// `p`, in intervals.
    pub period: usize,
    /// `q`, in intervals.
    pub trend: usize,
}

impl Default for WindowSpec {
    /// One day and one week at 15-minute resolution.
    fn default() -> Self {
        WindowSpec {
            closeness: 3,
            period_len: 2,
            trend_len: 2,
            period: 96,
            trend: 672,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        if self.closeness == 0 || self.period_len == 0 || self.trend_len == 0 {
            return Err(DataError::InvalidWindow("window lengths must be at least 1".into()));
        }
        if self.period == 0 {
            return Err(DataError::InvalidWindow("period must be at least 1".into()));
        }
        if self.trend <= self.period {
            return Err(DataError::InvalidWindow(format!(
                "trend span {} must exceed period {}",
                self.trend, self.period
            )));
        }
        Ok(())
    }

    /// Frames that must precede the first target.
    pub fn history(&self) -> usize {
        self.closeness
            .max(self.period_len * self.period)
            .max(self.trend_len * self.trend)
    }

    /// `[t-l_c, ..., t-1]`. The target itself is never part of its input.
    pub fn closeness_indices(&self, t: usize) -> Vec<usize> {
        (t - self.closeness..t).collect()
    }

    /// `[t-l_p·p, ..., t-p]`, oldest first.
    pub fn period_indices(&self, t: usize) -> Vec<usize> {
        (1..=self.period_len).rev().map(|k| t - k * self.period).collect()
    }

    /// `[t-l_q·q, ..., t-q]`, oldest first.
    pub fn trend_indices(&self, t: usize) -> Vec<usize> {
        (1..=self.trend_len).rev().map(|k| t - k * self.trend).collect()
    }

    pub fn total_frames(&self) -> usize {
        self.closeness + self.period_len + self.trend_len
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitTag {
    Unassigned,
    Train,
    Test,
}

/// Input windows (as frame indices) and target index of one example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingInstance {
    pub t: usize,
    pub closeness: Vec<usize>,
    pub period: Vec<usize>,
    pub trend: Vec<usize>,
    pub tag: SplitTag,
}

impl TrainingInstance {
    fn at(spec: &WindowSpec, t: usize) -> Self {
        TrainingInstance {
            t,
            closeness: spec.closeness_indices(t),
            period: spec.period_indices(t),
            trend: spec.trend_indices(t),
            tag: SplitTag::Unassigned,
        }
    }
}

/// One instance for every target with complete history, in time order.
pub fn build_instances(series: &FlowSeries, spec: &WindowSpec) -> Result<Vec<TrainingInstance>> {
    spec.validate()?;
    let history = spec.history();
    if series.len() <= history {
        return Err(DataError::TooShort {
            frames: series.len(),
            needed: history + 1,
        });
    }
    Ok((history..series.len()).map(|t| TrainingInstance::at(spec, t)).collect())
}

/// Instances over a shared, normalized copy of a series.
#[derive(Clone, Debug)]
pub struct Dataset {
    series: Arc<FlowSeries>,
    frames: Arc<Vec<Vec<f64>>>,
    normalizer: Normalizer,
    spec: WindowSpec,
    instances: Vec<TrainingInstance>,
}

impl Dataset {
    pub fn new(series: Arc<FlowSeries>, spec: WindowSpec, normalizer: Normalizer, instances: Vec<TrainingInstance>) -> Self {
        let frames = series.frames().iter().map(|f| normalizer.transform_all(f)).collect();
        Dataset {
            series,
            frames: Arc::new(frames),
            normalizer,
            spec,
            instances,
        }
    }

    /// All instances of `series`, normalized with statistics of the whole series.
    pub fn build(series: Arc<FlowSeries>, spec: WindowSpec) -> Result<Self> {
        let instances = build_instances(&series, &spec)?;
        let normalizer = Normalizer::fit(series.frames().iter().flatten())?;
        Ok(Self::new(series, spec, normalizer, instances))
    }

    pub fn with_instances(&self, instances: Vec<TrainingInstance>) -> Self {
        Dataset {
            series: Arc::clone(&self.series),
            frames: Arc::clone(&self.frames),
            normalizer: self.normalizer,
            spec: self.spec,
            instances,
        }
    }

    /// Drops instances whose target index is below `min_t`.
    pub fn retain_from(&self, min_t: usize) -> Self {
        self.with_instances(self.instances.iter().filter(|i| i.t >= min_t).cloned().collect())
    }

    /// Splits off the last `fraction` of instances (by time) as a second set.
    /// Both halves are non-empty whenever there are at least two instances.
    pub fn split_tail(&self, fraction: f64) -> (Self, Self) {
        let n = self.instances.len();
        let mut tail = ((n as f64) * fraction).round() as usize;
        if n >= 2 {
            tail = tail.clamp(1, n - 1);
        } else {
            tail = 0;
        }
        let (head, rest) = self.instances.split_at(n - tail);
        (self.with_instances(head.to_vec()), self.with_instances(rest.to_vec()))
    }

    pub fn series(&self) -> &Arc<FlowSeries> {
        &self.series
    }

    pub fn normalized_frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn spec(&self) -> &WindowSpec {
        &self.spec
    }

    pub fn instances(&self) -> &[TrainingInstance] {
        &self.instances
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.series.rows()
    }

    pub fn cols(&self) -> usize {
        self.series.cols()
    }
}

/// Partitions instances by the calendar month of their target.
///
/// Input windows may reach back into earlier months; targets never cross
/// between the two sets. The normalizer is fit only on frames that training
/// instances read or predict.
pub fn split_by_month(
    series: Arc<FlowSeries>,
    spec: WindowSpec,
    train_months: &[YearMonth],
    test_month: YearMonth,
) -> Result<(Dataset, Dataset)> {
    if series.month_range(test_month).is_none() {
        return Err(DataError::MonthNotFound(test_month));
    }
    if train_months.is_empty() {
        return Err(DataError::InvalidWindow("at least one training month is required".into()));
    }
    for &m in train_months {
        if m == test_month {
            return Err(DataError::MonthOverlap(m));
        }
        if m > test_month {
            return Err(DataError::TrainAfterTest {
                train: m,
                test: test_month,
            });
        }
        if series.month_range(m).is_none() {
            return Err(DataError::MonthNotFound(m));
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut inst in build_instances(&series, &spec)? {
        let month = series.month_of(inst.t);
        if month == test_month {
            inst.tag = SplitTag::Test;
            test.push(inst);
        } else if train_months.contains(&month) {
            inst.tag = SplitTag::Train;
            train.push(inst);
        }
    }
    let (first, last) = match (train.first(), train.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(DataError::EmptySplit(train_months[0])),
    };
    if test.is_empty() {
        return Err(DataError::EmptySplit(test_month));
    }
    let seen = &series.frames()[first - spec.history()..=last];
    let normalizer = Normalizer::fit(seen.iter().flatten())?;
    let train_set = Dataset::new(Arc::clone(&series), spec, normalizer, train);
    let test_set = train_set.with_instances(test);
    Ok((train_set, test_set))
}
