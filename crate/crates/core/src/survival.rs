//! Exact survival representations and the conversions between them.
//!
//! A [`SurvivalDataset`] is binned onto an equidistant [`TimeGrid`], summarised
//! as a [`CountMatrix`], turned into a Kaplan-Meier [`KmCurve`] and, losslessly,
//! into an event [`ProbMass`] with one extra beyond-study element.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative slack used when deciding whether a time sits on a grid point.
const GRID_TOL: f64 = 1e-9;

/// `ceil(x)`, except values within floating-point slack of an integer snap to it.
fn ceil_snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= GRID_TOL * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `floor(x)` with the same snapping rule as [`ceil_snap`].
fn floor_snap(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= GRID_TOL * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub time: f64,
    /// `true` for the event of interest, `false` for a right-censored record.
    pub event: bool,
}

impl SurvivalRecord {
    pub fn new(time: f64, event: bool) -> Self {
        Self { time, event }
    }
}

/// A sequence of `(time, event)` records. Its size is public information.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    records: Vec<SurvivalRecord>,
}

impl SurvivalDataset {
    pub fn new(records: Vec<SurvivalRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            if !r.time.is_finite() || r.time < 0.0 {
                return Err(invalid(format!("record {i} has invalid time {}", r.time)));
            }
        }
        Ok(Self { records })
    }

    /// Builds a dataset from `(time, event)` pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, bool)>,
    {
        Self::new(pairs.into_iter().map(|(t, e)| SurvivalRecord::new(t, e)).collect())
    }

    pub fn records(&self) -> &[SurvivalRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SurvivalRecord> {
        self.records
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SurvivalRecord> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn event_count(&self) -> usize {
        self.records.iter().filter(|r| r.event).count()
    }

    pub fn censored_count(&self) -> usize {
        self.len() - self.event_count()
    }

    /// Copy with every censored record removed.
    pub fn uncensored(&self) -> Self {
        Self {
            records: self.records.iter().copied().filter(|r| r.event).collect(),
        }
    }

    /// Largest recorded time, `None` for an empty dataset.
    pub fn max_time(&self) -> Option<f64> {
        self.records.iter().map(|r| r.time).reduce(f64::max)
    }

    /// Records sorted by `(time, event)`; handy for multiset comparisons.
    pub fn sorted(&self) -> Self {
        let mut records = self.records.clone();
        records.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.event.cmp(&b.event)));
        Self { records }
    }
}

impl FromIterator<SurvivalRecord> for SurvivalDataset {
    fn from_iter<I: IntoIterator<Item = SurvivalRecord>>(iter: I) -> Self {
        Self {
            records: iter.into_iter().collect(),
        }
    }
}

/// Equidistant grid `0, b, 2b, ..., (T-1)b` covering `[0, t_max]`.
///
/// `T` counts the grid points including `t_0 = 0`, so `T = ceil(t_max / b) + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct TimeGrid {
    bin_size: f64,
    t_max: f64,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct GridSpec {
    bin_size: f64,
    t_max: f64,
}

impl TryFrom<GridSpec> for TimeGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        build_grid(spec.t_max, spec.bin_size)
    }
}

impl From<TimeGrid> for GridSpec {
    fn from(g: TimeGrid) -> Self {
        GridSpec {
            bin_size: g.bin_size,
            t_max: g.t_max,
        }
    }
}

/// Builds the grid `{0, b, ..., ceil(t_max/b)·b}`.
pub fn build_grid(t_max: f64, bin_size: f64) -> Result<TimeGrid> {
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(invalid(format!("t_max must be positive, got {t_max}")));
    }
    if !(bin_size.is_finite() && bin_size > 0.0) {
        return Err(invalid(format!("bin size must be positive, got {bin_size}")));
    }
    let steps = ceil_snap(t_max / bin_size);
    if steps > (u32::MAX as f64) {
        return Err(invalid("grid too fine"));
    }
    Ok(TimeGrid {
        bin_size,
        t_max,
        len: steps as usize + 1,
    })
}

impl TimeGrid {
    pub fn new(t_max: f64, bin_size: f64) -> Result<Self> {
        build_grid(t_max, bin_size)
    }

    pub fn bin_size(&self) -> f64 {
        self.bin_size
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Number of grid points `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, j: usize) -> f64 {
        j as f64 * self.bin_size
    }

    pub fn last_point(&self) -> f64 {
        self.point(self.len - 1)
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |j| self.point(j))
    }

    /// Smallest grid index whose point is `>= t`. Times beyond the last
    /// point saturate at `T - 1`.
    pub fn bin_of(&self, t: f64) -> usize {
        let j = ceil_snap(t / self.bin_size).max(0.0) as usize;
        j.min(self.len - 1)
    }

    /// Largest grid index whose point is `<= t`, saturating at both ends.
    pub fn floor_index(&self, t: f64) -> usize {
        let j = floor_snap(t / self.bin_size).max(0.0) as usize;
        j.min(self.len - 1)
    }

    /// Index of `t` if it lies on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.bin_size;
        let r = x.round();
        if r < 0.0 || (x - r).abs() > GRID_TOL * x.abs().max(1.0) {
            return None;
        }
        let j = r as usize;
        (j < self.len).then_some(j)
    }

    /// Grids agree when bin size and length match; `t_max` may differ inside the last bin.
    pub fn same_points(&self, other: &TimeGrid) -> bool {
        self.len == other.len
            && (self.bin_size - other.bin_size).abs() <= GRID_TOL * self.bin_size.max(1.0)
    }

    pub(crate) fn check_same(&self, other: &TimeGrid) -> Result<()> {
        if self.same_points(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(b={}, T={}) vs (b={}, T={})",
                self.bin_size, self.len, other.bin_size, other.len
            )))
        }
    }
}

/// Maps raw times onto the grid using right-closed bins `(t_{j-1}, t_j]`.
///
/// Events at `t = 0` move to `t_1`. Records later than `t_max` are clamped to
/// the last grid point and marked censored.
pub fn discretize(ds: &SurvivalDataset, grid: &TimeGrid) -> Result<SurvivalDataset> {
    let tol = GRID_TOL * grid.t_max().max(1.0);
    ds.iter()
        .map(|r| {
            if !r.time.is_finite() || r.time < 0.0 {
                return Err(invalid(format!("negative or non-finite time {}", r.time)));
            }
            if r.time > grid.t_max() + tol {
                return Ok(SurvivalRecord::new(grid.last_point(), false));
            }
            let mut j = grid.bin_of(r.time);
            if j == 0 && r.event {
                j = 1;
            }
            Ok(SurvivalRecord::new(grid.point(j), r.event))
        })
        .collect::<Result<Vec<_>>>()
        .map(|records| SurvivalDataset { records })
}

/// Per-bin event and censoring counts plus the initial risk-set size.
///
/// Noisy matrices may hold non-integer entries; exact ones hold integers
/// with `sum(d) + sum(c) = r0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CountParts")]
pub struct CountMatrix {
    grid: TimeGrid,
    r0: usize,
    events: Vec<f64>,
    censored: Vec<f64>,
}

#[derive(Deserialize)]
struct CountParts {
    grid: TimeGrid,
    r0: usize,
    events: Vec<f64>,
    censored: Vec<f64>,
}

impl TryFrom<CountParts> for CountMatrix {
    type Error = Error;

    fn try_from(p: CountParts) -> Result<Self> {
        CountMatrix::new(p.grid, p.r0, p.events, p.censored)
    }
}

impl CountMatrix {
    pub fn new(grid: TimeGrid, r0: usize, events: Vec<f64>, censored: Vec<f64>) -> Result<Self> {
        if events.len() != grid.len() || censored.len() != grid.len() {
            return Err(invalid(format!(
                "count vectors must have length {}, got {} and {}",
                grid.len(),
                events.len(),
                censored.len()
            )));
        }
        if events.iter().chain(&censored).any(|v| !v.is_finite()) {
            return Err(invalid("count entries must be finite"));
        }
        Ok(Self {
            grid,
            r0,
            events,
            censored,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn r0(&self) -> usize {
        self.r0
    }

    /// `d_j`: events in bin `j`.
    pub fn events(&self) -> &[f64] {
        &self.events
    }

    /// `c_j`: censorings in bin `j`.
    pub fn censored(&self) -> &[f64] {
        &self.censored
    }

    /// Risk sets `r_j = r_{j-1} - (d_{j-1} + c_{j-1})`, starting from `r_0`.
    pub fn risk_sets(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grid.len());
        let mut r = self.r0 as f64;
        for (d, c) in self.events.iter().zip(&self.censored) {
            out.push(r);
            r -= d + c;
        }
        out
    }

    pub fn is_integral(&self) -> bool {
        self.events
            .iter()
            .chain(&self.censored)
            .all(|v| *v >= 0.0 && v.fract() == 0.0)
    }
}

/// Counts events and censorings per grid bin. Records must already sit on grid points.
pub fn count_events(ds: &SurvivalDataset, grid: &TimeGrid) -> Result<CountMatrix> {
    let mut events = vec![0.0; grid.len()];
    let mut censored = vec![0.0; grid.len()];
    for r in ds.iter() {
        let j = grid.index_of(r.time).ok_or_else(|| {
            invalid(format!(
                "time {} is not a grid point (b={}, T={}); discretize first",
                r.time,
                grid.bin_size(),
                grid.len()
            ))
        })?;
        if r.event {
            events[j] += 1.0;
        } else {
            censored[j] += 1.0;
        }
    }
    CountMatrix::new(*grid, ds.len(), events, censored)
}

/// Nonincreasing step-function values sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridValues")]
pub struct KmCurve {
    grid: TimeGrid,
    values: Vec<f64>,
}

/// Unvalidated serialized form of [`KmCurve`] and [`ProbMass`].
#[derive(Deserialize)]
struct GridValues {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl TryFrom<GridValues> for KmCurve {
    type Error = Error;

    fn try_from(p: GridValues) -> Result<Self> {
        KmCurve::new(p.grid, p.values)
    }
}

impl TryFrom<GridValues> for ProbMass {
    type Error = Error;

    fn try_from(p: GridValues) -> Result<Self> {
        ProbMass::new(p.grid, p.values)
    }
}

impl KmCurve {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "curve must have {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("survival values must lie in [0, 1]"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }

    /// Copy with `S(t_0) = 1`. No event can fall at `t_0`, so this is known
    /// without the data; without it `1 - S[0]` would leave through the
    /// beyond-study element of [`km_to_prob`] as spurious censoring.
    pub fn anchored(&self) -> KmCurve {
        let mut values = self.values.clone();
        if let Some(first) = values.first_mut() {
            *first = 1.0;
        }
        KmCurve { grid: self.grid, values }
    }
}

/// Product-limit estimator over the grid bins.
///
/// Bins with an empty (or exhausted) risk set contribute a factor of 1, so the
/// curve freezes once nobody is left at risk.
pub fn km_estimate(counts: &CountMatrix) -> KmCurve {
    let mut s = 1.0;
    let values = counts
        .risk_sets()
        .into_iter()
        .zip(counts.events())
        .map(|(r, &d)| {
            if r > 0.0 {
                s *= ((r - d) / r).clamp(0.0, 1.0);
            }
            s
        })
        .collect();
    KmCurve {
        grid: counts.grid,
        values,
    }
}

/// Event probability mass on the grid plus one beyond-study element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridValues")]
pub struct ProbMass {
    grid: TimeGrid,
    values: Vec<f64>,
}

/// Allowed deviation of a probability vector's total from 1.
pub const PROB_SUM_TOL: f64 = 1e-9;

impl ProbMass {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() + 1 {
            return Err(invalid(format!(
                "probability vector must have {} entries, got {}",
                grid.len() + 1,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid("probabilities must be finite and nonnegative"));
        }
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mass beyond the end of the study.
    pub fn beyond(&self) -> f64 {
        self.values[self.grid.len()]
    }
}

/// `y[0] = 0`, `y[j] = S[j-1] - S[j]`, and the remainder goes beyond the study.
pub fn km_to_prob(s: &KmCurve) -> Result<ProbMass> {
    let t = s.grid.len();
    let mut values = Vec::with_capacity(t + 1);
    values.push(0.0);
    for w in s.values.windows(2) {
        let step = w[0] - w[1];
        if step < -1e-12 {
            return Err(invalid("survival curve is not nonincreasing"));
        }
        values.push(step.max(0.0));
    }
    let inside: f64 = values.iter().sum();
    values.push((1.0 - inside).max(0.0));
    Ok(ProbMass {
        grid: s.grid,
        values,
    })
}

/// `S[j] = 1 - sum_{i <= j} y[i]`.
pub fn prob_to_km(y: &ProbMass) -> KmCurve {
    let mut acc = 0.0;
    let values = y.values[..y.grid.len()]
        .iter()
        .map(|p| {
            acc += p;
            (1.0 - acc).clamp(0.0, 1.0)
        })
        .collect();
    KmCurve {
        grid: y.grid,
        values,
    }
}

/// Expands an integer count matrix into one record per counted individual.
pub fn counts_to_dataset(counts: &CountMatrix) -> Result<SurvivalDataset> {
    if !counts.is_integral() {
        return Err(invalid(
            "count matrix must hold nonnegative integers; post-process noisy counts first",
        ));
    }
    let grid = counts.grid;
    let mut records = Vec::new();
    for (j, (&d, &c)) in counts.events.iter().zip(&counts.censored).enumerate() {
        let t = grid.point(j);
        records.extend(std::iter::repeat(SurvivalRecord::new(t, true)).take(d as usize));
        records.extend(std::iter::repeat(SurvivalRecord::new(t, false)).take(c as usize));
    }
    Ok(SurvivalDataset { records })
}
