//! Multi-client collaboration: data splits, local private releases, central
//! aggregation along paths A-F and M, and the seeded Monte-Carlo driver.
//!
//! Local mechanisms wrap their outputs in [`PrivateKm`], [`PrivateProb`] and
//! [`PrivateDataset`]. These can only be built inside this crate by a private
//! release (or post-processing of one), and the [`Aggregator`] accepts nothing
//! else, so raw shards never reach the central side.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mechanisms::{
    dp_matrix, dp_prob, dp_surv, isotonic_project, DpProbConfig, DpSurvConfig, PrivacyBudget, ProbL1,
};
use crate::metrics::{bootstrap_mean_ci, evaluate, BootstrapCI, MetricReport, BOOTSTRAP_RESAMPLES};
use crate::noise::{derive_seed, NoiseSource, SeededNoise};
use crate::surrogate::{generate, SurrogateConfig};
use crate::survival::{
    count_events, counts_to_dataset, km_estimate, km_to_prob, prob_to_km, KmCurve, ProbMass, SurvivalDataset,
    TimeGrid,
};

/// Stream index reserved for the partition shuffle.
const PARTITION_STREAM: u64 = u64::MAX;
/// Stream index reserved for bootstrap resampling.
const BOOTSTRAP_STREAM: u64 = u64::MAX - 1;

/// Disjoint shards of one dataset. Shard sizes are public.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    shards: Vec<SurvivalDataset>,
}

impl Partition {
    pub fn new(shards: Vec<SurvivalDataset>) -> Result<Self> {
        if shards.is_empty() || shards.iter().any(SurvivalDataset::is_empty) {
            return Err(invalid("a partition needs at least one shard and no empty shards"));
        }
        Ok(Self { shards })
    }

    pub fn shards(&self) -> &[SurvivalDataset] {
        &self.shards
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.shards.iter().map(SurvivalDataset::len).collect()
    }

    pub fn total(&self) -> usize {
        self.shards.iter().map(SurvivalDataset::len).sum()
    }

    pub fn len(&self) -> usize {
        self.shards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shards.is_empty()
    }
}

fn shuffled(ds: &SurvivalDataset, rng: &mut impl NoiseSource) -> Vec<crate::SurvivalRecord> {
    let mut recs = ds.records().to_vec();
    for i in (1..recs.len()).rev() {
        let j = rng.index(i + 1);
        recs.swap(i, j);
    }
    recs
}

fn even_slices(recs: &[crate::SurvivalRecord], k: usize) -> Vec<SurvivalDataset> {
    let (base, extra) = (recs.len() / k, recs.len() % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for i in 0..k {
        let len = base + usize::from(i < extra);
        out.push(recs[start..start + len].iter().copied().collect());
        start += len;
    }
    out
}

/// Shuffles and cuts into `k` slices; the first `N mod k` slices get one extra record.
pub fn split_even(ds: &SurvivalDataset, k: usize, rng: &mut impl NoiseSource) -> Result<Partition> {
    if k == 0 || k > ds.len() {
        return Err(invalid(format!("cannot split {} records into {k} shards", ds.len())));
    }
    let recs = shuffled(ds, rng);
    Partition::new(even_slices(&recs, k))
}

/// Shuffles, gives shard 0 `round(minority_frac·N)` records and splits the rest
/// evenly over the other `k - 1` shards.
pub fn split_uneven(
    ds: &SurvivalDataset,
    k: usize,
    minority_frac: f64,
    rng: &mut impl NoiseSource,
) -> Result<Partition> {
    if k < 2 {
        return Err(invalid("an uneven split needs at least two clients"));
    }
    if !(minority_frac > 0.0 && minority_frac < 1.0) {
        return Err(invalid(format!("minority fraction must lie in (0, 1), got {minority_frac}")));
    }
    let n = ds.len();
    let m = (minority_frac * n as f64).round() as usize;
    if m == 0 {
        return Err(invalid("minority shard would be empty"));
    }
    if n - m < k - 1 {
        return Err(invalid("not enough records left for the other shards"));
    }
    let recs = shuffled(ds, rng);
    let mut shards = vec![recs[..m].iter().copied().collect()];
    shards.extend(even_slices(&recs[m..], k - 1));
    Partition::new(shards)
}

/// How the dataset is divided among clients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SplitSpec {
    Even,
    Uneven { minority_fraction: f64 },
}

impl SplitSpec {
    pub fn split(&self, ds: &SurvivalDataset, k: usize, rng: &mut impl NoiseSource) -> Result<Partition> {
        match *self {
            SplitSpec::Even => split_even(ds, k, rng),
            SplitSpec::Uneven { minority_fraction } => split_uneven(ds, k, minority_fraction, rng),
        }
    }
}

fn check_weights<T>(items: &[T], weights: &[usize]) -> Result<f64> {
    if items.is_empty() || items.len() != weights.len() {
        return Err(invalid("need one positive weight per input"));
    }
    if weights.contains(&0) {
        return Err(invalid("weights must be positive"));
    }
    Ok(weights.iter().sum::<usize>() as f64)
}

/// `(1/N) Σ n_k S_k`, clamped and re-projected to a nonincreasing curve.
pub fn average_km(curves: &[KmCurve], weights: &[usize]) -> Result<KmCurve> {
    let total = check_weights(curves, weights)?;
    let grid = *curves[0].grid();
    let mut acc = vec![0.0; grid.len()];
    for (c, &w) in curves.iter().zip(weights) {
        grid.check_same(c.grid())?;
        for (a, v) in acc.iter_mut().zip(c.values()) {
            *a += w as f64 * v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    KmCurve::new(grid, isotonic_project(&acc))
}

/// `(1/N) Σ n_k y_k`.
pub fn average_prob(probs: &[ProbMass], weights: &[usize]) -> Result<ProbMass> {
    let total = check_weights(probs, weights)?;
    let grid = *probs[0].grid();
    let mut acc = vec![0.0; grid.len() + 1];
    for (p, &w) in probs.iter().zip(weights) {
        grid.check_same(p.grid())?;
        for (a, v) in acc.iter_mut().zip(p.values()) {
            *a += w as f64 * v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    ProbMass::new(grid, acc)
}

/// Multiset union.
pub fn pool_datasets(datasets: &[SurvivalDataset]) -> SurvivalDataset {
    datasets.iter().flat_map(|d| d.iter().copied()).collect()
}

/// A KM curve released by a private mechanism, with its client's public size.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateKm {
    curve: KmCurve,
    n: usize,
}

/// A probability mass vector released by a private mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateProb {
    mass: ProbMass,
    n: usize,
    fell_back: bool,
}

/// A dataset derived only from a private release.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateDataset {
    data: SurvivalDataset,
}

impl PrivateKm {
    pub fn curve(&self) -> &KmCurve {
        &self.curve
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn to_prob(&self) -> Result<PrivateProb> {
        Ok(PrivateProb {
            mass: km_to_prob(&self.curve.anchored())?,
            n: self.n,
            fell_back: false,
        })
    }
}

impl PrivateProb {
    pub fn mass(&self) -> &ProbMass {
        &self.mass
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn fell_back(&self) -> bool {
        self.fell_back
    }

    pub fn to_km(&self) -> PrivateKm {
        PrivateKm {
            curve: prob_to_km(&self.mass),
            n: self.n,
        }
    }

    pub fn surrogate(&self, n: usize) -> Result<PrivateDataset> {
        Ok(PrivateDataset {
            data: generate(&self.mass, SurrogateConfig::new(n)?),
        })
    }
}

impl PrivateDataset {
    pub fn data(&self) -> &SurvivalDataset {
        &self.data
    }

    pub fn into_data(self) -> SurvivalDataset {
        self.data
    }
}

/// One data holder. Owns its shard and only ever hands out private releases.
#[derive(Debug, Clone)]
pub struct Client<'a> {
    shard: &'a SurvivalDataset,
    grid: TimeGrid,
}

impl<'a> Client<'a> {
    /// `shard` must already be discretized onto `grid`.
    pub fn new(shard: &'a SurvivalDataset, grid: TimeGrid) -> Self {
        Self { shard, grid }
    }

    pub fn n(&self) -> usize {
        self.shard.len()
    }

    fn exact_curve(&self) -> Result<KmCurve> {
        Ok(km_estimate(&count_events(self.shard, &self.grid)?))
    }

    pub fn release_surv(&self, cfg: &CollabConfig, rng: &mut impl NoiseSource) -> Result<PrivateKm> {
        let mech = DpSurvConfig {
            epsilon: cfg.epsilon,
            k_fraction: cfg.k_fraction,
            n: self.n(),
            sensitivity: Default::default(),
            acknowledge_not_dp: false,
        };
        Ok(PrivateKm {
            curve: dp_surv(&self.exact_curve()?, &mech, rng)?,
            n: self.n(),
        })
    }

    pub fn release_prob(&self, cfg: &CollabConfig, rng: &mut impl NoiseSource) -> Result<PrivateProb> {
        let mech = DpProbConfig {
            epsilon: cfg.epsilon,
            n: self.n(),
            l1: cfg.prob_l1,
            sensitivity: Default::default(),
            acknowledge_not_dp: false,
        };
        let release = dp_prob(&km_to_prob(&self.exact_curve()?)?, &mech, rng)?;
        Ok(PrivateProb {
            mass: release.mass,
            n: self.n(),
            fell_back: release.fell_back,
        })
    }

    pub fn release_matrix(&self, cfg: &CollabConfig, rng: &mut impl NoiseSource) -> Result<PrivateDataset> {
        let noisy = dp_matrix(&count_events(self.shard, &self.grid)?, cfg.epsilon, rng)?;
        Ok(PrivateDataset {
            data: counts_to_dataset(&noisy)?,
        })
    }
}

/// The central server. Sees private releases only.
#[derive(Debug, Clone, Copy, Default)]
pub struct Aggregator;

impl Aggregator {
    pub fn pool(&self, parts: &[PrivateDataset]) -> SurvivalDataset {
        parts.iter().flat_map(|p| p.data.iter().copied()).collect()
    }

    pub fn average_km(&self, parts: &[PrivateKm]) -> Result<KmCurve> {
        let curves: Vec<KmCurve> = parts.iter().map(|p| p.curve.clone()).collect();
        let weights: Vec<usize> = parts.iter().map(|p| p.n).collect();
        average_km(&curves, &weights)
    }

    pub fn average_prob(&self, parts: &[PrivateProb]) -> Result<ProbMass> {
        let probs: Vec<ProbMass> = parts.iter().map(|p| p.mass.clone()).collect();
        let weights: Vec<usize> = parts.iter().map(|p| p.n).collect();
        average_prob(&probs, &weights)
    }
}

/// Local mechanism family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DpSurv,
    DpProb,
    DpMatrix,
}

/// Collaboration path: local mechanism plus what gets shared and how it is combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathId {
    /// DP-Surv, pooled surrogate datasets.
    A,
    /// DP-Surv, averaged KM curves.
    B,
    /// DP-Surv, averaged probability vectors.
    C,
    /// DP-Prob, pooled surrogate datasets.
    D,
    /// DP-Prob, averaged KM curves.
    E,
    /// DP-Prob, averaged probability vectors.
    F,
    /// DP-Matrix, pooled datasets rebuilt from noisy counts.
    M,
}

impl PathId {
    pub const ALL: [PathId; 7] = [PathId::A, PathId::B, PathId::C, PathId::D, PathId::E, PathId::F, PathId::M];

    pub fn method(self) -> Method {
        match self {
            PathId::A | PathId::B | PathId::C => Method::DpSurv,
            PathId::D | PathId::E | PathId::F => Method::DpProb,
            PathId::M => Method::DpMatrix,
        }
    }

    /// The pooling path for a method; with one client it is the centralized release.
    pub fn pooled(method: Method) -> PathId {
        match method {
            Method::DpSurv => PathId::A,
            Method::DpProb => PathId::D,
            Method::DpMatrix => PathId::M,
        }
    }
}

impl std::fmt::Display for PathId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for PathId {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        PathId::ALL
            .into_iter()
            .find(|p| p.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown path {s:?}; expected one of A-F or M")))
    }
}

/// Parameters shared by every client and run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollabConfig {
    pub clients: usize,
    pub epsilon: PrivacyBudget,
    pub k_fraction: f64,
    pub prob_l1: ProbL1,
    pub split: SplitSpec,
    pub runs: usize,
    pub master_seed: u64,
    /// Draw a fresh partition for every run instead of once per experiment.
    pub resplit_per_run: bool,
    /// Significance level for Greenwood bands.
    pub alpha: f64,
    pub bootstrap_resamples: usize,
}

impl CollabConfig {
    pub fn new(clients: usize, epsilon: f64) -> Result<Self> {
        let cfg = Self {
            clients,
            epsilon: PrivacyBudget::new(epsilon)?,
            k_fraction: 0.10,
            prob_l1: ProbL1::TwoOverN,
            split: SplitSpec::Even,
            runs: 100,
            master_seed: 0,
            resplit_per_run: false,
            alpha: 0.05,
            bootstrap_resamples: BOOTSTRAP_RESAMPLES,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(invalid("need at least one client"));
        }
        if self.runs == 0 {
            return Err(invalid("need at least one run"));
        }
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            return Err(invalid(format!("k_fraction must lie in (0, 1], got {}", self.k_fraction)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("alpha must lie in (0, 1)"));
        }
        if self.bootstrap_resamples == 0 {
            return Err(invalid("need at least one bootstrap resample"));
        }
        if let SplitSpec::Uneven { .. } = self.split {
            if self.clients < 2 {
                return Err(invalid("an uneven split needs at least two clients"));
            }
        }
        Ok(())
    }
}

/// Output of one path execution.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// The central release: the averaged curve for B/C/E/F, the pooled KM for A/D/M.
    pub released: KmCurve,
    /// Global surrogate dataset all metrics are computed from.
    pub surrogate: SurvivalDataset,
    pub report: MetricReport,
    /// Clients whose DP-Prob release fell back to all mass beyond the study.
    pub fallbacks: usize,
}

/// Runs one path. Shards must already be discretized onto `grid`; `reference`
/// is the non-private dataset the logrank p-value compares against.
pub fn run_path(
    path: PathId,
    part: &Partition,
    cfg: &CollabConfig,
    grid: &TimeGrid,
    reference: &SurvivalDataset,
    seed: u64,
) -> Result<RunResult> {
    let clients: Vec<Client> = part.shards().iter().map(|s| Client::new(s, *grid)).collect();
    let rng_for = |k: usize| SeededNoise::new(derive_seed(seed, k as u64));
    let total = part.total();
    let central = Aggregator;

    let mut fallbacks = 0;
    let (released, surrogate) = match path.method() {
        Method::DpSurv => {
            let local = clients
                .iter()
                .enumerate()
                .map(|(k, c)| c.release_surv(cfg, &mut rng_for(k)))
                .collect::<Result<Vec<_>>>()?;
            match path {
                PathId::A => {
                    let parts = local
                        .iter()
                        .map(|p| p.to_prob()?.surrogate(p.n()))
                        .collect::<Result<Vec<_>>>()?;
                    pooled_release(central.pool(&parts), grid)?
                }
                PathId::B => averaged_release(central.average_km(&local)?, total)?,
                _ => {
                    let probs = local.iter().map(PrivateKm::to_prob).collect::<Result<Vec<_>>>()?;
                    averaged_release(prob_to_km(&central.average_prob(&probs)?), total)?
                }
            }
        }
        Method::DpProb => {
            let local = clients
                .iter()
                .enumerate()
                .map(|(k, c)| c.release_prob(cfg, &mut rng_for(k)))
                .collect::<Result<Vec<_>>>()?;
            fallbacks = local.iter().filter(|p| p.fell_back()).count();
            match path {
                PathId::D => {
                    let parts = local
                        .iter()
                        .map(|p| p.surrogate(p.n()))
                        .collect::<Result<Vec<_>>>()?;
                    pooled_release(central.pool(&parts), grid)?
                }
                PathId::E => {
                    let curves: Vec<PrivateKm> = local.iter().map(PrivateProb::to_km).collect();
                    averaged_release(central.average_km(&curves)?, total)?
                }
                _ => averaged_release(prob_to_km(&central.average_prob(&local)?), total)?,
            }
        }
        Method::DpMatrix => {
            let parts = clients
                .iter()
                .enumerate()
                .map(|(k, c)| c.release_matrix(cfg, &mut rng_for(k)))
                .collect::<Result<Vec<_>>>()?;
            pooled_release(central.pool(&parts), grid)?
        }
    };

    let (_, _, report) = evaluate(&surrogate, grid, Some(reference), cfg.alpha)?;
    Ok(RunResult {
        released,
        surrogate,
        report,
        fallbacks,
    })
}

fn pooled_release(pooled: SurvivalDataset, grid: &TimeGrid) -> Result<(KmCurve, SurvivalDataset)> {
    Ok((km_estimate(&count_events(&pooled, grid)?), pooled))
}

fn averaged_release(curve: KmCurve, n: usize) -> Result<(KmCurve, SurvivalDataset)> {
    let data = generate(&km_to_prob(&curve.anchored())?, SurrogateConfig::new(n)?);
    Ok((curve, data))
}

/// Per-run scalar metrics. `None` marks an undefined value (e.g. no median).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run: usize,
    pub seed: u64,
    pub p_value: Option<f64>,
    pub median: Option<f64>,
    pub median_lower: Option<f64>,
    pub median_upper: Option<f64>,
    pub s25: f64,
    pub s50: f64,
    pub s75: f64,
    pub fallbacks: usize,
}

impl RunSummary {
    fn from_result(run: usize, seed: u64, r: &RunResult) -> Self {
        let s = |f| r.report.survival_value(f).expect("report fractions");
        Self {
            run,
            seed,
            p_value: r.report.p_value,
            median: r.report.median.median,
            median_lower: r.report.median.lower,
            median_upper: r.report.median.upper,
            s25: s(0.25),
            s50: s(0.5),
            s75: s(0.75),
            fallbacks: r.fallbacks,
        }
    }
}

/// Metric names in report order.
pub const METRICS: [&str; 5] = ["p", "median", "s25", "s50", "s75"];

/// Bootstrap summary of one metric over the runs where it was defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub ci: Option<BootstrapCI>,
    pub defined_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloResult {
    pub path: PathId,
    pub runs: Vec<RunSummary>,
    /// Keyed by [`METRICS`], same order.
    pub summary: Vec<(String, MetricSummary)>,
}

impl MonteCarloResult {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.summary.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Bootstrap mean of a metric, if it was defined in any run.
    pub fn mean(&self, name: &str) -> Option<f64> {
        self.metric(name).and_then(|m| m.ci).map(|c| c.mean)
    }
}

/// Seed of run `run` under `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    derive_seed(master, run as u64)
}

/// Seed of the experiment-wide partition shuffle under `master`.
pub fn partition_seed(master: u64) -> u64 {
    derive_seed(master, PARTITION_STREAM)
}

/// `R` independent runs of `path`, in parallel, collected by run index.
///
/// `data` must be discretized onto `grid`. The partition is drawn once from
/// the master seed unless `resplit_per_run` is set.
pub fn monte_carlo(
    path: PathId,
    data: &SurvivalDataset,
    cfg: &CollabConfig,
    grid: &TimeGrid,
    reference: &SurvivalDataset,
) -> Result<MonteCarloResult> {
    cfg.validate()?;
    let shared = if cfg.resplit_per_run {
        None
    } else {
        let mut rng = SeededNoise::new(partition_seed(cfg.master_seed));
        Some(cfg.split.split(data, cfg.clients, &mut rng)?)
    };

    let runs = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let seed = run_seed(cfg.master_seed, run);
            let owned;
            let part = match &shared {
                Some(p) => p,
                None => {
                    let mut rng = SeededNoise::new(partition_seed(seed));
                    owned = cfg.split.split(data, cfg.clients, &mut rng)?;
                    &owned
                }
            };
            let result = run_path(path, part, cfg, grid, reference, seed)?;
            Ok(RunSummary::from_result(run, seed, &result))
        })
        .collect::<Result<Vec<_>>>()?;

    let columns: [Vec<Option<f64>>; 5] = [
        runs.iter().map(|r| r.p_value).collect(),
        runs.iter().map(|r| r.median).collect(),
        runs.iter().map(|r| Some(r.s25)).collect(),
        runs.iter().map(|r| Some(r.s50)).collect(),
        runs.iter().map(|r| Some(r.s75)).collect(),
    ];
    let summary = METRICS
        .iter()
        .zip(columns)
        .enumerate()
        .map(|(i, (name, col))| {
            let defined: Vec<f64> = col.into_iter().flatten().collect();
            let ci = if defined.is_empty() {
                None
            } else {
                let mut rng = SeededNoise::new(derive_seed(cfg.master_seed, BOOTSTRAP_STREAM - i as u64));
                Some(bootstrap_mean_ci(&defined, cfg.bootstrap_resamples, 0.05, &mut rng)?)
            };
            Ok((
                name.to_string(),
                MetricSummary {
                    ci,
                    defined_runs: defined.len(),
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MonteCarloResult { path, runs, summary })
}
