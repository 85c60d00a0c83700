//! Drivers behind the subcommands: data preparation, single releases, single
//! collaboration runs and the Monte-Carlo sweep.

use anyhow::{Context, Result};
use dpkm_core::collab::{
    monte_carlo, partition_seed, run_path, run_seed, CollabConfig, Method, MonteCarloResult, PathId, RunResult,
    SplitSpec,
};
use dpkm_core::mechanisms::{dp_matrix, dp_prob, dp_surv, DpProbConfig, DpSurvConfig, PrivacyBudget, ProbL1};
use dpkm_core::metrics::{cmd, evaluate, logrank, median_survival, raw_median, ConfidenceBand, MetricReport};
use dpkm_core::noise::{derive_seed, SeededNoise};
use dpkm_core::surrogate::{generate, SurrogateConfig};
use dpkm_core::survival::{
    build_grid, count_events, counts_to_dataset, discretize, km_estimate, km_to_prob, CountMatrix, KmCurve,
    ProbMass, SurvivalDataset, TimeGrid,
};
use serde::{Deserialize, Serialize};

use crate::config::{ReferenceKind, ResolvedConfig};
use crate::ingest::read_dataset;
use crate::output::TableRow;

/// Input records together with their grid and gridded copy.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw: SurvivalDataset,
    pub grid: TimeGrid,
    pub gridded: SurvivalDataset,
}

impl Prepared {
    /// `t_max` defaults to the largest time in `raw`.
    pub fn new(raw: SurvivalDataset, bin_size: f64, t_max: Option<f64>) -> Result<Self> {
        let t_max = match t_max {
            Some(t) => t,
            None => raw.max_time().context("dataset is empty")?,
        };
        let grid = build_grid(t_max, bin_size)?;
        let gridded = discretize(&raw, &grid)?;
        Ok(Self { raw, grid, gridded })
    }

    pub fn reference(&self, kind: ReferenceKind) -> &SurvivalDataset {
        match kind {
            ReferenceKind::Raw => &self.raw,
            ReferenceKind::Discretized => &self.gridded,
        }
    }

    pub fn n(&self) -> usize {
        self.raw.len()
    }
}

/// Non-private KM curve, band and report of the gridded data.
pub fn non_private(prep: &Prepared, alpha: f64) -> Result<(KmCurve, ConfidenceBand, MetricReport)> {
    Ok(evaluate(&prep.gridded, &prep.grid, None, alpha)?)
}

/// How closely a surrogate built from the exact curve matches the input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub n: usize,
    pub p_value: f64,
    pub median: Option<f64>,
    pub reference_median: Option<f64>,
    pub cmd: Option<f64>,
}

/// Surrogate of size `n` from the exact gridded curve, compared by logrank with
/// the chosen reference and by calibrated median difference with the raw median.
pub fn surrogate_fidelity(prep: &Prepared, reference: ReferenceKind, n: usize) -> Result<Fidelity> {
    let curve = km_estimate(&count_events(&prep.gridded, &prep.grid)?);
    let surrogate = generate(&km_to_prob(&curve)?, SurrogateConfig::new(n)?);
    let p_value = logrank(&surrogate, prep.reference(reference))?.p_value;
    let median = median_survival(&km_estimate(&count_events(&surrogate, &prep.grid)?), None).median;
    let reference_median = raw_median(&prep.raw);
    let cmd = match (median, reference_median) {
        (Some(m), Some(r)) => Some(cmd(m, r)?),
        _ => None,
    };
    Ok(Fidelity {
        n,
        p_value,
        median,
        reference_median,
        cmd,
    })
}

/// Parameters of a single mechanism release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseSettings {
    pub method: Method,
    pub epsilon: f64,
    pub k_fraction: f64,
    pub prob_l1: ProbL1,
    pub seed: u64,
    pub reference: ReferenceKind,
    pub alpha: f64,
}

/// Exact input and private output of one mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Release {
    DpSurv {
        exact: KmCurve,
        released: KmCurve,
    },
    DpProb {
        exact: ProbMass,
        released: ProbMass,
        fell_back: bool,
    },
    DpMatrix {
        exact: CountMatrix,
        released: CountMatrix,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseOutput {
    pub release: Release,
    /// Probability mass of the release, suitable for `surrogate`.
    pub mass: ProbMass,
    pub surrogate: SurvivalDataset,
    pub curve: KmCurve,
    pub band: ConfidenceBand,
    pub report: MetricReport,
}

/// One centralized release. Uses the same noise stream as run 0 of a
/// centralized experiment with the same seed.
pub fn release_once(prep: &Prepared, s: &ReleaseSettings) -> Result<ReleaseOutput> {
    let mut rng = SeededNoise::new(derive_seed(run_seed(s.seed, 0), 0));
    let n = prep.n();
    let counts = count_events(&prep.gridded, &prep.grid)?;
    let exact_curve = km_estimate(&counts);
    let (release, mass, surrogate) = match s.method {
        Method::DpSurv => {
            let cfg = DpSurvConfig::new(s.epsilon, s.k_fraction, n)?;
            let released = dp_surv(&exact_curve, &cfg, &mut rng)?;
            let mass = km_to_prob(&released.anchored())?;
            let surrogate = generate(&mass, SurrogateConfig::new(n)?);
            (
                Release::DpSurv {
                    exact: exact_curve,
                    released,
                },
                mass,
                surrogate,
            )
        }
        Method::DpProb => {
            let cfg = DpProbConfig {
                l1: s.prob_l1,
                ..DpProbConfig::new(s.epsilon, n)?
            };
            let exact = km_to_prob(&exact_curve)?;
            let out = dp_prob(&exact, &cfg, &mut rng)?;
            let surrogate = generate(&out.mass, SurrogateConfig::new(n)?);
            (
                Release::DpProb {
                    exact,
                    released: out.mass.clone(),
                    fell_back: out.fell_back,
                },
                out.mass,
                surrogate,
            )
        }
        Method::DpMatrix => {
            let released = dp_matrix(&counts, PrivacyBudget::new(s.epsilon)?, &mut rng)?;
            let surrogate = counts_to_dataset(&released)?;
            let mass = km_to_prob(&km_estimate(&released))?;
            (
                Release::DpMatrix {
                    exact: counts,
                    released,
                },
                mass,
                surrogate,
            )
        }
    };
    let (curve, band, report) = evaluate(&surrogate, &prep.grid, Some(prep.reference(s.reference)), s.alpha)?;
    Ok(ReleaseOutput {
        release,
        mass,
        surrogate,
        curve,
        band,
        report,
    })
}

/// Collaboration settings for one epsilon of a resolved experiment.
pub fn collab_config(cfg: &ResolvedConfig, epsilon: f64) -> Result<CollabConfig> {
    let c = CollabConfig {
        clients: cfg.clients,
        epsilon: PrivacyBudget::new(epsilon)?,
        k_fraction: cfg.k_fraction,
        prob_l1: cfg.prob_l1,
        split: cfg.split,
        runs: cfg.runs,
        master_seed: cfg.master_seed,
        resplit_per_run: cfg.resplit_per_run,
        alpha: cfg.alpha,
        bootstrap_resamples: cfg.bootstrap_resamples,
    };
    c.validate()?;
    Ok(c)
}

/// One run of `path`. Matches run 0 of a Monte-Carlo sweep with the same master seed.
pub fn collab_once(
    prep: &Prepared,
    path: PathId,
    cfg: &CollabConfig,
    reference: ReferenceKind,
) -> Result<RunResult> {
    let seed = run_seed(cfg.master_seed, 0);
    let split_seed = if cfg.resplit_per_run {
        partition_seed(seed)
    } else {
        partition_seed(cfg.master_seed)
    };
    let part = cfg
        .split
        .split(&prep.gridded, cfg.clients, &mut SeededNoise::new(split_seed))?;
    Ok(run_path(path, &part, cfg, &prep.grid, prep.reference(reference), seed)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonResult {
    pub epsilon: f64,
    pub monte_carlo: MonteCarloResult,
}

/// Everything an `experiment` run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub config: ResolvedConfig,
    pub records: usize,
    pub t_max: f64,
    pub grid_points: usize,
    pub rows: Vec<TableRow>,
    pub results: Vec<EpsilonResult>,
}

/// Loads the dataset named in `cfg` and runs the sweep.
pub fn run_experiment(cfg: &ResolvedConfig) -> Result<ExperimentOutput> {
    let raw = read_dataset(&cfg.dataset, cfg.uncensored_only)?;
    run_experiment_on(cfg, raw)
}

/// Sweep over `cfg.epsilons` on already loaded records. The first row is the
/// non-private baseline, followed by one row of Monte-Carlo means per epsilon.
pub fn run_experiment_on(cfg: &ResolvedConfig, raw: SurvivalDataset) -> Result<ExperimentOutput> {
    let prep = Prepared::new(raw, cfg.bin_size, cfg.t_max)?;
    if let SplitSpec::Uneven { minority_fraction } = cfg.split {
        log::info!("uneven split, minority fraction {minority_fraction}");
    }
    let (_, _, base) = non_private(&prep, cfg.alpha)?;
    let mut rows = vec![TableRow::from_report("non-dp", None, &base)];
    let mut results = Vec::with_capacity(cfg.epsilons.len());
    for &eps in &cfg.epsilons {
        log::info!("{} epsilon={eps}: {} runs", cfg.label(), cfg.runs);
        let mc = monte_carlo(
            cfg.path_id(),
            &prep.gridded,
            &collab_config(cfg, eps)?,
            &prep.grid,
            prep.reference(cfg.p_value_reference),
        )?;
        rows.push(TableRow::from_monte_carlo(cfg.label(), eps, &mc));
        results.push(EpsilonResult {
            epsilon: eps,
            monte_carlo: mc,
        });
    }
    Ok(ExperimentOutput {
        config: cfg.clone(),
        records: prep.n(),
        t_max: prep.grid.t_max(),
        grid_points: prep.grid.len(),
        rows,
        results,
    })
}
