//! Sensitivities, isotonic projection and the three private release mechanisms.
//!
//! * [`dp_surv`] perturbs the leading DCT coefficients of a KM curve.
//! * [`dp_prob`] perturbs the event probability mass vector.
//! * [`dp_matrix`] perturbs the per-bin event and censoring counts.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::NoiseSource;
use crate::spectral::{dct_forward, dct_inverse, truncate};
use crate::survival::{CountMatrix, KmCurve, ProbMass};

/// Privacy parameter ε, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PrivacyBudget(f64);

impl PrivacyBudget {
    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_finite() && epsilon > 0.0 {
            Ok(Self(epsilon))
        } else {
            Err(invalid(format!("epsilon must be positive and finite, got {epsilon}")))
        }
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PrivacyBudget {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PrivacyBudget> for f64 {
    fn from(b: PrivacyBudget) -> f64 {
        b.0
    }
}

/// Which sensitivity bounds to use.
///
/// `WorstCaseCensoring` plugs `C = N` into the censoring-dependent bounds. It
/// does not give a differential privacy guarantee for data with an unknown
/// number of censored records, so mechanisms refuse it unless the caller sets
/// `acknowledge_not_dp`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensitivityMode {
    #[default]
    NoCensoring,
    WorstCaseCensoring,
}

/// Choice of L1 sensitivity for the probability mass vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbL1 {
    /// `2/N`: changing one record moves mass between two bins.
    #[default]
    TwoOverN,
    /// `√2/N`, the value quoted in some algorithm listings.
    SqrtTwoOverN,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub l1: f64,
    pub l2: f64,
}

fn check_sizes(n: usize, t: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("dataset size must be at least 1"));
    }
    if t < 2 {
        return Err(invalid("grid must have at least 2 points"));
    }
    Ok(())
}

/// Sensitivity of the KM vector on a grid of `t` points.
pub fn km_sensitivity(n: usize, t: usize, mode: SensitivityMode) -> Result<Sensitivity> {
    check_sizes(n, t)?;
    let (n, t) = (n as f64, t as f64);
    Ok(match mode {
        SensitivityMode::NoCensoring => Sensitivity {
            l1: (t - 1.0) / n,
            l2: (t - 1.0).sqrt() / n,
        },
        SensitivityMode::WorstCaseCensoring => Sensitivity { l1: t, l2: t.sqrt() },
    })
}

/// Sensitivity of the probability mass vector.
pub fn prob_sensitivity(n: usize, t: usize, mode: SensitivityMode) -> Result<Sensitivity> {
    check_sizes(n, t)?;
    let (n, t) = (n as f64, t as f64);
    Ok(match mode {
        SensitivityMode::NoCensoring => Sensitivity {
            l1: 2.0 / n,
            l2: 2f64.sqrt() / n,
        },
        SensitivityMode::WorstCaseCensoring => Sensitivity { l1: t, l2: t.sqrt() },
    })
}

/// L2 projection onto nonincreasing vectors (pool adjacent violators), no clamping.
pub fn pava_nonincreasing(v: &[f64]) -> Vec<f64> {
    // blocks of (sum, count); a block's mean must not exceed the previous one's
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(v.len());
    for &x in v {
        blocks.push((x, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s1 / n1 as f64 > s0 / n0 as f64 {
                blocks.pop();
                *blocks.last_mut().unwrap() = (s0 + s1, n0 + n1);
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, n)| std::iter::repeat(s / n as f64).take(n))
        .collect()
}

/// Nearest nonincreasing vector, clamped into `[0, 1]`.
///
/// Clamping after the projection gives the projection onto the boxed cone.
pub fn isotonic_project(v: &[f64]) -> Vec<f64> {
    pava_nonincreasing(v)
        .into_iter()
        .map(|x| x.clamp(0.0, 1.0))
        .collect()
}

/// Number of DCT coefficients kept: `max(1, round(k_fraction·T))`, at most `T`.
pub fn coefficients_kept(k_fraction: f64, t: usize) -> usize {
    ((k_fraction * t as f64).round() as usize).clamp(1, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpSurvConfig {
    pub epsilon: PrivacyBudget,
    /// Fraction of DCT coefficients kept, in `(0, 1]`.
    pub k_fraction: f64,
    /// Public dataset size.
    pub n: usize,
    #[serde(default)]
    pub sensitivity: SensitivityMode,
    #[serde(default)]
    pub acknowledge_not_dp: bool,
}

impl DpSurvConfig {
    pub fn new(epsilon: f64, k_fraction: f64, n: usize) -> Result<Self> {
        let cfg = Self {
            epsilon: PrivacyBudget::new(epsilon)?,
            k_fraction,
            n,
            sensitivity: SensitivityMode::NoCensoring,
            acknowledge_not_dp: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            return Err(invalid(format!("k_fraction must lie in (0, 1], got {}", self.k_fraction)));
        }
        if self.n == 0 {
            return Err(invalid("dataset size must be at least 1"));
        }
        check_ack(self.sensitivity, self.acknowledge_not_dp)
    }
}

fn check_ack(mode: SensitivityMode, ack: bool) -> Result<()> {
    if mode == SensitivityMode::WorstCaseCensoring && !ack {
        return Err(invalid(
            "worst-case censoring sensitivity is not a DP guarantee; set acknowledge_not_dp to use it",
        ));
    }
    Ok(())
}

/// Releases a KM curve: Laplace noise on the first `k` DCT coefficients, the rest
/// dropped, then back to the time domain and projected onto `[0,1]`-valued
/// nonincreasing curves. Draws exactly `k` samples.
pub fn dp_surv(s: &KmCurve, cfg: &DpSurvConfig, rng: &mut impl NoiseSource) -> Result<KmCurve> {
    cfg.validate()?;
    let t = s.values().len();
    let k = coefficients_kept(cfg.k_fraction, t);
    let sens = km_sensitivity(cfg.n, t, cfg.sensitivity)?;
    let scale = (k as f64).sqrt() * sens.l2 / cfg.epsilon.epsilon();

    let mut y = dct_forward(s.values())?;
    for c in &mut y.coefficients_mut()[..k] {
        *c += rng.laplace(scale)?;
    }
    let y = truncate(&y, k)?;
    let x = dct_inverse(&y)?;
    KmCurve::new(*s.grid(), isotonic_project(&x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpProbConfig {
    pub epsilon: PrivacyBudget,
    /// Public dataset size.
    pub n: usize,
    #[serde(default)]
    pub l1: ProbL1,
    #[serde(default)]
    pub sensitivity: SensitivityMode,
    #[serde(default)]
    pub acknowledge_not_dp: bool,
}

impl DpProbConfig {
    pub fn new(epsilon: f64, n: usize) -> Result<Self> {
        let cfg = Self {
            epsilon: PrivacyBudget::new(epsilon)?,
            n,
            l1: ProbL1::TwoOverN,
            sensitivity: SensitivityMode::NoCensoring,
            acknowledge_not_dp: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("dataset size must be at least 1"));
        }
        check_ack(self.sensitivity, self.acknowledge_not_dp)
    }

    fn l1_sensitivity(&self, t: usize) -> Result<f64> {
        let sens = prob_sensitivity(self.n, t, self.sensitivity)?;
        Ok(match (self.sensitivity, self.l1) {
            (SensitivityMode::NoCensoring, ProbL1::SqrtTwoOverN) => sens.l2,
            _ => sens.l1,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpProbRelease {
    pub mass: ProbMass,
    /// Set when every noisy entry clipped to zero and all mass was put beyond the study.
    pub fell_back: bool,
}

/// Releases a probability mass vector: Laplace noise on each of the `T+1`
/// entries, clip at zero, renormalise.
pub fn dp_prob(y: &ProbMass, cfg: &DpProbConfig, rng: &mut impl NoiseSource) -> Result<DpProbRelease> {
    cfg.validate()?;
    let t = y.grid().len();
    let scale = cfg.l1_sensitivity(t)? / cfg.epsilon.epsilon();
    let mut noisy = Vec::with_capacity(y.values().len());
    for v in y.values() {
        noisy.push((v + rng.laplace(scale)?).max(0.0));
    }
    let total: f64 = noisy.iter().sum();
    if total <= 0.0 {
        log::warn!("every noisy probability clipped to zero; releasing all mass beyond the study");
        let mut values = vec![0.0; t + 1];
        values[t] = 1.0;
        return Ok(DpProbRelease {
            mass: ProbMass::new(*y.grid(), values)?,
            fell_back: true,
        });
    }
    noisy.iter_mut().for_each(|v| *v /= total);
    Ok(DpProbRelease {
        mass: ProbMass::new(*y.grid(), noisy)?,
        fell_back: false,
    })
}

/// Releases a count matrix. `r0` is public and kept.
///
/// Each `d_j` and `c_j` gets Laplace(2/ε) noise, drawn in the order
/// `d_0, c_0, d_1, c_1, ...`. The noisy counts are rounded half away from
/// zero and clamped at 0. Walking the risk-set recursion, the first bin that
/// would drive it negative is capped at what is left (events first) and every
/// later bin is zeroed.
pub fn dp_matrix(m: &CountMatrix, epsilon: PrivacyBudget, rng: &mut impl NoiseSource) -> Result<CountMatrix> {
    let scale = 2.0 / epsilon.epsilon();
    let t = m.grid().len();
    let mut d = Vec::with_capacity(t);
    let mut c = Vec::with_capacity(t);
    for j in 0..t {
        d.push((m.events()[j] + rng.laplace(scale)?).round().max(0.0));
        c.push((m.censored()[j] + rng.laplace(scale)?).round().max(0.0));
    }

    let mut r = m.r0() as f64;
    let mut depleted = false;
    for j in 0..t {
        if depleted {
            d[j] = 0.0;
            c[j] = 0.0;
            continue;
        }
        if d[j] + c[j] > r {
            d[j] = d[j].min(r);
            c[j] = c[j].min(r - d[j]);
            depleted = true;
        }
        r -= d[j] + c[j];
    }
    CountMatrix::new(*m.grid(), m.r0(), d, c)
}
