//! Surrogate dataset reconstruction from a probability mass vector.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::survival::{ProbMass, SurvivalDataset, SurvivalRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Target population size.
    pub n: usize,
}

impl SurrogateConfig {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("surrogate size must be at least 1"));
        }
        Ok(Self { n })
    }
}

/// Emits `round(y[j]·n)` events at each grid point `t_j` and `round(y[T]·n)`
/// records censored at the last grid point.
///
/// Deterministic. The output size can differ from `n` by rounding and is not
/// rebalanced.
pub fn generate(y: &ProbMass, cfg: SurrogateConfig) -> SurvivalDataset {
    let grid = y.grid();
    let t = grid.len();
    let n = cfg.n as f64;
    let mut records = Vec::new();
    for (j, p) in y.values()[..t].iter().enumerate() {
        let count = (p * n).round() as usize;
        records.extend(std::iter::repeat(SurvivalRecord::new(grid.point(j), true)).take(count));
    }
    let beyond = (y.beyond() * n).round() as usize;
    records.extend(std::iter::repeat(SurvivalRecord::new(grid.last_point(), false)).take(beyond));
    records.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::tests::toy_grid;
    use crate::survival::{build_grid, count_events, km_estimate, km_to_prob};
    use proptest::prelude::*;

    fn toy_mass() -> ProbMass {
        ProbMass::new(toy_grid(), vec![0.0, 0.2, 0.2, 0.0, 0.3, 0.0, 0.3]).unwrap()
    }

    #[test]
    fn toy_reconstruction() {
        let ds = generate(&toy_mass(), SurrogateConfig::new(10).unwrap());
        let mut expect = Vec::new();
        expect.extend(vec![SurvivalRecord::new(1.0, true); 2]);
        expect.extend(vec![SurvivalRecord::new(2.0, true); 2]);
        expect.extend(vec![SurvivalRecord::new(4.0, true); 3]);
        expect.extend(vec![SurvivalRecord::new(5.0, false); 3]);
        assert_eq!(ds.records(), expect.as_slice());
    }

    #[test]
    fn all_mass_beyond() {
        let mut v = vec![0.0; 7];
        v[6] = 1.0;
        let y = ProbMass::new(toy_grid(), v).unwrap();
        let ds = generate(&y, SurrogateConfig::new(7).unwrap());
        assert_eq!(ds.records(), vec![SurvivalRecord::new(5.0, false); 7].as_slice());
    }

    #[test]
    fn zero_size_rejected() {
        assert!(SurrogateConfig::new(0).is_err());
    }

    #[test]
    fn converges_to_source_mass() {
        let y = toy_mass();
        for n in [1_000usize, 100_000] {
            let ds = generate(&y, SurrogateConfig::new(n).unwrap());
            let back = km_to_prob(&km_estimate(&count_events(&ds, y.grid()).unwrap())).unwrap();
            for (a, b) in back.values().iter().zip(y.values()) {
                assert!((a - b).abs() <= 2.0 / n as f64, "n={n}: {a} vs {b}");
            }
        }
    }

    fn arb_mass() -> impl Strategy<Value = ProbMass> {
        (1usize..30, prop::collection::vec(0.0f64..1.0, 31)).prop_map(|(steps, raw)| {
            let grid = build_grid(steps as f64, 1.0).unwrap();
            let mut v = raw[..=grid.len()].to_vec();
            v[0] = 0.0;
            let total: f64 = v.iter().sum();
            if total == 0.0 {
                v[grid.len()] = 1.0;
            } else {
                v.iter_mut().for_each(|x| *x /= total);
            }
            ProbMass::new(grid, v).unwrap()
        })
    }

    proptest! {
        #[test]
        fn size_and_placement(y in arb_mass(), n in 1usize..5000) {
            let ds = generate(&y, SurrogateConfig::new(n).unwrap());
            let slack = (y.values().len() as f64) / 2.0;
            prop_assert!((ds.len() as f64 - n as f64).abs() <= slack);
            for r in ds.iter() {
                if r.event {
                    prop_assert!(y.grid().index_of(r.time).is_some());
                } else {
                    prop_assert_eq!(r.time, y.grid().last_point());
                }
            }
            prop_assert_eq!(generate(&y, SurrogateConfig::new(n).unwrap()), ds);
        }
    }
}
