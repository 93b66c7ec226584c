//! Mixing guided and exploration records at a fixed exact ratio.

use num_rational::Ratio;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SynthesisError;
use crate::num::{decimal_serde, round_half_up};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    /// Share of guided records, in `[0, 1]`.
    #[serde(with = "decimal_serde")]
    pub alpha: Ratio<i64>,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            alpha: Ratio::new(7, 10),
        }
    }
}

impl MixConfig {
    pub fn new(alpha: Ratio<i64>) -> Result<Self, SynthesisError> {
        let config = Self { alpha };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        if self.alpha < Ratio::from_integer(0) || self.alpha > Ratio::from_integer(1) {
            return Err(SynthesisError::Argument(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        Ok(())
    }

    /// Number of guided records in a mix of `n`, rounded half-up.
    pub fn guided_count(&self, n: usize) -> usize {
        let n = i64::try_from(n).expect("mix size fits in i64");
        round_half_up(&(self.alpha * n)) as usize
    }
}

/// Draws `n` records: [`MixConfig::guided_count`] from `guided` and the rest
/// from `exploration`, each without replacement, then shuffles.
pub fn mix_dataset<T: Clone, R: Rng + ?Sized>(
    guided: &[T],
    exploration: &[T],
    config: &MixConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<T>, SynthesisError> {
    config.validate()?;
    let from_guided = config.guided_count(n);
    let from_exploration = n - from_guided;
    for (pool, len, needed) in [
        ("guided", guided.len(), from_guided),
        ("exploration", exploration.len(), from_exploration),
    ] {
        if len < needed {
            return Err(SynthesisError::Supply {
                pool,
                needed,
                available: len,
            });
        }
    }
    let mut out = Vec::with_capacity(n);
    out.extend(index::sample(rng, guided.len(), from_guided).into_iter().map(|i| guided[i].clone()));
    out.extend(
        index::sample(rng, exploration.len(), from_exploration)
            .into_iter()
            .map(|i| exploration[i].clone()),
    );
    out.shuffle(rng);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
    enum Rec {
        G(usize),
        E(usize),
    }

    fn pools(g: usize, e: usize) -> (Vec<Rec>, Vec<Rec>) {
        ((0..g).map(Rec::G).collect(), (0..e).map(Rec::E).collect())
    }

    fn guided_in(v: &[Rec]) -> usize {
        v.iter().filter(|r| matches!(r, Rec::G(_))).count()
    }

    #[test]
    fn seventy_thirty() {
        let (g, e) = pools(20, 20);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = mix_dataset(&g, &e, &MixConfig::default(), 10, &mut rng).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(guided_in(&out), 7);
    }

    #[test]
    fn boundaries() {
        let (g, e) = pools(5, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(mix_dataset(&g, &e, &MixConfig::default(), 0, &mut rng).unwrap().is_empty());
        let all = MixConfig::new(Ratio::from_integer(1)).unwrap();
        let out = mix_dataset(&g, &e, &all, 5, &mut rng).unwrap();
        assert_eq!(guided_in(&out), 5);
    }

    #[test]
    fn half_up_rounding() {
        let c = MixConfig::default();
        assert_eq!(c.guided_count(5), 4); // 3.5
        assert_eq!(c.guided_count(15), 11); // 10.5
        assert_eq!(c.guided_count(1), 1); // 0.7
        assert_eq!(MixConfig::new(Ratio::new(1, 2)).unwrap().guided_count(1), 1);
    }

    #[test]
    fn shortage_names_the_pool() {
        let (g, e) = pools(10, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = mix_dataset(&g, &e, &MixConfig::default(), 10, &mut rng).unwrap_err();
        assert!(matches!(err, SynthesisError::Supply { pool: "exploration", needed: 3, available: 2 }));
        let (g, e) = pools(6, 10);
        let err = mix_dataset(&g, &e, &MixConfig::default(), 10, &mut rng).unwrap_err();
        assert!(err.to_string().contains("guided"));
    }

    #[test]
    fn invalid_alpha() {
        assert!(MixConfig::new(Ratio::new(11, 10)).is_err());
        assert!(MixConfig::new(Ratio::new(-1, 10)).is_err());
    }

    #[test]
    fn same_seed_same_mix() {
        let (g, e) = pools(50, 50);
        let a = mix_dataset(&g, &e, &MixConfig::default(), 30, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = mix_dataset(&g, &e, &MixConfig::default(), 30, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pooled_fraction_near_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let (g, e) = pools(64, 64);
        let (mut guided, mut total) = (0usize, 0usize);
        for _ in 0..10_000 {
            let n = rng.gen_range(1..=64);
            let out = mix_dataset(&g, &e, &MixConfig::default(), n, &mut rng).unwrap();
            guided += guided_in(&out);
            total += n;
        }
        let frac = guided as f64 / total as f64;
        assert!((frac - 0.7).abs() <= 0.02, "{frac}");
    }

    proptest! {
        #[test]
        fn exact_guided_share(n in 0usize..200, num in 0i64..=20, seed in any::<u64>()) {
            let config = MixConfig::new(Ratio::new(num, 20)).unwrap();
            let (g, e) = pools(200, 200);
            let out = mix_dataset(&g, &e, &config, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(out.len(), n);
            prop_assert_eq!(guided_in(&out), config.guided_count(n));
            let mut sorted = out.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), n, "sampled with replacement");
        }
    }
}
