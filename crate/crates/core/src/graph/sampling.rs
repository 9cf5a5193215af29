//! Representative node sampling.
//!
//! Farthest point sampling keeps sparse regions represented; a random
//! top-up drawn from the remaining nuclei retains some of the local density.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[inline]
pub(crate) fn dist_sq(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dr = a[0] - b[0];
    let dc = a[1] - b[1];
    dr * dr + dc * dc
}

/// How the node subset is chosen. All modes keep the same node budget,
/// `⌈a·n⌉ + ⌈b·n⌉` (capped at `n`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Farthest point sampling for the `a` share, random for the `b` share.
    #[default]
    Fused,
    /// Farthest point sampling for the whole budget.
    Farthest,
    /// Uniform random sampling for the whole budget.
    Random,
    /// Keep every nucleus.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub a_ratio: f64,
    pub b_ratio: f64,
    #[serde(default)]
    pub mode: SamplingMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            a_ratio: 0.35,
            b_ratio: 0.15,
            mode: SamplingMode::Fused,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b) = (self.a_ratio, self.b_ratio);
        if !(0.0..=1.0).contains(&b) || !(0.0..=1.0).contains(&a) || b >= a || a + b > 1.0 + 1e-12 {
            return Err(Error::invalid(format!(
                "sampling ratios need 0 <= b < a <= 1 and a + b <= 1, got a={a} b={b}"
            )));
        }
        Ok(())
    }

    /// `(farthest, random)` counts for `n` nuclei under fused sampling.
    pub fn counts(&self, n: usize) -> (usize, usize) {
        let share = |ratio: f64| ((ratio * n as f64) - 1e-9).ceil().max(0.0) as usize;
        let farthest = share(self.a_ratio).min(n);
        let random = share(self.b_ratio).min(n - farthest);
        (farthest, random)
    }
}

/// Greedy farthest point sampling from a fixed start index. Each pick
/// maximizes the minimum Euclidean distance to the picks so far, ties going
/// to the lowest index. Returns indices in pick order.
pub fn farthest_point_sample_from(coords: &[[f64; 2]], m: usize, start: usize) -> Result<Vec<usize>> {
    let n = coords.len();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    if m == 0 || m > n {
        return Err(Error::invalid(format!("cannot pick {m} of {n} points")));
    }
    if start >= n {
        return Err(Error::invalid(format!("start index {start} out of range")));
    }
    let mut picked = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut current = start;
    loop {
        picked.push(current);
        taken[current] = true;
        if picked.len() == m {
            return Ok(picked);
        }
        let origin = coords[current];
        let mut best = None::<(usize, f64)>;
        for (i, &p) in coords.iter().enumerate() {
            if taken[i] {
                continue;
            }
            let d = dist_sq(origin, p);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if best.is_none_or(|(_, bd)| nearest[i] > bd) {
                best = Some((i, nearest[i]));
            }
        }
        current = best.expect("m <= n leaves a candidate").0;
    }
}

/// Farthest point sampling whose start index is drawn uniformly from `seed`.
pub fn farthest_point_sample(coords: &[[f64; 2]], m: usize, seed: u64) -> Result<Vec<usize>> {
    if coords.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..coords.len());
    farthest_point_sample_from(coords, m, start)
}

/// Node subset under `cfg`, sorted ascending.
pub fn sample_nodes(coords: &[[f64; 2]], cfg: &SamplerConfig, seed: u64) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = coords.len();
    if n == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n_far, n_rand) = cfg.counts(n);
    let budget = n_far + n_rand;
    let mut chosen = match cfg.mode {
        SamplingMode::All => (0..n).collect(),
        SamplingMode::Random => random_subset(&(0..n).collect::<Vec<_>>(), budget, &mut rng),
        SamplingMode::Farthest => {
            let start = rng.gen_range(0..n);
            farthest_point_sample_from(coords, budget, start)?
        }
        SamplingMode::Fused => {
            let start = rng.gen_range(0..n);
            let mut far = farthest_point_sample_from(coords, n_far, start)?;
            let mut in_far = vec![false; n];
            far.iter().for_each(|&i| in_far[i] = true);
            let rest: Vec<usize> = (0..n).filter(|&i| !in_far[i]).collect();
            far.extend(random_subset(&rest, n_rand, &mut rng));
            far
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

/// Fused sampling: farthest points for the `a` share plus a uniform draw
/// without replacement from the remaining nuclei for the `b` share.
pub fn fused_sample(coords: &[[f64; 2]], cfg: &SamplerConfig, seed: u64) -> Result<Vec<usize>> {
    let fused = SamplerConfig {
        mode: SamplingMode::Fused,
        ..*cfg
    };
    sample_nodes(coords, &fused, seed)
}

fn random_subset<R: Rng>(pool: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let mut pool = pool.to_vec();
    let (head, _) = pool.partial_shuffle(rng, k);
    head.to_vec()
}
