//! Simulated user that knows the target clustering.
//!
//! Randomness comes from ChaCha8 seeded with the run seed; each consumer
//! draws from its own stream ([`STREAM_ORACLE`], [`STREAM_PERTURB`],
//! [`STREAM_PLANT`]) so that changing one consumer never shifts another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{feasible_merges, feasible_splits, EditRequest, Model, ModelConfig};
use crate::types::{ClusterId, Clustering};

pub const RNG_NAME: &str = "chacha8";
pub const STREAM_ORACLE: u64 = 0;
pub const STREAM_PERTURB: u64 = 1;
pub const STREAM_PLANT: u64 = 2;

/// ChaCha8 keyed by `seed`, positioned on `stream`.
pub fn session_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// How the oracle chooses between splits and merges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interleave {
    /// Uniform over all feasible splits and merges together.
    #[default]
    Uniform,
    /// Uniform split while any is feasible, then uniform merge.
    SplitsFirst,
    /// Fair coin between the two kinds when both exist, then uniform within.
    Balanced,
}

/// Deterministic request choices for stress tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialPolicy {
    /// The merge with the largest combined size (ties by smallest id pair);
    /// the largest splittable cluster when no merge is feasible.
    LargestMerge,
    /// Every feasible split (smallest id first) before any merge.
    SplitsFirst,
}

fn feasible(proposed: &Clustering, target: &Clustering, cfg: &ModelConfig) -> Result<(Vec<ClusterId>, Vec<(ClusterId, ClusterId)>)> {
    Ok((
        feasible_splits(proposed, target)?,
        feasible_merges(proposed, target, cfg.model, cfg.eta)?,
    ))
}

fn split(id: ClusterId) -> EditRequest {
    EditRequest::Split { cluster: id }
}

fn merge((first, second): (ClusterId, ClusterId)) -> EditRequest {
    EditRequest::Merge { first, second }
}

/// Samples the next request. For the eta models this is uniform over all
/// feasible edits; for the unrestricted model merges are uniform among
/// feasible merges and `interleave` decides between splits and merges.
/// Returns `None` once `proposed` equals `target`.
pub fn next_request(
    proposed: &Clustering,
    target: &Clustering,
    cfg: &ModelConfig,
    interleave: Interleave,
    rng: &mut impl Rng,
) -> Result<Option<EditRequest>> {
    let (splits, merges) = feasible(proposed, target, cfg)?;
    let interleave = match cfg.model {
        Model::UnrestrictedMerge => interleave,
        Model::EtaMerge | Model::EtaMergeCc => Interleave::Uniform,
    };
    if splits.is_empty() && merges.is_empty() {
        return Ok(None);
    }
    let pick_split = match interleave {
        _ if merges.is_empty() => true,
        _ if splits.is_empty() => false,
        Interleave::Uniform => rng.random_range(0..splits.len() + merges.len()) < splits.len(),
        Interleave::SplitsFirst => true,
        Interleave::Balanced => rng.random_bool(0.5),
    };
    Ok(Some(if pick_split {
        split(splits[rng.random_range(0..splits.len())])
    } else {
        merge(merges[rng.random_range(0..merges.len())])
    }))
}

pub fn adversarial_request(
    proposed: &Clustering,
    target: &Clustering,
    cfg: &ModelConfig,
    policy: AdversarialPolicy,
) -> Result<Option<EditRequest>> {
    let (splits, merges) = feasible(proposed, target, cfg)?;
    let size = |id: ClusterId| proposed.get(id).map(|c| c.len()).unwrap_or(0);
    let largest_merge = || {
        merges
            .iter()
            .copied()
            .max_by(|&(a, b), &(c, d)| (size(a) + size(b)).cmp(&(size(c) + size(d))).then((c, d).cmp(&(a, b))))
    };
    Ok(match policy {
        AdversarialPolicy::LargestMerge => largest_merge().map(merge).or_else(|| {
            splits
                .iter()
                .copied()
                .max_by(|&a, &b| size(a).cmp(&size(b)).then(b.cmp(&a)))
                .map(split)
        }),
        AdversarialPolicy::SplitsFirst => splits.first().copied().map(split).or_else(|| merges.first().copied().map(merge)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TreeMode;

    fn w1() -> (Clustering, Clustering) {
        let proposed = Clustering::from_groups(6, &[vec![0, 1], vec![2, 3], vec![4], vec![5]]).unwrap();
        let target = Clustering::from_groups(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        (proposed, target)
    }

    fn eta(e: f64) -> ModelConfig {
        ModelConfig::new(Model::EtaMerge, e, TreeMode::Global)
    }

    #[test]
    fn converged_clustering_gets_no_request() {
        let (_, target) = w1();
        let mut rng = session_rng(1, STREAM_ORACLE);
        assert_eq!(next_request(&target, &target, &eta(0.6), Interleave::Uniform, &mut rng).unwrap(), None);
        for policy in [AdversarialPolicy::LargestMerge, AdversarialPolicy::SplitsFirst] {
            assert_eq!(adversarial_request(&target, &target, &eta(0.6), policy).unwrap(), None);
        }
    }

    #[test]
    fn uniform_over_feasible_edits() {
        let (proposed, target) = w1();
        let mut rng = session_rng(7, STREAM_ORACLE);
        let draws = 10_000;
        let mut splits = 0;
        for _ in 0..draws {
            match next_request(&proposed, &target, &eta(0.6), Interleave::Uniform, &mut rng).unwrap().unwrap() {
                EditRequest::Split { cluster } => {
                    assert_eq!(cluster, ClusterId(1));
                    splits += 1;
                }
                EditRequest::Merge { first, second } => assert_eq!((first, second), (ClusterId(2), ClusterId(3))),
            }
        }
        let freq = splits as f64 / draws as f64;
        assert!((freq - 0.5).abs() <= 0.02, "split frequency {freq}");
    }

    #[test]
    fn single_feasible_edit_is_certain() {
        let proposed = Clustering::from_groups(4, &[vec![0, 1, 2, 3]]).unwrap();
        let target = Clustering::from_groups(4, &[vec![0, 1], vec![2, 3]]).unwrap();
        let mut rng = session_rng(3, STREAM_ORACLE);
        for _ in 0..50 {
            let r = next_request(&proposed, &target, &eta(0.6), Interleave::Uniform, &mut rng).unwrap();
            assert_eq!(r, Some(EditRequest::Split { cluster: ClusterId(0) }));
        }
    }

    #[test]
    fn seeded_sequences_repeat() {
        let (proposed, target) = w1();
        let cfg = eta(0.5);
        let draw = |seed| {
            let mut rng = session_rng(seed, STREAM_ORACLE);
            (0..20)
                .map(|_| next_request(&proposed, &target, &cfg, Interleave::Uniform, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn streams_are_independent() {
        let a: u64 = session_rng(5, STREAM_ORACLE).random();
        let b: u64 = session_rng(5, STREAM_PERTURB).random();
        assert_ne!(a, b);
    }

    #[test]
    fn unrestricted_interleaving() {
        let (proposed, target) = w1();
        let cfg = ModelConfig::new(Model::UnrestrictedMerge, 1.0, TreeMode::Global);
        let mut rng = session_rng(2, STREAM_ORACLE);
        for _ in 0..20 {
            let r = next_request(&proposed, &target, &cfg, Interleave::SplitsFirst, &mut rng).unwrap().unwrap();
            assert!(r.is_split());
        }
        let merges = (0..2000)
            .filter(|_| {
                !next_request(&proposed, &target, &cfg, Interleave::Balanced, &mut rng)
                    .unwrap()
                    .unwrap()
                    .is_split()
            })
            .count();
        assert!((merges as f64 / 2000.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn adversarial_policies() {
        let (proposed, target) = w1();
        let cfg = eta(0.6);
        assert_eq!(
            adversarial_request(&proposed, &target, &cfg, AdversarialPolicy::LargestMerge).unwrap(),
            Some(EditRequest::Merge { first: ClusterId(2), second: ClusterId(3) })
        );
        assert_eq!(
            adversarial_request(&proposed, &target, &cfg, AdversarialPolicy::SplitsFirst).unwrap(),
            Some(EditRequest::Split { cluster: ClusterId(1) })
        );
    }
}
