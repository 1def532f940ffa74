//! Checks for the data properties the edit procedures rely on: stability,
//! strict separation and strict threshold separation of a target clustering.

use serde::Serialize;

use crate::types::{ClusterId, Clustering, PointId, SimilarityMatrix};

/// A witnessed violation of `S(A, C \ A) > S(A, A')`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityViolation {
    pub cluster: ClusterId,
    pub subset: Vec<PointId>,
    pub foreign: Vec<PointId>,
    /// `S(A, C \ A)`.
    pub inner: f64,
    /// `S(A, A')`.
    pub outer: f64,
}

/// Partial stability check.
///
/// Verifying stability exactly means enumerating every subset of every
/// cluster. This checks a polynomial subfamily instead:
///
/// * `A = {x}` against every foreign singleton `A' = {y}` and every whole
///   foreign cluster,
/// * `A = C \ {x}` against the same family of `A'`.
///
/// Every reported triple is a genuine violation; an empty result does not
/// prove stability.
pub fn check_stability(target: &Clustering, s: &SimilarityMatrix) -> Vec<StabilityViolation> {
    let clusters: Vec<_> = target.clusters().collect();
    let mut out = Vec::new();
    for ci in &clusters {
        let members = ci.members();
        if members.len() < 2 {
            continue;
        }
        for &x in members {
            let rest: Vec<PointId> = members.iter().copied().filter(|&p| p != x).collect();
            let single = [x];
            let inner = s.average(&single, &rest);
            for cj in clusters.iter().filter(|c| c.id != ci.id) {
                let foreign_sets = cj
                    .members()
                    .iter()
                    .map(|&y| vec![y])
                    .chain(std::iter::once(cj.members().to_vec()));
                for foreign in foreign_sets {
                    // A = {x}
                    let outer = s.average(&single, &foreign);
                    if inner <= outer {
                        out.push(StabilityViolation {
                            cluster: ci.id,
                            subset: vec![x],
                            foreign: foreign.clone(),
                            inner,
                            outer,
                        });
                    }
                    // A = C \ {x}; S(A, C \ A) = S(C \ {x}, {x}) equals `inner`.
                    let outer = s.average(&rest, &foreign);
                    if inner <= outer {
                        out.push(StabilityViolation {
                            cluster: ci.id,
                            subset: rest.clone(),
                            foreign,
                            inner,
                            outer,
                        });
                    }
                }
            }
        }
    }
    out
}

/// A triple `x, y ∈ C_i`, `z ∉ C_i` with `S(x, y) <= S(x, z)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeparationViolation {
    pub x: PointId,
    pub y: PointId,
    pub z: PointId,
}

/// Exhaustive strict-separation check. For each point `x` it compares the
/// weakest same-cluster similarity against the strongest foreign one, which
/// covers all triples; at most one (extreme) witness is reported per point.
pub fn check_strict_separation(
    target: &Clustering,
    s: &SimilarityMatrix,
) -> Vec<SeparationViolation> {
    let n = target.n();
    let mut out = Vec::new();
    for x in 0..n {
        let cx = target.cluster_of(x);
        let mut weakest: Option<(f64, PointId)> = None;
        let mut strongest: Option<(f64, PointId)> = None;
        for y in 0..n {
            if y == x {
                continue;
            }
            let v = s.get(x, y);
            if target.cluster_of(y) == cx {
                if weakest.is_none_or(|(w, _)| v < w) {
                    weakest = Some((v, y));
                }
            } else if strongest.is_none_or(|(w, _)| v > w) {
                strongest = Some((v, y));
            }
        }
        if let (Some((w, y)), Some((st, z))) = (weakest, strongest) {
            if w <= st {
                out.push(SeparationViolation { x, y, z });
            }
        }
    }
    out
}

/// The open interval of valid thresholds: any `t` with
/// `max_across <= t < min_within` works.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThresholdBand {
    /// Largest similarity between points of different clusters, if any pair exists.
    pub max_across: Option<f64>,
    /// Smallest similarity between points of the same cluster, if any pair exists.
    pub min_within: Option<f64>,
}

impl ThresholdBand {
    /// A representative threshold: the midpoint when both ends exist.
    pub fn threshold(&self) -> f64 {
        match (self.max_across, self.min_within) {
            (Some(a), Some(w)) => (a + w) / 2.0,
            (Some(a), None) => a,
            (None, Some(w)) => w - 1.0,
            (None, None) => 0.0,
        }
    }

    pub fn admits(&self, t: f64) -> bool {
        self.max_across.is_none_or(|a| t >= a) && self.min_within.is_none_or(|w| w > t)
    }
}

/// Returns the band of valid thresholds, or `None` when no single threshold
/// separates within-cluster from across-cluster similarities.
pub fn check_strict_threshold(target: &Clustering, s: &SimilarityMatrix) -> Option<ThresholdBand> {
    let n = target.n();
    let mut max_across: Option<f64> = None;
    let mut min_within: Option<f64> = None;
    for x in 0..n {
        for y in (x + 1)..n {
            let v = s.get(x, y);
            if target.cluster_of(x) == target.cluster_of(y) {
                min_within = Some(min_within.map_or(v, |m| m.min(v)));
            } else {
                max_across = Some(max_across.map_or(v, |m| m.max(v)));
            }
        }
    }
    match (max_across, min_within) {
        (Some(a), Some(w)) if w <= a => None,
        _ => Some(ThresholdBand {
            max_across,
            min_within,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(within: f64, across: f64) -> (SimilarityMatrix, Clustering) {
        let target = Clustering::from_groups(6, &[vec![0, 1, 2], vec![3, 4, 5]]).unwrap();
        let s = SimilarityMatrix::from_fn(6, |i, j| {
            if (i < 3) == (j < 3) {
                within
            } else {
                across
            }
        })
        .unwrap();
        (s, target)
    }

    #[test]
    fn planted_instance_passes_everything() {
        let (s, t) = planted(0.9, 0.1);
        assert!(check_stability(&t, &s).is_empty());
        assert!(check_strict_separation(&t, &s).is_empty());
        let band = check_strict_threshold(&t, &s).unwrap();
        assert!(band.admits(0.5));
        assert!((band.threshold() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reversed_similarities_fail() {
        let (s, t) = planted(0.1, 0.9);
        assert!(!check_stability(&t, &s).is_empty());
        assert!(!check_strict_separation(&t, &s).is_empty());
        assert!(check_strict_threshold(&t, &s).is_none());
    }

    #[test]
    fn one_raised_cross_pair_breaks_separation() {
        let (mut s, t) = planted(0.9, 0.1);
        s.set(0, 4, 0.95);
        assert!(!check_strict_separation(&t, &s).is_empty());
        assert!(check_strict_threshold(&t, &s).is_none());
    }

    #[test]
    fn degenerate_inputs_hold() {
        let s = SimilarityMatrix::from_fn(1, |_, _| 0.0).unwrap();
        let t = Clustering::from_labels(&[0]);
        assert!(check_stability(&t, &s).is_empty());
        assert!(check_strict_separation(&t, &s).is_empty());
        assert!(check_strict_threshold(&t, &s).is_some());

        let (s, _) = planted(0.1, 0.9);
        let single = Clustering::from_labels(&[0; 6]);
        assert!(check_stability(&single, &s).is_empty());
    }
}
