//! Target selection from classified candidates: keep the candidates whose
//! row-max scores rank in the upper part of the ascending sort (far from
//! the decision boundary), vote over their scores rounded to four decimals,
//! and return the best member of the winning vote group.

use std::collections::HashMap;

use crate::error::{CoreError, Result};
use crate::geometry::BBox;
use crate::woselm::POS_COLUMN;

/// A scored candidate box.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub bbox: BBox,
    /// One row of the score matrix (m columns).
    pub scores: Vec<f64>,
    /// Row maximum of `scores`.
    pub max_score: f64,
    /// Argmax column of `scores` (lower index on ties).
    pub predicted_label: usize,
}

impl Candidate {
    pub fn from_scores(bbox: BBox, scores: Vec<f64>) -> Self {
        debug_assert!(scores.len() >= 2);
        let mut best = 0usize;
        for j in 1..scores.len() {
            if scores[j] > scores[best] {
                best = j;
            }
        }
        let max_score = scores[best];
        Candidate { bbox, scores, max_score, predicted_label: best }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectorConfig {
    /// Share of the ascending sort kept as the far-from-boundary pool.
    pub latter_fraction: f64,
    /// Decimal places used for vote grouping.
    pub round_decimals: u32,
    /// Restrict voting to predicted-positive candidates when any exist.
    pub positive_only: bool,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig { latter_fraction: 0.5, round_decimals: 4, positive_only: true }
    }
}

/// Row maxima of the candidates' score rows.
pub fn max_scores(candidates: &[Candidate]) -> Vec<f64> {
    candidates.iter().map(|c| c.max_score).collect()
}

/// Stable ascending sort, returned as a permutation of indices. Equal
/// values preserve their original relative order.
pub fn sort_ascending(max_v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..max_v.len()).collect();
    idx.sort_by(|&a, &b| max_v[a].total_cmp(&max_v[b]));
    idx
}

/// Vote histogram emitted for diagnostics: (rounded value, vote count),
/// ascending by rounded value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoteDiagnostics {
    pub groups: Vec<(f64, usize)>,
    pub pool_size: usize,
    pub latter_count: usize,
}

/// Total order on candidates by (max score, box coordinates); used so the
/// selection is invariant to the order candidates arrive in.
fn candidate_key(c: &Candidate) -> (f64, i32, i32, u32, u32) {
    (c.max_score, c.bbox.x, c.bbox.y, c.bbox.w, c.bbox.h)
}

fn key_cmp(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    let (sa, xa, ya, wa, ha) = candidate_key(a);
    let (sb, xb, yb, wb, hb) = candidate_key(b);
    sa.total_cmp(&sb)
        .then(xa.cmp(&xb))
        .then(ya.cmp(&yb))
        .then(wa.cmp(&wb))
        .then(ha.cmp(&hb))
}

/// Picks the target candidate:
///
/// 1. optionally restrict to predicted positives (all candidates when none
///    are positive);
/// 2. keep the top ⌈latter_fraction·n⌉ of the ascending score order (at
///    least one);
/// 3. round each kept max score to `round_decimals` places
///    (half-away-from-zero) and vote by rounded value in a hash table;
/// 4. the group with the most votes wins, count ties breaking toward the
///    larger rounded value; within the winning group the candidate with
///    the greatest raw score wins, with box coordinates as the final
///    tie-break.
///
/// Returns the index of the chosen candidate in the input slice plus the
/// vote histogram.
pub fn select_target(
    candidates: &[Candidate],
    cfg: &SelectorConfig,
) -> Result<(usize, VoteDiagnostics)> {
    if candidates.is_empty() {
        return Err(CoreError::EmptyInput("candidate list".into()));
    }
    let mut pool: Vec<usize> = if cfg.positive_only {
        let positives: Vec<usize> = (0..candidates.len())
            .filter(|&i| candidates[i].predicted_label == POS_COLUMN)
            .collect();
        if positives.is_empty() {
            (0..candidates.len()).collect()
        } else {
            positives
        }
    } else {
        (0..candidates.len()).collect()
    };
    let pool_size = pool.len();

    // Ascending by (score, box) so ties at the cut are resolved on values,
    // not arrival order.
    pool.sort_by(|&a, &b| key_cmp(&candidates[a], &candidates[b]));
    let keep = ((cfg.latter_fraction * pool.len() as f64).ceil() as usize)
        .clamp(1, pool.len());
    let latter = &pool[pool.len() - keep..];

    let scale = 10f64.powi(cfg.round_decimals as i32);
    let rounded_key = |v: f64| (v * scale).round() as i64;

    let mut votes: HashMap<i64, Vec<usize>> = HashMap::new();
    for &i in latter {
        votes.entry(rounded_key(candidates[i].max_score)).or_default().push(i);
    }

    // Most votes wins; ties toward the larger rounded value. The least
    // voted groups lose unless no better-supported group exists.
    let (_, members) = votes
        .iter()
        .max_by(|(ka, va), (kb, vb)| va.len().cmp(&vb.len()).then(ka.cmp(kb)))
        .expect("latter set is nonempty");

    let &chosen = members
        .iter()
        .max_by(|&&a, &&b| key_cmp(&candidates[a], &candidates[b]))
        .expect("vote group is nonempty");

    let mut groups: Vec<(f64, usize)> = votes
        .iter()
        .map(|(k, v)| (*k as f64 / scale, v.len()))
        .collect();
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));

    Ok((chosen, VoteDiagnostics { groups, pool_size, latter_count: keep }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cand(x: i32, scores: &[f64]) -> Candidate {
        Candidate::from_scores(BBox::new(x, 0, 10, 10), scores.to_vec())
    }

    #[test]
    fn max_scores_are_row_maxima() {
        let cands = vec![cand(0, &[0.2, 0.9]), cand(1, &[0.5, 0.5]), cand(2, &[-0.3, -0.7])];
        assert_eq!(max_scores(&cands), vec![0.9, 0.5, -0.3]);
    }

    #[test]
    fn tie_rows_take_the_shared_value_and_lower_label() {
        let c = cand(0, &[0.5, 0.5]);
        assert_eq!(c.max_score, 0.5);
        assert_eq!(c.predicted_label, 0);
    }

    #[test]
    fn max_scores_match_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let scores: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = cand(0, &scores);
            let brute = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(c.max_score, brute);
        }
    }

    #[test]
    fn sort_ascending_basic() {
        assert_eq!(sort_ascending(&[3.0, 1.0, 2.0]), vec![1, 2, 0]);
        assert_eq!(sort_ascending(&[1.0, 2.0, 3.0]), vec![0, 1, 2]);
    }

    #[test]
    fn sort_ascending_is_stable_on_duplicates() {
        let v = [2.0, 1.0, 2.0, 1.0, 2.0];
        let perm = sort_ascending(&v);
        // Oracle: index-decorated sort.
        let mut decorated: Vec<(f64, usize)> = v.iter().cloned().zip(0..).collect();
        decorated.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expect: Vec<usize> = decorated.into_iter().map(|(_, i)| i).collect();
        assert_eq!(perm, expect);
    }

    #[test]
    fn single_candidate_selects_itself() {
        let cands = vec![cand(5, &[0.8, -0.8])];
        let (i, d) = select_target(&cands, &SelectorConfig::default()).unwrap();
        assert_eq!(i, 0);
        assert_eq!(d.latter_count, 1);
    }

    #[test]
    fn empty_candidates_error() {
        assert!(select_target(&[], &SelectorConfig::default()).is_err());
    }

    #[test]
    fn hand_vote_count() {
        // Max scores {0.91234, 0.91231, 0.53001, 0.91241}, full list kept:
        // rounded groups {0.9123: 2, 0.5300: 1, 0.9124: 1} -> the 0.9123
        // group wins and its best raw score is 0.91234.
        let cands = vec![
            cand(0, &[0.91234, -1.0]),
            cand(1, &[0.91231, -1.0]),
            cand(2, &[0.53001, -1.0]),
            cand(3, &[0.91241, -1.0]),
        ];
        let cfg = SelectorConfig { latter_fraction: 1.0, round_decimals: 4, positive_only: true };
        let (i, d) = select_target(&cands, &cfg).unwrap();
        assert_eq!(i, 0);
        let counts: Vec<usize> = d.groups.iter().map(|g| g.1).collect();
        assert_eq!(counts, vec![1, 2, 1]);
    }

    #[test]
    fn single_group_returns_greatest_raw_score() {
        let cands = vec![
            cand(0, &[0.500049, -1.0]),
            cand(1, &[0.500041, -1.0]),
            cand(2, &[0.500045, -1.0]),
        ];
        let cfg = SelectorConfig { latter_fraction: 1.0, round_decimals: 4, positive_only: true };
        let (i, d) = select_target(&cands, &cfg).unwrap();
        assert_eq!(i, 0);
        assert_eq!(d.groups.len(), 1);
    }

    #[test]
    fn positive_only_prefers_predicted_positives() {
        let cands = vec![
            cand(0, &[-0.2, 0.9]), // negative, high max
            cand(1, &[0.3, -0.3]), // positive, lower max
        ];
        let (i, _) = select_target(&cands, &SelectorConfig::default()).unwrap();
        assert_eq!(i, 1);
        // Without the filter the negative wins on score.
        let cfg = SelectorConfig { positive_only: false, latter_fraction: 1.0, round_decimals: 4 };
        let (i, _) = select_target(&cands, &cfg).unwrap();
        assert_eq!(i, 0);
    }

    #[test]
    fn all_negative_falls_back_to_all_candidates() {
        let cands = vec![cand(0, &[-0.5, 0.5]), cand(1, &[-0.1, 0.4])];
        let (i, _) = select_target(&cands, &SelectorConfig::default()).unwrap();
        // 0.5 > 0.4 picks the first.
        assert_eq!(i, 0);
    }

    #[test]
    fn latter_fraction_limits_the_pool() {
        // Four scores; fraction 0.5 keeps the top two. A large vote group
        // among the lower half must not matter.
        let cands = vec![
            cand(0, &[0.10001, -1.0]),
            cand(1, &[0.10002, -1.0]),
            cand(2, &[0.90001, -1.0]),
            cand(3, &[0.80001, -1.0]),
        ];
        let cfg = SelectorConfig { latter_fraction: 0.5, round_decimals: 4, positive_only: false };
        let (i, d) = select_target(&cands, &cfg).unwrap();
        assert_eq!(d.latter_count, 2);
        // Kept: 0.8 and 0.9 groups of one each; tie toward larger value.
        assert_eq!(i, 2);
    }

    /// Independent re-implementation used as the voting oracle.
    pub(crate) fn brute_force_select(cands: &[Candidate], cfg: &SelectorConfig) -> usize {
        let pos: Vec<usize> = (0..cands.len())
            .filter(|&i| cands[i].predicted_label == POS_COLUMN)
            .collect();
        let pool: Vec<usize> = if cfg.positive_only && !pos.is_empty() {
            pos
        } else {
            (0..cands.len()).collect()
        };
        let mut order = pool.clone();
        order.sort_by(|&a, &b| key_cmp(&cands[a], &cands[b]));
        let keep = ((cfg.latter_fraction * order.len() as f64).ceil() as usize).max(1);
        let latter = &order[order.len() - keep..];
        let scale = 10f64.powi(cfg.round_decimals as i32);
        // Enumerate groups without a hash map.
        let mut keys: Vec<i64> =
            latter.iter().map(|&i| (cands[i].max_score * scale).round() as i64).collect();
        keys.sort_unstable();
        keys.dedup();
        let mut best_key = None;
        let mut best_count = 0usize;
        for &k in &keys {
            let count = latter
                .iter()
                .filter(|&&i| (cands[i].max_score * scale).round() as i64 == k)
                .count();
            if count > best_count || (count == best_count && Some(k) > best_key) {
                best_count = count;
                best_key = Some(k);
            }
        }
        let k = best_key.unwrap();
        let mut members: Vec<usize> = latter
            .iter()
            .cloned()
            .filter(|&i| (cands[i].max_score * scale).round() as i64 == k)
            .collect();
        members.sort_by(|&a, &b| key_cmp(&cands[a], &cands[b]));
        *members.last().unwrap()
    }

    fn arb_candidates() -> impl Strategy<Value = Vec<Candidate>> {
        prop::collection::vec(
            (
                0i32..40,
                0i32..40,
                // Coarse score grid plus jitter provokes rounding collisions.
                -20i32..20,
                prop::bool::ANY,
                0u8..10,
            ),
            1..40,
        )
        .prop_map(|raw| {
            raw.into_iter()
                .map(|(x, y, base, pos, jitter)| {
                    let s = base as f64 / 20.0 + jitter as f64 * 1e-6;
                    let scores = if pos { vec![s, -s] } else { vec![-s, s] };
                    Candidate::from_scores(BBox::new(x, y, 10, 10), scores)
                })
                .collect()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn selection_matches_brute_force(cands in arb_candidates()) {
            let cfg = SelectorConfig::default();
            let (got, _) = select_target(&cands, &cfg).unwrap();
            prop_assert_eq!(got, brute_force_select(&cands, &cfg));
        }

        #[test]
        fn selection_is_permutation_invariant(cands in arb_candidates(), rot in 0usize..40) {
            let cfg = SelectorConfig::default();
            let (a, _) = select_target(&cands, &cfg).unwrap();
            let mut shuffled = cands.clone();
            let len = shuffled.len().max(1);
            shuffled.rotate_left(rot % len);
            let (b, _) = select_target(&shuffled, &cfg).unwrap();
            prop_assert_eq!(&cands[a], &shuffled[b]);
        }

        #[test]
        fn chosen_candidate_is_in_the_latter_set(cands in arb_candidates()) {
            let cfg = SelectorConfig { positive_only: false, ..SelectorConfig::default() };
            let (got, d) = select_target(&cands, &cfg).unwrap();
            let mut order: Vec<usize> = (0..cands.len()).collect();
            order.sort_by(|&a, &b| key_cmp(&cands[a], &cands[b]));
            let latter = &order[order.len() - d.latter_count..];
            prop_assert!(latter.contains(&got));
            // With positive_only and a positive present the result is
            // predicted positive.
            let cfg_pos = SelectorConfig::default();
            let (got_pos, _) = select_target(&cands, &cfg_pos).unwrap();
            if cands.iter().any(|c| c.predicted_label == POS_COLUMN) {
                prop_assert_eq!(cands[got_pos].predicted_label, POS_COLUMN);
            }
        }
    }

    #[test]
    fn selection_is_deterministic() {
        let cands = vec![
            cand(3, &[0.7, -0.7]),
            cand(1, &[0.7, -0.7]),
            cand(2, &[0.7, -0.7]),
        ];
        let cfg = SelectorConfig::default();
        let (a, _) = select_target(&cands, &cfg).unwrap();
        let (b, _) = select_target(&cands, &cfg).unwrap();
        assert_eq!(a, b);
        // Identical scores: the lexicographically largest box wins the
        // final tie-break, deterministically.
        assert_eq!(cands[a].bbox.x, 3);
    }
}
