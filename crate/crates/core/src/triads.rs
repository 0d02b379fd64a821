//! Within-session triad classification, census, and closure curves.
//!
//! A triple of musicians is classified from its three pair weights sorted
//! ascending, (w1, w2, w3):
//!
//! * closed      — w1 > 0 (all three edges present, any strength)
//! * disconnected — w2 = 0 (fewer than two edges)
//! * forbidden   — open with strong legs: w1 = 0 and w2 >= theta
//! * open        — w1 = 0 and 0 < w2 < theta
//!
//! The "minimal triplet legs weight" is w2, the weaker of the two legs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CoPlayIndex, WeightMatrix};
use crate::records::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriadClass {
    Disconnected,
    Open,
    Closed,
    Forbidden,
}

/// Classify a weight triple at strong-tie threshold `theta` (>= 2).
pub fn classify_triad(weights: [u32; 3], theta: u32) -> Result<TriadClass> {
    if theta < 2 {
        return Err(Error::Argument(format!("theta must be >= 2, got {theta}")));
    }
    let [w1, w2, _] = order_stats(weights);
    Ok(if w1 > 0 {
        TriadClass::Closed
    } else if w2 == 0 {
        TriadClass::Disconnected
    } else if w2 >= theta {
        TriadClass::Forbidden
    } else {
        TriadClass::Open
    })
}

/// Ascending order statistics (w1, w2, w3) of a weight triple.
pub fn order_stats(mut weights: [u32; 3]) -> [u32; 3] {
    weights.sort_unstable();
    weights
}

/// Where a triad observation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Observed,
    /// Index of the rewired world.
    Rewired(u32),
}

/// One connected triad in its session context. Musician and session handles
/// are indices into the owning [`TriadPool`] tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriadObservation {
    /// Positions within the session's personnel, ascending by musician name.
    pub musicians: [u32; 3],
    /// Pair weights (w_ij, w_ik, w_jk) for the name-ordered triple (i, j, k).
    pub weights: [u32; 3],
    pub session: u32,
    pub origin: Origin,
}

impl TriadObservation {
    pub fn order_stats(&self) -> [u32; 3] {
        order_stats(self.weights)
    }

    /// Minimal triplet legs weight, w2.
    pub fn min_legs_weight(&self) -> u32 {
        self.order_stats()[1]
    }

    pub fn is_closed(&self) -> bool {
        self.order_stats()[0] > 0
    }
}

/// All connected triads pooled over sessions, with shared lookup tables.
#[derive(Debug, Clone, Default)]
pub struct TriadPool {
    pub observations: Vec<TriadObservation>,
    pub session_ids: Vec<String>,
    pub musician_names: Vec<Vec<String>>, // per pool session: personnel names sorted
}

impl TriadPool {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn extend(&mut self, other: TriadPool) {
        let base = self.session_ids.len() as u32;
        self.session_ids.extend(other.session_ids);
        self.musician_names.extend(other.musician_names);
        self.observations.extend(other.observations.into_iter().map(|mut o| {
            o.session += base;
            o
        }));
    }
}

/// Per-session triad counts at a fixed threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCensus {
    pub n_open: u64,
    pub n_closed: u64,
    pub n_forbidden: u64,
    pub theta: u32,
}

/// Densities over connected triads; undefined when no triad is connected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Densities {
    pub open: f64,
    pub closed: f64,
    pub forbidden: f64,
}

impl SessionCensus {
    pub fn n_connected(&self) -> u64 {
        self.n_open + self.n_closed + self.n_forbidden
    }

    pub fn densities(&self) -> Option<Densities> {
        let total = self.n_connected();
        if total == 0 {
            return None;
        }
        let total = total as f64;
        Some(Densities {
            open: self.n_open as f64 / total,
            closed: self.n_closed as f64 / total,
            forbidden: self.n_forbidden as f64 / total,
        })
    }
}

/// Count triad classes over all C(n,3) triples of a session matrix.
///
/// Sessions with fewer than three musicians yield an all-zero census, which
/// reports its densities as undefined.
pub fn session_census(matrix: &WeightMatrix, theta: u32) -> Result<SessionCensus> {
    if theta < 2 {
        return Err(Error::Argument(format!("theta must be >= 2, got {theta}")));
    }
    let n = matrix.n();
    let mut census = SessionCensus { n_open: 0, n_closed: 0, n_forbidden: 0, theta };
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let weights = [matrix.get(i, j), matrix.get(i, k), matrix.get(j, k)];
                match classify_triad(weights, theta)? {
                    TriadClass::Open => census.n_open += 1,
                    TriadClass::Closed => census.n_closed += 1,
                    TriadClass::Forbidden => census.n_forbidden += 1,
                    TriadClass::Disconnected => {}
                }
            }
        }
    }
    Ok(census)
}

/// Census every session of a dataset, in dataset order.
pub fn census_dataset(d: &Dataset, ix: &CoPlayIndex, theta: u32) -> Result<Vec<SessionCensus>> {
    d.sessions()
        .iter()
        .map(|s| session_census(&ix.session_weight_matrix(s), theta))
        .collect()
}

/// Pool every connected triad of every session, in session order and
/// lexicographic (by musician name) triple order within a session.
pub fn pooled_triplets(
    d: &Dataset,
    ix: &CoPlayIndex,
    theta: u32,
    origin: Origin,
) -> Result<TriadPool> {
    if theta < 2 {
        return Err(Error::Argument(format!("theta must be >= 2, got {theta}")));
    }
    let mut pool = TriadPool::default();
    for s in d.sessions() {
        let session_idx = pool.session_ids.len() as u32;
        let mut names: Vec<String> = s.personnel.iter().map(|p| p.musician_id.clone()).collect();
        names.sort();
        let matrix = {
            // Re-read weights in sorted-name order for deterministic triples.
            let ids: Vec<Option<u32>> = names.iter().map(|n| ix.musician_id(n)).collect();
            move |i: usize, j: usize| match (ids[i], ids[j]) {
                (Some(a), Some(b)) => ix.weight_by_id(a, b, s.year),
                _ => 0,
            }
        };
        let n = names.len();
        for i in 0..n {
            for j in (i + 1)..n {
                for k in (j + 1)..n {
                    let weights = [matrix(i, j), matrix(i, k), matrix(j, k)];
                    if order_stats(weights)[1] == 0 {
                        continue; // disconnected
                    }
                    pool.observations.push(TriadObservation {
                        musicians: [i as u32, j as u32, k as u32],
                        weights,
                        session: session_idx,
                        origin,
                    });
                }
            }
        }
        pool.session_ids.push(s.session_id.clone());
        pool.musician_names.push(names);
    }
    Ok(pool)
}

/// One quantile bin of the closure curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub quantile: u32,
    pub mean_min_legs_weight: f64,
    /// Raw share of closed triads in the bin.
    pub closure_probability_raw: f64,
    /// Centered moving average of the raw shares.
    pub closure_probability: f64,
}

/// Probability of closure by minimal-legs-weight quantile.
///
/// Observations sort by (w2, w3, session id, triple) so bins are total-order
/// deterministic despite heavy weight ties, then split into `n_quantiles`
/// near-equal bins; a centered moving average of width `smoothing_window`
/// smooths the per-bin closure shares.
pub fn closure_curve(
    pool: &TriadPool,
    n_quantiles: usize,
    smoothing_window: usize,
) -> Result<Vec<CurvePoint>> {
    let n = pool.observations.len();
    if n == 0 {
        return Err(Error::Argument("closure curve needs a non-empty triad pool".into()));
    }
    if n_quantiles == 0 || n_quantiles > n {
        return Err(Error::Argument(format!(
            "n_quantiles must be in 1..={n}, got {n_quantiles}"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let oa = &pool.observations[a];
        let ob = &pool.observations[b];
        let ka = (oa.order_stats()[1], oa.order_stats()[2], &pool.session_ids[oa.session as usize], oa.musicians);
        let kb = (ob.order_stats()[1], ob.order_stats()[2], &pool.session_ids[ob.session as usize], ob.musicians);
        ka.cmp(&kb)
    });

    let mut raw = Vec::with_capacity(n_quantiles);
    for q in 0..n_quantiles {
        let lo = q * n / n_quantiles;
        let hi = (q + 1) * n / n_quantiles;
        let bin = &order[lo..hi];
        let closed = bin.iter().filter(|&&i| pool.observations[i].is_closed()).count();
        let mean_w2: f64 = bin
            .iter()
            .map(|&i| pool.observations[i].min_legs_weight() as f64)
            .sum::<f64>()
            / bin.len() as f64;
        raw.push((mean_w2, closed as f64 / bin.len() as f64, bin.len()));
    }

    let smoothed = moving_average(
        &raw.iter().map(|r| r.1).collect::<Vec<f64>>(),
        smoothing_window.max(1),
    );

    Ok(raw
        .iter()
        .zip(smoothed)
        .enumerate()
        .map(|(q, (&(mean_w2, p_raw, _), p_smooth))| CurvePoint {
            quantile: q as u32 + 1,
            mean_min_legs_weight: mean_w2,
            closure_probability_raw: p_raw,
            closure_probability: p_smooth,
        })
        .collect())
}

/// Centered moving average with window shrinking at the edges.
fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let back = (window - 1) / 2;
    let fwd = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + fwd + 1).min(n);
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::CoPlayIndex;

    #[test]
    fn published_example_rows_classify_exactly() {
        // Label, weights, expected (w3, w2, min legs weight) per the worked
        // example's triad table at theta = 2.
        let rows: [([u32; 3], TriadClass, [u32; 3]); 6] = [
            ([11, 0, 6], TriadClass::Forbidden, [11, 6, 6]),
            ([12, 22, 0], TriadClass::Forbidden, [22, 12, 12]),
            ([0, 1, 8], TriadClass::Open, [8, 1, 1]),
            ([1, 16, 0], TriadClass::Open, [16, 1, 1]),
            ([1, 5, 1], TriadClass::Closed, [5, 1, 1]),
            ([7, 5, 10], TriadClass::Closed, [10, 7, 7]),
        ];
        for (weights, expected, stats) in rows {
            assert_eq!(classify_triad(weights, 2).unwrap(), expected, "{weights:?}");
            let [_, w2, w3] = order_stats(weights);
            assert_eq!([w3, w2, w2], stats, "{weights:?}");
        }
        // last closed rows of the table
        assert_eq!(classify_triad([35, 13, 5], 2).unwrap(), TriadClass::Closed);
        assert_eq!(classify_triad([35, 22, 16], 2).unwrap(), TriadClass::Closed);
    }

    #[test]
    fn classification_edge_cases() {
        assert_eq!(classify_triad([0, 0, 7], 2).unwrap(), TriadClass::Disconnected);
        assert_eq!(classify_triad([0, 0, 0], 2).unwrap(), TriadClass::Disconnected);
        assert_eq!(classify_triad([0, 2, 2], 2).unwrap(), TriadClass::Forbidden);
        assert_eq!(classify_triad([0, 1, 2], 2).unwrap(), TriadClass::Open);
        assert_eq!(classify_triad([1, 1, 1], 2).unwrap(), TriadClass::Closed);
        assert!(classify_triad([1, 1, 1], 1).is_err());
        assert!(classify_triad([1, 1, 1], 0).is_err());
    }

    #[test]
    fn classification_permutation_invariant() {
        let perms = |w: [u32; 3]| {
            [
                [w[0], w[1], w[2]],
                [w[0], w[2], w[1]],
                [w[1], w[0], w[2]],
                [w[1], w[2], w[0]],
                [w[2], w[0], w[1]],
                [w[2], w[1], w[0]],
            ]
        };
        for w in [[0, 3, 5], [1, 2, 3], [0, 0, 4], [0, 1, 1], [2, 0, 9]] {
            let reference = classify_triad(w, 2).unwrap();
            for p in perms(w) {
                assert_eq!(classify_triad(p, 2).unwrap(), reference);
            }
        }
    }

    #[test]
    fn raising_theta_moves_forbidden_to_open_only() {
        for w in [[0, 2, 5], [0, 3, 3], [0, 10, 12], [1, 2, 5], [0, 1, 9]] {
            let mut prev_forbidden = u32::from(classify_triad(w, 2).unwrap() == TriadClass::Forbidden);
            for theta in 3..12 {
                let label = classify_triad(w, theta).unwrap();
                let now_forbidden = u32::from(label == TriadClass::Forbidden);
                assert!(now_forbidden <= prev_forbidden, "{w:?} theta {theta}");
                prev_forbidden = now_forbidden;
                // closure never depends on theta
                assert_eq!(
                    label == TriadClass::Closed,
                    classify_triad(w, 2).unwrap() == TriadClass::Closed
                );
            }
        }
    }

    #[test]
    fn worked_example_census() {
        let m = fixtures::kind_of_blue_matrix();
        let census = session_census(&m, 2).unwrap();
        assert_eq!(census.n_forbidden, 2);
        assert_eq!(census.n_open, 2);
        assert_eq!(census.n_closed, 16);
        assert_eq!(census.n_connected(), 20);
        let d = census.densities().unwrap();
        assert!((d.forbidden - 0.10).abs() < 1e-12);
        assert!((d.open - 0.10).abs() < 1e-12);
        assert!((d.closed - 0.80).abs() < 1e-12);
    }

    #[test]
    fn star_census_is_all_forbidden() {
        // hub 'a' with spokes of weight 3; the hub-less triple is disconnected
        let names = vec!["a".into(), "b".into(), "c".into(), "d".into()];
        let rows = vec![
            vec![0, 3, 3, 3],
            vec![3, 0, 0, 0],
            vec![3, 0, 0, 0],
            vec![3, 0, 0, 0],
        ];
        let m = WeightMatrix::from_rows(names, rows).unwrap();
        let census = session_census(&m, 2).unwrap();
        assert_eq!(census.n_connected(), 3);
        assert_eq!(census.n_forbidden, 3);
    }

    #[test]
    fn complete_unit_graph_all_closed() {
        let names: Vec<String> = (0..5).map(|i| format!("m{i}")).collect();
        let rows: Vec<Vec<u32>> =
            (0..5).map(|i| (0..5).map(|j| u32::from(i != j)).collect()).collect();
        let m = WeightMatrix::from_rows(names, rows).unwrap();
        let census = session_census(&m, 2).unwrap();
        assert_eq!(census.n_closed, 10);
        assert_eq!(census.densities().unwrap().closed, 1.0);
    }

    #[test]
    fn tiny_sessions_have_undefined_densities() {
        let m = WeightMatrix::from_rows(vec!["a".into(), "b".into()], vec![vec![0, 4], vec![4, 0]])
            .unwrap();
        let census = session_census(&m, 2).unwrap();
        assert_eq!(census.n_connected(), 0);
        assert!(census.densities().is_none());
    }

    #[test]
    fn pool_counts_and_determinism() {
        let (d, _) = fixtures::kind_of_blue();
        let ix = CoPlayIndex::build(&d);
        let pool = pooled_triplets(&d, &ix, 2, Origin::Observed).unwrap();
        // focal session contributes 20 connected triads; history sessions of
        // size < 3 contribute none; size-3/4/5 history sessions contribute.
        let focal_obs: Vec<_> = pool
            .observations
            .iter()
            .filter(|o| pool.session_ids[o.session as usize] == fixtures::KOB_SESSION_ID)
            .collect();
        assert_eq!(focal_obs.len(), 20);
        let again = pooled_triplets(&d, &ix, 2, Origin::Observed).unwrap();
        assert_eq!(pool.observations, again.observations);
    }

    #[test]
    fn dyadic_corpus_pools_nothing() {
        use crate::records::{parse_records, Dataset, YearBounds};
        let text = "[SESSION a]\nLEADER: l\nDATE: 1950\nRELEASES: 1\nx : p\ny : q\n";
        let d = Dataset::new(parse_records(text).unwrap(), YearBounds::default()).unwrap();
        let ix = CoPlayIndex::build(&d);
        let pool = pooled_triplets(&d, &ix, 2, Origin::Observed).unwrap();
        assert!(pool.is_empty());
    }

    fn synthetic_pool(specs: &[(u32, u32, u32)]) -> TriadPool {
        // one synthetic session per observation
        let mut pool = TriadPool::default();
        for (i, &(w1, w2, w3)) in specs.iter().enumerate() {
            pool.session_ids.push(format!("s{i:05}"));
            pool.musician_names.push(vec!["a".into(), "b".into(), "c".into()]);
            pool.observations.push(TriadObservation {
                musicians: [0, 1, 2],
                weights: [w1, w2, w3],
                session: i as u32,
                origin: Origin::Observed,
            });
        }
        pool
    }

    #[test]
    fn all_closed_curve_is_flat_one() {
        let pool = synthetic_pool(&vec![(1, 2, 3); 40]);
        let curve = closure_curve(&pool, 8, 3).unwrap();
        assert!(curve.iter().all(|p| p.closure_probability == 1.0));
    }

    #[test]
    fn step_rule_produces_step_curve() {
        // closure iff w2 >= 5; w2 sweeps 1..=10, 10 observations each
        let mut specs = Vec::new();
        for w2 in 1..=10u32 {
            for _ in 0..10 {
                let w1 = if w2 >= 5 { 1 } else { 0 };
                specs.push((w1, w2, w2 + 1));
            }
        }
        let pool = synthetic_pool(&specs);
        let curve = closure_curve(&pool, 10, 1).unwrap();
        for (i, point) in curve.iter().enumerate() {
            let expected = if i >= 4 { 1.0 } else { 0.0 };
            assert_eq!(point.closure_probability_raw, expected, "bin {i}");
        }
    }

    #[test]
    fn curve_area_recovers_closed_count() {
        let mut specs = Vec::new();
        for i in 0..157u32 {
            let w2 = i % 9 + 1;
            let w1 = u32::from(i % 3 == 0);
            specs.push((w1, w2, w2 + i % 4));
        }
        let pool = synthetic_pool(&specs);
        let total_closed = pool.observations.iter().filter(|o| o.is_closed()).count();
        let n = pool.len();
        for quantiles in [7, 25, 157] {
            let curve = closure_curve(&pool, quantiles, 5).unwrap();
            let mut area = 0.0;
            for (q, point) in curve.iter().enumerate() {
                let size = ((q + 1) * n / quantiles - q * n / quantiles) as f64;
                area += size * point.closure_probability_raw;
            }
            assert!((area - total_closed as f64).abs() < 1e-9, "quantiles {quantiles}");
        }
    }

    #[test]
    fn curve_rejects_bad_sizes() {
        let pool = synthetic_pool(&[(0, 1, 2); 5]);
        assert!(closure_curve(&pool, 6, 1).is_err());
        assert!(closure_curve(&pool, 0, 1).is_err());
        let empty = TriadPool::default();
        assert!(closure_curve(&empty, 1, 1).is_err());
    }
}
