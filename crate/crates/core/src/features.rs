//! Session-level covariates and the regression table.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CoPlayIndex, WeightMatrix};
use crate::records::{Dataset, SessionRecord};
use crate::stats::{Column, DesignMatrix, Term};
use crate::triads::SessionCensus;

/// Midpoint median; 0 for an empty sequence.
fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median over all C(n,2) pair weights, zeros included; undefined for
/// single-musician sessions.
pub fn median_tie_strength(matrix: &WeightMatrix) -> Option<f64> {
    if matrix.n() < 2 {
        return None;
    }
    let mut weights: Vec<f64> = matrix.pair_weights().iter().map(|&w| f64::from(w)).collect();
    Some(median(&mut weights))
}

/// Share of the session's musicians with no session before the focal year.
pub fn newbies_proportion(ix: &CoPlayIndex, s: &SessionRecord) -> f64 {
    let newbies = s
        .personnel
        .iter()
        .filter(|p| ix.prior_sessions(&p.musician_id, s.year) == 0)
        .count();
    newbies as f64 / s.personnel.len() as f64
}

/// Median of the pooled release counts of every prior session of every
/// musician (a shared prior session counts once per musician); 0 if empty.
pub fn median_past_releases(ix: &CoPlayIndex, s: &SessionRecord) -> f64 {
    let mut pool: Vec<f64> = s
        .personnel
        .iter()
        .flat_map(|p| ix.prior_release_counts(&p.musician_id, s.year))
        .map(f64::from)
        .collect();
    median(&mut pool)
}

/// Total prior sessions over the session's musicians, with multiplicity.
pub fn past_sessions_total(ix: &CoPlayIndex, s: &SessionRecord) -> u64 {
    s.personnel.iter().map(|p| u64::from(ix.prior_sessions(&p.musician_id, s.year))).sum()
}

/// Instrument-combination space restricted to the top-k most frequent
/// instruments, with per-session slot-count vectors.
#[derive(Debug, Clone)]
pub struct InstrumentSpace {
    index: HashMap<String, usize>,
    vectors: Vec<BTreeMap<usize, f64>>,
    norms: Vec<f64>,
    by_year: BTreeMap<i32, Vec<usize>>,
}

impl InstrumentSpace {
    /// Rank instruments by slot count over the full dataset (ties broken by
    /// name) and project every session onto the top `top_k`.
    pub fn build(d: &Dataset, top_k: usize) -> InstrumentSpace {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for s in d.sessions() {
            for p in &s.personnel {
                for inst in &p.instruments {
                    *counts.entry(inst.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let index: HashMap<String, usize> = ranked
            .into_iter()
            .take(top_k)
            .enumerate()
            .map(|(i, (name, _))| (name.to_string(), i))
            .collect();

        let mut vectors = Vec::with_capacity(d.len());
        let mut norms = Vec::with_capacity(d.len());
        let mut by_year: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, s) in d.sessions().iter().enumerate() {
            let mut v: BTreeMap<usize, f64> = BTreeMap::new();
            for p in &s.personnel {
                for inst in &p.instruments {
                    if let Some(&dim) = index.get(inst) {
                        *v.entry(dim).or_insert(0.0) += 1.0;
                    }
                }
            }
            let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
            vectors.push(v);
            norms.push(norm);
            by_year.entry(s.year).or_default().push(i);
        }
        InstrumentSpace { index, vectors, norms, by_year }
    }

    pub fn dims(&self) -> usize {
        self.index.len()
    }

    fn cosine(&self, a: usize, b: usize) -> f64 {
        let (va, vb) = (&self.vectors[a], &self.vectors[b]);
        let dot: f64 = va
            .iter()
            .filter_map(|(dim, x)| vb.get(dim).map(|y| x * y))
            .sum();
        dot / (self.norms[a] * self.norms[b])
    }

    /// Mean cosine distance of the session's instrument vector to every
    /// session of the preceding `horizon` years. Missing (None) when the
    /// session's restricted vector is all-zero or no comparable prior
    /// session exists in the horizon.
    pub fn distinctiveness(&self, session_idx: usize, year: i32, horizon: u32) -> Option<f64> {
        if self.norms[session_idx] == 0.0 {
            return None;
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for (_, sessions) in self.by_year.range(year - horizon as i32..year) {
            for &other in sessions {
                if self.norms[other] == 0.0 {
                    continue; // no overlap with the restricted space
                }
                sum += 1.0 - self.cosine(session_idx, other);
                count += 1;
            }
        }
        if count == 0 {
            None
        } else {
            Some(sum / count as f64)
        }
    }
}

/// One regression-ready session row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub session_id: String,
    pub leader_id: String,
    pub releases: u32,
    pub log10_releases: f64,
    pub d_forbidden: f64,
    pub d_forbidden_sq: f64,
    pub d_closed: f64,
    pub d_closed_sq: f64,
    pub d_open: f64,
    pub median_tie_strength: f64,
    pub median_tie_strength_sq: f64,
    pub distinctiveness: f64,
    pub n_musicians: u32,
    pub newbies_proportion: f64,
    pub median_past_releases: f64,
    pub past_sessions_total: u64,
    pub year: i32,
}

/// Why excluded sessions fell out of the sample, and how many.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub right_censoring: u64,
    pub excluded_leader: u64,
    pub zero_releases: u64,
    pub no_connected_triads: u64,
    pub missing_distinctiveness: u64,
    pub kept: u64,
}

#[derive(Debug, Clone)]
pub struct FeatureOptions {
    pub cutoff_year: i32,
    pub excluded_leaders: HashSet<String>,
    pub top_k_instruments: usize,
    pub horizon_years: u32,
    /// Optional +1 inside the log, for sources that code releases from zero.
    pub log_offset_one: bool,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        FeatureOptions {
            cutoff_year: 2000,
            excluded_leaders: HashSet::new(),
            top_k_instruments: 200,
            horizon_years: 5,
            log_offset_one: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

/// Assemble the regression table. Censuses must align with the dataset's
/// session order. Rows keep deterministic (year, session_id) order; every
/// excluded session is tallied under its first matching reason.
pub fn assemble_features(
    d: &Dataset,
    ix: &CoPlayIndex,
    censuses: &[SessionCensus],
    opts: &FeatureOptions,
) -> Result<(FeatureTable, ExclusionReport)> {
    if censuses.len() != d.len() {
        return Err(Error::Argument("censuses do not match the session set".into()));
    }
    let space = InstrumentSpace::build(d, opts.top_k_instruments);
    let mut report = ExclusionReport::default();
    let mut rows = Vec::new();

    for (i, s) in d.sessions().iter().enumerate() {
        if s.year > opts.cutoff_year {
            report.right_censoring += 1;
            continue;
        }
        if opts.excluded_leaders.contains(&s.leader_id) {
            report.excluded_leader += 1;
            continue;
        }
        if s.releases == 0 {
            report.zero_releases += 1;
            continue;
        }
        let Some(densities) = censuses[i].densities() else {
            report.no_connected_triads += 1;
            continue;
        };
        let Some(dist) = space.distinctiveness(i, s.year, opts.horizon_years) else {
            report.missing_distinctiveness += 1;
            continue;
        };
        let matrix = ix.session_weight_matrix(s);
        let tie = median_tie_strength(&matrix).expect(">= 3 musicians implies >= 2");
        let releases_for_log =
            if opts.log_offset_one { f64::from(s.releases) + 1.0 } else { f64::from(s.releases) };
        rows.push(FeatureRow {
            session_id: s.session_id.clone(),
            leader_id: s.leader_id.clone(),
            releases: s.releases,
            log10_releases: releases_for_log.log10(),
            d_forbidden: densities.forbidden,
            d_forbidden_sq: densities.forbidden * densities.forbidden,
            d_closed: densities.closed,
            d_closed_sq: densities.closed * densities.closed,
            d_open: densities.open,
            median_tie_strength: tie,
            median_tie_strength_sq: tie * tie,
            distinctiveness: dist,
            n_musicians: s.personnel.len() as u32,
            newbies_proportion: newbies_proportion(ix, s),
            median_past_releases: median_past_releases(ix, s),
            past_sessions_total: past_sessions_total(ix, s),
            year: s.year,
        });
    }
    report.kept = rows.len() as u64;
    Ok((FeatureTable { rows }, report))
}

/// Which outcome a design should carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeKind {
    /// log10 of releases (OLS models).
    LogReleases,
    /// Raw release counts (count models).
    Releases,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// The full regression design: triad densities (open as the reference
    /// category), tie strength, distinctiveness, musician covariates, year,
    /// and a constant. `omit` drops named regressors; groups carry the
    /// leader when requested.
    pub fn design(
        &self,
        outcome: OutcomeKind,
        with_leader_groups: bool,
        omit: &[&str],
    ) -> Result<DesignMatrix> {
        if self.rows.is_empty() {
            return Err(Error::Argument("empty feature table".into()));
        }
        let n = self.rows.len();
        let mut columns: Vec<Column> = Vec::new();
        let keep = |name: &str| !omit.contains(&name);

        columns.push(Column { name: "const".into(), term: Term::Constant, values: vec![1.0; n] });
        let mut raw = |name: &str, f: &dyn Fn(&FeatureRow) -> f64, term: Term| {
            if keep(name) {
                columns.push(Column {
                    name: name.into(),
                    term,
                    values: self.rows.iter().map(f).collect(),
                });
            }
        };
        raw("d_forbidden", &|r| r.d_forbidden, Term::Raw);
        raw("d_forbidden_sq", &|r| r.d_forbidden_sq, Term::Square { base: "d_forbidden".into() });
        raw("d_closed", &|r| r.d_closed, Term::Raw);
        raw("d_closed_sq", &|r| r.d_closed_sq, Term::Square { base: "d_closed".into() });
        raw("median_tie_strength", &|r| r.median_tie_strength, Term::Raw);
        raw(
            "median_tie_strength_sq",
            &|r| r.median_tie_strength_sq,
            Term::Square { base: "median_tie_strength".into() },
        );
        raw("distinctiveness", &|r| r.distinctiveness, Term::Raw);
        raw("n_musicians", &|r| f64::from(r.n_musicians), Term::Raw);
        raw("newbies_proportion", &|r| r.newbies_proportion, Term::Raw);
        raw("median_past_releases", &|r| r.median_past_releases, Term::Raw);
        raw("past_sessions_total", &|r| r.past_sessions_total as f64, Term::Raw);
        raw("year", &|r| f64::from(r.year), Term::Raw);

        let outcome = self
            .rows
            .iter()
            .map(|r| match outcome {
                OutcomeKind::LogReleases => r.log10_releases,
                OutcomeKind::Releases => f64::from(r.releases),
            })
            .collect();
        let groups = with_leader_groups
            .then(|| self.rows.iter().map(|r| r.leader_id.clone()).collect());
        DesignMatrix::new(columns, outcome, groups)
    }

    /// Numeric columns for the correlation table, releases first.
    pub fn correlation_columns(&self) -> Vec<(String, Vec<f64>)> {
        let grab = |f: &dyn Fn(&FeatureRow) -> f64| self.rows.iter().map(f).collect::<Vec<f64>>();
        vec![
            ("releases".into(), grab(&|r| f64::from(r.releases))),
            ("log10_releases".into(), grab(&|r| r.log10_releases)),
            ("d_forbidden".into(), grab(&|r| r.d_forbidden)),
            ("d_closed".into(), grab(&|r| r.d_closed)),
            ("d_open".into(), grab(&|r| r.d_open)),
            ("median_tie_strength".into(), grab(&|r| r.median_tie_strength)),
            ("distinctiveness".into(), grab(&|r| r.distinctiveness)),
            ("n_musicians".into(), grab(&|r| f64::from(r.n_musicians))),
            ("newbies_proportion".into(), grab(&|r| r.newbies_proportion)),
            ("median_past_releases".into(), grab(&|r| r.median_past_releases)),
            ("past_sessions_total".into(), grab(&|r| r.past_sessions_total as f64)),
            ("year".into(), grab(&|r| f64::from(r.year))),
        ]
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Validation(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Validation(e.to_string()))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<FeatureTable> {
        let mut r = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for row in r.deserialize() {
            rows.push(row?);
        }
        Ok(FeatureTable { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::records::{parse_records, YearBounds};
    use crate::triads::census_dataset;
    use approx::assert_relative_eq;

    fn dataset(text: &str) -> Dataset {
        Dataset::new(parse_records(text).unwrap(), YearBounds::default()).unwrap()
    }

    #[test]
    fn worked_example_tie_strength_median() {
        let m = fixtures::kind_of_blue_matrix();
        assert_relative_eq!(median_tie_strength(&m).unwrap(), 8.0);
    }

    #[test]
    fn tie_strength_edge_cases() {
        let duo = WeightMatrix::from_rows(
            vec!["a".into(), "b".into()],
            vec![vec![0, 4], vec![4, 0]],
        )
        .unwrap();
        assert_relative_eq!(median_tie_strength(&duo).unwrap(), 4.0);

        let strangers = WeightMatrix::from_rows(
            vec!["a".into(), "b".into(), "c".into()],
            vec![vec![0; 3]; 3],
        )
        .unwrap();
        assert_relative_eq!(median_tie_strength(&strangers).unwrap(), 0.0);

        let solo = WeightMatrix::from_rows(vec!["a".into()], vec![vec![7]]).unwrap();
        assert!(median_tie_strength(&solo).is_none());
    }

    #[test]
    fn distinctiveness_hand_cosine() {
        // focal 1951 session: two saxes; horizon session: sax + piano
        let text = "\
[SESSION h]\nLEADER: l\nDATE: 1950\nRELEASES: 1\nm1 : sax\nm2 : piano\n\n\
[SESSION f]\nLEADER: l\nDATE: 1951\nRELEASES: 1\nm3 : sax\nm4 : sax\n";
        let d = dataset(text);
        let space = InstrumentSpace::build(&d, 200);
        let idx = d.index_of("f").unwrap();
        let dist = space.distinctiveness(idx, 1951, 5).unwrap();
        assert_relative_eq!(dist, 1.0 - std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn distinctiveness_identical_and_disjoint() {
        let text = "\
[SESSION h1]\nLEADER: l\nDATE: 1950\nRELEASES: 1\nm1 : sax\nm2 : piano\n\n\
[SESSION same]\nLEADER: l\nDATE: 1951\nRELEASES: 1\nm3 : sax\nm4 : piano\n\n\
[SESSION other]\nLEADER: l\nDATE: 1951\nRELEASES: 1\nm5 : drums\nm6 : bass\n";
        let d = dataset(text);
        let space = InstrumentSpace::build(&d, 200);
        let same = space.distinctiveness(d.index_of("same").unwrap(), 1951, 5).unwrap();
        assert_relative_eq!(same, 0.0, epsilon = 1e-12);
        let other = space.distinctiveness(d.index_of("other").unwrap(), 1951, 5).unwrap();
        assert_relative_eq!(other, 1.0, epsilon = 1e-12);
        // earliest session has no horizon
        assert!(space.distinctiveness(d.index_of("h1").unwrap(), 1950, 5).is_none());
    }

    #[test]
    fn newbie_shares() {
        let (d, focal) = fixtures::kind_of_blue();
        let ix = CoPlayIndex::build(&d);
        let s = d.get(&focal).unwrap();
        assert_relative_eq!(newbies_proportion(&ix, s), 0.0);

        let text = "\
[SESSION h]\nLEADER: l\nDATE: 1950\nRELEASES: 1\nv1 : p\nv2 : q\nv3 : r\n\n\
[SESSION f]\nLEADER: l\nDATE: 1951\nRELEASES: 1\nv1 : p\nn1 : q\nn2 : r\nn3 : s\n";
        let d = dataset(text);
        let ix = CoPlayIndex::build(&d);
        let f = d.get("f").unwrap();
        assert_relative_eq!(newbies_proportion(&ix, f), 0.75);
        let h = d.get("h").unwrap();
        assert_relative_eq!(newbies_proportion(&ix, h), 1.0);
    }

    #[test]
    fn past_release_medians() {
        let text = "\
[SESSION a]\nLEADER: l\nDATE: 1950\nRELEASES: 1\nm1 : p\n\n\
[SESSION b]\nLEADER: l\nDATE: 1951\nRELEASES: 5\nm1 : p\n\n\
[SESSION c]\nLEADER: l\nDATE: 1952\nRELEASES: 9\nm1 : p\n\n\
[SESSION f]\nLEADER: l\nDATE: 1953\nRELEASES: 2\nm1 : p\n";
        let d = dataset(text);
        let ix = CoPlayIndex::build(&d);
        assert_relative_eq!(median_past_releases(&ix, d.get("f").unwrap()), 5.0);
        assert_relative_eq!(median_past_releases(&ix, d.get("a").unwrap()), 0.0);

        // two musicians with pools {1,3} and {3,7}: pooled median 3
        let text = "\
[SESSION a1]\nLEADER: l\nDATE: 1950\nRELEASES: 1\nx : p\n\n\
[SESSION a2]\nLEADER: l\nDATE: 1951\nRELEASES: 3\nx : p\ny : q\n\n\
[SESSION a3]\nLEADER: l\nDATE: 1952\nRELEASES: 7\ny : q\n\n\
[SESSION f]\nLEADER: l\nDATE: 1953\nRELEASES: 2\nx : p\ny : q\n";
        let d = dataset(text);
        let ix = CoPlayIndex::build(&d);
        assert_relative_eq!(median_past_releases(&ix, d.get("f").unwrap()), 3.0);
    }

    #[test]
    fn past_session_totals() {
        let (d, focal) = fixtures::kind_of_blue();
        let ix = CoPlayIndex::build(&d);
        let s = d.get(&focal).unwrap();
        assert_eq!(past_sessions_total(&ix, s), 185);
    }

    #[test]
    fn assembly_exclusions_and_invariants() {
        let mut text = String::new();
        // opening year: no history, so no connected triads either
        text.push_str("[SESSION h1]\nLEADER: l\nDATE: 1958\nRELEASES: 2\na : p\nb : q\nc : r\n\n");
        // keepable session
        text.push_str("[SESSION k1]\nLEADER: l\nDATE: 1959\nRELEASES: 3\na : p\nb : q\nc : r\n\n");
        // too small: no connected triads
        text.push_str("[SESSION duo]\nLEADER: l\nDATE: 1959\nRELEASES: 3\na : p\nb : q\n\n");
        // strangers trio with no prior ties: still no connected triads
        text.push_str("[SESSION cold]\nLEADER: l\nDATE: 1959\nRELEASES: 3\nx1 : p\nx2 : q\nx3 : r\n\n");
        // zero releases
        text.push_str("[SESSION z]\nLEADER: l\nDATE: 1959\nRELEASES: 0\na : p\nb : q\nc : r\n\n");
        // beyond the cutoff
        text.push_str("[SESSION late]\nLEADER: l\nDATE: 2005\nRELEASES: 3\na : p\nb : q\nc : r\n\n");
        // excluded leader
        text.push_str("[SESSION ex]\nLEADER: star\nDATE: 1959\nRELEASES: 3\na : p\nb : q\nc : r\n\n");
        // connected triads (old ties) but nothing within the 5-year horizon
        text.push_str("[SESSION h2]\nLEADER: l\nDATE: 1970\nRELEASES: 3\na : p\nb : q\nc : r\n");
        let d = dataset(&text);
        let ix = CoPlayIndex::build(&d);
        let censuses = census_dataset(&d, &ix, 2).unwrap();
        let opts = FeatureOptions {
            cutoff_year: 2000,
            excluded_leaders: HashSet::from(["star".to_string()]),
            ..FeatureOptions::default()
        };
        let (table, report) = assemble_features(&d, &ix, &censuses, &opts).unwrap();
        assert_eq!(report.right_censoring, 1);
        assert_eq!(report.excluded_leader, 1);
        assert_eq!(report.zero_releases, 1);
        // h1 (opening year), duo, and the stranger trio
        assert_eq!(report.no_connected_triads, 3);
        // h2 connects old collaborators but the horizon is empty
        assert_eq!(report.missing_distinctiveness, 1);
        assert_eq!(report.kept, 1);
        assert_eq!(table.rows.len(), 1);

        let row = &table.rows[0];
        assert_eq!(row.session_id, "k1");
        assert!((row.d_open + row.d_closed + row.d_forbidden - 1.0).abs() < 1e-12);
        assert_relative_eq!(row.d_forbidden_sq, row.d_forbidden * row.d_forbidden);
        assert_relative_eq!(row.d_closed_sq, row.d_closed * row.d_closed);
        assert_relative_eq!(
            row.median_tie_strength_sq,
            row.median_tie_strength * row.median_tie_strength
        );
        assert!(row.releases >= 1);
        assert_relative_eq!(row.log10_releases, 3f64.log10());

        // brute-force filter count oracle
        let expected = d
            .sessions()
            .iter()
            .zip(&censuses)
            .filter(|(s, _)| s.year <= 2000 && s.leader_id != "star" && s.releases >= 1)
            .filter(|(_, c)| c.n_connected() >= 1)
            .filter(|(s, _)| {
                // distinctiveness exists iff some earlier-year session in horizon
                d.sessions().iter().any(|t| t.year >= s.year - 5 && t.year < s.year)
            })
            .count();
        assert_eq!(table.rows.len(), expected);
    }

    #[test]
    fn log_offset_flag() {
        let text = "\
[SESSION h]\nLEADER: l\nDATE: 1958\nRELEASES: 2\na : p\nb : q\nc : r\n\n\
[SESSION k]\nLEADER: l\nDATE: 1959\nRELEASES: 9\na : p\nb : q\nc : r\n";
        let d = dataset(text);
        let ix = CoPlayIndex::build(&d);
        let censuses = census_dataset(&d, &ix, 2).unwrap();
        let opts = FeatureOptions { log_offset_one: true, ..FeatureOptions::default() };
        let (table, _) = assemble_features(&d, &ix, &censuses, &opts).unwrap();
        assert_relative_eq!(table.rows[0].log10_releases, 10f64.log10());
    }

    #[test]
    fn design_has_reference_category_and_groups() {
        let text = "\
[SESSION h]\nLEADER: l1\nDATE: 1958\nRELEASES: 2\na : p\nb : q\nc : r\n\n\
[SESSION k]\nLEADER: l1\nDATE: 1959\nRELEASES: 9\na : p\nb : q\nc : r\n\n\
[SESSION k2]\nLEADER: l2\nDATE: 1959\nRELEASES: 4\na : p\nb : q\nc : r\n";
        let d = dataset(text);
        let ix = CoPlayIndex::build(&d);
        let censuses = census_dataset(&d, &ix, 2).unwrap();
        let (table, _) = assemble_features(&d, &ix, &censuses, &FeatureOptions::default()).unwrap();
        let design = table.design(OutcomeKind::LogReleases, true, &[]).unwrap();
        // open density is the omitted reference category
        assert!(design.column("d_open").is_none());
        assert!(design.column("d_forbidden").is_some());
        assert!(design.groups().is_some());

        let no_closed =
            table.design(OutcomeKind::Releases, false, &["d_closed", "d_closed_sq"]).unwrap();
        assert!(no_closed.column("d_closed").is_none());
        assert!(no_closed.column("d_closed_sq").is_none());
        assert!(no_closed.column("d_forbidden_sq").is_some());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let (d, _) = fixtures::kind_of_blue();
        let ix = CoPlayIndex::build(&d);
        let censuses = census_dataset(&d, &ix, 2).unwrap();
        let (table, _) = assemble_features(&d, &ix, &censuses, &FeatureOptions::default()).unwrap();
        assert!(!table.is_empty());
        let path = dir.path().join("features.csv");
        table.write_csv(&path).unwrap();
        let back = FeatureTable::read_csv(&path).unwrap();
        assert_eq!(table, back);
    }
}
