//! Time-ordered weighted co-play index.
//!
//! Edge weights count the studio sessions a musician pair shared strictly
//! before a focal year: the weight as of year `t` includes sessions from year
//! `t-1` backwards only, so same-year sessions never see each other.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::records::{Dataset, SessionRecord};

#[derive(Debug, Clone, Default)]
struct YearActivity {
    year: i32,
    sessions: u32,
    /// Sessions in all years up to and including `year`.
    cum_sessions: u32,
    instruments: BTreeSet<String>,
    releases: Vec<u32>,
}

#[derive(Debug, Clone, Default)]
struct MusicianHistory {
    per_year: Vec<YearActivity>, // sorted by year
}

impl MusicianHistory {
    fn cum_before(&self, year: i32) -> u32 {
        let idx = self.per_year.partition_point(|a| a.year < year);
        if idx == 0 {
            0
        } else {
            self.per_year[idx - 1].cum_sessions
        }
    }
}

/// Summary of a musician's history strictly before a focal year, plus the
/// instruments they played within an explicit inclusive year span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MusicianStats {
    pub past_sessions: u32,
    pub past_release_counts: Vec<u32>,
    pub instruments_in_span: BTreeSet<String>,
}

/// Immutable index of cumulative pair weights and per-musician histories.
#[derive(Debug, Clone)]
pub struct CoPlayIndex {
    musicians: Vec<String>,
    by_name: HashMap<String, u32>,
    /// Unordered pair (lo, hi) -> (year, shared sessions through that year).
    pair: HashMap<(u32, u32), Vec<(i32, u32)>>,
    hist: Vec<MusicianHistory>,
}

impl CoPlayIndex {
    pub fn build(dataset: &Dataset) -> CoPlayIndex {
        let mut musicians = Vec::new();
        let mut by_name: HashMap<String, u32> = HashMap::new();
        let mut intern = |name: &str, musicians: &mut Vec<String>| -> u32 {
            if let Some(&id) = by_name.get(name) {
                return id;
            }
            let id = musicians.len() as u32;
            musicians.push(name.to_string());
            by_name.insert(name.to_string(), id);
            id
        };

        let mut pair_by_year: HashMap<(u32, u32), BTreeMap<i32, u32>> = HashMap::new();
        let mut hist_by_year: Vec<BTreeMap<i32, YearActivity>> = Vec::new();

        for s in dataset.sessions() {
            let mut ids: Vec<u32> = Vec::with_capacity(s.personnel.len());
            for entry in &s.personnel {
                let id = intern(&entry.musician_id, &mut musicians);
                if id as usize >= hist_by_year.len() {
                    hist_by_year.resize_with(id as usize + 1, BTreeMap::new);
                }
                let activity = hist_by_year[id as usize].entry(s.year).or_insert_with(|| {
                    YearActivity { year: s.year, ..YearActivity::default() }
                });
                activity.sessions += 1;
                activity.releases.push(s.releases);
                activity.instruments.extend(entry.instruments.iter().cloned());
                ids.push(id);
            }
            ids.sort_unstable();
            for i in 0..ids.len() {
                for j in (i + 1)..ids.len() {
                    *pair_by_year.entry((ids[i], ids[j])).or_default().entry(s.year).or_insert(0) += 1;
                }
            }
        }

        let pair = pair_by_year
            .into_iter()
            .map(|(key, by_year)| {
                let mut cum = 0u32;
                let series: Vec<(i32, u32)> = by_year
                    .into_iter()
                    .map(|(year, count)| {
                        cum += count;
                        (year, cum)
                    })
                    .collect();
                (key, series)
            })
            .collect();

        let hist = hist_by_year
            .into_iter()
            .map(|by_year| {
                let mut cum = 0u32;
                let per_year = by_year
                    .into_values()
                    .map(|mut a| {
                        cum += a.sessions;
                        a.cum_sessions = cum;
                        a
                    })
                    .collect();
                MusicianHistory { per_year }
            })
            .collect();

        CoPlayIndex { musicians, by_name, pair, hist }
    }

    pub fn musician_count(&self) -> usize {
        self.musicians.len()
    }

    pub fn musician_id(&self, name: &str) -> Option<u32> {
        self.by_name.get(name).copied()
    }

    pub fn musician_name(&self, id: u32) -> &str {
        &self.musicians[id as usize]
    }

    /// Shared sessions of `a` and `b` strictly before `as_of_year`.
    /// Unknown musicians weigh 0; `a == b` is an error.
    pub fn coplay_weight(&self, a: &str, b: &str, as_of_year: i32) -> Result<u32> {
        if a == b {
            return Err(Error::Argument(format!("coplay weight of '{a}' with itself is undefined")));
        }
        let (Some(ia), Some(ib)) = (self.musician_id(a), self.musician_id(b)) else {
            return Ok(0);
        };
        Ok(self.weight_by_id(ia, ib, as_of_year))
    }

    /// Interned-id variant of [`coplay_weight`](Self::coplay_weight).
    pub fn weight_by_id(&self, a: u32, b: u32, as_of_year: i32) -> u32 {
        debug_assert_ne!(a, b);
        let key = if a < b { (a, b) } else { (b, a) };
        let Some(series) = self.pair.get(&key) else { return 0 };
        let idx = series.partition_point(|&(year, _)| year < as_of_year);
        if idx == 0 {
            0
        } else {
            series[idx - 1].1
        }
    }

    /// Total sessions of `m` strictly before `as_of_year` (0 for unknown ids).
    pub fn prior_sessions(&self, m: &str, as_of_year: i32) -> u32 {
        self.musician_id(m)
            .map(|id| self.hist[id as usize].cum_before(as_of_year))
            .unwrap_or(0)
    }

    /// Release counts of every session of `m` strictly before `as_of_year`,
    /// in year order.
    pub fn prior_release_counts(&self, m: &str, as_of_year: i32) -> Vec<u32> {
        let Some(id) = self.musician_id(m) else { return Vec::new() };
        self.hist[id as usize]
            .per_year
            .iter()
            .take_while(|a| a.year < as_of_year)
            .flat_map(|a| a.releases.iter().copied())
            .collect()
    }

    /// Instruments `m` played in any session within `lo..=hi`.
    pub fn instruments_in_span(&self, m: &str, lo: i32, hi: i32) -> BTreeSet<String> {
        let Some(id) = self.musician_id(m) else { return BTreeSet::new() };
        self.hist[id as usize]
            .per_year
            .iter()
            .filter(|a| a.year >= lo && a.year <= hi)
            .flat_map(|a| a.instruments.iter().cloned())
            .collect()
    }

    /// Backward-looking history summary plus an instrument-span query.
    pub fn musician_stats(&self, m: &str, as_of_year: i32, span: (i32, i32)) -> MusicianStats {
        MusicianStats {
            past_sessions: self.prior_sessions(m, as_of_year),
            past_release_counts: self.prior_release_counts(m, as_of_year),
            instruments_in_span: self.instruments_in_span(m, span.0, span.1),
        }
    }

    /// Symmetric co-play matrix over a session's musicians as of the session's
    /// year. The diagonal carries each musician's total prior session count.
    pub fn session_weight_matrix(&self, s: &SessionRecord) -> WeightMatrix {
        let names: Vec<String> = s.personnel.iter().map(|p| p.musician_id.clone()).collect();
        let ids: Vec<Option<u32>> = names.iter().map(|n| self.musician_id(n)).collect();
        let n = names.len();
        let mut w = vec![0u32; n * n];
        for i in 0..n {
            w[i * n + i] = self.prior_sessions(&names[i], s.year);
            for j in (i + 1)..n {
                let weight = match (ids[i], ids[j]) {
                    (Some(a), Some(b)) => self.weight_by_id(a, b, s.year),
                    _ => 0,
                };
                w[i * n + j] = weight;
                w[j * n + i] = weight;
            }
        }
        WeightMatrix { musicians: names, n, w }
    }
}

/// Symmetric pair-weight matrix for one session; diagonal = total prior plays.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMatrix {
    pub musicians: Vec<String>,
    n: usize,
    w: Vec<u32>,
}

impl WeightMatrix {
    /// Build from a full symmetric matrix given as rows.
    pub fn from_rows(musicians: Vec<String>, rows: Vec<Vec<u32>>) -> Result<WeightMatrix> {
        let n = musicians.len();
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Argument("weight matrix must be n x n".into()));
        }
        for i in 0..n {
            for j in 0..n {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Argument(format!(
                        "weight matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let w = rows.into_iter().flatten().collect();
        Ok(WeightMatrix { musicians, n, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.w[i * self.n + j]
    }

    /// All C(n,2) off-diagonal pair weights, row-major upper triangle.
    pub fn pair_weights(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.n * (self.n.saturating_sub(1)) / 2);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    /// Render as CSV with a header row and leading name column.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("musician");
        for name in &self.musicians {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.n {
            out.push_str(&self.musicians[i]);
            for j in 0..self.n {
                out.push(',');
                out.push_str(&self.get(i, j).to_string());
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::records::{parse_records, YearBounds};

    fn tiny_dataset() -> Dataset {
        let text = "\
[SESSION a]\nLEADER: l\nDATE: 1957\nRELEASES: 2\nx : piano\ny : bass\n\n\
[SESSION b]\nLEADER: l\nDATE: 1957\nRELEASES: 3\nx : piano\ny : bass\n\n\
[SESSION c]\nLEADER: l\nDATE: 1958\nRELEASES: 5\nx : piano\ny : bass\nz : drums\n";
        Dataset::new(parse_records(text).unwrap(), YearBounds::default()).unwrap()
    }

    #[test]
    fn shared_sessions_accumulate() {
        let d = tiny_dataset();
        let ix = CoPlayIndex::build(&d);
        assert_eq!(ix.coplay_weight("x", "y", 1959).unwrap(), 3);
        assert_eq!(ix.coplay_weight("x", "y", 1958).unwrap(), 2);
        // strict cutoff: same-year sessions do not count
        assert_eq!(ix.coplay_weight("x", "y", 1957).unwrap(), 0);
        assert_eq!(ix.coplay_weight("x", "z", 1959).unwrap(), 1);
        // never co-appearing
        assert_eq!(ix.coplay_weight("x", "nobody", 1999).unwrap(), 0);
        assert!(ix.coplay_weight("x", "x", 1999).is_err());
    }

    #[test]
    fn symmetry_and_monotonicity() {
        let d = tiny_dataset();
        let ix = CoPlayIndex::build(&d);
        for year in 1956..1961 {
            assert_eq!(
                ix.coplay_weight("x", "y", year).unwrap(),
                ix.coplay_weight("y", "x", year).unwrap()
            );
        }
        let mut prev = 0;
        for year in 1950..1965 {
            let w = ix.coplay_weight("x", "y", year).unwrap();
            assert!(w >= prev);
            prev = w;
        }
    }

    #[test]
    fn musician_stats_strictly_backward() {
        let d = tiny_dataset();
        let ix = CoPlayIndex::build(&d);
        let stats = ix.musician_stats("x", 1958, (1958, 1959));
        assert_eq!(stats.past_sessions, 2);
        assert_eq!(stats.past_release_counts, vec![2, 3]);
        assert_eq!(stats.instruments_in_span, BTreeSet::from(["piano".to_string()]));

        // sessions only before the span
        let stats = ix.musician_stats("y", 1960, (1959, 1960));
        assert_eq!(stats.past_sessions, 3);
        assert!(stats.instruments_in_span.is_empty());

        let stats = ix.musician_stats("brand_new", 1960, (1950, 1960));
        assert_eq!(stats.past_sessions, 0);
        assert!(stats.past_release_counts.is_empty());
        assert!(stats.instruments_in_span.is_empty());
    }

    #[test]
    fn fixture_reproduces_published_matrix() {
        let (d, focal) = fixtures::kind_of_blue();
        let ix = CoPlayIndex::build(&d);
        let s = d.get(&focal).unwrap();
        let m = ix.session_weight_matrix(s);
        let expected = fixtures::kind_of_blue_matrix();
        assert_eq!(m.musicians, expected.musicians);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(m.get(i, j), expected.get(i, j), "cell ({i},{j})");
            }
        }
        assert_eq!(ix.coplay_weight("chambers_p", "davis_m", 1959).unwrap(), 22);
        assert_eq!(ix.coplay_weight("kelly_w", "davis_m", 1959).unwrap(), 0);
        assert_eq!(ix.prior_sessions("chambers_p", 1959), 58);
    }

    #[test]
    fn brute_force_oracle_equivalence() {
        let (d, _) = fixtures::kind_of_blue();
        let ix = CoPlayIndex::build(&d);
        // Oracle: direct scan over sessions, counting shared appearances.
        let brute = |a: &str, b: &str, as_of: i32| -> u32 {
            d.sessions()
                .iter()
                .filter(|s| s.year < as_of)
                .filter(|s| {
                    s.personnel.iter().any(|p| p.musician_id == a)
                        && s.personnel.iter().any(|p| p.musician_id == b)
                })
                .count() as u32
        };
        let names = ["chambers_p", "coltrane_j", "kelly_w", "cobb_j", "davis_m", "adderley_c"];
        for (i, a) in names.iter().enumerate() {
            for b in names.iter().skip(i + 1) {
                for year in [1945, 1950, 1955, 1959, 1970] {
                    assert_eq!(
                        ix.coplay_weight(a, b, year).unwrap(),
                        brute(a, b, year),
                        "{a}-{b} as of {year}"
                    );
                }
            }
        }
    }

    #[test]
    fn yearly_increment_sum_matches_sessions() {
        let (d, _) = fixtures::kind_of_blue();
        let ix = CoPlayIndex::build(&d);
        let all: Vec<&str> = (0..ix.musician_count()).map(|i| ix.musician_name(i as u32)).collect();
        let (lo, hi) = d.year_range().unwrap();
        for t in lo..=hi {
            let mut increments = 0u64;
            for (i, a) in all.iter().enumerate() {
                for b in all.iter().skip(i + 1) {
                    let before = ix.coplay_weight(a, b, t).unwrap() as u64;
                    let after = ix.coplay_weight(a, b, t + 1).unwrap() as u64;
                    increments += after - before;
                }
            }
            let expected: u64 = d
                .sessions_in_year(t)
                .iter()
                .map(|&i| {
                    let n = d.sessions()[i].personnel.len() as u64;
                    n * (n - 1) / 2
                })
                .sum();
            assert_eq!(increments, expected, "year {t}");
        }
    }

    #[test]
    fn single_musician_matrix() {
        let text = "[SESSION solo]\nLEADER: l\nDATE: 1950\nRELEASES: 1\nx : piano\n";
        let d = Dataset::new(parse_records(text).unwrap(), YearBounds::default()).unwrap();
        let ix = CoPlayIndex::build(&d);
        let m = ix.session_weight_matrix(&d.sessions()[0]);
        assert_eq!(m.n(), 1);
        assert_eq!(m.get(0, 0), 0);
    }

    #[test]
    fn strangers_matrix_is_zero_off_diagonal() {
        let text = "[SESSION s]\nLEADER: l\nDATE: 1950\nRELEASES: 1\na : p\nb : q\nc : r\n";
        let d = Dataset::new(parse_records(text).unwrap(), YearBounds::default()).unwrap();
        let ix = CoPlayIndex::build(&d);
        let m = ix.session_weight_matrix(&d.sessions()[0]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), 0);
            }
        }
    }
}
