//! Constrained rewiring: alternate histories that reallocate musicians to
//! session slots under four objective-possibility constraints.
//!
//! * C1 session size — every session keeps its original bundles (a bundle is
//!   one musician's instrument set in that session), hence its musician
//!   count and instrument combination;
//! * C2 activity — within each window block, every musician plays exactly as
//!   many sessions as observed there;
//! * C3 qualification — a musician fills a bundle only if the observed data
//!   shows them playing every instrument of the bundle in the session's year
//!   or the year before;
//! * C4 uniqueness — no musician appears twice in one session.
//!
//! Assignment is randomized greedy per window block in ascending
//! candidate-pool order, with bounded random swap-repairs on conflict; slots
//! that still cannot be filled revert to their original musician and are
//! counted, never silently violated.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::CoPlayIndex;
use crate::records::Dataset;
use crate::triads::{census_dataset, SessionCensus};

/// Random swap-repair attempts per conflicted slot.
const REPAIR_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    session: u32,
    bundle: u32,
    sig: u32,
    year: i32,
}

/// Interning tables plus per-(signature, year) candidate pools.
#[derive(Debug, Clone)]
pub struct SlotPools {
    window_years: u32,
    first_year: i32,
    musicians: Vec<String>,
    /// Slots grouped by window block, ascending block index.
    blocks: BTreeMap<i32, Vec<Slot>>,
    /// Qualified musicians per (signature, session year), sorted.
    candidates: HashMap<(u32, i32), Vec<u32>>,
    /// (signature, year) per (session index, bundle index).
    slot_key: HashMap<(u32, u32), (u32, i32)>,
    /// Observed session count per (block, musician).
    budgets: HashMap<(i32, u32), u32>,
    /// Original musician per (session, bundle).
    original: Vec<Vec<u32>>,
}

impl SlotPools {
    pub fn window_years(&self) -> u32 {
        self.window_years
    }

    pub fn block_of(&self, year: i32) -> i32 {
        (year - self.first_year).div_euclid(self.window_years as i32)
    }

    pub fn n_pools(&self) -> usize {
        self.candidates.len()
    }

    pub fn n_slots(&self) -> usize {
        self.blocks.values().map(Vec::len).sum()
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn musician_name(&self, id: u32) -> &str {
        &self.musicians[id as usize]
    }

    /// Candidate musician names for one session bundle.
    pub fn candidates_for(&self, session_idx: usize, bundle_idx: usize) -> Vec<&str> {
        self.slot_key
            .get(&(session_idx as u32, bundle_idx as u32))
            .and_then(|key| self.candidates.get(key))
            .map(|pool| pool.iter().map(|&m| self.musicians[m as usize].as_str()).collect())
            .unwrap_or_default()
    }
}

/// One rewired history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewiredWorld {
    /// Per session (dataset order), per bundle index: assigned musician id
    /// (index into the pools' musician table).
    pub assignment: Vec<Vec<u32>>,
    pub seed: u64,
    pub window_years: u32,
    /// Slots left at their original assignment after repair failed.
    pub infeasible_slots: u64,
    pub infeasible: Vec<(u32, u32)>,
}

/// Violations per constraint from an independent re-check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConstraintReport {
    /// C1: sessions whose bundle count changed.
    pub session_size: u64,
    /// C2: (window block, musician) pairs whose session count changed.
    pub activity: u64,
    /// C3: slots filled by an unqualified musician.
    pub qualification: u64,
    /// C4: duplicate musician appearances within a session.
    pub uniqueness: u64,
}

impl ConstraintReport {
    pub fn total(&self) -> u64 {
        self.session_size + self.activity + self.qualification + self.uniqueness
    }

    pub fn is_clean(&self) -> bool {
        self.total() == 0
    }
}

/// Group every personnel bundle into its pool and precompute C3-qualified
/// candidates per (signature, year).
pub fn build_pools(d: &Dataset, window_years: u32) -> Result<SlotPools> {
    if window_years == 0 {
        return Err(Error::Argument("window_years must be >= 1".into()));
    }
    let first_year =
        d.year_range().ok_or_else(|| Error::Argument("dataset is empty".into()))?.0;

    let mut musicians: Vec<String> = Vec::new();
    let mut musician_ids: HashMap<String, u32> = HashMap::new();
    let mut instrument_ids: HashMap<String, u32> = HashMap::new();
    let mut signatures: Vec<Vec<u32>> = Vec::new();
    let mut signature_ids: HashMap<Vec<u32>, u32> = HashMap::new();

    let mut players: HashMap<(u32, i32), HashSet<u32>> = HashMap::new();
    let mut budgets: HashMap<(i32, u32), u32> = HashMap::new();
    let mut original: Vec<Vec<u32>> = Vec::with_capacity(d.len());
    let mut blocks: BTreeMap<i32, Vec<Slot>> = BTreeMap::new();
    let mut slot_key: HashMap<(u32, u32), (u32, i32)> = HashMap::new();

    for (s_idx, s) in d.sessions().iter().enumerate() {
        let block = (s.year - first_year).div_euclid(window_years as i32);
        let mut orig_row = Vec::with_capacity(s.personnel.len());
        for (b_idx, entry) in s.personnel.iter().enumerate() {
            let m = *musician_ids.entry(entry.musician_id.clone()).or_insert_with(|| {
                musicians.push(entry.musician_id.clone());
                (musicians.len() - 1) as u32
            });
            let mut sig: Vec<u32> = entry
                .instruments
                .iter()
                .map(|inst| {
                    let next = instrument_ids.len() as u32;
                    *instrument_ids.entry(inst.clone()).or_insert(next)
                })
                .collect();
            sig.sort_unstable();
            for &i in &sig {
                players.entry((i, s.year)).or_default().insert(m);
            }
            let sig_id = *signature_ids.entry(sig.clone()).or_insert_with(|| {
                signatures.push(sig.clone());
                (signatures.len() - 1) as u32
            });
            blocks.entry(block).or_default().push(Slot {
                session: s_idx as u32,
                bundle: b_idx as u32,
                sig: sig_id,
                year: s.year,
            });
            slot_key.insert((s_idx as u32, b_idx as u32), (sig_id, s.year));
            orig_row.push(m);
            *budgets.entry((block, m)).or_insert(0) += 1;
        }
        original.push(orig_row);
    }

    // candidates per distinct (signature, year): qualified on every
    // instrument of the signature within {year, year-1}
    let wanted: HashSet<(u32, i32)> = slot_key.values().copied().collect();
    let mut candidates: HashMap<(u32, i32), Vec<u32>> = HashMap::with_capacity(wanted.len());
    for (sig_id, year) in wanted {
        let sig = &signatures[sig_id as usize];
        let mut pool: Option<HashSet<u32>> = None;
        for &inst in sig {
            let mut qualified: HashSet<u32> = HashSet::new();
            if let Some(p) = players.get(&(inst, year)) {
                qualified.extend(p);
            }
            if let Some(p) = players.get(&(inst, year - 1)) {
                qualified.extend(p);
            }
            pool = Some(match pool {
                None => qualified,
                Some(acc) => acc.intersection(&qualified).copied().collect(),
            });
            if pool.as_ref().is_some_and(HashSet::is_empty) {
                break;
            }
        }
        let mut pool: Vec<u32> = pool.unwrap_or_default().into_iter().collect();
        pool.sort_unstable();
        candidates.insert((sig_id, year), pool);
    }

    Ok(SlotPools {
        window_years,
        first_year,
        musicians,
        blocks,
        candidates,
        slot_key,
        budgets,
        original,
    })
}

/// Generate one rewired world. Identical (dataset, window, seed) inputs give
/// an identical world.
pub fn generate_world(d: &Dataset, pools: &SlotPools, seed: u64) -> RewiredWorld {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: Vec<Vec<u32>> =
        d.sessions().iter().map(|s| vec![u32::MAX; s.personnel.len()]).collect();
    let mut infeasible: Vec<(u32, u32)> = Vec::new();

    for (&block, slots) in &pools.blocks {
        let mut budget: HashMap<u32, i64> = pools
            .budgets
            .iter()
            .filter(|((b, _), _)| *b == block)
            .map(|((_, m), &c)| (*m, i64::from(c)))
            .collect();
        let mut members: HashMap<u32, HashSet<u32>> = HashMap::new();
        let mut placed: HashMap<u32, Vec<usize>> = HashMap::new();

        // ascending pool size, deterministic tie-break
        let mut order: Vec<usize> = (0..slots.len()).collect();
        order.sort_by_key(|&i| {
            let slot = &slots[i];
            let pool_len = pools.candidates.get(&(slot.sig, slot.year)).map_or(0, Vec::len);
            (pool_len, slot.session, slot.bundle)
        });

        for &slot_idx in &order {
            let slot = &slots[slot_idx];
            let pool =
                pools.candidates.get(&(slot.sig, slot.year)).map(Vec::as_slice).unwrap_or(&[]);
            let session_set = members.entry(slot.session).or_default();
            let available: Vec<u32> = pool
                .iter()
                .copied()
                .filter(|m| budget.get(m).copied().unwrap_or(0) > 0 && !session_set.contains(m))
                .collect();

            let chosen = if available.is_empty() {
                try_repair(
                    slot_idx,
                    slots,
                    pools,
                    &mut budget,
                    &mut members,
                    &mut placed,
                    &mut assignment,
                    &mut rng,
                )
            } else {
                Some(available[rng.random_range(0..available.len())])
            };

            let assignee = match chosen {
                Some(m) => m,
                None => {
                    // revert to the original musician; prefer any qualified
                    // substitute over creating a within-session duplicate
                    let orig = pools.original[slot.session as usize][slot.bundle as usize];
                    let session_set = members.entry(slot.session).or_default();
                    let fallback = if session_set.contains(&orig) {
                        pool.iter().copied().find(|m| !session_set.contains(m)).unwrap_or(orig)
                    } else {
                        orig
                    };
                    infeasible.push((slot.session, slot.bundle));
                    fallback
                }
            };
            *budget.entry(assignee).or_insert(0) -= 1;
            members.entry(slot.session).or_default().insert(assignee);
            placed.entry(assignee).or_default().push(slot_idx);
            assignment[slot.session as usize][slot.bundle as usize] = assignee;
        }
    }

    infeasible.sort_unstable();
    RewiredWorld {
        assignment,
        seed,
        window_years: pools.window_years,
        infeasible_slots: infeasible.len() as u64,
        infeasible,
    }
}

/// Free up a qualified musician for a conflicted slot by relocating one of
/// their existing placements to an available substitute.
fn try_repair(
    slot_idx: usize,
    slots: &[Slot],
    pools: &SlotPools,
    budget: &mut HashMap<u32, i64>,
    members: &mut HashMap<u32, HashSet<u32>>,
    placed: &mut HashMap<u32, Vec<usize>>,
    rng: &mut ChaCha8Rng,
) -> Option<u32> {
    let slot = &slots[slot_idx];
    let pool = pools.candidates.get(&(slot.sig, slot.year)).map(Vec::as_slice).unwrap_or(&[]);
    if pool.is_empty() {
        return None;
    }
    for _ in 0..REPAIR_ATTEMPTS {
        let m = pool[rng.random_range(0..pool.len())];
        if members.get(&slot.session).is_some_and(|s| s.contains(&m)) {
            continue;
        }
        if budget.get(&m).copied().unwrap_or(0) > 0 {
            return Some(m);
        }
        // m is fully placed: steal one of their slots in another session and
        // refill it with a substitute that still has budget
        let owned: Vec<usize> = placed
            .get(&m)
            .map(|v| v.iter().copied().filter(|&i| slots[i].session != slot.session).collect())
            .unwrap_or_default();
        if owned.is_empty() {
            continue;
        }
        let steal_idx = owned[rng.random_range(0..owned.len())];
        let steal = &slots[steal_idx];
        let steal_pool =
            pools.candidates.get(&(steal.sig, steal.year)).map(Vec::as_slice).unwrap_or(&[]);
        let steal_members = members.entry(steal.session).or_default();
        let substitutes: Vec<u32> = steal_pool
            .iter()
            .copied()
            .filter(|sub| {
                *sub != m
                    && budget.get(sub).copied().unwrap_or(0) > 0
                    && !steal_members.contains(sub)
            })
            .collect();
        if substitutes.is_empty() {
            continue;
        }
        let sub = substitutes[rng.random_range(0..substitutes.len())];

        *budget.entry(sub).or_insert(0) -= 1;
        let steal_members = members.entry(steal.session).or_default();
        steal_members.remove(&m);
        steal_members.insert(sub);
        if let Some(v) = placed.get_mut(&m) {
            v.retain(|&i| i != steal_idx);
        }
        placed.entry(sub).or_default().push(steal_idx);
        *budget.entry(m).or_insert(0) += 1;
        return Some(m);
    }
    None
}

/// Re-check all four constraints from scratch against the observed dataset,
/// independent of any generation bookkeeping.
pub fn verify_world(d: &Dataset, world: &RewiredWorld) -> Result<ConstraintReport> {
    if world.assignment.len() != d.len() {
        return Err(Error::Argument("world does not cover the dataset's sessions".into()));
    }
    let first_year = d.year_range().ok_or_else(|| Error::Argument("dataset is empty".into()))?.0;
    let window = world.window_years as i32;
    let block_of = |year: i32| (year - first_year).div_euclid(window);

    // qualification evidence straight from the records
    let mut played: HashSet<(&str, &str, i32)> = HashSet::new();
    // first-appearance interning must match build_pools
    let mut names: Vec<&str> = Vec::new();
    let mut ids: HashMap<&str, u32> = HashMap::new();
    for s in d.sessions() {
        for entry in &s.personnel {
            for inst in &entry.instruments {
                played.insert((entry.musician_id.as_str(), inst.as_str(), s.year));
            }
            ids.entry(entry.musician_id.as_str()).or_insert_with(|| {
                names.push(entry.musician_id.as_str());
                (names.len() - 1) as u32
            });
        }
    }

    let mut report = ConstraintReport::default();
    let mut observed_counts: HashMap<(i32, u32), i64> = HashMap::new();
    let mut assigned_counts: HashMap<(i32, u32), i64> = HashMap::new();

    for (s_idx, s) in d.sessions().iter().enumerate() {
        let row = &world.assignment[s_idx];
        let block = block_of(s.year);
        for entry in &s.personnel {
            *observed_counts.entry((block, ids[entry.musician_id.as_str()])).or_insert(0) += 1;
        }
        if row.len() != s.personnel.len() {
            report.session_size += 1;
            continue;
        }
        let mut seen: HashSet<u32> = HashSet::new();
        for (&m, entry) in row.iter().zip(&s.personnel) {
            if m as usize >= names.len() {
                return Err(Error::Argument(format!("world references unknown musician id {m}")));
            }
            let name = names[m as usize];
            if !seen.insert(m) {
                report.uniqueness += 1;
            }
            let qualified = entry.instruments.iter().all(|inst| {
                played.contains(&(name, inst.as_str(), s.year))
                    || played.contains(&(name, inst.as_str(), s.year - 1))
            });
            if !qualified {
                report.qualification += 1;
            }
            *assigned_counts.entry((block, m)).or_insert(0) += 1;
        }
    }

    let keys: HashSet<(i32, u32)> =
        observed_counts.keys().chain(assigned_counts.keys()).copied().collect();
    for key in keys {
        if observed_counts.get(&key).copied().unwrap_or(0)
            != assigned_counts.get(&key).copied().unwrap_or(0)
        {
            report.activity += 1;
        }
    }
    Ok(report)
}

/// Materialize the rewired world as a dataset (same sessions, years, leaders,
/// releases; reassigned musicians). Fails if the world duplicates a musician
/// within a session, since that cannot form a valid dataset.
pub fn materialize_world(d: &Dataset, pools: &SlotPools, world: &RewiredWorld) -> Result<Dataset> {
    if world.assignment.len() != d.len() {
        return Err(Error::Argument("world does not cover the dataset's sessions".into()));
    }
    let mut records = Vec::with_capacity(d.len());
    for (s, row) in d.sessions().iter().zip(&world.assignment) {
        let mut rec = s.clone();
        for (entry, &m) in rec.personnel.iter_mut().zip(row) {
            entry.musician_id = pools.musician_name(m).to_string();
        }
        records.push(rec);
    }
    Dataset::new(records, d.bounds())
}

/// Census every session under the rewired history: co-play weights come from
/// the world's own prior sessions (same strict year cutoff), then the census
/// matches the observed procedure exactly.
pub fn world_census(
    d: &Dataset,
    pools: &SlotPools,
    world: &RewiredWorld,
    theta: u32,
) -> Result<Vec<SessionCensus>> {
    let materialized = materialize_world(d, pools, world)?;
    let ix = CoPlayIndex::build(&materialized);
    census_dataset(&materialized, &ix, theta)
}

/// One session's observed-vs-rewired forbidden densities.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub session_id: String,
    pub year: i32,
    pub n_forbidden_observed: u64,
    pub observed: f64,
    pub mean_rewired: f64,
    /// Mean rewired minus observed.
    pub difference: f64,
    pub n_worlds_defined: usize,
}

/// Comparison table plus the restricted sample (sessions with at least one
/// observed forbidden triad) feeding the KDE and rank tests.
#[derive(Debug, Clone, Default)]
pub struct DensityComparison {
    pub rows: Vec<CompareRow>,
    pub differences: Vec<f64>,
    pub observed_restricted: Vec<f64>,
    pub mean_rewired_restricted: Vec<f64>,
    /// Share of restricted sessions where the mean rewired density strictly
    /// exceeds the observed one.
    pub share_rewired_higher: f64,
    pub n_restricted: usize,
    /// Sessions skipped because densities were undefined on either side.
    pub skipped_undefined: usize,
}

pub fn compare_forbidden_densities(
    d: &Dataset,
    observed: &[SessionCensus],
    worlds: &[Vec<SessionCensus>],
) -> Result<DensityComparison> {
    if observed.len() != d.len() {
        return Err(Error::Argument("observed censuses do not match the session set".into()));
    }
    for (w_idx, w) in worlds.iter().enumerate() {
        if w.len() != d.len() {
            return Err(Error::Argument(format!(
                "world {w_idx} censuses do not match the session set"
            )));
        }
    }
    let mut cmp = DensityComparison::default();
    let mut higher = 0usize;
    for (i, s) in d.sessions().iter().enumerate() {
        let Some(obs) = observed[i].densities() else {
            cmp.skipped_undefined += 1;
            continue;
        };
        let rewired: Vec<f64> =
            worlds.iter().filter_map(|w| w[i].densities().map(|x| x.forbidden)).collect();
        if rewired.is_empty() {
            cmp.skipped_undefined += 1;
            continue;
        }
        let mean_rewired = rewired.iter().sum::<f64>() / rewired.len() as f64;
        let row = CompareRow {
            session_id: s.session_id.clone(),
            year: s.year,
            n_forbidden_observed: observed[i].n_forbidden,
            observed: obs.forbidden,
            mean_rewired,
            difference: mean_rewired - obs.forbidden,
            n_worlds_defined: rewired.len(),
        };
        if row.n_forbidden_observed >= 1 {
            cmp.differences.push(row.difference);
            cmp.observed_restricted.push(row.observed);
            cmp.mean_rewired_restricted.push(row.mean_rewired);
            if row.mean_rewired > row.observed {
                higher += 1;
            }
        }
        cmp.rows.push(row);
    }
    cmp.n_restricted = cmp.differences.len();
    cmp.share_rewired_higher = if cmp.n_restricted > 0 {
        higher as f64 / cmp.n_restricted as f64
    } else {
        0.0
    };
    Ok(cmp)
}
