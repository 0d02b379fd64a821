//! Deterministic demo corpora.
//!
//! `kind_of_blue` rebuilds the collaboration history around the March 1959
//! "Kind of Blue" sextet: a synthetic family of prior sessions whose
//! cumulative pair counts and per-musician totals reproduce the session's
//! published co-play matrix exactly. Used by tests and handy for demos.

use std::collections::BTreeSet;

use crate::graph::WeightMatrix;
use crate::records::{Dataset, PersonnelEntry, SessionRecord, YearBounds};

pub const KOB_SESSION_ID: &str = "kob_1959";

const MEMBERS: [(&str, &str); 6] = [
    ("chambers_p", "bass"),
    ("coltrane_j", "tenor_sax"),
    ("kelly_w", "piano"),
    ("cobb_j", "drums"),
    ("davis_m", "trumpet"),
    ("adderley_c", "alto_sax"),
];

/// Upper triangle of the sextet's co-play matrix; diagonal = total prior plays.
const MATRIX: [[u32; 6]; 6] = [
    [58, 35, 12, 8, 22, 13],
    [35, 35, 1, 7, 16, 5],
    [12, 1, 25, 11, 0, 1],
    [8, 7, 11, 24, 6, 10],
    [22, 16, 0, 6, 23, 8],
    [13, 5, 1, 10, 8, 20],
];

/// Prior-session family: member index sets (1-based) with multiplicities.
/// Solved so pair-membership counts equal the off-diagonal matrix and each
/// member's total session count equals the diagonal (after filler padding).
const HISTORY: [(&[usize], usize); 16] = [
    (&[1, 2], 17),
    (&[1, 3], 11),
    (&[3, 4], 10),
    (&[1, 2, 5], 9),
    (&[1, 6], 5),
    (&[1, 2, 4, 5, 6], 4),
    (&[1, 5], 4),
    (&[4, 6], 4),
    (&[1, 2, 4, 5], 2),
    (&[1, 5, 6], 2),
    (&[1, 2, 5, 6], 1),
    (&[1, 4, 6], 1),
    (&[1, 2, 3], 1),
    (&[1, 2, 4], 1),
    (&[3, 4, 6], 1),
    (&[5, 6], 1),
];

/// Filler-duo sessions topping up diagonals: (member index, count).
const PADDING: [(usize, usize); 3] = [(3, 2), (4, 1), (6, 1)];

fn entry(member: usize) -> PersonnelEntry {
    let (name, instrument) = MEMBERS[member - 1];
    PersonnelEntry {
        musician_id: name.to_string(),
        instruments: BTreeSet::from([instrument.to_string()]),
    }
}

/// The corpus plus the focal session's id.
pub fn kind_of_blue() -> (Dataset, String) {
    let mut records = Vec::new();
    let mut counter = 0usize;
    let mut push = |members: Vec<PersonnelEntry>, records: &mut Vec<SessionRecord>| {
        // Spread history over 1940-1958; any spread works for as-of-1959 queries.
        let year = 1940 + (counter % 19) as i32;
        records.push(SessionRecord {
            session_id: format!("h{counter:03}"),
            leader_id: members[0].musician_id.clone(),
            year,
            personnel: members,
            releases: (counter % 7 + 1) as u32,
        });
        counter += 1;
    };

    for &(members, times) in &HISTORY {
        for _ in 0..times {
            push(members.iter().map(|&m| entry(m)).collect(), &mut records);
        }
    }
    for &(member, times) in &PADDING {
        for t in 0..times {
            let filler = PersonnelEntry {
                musician_id: format!("filler_{member}_{t}"),
                instruments: BTreeSet::from(["guitar".to_string()]),
            };
            push(vec![entry(member), filler], &mut records);
        }
    }

    records.push(SessionRecord {
        session_id: KOB_SESSION_ID.to_string(),
        leader_id: "davis_m".to_string(),
        year: 1959,
        personnel: (1..=6).map(entry).collect(),
        releases: 45,
    });

    let dataset = Dataset::new(records, YearBounds::default()).expect("fixture is valid");
    (dataset, KOB_SESSION_ID.to_string())
}

/// The sextet's expected co-play matrix in personnel order.
pub fn kind_of_blue_matrix() -> WeightMatrix {
    let names = MEMBERS.iter().map(|(n, _)| n.to_string()).collect();
    let rows = MATRIX.iter().map(|r| r.to_vec()).collect();
    WeightMatrix::from_rows(names, rows).expect("matrix is symmetric")
}
