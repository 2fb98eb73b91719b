//! Alliance NMI, war and mobilization Jaccard, and aggregation across runs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsu::DisjointSets;
use crate::engine::RunLog;
use crate::protocol::ActionKind;
use crate::roster::CountryId;
use crate::scenario::{unordered, GroundTruthSets, Pair};
use crate::worldstate::{Board, RelationKind};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("partitions cover {0} and {1} elements")]
    MismatchedRoster(usize, usize),
    #[error("snapshot round {requested} is beyond the {recorded} recorded rounds")]
    SnapshotOutOfRange { requested: u32, recorded: u32 },
    #[error("snapshot round must be at least 1")]
    ZeroSnapshot,
    #[error("nothing to aggregate")]
    Empty,
    #[error("runs disagree on whether war declarations are scored")]
    InconsistentAspects,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
}

/// Disjoint blocks covering `0..n`, each sorted, ordered by first member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    n: usize,
    blocks: Vec<Vec<usize>>,
}

impl Partition {
    pub fn new(n: usize, blocks: Vec<Vec<usize>>) -> Result<Self, EvalError> {
        let mut seen = vec![false; n];
        for b in &blocks {
            if b.is_empty() {
                return Err(EvalError::InvalidPartition("empty block".into()));
            }
            for &x in b {
                if x >= n || seen[x] {
                    return Err(EvalError::InvalidPartition(format!("element {x}")));
                }
                seen[x] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(EvalError::InvalidPartition("blocks do not cover the roster".into()));
        }
        Ok(Self::canonical(n, blocks))
    }

    fn canonical(n: usize, mut blocks: Vec<Vec<usize>>) -> Self {
        for b in &mut blocks {
            b.sort_unstable();
        }
        blocks.sort();
        Partition { n, blocks }
    }

    /// Connected components of the given edges; untouched elements are
    /// singletons.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut dsu = DisjointSets::new(n);
        for (a, b) in edges {
            dsu.union(a, b);
        }
        Self::canonical(n, dsu.components())
    }

    pub fn from_labels(labels: &[usize]) -> Self {
        let mut blocks: Vec<(usize, Vec<usize>)> = Vec::new();
        for (i, &l) in labels.iter().enumerate() {
            match blocks.iter_mut().find(|(k, _)| *k == l) {
                Some((_, b)) => b.push(i),
                None => blocks.push((l, vec![i])),
            }
        }
        Self::canonical(labels.len(), blocks.into_iter().map(|(_, b)| b).collect())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    fn labels(&self) -> Vec<usize> {
        let mut out = vec![0; self.n];
        for (k, b) in self.blocks.iter().enumerate() {
            for &x in b {
                out[x] = k;
            }
        }
        out
    }

    fn entropy(&self) -> f64 {
        let n = self.n as f64;
        self.blocks
            .iter()
            .map(|b| {
                let p = b.len() as f64 / n;
                -p * p.ln()
            })
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmiReport {
    pub nmi: f64,
    /// Raw mutual information in nats.
    pub mi: f64,
    pub h_p: f64,
    pub h_q: f64,
}

/// Mutual information from the contingency table, natural logs.
pub fn mutual_information(p: &Partition, q: &Partition) -> Result<f64, EvalError> {
    if p.n != q.n {
        return Err(EvalError::MismatchedRoster(p.n, q.n));
    }
    if p.n == 0 {
        return Ok(0.0);
    }
    let (lp, lq) = (p.labels(), q.labels());
    let mut table = vec![vec![0usize; q.blocks.len()]; p.blocks.len()];
    for i in 0..p.n {
        table[lp[i]][lq[i]] += 1;
    }
    let n = p.n as f64;
    let mut mi = 0.0;
    for (a, row) in table.iter().enumerate() {
        for (b, &nij) in row.iter().enumerate() {
            if nij == 0 {
                continue;
            }
            let nij = nij as f64;
            let ai = p.blocks[a].len() as f64;
            let bj = q.blocks[b].len() as f64;
            mi += (nij / n) * ((n * nij) / (ai * bj)).ln();
        }
    }
    Ok(mi.max(0.0))
}

/// NMI with arithmetic-mean normalization, `2I / (H(p) + H(q))`.
///
/// Both entropies zero yields 1.0; zero information with a positive
/// denominator yields 0.0.
pub fn nmi_report(p: &Partition, q: &Partition) -> Result<NmiReport, EvalError> {
    let mi = mutual_information(p, q)?;
    let (h_p, h_q) = (p.entropy(), q.entropy());
    let denom = h_p + h_q;
    let nmi = if h_p == 0.0 && h_q == 0.0 {
        1.0
    } else if mi == 0.0 {
        0.0
    } else {
        (2.0 * mi / denom).clamp(0.0, 1.0)
    };
    Ok(NmiReport { nmi, mi, h_p, h_q })
}

pub fn nmi(p: &Partition, q: &Partition) -> Result<f64, EvalError> {
    Ok(nmi_report(p, q)?.nmi)
}

/// `|a ∩ b| / |a ∪ b|`; two empty sets score 1.0.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Alliance blocks on a canonical board.
pub fn alliance_partition(board: &Board) -> Partition {
    Partition::from_edges(
        board.size(),
        board
            .edges_of(RelationKind::MilitaryAlliance)
            .into_iter()
            .map(|(a, b)| (a.0, b.0)),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub alliance_nmi: f64,
    pub alliance_mi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub war_jaccard: Option<f64>,
    pub mobilization_jaccard: f64,
    pub snapshot_round: u32,
}

/// What a run produced by its snapshot round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observed {
    pub board: Board,
    pub wars: BTreeSet<Pair>,
    pub mobilized: BTreeSet<CountryId>,
}

pub fn score(observed: &Observed, truth: &GroundTruthSets, snapshot_round: u32) -> Scores {
    let n = observed.board.size();
    let gt_partition = Partition::from_edges(n, truth.alliances.iter().map(|(a, b)| (a.0, b.0)));
    let report = nmi_report(&alliance_partition(&observed.board), &gt_partition)
        .expect("both partitions span the roster");
    Scores {
        alliance_nmi: report.nmi,
        alliance_mi: report.mi,
        war_jaccard: truth
            .war_declarations
            .as_ref()
            .map(|gt| jaccard(&observed.wars, gt)),
        mobilization_jaccard: jaccard(&observed.mobilized, &truth.mobilized),
        snapshot_round,
    }
}

/// Canonical board at the end of `round` plus wars and mobilizations
/// applied in rounds `1..=round` (cumulative: a later peace does not undo
/// a declaration).
pub fn observed_at(log: &RunLog, round: u32) -> Result<Observed, EvalError> {
    if round == 0 {
        return Err(EvalError::ZeroSnapshot);
    }
    let record = log.round(round).ok_or(EvalError::SnapshotOutOfRange {
        requested: round,
        recorded: log.rounds.len() as u32,
    })?;
    let board = Board::from_snapshot(&record.board)
        .map_err(|e| EvalError::InvalidPartition(e.to_string()))?;
    let mut wars = BTreeSet::new();
    let mut mobilized = BTreeSet::new();
    for r in &log.rounds[..round as usize] {
        for a in r.applied() {
            match (a.kind, a.target) {
                (ActionKind::DeclareWar, Some(t)) => {
                    wars.insert(unordered(a.actor, t));
                }
                (ActionKind::GeneralMobilization, _) => {
                    mobilized.insert(a.actor);
                }
                _ => {}
            }
        }
    }
    Ok(Observed {
        board,
        wars,
        mobilized,
    })
}

pub fn evaluate_run(log: &RunLog, truth: &GroundTruthSets, round: u32) -> Result<Scores, EvalError> {
    let observed = observed_at(log, round)?;
    let n = log.roster().len();
    if observed.board.size() != n {
        return Err(EvalError::MismatchedRoster(observed.board.size(), n));
    }
    Ok(score(&observed, truth, round))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub runs: usize,
    /// Percentages.
    pub alliance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub war: Option<f64>,
    pub mobilization: f64,
}

pub fn aggregate(scores: &[Scores]) -> Result<Aggregate, EvalError> {
    let first = scores.first().ok_or(EvalError::Empty)?;
    let has_war = first.war_jaccard.is_some();
    if scores.iter().any(|s| s.war_jaccard.is_some() != has_war) {
        return Err(EvalError::InconsistentAspects);
    }
    let n = scores.len() as f64;
    let mean = |f: &dyn Fn(&Scores) -> f64| 100.0 * scores.iter().map(f).sum::<f64>() / n;
    Ok(Aggregate {
        runs: scores.len(),
        alliance: mean(&|s| s.alliance_nmi),
        war: has_war.then(|| mean(&|s| s.war_jaccard.unwrap_or(0.0))),
        mobilization: mean(&|s| s.mobilization_jaccard),
    })
}

/// Fixed-width table: one row per run, then the mean.
pub fn format_table(rows: &[(String, Scores)], aggregate: &Aggregate) -> String {
    let has_war = aggregate.war.is_some();
    let mut out = String::new();
    let header = if has_war {
        format!("{:<28} {:>10} {:>10} {:>12}\n", "run", "Alliance", "War", "Mobilization")
    } else {
        format!("{:<28} {:>10} {:>12}\n", "run", "Alliance", "Mobilization")
    };
    out.push_str(&header);
    let row = |label: &str, a: f64, w: Option<f64>, m: f64| {
        if has_war {
            format!(
                "{label:<28} {a:>10.2} {:>10.2} {m:>12.2}\n",
                w.unwrap_or(f64::NAN)
            )
        } else {
            format!("{label:<28} {a:>10.2} {m:>12.2}\n")
        }
    };
    for (label, s) in rows {
        out.push_str(&row(
            label,
            100.0 * s.alliance_nmi,
            s.war_jaccard.map(|w| 100.0 * w),
            100.0 * s.mobilization_jaccard,
        ));
    }
    out.push_str(&row(
        &format!("mean of {}", aggregate.runs),
        aggregate.alliance,
        aggregate.war,
        aggregate.mobilization,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn part(n: usize, blocks: &[&[usize]]) -> Partition {
        Partition::new(n, blocks.iter().map(|b| b.to_vec()).collect()).unwrap()
    }

    // B F G A R S U O
    const B: usize = 0;
    const F: usize = 1;
    const G: usize = 2;
    const A: usize = 3;
    const R: usize = 4;
    const S: usize = 5;
    const U: usize = 6;
    const O: usize = 7;

    #[test]
    fn identical_and_independent() {
        let p = part(4, &[&[0, 1], &[2, 3]]);
        assert_eq!(nmi(&p, &p).unwrap(), 1.0);
        let one = part(8, &[&[0, 1, 2, 3, 4, 5, 6, 7]]);
        let singles = Partition::from_edges(8, []);
        assert_eq!(nmi(&one, &singles).unwrap(), 0.0);
        assert_eq!(nmi(&one, &one).unwrap(), 1.0);
        assert!(matches!(
            nmi(&one, &Partition::from_edges(3, [])),
            Err(EvalError::MismatchedRoster(8, 3))
        ));
    }

    #[test]
    fn derived_example() {
        let p = part(8, &[&[B, F], &[R, S], &[G, A, O], &[U]]);
        let q = part(8, &[&[B, F, R, S], &[G, A, O], &[U]]);
        let r = nmi_report(&p, &q).unwrap();
        assert!((r.nmi - 0.8490009050261612).abs() < 1e-9, "{r:?}");
        assert!((r.mi - 0.97431).abs() < 1e-4);
        assert!((r.h_p - 1.32089).abs() < 1e-4);
        assert!((r.h_q - 0.97431).abs() < 1e-4);
        assert_eq!(nmi(&q, &p).unwrap(), r.nmi);
    }

    #[test]
    fn ground_truth_partition_blocks() {
        let edges = [(B, F), (R, S), (A, G), (R, F), (O, G)];
        let p = Partition::from_edges(8, edges);
        assert_eq!(p.blocks(), &[vec![B, F, R, S], vec![G, A, O], vec![U]]);
        assert_eq!(
            Partition::from_edges(3, [(0, 1)]).blocks(),
            &[vec![0, 1], vec![2]]
        );
    }

    #[test]
    fn jaccard_examples() {
        let pair = |a: usize, b: usize| (a.min(b), a.max(b));
        let sim: BTreeSet<_> = [(A, S), (A, R), (G, R), (G, F), (G, B)]
            .into_iter()
            .map(|(a, b)| pair(a, b))
            .collect();
        let gt: BTreeSet<_> = [(A, S), (A, R), (G, S), (G, R), (G, F)]
            .into_iter()
            .map(|(a, b)| pair(a, b))
            .collect();
        assert!((jaccard(&sim, &gt) - 4.0 / 6.0).abs() < 1e-12);
        let all: BTreeSet<usize> = (0..8).collect();
        let gt_mob: BTreeSet<usize> = (0..8).filter(|&c| c != U).collect();
        assert_eq!(jaccard(&all, &gt_mob), 0.875);
        assert_eq!(jaccard(&all, &all), 1.0);
        assert_eq!(jaccard(&all, &BTreeSet::new()), 0.0);
        assert_eq!(jaccard::<usize>(&BTreeSet::new(), &BTreeSet::new()), 1.0);
    }

    fn s(a: f64, w: Option<f64>, m: f64) -> Scores {
        Scores {
            alliance_nmi: a,
            alliance_mi: 0.0,
            war_jaccard: w,
            mobilization_jaccard: m,
            snapshot_round: 6,
        }
    }

    #[test]
    fn aggregates() {
        let agg = aggregate(&[s(1.0, Some(1.0), 1.0), s(0.5, Some(0.5), 0.5)]).unwrap();
        assert_eq!(format!("{:.2}", agg.alliance), "75.00");
        let one = aggregate(&[s(0.25, None, 0.5)]).unwrap();
        assert_eq!((one.alliance, one.war, one.mobilization), (25.0, None, 50.0));
        let seven = vec![s(1.0, Some(1.0), 1.0); 7];
        let agg = aggregate(&seven).unwrap();
        assert_eq!(format!("{:.2}", agg.war.unwrap()), "100.00");
        assert!(format_table(&[], &agg).contains("mean of 7"));
        assert_eq!(aggregate(&[]), Err(EvalError::Empty));
        assert_eq!(
            aggregate(&[s(1.0, None, 1.0), s(1.0, Some(1.0), 1.0)]),
            Err(EvalError::InconsistentAspects)
        );
        let table = format_table(&[("r".into(), s(1.0, None, 1.0))], &aggregate(&[s(1.0, None, 1.0)]).unwrap());
        assert!(!table.contains("War"));
    }

    #[test]
    fn rejects_bad_partitions() {
        assert!(Partition::new(3, vec![vec![0, 1]]).is_err());
        assert!(Partition::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::new(2, vec![vec![0, 1], vec![]]).is_err());
        assert_eq!(Partition::from_labels(&[5, 5, 2]).blocks(), &[vec![0, 1], vec![2]]);
    }
}
