use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::learners::Dataset;
use crate::trace::{LabeledSample, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationLevel {
    /// All data of one operator.
    Mno,
    /// Operator × scenario.
    Scenario,
    /// Operator × eNB.
    Enb,
    /// Operator × cell.
    Cell,
}

impl AggregationLevel {
    pub const ALL: [AggregationLevel; 4] = [
        AggregationLevel::Mno,
        AggregationLevel::Scenario,
        AggregationLevel::Enb,
        AggregationLevel::Cell,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AggregationLevel::Mno => "mno",
            AggregationLevel::Scenario => "scenario",
            AggregationLevel::Enb => "enb",
            AggregationLevel::Cell => "cell",
        }
    }

    pub fn key(self, s: &LabeledSample) -> GroupKey {
        let detail = match self {
            AggregationLevel::Mno => KeyDetail::All,
            AggregationLevel::Scenario => KeyDetail::Scenario(s.scenario),
            AggregationLevel::Enb => KeyDetail::Enb(s.enb_id),
            AggregationLevel::Cell => KeyDetail::Cell(s.cell_id),
        };
        GroupKey { mno: s.mno.clone(), detail }
    }
}

impl FromStr for AggregationLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AggregationLevel::ALL
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| format!("unknown aggregation level '{s}' (mno, scenario, enb, cell)"))
    }
}

impl fmt::Display for AggregationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum KeyDetail {
    All,
    Scenario(Scenario),
    Enb(Option<u64>),
    Cell(Option<u64>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub mno: String,
    pub detail: KeyDetail,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = |v: &Option<u64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        match &self.detail {
            KeyDetail::All => write!(f, "{}", self.mno),
            KeyDetail::Scenario(s) => write!(f, "{}:{}", self.mno, s),
            KeyDetail::Enb(e) => write!(f, "{}:enb={}", self.mno, id(e)),
            KeyDetail::Cell(c) => write!(f, "{}:cell={}", self.mno, id(c)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Group {
    pub key: GroupKey,
    /// Positions of the group's samples in the input.
    pub indices: Vec<usize>,
    pub data: Dataset,
}

#[derive(Debug, Clone)]
pub struct Aggregation {
    pub level: AggregationLevel,
    /// Groups in key order.
    pub groups: Vec<Group>,
    /// Groups below the size gate, with their sizes.
    pub dropped: Vec<(GroupKey, usize)>,
}

impl Aggregation {
    pub fn dropped_samples(&self) -> usize {
        self.dropped.iter().map(|d| d.1).sum()
    }
}

/// Partitions samples by the level's key. Groups with fewer than
/// `min_size` samples (normally `2k`) are dropped and reported.
pub fn aggregate(samples: &[LabeledSample], level: AggregationLevel, min_size: usize) -> Aggregation {
    let mut by_key: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        by_key.entry(level.key(s)).or_default().push(i);
    }
    let mut groups = Vec::new();
    let mut dropped = Vec::new();
    for (key, indices) in by_key {
        if indices.len() < min_size {
            dropped.push((key, indices.len()));
            continue;
        }
        let subset: Vec<LabeledSample> = indices.iter().map(|&i| samples[i].clone()).collect();
        groups.push(Group { key, data: Dataset::from_samples(&subset), indices });
    }
    Aggregation { level, groups, dropped }
}
