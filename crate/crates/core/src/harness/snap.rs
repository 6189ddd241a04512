//! Reader for SNAP-style community files: one community per line,
//! whitespace-separated user ids, `#` comment lines.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::BipartiteGraph;

pub const FILTER_ORDER: &str =
    "drop groups smaller than min_group_size; drop users in fewer than min_user_memberships surviving groups; drop groups left empty";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub raw_groups: usize,
    pub raw_users: usize,
    pub raw_memberships: usize,
    /// Repeated ids within one line, counted once.
    pub duplicate_memberships: usize,
    pub min_group_size: usize,
    pub min_user_memberships: usize,
    pub filter_order: String,
    pub groups_after_group_filter: usize,
    pub users_after_user_filter: usize,
    pub groups: usize,
    pub users: usize,
    pub edges: usize,
}

#[derive(Debug, Clone)]
pub struct IngestedGraph {
    pub graph: BipartiteGraph,
    /// Original id of each dense user index (ascending).
    pub user_ids: Vec<u64>,
    /// Zero-based line-order index (among community lines) of each kept group.
    pub group_lines: Vec<usize>,
    pub manifest: IngestManifest,
}

/// Parses communities from a reader; duplicates within a line collapse.
pub fn parse_communities<R: BufRead>(reader: R, source: &str) -> Result<(Vec<Vec<u64>>, usize), HarnessError> {
    let mut groups = Vec::new();
    let mut duplicates = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Io { path: source.into(), source: e })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut ids = BTreeSet::new();
        let mut count = 0;
        for tok in trimmed.split_whitespace() {
            let id: u64 = tok.parse().map_err(|_| HarnessError::Parse {
                source_name: source.into(),
                line: i + 1,
                message: format!("`{tok}` is not a non-negative integer user id"),
            })?;
            ids.insert(id);
            count += 1;
        }
        duplicates += count - ids.len();
        groups.push(ids.into_iter().collect());
    }
    Ok((groups, duplicates))
}

/// Applies the group-size filter, then the membership-count filter, then
/// drops groups left empty, and relabels users densely by ascending id.
pub fn filter_communities(
    groups: Vec<Vec<u64>>,
    duplicates: usize,
    min_group_size: usize,
    min_user_memberships: usize,
) -> Result<IngestedGraph, HarnessError> {
    let raw_groups = groups.len();
    let raw_memberships: usize = groups.iter().map(Vec::len).sum();
    let raw_users = groups.iter().flatten().collect::<BTreeSet<_>>().len();

    let kept: Vec<(usize, Vec<u64>)> =
        groups.into_iter().enumerate().filter(|(_, g)| g.len() >= min_group_size).collect();
    let groups_after_group_filter = kept.len();

    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for (_, g) in &kept {
        for &u in g {
            *counts.entry(u).or_default() += 1;
        }
    }
    let user_ids: Vec<u64> = counts.into_iter().filter(|&(_, c)| c >= min_user_memberships).map(|(u, _)| u).collect();
    let users_after_user_filter = user_ids.len();
    let dense: BTreeMap<u64, u32> = user_ids.iter().enumerate().map(|(i, &u)| (u, i as u32)).collect();

    let mut group_lines = Vec::new();
    let mut lists = Vec::new();
    for (line, g) in kept {
        let members: Vec<u32> = g.iter().filter_map(|u| dense.get(u).copied()).collect();
        if !members.is_empty() {
            group_lines.push(line);
            lists.push(members);
        }
    }
    if lists.is_empty() || user_ids.is_empty() {
        return Err(HarnessError::EmptyDataset);
    }
    let graph = BipartiteGraph::from_group_lists(user_ids.len(), lists)?;
    let manifest = IngestManifest {
        raw_groups,
        raw_users,
        raw_memberships,
        duplicate_memberships: duplicates,
        min_group_size,
        min_user_memberships,
        filter_order: FILTER_ORDER.into(),
        groups_after_group_filter,
        users_after_user_filter,
        groups: graph.num_groups(),
        users: graph.num_users(),
        edges: graph.num_edges(),
    };
    Ok(IngestedGraph { graph, user_ids, group_lines, manifest })
}

pub fn ingest_snap_communities(
    path: &Path,
    min_group_size: usize,
    min_user_memberships: usize,
) -> Result<IngestedGraph, HarnessError> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let (groups, dups) = parse_communities(std::io::BufReader::new(file), &path.display().to_string())?;
    filter_communities(groups, dups, min_group_size, min_user_memberships)
}
