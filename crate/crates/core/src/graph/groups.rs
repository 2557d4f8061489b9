use crate::error::fsx;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LabelVocabulary;
use crate::{Error, Result};

/// One annotator's list of differential-diagnosis groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifferentialGroups {
    pub annotator_id: String,
    pub groups: Vec<(i64, BTreeSet<String>)>,
}

#[derive(Serialize, Deserialize)]
struct GroupRecord {
    group_id: i64,
    members: Vec<String>,
}

impl DifferentialGroups {
    /// Rejects groups with fewer than two distinct members.
    pub fn new(
        annotator_id: impl Into<String>,
        groups: Vec<(i64, BTreeSet<String>)>,
    ) -> Result<Self> {
        let annotator_id = annotator_id.into();
        for (id, members) in &groups {
            if members.len() < 2 {
                return Err(Error::InvalidParameter(format!(
                    "annotator `{annotator_id}` group {id} has {} member(s); at least 2 required",
                    members.len()
                )));
            }
        }
        Ok(Self {
            annotator_id,
            groups,
        })
    }

    pub fn validate(&self, vocab: &LabelVocabulary) -> Result<()> {
        for (_, members) in &self.groups {
            for m in members {
                vocab.require(m)?;
            }
        }
        Ok(())
    }

    /// Member index lists, one per group.
    pub fn resolve(&self, vocab: &LabelVocabulary) -> Result<Vec<Vec<usize>>> {
        self.groups
            .iter()
            .map(|(_, members)| members.iter().map(|m| vocab.require(m)).collect())
            .collect()
    }
}

/// Parses a groups file: a JSON object mapping annotator id to a list of
/// `{"group_id": int, "members": [label, ...]}` records.
pub fn parse_groups(text: &str) -> Result<BTreeMap<String, DifferentialGroups>> {
    let raw: BTreeMap<String, Vec<GroupRecord>> = serde_json::from_str(text)?;
    if raw.is_empty() {
        return Err(Error::Empty("groups file lists no annotators".into()));
    }
    raw.into_iter()
        .map(|(annotator, records)| {
            let groups = records
                .into_iter()
                .map(|r| (r.group_id, r.members.into_iter().collect()))
                .collect();
            Ok((
                annotator.clone(),
                DifferentialGroups::new(annotator, groups)?,
            ))
        })
        .collect()
}

pub fn load_groups(path: impl AsRef<Path>) -> Result<BTreeMap<String, DifferentialGroups>> {
    parse_groups(&fsx::read_to_string(path)?)
}

pub fn save_groups<'a>(
    annotators: impl IntoIterator<Item = &'a DifferentialGroups>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let map: BTreeMap<&str, Vec<GroupRecord>> = annotators
        .into_iter()
        .map(|a| {
            let records = a
                .groups
                .iter()
                .map(|(id, m)| GroupRecord {
                    group_id: *id,
                    members: m.iter().cloned().collect(),
                })
                .collect();
            (a.annotator_id.as_str(), records)
        })
        .collect();
    fsx::write(path, serde_json::to_string_pretty(&map)?)?;
    Ok(())
}
