//! Interaction logs: ingestion, k-core filtering, temporal leave-one-out
//! splitting, stratified user sampling and prompt windows.

mod io;
mod kcore;
mod load;
mod sample;
mod split;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_split, write_split, SPLIT_FILES};
pub use kcore::kcore_filter;
pub use load::{load_interactions, load_titles};
pub(crate) use sample::allocate;
pub use sample::stratified_sample;
pub use split::{temporal_split, Catalog, CatalogItem, DatasetStats, SplitDataset, UserSplit};

/// Item and user ids as they appear in the source files.
///
/// Ordering is numeric when both ids are integers and lexicographic
/// otherwise; integer ids sort before non-integer ones.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ExternalId(String);

impl ExternalId {
    pub fn new(id: impl Into<String>) -> Self {
        ExternalId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn numeric(&self) -> Option<u64> {
        self.0.parse().ok()
    }
}

impl Ord for ExternalId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.numeric(), other.numeric()) {
            (Some(a), Some(b)) => a.cmp(&b).then_with(|| self.0.cmp(&other.0)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for ExternalId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ExternalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ExternalId {
    fn from(s: &str) -> Self {
        ExternalId(s.to_string())
    }
}

/// One timestamped feedback event. The rating is kept for breakdown
/// reports only; the scorer sees binarized rows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: ExternalId,
    pub item: ExternalId,
    pub rating: u8,
    pub timestamp: u64,
}

/// Item id to display title.
pub type TitleMap = BTreeMap<ExternalId, String>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionFormat {
    /// `user::item::rating::timestamp`, titles as `item::title::genres`.
    MovielensDat,
    Csv,
    Tsv,
}

impl FromStr for InteractionFormat {
    type Err = DatasetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "movielens-dat" | "dat" => Ok(InteractionFormat::MovielensDat),
            "csv" => Ok(InteractionFormat::Csv),
            "tsv" => Ok(InteractionFormat::Tsv),
            other => Err(DatasetError::InvalidArgument(format!(
                "unknown interaction format `{other}` (expected movielens-dat, csv or tsv)"
            ))),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("no interactions left after {user_min}/{item_min}-core filtering")]
    EmptyAfterKcore { user_min: usize, item_min: usize },
    #[error(
        "{} user(s) have fewer than 4 interactions, leave-one-out needs 3 holdouts plus training data: {}",
        .users.len(),
        preview(.users)
    )]
    TooFewInteractions { users: Vec<ExternalId> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed split artifact: {0}")]
    Artifact(String),
}

fn preview(users: &[ExternalId]) -> String {
    let mut shown: Vec<String> = users.iter().take(10).map(|u| u.to_string()).collect();
    if users.len() > 10 {
        shown.push(format!("... (+{})", users.len() - 10));
    }
    shown.join(", ")
}
