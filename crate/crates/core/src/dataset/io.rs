//! On-disk split format: `catalog.json` (ids and titles), `split.jsonl`
//! (one record per user with holdouts and prompt window) and `train.coo`
//! (`user item` per line).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Catalog, CatalogItem, DatasetError, ExternalId, SplitDataset, UserSplit};

pub const SPLIT_FILES: [&str; 3] = ["catalog.json", "split.jsonl", "train.coo"];

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    users: Vec<ExternalId>,
    items: Vec<CatalogItem>,
}

#[derive(Serialize, Deserialize)]
struct UserRecord {
    user: usize,
    id: ExternalId,
    #[serde(flatten)]
    split: UserSplit,
    window: Vec<usize>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_split(dir: &Path, split: &SplitDataset) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let catalog = CatalogFile {
        users: split.catalog.users().to_vec(),
        items: split.catalog.items().to_vec(),
    };
    let path = dir.join(SPLIT_FILES[0]);
    let text = serde_json::to_string_pretty(&catalog).map_err(|e| DatasetError::Artifact(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;

    let mut lines = String::new();
    for (u, s) in split.users.iter().enumerate() {
        let rec = UserRecord {
            user: u,
            id: split.catalog.user_id(u).clone(),
            split: s.clone(),
            window: split.prompt_window(u).to_vec(),
        };
        lines.push_str(&serde_json::to_string(&rec).map_err(|e| DatasetError::Artifact(e.to_string()))?);
        lines.push('\n');
    }
    let path = dir.join(SPLIT_FILES[1]);
    fs::write(&path, lines).map_err(io_err(&path))?;

    let mut coo = String::new();
    for (u, i) in split.train_coo() {
        writeln!(coo, "{u} {i}").unwrap();
    }
    let path = dir.join(SPLIT_FILES[2]);
    fs::write(&path, coo).map_err(io_err(&path))?;
    Ok(())
}

pub fn read_split(dir: &Path) -> Result<SplitDataset, DatasetError> {
    let path = dir.join(SPLIT_FILES[0]);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let catalog: CatalogFile = serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let catalog = Catalog::new(catalog.users, catalog.items);

    let path = dir.join(SPLIT_FILES[1]);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut users = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: UserRecord = serde_json::from_str(line).map_err(|e| DatasetError::Parse {
            path: path.clone(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if rec.user != users.len() {
            return Err(DatasetError::Artifact(format!(
                "split records out of order at line {}",
                n + 1
            )));
        }
        let s = &rec.split;
        let n_items = catalog.n_items();
        if s.history.len() != s.ratings.len()
            || s.history.iter().chain([&s.val2, &s.val, &s.test]).any(|&i| i >= n_items)
        {
            return Err(DatasetError::Artifact(format!("inconsistent user record at line {}", n + 1)));
        }
        users.push(rec.split);
    }
    SplitDataset::new(catalog, users)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{temporal_split, Interaction};

    #[test]
    fn round_trip_is_byte_stable() {
        let mut xs = Vec::new();
        for u in 0..3u64 {
            for t in 0..(5 + u) {
                xs.push(Interaction {
                    user: ExternalId::new(format!("u{u}")),
                    item: ExternalId::new(format!("{}", (t * 7 + u) % 11)),
                    rating: (1 + t % 5) as u8,
                    timestamp: t,
                });
            }
        }
        let split = temporal_split(&xs, None).unwrap();
        let a = tempfile::tempdir().unwrap();
        write_split(a.path(), &split).unwrap();
        let back = read_split(a.path()).unwrap();
        assert_eq!(back, split);

        let b = tempfile::tempdir().unwrap();
        write_split(b.path(), &back).unwrap();
        for f in SPLIT_FILES {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap());
        }
    }
}
