use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{DatasetError, ExternalId, Interaction, InteractionFormat, TitleMap};

/// Bytes that are not valid UTF-8 are read as latin-1 (MovieLens titles).
fn decode(bytes: &[u8]) -> String {
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        Err(_) => bytes.iter().map(|&b| b as char).collect(),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn normalize_title(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

struct Row {
    line: usize,
    user: String,
    item: String,
    rating: Option<String>,
    timestamp: String,
}

fn parse_row(path: &Path, row: Row) -> Result<Option<Interaction>, DatasetError> {
    let err = |message: String| DatasetError::Parse {
        path: path.to_path_buf(),
        line: row.line,
        message,
    };
    let user = row.user.trim();
    let item = row.item.trim();
    if user.is_empty() || item.is_empty() {
        return Err(err("empty user or item id".into()));
    }
    // Unary feedback (no rating column) maps to rating 1.
    let rating = match row.rating.as_deref().map(str::trim) {
        None | Some("") => 1,
        Some(r) => {
            let v: f64 = r.parse().map_err(|_| err(format!("bad rating `{r}`")))?;
            if v.fract() != 0.0 || !(0.0..=5.0).contains(&v) {
                return Err(err(format!("rating `{r}` outside 0..=5")));
            }
            v as u8
        }
    };
    // Binarization keeps ratings > 0.
    if rating == 0 {
        return Ok(None);
    }
    let ts = row.timestamp.trim();
    let timestamp: u64 = match ts.parse::<u64>() {
        Ok(t) => t,
        Err(_) => {
            let f: f64 = ts.parse().map_err(|_| err(format!("bad timestamp `{ts}`")))?;
            if !(f >= 0.0 && f.is_finite()) {
                return Err(err(format!("negative or non-finite timestamp `{ts}`")));
            }
            f as u64
        }
    };
    Ok(Some(Interaction {
        user: ExternalId::new(user),
        item: ExternalId::new(item),
        rating,
        timestamp,
    }))
}

fn column(headers: &[String], names: &[&str]) -> Option<usize> {
    headers
        .iter()
        .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
}

fn delimited_rows(
    path: &Path,
    bytes: &[u8],
    delimiter: u8,
    required: &[(&str, &[&str])],
) -> Result<(Vec<Option<usize>>, Vec<(usize, Vec<String>)>), DatasetError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .from_reader(bytes);
    let headers: Vec<String> = reader
        .byte_headers()
        .map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(|h| decode(h).trim().to_string())
        .collect();
    let cols: Vec<Option<usize>> = required.iter().map(|(_, names)| column(&headers, names)).collect();
    let mut rows = Vec::new();
    for record in reader.byte_records() {
        let record = record.map_err(|e| DatasetError::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        rows.push((line, record.iter().map(decode).collect()));
    }
    Ok((cols, rows))
}

/// Reads every row of an interaction log. Duplicate (user, item) pairs keep
/// the event with the latest timestamp (the later row on equal timestamps);
/// the result keeps the order in which pairs first appear.
pub fn load_interactions(path: &Path, format: InteractionFormat) -> Result<Vec<Interaction>, DatasetError> {
    let bytes = read_bytes(path)?;
    let mut rows = Vec::new();
    match format {
        InteractionFormat::MovielensDat => {
            for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
                let text = decode(raw);
                let text = text.trim_end_matches('\r');
                if text.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = text.split("::").collect();
                if fields.len() != 4 {
                    return Err(DatasetError::Parse {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("expected user::item::rating::timestamp, got {} fields", fields.len()),
                    });
                }
                rows.push(Row {
                    line: i + 1,
                    user: fields[0].into(),
                    item: fields[1].into(),
                    rating: Some(fields[2].into()),
                    timestamp: fields[3].into(),
                });
            }
        }
        InteractionFormat::Csv | InteractionFormat::Tsv => {
            if bytes.iter().all(u8::is_ascii_whitespace) {
                return Ok(Vec::new());
            }
            let delimiter = if format == InteractionFormat::Csv { b',' } else { b'\t' };
            let spec: [(&str, &[&str]); 4] = [
                ("user", &["user", "user_id", "userid"]),
                ("item", &["item", "item_id", "itemid", "business_id", "asin"]),
                ("rating", &["rating", "stars", "overall"]),
                ("timestamp", &["timestamp", "time", "unix_time", "ts"]),
            ];
            let (cols, records) = delimited_rows(path, &bytes, delimiter, &spec)?;
            for (name, idx) in [("user", cols[0]), ("item", cols[1]), ("timestamp", cols[3])] {
                if idx.is_none() {
                    return Err(DatasetError::Parse {
                        path: path.to_path_buf(),
                        line: 1,
                        message: format!("header has no `{name}` column"),
                    });
                }
            }
            for (line, fields) in records {
                let get = |c: Option<usize>| c.and_then(|c| fields.get(c).cloned());
                let missing = || DatasetError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected at least {} fields", fields.len().max(3)),
                };
                rows.push(Row {
                    line,
                    user: get(cols[0]).ok_or_else(missing)?,
                    item: get(cols[1]).ok_or_else(missing)?,
                    rating: get(cols[2]),
                    timestamp: get(cols[3]).ok_or_else(missing)?,
                });
            }
        }
    }

    let mut out: Vec<Interaction> = Vec::with_capacity(rows.len());
    let mut seen: HashMap<(ExternalId, ExternalId), usize> = HashMap::new();
    for row in rows {
        let Some(inter) = parse_row(path, row)? else { continue };
        let key = (inter.user.clone(), inter.item.clone());
        match seen.get(&key) {
            Some(&pos) => {
                if inter.timestamp >= out[pos].timestamp {
                    out[pos] = inter;
                }
            }
            None => {
                seen.insert(key, out.len());
                out.push(inter);
            }
        }
    }
    Ok(out)
}

/// Reads an item-title sidecar: MovieLens `movies.dat` (`id::title::genres`)
/// or a CSV/TSV with `item` and `title` columns.
pub fn load_titles(path: &Path, format: InteractionFormat) -> Result<TitleMap, DatasetError> {
    let bytes = read_bytes(path)?;
    let mut titles = TitleMap::new();
    let mut insert = |line: usize, id: &str, title: &str| -> Result<(), DatasetError> {
        let title = normalize_title(title);
        if title.is_empty() {
            return Err(DatasetError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("empty title for item `{id}`"),
            });
        }
        titles.insert(ExternalId::new(id.trim()), title);
        Ok(())
    };
    match format {
        InteractionFormat::MovielensDat => {
            for (i, raw) in bytes.split(|&b| b == b'\n').enumerate() {
                let text = decode(raw);
                let text = text.trim_end_matches('\r');
                if text.trim().is_empty() {
                    continue;
                }
                let mut fields = text.splitn(3, "::");
                match (fields.next(), fields.next()) {
                    (Some(id), Some(title)) => insert(i + 1, id, title)?,
                    _ => {
                        return Err(DatasetError::Parse {
                            path: path.to_path_buf(),
                            line: i + 1,
                            message: "expected item::title[::genres]".into(),
                        })
                    }
                }
            }
        }
        InteractionFormat::Csv | InteractionFormat::Tsv => {
            let delimiter = if format == InteractionFormat::Csv { b',' } else { b'\t' };
            let spec: [(&str, &[&str]); 2] = [
                ("item", &["item", "item_id", "itemid", "business_id", "asin"]),
                ("title", &["title", "name"]),
            ];
            let (cols, records) = delimited_rows(path, &bytes, delimiter, &spec)?;
            let (Some(ic), Some(tc)) = (cols[0], cols[1]) else {
                return Err(DatasetError::Parse {
                    path: path.to_path_buf(),
                    line: 1,
                    message: "title header needs `item` and `title` columns".into(),
                });
            };
            for (line, fields) in records {
                match (fields.get(ic), fields.get(tc)) {
                    (Some(id), Some(title)) => insert(line, id, title)?,
                    _ => {
                        return Err(DatasetError::Parse {
                            path: path.to_path_buf(),
                            line,
                            message: "missing item or title field".into(),
                        })
                    }
                }
            }
        }
    }
    Ok(titles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents).unwrap();
        f
    }

    #[test]
    fn empty_file_is_empty_list() {
        let f = write(b"");
        assert!(load_interactions(f.path(), InteractionFormat::Csv).unwrap().is_empty());
        assert!(load_interactions(f.path(), InteractionFormat::MovielensDat).unwrap().is_empty());
    }

    #[test]
    fn csv_duplicate_keeps_latest() {
        let rows = [
            ("u1", "a", 5u8, 10u64),
            ("u1", "b", 3, 11),
            ("u2", "a", 4, 12),
            ("u1", "a", 2, 20),
            ("u2", "c", 1, 9),
        ];
        let mut text = String::from("user,item,rating,timestamp\n");
        for (u, i, r, t) in rows {
            text.push_str(&format!("{u},{i},{r},{t}\n"));
        }
        let f = write(text.as_bytes());
        let got = load_interactions(f.path(), InteractionFormat::Csv).unwrap();

        // brute force: for every distinct pair take the row with max timestamp
        let mut expected: Vec<(String, String, u8, u64)> = Vec::new();
        for (u, i, _, _) in rows {
            if expected.iter().any(|e| e.0 == u && e.1 == i) {
                continue;
            }
            let best = rows
                .iter()
                .filter(|r| r.0 == u && r.1 == i)
                .max_by_key(|r| r.3)
                .unwrap();
            expected.push((u.into(), i.into(), best.2, best.3));
        }
        assert_eq!(got.len(), 4);
        let got: Vec<(String, String, u8, u64)> = got
            .into_iter()
            .map(|x| (x.user.to_string(), x.item.to_string(), x.rating, x.timestamp))
            .collect();
        assert_eq!(got, expected);
        assert_eq!(got[0], ("u1".into(), "a".into(), 2, 20));
    }

    #[test]
    fn movielens_dat_and_latin1_titles() {
        let f = write(b"1::1193::5::978300760\n1::661::3::978302109\n");
        let got = load_interactions(f.path(), InteractionFormat::MovielensDat).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[1].item.as_str(), "661");
        assert_eq!(got[1].rating, 3);

        let t = write(b"1::Toy Story (1995)::Animation\n2::Caf\xe9  Society::Drama\n");
        let titles = load_titles(t.path(), InteractionFormat::MovielensDat).unwrap();
        assert_eq!(titles[&ExternalId::from("2")], "Caf\u{e9} Society");
    }

    #[test]
    fn malformed_row_reports_line() {
        let f = write(b"1::2::5::100\n1::3::five::101\n");
        match load_interactions(f.path(), InteractionFormat::MovielensDat) {
            Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
        let f = write(b"1::2::5\n");
        assert!(matches!(
            load_interactions(f.path(), InteractionFormat::MovielensDat),
            Err(DatasetError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn tsv_without_rating_is_unary() {
        let f = write(b"user\titem\ttimestamp\nx\ty\t5\n");
        let got = load_interactions(f.path(), InteractionFormat::Tsv).unwrap();
        assert_eq!(got[0].rating, 1);
    }

    #[test]
    fn csv_missing_timestamp_column() {
        let f = write(b"user,item,rating\n1,2,3\n");
        assert!(matches!(
            load_interactions(f.path(), InteractionFormat::Csv),
            Err(DatasetError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn csv_titles_reject_blank() {
        let f = write(b"item,title\n1,  Die   Hard \n");
        let titles = load_titles(f.path(), InteractionFormat::Csv).unwrap();
        assert_eq!(titles[&ExternalId::from("1")], "Die Hard");
        let f = write(b"item,title\n1,   \n");
        assert!(load_titles(f.path(), InteractionFormat::Csv).is_err());
    }
}
