//! Dataset files.
//!
//! A dataset directory holds `interactions.csv` (`user_id,item_id,label,split`),
//! `items.csv` (`item_id,tag_0,...,tag_{K-1}`) and optionally `users.json`.
//! Without `users.json`, user features are the mean tag vector of each
//! user's clicked train items, and no hidden preferences are known.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use trackrec_core::env::history_features;
use trackrec_core::{Dataset, Interaction, ItemProfile, Label, Split, UserProfile};

use crate::error::{CliError, Result};

pub const INTERACTIONS_FILE: &str = "interactions.csv";
pub const ITEMS_FILE: &str = "items.csv";
pub const USERS_FILE: &str = "users.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserRecord {
    pub user_id: u32,
    pub features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent: Option<Vec<f64>>,
    #[serde(default)]
    pub history: Vec<u32>,
}

impl From<&UserProfile> for UserRecord {
    fn from(u: &UserProfile) -> Self {
        UserRecord { user_id: u.user_id, features: u.features.clone(), latent: u.latent.clone(), history: u.history.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub num_tags: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: path.to_path_buf(), source },
        kind => CliError::Parse { path: path.to_path_buf(), line, msg: format!("{kind:?}") },
    }
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("{name}: cannot parse {raw:?}"),
    })
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(CliError::io(path))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

/// Reads `items.csv`; the tag count is the number of `tag_*` columns.
pub fn read_items(path: &Path) -> Result<(usize, Vec<ItemProfile>)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let k = headers.len().saturating_sub(1);
    let expected: Vec<String> =
        std::iter::once("item_id".to_string()).chain((0..k).map(|t| format!("tag_{t}"))).collect();
    if k == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "header must be item_id,tag_0,...,tag_{K-1}".into(),
        });
    }
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let id: u32 = parse_field(path, line, "item_id", &rec[0])?;
        if id as usize != items.len() {
            return Err(CliError::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("item ids must be 0,1,2,... in order; expected {} got {id}", items.len()),
            });
        }
        let features = (1..=k)
            .map(|c| parse_field::<f64>(path, line, &headers[c], &rec[c]))
            .collect::<Result<Vec<f64>>>()?;
        items.push(ItemProfile { item_id: id, affinity: None, features });
    }
    Ok((k, items))
}

/// Reads `interactions.csv`, checking items against `n_items`.
pub fn read_interactions(path: &Path, n_items: usize) -> Result<Vec<Interaction>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().ne(["user_id", "item_id", "label", "split"]) {
        return Err(CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "header must be user_id,item_id,label,split".into(),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let user_id: u32 = parse_field(path, line, "user_id", &rec[0])?;
        let item_id: u32 = parse_field(path, line, "item_id", &rec[1])?;
        let label = match rec[2].trim() {
            "0" => Label::No,
            "1" => Label::Yes,
            other => {
                return Err(CliError::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("label must be 0 or 1, got {other:?}"),
                })
            }
        };
        let split = Split::parse(rec[3].trim()).ok_or_else(|| CliError::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("split must be train, valid or test, got {:?}", &rec[3]),
        })?;
        if item_id as usize >= n_items {
            return Err(CliError::Referential { path: path.to_path_buf(), line, msg: format!("unknown item {item_id}") });
        }
        out.push(Interaction { user_id, item_id, label, split });
    }
    Ok(out)
}

/// Loads a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let (k, items) = read_items(&dir.join(ITEMS_FILE))?;
    let interactions = read_interactions(&dir.join(INTERACTIONS_FILE), items.len())?;
    let users_path = dir.join(USERS_FILE);
    let users = if users_path.exists() {
        let text = fs::read_to_string(&users_path).map_err(CliError::io(&users_path))?;
        let records: Vec<UserRecord> = serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: users_path.clone(),
            line: e.line() as u64,
            msg: e.to_string(),
        })?;
        records
            .into_iter()
            .map(|r| UserProfile { user_id: r.user_id, latent: r.latent, features: r.features, history: r.history })
            .collect()
    } else {
        derive_users(k, &items, &interactions)
    };
    if let Some(x) = interactions.iter().find(|x| x.user_id as usize >= users.len()) {
        return Err(CliError::Core(trackrec_core::Error::Referential(format!(
            "user {} has no entry in {}",
            x.user_id,
            users_path.display()
        ))));
    }
    Ok(Dataset::new(k, users, items, interactions)?)
}

/// Users `0..=max id` with features from clicked train items, noise-free.
fn derive_users(k: usize, items: &[ItemProfile], interactions: &[Interaction]) -> Vec<UserProfile> {
    let n = interactions.iter().map(|x| x.user_id as usize + 1).max().unwrap_or(0);
    let mut history: Vec<Vec<u32>> = vec![Vec::new(); n];
    for x in interactions.iter().filter(|x| x.split == Split::Train && x.label.is_yes()) {
        history[x.user_id as usize].push(x.item_id);
    }
    // Noise is zero, so the generator is never drawn from.
    let mut unused = trackrec_core::SeedStream::new(trackrec_core::RngSeed(0)).rng();
    history
        .into_iter()
        .enumerate()
        .map(|(u, h)| {
            let clicked: Vec<&[f64]> = h.iter().map(|&i| items[i as usize].features.as_slice()).collect();
            let features = history_features(k, &clicked, 0.0, &mut unused);
            UserProfile { user_id: u as u32, latent: None, features, history: h }
        })
        .collect()
}

/// Writes the three dataset files plus a manifest. Output is byte-stable.
pub fn write_dataset(dir: &Path, data: &Dataset, seed: u64) -> Result<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;

    let path = dir.join(INTERACTIONS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    w.write_record(["user_id", "item_id", "label", "split"]).map_err(|e| csv_err(&path, e))?;
    for x in &data.interactions {
        let label = if x.label.is_yes() { "1" } else { "0" };
        w.write_record([&x.user_id.to_string(), &x.item_id.to_string(), label, x.split.as_str()])
            .map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(CliError::io(&path))?;

    let path = dir.join(ITEMS_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
    let header: Vec<String> =
        std::iter::once("item_id".to_string()).chain((0..data.num_tags).map(|t| format!("tag_{t}"))).collect();
    w.write_record(&header).map_err(|e| csv_err(&path, e))?;
    for it in &data.items {
        let row: Vec<String> =
            std::iter::once(it.item_id.to_string()).chain(it.features.iter().map(|v| v.to_string())).collect();
        w.write_record(&row).map_err(|e| csv_err(&path, e))?;
    }
    w.flush().map_err(CliError::io(&path))?;

    let users: Vec<UserRecord> = data.users.iter().map(UserRecord::from).collect();
    write_json(&dir.join(USERS_FILE), &users)?;
    let manifest = Manifest {
        seed,
        num_tags: data.num_tags,
        n_users: data.users.len(),
        n_items: data.items.len(),
        n_interactions: data.interactions.len(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text).map_err(CliError::io(path))
}
