use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::InfluenceMap;

use super::config::ExperimentConfig;
use super::data::DatasetSplit;
use super::pipeline::{sort_scores, DistortionRow, EvalSummary, InfluenceRow, ScoreRow, ScoreVariant};

pub const CONFIG_FILE: &str = "config.json";
pub const DATASET_FILE: &str = "dataset.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const DISTORTION_FILE: &str = "distortion.csv";
pub const INFLUENCE_FILE: &str = "influence.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report_table.csv";
pub const QUARTILE_CURVES: &str = "quartile_curves.csv";
pub const PLOT_DIR: &str = "plots";
pub const CORRELATION_FILE: &str = "correlation.csv";
pub const LATENTS_FILE: &str = "checkpoints/latents.json";
pub const LOG_FILE: &str = "run.log";

/// Run directory with a config snapshot; every artifact records its hash.
#[derive(Debug, Clone)]
pub struct ResultStore {
    root: PathBuf,
    config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    config_hash: String,
    split: DatasetSplit,
}

fn format_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format {
        offset: 0,
        message: format!("{}: {e}", path.display()),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    Error::Format {
        offset,
        message: format!("{}: {e}", path.display()),
    }
}

fn parse<T: std::str::FromStr>(path: &Path, field: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| format_err(path, format!("bad {field} value `{value}`")))
}

impl ResultStore {
    /// Creates the run directory and writes the config snapshot.
    ///
    /// An existing snapshot must describe the same config.
    pub fn create(cfg: &ExperimentConfig) -> Result<Self> {
        let root = cfg.output_dir.clone();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let store = Self {
            root,
            config_hash: cfg.hash(),
        };
        let path = store.path(CONFIG_FILE);
        if path.exists() {
            let existing = ExperimentConfig::load(&path)?;
            if existing.hash() != store.config_hash {
                return Err(Error::Config(format!(
                    "{} already holds a run with config {}; use a fresh output_dir",
                    store.root.display(),
                    existing.hash()
                )));
            }
        } else {
            store.write_text(CONFIG_FILE, &cfg.to_json())?;
        }
        Ok(store)
    }

    pub fn open(root: &Path) -> Result<(Self, ExperimentConfig)> {
        let path = root.join(CONFIG_FILE);
        if !path.exists() {
            return Err(Error::IncompleteRun {
                missing: vec![path.display().to_string()],
            });
        }
        let cfg = ExperimentConfig::load(&path)?;
        Ok((
            Self {
                root: root.to_path_buf(),
                config_hash: cfg.hash(),
            },
            cfg,
        ))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.path(CHECKPOINT_DIR)
    }

    /// Fails with the list of absent artifacts.
    pub fn require(&self, names: &[&str]) -> Result<()> {
        let missing: Vec<String> = names
            .iter()
            .map(|n| self.path(n))
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::IncompleteRun { missing })
        }
    }

    pub fn log(&self, message: &str) -> Result<()> {
        let path = self.path(LOG_FILE);
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "[{}] {message}", &self.config_hash[..12]).map_err(|e| Error::io(&path, e))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    fn read_text(&self, name: &str) -> Result<String> {
        self.require(&[name])?;
        let path = self.path(name);
        fs::read_to_string(&path).map_err(|e| Error::io(&path, e))
    }

    fn check_hash(&self, name: &str, hash: &str) -> Result<()> {
        if hash != self.config_hash {
            return Err(format_err(
                &self.path(name),
                format!("artifact was written under config {hash}, run uses {}", self.config_hash),
            ));
        }
        Ok(())
    }

    pub fn write_dataset(&self, split: &DatasetSplit) -> Result<()> {
        let file = DatasetFile {
            config_hash: self.config_hash.clone(),
            split: split.clone(),
        };
        self.write_text(DATASET_FILE, &serde_json::to_string(&file)?)
    }

    pub fn read_dataset(&self) -> Result<DatasetSplit> {
        let text = self.read_text(DATASET_FILE)?;
        let file: DatasetFile = serde_json::from_str(&text).map_err(|e| format_err(&self.path(DATASET_FILE), e))?;
        self.check_hash(DATASET_FILE, &file.config_hash)?;
        Ok(file.split)
    }

    fn write_csv(&self, name: &str, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        w.write_record(header).map_err(|e| csv_err(&path, e))?;
        for row in rows {
            w.write_record(&row).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    /// Records with the config-hash column checked and stripped.
    fn read_csv(&self, name: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
        self.require(&[name])?;
        let path = self.path(name);
        let mut r = csv::Reader::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let header: Vec<String> = r.headers().map_err(|e| csv_err(&path, e))?.iter().map(String::from).collect();
        if header.first().map(String::as_str) != Some("config_hash") {
            return Err(format_err(&path, "first column must be config_hash"));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(&path, e))?;
            self.check_hash(name, &rec[0])?;
            rows.push(rec.iter().skip(1).map(String::from).collect());
        }
        Ok((header[1..].to_vec(), rows))
    }

    pub fn write_distortion(&self, rows: &[DistortionRow]) -> Result<()> {
        let k = rows.iter().map(|r| r.singular_values.len()).max().unwrap_or(0);
        let mut header: Vec<String> = ["config_hash", "sample_id", "member", "s_k", "k"].map(String::from).to_vec();
        header.extend((1..=k).map(|i| format!("sigma_{i}")));
        let hash = self.config_hash.clone();
        self.write_csv(
            DISTORTION_FILE,
            &header,
            rows.iter().map(|r| {
                let mut rec = vec![
                    hash.clone(),
                    r.sample_id.to_string(),
                    r.member.to_string(),
                    r.log_volume.to_string(),
                    r.rank.to_string(),
                ];
                rec.extend(r.singular_values.iter().map(|s| s.to_string()));
                rec.resize(header.len(), String::new());
                rec
            }),
        )
    }

    pub fn read_distortion(&self) -> Result<Vec<DistortionRow>> {
        let path = self.path(DISTORTION_FILE);
        let (_, rows) = self.read_csv(DISTORTION_FILE)?;
        rows.iter()
            .map(|r| {
                if r.len() < 4 {
                    return Err(format_err(&path, "short distortion row"));
                }
                let rank: usize = parse(&path, "k", &r[3])?;
                Ok(DistortionRow {
                    sample_id: parse(&path, "sample_id", &r[0])?,
                    member: parse(&path, "member", &r[1])?,
                    log_volume: parse(&path, "s_k", &r[2])?,
                    rank,
                    singular_values: r[4..4 + rank.min(r.len() - 4)]
                        .iter()
                        .map(|v| parse(&path, "sigma", v))
                        .collect::<Result<_>>()?,
                })
            })
            .collect()
    }

    pub fn write_influence(&self, rows: &[InfluenceRow]) -> Result<()> {
        let d = rows.first().map_or(0, |r| r.map.dim());
        let mut header: Vec<String> = ["config_hash", "sample_id", "member"].map(String::from).to_vec();
        header.extend((0..d).map(|i| format!("infl_{i}")));
        let hash = self.config_hash.clone();
        self.write_csv(
            INFLUENCE_FILE,
            &header,
            rows.iter().map(|r| {
                let mut rec = vec![hash.clone(), r.map.sample_id.to_string(), r.member.to_string()];
                rec.extend(r.map.values.iter().map(|v| v.to_string()));
                rec
            }),
        )
    }

    pub fn read_influence(&self) -> Result<Vec<InfluenceRow>> {
        let path = self.path(INFLUENCE_FILE);
        let (_, rows) = self.read_csv(INFLUENCE_FILE)?;
        rows.iter()
            .map(|r| {
                if r.len() < 2 {
                    return Err(format_err(&path, "short influence row"));
                }
                Ok(InfluenceRow {
                    member: parse(&path, "member", &r[1])?,
                    map: InfluenceMap {
                        sample_id: parse(&path, "sample_id", &r[0])?,
                        values: r[2..].iter().map(|v| parse(&path, "influence", v)).collect::<Result<_>>()?,
                    },
                })
            })
            .collect()
    }

    pub fn write_scores(&self, rows: &[ScoreRow]) -> Result<()> {
        let header = [
            "config_hash",
            "sample_id",
            "member",
            "method",
            "t",
            "norm_order",
            "masked",
            "variant",
            "keep_fraction",
            "score",
        ]
        .map(String::from);
        let hash = self.config_hash.clone();
        self.write_csv(
            SCORES_FILE,
            &header,
            rows.iter().map(|r| {
                vec![
                    hash.clone(),
                    r.sample_id.to_string(),
                    r.member.to_string(),
                    r.method.to_string(),
                    r.t.to_string(),
                    r.norm_order.to_string(),
                    r.variant.masked().to_string(),
                    r.variant.to_string(),
                    r.keep_fraction.to_string(),
                    r.score.to_string(),
                ]
            }),
        )
    }

    pub fn read_scores(&self) -> Result<Vec<ScoreRow>> {
        let path = self.path(SCORES_FILE);
        let (_, rows) = self.read_csv(SCORES_FILE)?;
        let mut out = rows
            .iter()
            .map(|r| {
                if r.len() != 9 {
                    return Err(format_err(&path, format!("score row has {} fields, expected 10", r.len() + 1)));
                }
                let variant: ScoreVariant = r[6].parse()?;
                Ok(ScoreRow {
                    sample_id: parse(&path, "sample_id", &r[0])?,
                    member: parse(&path, "member", &r[1])?,
                    method: r[2].parse()?,
                    t: parse(&path, "t", &r[3])?,
                    norm_order: parse(&path, "norm_order", &r[4])?,
                    variant,
                    keep_fraction: parse(&path, "keep_fraction", &r[7])?,
                    score: parse(&path, "score", &r[8])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sort_scores(&mut out);
        Ok(out)
    }

    pub fn write_summary(&self, summary: &EvalSummary) -> Result<()> {
        self.write_text(REPORT_JSON, &serde_json::to_string_pretty(summary)?)
    }

    pub fn read_summary(&self) -> Result<EvalSummary> {
        let text = self.read_text(REPORT_JSON)?;
        let s: EvalSummary = serde_json::from_str(&text).map_err(|e| format_err(&self.path(REPORT_JSON), e))?;
        self.check_hash(REPORT_JSON, &s.config_hash)?;
        Ok(s)
    }
}
