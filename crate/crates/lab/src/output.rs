//! Artifacts of a run: `summary.json`, CSV tables with `#` metadata lines,
//! and `run.log`.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::{Map, Value};

/// Name and version of the PRNG behind every seeded profile.
pub const PRNG: &str = "chacha8/rand_chacha-0.3";
pub const CORE_VERSION: &str = "scatter-core 0.1.0";
pub const LAB_VERSION: &str = concat!("scatter-lab ", env!("CARGO_PKG_VERSION"));

/// Output directory of one run plus the metadata stamped on every file.
#[derive(Debug)]
pub struct RunDir {
    dir: PathBuf,
    recipe: String,
    hash: String,
    seed: u64,
    log: Mutex<File>,
}

impl RunDir {
    pub fn create(dir: &Path, recipe: &str, hash: &str, seed: u64) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let log = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(dir.join("run.log"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            recipe: recipe.to_string(),
            hash: hash.to_string(),
            seed,
            log: Mutex::new(log),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// One line in `run.log`, echoed to stderr.
    pub fn log(&self, line: &str) {
        eprintln!("[{}] {line}", self.recipe);
        if let Ok(mut f) = self.log.lock() {
            let _ = writeln!(f, "{line}");
        }
    }

    fn metadata(&self) -> Vec<(&'static str, String)> {
        vec![
            ("recipe", self.recipe.clone()),
            ("config_sha256", self.hash.clone()),
            ("seed", self.seed.to_string()),
            ("prng", PRNG.to_string()),
            ("versions", format!("{CORE_VERSION}; {LAB_VERSION}")),
        ]
    }

    /// Writes `<name>.csv`. Values use Rust's shortest round-trip formatting,
    /// so re-parsing reproduces them exactly.
    pub fn write_table(
        &self,
        name: &str,
        columns: &[&str],
        rows: &[Vec<f64>],
    ) -> io::Result<PathBuf> {
        let path = self.dir.join(format!("{name}.csv"));
        let mut file = File::create(&path)?;
        for (k, v) in self.metadata() {
            writeln!(file, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        w.write_record(columns)?;
        for row in rows {
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_summary(&self, body: Map<String, Value>) -> io::Result<PathBuf> {
        let mut doc = Map::new();
        for (k, v) in self.metadata() {
            doc.insert(k.to_string(), Value::String(v));
        }
        doc.extend(body);
        let path = self.dir.join("summary.json");
        let text = serde_json::to_string_pretty(&Value::Object(doc)).map_err(io::Error::other)?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

/// A parsed table: metadata lines, column names and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> io::Result<Table> {
    let mut metadata = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let Some(rest) = line.strip_prefix("# ") else {
            break;
        };
        if let Some((k, v)) = rest.split_once(": ") {
            metadata.push((k.to_string(), v.to_string()));
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let columns = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
            })
            .collect::<io::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table {
        metadata,
        columns,
        rows,
    })
}
