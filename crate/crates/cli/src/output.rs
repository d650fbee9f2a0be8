use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// A named CSV table; `NaN` cells are written empty.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Table {
            file: file.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                // Both forms are locale-free and round-trip.
                if v.is_nan() {
                } else if *v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
                    write!(s, "{v}").unwrap();
                } else {
                    write!(s, "{v:e}").unwrap();
                }
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub file: String,
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<(String, Vec<(f64, f64)>)>,
}

impl Plot {
    pub fn new(file: &str, title: &str, x_label: &str, y_label: &str) -> Self {
        Plot {
            file: file.to_string(),
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            log_y: false,
            series: Vec::new(),
        }
    }

    pub fn log(mut self) -> Self {
        self.log_y = true;
        self
    }

    pub fn with(mut self, name: &str, pts: Vec<(f64, f64)>) -> Self {
        let pts = pts
            .into_iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
            .collect();
        self.series.push((name.to_string(), pts));
        self
    }

    fn bounds(&self) -> Option<((f64, f64), (f64, f64))> {
        let pts = self.series.iter().flat_map(|s| s.1.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return None;
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        if self.log_y {
            y1 = y1.max(y0 * 10.0);
        } else {
            let pad = 0.05 * (y1 - y0).max(1e-12);
            y0 -= pad;
            y1 += pad;
        }
        Some(((x0, x1), (y0, y1)))
    }

    pub fn render(&self, path: &Path) -> Result<(), String> {
        let ((x0, x1), (y0, y1)) = self.bounds().ok_or("no finite points")?;
        let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(|e| e.to_string())?;
        let mut builder = ChartBuilder::on(&root);
        builder
            .caption(&self.title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70);
        let colors = [BLUE, RED, GREEN, MAGENTA, CYAN, BLACK];
        macro_rules! draw {
            ($chart:expr) => {{
                let mut chart = $chart;
                chart
                    .configure_mesh()
                    .x_desc(self.x_label.as_str())
                    .y_desc(self.y_label.as_str())
                    .draw()
                    .map_err(|e| e.to_string())?;
                for (i, (name, pts)) in self.series.iter().enumerate() {
                    let color = colors[i % colors.len()];
                    chart
                        .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(2)))
                        .map_err(|e| e.to_string())?
                        .label(name.as_str())
                        .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color));
                }
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.8))
                    .border_style(BLACK)
                    .draw()
                    .map_err(|e| e.to_string())?;
            }};
        }
        if self.log_y {
            draw!(builder
                .build_cartesian_2d(x0..x1, (y0..y1).log_scale())
                .map_err(|e| e.to_string())?);
        } else {
            draw!(builder
                .build_cartesian_2d(x0..x1, y0..y1)
                .map_err(|e| e.to_string())?);
        }
        root.present().map_err(|e| e.to_string())
    }
}

/// Everything an experiment produces.
#[derive(Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    /// Pre-rendered CSV text, for reports that format themselves.
    pub raw_csv: Vec<(String, String)>,
    pub summary: BTreeMap<String, f64>,
    pub plots: Vec<Plot>,
    /// Failed check, with the inequality and where it failed.
    pub failure: Option<String>,
    /// Files written by nested runs, relative to the output directory.
    pub nested: Vec<FileEntry>,
}

impl Outcome {
    pub fn put(&mut self, key: &str, value: f64) {
        // JSON has no NaN or infinity.
        if value.is_finite() {
            self.summary.insert(key.to_string(), value);
        }
    }

    pub fn flag(&mut self, key: &str, value: bool) {
        self.put(key, if value { 1.0 } else { 0.0 });
    }

    /// Record a check; the first failure wins.
    pub fn require(&mut self, ok: bool, message: impl FnOnce() -> String) {
        if !ok && self.failure.is_none() {
            self.failure = Some(message());
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

fn entry(dir: &Path, rel: &str) -> Result<FileEntry, CliError> {
    let data = fs::read(dir.join(rel))?;
    Ok(FileEntry {
        path: rel.to_string(),
        sha256: hex::encode(Sha256::digest(&data)),
        bytes: data.len() as u64,
    })
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Write tables, summary and plots; returns the manifest entries.
/// Plots are best-effort: a rendering failure is reported and skipped.
pub fn write_outcome(
    dir: &Path,
    outcome: &Outcome,
    quiet: bool,
) -> Result<Vec<FileEntry>, CliError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for t in &outcome.tables {
        fs::write(dir.join(&t.file), t.to_csv())?;
        written.push(t.file.clone());
    }
    for (file, text) in &outcome.raw_csv {
        fs::write(dir.join(file), text)?;
        written.push(file.clone());
    }
    let json = serde_json::to_string_pretty(&outcome.summary).expect("map of finite numbers");
    fs::write(dir.join("summary.json"), json + "\n")?;
    written.push("summary.json".into());
    for p in &outcome.plots {
        match p.render(&dir.join(&p.file)) {
            Ok(()) => written.push(p.file.clone()),
            Err(e) => {
                let _ = fs::remove_file(dir.join(&p.file));
                if !quiet {
                    eprintln!("warning: plot {} skipped: {e}", p.file);
                }
            }
        }
    }
    let mut entries = written
        .iter()
        .map(|f| entry(dir, f))
        .collect::<Result<Vec<_>, _>>()?;
    entries.extend(outcome.nested.iter().cloned());
    Ok(entries)
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config_path: PathBuf,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub parallel: bool,
    pub wall_time_s: f64,
    pub exit_code: u8,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), json + "\n")?;
        Ok(())
    }
}

pub fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        (
            "frontlab-cli".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
        (
            "frontlab-core".to_string(),
            frontlab_core::VERSION.to_string(),
        ),
    ])
}
