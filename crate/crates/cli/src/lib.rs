//! Command implementations behind the `objmem` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use objmem::baselines::{decode_semantic_map, occupancy, semantic_map_ppm};
use objmem::embedding::{ClassEmbeddingTable, TableError};
use objmem::memories::MemoryVariant;
use objmem::memory::{snapshot_load, snapshot_save};
use objmem::pipeline::{run_in_world, sweep, MemoryPolicy, RunConfig, RunError, RunReport, SweepGrid, SweepPoint, World};
use objmem::simulator::{read_frame_pack, write_frame_pack, Scene};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

mod svg;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(_) | RunError::Simulation(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TableError> for CliError {
    fn from(e: TableError) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "objmem", version, about = "Implicit object memory experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a scene, its episodes and the class table.
    Generate(GenerateArgs),
    /// Run one memory variant and evaluate it.
    Run(RunArgs),
    /// Run a parameter grid and plot the curves.
    Sweep(SweepArgs),
    /// Render a memory snapshot as a semantic map image.
    ExportMap(ExportMapArgs),
}

/// Options shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON run configuration; unset fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// none, implicit-object, explicit-object or implicit-pixel.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub tau_s: Option<f64>,
    #[arg(long)]
    pub tau_o: Option<f64>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long, conflicts_with = "reset_per_episode")]
    pub persist_memory: bool,
    #[arg(long)]
    pub reset_per_episode: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl Overrides {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(v) = &self.variant {
            cfg.memory.variant = v.parse().map_err(CliError::Config)?;
        }
        if let Some(l) = self.lambda {
            cfg.memory.lambda = Some(l);
        }
        if let Some(t) = self.tau_s {
            cfg.memory.tau_s = t;
        }
        if let Some(t) = self.tau_o {
            cfg.memory.tau_o = t;
        }
        if let Some(s) = self.noise_scale {
            cfg.noise.scale = s;
        }
        if self.persist_memory {
            cfg.memory.policy = MemoryPolicy::Persist;
        }
        if self.reset_per_episode {
            cfg.memory.policy = MemoryPolicy::ResetPerEpisode;
        }
        cfg.validate().map_err(CliError::Config)?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Overrides,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Directory written by `generate`; the world is regenerated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Class table file replacing the seeded one.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Also write the final memory grid and class table.
    #[arg(long)]
    pub snapshot: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// JSON sweep grid; the list flags below add to it.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub tau_s_values: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub noise_scales: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub episode_counts: Vec<usize>,
    /// Sweep both memory policies.
    #[arg(long)]
    pub both_policies: bool,
}

#[derive(Debug, Args)]
pub struct ExportMapArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub snapshot: PathBuf,
    #[arg(long)]
    pub table: PathBuf,
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(&a.common.resolve()?, &a.common.out).map(drop),
        Command::Run(a) => {
            let cfg = a.common.resolve()?;
            let table = a.table.as_deref().map(load_table).transpose()?;
            let world = match &a.data {
                Some(dir) => load_world(&cfg, dir, table)?,
                None => World::build(&cfg, table)?,
            };
            cmd_run(&cfg, &world, &a.common.out, a.snapshot).map(drop)
        }
        Command::Sweep(a) => {
            let cfg = a.common.resolve()?;
            let grid = sweep_grid(a)?;
            cmd_sweep(&cfg, &grid, &a.common.out).map(drop)
        }
        Command::ExportMap(a) => {
            let cfg = a.common.resolve()?;
            cmd_export_map(&cfg, &a.snapshot, &a.table, &a.common.out)
        }
    }
}

fn sweep_grid(a: &SweepArgs) -> Result<SweepGrid> {
    let mut grid = match &a.grid {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => SweepGrid::default(),
    };
    for v in &a.variants {
        grid.variants.push(v.parse::<MemoryVariant>().map_err(CliError::Config)?);
    }
    grid.lambda.extend(&a.lambdas);
    grid.tau_s.extend(&a.tau_s_values);
    grid.noise_scale.extend(&a.noise_scales);
    grid.episode_count.extend(&a.episode_counts);
    if a.both_policies {
        grid.policies = vec![MemoryPolicy::Persist, MemoryPolicy::ResetPerEpisode];
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Contents of `manifest.json`: the command, its full configuration and a
/// hash of every file it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<SweepGrid>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<FileEntry>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

struct Output {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn put_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    fn finish(self, command: &str, config: &RunConfig, grid: Option<SweepGrid>, inputs: Vec<FileEntry>) -> Result<Manifest> {
        let manifest = Manifest {
            tool: "objmem".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            grid,
            inputs,
            files: self.files,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn load_table(path: &Path) -> Result<ClassEmbeddingTable<f64>> {
    let (table, warnings) = ClassEmbeddingTable::from_bytes(&read_bytes(path)?)?;
    for w in warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(table)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let text = read_bytes(&dir.join("manifest.json"))?;
    serde_json::from_slice(&text).map_err(|e| CliError::Data(format!("{}: {e}", dir.join("manifest.json").display())))
}

/// Reads and hash-checks a file listed in the manifest of `dir`.
fn checked_input(dir: &Path, manifest: &Manifest, name: &str) -> Result<(Vec<u8>, FileEntry)> {
    let entry = manifest
        .files
        .iter()
        .find(|f| f.path == name)
        .ok_or_else(|| CliError::Data(format!("{} lists no {name}", dir.join("manifest.json").display())))?;
    let bytes = read_bytes(&dir.join(name))?;
    if sha256_hex(&bytes) != entry.sha256 {
        return Err(CliError::Data(format!("{} does not match its manifest hash", dir.join(name).display())));
    }
    Ok((bytes, entry.clone()))
}

/// World from a `generate` output directory.
pub fn load_world(cfg: &RunConfig, dir: &Path, table: Option<ClassEmbeddingTable<f64>>) -> Result<World> {
    let manifest = load_manifest(dir)?;
    if manifest.command != "generate" {
        return Err(CliError::Data(format!("{} was not written by generate", dir.display())));
    }
    if manifest.config.rig != cfg.rig {
        return Err(CliError::Config("camera rig differs from the generated data".into()));
    }
    let (scene_bytes, _) = checked_input(dir, &manifest, "scene.json")?;
    let scene: Scene = serde_json::from_slice(&scene_bytes).map_err(|e| CliError::Data(format!("scene.json: {e}")))?;
    let (pack, _) = checked_input(dir, &manifest, "episodes.pack")?;
    let episodes = read_frame_pack(&pack, &scene, &cfg.rig).map_err(|e| CliError::Data(e.to_string()))?;
    let table = match table {
        Some(t) => t,
        None => {
            let (bytes, _) = checked_input(dir, &manifest, "table.bin")?;
            let (t, _) = ClassEmbeddingTable::from_bytes(&bytes)?;
            t
        }
    };
    let world = World { scene, episodes, table };
    if world.table.dim() != cfg.features.object_dim || world.table.len() < cfg.scene.class_count {
        return Err(CliError::Config("class table does not fit the feature configuration".into()));
    }
    Ok(world)
}

/// Writes `scene.json`, `episodes.pack`, `table.bin` and the manifest.
pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    let world = World::build(cfg, None)?;
    let mut o = Output::create(out)?;
    o.put_json("scene.json", &world.scene)?;
    o.put("episodes.pack", &write_frame_pack(&world.episodes, &cfg.rig))?;
    o.put("table.bin", &world.table.to_bytes())?;
    o.finish("generate", cfg, None, Vec::new())
}

/// Compact view of a run for quick comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary<'a> {
    pub variant: &'a str,
    pub policy: &'a str,
    pub lambda: f64,
    pub tau_s: f64,
    pub noise_scale: f64,
    pub episodes: usize,
    pub frames: usize,
    pub ap50: f64,
    pub classification_accuracy: f64,
    pub recall_precision: f64,
    pub recall_recall: f64,
    pub recall_accuracy: f64,
    pub recall_accuracy_formula: &'a str,
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Data(e.to_string()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

/// Runs `cfg` in `world` and writes `report.json`, `summary.json`,
/// `ap_per_class.csv`, `recall_episodes.csv` and, with `snapshot`, the
/// memory grid and class table.
pub fn cmd_run(cfg: &RunConfig, world: &World, out: &Path, snapshot: bool) -> Result<RunReport> {
    let result = run_in_world::<f64>(cfg, world)?;
    let r = &result.report;
    let mut o = Output::create(out)?;
    o.put_json("report.json", r)?;
    o.put_json(
        "summary.json",
        &RunSummary {
            variant: r.variant.name(),
            policy: r.policy.name(),
            lambda: r.lambda,
            tau_s: r.tau_s,
            noise_scale: r.noise_scale,
            episodes: r.episodes,
            frames: r.frames,
            ap50: r.ap.mean,
            classification_accuracy: r.classification_accuracy,
            recall_precision: r.recall.precision,
            recall_recall: r.recall.recall,
            recall_accuracy: r.recall.accuracy,
            recall_accuracy_formula: "(TP + TN) / (classes * episodes)",
        },
    )?;
    let rows = r
        .ap
        .per_class
        .iter()
        .map(|(c, ap)| vec![c.to_string(), r.class_names[*c].clone(), ap.to_string()]);
    o.put("ap_per_class.csv", &csv_bytes(&["class", "name", "ap50"], rows)?)?;
    let rows = r.recall.episodes.iter().enumerate().map(|(e, t)| {
        vec![
            e.to_string(),
            join(&t.present),
            join(&t.encountered),
            join(&t.missing),
            t.true_positive.to_string(),
            t.false_positive.to_string(),
            t.false_negative.to_string(),
            t.true_negative.to_string(),
        ]
    });
    let header = ["episode", "present", "encountered", "missing", "tp", "fp", "fn", "tn"];
    o.put("recall_episodes.csv", &csv_bytes(&header, rows)?)?;
    if snapshot {
        if let Some(grid) = result.memory.object_grid() {
            o.put("memory.ioms", &snapshot_save(grid))?;
            o.put("table.bin", &world.table.to_bytes())?;
        }
    }
    o.finish("run", cfg, None, Vec::new())?;
    Ok(result.report)
}

const CURVE_HEADER: [&str; 11] = [
    "variant",
    "policy",
    "lambda",
    "tau_s",
    "noise_scale",
    "episode_count",
    "ap50",
    "recall_precision",
    "recall_recall",
    "recall_accuracy",
    "classification_accuracy",
];

fn curve_row(p: &SweepPoint) -> Vec<String> {
    vec![
        p.variant.name().to_string(),
        p.policy.name().to_string(),
        p.lambda.to_string(),
        p.tau_s.to_string(),
        p.noise_scale.to_string(),
        p.episode_count.to_string(),
        p.ap50.to_string(),
        p.recall_precision.to_string(),
        p.recall_recall.to_string(),
        p.recall_accuracy.to_string(),
        p.classification_accuracy.to_string(),
    ]
}

/// Runs the grid and writes `curve.csv`, `sweep.json` and one SVG plot per
/// metric. An empty grid leaves `curve.csv` empty and draws no plots.
pub fn cmd_sweep(cfg: &RunConfig, grid: &SweepGrid, out: &Path) -> Result<Vec<SweepPoint>> {
    let points = sweep::<f64>(cfg, grid)?;
    let mut o = Output::create(out)?;
    if points.is_empty() {
        o.put("curve.csv", b"")?;
    } else {
        o.put("curve.csv", &csv_bytes(&CURVE_HEADER, points.iter().map(curve_row))?)?;
    }
    o.put_json("sweep.json", &points)?;
    if !points.is_empty() {
        let rows: Vec<Vec<String>> = points.iter().map(curve_row).collect();
        let data = String::from_utf8(csv_bytes(&CURVE_HEADER, rows)?).expect("csv is utf-8");
        for (name, metric) in [
            ("ap50", (|p: &SweepPoint| p.ap50) as fn(&SweepPoint) -> f64),
            ("recall_accuracy", |p| p.recall_accuracy),
        ] {
            let plot = svg::plot(&points, name, metric, &data);
            o.put(&format!("plot_{name}.svg"), plot.as_bytes())?;
        }
    }
    o.finish("sweep", cfg, Some(grid.clone()), Vec::new())?;
    Ok(points)
}

/// Decodes a snapshot with the configured occupancy threshold and writes
/// `map.ppm` (one pixel per cell, `a` wide and `l` high).
pub fn cmd_export_map(cfg: &RunConfig, snapshot: &Path, table: &Path, out: &Path) -> Result<()> {
    let snap_bytes = read_bytes(snapshot)?;
    let grid = snapshot_load::<f64>(&snap_bytes).map_err(|e| CliError::Data(format!("{}: {e}", snapshot.display())))?;
    let table_bytes = read_bytes(table)?;
    let (t, _) = ClassEmbeddingTable::<f64>::from_bytes(&table_bytes)?;
    if t.dim() != grid.feature_dim() {
        return Err(CliError::Data(format!(
            "table dimension {} differs from the snapshot's {}",
            t.dim(),
            grid.feature_dim()
        )));
    }
    let occ = occupancy(&grid, cfg.memory.tau_o, cfg.memory.occupancy_ratio);
    let map = decode_semantic_map(&grid, &occ, &t);
    let mut o = Output::create(out)?;
    o.put("map.ppm", &semantic_map_ppm(&map, t.len()))?;
    let inputs = vec![
        FileEntry {
            path: snapshot.display().to_string(),
            sha256: sha256_hex(&snap_bytes),
            bytes: snap_bytes.len() as u64,
        },
        FileEntry {
            path: table.display().to_string(),
            sha256: sha256_hex(&table_bytes),
            bytes: table_bytes.len() as u64,
        },
    ];
    o.finish("export-map", cfg, None, inputs)?;
    Ok(())
}
