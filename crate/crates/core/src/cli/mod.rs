//! Command-line front end.

pub mod config;
pub mod pipeline;

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::fixture::{raw_schema, synthetic_dataset, write_raw_csv};
pub use config::{parse_config_text, ConfigError, RunConfig};
pub use pipeline::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "hotspot",
    version,
    about = "Accident hotspot mining for point-event data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the input, drop rows without usable coordinates, write cleaned.csv
    Clean,
    /// DBSCAN clusters as GeoJSON plus a silhouette report
    Cluster,
    /// Gaussian kernel heatmap as ESRI ASCII grid and PGM
    Heatmap,
    /// Marker clusters, one GeoJSON file per zoom level
    Markers,
    /// Month x weekday, hourly and per-feature tables
    Temporal,
    /// Run manifest with artifact digests and headline numbers
    Report,
    /// Every stage in order
    Run,
    /// Write a seeded synthetic crash dataset and a matching config file
    Fixture,
}

/// Every flag is optional; unset flags fall back to the config file, then to
/// built-in defaults.
#[derive(Debug, Default, Args)]
pub struct Options {
    #[arg(long, global = true)]
    pub input: Option<String>,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long = "out-dir", global = true)]
    pub out_dir: Option<String>,
    #[arg(long = "eps-km", global = true, allow_negative_numbers = true)]
    pub eps_km: Option<String>,
    #[arg(long = "min-pts", global = true, allow_negative_numbers = true)]
    pub min_pts: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<String>,
    /// WIDTHxHEIGHT or a single size
    #[arg(long, global = true)]
    pub grid: Option<String>,
    /// e.g. 5-22 or 10,12,14
    #[arg(long, global = true)]
    pub zooms: Option<String>,
    #[arg(long = "zoom-max", global = true, allow_negative_numbers = true)]
    pub zoom_max: Option<String>,
    #[arg(long = "radius-px", global = true, allow_negative_numbers = true)]
    pub radius_px: Option<String>,
    /// equirectangular or web_mercator
    #[arg(long, global = true)]
    pub projection: Option<String>,
    #[arg(long = "scale-c", global = true, allow_negative_numbers = true)]
    pub scale_c: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub seed: Option<String>,
    #[arg(long, global = true)]
    pub delimiter: Option<String>,
    #[arg(long = "lat-col", global = true)]
    pub lat_col: Option<String>,
    #[arg(long = "lon-col", global = true)]
    pub lon_col: Option<String>,
    #[arg(long = "month-col", global = true)]
    pub month_col: Option<String>,
    #[arg(long = "weekday-col", global = true)]
    pub weekday_col: Option<String>,
    #[arg(long = "hour-col", global = true)]
    pub hour_col: Option<String>,
    /// NAME=COLUMN, repeatable
    #[arg(long = "feature", global = true)]
    pub features: Vec<String>,
}

impl Options {
    fn pairs(&self) -> Result<Vec<(String, String)>, ConfigError> {
        let mut out = Vec::new();
        let simple = [
            ("input", &self.input),
            ("out-dir", &self.out_dir),
            ("eps-km", &self.eps_km),
            ("min-pts", &self.min_pts),
            ("alpha", &self.alpha),
            ("grid", &self.grid),
            ("zooms", &self.zooms),
            ("zoom-max", &self.zoom_max),
            ("radius-px", &self.radius_px),
            ("projection", &self.projection),
            ("scale-c", &self.scale_c),
            ("seed", &self.seed),
            ("delimiter", &self.delimiter),
            ("lat", &self.lat_col),
            ("lon", &self.lon_col),
            ("month", &self.month_col),
            ("weekday", &self.weekday_col),
            ("hour", &self.hour_col),
        ];
        for (key, value) in simple {
            if let Some(v) = value {
                out.push((key.to_string(), v.clone()));
            }
        }
        for f in &self.features {
            let (name, col) = f.split_once('=').ok_or_else(|| ConfigError {
                key: "feature".into(),
                message: format!("expected NAME=COLUMN, got '{f}'"),
            })?;
            out.push((format!("feature.{}", name.trim()), col.to_string()));
        }
        Ok(out)
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            for (k, v) in parse_config_text(&text)? {
                cfg.set(&k, &v)?;
            }
        }
        for (k, v) in self.pairs()? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Writes `fixture.csv` and `fixture.conf` into the output directory.
pub fn write_fixture(cfg: &RunConfig) -> Result<(PathBuf, PathBuf), CliError> {
    let dir = &cfg.out_dir;
    let io = |path: &PathBuf| {
        let path = path.clone();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let csv_path = dir.join("fixture.csv");
    let mut buf = Vec::new();
    write_raw_csv(&synthetic_dataset(cfg.seed), &mut buf)
        .map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(&csv_path, buf).map_err(io(&csv_path))?;

    let schema = raw_schema();
    let mut conf = format!(
        "# synthetic crash dataset, seed {}\ninput = {}\nlat = {}\nlon = {}\n",
        cfg.seed,
        csv_path.display(),
        schema.latitude_column,
        schema.longitude_column
    );
    for (key, col) in [
        ("month", &schema.month_column),
        ("weekday", &schema.weekday_column),
        ("hour", &schema.hour_column),
    ] {
        if let Some(col) = col {
            conf.push_str(&format!("{key} = {col}\n"));
        }
    }
    for (name, col) in &schema.feature_columns {
        conf.push_str(&format!("feature.{name} = {col}\n"));
    }
    let conf_path = dir.join("fixture.conf");
    fs::write(&conf_path, conf).map_err(io(&conf_path))?;
    Ok((csv_path, conf_path))
}

pub fn execute(command: &Command, cfg: &RunConfig) -> Result<(), CliError> {
    match command {
        Command::Clean => pipeline::clean(cfg),
        Command::Cluster => pipeline::cluster(cfg),
        Command::Heatmap => pipeline::heatmap(cfg),
        Command::Markers => pipeline::markers(cfg),
        Command::Temporal => pipeline::temporal(cfg),
        Command::Report => pipeline::report(cfg),
        Command::Run => pipeline::run_all(cfg),
        Command::Fixture => write_fixture(cfg).map(|_| ()),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = cli
        .options
        .resolve()
        .and_then(|cfg| execute(&cli.command, &cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("hotspot: {e}");
            e.exit_code()
        }
    }
}
