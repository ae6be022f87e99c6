//! Command-line front end: argument parsing and command dispatch.

use std::fs::File;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::clustering::{cluster_pipeline, label_distribution, KMeansConfig, OmegaChoice, PipelineConfig};
use crate::error::{Error, Result};
use crate::factor_count::{cumulative_ratio_sequence, default_j0, single_matrix_ratio_baseline, DEFAULT_K0};
use crate::panel::{load_panel, Orientation, TimeSeriesPanel};
use crate::report::{self, Example1Row, Settings};
use crate::simulation::{
    example1_population_eigenvalues, generate_example1, run_monte_carlo, CountMode, Example1Params,
    MonteCarloConfig, ScenarioSpec, Stages,
};

#[derive(Debug, Parser)]
#[command(name = "factorclust", version, about = "Cluster a panel of time series by weak cluster-specific factors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the full clustering pipeline on a CSV panel.
    Cluster(ClusterArgs),
    /// Estimate the numbers of strong and weak factors only.
    FactorCount(FactorCountArgs),
    /// Monte Carlo study on synthetic panels with known clusters.
    Simulate(SimulateArgs),
    /// Population eigen-structure of the three-factor counterexample.
    Example1(Example1Args),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrientationArg {
    RowsAreTime,
    RowsAreSeries,
}

impl From<OrientationArg> for Orientation {
    fn from(o: OrientationArg) -> Self {
        match o {
            OrientationArg::RowsAreTime => Orientation::RowsAreTime,
            OrientationArg::RowsAreSeries => Orientation::RowsAreSeries,
        }
    }
}

fn parse_omega(s: &str) -> std::result::Result<OmegaChoice, String> {
    s.parse::<OmegaChoice>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Panel CSV with a header row.
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "rows-are-time")]
    pub orientation: OrientationArg,
}

#[derive(Debug, Args)]
pub struct RatioArgs {
    /// Largest lag pooled into the autocovariance matrices.
    #[arg(long, default_value_t = DEFAULT_K0)]
    pub k0: usize,
    /// Ratios are searched over j < J0; defaults to max(p/4, 8) capped at p.
    #[arg(long)]
    pub j0: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Two-column `series_id,label` CSV; adds the label-by-cluster table.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub ratio: RatioArgs,
    /// No-cluster threshold: p1, p2, p3 or a positive number.
    #[arg(long, default_value = "p2", value_parser = parse_omega)]
    pub omega: OmegaChoice,
    /// Number of strong factors; skips ratio-based selection.
    #[arg(long, requires = "r")]
    pub r0: Option<usize>,
    /// Number of weak factors; skips ratio-based selection.
    #[arg(long, requires = "r0")]
    pub r: Option<usize>,
    /// Number of clusters; otherwise chosen by the elbow rule.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub restarts: u64,
    #[arg(long, default_value_t = crate::clustering::DEFAULT_ELBOW_THETA)]
    pub elbow_theta: f64,
    #[arg(long, default_value = "factorclust-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FactorCountArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub ratio: RatioArgs,
    #[arg(long, default_value = "factorclust-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    I,
    Ii,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CountsArg {
    Known,
    Estimated,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StagesArg {
    FactorCount,
    Full,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Flat `key = value` scenario file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    /// Series per cluster.
    #[arg(long)]
    pub p1: Option<usize>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Master seed; replication i uses stream i of this seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "known")]
    pub counts: CountsArg,
    #[arg(long, value_enum, default_value = "full")]
    pub stages: StagesArg,
    /// Rescale this many common factors to weak strength.
    #[arg(long, default_value_t = 0)]
    pub demote: usize,
    #[command(flatten)]
    pub ratio: RatioArgs,
    #[arg(long, default_value = "p2", value_parser = parse_omega)]
    pub omega: OmegaChoice,
    /// Fixed number of clusters instead of the elbow rule.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value = "factorclust-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Example1Args {
    /// Panel widths to evaluate.
    #[arg(long, value_delimiter = ',', default_values_t = vec![100usize, 400, 1600])]
    pub p: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.8, allow_negative_numbers = true)]
    pub a1: f64,
    #[arg(long, default_value_t = -0.5, allow_negative_numbers = true)]
    pub a2: f64,
    #[arg(long, default_value_t = 0.6, allow_negative_numbers = true)]
    pub a3: f64,
    /// Length of the sample panel written for the first width.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a simulated panel for the first width.
    #[arg(long)]
    pub write_panel: bool,
    #[arg(long, default_value = "factorclust-out")]
    pub out: PathBuf,
}

fn read_panel(args: &InputArgs) -> Result<TimeSeriesPanel> {
    let file = File::open(&args.input).map_err(|e| Error::Io {
        path: args.input.display().to_string(),
        source: e,
    })?;
    load_panel(file, args.orientation.into())
}

fn input_settings(command: &str, input: &Path) -> Settings {
    let mut s = report::base_settings(command);
    s.insert("input".into(), input.display().to_string());
    s
}

fn cmd_cluster(args: &ClusterArgs) -> Result<Vec<PathBuf>> {
    let mut panel = read_panel(&args.input)?;
    if let Some(path) = &args.labels {
        let file = File::open(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        panel = panel.attach_labels_csv(file)?;
    }
    let config = PipelineConfig {
        k0: args.ratio.k0,
        j0: args.ratio.j0,
        counts: args.r0.zip(args.r),
        omega: args.omega,
        d: args.d,
        kmeans: KMeansConfig {
            restarts: args.restarts as usize,
            seed: args.seed,
            ..Default::default()
        },
        elbow_theta: args.elbow_theta,
    };
    let result = cluster_pipeline(&panel, &config)?;
    let dist = match panel.labels() {
        Some(labels) => Some(label_distribution(labels, &result)?),
        None => None,
    };
    let mut settings = report::cluster_settings(input_settings("cluster", &args.input.input), &result);
    if let Some(path) = &args.labels {
        settings.insert("labels".into(), path.display().to_string());
    }
    report::write_cluster_outputs(&args.out, &settings, &panel, &result, dist.as_ref())
}

fn cmd_factor_count(args: &FactorCountArgs) -> Result<Vec<PathBuf>> {
    let panel = read_panel(&args.input)?;
    let j0 = args.ratio.j0.unwrap_or_else(|| default_j0(panel.p()));
    let mut cumulative = cumulative_ratio_sequence(&panel, args.ratio.k0, j0)?;
    let mut baseline = single_matrix_ratio_baseline(&panel, args.ratio.k0, j0)?;
    // both reports are written even when a selection fails; the failure is the exit status
    let picked = cumulative.select();
    let _ = baseline.select();
    let mut settings = input_settings("factor-count", &args.input.input);
    settings.insert("k0".into(), args.ratio.k0.to_string());
    settings.insert("j0".into(), j0.to_string());
    let written = report::write_factor_count_outputs(&args.out, &settings, &cumulative, Some(&baseline))?;
    picked?;
    Ok(written)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                source: e,
            })?;
            ScenarioSpec::from_kv_str(&text)?
        }
        None => ScenarioSpec::scenario_one(args.p1.unwrap_or(25)),
    };
    let p1 = args.p1.unwrap_or(spec.p1);
    if let Some(s) = args.scenario {
        let seed = spec.seed;
        spec = match s {
            ScenarioArg::I => ScenarioSpec::scenario_one(p1),
            ScenarioArg::Ii => ScenarioSpec::scenario_two(p1),
        };
        spec.seed = seed;
    } else if args.p1.is_some() {
        spec.p1 = p1;
    }
    spec.validate()?;
    let config = MonteCarloConfig {
        reps: args.reps as usize,
        master_seed: args.seed,
        jobs: args.jobs,
        counts: match args.counts {
            CountsArg::Known => CountMode::Known,
            CountsArg::Estimated => CountMode::Estimated,
        },
        stages: match args.stages {
            StagesArg::FactorCount => Stages::FactorCount,
            StagesArg::Full => Stages::Full,
        },
        demoted: args.demote,
        pipeline: PipelineConfig {
            k0: args.ratio.k0,
            j0: args.ratio.j0,
            omega: args.omega,
            d: args.d,
            ..Default::default()
        },
    };
    let summary = run_monte_carlo(&spec, &config)?;
    let mut settings = report::simulation_settings(report::base_settings("simulate"), &summary);
    if let Some(path) = &args.config {
        settings.insert("config".into(), path.display().to_string());
    }
    report::write_simulation_outputs(&args.out, &settings, &summary)
}

fn cmd_example1(args: &Example1Args) -> Result<Vec<PathBuf>> {
    if args.p.is_empty() {
        return Err(Error::InvalidParameter("at least one --p value is required".into()));
    }
    let mut rows = Vec::new();
    for &p in &args.p {
        let params = Example1Params {
            p,
            n: args.n,
            delta: args.delta,
            a1: args.a1,
            a2: args.a2,
            a3: args.a3,
            seed: args.seed,
        };
        if params.is_degenerate() {
            log::warn!("(a1 - a2)^2 (1 - a1 a2) = 0: strong and weak factors are not separable");
        }
        let vals = example1_population_eigenvalues(&params)?;
        let a3 = params.a3;
        rows.push(Example1Row {
            params,
            eigenvalues: [vals[0], vals[1], vals[2]],
            lambda3_closed_form: (p as f64).powf(2.0 - 2.0 * params.delta) * ((1.0 + a3 * a3).powi(2) + a3 * a3),
        });
    }
    let slope = if rows.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| (r.params.p as f64).ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| (r.eigenvalues[1] / r.eigenvalues[2]).ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    let mut settings = report::base_settings("example1");
    settings.insert("delta".into(), args.delta.to_string());
    settings.insert("a1".into(), args.a1.to_string());
    settings.insert("a2".into(), args.a2.to_string());
    settings.insert("a3".into(), args.a3.to_string());
    settings.insert("n".into(), args.n.to_string());
    settings.insert("seed".into(), args.seed.to_string());
    let mut written = report::write_example1_outputs(&args.out, &settings, &rows, slope)?;
    if args.write_panel {
        let ex = generate_example1(&rows[0].params)?;
        written.push(report::write_panel(&args.out, "example1_panel.csv", &settings, &ex.panel)?);
    }
    Ok(written)
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    match &cli.command {
        Command::Cluster(a) => cmd_cluster(a),
        Command::FactorCount(a) => cmd_factor_count(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Example1(a) => cmd_example1(a),
    }
}

/// Parse `args`, run, and map the outcome to an exit status.
/// Failures print one line: `error[CODE]: message`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .unwrap_or("invalid usage")
                .trim_start_matches("error: ");
            eprintln!("error[E_USAGE]: {first}");
            return 2;
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "));
            1
        }
    }
}
