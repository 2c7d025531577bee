use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jfsce::harness::{self, RunOptions, SimConfig, SweepResult};
use jfsce::scenario::Link;
use jfsce::Result;

#[derive(Parser)]
#[command(name = "jfsce", version, about = "Joint frame synchronization and channel estimation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate the HPA drive gain to the EVM target and report it.
    Calibrate(Common),
    /// Train the network estimators and store them under --out.
    Train(Common),
    /// Evaluate every estimator over the SNR grid, reusing models from --models.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Model directory written by `train`.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Run a sweep over the SNR grid and optionally one link parameter.
    Sweep(Common),
    /// Run the sweep behind one of the result figures (3 to 9).
    ReproduceFig {
        figure: u32,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone, Default)]
struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from reduced training sizes (n_t = n_c = 20000).
    #[arg(long)]
    desk: bool,
    /// Override any configuration key, e.g. `--set n_trials=1000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output file (CSV) or directory (train).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, short)]
    quiet: bool,

    #[arg(long)]
    ns: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    l: Option<String>,
    #[arg(long)]
    k_factor: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    #[arg(long)]
    los: Option<String>,
    #[arg(long)]
    n_m: Option<String>,
    #[arg(long)]
    n_l: Option<String>,
    #[arg(long)]
    n_t: Option<String>,
    #[arg(long)]
    n_c: Option<String>,
    #[arg(long)]
    n_trials: Option<String>,
    /// Comma list or `lo:step:hi`.
    #[arg(long)]
    snr_grid: Option<String>,
    /// Percent, or `none`.
    #[arg(long)]
    evm_target: Option<String>,
    #[arg(long)]
    evm_definition: Option<String>,
    #[arg(long)]
    placement: Option<String>,
    #[arg(long)]
    estimators: Option<String>,
    #[arg(long)]
    omp_matrix_mode: Option<String>,
    #[arg(long)]
    train_snr_low: Option<String>,
    #[arg(long)]
    train_snr_high: Option<String>,
    #[arg(long)]
    sweep_param: Option<String>,
    #[arg(long)]
    sweep_values: Option<String>,
}

impl Common {
    /// Defaults, then the config file, then `JFSCE_*` variables, then flags.
    fn config(&self) -> Result<SimConfig> {
        let mut cfg = if self.desk { SimConfig::desk() } else { SimConfig::default() };
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_env(std::env::vars())?;
        let flags = [
            ("ns", &self.ns),
            ("m", &self.m),
            ("l", &self.l),
            ("k_factor", &self.k_factor),
            ("eta", &self.eta),
            ("los", &self.los),
            ("n_m", &self.n_m),
            ("n_l", &self.n_l),
            ("n_t", &self.n_t),
            ("n_c", &self.n_c),
            ("n_trials", &self.n_trials),
            ("snr_grid", &self.snr_grid),
            ("evm_target", &self.evm_target),
            ("evm_definition", &self.evm_definition),
            ("placement", &self.placement),
            ("estimators", &self.estimators),
            ("omp_matrix_mode", &self.omp_matrix_mode),
            ("train_snr_low", &self.train_snr_low),
            ("train_snr_high", &self.train_snr_high),
            ("sweep_param", &self.sweep_param),
            ("sweep_values", &self.sweep_values),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| jfsce::Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(seed) = self.seed {
            cfg.master_seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn options(&self, model_dir: Option<PathBuf>) -> RunOptions {
        RunOptions {
            workers: self.workers,
            model_dir,
            verbose: !self.quiet,
        }
    }
}

fn emit(result: &SweepResult, out: PathBuf) -> Result<()> {
    let (csv, json) = harness::emit_results(result, out)?;
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(common) => {
            let cfg = common.config()?;
            for (value, point) in cfg.points()? {
                let link = Link::new(point.link_params(), point.master_seed)?;
                let label = value.map_or(String::new(), |v| format!("{}={v} ", cfg.sweep_param.name()));
                match link.calibration() {
                    Some(c) => println!(
                        "{label}drive_gain={:.6e} evm={:.4}% ({}) signal_power={:.6e}",
                        c.drive_gain,
                        c.achieved_evm,
                        point.evm_definition.name(),
                        link.signal_power()
                    ),
                    None => println!("{label}uncalibrated signal_power={:.6e}", link.signal_power()),
                }
            }
            Ok(())
        }
        Command::Train(common) => {
            let cfg = common.config()?;
            let out = common.out.clone().unwrap_or_else(|| PathBuf::from("models"));
            let opts = common.options(None);
            let points = cfg.points()?;
            for (index, (_, point)) in points.iter().enumerate() {
                let link = Link::new(point.link_params(), point.master_seed)?;
                for e in &point.estimators {
                    let Some(variant) = e.variant() else { continue };
                    let dir = if points.len() == 1 {
                        out.join(e.name())
                    } else {
                        out.join(format!("point-{index}")).join(e.name())
                    };
                    let model = harness::with_workers(opts.workers, || harness::load_or_train(&link, point, variant, Some(&dir)))?;
                    println!("{} -> {} ({})", e.name(), dir.display(), model.config_hash);
                }
            }
            Ok(())
        }
        Command::Eval { common, models } => {
            let cfg = common.config()?;
            let result = harness::run_sweep(&cfg, &common.options(models))?;
            emit(&result, common.out.unwrap_or_else(|| PathBuf::from("results.csv")))
        }
        Command::Sweep(common) => {
            let cfg = common.config()?;
            let result = harness::run_sweep(&cfg, &common.options(None))?;
            emit(&result, common.out.unwrap_or_else(|| PathBuf::from("sweep.csv")))
        }
        Command::ReproduceFig { figure, common } => {
            let cfg = harness::figure_config(figure, &common.config()?)?;
            let result = harness::run_sweep(&cfg, &common.options(None))?;
            emit(&result, common.out.unwrap_or_else(|| PathBuf::from(format!("fig{figure}.csv"))))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
