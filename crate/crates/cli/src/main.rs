mod commands;
mod config;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lie_filters::Error;

#[derive(Parser, Debug)]
#[command(name = "lie-filters", version, about = "Lie group algebra filters on sampled signal domains")]
struct Cli {
    /// Seed for every random draw of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GroupArgs {
    /// so2, so3 or t<d>
    #[arg(long)]
    pub group: Option<String>,
    /// Step size δ along each generator.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Steps N per direction.
    #[arg(long)]
    pub n: Option<usize>,
    /// Monomial order k.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub dedup_tol: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a group and report its size and covering radius.
    SampleGroup {
        #[command(flatten)]
        group: GroupArgs,
        /// Probe count for the covering radius (0 skips it).
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the transformation operators of a group on a domain.
    BuildBank {
        #[command(flatten)]
        group: GroupArgs,
        /// e.g. `sphere;radius=2;count=125`
        #[arg(long)]
        domain: Option<String>,
        /// Custom domain coordinates, one point per line.
        #[arg(long)]
        domain_points: Option<PathBuf>,
        /// `barycentric[:k]` or `idw[:k[:power]]`
        #[arg(long)]
        interp: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the knot point-cloud dataset.
    MakeDataset {
        #[arg(long)]
        points: Option<usize>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        #[arg(long)]
        sigma_train: Option<f64>,
        #[arg(long)]
        sigma_test: Option<f64>,
        /// `random` or `identity`
        #[arg(long)]
        pose: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Project dataset splits onto a bank's domain and cache the signals.
    Project {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        proj_k: Option<usize>,
        #[arg(long)]
        xi: Option<f64>,
    },
    /// Train a model and write its checkpoint, log and metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// `train` or `test`
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        proj_k: Option<usize>,
        #[arg(long)]
        xi: Option<f64>,
    },
    /// Sweep operator perturbation sizes against a trained first layer.
    Stability {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated perturbation sizes.
        #[arg(long)]
        eps: Option<String>,
        /// `additive` or `multiplicative`
        #[arg(long)]
        mode: Option<String>,
        /// Test signals to evaluate (0 = all).
        #[arg(long)]
        signals: Option<usize>,
        #[arg(long)]
        proj_k: Option<usize>,
        #[arg(long)]
        xi: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Covering radius as the resolution is refined at a fixed range.
    Bandwidth {
        #[arg(long)]
        group: Option<String>,
        /// Comma-separated resolutions.
        #[arg(long)]
        deltas: Option<String>,
        /// Fixed range N·δ.
        #[arg(long)]
        range: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        dedup_tol: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in invariant checks.
    Verify,
}

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub bank: Option<PathBuf>,
    /// `grpa1`, `grpa2` or `fcnn`
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Filter widths after the input, e.g. `8,8`.
    #[arg(long)]
    pub channels: Option<String>,
    /// `max`, `mean` or `flatten`
    #[arg(long)]
    pub pooling: Option<String>,
    /// `fan_in` or `direct`
    #[arg(long)]
    pub parameterization: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    #[arg(long)]
    pub proj_k: Option<usize>,
    #[arg(long)]
    pub xi: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli) -> lie_filters::Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    }
    let mut cfg = config::Resolver::from_file(cli.config.as_deref())?;
    let seed = cli.seed;
    match cli.command {
        Command::SampleGroup { group, probes, out } => commands::sample_group(&mut cfg, &group, probes, out),
        Command::BuildBank {
            group,
            domain,
            domain_points,
            interp,
            out,
        } => commands::build_bank(&mut cfg, seed, &group, domain, domain_points, interp, out),
        Command::MakeDataset {
            points,
            train,
            test,
            sigma_train,
            sigma_test,
            pose,
            out,
        } => commands::make_dataset(&mut cfg, seed, points, train, test, sigma_train, sigma_test, pose, out),
        Command::Project { data, bank, proj_k, xi } => commands::project(&mut cfg, data, bank, proj_k, xi),
        Command::Train(args) => commands::train(&mut cfg, seed, args),
        Command::Eval {
            data,
            bank,
            model,
            split,
            proj_k,
            xi,
        } => commands::eval(&mut cfg, seed, data, bank, model, split, proj_k, xi),
        Command::Stability {
            data,
            bank,
            model,
            eps,
            mode,
            signals,
            proj_k,
            xi,
            out,
        } => commands::stability(&mut cfg, seed, data, bank, model, eps, mode, signals, proj_k, xi, out),
        Command::Bandwidth {
            group,
            deltas,
            range,
            k,
            probes,
            dedup_tol,
            out,
        } => commands::bandwidth(&mut cfg, group, deltas, range, k, probes, dedup_tol, out),
        Command::Verify => commands::verify(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            match e {
                Error::InvalidArgument(_) | Error::Parse(_) | Error::DimensionMismatch { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
