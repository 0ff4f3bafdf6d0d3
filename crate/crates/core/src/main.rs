use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use boson_core::device::DEFAULT_P_MAX_MW;
use boson_core::experiment::{
    self, CountSource, EvolveArgs, ExperimentConfig, ExtractArgs, FigureArgs, FigureKind, SampleArgs, SamplerChoice, StageError, ValidateArgs,
};
use boson_core::randomness::{DEFAULT_BLOCK_SIZE, DEFAULT_P_THRESHOLD};

#[derive(Parser, Debug)]
#[command(name = "boson", version, about = "Boson sampling simulation, validation and randomness extraction")]
struct Cli {
    /// Config file: device config for `evolve`/`figure`, experiment config for `pipeline`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

/// Mode list given as `0,1,2` or as a half-open range `0..3`.
#[derive(Clone, Debug)]
struct Modes(Vec<usize>);

fn parse_modes(s: &str) -> Result<Modes, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|e| format!("{e}"))?;
        let b: usize = b.trim().parse().map_err(|e| format!("{e}"))?;
        return Ok(Modes((a..b).collect()));
    }
    s.split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|e| format!("'{x}': {e}")))
        .collect::<Result<_, _>>()
        .map(Modes)
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Haar-random unitary.
    Haar {
        #[arg(long, default_value_t = 128)]
        modes: usize,
    },
    /// Device unitary under a power vector.
    Evolve {
        /// JSON array of heater powers in mW; drawn at random when absent.
        #[arg(long)]
        powers: Option<PathBuf>,
        #[arg(long, default_value_t = 17)]
        active_heaters: usize,
        #[arg(long, default_value_t = DEFAULT_P_MAX_MW)]
        p_max: f64,
    },
    /// Draw output events from a stored unitary.
    Sample {
        #[arg(long)]
        unitary: PathBuf,
        /// Input modes, e.g. `0,1,2` or `0..3`.
        #[arg(long, value_parser = parse_modes)]
        inputs: Modes,
        #[arg(long, default_value_t = 10_000)]
        count: u64,
        #[arg(long, default_value = "bs")]
        sampler: SamplerChoice,
        #[arg(long, default_value_t = 1.0)]
        indistinguishability: f64,
    },
    /// W_k and C_k counters on a sample file.
    Validate {
        #[arg(long)]
        unitary: PathBuf,
        #[arg(long, value_parser = parse_modes)]
        inputs: Modes,
        #[arg(long)]
        samples: PathBuf,
    },
    /// Moduli and phases from single and pair counts.
    Reconstruct {
        /// Count table to reconstruct from.
        #[arg(long, conflicts_with = "unitary")]
        counts: Option<PathBuf>,
        /// Unitary to compare a count table against.
        #[arg(long, requires = "counts")]
        truth: Option<PathBuf>,
        /// Simulate counts from this unitary instead of reading a table.
        #[arg(long)]
        unitary: Option<PathBuf>,
        #[arg(long, value_parser = parse_modes, default_value = "0..4")]
        inputs: Modes,
        #[arg(long, value_parser = parse_modes, default_value = "0..8")]
        outputs: Modes,
        #[arg(long, default_value_t = 1_000_000)]
        shots: u64,
    },
    /// Von Neumann extraction and SHA-256 conditioning of a sample file.
    Extract {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        modes: usize,
        #[arg(long, default_value_t = DEFAULT_BLOCK_SIZE)]
        block_size: usize,
    },
    /// SP 800-22 battery on a bit file.
    Nist {
        #[arg(long)]
        bits: PathBuf,
        #[arg(long, default_value_t = DEFAULT_P_THRESHOLD)]
        p_threshold: f64,
    },
    /// Plot-ready data: haar, device, validation or randomness.
    Figure {
        kind: FigureKind,
        #[arg(long, default_value_t = 100)]
        matrices: usize,
        #[arg(long, default_value_t = 50)]
        vectors: usize,
        #[arg(long, value_parser = parse_modes, default_value = "2,5,8,11,14,17")]
        heaters: Modes,
        #[arg(long, default_value_t = 10_000)]
        events: usize,
        /// Experiment config for the randomness figure.
        #[arg(long)]
        experiment: Option<PathBuf>,
    },
    /// Full run: evolve, sample, detect, validate, extract, hash, test.
    Pipeline,
}

fn run(cli: Cli) -> Result<(), StageError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| StageError::config("threads", e.to_string()))?;
    }
    let demo_seed = ExperimentConfig::demo().seed;
    let seed = cli.seed.unwrap_or(demo_seed);
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("boson-out"));
    match cli.command {
        Command::Haar { modes } => experiment::cmd_haar(&out, modes, seed),
        Command::Evolve {
            powers,
            active_heaters,
            p_max,
        } => experiment::cmd_evolve(
            &out,
            &EvolveArgs {
                device_config: cli.config,
                powers,
                active_heaters,
                p_max_mw: p_max,
                seed,
            },
        ),
        Command::Sample {
            unitary,
            inputs,
            count,
            sampler,
            indistinguishability,
        } => experiment::cmd_sample(
            &out,
            &SampleArgs {
                unitary,
                inputs: inputs.0,
                count,
                sampler,
                indistinguishability,
                seed,
            },
        ),
        Command::Validate { unitary, inputs, samples } => experiment::cmd_validate(
            &out,
            &ValidateArgs {
                unitary,
                inputs: inputs.0,
                samples,
            },
        ),
        Command::Reconstruct {
            counts,
            truth,
            unitary,
            inputs,
            outputs,
            shots,
        } => {
            let source = match (counts, unitary) {
                (Some(counts), _) => CountSource::File { counts, truth },
                (None, Some(unitary)) => CountSource::Simulate {
                    unitary,
                    inputs: inputs.0,
                    outputs: outputs.0,
                    shots,
                    seed,
                },
                (None, None) => return Err(StageError::config("reconstruct", "either --counts or --unitary is required")),
            };
            experiment::cmd_reconstruct(&out, &source)
        }
        Command::Extract { samples, modes, block_size } => experiment::cmd_extract(&out, &ExtractArgs { samples, modes, block_size }),
        Command::Nist { bits, p_threshold } => experiment::cmd_nist(&out, &bits, p_threshold),
        Command::Figure {
            kind,
            matrices,
            vectors,
            heaters,
            events,
            experiment: exp_path,
        } => {
            let mut args = FigureArgs::new(seed);
            args.matrices = matrices;
            args.vectors = vectors;
            args.heaters = heaters.0;
            args.events = events;
            args.device_config = cli.config;
            if let Some(p) = exp_path {
                args.experiment = Some(ExperimentConfig::load(&p)?);
            }
            experiment::cmd_figure(&out, kind, &args)
        }
        Command::Pipeline => {
            let mut cfg = match &cli.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::demo(),
            };
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or(out);
            let report = experiment::cmd_pipeline(&out, cfg)?;
            if let Some(r) = &report.randomness {
                println!("{} hashed bits ({:.4} per trial), h_min {:.4}", r.hashed_bits, r.bits_per_trial, r.h_min);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(experiment::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
