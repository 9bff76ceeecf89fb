//! Command-line surface: profile building, evaluation, diagnostics and
//! synthetic data generation.
//!
//! Every command is deterministic given identical inputs (seeds come from
//! configs or flags, never from the environment) and re-emits byte-identical
//! CSV on re-runs. Result CSV goes to `--out` when given, stdout otherwise;
//! human-readable summaries go to stderr.
//!
//! Exit codes: 0 success, 2 I/O, 3 validation, 4 numeric failure.

mod commands;

use clap::{Parser, Subcommand};

use crate::error::Result;

#[derive(Parser, Debug)]
#[command(
    name = "oodkit",
    about = "Post-hoc OoD detection over activation dumps and a linear head",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a reference profile from an ID training dump.
    Profile {
        /// Input activation dump (expects the id_train tag).
        #[arg(long)]
        id: String,
        /// Output profile dump; a `.count` sidecar is written next to it.
        #[arg(long)]
        out: String,
        /// Accept dumps whose tag is missing or not id_train.
        #[arg(long, default_value_t = false)]
        allow_any_tag: bool,
    },
    /// Score an ID dump against one or more OoD dumps and emit metric rows.
    Eval {
        /// ID test dump.
        #[arg(long)]
        id: String,
        /// OoD dump; repeat for several datasets.
        #[arg(long, required = true)]
        ood: Vec<String>,
        /// Linear head CSV (C weight rows + bias row).
        #[arg(long)]
        head: String,
        /// Experiment config (key=value) naming enhancer and scorer.
        #[arg(long)]
        config: String,
        /// Profile dump for the rank-shift family (overrides the config).
        #[arg(long)]
        profile: Option<String>,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<String>,
        /// Also render a markdown table to stderr.
        #[arg(long, default_value_t = false)]
        markdown: bool,
    },
    /// Gamma(p) curve between an ID and an OoD dump over a percentile grid.
    Gamma {
        #[arg(long)]
        id: String,
        #[arg(long)]
        ood: String,
        /// Percentile grid as start:stop:step (inclusive), e.g. 5:95:5.
        #[arg(long, default_value = "5:95:5")]
        grid: String,
        /// Use the pooled-sums estimator instead of per-sample ratios.
        #[arg(long, default_value_t = false)]
        pooled: bool,
        #[arg(long)]
        out: Option<String>,
    },
    /// Ranked residual profile of an OoD dump against a reference profile.
    Residuals {
        #[arg(long)]
        ood: String,
        #[arg(long)]
        profile: String,
        #[arg(long)]
        out: Option<String>,
    },
    /// Generate a synthetic activation dump from a spec file.
    Synth {
        /// Generator spec (key=value), kind=rect_gauss or kind=class_clouds.
        #[arg(long)]
        spec: String,
        /// Output dump path.
        #[arg(long)]
        out: String,
        /// Seed override for the spec file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Top-1 accuracy of the plain vs enhanced forward pass.
    Accuracy {
        /// Labeled ID dump.
        #[arg(long)]
        id: String,
        #[arg(long)]
        head: String,
        #[arg(long)]
        config: String,
        /// Profile dump for the rank-shift family (overrides the config).
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        out: Option<String>,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Profile {
            id,
            out,
            allow_any_tag,
        } => commands::cmd_profile(&id, &out, allow_any_tag),
        Command::Eval {
            id,
            ood,
            head,
            config,
            profile,
            out,
            markdown,
        } => commands::cmd_eval(
            &id,
            &ood,
            &head,
            &config,
            profile.as_deref(),
            out.as_deref(),
            markdown,
        ),
        Command::Gamma {
            id,
            ood,
            grid,
            pooled,
            out,
        } => commands::cmd_gamma(&id, &ood, &grid, pooled, out.as_deref()),
        Command::Residuals { ood, profile, out } => {
            commands::cmd_residuals(&ood, &profile, out.as_deref())
        }
        Command::Synth { spec, out, seed } => commands::cmd_synth(&spec, &out, seed),
        Command::Accuracy {
            id,
            head,
            config,
            profile,
            out,
        } => commands::cmd_accuracy(&id, &head, &config, profile.as_deref(), out.as_deref()),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprint!("{e}");
            return 3;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn main() -> i32 {
    main_with_args(std::env::args_os())
}
