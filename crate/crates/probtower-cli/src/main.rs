//! Command line front end for exact probability towers.
//!
//! Every command is deterministic in its full flag set, writes its output
//! atomically via a temp file and rename, and re-runs the producing
//! module's invariants as a receipt before exiting. Exit codes: 0 success,
//! 2 input parse failure, 3 failed receipt or verification, 4 violated
//! engine precondition.

#![allow(clippy::result_large_err)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod ops;

use ops::{CliError, OpOutcome};

/// Output format for tower-producing commands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Full JSON document with the receipt embedded.
    Json,
    /// DOT diagram of the resulting tower; the receipt still runs.
    Dot,
}

#[derive(Parser)]
#[command(
    name = "probtower",
    version,
    about = "Build, split, verify, and transport exact probability towers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a tower from the deterministic generic split schedule.
    BuildGeneric {
        /// Number of split tasks to process.
        #[arg(long)]
        budget: usize,
        /// Largest ratio denominator the schedule must cover.
        #[arg(long, value_name = "N")]
        denominator_bound: u32,
        /// Rotation applied to each round's task order.
        #[arg(long, default_value_t = 0)]
        phase: usize,
        /// Output format.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Build the product tower of the canonical space enumeration.
    Product {
        /// Number of levels above the base.
        #[arg(long)]
        levels: usize,
        /// Output format.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Split a clopen set into two pieces of prescribed measures.
    Split {
        /// Tower file.
        #[arg(long)]
        tower: PathBuf,
        /// Clopen file naming the set to split.
        #[arg(long)]
        clopen: PathBuf,
        /// Measure of the first piece, as num/den.
        #[arg(long)]
        ratio: String,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Split a clopen set while keeping two closed traces apart.
    SplitAvoiding {
        /// Tower file.
        #[arg(long)]
        tower: PathBuf,
        /// Clopen file naming the set to split.
        #[arg(long)]
        clopen: PathBuf,
        /// Measure of the first piece, as num/den.
        #[arg(long)]
        ratio: String,
        /// Trace that must end up inside the first piece.
        #[arg(long)]
        trace0: PathBuf,
        /// Trace that must end up inside the second piece.
        #[arg(long)]
        trace1: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Amalgamate two surjections over their common codomain.
    Pullback {
        /// The left morphism file.
        #[arg(long)]
        f: PathBuf,
        /// The right morphism file.
        #[arg(long)]
        g: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Factor a surjection into prime surjections.
    Decompose {
        /// The morphism file.
        #[arg(long)]
        morphism: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Extend a correspondence of closed sets to a full level map family.
    Extend {
        /// The two tower files.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        towers: Vec<PathBuf>,
        /// The two trace files, one per tower.
        #[arg(long, num_args = 2, value_names = ["K", "L"])]
        traces: Vec<PathBuf>,
        /// Correspondence file: a JSON object of footprint labels.
        #[arg(long)]
        h: PathBuf,
        /// Number of level pairs to certify.
        #[arg(long)]
        depth: usize,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Embed a tower generically and retract onto it with a given measure.
    Retract {
        /// The tower to embed and retract onto.
        #[arg(long)]
        k: PathBuf,
        /// JSON array of top-level weights, as num/den strings.
        #[arg(long)]
        measure: PathBuf,
        /// Split tasks to spend on the embedding.
        #[arg(long)]
        budget: usize,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Map a clopen partition onto another of equal measures, fixing a trace.
    Homogeneity {
        /// Tower file.
        #[arg(long)]
        tower: PathBuf,
        /// JSON array of clopen pieces to move.
        #[arg(long)]
        sources: PathBuf,
        /// JSON array of clopen pieces to hit, pairing with the sources.
        #[arg(long)]
        targets: PathBuf,
        /// Trace whose cylinder stays pointwise fixed.
        #[arg(long)]
        pinned: PathBuf,
        /// Number of levels to certify.
        #[arg(long)]
        depth: usize,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Exhaustively check ratio realization up to a depth and bound.
    Verify {
        /// Tower file.
        #[arg(long)]
        tower: PathBuf,
        /// Deepest level whose clopens are checked.
        #[arg(long)]
        depth: usize,
        /// Largest ratio denominator checked.
        #[arg(long)]
        bound: u32,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Inspect sets of admissible clopen measures.
    Valueset {
        #[command(subcommand)]
        action: ValuesetAction,
    },
    /// Render a tower as a DOT diagram.
    ExportDot {
        /// Tower file.
        #[arg(long)]
        tower: PathBuf,
        /// Trace file whose footprint atoms are highlighted.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Family file drawn as dashed edges; must relate the tower to itself.
        #[arg(long)]
        family: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ValuesetAction {
    /// Check closure of a value set under the amalgamation operation.
    Check {
        /// Value set: madic:<base>, finite:<list>, rationals, or rationals-with-zero.
        #[arg(long)]
        kind: String,
        /// Largest member denominator enumerated.
        #[arg(long)]
        bound: u32,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Test a finite set of rationals and recover its ladder modulus.
    Classify {
        /// Comma-separated rationals, e.g. "1/5,2/5,3/5,4/5,1".
        #[arg(long)]
        set: String,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    let (outcome, output): (OpOutcome, Option<PathBuf>) = match command {
        Command::BuildGeneric {
            budget,
            denominator_bound,
            phase,
            format,
            output,
        } => (
            ops::build_generic(budget, denominator_bound, phase, format)?,
            output,
        ),
        Command::Product {
            levels,
            format,
            output,
        } => (ops::product(levels, format)?, output),
        Command::Split {
            tower,
            clopen,
            ratio,
            output,
        } => (ops::split(&tower, &clopen, &ratio)?, output),
        Command::SplitAvoiding {
            tower,
            clopen,
            ratio,
            trace0,
            trace1,
            output,
        } => (
            ops::split_avoiding_cmd(&tower, &clopen, &ratio, &trace0, &trace1)?,
            output,
        ),
        Command::Pullback { f, g, output } => (ops::pullback_cmd(&f, &g)?, output),
        Command::Decompose { morphism, output } => (ops::decompose(&morphism)?, output),
        Command::Extend {
            towers,
            traces,
            h,
            depth,
            output,
        } => (ops::extend(&towers, &traces, &h, depth)?, output),
        Command::Retract {
            k,
            measure,
            budget,
            output,
        } => (ops::retract(&k, &measure, budget)?, output),
        Command::Homogeneity {
            tower,
            sources,
            targets,
            pinned,
            depth,
            output,
        } => (
            ops::homogeneity(&tower, &sources, &targets, &pinned, depth)?,
            output,
        ),
        Command::Verify {
            tower,
            depth,
            bound,
            output,
        } => (ops::verify(&tower, depth, bound)?, output),
        Command::Valueset { action } => match action {
            ValuesetAction::Check {
                kind,
                bound,
                output,
            } => (ops::valueset_check(&kind, bound)?, output),
            ValuesetAction::Classify { set, output } => (ops::valueset_classify(&set)?, output),
        },
        Command::ExportDot {
            tower,
            trace,
            family,
            output,
        } => (
            ops::export_dot_cmd(&tower, trace.as_deref(), family.as_deref())?,
            output,
        ),
    };
    ops::write_output(output.as_deref(), &outcome.text)?;
    if let Some(reason) = outcome.failure {
        return Err(CliError::Receipt(reason));
    }
    Ok(())
}
