//! `almterm`: decides whether CLP programs are recurrent with respect to an
//! affine level mapping.

mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use almterm_core::alm::{analyze, DecideOptions};
use almterm_core::derive::check_length_bound_capped;
use almterm_core::model::Domain;
use almterm_core::parser::parse_program;
use almterm_core::verify::verify;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use config::Config;
use report::Report;

#[derive(Parser, Debug)]
#[command(name = "almterm", version, about = "Termination analysis of CLP programs via affine level mappings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyze one or more `.clp` files.
    Check(CheckArgs),
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(required = true, value_name = "FILE")]
    files: Vec<PathBuf>,
    /// Constraint domain [default: q].
    #[arg(long, value_parser = ["q", "q+", "r", "r+", "n"])]
    domain: Option<String>,
    /// Include the level mapping found.
    #[arg(long)]
    witness: bool,
    /// Include the constraints on the mapping's coefficients.
    #[arg(long)]
    project: bool,
    /// Re-check the witness rule by rule (default).
    #[arg(long, overrides_with = "no_verify")]
    verify: bool,
    #[arg(long, overrides_with = "verify")]
    no_verify: bool,
    /// Run N random ground derivations against the length bound.
    #[arg(long, value_name = "N")]
    sample: Option<usize>,
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    #[arg(long, value_name = "M")]
    max_steps: Option<usize>,
    /// One JSON report per line instead of text.
    #[arg(long)]
    json: bool,
    /// `key = value` defaults, overridden by flags.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Settings {
    domain: Domain,
    witness: bool,
    project: bool,
    verify: bool,
    sample: Option<usize>,
    seed: u64,
    max_steps: usize,
    json: bool,
}

const DEFAULT_MAX_STEPS: usize = 1000;

fn settings(args: &CheckArgs) -> Result<Settings, String> {
    let cfg = match &args.config {
        Some(p) => Config::load(p).map_err(|e| e.to_string())?,
        None => Config::default(),
    };
    let tag = args.domain.clone().or(cfg.domain).unwrap_or_else(|| "q".to_string());
    let domain = Domain::from_tag(&tag).ok_or_else(|| format!("unknown domain `{tag}`"))?;
    let verify = if args.no_verify {
        false
    } else if args.verify {
        true
    } else {
        cfg.verify.unwrap_or(true)
    };
    let sample = args.sample.or(cfg.sample);
    let seed = args.seed.or(cfg.seed);
    let max_steps = args.max_steps.or(cfg.max_steps);
    if sample.is_none() && (seed.is_some() || max_steps.is_some()) {
        return Err("--seed and --max-steps only apply together with --sample".to_string());
    }
    Ok(Settings {
        domain,
        witness: args.witness || cfg.witness.unwrap_or(false),
        project: args.project || cfg.project.unwrap_or(false),
        verify,
        sample,
        seed: seed.unwrap_or(0),
        max_steps: max_steps.unwrap_or(DEFAULT_MAX_STEPS),
        json: args.json || cfg.json.unwrap_or(false),
    })
}

fn check_file(path: &PathBuf, s: &Settings) -> Report {
    let file = path.display().to_string();
    let tag = s.domain.tag();
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return Report::io_error(&file, tag, format!("cannot read {file}: {e}")),
    };
    let program = match parse_program(&text) {
        Ok(p) => p,
        Err(e) => return Report::parse_error(&file, tag, &e.with_file(file.clone())),
    };

    let analysis = analyze(&program, s.domain, DecideOptions { want_projection: s.project, ..Default::default() });
    let verdict = &analysis.verdict;
    let mut r = Report::empty(&file, tag);
    r.verdict = Some(verdict.kind().label().to_string());
    r.stats = Some(report::stats(&analysis));
    if s.witness {
        r.witness = verdict.witness().map(report::witness_entries);
    }
    r.projection = verdict.projection().map(report::projection_rows);

    let verified = match verdict.witness() {
        Some(w) if s.verify => match verify(&analysis.binary, w, s.domain) {
            Ok(v) => {
                if !v.passed() {
                    r.notes.push("the verifier rejected the witness; this indicates an internal error".to_string());
                }
                Some(v)
            }
            Err(e) => {
                r.notes.push(format!("verification failed: {e}"));
                None
            }
        },
        _ => None,
    };
    r.rules = report::rule_reports(&analysis, verified.as_ref());

    if let Some(n) = s.sample {
        match verdict.witness() {
            Some(w) => match check_length_bound_capped(&analysis.binary, w, n, s.seed, s.domain, Some(s.max_steps)) {
                Ok(b) => r.sampling = Some(report::sampling_report(&b, s.seed, s.max_steps)),
                Err(e) => r.notes.push(format!("sampling failed: {e}")),
            },
            None => r.notes.push("sampling skipped: no level mapping to bound derivation lengths".to_string()),
        }
    }

    if !program.is_binary() {
        r.notes.push("rules with several body atoms were split into one binary rule per atom".to_string());
    }
    match s.domain {
        Domain::N => r.notes.push(
            "over n the analysis is sound but incomplete: sound-yes proves recurrence, unknown proves nothing".to_string(),
        ),
        Domain::R | Domain::RPlus => r.notes.push(
            "reals are handled by the rational pipeline; LP feasibility with rational data is the same over q and r"
                .to_string(),
        ),
        _ => {}
    }
    r
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Check(args) = cli.command;
    let s = match settings(&args) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let reports: Vec<Report> = args.files.par_iter().map(|f| check_file(f, &s)).collect();
    for r in &reports {
        if s.json {
            println!("{}", serde_json::to_string(r).expect("reports serialise"));
        } else {
            print!("{}", report::render_text(r));
        }
    }
    let code = reports.iter().map(Report::exit_code).max().unwrap_or(0);
    ExitCode::from(code as u8)
}
