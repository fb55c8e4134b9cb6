//! `skewpulse`: stability analysis of standing pulses from a JSON config.

mod config;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

use config::{LoadedConfig, RunConfig};
use pipeline::{envelope, Outcome};

const EXIT_HYPOTHESES: u8 = 3;
const EXIT_CROSS_CHECK: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "skewpulse", version, about = "Maslov-index stability analysis of standing pulses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pulse profiles.
    #[command(subcommand)]
    Pulse(PulseCmd),
    /// Structural hypotheses (H1), (H2) and the derived constants.
    #[command(subcommand)]
    Hyp(HypCmd),
    /// Stability index, spectral flow and the criterion integral.
    #[command(subcommand)]
    Index(IndexCmd),
    /// Eigenvalues of the discretised linearisation.
    #[command(subcommand)]
    Spectrum(SpectrumCmd),
    /// Time integration of a perturbed pulse.
    #[command(subcommand)]
    Evolve(EvolveCmd),
    /// Full pipeline; exits 10 if unstable, 0 if stable, 2 if inconclusive.
    Verdict(Common),
    /// Everything, written to a directory as JSON plus plot CSVs.
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Debug, Subcommand)]
enum PulseCmd {
    /// Solve for the pulse and write `profile.csv` with a JSON sidecar.
    Solve(Common),
}

#[derive(Debug, Subcommand)]
enum HypCmd {
    /// Exits 3 when (H1) or (H2) fails. Without a profile the bounds use
    /// `hypotheses.amplitude_bound`.
    Check(Common),
}

#[derive(Debug, Subcommand)]
enum IndexCmd {
    /// Crossings of E^u(tau) with Lambda_R.
    Maslov(Common),
    /// Spectral flow over [0, lambda_max].
    Sf(Common),
    /// Criterion integral and tau0.
    Criterion(Common),
}

#[derive(Debug, Subcommand)]
enum SpectrumCmd {
    Eig(Common),
}

#[derive(Debug, Subcommand)]
enum EvolveCmd {
    Run(Common),
}

#[derive(Debug, Subcommand)]
enum ReportCmd {
    /// Needs `-o DIR`.
    All(Common),
}

#[derive(Debug, Clone, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Pulse profile CSV; solved from the config when absent.
    #[arg(short, long)]
    profile: Option<PathBuf>,
    /// Output file (a directory for `report all`, the profile CSV for `pulse solve`).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Print the JSON report on stdout instead of a summary.
    #[arg(long)]
    json: bool,
    /// Overrides `evolve.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn defaults_help() -> String {
    let defaults = RunConfig {
        model: config::ModelSection::Scalar,
        pulse: Default::default(),
        hypotheses: Default::default(),
        index: Default::default(),
        spectrum: Default::default(),
        evolve: Default::default(),
    };
    let json = serde_json::to_string_pretty(&defaults).expect("defaults serialize");
    format!(
        "CONFIG\n  A JSON object. Only `model` is required; unknown keys are rejected.\n  \
         model.kind is one of `fhn` (d, tau, gamma, beta), `scalar`, or\n  \
         `polynomial-potential` (activators, m, d, terms: [{{coeff, powers}}]).\n\n\
         DEFAULTS\n{json}\n\n\
         EXIT CODES\n  0 success or stable, 10 unstable, 2 inconclusive, 3 hypotheses fail,\n  \
         4 internal cross-check failed, 1 any other error"
    )
}

fn emit<T: Serialize>(cfg: &LoadedConfig, args: &Common, kind: &'static str, report: &T, summary: &str) -> Result<()> {
    let text = serde_json::to_string_pretty(&envelope(cfg, kind, report))? + "\n";
    if let Some(out) = &args.output {
        std::fs::write(out, &text).with_context(|| format!("writing {}", out.display()))?;
    }
    if args.json {
        print!("{text}");
    } else {
        println!("{summary}");
    }
    Ok(())
}

fn load(args: &Common) -> Result<LoadedConfig> {
    config::load(&args.config)
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Pulse(PulseCmd::Solve(args)) => {
            let cfg = load(&args)?;
            let model = cfg.config.model.build()?;
            let profile = pipeline::solve(&cfg, &model)?;
            let out = args.output.clone().unwrap_or_else(|| PathBuf::from("profile.csv"));
            skewpulse::pulse::save_profile(&profile, &out)?;
            let s = pipeline::pulse_summary(&profile);
            let summary = format!(
                "pulse: {} points on [-{}, {}], amplitude {:.6}, residual {:.2e} -> {}",
                s.points,
                s.half_width,
                s.half_width,
                s.amplitude,
                s.residual_norm,
                out.display()
            );
            if args.json {
                print!("{}", serde_json::to_string_pretty(&envelope(&cfg, "pulse", &s))? + "\n");
            } else {
                println!("{summary}");
            }
            Ok(0)
        }
        Command::Hyp(HypCmd::Check(args)) => {
            let cfg = load(&args)?;
            let model = cfg.config.model.build_relaxed()?;
            let profile = match &args.profile {
                Some(p) => Some(pipeline::profile(&cfg, &model, Some(p))?),
                None => None,
            };
            let hyp = pipeline::hypotheses(&cfg, &model, profile.as_ref())?;
            let summary = format!(
                "H1 {} (c2 = {:.6}), H2 {}, lambda_hat = {:.6}, epsilon_max = {:.6}",
                holds(hyp.h1_holds),
                hyp.c2,
                holds(hyp.h2_holds),
                hyp.lambda_hat,
                hyp.epsilon_max
            );
            emit(&cfg, &args, "hypotheses", &hyp, &summary)?;
            Ok(if hyp.holds() { 0 } else { EXIT_HYPOTHESES })
        }
        Command::Index(cmd) => {
            let (args, which) = match cmd {
                IndexCmd::Maslov(a) => (a, "maslov"),
                IndexCmd::Sf(a) => (a, "sf"),
                IndexCmd::Criterion(a) => (a, "criterion"),
            };
            let cfg = load(&args)?;
            let model = cfg.config.model.build()?;
            let profile = pipeline::profile(&cfg, &model, args.profile.as_deref())?;
            match which {
                "maslov" => {
                    let si = pipeline::maslov(&cfg, &model, &profile)?;
                    let summary = format!("i(w0) = {} from {} crossing(s), T_cap = {}", si.i_w0, si.crossings.len(), si.t_cap);
                    emit(&cfg, &args, "index-maslov", &si, &summary)?;
                }
                "sf" => {
                    let hyp = pipeline::hypotheses(&cfg, &model, Some(&profile))?;
                    let lmax = pipeline::lambda_max(&cfg, &hyp);
                    let flow = pipeline::sf(&cfg, &model, &profile, lmax)?;
                    let summary = format!("sf over [0, {lmax:.6}] = {} ({} crossing(s))", flow.value, flow.crossings.len());
                    emit(&cfg, &args, "index-sf", &flow, &summary)?;
                }
                _ => {
                    let c = pipeline::criterion_of(&model, &profile)?;
                    let tau0 = c.tau0.map(|t| format!(", tau0 = {t:.6}")).unwrap_or_default();
                    let summary = format!("criterion integral = {:.6e}{tau0}", c.integral.value);
                    emit(&cfg, &args, "index-criterion", &c, &summary)?;
                }
            }
            Ok(0)
        }
        Command::Spectrum(SpectrumCmd::Eig(args)) => {
            let cfg = load(&args)?;
            let model = cfg.config.model.build()?;
            let profile = pipeline::profile(&cfg, &model, args.profile.as_deref())?;
            let rep = pipeline::spectrum(&cfg, &model, &profile)?;
            let summary = format!(
                "N+ = {}, zero cluster {}, spectral abscissa {:.6e}, sufficiency {}",
                rep.n_plus,
                rep.zero_cluster,
                rep.spectral_abscissa(),
                holds(rep.sufficiency_ok)
            );
            emit(&cfg, &args, "spectrum", &rep, &summary)?;
            Ok(0)
        }
        Command::Evolve(EvolveCmd::Run(args)) => {
            let cfg = load(&args)?;
            let model = cfg.config.model.build()?;
            let profile = pipeline::profile(&cfg, &model, args.profile.as_deref())?;
            let seed = args.seed.unwrap_or(cfg.config.evolve.seed);
            let (_, rep) = pipeline::evolution(&cfg, &model, &profile, seed)?;
            let summary = match &rep.fit {
                Some(f) => format!(
                    "growth rate {:.6e} (R^2 {:.4}{}), t reached {}",
                    f.rate,
                    f.r_squared,
                    if f.low_confidence { ", low confidence" } else { "" },
                    rep.summary.t_reached
                ),
                None => format!("no growth fit: {}", rep.fit_error.as_deref().unwrap_or("unknown")),
            };
            emit(&cfg, &args, "evolution", &rep, &summary)?;
            Ok(0)
        }
        Command::Verdict(args) => full(&args, false),
        Command::Report(ReportCmd::All(args)) => full(&args, true),
    }
}

fn holds(b: bool) -> &'static str {
    if b {
        "holds"
    } else {
        "fails"
    }
}

fn full(args: &Common, everything: bool) -> Result<u8> {
    let cfg = load(args)?;
    let dir = if everything {
        Some(args.output.clone().context("`report all` needs -o DIR")?)
    } else {
        None
    };
    let seed = args.seed.unwrap_or(cfg.config.evolve.seed);
    let pipe = match pipeline::run_all(&cfg, args.profile.as_deref(), everything, seed)? {
        Outcome::HypothesesFail(hyp) => {
            let plain = Common { output: None, ..args.clone() };
            emit(&cfg, &plain, "hypotheses", &hyp, "hypotheses fail; no verdict")?;
            return Ok(EXIT_HYPOTHESES);
        }
        Outcome::Done(p) => p,
    };
    let r = &pipe.report;
    let summary = format!(
        "{}\n  i(w0) = {}, sf = {}, N+ = {}, criterion integral = {:.6e}",
        r.index.verdict, r.index.i_w0, r.index.spectral_flow, r.spectrum.n_plus, r.index.criterion_integral
    );
    match &dir {
        Some(d) => {
            pipeline::write_plot_files(d, &pipe)?;
            let plain = Common { output: Some(d.join("report.json")), ..args.clone() };
            emit(&cfg, &plain, "report", r, &summary)?;
        }
        None => emit(&cfg, args, "verdict", r, &summary)?,
    }
    if !r.cross_check.passed() {
        eprintln!("internal cross-check failed: {}", r.cross_check.failures.join("; "));
        return Ok(EXIT_CROSS_CHECK);
    }
    Ok(r.index.verdict.exit_code() as u8)
}

fn main() -> ExitCode {
    let matches = Cli::command().after_long_help(defaults_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

