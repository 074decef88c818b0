use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cilsynth::certificate::VerifyReport;
use cilsynth::classifier::{fit_measurement_map, Dataset, Pair};
use cilsynth::experiment::{build_contexts, run_case_study, sample_starts, training_grid, BankFile, ExperimentConfig, RunManifest};
use cilsynth::io::{read_json, write_json};
use cilsynth::model::FrenetState;
use cilsynth::sim::{generate_dataset, simulate_batch, PlantOutcome, PlantRun};
use cilsynth::training::pgd_train;
use cilsynth::{Error, Result};

/// Certified classifier-in-the-loop synthesis toolkit.
#[derive(Parser)]
#[command(name = "cilsynth", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render the training grid into a dataset CSV.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Apply the mislabeling transform.
        #[arg(long)]
        mislabel: bool,
        /// Use the case-study field of view.
        #[arg(long)]
        case_fov: bool,
    },
    /// Fit a polynomial measurement map and linearize it at a state.
    FitMap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Expansion point, e.g. `0,0.25`; defaults to the mean state.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        at: Option<Vec<f64>>,
        #[arg(long, default_value_t = 2)]
        degree: u32,
    },
    /// Train a classifier bank, optionally with certified projections.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Project the configured pairs onto certified classifiers.
        #[arg(long, conflicts_with = "unconstrained")]
        constrained: bool,
        #[arg(long)]
        unconstrained: bool,
    },
    /// Re-check every embedded certificate; exit 1 on any failure.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bank: PathBuf,
    },
    /// Closed-loop plant runs from a list of starts.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        bank: PathBuf,
        /// Starts as `psi,d`; repeatable. Without it, random starts are drawn.
        #[arg(long = "x0", value_parser = parse_pair, allow_hyphen_values = true)]
        x0: Vec<(f64, f64)>,
        /// Horizon; overrides the configured one.
        #[arg(long)]
        t_end: Option<f64>,
        /// Use the case-study field of view.
        #[arg(long)]
        case_fov: bool,
    },
    /// Full case study: data, C1 and C2 training, verification, simulation.
    Casestudy {
        #[command(flatten)]
        common: Common,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected psi,d")?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t}: {e}"));
    Ok((num(a)?, num(b)?))
}

enum Failure {
    Verify(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

fn load_config(c: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let text = match &c.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut cfg = ExperimentConfig::from_json_with_env(text.as_deref(), std::env::vars())?;
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.run.output = o.to_string_lossy().into_owned();
    }
    let out = PathBuf::from(&cfg.run.output);
    Ok((cfg, out))
}

struct Outputs<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl Outputs<'_> {
    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        write_json(&self.dir.join(name), v)?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn record(&mut self, name: &str) {
        self.manifest.outputs.push(name.into());
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.outputs.push("manifest.json".into());
        write_json(&self.dir.join("manifest.json"), &self.manifest)
    }
}

#[derive(Serialize)]
struct PairVerification {
    pair: Pair,
    report: VerifyReport,
}

#[derive(Serialize)]
struct VerifySummary {
    passed: bool,
    note: Option<String>,
    pairs: Vec<PairVerification>,
}

fn verify_bank(bank: &BankFile) -> Result<VerifySummary> {
    let mut pairs = Vec::new();
    for (p, cert) in &bank.certificates {
        let report = cert.verify(&bank.bank.get(*p).stacked())?;
        pairs.push(PairVerification { pair: *p, report });
    }
    let note = pairs.is_empty().then(|| "nothing to verify".to_string());
    Ok(VerifySummary { passed: pairs.iter().all(|p| p.report.feasible), note, pairs })
}

fn verify_failure(s: &VerifySummary) -> Option<String> {
    let bad: Vec<String> = s
        .pairs
        .iter()
        .filter(|p| !p.report.feasible)
        .map(|p| {
            let names: Vec<&str> = p.report.residuals.iter().filter(|r| !r.ok).map(|r| r.name.as_str()).take(3).collect();
            format!("{}: {}", p.pair.key(), names.join("; "))
        })
        .collect();
    (!bad.is_empty()).then(|| bad.join(" | "))
}

#[derive(Serialize)]
struct RunSummary {
    index: usize,
    psi0: f64,
    d0: f64,
    outcome: Option<PlantOutcome>,
    converged: bool,
    crashed: bool,
    switches: usize,
    progress: f64,
    final_distance: f64,
    error: Option<String>,
}

fn summarize(k: usize, x0: FrenetState, run: &Result<PlantRun>) -> RunSummary {
    let base = RunSummary {
        index: k,
        psi0: x0.psi,
        d0: x0.d,
        outcome: None,
        converged: false,
        crashed: false,
        switches: 0,
        progress: 0.0,
        final_distance: f64::NAN,
        error: None,
    };
    match run {
        Ok(r) => RunSummary {
            outcome: Some(r.outcome),
            converged: matches!(r.outcome, PlantOutcome::Converged { .. }),
            crashed: matches!(r.outcome, PlantOutcome::Crash { .. }),
            switches: r.switches,
            progress: r.progress,
            final_distance: r.final_distance,
            ..base
        },
        Err(e) => RunSummary { error: Some(e.to_string()), ..base },
    }
}

fn write_runs(out: &mut Outputs, prefix: &str, starts: &[FrenetState], runs: &[Result<PlantRun>]) -> Result<Vec<RunSummary>> {
    let mut sums = Vec::new();
    for (k, (x0, run)) in starts.iter().zip(runs).enumerate() {
        if let Ok(r) = run {
            let name = format!("{prefix}_{k:02}.csv");
            r.trajectory.write_csv(&out.dir.join(&name))?;
            out.record(&name);
        }
        sums.push(summarize(k, *x0, run));
    }
    Ok(sums)
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    match cli.cmd {
        Cmd::Generate { common, mislabel, case_fov } => {
            let (mut cfg, dir) = load_config(&common)?;
            cfg.case.mislabel = mislabel;
            let mut out = Outputs { dir: &dir, manifest: RunManifest::new("generate", &cfg)? };
            let t = Instant::now();
            let world = if case_fov { cfg.case_world() } else { cfg.world.clone() };
            let data = generate_dataset(&world, &training_grid(&cfg), cfg.run.seed)?;
            data.write_csv(&dir.join("dataset.csv"))?;
            out.record("dataset.csv");
            out.json("world.json", &world)?;
            out.manifest.stage("generate", t);
            out.finish()?;
        }
        Cmd::FitMap { common, data, at, degree } => {
            let (cfg, dir) = load_config(&common)?;
            let mut out = Outputs { dir: &dir, manifest: RunManifest::new("fit-map", &cfg)? };
            let t = Instant::now();
            let ds = Dataset::read_csv(&data)?;
            let map = fit_measurement_map(&ds, degree, at.as_deref())?;
            out.json("map.json", &map)?;
            out.manifest.stage("fit-map", t);
            out.finish()?;
        }
        Cmd::Train { common, data, constrained, unconstrained: _ } => {
            let (cfg, dir) = load_config(&common)?;
            let mut out = Outputs { dir: &dir, manifest: RunManifest::new("train", &cfg)? };
            let t = Instant::now();
            let ds = Dataset::read_csv(&data)?;
            let contexts = if constrained { build_contexts(&cfg, &ds)? } else { BTreeMap::new() };
            let trained = pgd_train(&ds, &cfg.train, &contexts)?;
            for (p, c) in &trained.certificates {
                if !c.success {
                    out.manifest.warnings.push(format!("pair {} projection unconverged, slack {:.3e}", p.key(), c.slack_l1));
                }
            }
            out.json("bank.json", &BankFile::new(trained.bank, trained.certificates))?;
            trained.trace.write_csv(&dir.join("train_trace.csv"))?;
            out.record("train_trace.csv");
            for (p, tr) in &trained.acs_traces {
                let name = format!("acs_trace_{}.csv", p.key());
                tr.write_csv(&dir.join(&name))?;
                out.record(&name);
            }
            out.manifest.stage("train", t);
            out.finish()?;
        }
        Cmd::Verify { common, bank } => {
            let (cfg, dir) = load_config(&common)?;
            let mut out = Outputs { dir: &dir, manifest: RunManifest::new("verify", &cfg)? };
            let t = Instant::now();
            let b: BankFile = read_json(&bank)?;
            let summary = verify_bank(&b)?;
            out.json("verify.json", &summary)?;
            out.manifest.stage("verify", t);
            out.finish()?;
            if let Some(msg) = verify_failure(&summary) {
                return Err(Failure::Verify(msg));
            }
        }
        Cmd::Simulate { common, bank, x0, t_end, case_fov } => {
            let (mut cfg, dir) = load_config(&common)?;
            if let Some(t) = t_end {
                cfg.plant.t_end = t;
            }
            let mut out = Outputs { dir: &dir, manifest: RunManifest::new("simulate", &cfg)? };
            let t = Instant::now();
            let b: BankFile = read_json(&bank)?;
            let starts = if x0.is_empty() {
                sample_starts(&cfg, cfg.run.seed)?
            } else {
                x0.iter().map(|&(p, d)| FrenetState::new(p, d)).collect::<Result<Vec<_>>>()?
            };
            let world = if case_fov { cfg.case_world() } else { cfg.world.clone() };
            let runs = simulate_batch(&b.bank, &world, &starts, &cfg.plant, &cfg.criteria, cfg.run.seed);
            let sums = write_runs(&mut out, "trajectory", &starts, &runs)?;
            out.json("summary.json", &sums)?;
            out.manifest.stage("simulate", t);
            out.finish()?;
        }
        Cmd::Casestudy { common } => {
            let (cfg, dir) = load_config(&common)?;
            let mut out = Outputs { dir: &dir, manifest: RunManifest::new("casestudy", &cfg)? };
            let t = Instant::now();
            let rep = run_case_study(&cfg)?;
            out.manifest.stages.push(cilsynth::experiment::StageTime { stage: "generate+fit+train".into(), seconds: rep.train_seconds });
            out.json("bank_c1.json", &BankFile::new(rep.unconstrained.clone(), BTreeMap::new()))?;
            let c2 = BankFile::new(rep.constrained.clone(), rep.certificates.clone());
            out.json("bank_c2.json", &c2)?;
            rep.trace_c2.write_csv(&dir.join("train_trace_c2.csv"))?;
            out.record("train_trace_c2.csv");
            let summary = verify_bank(&c2)?;
            out.json("verify_c2.json", &summary)?;
            let ok = |v: &Vec<PlantRun>| v.iter().cloned().map(Ok).collect::<Vec<Result<PlantRun>>>();
            let s1 = write_runs(&mut out, "c1", &rep.starts, &ok(&rep.runs_c1))?;
            let s2 = write_runs(&mut out, "c2", &rep.starts, &ok(&rep.runs_c2))?;
            out.json("summary_c1.json", &s1)?;
            out.json("summary_c2.json", &s2)?;
            out.json("comparison.json", &rep)?;
            out.manifest.stage("casestudy", t);
            for p in rep.pairs.iter().filter(|p| !p.success) {
                out.manifest.warnings.push(format!("pair {} projection unconverged, slack {:.3e}", p.pair.key(), p.slack_l1));
            }
            out.finish()?;
            println!("C1 failures {}/{}; C2 converged {}/{}", rep.c1_failures, rep.starts.len(), rep.c2_converged, rep.starts.len());
            if let Some(msg) = verify_failure(&summary) {
                return Err(Failure::Verify(msg));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) | Error::Domain(_) | Error::Empty(_) => 3,
                _ => 2,
            })
        }
    }
}
