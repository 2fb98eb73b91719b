use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::Serialize;

use warsim::engine::{verify_log, Engine, EngineError, RunLog, StopReason};
use warsim::eval::{aggregate, evaluate_run, format_table, Aggregate, Scores};
use warsim::policy::CacheMode;
use warsim::roster::Roster;
use warsim::scenario::{resolve_scenario, GroundTruthSets};
use warsim::worldstate::{render_board, translate_board, Board};

use crate::setup::{build_policies, usage, Invocation, PolicyKind, SimArgs};

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Run directory [default: runs/<scenario>-<policy>-<seed>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replace an existing run directory
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct CounterfactualArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Number of runs; run i uses seed + i
    #[arg(long, default_value_t = 3)]
    pub runs: u32,
    /// Runs executed concurrently
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Experiment directory [default: experiments/<scenario>-<policy>-<seed>]
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run directory; repeatable
    #[arg(long)]
    pub run: Vec<PathBuf>,
    /// Glob matching run directories
    #[arg(long)]
    pub glob: Option<String>,
    /// Scenario holding the ground truth [default: the run's scenario]
    #[arg(long)]
    pub ground_truth: Option<String>,
    /// Snapshot round [default: the run's configured snapshot]
    #[arg(long)]
    pub round: Option<u32>,
    /// JSON report path [default: <run>/eval.json for one run, else eval.json]
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Round to print [default: last recorded]
    #[arg(long, conflicts_with = "all")]
    pub round: Option<u32>,
    /// Write one file per recorded round
    #[arg(long)]
    pub all: bool,
    /// Directory for --all [default: <run>/render]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Only check the log against the transition rules
    #[arg(long)]
    pub verify_only: bool,
    /// Chat cache to replay from [default: the recorded one]
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Directory for the re-executed run [default: <run>.replay]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn policy_name(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::Chat => "chat",
        PolicyKind::Scripted => "scripted",
        PolicyKind::Random => "random",
    }
}

/// Refuses to clobber anything but an earlier run directory, and that only
/// with `force`.
fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if !dir.exists() {
        return Ok(());
    }
    let is_run = dir.join("config.json").is_file() || dir.join("manifest.json").is_file();
    let empty = dir
        .read_dir()
        .with_context(|| format!("reading {}", dir.display()))?
        .next()
        .is_none();
    if empty {
        return Ok(());
    }
    if !is_run {
        return Err(usage(format!("{} exists and is not a run directory", dir.display())));
    }
    if !force {
        return Err(usage(format!("{} already holds a run; pass --force to replace it", dir.display())));
    }
    std::fs::remove_dir_all(dir).with_context(|| format!("removing {}", dir.display()))
}

fn execute(inv: &Invocation, out: &Path, mode: CacheMode) -> Result<RunLog> {
    let policies = build_policies(&inv.policy, &inv.scenario, mode)?;
    let engine = Engine::new(&inv.scenario, policies, inv.config.clone())
        .map_err(|e| usage(e.to_string()))?;
    inv.write(out)?;
    engine
        .with_overlay_digest(inv.overlay_digest.clone())
        .with_output(out)
        .run()
        .with_context(|| format!("run aborted, partial log in {}", out.display()))
}

pub fn run(args: RunArgs) -> Result<()> {
    let inv = args.sim.invocation(args.sim.seed)?;
    let out = args.out.unwrap_or_else(|| {
        PathBuf::from("runs").join(format!(
            "{}-{}-{}",
            inv.scenario.id,
            policy_name(inv.policy.kind),
            args.sim.seed
        ))
    });
    prepare_dir(&out, args.force)?;
    let log = execute(&inv, &out, args.sim.mode.into())?;
    println!("termination: {}", log.termination);
    println!("rounds: {}", log.rounds.len());
    println!("output: {}", out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct ManifestRun {
    seed: u64,
    dir: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    termination: Option<StopReason>,
    rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    scenario_id: String,
    policy: PolicyKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    overlay_digest: Option<String>,
    overlays: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trigger: Option<String>,
    attitude: String,
    anonymized: bool,
    max_rounds: u32,
    runs: Vec<ManifestRun>,
}

pub fn counterfactual(args: CounterfactualArgs) -> Result<()> {
    if args.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let sim = &args.sim;
    let invocations = (0..args.runs as u64)
        .map(|i| sim.invocation(sim.seed + i))
        .collect::<Result<Vec<_>>>()?;
    let first = &invocations[0];
    let out = args.out.clone().unwrap_or_else(|| {
        PathBuf::from("experiments").join(format!(
            "{}-{}-{}",
            first.scenario.id,
            policy_name(first.policy.kind),
            sim.seed
        ))
    });
    prepare_dir(&out, args.force)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let mode: CacheMode = sim.mode.into();
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<ManifestRun>>> =
        invocations.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..args.jobs.min(invocations.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(inv) = invocations.get(i) else { break };
                let name = format!("seed_{}", inv.config.seed);
                let dir = out.join(&name);
                let outcome = execute(inv, &dir, mode);
                let entry = match outcome {
                    Ok(log) => ManifestRun {
                        seed: inv.config.seed,
                        dir: name,
                        termination: Some(log.termination),
                        rounds: log.rounds.len(),
                        error: None,
                    },
                    Err(e) => ManifestRun {
                        seed: inv.config.seed,
                        dir: name,
                        termination: None,
                        rounds: RunLog::load(&dir).map(|l| l.rounds.len()).unwrap_or(0),
                        error: Some(format!("{e:#}")),
                    },
                };
                *results[i].lock().expect("result slot") = Some(entry);
            });
        }
    });

    let runs: Vec<ManifestRun> = results
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every run reports"))
        .collect();
    let failed = runs.iter().filter(|r| r.error.is_some()).count();
    for r in &runs {
        match (&r.termination, &r.error) {
            (Some(t), _) => println!("seed {}: {} after {} rounds", r.seed, t, r.rounds),
            (None, Some(e)) => println!("seed {}: failed: {e}", r.seed),
            (None, None) => unreachable!(),
        }
    }
    let manifest = Manifest {
        scenario_id: first.scenario.id.clone(),
        policy: first.policy.kind,
        overlay_digest: first.overlay_digest.clone(),
        overlays: sim.overlay.clone(),
        trigger: sim.trigger.clone(),
        attitude: first.scenario.attitude.to_string(),
        anonymized: sim.anonymize,
        max_rounds: first.config.max_rounds,
        runs,
    };
    let path = out.join("manifest.json");
    write_json(&path, &manifest)?;
    println!("manifest: {}", path.display());
    if failed > 0 {
        bail!("{failed} of {} runs failed", args.runs);
    }
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_log(dir: &Path) -> Result<RunLog> {
    RunLog::load(dir).with_context(|| format!("loading run {}", dir.display()))
}

/// Ground truth named against the run's roster, trying the anonymized
/// spelling when the plain one does not resolve.
fn ground_truth(name: &str, roster: &Roster) -> Result<GroundTruthSets> {
    let scenario = resolve_scenario(name).map_err(|e| usage(format!("ground truth: {e}")))?;
    match scenario.ground_truth.resolve(roster) {
        Ok(gt) => Ok(gt),
        Err(plain) => scenario
            .anonymize()
            .ok()
            .and_then(|a| a.ground_truth.resolve(roster).ok())
            .ok_or_else(|| anyhow!("ground truth of {name} does not match the run: {plain}")),
    }
}

#[derive(Debug, Serialize)]
struct EvalRow {
    run: String,
    scores: Scores,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    runs: Vec<EvalRow>,
    aggregate: Aggregate,
}

fn label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let mut dirs = args.run.clone();
    if let Some(pattern) = &args.glob {
        let mut matched: Vec<PathBuf> = glob::glob(pattern)
            .map_err(|e| usage(format!("--glob: {e}")))?
            .filter_map(|p| p.ok())
            .filter(|p| p.join("rounds.jsonl").is_file())
            .collect();
        matched.sort();
        if matched.is_empty() {
            bail!("no run directories match {pattern}");
        }
        dirs.extend(matched);
    }
    if dirs.is_empty() {
        return Err(usage("pass --run or --glob"));
    }

    let mut truths: BTreeMap<String, GroundTruthSets> = BTreeMap::new();
    let mut rows = Vec::new();
    for dir in &dirs {
        let log = load_log(dir)?;
        let name = args
            .ground_truth
            .clone()
            .unwrap_or_else(|| log.header.scenario_id.clone());
        let key = format!("{name}\u{0}{}", log.roster().names().join(","));
        if !truths.contains_key(&key) {
            truths.insert(key.clone(), ground_truth(&name, log.roster())?);
        }
        let round = args.round.unwrap_or(log.header.config.eval_snapshot_round);
        let scores = evaluate_run(&log, &truths[&key], round)
            .with_context(|| format!("evaluating {}", dir.display()))?;
        rows.push((label(dir), scores));
    }
    let agg = aggregate(&rows.iter().map(|(_, s)| s.clone()).collect::<Vec<_>>())?;
    print!("{}", format_table(&rows, &agg));

    let output = args.output.clone().unwrap_or_else(|| match dirs.as_slice() {
        [one] => one.join("eval.json"),
        _ => PathBuf::from("eval.json"),
    });
    let report = EvalReport {
        runs: rows
            .into_iter()
            .map(|(run, scores)| EvalRow { run, scores })
            .collect(),
        aggregate: agg,
    };
    write_json(&output, &report)?;
    println!("report: {}", output.display());
    Ok(())
}

pub fn board_text(log: &RunLog, round: u32) -> Result<String> {
    let record = log.round(round).ok_or_else(|| {
        usage(format!("round {round} not recorded (run has {})", log.rounds.len()))
    })?;
    let board = Board::from_snapshot(&record.board).map_err(|e| anyhow!("round {round}: {e}"))?;
    Ok(format!(
        "{}\n{}\n",
        render_board(&board, log.roster()),
        translate_board(&board, log.roster())
    ))
}

pub fn render(args: RenderArgs) -> Result<()> {
    let log = load_log(&args.run)?;
    if log.rounds.is_empty() {
        bail!("{} has no recorded rounds", args.run.display());
    }
    if !args.all {
        let round = args.round.unwrap_or(log.rounds.len() as u32);
        print!("{}", board_text(&log, round)?);
        return Ok(());
    }
    let out = args.out.clone().unwrap_or_else(|| args.run.join("render"));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for r in &log.rounds {
        let path = out.join(format!("round_{}.txt", r.round));
        std::fs::write(&path, board_text(&log, r.round)?)
            .with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

pub fn replay(args: ReplayArgs) -> Result<()> {
    let log = load_log(&args.run)?;
    verify_log(&log).with_context(|| format!("verifying {}", args.run.display()))?;
    println!("verified: {} rounds consistent with the transition rules", log.rounds.len());
    if args.verify_only {
        return Ok(());
    }
    let mut inv = Invocation::load(&args.run)
        .context("re-execution needs the run's invocation.json (use --verify-only to skip)")?;
    if let Some(cache) = &args.cache {
        inv.policy.cache = cache.clone();
    }
    let out = args.out.clone().unwrap_or_else(|| {
        let mut name = args.run.as_os_str().to_owned();
        name.push(".replay");
        PathBuf::from(name)
    });
    prepare_dir(&out, true)?;
    let again = execute(&inv, &out, CacheMode::Replay)?;

    let read = |d: &Path| {
        let p = d.join("rounds.jsonl");
        std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))
    };
    let (before, after) = (read(&args.run)?, read(&out)?);
    if before != after || again.termination != log.termination {
        let (round, detail) = before
            .lines()
            .zip(after.lines())
            .position(|(a, b)| a != b)
            .map(|i| (i as u32 + 1, "round records differ".to_string()))
            .unwrap_or((
                again.rounds.len().min(log.rounds.len()) as u32,
                format!(
                    "{} rounds recorded, {} replayed",
                    log.rounds.len(),
                    again.rounds.len()
                ),
            ));
        return Err(EngineError::Divergence { round, detail }.into());
    }
    println!("replay identical: {}", out.display());
    Ok(())
}
