use std::fmt::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use clipquery::generator::{faulty_from_arg, GenerateSpec};
use clipquery::service::{self, AppState, Config};
use clipquery::{load_highway, store, tracefile};
use clipquery_core::highway::{render_ascii, render_frame, Driver, TrafficConfig};
use clipquery_core::search::find_all;
use clipquery_core::{CompileOptions, Constraint, Dfa, Formula, PropSpec, Query, QueryAutomata, SearchOptions};
use serde_json::json;

/// Temporal queries over recorded agent episodes.
///
/// Exit codes: 1 usage, 2 data (files, datasets, traces), 3 compile
/// (formula syntax, unknown predicates, automaton limits).
#[derive(Parser)]
#[command(name = "clipquery", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate highway episodes into a dataset directory.
    Generate(GenerateArgs),
    /// Search a dataset for clips matching a query.
    Query(QueryArgs),
    /// Compile a formula and describe its automaton.
    Compile(CompileArgs),
    /// Evaluate a formula directly on a trace.
    Check(CheckArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// plain, toplane or collision.
    #[arg(long, required_unless_present = "faulty", conflicts_with = "faulty")]
    policy: Option<String>,
    /// plain-toplane, plain-collision, or a JSON file with base, fault and trigger.
    #[arg(long)]
    faulty: Option<String>,
    #[arg(long, default_value_t = 100)]
    episodes: usize,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON traffic configuration; unspecified fields keep their defaults.
    #[arg(long)]
    traffic: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Start condition, e.g. `lanes=lane-2, car-above`.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    end: Option<String>,
    /// `changes:SPEC`, `stays:SPEC` or `changes-into:SPEC;SPEC`.
    #[arg(long)]
    constraint: Option<String>,
    #[arg(long, conflicts_with_all = ["start", "end", "constraint"])]
    ltlf: Option<String>,
    #[arg(long)]
    max: Option<usize>,
    #[arg(long, default_value_t = 2)]
    min_len: usize,
    #[arg(long, default_value_t = 5)]
    pad: usize,
    #[arg(long)]
    json: bool,
    /// Print ASCII frames of each match.
    #[arg(long)]
    frames: bool,
}

#[derive(Args)]
struct CompileArgs {
    #[arg(long)]
    ltlf: String,
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Describe the automaton before minimization instead.
    #[arg(long)]
    raw: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    ltlf: String,
    /// Trace file: one state per line, comma-separated predicate names.
    #[arg(long, required_unless_present = "dataset", conflicts_with = "dataset")]
    trace: Option<PathBuf>,
    /// Check the segment `--start..=--end` of an episode instead.
    #[arg(long, requires_all = ["episode", "start", "end"])]
    dataset: Option<PathBuf>,
    #[arg(long)]
    episode: Option<u64>,
    #[arg(long)]
    start: Option<usize>,
    #[arg(long)]
    end: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "CLIPQUERY_DATA", default_value = "data")]
    data: PathBuf,
    #[arg(long, env = "CLIPQUERY_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "CLIPQUERY_BIND", default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, env = "CLIPQUERY_PAGE_CAP", default_value_t = 16)]
    page_cap: usize,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 1,
        error: e.into(),
    }
}

fn data(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: e.into(),
    }
}

fn compile_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 3,
        error: e.into(),
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Query(a) => query(a),
        Command::Compile(a) => compile(a),
        Command::Check(a) => check(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn generate(a: GenerateArgs) -> Outcome {
    let traffic = match &a.traffic {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| path.display().to_string())
                .map_err(data)?;
            serde_json::from_str(&text)
                .context("traffic configuration")
                .map_err(usage)?
        }
        None => TrafficConfig::default(),
    };
    let mut spec = match (&a.policy, &a.faulty) {
        (Some(name), _) => {
            let driver = Driver::from_name(name).ok_or_else(|| usage(anyhow!("unknown policy `{name}`")))?;
            GenerateSpec::single(driver, a.episodes, a.steps, a.seed)
        }
        (None, Some(arg)) => GenerateSpec::faulty(faulty_from_arg(arg).map_err(usage)?, a.episodes, a.steps, a.seed),
        (None, None) => unreachable!("clap requires one of the two"),
    };
    spec.traffic = traffic;
    let dataset = spec.run().map_err(usage)?;
    let stored = store::save(&dataset, &a.out, Some(&spec)).map_err(data)?;
    println!(
        "wrote {}: {} episodes, {} steps, hash {}",
        a.out.display(),
        dataset.episodes().len(),
        dataset.total_steps(),
        stored.content_hash()
    );
    Ok(())
}

fn query(a: QueryArgs) -> Outcome {
    let stored = load_highway(&a.dataset).map_err(data)?;
    let ds = &stored.dataset;
    let vocab = ds.vocabulary();
    let formula = match &a.ltlf {
        Some(text) => Formula::parse(text).map_err(compile_err)?,
        None => {
            let spec = |s: &Option<String>| s.as_deref().map(PropSpec::parse).transpose();
            let q = Query::new(
                spec(&a.start).map_err(usage)?.unwrap_or_default(),
                spec(&a.end).map_err(usage)?.unwrap_or_default(),
                a.constraint
                    .as_deref()
                    .map(Constraint::parse)
                    .transpose()
                    .map_err(usage)?
                    .unwrap_or(Constraint::None),
            );
            q.compile(vocab).map_err(compile_err)?
        }
    };
    let qa = QueryAutomata::compile(&formula, vocab).map_err(compile_err)?;
    let opts = SearchOptions {
        max_matches: a.max,
        min_len: a.min_len,
        pad: a.pad,
    };
    let res = find_all(&qa, ds, &opts);

    if a.json {
        let matches: Vec<_> = res
            .clips
            .iter()
            .map(|c| {
                json!({
                    "episode": c.matched.episode,
                    "start": c.matched.start,
                    "end": c.matched.end,
                    "window_start": c.window_start,
                    "window_end": c.window_end,
                })
            })
            .collect();
        let doc = json!({
            "schema": 1,
            "formula": qa.canonical(),
            "dataset": stored.content_hash(),
            "count": matches.len(),
            "more_available": res.more_available,
            "letter_reads": res.stats.letter_reads(),
            "matches": matches,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
        return Ok(());
    }

    let mut out = String::new();
    let _ = writeln!(out, "formula: {}", qa.canonical());
    if !res.clips.is_empty() {
        let _ = writeln!(
            out,
            "{:>8} {:>6} {:>6} {:>11} {:>8}",
            "episode", "start", "end", "window", "trigger"
        );
    }
    for c in &res.clips {
        let m = &c.matched;
        let ep = ds.episode(m.episode).expect("clip episode exists");
        let trigger = ep.meta().trigger_step.map_or("-".to_string(), |t| t.to_string());
        let window = format!("{}-{}", c.window_start, c.window_end);
        let _ = writeln!(
            out,
            "{:>8} {:>6} {:>6} {window:>11} {trigger:>8}",
            m.episode, m.start, m.end
        );
        if a.frames {
            for s in &ep.concrete()[m.start - 1..m.end] {
                let _ = writeln!(out, "step {}", s.step);
                out.push_str(&render_ascii(&render_frame(s), 4.0));
            }
        }
    }
    let more = if res.more_available { " (more available)" } else { "" };
    let _ = writeln!(out, "{} matches{more}", res.clips.len());
    print!("{out}");
    Ok(())
}

fn compile(a: CompileArgs) -> Outcome {
    let f = Formula::parse(&a.ltlf).map_err(compile_err)?;
    let raw = Dfa::compile_with(&f, &CompileOptions::unminimized()).map_err(compile_err)?;
    let min = raw.minimize();
    let shown = if a.raw { &raw } else { &min };
    println!("formula: {f}");
    println!("states: {} (before minimization: {})", min.len(), raw.len());
    println!("initial: {}", shown.initial());
    let acc: Vec<String> = shown.accepting().iter().map(|i| i.to_string()).collect();
    println!("accepting: {}", acc.join(" "));
    println!("support: {}", shown.support().join(" "));
    print!("{}", shown.dump());
    if let Some(path) = &a.dot {
        std::fs::write(path, shown.to_dot())
            .with_context(|| path.display().to_string())
            .map_err(data)?;
    }
    Ok(())
}

fn check(a: CheckArgs) -> Outcome {
    let f = Formula::parse(&a.ltlf).map_err(compile_err)?;
    let verdict = if let Some(path) = &a.trace {
        let text = std::fs::read_to_string(path)
            .with_context(|| path.display().to_string())
            .map_err(data)?;
        let steps = tracefile::parse_names(&text);
        let atoms = f.atoms();
        let vocab = tracefile::vocabulary_for(&steps, &atoms).map_err(|e| data(anyhow!(e)))?;
        let trace = tracefile::encode(&steps, &vocab).map_err(|e| data(anyhow!(e)))?;
        f.evaluate(&trace, &vocab).map_err(data)?
    } else {
        let dir = a.dataset.as_ref().expect("clap enforces --trace or --dataset");
        let stored = load_highway(dir).map_err(data)?;
        let id = a.episode.expect("required with --dataset");
        let (k, l) = (a.start.expect("required"), a.end.expect("required"));
        let ep = stored
            .dataset
            .episode(id)
            .ok_or_else(|| data(anyhow!("no episode {id}")))?;
        if k == 0 || k > l || l > ep.len() {
            return Err(data(anyhow!(
                "segment [{k}, {l}] outside episode of {} steps",
                ep.len()
            )));
        }
        f.evaluate(&ep.trace()[k - 1..l], stored.dataset.vocabulary())
            .map_err(compile_err)?
    };
    println!("{verdict}");
    Ok(())
}

fn serve(a: ServeArgs) -> Outcome {
    let app = AppState::open(Config {
        data_dir: a.data.clone(),
        page_cap: a.page_cap,
    })
    .map_err(data)?;
    let rt = tokio::runtime::Runtime::new().map_err(data)?;
    rt.block_on(service::serve(Arc::new(app), SocketAddr::new(a.bind, a.port)))
        .map_err(data)
}
