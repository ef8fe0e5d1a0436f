//! Command-line front end: replay schedules, fuzz objects, check history
//! files, benchmark step counts, and validate sketch error bounds.
//!
//! Exit codes are a stable contract: 0 when every check passes, 1 when a
//! property violation is found, 2 on usage, parse, or cap errors.

use std::error::Error;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use ivl_core::bounds::{
    rates_consistent, validate_concurrent, validate_sequential, ErrorReport, ValidateConfig,
};
use ivl_core::checker::{analyze, Caps, ObjectSpecs, Verdict};
use ivl_core::harness::{golden, random_schedule, replay, stress_run, FuzzParams, ObjectConfig,
    Schedule};
use ivl_core::history::{Arg, History, OpDesc, ProcessId, Ret};
use ivl_core::objects::{run_to_completion, IvlCounter, IvlParameter, StepObject};
use ivl_core::snapshot::BcKind;
use ivl_core::spec::SequentialSpec;

type CliResult<T> = Result<T, Box<dyn Error>>;

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|err| format!("cannot read {}: {err}", path.display()).into())
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .map_err(|err| format!("cannot write {}: {err}", path.display()).into())
}

#[derive(Parser)]
#[command(
    name = "ivl",
    version,
    about = "Replay, fuzz, and check intermediate-value concurrent objects"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ObjectKind {
    Counter,
    Parameter,
    NaiveAdder,
    Pcm,
    Snapshot,
}

impl ObjectKind {
    fn to_config(self, n: usize, seed: u64) -> ObjectConfig {
        match self {
            ObjectKind::Counter => ObjectConfig::Counter { n },
            ObjectKind::Parameter => ObjectConfig::Parameter { n },
            ObjectKind::NaiveAdder => ObjectConfig::NaiveAdder { n },
            ObjectKind::Pcm => ObjectConfig::pcm_seeded(n, 8, 2, seed),
            ObjectKind::Snapshot => ObjectConfig::Snapshot {
                n,
                bc: BcKind::Ivl,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpecKind {
    Counter,
    NaiveAdder,
    Parameter,
    Snapshot,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum ValidateMode {
    Sequential,
    Concurrent,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a schedule (bundled name or file path) and check the history.
    ///
    /// Exits 0 when the recorded history is IVL, 1 when it is not.
    Replay {
        /// Bundled schedule name or path to a schedule file.
        schedule: String,
        /// Run the schedule's entries against a different object.
        #[arg(long, value_enum)]
        object: Option<ObjectKind>,
        /// Processes for the overriding object (defaults to the schedule's).
        #[arg(long)]
        n: Option<usize>,
        /// Checker cap on total operations.
        #[arg(long, default_value_t = 12)]
        cap_ops: usize,
        /// Write the recorded history to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate seeded random schedules and check every replayed history.
    ///
    /// Exits 0 when every history is IVL, 1 when any violates.
    Fuzz {
        #[arg(long, value_enum)]
        object: ObjectKind,
        /// Registered processes.
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        runs: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Operations per schedule.
        #[arg(long, default_value_t = 8)]
        ops: usize,
        /// Leave some operations in flight at the end of each schedule.
        #[arg(long)]
        pending: bool,
        #[arg(long, default_value_t = 12)]
        cap_ops: usize,
        /// Write one CSV row per run.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a recorded history file against a sequential specification.
    Check {
        /// History file in the recorder's text format.
        file: PathBuf,
        /// Sequential specification to check against.
        #[arg(long, value_enum)]
        spec: SpecKind,
        /// Snapshot components (defaults to the highest process id seen).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 12)]
        cap_ops: usize,
    },
    /// Measure per-operation shared-access counts and contention latency.
    ///
    /// Exits 1 if the measured counts break the expected scaling: constant
    /// updates, counter reads of exactly n, parameter reads of exactly 4n.
    Bench {
        /// Operations per thread in the contention comparison.
        #[arg(long, default_value_t = 1000)]
        ops: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the access-count table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure count-min error rates over random streams.
    ///
    /// Exits 0 when underestimates are absent and the joint violation rate
    /// stays within three standard deviations of delta.
    CmValidate {
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Items are drawn from 0..alphabet.
        #[arg(long, default_value_t = 10_000)]
        alphabet: u64,
        #[arg(long, default_value_t = 100_000)]
        stream_len: usize,
        /// Writer threads in the concurrent mode.
        #[arg(long, default_value_t = 4)]
        writers: usize,
        /// Stream fraction completed before the concurrent query starts.
        #[arg(long, default_value_t = 0.5)]
        query_at: f64,
        #[arg(long, value_enum, default_value_t = ValidateMode::Both)]
        mode: ValidateMode,
        /// Write one CSV row per trial.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // Die quietly when a downstream pipe closes early (e.g. `ivl bench | head`)
    // instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> CliResult<bool> {
    match command {
        Command::Replay {
            schedule,
            object,
            n,
            cap_ops,
            out,
        } => cmd_replay(&schedule, object, n, caps(cap_ops), out),
        Command::Fuzz {
            object,
            n,
            runs,
            seed,
            ops,
            pending,
            cap_ops,
            out,
        } => cmd_fuzz(object, n, runs, seed, ops, pending, caps(cap_ops), out),
        Command::Check {
            file,
            spec,
            n,
            cap_ops,
        } => cmd_check(&file, spec, n, caps(cap_ops)),
        Command::Bench { ops, seed, out } => cmd_bench(ops, seed, out),
        Command::CmValidate {
            alpha,
            delta,
            trials,
            seed,
            alphabet,
            stream_len,
            writers,
            query_at,
            mode,
            out,
        } => {
            let config = ValidateConfig {
                alpha,
                delta,
                alphabet,
                stream_len,
                trials,
                seed,
                writers,
                query_at,
            };
            cmd_cm_validate(&config, mode, out)
        }
    }
}

fn caps(cap_ops: usize) -> Caps {
    Caps {
        max_ops: cap_ops,
        ..Caps::default()
    }
}

fn cmd_replay(
    name: &str,
    object: Option<ObjectKind>,
    n: Option<usize>,
    caps: Caps,
    out: Option<PathBuf>,
) -> CliResult<bool> {
    let schedule = match golden::load(name) {
        Some(parsed) => parsed?,
        None => Schedule::parse(&read_file(Path::new(name))?)?,
    };
    let schedule = match object {
        Some(kind) => {
            let n = n.unwrap_or_else(|| schedule.object.processes());
            schedule.with_object(kind.to_config(n, schedule.seed.unwrap_or(1)))
        }
        None => schedule,
    };
    let history = replay(&schedule)?;
    if let Some(path) = &out {
        write_file(path, &history.to_text())?;
    }
    let verdict = analyze(
        &history,
        &ObjectSpecs::uniform(schedule.object.spec()?),
        &caps,
    )?;
    println!("schedule {name}");
    println!(
        "object {} n={}",
        schedule.object.kind(),
        schedule.object.processes()
    );
    print_verdict(&history, &verdict);
    Ok(verdict.ivl)
}

fn print_verdict(history: &History, verdict: &Verdict) {
    let ops = history.operations();
    println!("ops {}", ops.len());
    for op in &ops {
        if let Some(Ret::Value(v)) = op.ret() {
            println!("returned #{} {} = {}", op.index, op.op.name(), v);
        }
    }
    println!("linearizable {}", verdict.linearizable);
    if let Some(lin) = &verdict.linearization {
        println!("witness {lin}");
    }
    println!("ivl {}", verdict.ivl);
    if let Some((lower, upper)) = &verdict.ivl_pair {
        println!("lower {lower}");
        println!("upper {upper}");
    }
    for env in &verdict.envelopes {
        println!(
            "envelope #{} observed={} min={} max={}",
            env.op_index, env.observed, env.min, env.max
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_fuzz(
    object: ObjectKind,
    n: usize,
    runs: u64,
    seed: u64,
    ops: usize,
    pending: bool,
    caps: Caps,
    out: Option<PathBuf>,
) -> CliResult<bool> {
    let config = object.to_config(n, seed);
    let spec = config.spec()?;
    let params = FuzzParams {
        object: config.clone(),
        ops,
        allow_pending: pending,
    };
    println!("object {} n={}", config.kind(), n);
    println!("runs {runs}");
    println!("ops {ops}");
    let mut csv = String::from("seed,ivl\n");
    let mut passes = 0u64;
    for i in 0..runs {
        let run_seed = seed.wrapping_add(i);
        let schedule = random_schedule(run_seed, &params)?;
        let history = replay(&schedule)?;
        let verdict = analyze(&history, &ObjectSpecs::uniform(spec.clone()), &caps)?;
        if verdict.ivl {
            passes += 1;
        } else {
            println!("violation seed={run_seed}");
        }
        let _ = writeln!(csv, "{run_seed},{}", verdict.ivl);
    }
    if let Some(path) = &out {
        write_file(path, &csv)?;
    }
    println!("{passes}/{runs} IVL");
    Ok(passes == runs)
}

fn cmd_check(file: &Path, spec: SpecKind, n: Option<usize>, caps: Caps) -> CliResult<bool> {
    let history = History::parse(&read_file(file)?)?;
    let (label, spec) = match spec {
        SpecKind::Counter => ("counter", SequentialSpec::Counter),
        SpecKind::NaiveAdder => ("naive-adder", SequentialSpec::Counter),
        SpecKind::Parameter => ("parameter", SequentialSpec::Parameter),
        SpecKind::Snapshot => {
            let components = n.unwrap_or_else(|| {
                history
                    .operations()
                    .iter()
                    .map(|op| op.process.0 as usize)
                    .max()
                    .unwrap_or(1)
            });
            ("snapshot", SequentialSpec::BinarySnapshot { components })
        }
    };
    let verdict = analyze(&history, &ObjectSpecs::uniform(spec), &caps)?;
    println!("file {}", file.display());
    println!("spec {label}");
    print_verdict(&history, &verdict);
    Ok(verdict.ivl)
}

fn accesses(obj: &dyn StepObject, op: &OpDesc) -> CliResult<u64> {
    let before = obj.shared_accesses();
    run_to_completion(obj, ProcessId(1), op)?;
    Ok(obj.shared_accesses() - before)
}

fn cmd_bench(ops: usize, seed: u64, out: Option<PathBuf>) -> CliResult<bool> {
    let ns = [2usize, 4, 8, 16, 32];
    let mut csv = String::from("object,n,update_accesses,read_accesses\n");
    let mut counter_rows = Vec::new();
    let mut parameter_rows = Vec::new();
    for &n in &ns {
        let counter = IvlCounter::new(n);
        let update = accesses(&counter, &OpDesc::Update(Arg::Int(1)))?;
        let read = accesses(&counter, &OpDesc::Read)?;
        println!("accesses counter n={n} update={update} read={read}");
        let _ = writeln!(csv, "counter,{n},{update},{read}");
        counter_rows.push((n, update, read));
    }
    for &n in &ns {
        let parameter = IvlParameter::new(n);
        let update = accesses(&parameter, &OpDesc::Update(Arg::Real(0.25)))?;
        let read = accesses(&parameter, &OpDesc::Read)?;
        println!("accesses parameter n={n} update={update} read={read}");
        let _ = writeln!(csv, "parameter,{n},{update},{read}");
        parameter_rows.push((n, update, read));
    }
    let constant = |rows: &[(usize, u64, u64)]| rows.iter().all(|r| r.1 == rows[0].1);
    let scaling = |rows: &[(usize, u64, u64)], per_n: u64| {
        rows.iter().all(|&(n, _, read)| read == per_n * n as u64)
    };
    let checks = [
        ("counter update accesses constant", constant(&counter_rows)),
        ("counter read accesses n", scaling(&counter_rows, 1)),
        (
            "parameter update accesses constant",
            constant(&parameter_rows),
        ),
        ("parameter read accesses 4n", scaling(&parameter_rows, 4)),
    ];
    for (what, ok) in checks {
        println!("expectation {what} {}", if ok { "ok" } else { "FAIL" });
    }
    for config in [ObjectConfig::Counter { n: 4 }, ObjectConfig::Locked { n: 4 }] {
        let start = Instant::now();
        stress_run(&config, 4, ops, seed)?;
        println!(
            "stress {} threads=4 ops-per-thread={ops} millis={}",
            config.kind(),
            start.elapsed().as_millis()
        );
    }
    if let Some(path) = &out {
        write_file(path, &csv)?;
    }
    Ok(checks.iter().all(|(_, ok)| *ok))
}

fn print_report(mode: &str, report: &ErrorReport, threshold: f64) {
    println!("mode {mode}");
    println!("alpha {}", report.alpha);
    println!("delta {}", report.delta);
    println!("w {}", report.w);
    println!("d {}", report.d);
    println!("stream-len {}", report.stream_len);
    println!("trials {}", report.trials());
    println!("writers {}", report.writers);
    println!("seed {}", report.seed);
    if let Some(sweep) = report.sweep_underestimates {
        println!("underestimates {sweep}");
    }
    println!("lower-rate {:.4}", report.lower_rate());
    println!("upper-rate {:.4}", report.upper_rate());
    println!("joint-rate {:.4}", report.joint_rate());
    println!("threshold {threshold:.4}");
}

fn report_passes(report: &ErrorReport, threshold: f64) -> bool {
    report.sweep_underestimates.unwrap_or(0) == 0
        && report.lower_rate() == 0.0
        && report.joint_rate() <= threshold
}

fn append_csv(csv: &mut String, mode: &str, report: &ErrorReport) {
    for (trial, o) in report.outcomes.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{mode},{trial},{},{},{},{},{},{},{},{}",
            o.query_item,
            o.estimate,
            o.f_start,
            o.f_end,
            o.n_end,
            o.epsilon,
            o.lower_violation,
            o.upper_violation
        );
    }
}

fn cmd_cm_validate(
    config: &ValidateConfig,
    mode: ValidateMode,
    out: Option<PathBuf>,
) -> CliResult<bool> {
    let threshold = config.delta
        + 3.0 * (config.delta * (1.0 - config.delta) / config.trials as f64).sqrt();
    let mut csv = String::from(
        "mode,trial,query_item,estimate,f_start,f_end,n_end,epsilon,lower_violation,upper_violation\n",
    );
    let mut pass = true;
    let sequential = if mode != ValidateMode::Concurrent {
        let report = validate_sequential(config)?;
        print_report("sequential", &report, threshold);
        let ok = report_passes(&report, threshold);
        println!("pass {ok}");
        pass &= ok;
        append_csv(&mut csv, "sequential", &report);
        Some(report)
    } else {
        None
    };
    if mode != ValidateMode::Sequential {
        let report = validate_concurrent(config)?;
        print_report("concurrent", &report, threshold);
        let ok = report_passes(&report, threshold);
        println!("pass {ok}");
        pass &= ok;
        append_csv(&mut csv, "concurrent", &report);
        if let Some(sequential) = &sequential {
            let consistent = rates_consistent(sequential, &report);
            println!("rates-consistent {consistent}");
            pass &= consistent;
        }
    }
    if let Some(path) = &out {
        write_file(path, &csv)?;
    }
    println!("overall {}", if pass { "pass" } else { "FAIL" });
    Ok(pass)
}
