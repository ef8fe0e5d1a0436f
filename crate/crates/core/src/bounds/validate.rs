//! Empirical validation of the sketch's frequency-error guarantee.
//!
//! Each trial draws a Zipf-distributed stream, feeds it to a count-min
//! sketch, and asks for one designated item's frequency estimate. The
//! sequential mode replays the stream through the sequential model and
//! compares the estimate against an exact count; the concurrent mode drives
//! the lock-free sketch with real writer threads and brackets the estimate
//! between the item's frequency at the query's invocation (`f_start`) and at
//! its response (`f_end`). Violation rates across trials are then compared
//! against the configured failure probability.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::history::{Arg, OpDesc, ProcessId, Recorder, Ret, Value};
use crate::objects::{PcmSketch, StepObject, StepOutcome};
use crate::spec::{CountMinSpec, SequentialSpec, SpecModel};

use super::{dims_for, BoundsError};

/// Skew of the validation streams. Just above 1 keeps the head heavy while
/// still exercising most of the alphabet.
pub const ZIPF_EXPONENT: f64 = 1.1;

/// Parameters for one validation campaign.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidateConfig {
    /// Relative accuracy: estimates may exceed the truth by `alpha * n`.
    pub alpha: f64,
    /// Per-query failure probability the sketch is dimensioned for.
    pub delta: f64,
    /// Items are drawn from `0..alphabet`.
    pub alphabet: u64,
    /// Updates per trial.
    pub stream_len: usize,
    /// Independent repetitions, each with fresh hash and stream seeds.
    pub trials: usize,
    /// Master seed; every trial derives its own disjoint seed material.
    pub seed: u64,
    /// Writer threads in the concurrent mode.
    pub writers: usize,
    /// Fraction of the stream that must have completed before the
    /// concurrent query is invoked.
    pub query_at: f64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            alpha: 0.01,
            delta: 0.01,
            alphabet: 10_000,
            stream_len: 100_000,
            trials: 200,
            seed: 1,
            writers: 4,
            query_at: 0.5,
        }
    }
}

/// Outcome of a single trial's designated query.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub query_item: u64,
    pub estimate: u64,
    /// Completed updates of the item before the query was invoked.
    pub f_start: u64,
    /// Updates of the item invoked before the query responded.
    pub f_end: u64,
    /// All updates invoked before the query responded.
    pub n_end: u64,
    /// Slack allowed above `f_end`, `alpha * n_end`.
    pub epsilon: f64,
    /// The estimate fell below `f_start`.
    pub lower_violation: bool,
    /// The estimate exceeded `f_end + epsilon`.
    pub upper_violation: bool,
}

impl TrialOutcome {
    pub fn joint_violation(&self) -> bool {
        self.lower_violation || self.upper_violation
    }
}

/// Aggregate result of a validation campaign.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub alpha: f64,
    pub delta: f64,
    pub w: usize,
    pub d: usize,
    pub stream_len: usize,
    /// Writer threads used; 0 marks a sequential reference run.
    pub writers: usize,
    pub seed: u64,
    pub outcomes: Vec<TrialOutcome>,
    /// Sequential runs additionally sweep the whole alphabet after each
    /// trial; counters only grow, so underestimates must be impossible.
    pub sweep_underestimates: Option<u64>,
}

impl ErrorReport {
    pub fn trials(&self) -> usize {
        self.outcomes.len()
    }

    pub fn lower_rate(&self) -> f64 {
        self.rate(|o| o.lower_violation)
    }

    pub fn upper_rate(&self) -> f64 {
        self.rate(|o| o.upper_violation)
    }

    pub fn joint_rate(&self) -> f64 {
        self.rate(TrialOutcome::joint_violation)
    }

    fn rate(&self, flag: impl Fn(&TrialOutcome) -> bool) -> f64 {
        let hits = self.outcomes.iter().filter(|o| flag(o)).count();
        hits as f64 / self.outcomes.len() as f64
    }
}

/// Checks that concurrency did not degrade the error guarantee: the
/// concurrent joint violation rate may exceed the sequential one by at most
/// two standard errors. The standard error is floored at the configured
/// failure probability so a lucky all-zero sequential run does not make the
/// comparison needlessly brittle.
pub fn rates_consistent(sequential: &ErrorReport, concurrent: &ErrorReport) -> bool {
    let p = sequential.joint_rate().max(sequential.delta);
    let se = (p * (1.0 - p) / concurrent.trials() as f64).sqrt();
    concurrent.joint_rate() <= sequential.joint_rate() + 2.0 * se
}

/// splitmix64 finalizer, used to derive independent per-trial seeds from the
/// master seed without overlapping the streams' own generators.
fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy)]
struct TrialSeeds {
    hash: u64,
    stream: u64,
    query: u64,
}

/// The adversary is oblivious: hash seeds, stream contents, and the queried
/// item come from disjoint seed material, so none can depend on another.
fn trial_seeds(master: u64, trial: usize) -> TrialSeeds {
    let base = mix(master, trial as u64);
    TrialSeeds {
        hash: mix(base, 1),
        stream: mix(base, 2),
        query: mix(base, 3),
    }
}

/// A reproducible Zipf-distributed stream over `0..alphabet`.
pub fn zipf_stream(seed: u64, alphabet: u64, len: usize) -> Result<Vec<u64>, BoundsError> {
    let zipf = Zipf::<f64>::new(alphabet as f64, ZIPF_EXPONENT)
        .map_err(|_| BoundsError::InvalidConfig("alphabet must not be empty"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..len).map(|_| zipf.sample(&mut rng) as u64 - 1).collect())
}

fn check_config(config: &ValidateConfig) -> Result<(usize, usize), BoundsError> {
    let dims = dims_for(config.alpha, config.delta)?;
    if config.alphabet == 0 {
        return Err(BoundsError::InvalidConfig("alphabet must not be empty"));
    }
    if config.alphabet > i64::MAX as u64 {
        return Err(BoundsError::InvalidConfig("alphabet exceeds the update range"));
    }
    if config.stream_len == 0 {
        return Err(BoundsError::InvalidConfig("stream_len must be positive"));
    }
    if config.trials == 0 {
        return Err(BoundsError::InvalidConfig("trials must be positive"));
    }
    if !(0.0..=1.0).contains(&config.query_at) {
        return Err(BoundsError::InvalidConfig("query_at must be in [0, 1]"));
    }
    Ok(dims)
}

fn query_item(seed: u64, alphabet: u64) -> u64 {
    ChaCha8Rng::seed_from_u64(seed).random_range(0..alphabet)
}

fn estimate_of(ret: &Ret) -> u64 {
    match ret {
        Ret::Value(Value::Int(v)) => u64::try_from(*v).expect("count-min counters are non-negative"),
        other => panic!("query returned {other:?}, expected an integer"),
    }
}

/// Replays each trial's stream through the sequential model and compares the
/// designated query against an exact count, then sweeps the whole alphabet
/// for underestimates.
pub fn validate_sequential(config: &ValidateConfig) -> Result<ErrorReport, BoundsError> {
    let (w, d) = check_config(config)?;
    let mut outcomes = Vec::with_capacity(config.trials);
    let mut sweep_underestimates = 0u64;
    for trial in 0..config.trials {
        let seeds = trial_seeds(config.seed, trial);
        let stream = zipf_stream(seeds.stream, config.alphabet, config.stream_len)?;
        let spec = SequentialSpec::CountMin(CountMinSpec::seeded(w, d, seeds.hash)?);
        let mut model = SpecModel::new(&spec);
        let mut exact: HashMap<u64, u64> = HashMap::new();
        let p = ProcessId(1);
        for &item in &stream {
            model.apply(p, &OpDesc::Update(Arg::Int(item as i64)))?;
            *exact.entry(item).or_default() += 1;
        }
        let count_of = |item: u64| -> Result<u64, BoundsError> {
            match model.eval(p, &OpDesc::Query(item))? {
                Value::Int(v) => Ok(u64::try_from(v).expect("counters are non-negative")),
                other => panic!("query returned {other:?}, expected an integer"),
            }
        };
        let item = query_item(seeds.query, config.alphabet);
        let estimate = count_of(item)?;
        let f = exact.get(&item).copied().unwrap_or(0);
        let epsilon = config.alpha * config.stream_len as f64;
        outcomes.push(TrialOutcome {
            query_item: item,
            estimate,
            f_start: f,
            f_end: f,
            n_end: config.stream_len as u64,
            epsilon,
            lower_violation: estimate < f,
            upper_violation: estimate as f64 > f as f64 + epsilon,
        });
        for item in 0..config.alphabet {
            let truth = exact.get(&item).copied().unwrap_or(0);
            if count_of(item)? < truth {
                sweep_underestimates += 1;
            }
        }
    }
    Ok(ErrorReport {
        alpha: config.alpha,
        delta: config.delta,
        w,
        d,
        stream_len: config.stream_len,
        writers: 0,
        seed: config.seed,
        outcomes,
        sweep_underestimates: Some(sweep_underestimates),
    })
}

/// Drives the lock-free sketch with `writers` threads per trial. Writers
/// split the stream round-robin; one extra thread waits until a configured
/// fraction of updates has completed, then issues the designated query. The
/// envelope `[f_start, f_end + alpha * n_end]` is recovered from the
/// recorded history.
pub fn validate_concurrent(config: &ValidateConfig) -> Result<ErrorReport, BoundsError> {
    let (w, d) = check_config(config)?;
    if config.writers == 0 {
        return Err(BoundsError::InvalidConfig("writers must be at least 1"));
    }
    let mut outcomes = Vec::with_capacity(config.trials);
    for trial in 0..config.trials {
        let seeds = trial_seeds(config.seed, trial);
        let stream = zipf_stream(seeds.stream, config.alphabet, config.stream_len)?;
        let spec = CountMinSpec::seeded(w, d, seeds.hash)?;
        let sketch = PcmSketch::new(config.writers + 1, spec);
        let item = query_item(seeds.query, config.alphabet);
        let recorder = Mutex::new(Recorder::new());
        let completed = AtomicUsize::new(0);
        let target = (config.stream_len as f64 * config.query_at).round() as usize;
        thread::scope(|scope| {
            for writer in 0..config.writers {
                let sketch = &sketch;
                let recorder = &recorder;
                let completed = &completed;
                let stream = &stream;
                scope.spawn(move || {
                    let p = ProcessId(writer as u32 + 1);
                    let mut rng = ChaCha8Rng::seed_from_u64(mix(seeds.stream, 1000 + writer as u64));
                    let mut idx = writer;
                    while idx < stream.len() {
                        let op = OpDesc::Update(Arg::Int(stream[idx] as i64));
                        let mut run = sketch.begin(p, &op).expect("stream items are valid updates");
                        recorder
                            .lock()
                            .unwrap()
                            .invoke(p, "pcm", op)
                            .expect("writer invokes one op at a time");
                        let ret = loop {
                            match run.step() {
                                StepOutcome::More => {
                                    if rng.random_bool(0.25) {
                                        thread::yield_now();
                                    }
                                }
                                StepOutcome::Done(ret) => break ret,
                            }
                        };
                        recorder
                            .lock()
                            .unwrap()
                            .respond(p, ret)
                            .expect("writer responds to its own invocation");
                        completed.fetch_add(1, Ordering::Release);
                        idx += config.writers;
                    }
                });
            }
            let sketch = &sketch;
            let recorder = &recorder;
            let completed = &completed;
            scope.spawn(move || {
                while completed.load(Ordering::Acquire) < target {
                    thread::yield_now();
                }
                let p = ProcessId(config.writers as u32 + 1);
                let op = OpDesc::Query(item);
                let mut run = sketch.begin(p, &op).expect("query item is valid");
                recorder
                    .lock()
                    .unwrap()
                    .invoke(p, "pcm", op)
                    .expect("query thread invokes once");
                let ret = loop {
                    match run.step() {
                        StepOutcome::More => thread::yield_now(),
                        StepOutcome::Done(ret) => break ret,
                    }
                };
                recorder
                    .lock()
                    .unwrap()
                    .respond(p, ret)
                    .expect("query thread responds once");
            });
        });
        let history = recorder.into_inner().unwrap().finish();
        let ops = history.operations();
        let query = ops
            .iter()
            .find(|op| matches!(op.op, OpDesc::Query(_)))
            .expect("each trial records one query");
        let (responded, ret) = query.response.as_ref().expect("the query completes");
        let estimate = estimate_of(ret);
        let mut f_start = 0u64;
        let mut f_end = 0u64;
        let mut n_end = 0u64;
        for op in &ops {
            let OpDesc::Update(Arg::Int(arg)) = op.op else {
                continue;
            };
            if op.invoked < *responded {
                n_end += 1;
                if arg as u64 == item {
                    f_end += 1;
                }
            }
            if arg as u64 == item
                && op.response.as_ref().is_some_and(|(seq, _)| *seq < query.invoked)
            {
                f_start += 1;
            }
        }
        let epsilon = config.alpha * n_end as f64;
        outcomes.push(TrialOutcome {
            query_item: item,
            estimate,
            f_start,
            f_end,
            n_end,
            epsilon,
            lower_violation: estimate < f_start,
            upper_violation: estimate as f64 > f_end as f64 + epsilon,
        });
    }
    Ok(ErrorReport {
        alpha: config.alpha,
        delta: config.delta,
        w,
        d,
        stream_len: config.stream_len,
        writers: config.writers,
        seed: config.seed,
        outcomes,
        sweep_underestimates: None,
    })
}
