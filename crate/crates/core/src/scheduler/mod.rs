//! Pipeline stage profiling, the activation-period bound, and timeline
//! simulation of independent versus completion-triggered activation over a
//! single serialized GPU stream.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::pose::secs_to_nanos;

pub const MIN_PROFILE_SAMPLES: usize = 100;
pub const DEFAULT_PROFILE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchedulerError {
    #[error("T1 = {t1} s is below the bound {bound} s by {deficit} s")]
    PeriodBelowBound { t1: f64, bound: f64, deficit: f64 },
    #[error("profiling needs at least {MIN_PROFILE_SAMPLES} samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid pipeline: {0}")]
    InvalidPipeline(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
}

/// Execution-time distribution, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Duration {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    /// Negative draws are clamped to 0.
    Normal { mean: f64, sigma: f64 },
    /// `high` with probability `p_high`, else `low`.
    TwoPoint { low: f64, high: f64, p_high: f64 },
}

impl Duration {
    pub fn validate(&self) -> Result<(), SchedulerError> {
        let bad = |m: &str| Err(SchedulerError::InvalidDistribution(m.into()));
        match *self {
            Duration::Constant { value } if !(value >= 0.0 && value.is_finite()) => bad("constant must be >= 0"),
            Duration::Uniform { low, high } if !(0.0 <= low && low <= high && high.is_finite()) => {
                bad("uniform needs 0 <= low <= high")
            }
            Duration::Normal { mean, sigma } if !(mean.is_finite() && sigma >= 0.0 && sigma.is_finite()) => {
                bad("normal needs finite mean and sigma >= 0")
            }
            Duration::TwoPoint { low, high, p_high }
                if !(low >= 0.0 && high >= 0.0 && high.is_finite() && (0.0..=1.0).contains(&p_high)) =>
            {
                bad("two-point needs values >= 0 and p_high in [0, 1]")
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Duration::Constant { value } => value,
            Duration::Uniform { low, high } => {
                if low == high {
                    low
                } else {
                    rng.random_range(low..high)
                }
            }
            Duration::Normal { mean, sigma } => {
                if sigma == 0.0 {
                    mean.max(0.0)
                } else {
                    Normal::new(mean, sigma).expect("validated").sample(rng).max(0.0)
                }
            }
            Duration::TwoPoint { low, high, p_high } => {
                if rng.random::<f64>() < p_high {
                    high
                } else {
                    low
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Functionality {
    pub id: String,
    /// Release period in seconds.
    pub period: f64,
    pub duration: Duration,
    #[serde(default)]
    pub gpu_bound: bool,
    /// Position in the pipeline, contiguous across stages.
    pub order: usize,
}

/// Stages sorted by `order`; `seed` drives every duration draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub stages: Vec<Functionality>,
    #[serde(default)]
    pub seed: u64,
}

impl Pipeline {
    pub fn new(mut stages: Vec<Functionality>, seed: u64) -> Result<Self, SchedulerError> {
        stages.sort_by_key(|s| s.order);
        let p = Pipeline { stages, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        if self.stages.is_empty() {
            return Err(SchedulerError::InvalidPipeline("no stages".into()));
        }
        let first = self.stages[0].order;
        for (i, s) in self.stages.iter().enumerate() {
            if s.order != first + i {
                return Err(SchedulerError::InvalidPipeline(format!(
                    "stage '{}' has order {}, expected {}",
                    s.id,
                    s.order,
                    first + i
                )));
            }
            if !(s.period > 0.0 && s.period.is_finite()) {
                return Err(SchedulerError::InvalidPipeline(format!("stage '{}' period must be > 0", s.id)));
            }
            s.duration.validate()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Per-(stage, job) durations in ns. Each stage draws from its own
    /// stream, so the k-th job of a stage has the same duration in every mode.
    pub fn durations(&self, jobs: usize) -> Vec<Vec<u64>> {
        self.stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(i as u64 + 1);
                (0..jobs).map(|_| secs_to_nanos(s.duration.sample(&mut rng))).collect()
            })
            .collect()
    }

    /// 99th-percentile profile of every stage, drawn from streams separate
    /// from the timeline durations.
    pub fn profile_all(&self, n_samples: usize) -> Result<Vec<Profile>, SchedulerError> {
        self.stages
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(1_000_000 + i as u64);
                profile_with(&s.duration, n_samples, &mut rng)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub t_i: f64,
    pub samples: usize,
}

/// Nearest-rank 99th percentile of `n_samples` draws.
pub fn profile(duration: &Duration, n_samples: usize, seed: u64) -> Result<Profile, SchedulerError> {
    profile_with(duration, n_samples, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn profile_with(duration: &Duration, n_samples: usize, rng: &mut ChaCha8Rng) -> Result<Profile, SchedulerError> {
    if n_samples < MIN_PROFILE_SAMPLES {
        return Err(SchedulerError::TooFewSamples(n_samples));
    }
    duration.validate()?;
    let mut xs: Vec<f64> = (0..n_samples).map(|_| duration.sample(rng)).collect();
    Ok(Profile {
        t_i: nearest_rank(&mut xs, 99),
        samples: n_samples,
    })
}

/// Nearest-rank percentile, `pct` in 1..=100: the `⌈pct·n/100⌉`-th smallest.
pub fn nearest_rank(xs: &mut [f64], pct: usize) -> f64 {
    xs.sort_by(f64::total_cmp);
    let rank = (pct * xs.len()).div_ceil(100).clamp(1, xs.len());
    xs[rank - 1]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMode {
    /// Σ_{i=1}^{n−1} t_i
    #[default]
    ExcludeLast,
    /// Σ_{i=1}^{n} t_i
    AllStages,
}

pub fn period_bound(t: &[f64], mode: BoundMode) -> f64 {
    let upto = match mode {
        BoundMode::ExcludeLast => t.len().saturating_sub(1),
        BoundMode::AllStages => t.len(),
    };
    // fold from +0.0: an empty f64 sum is -0.0
    t[..upto].iter().fold(0.0, |a, b| a + b)
}

/// Returns the bound when `t1` satisfies it (non-strict).
pub fn min_period_bound(t: &[f64], t1: f64, mode: BoundMode) -> Result<f64, SchedulerError> {
    let bound = period_bound(t, mode);
    if t1 >= bound {
        Ok(bound)
    } else {
        Err(SchedulerError::PeriodBelowBound {
            t1,
            bound,
            deficit: bound - t1,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    /// Index into the pipeline's stages.
    pub stage: usize,
    pub job: usize,
    pub release: u64,
    pub start: u64,
    pub end: u64,
    /// Time spent waiting for the GPU stream after release.
    pub blocked: u64,
    /// τ₁ activation whose data this job processed; `None` if no upstream
    /// output existed yet.
    pub generation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub stage_ids: Vec<String>,
    pub entries: Vec<TimelineEntry>,
    pub inversions: usize,
    pub deadline_misses: usize,
    /// Per τ₁ activation: end of the first final-stage job reflecting it (or
    /// anything newer) minus the activation's release, ns.
    pub latencies: Vec<Option<u64>>,
}

impl Timeline {
    pub fn total_blocked(&self) -> u64 {
        self.entries.iter().map(|e| e.blocked).sum()
    }

    pub fn mean_latency(&self) -> Option<f64> {
        mean(self.latencies.iter().flatten().map(|&l| l as f64))
    }

    /// Entries of the final stage in completion order.
    pub fn final_stage(&self) -> impl Iterator<Item = &TimelineEntry> {
        let last = self.stage_ids.len() - 1;
        self.entries.iter().filter(move |e| e.stage == last)
    }

    /// Largest number of GPU-bound jobs executing at one instant.
    pub fn max_gpu_overlap(&self, gpu: &[bool]) -> usize {
        let mut ev: Vec<(u64, i32)> = Vec::new();
        for e in self.entries.iter().filter(|e| gpu[e.stage] && e.end > e.start) {
            ev.push((e.start, 1));
            ev.push((e.end, -1));
        }
        // ends before starts at equal times
        ev.sort();
        let (mut cur, mut best) = (0i32, 0i32);
        for (_, d) in ev {
            cur += d;
            best = best.max(cur);
        }
        best as usize
    }

    pub fn write_csv(&self, w: impl Write) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["stage", "start_ns", "end_ns", "blocked_ns"])?;
        for e in &self.entries {
            out.write_record(&[
                self.stage_ids[e.stage].clone(),
                e.start.to_string(),
                e.end.to_string(),
                e.blocked.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Mean latency over activations that completed in both timelines.
pub fn paired_mean_latency(a: &Timeline, b: &Timeline) -> Option<(f64, f64)> {
    let pairs: Vec<(u64, u64)> = a
        .latencies
        .iter()
        .zip(&b.latencies)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    let n = pairs.len();
    if n == 0 {
        return None;
    }
    let (sa, sb) = pairs.iter().fold((0.0, 0.0), |(sa, sb), &(x, y)| (sa + x as f64, sb + y as f64));
    Some((sa / n as f64, sb / n as f64))
}

fn releases(period: f64, horizon: f64) -> Vec<u64> {
    let p = secs_to_nanos(period);
    let h = secs_to_nanos(horizon);
    (0..).map(|k| k * p).take_while(|&t| t < h).collect()
}

/// Every stage released on its own period. Each stage runs its jobs in order
/// on its own thread; GPU-bound jobs also queue FIFO (by release, then stage
/// order) for the single GPU stream.
pub fn run_unsynchronized(p: &Pipeline, horizon: f64) -> Timeline {
    let n = p.len();
    let rel: Vec<Vec<u64>> = p.stages.iter().map(|s| releases(s.period, horizon)).collect();
    let max_jobs = rel.iter().map(Vec::len).max().unwrap_or(0);
    let dur = p.durations(max_jobs);

    let mut jobs: Vec<(u64, usize, usize)> = Vec::new();
    for (i, r) in rel.iter().enumerate() {
        for (k, &t) in r.iter().enumerate() {
            jobs.push((t, i, k));
        }
    }
    jobs.sort();
    let mut gpu_free = 0u64;
    let mut stage_free = vec![0u64; n];
    let mut entries = Vec::with_capacity(jobs.len());
    for (release, i, k) in jobs {
        let ready = release.max(stage_free[i]);
        let start = if p.stages[i].gpu_bound { ready.max(gpu_free) } else { ready };
        let end = start + dur[i][k];
        if p.stages[i].gpu_bound {
            gpu_free = end;
        }
        stage_free[i] = end;
        entries.push(TimelineEntry {
            stage: i,
            job: k,
            release,
            start,
            end,
            blocked: start - ready,
            generation: None,
        });
    }
    entries.sort_by_key(|e| (e.start, e.stage, e.job));

    // data flow: each job consumes the newest output its predecessor finished
    // by the job's start
    let mut by_stage: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, e) in entries.iter().enumerate() {
        by_stage[e.stage].push(idx);
    }
    for v in by_stage.iter_mut() {
        v.sort_by_key(|&i| entries[i].job);
    }
    let mut inversions = 0;
    for &idx in &by_stage[0] {
        entries[idx].generation = Some(entries[idx].job);
    }
    for i in 1..n {
        // upstream jobs ordered by end time for the "latest finished" lookup
        let mut ups: Vec<(u64, u64, Option<usize>)> = by_stage[i - 1]
            .iter()
            .map(|&u| (entries[u].end, entries[u].release, entries[u].generation))
            .collect();
        ups.sort_by_key(|u| u.0);
        for &idx in &by_stage[i] {
            let start = entries[idx].start;
            let done = ups.partition_point(|u| u.0 <= start);
            entries[idx].generation = ups[..done].iter().filter_map(|u| u.2).max();
            if ups[done..].iter().any(|u| u.1 <= start) {
                inversions += 1;
            }
        }
    }

    let latencies = latencies_from(&entries, n, &rel[0]);
    Timeline {
        stage_ids: p.stages.iter().map(|s| s.id.clone()).collect(),
        entries,
        inversions,
        deadline_misses: 0,
        latencies,
    }
}

/// τ₁ released on its period (deferred while the previous chain is still
/// running); every later stage starts exactly when its predecessor ends.
pub fn run_contention_aware(p: &Pipeline, horizon: f64) -> Timeline {
    let n = p.len();
    let rel = releases(p.stages[0].period, horizon);
    let dur = p.durations(rel.len());
    let period = secs_to_nanos(p.stages[0].period);
    let mut entries = Vec::with_capacity(rel.len() * n);
    let mut chain_end = 0u64;
    let mut misses = 0;
    for (k, &release) in rel.iter().enumerate() {
        let mut t = release.max(chain_end);
        let deferred = t > release;
        for (i, d) in dur.iter().enumerate() {
            let start = t;
            t += d[k];
            entries.push(TimelineEntry {
                stage: i,
                job: k,
                release: if i == 0 { release } else { start },
                start,
                end: t,
                blocked: 0,
                generation: Some(k),
            });
        }
        chain_end = t;
        if deferred || t > release + period {
            misses += 1;
        }
    }
    let latencies = latencies_from(&entries, n, &rel);
    Timeline {
        stage_ids: p.stages.iter().map(|s| s.id.clone()).collect(),
        entries,
        inversions: 0,
        deadline_misses: misses,
        latencies,
    }
}

fn latencies_from(entries: &[TimelineEntry], n: usize, first_releases: &[u64]) -> Vec<Option<u64>> {
    let mut finals: Vec<(u64, usize)> = entries
        .iter()
        .filter(|e| e.stage == n - 1)
        .filter_map(|e| Some((e.end, e.generation?)))
        .collect();
    finals.sort();
    first_releases
        .iter()
        .enumerate()
        .map(|(g, &r)| finals.iter().find(|f| f.1 >= g).map(|f| f.0 - r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: f64 = 1e-3;

    fn stage(id: &str, order: usize, period: f64, d: f64, gpu: bool) -> Functionality {
        Functionality {
            id: id.into(),
            period,
            duration: Duration::Constant { value: d },
            gpu_bound: gpu,
            order,
        }
    }

    #[test]
    fn profile_examples() {
        let p = profile(&Duration::Constant { value: 5.0 * MS }, 1000, 0).unwrap();
        assert_eq!(p.t_i, 5.0 * MS);
        let u = profile(&Duration::Uniform { low: 0.0, high: 10.0 * MS }, 10_000, 1).unwrap();
        assert!((9.7 * MS..=10.0 * MS).contains(&u.t_i));
        let spike = Duration::TwoPoint { low: 1.0 * MS, high: 100.0 * MS, p_high: 0.001 };
        assert_eq!(profile(&spike, 1000, 2).unwrap().t_i, 1.0 * MS);
        assert!(profile(&spike, 99, 2).is_err());
    }

    #[test]
    fn nearest_rank_small() {
        let mut xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&mut xs, 99), 99.0);
        assert_eq!(nearest_rank(&mut [3.0], 99), 3.0);
    }

    #[test]
    fn bound_examples() {
        let t = [2.0 * MS, 3.0 * MS, 4.0 * MS];
        assert_eq!(period_bound(&t, BoundMode::ExcludeLast), 5.0 * MS);
        assert_eq!(period_bound(&t, BoundMode::AllStages), 9.0 * MS);
        assert_eq!(period_bound(&[7.0], BoundMode::ExcludeLast), 0.0);
        assert!(min_period_bound(&[7.0], 1e-9, BoundMode::ExcludeLast).is_ok());
        assert!(min_period_bound(&t, 5.0 * MS, BoundMode::ExcludeLast).is_ok());
        match min_period_bound(&t, 4.0 * MS, BoundMode::ExcludeLast) {
            Err(SchedulerError::PeriodBelowBound { deficit, .. }) => assert!((deficit - MS).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lone_gpu_stage_never_blocks() {
        let p = Pipeline::new(vec![stage("render", 0, 10.0 * MS, 4.0 * MS, true)], 0).unwrap();
        let t = run_unsynchronized(&p, 0.1);
        assert_eq!(t.total_blocked(), 0);
        assert_eq!(t.entries.len(), 10);
    }

    #[test]
    fn simultaneous_gpu_stages_serialize() {
        let p = Pipeline::new(
            vec![stage("a", 0, 20.0 * MS, 5.0 * MS, true), stage("b", 1, 20.0 * MS, 5.0 * MS, true)],
            0,
        )
        .unwrap();
        let t = run_unsynchronized(&p, 0.01);
        assert_eq!(t.entries[1].blocked, 5_000_000);
        assert_eq!(t.max_gpu_overlap(&[true, true]), 1);
    }

    fn contended() -> Pipeline {
        Pipeline::new(
            vec![
                stage("listener", 0, 10.0 * MS, 2.0 * MS, false),
                stage("render", 1, 10.0 * MS, 6.0 * MS, true),
                stage("reproject", 2, 5.0 * MS, 2.0 * MS, true),
            ],
            0,
        )
        .unwrap()
    }

    #[test]
    fn contention_shows_blocking_and_inversions() {
        let t = run_unsynchronized(&contended(), 0.1);
        assert!(t.total_blocked() > 0);
        assert!(t.inversions >= 1);
        assert_eq!(t.max_gpu_overlap(&[false, true, true]), 1);
    }

    #[test]
    fn sequential_chain() {
        let p = contended();
        let t = run_contention_aware(&p, 0.1);
        assert_eq!(t.total_blocked(), 0);
        assert_eq!(t.inversions, 0);
        assert_eq!(t.deadline_misses, 0);
        // chain latency is the sum of the stage durations
        assert!(t.latencies.iter().all(|l| *l == Some(10_000_000)));
        let u = run_unsynchronized(&p, 0.1);
        let (ca, un) = paired_mean_latency(&t, &u).unwrap();
        assert!(ca <= un);
    }

    #[test]
    fn overrun_is_a_deadline_miss() {
        let p = Pipeline::new(
            vec![stage("a", 0, 5.0 * MS, 3.0 * MS, true), stage("b", 1, 5.0 * MS, 3.0 * MS, true)],
            0,
        )
        .unwrap();
        let t = run_contention_aware(&p, 0.02);
        assert!(t.deadline_misses > 0);
        assert_eq!(t.total_blocked(), 0);
    }

    #[test]
    fn csv_layout() {
        let t = run_contention_aware(&contended(), 0.01);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("stage,start_ns,end_ns,blocked_ns"));
        assert_eq!(lines.next(), Some("listener,0,2000000,0"));
    }

    #[test]
    fn invalid_order_rejected() {
        let r = Pipeline::new(vec![stage("a", 0, 1.0, 0.1, false), stage("b", 2, 1.0, 0.1, false)], 0);
        assert!(r.is_err());
    }
}
