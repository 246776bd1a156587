//! In-process DAG scheduler with retries and skip-on-failure.
//!
//! The scheduler thread owns every state transition. Task actions run on a
//! pool of worker threads and report back over a channel; each transition
//! is appended to the run's event list with a sequence number and handed to
//! an observer (run log, live status).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::mpsc;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    #[serde(default)]
    pub deps: BTreeSet<String>,
    pub action: String,
    #[serde(default)]
    pub max_retries: u32,
    #[serde(default)]
    pub retry_delay_ms: u64,
}

impl TaskSpec {
    pub fn new(task_id: &str, action: &str, deps: &[&str]) -> Self {
        Self {
            task_id: task_id.to_string(),
            deps: deps.iter().map(|d| d.to_string()).collect(),
            action: action.to_string(),
            max_retries: 0,
            retry_delay_ms: 0,
        }
    }

    pub fn with_retries(mut self, max_retries: u32, retry_delay: Duration) -> Self {
        self.max_retries = max_retries;
        self.retry_delay_ms = retry_delay.as_millis() as u64;
        self
    }

    pub fn retry_delay(&self) -> Duration {
        Duration::from_millis(self.retry_delay_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskState {
    Pending,
    Running,
    Success,
    Failed,
    Skipped,
}

impl TaskState {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskState::Success | TaskState::Failed | TaskState::Skipped)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DagError {
    #[error("pipeline has no tasks")]
    Empty,
    #[error("task id {0:?} is declared twice")]
    Duplicate(String),
    #[error("task {0:?} depends on itself")]
    SelfDependency(String),
    #[error("task {task:?} depends on unknown task {dep:?}")]
    UnknownDependency { task: String, dep: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
}

/// Topological order with ties broken by task id.
pub fn validate_dag(tasks: &[TaskSpec]) -> Result<Vec<String>, DagError> {
    if tasks.is_empty() {
        return Err(DagError::Empty);
    }
    let mut deps: BTreeMap<&str, &BTreeSet<String>> = BTreeMap::new();
    for t in tasks {
        if deps.insert(&t.task_id, &t.deps).is_some() {
            return Err(DagError::Duplicate(t.task_id.clone()));
        }
    }
    for t in tasks {
        if t.deps.contains(&t.task_id) {
            return Err(DagError::SelfDependency(t.task_id.clone()));
        }
        if let Some(dep) = t.deps.iter().find(|d| !deps.contains_key(d.as_str())) {
            return Err(DagError::UnknownDependency {
                task: t.task_id.clone(),
                dep: dep.clone(),
            });
        }
    }

    let mut indegree: BTreeMap<&str, usize> = deps.iter().map(|(id, d)| (*id, d.len())).collect();
    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, ds) in &deps {
        for d in ds.iter() {
            dependents.entry(d.as_str()).or_default().push(id);
        }
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, n)| **n == 0).map(|(id, _)| *id).collect();
    let mut order = Vec::with_capacity(tasks.len());
    while let Some(id) = ready.pop_first() {
        order.push(id.to_string());
        for next in dependents.get(id).into_iter().flatten() {
            let n = indegree.get_mut(next).expect("known task");
            *n -= 1;
            if *n == 0 {
                ready.insert(next);
            }
        }
    }
    if order.len() == tasks.len() {
        return Ok(order);
    }

    // Every remaining task has an unfinished dependency that also remains,
    // so following dependencies from any of them must revisit a task.
    let placed: BTreeSet<&str> = order.iter().map(String::as_str).collect();
    let remaining = |id: &str| !placed.contains(id);
    let start = *deps.keys().find(|id| remaining(id)).expect("a task remains");
    let mut path = vec![start];
    loop {
        let last = *path.last().expect("non-empty path");
        let next = deps[last]
            .iter()
            .map(String::as_str)
            .find(|d| remaining(d))
            .expect("remaining task has a remaining dependency");
        if let Some(pos) = path.iter().position(|p| *p == next) {
            let mut cycle: Vec<String> = path[pos..].iter().map(|s| s.to_string()).collect();
            cycle.push(next.to_string());
            return Err(DagError::Cycle(cycle));
        }
        path.push(next);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEvent {
    pub seq: u64,
    pub run_id: String,
    pub at: DateTime<Utc>,
    pub task_id: String,
    pub state: TaskState,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskTiming {
    pub first_started_at: Option<DateTime<Utc>>,
    pub finished_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagRun {
    pub run_id: String,
    pub task_states: BTreeMap<String, TaskState>,
    pub attempt_counts: BTreeMap<String, u32>,
    pub timings: BTreeMap<String, TaskTiming>,
    #[serde(default)]
    pub failure_reasons: BTreeMap<String, String>,
    pub events: Vec<RunEvent>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
}

impl DagRun {
    fn new(run_id: &str, order: &[String]) -> Self {
        Self {
            run_id: run_id.to_string(),
            task_states: order.iter().map(|t| (t.clone(), TaskState::Pending)).collect(),
            attempt_counts: order.iter().map(|t| (t.clone(), 0)).collect(),
            timings: order.iter().map(|t| (t.clone(), TaskTiming::default())).collect(),
            failure_reasons: BTreeMap::new(),
            events: Vec::new(),
            started_at: Utc::now(),
            finished_at: None,
        }
    }

    pub fn is_finished(&self) -> bool {
        self.finished_at.is_some()
    }

    pub fn succeeded(&self) -> bool {
        self.is_finished() && self.task_states.values().all(|s| *s == TaskState::Success)
    }

    /// Order in which tasks were first started.
    pub fn start_order(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.events
            .iter()
            .filter(|e| e.state == TaskState::Running && seen.insert(e.task_id.clone()))
            .map(|e| e.task_id.clone())
            .collect()
    }

    /// Checks the run invariants against `tasks`; returns the first violation.
    pub fn check(&self, tasks: &[TaskSpec]) -> Result<(), String> {
        let by_id: BTreeMap<&str, &TaskSpec> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
        let mut state: BTreeMap<&str, TaskState> =
            by_id.keys().map(|id| (*id, TaskState::Pending)).collect();
        for e in &self.events {
            let spec = by_id.get(e.task_id.as_str()).ok_or(format!("unknown task {}", e.task_id))?;
            if e.state == TaskState::Running {
                if let Some(dep) = spec.deps.iter().find(|d| state[d.as_str()] != TaskState::Success) {
                    return Err(format!("{} started before {dep} succeeded", e.task_id));
                }
            }
            if e.attempt > spec.max_retries + 1 {
                return Err(format!("{} exceeded its retry bound", e.task_id));
            }
            state.insert(&e.task_id, e.state);
        }
        for (id, s) in &self.task_states {
            if state.get(id.as_str()) != Some(s) {
                return Err(format!("{id} final state disagrees with its events"));
            }
            if *s == TaskState::Skipped && !self.has_failed_ancestor(id, &by_id) {
                return Err(format!("{id} skipped without a failed dependency"));
            }
        }
        let terminal = self.task_states.values().all(|s| s.is_terminal());
        if self.finished_at.is_some() != terminal {
            return Err("finished_at does not match task states".into());
        }
        for w in self.events.windows(2) {
            if w[1].seq != w[0].seq + 1 {
                return Err("event sequence has a gap".into());
            }
        }
        Ok(())
    }

    fn has_failed_ancestor(&self, id: &str, by_id: &BTreeMap<&str, &TaskSpec>) -> bool {
        let mut stack: Vec<&str> = by_id[id].deps.iter().map(String::as_str).collect();
        let mut seen = BTreeSet::new();
        while let Some(d) = stack.pop() {
            if !seen.insert(d) {
                continue;
            }
            if self.task_states.get(d) == Some(&TaskState::Failed) {
                return true;
            }
            stack.extend(by_id[d].deps.iter().map(String::as_str));
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TaskFailure {
    /// The attempt failed; the task may be retried.
    #[error("{0}")]
    Failed(String),
    /// The executor itself cannot run anything; the run is aborted.
    #[error("executor unavailable: {0}")]
    Unavailable(String),
}

pub trait TaskExecutor: Send + Sync {
    fn execute(&self, task: &TaskSpec, attempt: u32) -> Result<(), TaskFailure>;
}

impl<F> TaskExecutor for F
where
    F: Fn(&TaskSpec, u32) -> Result<(), TaskFailure> + Send + Sync,
{
    fn execute(&self, task: &TaskSpec, attempt: u32) -> Result<(), TaskFailure> {
        self(task, attempt)
    }
}

#[derive(Debug, Error)]
pub enum ExecuteError {
    #[error(transparent)]
    Invalid(#[from] DagError),
    #[error("run aborted, {reason}")]
    ExecutorUnavailable { reason: String, run: Box<DagRun> },
}

/// Called after every state transition with the updated run.
pub trait RunObserver: Sync {
    fn on_event(&self, run: &DagRun, event: &RunEvent);
}

impl RunObserver for () {
    fn on_event(&self, _: &DagRun, _: &RunEvent) {}
}

struct Recorder<'a> {
    run: DagRun,
    seq: u64,
    observer: &'a dyn RunObserver,
}

impl Recorder<'_> {
    fn transition(&mut self, task_id: &str, state: TaskState, message: Option<String>) {
        let now = Utc::now();
        self.run.task_states.insert(task_id.to_string(), state);
        let timing = self.run.timings.get_mut(task_id).expect("known task");
        match state {
            TaskState::Running if timing.first_started_at.is_none() => timing.first_started_at = Some(now),
            TaskState::Success | TaskState::Failed => timing.finished_at = Some(now),
            _ => {}
        }
        if state == TaskState::Failed {
            if let Some(m) = &message {
                self.run.failure_reasons.insert(task_id.to_string(), m.clone());
            }
        }
        self.seq += 1;
        let event = RunEvent {
            seq: self.seq,
            run_id: self.run.run_id.clone(),
            at: now,
            task_id: task_id.to_string(),
            state,
            attempt: self.run.attempt_counts[task_id],
            message,
        };
        self.run.events.push(event.clone());
        self.observer.on_event(&self.run, &event);
    }

    fn state(&self, task_id: &str) -> TaskState {
        self.run.task_states[task_id]
    }
}

/// Runs `tasks` on `workers` threads (at least one).
pub fn execute_dag(
    tasks: &[TaskSpec],
    executor: &dyn TaskExecutor,
    run_id: &str,
    workers: usize,
    observer: &dyn RunObserver,
) -> Result<DagRun, ExecuteError> {
    let order = validate_dag(tasks)?;
    let specs: BTreeMap<&str, &TaskSpec> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut dependents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in tasks {
        for d in &t.deps {
            dependents.entry(d.as_str()).or_default().push(&t.task_id);
        }
    }
    let workers = workers.max(1);
    let mut rec = Recorder {
        run: DagRun::new(run_id, &order),
        seq: 0,
        observer,
    };
    let mut abort: Option<String> = None;

    let (job_tx, job_rx) = mpsc::channel::<(&TaskSpec, u32)>();
    let job_rx = Mutex::new(job_rx);
    let (done_tx, done_rx) = mpsc::channel::<(String, Result<(), TaskFailure>)>();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let job_rx = &job_rx;
            let done_tx = done_tx.clone();
            scope.spawn(move || loop {
                let job = job_rx.lock().expect("job queue poisoned").recv();
                let Ok((spec, attempt)) = job else { break };
                let outcome = executor.execute(spec, attempt);
                if done_tx.send((spec.task_id.clone(), outcome)).is_err() {
                    break;
                }
            });
        }
        drop(done_tx);

        let mut running = 0usize;
        let mut waiting: BTreeMap<String, Instant> = BTreeMap::new();
        loop {
            if abort.is_none() {
                let now = Instant::now();
                for id in &order {
                    if running >= workers {
                        break;
                    }
                    let runnable = rec.state(id) == TaskState::Pending
                        && waiting.get(id).is_none_or(|due| *due <= now)
                        && specs[id.as_str()].deps.iter().all(|d| rec.state(d) == TaskState::Success);
                    if runnable {
                        waiting.remove(id);
                        *rec.run.attempt_counts.get_mut(id).expect("known task") += 1;
                        rec.transition(id, TaskState::Running, None);
                        let attempt = rec.run.attempt_counts[id];
                        job_tx.send((specs[id.as_str()], attempt)).expect("workers alive");
                        running += 1;
                    }
                }
            }
            if running == 0 && (waiting.is_empty() || abort.is_some()) {
                break;
            }
            let received = if running == 0 {
                let due = waiting.values().min().copied().expect("a retry is waiting");
                std::thread::sleep(due.saturating_duration_since(Instant::now()));
                continue;
            } else {
                match waiting.values().min() {
                    Some(due) => match done_rx.recv_timeout(due.saturating_duration_since(Instant::now())) {
                        Ok(r) => r,
                        Err(mpsc::RecvTimeoutError::Timeout) => continue,
                        Err(mpsc::RecvTimeoutError::Disconnected) => break,
                    },
                    None => match done_rx.recv() {
                        Ok(r) => r,
                        Err(_) => break,
                    },
                }
            };
            running -= 1;
            let (task_id, outcome) = received;
            let spec = specs[task_id.as_str()];
            match outcome {
                Ok(()) => rec.transition(&task_id, TaskState::Success, None),
                Err(TaskFailure::Failed(msg)) => {
                    let attempts = rec.run.attempt_counts[&task_id];
                    if attempts <= spec.max_retries && abort.is_none() {
                        rec.transition(
                            &task_id,
                            TaskState::Pending,
                            Some(format!("attempt {attempts} failed: {msg}")),
                        );
                        waiting.insert(task_id.clone(), Instant::now() + spec.retry_delay());
                    } else {
                        rec.transition(&task_id, TaskState::Failed, Some(msg));
                        skip_dependents(&mut rec, &task_id, &dependents);
                    }
                }
                Err(TaskFailure::Unavailable(msg)) => {
                    rec.transition(&task_id, TaskState::Failed, Some(format!("executor unavailable: {msg}")));
                    abort.get_or_insert(msg);
                }
            }
        }
        drop(job_tx);
    });

    if let Some(reason) = abort {
        for id in &order {
            if !rec.state(id).is_terminal() {
                rec.transition(id, TaskState::Failed, Some(format!("run aborted: executor unavailable: {reason}")));
            }
        }
        rec.run.finished_at = Some(Utc::now());
        return Err(ExecuteError::ExecutorUnavailable {
            reason,
            run: Box::new(rec.run),
        });
    }
    rec.run.finished_at = Some(Utc::now());
    Ok(rec.run)
}

fn skip_dependents(rec: &mut Recorder<'_>, failed: &str, dependents: &BTreeMap<&str, Vec<&str>>) {
    let mut queue: VecDeque<&str> = dependents.get(failed).into_iter().flatten().copied().collect();
    while let Some(id) = queue.pop_front() {
        if rec.state(id) == TaskState::Pending {
            rec.transition(id, TaskState::Skipped, Some(format!("dependency {failed} failed")));
            queue.extend(dependents.get(id).into_iter().flatten().copied());
        }
    }
}

/// Time-based run id, unique within one process.
pub fn new_run_id() -> String {
    static LAST: Mutex<Option<DateTime<Utc>>> = Mutex::new(None);
    let mut last = LAST.lock().expect("run id clock poisoned");
    let mut now = Utc::now();
    if let Some(prev) = *last {
        if now <= prev {
            now = prev + chrono::Duration::microseconds(1);
        }
    }
    *last = Some(now);
    format!("run-{}", now.format("%Y%m%dT%H%M%S%.6fZ"))
}

/// Appends one JSON line per state transition.
pub struct JsonlRunLog {
    out: Mutex<BufWriter<File>>,
}

impl JsonlRunLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            out: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl RunObserver for JsonlRunLog {
    fn on_event(&self, _: &DagRun, event: &RunEvent) {
        let mut out = self.out.lock().expect("run log poisoned");
        // A log write failure must not take the run down with it.
        if serde_json::to_writer(&mut *out, event).is_ok() {
            let _ = out.write_all(b"\n");
            let _ = out.flush();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singleton() {
        assert_eq!(validate_dag(&[TaskSpec::new("a", "x", &[])]).unwrap(), ["a"]);
    }

    #[test]
    fn ties_break_by_id() {
        let tasks = [
            TaskSpec::new("c", "x", &[]),
            TaskSpec::new("b", "x", &[]),
            TaskSpec::new("a", "x", &["c"]),
        ];
        assert_eq!(validate_dag(&tasks).unwrap(), ["b", "c", "a"]);
    }

    #[test]
    fn structural_errors() {
        assert_eq!(validate_dag(&[]), Err(DagError::Empty));
        let dup = [TaskSpec::new("a", "x", &[]), TaskSpec::new("a", "x", &[])];
        assert_eq!(validate_dag(&dup), Err(DagError::Duplicate("a".into())));
        assert_eq!(
            validate_dag(&[TaskSpec::new("a", "x", &["a"])]),
            Err(DagError::SelfDependency("a".into()))
        );
        assert!(matches!(
            validate_dag(&[TaskSpec::new("a", "x", &["ghost"])]),
            Err(DagError::UnknownDependency { .. })
        ));
    }

    #[test]
    fn cycle_is_named() {
        let tasks = [
            TaskSpec::new("root", "x", &[]),
            TaskSpec::new("p", "x", &["q", "root"]),
            TaskSpec::new("q", "x", &["p"]),
        ];
        match validate_dag(&tasks) {
            Err(DagError::Cycle(c)) => {
                assert_eq!(c.first(), c.last());
                assert!(c.contains(&"p".to_string()) && c.contains(&"q".to_string()));
                assert!(!c.contains(&"root".to_string()));
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn closure_executor() {
        let tasks = [TaskSpec::new("a", "x", &[]), TaskSpec::new("b", "x", &["a"])];
        let run = execute_dag(&tasks, &|_: &TaskSpec, _: u32| Ok(()), "r", 1, &()).unwrap();
        assert!(run.succeeded());
        run.check(&tasks).unwrap();
    }
}
