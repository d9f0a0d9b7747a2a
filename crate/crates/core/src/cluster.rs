//! Discrete-event simulation of an asynchronous pool of compute agents, and
//! the master loop that trades finished responses for new candidates.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{substream, BasRng};

/// Agent pool and timing model. Times are integer seconds of virtual time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub n_agents: usize,
    /// Fixed part of every job's duration.
    pub base_delay: u64,
    /// Mean of the Poisson part of every job's duration.
    pub poisson_mean: f64,
    pub max_in_flight: usize,
    /// Virtual time a sampler trial takes before its queue is available.
    pub sampler_delay: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self { n_agents: 5, base_delay: 20, poisson_mean: 20.0, max_in_flight: 10, sampler_delay: 0 }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 || self.max_in_flight == 0 {
            return Err(Error::Config("cluster needs at least one agent and one in-flight slot".into()));
        }
        if !(self.poisson_mean > 0.0 && self.poisson_mean.is_finite()) {
            return Err(Error::Config(format!("poisson mean must be positive, got {}", self.poisson_mean)));
        }
        Ok(())
    }

    /// Most jobs that may run at once.
    pub fn capacity(&self) -> usize {
        self.n_agents.min(self.max_in_flight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Finished,
    Incorporated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobRecord {
    pub id: usize,
    pub x: Vec<f64>,
    pub submit: u64,
    pub start: Option<u64>,
    pub finish: Option<u64>,
    pub state: JobState,
    pub response: Option<Vec<f64>>,
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum Event {
    Submit { t: u64, job: usize, x: Vec<f64> },
    Start { t: u64, job: usize, agent: usize },
    Finish { t: u64, job: usize, agent: usize },
    Incorporate { t: u64, job: usize, z: Vec<f64> },
    TrialBegin { t: u64, trial: usize, n_data: usize, n_running: usize },
    QueueRefresh { t: u64, trial: usize, len: usize },
}

impl Event {
    pub fn time(&self) -> u64 {
        match self {
            Event::Submit { t, .. }
            | Event::Start { t, .. }
            | Event::Finish { t, .. }
            | Event::Incorporate { t, .. }
            | Event::TrialBegin { t, .. }
            | Event::QueueRefresh { t, .. } => *t,
        }
    }
}

/// Agents, a FIFO of submitted jobs and a virtual clock.
#[derive(Debug, Clone)]
pub struct Cluster {
    config: ClusterConfig,
    clock: u64,
    jobs: Vec<JobRecord>,
    waiting: VecDeque<usize>,
    /// `(job, finish time)` per agent.
    agents: Vec<Option<(usize, u64)>>,
    rng: BasRng,
    duration: Poisson<f64>,
}

impl Cluster {
    pub fn new(config: ClusterConfig, rng: BasRng) -> Result<Self> {
        config.validate()?;
        let duration = Poisson::new(config.poisson_mean).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            config,
            clock: 0,
            jobs: Vec::new(),
            waiting: VecDeque::new(),
            agents: vec![None; config.capacity()],
            rng,
            duration,
        })
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn jobs(&self) -> &[JobRecord] {
        &self.jobs
    }

    pub fn job_mut(&mut self, id: usize) -> &mut JobRecord {
        &mut self.jobs[id]
    }

    pub fn running(&self) -> usize {
        self.agents.iter().filter(|a| a.is_some()).count()
    }

    /// Submitted but unfinished jobs.
    pub fn in_flight(&self) -> usize {
        self.running() + self.waiting.len()
    }

    pub fn submit(&mut self, x: Vec<f64>) -> (usize, Event) {
        let id = self.jobs.len();
        let ev = Event::Submit { t: self.clock, job: id, x: x.clone() };
        self.jobs.push(JobRecord {
            id,
            x,
            submit: self.clock,
            start: None,
            finish: None,
            state: JobState::Queued,
            response: None,
        });
        self.waiting.push_back(id);
        (id, ev)
    }

    fn start_waiting(&mut self, events: &mut Vec<Event>) {
        for agent in 0..self.agents.len() {
            if self.agents[agent].is_some() {
                continue;
            }
            let Some(job) = self.waiting.pop_front() else {
                break;
            };
            let extra = self.duration.sample(&mut self.rng) as u64;
            let finish = self.clock + self.config.base_delay + extra;
            self.agents[agent] = Some((job, finish));
            let rec = &mut self.jobs[job];
            rec.start = Some(self.clock);
            rec.state = JobState::Running;
            events.push(Event::Start { t: self.clock, job, agent });
        }
    }

    pub fn next_finish(&self) -> Option<u64> {
        self.agents.iter().flatten().map(|&(_, t)| t).min()
    }

    /// Advances to the next assignment or completion instant, but not past
    /// `limit`. Waiting jobs start as soon as an agent is free; jobs finishing
    /// at the same instant are handled in agent order, and freed agents take
    /// the head of the waiting queue at once. Returns the events; an empty
    /// result means nothing happened up to `limit` (the clock is then moved to
    /// `limit` if given).
    pub fn step(&mut self, limit: Option<u64>) -> Vec<Event> {
        let mut events = Vec::new();
        self.start_waiting(&mut events);
        if !events.is_empty() {
            return events;
        }
        let Some(t) = self.next_finish() else {
            if let Some(l) = limit {
                self.clock = self.clock.max(l);
            }
            return events;
        };
        if limit.is_some_and(|l| t > l) {
            self.clock = limit.expect("checked");
            return events;
        }
        self.clock = t;
        for agent in 0..self.agents.len() {
            if let Some((job, f)) = self.agents[agent] {
                if f == t {
                    self.agents[agent] = None;
                    let rec = &mut self.jobs[job];
                    rec.finish = Some(t);
                    rec.state = JobState::Finished;
                    events.push(Event::Finish { t, job, agent });
                }
            }
        }
        self.start_waiting(&mut events);
        events
    }
}

/// Data handed to the sampler at the start of a trial.
#[derive(Debug, Clone)]
pub struct TrialInput<'a> {
    pub trial: usize,
    /// Inputs with known responses.
    pub x: &'a [Vec<f64>],
    /// Responses of `x`, one vector of outputs per row.
    pub z: &'a [Vec<f64>],
    /// Inputs still being evaluated.
    pub running: &'a [Vec<f64>],
}

#[derive(Debug, Clone, Default)]
pub struct TrialOutput {
    /// Ranked candidates, best first.
    pub queue: Vec<Vec<f64>>,
    pub rmse: Option<f64>,
}

/// The surrogate side of the loop.
pub trait Sampler {
    fn trial(&mut self, input: TrialInput<'_>) -> Result<TrialOutput>;
}

/// Computes responses when a job finishes.
pub trait Responder {
    fn respond(&mut self, job: usize, x: &[f64]) -> Result<Vec<f64>>;
}

impl<F: FnMut(usize, &[f64]) -> Result<Vec<f64>>> Responder for F {
    fn respond(&mut self, job: usize, x: &[f64]) -> Result<Vec<f64>> {
        self(job, x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trial: usize,
    pub t: u64,
    pub evaluated: usize,
    pub rmse: Option<f64>,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub events: Vec<Event>,
    pub jobs: Vec<JobRecord>,
    pub trials: Vec<TrialSummary>,
    /// Initial design and its responses.
    pub initial: Vec<(Vec<f64>, Vec<f64>)>,
    /// Largest number of simultaneously running jobs observed.
    pub max_running: usize,
    /// Set when the sampler failed; the log is then partial.
    pub error: Option<String>,
}

impl RunLog {
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    /// CSV rows `trial,t,evaluated,rmse`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("trial,t,evaluated,rmse\n");
        for s in &self.trials {
            let r = s.rmse.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(out, "{},{},{},{r}", s.trial, s.t, s.evaluated);
        }
        out
    }

    /// Every evaluated input with its responses: the initial design first,
    /// then finished jobs in submission order.
    pub fn design(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut d = self.initial.clone();
        d.extend(self.jobs.iter().filter_map(|j| j.response.clone().map(|z| (j.x.clone(), z))));
        d
    }
}

/// Runs the master loop until `budget` responses (initial design included)
/// have been evaluated.
///
/// A trial starts whenever finished responses are waiting and the sampler is
/// idle; all of them are incorporated at once. The trial's queue replaces
/// the previous one `sampler_delay` seconds later. Agents are kept busy from
/// the current queue up to the in-flight limit; dispatched candidates leave
/// the queue and are never recalled.
pub fn emcee_loop<S: Sampler, F: Responder>(
    cluster: &mut Cluster,
    sampler: &mut S,
    responder: &mut F,
    initial: Vec<(Vec<f64>, Vec<f64>)>,
    budget: usize,
) -> Result<RunLog> {
    if initial.is_empty() {
        return Err(Error::EmptyData);
    }
    if budget < initial.len() {
        return Err(Error::Config(format!("budget {budget} is below the initial design size {}", initial.len())));
    }
    let delay = cluster.config().sampler_delay;
    let mut log = RunLog {
        events: Vec::new(),
        jobs: Vec::new(),
        trials: Vec::new(),
        initial,
        max_running: 0,
        error: None,
    };
    let mut queue: VecDeque<Vec<f64>> = VecDeque::new();
    let mut pending: Option<(u64, usize, Vec<Vec<f64>>)> = None;
    let mut trial = 0usize;
    let mut evaluated = log.initial.len();
    let mut needs_trial = evaluated < budget;

    loop {
        // Start a trial if responses are waiting and the sampler is free.
        if needs_trial && pending.is_none() && evaluated < budget {
            needs_trial = false;
            let t = cluster.clock();
            for job in 0..cluster.jobs().len() {
                if cluster.jobs()[job].state == JobState::Finished {
                    let rec = cluster.job_mut(job);
                    rec.state = JobState::Incorporated;
                    let z = rec.response.clone().expect("finished jobs have responses");
                    log.events.push(Event::Incorporate { t, job, z });
                }
            }
            let mut x: Vec<Vec<f64>> = log.initial.iter().map(|(x, _)| x.clone()).collect();
            let mut z: Vec<Vec<f64>> = log.initial.iter().map(|(_, z)| z.clone()).collect();
            let mut running = Vec::new();
            for j in cluster.jobs() {
                match j.state {
                    JobState::Incorporated => {
                        x.push(j.x.clone());
                        z.push(j.response.clone().expect("incorporated jobs have responses"));
                    }
                    JobState::Queued | JobState::Running => running.push(j.x.clone()),
                    JobState::Finished => {}
                }
            }
            log.events.push(Event::TrialBegin { t, trial, n_data: x.len(), n_running: running.len() });
            match sampler.trial(TrialInput { trial, x: &x, z: &z, running: &running }) {
                Ok(out) => {
                    log.trials.push(TrialSummary { trial, t, evaluated, rmse: out.rmse });
                    pending = Some((t + delay, trial, out.queue));
                }
                Err(e) => {
                    log.error = Some(e.to_string());
                    break;
                }
            }
            trial += 1;
        }
        if let Some((ready, tr, _)) = &pending {
            if *ready <= cluster.clock() {
                let tr = *tr;
                let (_, _, q) = pending.take().expect("checked");
                queue = q.into();
                log.events.push(Event::QueueRefresh { t: cluster.clock(), trial: tr, len: queue.len() });
                continue;
            }
        }
        // Keep agents saturated.
        while cluster.in_flight() < cluster.config().capacity() && evaluated + cluster.in_flight() < budget {
            let Some(x) = queue.pop_front() else {
                break;
            };
            let (_, ev) = cluster.submit(x);
            log.events.push(ev);
        }
        if evaluated >= budget && cluster.in_flight() == 0 {
            break;
        }
        let limit = pending.as_ref().map(|p| p.0);
        let events = cluster.step(limit);
        log.max_running = log.max_running.max(cluster.running());
        if events.is_empty() {
            if pending.is_none() && cluster.in_flight() == 0 {
                // Nothing running and nothing left to dispatch.
                if queue.is_empty() {
                    log.error = Some("candidate queue exhausted before the budget was reached".into());
                }
                break;
            }
            continue;
        }
        for ev in &events {
            if let Event::Finish { job, .. } = ev {
                let x = cluster.jobs()[*job].x.clone();
                let z = responder.respond(*job, &x)?;
                cluster.job_mut(*job).response = Some(z);
                evaluated += 1;
                needs_trial = true;
            }
        }
        log.events.extend(events);
    }
    let t = cluster.clock();
    for job in 0..cluster.jobs().len() {
        if cluster.jobs()[job].state == JobState::Finished {
            let rec = cluster.job_mut(job);
            rec.state = JobState::Incorporated;
            let z = rec.response.clone().expect("finished jobs have responses");
            log.events.push(Event::Incorporate { t, job, z });
        }
    }
    log.jobs = cluster.jobs().to_vec();
    Ok(log)
}

/// A sampler that offers a fixed list of points in order, skipping any
/// already dispatched. Fails at trial `fail_at` if set.
#[derive(Debug, Clone)]
pub struct ListSampler {
    pub points: Vec<Vec<f64>>,
    pub fail_at: Option<usize>,
    pub trials: Vec<(usize, usize)>,
}

impl ListSampler {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        Self { points, fail_at: None, trials: Vec::new() }
    }
}

impl Sampler for ListSampler {
    fn trial(&mut self, input: TrialInput<'_>) -> Result<TrialOutput> {
        if self.fail_at == Some(input.trial) {
            return Err(Error::Sampler(format!("injected failure at trial {}", input.trial)));
        }
        self.trials.push((input.x.len(), input.running.len()));
        let used: Vec<&Vec<f64>> = input.x.iter().chain(input.running).collect();
        let queue = self.points.iter().filter(|p| !used.contains(p)).cloned().collect();
        Ok(TrialOutput { queue, rmse: None })
    }
}

/// Substream for the observation noise of job `job`.
pub fn job_rng(seed: u64, job: usize) -> BasRng {
    substream(seed, "noise", job as u64)
}
