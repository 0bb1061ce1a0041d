//! Driver, Searcher and Executor as threads exchanging messages.
//!
//! Every actor owns a mailbox and handles one message at a time. Queries
//! carry a reply channel; everything else is fire-and-forget. Each actor
//! also watches a shutdown channel that its owner drops to stop it.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, select, unbounded, Receiver, Sender};

use crate::data::DataSplit;
use crate::error::{Error, Result};
use crate::search::{History, HistoryRecord, Status, Strategy, StrategyKind, StrategyOptions};
use crate::space::{Configuration, SearchSpace};
use crate::train::{train_partial, ModelBatch, ModelState, TrainMode};

/// How long a query waits for its reply.
const REPLY_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actor {
    Driver,
    Searcher,
    Executor,
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Actor::Driver => "driver",
            Actor::Searcher => "searcher",
            Actor::Executor => "executor",
        })
    }
}

#[derive(Debug, Clone)]
pub enum Message {
    RunSearch(SearchSpace, Arc<DataSplit>),
    TopModel,
    AllBuilt,
    ModelsBuilt,
    Models,
    BuildModel(Configuration),
    DoWork,
    StopWork,
    QueueSize,
    ModelBuilt(Box<ModelState>),
    WorkDone,
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::RunSearch(..) => "RunSearch",
            Message::TopModel => "TopModel",
            Message::AllBuilt => "AllBuilt",
            Message::ModelsBuilt => "ModelsBuilt",
            Message::Models => "Models",
            Message::BuildModel(_) => "BuildModel",
            Message::DoWork => "DoWork",
            Message::StopWork => "StopWork",
            Message::QueueSize => "QueueSize",
            Message::ModelBuilt(_) => "ModelBuilt",
            Message::WorkDone => "WorkDone",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Reply {
    Ack,
    Model(Option<Box<ModelState>>),
    Boolean(bool),
    Int(usize),
    Models(Vec<ModelState>),
    Rejected(String),
}

pub struct Envelope {
    pub from: Actor,
    pub message: Message,
    pub reply: Option<Sender<Reply>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub at: Duration,
    pub from: Actor,
    pub to: Actor,
    pub kind: &'static str,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}\t{}", self.at.as_micros(), self.from, self.to, self.kind)
    }
}

/// Shared log of every message sent.
#[derive(Debug, Clone)]
pub struct Trace {
    start: Instant,
    entries: Arc<Mutex<Vec<TraceEntry>>>,
}

impl Default for Trace {
    fn default() -> Self {
        Trace {
            start: Instant::now(),
            entries: Arc::default(),
        }
    }
}

impl Trace {
    pub fn entries(&self) -> Vec<TraceEntry> {
        self.entries.lock().expect("trace lock").clone()
    }

    pub fn kinds(&self) -> Vec<&'static str> {
        self.entries().into_iter().map(|e| e.kind).collect()
    }

    /// Sends `message` and records it.
    fn post(&self, to: (&Sender<Envelope>, Actor), from: Actor, message: Message, reply: Option<Sender<Reply>>) -> Result<()> {
        let entry = TraceEntry {
            at: self.start.elapsed(),
            from,
            to: to.1,
            kind: message.kind(),
        };
        self.entries.lock().expect("trace lock").push(entry);
        to.0
            .send(Envelope { from, message, reply })
            .map_err(|_| Error::Protocol(format!("{} mailbox is closed", to.1)))
    }

    fn ask(&self, to: (&Sender<Envelope>, Actor), from: Actor, message: Message) -> Result<Reply> {
        let (tx, rx) = bounded(1);
        let kind = message.kind();
        self.post(to, from, message, Some(tx))?;
        match rx.recv_timeout(REPLY_TIMEOUT) {
            Ok(Reply::Rejected(why)) => Err(Error::Protocol(why)),
            Ok(r) => Ok(r),
            Err(_) => Err(Error::Protocol(format!("no reply to {kind} from {}", to.1))),
        }
    }
}

fn reply(env: &Envelope, r: Reply) {
    if let Some(tx) = &env.reply {
        // The asker may have given up; nothing to do then.
        let _ = tx.send(r);
    }
}

fn reject(env: &Envelope, to: Actor) {
    reply(env, Reply::Rejected(format!("{to} does not handle {}", env.message.kind())));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutorKind {
    /// Trains up to this many queued models per task, sharing each scan.
    Batch(usize),
    /// One model per task.
    Sequential,
}

impl ExecutorKind {
    fn task_size(self) -> usize {
        match self {
            ExecutorKind::Batch(k) => k.max(1),
            ExecutorKind::Sequential => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExecutorOptions {
    pub kind: ExecutorKind,
    /// Scheduling delay waited before every iteration task.
    pub sched_delay: Duration,
    /// Iterations each model is trained for.
    pub iterations: usize,
    pub train_mode: TrainMode,
}

impl Default for ExecutorOptions {
    fn default() -> Self {
        ExecutorOptions {
            kind: ExecutorKind::Batch(10),
            sched_delay: Duration::ZERO,
            iterations: 100,
            train_mode: TrainMode::FullBatch,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ExecutorStats {
    /// Iteration tasks started.
    pub tasks: usize,
    /// Model-iterations completed.
    pub model_iterations: usize,
    pub models_built: usize,
    /// Time spent waiting out scheduling delays.
    pub overhead: Duration,
    pub compute: Duration,
}

impl ExecutorStats {
    /// Average scheduling overhead per model per iteration.
    pub fn overhead_per_model_iteration(&self) -> Option<Duration> {
        (self.model_iterations > 0).then(|| self.overhead / self.model_iterations as u32)
    }
}

enum Flow {
    Continue,
    Stopped,
    Shutdown,
}

struct Executor {
    data: Arc<DataSplit>,
    opts: ExecutorOptions,
    mailbox: Receiver<Envelope>,
    shutdown: Receiver<()>,
    searcher: Sender<Envelope>,
    trace: Trace,
    stats: Arc<Mutex<ExecutorStats>>,
    queue: VecDeque<(usize, Configuration)>,
    consuming: bool,
    next_id: usize,
}

impl Executor {
    fn run(mut self) {
        loop {
            if self.consuming {
                if self.queue.is_empty() {
                    self.consuming = false;
                    if self.notify(Message::WorkDone).is_err() {
                        return;
                    }
                    continue;
                }
                match self.task() {
                    Ok(Flow::Shutdown) | Err(_) => return,
                    Ok(_) => continue,
                }
            }
            select! {
                recv(self.mailbox) -> env => match env {
                    Ok(env) => {
                        self.handle(env);
                    }
                    Err(_) => return,
                },
                recv(self.shutdown) -> _ => return,
            }
        }
    }

    fn notify(&self, message: Message) -> Result<()> {
        self.trace.post((&self.searcher, Actor::Searcher), Actor::Executor, message, None)
    }

    /// Returns true for StopWork.
    fn handle(&mut self, env: Envelope) -> bool {
        match &env.message {
            Message::BuildModel(config) => {
                self.queue.push_back((self.next_id, config.clone()));
                self.next_id += 1;
            }
            Message::DoWork => self.consuming = true,
            Message::StopWork => {
                self.consuming = false;
                return true;
            }
            Message::QueueSize => reply(&env, Reply::Int(self.queue.len())),
            _ => reject(&env, Actor::Executor),
        }
        false
    }

    /// Waits out one scheduling delay while serving the mailbox.
    fn pause(&mut self) -> Flow {
        let start = Instant::now();
        let deadline = start + self.opts.sched_delay;
        let mut flow = Flow::Continue;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            select! {
                recv(self.mailbox) -> env => match env {
                    Ok(env) => {
                        if self.handle(env) {
                            flow = Flow::Stopped;
                            break;
                        }
                    }
                    Err(_) => {
                        flow = Flow::Shutdown;
                        break;
                    }
                },
                recv(self.shutdown) -> _ => {
                    flow = Flow::Shutdown;
                    break;
                }
                default(left) => break,
            }
        }
        self.stats.lock().expect("stats lock").overhead += start.elapsed();
        flow
    }

    fn task(&mut self) -> Result<Flow> {
        let take = self.opts.kind.task_size().min(self.queue.len());
        let jobs: Vec<(usize, Configuration)> = self.queue.drain(..take).collect();
        let dim = self.data.train.n_features();
        let members = jobs
            .iter()
            .map(|(id, c)| ModelState::new(*id, c.clone(), dim))
            .collect::<Result<Vec<_>>>()?;
        let mut batch = ModelBatch::new(members)?;
        for _ in 0..self.opts.iterations {
            self.stats.lock().expect("stats lock").tasks += 1;
            match self.pause() {
                Flow::Continue => {}
                Flow::Stopped => {
                    for job in jobs.into_iter().rev() {
                        self.queue.push_front(job);
                    }
                    return Ok(Flow::Stopped);
                }
                Flow::Shutdown => return Ok(Flow::Shutdown),
            }
            let start = Instant::now();
            batch = train_partial(batch, &self.data.train, &self.data.validation, 1, self.opts.train_mode)?;
            let mut stats = self.stats.lock().expect("stats lock");
            stats.compute += start.elapsed();
            stats.model_iterations += batch.len();
        }
        for m in batch.into_members() {
            self.notify(Message::ModelBuilt(Box::new(m)))?;
            self.stats.lock().expect("stats lock").models_built += 1;
        }
        Ok(Flow::Continue)
    }
}

/// A running executor thread.
pub struct ExecutorHandle {
    mailbox: Sender<Envelope>,
    trace: Trace,
    stats: Arc<Mutex<ExecutorStats>>,
    shutdown: Option<Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ExecutorHandle {
    /// Starts an executor that reports `ModelBuilt` and `WorkDone` to
    /// `searcher`.
    pub fn spawn(data: Arc<DataSplit>, opts: ExecutorOptions, searcher: Sender<Envelope>, trace: Trace) -> Self {
        let (tx, rx) = unbounded();
        let (stop_tx, stop_rx) = bounded(0);
        let stats = Arc::new(Mutex::new(ExecutorStats::default()));
        let executor = Executor {
            data,
            opts,
            mailbox: rx,
            shutdown: stop_rx,
            searcher,
            trace: trace.clone(),
            stats: stats.clone(),
            queue: VecDeque::new(),
            consuming: false,
            next_id: 0,
        };
        let thread = std::thread::spawn(move || executor.run());
        ExecutorHandle {
            mailbox: tx,
            trace,
            stats,
            shutdown: Some(stop_tx),
            thread: Some(thread),
        }
    }

    /// Sends a message as the searcher.
    pub fn send(&self, message: Message) -> Result<()> {
        self.trace.post((&self.mailbox, Actor::Executor), Actor::Searcher, message, None)
    }

    /// Sends a query as the searcher and waits for the reply.
    pub fn ask(&self, message: Message) -> Result<Reply> {
        self.trace.ask((&self.mailbox, Actor::Executor), Actor::Searcher, message)
    }

    pub fn queue_size(&self) -> Result<usize> {
        match self.ask(Message::QueueSize)? {
            Reply::Int(n) => Ok(n),
            other => Err(Error::Protocol(format!("unexpected reply {other:?} to QueueSize"))),
        }
    }

    pub fn stats(&self) -> ExecutorStats {
        *self.stats.lock().expect("stats lock")
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    fn mailbox(&self) -> &Sender<Envelope> {
        &self.mailbox
    }
}

impl Drop for ExecutorHandle {
    fn drop(&mut self) {
        self.shutdown.take();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearcherOptions {
    pub strategy: StrategyKind,
    pub search: StrategyOptions,
    /// Models to build before the search is finished.
    pub max_models: usize,
    /// Configurations handed to the executor per round.
    pub batch_size: usize,
    pub executor: ExecutorOptions,
}

impl Default for SearcherOptions {
    fn default() -> Self {
        SearcherOptions {
            strategy: StrategyKind::Random,
            search: StrategyOptions::default(),
            max_models: 20,
            batch_size: 10,
            executor: ExecutorOptions::default(),
        }
    }
}

struct Searcher {
    opts: SearcherOptions,
    mailbox: Receiver<Envelope>,
    self_tx: Sender<Envelope>,
    shutdown: Receiver<()>,
    trace: Trace,
    executor: Option<ExecutorHandle>,
    executor_stats: Arc<Mutex<Option<ExecutorStats>>>,
    run: Option<(SearchSpace, Strategy)>,
    history: History,
    models: Vec<ModelState>,
    proposed: usize,
    all_built: bool,
}

impl Searcher {
    fn run(mut self) {
        loop {
            select! {
                recv(self.mailbox) -> env => match env {
                    Ok(env) => {
                        if self.handle(env).is_err() {
                            self.all_built = true;
                        }
                    }
                    Err(_) => break,
                },
                recv(self.shutdown) -> _ => break,
            }
            if let Some(e) = &self.executor {
                *self.executor_stats.lock().expect("stats lock") = Some(e.stats());
            }
        }
    }

    fn top_model(&self) -> Option<&ModelState> {
        self.models
            .iter()
            .filter(|m| m.val_error.is_some())
            .fold(None, |best: Option<&ModelState>, m| match best {
                Some(b) if b.val_error <= m.val_error => Some(b),
                _ => Some(m),
            })
    }

    fn handle(&mut self, env: Envelope) -> Result<()> {
        match &env.message {
            Message::RunSearch(space, data) => {
                if self.run.is_some() {
                    reply(&env, Reply::Rejected("a search is already running".into()));
                    return Ok(());
                }
                let strategy = match Strategy::build(self.opts.strategy, space, &self.opts.search) {
                    Ok(s) => s,
                    Err(e) => {
                        reply(&env, Reply::Rejected(e.to_string()));
                        return Ok(());
                    }
                };
                self.executor = Some(ExecutorHandle::spawn(
                    data.clone(),
                    self.opts.executor.clone(),
                    self.self_tx.clone(),
                    self.trace.clone(),
                ));
                self.run = Some((space.clone(), strategy));
                reply(&env, Reply::Ack);
                self.dispatch()?;
            }
            Message::TopModel => reply(&env, Reply::Model(self.top_model().cloned().map(Box::new))),
            Message::AllBuilt => reply(&env, Reply::Boolean(self.all_built)),
            Message::ModelsBuilt => reply(&env, Reply::Int(self.models.len())),
            Message::Models => reply(&env, Reply::Models(self.models.clone())),
            Message::ModelBuilt(model) => {
                self.history.push(HistoryRecord {
                    model_id: model.id,
                    config: model.config.clone(),
                    iterations_used: model.iterations_used,
                    val_error: model.val_error,
                    status: Status::Finished,
                });
                self.models.push((**model).clone());
            }
            Message::WorkDone => self.dispatch()?,
            _ => reject(&env, Actor::Searcher),
        }
        Ok(())
    }

    /// Hands the next round of proposals to the executor.
    fn dispatch(&mut self) -> Result<()> {
        let Some((space, strategy)) = self.run.as_mut() else {
            return Ok(());
        };
        let left = self.opts.max_models.saturating_sub(self.proposed);
        let proposals = if left == 0 {
            Vec::new()
        } else {
            strategy.propose(left.min(self.opts.batch_size.max(1)), space, &self.history)?
        };
        if proposals.is_empty() {
            self.all_built = true;
            return Ok(());
        }
        let executor = self.executor.as_ref().expect("spawned with the run");
        for config in proposals {
            self.trace
                .post((executor.mailbox(), Actor::Executor), Actor::Searcher, Message::BuildModel(config), None)?;
            self.proposed += 1;
        }
        self.trace
            .post((executor.mailbox(), Actor::Executor), Actor::Searcher, Message::DoWork, None)
    }
}

/// The driver's side of a search: polls the searcher it started.
pub struct DriverHandle {
    searcher: Sender<Envelope>,
    trace: Trace,
    executor_stats: Arc<Mutex<Option<ExecutorStats>>>,
    shutdown: Option<Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

/// Starts a searcher and sends it `RunSearch`.
pub fn driver_run(space: SearchSpace, data: Arc<DataSplit>, opts: SearcherOptions) -> Result<DriverHandle> {
    let trace = Trace::default();
    let (tx, rx) = unbounded();
    let (stop_tx, stop_rx) = bounded(0);
    let executor_stats = Arc::new(Mutex::new(None));
    let searcher = Searcher {
        opts,
        mailbox: rx,
        self_tx: tx.clone(),
        shutdown: stop_rx,
        trace: trace.clone(),
        executor: None,
        executor_stats: executor_stats.clone(),
        run: None,
        history: History::new(),
        models: Vec::new(),
        proposed: 0,
        all_built: false,
    };
    let thread = std::thread::spawn(move || searcher.run());
    let handle = DriverHandle {
        searcher: tx,
        trace,
        executor_stats,
        shutdown: Some(stop_tx),
        thread: Some(thread),
    };
    handle.run_search(space, data)?;
    Ok(handle)
}

impl DriverHandle {
    /// Sends a query as the driver and waits for the reply.
    pub fn ask(&self, message: Message) -> Result<Reply> {
        self.trace.ask((&self.searcher, Actor::Searcher), Actor::Driver, message)
    }

    pub fn run_search(&self, space: SearchSpace, data: Arc<DataSplit>) -> Result<()> {
        match self.ask(Message::RunSearch(space, data))? {
            Reply::Ack => Ok(()),
            other => Err(Error::Protocol(format!("unexpected reply {other:?} to RunSearch"))),
        }
    }

    pub fn top_model(&self) -> Result<Option<ModelState>> {
        match self.ask(Message::TopModel)? {
            Reply::Model(m) => Ok(m.map(|b| *b)),
            other => Err(Error::Protocol(format!("unexpected reply {other:?} to TopModel"))),
        }
    }

    pub fn all_built(&self) -> Result<bool> {
        match self.ask(Message::AllBuilt)? {
            Reply::Boolean(b) => Ok(b),
            other => Err(Error::Protocol(format!("unexpected reply {other:?} to AllBuilt"))),
        }
    }

    pub fn models_built(&self) -> Result<usize> {
        match self.ask(Message::ModelsBuilt)? {
            Reply::Int(n) => Ok(n),
            other => Err(Error::Protocol(format!("unexpected reply {other:?} to ModelsBuilt"))),
        }
    }

    pub fn models(&self) -> Result<Vec<ModelState>> {
        match self.ask(Message::Models)? {
            Reply::Models(ms) => Ok(ms),
            other => Err(Error::Protocol(format!("unexpected reply {other:?} to Models"))),
        }
    }

    /// Polls `AllBuilt` until it holds or `timeout` passes.
    pub fn wait(&self, timeout: Duration) -> Result<bool> {
        let deadline = Instant::now() + timeout;
        loop {
            if self.all_built()? {
                return Ok(true);
            }
            if Instant::now() >= deadline {
                return Ok(false);
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn executor_stats(&self) -> Option<ExecutorStats> {
        *self.executor_stats.lock().expect("stats lock")
    }
}

impl Drop for DriverHandle {
    fn drop(&mut self) {
        self.shutdown.take();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
