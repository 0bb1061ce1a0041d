//! Nelder-Mead and Powell as ask/tell state machines.
//!
//! Both optimizers work in the unit cube: coordinate `u_i ∈ [0, 1]` maps
//! affinely onto parameter `i`'s scaled bounds. They are unconstrained, so
//! they may ask for points outside the cube; those are clipped and reported
//! back with the penalty value instead of being proposed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::{clip, Configuration, SearchSpace};

use super::History;

/// Nelder-Mead coefficients: reflection, expansion, contraction, shrink.
const NM_ALPHA: f64 = 1.0;
const NM_GAMMA: f64 = 2.0;
const NM_RHO: f64 = 0.5;
const NM_SIGMA: f64 = 0.5;
/// Initial simplex offset, as a fraction of each dimension's range.
const NM_STEP: f64 = 0.05;
/// Simplex size below which Nelder-Mead restarts from a random point.
const NM_RESTART_SIZE: f64 = 1e-6;

/// Golden-section line-search tolerance, as a fraction of the range.
const LINE_TOL: f64 = 1e-5;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Consecutive out-of-bounds asks tolerated before a forced restart.
const MAX_PENALIZED_ASKS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    NelderMead,
    Powell,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::NelderMead => "nelder-mead",
            Method::Powell => "powell",
        }
    }
}

#[derive(Debug, Clone)]
enum Optimizer {
    NelderMead(NelderMead),
    Powell(Powell),
}

impl Optimizer {
    fn ask(&mut self) -> Vec<f64> {
        match self {
            Optimizer::NelderMead(o) => o.ask(),
            Optimizer::Powell(o) => o.ask(),
        }
    }

    fn tell(&mut self, value: f64, rng: &mut ChaCha8Rng) {
        match self {
            Optimizer::NelderMead(o) => o.tell(value, rng),
            Optimizer::Powell(o) => o.tell(value, rng),
        }
    }

    fn restart(&mut self, rng: &mut ChaCha8Rng) {
        match self {
            Optimizer::NelderMead(o) => *o = NelderMead::new(random_point(o.dim, rng)),
            Optimizer::Powell(o) => *o = Powell::new(random_point(o.dim, rng)),
        }
    }
}

fn random_point(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

/// A derivative-free search over one continuous family branch.
#[derive(Debug, Clone)]
pub struct DerivativeFree {
    method: Method,
    optimizer: Optimizer,
    family: String,
    /// Scaled bounds per dimension.
    bounds: Vec<(f64, f64)>,
    rng: ChaCha8Rng,
    penalty: f64,
    /// Model id of the outstanding proposal.
    pending: Option<usize>,
    next_id: usize,
}

impl DerivativeFree {
    pub fn new(method: Method, space: &SearchSpace, seed: u64, penalty: f64) -> Result<Self> {
        let families = space.families();
        if space.has_family_param() && families.len() > 1 {
            return Err(Error::UnsupportedStrategy {
                strategy: method.name(),
                reason: "the family choice is categorical".into(),
            });
        }
        let family = families[0].to_string();
        let params = space.active_params(&family);
        if params.is_empty() {
            return Err(Error::InvalidSpace("no continuous parameters to search".into()));
        }
        if let Some(p) = params.iter().find(|p| !p.is_continuous()) {
            return Err(Error::UnsupportedStrategy {
                strategy: method.name(),
                reason: format!("parameter {:?} is categorical", p.name),
            });
        }
        let bounds: Vec<(f64, f64)> = params.iter().map(|p| p.scaled_bounds().expect("continuous")).collect();
        let center = vec![0.5; bounds.len()];
        let optimizer = match method {
            Method::NelderMead => Optimizer::NelderMead(NelderMead::new(center)),
            Method::Powell => Optimizer::Powell(Powell::new(center)),
        };
        Ok(DerivativeFree {
            method,
            optimizer,
            family,
            bounds,
            rng: ChaCha8Rng::seed_from_u64(seed),
            penalty,
            pending: None,
            next_id: 0,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Next configuration, or `None` while the previous one is unresolved.
    pub fn propose(&mut self, space: &SearchSpace, history: &History) -> Result<Option<Configuration>> {
        if let Some(id) = self.pending {
            match history.latest(id) {
                Some(r) if r.status.is_terminal() => {
                    let value = r.val_error.unwrap_or(self.penalty);
                    self.optimizer.tell(value, &mut self.rng);
                    self.pending = None;
                }
                _ => return Ok(None),
            }
        }
        let mut penalized_asks = 0;
        loop {
            let u = self.optimizer.ask();
            let raw: Vec<f64> = u
                .iter()
                .zip(&self.bounds)
                .map(|(&u, &(lo, hi))| lo + u * (hi - lo))
                .collect();
            let (config, penalized) = clip(space, &raw, &self.family)?;
            if !penalized {
                self.pending = Some(self.next_id);
                self.next_id += 1;
                return Ok(Some(config));
            }
            self.optimizer.tell(self.penalty, &mut self.rng);
            penalized_asks += 1;
            if penalized_asks >= MAX_PENALIZED_ASKS {
                self.optimizer.restart(&mut self.rng);
                penalized_asks = 0;
            }
        }
    }
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect()
}

fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Debug, Clone)]
enum NmPhase {
    /// Evaluating initial vertex `next`.
    Init { points: Vec<Vec<f64>>, next: usize },
    Reflect { centroid: Vec<f64>, xr: Vec<f64> },
    Expand { xr: Vec<f64>, fr: f64, xe: Vec<f64> },
    ContractOutside { fr: f64, xc: Vec<f64> },
    ContractInside { xc: Vec<f64> },
    /// Re-evaluating shrunk vertex `next` (index into the sorted simplex).
    Shrink { next: usize },
}

#[derive(Debug, Clone)]
struct NelderMead {
    dim: usize,
    /// Vertices with their values; sorted best-first between iterations.
    simplex: Vec<(Vec<f64>, f64)>,
    phase: NmPhase,
}

impl NelderMead {
    fn new(start: Vec<f64>) -> Self {
        let dim = start.len();
        let mut points = vec![start.clone()];
        for i in 0..dim {
            let mut p = start.clone();
            p[i] += NM_STEP;
            points.push(p);
        }
        NelderMead {
            dim,
            simplex: Vec::with_capacity(dim + 1),
            phase: NmPhase::Init { points, next: 0 },
        }
    }

    fn ask(&self) -> Vec<f64> {
        match &self.phase {
            NmPhase::Init { points, next } => points[*next].clone(),
            NmPhase::Reflect { xr, .. } => xr.clone(),
            NmPhase::Expand { xe, .. } => xe.clone(),
            NmPhase::ContractOutside { xc, .. } | NmPhase::ContractInside { xc } => xc.clone(),
            NmPhase::Shrink { next } => self.simplex[*next].0.clone(),
        }
    }

    fn replace_worst(&mut self, x: Vec<f64>, f: f64) {
        let n = self.dim;
        self.simplex[n] = (x, f);
    }

    fn tell(&mut self, value: f64, rng: &mut ChaCha8Rng) {
        let n = self.dim;
        let phase = std::mem::replace(&mut self.phase, NmPhase::Shrink { next: 0 });
        match phase {
            NmPhase::Init { points, next } => {
                self.simplex.push((points[next].clone(), value));
                if next + 1 < points.len() {
                    self.phase = NmPhase::Init { points, next: next + 1 };
                    return;
                }
            }
            NmPhase::Reflect { centroid, xr } => {
                let fr = value;
                let (f_best, f_second_worst) = (self.simplex[0].1, self.simplex[n - 1].1);
                if fr < f_best {
                    let xe = axpy(NM_GAMMA, &sub(&xr, &centroid), &centroid);
                    self.phase = NmPhase::Expand { xr, fr, xe };
                    return;
                } else if fr < f_second_worst {
                    self.replace_worst(xr, fr);
                } else if fr < self.simplex[n].1 {
                    let xc = axpy(NM_RHO, &sub(&xr, &centroid), &centroid);
                    self.phase = NmPhase::ContractOutside { fr, xc };
                    return;
                } else {
                    let xc = axpy(NM_RHO, &sub(&self.simplex[n].0, &centroid), &centroid);
                    self.phase = NmPhase::ContractInside { xc };
                    return;
                }
            }
            NmPhase::Expand { xr, fr, xe } => {
                if value < fr {
                    self.replace_worst(xe, value);
                } else {
                    self.replace_worst(xr, fr);
                }
            }
            NmPhase::ContractOutside { fr, xc } => {
                if value <= fr {
                    self.replace_worst(xc, value);
                } else {
                    return self.start_shrink();
                }
            }
            NmPhase::ContractInside { xc } => {
                if value < self.simplex[n].1 {
                    self.replace_worst(xc, value);
                } else {
                    return self.start_shrink();
                }
            }
            NmPhase::Shrink { next } => {
                self.simplex[next].1 = value;
                if next < n {
                    self.phase = NmPhase::Shrink { next: next + 1 };
                    return;
                }
            }
        }
        self.begin_iteration(rng);
    }

    fn start_shrink(&mut self) {
        let best = self.simplex[0].0.clone();
        for v in self.simplex.iter_mut().skip(1) {
            v.0 = axpy(NM_SIGMA, &sub(&v.0, &best), &best);
        }
        self.phase = NmPhase::Shrink { next: 1 };
    }

    fn begin_iteration(&mut self, rng: &mut ChaCha8Rng) {
        let n = self.dim;
        // Stable sort keeps earlier vertices first on ties.
        self.simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &self.simplex[0].0;
        let size = self.simplex[1..]
            .iter()
            .map(|(x, _)| inf_norm(&sub(x, best)))
            .fold(0.0, f64::max);
        if size < NM_RESTART_SIZE {
            *self = NelderMead::new(random_point(n, rng));
            return;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &self.simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let xr = axpy(NM_ALPHA, &sub(&centroid, &self.simplex[n].0), &centroid);
        self.phase = NmPhase::Reflect { centroid, xr };
    }
}

/// Golden-section search for `min_t f(origin + t·dir)` over `t ∈ [−1, 1]`,
/// where `dir` has unit infinity norm.
#[derive(Debug, Clone)]
struct LineSearch {
    origin: Vec<f64>,
    dir: Vec<f64>,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    fc: Option<f64>,
    fd: Option<f64>,
    /// Awaiting the value at `c` (true) or `d` (false).
    probe_c: bool,
    best: (f64, f64),
}

impl LineSearch {
    fn new(origin: Vec<f64>, f_origin: f64, dir: Vec<f64>) -> Self {
        let (a, b) = (-1.0, 1.0);
        LineSearch {
            origin,
            dir,
            a,
            b,
            c: b - INV_PHI * (b - a),
            d: a + INV_PHI * (b - a),
            fc: None,
            fd: None,
            probe_c: true,
            best: (0.0, f_origin),
        }
    }

    fn point(&self, t: f64) -> Vec<f64> {
        axpy(t, &self.dir, &self.origin)
    }

    fn ask(&self) -> Vec<f64> {
        self.point(if self.probe_c { self.c } else { self.d })
    }

    /// Records a probe value; returns the best `(t, f)` once the bracket is
    /// below tolerance.
    fn tell(&mut self, value: f64) -> Option<(f64, f64)> {
        let t = if self.probe_c { self.c } else { self.d };
        if value < self.best.1 {
            self.best = (t, value);
        }
        if self.probe_c {
            self.fc = Some(value);
        } else {
            self.fd = Some(value);
        }
        let (Some(fc), Some(fd)) = (self.fc, self.fd) else {
            self.probe_c = self.fc.is_none();
            return None;
        };
        if fc < fd {
            self.b = self.d;
            self.d = self.c;
            self.fd = Some(fc);
            self.c = self.b - INV_PHI * (self.b - self.a);
            self.fc = None;
            self.probe_c = true;
        } else {
            self.a = self.c;
            self.c = self.d;
            self.fc = Some(fd);
            self.d = self.a + INV_PHI * (self.b - self.a);
            self.fd = None;
            self.probe_c = false;
        }
        if self.b - self.a < LINE_TOL {
            return Some(self.best);
        }
        None
    }
}

#[derive(Debug, Clone)]
enum PowellPhase {
    /// Evaluating the starting point.
    Start,
    /// Line search along direction `index` of the current sweep.
    Sweep { index: usize, search: LineSearch },
    /// Evaluating the extrapolated point `2·x_end − x_start`.
    Extrapolate { point: Vec<f64> },
    /// Line search along the new conjugate direction.
    NewDirection { search: LineSearch },
}

#[derive(Debug, Clone)]
struct Powell {
    dim: usize,
    x: Vec<f64>,
    fx: f64,
    dirs: Vec<Vec<f64>>,
    sweep_start: (Vec<f64>, f64),
    /// Largest single-direction decrease in the current sweep and its index.
    biggest_drop: (f64, usize),
    phase: PowellPhase,
}

impl Powell {
    fn new(start: Vec<f64>) -> Self {
        let dim = start.len();
        let dirs = (0..dim)
            .map(|i| {
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                e
            })
            .collect();
        Powell {
            dim,
            x: start.clone(),
            fx: f64::NAN,
            dirs,
            sweep_start: (start, f64::NAN),
            biggest_drop: (0.0, 0),
            phase: PowellPhase::Start,
        }
    }

    fn ask(&self) -> Vec<f64> {
        match &self.phase {
            PowellPhase::Start => self.x.clone(),
            PowellPhase::Sweep { search, .. } | PowellPhase::NewDirection { search } => search.ask(),
            PowellPhase::Extrapolate { point } => point.clone(),
        }
    }

    fn begin_sweep(&mut self) {
        self.sweep_start = (self.x.clone(), self.fx);
        self.biggest_drop = (0.0, 0);
        self.phase = PowellPhase::Sweep {
            index: 0,
            search: LineSearch::new(self.x.clone(), self.fx, self.dirs[0].clone()),
        };
    }

    fn tell(&mut self, value: f64, rng: &mut ChaCha8Rng) {
        let phase = std::mem::replace(&mut self.phase, PowellPhase::Start);
        match phase {
            PowellPhase::Start => {
                self.fx = value;
                self.begin_sweep();
            }
            PowellPhase::Sweep { index, mut search } => {
                let Some((t, f)) = search.tell(value) else {
                    self.phase = PowellPhase::Sweep { index, search };
                    return;
                };
                let drop = self.fx - f;
                if drop > self.biggest_drop.0 {
                    self.biggest_drop = (drop, index);
                }
                self.x = search.point(t);
                self.fx = f;
                if index + 1 < self.dim {
                    self.phase = PowellPhase::Sweep {
                        index: index + 1,
                        search: LineSearch::new(self.x.clone(), self.fx, self.dirs[index + 1].clone()),
                    };
                    return;
                }
                self.end_sweep(rng);
            }
            PowellPhase::Extrapolate { .. } => {
                let (x0, f0) = self.sweep_start.clone();
                let (fn_, fe) = (self.fx, value);
                let (delta, _) = self.biggest_drop;
                let accept = fe < f0
                    && 2.0 * (f0 - 2.0 * fn_ + fe) * (f0 - fn_ - delta).powi(2) < delta * (f0 - fe).powi(2);
                if accept {
                    let mut dir = sub(&self.x, &x0);
                    let norm = inf_norm(&dir);
                    dir.iter_mut().for_each(|v| *v /= norm);
                    self.phase = PowellPhase::NewDirection {
                        search: LineSearch::new(self.x.clone(), self.fx, dir),
                    };
                } else {
                    self.begin_sweep();
                }
            }
            PowellPhase::NewDirection { mut search } => {
                let Some((t, f)) = search.tell(value) else {
                    self.phase = PowellPhase::NewDirection { search };
                    return;
                };
                self.x = search.point(t);
                self.fx = f;
                let (_, worst) = self.biggest_drop;
                let last = self.dim - 1;
                self.dirs[worst] = self.dirs[last].clone();
                self.dirs[last] = search.dir;
                self.begin_sweep();
            }
        }
    }

    fn end_sweep(&mut self, rng: &mut ChaCha8Rng) {
        let (x0, f0) = self.sweep_start.clone();
        let moved = inf_norm(&sub(&self.x, &x0));
        let improvement = f0 - self.fx;
        if moved < LINE_TOL && improvement <= 1e-12 * f0.abs().max(1e-12) {
            *self = Powell::new(random_point(self.dim, rng));
            return;
        }
        if moved == 0.0 {
            self.begin_sweep();
            return;
        }
        let point = axpy(2.0, &self.x, &x0.iter().map(|v| -v).collect::<Vec<_>>());
        self.phase = PowellPhase::Extrapolate { point };
    }
}
