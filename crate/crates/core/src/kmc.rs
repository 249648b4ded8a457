//! Event-driven, statistically exact simulation of the speeded-up exclusion
//! process with generator `Θ(N)·L_N`.
//!
//! Sampling uses Poisson thinning with per-channel constant upper bounds:
//! every particle carries a bulk-attempt channel of rate Θ(N) (its total jump
//! mass), every site carries left/right flip proposal channels with rates
//! `Θ(N)·κN^{-θ}·r_N^∓(x/N)`. Proposals are accepted with the exact ratio of
//! true to bound rate; rejected proposals still advance the clock, which is
//! exact since rejected transitions are no-ops of the generator. Jump lengths
//! come from an alias table over the kernel's tabulated range plus an
//! inverse-CDF search on the analytic tail, so the jump law is exact.
//!
//! The clock runs in macroscopic time: holding times are exponential with
//! rates already multiplied by Θ(N).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::fenwick::Fenwick;
use crate::kernel::JumpKernel;
use crate::model::{BoundaryRateTables, ModelParams};

/// Occupancy state over `Λ_N = {1, .., N-1}` plus the macroscopic clock.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeConfig {
    /// occupancy[x-1] is the 0/1 state of site x.
    pub occupancy: Vec<u8>,
    pub particle_count: usize,
    /// Macroscopic time (already divided by Θ(N)).
    pub clock: f64,
}

impl LatticeConfig {
    pub fn from_occupancy(occupancy: Vec<u8>) -> Self {
        let particle_count = occupancy.iter().map(|&o| o as usize).sum();
        LatticeConfig {
            occupancy,
            particle_count,
            clock: 0.0,
        }
    }

    pub fn occupied(&self, x: usize) -> bool {
        self.occupancy[x - 1] == 1
    }

    pub fn sites(&self) -> usize {
        self.occupancy.len()
    }
}

/// Independent Bernoulli(g(x/N)) occupancies; deterministic in the seed.
pub fn init_product(
    g: &dyn Fn(f64) -> f64,
    n: usize,
    seed: u64,
) -> Result<LatticeConfig> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut occupancy = Vec::with_capacity(n - 1);
    for x in 1..n {
        let p = g(x as f64 / n as f64);
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParams(format!(
                "profile value {p} at u = {} outside [0,1]",
                x as f64 / n as f64
            )));
        }
        occupancy.push(u8::from(rng.gen::<f64>() < p));
    }
    Ok(LatticeConfig::from_occupancy(occupancy))
}

/// Accepted transitions of the process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    /// Particle exchange between bulk sites (recorded with the particle's
    /// source first).
    Exchange { x: usize, y: usize },
    /// Flip at x driven by the left reservoirs.
    FlipLeft { x: usize },
    /// Flip at x driven by the right reservoirs.
    FlipRight { x: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub occupancy: Vec<u8>,
}

/// Accepted-event history plus observer snapshots at exact requested times.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub snapshots: Vec<Snapshot>,
}

impl EventLog {
    /// Replays the log from `initial`; reproduces the simulated trajectory
    /// bit-exactly.
    pub fn replay(&self, initial: &LatticeConfig) -> LatticeConfig {
        let mut state = initial.clone();
        for ev in &self.events {
            match ev.kind {
                EventKind::Exchange { x, y } => {
                    state.occupancy.swap(x - 1, y - 1);
                }
                EventKind::FlipLeft { x } | EventKind::FlipRight { x } => {
                    let o = &mut state.occupancy[x - 1];
                    if *o == 1 {
                        state.particle_count -= 1;
                    } else {
                        state.particle_count += 1;
                    }
                    *o ^= 1;
                }
            }
            state.clock = ev.t;
        }
        state
    }

    /// CSV `t,kind,x,y` (y empty for flips).
    pub fn events_csv(&self) -> String {
        let mut s = String::from("t,kind,x,y\n");
        for ev in &self.events {
            match ev.kind {
                EventKind::Exchange { x, y } => {
                    s.push_str(&format!("{:.17e},exchange,{x},{y}\n", ev.t));
                }
                EventKind::FlipLeft { x } => {
                    s.push_str(&format!("{:.17e},flip_left,{x},\n", ev.t));
                }
                EventKind::FlipRight { x } => {
                    s.push_str(&format!("{:.17e},flip_right,{x},\n", ev.t));
                }
            }
        }
        s
    }

    /// CSV `t,x,eta` over all snapshots.
    pub fn snapshots_csv(&self) -> String {
        let mut s = String::from("t,x,eta\n");
        for snap in &self.snapshots {
            for (i, &o) in snap.occupancy.iter().enumerate() {
                s.push_str(&format!("{:.17e},{},{}\n", snap.t, i + 1, o));
            }
        }
        s
    }
}

/// Alias table over the tabulated jump magnitudes 1..=z_max.
#[derive(Debug, Clone)]
struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias = vec![0usize; n];
        let mut prob = vec![0.0; n];
        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for &i in large.iter().chain(small.iter()) {
            prob[i] = 1.0;
        }
        AliasTable { prob, alias }
    }

    fn sample(&self, rng: &mut ChaCha12Rng) -> usize {
        let n = self.prob.len();
        let i = rng.gen_range(0..n);
        if rng.gen::<f64>() < self.prob[i] {
            i + 1
        } else {
            self.alias[i] + 1
        }
    }
}

/// Exact sampler for the jump displacement law p(·).
#[derive(Debug, Clone)]
pub struct JumpSampler {
    alias: AliasTable,
    /// survival at the table edge: 2·T(z_max+1)
    tail_prob: f64,
    z_max: u64,
}

impl JumpSampler {
    pub fn new(kernel: &JumpKernel) -> Self {
        let weights: Vec<f64> = (1..=kernel.z_max()).map(|z| kernel.p(z as i64)).collect();
        JumpSampler {
            alias: AliasTable::new(&weights),
            tail_prob: 2.0 * kernel.tail(kernel.z_max() as u64 + 1),
            z_max: kernel.z_max() as u64,
        }
    }

    /// Draws z from p; the magnitude beyond the table comes from inverting
    /// the analytic survival function 2T(·).
    pub fn sample(&self, kernel: &JumpKernel, rng: &mut ChaCha12Rng) -> i64 {
        let v: f64 = rng.gen();
        let mag = if v < self.tail_prob {
            // smallest w > z_max with 2T(w+1) <= v
            let mut lo = self.z_max + 1;
            if 2.0 * kernel.tail(lo + 1) <= v {
                lo
            } else {
                let mut hi = lo * 2;
                while 2.0 * kernel.tail(hi + 1) > v {
                    lo = hi;
                    hi *= 2;
                    if hi > 1 << 52 {
                        break;
                    }
                }
                // invariant: 2T(lo+1) > v >= 2T(hi+1)
                while hi - lo > 1 {
                    let mid = lo + (hi - lo) / 2;
                    if 2.0 * kernel.tail(mid + 1) > v {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        } else {
            self.alias.sample(rng) as u64
        };
        if rng.gen::<bool>() {
            mag as i64
        } else {
            -(mag as i64)
        }
    }
}

/// Outcome of one thinning step: the holding time and the accepted effect,
/// if any (rejections advance the clock without changing the state).
#[derive(Debug, Clone, Copy)]
pub struct StepResult {
    pub dt: f64,
    pub effect: Option<EventKind>,
}

const REBUILD_PERIOD: u64 = 1_000_000;

/// A single simulation instance; strictly single-threaded.
pub struct Kmc<'a> {
    pub params: &'a ModelParams,
    pub kernel: &'a JumpKernel,
    pub tables: &'a BoundaryRateTables,
    pub state: LatticeConfig,
    sampler: JumpSampler,
    rng: ChaCha12Rng,
    /// per-site channel upper bounds: occupancy + flip proposals
    rate_index: Fenwick,
    flip_left: Vec<f64>,
    flip_right: Vec<f64>,
    theta_n: f64,
    steps_since_rebuild: u64,
}

impl<'a> Kmc<'a> {
    pub fn new(
        params: &'a ModelParams,
        kernel: &'a JumpKernel,
        tables: &'a BoundaryRateTables,
        state: LatticeConfig,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if state.sites() != params.n - 1 {
            return Err(Error::InvalidParams(format!(
                "state has {} sites, expected {}",
                state.sites(),
                params.n - 1
            )));
        }
        let nt = params.theta_n();
        let resv_scale = params.kappa * (params.n as f64).powf(-params.theta);
        let flip_left: Vec<f64> = tables.r_minus.iter().map(|r| r * resv_scale).collect();
        let flip_right: Vec<f64> = tables.r_plus.iter().map(|r| r * resv_scale).collect();
        let mut kmc = Kmc {
            params,
            kernel,
            tables,
            state,
            sampler: JumpSampler::new(kernel),
            rng: ChaCha12Rng::seed_from_u64(seed),
            rate_index: Fenwick::new(params.n - 1),
            flip_left,
            flip_right,
            theta_n: nt,
            steps_since_rebuild: 0,
        };
        kmc.rebuild_rate_index();
        let total = nt * kmc.rate_index.total();
        if !total.is_finite() {
            return Err(Error::RateOverflow(total));
        }
        Ok(kmc)
    }

    fn site_bound(&self, x: usize) -> f64 {
        f64::from(self.state.occupancy[x - 1]) + self.flip_left[x - 1] + self.flip_right[x - 1]
    }

    fn rebuild_rate_index(&mut self) {
        let weights: Vec<f64> = (1..self.params.n).map(|x| self.site_bound(x)).collect();
        self.rate_index = Fenwick::from_weights(&weights);
        self.steps_since_rebuild = 0;
    }

    /// Relative mismatch between the incremental rate index total and a
    /// from-scratch recomputation of all channel upper bounds.
    pub fn rate_audit(&self) -> f64 {
        let scratch: f64 = (1..self.params.n).map(|x| self.site_bound(x)).sum();
        let incr = self.rate_index.total();
        (incr - scratch).abs() / scratch.max(f64::MIN_POSITIVE)
    }

    /// Samples the holding time to the next proposal without applying it;
    /// the clock is not advanced.
    pub fn propose(&mut self) -> Result<f64> {
        let total_rate = self.theta_n * self.rate_index.total();
        if !total_rate.is_finite() {
            return Err(Error::RateOverflow(total_rate));
        }
        if total_rate <= 0.0 {
            return Err(Error::InvalidParams(
                "no channel has positive rate".into(),
            ));
        }
        // unit exponential from a uniform in [0,1) without ln(0)
        let u: f64 = self.rng.gen();
        Ok(-(-u).ln_1p() / total_rate)
    }

    /// Selects a channel for the proposal and applies the accept/reject
    /// decision; returns the accepted effect, if any.
    pub fn commit(&mut self) -> Result<Option<EventKind>> {
        let w = self.rate_index.total();
        self.steps_since_rebuild += 1;
        if self.steps_since_rebuild >= REBUILD_PERIOD {
            self.rebuild_rate_index();
        }

        let target = self.rng.gen::<f64>() * w;
        let x = self.rate_index.select(target.min(w * (1.0 - 1e-16)));
        let occ = f64::from(self.state.occupancy[x - 1]);
        let wx = occ + self.flip_left[x - 1] + self.flip_right[x - 1];
        let channel = self.rng.gen::<f64>() * wx;

        let effect = if channel < occ {
            // bulk attempt: jump length from the exact law, thinned by the
            // exclusion rule and the lattice boundary
            let z = self.sampler.sample(self.kernel, &mut self.rng);
            let y = x as i64 + z;
            if y >= 1 && y < self.params.n as i64 && !self.state.occupied(y as usize) {
                let y = y as usize;
                self.state.occupancy.swap(x - 1, y - 1);
                self.rate_index.add(x, -1.0);
                self.rate_index.add(y, 1.0);
                Some(EventKind::Exchange { x, y })
            } else {
                None
            }
        } else {
            let (delta, is_left) = if channel < occ + self.flip_left[x - 1] {
                (self.params.alpha, true)
            } else {
                (self.params.beta, false)
            };
            // acceptance c_x(η,δ) = δ(1-η) + (1-δ)η
            let c = if self.state.occupied(x) { 1.0 - delta } else { delta };
            if self.rng.gen::<f64>() < c {
                let o = &mut self.state.occupancy[x - 1];
                if *o == 1 {
                    *o = 0;
                    self.state.particle_count -= 1;
                    self.rate_index.add(x, -1.0);
                } else {
                    *o = 1;
                    self.state.particle_count += 1;
                    self.rate_index.add(x, 1.0);
                }
                Some(if is_left {
                    EventKind::FlipLeft { x }
                } else {
                    EventKind::FlipRight { x }
                })
            } else {
                None
            }
        };
        Ok(effect)
    }

    /// One thinning step: holding time plus accept/reject. The clock always
    /// advances.
    pub fn step(&mut self) -> Result<StepResult> {
        let dt = self.propose()?;
        self.state.clock += dt;
        let effect = self.commit()?;
        Ok(StepResult { dt, effect })
    }

    /// Advances to `t_end`, logging accepted events and snapshotting the
    /// frozen state at each requested observer time. The proposal straddling
    /// `t_end` is discarded, which is exact by memorylessness.
    pub fn run(&mut self, t_end: f64, observers: &[f64]) -> Result<EventLog> {
        let mut log = EventLog::default();
        let mut obs: Vec<f64> = observers.to_vec();
        obs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut next_obs = 0usize;
        if t_end < self.state.clock {
            return Err(Error::InvalidParams(format!(
                "t_end {t_end} is before the current clock {}",
                self.state.clock
            )));
        }
        loop {
            let dt = self.propose()?;
            let t_next = self.state.clock + dt;
            // the state is frozen on (clock, t_next); snapshot it
            while next_obs < obs.len() && obs[next_obs] <= t_next.min(t_end) {
                log.snapshots.push(Snapshot {
                    t: obs[next_obs],
                    occupancy: self.state.occupancy.clone(),
                });
                next_obs += 1;
            }
            if t_next > t_end {
                self.state.clock = t_end;
                break;
            }
            self.state.clock = t_next;
            if let Some(kind) = self.commit()? {
                log.events.push(Event { t: t_next, kind });
            }
        }
        Ok(log)
    }
}

/// Raw occupancy and coarse-grained bin averages of the configuration.
#[derive(Debug, Clone)]
pub struct BinnedDensity {
    /// mean of x/N over the sites in each bin
    pub centers: Vec<f64>,
    pub means: Vec<f64>,
}

pub fn empirical_density(state: &LatticeConfig, n: usize, bins: usize) -> (Vec<f64>, BinnedDensity) {
    let raw: Vec<f64> = state.occupancy.iter().map(|&o| f64::from(o)).collect();
    let sites = n - 1;
    let mut sums = vec![0.0; bins];
    let mut centers = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for x in 1..n {
        let k = ((x - 1) * bins) / sites;
        sums[k] += raw[x - 1];
        centers[k] += x as f64 / n as f64;
        counts[k] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    for (c, &cnt) in centers.iter_mut().zip(&counts) {
        if cnt > 0 {
            *c /= cnt as f64;
        }
    }
    (raw, BinnedDensity { centers, means })
}
