//! Event-driven simulation of the accelerated process with generator `n² ℒ_n^m`.
//!
//! Bond `x` is the pair `{x, x+1 mod L}`. An active bond sits in one list per
//! (constraint value, jump direction); the integer sums of constraint values
//! per direction give the total rate `n² (p₊ W_R + p₋ W_L)`. A jump only
//! changes bonds `x − m ..= x + m`, so each event costs `O(m²)`.

use std::io::{self, Read, Write};

use rand::Rng;
use rand_distr::Exp1;

use crate::config::{sample_equilibrium_with, Configuration, ModelParams};
use crate::error::{Error, Result};
use crate::rng::{dynamics_stream, initial_stream, stream_rng, StreamRng};

/// Direction of a jump across bond `{x, x+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Particle moves from `x` to `x+1`.
    Right,
    /// Particle moves from `x+1` to `x`.
    Left,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Right => 1.0,
            Direction::Left => -1.0,
        }
    }

    fn code(self) -> u8 {
        match self {
            Direction::Right => 0,
            Direction::Left => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Direction::Right),
            1 => Some(Direction::Left),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Macroscopic time of the jump.
    pub time: f64,
    pub bond: u32,
    pub dir: Direction,
}

/// Callbacks driven by the engine. `advance` integrates the current (frozen)
/// configuration over a holding interval; `on_jump` sees the configuration
/// after the exchange.
pub trait Observer {
    fn start(&mut self, _cfg: &Configuration) {}
    fn advance(&mut self, _cfg: &Configuration, _dt: f64) {}
    fn on_jump(&mut self, _cfg: &Configuration, _event: &Event) {}
    fn at_sample(&mut self, _cfg: &Configuration, _index: usize, _time: f64) {}
}

impl Observer for () {}

impl<A: Observer, B: Observer> Observer for (A, B) {
    fn start(&mut self, cfg: &Configuration) {
        self.0.start(cfg);
        self.1.start(cfg);
    }
    fn advance(&mut self, cfg: &Configuration, dt: f64) {
        self.0.advance(cfg, dt);
        self.1.advance(cfg, dt);
    }
    fn on_jump(&mut self, cfg: &Configuration, event: &Event) {
        self.0.on_jump(cfg, event);
        self.1.on_jump(cfg, event);
    }
    fn at_sample(&mut self, cfg: &Configuration, index: usize, time: f64) {
        self.0.at_sample(cfg, index, time);
        self.1.at_sample(cfg, index, time);
    }
}

impl<O: Observer> Observer for Vec<O> {
    fn start(&mut self, cfg: &Configuration) {
        self.iter_mut().for_each(|o| o.start(cfg));
    }
    fn advance(&mut self, cfg: &Configuration, dt: f64) {
        self.iter_mut().for_each(|o| o.advance(cfg, dt));
    }
    fn on_jump(&mut self, cfg: &Configuration, event: &Event) {
        self.iter_mut().for_each(|o| o.on_jump(cfg, event));
    }
    fn at_sample(&mut self, cfg: &Configuration, index: usize, time: f64) {
        self.iter_mut().for_each(|o| o.at_sample(cfg, index, time));
    }
}

impl<O: Observer + ?Sized> Observer for &mut O {
    fn start(&mut self, cfg: &Configuration) {
        (**self).start(cfg);
    }
    fn advance(&mut self, cfg: &Configuration, dt: f64) {
        (**self).advance(cfg, dt);
    }
    fn on_jump(&mut self, cfg: &Configuration, event: &Event) {
        (**self).on_jump(cfg, event);
    }
    fn at_sample(&mut self, cfg: &Configuration, index: usize, time: f64) {
        (**self).at_sample(cfg, index, time);
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSummary {
    pub events: u64,
    /// Time at which the configuration became blocked, if it did.
    pub blocked_at: Option<f64>,
}

const NONE: u32 = u32::MAX;

/// Active-bond bookkeeping: lists per (constraint value, direction).
#[derive(Debug, Clone)]
pub struct EventSchedule {
    m: usize,
    /// Constraint value of each bond (0 when the bond cannot fire).
    class: Vec<u8>,
    dir: Vec<u8>,
    pos: Vec<u32>,
    lists: Vec<Vec<u32>>,
    weight: [u64; 2],
}

impl EventSchedule {
    fn new(m: usize, len: usize) -> Self {
        Self {
            m,
            class: vec![0; len],
            dir: vec![0; len],
            pos: vec![NONE; len],
            lists: vec![Vec::new(); 2 * m],
            weight: [0, 0],
        }
    }

    fn list_index(c: u8, d: u8) -> usize {
        (c as usize - 1) * 2 + d as usize
    }

    fn remove(&mut self, x: usize) {
        let c = self.class[x];
        if c == 0 {
            return;
        }
        let d = self.dir[x];
        let li = Self::list_index(c, d);
        let p = self.pos[x] as usize;
        let list = &mut self.lists[li];
        let last = list.pop().unwrap();
        if last as usize != x {
            list[p] = last;
            self.pos[last as usize] = p as u32;
        }
        self.pos[x] = NONE;
        self.class[x] = 0;
        self.weight[d as usize] -= c as u64;
    }

    fn insert(&mut self, x: usize, c: u8, d: u8) {
        if c == 0 {
            return;
        }
        let li = Self::list_index(c, d);
        self.pos[x] = self.lists[li].len() as u32;
        self.lists[li].push(x as u32);
        self.class[x] = c;
        self.dir[x] = d;
        self.weight[d as usize] += c as u64;
    }

    /// Integer weight sums `(W_R, W_L)`.
    pub fn weights(&self) -> (u64, u64) {
        (self.weight[0], self.weight[1])
    }

    pub fn active_bonds(&self) -> usize {
        self.lists.iter().map(Vec::len).sum()
    }

    pub fn is_active(&self, x: usize) -> bool {
        self.class[x] > 0
    }

    /// Picks the bond at integer offset `r < W_d` among bonds of direction `d`.
    fn select(&self, d: u8, mut r: u64) -> usize {
        for c in 1..=self.m as u8 {
            let list = &self.lists[Self::list_index(c, d)];
            let w = c as u64 * list.len() as u64;
            if r < w {
                return list[(r / c as u64) as usize] as usize;
            }
            r -= w;
        }
        unreachable!("selection offset beyond total weight")
    }
}

/// Constraint value lookup for windows `x−m+1 ..= x+m` packed as bits.
fn constraint_table(m: usize) -> Vec<u8> {
    let width = 2 * m;
    let origin = -(m as i64 - 1);
    (0..1u64 << width)
        .map(|bits| crate::constraint::constraint_on_bits(m, bits, origin, 0) as u8)
        .collect()
}

/// The continuous-time Markov chain on the ring.
#[derive(Debug, Clone)]
pub struct Engine {
    params: ModelParams,
    cfg: Configuration,
    schedule: EventSchedule,
    table: Vec<u8>,
    time: f64,
    rate_scale: f64,
    p: [f64; 2],
    rng: StreamRng,
    events: u64,
    check_locality: bool,
}

impl Engine {
    pub fn new(params: &ModelParams, cfg: Configuration, rng: StreamRng) -> Result<Self> {
        if cfg.len() != params.ring {
            return Err(Error::InvalidInput(format!(
                "configuration has {} sites, ring size is {}",
                cfg.len(),
                params.ring
            )));
        }
        if params.m > 8 {
            return Err(Error::InvalidParams(format!("m = {} exceeds the engine limit of 8", params.m)));
        }
        let n2 = (params.n as f64).powi(2);
        let mut e = Self {
            schedule: EventSchedule::new(params.m, cfg.len()),
            table: constraint_table(params.m),
            params: params.clone(),
            cfg,
            time: 0.0,
            rate_scale: n2,
            p: [params.p_plus(), params.p_minus()],
            rng,
            events: 0,
            check_locality: false,
        };
        for x in 0..e.cfg.len() {
            let (c, d) = e.bond_state(x);
            e.schedule.insert(x, c, d);
        }
        Ok(e)
    }

    /// Engine for trajectory `index` of `seed`: initial state drawn from `ν_ρ`
    /// on stream `2·index`, dynamics on stream `2·index + 1`.
    pub fn from_equilibrium(params: &ModelParams, seed: u64, index: u64) -> Result<Self> {
        let mut init = stream_rng(seed, initial_stream(index));
        let cfg = sample_equilibrium_with(params.rho, params.ring, &mut init);
        Self::new(params, cfg, stream_rng(seed, dynamics_stream(index)))
    }

    /// Re-checks the whole rate table after every event (testing aid).
    pub fn with_locality_checks(mut self, on: bool) -> Self {
        self.check_locality = on;
        self
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn configuration(&self) -> &Configuration {
        &self.cfg
    }

    pub fn schedule(&self) -> &EventSchedule {
        &self.schedule
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    /// Total jump rate in macroscopic time.
    pub fn total_rate(&self) -> f64 {
        let (wr, wl) = self.schedule.weights();
        self.rate_scale * (self.p[0] * wr as f64 + self.p[1] * wl as f64)
    }

    pub fn is_blocked(&self) -> bool {
        self.total_rate() <= 0.0
    }

    #[inline]
    fn bond_state(&self, x: usize) -> (u8, u8) {
        let len = self.cfg.len();
        let occ = self.cfg.as_slice();
        let xr = if x + 1 == len { 0 } else { x + 1 };
        let (a, b) = (occ[x], occ[xr]);
        if a == b {
            return (0, 0);
        }
        let m = self.params.m;
        let mut bits = 0usize;
        let start = x as i64 - (m as i64 - 1);
        if start >= 0 && x + m < len {
            for (i, &v) in occ[start as usize..=x + m].iter().enumerate() {
                bits |= (v as usize) << i;
            }
        } else {
            for i in 0..2 * m {
                bits |= (self.cfg.get(start + i as i64) as usize) << i;
            }
        }
        (self.table[bits], u8::from(a == 0))
    }

    /// Recomputes every bond from scratch and compares with the schedule.
    pub fn verify_rate_table(&self) -> bool {
        let mut w = [0u64; 2];
        for x in 0..self.cfg.len() {
            let (c, d) = self.bond_state(x);
            if c != self.schedule.class[x] || (c > 0 && d != self.schedule.dir[x]) {
                return false;
            }
            w[d as usize] += c as u64;
        }
        w == self.schedule.weight
    }

    fn apply(&mut self, x: usize, dir: Direction) {
        let len = self.cfg.len() as i64;
        self.cfg.exchange_in_place(x as i64, x as i64 + 1);
        let m = self.params.m as i64;
        for y in x as i64 - m..=x as i64 + m {
            let y = y.rem_euclid(len) as usize;
            let (c, d) = self.bond_state(y);
            if c != self.schedule.class[y] || (c > 0 && d != self.schedule.dir[y]) {
                self.schedule.remove(y);
                self.schedule.insert(y, c, d);
            }
        }
        if self.check_locality {
            assert!(self.verify_rate_table(), "bond outside distance m changed after jump at {x} ({dir:?})");
        }
        self.events += 1;
    }

    /// Draws the next holding time and jump; `None` when blocked.
    pub fn propose(&mut self) -> Option<(f64, usize, Direction)> {
        let (wr, wl) = self.schedule.weights();
        let right = self.p[0] * wr as f64;
        let left = self.p[1] * wl as f64;
        let total = right + left;
        if total <= 0.0 {
            return None;
        }
        let dt = self.rng.sample::<f64, _>(Exp1) / (self.rate_scale * total);
        let u: f64 = self.rng.random::<f64>() * total;
        let (d, w) = if u < right && wr > 0 { (0u8, wr) } else if wl > 0 { (1u8, wl) } else { (0u8, wr) };
        let r = self.rng.random_range(0..w);
        let x = self.schedule.select(d, r);
        let dir = if d == 0 { Direction::Right } else { Direction::Left };
        Some((dt, x, dir))
    }

    /// One event: advance the clock and perform the jump.
    pub fn step(&mut self) -> Result<Event> {
        let Some((dt, x, dir)) = self.propose() else {
            return Err(Error::Blocked { time: self.time });
        };
        self.time += dt;
        self.apply(x, dir);
        Ok(Event { time: self.time, bond: x as u32, dir })
    }

    /// Runs until `t_max`, calling `obs` along the way. `sample_times` must be
    /// sorted; samples at or below the current time fire immediately.
    /// A blocked configuration stays frozen until `t_max`.
    pub fn run_observed<O: Observer>(&mut self, t_max: f64, sample_times: &[f64], obs: &mut O) -> RunSummary {
        obs.start(&self.cfg);
        let mut next = 0usize;
        let mut blocked_at = None;
        let start_events = self.events;
        while next < sample_times.len() && sample_times[next] <= self.time {
            obs.at_sample(&self.cfg, next, sample_times[next]);
            next += 1;
        }
        loop {
            let proposal = self.propose();
            let jump_time = match proposal {
                Some((dt, _, _)) => self.time + dt,
                None => {
                    if blocked_at.is_none() {
                        blocked_at = Some(self.time);
                    }
                    f64::INFINITY
                }
            };
            while next < sample_times.len() && sample_times[next] < jump_time && sample_times[next] <= t_max {
                let ts = sample_times[next];
                obs.advance(&self.cfg, ts - self.time);
                self.time = ts;
                obs.at_sample(&self.cfg, next, ts);
                next += 1;
            }
            if jump_time > t_max {
                if t_max > self.time {
                    obs.advance(&self.cfg, t_max - self.time);
                    self.time = t_max;
                }
                break;
            }
            let (_, x, dir) = proposal.unwrap();
            obs.advance(&self.cfg, jump_time - self.time);
            self.time = jump_time;
            self.apply(x, dir);
            obs.on_jump(&self.cfg, &Event { time: self.time, bond: x as u32, dir });
        }
        RunSummary { events: self.events - start_events, blocked_at }
    }
}

/// Time-stamped event stream with snapshots on an observation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: Configuration,
    pub events: Vec<Event>,
    pub sampling_times: Vec<f64>,
    pub snapshots: Vec<Configuration>,
    pub t_max: f64,
    /// Blocking time when the run froze before `t_max`.
    pub blocked_at: Option<f64>,
}

impl Trajectory {
    pub fn is_truncated(&self) -> bool {
        self.blocked_at.is_some()
    }

    /// Configuration after all events with time `≤ t`.
    pub fn configuration_at(&self, t: f64) -> Configuration {
        let mut cfg = self.initial.clone();
        for e in self.events.iter().take_while(|e| e.time <= t) {
            cfg.exchange_in_place(e.bond as i64, e.bond as i64 + 1);
        }
        cfg
    }

    pub fn final_configuration(&self) -> Configuration {
        self.configuration_at(f64::INFINITY)
    }

    /// Binary event log: per event, time (f64 LE), bond (u32 LE), direction (u8, 0 = right).
    pub fn write_event_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            w.write_all(&e.time.to_le_bytes())?;
            w.write_all(&e.bond.to_le_bytes())?;
            w.write_all(&[e.dir.code()])?;
        }
        Ok(())
    }

    pub fn read_event_log<R: Read>(mut r: R) -> io::Result<Vec<Event>> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        if buf.len() % 13 != 0 {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "event log length is not a multiple of 13"));
        }
        buf.chunks_exact(13)
            .map(|c| {
                let time = f64::from_le_bytes(c[0..8].try_into().unwrap());
                let bond = u32::from_le_bytes(c[8..12].try_into().unwrap());
                let dir = Direction::from_code(c[12])
                    .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "bad direction byte"))?;
                Ok(Event { time, bond, dir })
            })
            .collect()
    }

    /// CSV rows `time,occupation` with the occupation as a 0/1 string.
    pub fn write_snapshots_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "time,occupation")?;
        for (t, c) in self.sampling_times.iter().zip(&self.snapshots) {
            writeln!(w, "{t},{c}")?;
        }
        Ok(())
    }
}

/// Records events and snapshots.
#[derive(Debug, Default)]
pub struct Recorder {
    pub events: Vec<Event>,
    pub snapshots: Vec<Configuration>,
}

impl Observer for Recorder {
    fn on_jump(&mut self, _cfg: &Configuration, event: &Event) {
        self.events.push(*event);
    }
    fn at_sample(&mut self, cfg: &Configuration, _index: usize, _time: f64) {
        self.snapshots.push(cfg.clone());
    }
}

/// Sampling grid `0, dt, 2dt, … ≤ t_max` (only `0` when `dt` is not positive).
pub fn sampling_grid(t_max: f64, dt: f64) -> Vec<f64> {
    if !(dt > 0.0) || t_max <= 0.0 {
        return vec![0.0];
    }
    let k = (t_max / dt + 1e-9).floor() as usize;
    (0..=k).map(|i| i as f64 * dt).collect()
}

/// Simulates trajectory `index` of `seed` from equilibrium up to `t_max`.
pub fn run_trajectory(params: &ModelParams, t_max: f64, sampling_dt: f64, seed: u64, index: u64) -> Result<Trajectory> {
    if !(t_max >= 0.0) {
        return Err(Error::InvalidInput(format!("t_max = {t_max} must be non-negative")));
    }
    let mut engine = Engine::from_equilibrium(params, seed, index)?;
    let initial = engine.configuration().clone();
    let times = sampling_grid(t_max, sampling_dt);
    let mut rec = Recorder::default();
    let summary = engine.run_observed(t_max, &times, &mut rec);
    Ok(Trajectory {
        initial,
        events: rec.events,
        sampling_times: times,
        snapshots: rec.snapshots,
        t_max,
        blocked_at: summary.blocked_at,
    })
}

/// Trajectory 0 of `seed`.
pub fn run(params: &ModelParams, t_max: f64, sampling_dt: f64, seed: u64) -> Result<Trajectory> {
    run_trajectory(params, t_max, sampling_dt, seed, 0)
}

/// All single jumps out of `cfg` with their macroscopic rates.
pub fn transitions(cfg: &Configuration, params: &ModelParams) -> Vec<(Configuration, f64)> {
    let n2 = (params.n as f64).powi(2);
    let mut out = Vec::new();
    for x in 0..cfg.len() as i64 {
        if !cfg.bond_active(x, params.m) {
            continue;
        }
        let c = cfg.constraint(x, params.m) as f64;
        let p = if cfg.get(x) == 1 { params.p_plus() } else { params.p_minus() };
        if p > 0.0 {
            out.push((cfg.exchange(x, x + 1), n2 * c * p));
        }
    }
    out
}
