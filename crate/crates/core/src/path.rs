//! Allowed exchange paths carried by a mobile cluster, and a breadth-first
//! reachability oracle on small windows.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::config::{locate_cluster, BoxSpec, Configuration};
use crate::constraint::constraint_with;
use crate::error::{Error, Result};

/// Largest window explored by [`bfs_reachability_oracle`].
pub const BFS_MAX_WIDTH: usize = 20;

/// Sequence of nearest-neighbour exchanges; move `k` exchanges sites `k` and `k+1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangePath {
    pub moves: Vec<i64>,
    pub source: i64,
    pub target: i64,
    /// First and last site touched by the construction.
    pub window: (i64, i64),
    pub m: usize,
}

impl ExchangePath {
    pub fn len(&self) -> usize {
        self.moves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    /// Number of times each bond is used.
    pub fn bond_usage(&self) -> BTreeMap<i64, usize> {
        let mut use_count = BTreeMap::new();
        for &k in &self.moves {
            *use_count.entry(k).or_insert(0) += 1;
        }
        use_count
    }

    pub fn max_bond_usage(&self) -> usize {
        self.bond_usage().values().copied().max().unwrap_or(0)
    }

    /// `window length = ℓ + ℓ₀`, the distance from the left end of `{y, z}` through the cluster box.
    pub fn window_len(&self) -> usize {
        (self.window.1 - self.window.0 + 1) as usize
    }

    /// Applies the moves to `cfg`, checking that every move is allowed when it is executed.
    pub fn replay(&self, cfg: &Configuration) -> Result<Configuration> {
        let mut c = cfg.clone();
        for (index, &k) in self.moves.iter().enumerate() {
            if !c.bond_active(k, self.m) {
                return Err(Error::IllegalMove { index, bond: k });
            }
            c.exchange_in_place(k, k + 1);
        }
        Ok(c)
    }

    /// Configurations after each move, starting with `cfg` itself.
    pub fn frames(&self, cfg: &Configuration) -> Result<Vec<Configuration>> {
        let mut out = vec![cfg.clone()];
        let mut c = cfg.clone();
        for (index, &k) in self.moves.iter().enumerate() {
            if !c.bond_active(k, self.m) {
                return Err(Error::IllegalMove { index, bond: k });
            }
            c.exchange_in_place(k, k + 1);
            out.push(c.clone());
        }
        Ok(out)
    }
}

/// `len ≤ C (ℓ + ℓ₀)` holds for every path built here with `C = 2(m+1)`.
pub fn path_length_constant(m: usize) -> usize {
    2 * (m + 1)
}

/// Leftmost mobile cluster in the box: for `m = 2` the first `x′` with
/// `η(x′)η(x′+1) + η(x′)η(x′+2) ≥ 1`, partners inside the box.
pub fn find_first_mobile_cluster(cfg: &Configuration, bx: BoxSpec, m: usize) -> Option<i64> {
    locate_cluster(cfg, bx, m).map(|c| c.start)
}

/// Records every transposition, including exchanges of equal values, so that
/// retracing undoes the site permutation exactly.
struct Builder {
    cfg: Configuration,
    m: usize,
    swaps: Vec<i64>,
}

impl Builder {
    fn swap(&mut self, k: i64) -> Result<()> {
        if self.cfg.get(k) != self.cfg.get(k + 1) && self.cfg.constraint(k, self.m) == 0 {
            return Err(Error::IllegalMove { index: self.swaps.len(), bond: k });
        }
        self.cfg.exchange_in_place(k, k + 1);
        self.swaps.push(k);
        Ok(())
    }

    /// Moves a run of `m` particles starting at `s` one site left; the value at
    /// `s − 1` ends up at `s + m − 1`.
    fn pass(&mut self, s: i64) -> Result<()> {
        for k in s - 1..=s + self.m as i64 - 2 {
            self.swap(k)?;
        }
        Ok(())
    }
}

fn reflect(cfg: &Configuration) -> Configuration {
    Configuration::from_occupation((0..cfg.len() as i64).map(|x| cfg.get(-x)).collect())
}

/// Path realising `η^{y,z}` using the first mobile cluster of `bx`.
///
/// The cluster is normalised to `m` contiguous particles, walked left up to the
/// pair, used to ferry `η(max(y,z))` next to `min(y,z)`, and after the central
/// swap every move is retraced. A box on the left of both sites is handled by
/// reflection.
pub fn build_exchange_path(cfg: &Configuration, y: i64, z: i64, bx: BoxSpec, m: usize) -> Result<ExchangePath> {
    let (lo, hi) = (y.min(z), y.max(z));
    if cfg.get(y) == cfg.get(z) {
        return Ok(ExchangePath { moves: Vec::new(), source: y, target: z, window: (lo, hi), m });
    }
    let len = cfg.len() as i64;
    if bx.first() > hi {
        if bx.last() - lo + 1 > len {
            return Err(Error::InvalidInput("path window does not fit on the ring".into()));
        }
        return build_right(cfg, y, z, bx, m);
    }
    if bx.last() < lo {
        if hi - bx.first() + 1 > len {
            return Err(Error::InvalidInput("path window does not fit on the ring".into()));
        }
        let mirrored = reflect(cfg);
        let mbx = BoxSpec::new(-bx.last() - 1, bx.length);
        let p = build_right(&mirrored, -y, -z, mbx, m)?;
        let path = ExchangePath {
            moves: p.moves.iter().map(|&k| -k - 1).collect(),
            source: y,
            target: z,
            window: (-p.window.1, -p.window.0),
            m,
        };
        check(cfg, &path)?;
        return Ok(path);
    }
    Err(Error::InvalidInput(format!("sites {y} and {z} must both lie on one side of the box")))
}

fn build_right(cfg: &Configuration, y: i64, z: i64, bx: BoxSpec, m: usize) -> Result<ExchangePath> {
    let (lo, hi) = (y.min(z), y.max(z));
    let cluster = locate_cluster(cfg, bx, m).ok_or(Error::NoCluster)?;
    let mut b = Builder { cfg: cfg.clone(), m, swaps: Vec::new() };
    let s = cluster.start;
    if let Some(h) = cluster.hole {
        for k in h..s + m as i64 {
            b.swap(k)?;
        }
    }
    let mut c = s;
    while c > hi + 1 {
        b.pass(c)?;
        c -= 1;
    }
    for p in (lo + 1..hi).rev() {
        b.swap(p)?;
        b.pass(p + 2)?;
    }
    let forward = b.swaps.clone();
    b.swap(lo)?;
    for &k in forward.iter().rev() {
        b.swap(k)?;
    }
    // exchanges of equal values leave the configuration unchanged and are dropped
    let mut state = cfg.clone();
    let mut moves = Vec::new();
    for k in b.swaps {
        if state.get(k) != state.get(k + 1) {
            state.exchange_in_place(k, k + 1);
            moves.push(k);
        }
    }
    let path = ExchangePath { moves, source: y, target: z, window: (lo, bx.last()), m };
    check(cfg, &path)?;
    Ok(path)
}

fn check(cfg: &Configuration, path: &ExchangePath) -> Result<()> {
    let end = path.replay(cfg)?;
    if end != cfg.exchange(path.source, path.target) {
        return Err(Error::InvalidInput("constructed path does not realise the exchange".into()));
    }
    Ok(())
}

/// Result of the breadth-first search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reachability {
    pub reachable: bool,
    /// Length of a shortest allowed path to `η^{y,z}`.
    pub shortest: Option<usize>,
    pub states_visited: usize,
}

/// Breadth-first search over configurations of `window`, sites outside frozen,
/// edges the allowed exchanges with both sites in the window.
pub fn bfs_reachability_oracle(cfg: &Configuration, y: i64, z: i64, window: BoxSpec, m: usize) -> Result<Reachability> {
    let w = window.length;
    if w > BFS_MAX_WIDTH {
        return Err(Error::EnumerationLimit { what: "reachability window", needed: w, cap: BFS_MAX_WIDTH });
    }
    if w + 2 * m > cfg.len() {
        return Err(Error::InvalidInput("window and constraint reach exceed the ring".into()));
    }
    if !window.contains(y) || !window.contains(z) {
        return Err(Error::InvalidInput(format!("sites {y}, {z} outside the window")));
    }
    let first = window.first();
    let start: u32 = (0..w).fold(0, |acc, i| acc | (cfg.get(first + i as i64) as u32) << i);
    let (iy, iz) = ((y - first) as u32, (z - first) as u32);
    let target = if (start >> iy & 1) != (start >> iz & 1) { start ^ (1 << iy) ^ (1 << iz) } else { start };
    let mut dist = vec![u32::MAX; 1usize << w];
    dist[start as usize] = 0;
    let mut queue = VecDeque::from([start]);
    let mut visited = 1;
    while let Some(s) = queue.pop_front() {
        let d = dist[s as usize];
        if s == target {
            return Ok(Reachability { reachable: true, shortest: Some(d as usize), states_visited: visited });
        }
        let occ = |j: i64| {
            let i = j - first;
            if (0..w as i64).contains(&i) {
                (s >> i & 1) as u8
            } else {
                cfg.get(j)
            }
        };
        for i in 0..w.saturating_sub(1) {
            if (s >> i & 1) == (s >> (i + 1) & 1) {
                continue;
            }
            let k = first + i as i64;
            if constraint_with(m, k, occ) == 0 {
                continue;
            }
            let next = s ^ (0b11 << i);
            if dist[next as usize] == u32::MAX {
                dist[next as usize] = d + 1;
                visited += 1;
                queue.push_back(next);
            }
        }
    }
    Ok(Reachability { reachable: false, shortest: None, states_visited: visited })
}
