//! Maximin qubit frequency allocation around a shared bus mode.
//!
//! The objective is the smallest separation s_min between any two pairwise detunings,
//! so that a modulation tone resonant with one pair stays off-resonant for every other.
//! Detunings are compared by magnitude, |Δ_ij| = |ω_i − ω_j|, which equals the signed
//! form with qubits labelled in frequency order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

use crate::error::{BusError, Result};
use crate::units::mhz;

/// Number of random starts used by [`allocate`].
pub const STARTS: usize = 64;

/// Constraints for placing N qubits around a bus mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub n_qubits: usize,
    /// Bus mode, rad/ns.
    pub omega_r: f64,
    /// Full width of the window centred on the bus mode, rad/ns.
    pub bandwidth: f64,
    /// Smallest allowed |ω_i − ω_r|, rad/ns.
    pub min_bus_detuning: f64,
    /// Smallest allowed distance to any neighbouring mode, rad/ns.
    pub neighbor_mode_guard: f64,
    /// Neighbouring bus modes, rad/ns.
    pub neighbor_modes: Vec<f64>,
}

impl AllocationProblem {
    /// Problem with the default 150 MHz bus detuning and 500 MHz neighbour guard.
    pub fn new(n_qubits: usize, omega_r: f64, bandwidth: f64, neighbor_modes: Vec<f64>) -> Self {
        Self { n_qubits, omega_r, bandwidth, min_bus_detuning: mhz(150.0), neighbor_mode_guard: mhz(500.0), neighbor_modes }
    }

    /// Checks that the window and the neighbour guards are consistent.
    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 2 {
            return Err(BusError::InvalidParameter("allocation needs at least two qubits".into()));
        }
        if !(self.bandwidth > 0.0) || self.min_bus_detuning < 0.0 || self.neighbor_mode_guard < 0.0 {
            return Err(BusError::InvalidParameter("bandwidth and guards must be non-negative".into()));
        }
        for &m in &self.neighbor_modes {
            let fsr = (m - self.omega_r).abs();
            if 0.5 * self.bandwidth + self.neighbor_mode_guard > fsr * (1.0 + 1e-12) {
                return Err(BusError::InvalidParameter("window plus neighbour guard exceeds the mode spacing".into()));
            }
        }
        Ok(())
    }

    /// Allowed frequency intervals, sorted and disjoint.
    pub fn allowed_intervals(&self) -> Vec<(f64, f64)> {
        let mut iv = vec![(self.omega_r - 0.5 * self.bandwidth, self.omega_r + 0.5 * self.bandwidth)];
        let mut cuts = vec![(self.omega_r - self.min_bus_detuning, self.omega_r + self.min_bus_detuning)];
        cuts.extend(self.neighbor_modes.iter().map(|&m| (m - self.neighbor_mode_guard, m + self.neighbor_mode_guard)));
        for (a, b) in cuts {
            let mut next = Vec::new();
            for &(lo, hi) in &iv {
                if b <= lo || a >= hi {
                    next.push((lo, hi));
                    continue;
                }
                if a > lo {
                    next.push((lo, a));
                }
                if b < hi {
                    next.push((b, hi));
                }
            }
            iv = next;
        }
        iv.retain(|(a, b)| b >= a);
        iv
    }

    /// True when `w` satisfies every single-qubit constraint.
    pub fn admits(&self, w: f64) -> bool {
        let tol = 1e-12 * self.omega_r.abs().max(1.0);
        (w - self.omega_r).abs() <= 0.5 * self.bandwidth + tol
            && (w - self.omega_r).abs() >= self.min_bus_detuning - tol
            && self.neighbor_modes.iter().all(|&m| (w - m).abs() >= self.neighbor_mode_guard - tol)
    }

    fn clamp(&self, w: f64, iv: &[(f64, f64)]) -> f64 {
        iv.iter()
            .map(|&(a, b)| w.clamp(a, b))
            .min_by(|x, y| (x - w).abs().partial_cmp(&(y - w).abs()).unwrap())
            .unwrap_or(w)
    }
}

/// Optimized placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    /// Qubit frequencies in ascending order, rad/ns.
    pub frequencies: Vec<f64>,
    /// Minimum detuning separation, rad/ns.
    pub s_min: f64,
    /// Crosstalk budget s_min/4, rad/ns.
    pub g_eff_max: f64,
}

fn detunings(f: &[f64]) -> Vec<f64> {
    let mut d = Vec::with_capacity(f.len() * (f.len() - 1) / 2);
    for i in 0..f.len() {
        for j in (i + 1)..f.len() {
            d.push((f[i] - f[j]).abs());
        }
    }
    d
}

/// Smallest | |Δ_ij| − |Δ_kl| | over distinct pairs; +∞ for two qubits.
pub fn s_min(frequencies: &[f64]) -> f64 {
    let d = detunings(frequencies);
    let mut best = f64::INFINITY;
    for a in 0..d.len() {
        for b in (a + 1)..d.len() {
            best = best.min((d[a] - d[b]).abs());
        }
    }
    best
}

/// Largest effective coupling compatible with the allocation, s_min/4.
pub fn crosstalk_budget(result: &AllocationResult) -> f64 {
    result.s_min / 4.0
}

/// Detuning of one pair and its distance to the nearest other detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSeparation {
    pub i: usize,
    pub j: usize,
    /// |ω_i − ω_j|, rad/ns.
    pub delta: f64,
    /// min over other pairs of | |Δ_ij| − |Δ_kl| |, rad/ns.
    pub min_separation: f64,
}

/// Per-pair detunings sorted by detuning.
pub fn pair_separations(frequencies: &[f64]) -> Vec<PairSeparation> {
    let mut pairs = Vec::new();
    for i in 0..frequencies.len() {
        for j in (i + 1)..frequencies.len() {
            pairs.push((i, j, (frequencies[i] - frequencies[j]).abs()));
        }
    }
    let mut out: Vec<PairSeparation> = pairs
        .iter()
        .map(|&(i, j, d)| {
            let m = pairs.iter().filter(|p| (p.0, p.1) != (i, j)).map(|p| (p.2 - d).abs()).fold(f64::INFINITY, f64::min);
            PairSeparation { i, j, delta: d, min_separation: m }
        })
        .collect();
    out.sort_by(|a, b| a.delta.partial_cmp(&b.delta).unwrap().then((a.i, a.j).cmp(&(b.i, b.j))));
    out
}

/// Sorted separations, compared lexicographically (leximin).
fn profile(f: &[f64]) -> Vec<f64> {
    let d = detunings(f);
    let mut s = Vec::with_capacity(d.len() * d.len() / 2);
    for a in 0..d.len() {
        for b in (a + 1)..d.len() {
            s.push((d[a] - d[b]).abs());
        }
    }
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s
}

fn leximin_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y).unwrap() {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn sample_allowed(rng: &mut ChaCha8Rng, iv: &[(f64, f64)]) -> f64 {
    let total: f64 = iv.iter().map(|(a, b)| b - a).sum();
    let mut u = rng.random_range(0.0..total);
    for &(a, b) in iv {
        if u <= b - a {
            return a + u;
        }
        u -= b - a;
    }
    iv.last().unwrap().1
}

/// Coordinate search with a shrinking step; each coordinate also scans a coarse grid
/// over the allowed set while the step is large.
fn local_search(problem: &AllocationProblem, iv: &[(f64, f64)], mut f: Vec<f64>) -> Vec<f64> {
    let span: f64 = iv.iter().map(|(a, b)| b - a).sum();
    let grid: Vec<f64> = {
        let n = 400;
        let mut g = Vec::new();
        for &(a, b) in iv {
            let k = (((b - a) / span) * n as f64).ceil().max(1.0) as usize;
            g.extend((0..=k).map(|j| a + (b - a) * j as f64 / k as f64));
        }
        g
    };
    let mut best = profile(&f);
    let mut h = span / 20.0;
    let h_min = 1e-7 * problem.omega_r.abs().max(1.0);
    while h > h_min {
        let mut improved = true;
        while improved {
            improved = false;
            for i in 0..f.len() {
                let orig = f[i];
                let mut cands: Vec<f64> = (-8..=8).filter(|&k| k != 0).map(|k| problem.clamp(orig + k as f64 * h, iv)).collect();
                if h > span / 400.0 {
                    cands.extend(grid.iter().cloned());
                }
                let mut best_w = orig;
                for w in cands {
                    f[i] = w;
                    if s_min(&f) < best[0] {
                        continue;
                    }
                    let p = profile(&f);
                    if leximin_cmp(&p, &best).is_gt() {
                        best = p;
                        best_w = w;
                    }
                }
                f[i] = best_w;
                if best_w != orig {
                    improved = true;
                }
            }
        }
        h *= 0.5;
    }
    f.sort_by(|a, b| a.partial_cmp(b).unwrap());
    f
}

/// Maximizes s_min over `STARTS` seeded random starts run in parallel.
///
/// The result with the largest s_min wins; ties go to the lexicographically smallest
/// sorted frequency vector. Fails with `Infeasible` when the allowed set is empty.
pub fn allocate(problem: &AllocationProblem, seed: u64) -> Result<AllocationResult> {
    problem.validate()?;
    let iv = problem.allowed_intervals();
    if iv.is_empty() || iv.iter().all(|(a, b)| b - a <= 0.0) {
        return Err(BusError::Infeasible("no frequency satisfies the window, bus-detuning and neighbour-guard constraints".into()));
    }
    let runs: Vec<Vec<f64>> = (0..STARTS)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let f0: Vec<f64> = (0..problem.n_qubits).map(|_| sample_allowed(&mut rng, &iv)).collect();
            local_search(problem, &iv, f0)
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for f in runs {
        let s = s_min(&f);
        let better = match &best {
            None => true,
            Some((bs, bf)) => s > *bs || (s == *bs && f.iter().zip(bf).map(|(a, b)| a.partial_cmp(b).unwrap()).find(|o| o.is_ne()) == Some(Ordering::Less)),
        };
        if better {
            best = Some((s, f));
        }
    }
    let (s, frequencies) = best.unwrap();
    if !frequencies.iter().all(|&w| problem.admits(w)) {
        return Err(BusError::Infeasible("optimizer left the allowed set".into()));
    }
    Ok(AllocationResult { frequencies, s_min: s, g_eff_max: s / 4.0 })
}
