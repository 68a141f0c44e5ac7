//! Brute-force time evolution of transmons coupled to one bus mode.
//!
//! The model is H(t) = H₀ + H₁(t) with
//! H₀ = Σ_k [ω_k n_k − (α_k/2) n_k(n_k − 1)] + ω_r a†a and
//! H₁(t) = −Σ_k g_k(t)(b_k − b_k†)(a − a†) + Σ_m c_m(t)(b_i†b_j + b_i b_j†),
//! where the second sum holds optional direct exchange drives. Evolution uses a
//! fixed-step fourth-order Runge-Kutta integrator, in the interaction frame of H₀
//! (default) or in the lab frame. Matrix elements are grouped by transition frequency
//! so each stage needs one phase factor per group.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::effective::{GTime, QubitParams};
use crate::error::{BusError, Result};
use crate::numerics::golden_max;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Largest Hilbert-space dimension accepted for state-vector evolution.
pub const MAX_DIMENSION: usize = 100_000;
/// Largest dimension accepted for density-matrix evolution.
pub const MAX_DENSITY_DIMENSION: usize = 1_000;

/// Single bus mode with a Fock cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonator {
    /// Mode angular frequency, rad/ns.
    pub omega_r: f64,
    /// Highest photon number kept (n_max ≥ 2).
    pub n_max: usize,
}

/// Direct qubit-qubit exchange c(t)(b_i†b_j + b_i b_j†), active for t_on ≤ t < t_off.
///
/// c(t) = g for ω = 0 and c(t) = 2g cos(ωt) otherwise, so the rotating-wave exchange
/// rate is g in both cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExchangeDrive {
    /// Position of the first qubit in `SystemModel::qubits`.
    pub i: usize,
    /// Position of the second qubit.
    pub j: usize,
    /// Rate, rad/ns.
    pub g: f64,
    /// Drive angular frequency, rad/ns.
    pub omega: f64,
    pub t_on: f64,
    pub t_off: f64,
}

impl ExchangeDrive {
    pub fn coefficient(&self, t: f64) -> f64 {
        if t < self.t_on || t >= self.t_off {
            0.0
        } else if self.omega == 0.0 {
            self.g
        } else {
            2.0 * self.g * (self.omega * t).cos()
        }
    }
}

/// Qubits plus an optional bus mode, with time-periodic qubit-bus couplings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub qubits: Vec<QubitParams>,
    /// Transmon levels kept per qubit (2 or 3).
    pub levels: usize,
    pub resonator: Option<Resonator>,
    /// Coupling g_k(t) of each qubit to the bus (ignored without a resonator).
    pub couplings: Vec<GTime>,
    pub exchange: Vec<ExchangeDrive>,
    /// Use the qubits' T1 and T2 in Lindblad evolution.
    pub dissipation: bool,
}

impl SystemModel {
    /// Qubits coupled to a bus mode with the given couplings.
    pub fn with_bus(qubits: Vec<QubitParams>, levels: usize, resonator: Resonator, couplings: Vec<GTime>) -> Self {
        Self { qubits, levels, resonator: Some(resonator), couplings, exchange: Vec::new(), dissipation: false }
    }

    /// Qubits only, coupled through exchange drives.
    pub fn qubits_only(qubits: Vec<QubitParams>, levels: usize, exchange: Vec<ExchangeDrive>) -> Self {
        Self { qubits, levels, resonator: None, couplings: Vec::new(), exchange, dissipation: false }
    }

    fn photon_levels(&self) -> usize {
        self.resonator.map_or(1, |r| r.n_max + 1)
    }

    /// Hilbert-space dimension levels^N · (n_max + 1).
    pub fn dimension(&self) -> usize {
        self.levels.pow(self.qubits.len() as u32) * self.photon_levels()
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.levels) {
            return Err(BusError::InvalidParameter("transmon levels must be 2 or 3".into()));
        }
        if self.qubits.is_empty() {
            return Err(BusError::InvalidParameter("model needs at least one qubit".into()));
        }
        if let Some(r) = self.resonator {
            if r.n_max < 2 {
                return Err(BusError::InvalidParameter("Fock cutoff n_max must be at least 2".into()));
            }
            if self.couplings.len() != self.qubits.len() {
                return Err(BusError::InvalidParameter("one coupling per qubit is required".into()));
            }
        }
        for d in &self.exchange {
            if d.i >= self.qubits.len() || d.j >= self.qubits.len() || d.i == d.j {
                return Err(BusError::InvalidParameter("exchange drive refers to a missing qubit".into()));
            }
        }
        let dim = (self.levels as f64).powi(self.qubits.len() as i32) * self.photon_levels() as f64;
        if dim > MAX_DIMENSION as f64 {
            return Err(BusError::InvalidParameter(format!("Hilbert dimension {dim} exceeds {MAX_DIMENSION}")));
        }
        Ok(())
    }

    /// Basis index of qubit levels `q` (one entry per qubit) and photon number `n`.
    pub fn index(&self, q: &[usize], n: usize) -> usize {
        let mut idx = 0;
        for &l in q {
            idx = idx * self.levels + l;
        }
        idx * self.photon_levels() + n
    }

    /// Qubit levels and photon number of a basis index.
    pub fn decode(&self, mut idx: usize) -> (Vec<usize>, usize) {
        let np = self.photon_levels();
        let n = idx % np;
        idx /= np;
        let mut q = vec![0; self.qubits.len()];
        for k in (0..self.qubits.len()).rev() {
            q[k] = idx % self.levels;
            idx /= self.levels;
        }
        (q, n)
    }

    /// Bare energy of a basis state, rad/ns.
    pub fn bare_energy(&self, idx: usize) -> f64 {
        let (q, n) = self.decode(idx);
        let mut e = self.resonator.map_or(0.0, |r| r.omega_r * n as f64);
        for (k, &l) in q.iter().enumerate() {
            let qb = &self.qubits[k];
            let lf = l as f64;
            e += qb.omega_q * lf - 0.5 * qb.alpha * lf * (lf - 1.0);
        }
        e
    }

    /// Basis vector for qubit levels `q` with `n` photons.
    pub fn basis_state(&self, q: &[usize], n: usize) -> Vec<Complex64> {
        let mut psi = vec![ZERO; self.dimension()];
        psi[self.index(q, n)] = Complex64::new(1.0, 0.0);
        psi
    }

    /// Sparse coupling terms grouped by source and transition frequency.
    fn terms(&self, frame: Frame) -> Vec<Term> {
        let dim = self.dimension();
        let mut raw: Vec<(Source, usize, usize, f64)> = Vec::new();
        let lv = self.levels;
        if let Some(r) = self.resonator {
            for k in 0..self.qubits.len() {
                for col in 0..dim {
                    let (q, n) = self.decode(col);
                    let l = q[k];
                    let mut push = |dl: i64, dn: i64, val: f64| {
                        let mut q2 = q.clone();
                        q2[k] = (l as i64 + dl) as usize;
                        let row = self.index(&q2, (n as i64 + dn) as usize);
                        // H₁ carries −g_k(t) times (b − b†)(a − a†).
                        raw.push((Source::Bus(k), row, col, -val));
                    };
                    let (lf, nf) = (l as f64, n as f64);
                    if l >= 1 && n >= 1 {
                        push(-1, -1, lf.sqrt() * nf.sqrt());
                    }
                    if l >= 1 && n < r.n_max {
                        push(-1, 1, -lf.sqrt() * (nf + 1.0).sqrt());
                    }
                    if l + 1 < lv && n >= 1 {
                        push(1, -1, -(lf + 1.0).sqrt() * nf.sqrt());
                    }
                    if l + 1 < lv && n < r.n_max {
                        push(1, 1, (lf + 1.0).sqrt() * (nf + 1.0).sqrt());
                    }
                }
            }
        }
        for (m, d) in self.exchange.iter().enumerate() {
            for col in 0..dim {
                let (q, n) = self.decode(col);
                let (li, lj) = (q[d.i], q[d.j]);
                // b_i† b_j and its conjugate.
                if li + 1 < lv && lj >= 1 {
                    let mut q2 = q.clone();
                    q2[d.i] += 1;
                    q2[d.j] -= 1;
                    raw.push((Source::Exchange(m), self.index(&q2, n), col, ((li + 1) as f64).sqrt() * (lj as f64).sqrt()));
                }
                if li >= 1 && lj + 1 < lv {
                    let mut q2 = q.clone();
                    q2[d.i] -= 1;
                    q2[d.j] += 1;
                    raw.push((Source::Exchange(m), self.index(&q2, n), col, (li as f64).sqrt() * ((lj + 1) as f64).sqrt()));
                }
            }
        }
        let scale = (0..dim).map(|j| self.bare_energy(j).abs()).fold(1.0, f64::max);
        let mut terms: Vec<Term> = Vec::new();
        for (src, row, col, val) in raw {
            let freq = match frame {
                Frame::Interaction => self.bare_energy(row) - self.bare_energy(col),
                Frame::Lab => 0.0,
            };
            match terms.iter_mut().find(|t| t.source == src && (t.freq - freq).abs() <= 1e-12 * scale) {
                Some(t) => t.entries.push((row, col, val)),
                None => terms.push(Term { source: src, freq, entries: vec![(row, col, val)] }),
            }
        }
        terms
    }

    fn coefficient(&self, src: Source, t: f64) -> f64 {
        match src {
            Source::Bus(k) => self.couplings[k].eval(t),
            Source::Exchange(m) => self.exchange[m].coefficient(t),
        }
    }

    /// Largest angular frequency appearing in the propagated equations for `frame`.
    pub fn max_frequency(&self, frame: Frame) -> f64 {
        let mut f: f64 = 0.0;
        for t in self.terms(frame) {
            f = f.max(t.freq.abs());
        }
        if frame == Frame::Lab {
            for j in 0..self.dimension() {
                f = f.max(self.bare_energy(j).abs());
            }
        }
        if self.resonator.is_some() {
            for c in &self.couplings {
                f = f.max(c.omega.abs());
            }
        }
        for d in &self.exchange {
            f = f.max(d.omega.abs());
        }
        f
    }

    /// Time-averaged Hamiltonian in the lab frame: bus couplings g₀ḡ₀ and static
    /// exchange drives (ω = 0); oscillating parts are dropped.
    pub fn static_hamiltonian(&self) -> DMatrix<f64> {
        let dim = self.dimension();
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for j in 0..dim {
            h[(j, j)] = self.bare_energy(j);
        }
        for term in self.terms(Frame::Lab) {
            let c = match term.source {
                Source::Bus(k) => self.couplings[k].g0 * self.couplings[k].g_bar0,
                Source::Exchange(m) => {
                    let d = &self.exchange[m];
                    if d.omega == 0.0 {
                        d.g
                    } else {
                        0.0
                    }
                }
            };
            for &(r, cidx, v) in &term.entries {
                h[(r, cidx)] += c * v;
            }
        }
        h
    }

    /// Dressed energy of the eigenstate with the largest overlap with basis state (q, n).
    pub fn dressed_energy(&self, q: &[usize], n: usize) -> f64 {
        let eig = nalgebra::SymmetricEigen::new(self.static_hamiltonian());
        let idx = self.index(q, n);
        let k = (0..self.dimension())
            .max_by(|&a, &b| eig.eigenvectors[(idx, a)].abs().partial_cmp(&eig.eigenvectors[(idx, b)].abs()).unwrap())
            .unwrap();
        eig.eigenvalues[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Bus(usize),
    Exchange(usize),
}

#[derive(Debug, Clone)]
struct Term {
    source: Source,
    freq: f64,
    entries: Vec<(usize, usize, f64)>,
}

/// Reference frame of the propagated state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    /// Interaction frame of H₀; amplitudes differ from the lab frame by e^{−iE_j t}.
    Interaction,
    Lab,
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Requested step, ns (reduced so the samples fall on steps).
    pub dt: f64,
    pub frame: Frame,
    /// Number of recorded intervals; `samples + 1` states are stored.
    pub samples: usize,
}

impl EvolveOptions {
    /// Interaction-frame options with the largest step allowed by the sampling bound.
    pub fn for_model(model: &SystemModel, samples: usize) -> Self {
        let f = model.max_frequency(Frame::Interaction).max(1e-9);
        Self { dt: 2.0 * PI / (50.0 * f), frame: Frame::Interaction, samples }
    }
}

/// Recorded states of a Schrodinger evolution.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// States in the frame given by `frame`.
    pub states: Vec<Vec<Complex64>>,
    pub frame: Frame,
    /// Accumulated |‖ψ‖ − 1| removed by renormalization.
    pub norm_drift: f64,
}

impl Trajectory {
    /// Population of basis state `idx` at each sample.
    pub fn population(&self, idx: usize) -> Vec<f64> {
        self.states.iter().map(|s| s[idx].norm_sqr()).collect()
    }
}

fn check_step(model: &SystemModel, dt: f64, frame: Frame) -> Result<()> {
    let f = model.max_frequency(frame);
    if f > 0.0 && dt > 2.0 * PI / (50.0 * f) * (1.0 + 1e-12) {
        return Err(BusError::StepTooLarge(format!(
            "dt = {dt:.4e} ns exceeds 2*pi/(50*omega_max) = {:.4e} ns",
            2.0 * PI / (50.0 * f)
        )));
    }
    if !(dt > 0.0) {
        return Err(BusError::StepTooLarge("dt must be positive".into()));
    }
    Ok(())
}

fn step_plan(t_final: f64, dt: f64, samples: usize) -> (usize, usize, f64) {
    let samples = samples.max(1);
    let per = ((t_final / samples as f64) / dt).ceil().max(1.0) as usize;
    let n = per * samples;
    (samples, per, t_final / n as f64)
}

struct Propagator<'a> {
    model: &'a SystemModel,
    terms: Vec<Term>,
    diag: Option<Vec<f64>>,
}

impl<'a> Propagator<'a> {
    fn new(model: &'a SystemModel, frame: Frame) -> Self {
        let diag = match frame {
            Frame::Lab => Some((0..model.dimension()).map(|j| model.bare_energy(j)).collect()),
            Frame::Interaction => None,
        };
        Self { model, terms: model.terms(frame), diag }
    }

    /// Writes −i H(t) ψ into `out`.
    fn rhs(&self, t: f64, psi: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|x| *x = ZERO);
        for term in &self.terms {
            let c = self.model.coefficient(term.source, t);
            if c == 0.0 {
                continue;
            }
            let s = -I * c * Complex64::from_polar(1.0, term.freq * t);
            for &(r, col, v) in &term.entries {
                out[r] += s * v * psi[col];
            }
        }
        if let Some(d) = &self.diag {
            for (j, e) in d.iter().enumerate() {
                out[j] += -I * e * psi[j];
            }
        }
    }

    /// Writes −i[H(t), ρ] into `out` (row-major d×d).
    fn rhs_density(&self, t: f64, rho: &[Complex64], out: &mut [Complex64], dim: usize) {
        out.iter_mut().for_each(|x| *x = ZERO);
        for term in &self.terms {
            let c = self.model.coefficient(term.source, t);
            if c == 0.0 {
                continue;
            }
            let s = c * Complex64::from_polar(1.0, term.freq * t);
            for &(r, col, v) in &term.entries {
                let h = s * v;
                // H ρ: row r gains h·ρ[col, :]; the Hermitian partner H[col, r] = h* is a separate entry.
                for k in 0..dim {
                    out[r * dim + k] += -I * h * rho[col * dim + k];
                    out[k * dim + col] += I * rho[k * dim + r] * h;
                }
            }
        }
        if let Some(d) = &self.diag {
            for r in 0..dim {
                for k in 0..dim {
                    out[r * dim + k] += -I * (d[r] - d[k]) * rho[r * dim + k];
                }
            }
        }
    }
}

fn rk4_step<F: Fn(f64, &[Complex64], &mut [Complex64])>(f: &F, t: f64, h: f64, y: &mut [Complex64], buf: &mut [Vec<Complex64>; 5]) {
    let n = y.len();
    let [k1, k2, k3, k4, tmp] = buf;
    f(t, y, k1);
    for j in 0..n {
        tmp[j] = y[j] + 0.5 * h * k1[j];
    }
    f(t + 0.5 * h, tmp, k2);
    for j in 0..n {
        tmp[j] = y[j] + 0.5 * h * k2[j];
    }
    f(t + 0.5 * h, tmp, k3);
    for j in 0..n {
        tmp[j] = y[j] + h * k3[j];
    }
    f(t + h, tmp, k4);
    for j in 0..n {
        y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
    }
}

/// Schrodinger evolution of `psi0` (given in the frame of `opts.frame`) up to `t_final`.
///
/// Each step is renormalized; the removed drift is accumulated and must stay below 1e−6.
pub fn evolve_schrodinger(model: &SystemModel, psi0: &[Complex64], t_final: f64, opts: EvolveOptions) -> Result<Trajectory> {
    model.validate()?;
    if psi0.len() != model.dimension() {
        return Err(BusError::InvalidParameter("initial state has the wrong dimension".into()));
    }
    check_step(model, opts.dt, opts.frame)?;
    let prop = Propagator::new(model, opts.frame);
    let (samples, per, h) = step_plan(t_final, opts.dt, opts.samples);
    let n = psi0.len();
    let norm0 = psi0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let mut psi: Vec<Complex64> = psi0.iter().map(|c| c / norm0).collect();
    let mut buf = [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]];
    let f = |t: f64, y: &[Complex64], out: &mut [Complex64]| prop.rhs(t, y, out);
    let mut times = vec![0.0];
    let mut states = vec![psi.clone()];
    let mut drift = 0.0;
    let mut step = 0usize;
    for _ in 0..samples {
        for _ in 0..per {
            let t = step as f64 * h;
            rk4_step(&f, t, h, &mut psi, &mut buf);
            let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            drift += (norm - 1.0).abs();
            psi.iter_mut().for_each(|c| *c /= norm);
            step += 1;
        }
        if drift > 1e-6 {
            return Err(BusError::StepTooLarge(format!("norm drift {drift:.3e} exceeds 1e-6")));
        }
        times.push(step as f64 * h);
        states.push(psi.clone());
    }
    Ok(Trajectory { times, states, frame: opts.frame, norm_drift: drift })
}

/// Converts an interaction-frame state at time `t` to the lab frame.
pub fn to_lab_frame(model: &SystemModel, psi: &[Complex64], t: f64) -> Vec<Complex64> {
    psi.iter().enumerate().map(|(j, c)| c * Complex64::from_polar(1.0, -model.bare_energy(j) * t)).collect()
}

/// Recorded density matrices of a Lindblad evolution.
#[derive(Debug, Clone)]
pub struct DensityTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DMatrix<Complex64>>,
    pub frame: Frame,
    /// Largest |tr ρ − 1| seen.
    pub trace_drift: f64,
    /// Smallest eigenvalue of the recorded states.
    pub min_eigenvalue: f64,
}

/// Collapse operators from each qubit's T1 and T2 (Ramsey time, else echo time):
/// per-transition lowering √(n/T1)|n−1⟩⟨n| and dephasing √(2γ_φ) n with γ_φ = 1/T2 − 1/(2T1).
fn jump_operators(model: &SystemModel) -> Result<Vec<Vec<(usize, usize, f64)>>> {
    let mut ops = Vec::new();
    if !model.dissipation {
        return Ok(ops);
    }
    let dim = model.dimension();
    for (k, q) in model.qubits.iter().enumerate() {
        let t2 = q.t2r.or(q.t2e);
        if let Some(t1) = q.t1 {
            for l in 1..model.levels {
                let mut op = Vec::new();
                for col in 0..dim {
                    let (qs, n) = model.decode(col);
                    if qs[k] == l {
                        let mut q2 = qs.clone();
                        q2[k] = l - 1;
                        op.push((model.index(&q2, n), col, (l as f64 / t1).sqrt()));
                    }
                }
                ops.push(op);
            }
        }
        if let Some(t2) = t2 {
            let g1 = q.t1.map_or(0.0, |t1| 1.0 / t1);
            let gphi = 1.0 / t2 - 0.5 * g1;
            if gphi < -1e-15 {
                return Err(BusError::InvalidParameter(format!("qubit {}: T2 exceeds 2*T1", q.index)));
            }
            if gphi > 0.0 {
                let c = (2.0 * gphi).sqrt();
                let op = (0..dim)
                    .filter_map(|j| {
                        let l = model.decode(j).0[k];
                        (l > 0).then_some((j, j, c * l as f64))
                    })
                    .collect();
                ops.push(op);
            }
        }
    }
    Ok(ops)
}

fn min_hermitian_eigenvalue(rho: &DMatrix<Complex64>) -> f64 {
    let h = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = nalgebra::SymmetricEigen::new(h);
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Lindblad evolution of `rho0` with the model's coherence times.
///
/// The collapse operators connect states whose bare energies differ by a single
/// frequency, so the dissipator has the same form in both frames.
pub fn evolve_lindblad(model: &SystemModel, rho0: &DMatrix<Complex64>, t_final: f64, opts: EvolveOptions) -> Result<DensityTrajectory> {
    model.validate()?;
    let dim = model.dimension();
    if dim > MAX_DENSITY_DIMENSION {
        return Err(BusError::InvalidParameter(format!("density evolution limited to dimension {MAX_DENSITY_DIMENSION}")));
    }
    if rho0.nrows() != dim || rho0.ncols() != dim {
        return Err(BusError::InvalidParameter("initial density matrix has the wrong dimension".into()));
    }
    check_step(model, opts.dt, opts.frame)?;
    let prop = Propagator::new(model, opts.frame);
    let ops = jump_operators(model)?;
    let mut anti = vec![0.0; dim];
    for op in &ops {
        for &(_, c, v) in op {
            anti[c] += v * v;
        }
    }
    let f = |t: f64, y: &[Complex64], out: &mut [Complex64]| {
        prop.rhs_density(t, y, out, dim);
        for op in &ops {
            for &(r1, c1, v1) in op {
                for &(r2, c2, v2) in op {
                    out[r1 * dim + r2] += v1 * v2 * y[c1 * dim + c2];
                }
            }
        }
        for r in 0..dim {
            for k in 0..dim {
                out[r * dim + k] -= 0.5 * (anti[r] + anti[k]) * y[r * dim + k];
            }
        }
    };
    let (samples, per, h) = step_plan(t_final, opts.dt, opts.samples);
    let to_vec = |m: &DMatrix<Complex64>| (0..dim * dim).map(|j| m[(j / dim, j % dim)]).collect::<Vec<_>>();
    let to_mat = |v: &[Complex64]| DMatrix::from_fn(dim, dim, |r, c| v[r * dim + c]);
    let mut y = to_vec(rho0);
    let n = y.len();
    let mut buf = [vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n], vec![ZERO; n]];
    let tr0 = rho0.trace().re;
    let mut times = vec![0.0];
    let mut states = vec![rho0.clone()];
    let mut trace_drift: f64 = 0.0;
    let mut min_eig = min_hermitian_eigenvalue(rho0);
    let mut step = 0usize;
    for _ in 0..samples {
        for _ in 0..per {
            rk4_step(&f, step as f64 * h, h, &mut y, &mut buf);
            step += 1;
        }
        let m = to_mat(&y);
        trace_drift = trace_drift.max((m.trace().re - tr0).abs());
        if trace_drift > 1e-6 {
            return Err(BusError::StepTooLarge(format!("trace drift {trace_drift:.3e} exceeds 1e-6")));
        }
        let e = min_hermitian_eigenvalue(&m);
        min_eig = min_eig.min(e);
        if e < -1e-8 {
            return Err(BusError::StepTooLarge(format!("density matrix lost positivity: eigenvalue {e:.3e}")));
        }
        times.push(step as f64 * h);
        states.push(m);
    }
    Ok(DensityTrajectory { times, states, frame: opts.frame, trace_drift, min_eigenvalue: min_eig })
}

/// Population monitored in a chevron.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    /// Probability that qubit `k` (position in the model) is excited.
    QubitExcited(usize),
    /// Probability that the bus holds at least one photon.
    BusOccupied,
}

impl Observable {
    pub fn evaluate(&self, model: &SystemModel, psi: &[Complex64]) -> f64 {
        psi.iter()
            .enumerate()
            .filter(|(j, _)| {
                let (q, n) = model.decode(*j);
                match self {
                    Observable::QubitExcited(k) => q[*k] >= 1,
                    Observable::BusOccupied => n >= 1,
                }
            })
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }
}

/// Least-squares fit of P(t) = A sin²(g t) + B.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    /// Fitted rate g, rad/ns.
    pub rate: f64,
    /// Half-width of the 95% confidence interval on g, rad/ns.
    pub rate_ci: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub r2: f64,
}

fn linear_ab(times: &[f64], p: &[f64], g: f64) -> (f64, f64, f64) {
    let n = times.len() as f64;
    let (mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (&t, &y) in times.iter().zip(p) {
        let x = (g * t).sin().powi(2);
        sx += x;
        sxx += x * x;
        sy += y;
        sxy += x * y;
    }
    let det = n * sxx - sx * sx;
    if det.abs() < 1e-300 {
        let b = sy / n;
        let ssr = p.iter().map(|y| (y - b).powi(2)).sum();
        return (0.0, b, ssr);
    }
    let a = (n * sxy - sx * sy) / det;
    let b = (sy - a * sx) / n;
    let ssr = times.iter().zip(p).map(|(&t, &y)| (y - a * (g * t).sin().powi(2) - b).powi(2)).sum();
    (a, b, ssr)
}

/// Fits P(t) = A sin²(g t) + B by a scan over g followed by golden-section refinement;
/// A and B are linear least squares at each g. Fails with `FitPoor` if R² < 0.9.
pub fn fit_sin2_rate(times: &[f64], p: &[f64]) -> Result<RateFit> {
    if times.len() < 5 || times.len() != p.len() {
        return Err(BusError::InvalidParameter("rate fit needs at least 5 samples".into()));
    }
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let dt = t_max / (times.len() - 1) as f64;
    let g_lo = PI / (8.0 * t_max);
    let g_hi = PI / (4.0 * dt);
    let n_scan = 4000;
    let ratio = (g_hi / g_lo).powf(1.0 / n_scan as f64);
    let mut best = (g_lo, f64::INFINITY);
    let mut g = g_lo;
    for _ in 0..=n_scan {
        let (_, _, ssr) = linear_ab(times, p, g);
        if ssr < best.1 {
            best = (g, ssr);
        }
        g *= ratio;
    }
    let (g, neg) = golden_max(|g| -linear_ab(times, p, g).2, best.0 / ratio, best.0 * ratio, 1e-12 * best.0);
    let ssr = -neg;
    let (a, b, _) = linear_ab(times, p, g);
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let sst: f64 = p.iter().map(|y| (y - mean).powi(2)).sum();
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 0.0 };
    if !(r2 >= 0.9) {
        return Err(BusError::FitPoor { r2 });
    }
    let dof = (p.len() as f64 - 3.0).max(1.0);
    let s2 = ssr / dof;
    let jac: f64 = times.iter().map(|&t| (a * 2.0 * (g * t).sin() * (g * t).cos() * t).powi(2)).sum();
    let rate_ci = if jac > 0.0 { 1.96 * (s2 / jac).sqrt() } else { f64::INFINITY };
    Ok(RateFit { rate: g, rate_ci, amplitude: a, offset: b, r2 })
}

/// Chevron scan settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ChevronSpec {
    /// Initial qubit levels (one per qubit), bus in vacuum.
    pub initial: Vec<usize>,
    pub target: Observable,
    /// Modulation frequencies of the coarse grid, rad/ns.
    pub omega_f: Vec<f64>,
    pub t_final: f64,
    /// Recorded time intervals per trace.
    pub n_t: usize,
    /// Requested integration step, ns; `None` uses the sampling bound.
    pub dt: Option<f64>,
    /// Refine the centre by golden-section search between the neighbours of the best grid point.
    pub refine: bool,
}

/// Populations P_target(ω_f, t) with the fitted exchange rate at the resonance centre.
#[derive(Debug, Clone)]
pub struct ChevronResult {
    pub omega_f: Vec<f64>,
    pub times: Vec<f64>,
    /// `grid[i][j]` is the target population at `omega_f[i]`, `times[j]`.
    pub grid: Vec<Vec<f64>>,
    /// Modulation frequency maximizing the transfer amplitude, rad/ns.
    pub center: f64,
    pub center_trace: Vec<f64>,
    pub fit: RateFit,
}

fn chevron_trace<F: Fn(f64) -> SystemModel>(build: &F, spec: &ChevronSpec, w: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let model = build(w);
    let psi0 = model.basis_state(&spec.initial, 0);
    let mut opts = EvolveOptions::for_model(&model, spec.n_t);
    if let Some(dt) = spec.dt {
        opts.dt = dt;
    }
    let traj = evolve_schrodinger(&model, &psi0, spec.t_final, opts)?;
    let p = traj.states.iter().map(|s| spec.target.evaluate(&model, s)).collect();
    Ok((traj.times, p))
}

/// Runs the grid (in parallel over ω_f), locates the centre and fits the rate there.
pub fn chevron_scan<F>(build: F, spec: &ChevronSpec) -> Result<ChevronResult>
where
    F: Fn(f64) -> SystemModel + Sync,
{
    if spec.omega_f.is_empty() {
        return Err(BusError::InvalidParameter("empty modulation-frequency grid".into()));
    }
    let rows: Vec<Result<(Vec<f64>, Vec<f64>)>> = spec.omega_f.par_iter().map(|&w| chevron_trace(&build, spec, w)).collect();
    let mut grid = Vec::with_capacity(rows.len());
    let mut times = Vec::new();
    for r in rows {
        let (t, p) = r?;
        times = t;
        grid.push(p);
    }
    let amp = |p: &[f64]| p.iter().cloned().fold(0.0, f64::max);
    let best = (0..grid.len()).max_by(|&a, &b| amp(&grid[a]).partial_cmp(&amp(&grid[b])).unwrap()).unwrap();
    let (mut center, mut trace) = (spec.omega_f[best], grid[best].clone());
    if spec.refine && spec.omega_f.len() >= 3 {
        let lo = spec.omega_f[best.saturating_sub(1)];
        let hi = spec.omega_f[(best + 1).min(spec.omega_f.len() - 1)];
        let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let tol = 1e-4 * (b - a).abs();
        let (w, _) = golden_max(|w| chevron_trace(&build, spec, w).map(|(_, p)| amp(&p)).unwrap_or(0.0), a, b, tol);
        let (_, p) = chevron_trace(&build, spec, w)?;
        if amp(&p) >= amp(&trace) {
            center = w;
            trace = p;
        }
    }
    let fit = fit_sin2_rate(&times, &trace)?;
    Ok(ChevronResult { omega_f: spec.omega_f.clone(), times, grid, center, center_trace: trace, fit })
}

/// One hop of a routing sequence: exchange between model positions `pair` for `duration` ns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingStep {
    pub pair: (usize, usize),
    pub duration: f64,
}

/// Populations of every qubit along a routing sequence.
#[derive(Debug, Clone)]
pub struct RoutingTimeline {
    pub times: Vec<f64>,
    /// `populations[k][j]`: excitation probability of qubit k at `times[j]`.
    pub populations: Vec<Vec<f64>>,
}

/// Programmed photon hopping between qubits.
///
/// During each step the modulation tone sits at the hop pair's detuning |ω_i − ω_j|.
/// With `crosstalk` every pair sees that tone with rate `g`, so off-resonant pairs
/// leak population; otherwise only the addressed pair is driven.
pub fn photon_routing_demo(
    qubits: &[QubitParams],
    g: f64,
    steps: &[RoutingStep],
    initial: usize,
    crosstalk: bool,
    samples_per_step: usize,
) -> Result<RoutingTimeline> {
    let nq = qubits.len();
    let mut drives = Vec::new();
    let mut t0 = 0.0;
    for s in steps {
        let (i, j) = s.pair;
        let w = (qubits[i].omega_q - qubits[j].omega_q).abs();
        let pairs: Vec<(usize, usize)> =
            if crosstalk { (0..nq).flat_map(|a| ((a + 1)..nq).map(move |b| (a, b))).collect() } else { vec![(i, j)] };
        for (a, b) in pairs {
            drives.push(ExchangeDrive { i: a, j: b, g, omega: w, t_on: t0, t_off: t0 + s.duration });
        }
        t0 += s.duration;
    }
    let model = SystemModel::qubits_only(qubits.to_vec(), 2, drives);
    let mut levels = vec![0; nq];
    levels[initial] = 1;
    let psi0 = model.basis_state(&levels, 0);
    if t0 == 0.0 {
        let populations = (0..nq).map(|k| vec![Observable::QubitExcited(k).evaluate(&model, &psi0)]).collect();
        return Ok(RoutingTimeline { times: vec![0.0], populations });
    }
    let mut opts = EvolveOptions::for_model(&model, samples_per_step.max(1) * steps.len().max(1));
    opts.dt = opts.dt.min(t0 / 1e4);
    let traj = evolve_schrodinger(&model, &psi0, t0, opts)?;
    let populations =
        (0..nq).map(|k| traj.states.iter().map(|s| Observable::QubitExcited(k).evaluate(&model, s)).collect()).collect();
    Ok(RoutingTimeline { times: traj.times, populations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{ghz, mhz, to_mhz};

    fn qubit(index: usize, f_ghz: f64, alpha_mhz: f64, g0_mhz: f64) -> QubitParams {
        QubitParams::new(index, ghz(f_ghz), mhz(alpha_mhz), 0.0, mhz(g0_mhz))
    }

    #[test]
    fn basis_indexing_round_trips() {
        let m = SystemModel::with_bus(
            vec![qubit(1, 5.0, 200.0, 5.0), qubit(2, 5.2, 210.0, 5.0)],
            3,
            Resonator { omega_r: ghz(6.0), n_max: 4 },
            vec![GTime::static_coupling(mhz(5.0)); 2],
        );
        assert_eq!(m.dimension(), 45);
        for j in 0..45 {
            let (q, n) = m.decode(j);
            assert_eq!(m.index(&q, n), j);
        }
        let e = m.bare_energy(m.index(&[2, 1], 3));
        assert!((e - (2.0 * ghz(5.0) - mhz(200.0) + ghz(5.2) + 3.0 * ghz(6.0))).abs() < 1e-12);
    }

    #[test]
    fn hilbert_bound_enforced() {
        let qs = (1..=10).map(|k| qubit(k, 5.0 + 0.05 * k as f64, 200.0, 5.0)).collect::<Vec<_>>();
        let m = SystemModel::with_bus(qs, 3, Resonator { omega_r: ghz(6.0), n_max: 5 }, vec![GTime::static_coupling(mhz(5.0)); 10]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn uncoupled_populations_constant_and_phases_advance() {
        let q = qubit(1, 5.0, 200.0, 5.0);
        let m = SystemModel::with_bus(vec![q], 2, Resonator { omega_r: ghz(6.0), n_max: 2 }, vec![GTime::static_coupling(0.0)]);
        let mut psi0 = vec![ZERO; m.dimension()];
        let a = m.index(&[1], 0);
        let b = m.index(&[0], 1);
        psi0[a] = Complex64::new(0.6, 0.0);
        psi0[b] = Complex64::new(0.8, 0.0);
        let opts = EvolveOptions { dt: 2e-4, frame: Frame::Lab, samples: 10 };
        let tr = evolve_schrodinger(&m, &psi0, 5.0, opts).unwrap();
        let last = tr.states.last().unwrap();
        assert!((last[a].norm_sqr() - 0.36).abs() < 1e-10);
        let phase = (last[a] / Complex64::new(0.6, 0.0)).arg();
        let expect = (-(ghz(5.0)) * 5.0).rem_euclid(2.0 * PI);
        let diff = (phase - expect).rem_euclid(2.0 * PI);
        assert!(diff.min(2.0 * PI - diff) < 1e-6);
    }

    #[test]
    fn vacuum_rabi_period() {
        // Resonant qubit and bus with static coupling: |1,0⟩ ↔ |0,1⟩ at rate g, period π/g.
        let g = mhz(10.0);
        let w = ghz(6.0);
        let q = QubitParams::new(1, w, mhz(200.0), 0.0, g);
        let m = SystemModel::with_bus(vec![q], 2, Resonator { omega_r: w, n_max: 3 }, vec![GTime::static_coupling(g)]);
        let psi0 = m.basis_state(&[1], 0);
        let period = PI / g;
        let tr = evolve_schrodinger(&m, &psi0, 1.5 * period, EvolveOptions::for_model(&m, 600)).unwrap();
        let p: Vec<f64> = tr.states.iter().map(|s| Observable::BusOccupied.evaluate(&m, s)).collect();
        let fit = fit_sin2_rate(&tr.times, &p).unwrap();
        let fitted_period = PI / fit.rate;
        assert!(((fitted_period - period) / period).abs() < 0.005, "{fitted_period} {period}");
    }

    #[test]
    fn frames_agree() {
        let q = qubit(1, 5.3, 220.0, 20.0);
        let m = SystemModel::with_bus(
            vec![q],
            3,
            Resonator { omega_r: ghz(5.5), n_max: 3 },
            vec![GTime { g0: mhz(20.0), g_bar0: 0.9, g_bar: 0.2, omega: mhz(200.0), phi: 0.3 }],
        );
        let psi0 = m.basis_state(&[1], 0);
        let t = 20.0;
        let wmax = m.max_frequency(Frame::Lab);
        let dt = 2.0 * PI / (wmax * 2000.0);
        let lab = evolve_schrodinger(&m, &psi0, t, EvolveOptions { dt, frame: Frame::Lab, samples: 4 }).unwrap();
        let int = evolve_schrodinger(&m, &psi0, t, EvolveOptions { dt, frame: Frame::Interaction, samples: 4 }).unwrap();
        for (a, b) in lab.states.iter().zip(&int.states) {
            for j in 0..m.dimension() {
                assert!((a[j].norm_sqr() - b[j].norm_sqr()).abs() < 1e-6);
            }
        }
        let conv = to_lab_frame(&m, int.states.last().unwrap(), t);
        let err: f64 = conv.iter().zip(lab.states.last().unwrap()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn step_bound_enforced() {
        let q = qubit(1, 5.3, 220.0, 20.0);
        let m = SystemModel::with_bus(vec![q], 2, Resonator { omega_r: ghz(6.0), n_max: 2 }, vec![GTime::static_coupling(mhz(20.0))]);
        let psi0 = m.basis_state(&[1], 0);
        let r = evolve_schrodinger(&m, &psi0, 1.0, EvolveOptions { dt: 0.01, frame: Frame::Interaction, samples: 1 });
        assert!(matches!(r, Err(BusError::StepTooLarge(_))));
    }

    #[test]
    fn ideal_exchange_full_transfer_time() {
        // Rate 0.9 MHz: full transfer at 1/(4·0.9 MHz) ≈ 277.8 ns.
        let g = mhz(0.9);
        let (q1, q2) = (qubit(1, 5.347, 217.0, 1.0), qubit(4, 5.432, 227.0, 1.0));
        let w = q2.omega_q - q1.omega_q;
        let m = SystemModel::qubits_only(vec![q1, q2], 2, vec![ExchangeDrive { i: 0, j: 1, g, omega: w, t_on: 0.0, t_off: 1e9 }]);
        let psi0 = m.basis_state(&[1, 0], 0);
        let tr = evolve_schrodinger(&m, &psi0, 600.0, EvolveOptions::for_model(&m, 600)).unwrap();
        let p: Vec<f64> = tr.states.iter().map(|s| Observable::QubitExcited(1).evaluate(&m, s)).collect();
        let fit = fit_sin2_rate(&tr.times, &p).unwrap();
        let t_full = PI / (2.0 * fit.rate);
        assert!((t_full - 1000.0 / (4.0 * 0.9)).abs() < 1.0, "{t_full}");
    }

    #[test]
    fn detuned_exchange_rabi_formula() {
        let g = mhz(0.9);
        let delta = mhz(1.2);
        let (q1, q2) = (qubit(1, 5.347, 217.0, 1.0), qubit(4, 5.432, 227.0, 1.0));
        let w = q2.omega_q - q1.omega_q + delta;
        let m = SystemModel::qubits_only(vec![q1, q2], 2, vec![ExchangeDrive { i: 0, j: 1, g, omega: w, t_on: 0.0, t_off: 1e9 }]);
        let psi0 = m.basis_state(&[1, 0], 0);
        let tr = evolve_schrodinger(&m, &psi0, 800.0, EvolveOptions::for_model(&m, 800)).unwrap();
        let p: Vec<f64> = tr.states.iter().map(|s| Observable::QubitExcited(1).evaluate(&m, s)).collect();
        let fit = fit_sin2_rate(&tr.times, &p).unwrap();
        let expect = (g * g + 0.25 * delta * delta).sqrt();
        assert!(((fit.rate - expect) / expect).abs() < 0.02, "{} {}", to_mhz(fit.rate), to_mhz(expect));
        assert!((fit.amplitude - g * g / expect.powi(2)).abs() < 0.02);
    }

    #[test]
    fn parametric_qubit_bus_rate() {
        // Qubit at ω_r + ω_f, g(t) = g₀[ḡ₀ + 2ḡ sin(ω_f t)]: exchange with the bus at ḡg₀.
        let (g0, gb, wf) = (mhz(2.5), 0.2, mhz(80.0));
        let wr = ghz(6.929);
        let q = QubitParams::new(1, wr + wf, mhz(217.0), 0.0, g0);
        let build = |w: f64| {
            SystemModel::with_bus(vec![q], 2, Resonator { omega_r: wr, n_max: 3 }, vec![GTime { g0, g_bar0: 0.93, g_bar: gb, omega: w, phi: 0.0 }])
        };
        let guess = build(wf).dressed_energy(&[1], 0) - build(wf).dressed_energy(&[0], 1);
        let spec = ChevronSpec {
            initial: vec![1],
            target: Observable::BusOccupied,
            omega_f: (0..5).map(|k| guess + mhz(0.1) * (k as f64 - 2.0)).collect(),
            t_final: 1.6 * PI / (2.0 * gb * g0),
            n_t: 300,
            dt: None,
            refine: true,
        };
        let res = chevron_scan(build, &spec).unwrap();
        let expect = gb * g0;
        assert!(((res.fit.rate - expect) / expect).abs() < 0.05, "{} {}", to_mhz(res.fit.rate), to_mhz(expect));
        assert!(res.grid.iter().flatten().all(|&p| (-1e-6..=1.0 + 1e-6).contains(&p)));
    }

    #[test]
    fn fock_cutoff_convergence() {
        let (g0, gb, wf) = (mhz(2.5), 0.2, mhz(80.0));
        let wr = ghz(6.929);
        let q = QubitParams::new(1, wr + wf, mhz(217.0), 0.0, g0);
        let rate = |n_max: usize| {
            let build = move |w: f64| {
                SystemModel::with_bus(vec![q], 2, Resonator { omega_r: wr, n_max }, vec![GTime { g0, g_bar0: 0.93, g_bar: gb, omega: w, phi: 0.0 }])
            };
            let guess = build(wf).dressed_energy(&[1], 0) - build(wf).dressed_energy(&[0], 1);
            let spec = ChevronSpec {
                initial: vec![1],
                target: Observable::BusOccupied,
                omega_f: vec![guess],
                t_final: 1.6 * PI / (2.0 * gb * g0),
                n_t: 300,
                dt: None,
                refine: false,
            };
            chevron_scan(build, &spec).unwrap().fit.rate
        };
        let (a, b) = (rate(3), rate(6));
        assert!(((a - b) / b).abs() < 0.005);
    }

    #[test]
    fn lindblad_matches_schrodinger_without_dissipation() {
        let (q1, q2) = (qubit(1, 5.347, 217.0, 1.0), qubit(4, 5.432, 227.0, 1.0));
        let w = q2.omega_q - q1.omega_q;
        let m = SystemModel::qubits_only(vec![q1, q2], 2, vec![ExchangeDrive { i: 0, j: 1, g: mhz(1.0), omega: w, t_on: 0.0, t_off: 1e9 }]);
        let mut psi0 = m.basis_state(&[1, 0], 0);
        psi0[m.index(&[0, 0], 0)] = Complex64::new(1.0, 0.0);
        let nrm = 2f64.sqrt();
        psi0.iter_mut().for_each(|c| *c /= nrm);
        let rho0 = DMatrix::from_fn(4, 4, |r, c| psi0[r] * psi0[c].conj());
        let opts = EvolveOptions::for_model(&m, 10);
        let sch = evolve_schrodinger(&m, &psi0, 200.0, opts).unwrap();
        let lin = evolve_lindblad(&m, &rho0, 200.0, opts).unwrap();
        for (psi, rho) in sch.states.iter().zip(&lin.states) {
            for r in 0..4 {
                for c in 0..4 {
                    assert!((psi[r] * psi[c].conj() - rho[(r, c)]).norm() < 1e-6);
                }
            }
        }
        assert!(lin.trace_drift < 1e-8);
    }

    #[test]
    fn t1_decay_is_exponential() {
        let mut q = qubit(1, 5.347, 217.0, 1.0);
        q.t1 = Some(10_000.0);
        let mut m = SystemModel::qubits_only(vec![q], 2, vec![]);
        m.dissipation = true;
        let rho0 = DMatrix::from_fn(2, 2, |r, c| if r == 1 && c == 1 { Complex64::new(1.0, 0.0) } else { ZERO });
        let lin = evolve_lindblad(&m, &rho0, 20_000.0, EvolveOptions { dt: 1.0, frame: Frame::Interaction, samples: 20 }).unwrap();
        // Log-linear fit of the excited population.
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        let n = lin.times.len() as f64;
        for (t, rho) in lin.times.iter().zip(&lin.states) {
            let y = rho[(1, 1)].re.ln();
            sx += t;
            sy += y;
            sxx += t * t;
            sxy += t * y;
        }
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!(((-1.0 / slope - 10_000.0) / 10_000.0).abs() < 0.01);
        assert!(lin.min_eigenvalue > -1e-8);
    }

    #[test]
    fn routing_single_hop_and_cycle() {
        let qs = vec![qubit(1, 5.347, 217.0, 1.0), qubit(4, 5.432, 227.0, 1.0), qubit(7, 5.610, 263.0, 1.0)];
        let g = mhz(0.5);
        let half = PI / (2.0 * g);
        let hop = |a, b| RoutingStep { pair: (a, b), duration: half };
        let one = photon_routing_demo(&qs, g, &[hop(0, 1)], 0, true, 50).unwrap();
        assert!(*one.populations[1].last().unwrap() > 0.95);
        let cycle = photon_routing_demo(&qs, g, &[hop(0, 1), hop(1, 2), hop(2, 0)], 0, true, 50).unwrap();
        assert!(*cycle.populations[0].last().unwrap() > 0.85);
        let none = photon_routing_demo(&qs, g, &[], 0, true, 50).unwrap();
        assert_eq!(none.populations[0], vec![1.0]);
    }

    #[test]
    fn rate_fit_rejects_noise() {
        let t: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let p: Vec<f64> = (0..100).map(|k| if k % 2 == 0 { 0.2 } else { 0.7 }).collect();
        assert!(matches!(fit_sin2_rate(&t, &p), Err(BusError::FitPoor { .. })));
    }
}
