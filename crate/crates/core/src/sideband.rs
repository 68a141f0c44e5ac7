//! Sideband theory of the flux-modulated bus.
//!
//! Periodic boundary-flux modulation f(t) = F + δf·sin(ω_f t + ψ) mixes the Fourier
//! components φ(ω_r + p ω_f) of the bus field. The boundary conditions become a linear
//! system in the truncated sideband vector (p = −N..N). This module builds the boundary
//! matrices, applies the diagonal rotation that decouples spatially symmetric and
//! antisymmetric solutions, locates the driven resonance, extracts and normalizes the
//! sideband amplitudes, and converts them into parametric qubit-bus couplings.
//!
//! The boundary SQUIDs are treated as symmetric in this module (mixing coefficients
//! e^{iF} + (−1)^{m−p} e^{−iF} times Bessel functions); `asym` is ignored here.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::circuit::{dc_mode_frequencies, BusCircuitParams, FluxBias};
use crate::error::{BusError, Result};
use crate::numerics::{brent_root, golden_min};
use crate::special::bessel_j;


/// Static bias plus periodic boundary-flux drive, common to both boundaries
/// up to the relative phase `psi_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationDrive {
    /// Static reduced flux F, radians.
    pub f_static: f64,
    /// Modulation amplitude δf, radians.
    pub delta_f: f64,
    /// Modulation angular frequency ω_f, rad/ns.
    pub omega_f: f64,
    /// Relative drive phase ψ₀ between the boundaries, radians in (−π, π].
    pub psi_0: f64,
}

impl ModulationDrive {
    /// Validates amplitudes and wraps `psi_0` into (−π, π].
    pub fn new(f_static: f64, delta_f: f64, omega_f: f64, psi_0: f64) -> Result<Self> {
        if !(delta_f.is_finite() && delta_f >= 0.0) {
            return Err(BusError::InvalidParameter(format!("delta_f must be >= 0, got {delta_f}")));
        }
        if !(omega_f.is_finite() && omega_f > 0.0) {
            return Err(BusError::InvalidParameter(format!("omega_f must be > 0, got {omega_f}")));
        }
        if !(f_static.is_finite() && psi_0.is_finite()) {
            return Err(BusError::InvalidParameter("flux and phase must be finite".into()));
        }
        let mut psi = psi_0 - 2.0 * PI * (psi_0 / (2.0 * PI)).round();
        if psi <= -PI {
            psi += 2.0 * PI;
        }
        Ok(Self { f_static, delta_f, omega_f, psi_0: psi })
    }

    /// In-phase drive (ψ₀ = 0).
    pub fn in_phase(f_static: f64, delta_f: f64, omega_f: f64) -> Result<Self> {
        Self::new(f_static, delta_f, omega_f, 0.0)
    }
}

/// Spatial parity of a bus solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    /// Φ̃₋ = Φ̃₊; null space of Σ + Σ*.
    Symmetric,
    /// Φ̃₋ = −Φ̃₊; null space of Σ − Σ*.
    Antisymmetric,
}

impl Parity {
    /// Branch of bus mode `n` (1-based): odd modes are symmetric, even modes antisymmetric.
    pub fn of_mode(n: usize) -> Self {
        if n % 2 == 1 {
            Parity::Symmetric
        } else {
            Parity::Antisymmetric
        }
    }
}

/// Propagation direction (s) or boundary (z) label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }
}

/// Driven resonance with its transformed sideband amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct SidebandSolution {
    /// Driven resonance angular frequency, rad/ns.
    pub omega_r: f64,
    /// Modulation frequency the solution was computed for, rad/ns.
    pub omega_f: f64,
    /// Transformed amplitudes Φ̃ indexed m = −N..N (entry `m + N`).
    pub amplitudes: Vec<Complex64>,
    pub parity: Parity,
    /// Sidebands per side.
    pub truncation: usize,
    /// Scale factor applied by [`normalize_energy`] (1 for a raw solution).
    pub norm_energy: f64,
    /// Undriven mode frequency used as the normalization reference, rad/ns (0 if raw).
    pub omega_in: f64,
}

impl SidebandSolution {
    /// Amplitude of sideband order `m`.
    pub fn amplitude(&self, m: i64) -> Complex64 {
        self.amplitudes[(m + self.truncation as i64) as usize]
    }

    /// Largest modulus among the non-central entries.
    pub fn max_sideband(&self) -> f64 {
        let n = self.truncation;
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != n)
            .map(|(_, a)| a.norm())
            .fold(0.0, f64::max)
    }
}

fn orders(n: usize) -> impl Iterator<Item = i64> + Clone {
    let n = n as i64;
    -n..=n
}

/// Boundary matrix M_{s,z}(ω) of size (2N+1)², entry (m, p):
///
/// [(−α ω_p² + i s z η ℓ k_p) δ_mp + (e^{iF} + (−1)^{m−p} e^{−iF}) J_{p−m}(δf) e^{i z ψ₀ (p−m)/2}] · e^{i s z ω_p ℓ / 2v}
///
/// with ω_p = ω + p ω_f and k_p = ω_p / v.
pub fn build_m_submatrix(
    params: &BusCircuitParams,
    drive: &ModulationDrive,
    omega_probe: f64,
    s: Side,
    z: Side,
    n: usize,
) -> DMatrix<Complex64> {
    let dim = 2 * n + 1;
    let alpha = params.alpha();
    let eta = params.eta();
    let l = params.length;
    let v = params.v_ns();
    let sz = s.sign() * z.sign();
    let (ef, emf) = (Complex64::from_polar(1.0, drive.f_static), Complex64::from_polar(1.0, -drive.f_static));
    let mut m_out = DMatrix::<Complex64>::zeros(dim, dim);
    for (row, m) in orders(n).enumerate() {
        for (col, p) in orders(n).enumerate() {
            let wp = omega_probe + p as f64 * drive.omega_f;
            let kp = wp / v;
            let q = p - m;
            let parity = if q % 2 == 0 { 1.0 } else { -1.0 };
            let mut val = (ef + emf * parity)
                * bessel_j(q as i32, drive.delta_f)
                * Complex64::from_polar(1.0, z.sign() * drive.psi_0 * 0.5 * q as f64);
            if m == p {
                val += Complex64::new(-alpha * wp * wp, sz * eta * l * kp);
            }
            m_out[(row, col)] = val * Complex64::from_polar(1.0, sz * wp * l / (2.0 * v));
        }
    }
    m_out
}

/// Diagonal matrix Λ({x_n}) for n = −N..N.
pub fn lambda_diag(n: usize, f: impl Fn(i64) -> Complex64) -> DMatrix<Complex64> {
    let d: Vec<Complex64> = orders(n).map(f).collect();
    DMatrix::from_diagonal(&DVector::from_vec(d))
}

/// Σ = Λ({e^{−iπn/2}}) M₊₊ Λ({e^{iπn/2}}).
pub fn build_sigma(params: &BusCircuitParams, drive: &ModulationDrive, omega_probe: f64, n: usize) -> DMatrix<Complex64> {
    let m = build_m_submatrix(params, drive, omega_probe, Side::Plus, Side::Plus, n);
    let mut s = m;
    for (row, mi) in orders(n).enumerate() {
        for (col, p) in orders(n).enumerate() {
            s[(row, col)] *= Complex64::from_polar(1.0, 0.5 * PI * (p - mi) as f64);
        }
    }
    s
}

/// Real matrix whose null space holds the solutions of the given parity:
/// Re Σ (symmetric, Σ+Σ* = 2 Re Σ) or Im Σ (antisymmetric, Σ−Σ* = 2i Im Σ).
pub fn parity_block(params: &BusCircuitParams, drive: &ModulationDrive, omega_probe: f64, parity: Parity, n: usize) -> DMatrix<f64> {
    let s = build_sigma(params, drive, omega_probe, n);
    match parity {
        Parity::Symmetric => s.map(|c| c.re),
        Parity::Antisymmetric => s.map(|c| c.im),
    }
}

/// Block-diagonal transformed system diag(Σ+Σ*, Σ−Σ*).
pub fn transformed_system(params: &BusCircuitParams, drive: &ModulationDrive, omega_probe: f64, n: usize) -> DMatrix<Complex64> {
    let s = build_sigma(params, drive, omega_probe, n);
    let dim = 2 * n + 1;
    let sc = s.map(|c| c.conj());
    let mut out = DMatrix::<Complex64>::zeros(2 * dim, 2 * dim);
    out.view_mut((0, 0), (dim, dim)).copy_from(&(&s + &sc));
    out.view_mut((dim, dim), (dim, dim)).copy_from(&(&s - &sc));
    out
}

/// Untransformed 2(2N+1) system [[M₊₊, M₋₊], [M₊₋, M₋₋]] acting on [Φ₊; Φ₋].
pub fn full_system(params: &BusCircuitParams, drive: &ModulationDrive, omega_probe: f64, n: usize) -> DMatrix<Complex64> {
    let dim = 2 * n + 1;
    let mut out = DMatrix::<Complex64>::zeros(2 * dim, 2 * dim);
    let blocks = [
        ((0, 0), Side::Plus, Side::Plus),
        ((0, dim), Side::Minus, Side::Plus),
        ((dim, 0), Side::Plus, Side::Minus),
        ((dim, dim), Side::Minus, Side::Minus),
    ];
    for (pos, s, z) in blocks {
        let b = build_m_submatrix(params, drive, omega_probe, s, z, n);
        out.view_mut(pos, (dim, dim)).copy_from(&b);
    }
    out
}

/// Diagonal transpose-symmetrizing scale for a parity block:
/// 1/cos(ω_p ℓ/2v) (symmetric) or 1/sin(ω_p ℓ/2v) (antisymmetric).
///
/// `block · diag(q)` is symmetric, so Φ̃ = diag(q) Φ̃' relates the two bases.
pub fn transpose_symmetrizer(params: &BusCircuitParams, drive: &ModulationDrive, omega_probe: f64, parity: Parity, n: usize) -> Vec<f64> {
    let l = params.length;
    let v = params.v_ns();
    orders(n)
        .map(|p| {
            let th = (omega_probe + p as f64 * drive.omega_f) * l / (2.0 * v);
            match parity {
                Parity::Symmetric => 1.0 / th.cos(),
                Parity::Antisymmetric => 1.0 / th.sin(),
            }
        })
        .collect()
}

/// Ascending singular values and the right singular vectors (columns of V) of a real matrix.
fn real_svd(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let sv: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::<f64>::zeros(a.ncols(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        for r in 0..a.ncols() {
            v[(r, c)] = vt[(i, r)];
        }
    }
    (sv, v)
}

fn complex_svd(a: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested V^H");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[i].partial_cmp(&svd.singular_values[j]).unwrap());
    let sv: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::<Complex64>::zeros(a.ncols(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        for r in 0..a.ncols() {
            v[(r, c)] = vt[(i, r)].conj();
        }
    }
    (sv, v)
}

/// sign(det B)·σ_min(B)/σ_max(B) for the parity block B; continuous in ω with a
/// sign change at each null frequency.
pub fn signed_residual(params: &BusCircuitParams, drive: &ModulationDrive, omega: f64, parity: Parity, n: usize) -> f64 {
    let b = parity_block(params, drive, omega, parity, n);
    let (sv, _) = real_svd(&b);
    let det = b.clone().lu().determinant();
    let rel = sv[0] / sv[sv.len() - 1];
    if det < 0.0 {
        -rel
    } else {
        rel
    }
}

/// Relative singular-value threshold for accepting a null frequency.
pub const NULL_THRESHOLD: f64 = 1e-8;

/// Parameters used by the sideband module: the SQUIDs are taken as symmetric.
pub fn symmetric_squid(params: &BusCircuitParams) -> BusCircuitParams {
    BusCircuitParams { asym: 0.0, ..*params }
}

/// Checks that the bus modes neighboring `omega_guess` are not connected by an
/// integer number of modulation quanta.
pub fn check_sideband_collision(params: &BusCircuitParams, drive: &ModulationDrive, omega_guess: f64) -> Result<()> {
    let p = symmetric_squid(params);
    let bias = FluxBias::symmetric(drive.f_static)?;
    let n_est = (omega_guess / p.ideal_fsr()).round().max(1.0) as usize;
    let spec = dc_mode_frequencies(&p, &bias, n_est + 3)?;
    let w = spec.frequencies();
    let (i0, _) = w
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, x)| if (x - omega_guess).abs() < acc.1 { (i, (x - omega_guess).abs()) } else { acc });
    for j in [i0.wrapping_sub(1), i0 + 1] {
        if let Some(&other) = w.get(j) {
            let gap = (other - w[i0]).abs();
            let q = (gap / drive.omega_f).round();
            if q >= 1.0 && (gap - q * drive.omega_f).abs() < 1e-6 * gap {
                return Err(BusError::DegenerateSidebandCollision { a: w[i0], b: other, order: q as i64 });
            }
        }
    }
    Ok(())
}

/// Driven resonance frequency of the given parity near `omega_guess`.
///
/// The signed residual of the real parity block is scanned outward from the guess in
/// steps of ω_f/40 (bounded by ±FSR/2). The first bracketed sign change whose null
/// vector is dominated by the central band is refined with Brent's method. Truncation
/// produces relabeled copies of the same mode near ω_r ± p ω_f; the central-band test
/// rejects those.
pub fn find_driven_resonance(
    params: &BusCircuitParams,
    drive: &ModulationDrive,
    omega_guess: f64,
    parity: Parity,
    n: usize,
) -> Result<f64> {
    if drive.psi_0 != 0.0 {
        return Err(BusError::InvalidParameter(
            "symmetry reduction requires psi_0 = 0; use find_resonance_untransformed".into(),
        ));
    }
    if n < 1 {
        return Err(BusError::InvalidParameter("truncation must be at least 1".into()));
    }
    let p = symmetric_squid(params);
    check_sideband_collision(&p, drive, omega_guess)?;
    let half_window = 0.5 * p.ideal_fsr();
    let h = (drive.omega_f / 40.0).min(half_window / 20.0);
    let f = |w: f64| signed_residual(&p, drive, w, parity, n);
    let f0 = f(omega_guess);
    if f0 == 0.0 {
        return Ok(omega_guess);
    }
    let mut left = (omega_guess, f0);
    let mut right = (omega_guess, f0);
    let steps = (half_window / h).ceil() as usize;
    for _ in 0..steps {
        for side in [1.0, -1.0] {
            let (a, fa) = if side > 0.0 { right } else { left };
            let b = a + side * h;
            let fb = f(b);
            if fa.signum() != fb.signum() {
                let (lo, hi) = if side > 0.0 { (a, b) } else { (b, a) };
                let root = brent_root(f, lo, hi, 1e-13 * omega_guess).expect("bracket has a sign change");
                if accept_root(&p, drive, root, parity, n) {
                    return Ok(root);
                }
            }
            if side > 0.0 {
                right = (b, fb);
            } else {
                left = (b, fb);
            }
        }
    }
    Err(BusError::NoResonanceInWindow { lo: omega_guess - half_window, hi: omega_guess + half_window })
}

fn accept_root(p: &BusCircuitParams, drive: &ModulationDrive, w: f64, parity: Parity, n: usize) -> bool {
    let b = parity_block(p, drive, w, parity, n);
    let (sv, v) = real_svd(&b);
    if sv[0] > NULL_THRESHOLD * sv[sv.len() - 1] {
        return false;
    }
    let col = v.column(0);
    let centre = col[n].abs();
    col.iter().enumerate().all(|(j, x)| j == n || x.abs() < centre)
}

/// Right singular vector of the parity block with the smallest singular value, as a raw
/// (unit 2-norm) solution with the central band real and positive.
pub fn sideband_amplitudes(
    params: &BusCircuitParams,
    drive: &ModulationDrive,
    omega_r: f64,
    parity: Parity,
    n: usize,
) -> Result<SidebandSolution> {
    let p = symmetric_squid(params);
    let b = parity_block(&p, drive, omega_r, parity, n);
    let (sv, v) = real_svd(&b);
    let gap = if sv[0] > 0.0 { sv[1] / sv[0] } else { f64::INFINITY };
    if gap <= 1e3 {
        return Err(BusError::NullSpaceDegenerate { gap });
    }
    let mut col: Vec<f64> = v.column(0).iter().copied().collect();
    if col[n] < 0.0 {
        col.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(SidebandSolution {
        omega_r,
        omega_f: drive.omega_f,
        amplitudes: col.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
        parity,
        truncation: n,
        norm_energy: 1.0,
        omega_in: 0.0,
    })
}

/// Σ_m ω_m² |φ̃_m|² [1 + (−1)^m s sin(ω_m ℓ/v)], with s = +1 for antisymmetric and
/// s = −1 for symmetric solutions (stored electric energy up to C₀ℓ/4).
pub fn sideband_energy(params: &BusCircuitParams, omega_r: f64, omega_f: f64, amplitudes: &[Complex64], parity: Parity) -> f64 {
    let n = (amplitudes.len() - 1) / 2;
    let s = match parity {
        Parity::Antisymmetric => 1.0,
        Parity::Symmetric => -1.0,
    };
    let l = params.length;
    let v = params.v_ns();
    orders(n)
        .zip(amplitudes)
        .map(|(m, a)| {
            let wm = omega_r + m as f64 * omega_f;
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            wm * wm * a.norm_sqr() * (1.0 + sign * s * (wm * l / v).sin())
        })
        .sum()
}

/// Rescales the amplitudes so the driven electric energy equals that of the undriven
/// mode at `omega_0r` with unit central amplitude (φ̃_in,0 = 1).
pub fn normalize_energy(solution: &SidebandSolution, params: &BusCircuitParams, omega_0r: f64) -> SidebandSolution {
    let raw = sideband_energy(params, solution.omega_r, solution.omega_f, &solution.amplitudes, solution.parity);
    let target = sideband_energy(params, omega_0r, solution.omega_f, &[Complex64::new(1.0, 0.0)], solution.parity);
    let scale = (target / raw).sqrt();
    SidebandSolution {
        amplitudes: solution.amplitudes.iter().map(|a| a * scale).collect(),
        norm_energy: scale,
        omega_in: omega_0r,
        ..solution.clone()
    }
}

/// Parametric couplings of one qubit derived from a normalized solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParametricCoupling {
    /// Normalized parametric coupling ḡ_i = g_par,i / g₀ᵢ.
    pub g_bar: f64,
    /// Parametric coupling g_par,i = ḡ_i g₀ᵢ, rad/ns.
    pub g_par: f64,
    /// Renormalized static coupling ḡ₀ᵢ = (ω_r/ω_in) φ̃(ω_r)/φ̃_in.
    pub g_bar0: f64,
}

/// ḡ_i = ½ (−1)^{i+1} (Φ̃⁽¹⁾ − Φ̃⁽⁻¹⁾)/φ̃_in,0 · cos(ω_f x_i / v), g_par = ḡ_i g₀,
/// and ḡ₀ᵢ from the central band.
pub fn parametric_coupling(
    solution: &SidebandSolution,
    params: &BusCircuitParams,
    qubit_index: usize,
    x: f64,
    g0: f64,
) -> ParametricCoupling {
    let sign = if qubit_index % 2 == 1 { 1.0 } else { -1.0 };
    let diff = solution.amplitude(1) - solution.amplitude(-1);
    let spatial = (solution.omega_f * x / params.v_ns()).cos();
    let g_bar = 0.5 * sign * diff.re * spatial;
    let omega_in = if solution.omega_in > 0.0 { solution.omega_in } else { solution.omega_r };
    let g_bar0 = solution.omega_r / omega_in * solution.amplitude(0).re;
    ParametricCoupling { g_bar, g_par: g_bar * g0, g_bar0 }
}

/// Full pipeline for one drive: driven resonance of the mode nearest `omega_guess`,
/// raw amplitudes and energy normalization against the undriven mode.
pub fn solve_sidebands(
    params: &BusCircuitParams,
    drive: &ModulationDrive,
    omega_guess: f64,
    parity: Parity,
    n: usize,
) -> Result<SidebandSolution> {
    let undriven = ModulationDrive { delta_f: 0.0, ..*drive };
    let omega_0r = find_driven_resonance(params, &undriven, omega_guess, parity, n)?;
    let omega_r = find_driven_resonance(params, drive, omega_0r, parity, n)?;
    let raw = sideband_amplitudes(params, drive, omega_r, parity, n)?;
    Ok(normalize_energy(&raw, params, omega_0r))
}

/// DC frequency of mode `mode` (1-based) for the symmetric-SQUID model at static flux `f`.
pub fn undriven_mode(params: &BusCircuitParams, f: f64, mode: usize) -> Result<f64> {
    let p = symmetric_squid(params);
    let spec = dc_mode_frequencies(&p, &FluxBias::symmetric(f)?, mode)?;
    Ok(spec.frequency(mode).expect("mode present"))
}

/// Result of the untransformed null-frequency search.
#[derive(Debug, Clone)]
pub struct UntransformedNull {
    pub omega: f64,
    /// Relative smallest singular value at `omega`.
    pub residual: f64,
    /// Null vector [Φ₊; Φ₋] of length 2(2N+1).
    pub vector: Vec<Complex64>,
}

/// Null frequency of the untransformed 2(2N+1) system near `omega_guess`, for any ψ₀.
///
/// σ_min of the full complex system is sampled on a grid over ±ω_f/2 and the deepest
/// minimum is refined by golden-section search on the V-shaped profile.
pub fn find_resonance_untransformed(
    params: &BusCircuitParams,
    drive: &ModulationDrive,
    omega_guess: f64,
    n: usize,
) -> Result<UntransformedNull> {
    let p = symmetric_squid(params);
    let rel_sigma = |w: f64| {
        let (sv, _) = complex_svd(&full_system(&p, drive, w, n));
        sv[0] / sv[sv.len() - 1]
    };
    let half = 0.5 * drive.omega_f.min(p.ideal_fsr());
    let grid = 200;
    let h = 2.0 * half / grid as f64;
    let mut best = (omega_guess, f64::INFINITY);
    for j in 0..=grid {
        let w = omega_guess - half + j as f64 * h;
        let s = rel_sigma(w);
        if s < best.1 {
            best = (w, s);
        }
    }
    let (w, s) = golden_min(rel_sigma, best.0 - h, best.0 + h, 1e-14 * omega_guess);
    if s > NULL_THRESHOLD {
        return Err(BusError::NoResonanceInWindow { lo: omega_guess - half, hi: omega_guess + half });
    }
    let (_, v) = complex_svd(&full_system(&p, drive, w, n));
    Ok(UntransformedNull { omega: w, residual: s, vector: v.column(0).iter().copied().collect() })
}

/// Maps an untransformed null vector [Φ₊; Φ₋] to the transformed amplitudes of the
/// given parity, Φ̃_± = Λ({e^{−iπn/2}}) (Φ₊ ± Φ₋)/√2, phase-fixed with the central band
/// real and positive and scaled to unit 2-norm.
pub fn transformed_from_full(vector: &[Complex64], parity: Parity) -> Vec<Complex64> {
    let dim = vector.len() / 2;
    let n = (dim - 1) / 2;
    let sign = match parity {
        Parity::Symmetric => 1.0,
        Parity::Antisymmetric => -1.0,
    };
    let mut out: Vec<Complex64> = orders(n)
        .enumerate()
        .map(|(j, m)| (vector[j] + sign * vector[dim + j]) * Complex64::from_polar(FRAC_1_SQRT_2, -0.5 * PI * m as f64))
        .collect();
    let norm = out.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let phase = out[n] / out[n].norm();
    out.iter_mut().for_each(|c| *c = *c / phase / norm);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{ghz, khz, mhz, to_khz};
    use proptest::prelude::*;

    fn dev() -> BusCircuitParams {
        symmetric_squid(&BusCircuitParams::fitted_device())
    }

    fn mode8(f: f64) -> f64 {
        undriven_mode(&dev(), f, 8).unwrap()
    }

    fn lam(n: usize, f: impl Fn(i64) -> f64) -> DMatrix<Complex64> {
        lambda_diag(n, |k| Complex64::from_polar(1.0, f(k)))
    }

    #[test]
    fn mode_parity_alternates() {
        let p = dev();
        let f = PI / 4.0;
        for mode in 5..=9 {
            let w = undriven_mode(&p, f, mode).unwrap();
            let d = ModulationDrive::in_phase(f, 0.0, mhz(80.0)).unwrap();
            let own = find_driven_resonance(&p, &d, w, Parity::of_mode(mode), 3).unwrap();
            assert!((own - w).abs() < khz(1.0));
            let other = if Parity::of_mode(mode) == Parity::Symmetric { Parity::Antisymmetric } else { Parity::Symmetric };
            assert!(find_driven_resonance(&p, &d, w, other, 3).is_err());
        }
    }

    #[test]
    fn undriven_matrix_is_diagonal() {
        let d = ModulationDrive::in_phase(0.4, 0.0, mhz(80.0)).unwrap();
        let m = build_m_submatrix(&dev(), &d, ghz(6.9), Side::Plus, Side::Minus, 3);
        for r in 0..7 {
            for c in 0..7 {
                if r != c {
                    assert_eq!(m[(r, c)], Complex64::new(0.0, 0.0));
                }
            }
        }
        let s = build_sigma(&dev(), &d, ghz(6.9), 3);
        assert!(s.iter().enumerate().all(|(j, x)| j % 8 == 0 || x.norm() == 0.0));
    }

    #[test]
    fn centre_entry_hand_evaluation() {
        let p = dev();
        let df = 0.1 * PI;
        let d = ModulationDrive::in_phase(0.0, df, mhz(70.0)).unwrap();
        let w = ghz(6.5);
        for (s, z) in [(Side::Plus, Side::Plus), (Side::Plus, Side::Minus), (Side::Minus, Side::Minus)] {
            let m = build_m_submatrix(&p, &d, w, s, z, 1);
            let sz = s.sign() * z.sign();
            let k = w / p.v_ns();
            let expect = (Complex64::new(-p.alpha() * w * w, sz * p.eta() * p.length * k) + 2.0 * bessel_j(0, df))
                * Complex64::from_polar(1.0, sz * w * p.length / (2.0 * p.v_ns()));
            assert!((m[(1, 1)] - expect).norm() < 1e-12 * expect.norm());
        }
    }

    #[test]
    fn undriven_resonance_matches_dc_mode() {
        let p = dev();
        let f = PI / 4.0;
        let w8 = mode8(f);
        let d = ModulationDrive::in_phase(f, 0.0, mhz(80.0)).unwrap();
        let wr = find_driven_resonance(&p, &d, w8 + mhz(20.0), Parity::Antisymmetric, 3).unwrap();
        assert!(to_khz((wr - w8).abs()) < 1.0);
        let sol = sideband_amplitudes(&p, &d, wr, Parity::Antisymmetric, 3).unwrap();
        assert!((sol.amplitude(0).norm() - 1.0).abs() < 1e-12);
        assert!(sol.max_sideband() < 1e-12);
        let normed = normalize_energy(&sol, &p, w8);
        assert!((normed.norm_energy - 1.0).abs() < 1e-9);
    }

    #[test]
    fn driven_shift_is_small() {
        let p = dev();
        let f = PI / 4.0;
        let w8 = mode8(f);
        let d = ModulationDrive::in_phase(f, 0.104 * PI, mhz(80.0)).unwrap();
        let wr = find_driven_resonance(&p, &d, w8, Parity::Antisymmetric, 3).unwrap();
        // Independent prototype (dense determinant scan): −8.2 MHz.
        let shift = crate::units::to_mhz(wr - w8);
        assert!((shift + 8.2).abs() < 0.1, "{shift}");
    }

    #[test]
    fn frozen_prototype_values() {
        // Independent dense-scan prototype with library Bessel functions, F = π/4, mode 8, ω_f = 2π×80 MHz.
        let p = dev();
        let f = PI / 4.0;
        let w8 = mode8(f);
        assert!((crate::units::to_ghz(w8) - 6.928912075).abs() < 1e-8);
        let cases = [(3, 0.104, -8213.21, -0.2059650, 0.9345277), (7, 0.104, -8220.08, -0.2060578, 0.9344248), (7, 0.05, -1709.35, -0.0907723, 0.9885112)];
        for (n, df, shift_khz, gbar, gbar0) in cases {
            let d = ModulationDrive::in_phase(f, df * PI, mhz(80.0)).unwrap();
            let sol = solve_sidebands(&p, &d, w8, Parity::Antisymmetric, n).unwrap();
            let c = parametric_coupling(&sol, &p, 1, 0.0, 1.0);
            assert!((to_khz(sol.omega_r - w8) - shift_khz).abs() < 0.05, "{n} {df}");
            assert!((c.g_bar - gbar).abs() < 1e-6, "{} {gbar}", c.g_bar);
            assert!((c.g_bar0 - gbar0).abs() < 1e-6, "{} {gbar0}", c.g_bar0);
        }
    }

    #[test]
    fn truncation_self_convergence_moderate_drive() {
        let p = dev();
        let f = PI / 4.0;
        let w8 = mode8(f);
        let d = ModulationDrive::in_phase(f, 0.1 * PI, mhz(80.0)).unwrap();
        let a = find_driven_resonance(&p, &d, w8, Parity::Antisymmetric, 3).unwrap();
        let b = find_driven_resonance(&p, &d, w8, Parity::Antisymmetric, 7).unwrap();
        assert!((a - b).abs() < khz(10.0), "{}", to_khz(a - b));
    }

    #[test]
    fn submatrix_relations_hold() {
        let p = dev();
        let n = 3;
        let d = ModulationDrive::new(0.37, 0.21, mhz(95.0), 0.8).unwrap();
        let w = ghz(6.7);
        let mpp = build_m_submatrix(&p, &d, w, Side::Plus, Side::Plus, n);
        let mpp_c = mpp.map(|c| c.conj());
        let check = |s, z, phase: &dyn Fn(i64) -> f64, conj: bool| {
            let l = lam(n, phase);
            let base = if conj { &mpp_c } else { &mpp };
            let rhs = &l * base * l.adjoint();
            let lhs = build_m_submatrix(&p, &d, w, s, z, n);
            let err = (&lhs - &rhs).iter().map(|c| c.norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "{err}");
        };
        let psi = d.psi_0;
        check(Side::Minus, Side::Plus, &|k| (PI - psi) * k as f64, true);
        check(Side::Plus, Side::Minus, &|k| PI * k as f64, true);
        check(Side::Minus, Side::Minus, &|k| psi * k as f64, false);
    }

    #[test]
    fn parity_blocks_are_transpose_symmetric_after_scaling() {
        let p = dev();
        let d = ModulationDrive::in_phase(0.6, 0.3, mhz(110.0)).unwrap();
        let w = ghz(6.93);
        for parity in [Parity::Symmetric, Parity::Antisymmetric] {
            let b = parity_block(&p, &d, w, parity, 3);
            let q = transpose_symmetrizer(&p, &d, w, parity, 3);
            let bq = DMatrix::from_fn(7, 7, |r, c| b[(r, c)] * q[c]);
            let scale = bq.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let asym = (&bq - bq.transpose()).iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(asym < 1e-10 * scale, "{asym}");
        }
    }

    #[test]
    fn transformed_and_untransformed_agree() {
        let p = dev();
        let f = PI / 4.0;
        let w8 = mode8(f);
        let d = ModulationDrive::in_phase(f, 0.1 * PI, mhz(90.0)).unwrap();
        let wr = find_driven_resonance(&p, &d, w8, Parity::Antisymmetric, 3).unwrap();
        let full = find_resonance_untransformed(&p, &d, w8, 3).unwrap();
        assert!((full.omega - wr).abs() < 1e-9 * wr);
        let sol = sideband_amplitudes(&p, &d, wr, Parity::Antisymmetric, 3).unwrap();
        let t = transformed_from_full(&full.vector, Parity::Antisymmetric);
        for (a, b) in sol.amplitudes.iter().zip(&t) {
            assert!((a - b).norm() < 1e-7, "{a} {b}");
        }
    }

    #[test]
    fn energy_normalization_properties() {
        let p = dev();
        let f = PI / 4.0;
        let w8 = mode8(f);
        let d = ModulationDrive::in_phase(f, 0.12 * PI, mhz(60.0)).unwrap();
        let wr = find_driven_resonance(&p, &d, w8, Parity::Antisymmetric, 3).unwrap();
        let raw = sideband_amplitudes(&p, &d, wr, Parity::Antisymmetric, 3).unwrap();
        let a = normalize_energy(&raw, &p, w8);
        let e = sideband_energy(&p, wr, d.omega_f, &a.amplitudes, a.parity);
        let target = sideband_energy(&p, w8, d.omega_f, &[Complex64::new(1.0, 0.0)], a.parity);
        assert!(((e - target) / target).abs() < 1e-10);
        let mut doubled = raw.clone();
        doubled.amplitudes.iter_mut().for_each(|c| *c *= 2.0);
        let b = normalize_energy(&doubled, &p, w8);
        for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn antisymmetric_low_order_sidebands() {
        let p = dev();
        let f = PI / 4.0;
        let w8 = mode8(f);
        let d = ModulationDrive::in_phase(f, 0.08 * PI, mhz(80.0)).unwrap();
        let n = 3;
        let full = find_resonance_untransformed(&p, &d, w8, n).unwrap();
        let dim = 2 * n + 1;
        for m in [-1i64, 0, 1] {
            let j = (m + n as i64) as usize;
            let (pp, pm) = (full.vector[j], full.vector[dim + j]);
            assert!((pp + pm).norm() < 1e-9 * pp.norm().max(1e-300), "m={m}");
        }
    }

    #[test]
    fn first_sideband_linear_in_small_drive() {
        let p = dev();
        let f = PI / 4.0;
        let w8 = mode8(f);
        let wf = mhz(80.0);
        let ratio = |df: f64| {
            let d = ModulationDrive::in_phase(f, df, wf).unwrap();
            let wr = find_driven_resonance(&p, &d, w8, Parity::Antisymmetric, 3).unwrap();
            let s = sideband_amplitudes(&p, &d, wr, Parity::Antisymmetric, 3).unwrap();
            (s.amplitude(1) / s.amplitude(0)).norm()
        };
        // First-order perturbation: the ±1 bands are driven by the J₁(δf) coupling alone.
        let first_order = |df: f64| {
            let d = ModulationDrive::in_phase(f, df, wf).unwrap();
            let b = parity_block(&p, &d, w8, Parity::Antisymmetric, 3);
            (b[(4, 3)] / b[(4, 4)]).abs()
        };
        let r1 = ratio(0.01 * PI);
        let r2 = ratio(0.03 * PI);
        assert!(((r2 / r1) - 3.0).abs() < 0.3, "{}", r2 / r1);
        let pt = first_order(0.02 * PI);
        let r = ratio(0.02 * PI);
        assert!(((r - pt) / pt).abs() < 0.1, "{r} {pt}");
    }

    #[test]
    fn coupling_position_independent_at_low_modulation() {
        let p = dev();
        let f = PI / 4.0;
        let w8 = mode8(f);
        let d = ModulationDrive::in_phase(f, 0.104 * PI, mhz(80.0)).unwrap();
        let sol = solve_sidebands(&p, &d, w8, Parity::Antisymmetric, 3).unwrap();
        let gs: Vec<f64> = (0..8)
            .map(|j| {
                let m = j as f64 - 4.0;
                let x = (m + 0.5) * p.length / 8.0;
                parametric_coupling(&sol, &p, j + 1, x, mhz(17.0)).g_bar.abs()
            })
            .collect();
        let max = gs.iter().cloned().fold(0.0, f64::max);
        let min = gs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((max - min) / max < 0.01);
    }

    #[test]
    fn coupling_decreases_with_modulation_frequency() {
        let p = dev();
        let f = PI / 4.0;
        let w8 = mode8(f);
        let mut prev = f64::INFINITY;
        for j in 0..9 {
            let wf = mhz(40.0 + 20.0 * j as f64);
            let d = ModulationDrive::in_phase(f, 0.104 * PI, wf).unwrap();
            let sol = solve_sidebands(&p, &d, w8, Parity::Antisymmetric, 3).unwrap();
            let g = parametric_coupling(&sol, &p, 1, 0.0, 1.0).g_bar.abs();
            assert!(g < prev, "wf index {j}: {g} !< {prev}");
            prev = g;
        }
    }

    #[test]
    fn zero_drive_gives_zero_parametric_coupling() {
        let p = dev();
        let f = PI / 4.0;
        let d = ModulationDrive::in_phase(f, 0.0, mhz(80.0)).unwrap();
        let sol = solve_sidebands(&p, &d, mode8(f), Parity::Antisymmetric, 3).unwrap();
        let c = parametric_coupling(&sol, &p, 4, 0.01, mhz(17.0));
        assert_eq!(c.g_bar, 0.0);
        assert!((c.g_bar0 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn collision_is_detected() {
        let p = dev();
        let f = 0.0;
        let w7 = undriven_mode(&p, f, 7).unwrap();
        let w8 = mode8(f);
        let d = ModulationDrive::in_phase(f, 0.1, (w8 - w7) / 3.0).unwrap();
        assert!(matches!(
            find_driven_resonance(&p, &d, w8, Parity::Antisymmetric, 3),
            Err(BusError::DegenerateSidebandCollision { .. })
        ));
    }

    #[test]
    fn psi_wraps_into_half_open_interval() {
        let d = ModulationDrive::new(0.0, 0.1, 1.0, -PI).unwrap();
        assert!((d.psi_0 - PI).abs() < 1e-15);
        let d = ModulationDrive::new(0.0, 0.1, 1.0, 3.0 * PI + 0.1).unwrap();
        assert!((d.psi_0 - (-PI + 0.1)).abs() < 1e-12);
        assert!(ModulationDrive::new(0.0, -0.1, 1.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn submatrix_relations_random(f in -1.5f64..1.5, df in 0.0f64..3.0, psi in -3.1f64..3.1, w in 20.0f64..60.0, wf in 0.1f64..1.5) {
            let p = dev();
            let n = 3;
            let d = ModulationDrive::new(f, df, wf, psi).unwrap();
            let mpp = build_m_submatrix(&p, &d, w, Side::Plus, Side::Plus, n);
            let conj = mpp.map(|c| c.conj());
            let l1 = lam(n, |k| (PI - d.psi_0) * k as f64);
            let l2 = lam(n, |k| PI * k as f64);
            let l3 = lam(n, |k| d.psi_0 * k as f64);
            let pairs = [
                (build_m_submatrix(&p, &d, w, Side::Minus, Side::Plus, n), &l1 * &conj * l1.adjoint()),
                (build_m_submatrix(&p, &d, w, Side::Plus, Side::Minus, n), &l2 * &conj * l2.adjoint()),
                (build_m_submatrix(&p, &d, w, Side::Minus, Side::Minus, n), &l3 * &mpp * l3.adjoint()),
            ];
            for (a, b) in pairs.iter() {
                let err = (a - b).iter().map(|c| c.norm()).fold(0.0, f64::max);
                prop_assert!(err < 1e-12);
            }
        }

        #[test]
        fn parity_exclusive_at_resonance(df in 0.0f64..0.4, wf_mhz in 40.0f64..150.0) {
            let p = dev();
            let f = PI / 4.0;
            let d = ModulationDrive::in_phase(f, df, mhz(wf_mhz)).unwrap();
            let wr = find_driven_resonance(&p, &d, mode8(f), Parity::Antisymmetric, 3).unwrap();
            let sym = parity_block(&p, &d, wr, Parity::Symmetric, 3);
            let (sv, _) = real_svd(&sym);
            prop_assert!(sv[0] / sv[6] > 1e-6);
        }
    }
}
