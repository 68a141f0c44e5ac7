//! fSim gate algebra, process tomography, β-phase calibration and readout correction.
//!
//! Two-qubit states use the basis |00⟩, |01⟩, |10⟩, |11⟩ with the first qubit as the
//! leading tensor factor. Processes are reconstructed by linear inversion from the
//! 16 product preparations {|0⟩, |1⟩, |+⟩, |+i⟩}^⊗2 and exact Pauli expectation values.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{BusError, Result};
use crate::numerics::golden_max;

type CMat = DMatrix<Complex64>;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Parameters of fSim(θ, β, φ), radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FsimParams {
    /// iSWAP angle in the single-excitation manifold.
    pub theta: f64,
    /// Transverse rotation axis.
    pub beta: f64,
    /// Conditional phase on |11⟩.
    pub phi: f64,
}

impl FsimParams {
    pub fn new(theta: f64, beta: f64, phi: f64) -> Self {
        Self { theta, beta, phi }
    }
}

/// The fSim unitary with cos(θ/2) on the diagonal of the {|01⟩, |10⟩} block,
/// i sin(θ/2)e^{iβ} above it, i sin(θ/2)e^{−iβ} below it and e^{iφ} on |11⟩.
pub fn fsim_unitary(p: FsimParams) -> CMat {
    let (s, c) = (0.5 * p.theta).sin_cos();
    let mut u = CMat::zeros(4, 4);
    u[(0, 0)] = ONE;
    u[(1, 1)] = Complex64::new(c, 0.0);
    u[(2, 2)] = Complex64::new(c, 0.0);
    u[(1, 2)] = I * s * Complex64::from_polar(1.0, p.beta);
    u[(2, 1)] = I * s * Complex64::from_polar(1.0, -p.beta);
    u[(3, 3)] = Complex64::from_polar(1.0, p.phi);
    u
}

/// Reads (θ, β, φ) off a unitary of fSim form, up to global phase fixed by the |00⟩ entry.
pub fn extract_fsim_params(u: &CMat) -> FsimParams {
    let g = u[(0, 0)].conj() / u[(0, 0)].norm();
    let v = u * g;
    let s = 0.5 * (v[(1, 2)].norm() + v[(2, 1)].norm());
    let c = 0.5 * (v[(1, 1)].norm() + v[(2, 2)].norm());
    let theta = 2.0 * s.atan2(c);
    let beta = 0.5 * ((v[(1, 2)] / I).arg() - (v[(2, 1)] / I).arg());
    FsimParams { theta, beta: wrap(beta), phi: v[(3, 3)].arg() }
}

/// Single-qubit Z rotation diag(1, e^{ia}).
pub fn z_rotation(a: f64) -> CMat {
    CMat::from_diagonal(&DVector::from_vec(vec![ONE, Complex64::from_polar(1.0, a)]))
}

/// Wraps an angle to (−π, π].
pub fn wrap(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn pauli(k: usize) -> CMat {
    match k {
        0 => CMat::identity(2, 2),
        1 => CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        2 => CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        _ => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    }
}

/// n-qubit Pauli basis ordered by base-4 digits (I, X, Y, Z), first qubit most significant.
pub fn pauli_basis(n: usize) -> Vec<CMat> {
    let mut out = vec![CMat::identity(1, 1)];
    for _ in 0..n {
        out = out.iter().flat_map(|a| (0..4).map(move |k| a.kronecker(&pauli(k)))).collect();
    }
    out
}

fn ket(k: usize) -> DVector<Complex64> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match k {
        0 => DVector::from_vec(vec![ONE, ZERO]),
        1 => DVector::from_vec(vec![ZERO, ONE]),
        2 => DVector::from_vec(vec![Complex64::new(r, 0.0), Complex64::new(r, 0.0)]),
        _ => DVector::from_vec(vec![Complex64::new(r, 0.0), Complex64::new(0.0, r)]),
    }
}

/// The 16 two-qubit product preparations from {|0⟩, |1⟩, |+⟩, |+i⟩}.
pub fn preparation_states() -> Vec<CMat> {
    let mut out = Vec::with_capacity(16);
    for a in 0..4 {
        for b in 0..4 {
            let psi = ket(a).kronecker(&ket(b));
            out.push(&psi * psi.adjoint());
        }
    }
    out
}

/// Exact expectation values tr(P ρ) over the two-qubit Pauli basis.
pub fn pauli_expectations(rho: &CMat) -> Vec<f64> {
    pauli_basis(2).iter().map(|p| (p * rho).trace().re).collect()
}

/// Process reconstructed by linear inversion.
#[derive(Debug, Clone)]
pub struct ProcessEstimate {
    /// Choi matrix J = Σ_ab |a⟩⟨b| ⊗ E(|a⟩⟨b|), trace d.
    pub choi: CMat,
    /// χ in the Pauli basis, trace 1.
    pub chi: CMat,
    /// Smallest eigenvalue of J before any projection.
    pub min_eigenvalue: f64,
    /// J was projected onto the positive cone.
    pub projected: bool,
}

fn chi_from_choi(choi: &CMat, d: usize) -> CMat {
    let vecs: Vec<DVector<Complex64>> = pauli_basis(2).iter().map(|p| vectorize(p, d)).collect();
    let n = vecs.len();
    CMat::from_fn(n, n, |m, k| (vecs[m].adjoint() * choi * &vecs[k])[(0, 0)] / (d * d) as f64)
}

/// |A⟩⟩ with component (a, i) = A[i, a], matching the Choi ordering.
fn vectorize(a: &CMat, d: usize) -> DVector<Complex64> {
    DVector::from_fn(d * d, |k, _| a[(k % d, k / d)])
}

fn hermitian_eigen(m: &CMat) -> nalgebra::SymmetricEigen<Complex64, nalgebra::Dyn> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    nalgebra::SymmetricEigen::new(h)
}

/// Reconstructs a two-qubit channel from its action on the 16 preparations.
///
/// Output states are re-estimated from their Pauli expectations. If J has an
/// eigenvalue below −1e−6 it is projected onto the positive cone and rescaled to trace d.
pub fn process_tomography<F: Fn(&CMat) -> CMat>(channel: F) -> Result<ProcessEstimate> {
    let d = 4;
    let preps = preparation_states();
    let paulis = pauli_basis(2);
    let outputs: Vec<CMat> = preps
        .iter()
        .map(|rho| {
            let e = pauli_expectations(&channel(rho));
            paulis.iter().zip(&e).fold(CMat::zeros(d, d), |acc, (p, &v)| acc + p * Complex64::new(v / d as f64, 0.0))
        })
        .collect();
    // Columns are vectorized preparations; solving A c = vec(|a⟩⟨b|) expresses each basis operator.
    let a = CMat::from_fn(d * d, preps.len(), |k, j| preps[j][(k / d, k % d)]);
    let lu = a.clone().lu();
    let mut choi = CMat::zeros(d * d, d * d);
    for ia in 0..d {
        for ib in 0..d {
            let mut target = DVector::from_element(d * d, ZERO);
            target[ia * d + ib] = ONE;
            let c = lu.solve(&target).ok_or_else(|| BusError::InvalidParameter("preparations are not informationally complete".into()))?;
            let mut e = CMat::zeros(d, d);
            for (j, out) in outputs.iter().enumerate() {
                e += out * c[j];
            }
            for i in 0..d {
                for k in 0..d {
                    choi[(ia * d + i, ib * d + k)] = e[(i, k)];
                }
            }
        }
    }
    let eig = hermitian_eigen(&choi);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut projected = false;
    if min_eig < -1e-6 {
        let vals = eig.eigenvalues.map(|v| Complex64::new(v.max(0.0), 0.0));
        let mut j = &eig.eigenvectors * CMat::from_diagonal(&vals) * eig.eigenvectors.adjoint();
        let tr = j.trace().re;
        j *= Complex64::new(d as f64 / tr, 0.0);
        choi = j;
        projected = true;
    }
    let chi = chi_from_choi(&choi, d);
    Ok(ProcessEstimate { choi, chi, min_eigenvalue: min_eig, projected })
}

/// Fails with `NonPhysicalProcess` if the raw reconstruction violated complete positivity.
pub fn check_physical(est: &ProcessEstimate) -> Result<()> {
    if est.min_eigenvalue < -1e-6 {
        return Err(BusError::NonPhysicalProcess { min_eig: est.min_eigenvalue });
    }
    Ok(())
}

/// Process fidelity tr(χ_ideal χ_meas) = ⟨⟨U|J|U⟩⟩/d² against a target unitary.
pub fn process_fidelity(est: &ProcessEstimate, target: &CMat) -> f64 {
    let d = target.nrows();
    let v = vectorize(target, d);
    (v.adjoint() * &est.choi * &v)[(0, 0)].re / (d * d) as f64
}

/// Maximizes the fidelity against fSim(θ, β, φ) over φ: 2001-point grid on (−π, π]
/// followed by golden-section refinement. Returns (φ, F).
pub fn optimize_phi(est: &ProcessEstimate, theta: f64, beta: f64) -> (f64, f64) {
    let f = |phi: f64| process_fidelity(est, &fsim_unitary(FsimParams::new(theta, beta, phi)));
    let n = 2001;
    let step = 2.0 * PI / n as f64;
    let mut best = (PI, f(PI));
    for k in 1..=n {
        let phi = -PI + step * k as f64;
        let v = f(phi);
        if v > best.1 {
            best = (phi, v);
        }
    }
    let (phi, v) = golden_max(f, best.0 - step, best.0 + step, 1e-12);
    if v >= best.1 {
        (wrap(phi), v)
    } else {
        best
    }
}

/// Outcome of the β calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaCalibration {
    /// Post-gate Z angle on the first qubit.
    pub z1: f64,
    /// Post-gate Z angle on the second qubit.
    pub z2: f64,
    /// Phase lag of the first qubit's oscillation relative to the ideal curve.
    pub lag1: f64,
    /// Phase lag of the second qubit's oscillation.
    pub lag2: f64,
    /// Smaller of the two normalized oscillation amplitudes.
    pub amplitude: f64,
}

fn bloch_xy(rho: &CMat, qubit: usize) -> Complex64 {
    let (x, y) = if qubit == 0 {
        (pauli(1).kronecker(&pauli(0)), pauli(2).kronecker(&pauli(0)))
    } else {
        (pauli(0).kronecker(&pauli(1)), pauli(0).kronecker(&pauli(2)))
    };
    Complex64::new((x * rho).trace().re, (y * rho).trace().re)
}

/// Simulates the phase-sweep calibration circuits and returns the Z corrections.
///
/// `channel(ϑ)` is the gate unitary when the modulation phase is ϑ. Preparing
/// |0⟩⊗|+i⟩ and reading ⟨X⟩, ⟨Y⟩ of the first qubit (and the mirrored circuit for
/// the second) gives an oscillation in ϑ; its phase relative to the ideal fSim(π, ϑ, 0)
/// curve sets the Z angle that aligns them. Fails with `CalibrationAmbiguous` if the
/// normalized oscillation amplitude is below 0.1.
pub fn beta_calibration_sim<F: Fn(f64) -> CMat>(channel: F, sweep: &[f64]) -> Result<BetaCalibration> {
    if sweep.is_empty() {
        return Err(BusError::InvalidParameter("empty modulation-phase sweep".into()));
    }
    let prep = |a: usize, b: usize| {
        let psi = ket(a).kronecker(&ket(b));
        &psi * psi.adjoint()
    };
    let circuits = [(prep(0, 3), 0usize), (prep(3, 0), 1usize)];
    let mut lags = [0.0; 2];
    let mut amp: f64 = f64::INFINITY;
    for (c, (rho0, q)) in circuits.iter().enumerate() {
        let mut r = ZERO;
        let mut norm = 0.0;
        for &th in sweep {
            let u = channel(th);
            let ideal = fsim_unitary(FsimParams::new(PI, th, 0.0));
            let s = bloch_xy(&(&u * rho0 * u.adjoint()), *q);
            let s0 = bloch_xy(&(&ideal * rho0 * ideal.adjoint()), *q);
            r += s * s0.conj();
            norm += s0.norm_sqr();
        }
        let r = r / norm;
        lags[c] = r.arg();
        amp = amp.min(r.norm());
    }
    if amp < 0.1 {
        return Err(BusError::CalibrationAmbiguous { amplitude: amp });
    }
    // A Z(a) after the gate advances the measured phase by a; undo each lag.
    Ok(BetaCalibration { z1: wrap(-lags[0]), z2: wrap(-lags[1]), lag1: lags[0], lag2: lags[1], amplitude: amp })
}

/// Applies the calibration's post-gate Z rotations to a gate unitary.
pub fn apply_z_corrections(cal: &BetaCalibration, u: &CMat) -> CMat {
    z_rotation(cal.z1).kronecker(&z_rotation(cal.z2)) * u
}

/// Readout confusion matrix C_ij = P(measure i | prepared j).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub matrix: DMatrix<f64>,
}

impl ConfusionMatrix {
    /// Validates shape, entry range and column sums.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || n != matrix.ncols() || !n.is_power_of_two() {
            return Err(BusError::InvalidParameter("confusion matrix must be square with size 2^N".into()));
        }
        if matrix.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(BusError::InvalidParameter("confusion entries must lie in [0, 1]".into()));
        }
        for j in 0..n {
            let s: f64 = matrix.column(j).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(BusError::InvalidParameter(format!("confusion column {j} sums to {s}")));
            }
        }
        Ok(Self { matrix })
    }

    /// Ratio of largest to smallest singular value.
    pub fn condition_number(&self) -> f64 {
        let sv = self.matrix.clone().svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Measured distribution p = C q for true distribution q.
pub fn apply_confusion(c: &ConfusionMatrix, q: &[f64]) -> Vec<f64> {
    (&c.matrix * DVector::from_column_slice(q)).iter().cloned().collect()
}

/// Corrected probabilities with a flag for simplex clipping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutCorrection {
    pub probabilities: Vec<f64>,
    /// Negative entries were clipped to zero and the vector renormalized.
    pub clipped: bool,
}

/// q = C⁻¹ p, optionally clipped to the probability simplex.
pub fn readout_correct(c: &ConfusionMatrix, measured: &[f64], clip: bool) -> Result<ReadoutCorrection> {
    let cond = c.condition_number();
    if !(cond < 1e6) {
        return Err(BusError::SingularConfusion { cond });
    }
    if measured.len() != c.matrix.nrows() {
        return Err(BusError::InvalidParameter("probability vector has the wrong length".into()));
    }
    let q = c
        .matrix
        .clone()
        .lu()
        .solve(&DVector::from_column_slice(measured))
        .ok_or(BusError::SingularConfusion { cond })?;
    let mut probabilities: Vec<f64> = q.iter().cloned().collect();
    let mut clipped = false;
    if clip && probabilities.iter().any(|&v| v < 0.0) {
        clipped = true;
        probabilities.iter_mut().for_each(|v| *v = v.max(0.0));
        let s: f64 = probabilities.iter().sum();
        if s > 0.0 {
            probabilities.iter_mut().for_each(|v| *v /= s);
        }
    }
    Ok(ReadoutCorrection { probabilities, clipped })
}
