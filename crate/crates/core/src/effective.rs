//! Analytic effective Hamiltonians.
//!
//! Time-dependent Schrieffer-Wolff coefficients for a periodically modulated
//! qubit-bus coupling g(t) = g₀[ḡ₀ + 2ḡ sin(ωt + φ)], the terms of the second-order
//! transformed Hamiltonian, the parametric qubit-qubit exchange rate, the perturbative
//! ZZ rate with an exact-diagonalization cross-check, and the multimode photonics
//! model of the flux-dependent couplings.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::circuit::{dc_mode_frequencies, reflection_phase, BusCircuitParams, FluxBias};
use crate::error::{BusError, Result};

/// Transmon coupled to the bus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    /// Label i ≥ 1; its parity sets the sign of the parametric coupling.
    pub index: usize,
    /// Qubit angular frequency, rad/ns.
    pub omega_q: f64,
    /// Anharmonicity as a positive number, rad/ns.
    pub alpha: f64,
    /// Position along the bus measured from its centre, m.
    pub x: f64,
    /// Distance to the nearest bus boundary, m. Defaults to ℓ/2 − |x| when absent.
    pub dist: Option<f64>,
    /// Bare qubit-bus coupling at zero flux, rad/ns.
    pub g0: f64,
    /// Energy relaxation time, ns.
    pub t1: Option<f64>,
    /// Ramsey dephasing time, ns.
    pub t2r: Option<f64>,
    /// Echo dephasing time, ns.
    pub t2e: Option<f64>,
}

impl QubitParams {
    /// Qubit without coherence data.
    pub fn new(index: usize, omega_q: f64, alpha: f64, x: f64, g0: f64) -> Self {
        Self { index, omega_q, alpha, x, dist: None, g0, t1: None, t2r: None, t2e: None }
    }

    /// Checks positivity and the dispersive sanity bound g₀ < ω_q/50.
    pub fn validate(&self) -> Result<()> {
        if self.index == 0 {
            return Err(BusError::InvalidParameter("qubit index starts at 1".into()));
        }
        if !(self.omega_q > 0.0 && self.g0 > 0.0 && self.alpha.is_finite()) {
            return Err(BusError::InvalidParameter(format!("qubit {}: omega_q and g0 must be positive", self.index)));
        }
        if self.g0 >= self.omega_q / 50.0 {
            return Err(BusError::InvalidParameter(format!("qubit {}: g0 must stay below omega_q/50", self.index)));
        }
        for t in [self.t1, self.t2r, self.t2e].into_iter().flatten() {
            if !(t > 0.0) {
                return Err(BusError::InvalidParameter(format!("qubit {}: coherence times must be positive", self.index)));
            }
        }
        Ok(())
    }

    /// Distance to the boundary for a bus of length `length`.
    pub fn boundary_distance(&self, length: f64) -> f64 {
        self.dist.unwrap_or(0.5 * length - self.x.abs())
    }
}

/// Periodic coupling g(t) = g₀[ḡ₀ + 2ḡ sin(ωt + φ)].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GTime {
    pub g0: f64,
    pub g_bar0: f64,
    pub g_bar: f64,
    /// Modulation angular frequency, rad/ns.
    pub omega: f64,
    /// Drive phase, radians.
    pub phi: f64,
}

impl GTime {
    /// Unmodulated coupling g(t) = g₀.
    pub fn static_coupling(g0: f64) -> Self {
        Self { g0, g_bar0: 1.0, g_bar: 0.0, omega: 0.0, phi: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.g0 * (self.g_bar0 + 2.0 * self.g_bar * (self.omega * t + self.phi).sin())
    }

    /// Fourier components {(ν, A_ν)} with g(t) = Σ A_ν e^{iνt}.
    pub fn spectrum(&self) -> Spectrum {
        let mut s = Spectrum::default();
        s.push(0.0, Complex64::new(self.g0 * self.g_bar0, 0.0));
        if self.g_bar != 0.0 {
            let a = Complex64::new(0.0, -self.g0 * self.g_bar) * Complex64::from_polar(1.0, self.phi);
            s.push(self.omega, a);
            s.push(-self.omega, a.conj());
        }
        s
    }
}

/// Finite sum of complex exponentials Σ A_ν e^{iνt}.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Spectrum {
    pub terms: Vec<(f64, Complex64)>,
}

impl Spectrum {
    pub fn push(&mut self, freq: f64, amp: Complex64) {
        self.terms.push((freq, amp));
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        self.terms.iter().map(|(f, a)| a * Complex64::from_polar(1.0, f * t)).sum()
    }

    /// Complex conjugate as a function of time.
    pub fn conj(&self) -> Spectrum {
        Spectrum { terms: self.terms.iter().map(|(f, a)| (-f, a.conj())).collect() }
    }

    pub fn scale(&self, s: Complex64) -> Spectrum {
        Spectrum { terms: self.terms.iter().map(|(f, a)| (*f, a * s)).collect() }
    }

    pub fn add(&self, other: &Spectrum) -> Spectrum {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Spectrum { terms }
    }

    pub fn mul(&self, other: &Spectrum) -> Spectrum {
        let mut out = Spectrum::default();
        for (f1, a1) in &self.terms {
            for (f2, a2) in &other.terms {
                out.push(f1 + f2, a1 * a2);
            }
        }
        out
    }

    /// Sum of the amplitudes whose frequency lies within `tol` of `freq`.
    pub fn component(&self, freq: f64, tol: f64) -> Complex64 {
        self.terms.iter().filter(|(f, _)| (f - freq).abs() <= tol).map(|(_, a)| a).sum()
    }
}

/// Closed-form Schrieffer-Wolff coefficients c(t), d(t) of one qubit.
///
/// They solve ċ = −iΔc + ig(t), ḋ = −iΣd − ig(t) with c(0) = g₀ḡ₀/Δ and
/// d(0) = −g₀ḡ₀/Σ, where Δ = ω_q − ω_r and Σ = ω_q + ω_r.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwtCoefficients {
    pub g: GTime,
    pub delta: f64,
    pub sigma: f64,
}

impl SwtCoefficients {
    /// Phase of the cosine form: sin(ωt + φ) = cos(ωt + φ − π/2).
    fn phi_c(&self) -> f64 {
        self.g.phi - FRAC_PI_2
    }

    pub fn c(&self, t: f64) -> Complex64 {
        let (g0, w, dl) = (self.g.g0, self.g.omega, self.delta);
        let p = self.phi_c();
        let osc = Complex64::new(dl * (w * t + p).cos(), -w * (w * t + p).sin())
            - Complex64::from_polar(1.0, -dl * t) * Complex64::new(dl * p.cos(), -w * p.sin());
        Complex64::new(g0 * self.g.g_bar0 / dl, 0.0) + osc * (2.0 * g0 * self.g.g_bar / ((dl - w) * (dl + w)))
    }

    pub fn d(&self, t: f64) -> Complex64 {
        let (g0, w, sg) = (self.g.g0, self.g.omega, self.sigma);
        let p = self.phi_c();
        let osc = Complex64::new(-sg * (w * t + p).cos(), w * (w * t + p).sin())
            + Complex64::from_polar(1.0, -sg * t) * Complex64::new(sg * p.cos(), -w * p.sin());
        Complex64::new(-g0 * self.g.g_bar0 / sg, 0.0) + osc * (2.0 * g0 * self.g.g_bar / ((sg - w) * (sg + w)))
    }

    /// c(t) as a sum of exponentials (particular part plus the e^{−iΔt} transient).
    pub fn c_spectrum(&self) -> Spectrum {
        self.coefficient_spectrum(self.delta, 1.0)
    }

    /// d(t) as a sum of exponentials (particular part plus the e^{−iΣt} transient).
    pub fn d_spectrum(&self) -> Spectrum {
        self.coefficient_spectrum(self.sigma, -1.0)
    }

    fn coefficient_spectrum(&self, pole: f64, sign: f64) -> Spectrum {
        let mut out = Spectrum::default();
        let mut transient = Complex64::new(0.0, 0.0);
        for (nu, a) in self.g.spectrum().terms {
            let k = a * sign / (nu + pole);
            out.push(nu, k);
            if nu != 0.0 {
                transient -= k;
            }
        }
        if transient != Complex64::new(0.0, 0.0) {
            out.push(-pole, transient);
        }
        out
    }

    /// Samples of (c, d) at the given times.
    pub fn sample(&self, times: &[f64]) -> (Vec<Complex64>, Vec<Complex64>) {
        (times.iter().map(|&t| self.c(t)).collect(), times.iter().map(|&t| self.d(t)).collect())
    }
}

fn require_margin(what: &str, value: f64, margin: f64) -> Result<()> {
    if value.abs() <= margin {
        Err(BusError::ResonantDenominator { what: what.into(), value, margin })
    } else {
        Ok(())
    }
}

/// Schrieffer-Wolff coefficients of `qubit` against a bus mode at `omega_r`.
///
/// Requires |Δ|, |Σ|, |Δ ± ω|, |Σ ± ω| > 10 g₀.
pub fn swt_coefficients(qubit: &QubitParams, omega_r: f64, g_time: GTime) -> Result<SwtCoefficients> {
    let delta = qubit.omega_q - omega_r;
    let sigma = qubit.omega_q + omega_r;
    let margin = 10.0 * g_time.g0.abs();
    let w = g_time.omega;
    require_margin("delta", delta, margin)?;
    require_margin("sigma", sigma, margin)?;
    require_margin("delta - omega", delta - w, margin)?;
    require_margin("delta + omega", delta + w, margin)?;
    require_margin("sigma - omega", sigma - w, margin)?;
    require_margin("sigma + omega", sigma + w, margin)?;
    Ok(SwtCoefficients { g: g_time, delta, sigma })
}

/// Parametric exchange rate in the closed form
/// g₁₂ = (g₀₁g₀₂/2)[ḡ₂(1/Δ₁ + 1/Σ₁) + ḡ₁(1/Δ₂ + 1/Σ₂)].
pub fn effective_g12(q1: &QubitParams, q2: &QubitParams, omega_r: f64, g_bars: (f64, f64)) -> Result<f64> {
    let (d1, s1, d2, s2) = detunings(q1, q2, omega_r)?;
    let (gb1, gb2) = g_bars;
    Ok(0.5 * q1.g0 * q2.g0 * (gb2 * (1.0 / d1 + 1.0 / s1) + gb1 * (1.0 / d2 + 1.0 / s2)))
}

/// Exchange rate from second-order Floquet perturbation theory for
/// −g_i(t)(b_i − b_i†)(a − a†) couplings driven at ω = ω₁ − ω₂:
/// g₁₂ = g₀₁g₀₂[ḡ₀₁ḡ₂(1/Δ₁ − 1/Σ₁) + ḡ₀₂ḡ₁(1/Δ₂ − 1/Σ₂)] (rotating-wave rate, P = sin²(g₁₂t)).
pub fn floquet_g12(q1: &QubitParams, q2: &QubitParams, omega_r: f64, g_bar0s: (f64, f64), g_bars: (f64, f64)) -> Result<f64> {
    let (d1, s1, d2, s2) = detunings(q1, q2, omega_r)?;
    let (gb1, gb2) = g_bars;
    let (gz1, gz2) = g_bar0s;
    Ok(q1.g0 * q2.g0 * (gz1 * gb2 * (1.0 / d1 - 1.0 / s1) + gz2 * gb1 * (1.0 / d2 - 1.0 / s2)))
}

fn detunings(q1: &QubitParams, q2: &QubitParams, omega_r: f64) -> Result<(f64, f64, f64, f64)> {
    let d1 = q1.omega_q - omega_r;
    let d2 = q2.omega_q - omega_r;
    let s1 = q1.omega_q + omega_r;
    let s2 = q2.omega_q + omega_r;
    require_margin("delta_1", d1, 10.0 * q1.g0)?;
    require_margin("delta_2", d2, 10.0 * q2.g0)?;
    Ok((d1, s1, d2, s2))
}

/// Labeled terms of the second-order transformed two-qubit Hamiltonian at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveHamiltonianTerms {
    /// Coefficient of a†a σ_{i,z}: ½ g_i (c_i + c_i* + d_i + d_i*).
    pub stark_shift: [f64; 2],
    /// Correction to ω_i inside ½σ_{i,z}[ω_i + ·]: (3/2) g_i (c_i + d_i + c.c.).
    pub lamb_shift: [f64; 2],
    /// Scalar term −¼ Σ g_i (−c_i − c_i* + d_i + d_i*).
    pub energy_offset: f64,
    /// Coefficient of (a†)² σ_{i,z}: −½ g_i (c_i + d_i), plus h.c.
    pub squeezing_amp: [Complex64; 2],
    /// Coefficient of σ_{1,−}σ_{2,+}: −½[g₁(d₂ − c₂*) + g₂(−c₁ + d₁*)], plus h.c.
    pub exchange_g12: Complex64,
    /// Coefficient of σ_{1,+}σ_{2,+}: −½[g₁(c₂* − d₂) + g₂(c₁* − d₁)], plus h.c.
    pub two_photon_amp: Complex64,
}

/// Evaluates every labeled term from c_i(t), d_i(t) and g_i(t).
pub fn transformed_hamiltonian(s1: &SwtCoefficients, s2: &SwtCoefficients, t: f64) -> EffectiveHamiltonianTerms {
    let (g1, g2) = (s1.g.eval(t), s2.g.eval(t));
    let (c1, d1, c2, d2) = (s1.c(t), s1.d(t), s2.c(t), s2.d(t));
    let re2 = |c: Complex64, d: Complex64| 2.0 * (c + d).re;
    EffectiveHamiltonianTerms {
        stark_shift: [0.5 * g1 * re2(c1, d1), 0.5 * g2 * re2(c2, d2)],
        lamb_shift: [1.5 * g1 * re2(c1, d1), 1.5 * g2 * re2(c2, d2)],
        energy_offset: -0.25 * (g1 * 2.0 * (d1 - c1).re + g2 * 2.0 * (d2 - c2).re),
        squeezing_amp: [-0.5 * g1 * (c1 + d1), -0.5 * g2 * (c2 + d2)],
        exchange_g12: -0.5 * (g1 * (d2 - c2.conj()) + g2 * (-c1 + d1.conj())),
        two_photon_amp: -0.5 * (g1 * (c2.conj() - d2) + g2 * (c1.conj() - d1)),
    }
}

/// Static (rotating-frame) parts of the transformed Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticTerms {
    /// Time-averaged Lamb corrections per qubit.
    pub lamb_shift: [f64; 2],
    /// Time-averaged Stark coefficients per qubit.
    pub stark_shift: [f64; 2],
    /// Component of the exchange coefficient at e^{i(ω₁−ω₂)t} (static in the interaction frame).
    pub exchange_g12: Complex64,
    /// Component of the two-photon coefficient at e^{−i(ω₁+ω₂)t}.
    pub two_photon_amp: Complex64,
}

/// Exact time averages of the transformed-Hamiltonian terms, from the exponential
/// expansions of g_i, c_i and d_i.
pub fn static_terms(q1: &QubitParams, q2: &QubitParams, s1: &SwtCoefficients, s2: &SwtCoefficients) -> StaticTerms {
    let (g1, g2) = (s1.g.spectrum(), s2.g.spectrum());
    let (c1, d1, c2, d2) = (s1.c_spectrum(), s1.d_spectrum(), s2.c_spectrum(), s2.d_spectrum());
    let tol = 1e-9 * (q1.omega_q.abs() + q2.omega_q.abs());
    let one = Complex64::new(1.0, 0.0);
    let re_sum = |g: &Spectrum, c: &Spectrum, d: &Spectrum| {
        let cd = c.add(d);
        g.mul(&cd.add(&cd.conj())).component(0.0, tol).re
    };
    let exchange = g1
        .mul(&d2.add(&c2.conj().scale(-one)))
        .add(&g2.mul(&c1.scale(-one).add(&d1.conj())))
        .scale(Complex64::new(-0.5, 0.0));
    let two_photon = g1
        .mul(&c2.conj().add(&d2.scale(-one)))
        .add(&g2.mul(&c1.conj().add(&d1.scale(-one))))
        .scale(Complex64::new(-0.5, 0.0));
    let r1 = re_sum(&g1, &c1, &d1);
    let r2 = re_sum(&g2, &c2, &d2);
    StaticTerms {
        lamb_shift: [1.5 * r1, 1.5 * r2],
        stark_shift: [0.5 * r1, 0.5 * r2],
        exchange_g12: exchange.component(q1.omega_q - q2.omega_q, tol),
        two_photon_amp: two_photon.component(-(q1.omega_q + q2.omega_q), tol),
    }
}

/// Renormalized qubit-qubit detuning Δ̃₁₂ = (ω₁ + ⟨L₁⟩) − (ω₂ + ⟨L₂⟩) with the bus in vacuum,
/// where ⟨L_i⟩ is the time-averaged Lamb term.
pub fn renormalized_detuning(q1: &QubitParams, q2: &QubitParams, s1: &SwtCoefficients, s2: &SwtCoefficients) -> f64 {
    let st = static_terms(q1, q2, s1, s2);
    (q1.omega_q + st.lamb_shift[0]) - (q2.omega_q + st.lamb_shift[1])
}

/// ζ = 2g²[1/(Δ − α_i) − 1/(Δ + α_j)] with Δ = ω_i − ω_j and positive anharmonicities.
pub fn zz_perturbative(g: f64, delta: f64, alpha_i: f64, alpha_j: f64) -> Result<f64> {
    let margin = 10.0 * g.abs();
    require_margin("delta - alpha_i", delta - alpha_i, margin)?;
    require_margin("delta + alpha_j", delta + alpha_j, margin)?;
    Ok(2.0 * g * g * (1.0 / (delta - alpha_i) - 1.0 / (delta + alpha_j)))
}

/// Eigen-energies of two three-level transmons with exchange g(b_i†b_j + h.c.), labeled by
/// maximal overlap with the bare states |00⟩, |01⟩, |10⟩, |11⟩ (first digit = qubit i).
pub fn two_transmon_levels(g: f64, omega_i: f64, omega_j: f64, alpha_i: f64, alpha_j: f64) -> [f64; 4] {
    let e = |n: usize, w: f64, a: f64| n as f64 * w - 0.5 * a * (n as f64) * (n as f64 - 1.0);
    let idx = |ni: usize, nj: usize| 3 * ni + nj;
    let mut h = DMatrix::<f64>::zeros(9, 9);
    for ni in 0..3 {
        for nj in 0..3 {
            h[(idx(ni, nj), idx(ni, nj))] = e(ni, omega_i, alpha_i) + e(nj, omega_j, alpha_j);
            if ni + 1 < 3 && nj >= 1 {
                let amp = g * ((ni + 1) as f64).sqrt() * (nj as f64).sqrt();
                h[(idx(ni + 1, nj - 1), idx(ni, nj))] = amp;
                h[(idx(ni, nj), idx(ni + 1, nj - 1))] = amp;
            }
        }
    }
    let eig = SymmetricEigen::new(h);
    let pick = |state: usize| {
        let mut best = (0usize, -1.0);
        for k in 0..9 {
            let w = eig.eigenvectors[(state, k)].powi(2);
            if w > best.1 {
                best = (k, w);
            }
        }
        eig.eigenvalues[best.0]
    };
    [pick(idx(0, 0)), pick(idx(0, 1)), pick(idx(1, 0)), pick(idx(1, 1))]
}

/// ZZ rate from exact diagonalization, reported in the sign convention of
/// [`zz_perturbative`]: ζ = −(E₁₁ − E₁₀ − E₀₁ + E₀₀).
pub fn zz_exact(g: f64, omega_i: f64, omega_j: f64, alpha_i: f64, alpha_j: f64) -> f64 {
    let [e00, e01, e10, e11] = two_transmon_levels(g, omega_i, omega_j, alpha_i, alpha_j);
    -(e11 - e10 - e01 + e00)
}

/// Vacuum-dressed frequency shift of a qubit coupled by −g(σ₋ − σ₊)(a − a†) to a resonator,
/// from exact diagonalization of the two-level qubit plus `n_max`-photon resonator.
pub fn dressed_qubit_shift(g: f64, omega_q: f64, omega_r: f64, n_max: usize) -> f64 {
    let dim = 2 * (n_max + 1);
    let idx = |q: usize, n: usize| q * (n_max + 1) + n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for q in 0..2 {
        for n in 0..=n_max {
            h[(idx(q, n), idx(q, n))] = q as f64 * omega_q + n as f64 * omega_r;
        }
    }
    // −g(σ₋ − σ₊)(a − a†): ⟨0,n+1|·|1,n⟩ = +g√(n+1), ⟨1,n+1|·|0,n⟩ = −g√(n+1).
    for n in 0..n_max {
        let s = ((n + 1) as f64).sqrt();
        let (a, b) = (idx(0, n + 1), idx(1, n));
        h[(a, b)] = g * s;
        h[(b, a)] = g * s;
        let (a, b) = (idx(1, n + 1), idx(0, n));
        h[(a, b)] = -g * s;
        h[(b, a)] = -g * s;
    }
    let eig = SymmetricEigen::new(h);
    let pick = |state: usize| {
        (0..dim)
            .max_by(|&i, &j| eig.eigenvectors[(state, i)].abs().partial_cmp(&eig.eigenvectors[(state, j)].abs()).unwrap())
            .map(|k| eig.eigenvalues[k])
            .unwrap()
    };
    pick(idx(1, 0)) - pick(idx(0, 0)) - omega_q
}

/// Output of the multimode photonics model for one qubit pair at one flux.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultimodeCoupling {
    /// Reflection phase φ(F), radians.
    pub reflection: f64,
    /// Round-trip phases φ_i = 2ω_i d_i/v + φ(F).
    pub phi: [f64; 2],
    /// End-to-end phases θ_i = ω_i ℓ/v + φ(F).
    pub theta: [f64; 2],
    /// g₀ᵢ(F) = g₀ᵢ(0) cos(φ_i/2), rad/ns.
    pub g0_of_f: [f64; 2],
    /// g₁₂ = ½√(g₀₁g₀₂) cos(φ₁/2) cos(φ₂/2) (1/sin θ₁ + 1/sin θ₂), rad/ns.
    pub g12: f64,
}

/// Multimode photonics coupling model at static flux `f` with bus mode frequency `omega_r`.
pub fn multimode_coupling(q1: &QubitParams, q2: &QubitParams, params: &BusCircuitParams, f: f64, omega_r: f64) -> Result<MultimodeCoupling> {
    let v = params.v_ns();
    let refl = reflection_phase(params, f, omega_r);
    let qs = [q1, q2];
    let mut phi = [0.0; 2];
    let mut theta = [0.0; 2];
    for (k, q) in qs.iter().enumerate() {
        phi[k] = q.omega_q * 2.0 * q.boundary_distance(params.length) / v + refl;
        theta[k] = q.omega_q * params.length / v + refl;
        if theta[k].sin().abs() < 1e-6 {
            return Err(BusError::SinThetaSingular { qubit: q.index, theta: theta[k] });
        }
    }
    let g0_of_f = [q1.g0 * (phi[0] / 2.0).cos(), q2.g0 * (phi[1] / 2.0).cos()];
    let g12 = 0.5 * (q1.g0 * q2.g0).sqrt() * (phi[0] / 2.0).cos() * (phi[1] / 2.0).cos() * (1.0 / theta[0].sin() + 1.0 / theta[1].sin());
    Ok(MultimodeCoupling { reflection: refl, phi, theta, g0_of_f, g12 })
}

/// Boundary distance that puts a qubit at frequency `omega_q` on a node (φ_i = π mod 2π)
/// at flux `f` and bus frequency `omega_r`. The smallest positive solution is returned.
pub fn node_distance(params: &BusCircuitParams, omega_q: f64, omega_r: f64, f: f64) -> f64 {
    let v = params.v_ns();
    let refl = reflection_phase(params, f, omega_r);
    let period = 2.0 * PI * v / (2.0 * omega_q);
    let d = (PI - refl) * v / (2.0 * omega_q);
    d.rem_euclid(period)
}

/// Boundary distance that puts a qubit on an antinode with cos(φ_i/2) = 1
/// (φ_i = 0 mod 4π) at flux `f`.
pub fn antinode_distance(params: &BusCircuitParams, omega_q: f64, omega_r: f64, f: f64) -> f64 {
    let v = params.v_ns();
    let refl = reflection_phase(params, f, omega_r);
    let period = 4.0 * PI * v / (2.0 * omega_q);
    (-refl * v / (2.0 * omega_q)).rem_euclid(period)
}

/// One point of a multimode flux scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultimodeScanPoint {
    /// Static flux F, radians.
    pub f: f64,
    /// Tracked bus mode frequency, rad/ns.
    pub omega_r: f64,
    pub coupling: MultimodeCoupling,
    /// ζ from [`zz_perturbative`] with the multimode g₁₂, rad/ns.
    pub zeta: f64,
}

/// Multimode scan with qubit-bus detunings held fixed: at each flux the bus mode `mode`
/// is recomputed and the qubits follow it, ω_i(F) = ω_r(F) + Δ_i.
pub fn multimode_scan(
    q1: &QubitParams,
    q2: &QubitParams,
    params: &BusCircuitParams,
    mode: usize,
    detunings: (f64, f64),
    fluxes: &[f64],
) -> Result<Vec<MultimodeScanPoint>> {
    fluxes
        .iter()
        .map(|&f| {
            let spec = dc_mode_frequencies(params, &FluxBias::symmetric(f)?, mode)?;
            let omega_r = spec.frequency(mode).ok_or_else(|| BusError::InvalidParameter(format!("mode {mode} missing")))?;
            let a = QubitParams { omega_q: omega_r + detunings.0, ..*q1 };
            let b = QubitParams { omega_q: omega_r + detunings.1, ..*q2 };
            let coupling = multimode_coupling(&a, &b, params, f, omega_r)?;
            let zeta = if coupling.g12 == 0.0 {
                0.0
            } else {
                zz_perturbative(coupling.g12, a.omega_q - b.omega_q, a.alpha, b.alpha)?
            };
            Ok(MultimodeScanPoint { f, omega_r, coupling, zeta })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{ghz, mhz, to_mhz};
    use proptest::prelude::*;

    fn qubit(index: usize, f_ghz: f64, alpha_mhz: f64, g0_mhz: f64) -> QubitParams {
        QubitParams::new(index, ghz(f_ghz), mhz(alpha_mhz), 0.0, mhz(g0_mhz))
    }

    /// RK4 on u = c e^{iΔt}, w = d e^{iΣt}, which obey u̇ = i g e^{iΔt}, ẇ = −i g e^{iΣt}.
    fn rk4_ode(s: &SwtCoefficients, t_end: f64, steps: usize) -> (Complex64, Complex64) {
        let i = Complex64::new(0.0, 1.0);
        let f = |t: f64| {
            let g = s.g.eval(t);
            [i * g * Complex64::from_polar(1.0, s.delta * t), -i * g * Complex64::from_polar(1.0, s.sigma * t)]
        };
        let h = t_end / steps as f64;
        let mut y = [s.c(0.0), s.d(0.0)];
        for k in 0..steps {
            let t = k as f64 * h;
            let (k1, k2, k4) = (f(t), f(t + 0.5 * h), f(t + h));
            for j in 0..2 {
                y[j] += h / 6.0 * (k1[j] + 4.0 * k2[j] + k4[j]);
            }
        }
        (y[0] * Complex64::from_polar(1.0, -s.delta * t_end), y[1] * Complex64::from_polar(1.0, -s.sigma * t_end))
    }

    fn ode_residual(s: &SwtCoefficients, t_max: f64, n: usize) -> f64 {
        let i = Complex64::new(0.0, 1.0);
        let h = 1e-4;
        (0..n)
            .map(|k| {
                let t = t_max * (k as f64 + 0.5) / n as f64;
                // Fourth-order central difference.
                let dc = (-s.c(t + 2.0 * h) + 8.0 * s.c(t + h) - 8.0 * s.c(t - h) + s.c(t - 2.0 * h)) / (12.0 * h);
                let dd = (-s.d(t + 2.0 * h) + 8.0 * s.d(t + h) - 8.0 * s.d(t - h) + s.d(t - 2.0 * h)) / (12.0 * h);
                let g = s.g.eval(t);
                let rc = dc - (-i * s.delta * s.c(t) + i * g);
                let rd = dd - (-i * s.sigma * s.d(t) - i * g);
                rc.norm().max(rd.norm())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn static_limit_of_coefficients() {
        let q = qubit(1, 5.347, 217.0, 18.0);
        let wr = ghz(6.929);
        let s = swt_coefficients(&q, wr, GTime::static_coupling(q.g0)).unwrap();
        for t in [0.0, 13.7, 500.0] {
            assert!((s.c(t) - Complex64::new(q.g0 / s.delta, 0.0)).norm() < 1e-15);
            assert!((s.d(t) - Complex64::new(-q.g0 / s.sigma, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn closed_forms_reduce_to_printed_forms() {
        // With ḡ₀ = 1, 2ḡ = 1 and φ = φ_c + π/2 the coefficients are the printed cosine forms.
        let (g0, dl, sg, w, p) = (0.11, -9.0, 80.0, 0.5, 0.3);
        let s = SwtCoefficients { g: GTime { g0, g_bar0: 1.0, g_bar: 0.5, omega: w, phi: p + FRAC_PI_2 }, delta: dl, sigma: sg };
        let i = Complex64::new(0.0, 1.0);
        for t in [0.0, 1.3, 77.0] {
            let c = g0 / dl
                + g0 / ((dl - w) * (dl + w))
                    * (dl * (w * t + p).cos() - i * w * (w * t + p).sin() - (-i * dl * t).exp() * (dl * p.cos() - i * w * p.sin()));
            let d = -g0 / sg
                + g0 / ((sg - w) * (sg + w))
                    * (-sg * (w * t + p).cos() + i * w * (w * t + p).sin() + (-i * sg * t).exp() * (sg * p.cos() - i * w * p.sin()));
            assert!((s.c(t) - c).norm() < 1e-15);
            assert!((s.d(t) - d).norm() < 1e-15);
        }
    }

    #[test]
    fn coefficients_satisfy_their_odes() {
        let q = qubit(1, 5.347, 217.0, 18.0);
        let g = GTime { g0: q.g0, g_bar0: 0.93, g_bar: -0.2, omega: mhz(83.0), phi: 0.4 };
        let s = swt_coefficients(&q, ghz(6.929), g).unwrap();
        let r = ode_residual(&s, 1000.0, 10_000);
        assert!(r < 1e-8 * q.g0, "{r}");
    }

    #[test]
    fn integration_reproduces_closed_form() {
        let q = qubit(4, 5.432, 227.0, 17.0);
        let g = GTime { g0: q.g0, g_bar0: 0.9, g_bar: 0.25, omega: mhz(85.0), phi: -1.1 };
        let s = swt_coefficients(&q, ghz(6.929), g).unwrap();
        let t_end = 1000.0;
        let (c, d) = rk4_ode(&s, t_end, 10_000_000);
        assert!((c - s.c(t_end)).norm() < 1e-8 * s.c(t_end).norm(), "{}", (c - s.c(t_end)).norm());
        assert!((d - s.d(t_end)).norm() < 1e-8 * s.d(t_end).norm());
    }

    #[test]
    fn spectrum_matches_closed_form() {
        let q = qubit(1, 5.347, 217.0, 18.0);
        let g = GTime { g0: q.g0, g_bar0: 0.9, g_bar: 0.3, omega: mhz(60.0), phi: 0.7 };
        let s = swt_coefficients(&q, ghz(6.9), g).unwrap();
        let (cs, ds) = (s.c_spectrum(), s.d_spectrum());
        for t in [0.0, 3.3, 812.0] {
            assert!((cs.eval(t) - s.c(t)).norm() < 1e-14);
            assert!((ds.eval(t) - s.d(t)).norm() < 1e-14);
            assert!((s.g.spectrum().eval(t).re - s.g.eval(t)).abs() < 1e-14);
        }
    }

    #[test]
    fn resonant_denominators_rejected() {
        let q = qubit(1, 5.0, 217.0, 18.0);
        let g = GTime { g0: q.g0, g_bar0: 1.0, g_bar: 0.1, omega: mhz(80.0), phi: 0.0 };
        assert!(matches!(swt_coefficients(&q, ghz(5.05), g), Err(BusError::ResonantDenominator { .. })));
        assert!(matches!(swt_coefficients(&q, ghz(5.08), g), Err(BusError::ResonantDenominator { .. })));
        assert!(swt_coefficients(&q, ghz(5.5), g).is_ok());
    }

    #[test]
    fn g12_limits() {
        let q1 = qubit(1, 5.347, 217.0, 18.0);
        let q2 = qubit(7, 5.432, 263.0, 15.0);
        let wr = ghz(6.929);
        assert_eq!(effective_g12(&q1, &q2, wr, (0.0, 0.0)).unwrap(), 0.0);
        let q3 = QubitParams { index: 3, ..q1 };
        let gb = 0.2;
        let g = effective_g12(&q1, &q3, wr, (gb, gb)).unwrap();
        let (dl, sg) = (q1.omega_q - wr, q1.omega_q + wr);
        assert!((g - q1.g0 * q1.g0 * gb * (1.0 / dl + 1.0 / sg)).abs() < 1e-15);
        let a = effective_g12(&q1, &q2, wr, (0.1, 0.3)).unwrap();
        let b = effective_g12(&q2, &q1, wr, (0.3, 0.1)).unwrap();
        assert!((a - b).abs() < 1e-16);
    }

    #[test]
    fn zero_couplings_give_zero_terms() {
        let q = qubit(1, 5.3, 217.0, 18.0);
        let g = GTime { g0: 0.0, g_bar0: 1.0, g_bar: 0.2, omega: mhz(80.0), phi: 0.0 };
        let s = SwtCoefficients { g, delta: q.omega_q - ghz(6.9), sigma: q.omega_q + ghz(6.9) };
        let t = transformed_hamiltonian(&s, &s, 17.0);
        assert_eq!(t.lamb_shift, [0.0, 0.0]);
        assert_eq!(t.stark_shift, [0.0, 0.0]);
        assert_eq!(t.energy_offset, 0.0);
        assert_eq!(t.exchange_g12, Complex64::new(0.0, 0.0));
        assert_eq!(t.two_photon_amp, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn static_limit_of_transformed_terms() {
        let q1 = qubit(1, 5.347, 217.0, 18.0);
        let q2 = qubit(7, 5.432, 263.0, 15.0);
        let wr = ghz(6.929);
        let s1 = swt_coefficients(&q1, wr, GTime::static_coupling(q1.g0)).unwrap();
        let s2 = swt_coefficients(&q2, wr, GTime::static_coupling(q2.g0)).unwrap();
        let st = static_terms(&q1, &q2, &s1, &s2);
        let (d1, sg1) = (s1.delta, s1.sigma);
        let g = q1.g0;
        assert!((st.lamb_shift[0] - 3.0 * g * g * (1.0 / d1 - 1.0 / sg1)).abs() < 1e-15);
        assert!((st.stark_shift[0] - g * g * (1.0 / d1 - 1.0 / sg1)).abs() < 1e-15);
        let inst = transformed_hamiltonian(&s1, &s2, 123.0);
        assert!((inst.lamb_shift[0] - st.lamb_shift[0]).abs() < 1e-15);
        // Static exchange with no modulation: only present at zero qubit-qubit detuning.
        assert_eq!(st.exchange_g12, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn exact_dressed_shift_oracle() {
        // Second-order dispersive shift of −g(σ₋ − σ₊)(a − a†): g²/Δ + g²/Σ, corrections O(g⁴).
        let (wq, wr) = (ghz(5.347), ghz(6.929));
        for g_mhz in [5.0, 10.0, 20.0] {
            let g = mhz(g_mhz);
            let exact = dressed_qubit_shift(g, wq, wr, 6);
            let second = g * g / (wq - wr) + g * g / (wq + wr);
            let fourth = g.powi(4) / (wq - wr).powi(3);
            assert!((exact - second).abs() < 3.0 * fourth.abs(), "{g_mhz}");
        }
    }

    #[test]
    fn time_averages_from_sampling() {
        let q1 = qubit(1, 5.347, 217.0, 18.0);
        let q2 = qubit(7, 5.432, 263.0, 15.0);
        let wr = ghz(6.929);
        let w = q1.omega_q - q2.omega_q;
        let g1 = GTime { g0: q1.g0, g_bar0: 0.93, g_bar: -0.2, omega: w.abs(), phi: 0.0 };
        let g2 = GTime { g0: q2.g0, g_bar0: 0.93, g_bar: -0.2, omega: w.abs(), phi: 0.0 };
        let s1 = swt_coefficients(&q1, wr, g1).unwrap();
        let s2 = swt_coefficients(&q2, wr, g2).unwrap();
        let st = static_terms(&q1, &q2, &s1, &s2);
        // Brute-force average of exchange(t) e^{−i(ω₁−ω₂)t} over many modulation periods.
        let period = 2.0 * PI / w.abs();
        let n_per = 2000;
        let periods = 400;
        let dt = period / n_per as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..n_per * periods {
            let t = (k as f64 + 0.5) * dt;
            acc += transformed_hamiltonian(&s1, &s2, t).exchange_g12 * Complex64::from_polar(1.0, -(q1.omega_q - q2.omega_q) * t);
        }
        acc /= (n_per * periods) as f64;
        assert!((acc - st.exchange_g12).norm() < 0.02 * st.exchange_g12.norm(), "{acc} {}", st.exchange_g12);
    }

    #[test]
    fn two_photon_term_is_small() {
        let q1 = qubit(1, 5.347, 217.0, 18.0);
        let q2 = qubit(7, 5.432, 263.0, 15.0);
        let wr = ghz(6.929);
        let w = q2.omega_q - q1.omega_q;
        let g1 = GTime { g0: q1.g0, g_bar0: 0.93, g_bar: -0.2, omega: w, phi: 0.0 };
        let g2 = GTime { g0: q2.g0, ..g1 };
        let s1 = swt_coefficients(&q1, wr, g1).unwrap();
        let s2 = swt_coefficients(&q2, wr, g2).unwrap();
        let st = static_terms(&q1, &q2, &s1, &s2);
        assert!(st.two_photon_amp.norm() < 0.05 * st.exchange_g12.norm());
        let dt = renormalized_detuning(&q1, &q2, &s1, &s2);
        assert!((dt - (q1.omega_q - q2.omega_q)).abs() < mhz(5.0));
    }

    #[test]
    fn zz_formula_examples() {
        let z = zz_perturbative(mhz(5.0), mhz(100.0), mhz(217.0), mhz(227.0)).unwrap();
        assert!((to_mhz(z) + 0.580).abs() < 0.001, "{}", to_mhz(z));
        assert_eq!(zz_perturbative(mhz(5.0), mhz(100.0), 0.0, 0.0).unwrap(), 0.0);
        // Δ → −Δ flips the sign of the dominant denominator; with α_i ↔ α_j the rate is unchanged.
        let (g, a1, a4) = (mhz(5.0), mhz(217.0), mhz(227.0));
        for d in [mhz(60.0), mhz(400.0)] {
            assert!((d - a1).signum() == -(-d + a1).signum());
            let zp = zz_perturbative(g, d, a1, a4).unwrap();
            let zm = zz_perturbative(g, -d, a4, a1).unwrap();
            assert!((zp - zm).abs() < 1e-15);
        }
        assert!(zz_perturbative(mhz(5.0), mhz(217.0) + mhz(20.0), mhz(217.0), mhz(227.0)).is_err());
    }

    #[test]
    fn zz_exact_matches_formula() {
        let (g, w1, w4) = (mhz(5.0), ghz(5.5), ghz(5.4));
        let exact = zz_exact(g, w1, w4, mhz(217.0), mhz(227.0));
        let pert = zz_perturbative(g, w1 - w4, mhz(217.0), mhz(227.0)).unwrap();
        assert!(((exact - pert) / pert).abs() < 0.01, "{} {}", to_mhz(exact), to_mhz(pert));
        assert_eq!(zz_exact(g, w1, w4, 0.0, 0.0).abs() < 1e-12, true);
    }

    #[test]
    fn multimode_node_and_antinode() {
        let p = BusCircuitParams::fitted_device();
        let wr = ghz(6.0);
        let wq = ghz(5.4);
        let mut q1 = qubit(1, 5.4, 217.0, 18.0);
        let mut q2 = qubit(4, 5.3, 227.0, 17.0);
        q1.dist = Some(node_distance(&p, wq, wr, 0.3));
        q2.dist = Some(0.02);
        let m = multimode_coupling(&q1, &q2, &p, 0.3, wr).unwrap();
        assert!(m.g0_of_f[0].abs() < 1e-12);
        assert!(m.g12.abs() < 1e-12);
        q1.dist = Some(antinode_distance(&p, wq, wr, 0.0));
        let m = multimode_coupling(&q1, &q2, &p, 0.0, wr).unwrap();
        assert!((m.g0_of_f[0] - q1.g0).abs() < 1e-12);
    }

    #[test]
    fn multimode_singular_theta() {
        let p = BusCircuitParams::fitted_device();
        let wr = ghz(6.0);
        let refl = reflection_phase(&p, 0.2, wr);
        // θ = ωℓ/v + φ = 4π.
        let wq = (4.0 * PI - refl) * p.v_ns() / p.length;
        let mut q1 = QubitParams::new(1, wq, mhz(217.0), 0.0, mhz(18.0));
        q1.dist = Some(0.01);
        let q2 = QubitParams { index: 4, dist: Some(0.02), omega_q: ghz(5.3), ..q1 };
        assert!(matches!(multimode_coupling(&q1, &q2, &p, 0.2, wr), Err(BusError::SinThetaSingular { qubit: 1, .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn ode_residual_random(
            wq in 4.5f64..6.0, dwr in 0.4f64..1.5, g0 in 5.0f64..20.0,
            gb0 in 0.5f64..1.0, gb in -0.4f64..0.4, w in 30.0f64..200.0, phi in -3.0f64..3.0,
        ) {
            let q = qubit(1, wq, 220.0, g0);
            let g = GTime { g0: q.g0, g_bar0: gb0, g_bar: gb, omega: mhz(w), phi };
            let s = swt_coefficients(&q, ghz(wq + dwr), g).unwrap();
            prop_assert!(ode_residual(&s, 1000.0, 200) < 1e-8 * q.g0);
        }

        #[test]
        fn g12_exchange_symmetric(gb1 in -0.5f64..0.5, gb2 in -0.5f64..0.5, w1 in 4.5f64..5.8, w2 in 4.5f64..5.8) {
            let q1 = qubit(1, w1, 217.0, 18.0);
            let q2 = qubit(4, w2, 227.0, 17.0);
            let wr = ghz(6.9);
            let a = effective_g12(&q1, &q2, wr, (gb1, gb2)).unwrap();
            let b = effective_g12(&q2, &q1, wr, (gb2, gb1)).unwrap();
            prop_assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-300));
        }

        #[test]
        fn zz_oracle_in_dispersive_box(g in 1.0f64..5.0, dl in -600.0f64..600.0, a1 in 217.0f64..264.0, a2 in 217.0f64..264.0) {
            let (gg, d, al1, al2) = (mhz(g), mhz(dl), mhz(a1), mhz(a2));
            prop_assume!((d - al1).abs() > 50.0 * gg && (d + al2).abs() > 50.0 * gg && d.abs() > 50.0 * gg);
            let exact = zz_exact(gg, ghz(5.4) + d, ghz(5.4), al1, al2);
            let pert = zz_perturbative(gg, d, al1, al2).unwrap();
            prop_assert!(((exact - pert) / pert).abs() < 0.02);
        }
    }
}
