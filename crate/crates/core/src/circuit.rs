//! Static circuit model of the SQUID-terminated bus: effective Josephson energy,
//! boundary parameter λ_k, the DC mode spectrum, the boundary reflection phase
//! and a derivative-free fit of circuit parameters to spectrum samples.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{BusError, Result};
use crate::numerics::{brent_root, median, nelder_mead, NelderMeadOptions};
use crate::units::{m_per_ns, C_LIGHT, TWO_PI};

/// Circuit parameters of the tunable bus.
///
/// Energies are in GHz (E/h), `v` in m/s, `length` in m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusCircuitParams {
    /// Boundary-junction charging energy E_C.
    pub e_c: f64,
    /// Total SQUID Josephson energy E_J (both boundary SQUIDs identical).
    pub e_j_sum: f64,
    /// Bulk inductive energy E_L at zero flux.
    pub e_l0: f64,
    /// Phase velocity in the waveguide, m/s.
    pub v: f64,
    /// Bus length ℓ, m.
    pub length: f64,
    /// SQUID junction asymmetry d = (E_J1 - E_J2)/(E_J1 + E_J2).
    pub asym: f64,
}

impl BusCircuitParams {
    /// Fitted device parameters: predicted values scaled by the fitted ratios.
    pub fn fitted_device() -> Self {
        Self {
            e_c: 9.68 * 0.202,
            e_j_sum: 397.0 * 1.11,
            e_l0: 5.11 * 0.757,
            v: 0.49 * 1.26 * C_LIGHT,
            length: 0.1055,
            asym: 0.0663,
        }
    }

    /// Checks the field invariants.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("e_c", self.e_c),
            ("e_j_sum", self.e_j_sum),
            ("e_l0", self.e_l0),
            ("v", self.v),
            ("length", self.length),
        ];
        for (name, x) in positive {
            if !(x.is_finite() && x > 0.0) {
                return Err(BusError::InvalidParameter(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.asym.is_finite() && (0.0..1.0).contains(&self.asym)) {
            return Err(BusError::InvalidParameter(format!("asym must lie in [0, 1), got {}", self.asym)));
        }
        Ok(())
    }

    /// Charging energy as angular frequency, rad/ns.
    pub fn e_c_w(&self) -> f64 {
        TWO_PI * self.e_c
    }

    /// Total Josephson energy as angular frequency, rad/ns.
    pub fn e_j_w(&self) -> f64 {
        TWO_PI * self.e_j_sum
    }

    /// Inductive energy as angular frequency, rad/ns.
    pub fn e_l_w(&self) -> f64 {
        TWO_PI * self.e_l0
    }

    /// Phase velocity in m/ns.
    pub fn v_ns(&self) -> f64 {
        m_per_ns(self.v)
    }

    /// Junction plasma frequency ω_J = √(2 E_C E_J), rad/ns.
    pub fn omega_j(&self) -> f64 {
        (2.0 * self.e_c_w() * self.e_j_w()).sqrt()
    }

    /// η = E_L / E_J.
    pub fn eta(&self) -> f64 {
        self.e_l0 / self.e_j_sum
    }

    /// α = 2 / ω_J², ns².
    pub fn alpha(&self) -> f64 {
        2.0 / (self.omega_j() * self.omega_j())
    }

    /// Ideal half-wave free spectral range πv/ℓ, rad/ns.
    pub fn ideal_fsr(&self) -> f64 {
        PI * self.v_ns() / self.length
    }
}

/// Reduced boundary fluxes f = πΦ_ext/Φ₀ at the two boundary SQUIDs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxBias {
    pub f_plus: f64,
    pub f_minus: f64,
}

/// Wraps a reduced flux into [-π/2, π/2]; E_J(f) has period π.
pub fn wrap_flux(f: f64) -> f64 {
    if (-FRAC_PI_2..=FRAC_PI_2).contains(&f) {
        return f;
    }
    let w = f - PI * (f / PI).round();
    w.clamp(-FRAC_PI_2, FRAC_PI_2)
}

impl FluxBias {
    /// Constructs a bias, wrapping each flux into the canonical range.
    pub fn new(f_plus: f64, f_minus: f64) -> Result<Self> {
        if !(f_plus.is_finite() && f_minus.is_finite()) {
            return Err(BusError::InvalidParameter("flux must be finite".into()));
        }
        Ok(Self { f_plus: wrap_flux(f_plus), f_minus: wrap_flux(f_minus) })
    }

    /// Same flux at both boundaries.
    pub fn symmetric(f: f64) -> Result<Self> {
        Self::new(f, f)
    }
}

/// Ordered list of (mode index, angular frequency in rad/ns).
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpectrum {
    pub modes: Vec<(usize, f64)>,
}

impl ModeSpectrum {
    /// Frequency of mode `n` (1-based), if present.
    pub fn frequency(&self, n: usize) -> Option<f64> {
        self.modes.iter().find(|(i, _)| *i == n).map(|(_, w)| *w)
    }

    /// Angular frequencies in index order.
    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|(_, w)| *w).collect()
    }

    /// Checks ordering and the spacing invariant (each gap within 50% of the median gap).
    pub fn check(&self) -> Result<()> {
        let w = self.frequencies();
        if w.len() < 3 {
            return Ok(());
        }
        let gaps: Vec<f64> = w.windows(2).map(|p| p[1] - p[0]).collect();
        let med = median(&gaps);
        for (i, g) in gaps.iter().enumerate() {
            if *g <= 0.0 || (g - med).abs() > 0.5 * med {
                return Err(BusError::MissedMode { index: i + 1, spacing: *g, median: med });
            }
        }
        Ok(())
    }
}

/// Effective SQUID Josephson energy E_J(f) = E_J,Σ |cos f| √(1 + d² tan² f), in GHz.
pub fn effective_josephson_energy(params: &BusCircuitParams, f: f64) -> f64 {
    let (s, c) = f.sin_cos();
    if params.asym == 0.0 {
        return params.e_j_sum * c.abs();
    }
    let d = params.asym;
    params.e_j_sum * (c * c + d * d * s * s).sqrt()
}

/// λ_k(f) = [(kv)²/E_C − 2E_J(f)] / (E_L k ℓ) with energies in rad/ns and `k` in rad/m.
pub fn lambda_k(params: &BusCircuitParams, k: f64, f: f64) -> f64 {
    let w = k * params.v_ns();
    let ej = TWO_PI * effective_josephson_energy(params, f);
    (w * w / params.e_c_w() - 2.0 * ej) / (params.e_l_w() * k * params.length)
}

/// Pole-free form of the mode equation,
/// (λ₋ + λ₊) cos kℓ − (λ₋λ₊ − 1) sin kℓ, whose zeros are the bus modes.
pub fn mode_function(params: &BusCircuitParams, bias: &FluxBias, k: f64) -> f64 {
    let lp = lambda_k(params, k, bias.f_plus);
    let lm = lambda_k(params, k, bias.f_minus);
    let (s, c) = (k * params.length).sin_cos();
    (lm + lp) * c - (lm * lp - 1.0) * s
}

/// Samples per pole interval used to localize sign changes before refinement.
const SAMPLES_PER_INTERVAL: usize = 64;

/// Lowest `n_max` mode frequencies (rad/ns) of the DC boundary-value problem.
///
/// The wavenumber axis is split at the poles of tan kℓ, kℓ = (m + ½)π. Each interval
/// is sampled on a uniform grid to localize sign changes, and every bracket is refined
/// with Brent's method to 1e-12 relative in k.
pub fn dc_mode_frequencies(params: &BusCircuitParams, bias: &FluxBias, n_max: usize) -> Result<ModeSpectrum> {
    params.validate()?;
    if n_max == 0 {
        return Err(BusError::InvalidParameter("n_max must be at least 1".into()));
    }
    let l = params.length;
    let f = |k: f64| mode_function(params, bias, k);
    let mut roots: Vec<f64> = Vec::with_capacity(n_max);
    let mut m = 0usize;
    // Far more intervals than modes can only occur for pathological parameters.
    let max_intervals = 4 * n_max + 16;
    while roots.len() < n_max {
        if m > max_intervals {
            return Err(BusError::RootBracketingFailed { kl: (m as f64 + 0.5) * PI });
        }
        let lo_kl = if m == 0 { 1e-9 } else { (m as f64 - 0.5) * PI };
        let hi_kl = (m as f64 + 0.5) * PI;
        let h = (hi_kl - lo_kl) / SAMPLES_PER_INTERVAL as f64;
        let mut prev_k = lo_kl / l;
        let mut prev_f = f(prev_k);
        for j in 1..=SAMPLES_PER_INTERVAL {
            let k = (lo_kl + j as f64 * h) / l;
            let fk = f(k);
            if prev_f == 0.0 {
                push_root(&mut roots, prev_k);
            } else if prev_f.signum() != fk.signum() && fk != 0.0 {
                let r = brent_root(f, prev_k, k, 1e-13 * k)
                    .ok_or(BusError::RootBracketingFailed { kl: prev_k * l })?;
                push_root(&mut roots, r);
            }
            prev_k = k;
            prev_f = fk;
        }
        m += 1;
    }
    roots.truncate(n_max);
    let vns = params.v_ns();
    let spectrum = ModeSpectrum { modes: roots.iter().enumerate().map(|(i, k)| (i + 1, k * vns)).collect() };
    spectrum.check()?;
    Ok(spectrum)
}

fn push_root(roots: &mut Vec<f64>, k: f64) {
    if let Some(last) = roots.last() {
        if (k - last).abs() <= 1e-12 * k {
            return;
        }
    }
    roots.push(k);
}

/// Effective boundary length L_eff(f) = E_L ℓ / (2 E_J(f)), in m.
///
/// This is the Robin length of the boundary condition implied by λ_k when the
/// junction capacitance is neglected, i.e. the SQUID inductance expressed in units
/// of the bulk inductance per unit length.
pub fn effective_boundary_length(params: &BusCircuitParams, f: f64) -> f64 {
    let ej = effective_josephson_energy(params, f);
    params.e_l0 * params.length / (2.0 * ej)
}

/// Reflection phase φ(f) = arg[(1 + i x)/(1 − i x)] with x = (ω_r/v) L_eff(f).
///
/// Zero for a perfect short and π/2 at x = 1. Confined to (−π, π).
pub fn reflection_phase(params: &BusCircuitParams, f: f64, omega_r: f64) -> f64 {
    let x = omega_r / params.v_ns() * effective_boundary_length(params, f);
    if !x.is_finite() {
        return PI;
    }
    let num = Complex64::new(1.0, x);
    let den = Complex64::new(1.0, -x);
    (num / den).arg()
}

/// One spectrum sample: bias, 1-based mode index, angular frequency in rad/ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSample {
    pub bias: FluxBias,
    pub mode: usize,
    pub omega: f64,
}

/// Output of [`fit_circuit_params`].
#[derive(Debug, Clone)]
pub struct FitReport {
    pub params: BusCircuitParams,
    /// Model minus sample, rad/ns, in input order.
    pub residuals: Vec<f64>,
    /// Root-mean-square residual, rad/ns.
    pub rms: f64,
    pub iterations: usize,
}

/// Model frequencies for a list of samples; `None` if any spectrum solve fails.
pub fn model_frequencies(params: &BusCircuitParams, samples: &[SpectrumSample]) -> Option<Vec<f64>> {
    let n_max = samples.iter().map(|s| s.mode).max()?;
    let mut cache: Vec<(FluxBias, ModeSpectrum)> = Vec::new();
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let spec = match cache.iter().find(|(b, _)| *b == s.bias) {
            Some((_, sp)) => sp.clone(),
            None => {
                let sp = dc_mode_frequencies(params, &s.bias, n_max).ok()?;
                cache.push((s.bias, sp.clone()));
                sp
            }
        };
        out.push(spec.frequency(s.mode)?);
    }
    Some(out)
}

/// Least-squares fit of {e_c, e_j_sum, v, asym} to spectrum samples by Nelder-Mead.
///
/// The mode equation depends on the three energies only through E_C·E_L and E_J/E_L,
/// so `e_l0` is held at its initial value and the other energies absorb the scale.
/// Positive fields are optimized in log space; `asym` is folded into [0, 1).
pub fn fit_circuit_params(samples: &[SpectrumSample], initial_guess: &BusCircuitParams) -> Result<FitReport> {
    initial_guess.validate()?;
    let distinct_modes = {
        let mut m: Vec<usize> = samples.iter().map(|s| s.mode).collect();
        m.sort_unstable();
        m.dedup();
        m.len()
    };
    if samples.len() < 5 || distinct_modes < 2 {
        return Err(BusError::FitDiverged(format!(
            "under-determined: {} samples over {} mode indices (need at least 5 over 2)",
            samples.len(),
            distinct_modes
        )));
    }
    let scale = samples.iter().map(|s| s.omega).fold(0.0, f64::max);
    let unpack = |x: &[f64]| BusCircuitParams {
        e_c: initial_guess.e_c * x[0].exp(),
        e_j_sum: initial_guess.e_j_sum * x[1].exp(),
        e_l0: initial_guess.e_l0,
        v: initial_guess.v * x[2].exp(),
        length: initial_guess.length,
        asym: fold_asym(x[3]),
    };
    let objective = |x: &[f64]| -> f64 {
        let p = unpack(x);
        match model_frequencies(&p, samples) {
            Some(w) => w.iter().zip(samples).map(|(m, s)| ((m - s.omega) / scale).powi(2)).sum(),
            None => 1e6,
        }
    };
    let x0 = [0.0, 0.0, 0.0, initial_guess.asym];
    let step = [0.05, 0.05, 0.02, 0.02];
    let opts = NelderMeadOptions { max_iter: 5000, stall_limit: 200, ftol: 1e-16, xtol: 1e-11 };
    let mut res = nelder_mead(objective, &x0, &step, &opts);
    // One restart from the optimum refreshes a possibly collapsed simplex.
    if !res.stalled {
        let again = nelder_mead(objective, &res.x, &[0.01, 0.01, 0.005, 0.005], &opts);
        if again.fx <= res.fx {
            let iters = res.iterations + again.iterations;
            res = again;
            res.iterations = iters;
        }
    }
    if res.stalled && res.fx > 1e-12 {
        return Err(BusError::FitDiverged(format!(
            "no improvement for {} iterations (objective {:.3e})",
            opts.stall_limit, res.fx
        )));
    }
    let params = unpack(&res.x);
    let model = model_frequencies(&params, samples)
        .ok_or_else(|| BusError::FitDiverged("spectrum solve failed at optimum".into()))?;
    let residuals: Vec<f64> = model.iter().zip(samples).map(|(m, s)| m - s.omega).collect();
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(FitReport { params, residuals, rms, iterations: res.iterations })
}

fn fold_asym(a: f64) -> f64 {
    a.abs().min(0.999)
}
