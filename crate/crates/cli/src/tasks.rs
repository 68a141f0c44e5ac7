//! Task runners: each turns a validated config into artifact files.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use parabus::allocation::{allocate, crosstalk_budget, pair_separations, AllocationProblem};
use parabus::circuit::{dc_mode_frequencies, BusCircuitParams, FluxBias};
use parabus::dynamics::{
    chevron_scan, evolve_lindblad, ChevronSpec, EvolveOptions, ExchangeDrive, Observable, Resonator, SystemModel,
    MAX_DIMENSION,
};
use parabus::effective::{effective_g12, floquet_g12, multimode_scan, node_distance, GTime, QubitParams};
use parabus::error::BusError;
use parabus::sideband::{
    check_sideband_collision, parametric_coupling, solve_sidebands, symmetric_squid, undriven_mode, ModulationDrive,
    Parity, SidebandSolution,
};
use parabus::tomography::{
    fsim_unitary, optimize_phi, process_fidelity, process_tomography, readout_correct, ConfusionMatrix, FsimParams,
};
use parabus::units::{ghz, mhz, to_ghz, to_khz, to_mhz};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{pi_units, RunConfig};
use crate::output::{num, OutDir, Table};

/// Failure while running a task.
#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{context}: {source}")]
    Model { context: String, source: BusError },
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

fn ctx(context: impl Into<String>) -> impl FnOnce(BusError) -> TaskError {
    let context = context.into();
    move |source| TaskError::Model { context, source }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

/// Runs `task`, writing artifacts into `out`; returns notes for the manifest.
pub fn run(task: &str, cfg: &RunConfig, seed: u64, out: &mut OutDir) -> Result<Vec<String>, TaskError> {
    match task {
        "spectrum" => spectrum(cfg, out),
        "sidebands" => sidebands(cfg, out),
        "coupling" => coupling(cfg, out),
        "chevron" => chevron(cfg, out),
        "zz-scan" => zz_scan(cfg, out),
        "qpt" => qpt(cfg, out),
        "allocate" => allocation(cfg, seed, out),
        _ => unreachable!("task names are checked at parse time"),
    }
}

fn params(cfg: &RunConfig) -> BusCircuitParams {
    cfg.device().expect("validated")
}

fn spectrum(cfg: &RunConfig, out: &mut OutDir) -> Result<Vec<String>, TaskError> {
    let t = cfg.spectrum.as_ref().unwrap();
    let p = params(cfg);
    let fluxes = linspace(t.f_min_pi, t.f_max_pi, t.points);
    let rows: Vec<Result<Vec<f64>, BusError>> = fluxes
        .par_iter()
        .map(|&f| dc_mode_frequencies(&p, &FluxBias::symmetric(pi_units(f))?, t.modes).map(|s| s.frequencies()))
        .collect();
    let mut table = Table::new(&["bias_pi_units", "mode_index", "freq_ghz"]);
    for (f, r) in fluxes.iter().zip(rows) {
        let freqs = r.map_err(ctx(format!("spectrum at F = {f} pi")))?;
        for (n, w) in freqs.iter().enumerate() {
            table.push(vec![num(*f, 6), (n + 1).to_string(), num(to_ghz(*w), 9)]);
        }
    }
    out.write_table("spectrum.csv", &table)?;
    Ok(vec!["symmetric bias F+ = F- = F".into()])
}

struct CellSolution {
    delta_f_pi: f64,
    omega_f_ghz: f64,
    solution: SidebandSolution,
}

fn sideband_grid(cfg: &RunConfig, f_pi: f64, mode: usize, dfs: &[f64], wfs: &[f64]) -> Result<Vec<CellSolution>, TaskError> {
    let p = params(cfg);
    let f = pi_units(f_pi);
    let guess = undriven_mode(&p, f, mode).map_err(ctx(format!("mode {mode} at F = {f_pi} pi")))?;
    let cells: Vec<(f64, f64)> = dfs.iter().flat_map(|&d| wfs.iter().map(move |&w| (d, w))).collect();
    cells
        .par_iter()
        .map(|&(d, w)| {
            let label = format!("delta_f = {d} pi, omega_f = {w} GHz");
            let drive = ModulationDrive::in_phase(f, pi_units(d), ghz(w)).map_err(ctx(label.clone()))?;
            let solution = solve_sidebands(&p, &drive, guess, Parity::of_mode(mode), cfg.truncation).map_err(ctx(label))?;
            Ok(CellSolution { delta_f_pi: d, omega_f_ghz: w, solution })
        })
        .collect()
}

const SIDEBAND_HEADER: [&str; 5] = ["delta_f_pi", "omega_f_ghz", "omega_r_ghz", "g_bar", "g_par_mhz"];

fn sidebands(cfg: &RunConfig, out: &mut OutDir) -> Result<Vec<String>, TaskError> {
    let t = cfg.sidebands.as_ref().unwrap();
    let q = cfg.pick(&[t.qubit], "sidebands.qubit", &[1]).expect("validated")[0];
    let p = params(cfg);
    let cells = sideband_grid(cfg, t.f_pi, t.mode, &t.delta_grid().expect("validated"), &t.omega_f_ghz)?;
    let mut table = Table::new(&SIDEBAND_HEADER);
    let mut amps = Table::new(&["delta_f_pi", "omega_f_ghz", "order", "re", "im"]);
    for c in &cells {
        let pc = parametric_coupling(&c.solution, &p, q.index, q.x, q.g0);
        table.push(vec![num(c.delta_f_pi, 6), num(c.omega_f_ghz, 6), num(to_ghz(c.solution.omega_r), 9), num(pc.g_bar, 9), num(to_mhz(pc.g_par), 6)]);
        let n = c.solution.truncation as i64;
        for m in -n..=n {
            let a = c.solution.amplitude(m);
            amps.push(vec![num(c.delta_f_pi, 6), num(c.omega_f_ghz, 6), m.to_string(), num(a.re, 12), num(a.im, 12)]);
        }
    }
    out.write_table("sidebands.csv", &table)?;
    out.write_table("sideband_amplitudes.csv", &amps)?;
    Ok(vec![format!("truncation N = {}, parity {:?}", cfg.truncation, Parity::of_mode(t.mode))])
}

fn coupling(cfg: &RunConfig, out: &mut OutDir) -> Result<Vec<String>, TaskError> {
    let t = cfg.coupling.as_ref().unwrap();
    let qs = cfg.pick(&t.qubits, "coupling.qubits", &[1, 2]).expect("validated");
    let p = params(cfg);
    let cells = sideband_grid(cfg, t.f_pi, t.mode, &t.delta_grid().expect("validated"), &t.omega_f_ghz)?;
    let mut header = SIDEBAND_HEADER.to_vec();
    if qs.len() == 2 {
        header.extend(["g_bar_2", "g12_mhz", "g12_floquet_mhz"]);
    }
    let mut table = Table::new(&header);
    for c in &cells {
        let a = parametric_coupling(&c.solution, &p, qs[0].index, qs[0].x, qs[0].g0);
        let mut row = vec![num(c.delta_f_pi, 6), num(c.omega_f_ghz, 6), num(to_ghz(c.solution.omega_r), 9), num(a.g_bar, 9), num(to_mhz(a.g_par), 6)];
        if qs.len() == 2 {
            let b = parametric_coupling(&c.solution, &p, qs[1].index, qs[1].x, qs[1].g0);
            let wr = c.solution.omega_r;
            let label = format!("pair coupling at delta_f = {} pi", c.delta_f_pi);
            let g12 = effective_g12(&qs[0], &qs[1], wr, (a.g_bar, b.g_bar)).map_err(ctx(label.clone()))?;
            let gf = floquet_g12(&qs[0], &qs[1], wr, (a.g_bar0, b.g_bar0), (a.g_bar, b.g_bar)).map_err(ctx(label))?;
            row.extend([num(b.g_bar, 9), num(to_mhz(g12), 6), num(to_mhz(gf), 6)]);
        }
        table.push(row);
    }
    out.write_table("coupling.csv", &table)?;
    Ok(vec!["g12_mhz uses the closed-form pair coupling; g12_floquet_mhz keeps the static-coupling cross terms".into()])
}

/// Chevron model dimension for validation.
pub fn chevron_dimension(cfg: &RunConfig) -> f64 {
    let t = cfg.chevron.as_ref().unwrap();
    (t.levels as f64).powi(t.qubits.len() as i32) * (cfg.fock_cutoff + 1) as f64
}

fn chevron(cfg: &RunConfig, out: &mut OutDir) -> Result<Vec<String>, TaskError> {
    let t = cfg.chevron.as_ref().unwrap();
    let qs = cfg.pick(&t.qubits, "chevron.qubits", &[1, 2]).expect("validated");
    let p = params(cfg);
    let w_mid = 0.5 * (t.omega_f_mhz_min + t.omega_f_mhz_max);
    let cell = sideband_grid(cfg, t.f_pi, t.mode, &[t.delta_f_pi], &[w_mid / 1000.0])?.remove(0);
    let wr = cell.solution.omega_r;
    let gts: Vec<(f64, f64)> = qs
        .iter()
        .map(|q| {
            let c = parametric_coupling(&cell.solution, &p, q.index, q.x, q.g0);
            (c.g_bar0, c.g_bar)
        })
        .collect();
    let (levels, fock) = (t.levels, cfg.fock_cutoff);
    let qv = qs.clone();
    let build = move |w: f64| {
        let couplings = qv.iter().zip(&gts).map(|(q, &(g_bar0, g_bar))| GTime { g0: q.g0, g_bar0, g_bar, omega: w, phi: 0.0 }).collect();
        SystemModel::with_bus(qv.clone(), levels, Resonator { omega_r: wr, n_max: fock }, couplings)
    };
    build(mhz(w_mid)).validate().map_err(ctx("chevron model"))?;
    let (initial, target) = if qs.len() == 1 { (vec![1], Observable::BusOccupied) } else { (vec![1, 0], Observable::QubitExcited(1)) };
    let spec = ChevronSpec {
        initial,
        target,
        omega_f: linspace(mhz(t.omega_f_mhz_min), mhz(t.omega_f_mhz_max), t.omega_f_points),
        t_final: t.t_final_ns,
        n_t: t.t_points,
        dt: None,
        refine: t.omega_f_points >= 3,
    };
    let res = chevron_scan(build, &spec).map_err(ctx("chevron scan"))?;
    let mut table = Table::new(&["omega_f_mhz", "t_ns", "p_target"]);
    for (w, row) in res.omega_f.iter().zip(&res.grid) {
        for (tt, pv) in res.times.iter().zip(row) {
            table.push(vec![num(to_mhz(*w), 6), num(*tt, 4), num(*pv, 9)]);
        }
    }
    out.write_table("chevron.csv", &table)?;
    let mut fit = Table::new(&["center_mhz", "rate_mhz", "rate_ci_mhz", "r2"]);
    fit.push(vec![num(to_mhz(res.center), 6), num(to_mhz(res.fit.rate), 6), num(to_mhz(res.fit.rate_ci), 6), num(res.fit.r2, 6)]);
    out.write_table("chevron_fit.csv", &fit)?;
    Ok(vec![format!(
        "sideband couplings evaluated once at omega_f = {w_mid} MHz and held across the window; bus at {:.9} GHz",
        to_ghz(wr)
    )])
}

fn zz_scan(cfg: &RunConfig, out: &mut OutDir) -> Result<Vec<String>, TaskError> {
    let t = cfg.zz_scan.as_ref().unwrap();
    let mut qs = cfg.pick(&t.qubits, "zz-scan.qubits", &[2]).expect("validated");
    let p = params(cfg);
    let mode_at = |f_pi: f64| -> Result<f64, TaskError> {
        let s = dc_mode_frequencies(&p, &FluxBias::symmetric(pi_units(f_pi)).map_err(ctx("flux"))?, t.mode)
            .map_err(ctx(format!("mode {} at F = {f_pi} pi", t.mode)))?;
        Ok(s.frequency(t.mode).expect("mode present"))
    };
    let w_op = mode_at(t.f_operating_pi)?;
    let det = (qs[0].omega_q - w_op, qs[1].omega_q - w_op);
    let w_node = mode_at(t.f_node_pi)?;
    for (q, d) in qs.iter_mut().zip([det.0, det.1]) {
        if q.dist.is_none() {
            q.dist = Some(node_distance(&p, w_node + d, w_node, pi_units(t.f_node_pi)));
        }
    }
    let fluxes: Vec<f64> = linspace(t.f_min_pi, t.f_max_pi, t.points).into_iter().map(pi_units).collect();
    let scan = multimode_scan(&qs[0], &qs[1], &p, t.mode, det, &fluxes).map_err(ctx("multimode scan"))?;
    let mut table = Table::new(&["F_pi_units", "zeta_khz", "g14_mhz"]);
    for s in &scan {
        table.push(vec![num(s.f / PI, 6), num(to_khz(s.zeta), 6), num(to_mhz(s.coupling.g12), 6)]);
    }
    out.write_table("zz_scan.csv", &table)?;
    Ok(vec![format!(
        "qubit-bus detunings fixed at F = {} pi: {:.3} MHz, {:.3} MHz; boundary distances {:.6} m, {:.6} m",
        t.f_operating_pi,
        to_mhz(det.0),
        to_mhz(det.1),
        qs[0].dist.unwrap(),
        qs[1].dist.unwrap()
    )])
}

fn qpt(cfg: &RunConfig, out: &mut OutDir) -> Result<Vec<String>, TaskError> {
    let t = cfg.qpt.as_ref().unwrap();
    let est = match t.channel.as_str() {
        "fsim" => {
            let u = fsim_unitary(FsimParams::new(pi_units(t.theta_pi), pi_units(t.beta_pi), t.phi_rad));
            process_tomography(|rho: &DMatrix<_>| &u * rho * u.adjoint()).map_err(ctx("process tomography"))?
        }
        _ => {
            let qs = cfg.pick(&t.qubits, "qpt.qubits", &[2]).expect("validated");
            let g = mhz(t.g12_mhz.unwrap());
            let tau = t.tau_ns.unwrap_or(PI / (2.0 * g));
            let w = (qs[1].omega_q - qs[0].omega_q).abs();
            let mut model = SystemModel::qubits_only(qs, 2, vec![ExchangeDrive { i: 0, j: 1, g, omega: w, t_on: 0.0, t_off: f64::INFINITY }]);
            model.dissipation = true;
            let opts = EvolveOptions::for_model(&model, 1);
            let err = std::sync::Mutex::new(None);
            let est = process_tomography(|rho: &DMatrix<_>| match evolve_lindblad(&model, rho, tau, opts) {
                Ok(mut tr) => tr.states.pop().unwrap(),
                Err(e) => {
                    err.lock().unwrap().get_or_insert(e);
                    rho.clone()
                }
            })
            .map_err(ctx("process tomography"))?;
            if let Some(e) = err.into_inner().unwrap() {
                return Err(ctx("lindblad channel")(e));
            }
            est
        }
    };
    let (theta, beta) = (pi_units(t.target_theta_pi), pi_units(t.target_beta_pi));
    let (phi, fid) = if t.optimize_phi {
        optimize_phi(&est, theta, beta)
    } else {
        (0.0, process_fidelity(&est, &fsim_unitary(FsimParams::new(theta, beta, 0.0))))
    };
    let mut report = String::new();
    report.push_str("fidelity_definition = tr(chi_ideal * chi_meas), trace-normalized chi in the Pauli basis\n");
    report.push_str(&format!("channel = {}\n", t.channel));
    report.push_str(&format!("min_choi_eigenvalue = {}\n", num(est.min_eigenvalue, 12)));
    report.push_str(&format!("projected = {}\n", est.projected));
    report.push_str(&format!("iteration = 1\nfidelity = {}\n", num(fid, 12)));
    report.push_str(&format!("optimal_phi_rad = {}\n", num(phi, 9)));
    report.push_str("chi (row-major, re im):\n");
    for r in 0..est.chi.nrows() {
        let line: Vec<String> = (0..est.chi.ncols()).map(|c| format!("{} {}", num(est.chi[(r, c)].re, 9), num(est.chi[(r, c)].im, 9))).collect();
        report.push_str(&line.join(", "));
        report.push('\n');
    }
    out.write("qpt_report.txt", report.as_bytes())?;
    let mut chi = Table::new(&["m", "n", "re", "im"]);
    for r in 0..est.chi.nrows() {
        for c in 0..est.chi.ncols() {
            chi.push(vec![r.to_string(), c.to_string(), num(est.chi[(r, c)].re, 12), num(est.chi[(r, c)].im, 12)]);
        }
    }
    out.write_table("chi.csv", &chi)?;
    let mut notes = vec!["process fidelity = tr(chi_ideal chi_meas)".to_string()];
    if let Some(ro) = &t.readout {
        let n = ro.confusion.len();
        let flat: Vec<f64> = ro.confusion.iter().flatten().copied().collect();
        if flat.len() != n * n {
            return Err(ctx("readout")(BusError::InvalidParameter("confusion matrix must be square".into())));
        }
        let c = ConfusionMatrix::new(DMatrix::from_row_slice(n, n, &flat)).map_err(ctx("readout"))?;
        let q = readout_correct(&c, &ro.measured, ro.clip).map_err(ctx("readout"))?;
        let bits = n.trailing_zeros() as usize;
        let mut table = Table::new(&["state", "probability", "clipped"]);
        for (k, v) in q.probabilities.iter().enumerate() {
            table.push(vec![format!("{k:0bits$b}"), num(*v, 12), q.clipped.to_string()]);
        }
        out.write_table("readout.csv", &table)?;
        notes.push(format!("readout condition number {:.3}", c.condition_number()));
    }
    Ok(notes)
}

fn allocation(cfg: &RunConfig, seed: u64, out: &mut OutDir) -> Result<Vec<String>, TaskError> {
    let t = cfg.allocate.as_ref().unwrap();
    let problem = AllocationProblem {
        n_qubits: t.n_qubits,
        omega_r: ghz(t.omega_r_ghz),
        bandwidth: ghz(t.bandwidth_ghz),
        min_bus_detuning: mhz(t.min_bus_detuning_mhz),
        neighbor_mode_guard: mhz(t.neighbor_guard_mhz),
        neighbor_modes: t.neighbor_modes_ghz.iter().map(|&g| ghz(g)).collect(),
    };
    let res = allocate(&problem, seed).map_err(ctx("allocation"))?;
    let mut freqs = Table::new(&["qubit_index", "freq_ghz"]);
    for (k, w) in res.frequencies.iter().enumerate() {
        freqs.push(vec![(k + 1).to_string(), num(to_ghz(*w), 9)]);
    }
    out.write_table("allocation.csv", &freqs)?;
    let mut summary = Table::new(&["s_min_mhz", "g_eff_max_mhz"]);
    summary.push(vec![num(to_mhz(res.s_min), 6), num(to_mhz(crosstalk_budget(&res)), 6)]);
    out.write_table("allocation_summary.csv", &summary)?;
    let mut pairs = Table::new(&["pair", "delta_ghz", "min_sep_mhz"]);
    for ps in pair_separations(&res.frequencies) {
        pairs.push(vec![format!("{}-{}", ps.i + 1, ps.j + 1), num(to_ghz(ps.delta), 9), num(to_mhz(ps.min_separation), 6)]);
    }
    out.write_table("pair_detunings.csv", &pairs)?;
    Ok(vec!["crosstalk budget g_eff_max = s_min/4".into()])
}

/// Dry-run checks; returns the list of violations.
pub fn validate(cfg: &RunConfig, task: &str) -> Vec<String> {
    let mut v = Vec::new();
    if let Err(e) = cfg.validate_static(task) {
        v.push(e.to_string());
        return v;
    }
    let p = params(cfg);
    let qubits = cfg.qubits().unwrap_or_default();
    let sideband_inputs: Option<(f64, usize, Vec<f64>, Vec<usize>)> = match task {
        "sidebands" => cfg.sidebands.as_ref().map(|t| (t.f_pi, t.mode, t.omega_f_ghz.iter().map(|&w| ghz(w)).collect(), vec![t.qubit])),
        "coupling" => cfg.coupling.as_ref().map(|t| (t.f_pi, t.mode, t.omega_f_ghz.iter().map(|&w| ghz(w)).collect(), t.qubits.clone())),
        "chevron" => cfg.chevron.as_ref().map(|t| (t.f_pi, t.mode, vec![mhz(t.omega_f_mhz_min), mhz(t.omega_f_mhz_max)], t.qubits.clone())),
        _ => None,
    };
    if let Some((f_pi, mode, wfs, labels)) = sideband_inputs {
        match undriven_mode(&p, pi_units(f_pi), mode) {
            Ok(wr) => {
                let sym = symmetric_squid(&p);
                for w in wfs {
                    let drive = ModulationDrive::in_phase(pi_units(f_pi), 0.0, w);
                    if let Ok(d) = drive {
                        if let Err(e) = check_sideband_collision(&sym, &d, wr) {
                            v.push(format!("degenerate sidebands at omega_f = {:.6} GHz: {e}", to_ghz(w)));
                        }
                    }
                }
                for l in labels {
                    if let Some(q) = qubits.get(&l) {
                        if (q.omega_q - wr).abs() < 10.0 * q.g0 {
                            v.push(format!("qubit {l}: bus detuning {:.3} MHz below 10 g0", to_mhz(q.omega_q - wr)));
                        }
                    }
                }
            }
            Err(e) => v.push(format!("mode {mode}: {e}")),
        }
    }
    if task == "chevron" {
        let dim = chevron_dimension(cfg);
        if dim > MAX_DIMENSION as f64 {
            v.push(format!("Hilbert dimension {dim} exceeds bound {MAX_DIMENSION}"));
        }
    }
    if task == "zz-scan" {
        let t = cfg.zz_scan.as_ref().unwrap();
        for l in &t.qubits {
            if let Some(q) = qubits.get(l) {
                check_pair_bound(q, &mut v);
            }
        }
    }
    v
}

fn check_pair_bound(q: &QubitParams, v: &mut Vec<String>) {
    if q.alpha <= 0.0 {
        v.push(format!("qubit {}: anharmonicity must be positive for the ZZ model", q.index));
    }
}
