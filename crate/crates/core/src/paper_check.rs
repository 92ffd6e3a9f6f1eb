//! Reproduction of the published reference figures and the acceptance
//! checks, with a machine-readable pass/fail ledger.
//!
//! Every check pins its tolerance in code and reports the computed value
//! next to the published figure it targets. The order-of-magnitude ledger
//! deliberately evaluates the two estimate formulas in their native measure
//! (no 2π bookkeeping, vacuum wave number), because that is the arithmetic
//! the published prefactors come from; the crate's Hz-convention values are
//! reported alongside.

use std::f64::consts::{PI, TAU};
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ensemble::{self, CrystalConfig, IonSite};
use crate::error::{Error, Result};
use crate::holeburn::{
    attach_ground_truth, burn, default_burn_transition, detect_pairs, line_centers,
    select_ensemble, synth_spectrum, FrequencyGrid, Occupation,
};
use crate::interactions::{
    crossover_distance, dipole_shift_estimate, dipole_shift_full, moments_from_u2,
    quad_shift_estimate, quad_shift_full, AxisConvention, CouplingTable, SecondMoments,
    StaticMoments,
};
use crate::ion::{IonDatabase, LevelScheme, Role};
use crate::protocols::{
    cnot_plan, default_fidelity_inputs, execute, gate_fidelity, ExecOptions, IdealGate,
    PhaseConvention,
};
use crate::pulse::{
    apply_pulse, pi_pulse_field, pi_pulse_field_via_dipole, power_density,
    single_qubit_unitary, transfer_probability, EnsembleState, PulseSpec, SimSystem,
};
use crate::{phys, pulse};

/// Outcome of one check: the computed value, the published figure it is
/// held against, and the verdict.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub computed: String,
    pub reference: String,
    /// computed/reference when both are single numbers.
    pub ratio: Option<f64>,
    pub runtime_s: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(id: &str, name: &str) -> Self {
        CheckResult {
            id: id.into(),
            name: name.into(),
            passed: false,
            computed: String::new(),
            reference: String::new(),
            ratio: None,
            runtime_s: 0.0,
            detail: String::new(),
        }
    }
}

/// Run every check; failures are reported, not raised.
pub fn run_all(db: &IonDatabase) -> Result<Vec<CheckResult>> {
    Ok(vec![
        check_pi_pulse_field()?,
        check_power_laws(db)?,
        check_isotropy_null()?,
        check_ensemble_arithmetic()?,
        check_cnot_truth_table(db)?,
        check_blockade_bound(db)?,
        check_hole_burning(db)?,
        check_readout(db)?,
        check_unitarity(db)?,
        check_magnitude_ledger()?,
    ])
}

/// Criterion 1: π-pulse field strength and power density.
pub fn check_pi_pulse_field() -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut r = CheckResult::new("AC1", "pi-pulse field strength");
    let k = phys::wave_number(20_469.0, 1.6)?;
    let e1 = pi_pulse_field(1e9, k, 1.8e4)?;
    let e2 = pi_pulse_field_via_dipole(1e9, k, 1.8e4)?;
    let i = power_density(e1);
    let routes_agree = ((e1 - e2) / e1).abs() <= 1e-12;
    let field_ok = (2.0e4..=3.5e4).contains(&e1);
    let power_ok = (1.3e6..=3.0e6).contains(&i);
    r.runtime_s = t0.elapsed().as_secs_f64();
    let runtime_ok = r.runtime_s < 1.0;
    r.passed = routes_agree && field_ok && power_ok && runtime_ok;
    r.computed = format!("|E| = {e1:.4e} V/cm, I = {:.3e} W/cm²", i);
    r.reference = "|E| ~ 3e4 V/cm, I ~ 2 MW/cm²".into();
    r.ratio = Some(e1 / 3.0e4);
    r.detail = format!(
        "route agreement {:.2e} (≤1e-12), field in [2.0e4, 3.5e4] {}, power in [1.3, 3.0] MW/cm² {}",
        ((e1 - e2) / e1).abs(),
        field_ok,
        power_ok
    );
    Ok(r)
}

/// Criterion 2: exact power laws and the crossover distance by bisection.
pub fn check_power_laws(db: &IonDatabase) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut r = CheckResult::new("AC2", "power-law exactness and crossover");
    let cfg = CrystalConfig::default();
    let a = cfg.lattice_constant_m;

    let quad_m = moments_from_u2(db, "Tm3+", "3H4", "1I6", cfg.r0_sq_m2)?;
    let dip_m = StaticMoments::new(
        ("a".into(), "b".into()),
        [3e-12, 1e-12, -2e-12],
        SecondMoments::new(0.0, 0.0, 0.0)?,
        SecondMoments::new(0.0, 0.0, 0.0)?,
    )?;

    let mut max_dev_q: f64 = 0.0;
    let mut max_dev_d: f64 = 0.0;
    let mut q_ref = None;
    let mut d_ref = None;
    for step in 0..=98 {
        let r_a = 2.0 + step as f64;
        let rr = r_a * a;
        let q = quad_shift_full(&quad_m, &quad_m, rr, cfg.epsilon_r)? * r_a.powi(5);
        let d = dipole_shift_full(&dip_m, &dip_m, rr, cfg.epsilon_r)? * r_a.powi(3);
        let qr = *q_ref.get_or_insert(q);
        let dr = *d_ref.get_or_insert(d);
        max_dev_q = max_dev_q.max(((q - qr) / qr).abs());
        max_dev_d = max_dev_d.max(((d - dr) / dr).abs());
    }

    // Crossover of the published prefactor laws, by bisection.
    let a_d = 100e9;
    let a_q = 50e12;
    let f = |rr: f64| a_q / rr.powi(5) - a_d / rr.powi(3);
    let (mut lo, mut hi) = (1.0f64, 1000.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let r_bisect = 0.5 * (lo + hi);
    let r_closed = crossover_distance(a_d, a_q)?;
    let cross_ok = (r_bisect - r_closed).abs() <= 1e-9;

    r.runtime_s = t0.elapsed().as_secs_f64();
    r.passed = max_dev_q <= 1e-12 && max_dev_d <= 1e-12 && cross_ok;
    r.computed = format!(
        "δ_q·R⁵ dev {max_dev_q:.2e}, δ_d·R³ dev {max_dev_d:.2e}, R* = {r_bisect:.9}a"
    );
    r.reference = format!("R* = √(A_q/A_d) = {r_closed:.9}a");
    r.ratio = Some(r_bisect / r_closed);
    r.detail = "R ∈ [2a, 100a]; bisection vs closed form to 1e-9".into();
    Ok(r)
}

/// Criterion 3: the quadrupole bracket vanishes identically for isotropic
/// moment changes.
pub fn check_isotropy_null() -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut r = CheckResult::new("AC3", "isotropy null of the quadrupole form");
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    let dim_scale = 1e-20;
    for trial in 0..1000 {
        let u1 = (rng.gen::<f64>() + 0.1) * dim_scale;
        let u2 = (rng.gen::<f64>() + 0.1) * dim_scale;
        let iso = |u: f64| SecondMoments::new(u, u, u).unwrap();
        let aniso = |r: &mut ChaCha8Rng| {
            SecondMoments::new(
                (r.gen::<f64>() + 0.1) * dim_scale,
                (r.gen::<f64>() + 0.1) * dim_scale,
                (r.gen::<f64>() + 0.1) * dim_scale,
            )
            .unwrap()
        };
        let m_iso = StaticMoments::new(
            ("i".into(), "j".into()),
            [0.0; 3],
            iso(u1),
            iso(u1 + u2),
        )?;
        let m_aniso = StaticMoments::new(
            ("i".into(), "j".into()),
            [0.0; 3],
            aniso(&mut rng),
            aniso(&mut rng),
        )?;
        let rr = 3e-9;
        let (one, two) = if trial % 2 == 0 {
            (&m_iso, &m_aniso)
        } else {
            (&m_aniso, &m_iso)
        };
        let null = quad_shift_full(one, two, rr, 10.0)?.abs();
        let reference = quad_shift_full(&m_aniso, &m_aniso, rr, 10.0)?.abs();
        if reference > 0.0 {
            worst = worst.max(null / reference);
        }
    }
    r.runtime_s = t0.elapsed().as_secs_f64();
    r.passed = worst < 1e-15;
    r.computed = format!("max |δ_q(iso)|/|δ_q(aniso)| = {worst:.2e}");
    r.reference = "exact 0 (isotropic changes cannot shift)".into();
    r.detail = "1000 randomized moment sets, either side isotropic".into();
    Ok(r)
}

/// Criterion 4: closed-form ensemble geometry.
pub fn check_ensemble_arithmetic() -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut r = CheckResult::new("AC4", "ensemble spacing and radius arithmetic");
    let spacing = ensemble::mean_spacing(1e-4)?;
    let radius = ensemble::ensemble_radius(50, 0.1)?;
    let spacing_ok = (spacing - 21.544_346_9).abs() / 21.544_346_9 < 5e-4;
    let radius_ok = (radius - 7.937_005_26).abs() / 7.937_005_26 < 5e-4;
    r.runtime_s = t0.elapsed().as_secs_f64();
    r.passed = spacing_ok && radius_ok;
    r.computed = format!("spacing(1e-4) = {spacing:.4}a, radius(50, 0.1) = {radius:.4}a");
    r.reference = "~22a mean distance; 7.9a ensemble size".into();
    r.ratio = Some(spacing / 22.0);
    r.detail = format!("closed forms to 3 significant figures; radius/7.9 = {:.4}", radius / 7.9);
    Ok(r)
}

fn cnot_sites(gamma_l: f64) -> Vec<IonSite> {
    (0..2)
        .map(|i| IonSite {
            id: i,
            cell: [i as i64, 0, 0],
            position_m: [i as f64 * 4e-10, 0.0, 0.0],
            offsets_hz: vec![i as f64 * 100.0 * gamma_l; 3],
        })
        .collect()
}

/// Criterion 5: the CNOT truth table emerges from the pulse dynamics.
pub fn check_cnot_truth_table(db: &IonDatabase) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut r = CheckResult::new("AC5", "CNOT truth table from dynamics");
    let scheme = db.load_scheme("Pr3+", 0)?;
    let gamma_l = 1e9;
    let gamma_h = 1e6;
    let sites = cnot_sites(gamma_l);
    let coupling = CouplingTable::blockade_pair(&scheme, 0, 1, 30.0 * gamma_l);
    let system = SimSystem::new(&scheme, &sites, &coupling);
    let plan = cnot_plan(&system, 0, 1, gamma_l, gamma_h, PhaseConvention::Bare)?;
    let ideal = IdealGate::Cnot {
        control: 0,
        target: 1,
        n: 2,
    };
    let basis: Vec<_> = default_fidelity_inputs(2)[..4].to_vec();

    let run = |sys: &SimSystem, decay: bool| {
        gate_fidelity(
            |input| {
                let mut state = input;
                execute(&plan.pulses, &mut state, sys, ExecOptions { decay })?;
                Ok(state)
            },
            &ideal,
            &basis,
            &scheme,
            Some(plan.blockade_margins[0]),
        )
    };

    let no_decay = run(&system, false)?;
    let with_decay = run(&system, true)?;
    let min_f = no_decay.min_fidelity;
    let basis_ok = min_f >= 0.95;
    let max_degradation = no_decay
        .fidelities
        .iter()
        .zip(&with_decay.fidelities)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let decay_ok = max_degradation < 1e-3;

    // δ = 0: conditionality vanishes.
    let none = CouplingTable::none(scheme.dim());
    let system0 = SimSystem::new(&scheme, &sites, &none);
    let zz = gate_fidelity(
        |input| {
            let mut state = input;
            execute(&plan.pulses, &mut state, &system0, ExecOptions { decay: false })?;
            Ok(state)
        },
        &ideal,
        &basis[..1],
        &scheme,
        None,
    )?;
    let unconditional_ok = zz.fidelities[0] <= 0.1;

    r.runtime_s = t0.elapsed().as_secs_f64();
    let runtime_ok = r.runtime_s < 10.0;
    r.passed = basis_ok && decay_ok && unconditional_ok && runtime_ok;
    r.computed = format!(
        "min basis fidelity {min_f:.4} (δ = 30Γ_L), |00⟩ fidelity {:.4} at δ = 0, decay degradation {max_degradation:.2e}",
        zz.fidelities[0]
    );
    r.reference = "fidelity ≥ 0.95 per basis state; ≤ 0.1 without blockade; decay < 1e-3".into();
    r.detail = format!(
        "fidelities {:?}",
        no_decay
            .fidelities
            .iter()
            .map(|f| (f * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    );
    Ok(r)
}

/// Criterion 6: blockaded transfer stays below the generalised Rabi bound
/// and decreases with the shift.
pub fn check_blockade_bound(db: &IonDatabase) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut r = CheckResult::new("AC6", "blockade leakage bound");
    let scheme = db.load_scheme("Pr3+", 0)?;
    let gamma_l = 1e9;
    let sites = cnot_sites(gamma_l);
    let aux = scheme.level_index(Role::Aux);
    let zero = scheme.level_index(Role::Zero);
    let mut rows = Vec::new();
    let mut prev = f64::INFINITY;
    let mut all_ok = true;
    for ratio in [3.0, 10.0, 30.0, 100.0] {
        let delta = ratio * gamma_l;
        let coupling = CouplingTable::blockade_pair(&scheme, 0, 1, delta);
        let system = SimSystem::new(&scheme, &sites, &coupling);
        let mut state =
            EnsembleState::product(&[scheme.dim(), scheme.dim()], &[zero, aux])?;
        let pulse = PulseSpec::pi((Role::Zero, Role::Aux), 0.0, gamma_l)?;
        apply_pulse(&mut state, &pulse, &system)?;
        let transferred = state.populations(0)[aux];
        let omega = PI * gamma_l;
        let ceiling = omega * omega / (omega * omega + (TAU * delta).powi(2));
        all_ok &= transferred <= ceiling + 1e-15;
        all_ok &= transferred <= prev;
        prev = transferred;
        rows.push(format!(
            "δ/Γ_L = {ratio}: transfer {transferred:.3e} ≤ bound {ceiling:.3e}"
        ));
    }
    r.runtime_s = t0.elapsed().as_secs_f64();
    r.passed = all_ok;
    r.computed = rows.join("; ");
    r.reference = "transfer ≤ Ω²/(Ω² + Δ²), monotone decreasing".into();
    Ok(r)
}

/// Deterministic hole-burning scenario: one ion at the origin surrounded by
/// concentric shells of neighbours (8 per shell, sign-flip positions of one
/// integer triple on a fine lattice), so distances take designed, well
/// separated values and every shell's pair shift is exactly degenerate.
/// Offsets form a comb with the rest-configuration shifts compensated, which
/// keeps each hole/antihole doublet local to its comb slot.
pub struct ShellScenario {
    pub config: CrystalConfig,
    pub scheme: LevelScheme,
    pub sites: Vec<IonSite>,
    pub coupling: CouplingTable,
    pub gamma_h_hz: f64,
    pub gamma_l_hz: f64,
    pub comb_spacing_hz: f64,
}

/// Fine lattice subdivision of the physical lattice constant.
const FINE_PER_A: i64 = 8;

impl ShellScenario {
    pub fn build(db: &IonDatabase, n_ions: usize) -> Result<ShellScenario> {
        let scheme = db.load_scheme("Tm3+", 1)?;
        let mut config = CrystalConfig::default();
        // The scenario's sites live on an a/8 grid; positions stay metric.
        let a = config.lattice_constant_m;
        let fine = a / FINE_PER_A as f64;
        config.concentration = 0.1;

        let min_sep_fine = 4 * FINE_PER_A; // 4a between any two ions
        let mut cells: Vec<[i64; 3]> = vec![[0, 0, 0]];
        let mut shell_radius_fine = 4.0 * FINE_PER_A as f64;
        while cells.len() < n_ions {
            let shell = find_shell(shell_radius_fine, min_sep_fine, &cells).ok_or_else(
                || {
                    Error::physics(format!(
                        "shell scenario: no placement at radius {shell_radius_fine}"
                    ))
                },
            )?;
            let realized = (shell[0][0] * shell[0][0]
                + shell[0][1] * shell[0][1]
                + shell[0][2] * shell[0][2]) as f64;
            for cell in shell {
                cells.push(cell);
                if cells.len() == n_ions {
                    break;
                }
            }
            shell_radius_fine = realized.sqrt() * 1.13;
        }

        let n_transitions = scheme.transitions().len();
        let mut sites: Vec<IonSite> = cells
            .iter()
            .enumerate()
            .map(|(id, c)| IonSite {
                id,
                cell: *c,
                position_m: [
                    c[0] as f64 * fine,
                    c[1] as f64 * fine,
                    c[2] as f64 * fine,
                ],
                offsets_hz: vec![0.0; n_transitions],
            })
            .collect();

        let coupling =
            CouplingTable::build(&sites, &scheme, &config, AxisConvention::PairAligned, 0);

        // Comb offsets with the rest-configuration shift compensated on the
        // scanned transition, so pre-burn lines land exactly on the comb.
        let gamma_h = 5e6;
        let gamma_l = 1e7;
        let comb = 12e9;
        let g = scheme.level_index(Role::Ground);
        let scan = scheme.role_pair(Role::Ground, Role::Zero)?;
        let scan_tidx = scheme
            .transitions()
            .iter()
            .position(|&p| p == scan)
            .expect("scan transition");
        {
            let system = SimSystem::new(&scheme, &sites, &coupling);
            let occ = Occupation::all_in(g, sites.len());
            let lines = line_centers(&system, &occ);
            let bare = scheme.transition_hz(scan.0, scan.1);
            let mut baseline = vec![0.0; sites.len()];
            for l in &lines {
                if l.pair == scan {
                    baseline[l.ion] = l.center_hz - bare;
                }
            }
            for (i, s) in sites.iter_mut().enumerate() {
                let slot = (i as f64 - (n_ions as f64) / 2.0) * comb;
                s.offsets_hz = vec![slot - baseline[i]; n_transitions];
                // Compensation applies per-transition; only the scanned
                // transition needs exactness.
                let _ = scan_tidx;
            }
        }

        Ok(ShellScenario {
            config,
            scheme,
            sites,
            coupling,
            gamma_h_hz: gamma_h,
            gamma_l_hz: gamma_l,
            comb_spacing_hz: comb,
        })
    }
}

/// The four even-sign variants of a triple: π-rotations about the axes,
/// which keep pairwise distances large (2√(y²+z²) and cyclic).
fn even_sign_variants([x, y, z]: [i64; 3]) -> [[i64; 3]; 4] {
    [[x, y, z], [x, -y, -z], [-x, y, -z], [-x, -y, z]]
}

/// Build one shell: 4–8 ions at exactly the same integer squared radius
/// (within ±4% of the target), every ion at least `min_sep` from every
/// previously accepted cell and from its shell mates. Ions of one shell are
/// exactly distance-degenerate, so their pair shifts tie exactly.
fn find_shell(radius_fine: f64, min_sep: i64, accepted: &[[i64; 3]]) -> Option<Vec<[i64; 3]>> {
    let r2_lo = (radius_fine * radius_fine * 0.92).round() as i64;
    let r2_hi = (radius_fine * radius_fine * 1.08).round() as i64;
    let min_sep2 = min_sep * min_sep;
    let clear = |p: [i64; 3], others: &[[i64; 3]], shell: &[[i64; 3]]| {
        others.iter().chain(shell.iter()).all(|c| {
            let d = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
            d[0] * d[0] + d[1] * d[1] + d[2] * d[2] >= min_sep2
        })
    };
    let mut best: Option<Vec<[i64; 3]>> = None;
    for r2 in r2_lo..=r2_hi {
        let mut shell: Vec<[i64; 3]> = Vec::new();
        let max = (r2 as f64).sqrt() as i64 + 1;
        'triples: for x in 2..=max {
            for y in (x + 1)..=max {
                let partial = x * x + y * y;
                if partial >= r2 {
                    break;
                }
                let z2 = r2 - partial;
                let z = (z2 as f64).sqrt().round() as i64;
                if z <= y || z * z != z2 {
                    continue;
                }
                let group = even_sign_variants([x, y, z]);
                if group.iter().all(|&p| clear(p, accepted, &shell)) {
                    shell.extend_from_slice(&group);
                    if shell.len() >= 8 {
                        break 'triples;
                    }
                }
            }
        }
        if shell.len() >= 8 {
            return Some(shell);
        }
        if shell.len() >= 4 && best.is_none() {
            best = Some(shell);
        }
    }
    best
}

/// Spearman rank correlation with cluster ties: values of either series
/// closer than its tolerance are ranked as exact ties (average ranks).
pub fn spearman_clustered(xs: &[f64], ys: &[f64], x_tol: f64, y_tol: f64) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rank = |vals: &[f64], tol: f64| -> Vec<f64> {
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let mut ranks = vec![0.0; vals.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && (vals[order[j + 1]] - vals[order[j]]).abs() <= tol {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=j] {
                ranks[idx] = avg;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(xs, x_tol);
    let ry = rank(ys, y_tol);
    let n = xs.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        vx += (a - mean) * (a - mean);
        vy += (b - mean) * (b - mean);
    }
    if vx == 0.0 || vy == 0.0 {
        return 1.0;
    }
    cov / (vx * vy).sqrt()
}

/// Criterion 7: hole-burning oracle on the synthetic 200-ion ensemble.
pub fn check_hole_burning(db: &IonDatabase) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut r = CheckResult::new("AC7", "hole-burning oracle and ensemble selection");
    let scenario = ShellScenario::build(db, 200)?;
    let scheme = &scenario.scheme;
    let system = SimSystem::new(scheme, &scenario.sites, &scenario.coupling);
    let g = scheme.level_index(Role::Ground);
    let aux = scheme.level_index(Role::Aux);
    let occ = Occupation::all_in(g, scenario.sites.len());
    let gamma_h = scenario.gamma_h_hz;
    let gamma_l = scenario.gamma_l_hz;

    // Burn the centre ion on g → 1'.
    let tr = default_burn_transition(scheme);
    let burn_pair = scheme.role_pair(tr.0, tr.1)?;
    let lines_before = line_centers(&system, &occ);
    let burn_line = lines_before
        .iter()
        .find(|l| l.ion == 0 && l.pair == burn_pair)
        .expect("burn line of the centre ion");
    let outcome = burn(&system, &occ, burn_line.center_hz, gamma_l, tr)?;
    if outcome.burned != vec![0] {
        r.detail = format!("burned {:?} instead of the centre ion", outcome.burned);
        r.runtime_s = t0.elapsed().as_secs_f64();
        return Ok(r);
    }

    // Difference spectrum over the scanned transition's comb.
    let scan = scheme.role_pair(Role::Ground, Role::Zero)?;
    let scan_lines: Vec<f64> = lines_before
        .iter()
        .filter(|l| l.pair == scan)
        .map(|l| l.center_hz)
        .collect();
    let lo = scan_lines.iter().cloned().fold(f64::INFINITY, f64::min) - 5e9;
    let hi = scan_lines.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 5e9;
    let grid = FrequencyGrid::covering(lo, hi, gamma_h / 5.0)?;
    let before = synth_spectrum(&system, &occ, gamma_h, &grid)?;
    let after = synth_spectrum(&system, &outcome.occupation, gamma_h, &grid)?;
    let mut detection = detect_pairs(&before, &after, gamma_h)?;
    attach_ground_truth(&mut detection, &lines_before, &system, gamma_h);

    // Every ranked pair must match its ground-truth shift within Γ_h/2.
    let mut worst_err: f64 = 0.0;
    let mut matched = 0usize;
    let mut truth_ok = true;
    let mut splittings = Vec::new();
    let mut radii = Vec::new();
    for pair in &detection.pairs {
        let Some(ion) = pair.partner_ion else {
            truth_ok = false;
            break;
        };
        let truth = scenario
            .coupling
            .transition_shift_change(ion, scan, 0, g, aux)
            .abs();
        let err = (pair.splitting_hz - truth).abs();
        worst_err = worst_err.max(err);
        truth_ok &= err <= gamma_h / 2.0;
        matched += 1;
        // Rank comparison uses comfortably resolved pairs.
        if pair.splitting_hz >= 2.0 * gamma_h {
            splittings.push(pair.splitting_hz);
            radii.push(scenario.sites[ion].distance_m(&scenario.sites[0]));
        }
    }
    let inv_r: Vec<f64> = radii.iter().map(|r| 1.0 / r).collect();
    let rho = spearman_clustered(&splittings, &inv_r, gamma_h / 2.0, 1e-13);
    let rank_ok = rho >= 1.0 - 1e-9;

    // Working-ensemble selection.
    let registry = select_ensemble(&system, &detection, 50, gamma_l, gamma_h, 3.0, 1)?;
    let margin_ok = registry.weakest_margin > 1.0;
    let weakest_shift = registry.weakest_margin * gamma_l;

    r.runtime_s = t0.elapsed().as_secs_f64();
    let runtime_ok = r.runtime_s < 60.0;
    r.passed = truth_ok && rank_ok && margin_ok && runtime_ok;
    r.computed = format!(
        "{matched} ranked pairs, worst splitting error {worst_err:.3e} Hz, Spearman {rho:.9}, weakest margin {:.3}",
        registry.weakest_margin
    );
    r.reference = "splittings within Γ_h/2; rank correlation 1.0; weakest δ ~ 3 GHz".into();
    r.ratio = Some(weakest_shift / 3e9);
    r.detail = format!(
        "Γ_h = {gamma_h:.1e} Hz, Γ_L = {gamma_l:.1e} Hz, {} candidates, weakest selected shift {weakest_shift:.3e} Hz, runtime {:.1} s",
        detection.pairs.len(),
        r.runtime_s
    );
    Ok(r)
}

/// Criterion 8: readout populations and spectrum proportionality.
pub fn check_readout(db: &IonDatabase) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut r = CheckResult::new("AC8", "Hadamard readout populations and spectrum");
    let phases = [0.0, std::f64::consts::FRAC_PI_2, PI];
    let readout = crate::protocols::hadamard_readout_state(&phases);
    let closed_ok = (readout.p_zero[0] - 1.0).abs() < 1e-12
        && (readout.p_zero[1] - 0.5).abs() < 1e-12
        && readout.p_zero[2].abs() < 1e-12;

    // Spectrum: three isolated ions, each carrying its readout populations
    // on the qubit levels; line intensities on 0→1 follow P(0).
    let scheme = db.load_scheme("Pr3+", 0)?;
    let gamma_h = 1e6;
    let sites: Vec<IonSite> = (0..3)
        .map(|i| IonSite {
            id: i,
            cell: [i as i64 * 100, 0, 0],
            position_m: [i as f64 * 100.0 * 4e-10, 0.0, 0.0],
            offsets_hz: vec![i as f64 * 50e9; 3],
        })
        .collect();
    let none = CouplingTable::none(scheme.dim());
    let system = SimSystem::new(&scheme, &sites, &none);
    let zero = scheme.level_index(Role::Zero);
    let one = scheme.level_index(Role::One);
    let mut pops = vec![vec![0.0; scheme.dim()]; 3];
    for i in 0..3 {
        pops[i][zero] = readout.p_zero[i];
        pops[i][one] = readout.p_one[i];
    }
    let occ = Occupation::Fractional(pops);
    let pair = scheme.role_pair(Role::Zero, Role::One)?;
    let c = scheme.transition_hz(pair.0, pair.1);
    let grid = FrequencyGrid::covering(c - 10e9, c + 110e9, gamma_h / 5.0)?;
    let spec = synth_spectrum(&system, &occ, gamma_h, &grid)?;
    let peak_at = |center: f64| -> f64 {
        let i = ((center - grid.start_hz) / grid.step_hz).round() as usize;
        spec.values[i]
    };
    let unit = 2.0 / (PI * gamma_h);
    let mut spec_ok = true;
    let mut peaks = Vec::new();
    for i in 0..3 {
        let p = peak_at(c + i as f64 * 50e9) / unit;
        peaks.push(p);
        spec_ok &= (p - readout.p_zero[i]).abs() <= 0.01;
    }

    r.runtime_s = t0.elapsed().as_secs_f64();
    r.passed = closed_ok && spec_ok;
    r.computed = format!(
        "P(0) = {:?}, relative line intensities {:?}",
        readout.p_zero,
        peaks
            .iter()
            .map(|p| (p * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    );
    r.reference = "P(0) = {1, 0.5, 0}; intensities ∝ populations within 1%".into();
    Ok(r)
}

/// Criterion 9: unitarity and norm accounting.
pub fn check_unitarity(db: &IonDatabase) -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut r = CheckResult::new("AC9", "unitarity and norm + leakage accounting");
    // V†V = I to 1e-12 over 1000 random pulses.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_unitarity: f64 = 0.0;
    for _ in 0..1000 {
        let v = single_qubit_unitary(rng.gen::<f64>() * 4.0 * TAU, rng.gen::<f64>() * TAU);
        for i in 0..2 {
            for j in 0..2 {
                let mut dot = num_complex::Complex64::new(0.0, 0.0);
                for k in 0..2 {
                    dot += v[k][i].conj() * v[k][j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                worst_unitarity = worst_unitarity.max((dot - expect).norm());
            }
        }
    }

    // 100-pulse random sequence with decay keeps norm² + leakage at 1.
    let scheme = db.load_scheme("Tm3+", 1)?;
    let gamma_l = 1e9;
    let sites: Vec<IonSite> = (0..3)
        .map(|i| IonSite {
            id: i,
            cell: [i as i64, 0, 0],
            position_m: [i as f64 * 4e-10, 0.0, 0.0],
            offsets_hz: vec![i as f64 * 40.0 * gamma_l; 6],
        })
        .collect();
    let coupling = CouplingTable::blockade_pair(&scheme, 0, 1, 11.0 * gamma_l);
    let system = SimSystem::new(&scheme, &sites, &coupling);
    let mut state = EnsembleState::all_ground(&scheme, 3)?;
    let roles = [Role::Ground, Role::Zero, Role::One, Role::Aux];
    for _ in 0..100 {
        let a = roles[rng.gen_range(0..4)];
        let b = roles[rng.gen_range(0..4)];
        if scheme.level_index(a) == scheme.level_index(b) {
            continue;
        }
        let carrier = sites[rng.gen_range(0..3)].offsets_hz[0];
        let pulse = PulseSpec::new(
            (a, b),
            carrier,
            rng.gen::<f64>() * TAU,
            rng.gen::<f64>() * TAU,
            1.0 / gamma_l,
            None,
        )?;
        apply_pulse(&mut state, &pulse, &system)?;
        pulse::apply_decay(&mut state, pulse.duration_s, &system)?;
    }
    let norm_drift = (state.norm_sq() + state.leakage() - 1.0).abs();

    // Double π-pulse restores populations.
    let mut state2 = EnsembleState::all_ground(&scheme, 3)?;
    let before = state2.populations(0);
    let pulse = PulseSpec::pi((Role::Ground, Role::Zero), 0.0, gamma_l)?;
    apply_pulse(&mut state2, &pulse, &system)?;
    apply_pulse(&mut state2, &pulse, &system)?;
    let after = state2.populations(0);
    let restore_err = before
        .iter()
        .zip(&after)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    r.runtime_s = t0.elapsed().as_secs_f64();
    r.passed = worst_unitarity < 1e-12 && norm_drift < 1e-9 && restore_err < 1e-9;
    r.computed = format!(
        "‖V†V − I‖ = {worst_unitarity:.2e}, norm drift {norm_drift:.2e}, double-π residual {restore_err:.2e}"
    );
    r.reference = "1e-12 / 1e-9 / 1e-9".into();
    Ok(r)
}

/// One row of the order-of-magnitude ledger.
#[derive(Debug, Clone, Serialize)]
pub struct LedgerRow {
    pub quantity: String,
    /// Raw estimate-formula value in the measure the published figure uses.
    pub computed: f64,
    /// Crate-convention value (ordinary Hz) where applicable.
    pub computed_hz: Option<f64>,
    pub published: f64,
    pub ratio: f64,
    pub note: String,
}

/// The Eq-7/Eq-8 prefactors and their 5a values, compared against the
/// published figures in the figures' own loose measure: the raw formula
/// output with ω̄0 = 3e15 rad/s read off as "Hz", and the vacuum wave
/// number in the dipole form. The crate's Hz-convention values (the /2π
/// outputs of the estimate operations) sit alongside.
pub fn magnitude_ledger() -> Result<Vec<LedgerRow>> {
    let cfg = CrystalConfig::default();
    let a = cfg.lattice_constant_m;
    let omega0 = 3e15; // rad/s
    let gamma0 = 1e4;
    let eps = 10.0;
    let du2 = 0.1;
    let k_vac = omega0 / phys::C_M_PER_S;

    let raw_dipole = |r_m: f64| gamma0 / eps * (k_vac * r_m).powi(-3);
    let raw_quad =
        |r_m: f64| 25.0 * du2 * omega0 * cfg.r0_sq_m2.powf(2.5) / (eps * r_m.powi(5));

    let rows = vec![
        LedgerRow {
            quantity: "dipole estimate prefactor (R = a)".into(),
            computed: raw_dipole(a),
            computed_hz: Some(dipole_shift_estimate(gamma0, eps, 1.0, k_vac, a)?),
            published: 100e9,
            ratio: raw_dipole(a) / 100e9,
            note: "raw form γ0 ε⁻¹ (kR)⁻³, vacuum k = ω̄0/c".into(),
        },
        LedgerRow {
            quantity: "quadrupole estimate prefactor (R = a)".into(),
            computed: raw_quad(a),
            computed_hz: Some(quad_shift_estimate(du2, omega0, cfg.r0_sq_m2, eps, a)?),
            published: 50e12,
            ratio: raw_quad(a) / 50e12,
            note: "raw form 25ΔU²ω̄0r0⁵/(εR⁵), ω̄0 = 3e15 rad/s".into(),
        },
        LedgerRow {
            quantity: "dipole shift at R = 5a".into(),
            computed: raw_dipole(5.0 * a),
            computed_hz: Some(dipole_shift_estimate(gamma0, eps, 1.0, k_vac, 5.0 * a)?),
            published: 5e9,
            ratio: raw_dipole(5.0 * a) / 5e9,
            note: "published figure exceeds its own prefactor/125".into(),
        },
        LedgerRow {
            quantity: "quadrupole shift at R = 5a".into(),
            computed: raw_quad(5.0 * a),
            computed_hz: Some(quad_shift_estimate(du2, omega0, cfg.r0_sq_m2, eps, 5.0 * a)?),
            published: 30e9,
            ratio: raw_quad(5.0 * a) / 30e9,
            note: "quadrupole dominates dipole at 5a in both conventions".into(),
        },
    ];
    Ok(rows)
}

/// Criterion 10: the ledger exists and every ratio lands within two orders
/// of magnitude — documenting, not hiding, the loose published arithmetic.
pub fn check_magnitude_ledger() -> Result<CheckResult> {
    let t0 = Instant::now();
    let mut r = CheckResult::new("AC10", "order-of-magnitude ledger");
    let rows = magnitude_ledger()?;
    let all_in_band = rows.iter().all(|row| row.ratio >= 0.01 && row.ratio <= 100.0);
    r.runtime_s = t0.elapsed().as_secs_f64();
    r.passed = all_in_band;
    r.computed = rows
        .iter()
        .map(|row| format!("{}: ratio {:.3}", row.quantity, row.ratio))
        .collect::<Vec<_>>()
        .join("; ");
    r.reference = "every ratio within [0.01, 100]".into();
    r.detail = serde_json::to_string(&rows).unwrap_or_default();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_handles_ties() {
        // Perfect monotone with exact tie groups on both sides.
        let xs = [10.0, 10.0, 8.0, 5.0, 5.0, 1.0];
        let ys = [4.0, 4.0, 3.0, 2.0, 2.0, 0.5];
        assert!((spearman_clustered(&xs, &ys, 1e-9, 1e-9) - 1.0).abs() < 1e-12);
        // Clustered near-ties behave like exact ties.
        let xs = [10.0, 10.001, 8.0, 5.0, 5.001, 1.0];
        assert!((spearman_clustered(&xs, &ys, 0.01, 1e-9) - 1.0).abs() < 1e-12);
        // A genuine inversion is detected.
        let ys_bad = [4.0, 4.0, 3.0, 2.0, 2.0, 9.0];
        assert!(spearman_clustered(&xs, &ys_bad, 0.01, 1e-9) < 1.0);
    }

    #[test]
    fn shell_scenario_geometry() {
        let db = IonDatabase::embedded().unwrap();
        let s = ShellScenario::build(&db, 200).unwrap();
        assert_eq!(s.sites.len(), 200);
        // Minimum pairwise separation of 4a holds.
        let a = s.config.lattice_constant_m;
        let mut min_d = f64::INFINITY;
        for i in 0..s.sites.len() {
            for j in (i + 1)..s.sites.len() {
                min_d = min_d.min(s.sites[i].distance_m(&s.sites[j]));
            }
        }
        assert!(min_d >= 4.0 * a - 1e-15);
        // Shells of 8 share exact distances to the centre.
        let d1 = s.sites[1].distance_m(&s.sites[0]);
        for k in 2..=8 {
            assert!((s.sites[k].distance_m(&s.sites[0]) - d1).abs() < 1e-18);
        }
    }

    #[test]
    fn ledger_rows_in_band() {
        for row in magnitude_ledger().unwrap() {
            assert!(
                row.ratio >= 0.01 && row.ratio <= 100.0,
                "{}: ratio {} out of band",
                row.quantity,
                row.ratio
            );
        }
    }
}
