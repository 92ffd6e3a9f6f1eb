//! Square laser pulses and ensemble state-vector evolution.
//!
//! A pulse of duration t_p has spectral width Γ_L = 1/t_p and drives, for
//! each ion, the scheme transition nearest its carrier, provided the static
//! detuning lies within the addressing window. The resonant Rabi rate is
//! pinned as Ω = Θ/t_p. Occupation-dependent pair shifts enter as exact
//! diagonal detunings per product-basis component: the interaction is
//! diagonal in the level basis, so evolving each partner-occupation block
//! with its own detuning is exact rather than approximate.
//!
//! Decay is applied as a no-jump amplitude damping after each pulse; lost
//! norm accumulates in a leakage register instead of being renormalised.

use num_complex::Complex64 as C64;
use serde::Serialize;
use std::f64::consts::TAU;

use crate::ensemble::IonSite;
use crate::error::{Error, Result};
use crate::interactions::CouplingTable;
use crate::ion::{LevelScheme, Role};
use crate::phys;

/// Hard cap on the product-space dimension (4¹⁰).
pub const MAX_STATE_DIM: usize = 1 << 20;

/// Default addressing window in units of Γ_L.
pub const DEFAULT_W_CUT_FACTOR: f64 = 5.0;

pub type Mat2 = [[C64; 2]; 2];

/// One square pulse. The carrier is stored as an offset from the unshifted
/// scheme frequency of the addressed transition, which keeps optical-scale
/// arithmetic at sub-Hz precision.
#[derive(Debug, Clone, Serialize)]
pub struct PulseSpec {
    /// Addressed transition, as scheme roles.
    pub transition: (Role, Role),
    /// Carrier minus the unshifted scheme transition frequency (Hz).
    pub carrier_offset_hz: f64,
    /// Pulse area Θ (rad).
    pub theta_rad: f64,
    /// Optical phase φ (rad).
    pub phase_rad: f64,
    /// Duration t_p (s).
    pub duration_s: f64,
    /// Addressing cutoff (Hz): ions detuned further are not driven.
    pub w_cut_hz: f64,
}

impl PulseSpec {
    pub fn new(
        transition: (Role, Role),
        carrier_offset_hz: f64,
        theta_rad: f64,
        phase_rad: f64,
        duration_s: f64,
        w_cut_hz: Option<f64>,
    ) -> Result<Self> {
        if theta_rad < 0.0 {
            return Err(Error::validation("pulse area Θ must be ≥ 0"));
        }
        if !(duration_s > 0.0) {
            return Err(Error::validation("pulse duration must be > 0"));
        }
        let gamma_l = 1.0 / duration_s;
        let w_cut = w_cut_hz.unwrap_or(DEFAULT_W_CUT_FACTOR * gamma_l);
        if w_cut < gamma_l {
            return Err(Error::validation("W_cut must be ≥ Γ_L"));
        }
        Ok(PulseSpec {
            transition,
            carrier_offset_hz,
            theta_rad,
            phase_rad,
            duration_s,
            w_cut_hz: w_cut,
        })
    }

    /// π-pulse with t_p = 1/Γ_L and the default addressing window.
    pub fn pi(transition: (Role, Role), carrier_offset_hz: f64, gamma_l_hz: f64) -> Result<Self> {
        PulseSpec::new(
            transition,
            carrier_offset_hz,
            std::f64::consts::PI,
            0.0,
            1.0 / gamma_l_hz,
            None,
        )
    }

    /// Spectral width Γ_L = 1/t_p (Hz).
    pub fn gamma_l_hz(&self) -> f64 {
        1.0 / self.duration_s
    }

    /// Pinned resonant Rabi rate Ω = Θ/t_p (rad/s).
    pub fn rabi_rad_per_s(&self) -> f64 {
        self.theta_rad / self.duration_s
    }
}

/// Transition dipole matrix element |⟨0|r|1⟩| = √(3γ0/4αck³), in metres.
pub fn dipole_matrix_element(gamma0_per_s: f64, k_per_m: f64) -> Result<f64> {
    if !(gamma0_per_s > 0.0 && k_per_m > 0.0) {
        return Err(Error::validation(
            "dipole_matrix_element: γ0 and k must be > 0",
        ));
    }
    let k_cm = k_per_m / 100.0;
    let d_cm =
        (3.0 * gamma0_per_s / (4.0 * phys::ALPHA * phys::C_CM_PER_S * k_cm.powi(3))).sqrt();
    Ok(d_cm / 100.0)
}

/// π-pulse field strength |E| = 2πΓ_L√(ħk³/3γ0), converted to V/cm.
pub fn pi_pulse_field(gamma_l_per_s: f64, k_per_m: f64, gamma0_per_s: f64) -> Result<f64> {
    if !(gamma_l_per_s > 0.0 && k_per_m > 0.0 && gamma0_per_s > 0.0) {
        return Err(Error::validation("pi_pulse_field: inputs must be > 0"));
    }
    let k_cm = k_per_m / 100.0;
    let e_statvolt =
        TAU * gamma_l_per_s * (phys::HBAR_CGS * k_cm.powi(3) / (3.0 * gamma0_per_s)).sqrt();
    Ok(phys::statvolt_to_v_per_cm(e_statvolt))
}

/// The same field via the pulse-area route πħΓ_L/(e·|⟨0|r|1⟩|); algebraically
/// identical to [`pi_pulse_field`] through α = e²/ħc.
pub fn pi_pulse_field_via_dipole(
    gamma_l_per_s: f64,
    k_per_m: f64,
    gamma0_per_s: f64,
) -> Result<f64> {
    let d_cm = dipole_matrix_element(gamma0_per_s, k_per_m)? * 100.0;
    let e_statvolt =
        std::f64::consts::PI * phys::HBAR_CGS * gamma_l_per_s / (phys::e_gauss() * d_cm);
    Ok(phys::statvolt_to_v_per_cm(e_statvolt))
}

/// Power density I = E²/Z of a field given in V/cm, in W/cm².
pub fn power_density(e_v_per_cm: f64) -> f64 {
    e_v_per_cm * e_v_per_cm / phys::Z0_OHM
}

/// Pulse energy E_L = I·S/Γ_L (J) for a beam cross-section S in cm².
pub fn pulse_energy(e_v_per_cm: f64, s_cm2: f64, gamma_l_per_s: f64) -> f64 {
    power_density(e_v_per_cm) * s_cm2 / gamma_l_per_s
}

/// Resonant two-level rotation
/// V(Θ,φ) = I cos(Θ/2) + i(σ_x sin φ + σ_y cos φ) sin(Θ/2).
pub fn single_qubit_unitary(theta: f64, phi: f64) -> Mat2 {
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    // i(σ_x sinφ + σ_y cosφ) contributes rows [(0, e^{iφ}), (−e^{−iφ}, 0)].
    [
        [C64::new(c, 0.0), C64::from_polar(s, phi)],
        [-C64::from_polar(s, -phi), C64::new(c, 0.0)],
    ]
}

/// Detuned rotation exp(−iHt) with
/// H = (Δ/2)σ_z − (Ω/2)(σ_x sin φ + σ_y cos φ), Δ and Ω in rad/s, on the
/// ordered basis (lower, upper). At Δ = 0 and Ωt = Θ this reproduces
/// [`single_qubit_unitary`]; the maximum transfer from the lower level is
/// Ω²/(Ω² + Δ²).
pub fn detuned_rotation(omega: f64, delta: f64, phi: f64, t: f64) -> Mat2 {
    let omega_gen = (omega * omega + delta * delta).sqrt();
    let angle = omega_gen * t;
    if angle == 0.0 {
        return [
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        ];
    }
    let nx = -omega * phi.sin() / omega_gen;
    let ny = -omega * phi.cos() / omega_gen;
    let nz = delta / omega_gen;
    let c = (angle / 2.0).cos();
    let s = (angle / 2.0).sin();
    // U = cos(θ/2) I − i sin(θ/2) n̂·σ.
    [
        [C64::new(c, -nz * s), C64::new(-ny * s, -nx * s)],
        [C64::new(ny * s, -nx * s), C64::new(c, nz * s)],
    ]
}

/// Transfer probability of a square pulse of area Θ and duration t_p at
/// static detuning Δ (ordinary Hz): (Ω²/Ω_g²)·sin²(Ω_g t_p/2).
pub fn transfer_probability(theta: f64, duration_s: f64, detuning_hz: f64) -> f64 {
    let omega = theta / duration_s;
    let delta = TAU * detuning_hz;
    let omega_gen_sq = omega * omega + delta * delta;
    if omega_gen_sq == 0.0 {
        return 0.0;
    }
    let half_angle = omega_gen_sq.sqrt() * duration_s / 2.0;
    omega * omega / omega_gen_sq * half_angle.sin().powi(2)
}

/// Decodes per-ion levels from flat product-basis indices.
#[derive(Debug, Clone)]
struct IndexDecoder {
    dims: Vec<usize>,
    strides: Vec<usize>,
}

impl IndexDecoder {
    fn new(dims: &[usize]) -> Self {
        let mut strides = vec![1usize; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        IndexDecoder {
            dims: dims.to_vec(),
            strides,
        }
    }

    fn level_of(&self, index: usize, ion: usize) -> usize {
        (index / self.strides[ion]) % self.dims[ion]
    }
}

/// Complex amplitude vector over the tensor-product basis of per-ion levels,
/// plus the leakage accumulated by decay.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    dims: Vec<usize>,
    amps: Vec<C64>,
    leakage: f64,
}

impl EnsembleState {
    /// Product state with each ion in the given level.
    pub fn product(dims: &[usize], levels: &[usize]) -> Result<Self> {
        if dims.len() != levels.len() {
            return Err(Error::validation("product: dims/levels length mismatch"));
        }
        let total: usize = dims.iter().product();
        if total == 0 || total > MAX_STATE_DIM {
            return Err(Error::validation(format!(
                "product dimension {total} outside 1..={MAX_STATE_DIM}"
            )));
        }
        let mut idx = 0;
        for (d, l) in dims.iter().zip(levels) {
            if l >= d {
                return Err(Error::validation("product: level outside ion dimension"));
            }
            idx = idx * d + l;
        }
        let mut amps = vec![C64::new(0.0, 0.0); total];
        amps[idx] = C64::new(1.0, 0.0);
        Ok(EnsembleState {
            dims: dims.to_vec(),
            amps,
            leakage: 0.0,
        })
    }

    /// All ions resting in the scheme's ground level.
    pub fn all_ground(scheme: &LevelScheme, n_ions: usize) -> Result<Self> {
        let g = scheme.level_index(Role::Ground);
        EnsembleState::product(&vec![scheme.dim(); n_ions], &vec![g; n_ions])
    }

    pub fn n_ions(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Level of `ion` encoded in a flat basis index.
    pub fn level_of(&self, index: usize, ion: usize) -> usize {
        IndexDecoder::new(&self.dims).level_of(index, ion)
    }

    /// Flat index of a full level assignment.
    pub fn index_of(&self, levels: &[usize]) -> usize {
        let mut idx = 0;
        for (d, l) in self.dims.iter().zip(levels) {
            idx = idx * d + l;
        }
        idx
    }

    /// Marginal level populations of one ion.
    pub fn populations(&self, ion: usize) -> Vec<f64> {
        let decoder = IndexDecoder::new(&self.dims);
        let mut pops = vec![0.0; self.dims[ion]];
        for (i, a) in self.amps.iter().enumerate() {
            pops[decoder.level_of(i, ion)] += a.norm_sqr();
        }
        pops
    }

    /// Overlap ⟨other|self⟩.
    pub fn overlap(&self, other: &EnsembleState) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| b.conj() * a)
            .sum()
    }
}

/// Everything the pulse engine needs to know about the simulated ions. The
/// state's ion ordering matches `sites`; coupling entries are keyed by site
/// ids.
pub struct SimSystem<'a> {
    pub scheme: &'a LevelScheme,
    pub sites: &'a [IonSite],
    pub coupling: &'a CouplingTable,
}

impl<'a> SimSystem<'a> {
    pub fn new(
        scheme: &'a LevelScheme,
        sites: &'a [IonSite],
        coupling: &'a CouplingTable,
    ) -> Self {
        SimSystem {
            scheme,
            sites,
            coupling,
        }
    }

    /// Index into a site's offset vector for a level pair.
    pub fn transition_index(&self, pair: (usize, usize)) -> usize {
        self.scheme
            .transitions()
            .iter()
            .position(|&p| p == pair)
            .expect("valid level pair")
    }

    /// Static detuning (Hz) of an ion's transition relative to the pulse
    /// carrier: scheme spacing plus inhomogeneous offset minus carrier
    /// offset. Pair shifts enter per product-basis component, not here.
    pub fn static_detuning(&self, ion: usize, pair: (usize, usize), pulse: &PulseSpec) -> f64 {
        let pulse_pair = self
            .scheme
            .role_pair(pulse.transition.0, pulse.transition.1)
            .expect("pulse transition roles must be distinct");
        let scheme_gap = self.scheme.transition_hz(pair.0, pair.1)
            - self.scheme.transition_hz(pulse_pair.0, pulse_pair.1);
        let offset = self.sites[ion].offsets_hz[self.transition_index(pair)];
        scheme_gap + offset - pulse.carrier_offset_hz
    }

    /// The transition of `ion` nearest the pulse carrier.
    pub fn nearest_transition(&self, ion: usize, pulse: &PulseSpec) -> ((usize, usize), f64) {
        let mut best = ((0, 0), f64::INFINITY);
        for pair in self.scheme.transitions() {
            let det = self.static_detuning(ion, pair, pulse);
            if det.abs() < best.1.abs() {
                best = (pair, det);
            }
        }
        best
    }

    /// Sum of pair shifts of ion's transition in one partner configuration.
    fn component_shift(
        &self,
        decoder: &IndexDecoder,
        ion: usize,
        pair: (usize, usize),
        index: usize,
    ) -> f64 {
        let mut shift = 0.0;
        for p in 0..self.sites.len() {
            if p == ion {
                continue;
            }
            let lp = decoder.level_of(index, p);
            shift +=
                self.coupling
                    .transition_shift(self.sites[ion].id, pair, self.sites[p].id, lp);
        }
        shift
    }
}

/// Apply one pulse. An ion is addressed when its nearest transition falls
/// inside the addressing window for at least one partner configuration —
/// carriers routinely pre-compensate occupation shifts, so the window test
/// must see them. An addressed ion is rotated on that two-level subspace
/// with every partner-occupation block evolving at its own detuning;
/// unaddressed ions are left strictly untouched. Returns the number of ions
/// addressed; zero means the pulse was resonant with nothing and the state
/// is unchanged.
pub fn apply_pulse(
    state: &mut EnsembleState,
    pulse: &PulseSpec,
    system: &SimSystem,
) -> Result<usize> {
    if state.n_ions() != system.sites.len() {
        return Err(Error::validation(
            "apply_pulse: state and system ion counts differ",
        ));
    }
    let decoder = IndexDecoder::new(&state.dims);
    let omega = pulse.rabi_rad_per_s();
    let mut addressed = 0;
    let mut detunings: Vec<(usize, f64)> = Vec::new();
    for ion in 0..system.sites.len() {
        let (pair, static_det) = system.nearest_transition(ion, pulse);
        let (lo, hi) = pair;
        let stride = decoder.strides[ion];
        let dim = decoder.dims[ion];
        let gap = (hi - lo) * stride;

        detunings.clear();
        let mut in_window = false;
        for idx in 0..state.amps.len() {
            if (idx / stride) % dim != lo {
                continue;
            }
            let delta_hz = static_det + system.component_shift(&decoder, ion, pair, idx);
            in_window |= delta_hz.abs() <= pulse.w_cut_hz;
            detunings.push((idx, delta_hz));
        }
        if !in_window {
            continue;
        }
        addressed += 1;
        for &(idx, delta_hz) in &detunings {
            let u = detuned_rotation(omega, TAU * delta_hz, pulse.phase_rad, pulse.duration_s);
            let a = state.amps[idx];
            let b = state.amps[idx + gap];
            state.amps[idx] = u[0][0] * a + u[0][1] * b;
            state.amps[idx + gap] = u[1][0] * a + u[1][1] * b;
        }
    }
    Ok(addressed)
}

/// No-jump decay over an interval: each amplitude is damped by
/// Π_i exp(−dt/2τ_i); the lost norm is added to the leakage register.
pub fn apply_decay(state: &mut EnsembleState, dt_s: f64, system: &SimSystem) -> Result<()> {
    if dt_s < 0.0 {
        return Err(Error::validation("apply_decay: dt must be ≥ 0"));
    }
    if dt_s == 0.0 {
        return Ok(());
    }
    let factors: Vec<f64> = system
        .scheme
        .levels()
        .iter()
        .map(|l| {
            if l.lifetime_s().is_finite() {
                (-dt_s / (2.0 * l.lifetime_s())).exp()
            } else {
                1.0
            }
        })
        .collect();
    let decoder = IndexDecoder::new(&state.dims);
    let before = state.norm_sq();
    let n = state.n_ions();
    for idx in 0..state.amps.len() {
        let mut f = 1.0;
        for ion in 0..n {
            f *= factors[decoder.level_of(idx, ion)];
        }
        state.amps[idx] *= f;
    }
    let after = state.norm_sq();
    state.leakage += before - after;
    Ok(())
}
