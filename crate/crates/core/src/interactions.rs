//! Pairwise Stark shifts, the blockade condition, and the competing
//! interaction diagnostics.
//!
//! Exciting one ion changes the static field around it and shifts its
//! neighbours' transition frequencies. Two channels are modelled: the
//! dipole-dipole form (full tensor expression plus an oscillator-strength
//! estimate) and the quadrupole-quadrupole form, which dominates at the
//! few-lattice-constant distances that matter here. The quadrupole moment of
//! a 4f level is taken axially symmetric with magnitude |U^(2)_jj|·r0² along
//! a per-ion principal axis; this is the minimal tensor completion of the
//! scalar intensity data and is a model choice, not tabulated input.
//!
//! Interaction energies are evaluated in Gaussian-CGS with a relative
//! dielectric screening constant and reported as ordinary-frequency shifts
//! δ = E/(2πħ) in Hz.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ensemble::{CrystalConfig, IonSite};
use crate::error::{Error, Result};
use crate::ion::{IonDatabase, LevelScheme, Role};
use crate::phys;

/// Second moments of one electronic state: ⟨x²⟩, ⟨y²⟩, ⟨z²⟩ and their sum
/// ⟨r²⟩, all in m², expressed in some orthogonal frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondMoments {
    pub x2: f64,
    pub y2: f64,
    pub z2: f64,
    pub r2: f64,
}

impl SecondMoments {
    pub fn new(x2: f64, y2: f64, z2: f64) -> Result<Self> {
        if x2 < 0.0 || y2 < 0.0 || z2 < 0.0 {
            return Err(Error::validation("second moments must be non-negative"));
        }
        Ok(SecondMoments {
            x2,
            y2,
            z2,
            r2: x2 + y2 + z2,
        })
    }

    fn check(&self) -> Result<()> {
        let sum = self.x2 + self.y2 + self.z2;
        let scale = sum.abs().max(self.r2.abs()).max(f64::MIN_POSITIVE);
        if (sum - self.r2).abs() > 1e-12 * scale {
            return Err(Error::validation(
                "second moments do not sum to ⟨r²⟩ within 1e-12",
            ));
        }
        if self.x2 < 0.0 || self.y2 < 0.0 || self.z2 < 0.0 {
            return Err(Error::validation("second moments must be non-negative"));
        }
        Ok(())
    }
}

/// Static-moment changes of one transition |j⟩ ↔ |j'⟩: the mean-position
/// change (a 3-vector, m) and the per-state second moments (m²). Components
/// are understood in the pair frame whose x-axis is the inter-ion axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticMoments {
    /// Transition pair labels (j, j').
    pub pair: (String, String),
    /// Change of the mean electron position, ⟨r̄⟩_{j'} − ⟨r̄⟩_j (m).
    pub dipole_change_m: [f64; 3],
    /// Second moments of the lower state j.
    pub lower: SecondMoments,
    /// Second moments of the upper state j'.
    pub upper: SecondMoments,
}

impl StaticMoments {
    pub fn new(
        pair: (String, String),
        dipole_change_m: [f64; 3],
        lower: SecondMoments,
        upper: SecondMoments,
    ) -> Result<Self> {
        lower.check()?;
        upper.check()?;
        Ok(StaticMoments {
            pair,
            dipole_change_m,
            lower,
            upper,
        })
    }

    /// State change of the second moments, Δ⟨u²⟩ = ⟨u²⟩_{j'} − ⟨u²⟩_j (m²).
    pub fn delta_m2(&self) -> [f64; 3] {
        [
            self.upper.x2 - self.lower.x2,
            self.upper.y2 - self.lower.y2,
            self.upper.z2 - self.lower.z2,
        ]
    }

    /// Swap j and j'; all changes flip sign.
    pub fn reversed(&self) -> StaticMoments {
        StaticMoments {
            pair: (self.pair.1.clone(), self.pair.0.clone()),
            dipole_change_m: [
                -self.dipole_change_m[0],
                -self.dipole_change_m[1],
                -self.dipole_change_m[2],
            ],
            lower: self.upper,
            upper: self.lower,
        }
    }
}

/// Traceless deviation of diagonal second moments: d_u = u² − r²/3, computed
/// as (2u² − v² − w²)/3 so that equal components give exactly zero.
fn traceless_dev(m: [f64; 3]) -> [f64; 3] {
    [
        (2.0 * m[0] - m[1] - m[2]) / 3.0,
        (2.0 * m[1] - m[2] - m[0]) / 3.0,
        (2.0 * m[2] - m[0] - m[1]) / 3.0,
    ]
}

/// The quadrupole-quadrupole angular bracket, evaluated on traceless
/// deviations: 17 dx₁dx₂ + 2 dy₁dy₂ + 2 dz₁dz₂. Algebraically equal to the
/// full bracket (r₁²−5x₁²)(r₂²−5x₂²) − 8x₁²x₂² + 2y₁²y₂² + 2z₁²z₂², whose
/// isotropic parts cancel identically.
fn quad_bracket(d1: [f64; 3], d2: [f64; 3]) -> f64 {
    17.0 * d1[0] * d2[0] + 2.0 * d1[1] * d2[1] + 2.0 * d1[2] * d2[2]
}

/// Dipole-dipole frequency shift (Hz) of a transition on ion 1 caused by a
/// state change on ion 2, from the full tensor form. The x-axis is the
/// inter-ion axis; the caller rotates moments into the pair frame.
pub fn dipole_shift_full(
    m1: &StaticMoments,
    m2: &StaticMoments,
    r_m: f64,
    eps_r: f64,
) -> Result<f64> {
    if !(r_m > 0.0) {
        return Err(Error::validation("dipole_shift_full: R must be > 0"));
    }
    if eps_r < 1.0 {
        return Err(Error::validation("dipole_shift_full: eps_r must be ≥ 1"));
    }
    let d1 = m1.dipole_change_m;
    let d2 = m2.dipole_change_m;
    // m → cm for both vectors: product picks up 1e4.
    let bracket_cm2 = (-2.0 * d1[0] * d2[0] + d1[1] * d2[1] + d1[2] * d2[2]) * 1e4;
    let r_cm = r_m * 100.0;
    let energy_erg = phys::e_sq_gauss() * bracket_cm2 / (eps_r * r_cm.powi(3));
    Ok(energy_erg / phys::PLANCK_CGS)
}

/// Quadrupole-quadrupole frequency shift (Hz) from state-change second
/// moments in the pair frame.
pub fn quad_shift_full(
    m1: &StaticMoments,
    m2: &StaticMoments,
    r_m: f64,
    eps_r: f64,
) -> Result<f64> {
    quad_shift_from_deltas(m1.delta_m2(), m2.delta_m2(), r_m, eps_r)
}

/// Same as [`quad_shift_full`] but taking the Δ⟨u²⟩ components directly (m²).
pub fn quad_shift_from_deltas(
    delta1_m2: [f64; 3],
    delta2_m2: [f64; 3],
    r_m: f64,
    eps_r: f64,
) -> Result<f64> {
    if !(r_m > 0.0) {
        return Err(Error::validation("quad_shift_full: R must be > 0"));
    }
    if eps_r < 1.0 {
        return Err(Error::validation("quad_shift_full: eps_r must be ≥ 1"));
    }
    let d1 = traceless_dev(delta1_m2);
    let d2 = traceless_dev(delta2_m2);
    // m² → cm² per ion: product picks up 1e8.
    let bracket_cm4 = quad_bracket(d1, d2) * 1e8;
    let r_cm = r_m * 100.0;
    let energy_erg = 0.75 * phys::e_sq_gauss() * bracket_cm4 / (eps_r * r_cm.powi(5));
    Ok(energy_erg / phys::PLANCK_CGS)
}

/// Order-of-magnitude dipole shift (Hz): γ0 ε_r⁻¹ (Ũ/U₀₁)² (kR)⁻³ / 2π.
pub fn dipole_shift_estimate(
    gamma0_per_s: f64,
    eps_r: f64,
    u2_ratio_sq: f64,
    k_per_m: f64,
    r_m: f64,
) -> Result<f64> {
    if !(gamma0_per_s > 0.0 && eps_r > 0.0 && k_per_m > 0.0 && r_m > 0.0) {
        return Err(Error::validation(
            "dipole_shift_estimate: γ0, ε_r, k and R must be > 0",
        ));
    }
    if u2_ratio_sq < 0.0 {
        return Err(Error::validation(
            "dipole_shift_estimate: u2_ratio_sq must be ≥ 0",
        ));
    }
    Ok(gamma0_per_s / eps_r * u2_ratio_sq * (k_per_m * r_m).powi(-3) / std::f64::consts::TAU)
}

/// Order-of-magnitude quadrupole shift (Hz):
/// 25 (ΔU^(2))² ω̄0 r0⁵ / (ε_r R⁵) / 2π with r0⁵ = (r0²)^{5/2}.
pub fn quad_shift_estimate(
    delta_u2_sq: f64,
    omega0_rad_per_s: f64,
    r0_sq_m2: f64,
    eps_r: f64,
    r_m: f64,
) -> Result<f64> {
    if !(omega0_rad_per_s > 0.0 && r0_sq_m2 > 0.0 && eps_r > 0.0 && r_m > 0.0) {
        return Err(Error::validation(
            "quad_shift_estimate: ω̄0, r0², ε_r and R must be > 0",
        ));
    }
    if delta_u2_sq < 0.0 {
        return Err(Error::validation(
            "quad_shift_estimate: ΔU² must be ≥ 0",
        ));
    }
    let r0_5 = r0_sq_m2.powf(2.5);
    Ok(25.0 * delta_u2_sq * omega0_rad_per_s * r0_5 / (eps_r * r_m.powi(5))
        / std::f64::consts::TAU)
}

/// Blockade condition: the pair shift must exceed both the pulse bandwidth
/// and the homogeneous linewidth. Returns (ok, margin).
pub fn blockade_ok(delta_hz: f64, gamma_l_hz: f64, gamma_h_hz: f64) -> (bool, f64) {
    let floor = gamma_l_hz.max(gamma_h_hz);
    let margin = if floor > 0.0 {
        delta_hz.abs() / floor
    } else if delta_hz.abs() > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    (delta_hz.abs() > floor, margin)
}

/// Distance below which the R⁻⁵ law beats the R⁻³ law:
/// R* = √(A_q/A_d), prefactors in consistent units of (lattice constants).
pub fn crossover_distance(a_dipole: f64, a_quad: f64) -> Result<f64> {
    if !(a_dipole > 0.0 && a_quad > 0.0) {
        return Err(Error::validation(
            "crossover_distance: prefactors must be > 0",
        ));
    }
    Ok((a_quad / a_dipole).sqrt())
}

/// Exchange interaction at distance R (lattice units), decaying
/// exponentially from its nearest-neighbour value; negligible beyond ~3a.
pub fn exchange_estimate(r_a: f64, j_nn_cm1: f64, decay_a: f64) -> Result<f64> {
    if r_a < 1.0 {
        return Err(Error::validation("exchange_estimate: R must be ≥ 1a"));
    }
    if !(decay_a > 0.0) {
        return Err(Error::validation("exchange_estimate: decay length must be > 0"));
    }
    Ok(j_nn_cm1 * (-(r_a - 1.0) / decay_a).exp())
}

/// Default exchange decay length (lattice units), set so J(3a) < 1% of J_nn.
pub const EXCHANGE_DECAY_A: f64 = 0.4;

/// Magnetic dipole-dipole interaction, M_nn·R⁻³ (cm⁻¹, R in lattice units).
pub fn magnetic_dd_estimate(r_a: f64, m_nn_cm1: f64) -> Result<f64> {
    if r_a < 1.0 {
        return Err(Error::validation("magnetic_dd_estimate: R must be ≥ 1a"));
    }
    Ok(m_nn_cm1 * r_a.powi(-3))
}

/// Default nearest-neighbour magnetic dipole-dipole scale (cm⁻¹).
pub const MAGNETIC_DD_NN_CM1: f64 = 0.05;

/// Motionally narrowed excitation-transfer rate between two centres detuned
/// by Δ: Γ²/(Γ² + Δ²)^{1/2}.
pub fn transfer_rate_motional(gamma_exch_hz: f64, detuning_hz: f64) -> f64 {
    if gamma_exch_hz == 0.0 {
        return 0.0;
    }
    let g2 = gamma_exch_hz * gamma_exch_hz;
    g2 / (g2 + detuning_hz * detuning_hz).sqrt()
}

/// One-phonon Förster transfer rate Γ² κ² (n̄_δ + 1)/|Δ| with the Planck
/// factor n̄_δ at phonon energy hδ.
pub fn forster_rate(
    gamma_exch_hz: f64,
    kappa: f64,
    delta_hz: f64,
    temperature_k: f64,
    detuning_hz: f64,
) -> Result<f64> {
    if detuning_hz == 0.0 {
        return Err(Error::physics(
            "forster_rate: resonant pair (Δ = 0); the motional-narrowing rate applies instead",
        ));
    }
    if temperature_k < 0.0 {
        return Err(Error::validation("forster_rate: negative temperature"));
    }
    if !(kappa < 1.0) {
        return Err(Error::validation("forster_rate: κ must be < 1"));
    }
    let n_bar = if temperature_k == 0.0 {
        0.0
    } else {
        let x = phys::PLANCK_SI * delta_hz.abs() / (phys::KB_SI * temperature_k);
        1.0 / (x.exp() - 1.0)
    };
    Ok(gamma_exch_hz * gamma_exch_hz * kappa * kappa * (n_bar + 1.0) / detuning_hz.abs())
}

/// Axially symmetric static-moment model of a transition, built from the
/// diagonal |U^(2)| values: the anisotropy change is
/// q = (|U_{j'j'}| − |U_{jj}|)·r0², split as Δ⟨x∥²⟩ = (2/3)q and
/// Δ⟨x⊥²⟩ = −(1/3)q each. The x-axis of the returned moments is the given
/// principal axis. The dipole change is left zero in this model; the dipole
/// channel is estimated separately.
pub fn moments_from_u2(
    db: &IonDatabase,
    ion: &str,
    level_j: &str,
    level_j_prime: &str,
    r0_sq_m2: f64,
) -> Result<StaticMoments> {
    let (u2_j, _, _) = db.u_sq(ion, level_j, level_j)?;
    let (u2_jp, _, _) = db.u_sq(ion, level_j_prime, level_j_prime)?;
    let q_j = u2_j.sqrt() * r0_sq_m2;
    let q_jp = u2_jp.sqrt() * r0_sq_m2;
    // A state-independent isotropic baseline keeps the per-state moments
    // non-negative; it cancels exactly in the quadrupole bracket.
    let baseline = 3.0 * q_j.max(q_jp).max(r0_sq_m2);
    let state = |q: f64| {
        SecondMoments::new(
            baseline / 3.0 + 2.0 * q / 3.0,
            baseline / 3.0 - q / 3.0,
            baseline / 3.0 - q / 3.0,
        )
    };
    StaticMoments::new(
        (level_j.to_string(), level_j_prime.to_string()),
        [0.0; 3],
        state(q_j)?,
        state(q_jp)?,
    )
}

/// How per-ion quadrupole principal axes are assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum AxisConvention {
    /// All principal axes along the global z-axis (deterministic default).
    #[default]
    GlobalZ,
    /// Per-ion random axes (seeded).
    RandomPerIon,
    /// Each pair's moments taken axial along the inter-ion axis, the
    /// geometry of the order-of-magnitude estimate; shifts then depend on
    /// distance only.
    PairAligned,
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Orthonormal pair frame (x̂ along r̂) with a deterministic completion.
fn pair_frame(r_hat: [f64; 3]) -> ([f64; 3], [f64; 3], [f64; 3]) {
    let x = r_hat;
    let helper = if dot(x, [0.0, 0.0, 1.0]).abs() < 0.9 {
        [0.0, 0.0, 1.0]
    } else {
        [1.0, 0.0, 0.0]
    };
    let y = normalize(cross(helper, x));
    let z = cross(x, y);
    (x, y, z)
}

/// Traceless deviation components, in the pair frame, of an axial moment of
/// magnitude q along `axis`.
fn axial_dev_in_frame(q: f64, axis: [f64; 3], frame: ([f64; 3], [f64; 3], [f64; 3])) -> [f64; 3] {
    let (x, y, z) = frame;
    let cx = dot(axis, x);
    let cy = dot(axis, y);
    let cz = dot(axis, z);
    [
        q * (cx * cx - 1.0 / 3.0),
        q * (cy * cy - 1.0 / 3.0),
        q * (cz * cz - 1.0 / 3.0),
    ]
}

/// Per-pair table of level-level interaction energies, the diagonal coupling
/// the pulse dynamics and the spectra consume. Entry (i, j, lᵢ, lⱼ) is the
/// frequency-shift energy W (Hz) of ion i sitting in level lᵢ while ion j
/// sits in level lⱼ; transition shifts are differences of W entries.
#[derive(Debug, Clone, Default)]
pub struct CouplingTable {
    dim: usize,
    pairs: BTreeMap<(usize, usize), Vec<f64>>,
}

impl CouplingTable {
    /// No interactions at all (isolated ions).
    pub fn none(dim: usize) -> Self {
        CouplingTable {
            dim,
            pairs: BTreeMap::new(),
        }
    }

    /// Build the quadrupole coupling for every ion pair from the scheme's
    /// diagonal |U^(2)| values.
    pub fn build(
        sites: &[IonSite],
        scheme: &LevelScheme,
        config: &CrystalConfig,
        axes: AxisConvention,
        seed: u64,
    ) -> Self {
        let dim = scheme.dim();
        let q: Vec<f64> = scheme
            .levels()
            .iter()
            .map(|l| l.u2_diag() * config.r0_sq_m2)
            .collect();
        let mut axis_of: Vec<[f64; 3]> = vec![[0.0, 0.0, 1.0]; sites.len()];
        if axes == AxisConvention::RandomPerIon {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for a in axis_of.iter_mut() {
                // Uniform direction via normalized Gaussian triple.
                let v: [f64; 3] = [
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                ];
                *a = normalize(v);
            }
        }

        let mut pairs = BTreeMap::new();
        for i in 0..sites.len() {
            for j in (i + 1)..sites.len() {
                let r_vec = [
                    sites[j].position_m[0] - sites[i].position_m[0],
                    sites[j].position_m[1] - sites[i].position_m[1],
                    sites[j].position_m[2] - sites[i].position_m[2],
                ];
                let r_m = (r_vec[0] * r_vec[0] + r_vec[1] * r_vec[1] + r_vec[2] * r_vec[2])
                    .sqrt();
                let r_hat = normalize(r_vec);
                let frame = pair_frame(r_hat);
                let (ax_i, ax_j) = match axes {
                    AxisConvention::GlobalZ | AxisConvention::RandomPerIon => {
                        (axis_of[i], axis_of[j])
                    }
                    AxisConvention::PairAligned => (r_hat, r_hat),
                };
                let mut w = vec![0.0; dim * dim];
                let r_cm = r_m * 100.0;
                let k_geom =
                    0.75 * phys::e_sq_gauss() / (config.epsilon_r * r_cm.powi(5))
                        / phys::PLANCK_CGS;
                for li in 0..dim {
                    let dev_i = axial_dev_in_frame(q[li], ax_i, frame);
                    for lj in 0..dim {
                        let dev_j = axial_dev_in_frame(q[lj], ax_j, frame);
                        // m² → cm² per side.
                        w[li * dim + lj] = k_geom * quad_bracket(dev_i, dev_j) * 1e8;
                    }
                }
                pairs.insert((sites[i].id, sites[j].id), w);
            }
        }
        CouplingTable { dim, pairs }
    }

    /// Minimal two-ion coupling: only the configuration with both ions in
    /// the auxiliary level carries energy, so the 0↔1' transition of either
    /// ion shifts by exactly `delta_hz` when its partner occupies 1'.
    pub fn blockade_pair(
        scheme: &LevelScheme,
        id1: usize,
        id2: usize,
        delta_hz: f64,
    ) -> CouplingTable {
        let dim = scheme.dim();
        let aux = scheme.level_index(Role::Aux);
        let mut w = vec![0.0; dim * dim];
        w[aux * dim + aux] = delta_hz;
        let mut pairs = BTreeMap::new();
        pairs.insert((id1.min(id2), id1.max(id2)), w);
        CouplingTable { dim, pairs }
    }

    /// Uniformly rescale every entry (used to pin a headline blockade shift
    /// while keeping the level structure of the coupling).
    pub fn scaled(mut self, factor: f64) -> Self {
        for w in self.pairs.values_mut() {
            for v in w.iter_mut() {
                *v *= factor;
            }
        }
        self
    }

    /// Absorb another table's pair entries (same level dimension).
    pub fn merge(&mut self, other: &CouplingTable) {
        debug_assert_eq!(self.dim, other.dim);
        for (k, w) in &other.pairs {
            self.pairs.insert(*k, w.clone());
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Energy shift (Hz) of ion `i` in level `li` due to ion `j` in `lj`.
    pub fn w(&self, i: usize, j: usize, li: usize, lj: usize) -> f64 {
        let (key, a, b) = if i < j { ((i, j), li, lj) } else { ((j, i), lj, li) };
        match self.pairs.get(&key) {
            Some(w) => w[a * self.dim + b],
            None => 0.0,
        }
    }

    /// Shift of ion i's transition lo→hi when partner j occupies level lj.
    pub fn transition_shift(&self, i: usize, (lo, hi): (usize, usize), j: usize, lj: usize) -> f64 {
        self.w(i, j, hi, lj) - self.w(i, j, lo, lj)
    }

    /// Change of ion i's (lo, hi) transition frequency when partner j moves
    /// from level `from` to level `to` — the hole-burning observable.
    pub fn transition_shift_change(
        &self,
        i: usize,
        pair: (usize, usize),
        j: usize,
        from: usize,
        to: usize,
    ) -> f64 {
        self.transition_shift(i, pair, j, to) - self.transition_shift(i, pair, j, from)
    }

    /// Ids of partners with any stored coupling to ion `i`.
    pub fn partners_of(&self, i: usize) -> Vec<usize> {
        self.pairs
            .keys()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Which interaction dominates a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    Dipole,
    Quadrupole,
}

/// One row of the exported pair-shift table.
#[derive(Debug, Clone, Serialize)]
pub struct PairShift {
    pub id1: usize,
    pub id2: usize,
    pub r_over_a: f64,
    pub delta_d_hz: f64,
    pub delta_q_hz: f64,
    pub delta_total_hz: f64,
    pub blockade_margin: f64,
    pub dominant: Mechanism,
    /// Set when |δ_d| and |δ_q| are within a factor 10 of each other, the
    /// band where the neglected dipole-quadrupole cross term could compete.
    pub cross_term_band: bool,
}

/// Parameters of the dipole-channel estimate derived from a scheme: the
/// radiative rate of the 0↔1 transition, the (Ũ^(2)/U₀₁)² ratio and the
/// optical wave number.
pub fn dipole_estimate_params(
    db: &IonDatabase,
    scheme: &LevelScheme,
    refractive_index: f64,
) -> Result<(f64, f64, f64)> {
    let zero = scheme.level(Role::Zero);
    let one = scheme.level(Role::One);
    let upper = if one.energy_cm1 > zero.energy_cm1 { one } else { zero };
    let gamma0 = 1.0 / upper.lifetime_s();
    let (u2, u4, u6) = db.u_sq(&scheme.ion, &zero.label, &one.label)?;
    let u01 = u2.max(u4).max(u6).sqrt();
    let u_tilde = zero.u2_diag().max(one.u2_diag());
    let ratio_sq = if u01 > 0.0 {
        (u_tilde / u01).powi(2)
    } else {
        0.0
    };
    let wavenumber = scheme.transition_frequency(Role::Zero, Role::One)?;
    let k = phys::wave_number(wavenumber, refractive_index)?;
    Ok((gamma0, ratio_sq, k))
}

/// Pair-shift table for the blockade-relevant transition: δ is the change of
/// ion 1's 0↔1' frequency when ion 2 is promoted 0 → 1', mirrored for the
/// other order. Rows are ordered by (min id, max id).
pub fn pair_shift_table(
    db: &IonDatabase,
    sites: &[IonSite],
    scheme: &LevelScheme,
    config: &CrystalConfig,
    coupling: &CouplingTable,
    gamma_l_hz: f64,
    gamma_h_hz: f64,
) -> Result<Vec<PairShift>> {
    let pair = scheme.role_pair(Role::Zero, Role::Aux)?;
    let (i0, ia) = (
        scheme.level_index(Role::Zero),
        scheme.level_index(Role::Aux),
    );
    let (gamma0, ratio_sq, k) = dipole_estimate_params(db, scheme, config.refractive_index)?;
    let a = config.lattice_constant_m;
    let mut rows = Vec::new();
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            let r_m = sites[i].distance_m(&sites[j]);
            let dq = coupling.transition_shift_change(sites[i].id, pair, sites[j].id, i0, ia);
            let dd = dipole_shift_estimate(gamma0, config.epsilon_r, ratio_sq, k, r_m)?;
            let total = dd + dq;
            let (_, margin) = blockade_ok(dq, gamma_l_hz, gamma_h_hz);
            let (abs_d, abs_q) = (dd.abs(), dq.abs());
            rows.push(PairShift {
                id1: sites[i].id,
                id2: sites[j].id,
                r_over_a: r_m / a,
                delta_d_hz: dd,
                delta_q_hz: dq,
                delta_total_hz: total,
                blockade_margin: margin,
                dominant: if abs_q >= abs_d {
                    Mechanism::Quadrupole
                } else {
                    Mechanism::Dipole
                },
                cross_term_band: abs_d > 0.0
                    && abs_q > 0.0
                    && (abs_d / abs_q).max(abs_q / abs_d) < 10.0,
            });
        }
    }
    Ok(rows)
}

/// Text export of a pair-shift table, one record per pair.
pub fn export_pair_shifts(rows: &[PairShift]) -> String {
    let mut out =
        String::from("id1,id2,r_over_a,delta_d_hz,delta_q_hz,delta_total_hz,blockade_margin\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.id1, r.id2, r.r_over_a, r.delta_d_hz, r.delta_q_hz, r.delta_total_hz, r.blockade_margin
        ));
    }
    out
}
