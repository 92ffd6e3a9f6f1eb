//! Spectral hole burning: absorption-spectrum synthesis, burn simulation,
//! hole/antihole pair detection and working-ensemble selection.
//!
//! Burning one ion out of the resting level changes the static field its
//! neighbours sit in, so each neighbour's line moves: a hole appears at the
//! old position and an antihole at the new one. The splitting measures the
//! pair shift and therefore the proximity of the neighbour to the burned
//! ion: ranking pairs by splitting ranks neighbours by distance.
//!
//! Spectra are sums of unit-area Lorentzians of FWHM Γ_h, one per occupied
//! lower level and upward transition, weighted by the lower-level
//! population; line centres include the pair shifts of the current
//! occupation. Inhomogeneous structure comes from explicit per-ion centres,
//! not from a convolved profile, because holes and antiholes are per-ion
//! phenomena.

use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::interactions::{blockade_ok, CouplingTable};
use crate::ion::Role;
use crate::pulse::{
    apply_pulse, transfer_probability, EnsembleState, PulseSpec, SimSystem,
};

/// Uniform frequency grid (absolute Hz).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyGrid {
    pub start_hz: f64,
    pub step_hz: f64,
    pub len: usize,
}

impl FrequencyGrid {
    pub fn new(start_hz: f64, step_hz: f64, len: usize) -> Result<Self> {
        if !(step_hz > 0.0) || len < 3 {
            return Err(Error::validation("grid needs step > 0 and ≥ 3 points"));
        }
        Ok(FrequencyGrid {
            start_hz,
            step_hz,
            len,
        })
    }

    pub fn freq(&self, i: usize) -> f64 {
        self.start_hz + i as f64 * self.step_hz
    }

    pub fn end_hz(&self) -> f64 {
        self.freq(self.len - 1)
    }

    /// Grid spanning [lo, hi] at the given step.
    pub fn covering(lo_hz: f64, hi_hz: f64, step_hz: f64) -> Result<Self> {
        let len = ((hi_hz - lo_hz) / step_hz).ceil() as usize + 1;
        FrequencyGrid::new(lo_hz, step_hz, len)
    }
}

/// Absorption values on a frequency grid. Direct spectra are non-negative;
/// difference spectra may be negative.
#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub grid: FrequencyGrid,
    pub values: Vec<f64>,
}

impl Spectrum {
    /// after − before, on identical grids.
    pub fn difference(after: &Spectrum, before: &Spectrum) -> Result<Spectrum> {
        if after.grid != before.grid {
            return Err(Error::validation("difference: spectra on different grids"));
        }
        Ok(Spectrum {
            grid: after.grid.clone(),
            values: after
                .values
                .iter()
                .zip(&before.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Two-column text export (frequency_Hz, absorption).
    pub fn export(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 24);
        out.push_str("frequency_hz,absorption\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.grid.freq(i), v));
        }
        out
    }
}

/// Classical per-ion populations used by spectra and burning.
#[derive(Debug, Clone, PartialEq)]
pub enum Occupation {
    /// One definite level per ion.
    Hard(Vec<usize>),
    /// Fractional level populations per ion.
    Fractional(Vec<Vec<f64>>),
}

impl Occupation {
    pub fn all_in(level: usize, n: usize) -> Self {
        Occupation::Hard(vec![level; n])
    }

    pub fn n_ions(&self) -> usize {
        match self {
            Occupation::Hard(v) => v.len(),
            Occupation::Fractional(v) => v.len(),
        }
    }

    pub fn population(&self, ion: usize, level: usize) -> f64 {
        match self {
            Occupation::Hard(v) => {
                if v[ion] == level {
                    1.0
                } else {
                    0.0
                }
            }
            Occupation::Fractional(v) => v[ion].get(level).copied().unwrap_or(0.0),
        }
    }
}

/// One absorption line: which ion and transition, where, and how strong.
#[derive(Debug, Clone, Serialize)]
pub struct LineCenter {
    pub ion: usize,
    pub pair: (usize, usize),
    pub center_hz: f64,
    pub weight: f64,
}

/// Absorption line centres of the ensemble in a given occupation. Centres
/// include the occupation-averaged pair shifts; weights are lower-level
/// populations.
pub fn line_centers(system: &SimSystem, occupation: &Occupation) -> Vec<LineCenter> {
    let scheme = system.scheme;
    let mut out = Vec::new();
    for ion in 0..system.sites.len() {
        for pair in scheme.transitions() {
            let weight = occupation.population(ion, pair.0);
            if weight == 0.0 {
                continue;
            }
            let mut center = scheme.transition_hz(pair.0, pair.1)
                + system.sites[ion].offsets_hz[system.transition_index(pair)];
            for p in 0..system.sites.len() {
                if p == ion {
                    continue;
                }
                for level in 0..scheme.dim() {
                    let pop = occupation.population(p, level);
                    if pop == 0.0 {
                        continue;
                    }
                    center += pop
                        * system.coupling.transition_shift(
                            system.sites[ion].id,
                            pair,
                            system.sites[p].id,
                            level,
                        );
                }
            }
            out.push(LineCenter {
                ion,
                pair,
                center_hz: center,
                weight,
            });
        }
    }
    out
}

/// Half-width of the window a line is evaluated over, in units of Γ_h.
const EVAL_WINDOW_GAMMA_H: f64 = 2000.0;

/// Synthesize the absorption spectrum: a unit-area Lorentzian of FWHM Γ_h
/// per line, weighted by the lower-level population. The grid step must
/// resolve Γ_h (step ≤ Γ_h/5) and no line centre may sit within 10Γ_h of a
/// grid edge (lines clear of the grid by that margin are simply skipped).
pub fn synth_spectrum(
    system: &SimSystem,
    occupation: &Occupation,
    gamma_h_hz: f64,
    grid: &FrequencyGrid,
) -> Result<Spectrum> {
    if !(gamma_h_hz > 0.0) {
        return Err(Error::validation("synth_spectrum: Γ_h must be > 0"));
    }
    if grid.step_hz > gamma_h_hz / 5.0 {
        return Err(Error::validation(format!(
            "grid step {} Hz too coarse for Γ_h = {} Hz (need ≤ Γ_h/5)",
            grid.step_hz, gamma_h_hz
        )));
    }
    let margin = 10.0 * gamma_h_hz;
    let mut values = vec![0.0; grid.len];
    for line in line_centers(system, occupation) {
        let c = line.center_hz;
        if c < grid.start_hz - margin || c > grid.end_hz() + margin {
            continue;
        }
        if c < grid.start_hz + margin || c > grid.end_hz() - margin {
            return Err(Error::validation(format!(
                "line of ion {} at {:.6e} Hz sits within 10Γ_h of the grid edge",
                line.ion, c
            )));
        }
        let half = gamma_h_hz / 2.0;
        let amp = line.weight * gamma_h_hz / std::f64::consts::TAU;
        let win = EVAL_WINDOW_GAMMA_H * gamma_h_hz;
        let i_lo = (((c - win) - grid.start_hz) / grid.step_hz).floor().max(0.0) as usize;
        let i_hi = ((((c + win) - grid.start_hz) / grid.step_hz).ceil() as usize)
            .min(grid.len - 1);
        for i in i_lo..=i_hi {
            let d = grid.freq(i) - c;
            values[i] += amp / (d * d + half * half);
        }
    }
    Ok(Spectrum {
        grid: grid.clone(),
        values,
    })
}

/// Default burn transition: g → 1' when they differ, else g → 0 (promoting
/// the ion out of the strongly interacting resting level).
pub fn default_burn_transition(scheme: &crate::ion::LevelScheme) -> (Role, Role) {
    if scheme.ground_is_aux() {
        (Role::Ground, Role::Zero)
    } else {
        (Role::Ground, Role::Aux)
    }
}

/// Result of a burn pulse.
#[derive(Debug, Clone)]
pub struct BurnOutcome {
    pub occupation: Occupation,
    /// Ids of promoted ions.
    pub burned: Vec<usize>,
    /// Single-pulse transfer probability per candidate ion.
    pub transfer: Vec<(usize, f64)>,
}

/// Burn at an absolute carrier frequency: every ion whose burn transition
/// lies within Γ_L/2 of the carrier is promoted to the transition's upper
/// level. The promotion decision runs a real π-pulse per candidate through
/// the pulse engine (with the partner shifts of the current occupation
/// folded into its detuning) and thresholds the transfer at the
/// Γ_L/2-detuning value; repeated burning saturates anything above it.
pub fn burn(
    system: &SimSystem,
    occupation: &Occupation,
    nu_burn_hz: f64,
    gamma_l_hz: f64,
    transition: (Role, Role),
) -> Result<BurnOutcome> {
    let scheme = system.scheme;
    let pair = scheme.role_pair(transition.0, transition.1)?;
    let bare_hz = scheme.transition_hz(pair.0, pair.1);
    let duration = 1.0 / gamma_l_hz;
    let threshold = transfer_probability(std::f64::consts::PI, duration, gamma_l_hz / 2.0);

    let centers = line_centers(system, occupation);
    let mut occ_levels: Vec<Vec<f64>> = (0..occupation.n_ions())
        .map(|i| {
            (0..scheme.dim())
                .map(|l| occupation.population(i, l))
                .collect()
        })
        .collect();

    let mut burned = Vec::new();
    let mut transfer = Vec::new();
    for line in &centers {
        if line.pair != pair || line.weight < 1.0 {
            continue;
        }
        // One-ion run through the pulse engine: the site's offset carries
        // the full environment-shifted line position.
        let site = crate::ensemble::IonSite {
            id: 0,
            cell: [0, 0, 0],
            position_m: [0.0, 0.0, 0.0],
            offsets_hz: vec![line.center_hz - bare_hz; scheme.transitions().len()],
        };
        let sites = [site];
        let none = CouplingTable::none(scheme.dim());
        let one_ion = SimSystem::new(scheme, &sites, &none);
        let mut state = EnsembleState::product(&[scheme.dim()], &[pair.0])?;
        let pulse = PulseSpec::pi(transition, nu_burn_hz - bare_hz, gamma_l_hz)?;
        apply_pulse(&mut state, &pulse, &one_ion)?;
        let p = state.populations(0)[pair.1];
        transfer.push((system.sites[line.ion].id, p));
        if p >= threshold - 1e-12 {
            burned.push(system.sites[line.ion].id);
            occ_levels[line.ion] = vec![0.0; scheme.dim()];
            occ_levels[line.ion][pair.1] = 1.0;
        }
    }
    // Hard occupations stay hard.
    let occupation = if occ_levels
        .iter()
        .all(|p| p.iter().all(|&x| x == 0.0 || x == 1.0))
    {
        Occupation::Hard(
            occ_levels
                .iter()
                .map(|p| p.iter().position(|&x| x == 1.0).unwrap())
                .collect(),
        )
    } else {
        Occupation::Fractional(occ_levels)
    };
    Ok(BurnOutcome {
        occupation,
        burned,
        transfer,
    })
}

/// A hole/antihole pair found in a difference spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct HolePair {
    pub hole_hz: f64,
    pub antihole_hz: f64,
    pub splitting_hz: f64,
    pub hole_area: f64,
    pub antihole_area: f64,
    /// Id of the ion whose line moved, attached in simulation mode only.
    pub partner_ion: Option<usize>,
}

/// Features that could not be paired or resolved; reported, never dropped.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ResidualFeatures {
    /// Hole positions without a matching antihole (e.g. the burned ion's
    /// own vanished line).
    pub unmatched_holes: Vec<f64>,
    pub unmatched_antiholes: Vec<f64>,
    /// Pairs closer than Γ_h, below the resolution floor: their apparent
    /// splitting is dominated by line-shape overlap, not physics.
    pub unresolved: Vec<HolePair>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairDetection {
    /// Resolved pairs, sorted by splitting descending.
    pub pairs: Vec<HolePair>,
    pub residual: ResidualFeatures,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy)]
struct Feature {
    freq_hz: f64,
    value: f64,
    area: f64,
}

/// Quadratic refinement of an extremum position from three samples.
fn parabolic_vertex(grid: &FrequencyGrid, i: usize, values: &[f64]) -> f64 {
    if i == 0 || i + 1 >= values.len() {
        return grid.freq(i);
    }
    let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
    let denom = a - 2.0 * b + c;
    if denom == 0.0 {
        return grid.freq(i);
    }
    let shift = 0.5 * (a - c) / denom;
    grid.freq(i) + shift * grid.step_hz
}

/// Signed area of the same-sign lobe around an extremum.
fn lobe_area(values: &[f64], i: usize, step: f64) -> f64 {
    let sign = values[i].signum();
    let mut area = values[i];
    let mut j = i;
    while j > 0 && values[j - 1].signum() == sign {
        j -= 1;
        area += values[j];
    }
    let mut j = i;
    while j + 1 < values.len() && values[j + 1].signum() == sign {
        j += 1;
        area += values[j];
    }
    area * step
}

fn find_extrema(spec: &Spectrum, threshold: f64) -> (Vec<Feature>, Vec<Feature>) {
    let v = &spec.values;
    let mut holes = Vec::new();
    let mut antiholes = Vec::new();
    for i in 1..v.len() - 1 {
        let is_min = v[i] < v[i - 1] && v[i] <= v[i + 1];
        let is_max = v[i] > v[i - 1] && v[i] >= v[i + 1];
        if is_min && v[i] < -threshold {
            holes.push(Feature {
                freq_hz: parabolic_vertex(&spec.grid, i, v),
                value: v[i],
                area: lobe_area(v, i, spec.grid.step_hz),
            });
        } else if is_max && v[i] > threshold {
            antiholes.push(Feature {
                freq_hz: parabolic_vertex(&spec.grid, i, v),
                value: v[i],
                area: lobe_area(v, i, spec.grid.step_hz),
            });
        }
    }
    (holes, antiholes)
}

/// Detect hole/antihole pairs in the difference of two spectra on identical
/// grids. Features are extrema of the difference beyond a threshold of 1% of
/// the strongest line; each antihole is matched to its nearest unpaired hole
/// (ties to the larger-area hole). Pairs split by less than Γ_h are
/// classified as unresolved and excluded from the ranking.
pub fn detect_pairs(
    before: &Spectrum,
    after: &Spectrum,
    gamma_h_hz: f64,
) -> Result<PairDetection> {
    let diff = Spectrum::difference(after, before)?;
    let peak = before.values.iter().cloned().fold(0.0, f64::max);
    let threshold = peak / 100.0;
    let (mut holes, antiholes) = find_extrema(&diff, threshold);

    // Strongest antiholes pick first; deterministic order.
    let mut anti_sorted: Vec<Feature> = antiholes;
    anti_sorted.sort_by(|a, b| {
        b.value
            .abs()
            .total_cmp(&a.value.abs())
            .then(a.freq_hz.total_cmp(&b.freq_hz))
    });

    let mut used = vec![false; holes.len()];
    let mut pairs = Vec::new();
    let mut residual = ResidualFeatures::default();
    for anti in &anti_sorted {
        let mut best: Option<usize> = None;
        for (h, hole) in holes.iter().enumerate() {
            if used[h] {
                continue;
            }
            let dist = (hole.freq_hz - anti.freq_hz).abs();
            match best {
                None => best = Some(h),
                Some(b) => {
                    let bd = (holes[b].freq_hz - anti.freq_hz).abs();
                    if dist < bd
                        || (dist == bd && hole.area.abs() > holes[b].area.abs())
                    {
                        best = Some(h);
                    }
                }
            }
        }
        match best {
            Some(h) => {
                used[h] = true;
                let pair = HolePair {
                    hole_hz: holes[h].freq_hz,
                    antihole_hz: anti.freq_hz,
                    splitting_hz: (anti.freq_hz - holes[h].freq_hz).abs(),
                    hole_area: holes[h].area,
                    antihole_area: anti.area,
                    partner_ion: None,
                };
                if pair.splitting_hz < gamma_h_hz {
                    residual.unresolved.push(pair);
                } else {
                    pairs.push(pair);
                }
            }
            None => residual.unmatched_antiholes.push(anti.freq_hz),
        }
    }
    for (h, hole) in holes.iter_mut().enumerate() {
        if !used[h] {
            residual.unmatched_holes.push(hole.freq_hz);
        }
    }
    pairs.sort_by(|a, b| b.splitting_hz.total_cmp(&a.splitting_hz));
    Ok(PairDetection {
        pairs,
        residual,
        threshold,
    })
}

/// Attach ground-truth partner ids: each hole is matched to the ion whose
/// pre-burn line centre lies nearest (within `tol_hz`). Simulation-only; the
/// physical procedure never observes ion identities.
pub fn attach_ground_truth(
    detection: &mut PairDetection,
    before_lines: &[LineCenter],
    system: &SimSystem,
    tol_hz: f64,
) {
    for pair in detection.pairs.iter_mut() {
        let mut best: Option<(usize, f64)> = None;
        for line in before_lines {
            let d = (line.center_hz - pair.hole_hz).abs();
            if d <= tol_hz && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((system.sites[line.ion].id, d));
            }
        }
        pair.partner_ion = best.map(|(ion, _)| ion);
    }
}

/// A selected working qubit: the ion, its ranking splitting, and its
/// addressing frequency on every scheme transition.
#[derive(Debug, Clone, Serialize)]
pub struct RegistryMember {
    pub ion: usize,
    pub splitting_hz: f64,
    /// Hole frequency on the working transition (the addressing line).
    pub line_hz: f64,
    /// Static addressing frequency (Hz) per scheme transition label.
    pub transition_freqs_hz: BTreeMap<String, f64>,
}

/// The working ensemble: frequencies, pairwise margins and the N = N'/k
/// bookkeeping of disjoint ensembles in the host.
#[derive(Debug, Clone, Serialize)]
pub struct QubitRegistry {
    pub members: Vec<RegistryMember>,
    pub pairwise_margins: Vec<(usize, usize, f64)>,
    pub weakest_margin: f64,
    /// Number of ranked hole-antihole candidates the selection drew from.
    pub n_prime: usize,
    /// Number of disjoint ensembles assumed in the host crystal.
    pub k: usize,
    /// Qubits available per ensemble, N = N'/k.
    pub n_per_ensemble: f64,
    pub addressability_margin: f64,
    pub gamma_l_hz: f64,
    pub gamma_h_hz: f64,
}

/// Eq-9 blockade shift between two prospective gate partners: the weakest
/// parked-branch detuning over the target's pulses, symmetric in our model.
pub fn gate_blockade_shift(system: &SimSystem, ion_a: usize, ion_b: usize) -> f64 {
    let scheme = system.scheme;
    let one = scheme.level_index(Role::One);
    let aux = scheme.level_index(Role::Aux);
    let park = scheme.role_pair(Role::Zero, Role::Aux).expect("distinct roles");
    let mid = scheme.role_pair(Role::Aux, Role::One).expect("distinct roles");
    let ida = system.sites[ion_a].id;
    let idb = system.sites[ion_b].id;
    let outer = system
        .coupling
        .transition_shift_change(ida, park, idb, one, aux);
    let inner = system
        .coupling
        .transition_shift_change(ida, mid, idb, one, aux);
    if outer.abs() < inner.abs() {
        outer
    } else {
        inner
    }
}

/// Greedy working-ensemble selection: walk candidates by splitting
/// (descending, ties by ion id), rejecting any that sit closer than
/// `margin`·Γ_L in frequency to an already-selected member or whose pairwise
/// blockade margin against one of them is ≤ 1. `complete` is false when
/// fewer than `n_target` members were feasible.
pub fn select_ensemble_partial(
    system: &SimSystem,
    detection: &PairDetection,
    n_target: usize,
    gamma_l_hz: f64,
    gamma_h_hz: f64,
    margin: f64,
    k: usize,
) -> Result<(QubitRegistry, bool)> {
    if n_target == 0 {
        return Err(Error::validation("select_ensemble: N must be ≥ 1"));
    }
    let scheme = system.scheme;
    let index_of_id: BTreeMap<usize, usize> = system
        .sites
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id, i))
        .collect();

    let mut candidates: Vec<&HolePair> = detection.pairs.iter().collect();
    candidates.sort_by(|a, b| {
        b.splitting_hz
            .total_cmp(&a.splitting_hz)
            .then(a.partner_ion.cmp(&b.partner_ion))
    });

    let mut members: Vec<RegistryMember> = Vec::new();
    let mut margins: Vec<(usize, usize, f64)> = Vec::new();
    for cand in candidates {
        if members.len() == n_target {
            break;
        }
        let Some(ion_id) = cand.partner_ion else {
            continue;
        };
        let Some(&ion_idx) = index_of_id.get(&ion_id) else {
            continue;
        };
        if members.iter().any(|m| m.ion == ion_id) {
            continue;
        }
        // Addressability against already-selected members.
        if members
            .iter()
            .any(|m| (m.line_hz - cand.hole_hz).abs() <= margin * gamma_l_hz)
        {
            continue;
        }
        // Pairwise blockade against already-selected members.
        let mut pair_margins = Vec::new();
        let mut feasible = true;
        for m in &members {
            let other_idx = index_of_id[&m.ion];
            let shift = gate_blockade_shift(system, ion_idx, other_idx);
            let (ok, bm) = blockade_ok(shift, gamma_l_hz, gamma_h_hz);
            if !ok {
                feasible = false;
                break;
            }
            pair_margins.push((m.ion, ion_id, bm));
        }
        if !feasible {
            continue;
        }
        margins.extend(pair_margins);
        let mut freqs = BTreeMap::new();
        for pair in scheme.transitions() {
            let lo = &scheme.levels()[pair.0].label;
            let hi = &scheme.levels()[pair.1].label;
            let f = scheme.transition_hz(pair.0, pair.1)
                + system.sites[ion_idx].offsets_hz[system.transition_index(pair)];
            freqs.insert(format!("{lo}-{hi}"), f);
        }
        members.push(RegistryMember {
            ion: ion_id,
            splitting_hz: cand.splitting_hz,
            line_hz: cand.hole_hz,
            transition_freqs_hz: freqs,
        });
    }

    let complete = members.len() == n_target;
    let weakest = margins
        .iter()
        .map(|&(_, _, m)| m)
        .fold(f64::INFINITY, f64::min);
    let n_prime = detection.pairs.len();
    let registry = QubitRegistry {
        members,
        pairwise_margins: margins,
        weakest_margin: weakest,
        n_prime,
        k: k.max(1),
        n_per_ensemble: n_prime as f64 / k.max(1) as f64,
        addressability_margin: margin,
        gamma_l_hz,
        gamma_h_hz,
    };
    Ok((registry, complete))
}

/// Like [`select_ensemble_partial`] but failing with a physics error (still
/// describing the achieved count) when fewer than `n_target` are feasible.
pub fn select_ensemble(
    system: &SimSystem,
    detection: &PairDetection,
    n_target: usize,
    gamma_l_hz: f64,
    gamma_h_hz: f64,
    margin: f64,
    k: usize,
) -> Result<QubitRegistry> {
    let (registry, complete) = select_ensemble_partial(
        system,
        detection,
        n_target,
        gamma_l_hz,
        gamma_h_hz,
        margin,
        k,
    )?;
    if !complete {
        return Err(Error::physics(format!(
            "select_ensemble: only {} of {n_target} requested qubits feasible",
            registry.members.len()
        )));
    }
    Ok(registry)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{CrystalConfig, IonSite};
    use crate::interactions::{moments_from_u2, quad_shift_full, AxisConvention};
    use crate::ion::{IonDatabase, LevelScheme};
    use approx::assert_relative_eq;

    fn tm_scheme() -> LevelScheme {
        IonDatabase::embedded()
            .unwrap()
            .load_scheme("Tm3+", 1)
            .unwrap()
    }

    fn site_at(id: usize, cell: [i64; 3], offset_hz: f64, a: f64, nt: usize) -> IonSite {
        IonSite {
            id,
            cell,
            position_m: [
                cell[0] as f64 * a,
                cell[1] as f64 * a,
                cell[2] as f64 * a,
            ],
            offsets_hz: vec![offset_hz; nt],
        }
    }

    #[test]
    fn single_ion_lorentzian_peak() {
        let scheme = tm_scheme();
        let cfg = CrystalConfig::default();
        let sites = vec![site_at(0, [0, 0, 0], 0.0, cfg.lattice_constant_m, 6)];
        let coupling = CouplingTable::none(scheme.dim());
        let system = SimSystem::new(&scheme, &sites, &coupling);
        let g = scheme.level_index(Role::Ground);
        let occ = Occupation::all_in(g, 1);
        let gamma_h = 1e6;
        // Scan the g→0 line.
        let pair = scheme.role_pair(Role::Ground, Role::Zero).unwrap();
        let center = scheme.transition_hz(pair.0, pair.1);
        let grid =
            FrequencyGrid::covering(center - 1e9, center + 1e9, gamma_h / 5.0).unwrap();
        let spec = synth_spectrum(&system, &occ, gamma_h, &grid).unwrap();
        let peak = spec.values.iter().cloned().fold(0.0, f64::max);
        assert_relative_eq!(
            peak,
            2.0 / (std::f64::consts::PI * gamma_h),
            max_relative = 1e-6
        );
        // Three upward transitions from the ground state of a 4-level
        // scheme; only one lies in this window.
        let lines = line_centers(&system, &occ);
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn spectrum_is_additive_for_remote_ions() {
        let scheme = tm_scheme();
        let cfg = CrystalConfig::default();
        let a = cfg.lattice_constant_m;
        let s1 = vec![site_at(0, [0, 0, 0], 0.0, a, 6)];
        let s2 = vec![site_at(1, [500, 0, 0], 3e9, a, 6)];
        let both = vec![s1[0].clone(), s2[0].clone()];
        let none = CouplingTable::none(scheme.dim());
        let g = scheme.level_index(Role::Ground);
        let gamma_h = 1e6;
        let pair = scheme.role_pair(Role::Ground, Role::Zero).unwrap();
        let center = scheme.transition_hz(pair.0, pair.1);
        let grid =
            FrequencyGrid::covering(center - 5e9, center + 8e9, gamma_h / 5.0).unwrap();

        let sys1 = SimSystem::new(&scheme, &s1, &none);
        let sys2 = SimSystem::new(&scheme, &s2, &none);
        let sys12 = SimSystem::new(&scheme, &both, &none);
        let sp1 = synth_spectrum(&sys1, &Occupation::all_in(g, 1), gamma_h, &grid).unwrap();
        let sp2 = synth_spectrum(&sys2, &Occupation::all_in(g, 1), gamma_h, &grid).unwrap();
        let sp12 = synth_spectrum(&sys12, &Occupation::all_in(g, 2), gamma_h, &grid).unwrap();
        for i in 0..grid.len {
            assert_relative_eq!(
                sp12.values[i],
                sp1.values[i] + sp2.values[i],
                max_relative = 1e-9,
                epsilon = 1e-30
            );
        }
    }

    #[test]
    fn line_center_shift_matches_full_form() {
        // Partner parked in 1' at 3a displaces the g→0 line by exactly the
        // tensor-form shift.
        let db = IonDatabase::embedded().unwrap();
        let scheme = tm_scheme();
        let cfg = CrystalConfig::default();
        let a = cfg.lattice_constant_m;
        let sites = vec![
            site_at(0, [0, 0, 0], 0.0, a, 6),
            site_at(1, [3, 0, 0], 50e9, a, 6),
        ];
        let coupling =
            CouplingTable::build(&sites, &scheme, &cfg, AxisConvention::PairAligned, 0);
        let system = SimSystem::new(&scheme, &sites, &coupling);
        let g = scheme.level_index(Role::Ground);
        let aux = scheme.level_index(Role::Aux);

        let occ_rest = Occupation::all_in(g, 2);
        let occ_burn = Occupation::Hard(vec![g, aux]);
        let lines_rest = line_centers(&system, &occ_rest);
        let lines_burn = line_centers(&system, &occ_burn);
        let pair = scheme.role_pair(Role::Ground, Role::Zero).unwrap();
        let rest = lines_rest
            .iter()
            .find(|l| l.ion == 0 && l.pair == pair)
            .unwrap();
        let burn = lines_burn
            .iter()
            .find(|l| l.ion == 0 && l.pair == pair)
            .unwrap();
        let m1 = moments_from_u2(&db, "Tm3+", "3H6", "3H4", cfg.r0_sq_m2).unwrap();
        let m2 = moments_from_u2(&db, "Tm3+", "3H6", "1I6", cfg.r0_sq_m2).unwrap();
        let expect = quad_shift_full(&m1, &m2, 3.0 * a, cfg.epsilon_r).unwrap();
        assert_relative_eq!(
            burn.center_hz - rest.center_hz,
            expect,
            max_relative = 1e-9
        );
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let scheme = tm_scheme();
        let cfg = CrystalConfig::default();
        let sites = vec![site_at(0, [0, 0, 0], 0.0, cfg.lattice_constant_m, 6)];
        let none = CouplingTable::none(scheme.dim());
        let system = SimSystem::new(&scheme, &sites, &none);
        let g = scheme.level_index(Role::Ground);
        let grid = FrequencyGrid::covering(0.0, 1e9, 1e6).unwrap();
        let err = synth_spectrum(&system, &Occupation::all_in(g, 1), 1e6, &grid).unwrap_err();
        assert!(err.to_string().contains("too coarse"));
    }

    #[test]
    fn burn_promotes_resonant_ion_only() {
        let scheme = tm_scheme();
        let cfg = CrystalConfig::default();
        let a = cfg.lattice_constant_m;
        let gamma_l = 1e7;
        let sites = vec![
            site_at(0, [0, 0, 0], 0.0, a, 6),
            site_at(1, [40, 0, 0], 5e9, a, 6),
        ];
        let none = CouplingTable::none(scheme.dim());
        let system = SimSystem::new(&scheme, &sites, &none);
        let g = scheme.level_index(Role::Ground);
        let aux = scheme.level_index(Role::Aux);
        let occ = Occupation::all_in(g, 2);
        let tr = default_burn_transition(&scheme);
        assert_eq!(tr, (Role::Ground, Role::Aux));
        let pair = scheme.role_pair(tr.0, tr.1).unwrap();
        let bare = scheme.transition_hz(pair.0, pair.1);

        // Exactly on ion 0's line.
        let out = burn(&system, &occ, bare, gamma_l, tr).unwrap();
        assert_eq!(out.burned, vec![0]);
        assert_eq!(out.occupation, Occupation::Hard(vec![aux, g]));
        let (_, p) = out.transfer.iter().find(|(id, _)| *id == 0).unwrap().clone();
        assert!(p >= 0.999);

        // In a spectral gap: nothing happens.
        let out = burn(&system, &occ, bare + 2.5e9, gamma_l, tr).unwrap();
        assert!(out.burned.is_empty());
        assert_eq!(out.occupation, occ);
    }

    #[test]
    fn burn_threshold_matches_half_window() {
        let scheme = tm_scheme();
        let cfg = CrystalConfig::default();
        let a = cfg.lattice_constant_m;
        let gamma_l = 1e7;
        // Ions just inside and just outside the Γ_L/2 window.
        let sites = vec![
            site_at(0, [0, 0, 0], 0.49 * gamma_l, a, 6),
            site_at(1, [40, 0, 0], 0.51 * gamma_l, a, 6),
        ];
        let none = CouplingTable::none(scheme.dim());
        let system = SimSystem::new(&scheme, &sites, &none);
        let g = scheme.level_index(Role::Ground);
        let occ = Occupation::all_in(g, 2);
        let tr = default_burn_transition(&scheme);
        let pair = scheme.role_pair(tr.0, tr.1).unwrap();
        let bare = scheme.transition_hz(pair.0, pair.1);
        let out = burn(&system, &occ, bare, gamma_l, tr).unwrap();
        assert_eq!(out.burned, vec![0]);
    }

    #[test]
    fn two_ion_burn_produces_one_pair_with_true_splitting() {
        let scheme = tm_scheme();
        let cfg = CrystalConfig::default();
        let a = cfg.lattice_constant_m;
        let gamma_l = 1e7;
        let gamma_h = 5e7;
        let sites = vec![
            site_at(0, [0, 0, 0], 0.0, a, 6),
            site_at(1, [3, 0, 0], 60e9, a, 6),
        ];
        let coupling =
            CouplingTable::build(&sites, &scheme, &cfg, AxisConvention::PairAligned, 0);
        let system = SimSystem::new(&scheme, &sites, &coupling);
        let g = scheme.level_index(Role::Ground);
        let occ = Occupation::all_in(g, 2);
        let tr = default_burn_transition(&scheme);
        let burn_pair = scheme.role_pair(tr.0, tr.1).unwrap();
        let scan_pair = scheme.role_pair(Role::Ground, Role::Zero).unwrap();

        // Ground truth: shift of ion 1's scan line when ion 0 is burned.
        let truth = system
            .coupling
            .transition_shift_change(1, scan_pair, 0, g, scheme.level_index(Role::Aux));

        let lines = line_centers(&system, &occ);
        let burn_line = lines
            .iter()
            .find(|l| l.ion == 0 && l.pair == burn_pair)
            .unwrap();
        let out = burn(&system, &occ, burn_line.center_hz, gamma_l, tr).unwrap();
        assert_eq!(out.burned, vec![0]);

        let scan_center = scheme.transition_hz(scan_pair.0, scan_pair.1);
        let grid = FrequencyGrid::covering(
            scan_center - 40e9,
            scan_center + 100e9,
            gamma_h / 5.0,
        )
        .unwrap();
        let before = synth_spectrum(&system, &occ, gamma_h, &grid).unwrap();
        let after = synth_spectrum(&system, &out.occupation, gamma_h, &grid).unwrap();
        let mut det = detect_pairs(&before, &after, gamma_h).unwrap();
        assert_eq!(det.pairs.len(), 1, "residual: {:?}", det.residual);
        assert!(
            (det.pairs[0].splitting_hz - truth.abs()).abs() < gamma_h / 2.0,
            "detected {} vs truth {}",
            det.pairs[0].splitting_hz,
            truth.abs()
        );
        // The burned ion's own vanished line is an unmatched hole.
        assert_eq!(det.residual.unmatched_holes.len(), 1);
        // Areas of the shifted ion's hole and antihole agree.
        let p = &det.pairs[0];
        assert!(
            (p.hole_area.abs() - p.antihole_area.abs()).abs()
                < 0.01 * p.antihole_area.abs()
        );
        // Ground-truth attachment names ion 1.
        let before_lines = line_centers(&system, &occ);
        attach_ground_truth(&mut det, &before_lines, &system, gamma_h);
        assert_eq!(det.pairs[0].partner_ion, Some(1));
    }

    #[test]
    fn no_burn_means_no_pairs() {
        let scheme = tm_scheme();
        let cfg = CrystalConfig::default();
        let sites = vec![site_at(0, [0, 0, 0], 0.0, cfg.lattice_constant_m, 6)];
        let none = CouplingTable::none(scheme.dim());
        let system = SimSystem::new(&scheme, &sites, &none);
        let g = scheme.level_index(Role::Ground);
        let occ = Occupation::all_in(g, 1);
        let pair = scheme.role_pair(Role::Ground, Role::Zero).unwrap();
        let c = scheme.transition_hz(pair.0, pair.1);
        let grid = FrequencyGrid::covering(c - 1e9, c + 1e9, 2e5).unwrap();
        let spec = synth_spectrum(&system, &occ, 1e6, &grid).unwrap();
        let det = detect_pairs(&spec, &spec, 1e6).unwrap();
        assert!(det.pairs.is_empty());
        assert!(det.residual.unmatched_holes.is_empty());
    }

    #[test]
    fn five_neighbors_rank_by_distance() {
        let scheme = tm_scheme();
        let cfg = CrystalConfig::default();
        let a = cfg.lattice_constant_m;
        let gamma_l = 1e7;
        let gamma_h = 1e6;
        // Burned ion at the origin; neighbours at 2a..8a spread over
        // different directions so their mutual shifts stay moderate. The
        // coupling is scaled down so every splitting stays well below the
        // inter-line spacing — hole/antihole doublets must be local for
        // nearest-frequency pairing to identify partners.
        let mut sites = vec![site_at(0, [0, 0, 0], 0.0, a, 6)];
        let cells: [[i64; 3]; 5] = [
            [2, 0, 0],
            [0, 3, 0],
            [0, 0, 4],
            [-6, 0, 0],
            [0, -8, 0],
        ];
        for (i, (cell, off)) in cells
            .iter()
            .zip([20e9, 40e9, 60e9, 80e9, 100e9])
            .enumerate()
        {
            sites.push(site_at(i + 1, *cell, off, a, 6));
        }
        let coupling =
            CouplingTable::build(&sites, &scheme, &cfg, AxisConvention::PairAligned, 0)
                .scaled(0.05);
        let system = SimSystem::new(&scheme, &sites, &coupling);
        let g = scheme.level_index(Role::Ground);
        let occ = Occupation::all_in(g, 6);
        let tr = default_burn_transition(&scheme);
        let burn_pair = scheme.role_pair(tr.0, tr.1).unwrap();
        let lines = line_centers(&system, &occ);
        let burn_line = lines
            .iter()
            .find(|l| l.ion == 0 && l.pair == burn_pair)
            .unwrap();
        let out = burn(&system, &occ, burn_line.center_hz, gamma_l, tr).unwrap();
        assert_eq!(out.burned, vec![0]);

        let scan_pair = scheme.role_pair(Role::Ground, Role::Zero).unwrap();
        let c = scheme.transition_hz(scan_pair.0, scan_pair.1);
        let grid = FrequencyGrid::covering(c - 15e9, c + 110e9, gamma_h / 5.0).unwrap();
        let before = synth_spectrum(&system, &occ, gamma_h, &grid).unwrap();
        let after = synth_spectrum(&system, &out.occupation, gamma_h, &grid).unwrap();
        let mut det = detect_pairs(&before, &after, gamma_h).unwrap();
        attach_ground_truth(&mut det, &lines, &system, gamma_h);
        assert_eq!(det.pairs.len(), 5);

        // Splittings strictly decrease with distance: ranked partner order
        // is ion 1 (2a) through ion 5 (8a).
        let partners: Vec<usize> =
            det.pairs.iter().map(|p| p.partner_ion.unwrap()).collect();
        assert_eq!(partners, vec![1, 2, 3, 4, 5]);
        for w in det.pairs.windows(2) {
            assert!(w[0].splitting_hz > w[1].splitting_hz);
        }
    }

    #[test]
    fn selection_rules() {
        let scheme = tm_scheme();
        let cfg = CrystalConfig::default();
        let a = cfg.lattice_constant_m;
        let gamma_l = 1e7;
        let gamma_h = 1e6;
        let sites = vec![
            site_at(0, [0, 0, 0], 0.0, a, 6),
            site_at(1, [3, 0, 0], 40e9, a, 6),
            site_at(2, [0, 4, 0], 80e9, a, 6),
            site_at(3, [0, 0, 5], 80e9 + 2.0 * gamma_l, a, 6), // collides with ion 2
        ];
        let coupling =
            CouplingTable::build(&sites, &scheme, &cfg, AxisConvention::PairAligned, 0);
        let system = SimSystem::new(&scheme, &sites, &coupling);

        // Synthetic detection: one candidate per non-burned ion, splitting
        // inversely related to distance.
        let mk = |ion: usize, split: f64, line: f64| HolePair {
            hole_hz: line,
            antihole_hz: line + split,
            splitting_hz: split,
            hole_area: -1.0,
            antihole_area: 1.0,
            partner_ion: Some(ion),
        };
        let detection = PairDetection {
            pairs: vec![
                mk(1, 30e9, 40e9),
                mk(2, 8e9, 80e9),
                mk(3, 5e9, 80e9 + 2.0 * gamma_l),
            ],
            residual: ResidualFeatures::default(),
            threshold: 0.0,
        };

        // N = 1 picks the largest splitting.
        let (reg, complete) =
            select_ensemble_partial(&system, &detection, 1, gamma_l, gamma_h, 3.0, 1).unwrap();
        assert!(complete);
        assert_eq!(reg.members[0].ion, 1);
        assert!(reg.weakest_margin.is_infinite()); // single member

        // The colliding candidate is rejected; only 2 of 3 feasible.
        let (reg, complete) =
            select_ensemble_partial(&system, &detection, 3, gamma_l, gamma_h, 3.0, 1).unwrap();
        assert!(!complete);
        assert_eq!(reg.members.len(), 2);
        assert!(select_ensemble(&system, &detection, 3, gamma_l, gamma_h, 3.0, 1).is_err());
        // All pairwise margins of the feasible set exceed 1.
        assert!(reg.weakest_margin > 1.0);
        assert_eq!(reg.n_prime, 3);
    }
}
