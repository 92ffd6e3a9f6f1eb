//! Dilute dopant ensembles on a simple-cubic lattice.
//!
//! Each cation site is occupied independently with the dopant concentration,
//! and every occupied site carries inhomogeneously broadened transition
//! offsets. Sampling is a pure function of (config, seed): each cell draws
//! from its own counter-derived stream, so results do not depend on
//! iteration order.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ion::LevelScheme;

/// FWHM of a unit-variance Gaussian.
pub const GAUSSIAN_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Shape of the inhomogeneous frequency distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetDistribution {
    /// Gaussian with FWHM Γ_inh (the default).
    #[default]
    Gaussian,
    /// Uniform over [−Γ_inh/2, Γ_inh/2], for stress tests.
    Uniform,
}

/// How offsets of different transitions of one ion relate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetCorrelation {
    /// One offset per ion, added to every transition (the default).
    #[default]
    Correlated,
    /// Independent draw per transition, for sensitivity studies.
    Independent,
}

/// Host-crystal and broadening parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrystalConfig {
    /// Lattice constant (m).
    pub lattice_constant_m: f64,
    /// Dopant site fraction, 0 < c ≤ 1.
    pub concentration: f64,
    /// FWHM of the inhomogeneous distribution (Hz).
    pub gamma_inh_hz: f64,
    /// Lifetime-limited homogeneous linewidth floor (Hz).
    pub gamma_h_ref_hz: f64,
    /// Raman dephasing amplitude at `t_ref_k` (Hz).
    pub raman_coeff_hz: f64,
    /// Reference temperature for the Raman term (K).
    pub t_ref_k: f64,
    /// Refractive index of the host.
    pub refractive_index: f64,
    /// Static relative dielectric constant.
    pub epsilon_r: f64,
    /// Effective squared 4f radius (m²).
    pub r0_sq_m2: f64,
    pub offset_distribution: OffsetDistribution,
    pub offset_correlation: OffsetCorrelation,
}

impl Default for CrystalConfig {
    fn default() -> Self {
        let a = 4e-10;
        CrystalConfig {
            lattice_constant_m: a,
            concentration: 0.1,
            gamma_inh_hz: 1e12,
            gamma_h_ref_hz: 1e6,
            raman_coeff_hz: 1e6,
            t_ref_k: 2.0,
            refractive_index: 1.6,
            epsilon_r: 10.0,
            r0_sq_m2: 0.1 * a * a,
            offset_distribution: OffsetDistribution::Gaussian,
            offset_correlation: OffsetCorrelation::Correlated,
        }
    }
}

impl CrystalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.concentration > 0.0 && self.concentration <= 1.0) {
            return Err(Error::validation(format!(
                "crystal.concentration = {} outside (0, 1]",
                self.concentration
            )));
        }
        if !(self.gamma_inh_hz > 0.0) {
            return Err(Error::validation("crystal.gamma_inh_hz must be > 0"));
        }
        if self.epsilon_r < 1.0 {
            return Err(Error::validation("crystal.epsilon_r must be ≥ 1"));
        }
        if !(self.lattice_constant_m > 0.0) {
            return Err(Error::validation("crystal.lattice_constant_m must be > 0"));
        }
        if !(self.r0_sq_m2 > 0.0) {
            return Err(Error::validation("crystal.r0_sq_m2 must be > 0"));
        }
        if self.refractive_index < 1.0 {
            return Err(Error::validation("crystal.refractive_index must be ≥ 1"));
        }
        Ok(())
    }
}

/// One dopant ion: lattice cell plus per-transition frequency offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonSite {
    pub id: usize,
    /// Integer lattice coordinates (units of the lattice constant).
    pub cell: [i64; 3],
    /// Position (m).
    pub position_m: [f64; 3],
    /// Inhomogeneous offset per scheme transition (Hz), parallel to
    /// `LevelScheme::transitions()`.
    pub offsets_hz: Vec<f64>,
}

impl IonSite {
    pub fn distance_m(&self, other: &IonSite) -> f64 {
        let dx = self.position_m[0] - other.position_m[0];
        let dy = self.position_m[1] - other.position_m[1];
        let dz = self.position_m[2] - other.position_m[2];
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cell_rng(seed: u64, cell_index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(cell_index)))
}

fn draw_offset(rng: &mut ChaCha8Rng, config: &CrystalConfig) -> f64 {
    match config.offset_distribution {
        OffsetDistribution::Gaussian => {
            let z: f64 = rng.sample(StandardNormal);
            z * config.gamma_inh_hz / GAUSSIAN_FWHM_PER_SIGMA
        }
        OffsetDistribution::Uniform => {
            (rng.gen::<f64>() - 0.5) * config.gamma_inh_hz
        }
    }
}

/// Occupy each cell of a `box_edge`³ simple-cubic box independently with
/// probability `concentration` and draw transition offsets for each ion.
pub fn sample_sites(
    config: &CrystalConfig,
    scheme: &LevelScheme,
    box_edge: u32,
    seed: u64,
) -> Result<Vec<IonSite>> {
    config.validate()?;
    if box_edge < 2 {
        return Err(Error::validation("sample_sites: box_edge must be ≥ 2"));
    }
    let n_transitions = scheme.transitions().len();
    let edge = box_edge as i64;
    let mut sites = Vec::new();
    for i in 0..edge {
        for j in 0..edge {
            for k in 0..edge {
                let cell_index = ((i * edge) + j) as u64 * edge as u64 + k as u64;
                let mut rng = cell_rng(seed, cell_index);
                if rng.gen::<f64>() >= config.concentration {
                    continue;
                }
                let offsets = match config.offset_correlation {
                    OffsetCorrelation::Correlated => {
                        let v = draw_offset(&mut rng, config);
                        vec![v; n_transitions]
                    }
                    OffsetCorrelation::Independent => (0..n_transitions)
                        .map(|_| draw_offset(&mut rng, config))
                        .collect(),
                };
                let a = config.lattice_constant_m;
                sites.push(IonSite {
                    id: sites.len(),
                    cell: [i, j, k],
                    position_m: [i as f64 * a, j as f64 * a, k as f64 * a],
                    offsets_hz: offsets,
                });
            }
        }
    }
    if sites.is_empty() {
        return Err(Error::physics(format!(
            "sample_sites: no ions in a {box_edge}³ box at c = {}",
            config.concentration
        )));
    }
    Ok(sites)
}

/// Mean spacing of centres at effective concentration `c_eff`, in lattice
/// units: c_eff^(−1/3).
pub fn mean_spacing(c_eff: f64) -> Result<f64> {
    if !(c_eff > 0.0) {
        return Err(Error::validation("mean_spacing: c_eff must be > 0"));
    }
    if c_eff > 1.0 {
        return Err(Error::validation("mean_spacing: c_eff must be ≤ 1"));
    }
    Ok(c_eff.powf(-1.0 / 3.0))
}

/// Radius containing N ions at concentration c, in lattice units:
/// (N/c)^(1/3).
pub fn ensemble_radius(n: usize, c: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::validation("ensemble_radius: N must be ≥ 1"));
    }
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::validation("ensemble_radius: c outside (0, 1]"));
    }
    Ok((n as f64 / c).powf(1.0 / 3.0))
}

/// Homogeneous linewidth at temperature T: lifetime-limited floor plus the
/// T⁷ Raman dephasing term.
pub fn gamma_h(config: &CrystalConfig, temperature_k: f64) -> Result<f64> {
    if temperature_k < 0.0 {
        return Err(Error::validation("gamma_h: negative temperature"));
    }
    let ratio = temperature_k / config.t_ref_k;
    Ok(config.gamma_h_ref_hz + config.raman_coeff_hz * ratio.powi(7))
}

/// Linewidth of a dephasing-dominated line: Γ_h = 1/(π T₂).
pub fn gamma_h_from_t2(t2_s: f64) -> f64 {
    1.0 / (std::f64::consts::PI * t2_s)
}

/// Linewidth of a lifetime-limited line: Γ_h = 1/(2π τ).
pub fn gamma_h_from_lifetime(tau_s: f64) -> f64 {
    1.0 / (std::f64::consts::TAU * tau_s)
}

/// One record per ion: id, cell coordinates, then one offset per transition.
pub fn export_sites(sites: &[IonSite]) -> String {
    let mut out = String::from("id,i,j,k,offsets_hz\n");
    for s in sites {
        let offs: Vec<String> = s.offsets_hz.iter().map(|v| format!("{v}")).collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.id,
            s.cell[0],
            s.cell[1],
            s.cell[2],
            offs.join(";")
        ));
    }
    out
}

/// Parse a file produced by [`export_sites`].
pub fn import_sites(text: &str, lattice_constant_m: f64) -> Result<Vec<IonSite>> {
    let mut sites = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::data(format!(
                "sites file line {}: expected 5 fields",
                lineno + 1
            )));
        }
        let parse_i = |s: &str| {
            s.trim()
                .parse::<i64>()
                .map_err(|e| Error::data(format!("sites file line {}: {e}", lineno + 1)))
        };
        let id: usize = fields[0]
            .trim()
            .parse()
            .map_err(|e| Error::data(format!("sites file line {}: {e}", lineno + 1)))?;
        let cell = [parse_i(fields[1])?, parse_i(fields[2])?, parse_i(fields[3])?];
        let offsets = fields[4]
            .split(';')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::data(format!("sites file line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        let a = lattice_constant_m;
        sites.push(IonSite {
            id,
            cell,
            position_m: [cell[0] as f64 * a, cell[1] as f64 * a, cell[2] as f64 * a],
            offsets_hz: offsets,
        });
    }
    Ok(sites)
}
