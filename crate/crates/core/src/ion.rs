//! Embedded database of ion level schemes and Judd-Ofelt matrix elements.
//!
//! The tables ship as versioned CSV files compiled into the binary; the
//! loader validates all structural invariants before handing data out, so new
//! ions or levels can be added without code changes. All energies are in
//! cm⁻¹, lifetimes in µs (infinite for ground states), and the |U^(k)|²
//! entries are dimensionless.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phys;

const LEVELS_CSV: &str = include_str!("../data/levels.csv");
const JUDD_OFELT_CSV: &str = include_str!("../data/judd_ofelt.csv");
const SCHEMES_CSV: &str = include_str!("../data/schemes.csv");

/// One electronic level of a dopant ion.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Level {
    /// Spectroscopic term label, e.g. `3H4`.
    pub label: String,
    /// Energy above the ground state (cm⁻¹).
    pub energy_cm1: f64,
    /// Radiative lifetime (µs); `f64::INFINITY` for ground states.
    pub lifetime_us: f64,
    /// Diagonal |U^(2)|² element, governing the level's static moment.
    pub u2_diag_sq: f64,
}

impl Level {
    /// Lifetime in seconds.
    pub fn lifetime_s(&self) -> f64 {
        self.lifetime_us * 1e-6
    }

    /// |U^(2)| diagonal magnitude (square root of the tabulated square).
    pub fn u2_diag(&self) -> f64 {
        self.u2_diag_sq.sqrt()
    }
}

/// Qubit role a level plays within a scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    /// Resting level before preparation (may coincide with `Aux`).
    Ground,
    /// Qubit level |0⟩.
    Zero,
    /// Qubit level |1⟩.
    One,
    /// Auxiliary, strongly interacting level |1'⟩.
    Aux,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Ground => "g",
            Role::Zero => "0",
            Role::One => "1",
            Role::Aux => "1'",
        };
        write!(f, "{s}")
    }
}

/// A fully populated qubit scheme: one column of the scheme table.
#[derive(Debug, Clone, Serialize)]
pub struct LevelScheme {
    pub ion: String,
    pub scheme: usize,
    /// Distinct levels of the scheme, sorted by energy.
    levels: Vec<Level>,
    /// Role → index into `levels`.
    role_index: BTreeMap<String, usize>,
}

impl LevelScheme {
    /// Distinct levels of the scheme, sorted ascending by energy.
    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Number of distinct levels (the per-ion Hilbert dimension).
    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn level_index(&self, role: Role) -> usize {
        self.role_index[&role.to_string()]
    }

    pub fn level(&self, role: Role) -> &Level {
        &self.levels[self.level_index(role)]
    }

    pub fn level_index_by_label(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.label == label)
    }

    /// True when the resting level is the auxiliary level itself.
    pub fn ground_is_aux(&self) -> bool {
        self.level_index(Role::Ground) == self.level_index(Role::Aux)
    }

    /// Transition frequency |E_a − E_b| between two roles (cm⁻¹).
    pub fn transition_frequency(&self, role_a: Role, role_b: Role) -> Result<f64> {
        let (ia, ib) = (self.level_index(role_a), self.level_index(role_b));
        if ia == ib {
            return Err(Error::validation(format!(
                "transition_frequency: roles {role_a} and {role_b} map to the same level"
            )));
        }
        Ok((self.levels[ia].energy_cm1 - self.levels[ib].energy_cm1).abs())
    }

    /// Transition frequency between two level indices, in ordinary Hz.
    pub fn transition_hz(&self, lo: usize, hi: usize) -> f64 {
        phys::cm1_to_hz((self.levels[hi].energy_cm1 - self.levels[lo].energy_cm1).abs())
    }

    /// All unordered level pairs `(lo, hi)` with `E_lo < E_hi`.
    pub fn transitions(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for lo in 0..self.levels.len() {
            for hi in (lo + 1)..self.levels.len() {
                out.push((lo, hi));
            }
        }
        out
    }

    /// Level-index pair of a role pair, ordered (lower, higher) by energy.
    pub fn role_pair(&self, a: Role, b: Role) -> Result<(usize, usize)> {
        let (ia, ib) = (self.level_index(a), self.level_index(b));
        if ia == ib {
            return Err(Error::validation(format!(
                "role pair {a}/{b} maps to one level"
            )));
        }
        Ok((ia.min(ib), ia.max(ib)))
    }
}

#[derive(Debug, Deserialize, Serialize, Clone)]
struct LevelRecord {
    ion: String,
    level: String,
    energy_cm1: f64,
    lifetime_us: f64,
}

#[derive(Debug, Deserialize, Serialize, Clone)]
struct JoRecord {
    ion: String,
    level_a: String,
    level_b: String,
    u2_sq: f64,
    u4_sq: f64,
    u6_sq: f64,
}

#[derive(Debug, Deserialize, Serialize, Clone)]
struct SchemeRecord {
    ion: String,
    scheme: usize,
    g: String,
    q0: String,
    q1: String,
    aux: String,
}

/// The in-memory ion database.
#[derive(Debug, Clone)]
pub struct IonDatabase {
    levels: Vec<LevelRecord>,
    jo: Vec<JoRecord>,
    schemes: Vec<SchemeRecord>,
}

fn canonical_ion(name: &str) -> String {
    let stripped = name.trim().trim_end_matches("3+");
    let mut out = String::new();
    for (i, c) in stripped.chars().enumerate() {
        if i == 0 {
            out.extend(c.to_uppercase());
        } else {
            out.extend(c.to_lowercase());
        }
    }
    out.push_str("3+");
    out
}

fn read_csv<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    rdr.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::data(format!("{what}: {e}")))
}

impl IonDatabase {
    /// Load and validate the embedded tables.
    pub fn embedded() -> Result<Self> {
        Self::from_csv(LEVELS_CSV, JUDD_OFELT_CSV, SCHEMES_CSV)
    }

    /// Load from CSV text (same format as the shipped data files).
    pub fn from_csv(levels: &str, judd_ofelt: &str, schemes: &str) -> Result<Self> {
        let db = IonDatabase {
            levels: read_csv(levels, "levels table")?,
            jo: read_csv(judd_ofelt, "Judd-Ofelt table")?,
            schemes: read_csv(schemes, "scheme table")?,
        };
        db.validate()?;
        Ok(db)
    }

    fn validate(&self) -> Result<()> {
        for rec in &self.levels {
            if rec.energy_cm1 < 0.0 {
                return Err(Error::data(format!(
                    "level {}/{} has negative energy",
                    rec.ion, rec.level
                )));
            }
            if !(rec.lifetime_us > 0.0) {
                return Err(Error::data(format!(
                    "level {}/{} has non-positive lifetime",
                    rec.ion, rec.level
                )));
            }
            if rec.energy_cm1 == 0.0 && rec.lifetime_us.is_finite() {
                return Err(Error::data(format!(
                    "ground level {}/{} must have infinite lifetime",
                    rec.ion, rec.level
                )));
            }
        }
        for rec in &self.jo {
            if rec.u2_sq < 0.0 || rec.u4_sq < 0.0 || rec.u6_sq < 0.0 {
                return Err(Error::data(format!(
                    "negative |U^(k)|² entry for {}/{}-{}",
                    rec.ion, rec.level_a, rec.level_b
                )));
            }
            for lbl in [&rec.level_a, &rec.level_b] {
                if self.level_record(&rec.ion, lbl).is_none() {
                    return Err(Error::data(format!(
                        "Judd-Ofelt entry references unknown level {}/{lbl}",
                        rec.ion
                    )));
                }
            }
        }
        // Every scheme must load and satisfy the qubit/auxiliary selection
        // rule; load_scheme performs both checks.
        for rec in &self.schemes {
            self.load_scheme(&rec.ion, rec.scheme)?;
        }
        Ok(())
    }

    fn level_record(&self, ion: &str, label: &str) -> Option<&LevelRecord> {
        self.levels
            .iter()
            .find(|r| r.ion == ion && r.level == label)
    }

    /// Ion names present in the database, in file order without duplicates.
    pub fn ions(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for rec in &self.levels {
            if !out.contains(&rec.ion) {
                out.push(rec.ion.clone());
            }
        }
        out
    }

    /// Available `(ion, scheme)` pairs.
    pub fn schemes(&self) -> Vec<(String, usize)> {
        self.schemes
            .iter()
            .map(|r| (r.ion.clone(), r.scheme))
            .collect()
    }

    /// Symmetric |U^(k)|² lookup for a level pair of an ion.
    pub fn u_sq(&self, ion: &str, level_i: &str, level_j: &str) -> Result<(f64, f64, f64)> {
        let ion = canonical_ion(ion);
        self.jo
            .iter()
            .find(|r| {
                r.ion == ion
                    && ((r.level_a == level_i && r.level_b == level_j)
                        || (r.level_a == level_j && r.level_b == level_i))
            })
            .map(|r| (r.u2_sq, r.u4_sq, r.u6_sq))
            .ok_or_else(|| {
                Error::not_found(format!(
                    "no Judd-Ofelt entry for {ion} pair ({level_i}, {level_j})"
                ))
            })
    }

    /// Load one qubit scheme, fully populated with energies, lifetimes and
    /// diagonal |U^(2)|² values.
    pub fn load_scheme(&self, ion: &str, scheme: usize) -> Result<LevelScheme> {
        let ion = canonical_ion(ion);
        let rec = self
            .schemes
            .iter()
            .find(|r| r.ion == ion && r.scheme == scheme)
            .ok_or_else(|| {
                let avail: Vec<String> = self
                    .schemes
                    .iter()
                    .map(|r| format!("{} #{}", r.ion, r.scheme))
                    .collect();
                Error::not_found(format!(
                    "no scheme {scheme} for ion {ion}; available: {}",
                    avail.join(", ")
                ))
            })?;

        let mut labels: Vec<&str> = vec![&rec.g, &rec.q0, &rec.q1, &rec.aux];
        labels.dedup();
        let mut levels: Vec<Level> = Vec::new();
        for lbl in [&rec.g, &rec.q0, &rec.q1, &rec.aux] {
            if levels.iter().any(|l| &l.label == lbl) {
                continue;
            }
            let lr = self.level_record(&ion, lbl).ok_or_else(|| {
                Error::not_found(format!("scheme references unknown level {ion}/{lbl}"))
            })?;
            let (u2, _, _) = self.u_sq(&ion, lbl, lbl)?;
            levels.push(Level {
                label: lbl.clone(),
                energy_cm1: lr.energy_cm1,
                lifetime_us: lr.lifetime_us,
                u2_diag_sq: u2,
            });
        }
        levels.sort_by(|a, b| a.energy_cm1.total_cmp(&b.energy_cm1));

        let index_of = |lbl: &str| levels.iter().position(|l| l.label == lbl).unwrap();
        let mut role_index = BTreeMap::new();
        role_index.insert(Role::Ground.to_string(), index_of(&rec.g));
        role_index.insert(Role::Zero.to_string(), index_of(&rec.q0));
        role_index.insert(Role::One.to_string(), index_of(&rec.q1));
        role_index.insert(Role::Aux.to_string(), index_of(&rec.aux));

        let out = LevelScheme {
            ion: ion.clone(),
            scheme,
            levels,
            role_index,
        };

        // Scheme invariants: qubit and auxiliary roles are distinct levels,
        // and the auxiliary must dominate both qubit levels in |U^(2)|.
        let (i0, i1, ia) = (
            out.level_index(Role::Zero),
            out.level_index(Role::One),
            out.level_index(Role::Aux),
        );
        if i0 == i1 || i0 == ia || i1 == ia {
            return Err(Error::data(format!(
                "scheme {ion} #{scheme}: roles 0, 1, 1' must be distinct levels"
            )));
        }
        let (u0, u1, ua) = (
            out.level(Role::Zero).u2_diag_sq,
            out.level(Role::One).u2_diag_sq,
            out.level(Role::Aux).u2_diag_sq,
        );
        if !(ua > u0 && ua > u1) {
            return Err(Error::data(format!(
                "scheme {ion} #{scheme}: auxiliary |U^(2)|² = {ua} does not exceed qubit values {u0}, {u1}"
            )));
        }
        Ok(out)
    }

    /// Serialise the database back to the CSV table format it was loaded
    /// from. Parsing the output reproduces every entry bit-exactly.
    pub fn to_csv(&self) -> (String, String, String) {
        let mut levels = String::from("ion,level,energy_cm1,lifetime_us\n");
        for r in &self.levels {
            levels.push_str(&format!(
                "{},{},{},{}\n",
                r.ion, r.level, r.energy_cm1, r.lifetime_us
            ));
        }
        let mut jo = String::from("ion,level_a,level_b,u2_sq,u4_sq,u6_sq\n");
        for r in &self.jo {
            jo.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.ion, r.level_a, r.level_b, r.u2_sq, r.u4_sq, r.u6_sq
            ));
        }
        let mut schemes = String::from("ion,scheme,g,q0,q1,aux\n");
        for r in &self.schemes {
            schemes.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.ion, r.scheme, r.g, r.q0, r.q1, r.aux
            ));
        }
        (levels, jo, schemes)
    }

    /// JSON value describing the whole database (for report dumps).
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "levels": self.levels.iter().map(|r| serde_json::json!({
                "ion": r.ion,
                "level": r.level,
                "energy_cm1": r.energy_cm1,
                "lifetime_us": if r.lifetime_us.is_finite() {
                    serde_json::json!(r.lifetime_us)
                } else {
                    serde_json::json!("inf")
                },
            })).collect::<Vec<_>>(),
            "judd_ofelt": self.jo.iter().map(|r| serde_json::json!({
                "ion": r.ion,
                "level_a": r.level_a,
                "level_b": r.level_b,
                "u2_sq": r.u2_sq,
                "u4_sq": r.u4_sq,
                "u6_sq": r.u6_sq,
            })).collect::<Vec<_>>(),
            "schemes": self.schemes.iter().map(|r| serde_json::json!({
                "ion": r.ion,
                "scheme": r.scheme,
                "g": r.g,
                "0": r.q0,
                "1": r.q1,
                "1'": r.aux,
            })).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn db() -> IonDatabase {
        IonDatabase::embedded().expect("embedded database must validate")
    }

    #[test]
    fn pr_scheme_loads() {
        let s = db().load_scheme("Pr3+", 0).unwrap();
        let zero = s.level(Role::Zero);
        assert_eq!(zero.label, "1G4");
        assert_relative_eq!(zero.energy_cm1, 9640.0);
        assert_relative_eq!(zero.lifetime_us, 14.0);
        let one = s.level(Role::One);
        assert_eq!(one.label, "3P0");
        assert_relative_eq!(one.energy_cm1, 20469.0);
        assert_relative_eq!(one.lifetime_us, 55.0);
        let aux = s.level(Role::Aux);
        assert_eq!(aux.label, "3H4");
        assert_relative_eq!(aux.energy_cm1, 0.0);
        assert!(aux.lifetime_us.is_infinite());
        assert!(s.ground_is_aux());
        assert_eq!(s.dim(), 3);
    }

    #[test]
    fn tm_aux_1i6_scheme_loads() {
        let s = db().load_scheme("Tm3+", 1).unwrap();
        assert_eq!(s.level(Role::Zero).label, "3H4");
        assert_relative_eq!(s.level(Role::Zero).energy_cm1, 12518.0);
        assert_eq!(s.level(Role::One).label, "1D2");
        assert_relative_eq!(s.level(Role::One).energy_cm1, 27830.0);
        assert_eq!(s.level(Role::Aux).label, "1I6");
        assert_relative_eq!(s.level(Role::Aux).energy_cm1, 34684.0);
        assert_relative_eq!(s.level(Role::Aux).lifetime_us, 300.0);
        assert!(!s.ground_is_aux());
        assert_eq!(s.dim(), 4);
    }

    #[test]
    fn er_scheme_loads() {
        let s = db().load_scheme("Er3+", 0).unwrap();
        assert_eq!(s.level(Role::Zero).label, "4I9/2");
        assert_relative_eq!(s.level(Role::Zero).energy_cm1, 12272.0);
        assert_relative_eq!(s.level(Role::Zero).lifetime_us, 133.0);
        assert_eq!(s.level(Role::One).label, "4S3/2");
        assert_relative_eq!(s.level(Role::One).energy_cm1, 18353.0);
        assert_relative_eq!(s.level(Role::One).lifetime_us, 923.0);
        assert_eq!(s.level(Role::Aux).label, "4I15/2");
        assert_relative_eq!(s.level(Role::Aux).energy_cm1, 0.0);
    }

    #[test]
    fn unknown_scheme_lists_available() {
        let err = db().load_scheme("Pr3+", 7).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("available"));
        assert!(msg.contains("Tm3+ #3"));
    }

    #[test]
    fn u_sq_lookups() {
        let db = db();
        assert_eq!(db.u_sq("Tm3+", "1I6", "1I6").unwrap(), (4.88, 1.58, 0.119));
        assert_eq!(
            db.u_sq("Tm3+", "3H4", "1D2").unwrap(),
            (0.127, 0.012, 0.228)
        );
        assert_eq!(db.u_sq("Pr3+", "3H4", "3H4").unwrap(), (0.779, 0.0, 0.0));
        // Symmetric access.
        assert_eq!(
            db.u_sq("Tm3+", "1D2", "3H4").unwrap(),
            db.u_sq("Tm3+", "3H4", "1D2").unwrap()
        );
        assert!(db.u_sq("Tm3+", "3H4", "9Z9").is_err());
    }

    #[test]
    fn transition_frequencies() {
        let db = db();
        let tm = db.load_scheme("Tm3+", 1).unwrap();
        assert_relative_eq!(
            tm.transition_frequency(Role::Zero, Role::One).unwrap(),
            15312.0
        );
        assert_relative_eq!(
            tm.transition_frequency(Role::Ground, Role::Zero).unwrap(),
            12518.0
        );
        assert!(tm.transition_frequency(Role::Zero, Role::Zero).is_err());
        // Pr: g coincides with 1'.
        let pr = db.load_scheme("Pr3+", 0).unwrap();
        assert!(pr.transition_frequency(Role::Ground, Role::Aux).is_err());
    }

    #[test]
    fn every_scheme_passes_selection_rule() {
        let db = db();
        for (ion, idx) in db.schemes() {
            let s = db.load_scheme(&ion, idx).unwrap();
            let ua = s.level(Role::Aux).u2_diag_sq;
            assert!(ua > s.level(Role::Zero).u2_diag_sq);
            assert!(ua > s.level(Role::One).u2_diag_sq);
        }
        // The headline case: Tm³⁺ with the high-energy auxiliary.
        let s = db.load_scheme("Tm3+", 1).unwrap();
        assert_relative_eq!(s.level(Role::Aux).u2_diag_sq, 4.88);
        assert_relative_eq!(s.level(Role::Zero).u2_diag_sq, 0.268);
        assert_relative_eq!(s.level(Role::One).u2_diag_sq, 0.197);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let db = db();
        let (lv, jo, sc) = db.to_csv();
        let db2 = IonDatabase::from_csv(&lv, &jo, &sc).unwrap();
        assert_eq!(db.levels.len(), db2.levels.len());
        for (a, b) in db.levels.iter().zip(&db2.levels) {
            assert_eq!(a.ion, b.ion);
            assert_eq!(a.level, b.level);
            assert_eq!(a.energy_cm1.to_bits(), b.energy_cm1.to_bits());
            assert_eq!(a.lifetime_us.to_bits(), b.lifetime_us.to_bits());
        }
        for (a, b) in db.jo.iter().zip(&db2.jo) {
            assert_eq!(a.u2_sq.to_bits(), b.u2_sq.to_bits());
            assert_eq!(a.u4_sq.to_bits(), b.u4_sq.to_bits());
            assert_eq!(a.u6_sq.to_bits(), b.u6_sq.to_bits());
        }
    }

    #[test]
    fn ion_name_canonicalisation() {
        let db = db();
        assert!(db.load_scheme("pr3+", 0).is_ok());
        assert!(db.load_scheme("PR", 0).is_ok());
        assert!(db.load_scheme("tm", 3).is_ok());
    }
}
