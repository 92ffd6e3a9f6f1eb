//! Physical constants and unit conversions.
//!
//! One convention holds throughout the crate: frequencies are carried
//! internally as angular frequencies (rad/s); spectroscopic cm⁻¹ and ordinary
//! Hz appear only at I/O boundaries. Electrostatic energies are evaluated in
//! Gaussian-CGS, where the fine-structure-constant forms are dimensionally
//! native, and converted to SI (V/cm, W/cm²) at the boundary.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s, exact).
pub const C_M_PER_S: f64 = 299_792_458.0;
/// Speed of light (cm/s).
pub const C_CM_PER_S: f64 = 2.997_924_58e10;
/// Reduced Planck constant (J·s).
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Reduced Planck constant (erg·s).
pub const HBAR_CGS: f64 = 1.054_571_817e-27;
/// Planck constant (J·s, exact).
pub const PLANCK_SI: f64 = 6.626_070_15e-34;
/// Planck constant (erg·s).
pub const PLANCK_CGS: f64 = 6.626_070_15e-27;
/// Fine structure constant, pinned value.
pub const ALPHA: f64 = 1.0 / 137.035_999;
/// Elementary charge (C, exact).
pub const E_COULOMB: f64 = 1.602_176_634e-19;
/// Elementary charge (statC), CODATA-derived.
pub const E_STATC: f64 = 4.803_204_712e-10;
/// Impedance of free space (Ω).
pub const Z0_OHM: f64 = 376.730_313_668;
/// Boltzmann constant (J/K, exact).
pub const KB_SI: f64 = 1.380_649e-23;
/// One statvolt/cm expressed in V/cm.
pub const STATVOLT_PER_CM_IN_V_PER_CM: f64 = 299.792_458;

/// Squared Gaussian charge implied by the pinned `ALPHA`, e² = αħc (statC²).
///
/// Using this value (rather than `E_STATC²`, which matches it to ~1e-9
/// relative) keeps the two algebraic routes to the π-pulse field identical to
/// machine precision.
pub fn e_sq_gauss() -> f64 {
    ALPHA * HBAR_CGS * C_CM_PER_S
}

/// Gaussian charge implied by the pinned `ALPHA` (statC).
pub fn e_gauss() -> f64 {
    e_sq_gauss().sqrt()
}

/// Vacuum wavenumber (cm⁻¹) to angular frequency (rad/s).
pub fn cm1_to_angular(wavenumber: f64) -> f64 {
    TAU * C_CM_PER_S * wavenumber
}

/// Angular frequency (rad/s) to vacuum wavenumber (cm⁻¹).
pub fn angular_to_cm1(omega: f64) -> f64 {
    omega / (TAU * C_CM_PER_S)
}

/// Vacuum wavenumber (cm⁻¹) to ordinary frequency (Hz).
pub fn cm1_to_hz(wavenumber: f64) -> f64 {
    C_CM_PER_S * wavenumber
}

/// Ordinary frequency (Hz) to vacuum wavenumber (cm⁻¹).
pub fn hz_to_cm1(freq: f64) -> f64 {
    freq / C_CM_PER_S
}

/// Optical wave number k = ωn/c for a vacuum wavenumber (cm⁻¹) and a
/// refractive index, returned in m⁻¹.
pub fn wave_number(wavenumber_vac_cm1: f64, n: f64) -> Result<f64> {
    if !wavenumber_vac_cm1.is_finite() || !n.is_finite() {
        return Err(Error::validation("wave_number: non-finite input"));
    }
    if n < 1.0 {
        return Err(Error::validation(format!(
            "wave_number: refractive index {n} < 1"
        )));
    }
    Ok(TAU * wavenumber_vac_cm1 * 100.0 * n)
}

/// Wave number in cm⁻¹ for the Gaussian-CGS formulas.
pub fn wave_number_cm(wavenumber_vac_cm1: f64, n: f64) -> Result<f64> {
    Ok(wave_number(wavenumber_vac_cm1, n)? / 100.0)
}

/// Field strength conversion, statvolt/cm to V/cm.
pub fn statvolt_to_v_per_cm(e_statvolt_per_cm: f64) -> f64 {
    e_statvolt_per_cm * STATVOLT_PER_CM_IN_V_PER_CM
}

/// Field strength conversion, V/cm to statvolt/cm.
pub fn v_per_cm_to_statvolt(e_v_per_cm: f64) -> f64 {
    e_v_per_cm / STATVOLT_PER_CM_IN_V_PER_CM
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn alpha_matches_gaussian_charge_combination() {
        // e²/(ħc) in Gaussian units reproduces the pinned α.
        let alpha_from_charge = E_STATC * E_STATC / (HBAR_CGS * C_CM_PER_S);
        assert_relative_eq!(alpha_from_charge, ALPHA, max_relative = 1e-6);
        assert_relative_eq!(e_gauss(), E_STATC, max_relative = 1e-6);
    }

    #[test]
    fn constants_match_codata_to_six_figures() {
        assert_relative_eq!(C_M_PER_S, 2.997_924_58e8, max_relative = 1e-9);
        assert_relative_eq!(HBAR_SI, 1.054_571_8e-34, max_relative = 1e-6);
        assert_relative_eq!(E_COULOMB, 1.602_176_6e-19, max_relative = 1e-6);
        assert_relative_eq!(E_STATC, 4.803_204_7e-10, max_relative = 1e-6);
        assert_relative_eq!(Z0_OHM, 376.730, max_relative = 1e-5);
        assert_relative_eq!(KB_SI, 1.380_649e-23, max_relative = 1e-6);
        assert_relative_eq!(1.0 / ALPHA, 137.035_999, max_relative = 1e-8);
    }

    #[test]
    fn cm1_to_angular_values() {
        assert_eq!(cm1_to_angular(0.0), 0.0);
        assert_relative_eq!(cm1_to_angular(1.0), 1.883_65e11, max_relative = 1e-5);
        // ³H₄ → ³P₀ transition energy of Pr³⁺.
        assert_relative_eq!(cm1_to_angular(20_469.0), 3.8556e15, max_relative = 1e-4);
    }

    #[test]
    fn cm1_round_trip_is_identity() {
        for &w in &[1.0, 17.3, 20_469.0, 5.61e3, 3.4684e4] {
            assert_relative_eq!(
                angular_to_cm1(cm1_to_angular(w)),
                w,
                max_relative = 1e-12
            );
            assert_relative_eq!(hz_to_cm1(cm1_to_hz(w)), w, max_relative = 1e-12);
        }
    }

    #[test]
    fn wave_number_values() {
        let k = wave_number(20_469.0, 1.6).unwrap();
        assert_relative_eq!(k, 2.0578e7, max_relative = 1e-4);
        // n = 1 reduces to the vacuum wave number.
        let kvac = wave_number(20_469.0, 1.0).unwrap();
        assert_relative_eq!(kvac, TAU * 20_469.0 * 100.0, max_relative = 1e-12);
        // Doubling n doubles k.
        let k2 = wave_number(20_469.0, 3.2).unwrap();
        assert_relative_eq!(k2, 2.0 * k, max_relative = 1e-12);
        assert!(wave_number(20_469.0, 0.9).is_err());
        assert!(wave_number(f64::NAN, 1.5).is_err());
    }

    #[test]
    fn conversions_are_exact_linear() {
        for &a in &[2.0, 0.125, 7.5, 1e-3] {
            for &x in &[1.0, 3.7, 1e4] {
                assert_relative_eq!(
                    cm1_to_angular(a * x),
                    a * cm1_to_angular(x),
                    max_relative = 1e-12
                );
                assert_relative_eq!(
                    cm1_to_hz(a * x),
                    a * cm1_to_hz(x),
                    max_relative = 1e-12
                );
                assert_relative_eq!(
                    statvolt_to_v_per_cm(a * x),
                    a * statvolt_to_v_per_cm(x),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn statvolt_round_trip() {
        assert_relative_eq!(
            v_per_cm_to_statvolt(statvolt_to_v_per_cm(81.97)),
            81.97,
            max_relative = 1e-12
        );
    }
}
