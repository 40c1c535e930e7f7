//! Unit conversions between lab-facing quantities and the SI values used
//! internally (rad/s, meters, seconds).

use crate::error::{domain, require_positive, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Meters per nanometer.
pub const NANOMETER: f64 = 1e-9;

/// Meters per micrometer.
pub const MICROMETER: f64 = 1e-6;

/// Angular frequency (rad/s) of a vacuum wavelength (m).
pub fn wavelength_to_angular_frequency(lambda: f64) -> Result<f64> {
    require_positive(lambda, "wavelength")?;
    Ok(2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / lambda)
}

/// Vacuum wavelength (m) of an angular frequency (rad/s).
pub fn angular_frequency_to_wavelength(omega: f64) -> Result<f64> {
    require_positive(omega, "angular frequency")?;
    Ok(2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / omega)
}

/// Gaussian width parameter sigma (rad/s) of an intensity profile with the
/// given full width at half maximum in wavelength (m) around a center
/// wavelength (m).
///
/// The intensity profile is exp(-(omega - omega0)^2 / sigma^2), whose FWHM in
/// angular frequency is 2 sqrt(ln 2) sigma. The wavelength width maps through
/// the first-order dispersion |d omega / d lambda| = 2 pi c / lambda0^2,
/// accurate to better than 1% for delta_lambda / lambda0 < 0.1; wider inputs
/// are rejected.
pub fn fwhm_wavelength_to_sigma(delta_lambda: f64, lambda0: f64) -> Result<f64> {
    require_positive(delta_lambda, "wavelength FWHM")?;
    require_positive(lambda0, "center wavelength")?;
    if delta_lambda > 0.1 * lambda0 {
        return Err(domain(format!(
            "wavelength FWHM {delta_lambda} exceeds 10% of center {lambda0}; \
             the first-order conversion is not valid there"
        )));
    }
    let ln2 = std::f64::consts::LN_2;
    Ok(std::f64::consts::PI * SPEED_OF_LIGHT * delta_lambda / (ln2.sqrt() * lambda0 * lambda0))
}

/// Inverse of [`fwhm_wavelength_to_sigma`]: intensity FWHM in wavelength (m)
/// of a Gaussian with width parameter sigma (rad/s).
pub fn sigma_to_fwhm_wavelength(sigma: f64, lambda0: f64) -> Result<f64> {
    require_positive(sigma, "sigma")?;
    require_positive(lambda0, "center wavelength")?;
    let ln2 = std::f64::consts::LN_2;
    Ok(sigma * ln2.sqrt() * lambda0 * lambda0 / (std::f64::consts::PI * SPEED_OF_LIGHT))
}

/// Relative delay (s) introduced by an air gap of geometric length (m).
/// Negative lengths are allowed and mean the other arm is longer.
pub fn airgap_to_delay(l_ag: f64) -> Result<f64> {
    crate::error::require_finite(l_ag, "air gap length")?;
    Ok(l_ag / SPEED_OF_LIGHT)
}

/// Air gap length (m) producing a relative delay (s).
pub fn delay_to_airgap(delta_t: f64) -> Result<f64> {
    crate::error::require_finite(delta_t, "delay")?;
    Ok(delta_t * SPEED_OF_LIGHT)
}
