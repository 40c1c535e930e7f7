//! Spectral description of the photon pair: per-arm intensity filters and the
//! joint spectral density of a cw-pumped source.
//!
//! With a monochromatic pump, detecting the signal photon at detuning nu from
//! its center pins the idler at -nu. Every spectral quantity here is therefore
//! a function of the single detuning variable nu, and per-arm filters act at
//! omega1_0 + nu (signal) and omega2_0 - nu (idler).

use crate::error::{domain, require_finite, require_positive, Result};
use crate::units::SPEED_OF_LIGHT;

/// Gaussian intensity transmittance exp(-(omega - omega0)^2 / sigma^2).
#[derive(Clone, Copy, Debug)]
pub struct GaussianFilter {
    omega0: f64,
    sigma: f64,
}

impl GaussianFilter {
    pub fn new(omega0: f64, sigma: f64) -> Result<Self> {
        require_positive(omega0, "filter center frequency")?;
        require_positive(sigma, "filter sigma")?;
        Ok(Self { omega0, sigma })
    }

    /// Builds a filter from its center wavelength (m) and intensity FWHM in
    /// wavelength (m).
    pub fn from_wavelength(center: f64, fwhm: f64) -> Result<Self> {
        let omega0 = crate::units::wavelength_to_angular_frequency(center)?;
        let sigma = crate::units::fwhm_wavelength_to_sigma(fwhm, center)?;
        Self::new(omega0, sigma)
    }

    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn transmittance(&self, omega: f64) -> f64 {
        let d = (omega - self.omega0) / self.sigma;
        (-d * d).exp()
    }

    /// Cascade of two Gaussian filters, again Gaussian: widths add in inverse
    /// square, the center is the width-weighted mean. The result is the
    /// pointwise product up to an overall attenuation factor, which is
    /// irrelevant for every normalized quantity in this crate and is dropped.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        let wa = 1.0 / (self.sigma * self.sigma);
        let wb = 1.0 / (other.sigma * other.sigma);
        let w = wa + wb;
        let omega0 = (self.omega0 * wa + other.omega0 * wb) / w;
        Self::new(omega0, (1.0 / w).sqrt())
    }
}

/// Fabry-Perot intensity transmittance t_max / (1 + gamma sin^2(l_f omega / c))
/// for a cavity of optical length l_f (m) and finesse F, with
/// gamma = (2 F / pi)^2.
#[derive(Clone, Copy, Debug)]
pub struct FabryPerotFilter {
    l_f: f64,
    finesse: f64,
    t_max: f64,
}

impl FabryPerotFilter {
    pub fn new(l_f: f64, finesse: f64, t_max: f64) -> Result<Self> {
        require_positive(l_f, "cavity length")?;
        require_finite(finesse, "finesse")?;
        if finesse <= 1.0 {
            return Err(domain(format!("finesse must exceed 1, got {finesse}")));
        }
        require_positive(t_max, "peak transmittance")?;
        if t_max > 1.0 {
            return Err(domain(format!("peak transmittance must be <= 1, got {t_max}")));
        }
        Ok(Self { l_f, finesse, t_max })
    }

    pub fn l_f(&self) -> f64 {
        self.l_f
    }

    pub fn finesse(&self) -> f64 {
        self.finesse
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Contrast parameter gamma = (2 F / pi)^2.
    pub fn gamma(&self) -> f64 {
        let g = 2.0 * self.finesse / std::f64::consts::PI;
        g * g
    }

    pub fn transmittance(&self, omega: f64) -> f64 {
        let s = (self.l_f * omega / SPEED_OF_LIGHT).sin();
        self.t_max / (1.0 + self.gamma() * s * s)
    }

    /// Free spectral range in angular frequency: pi c / l_f.
    pub fn free_spectral_range(&self) -> f64 {
        std::f64::consts::PI * SPEED_OF_LIGHT / self.l_f
    }

    /// Free spectral range expressed as a wavelength spacing near lambda0:
    /// lambda0^2 / (2 l_f).
    pub fn lambda_fsr(&self, lambda0: f64) -> Result<f64> {
        require_positive(lambda0, "center wavelength")?;
        Ok(lambda0 * lambda0 / (2.0 * self.l_f))
    }

    /// Cavity roundtrip time 2 l_f / c.
    pub fn roundtrip_time(&self) -> f64 {
        2.0 * self.l_f / SPEED_OF_LIGHT
    }

    /// Detunings nu in [-half_span, half_span] at which omega_center + nu hits
    /// a transmission resonance, in increasing order. Used as quadrature
    /// breakpoints: the transmittance varies by factors of order gamma within
    /// a fraction 1/F of a free spectral range around each of these.
    pub fn resonance_detunings(&self, omega_center: f64, half_span: f64) -> Vec<f64> {
        let fsr = self.free_spectral_range();
        let k_min = ((omega_center - half_span) / fsr).ceil() as i64;
        let k_max = ((omega_center + half_span) / fsr).floor() as i64;
        (k_min..=k_max)
            .map(|k| k as f64 * fsr - omega_center)
            .collect()
    }
}

/// One per-arm intensity filter.
#[derive(Clone, Debug)]
pub enum Filter {
    Gaussian(GaussianFilter),
    FabryPerot(FabryPerotFilter),
}

impl Filter {
    pub fn transmittance(&self, omega: f64) -> f64 {
        match self {
            Filter::Gaussian(g) => g.transmittance(omega),
            Filter::FabryPerot(fp) => fp.transmittance(omega),
        }
    }
}

/// An ordered cascade of filters on one arm; transmittance is the product.
#[derive(Clone, Debug, Default)]
pub struct FilterChain {
    filters: Vec<Filter>,
}

impl FilterChain {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(filters: Vec<Filter>) -> Self {
        Self { filters }
    }

    pub fn push(&mut self, filter: Filter) {
        self.filters.push(filter);
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Filter> {
        self.filters.iter()
    }

    pub fn transmittance(&self, omega: f64) -> f64 {
        self.filters.iter().map(|f| f.transmittance(omega)).product()
    }

    pub fn fabry_perots(&self) -> Vec<&FabryPerotFilter> {
        self.filters
            .iter()
            .filter_map(|f| match f {
                Filter::FabryPerot(fp) => Some(fp),
                Filter::Gaussian(_) => None,
            })
            .collect()
    }

    pub fn gaussians(&self) -> Vec<&GaussianFilter> {
        self.filters
            .iter()
            .filter_map(|f| match f {
                Filter::Gaussian(g) => Some(g),
                Filter::FabryPerot(_) => None,
            })
            .collect()
    }
}

/// A cw-pumped pair source. Energy conservation ties the two center
/// frequencies together: omega2_0 = omega_p - omega1_0, computed here so the
/// constraint holds exactly.
#[derive(Clone, Copy, Debug)]
pub struct BiphotonSource {
    omega_p: f64,
    omega1_0: f64,
    omega2_0: f64,
    sigma_geo1: f64,
    sigma_geo2: f64,
}

impl BiphotonSource {
    /// `sigma_geo1`, `sigma_geo2`: Gaussian width parameters of the geometric
    /// (collection-optics) spectral profile of each arm, in rad/s.
    pub fn new(omega_p: f64, omega1_0: f64, sigma_geo1: f64, sigma_geo2: f64) -> Result<Self> {
        require_positive(omega_p, "pump frequency")?;
        require_positive(omega1_0, "signal center frequency")?;
        require_positive(sigma_geo1, "signal geometric sigma")?;
        require_positive(sigma_geo2, "idler geometric sigma")?;
        let omega2_0 = omega_p - omega1_0;
        if omega2_0 <= 0.0 {
            return Err(domain(format!(
                "signal center {omega1_0} must lie below the pump frequency {omega_p}"
            )));
        }
        Ok(Self { omega_p, omega1_0, omega2_0, sigma_geo1, sigma_geo2 })
    }

    /// Degenerate source: both photons centered at half the pump frequency
    /// with equal geometric widths.
    pub fn degenerate(omega_p: f64, sigma_geo: f64) -> Result<Self> {
        Self::new(omega_p, omega_p * 0.5, sigma_geo, sigma_geo)
    }

    pub fn omega_p(&self) -> f64 {
        self.omega_p
    }

    pub fn omega1_0(&self) -> f64 {
        self.omega1_0
    }

    pub fn omega2_0(&self) -> f64 {
        self.omega2_0
    }

    pub fn sigma_geo1(&self) -> f64 {
        self.sigma_geo1
    }

    pub fn sigma_geo2(&self) -> f64 {
        self.sigma_geo2
    }
}

/// Gaussian content of a joint density folded into one effective profile
/// exp(-beta2_inv_weight (nu - shift)^2) in the detuning variable; see
/// [`FilteredPair::gaussian_reduction`].
#[derive(Clone, Copy, Debug)]
pub struct GaussianReduction {
    /// Sum of inverse squared widths of all Gaussian factors. This equals the
    /// envelope curvature parameter beta2 of the interference term.
    pub beta2: f64,
    /// Width-weighted mean center detuning; nonzero when a Gaussian filter is
    /// offset from its arm's center frequency.
    pub shift: f64,
}

/// A source together with the filter cascade seen by each arm.
#[derive(Clone, Debug)]
pub struct FilteredPair {
    pub source: BiphotonSource,
    pub signal: FilterChain,
    pub idler: FilterChain,
}

impl FilteredPair {
    pub fn new(source: BiphotonSource, signal: FilterChain, idler: FilterChain) -> Self {
        Self { source, signal, idler }
    }

    pub fn unfiltered(source: BiphotonSource) -> Self {
        Self::new(source, FilterChain::empty(), FilterChain::empty())
    }

    /// Joint spectral density at signal detuning nu (idler sits at -nu), as
    /// seen after both filter cascades. Not normalized; bounded by 1.
    pub fn spectral_density(&self, nu: f64) -> f64 {
        let s = &self.source;
        let d1 = nu / s.sigma_geo1;
        let d2 = nu / s.sigma_geo2;
        let geometric = (-d1 * d1 - d2 * d2).exp();
        geometric
            * self.signal.transmittance(s.omega1_0 + nu)
            * self.idler.transmittance(s.omega2_0 - nu)
    }

    /// Folds the geometric profiles and every Gaussian chain member into a
    /// single effective Gaussian in nu. Fabry-Perot members are ignored here;
    /// callers that require an all-Gaussian pair should check
    /// [`FilteredPair::fabry_perot_free`] first.
    ///
    /// A signal-chain Gaussian centered at omega_c contributes center detuning
    /// omega_c - omega1_0; an idler-chain one contributes omega2_0 - omega_c,
    /// because the idler runs against nu.
    pub fn gaussian_reduction(&self) -> GaussianReduction {
        let s = &self.source;
        let mut weight = 1.0 / (s.sigma_geo1 * s.sigma_geo1) + 1.0 / (s.sigma_geo2 * s.sigma_geo2);
        let mut moment = 0.0;
        for g in self.signal.gaussians() {
            let w = 1.0 / (g.sigma() * g.sigma());
            weight += w;
            moment += w * (g.omega0() - s.omega1_0);
        }
        for g in self.idler.gaussians() {
            let w = 1.0 / (g.sigma() * g.sigma());
            weight += w;
            moment += w * (s.omega2_0 - g.omega0());
        }
        GaussianReduction { beta2: weight, shift: moment / weight }
    }

    pub fn fabry_perot_free(&self) -> bool {
        self.signal.fabry_perots().is_empty() && self.idler.fabry_perots().is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{MICROMETER, NANOMETER};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pair_826(fwhm1_nm: f64, fwhm2_nm: f64) -> FilteredPair {
        let omega_p = crate::units::wavelength_to_angular_frequency(413.1 * NANOMETER).unwrap();
        let lam0 = 826.2 * NANOMETER;
        let s1 = crate::units::fwhm_wavelength_to_sigma(fwhm1_nm * NANOMETER, lam0).unwrap();
        let s2 = crate::units::fwhm_wavelength_to_sigma(fwhm2_nm * NANOMETER, lam0).unwrap();
        let omega1 = crate::units::wavelength_to_angular_frequency(lam0).unwrap();
        FilteredPair::unfiltered(BiphotonSource::new(omega_p, omega1, s1, s2).unwrap())
    }

    #[test]
    fn gaussian_peak_and_half_width() {
        let g = GaussianFilter::new(2.28e15, 8.78e12).unwrap();
        assert_eq!(g.transmittance(2.28e15), 1.0);
        // Intensity FWHM is 2 sqrt(ln 2) sigma: half maximum at sqrt(ln 2) sigma.
        let half = 2.28e15 + std::f64::consts::LN_2.sqrt() * 8.78e12;
        assert_relative_eq!(g.transmittance(half), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_from_wavelength_matches_direct_construction() {
        let g = GaussianFilter::from_wavelength(826.2 * NANOMETER, 5.3 * NANOMETER).unwrap();
        assert_relative_eq!(g.sigma(), 8.783413595947046e12, max_relative = 1e-14);
        assert_relative_eq!(g.omega0(), 2.279897805989897e15, max_relative = 1e-14);
    }

    #[test]
    fn fabry_perot_contrast_for_finesse_150() {
        let fp = FabryPerotFilter::new(94.86 * MICROMETER, 150.0, 1.0).unwrap();
        assert_relative_eq!(fp.gamma(), 9118.906527810399, max_relative = 1e-13);
    }

    #[test]
    fn fabry_perot_peak_and_midway_suppression() {
        let fp = FabryPerotFilter::new(95.0 * MICROMETER, 150.0, 1.0).unwrap();
        let fsr = fp.free_spectral_range();
        // A resonance frequency: integer multiple of the FSR.
        let k = (2.28e15 / fsr).round();
        let on = k * fsr;
        assert_relative_eq!(fp.transmittance(on), 1.0, max_relative = 1e-10);
        let off = on + 0.5 * fsr;
        assert_relative_eq!(fp.transmittance(off), 1.0965024662814063e-4, max_relative = 1e-9);
    }

    #[test]
    fn fabry_perot_spacings() {
        let fp = FabryPerotFilter::new(95.0 * MICROMETER, 150.0, 1.0).unwrap();
        assert_relative_eq!(fp.free_spectral_range(), 9.913955617415016e12, max_relative = 1e-13);
        assert_relative_eq!(
            fp.lambda_fsr(826.2 * NANOMETER).unwrap(),
            3.5926654736842103 * NANOMETER,
            max_relative = 1e-13
        );
        let fp2 = FabryPerotFilter::new(94.86 * MICROMETER, 150.0, 1.0).unwrap();
        assert_relative_eq!(fp2.roundtrip_time(), 6.32837801409934e-13, max_relative = 1e-13);
    }

    #[test]
    fn resonance_detunings_are_spaced_by_one_fsr() {
        let fp = FabryPerotFilter::new(94.86 * MICROMETER, 150.0, 1.0).unwrap();
        let omega = 2.279897805989897e15;
        let span = 5.0e13;
        let res = fp.resonance_detunings(omega, span);
        assert!(res.len() >= 9);
        for pair in res.windows(2) {
            assert_relative_eq!(pair[1] - pair[0], fp.free_spectral_range(), max_relative = 1e-12);
        }
        for nu in &res {
            assert!(nu.abs() <= span);
            assert_relative_eq!(fp.transmittance(omega + nu), 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn chain_transmittance_is_product() {
        let g = GaussianFilter::new(2.28e15, 8.78e12).unwrap();
        let fp = FabryPerotFilter::new(94.86 * MICROMETER, 150.0, 0.9).unwrap();
        let chain = FilterChain::new(vec![Filter::Gaussian(g), Filter::FabryPerot(fp)]);
        let w = 2.2795e15;
        assert_relative_eq!(
            chain.transmittance(w),
            g.transmittance(w) * fp.transmittance(w),
            max_relative = 1e-14
        );
        assert!(FilterChain::empty().transmittance(w) == 1.0);
    }

    #[test]
    fn source_centers_satisfy_energy_conservation_exactly() {
        let omega_p = crate::units::wavelength_to_angular_frequency(413.1 * NANOMETER).unwrap();
        let omega1 = crate::units::wavelength_to_angular_frequency(826.2 * NANOMETER).unwrap();
        let s = BiphotonSource::new(omega_p, omega1, 8.78e12, 8.78e12).unwrap();
        assert_eq!(s.omega1_0() + s.omega2_0(), s.omega_p());
    }

    #[test]
    fn source_rejects_signal_above_pump() {
        assert!(BiphotonSource::new(2.0e15, 2.5e15, 1e12, 1e12).is_err());
    }

    #[test]
    fn density_of_unfiltered_pair_is_geometric_product() {
        let pair = pair_826(5.3, 5.3);
        assert_eq!(pair.spectral_density(0.0), 1.0);
        let s = pair.source.sigma_geo1();
        // Equal widths: density exp(-2 nu^2 / sigma^2).
        assert_relative_eq!(pair.spectral_density(s), (-2.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(
            pair.spectral_density(0.7 * s),
            pair.spectral_density(-0.7 * s),
            max_relative = 1e-13
        );
    }

    #[test]
    fn reduction_of_equal_geometric_widths() {
        let pair = pair_826(5.3, 5.3);
        let r = pair.gaussian_reduction();
        assert_relative_eq!(r.beta2, 2.5924078557735963e-26, max_relative = 1e-13);
        assert_eq!(r.shift, 0.0);
    }

    #[test]
    fn reduction_includes_chain_gaussians_and_offsets() {
        let mut pair = pair_826(5.3, 5.3);
        let filt = GaussianFilter::from_wavelength(826.4 * NANOMETER, 1.8 * NANOMETER).unwrap();
        pair.signal.push(Filter::Gaussian(filt));
        let r = pair.gaussian_reduction();
        let w_geo = 2.0 / (pair.source.sigma_geo1() * pair.source.sigma_geo1());
        let w_f = 1.0 / (filt.sigma() * filt.sigma());
        assert_relative_eq!(r.beta2, w_geo + w_f, max_relative = 1e-13);
        // Filter centered at longer wavelength: lower frequency, negative shift.
        let delta = filt.omega0() - pair.source.omega1_0();
        assert!(delta < 0.0);
        assert_relative_eq!(r.shift, w_f * delta / (w_geo + w_f), max_relative = 1e-12);
        // Density maximum moves toward the shift.
        assert!(pair.spectral_density(r.shift) > pair.spectral_density(0.0));
    }

    #[test]
    fn rejects_bad_filter_parameters() {
        assert!(GaussianFilter::new(2.28e15, 0.0).is_err());
        assert!(FabryPerotFilter::new(0.0, 150.0, 1.0).is_err());
        assert!(FabryPerotFilter::new(95.0 * MICROMETER, 0.9, 1.0).is_err());
        assert!(FabryPerotFilter::new(95.0 * MICROMETER, 150.0, 1.2).is_err());
        assert!(FabryPerotFilter::new(95.0 * MICROMETER, 150.0, 0.0).is_err());
    }

    proptest! {
        // Composition must reproduce the pointwise product. Offsets introduce
        // a constant attenuation factor which compose() drops by design, so
        // compare ratios at two frequencies. The weighted-mean center rounds
        // within one ulp of omega (~0.25 rad/s); against detunings of order
        // 1e12 that alone moves exponents by ~1e-12, hence the tolerance.
        #[test]
        fn compose_matches_pointwise_product(
            s1 in 1.0e12f64..2.0e13,
            s2 in 1.0e12f64..2.0e13,
            off in -5.0e12f64..5.0e12,
            x in -3.0f64..3.0,
        ) {
            let a = GaussianFilter::new(2.28e15, s1).unwrap();
            let b = GaussianFilter::new(2.28e15 + off, s2).unwrap();
            let c = a.compose(&b).unwrap();
            let sref = s1.min(s2);
            let w = 2.28e15 + x * sref;
            let w0 = 2.28e15;
            let ratio_product = (a.transmittance(w) * b.transmittance(w))
                / (a.transmittance(w0) * b.transmittance(w0));
            let ratio_composed = c.transmittance(w) / c.transmittance(w0);
            prop_assert!((ratio_product - ratio_composed).abs() <= 1e-11 * ratio_product.abs());
        }

        // Same-center composition has no attenuation factor at all. Tolerance
        // as above: the recomputed center is exact only to one ulp of omega.
        #[test]
        fn compose_same_center_is_exact_product(
            s1 in 1.0e12f64..2.0e13,
            s2 in 1.0e12f64..2.0e13,
            x in -4.0f64..4.0,
        ) {
            let a = GaussianFilter::new(2.28e15, s1).unwrap();
            let b = GaussianFilter::new(2.28e15, s2).unwrap();
            let c = a.compose(&b).unwrap();
            let w = 2.28e15 + x * s1.min(s2);
            let product = a.transmittance(w) * b.transmittance(w);
            prop_assert!((product - c.transmittance(w)).abs() <= 1e-11 * product);
        }

        // Shifting by one free spectral range must reproduce the transmittance.
        // The phase l_f omega / c is of order 1e3 with flank slopes of order
        // sqrt(gamma), so f64 rounding of the shifted frequency already moves
        // the value by ~1e-11 relative near flanks; 1e-9 leaves margin above
        // that floor while still pinning the periodicity.
        #[test]
        fn fabry_perot_periodicity(
            u in 0.0f64..1.0,
            k in 1i64..20,
            finesse in 10.0f64..300.0,
        ) {
            let fp = FabryPerotFilter::new(94.86 * MICROMETER, finesse, 1.0).unwrap();
            let fsr = fp.free_spectral_range();
            let omega = 2.2795e15 + u * fsr;
            let t0 = fp.transmittance(omega);
            let t1 = fp.transmittance(omega + k as f64 * fsr);
            prop_assert!((t1 - t0).abs() <= 1e-9 * t0.abs());
        }

        // The Gaussian content of a joint density with an off-center filter
        // reduces to a single effective Gaussian; check the reconstruction
        // against the explicit product at random detunings.
        #[test]
        fn gaussian_reduction_reconstructs_density(
            off_nm in -0.5f64..0.5,
            fwhm_nm in 1.0f64..4.0,
            x in -3.0f64..3.0,
        ) {
            let mut pair = pair_826(5.3, 5.3);
            let f = GaussianFilter::from_wavelength(
                (826.2 + off_nm) * NANOMETER, fwhm_nm * NANOMETER).unwrap();
            pair.signal.push(Filter::Gaussian(f));
            let r = pair.gaussian_reduction();
            let sigma_eff = (1.0 / r.beta2).sqrt();
            let nu = r.shift + x * sigma_eff;
            // Density = exp(-K) exp(-beta2 (nu - shift)^2) with K fixed by the offsets.
            let d_ratio = pair.spectral_density(nu) / pair.spectral_density(r.shift);
            let model = (-r.beta2 * (nu - r.shift) * (nu - r.shift)).exp();
            prop_assert!((d_ratio - model).abs() <= 1e-12 * model);
        }
    }
}
