//! Coincidence interference behind an unbalanced Mach-Zehnder.
//!
//! The normalized coincidence rate is R_n(dt) = 1 + rho(dt), where rho is the
//! interference term at relative arm delay dt. One photon of the pair runs
//! through the interferometer; the other is filtered remotely and detected
//! directly. For purely Gaussian spectra rho factors into a carrier
//! oscillation at the interferometer photon's center frequency under a
//! Gaussian envelope whose curvature is the summed inverse squared spectral
//! widths (beta2). Putting a Fabry-Perot cavity in the remote photon's path
//! turns the envelope into a train of revivals at multiples of the cavity
//! roundtrip time; [`FpSeriesMz`] evaluates that as a geometric sum over
//! roundtrips, and [`FpQuadratureMz`] evaluates the defining spectral
//! integral directly as a slow cross-check.

use num_complex::Complex64;

use crate::error::{domain, numeric, require_finite, require_positive, Result};
use crate::numerics;
use crate::spectra::{FabryPerotFilter, FilteredPair};
use crate::units;

/// Quadrature accuracy target for the reference model.
const QUAD_REL_TOL: f64 = 1e-9;
const QUAD_MAX_PANELS: usize = 6000;

/// Complex arm amplitudes of the interferometer. Only the combination
/// 2 Re{conj(t_long) t_short z} / (|t_short|^2 + |t_long|^2) enters the
/// interference term, so a common phase on both arms drops out.
#[derive(Clone, Copy, Debug)]
pub struct MachZehnder {
    t_short: Complex64,
    t_long: Complex64,
}

impl MachZehnder {
    pub fn new(t_short: Complex64, t_long: Complex64) -> Result<Self> {
        for (v, name) in [(t_short, "t_short"), (t_long, "t_long")] {
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(domain(format!("{name} must be finite, got {v}")));
            }
        }
        let norm = t_short.norm_sqr() + t_long.norm_sqr();
        if !(norm > 0.0) {
            return Err(domain("arm amplitudes cannot both vanish".to_string()));
        }
        Ok(Self { t_short, t_long })
    }

    /// Balanced arms: t_short = t_long = 1.
    pub fn balanced() -> Self {
        Self { t_short: Complex64::new(1.0, 0.0), t_long: Complex64::new(1.0, 0.0) }
    }

    /// t_short = 1, t_long = ratio e^{i phase}.
    pub fn from_ratio(arm_ratio: f64, phase_rad: f64) -> Result<Self> {
        require_positive(arm_ratio, "arm amplitude ratio")?;
        require_finite(phase_rad, "arm phase")?;
        Self::new(Complex64::new(1.0, 0.0), Complex64::from_polar(arm_ratio, phase_rad))
    }

    pub fn t_short(&self) -> Complex64 {
        self.t_short
    }

    pub fn t_long(&self) -> Complex64 {
        self.t_long
    }

    /// |t_short|^2 + |t_long|^2.
    pub fn norm(&self) -> f64 {
        self.t_short.norm_sqr() + self.t_long.norm_sqr()
    }

    /// conj(t_long) t_short, the cross term of the two arms.
    pub fn cross(&self) -> Complex64 {
        self.t_long.conj() * self.t_short
    }

    /// Largest |rho| the arm balance allows: 2 |t_l t_s| / (|t_s|^2 + |t_l|^2),
    /// equal to 1 only for |t_s| = |t_l|.
    pub fn visibility_cap(&self) -> f64 {
        2.0 * self.cross().norm() / self.norm()
    }
}

/// A model of the interference term rho(dt).
pub trait InterferenceModel: Sync {
    fn interference_term(&self, dt: f64) -> Result<f64>;

    /// Dominant fringe frequency, used to bracket one oscillation period when
    /// searching for local extrema.
    fn carrier_omega(&self) -> f64;
}

/// Normalized coincidence rate 1 + rho. Rejects interference terms outside
/// [-1, 1] beyond a small numerical slack, and clamps the slack so the rate
/// never goes negative.
pub fn normalized_rate(rho: f64) -> Result<f64> {
    if !rho.is_finite() {
        return Err(domain(format!("interference term must be finite, got {rho}")));
    }
    if rho.abs() > 1.0 + 1e-9 {
        return Err(domain(format!("interference term {rho} lies outside [-1, 1]")));
    }
    Ok((1.0 + rho).max(0.0))
}

/// Gaussian visibility envelope exp(-dt^2 / (4 beta2)).
pub fn visibility_envelope_gaussian(beta2: f64, dt: f64) -> Result<f64> {
    require_positive(beta2, "beta2")?;
    require_finite(dt, "dt")?;
    Ok((-dt * dt / (4.0 * beta2)).exp())
}

/// Air-gap FWHM of the Gaussian visibility envelope: 4 c sqrt(beta2 ln 2).
pub fn gaussian_envelope_fwhm_airgap(beta2: f64) -> Result<f64> {
    require_positive(beta2, "beta2")?;
    Ok(4.0 * units::SPEED_OF_LIGHT * (beta2 * std::f64::consts::LN_2).sqrt())
}

/// Closed-form interference term for all-Gaussian spectra: a carrier at the
/// effective center frequency of the interferometer photon under the
/// Gaussian envelope.
#[derive(Clone, Copy, Debug)]
pub struct GaussianMz {
    mzi: MachZehnder,
    carrier_omega: f64,
    beta2: f64,
}

impl GaussianMz {
    pub fn new(mzi: MachZehnder, carrier_omega: f64, beta2: f64) -> Result<Self> {
        require_positive(carrier_omega, "carrier frequency")?;
        require_positive(beta2, "beta2")?;
        Ok(Self { mzi, carrier_omega, beta2 })
    }

    /// Builds the model from a filtered pair with no Fabry-Perot members.
    /// Off-center Gaussian filters shift the effective carrier: a shift d in
    /// the signal's detuning moves the idler carrier to omega2_0 - d.
    pub fn from_pair(pair: &FilteredPair, mzi: MachZehnder) -> Result<Self> {
        if !pair.fabry_perot_free() {
            return Err(domain(
                "closed-form Gaussian model cannot represent Fabry-Perot filters; \
                 use the series or quadrature model"
                    .to_string(),
            ));
        }
        let r = pair.gaussian_reduction();
        Self::new(mzi, pair.source.omega2_0() - r.shift, r.beta2)
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    pub fn envelope(&self, dt: f64) -> f64 {
        (-dt * dt / (4.0 * self.beta2)).exp()
    }

    pub fn mzi(&self) -> &MachZehnder {
        &self.mzi
    }
}

impl InterferenceModel for GaussianMz {
    fn interference_term(&self, dt: f64) -> Result<f64> {
        require_finite(dt, "dt")?;
        let carrier = Complex64::from_polar(1.0, self.carrier_omega * dt);
        Ok(2.0 * (self.mzi.cross() * carrier).re / self.mzi.norm() * self.envelope(dt))
    }

    fn carrier_omega(&self) -> f64 {
        self.carrier_omega
    }
}

/// Precomputed inputs of the roundtrip-series evaluation.
///
/// The cavity transmittance expands into a geometric comb over roundtrips
/// with per-roundtrip weight `decay` = (sqrt(1+gamma) - 1) / (sqrt(1+gamma) + 1),
/// roundtrip time `t0`, and roundtrip phase `phi0` of the filtered photon's
/// center frequency. `c_norm` is the series normalization
/// (|t_s|^2 + |t_l|^2)(1 + 2 sum_n decay^n cos(n phi0) exp(-n^2 t0^2 / 4 beta2)).
#[derive(Clone, Copy, Debug)]
pub struct FpSeriesParams {
    pub c_norm: f64,
    pub t0: f64,
    pub phi0: f64,
    pub gamma: f64,
    pub decay: f64,
}

impl FpSeriesParams {
    /// Parameters for a cavity seen by the remote photon centered at
    /// omega1_0, with Gaussian envelope curvature beta2.
    pub fn compute(
        fp: &FabryPerotFilter,
        omega1_0: f64,
        beta2: f64,
        mzi: &MachZehnder,
    ) -> Result<Self> {
        require_positive(omega1_0, "omega1_0")?;
        Self::from_raw(fp.gamma(), fp.roundtrip_time(), omega1_0 * fp.roundtrip_time(), beta2, mzi)
    }

    /// Same, from the raw comb parameters.
    pub fn from_raw(
        gamma: f64,
        t0: f64,
        phi0: f64,
        beta2: f64,
        mzi: &MachZehnder,
    ) -> Result<Self> {
        require_positive(gamma, "gamma")?;
        require_positive(t0, "roundtrip time")?;
        require_finite(phi0, "roundtrip phase")?;
        require_positive(beta2, "beta2")?;

        // (sqrt(1+g)-1)/(sqrt(1+g)+1) is the cancellation-free form of
        // 1 + 2/g - 2 sqrt(1+g)/g.
        let s = (1.0 + gamma).sqrt();
        let decay = (s - 1.0) / (s + 1.0);

        let damp = t0 * t0 / (4.0 * beta2);
        let mut series = 1.0;
        let mut n: i32 = 1;
        loop {
            let nf = n as f64;
            let bound = 2.0 * decay.powi(n) * (-nf * nf * damp).exp();
            if bound < 1e-17 {
                break;
            }
            series += bound * (nf * phi0).cos();
            if n > 20_000_000 {
                return Err(numeric("series normalization did not converge".to_string()));
            }
            n += 1;
        }
        let c_norm = mzi.norm() * series;
        if !(c_norm > 0.0) {
            return Err(numeric(format!("non-positive series normalization {c_norm}")));
        }
        Ok(Self { c_norm, t0, phi0, gamma, decay })
    }

    /// Geometric envelope through the revival peaks: decay^(|dt| / t0).
    pub fn upper_envelope(&self, dt: f64) -> f64 {
        self.decay.powf(dt.abs() / self.t0)
    }
}

/// Roundtrip-series interference term for one Fabry-Perot cavity in the
/// remote (signal) chain, everything else Gaussian. Exact (it is the analytic
/// resummation of the defining integral), and cheap enough for scans and
/// fitting.
#[derive(Clone, Copy, Debug)]
pub struct FpSeriesMz {
    params: FpSeriesParams,
    mzi: MachZehnder,
    carrier_omega: f64,
    beta2: f64,
}

impl FpSeriesMz {
    pub fn new(
        params: FpSeriesParams,
        mzi: MachZehnder,
        carrier_omega: f64,
        beta2: f64,
    ) -> Result<Self> {
        require_positive(carrier_omega, "carrier frequency")?;
        require_positive(beta2, "beta2")?;
        Ok(Self { params, mzi, carrier_omega, beta2 })
    }

    /// Builds the model from a pair whose signal chain contains exactly one
    /// Fabry-Perot (plus any number of Gaussians) and whose idler chain is
    /// Gaussian only.
    pub fn from_pair(pair: &FilteredPair, mzi: MachZehnder) -> Result<Self> {
        let signal_fps = pair.signal.fabry_perots();
        if signal_fps.len() != 1 || !pair.idler.fabry_perots().is_empty() {
            return Err(domain(format!(
                "series model needs exactly one Fabry-Perot in the remote (signal) chain \
                 and none in the idler chain; found {} and {}",
                signal_fps.len(),
                pair.idler.fabry_perots().len()
            )));
        }
        let r = pair.gaussian_reduction();
        let omega1_eff = pair.source.omega1_0() + r.shift;
        let params = FpSeriesParams::compute(signal_fps[0], omega1_eff, r.beta2, &mzi)?;
        Self::new(params, mzi, pair.source.omega2_0() - r.shift, r.beta2)
    }

    pub fn params(&self) -> &FpSeriesParams {
        &self.params
    }

    pub fn beta2(&self) -> f64 {
        self.beta2
    }

    pub fn mzi(&self) -> &MachZehnder {
        &self.mzi
    }

    /// Sum over roundtrips n of decay^|n| e^{i n phi0} exp(-(dt - n t0)^2 / 4 beta2),
    /// walking outward from the dominant term until contributions vanish.
    fn roundtrip_sum(&self, dt: f64) -> Complex64 {
        let p = &self.params;
        let n_center = (dt / p.t0).round() as i64;
        let term = |n: i64| -> Complex64 {
            let nf = n as f64;
            let g = dt - nf * p.t0;
            let mag = p.decay.powi(n.unsigned_abs().min(i32::MAX as u64) as i32)
                * (-g * g / (4.0 * self.beta2)).exp();
            Complex64::from_polar(mag, nf * p.phi0)
        };
        let mut sum = term(n_center);
        for dir in [-1i64, 1] {
            let mut n = n_center + dir;
            loop {
                let t = term(n);
                sum += t;
                if t.norm() < 1e-17 {
                    break;
                }
                n += dir;
            }
        }
        sum
    }

    /// Largest |rho| attainable at delay dt over a carrier period; the
    /// revival-resolved envelope of the fringe pattern.
    pub fn envelope_magnitude(&self, dt: f64) -> f64 {
        2.0 * self.mzi.cross().norm() * self.roundtrip_sum(dt).norm() / self.params.c_norm
    }
}

impl InterferenceModel for FpSeriesMz {
    fn interference_term(&self, dt: f64) -> Result<f64> {
        require_finite(dt, "dt")?;
        let carrier = Complex64::from_polar(1.0, self.carrier_omega * dt);
        Ok(2.0 * (self.mzi.cross() * carrier * self.roundtrip_sum(dt)).re / self.params.c_norm)
    }

    fn carrier_omega(&self) -> f64 {
        self.carrier_omega
    }
}

/// Direct quadrature of the defining spectral integral
/// rho(dt) = 2 Re{conj(t_l) t_s e^{i omega2_0 dt} N(dt)} / ((|t_s|^2+|t_l|^2) D),
/// N(dt) = int rho_joint(nu) e^{-i nu dt} d nu, D = N(0), with no structural
/// assumptions about the filter chains. Slow; used as the reference the
/// closed forms are checked against.
#[derive(Clone, Debug)]
pub struct FpQuadratureMz {
    pair: FilteredPair,
    mzi: MachZehnder,
    carrier_omega: f64,
    lo: f64,
    hi: f64,
    breakpoints: Vec<f64>,
    rel_tol: f64,
    denominator: f64,
}

impl FpQuadratureMz {
    pub fn from_pair(pair: FilteredPair, mzi: MachZehnder) -> Result<Self> {
        Self::with_tolerance(pair, mzi, QUAD_REL_TOL)
    }

    pub fn with_tolerance(pair: FilteredPair, mzi: MachZehnder, rel_tol: f64) -> Result<Self> {
        require_positive(rel_tol, "quadrature tolerance")?;
        let r = pair.gaussian_reduction();
        // The Gaussian content bounds the support: 8 effective widths catch
        // the density down to exp(-64).
        let half_span = 8.0 / r.beta2.sqrt();
        let lo = r.shift - half_span;
        let hi = r.shift + half_span;

        let mut breakpoints: Vec<f64> = Vec::new();
        let span = half_span + r.shift.abs();
        for fp in pair.signal.fabry_perots() {
            breakpoints.extend(fp.resonance_detunings(pair.source.omega1_0(), span));
        }
        for fp in pair.idler.fabry_perots() {
            // The idler runs against nu: resonances at nu = omega2_0 - k fsr.
            breakpoints
                .extend(fp.resonance_detunings(pair.source.omega2_0(), span).iter().map(|x| -x));
        }
        breakpoints.sort_by(f64::total_cmp);

        let mut den = |nu: f64| Ok(Complex64::new(pair.spectral_density(nu), 0.0));
        let d = numerics::integrate(&mut den, lo, hi, &breakpoints, 0.25 * rel_tol, 0.0, QUAD_MAX_PANELS)?.re;
        if !(d > 0.0) {
            return Err(numeric(format!("joint density integrates to {d}, expected > 0")));
        }
        let carrier_omega = pair.source.omega2_0() - r.shift;
        Ok(Self { pair, mzi, carrier_omega, lo, hi, breakpoints, rel_tol, denominator: d })
    }
}

impl InterferenceModel for FpQuadratureMz {
    fn interference_term(&self, dt: f64) -> Result<f64> {
        require_finite(dt, "dt")?;
        let mut f = |nu: f64| {
            Ok(Complex64::from_polar(self.pair.spectral_density(nu), -nu * dt))
        };
        let n = numerics::integrate(
            &mut f,
            self.lo,
            self.hi,
            &self.breakpoints,
            0.25 * self.rel_tol,
            0.25 * self.rel_tol * self.denominator,
            QUAD_MAX_PANELS,
        )?;
        let carrier = Complex64::from_polar(1.0, self.pair.source.omega2_0() * dt);
        Ok(2.0 * (self.mzi.cross() * carrier * n).re / (self.mzi.norm() * self.denominator))
    }

    fn carrier_omega(&self) -> f64 {
        self.carrier_omega
    }
}

/// Extrema of the normalized rate over one carrier period around a delay.
#[derive(Clone, Copy, Debug)]
pub struct FringeExtrema {
    pub r_max: f64,
    pub r_min: f64,
    pub visibility: f64,
    pub dt_at_max: f64,
    pub dt_at_min: f64,
}

/// Scans one carrier period centered on dt_center with 64 samples, then
/// refines the largest and smallest normalized rate by golden-section search.
pub fn local_fringe<M: InterferenceModel + ?Sized>(
    model: &M,
    dt_center: f64,
) -> Result<FringeExtrema> {
    require_finite(dt_center, "dt_center")?;
    let omega = model.carrier_omega();
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(domain(format!("carrier frequency must be positive, got {omega}")));
    }
    let period = 2.0 * std::f64::consts::PI / omega;
    const N: usize = 64;
    let step = period / N as f64;
    let start = dt_center - 0.5 * period;

    let mut rate = |t: f64| -> Result<f64> { normalized_rate(model.interference_term(t)?) };

    let mut best_max = (0usize, f64::NEG_INFINITY);
    let mut best_min = (0usize, f64::INFINITY);
    for i in 0..N {
        let r = rate(start + i as f64 * step)?;
        if r > best_max.1 {
            best_max = (i, r);
        }
        if r < best_min.1 {
            best_min = (i, r);
        }
    }

    // Fringe positions only need resolving relative to the period; the
    // floating-point floor matters once dt_center dwarfs the period.
    let xtol = (period * 1e-12).max(16.0 * f64::EPSILON * (dt_center.abs() + period));
    let bracket = |i: usize| {
        let t = start + i as f64 * step;
        (t - step, t + step)
    };
    let (a, b) = bracket(best_max.0);
    let (dt_at_max, r_max) = numerics::golden_section_max(&mut rate, a, b, xtol)?;
    let (a, b) = bracket(best_min.0);
    let (dt_at_min, r_min) = numerics::golden_section_min(&mut rate, a, b, xtol)?;

    let sum = r_max + r_min;
    if !(sum > 0.0) {
        return Err(numeric(format!(
            "visibility undefined at dt = {dt_center:e}: rate extrema sum to {sum}"
        )));
    }
    Ok(FringeExtrema {
        r_max,
        r_min,
        visibility: (r_max - r_min) / sum,
        dt_at_max,
        dt_at_min,
    })
}

/// Fringe visibility (R_max - R_min) / (R_max + R_min) over one carrier
/// period around dt_center.
pub fn local_visibility<M: InterferenceModel + ?Sized>(model: &M, dt_center: f64) -> Result<f64> {
    Ok(local_fringe(model, dt_center)?.visibility)
}

/// What the values in a [`VisibilityScan`] mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanKind {
    InterferenceTerm,
    Visibility,
}

/// Where a scan came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanSource {
    Computed,
    Measured,
}

#[derive(Clone, Copy, Debug)]
pub struct ScanPoint {
    /// Air gap length, m.
    pub l_ag: f64,
    pub value: f64,
    /// Per-point uncertainty, if known.
    pub sigma: Option<f64>,
}

/// A sampled curve of visibility (or interference term) against air gap.
#[derive(Clone, Debug)]
pub struct VisibilityScan {
    points: Vec<ScanPoint>,
    kind: ScanKind,
    source: ScanSource,
}

impl VisibilityScan {
    pub fn new(points: Vec<ScanPoint>, kind: ScanKind, source: ScanSource) -> Result<Self> {
        if points.is_empty() {
            return Err(domain("a scan needs at least one point".to_string()));
        }
        for w in points.windows(2) {
            if !(w[1].l_ag > w[0].l_ag) {
                return Err(domain(format!(
                    "scan positions must increase strictly: {:e} then {:e}",
                    w[0].l_ag, w[1].l_ag
                )));
            }
        }
        for p in &points {
            require_finite(p.l_ag, "scan position")?;
            require_finite(p.value, "scan value")?;
            let ok = match kind {
                ScanKind::Visibility => (-1e-9..=1.0 + 1e-9).contains(&p.value),
                ScanKind::InterferenceTerm => p.value.abs() <= 1.0 + 1e-9,
            };
            if !ok {
                return Err(domain(format!(
                    "scan value {} out of range at position {:e}",
                    p.value, p.l_ag
                )));
            }
            if let Some(s) = p.sigma {
                require_positive(s, "scan uncertainty")?;
            }
        }
        Ok(Self { points, kind, source })
    }

    pub fn points(&self) -> &[ScanPoint] {
        &self.points
    }

    pub fn kind(&self) -> ScanKind {
        self.kind
    }

    pub fn source(&self) -> ScanSource {
        self.source
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.l_ag).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }
}

fn check_positions(l_ags: &[f64]) -> Result<()> {
    if l_ags.is_empty() {
        return Err(domain("scan needs at least one position".to_string()));
    }
    for &l in l_ags {
        require_finite(l, "scan position")?;
    }
    for w in l_ags.windows(2) {
        if !(w[1] > w[0]) {
            return Err(domain(format!(
                "scan positions must increase strictly: {:e} then {:e}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn try_map<T: Sync, U: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<U> + Sync + Send,
) -> Result<Vec<U>> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn try_map<T: Sync, U: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<U> + Sync + Send,
) -> Result<Vec<U>> {
    items.iter().map(f).collect()
}

fn point_from_visibility<M: InterferenceModel + ?Sized>(model: &M, l_ag: f64) -> Result<ScanPoint> {
    let dt = units::airgap_to_delay(l_ag)?;
    Ok(ScanPoint { l_ag, value: local_visibility(model, dt)?, sigma: None })
}

/// Local visibility at each air-gap position. Points are independent; with
/// the `parallel` feature they are evaluated on the rayon pool, and the
/// result is identical to [`visibility_scan_sequential`] because each point's
/// computation does not depend on the partitioning.
pub fn visibility_scan<M: InterferenceModel + ?Sized>(
    model: &M,
    l_ags: &[f64],
) -> Result<VisibilityScan> {
    check_positions(l_ags)?;
    let points = try_map(l_ags, |&l| point_from_visibility(model, l))?;
    VisibilityScan::new(points, ScanKind::Visibility, ScanSource::Computed)
}

/// Sequential twin of [`visibility_scan`], available regardless of features.
pub fn visibility_scan_sequential<M: InterferenceModel + ?Sized>(
    model: &M,
    l_ags: &[f64],
) -> Result<VisibilityScan> {
    check_positions(l_ags)?;
    let points: Result<Vec<ScanPoint>> =
        l_ags.iter().map(|&l| point_from_visibility(model, l)).collect();
    VisibilityScan::new(points?, ScanKind::Visibility, ScanSource::Computed)
}

/// One fully resolved scan position: the interference term at the exact
/// delay plus the fringe extrema and visibility around it.
#[derive(Clone, Copy, Debug)]
pub struct ScanRow {
    pub l_ag: f64,
    pub delta_t: f64,
    pub rho: f64,
    pub r_n_max: f64,
    pub r_n_min: f64,
    pub visibility: f64,
}

/// Evaluates interference term and fringe extrema at each position.
pub fn scan_rows<M: InterferenceModel + ?Sized>(model: &M, l_ags: &[f64]) -> Result<Vec<ScanRow>> {
    check_positions(l_ags)?;
    try_map(l_ags, |&l_ag| {
        let delta_t = units::airgap_to_delay(l_ag)?;
        let rho = model.interference_term(delta_t)?;
        let fringe = local_fringe(model, delta_t)?;
        Ok(ScanRow {
            l_ag,
            delta_t,
            rho,
            r_n_max: fringe.r_max,
            r_n_min: fringe.r_min,
            visibility: fringe.visibility,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{BiphotonSource, Filter, GaussianFilter};
    use crate::units::{MICROMETER, NANOMETER};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const BETA2_5_3: f64 = 2.5924078557735963e-26;
    const OMEGA_826_2: f64 = 2.279897805989897e15;

    fn pair_53() -> FilteredPair {
        let omega_p = crate::units::wavelength_to_angular_frequency(413.1 * NANOMETER).unwrap();
        let sigma =
            crate::units::fwhm_wavelength_to_sigma(5.3 * NANOMETER, 826.2 * NANOMETER).unwrap();
        FilteredPair::unfiltered(BiphotonSource::degenerate(omega_p, sigma).unwrap())
    }

    fn fp_pair(l_f_um: f64, finesse: f64) -> FilteredPair {
        let mut pair = pair_53();
        pair.signal.push(Filter::FabryPerot(
            FabryPerotFilter::new(l_f_um * MICROMETER, finesse, 1.0).unwrap(),
        ));
        pair
    }

    fn gaussian_53() -> GaussianMz {
        GaussianMz::from_pair(&pair_53(), MachZehnder::balanced()).unwrap()
    }

    fn series_9486() -> FpSeriesMz {
        FpSeriesMz::from_pair(&fp_pair(94.86, 150.0), MachZehnder::balanced()).unwrap()
    }

    #[test]
    fn gaussian_model_peaks_at_zero_delay() {
        let m = gaussian_53();
        assert_eq!(m.interference_term(0.0).unwrap(), 1.0);
        assert_relative_eq!(m.beta2(), BETA2_5_3, max_relative = 1e-13);
        assert_relative_eq!(m.carrier_omega(), OMEGA_826_2, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_envelope_fwhm_and_half_point() {
        let fwhm = gaussian_envelope_fwhm_airgap(BETA2_5_3).unwrap();
        assert_relative_eq!(fwhm, 160.74781899676242 * MICROMETER, max_relative = 1e-12);
        // Envelope hits one half at half the FWHM.
        let dt = crate::units::airgap_to_delay(fwhm / 2.0).unwrap();
        assert_relative_eq!(
            visibility_envelope_gaussian(BETA2_5_3, dt).unwrap(),
            0.5,
            max_relative = 1e-12
        );
        assert_relative_eq!(dt, 2.680985039936569e-13, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_envelope_at_160_um() {
        let dt = crate::units::airgap_to_delay(160.0 * MICROMETER).unwrap();
        assert_relative_eq!(
            visibility_envelope_gaussian(BETA2_5_3, dt).unwrap(),
            0.06412943173300474,
            max_relative = 1e-12
        );
        // Same width at a delay of 5.34e-13 s (air gap just past 160 um).
        assert_relative_eq!(
            visibility_envelope_gaussian(BETA2_5_3, 5.34e-13).unwrap(),
            0.06393332610121943,
            max_relative = 1e-12
        );
    }

    #[test]
    fn local_visibility_tracks_envelope_for_gaussian_model() {
        let m = gaussian_53();
        let dt = crate::units::airgap_to_delay(160.0 * MICROMETER).unwrap();
        let v = local_visibility(&m, dt).unwrap();
        assert_relative_eq!(v, 0.06399272681175512, max_relative = 1e-9);
        // The fringe extrema sample the envelope slightly off center, so the
        // local visibility sits ~0.2% under the envelope value this far out.
        let env = visibility_envelope_gaussian(BETA2_5_3, dt).unwrap();
        assert_relative_eq!(v, env, max_relative = 5e-3);
        // At zero delay the visibility is limited only by envelope decay over
        // one fringe; for this width that is about 1.8e-5.
        let v0 = local_visibility(&m, 0.0).unwrap();
        assert_relative_eq!(v0, 0.9999816896050608, max_relative = 1e-8);
    }

    #[test]
    fn narrow_spectrum_visibility_reaches_unity_within_1e6() {
        // 1 - V(0) scales with (carrier period)^2 / beta2; a width parameter
        // of 1e12 rad/s puts it below 1e-6.
        let m = GaussianMz::new(MachZehnder::balanced(), OMEGA_826_2, 2.0e-24).unwrap();
        let v0 = local_visibility(&m, 0.0).unwrap();
        assert!(v0 > 1.0 - 1e-6, "V(0) = {v0}");
        assert!(v0 <= 1.0 + 1e-12);
    }

    #[test]
    fn unbalanced_arms_cap_visibility() {
        let mzi = MachZehnder::from_ratio(0.5, 0.0).unwrap();
        let m = GaussianMz::new(mzi, OMEGA_826_2, BETA2_5_3).unwrap();
        let cap = mzi.visibility_cap();
        assert_relative_eq!(cap, 0.8, max_relative = 1e-12);
        let v0 = local_visibility(&m, 0.0).unwrap();
        assert_relative_eq!(v0, cap, max_relative = 1e-4);
    }

    #[test]
    fn series_params_for_94_86_um_finesse_150() {
        let m = series_9486();
        let p = m.params();
        assert_relative_eq!(p.gamma, 9118.906527810399, max_relative = 1e-13);
        assert_relative_eq!(p.decay, 0.9792742251691784, max_relative = 1e-13);
        assert_relative_eq!(p.t0, 6.32837801409934e-13, max_relative = 1e-13);
        // Balanced arms: c_norm = 2 * (1 + 2 sum decay^n cos(n phi0) exp(-n^2 t0^2/4 beta2)).
        assert_relative_eq!(p.c_norm, 2.0 * 0.9717426937182579, max_relative = 1e-10);
    }

    #[test]
    fn series_interference_reference_points() {
        // Frozen from an independent evaluation of the roundtrip series.
        let m = series_9486();
        let t0 = m.params().t0;
        assert!((m.interference_term(0.0).unwrap() - 1.0).abs() < 1e-13);
        for (x, want) in [
            (0.5, -0.2051715447347),
            (1.0, -0.05754878628660),
            (3.3, -0.3808199701773),
            (10.0, -0.6769002995157),
        ] {
            let got = m.interference_term(x * t0).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-6);
        }
    }

    #[test]
    fn series_decay_parameter_is_stable_for_small_gamma() {
        // gamma -> 0 limit is gamma / 4; the naive expression cancels out.
        let mzi = MachZehnder::balanced();
        let p = FpSeriesParams::from_raw(1e-9, 6.3e-13, 1.0, BETA2_5_3, &mzi).unwrap();
        assert_relative_eq!(p.decay, 2.5e-10, max_relative = 1e-6);
    }

    #[test]
    fn series_rejects_bad_parameters() {
        let mzi = MachZehnder::balanced();
        assert!(FpSeriesParams::from_raw(0.0, 6.3e-13, 1.0, BETA2_5_3, &mzi).is_err());
        assert!(FpSeriesParams::from_raw(9000.0, 0.0, 1.0, BETA2_5_3, &mzi).is_err());
        assert!(FpSeriesParams::from_raw(9000.0, 6.3e-13, 1.0, 0.0, &mzi).is_err());
        assert!(FpSeriesParams::from_raw(9000.0, 6.3e-13, f64::NAN, BETA2_5_3, &mzi).is_err());
    }

    #[test]
    fn series_model_rejects_wrong_chain_shapes() {
        // No cavity at all.
        assert!(FpSeriesMz::from_pair(&pair_53(), MachZehnder::balanced()).is_err());
        // Cavity on the idler side.
        let mut pair = pair_53();
        pair.idler.push(Filter::FabryPerot(
            FabryPerotFilter::new(94.86 * MICROMETER, 150.0, 1.0).unwrap(),
        ));
        assert!(FpSeriesMz::from_pair(&pair, MachZehnder::balanced()).is_err());
    }

    #[test]
    fn upper_envelope_is_geometric_in_roundtrips() {
        let p = *series_9486().params();
        assert_eq!(p.upper_envelope(0.0), 1.0);
        assert_relative_eq!(p.upper_envelope(5.0 * p.t0), 0.9005785928737788, max_relative = 1e-12);
        assert_relative_eq!(p.upper_envelope(10.0 * p.t0), 0.8110418019425156, max_relative = 1e-12);
        assert_eq!(p.upper_envelope(-p.t0), p.upper_envelope(p.t0));
    }

    #[test]
    fn revival_peak_visibility_follows_upper_envelope() {
        let m = series_9486();
        let p = m.params();
        let mut prev = f64::INFINITY;
        for n in 0..=10 {
            let dt = n as f64 * p.t0;
            let v = local_visibility(&m, dt).unwrap();
            let env = p.upper_envelope(dt);
            assert!(
                (v - env).abs() <= 0.02 * env,
                "revival {n}: visibility {v} vs envelope {env}"
            );
            assert!(v < prev + 1e-9, "revival peaks must decay monotonically");
            prev = v;
        }
    }

    #[test]
    fn midway_visibility_depends_on_roundtrip_phase() {
        // Between revivals the surviving fringe depends on the roundtrip
        // phase, so sub-wavelength changes of cavity length move the valley
        // visibility over most of [0, 1]. Modulation depth is the swing from
        // the n = 5 revival peak down to the adjacent valley (air gap near
        // 1 mm).
        let expected_valley = [0.03572766154696706, 0.27655174235891367, 0.6479345914459476];
        let mut depths = Vec::new();
        for (l_f, want) in [94.80, 94.86, 95.00].iter().zip(expected_valley) {
            let m = FpSeriesMz::from_pair(&fp_pair(*l_f, 150.0), MachZehnder::balanced()).unwrap();
            let t0 = m.params().t0;
            let peak = local_visibility(&m, 5.0 * t0).unwrap();
            let valley = local_visibility(&m, 5.5 * t0).unwrap();
            assert_relative_eq!(valley, want, max_relative = 1e-6);
            depths.push(peak - valley);
        }
        assert!(depths[0] > depths[1], "94.80 um should modulate deeper than 94.86 um: {depths:?}");
        assert!(depths[1] > depths[2], "94.86 um should modulate deeper than 95.00 um: {depths:?}");
    }

    #[test]
    fn series_matches_quadrature_on_a_delay_grid() {
        let pair = fp_pair(94.86, 150.0);
        let series = FpSeriesMz::from_pair(&pair, MachZehnder::balanced()).unwrap();
        let quad = FpQuadratureMz::from_pair(pair, MachZehnder::balanced()).unwrap();
        let t0 = series.params().t0;
        for x in [0.0, 0.25, 0.5, 1.0, 1.7, 3.3] {
            let dt = x * t0;
            let a = series.interference_term(dt).unwrap();
            let b = quad.interference_term(dt).unwrap();
            assert!(
                (a - b).abs() <= 1e-6,
                "dt = {x} t0: series {a} vs quadrature {b}"
            );
        }
    }

    #[test]
    fn quadrature_handles_idler_side_cavity() {
        // The series model refuses this shape; the quadrature one must not.
        let mut pair = pair_53();
        pair.idler.push(Filter::FabryPerot(
            FabryPerotFilter::new(94.86 * MICROMETER, 150.0, 1.0).unwrap(),
        ));
        let quad = FpQuadratureMz::from_pair(pair, MachZehnder::balanced()).unwrap();
        let rho0 = quad.interference_term(0.0).unwrap();
        assert_relative_eq!(rho0, 1.0, max_relative = 1e-8);
        // A cavity on the interferometer photon's own chain produces
        // revivals too.
        let t0 = FabryPerotFilter::new(94.86 * MICROMETER, 150.0, 1.0).unwrap().roundtrip_time();
        let revival = quad.interference_term(t0).unwrap();
        assert!(revival.abs() > 1e-3);
    }

    #[test]
    fn gaussian_matches_quadrature_with_offset_filter() {
        // Off-center Gaussian filter: the carrier shift logic against the
        // brute-force integral.
        let mut pair = pair_53();
        pair.signal.push(Filter::Gaussian(
            GaussianFilter::from_wavelength(826.4 * NANOMETER, 1.8 * NANOMETER).unwrap(),
        ));
        let closed = GaussianMz::from_pair(&pair, MachZehnder::balanced()).unwrap();
        let quad = FpQuadratureMz::from_pair(pair, MachZehnder::balanced()).unwrap();
        for &l_um in &[0.0, 37.0, 150.0, 351.0] {
            let dt = crate::units::airgap_to_delay(l_um * MICROMETER).unwrap();
            let a = closed.interference_term(dt).unwrap();
            let b = quad.interference_term(dt).unwrap();
            assert!((a - b).abs() <= 1e-7, "l = {l_um} um: closed {a} vs quadrature {b}");
        }
    }

    #[test]
    fn normalized_rate_contract() {
        assert_eq!(normalized_rate(0.0).unwrap(), 1.0);
        assert_eq!(normalized_rate(1.0).unwrap(), 2.0);
        assert_eq!(normalized_rate(-1.0).unwrap(), 0.0);
        // Slack region clamps to zero rather than going negative.
        assert_eq!(normalized_rate(-1.0 - 5e-10).unwrap(), 0.0);
        assert!(normalized_rate(-1.1).is_err());
        assert!(normalized_rate(f64::NAN).is_err());
    }

    #[test]
    fn scan_positions_must_increase() {
        let m = gaussian_53();
        assert!(visibility_scan(&m, &[]).is_err());
        assert!(visibility_scan(&m, &[0.0, 0.0]).is_err());
        assert!(visibility_scan(&m, &[1e-6, 0.0]).is_err());
    }

    #[test]
    fn parallel_and_sequential_scans_agree_bitwise() {
        let m = series_9486();
        let l_ags: Vec<f64> = (0..64).map(|i| i as f64 * 12.0 * MICROMETER).collect();
        let a = visibility_scan(&m, &l_ags).unwrap();
        let b = visibility_scan_sequential(&m, &l_ags).unwrap();
        for (pa, pb) in a.points().iter().zip(b.points()) {
            assert_eq!(pa.value.to_bits(), pb.value.to_bits());
        }
    }

    #[test]
    fn scan_rows_are_consistent_with_visibility_scan() {
        let m = gaussian_53();
        let l_ags: Vec<f64> = (0..8).map(|i| i as f64 * 40.0 * MICROMETER).collect();
        let rows = scan_rows(&m, &l_ags).unwrap();
        let scan = visibility_scan(&m, &l_ags).unwrap();
        for (row, point) in rows.iter().zip(scan.points()) {
            assert_eq!(row.l_ag, point.l_ag);
            assert_eq!(row.visibility, point.value);
            assert!(row.r_n_max >= row.r_n_min);
            assert!(row.rho <= row.r_n_max - 1.0 + 1e-12);
            assert!(row.rho >= row.r_n_min - 1.0 - 1e-12);
        }
    }

    #[test]
    fn visibility_scan_rejects_bad_points() {
        let bad = vec![ScanPoint { l_ag: 0.0, value: 1.5, sigma: None }];
        assert!(VisibilityScan::new(bad, ScanKind::Visibility, ScanSource::Measured).is_err());
        let bad_sigma = vec![ScanPoint { l_ag: 0.0, value: 0.5, sigma: Some(0.0) }];
        assert!(VisibilityScan::new(bad_sigma, ScanKind::Visibility, ScanSource::Measured).is_err());
    }

    proptest! {
        // A common phase on both arms cancels in the cross term.
        #[test]
        fn common_arm_phase_leaves_rho_unchanged(
            theta in 0.0f64..std::f64::consts::TAU,
            ratio in 0.2f64..5.0,
            phase in 0.0f64..std::f64::consts::TAU,
            l_um in -300.0f64..300.0,
        ) {
            let base = MachZehnder::from_ratio(ratio, phase).unwrap();
            let rot = Complex64::from_polar(1.0, theta);
            let rotated = MachZehnder::new(base.t_short() * rot, base.t_long() * rot).unwrap();
            let dt = l_um * MICROMETER / crate::units::SPEED_OF_LIGHT;
            let a = GaussianMz::new(base, OMEGA_826_2, BETA2_5_3).unwrap()
                .interference_term(dt).unwrap();
            let b = GaussianMz::new(rotated, OMEGA_826_2, BETA2_5_3).unwrap()
                .interference_term(dt).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn gaussian_rho_is_bounded_and_even_for_real_arms(
            l_um in -500.0f64..500.0,
            ratio in 0.2f64..5.0,
        ) {
            let mzi = MachZehnder::from_ratio(ratio, 0.0).unwrap();
            let m = GaussianMz::new(mzi, OMEGA_826_2, BETA2_5_3).unwrap();
            let dt = l_um * MICROMETER / crate::units::SPEED_OF_LIGHT;
            let plus = m.interference_term(dt).unwrap();
            let minus = m.interference_term(-dt).unwrap();
            prop_assert!(plus.abs() <= 1.0 + 1e-12);
            prop_assert!((plus - minus).abs() <= 1e-12);
        }

        #[test]
        fn series_rho_is_bounded_and_even_for_real_arms(
            x in -12.0f64..12.0,
            l_f_um in 60.0f64..140.0,
            finesse in 20.0f64..300.0,
        ) {
            let m = FpSeriesMz::from_pair(&fp_pair(l_f_um, finesse), MachZehnder::balanced())
                .unwrap();
            let dt = x * m.params().t0;
            let plus = m.interference_term(dt).unwrap();
            let minus = m.interference_term(-dt).unwrap();
            prop_assert!(plus.abs() <= 1.0 + 1e-9, "rho = {}", plus);
            prop_assert!((plus - minus).abs() <= 1e-12);
        }

        // The series envelope magnitude bounds |rho| and touches it at fringe
        // maxima.
        #[test]
        fn series_envelope_bounds_rho(x in -12.0f64..12.0) {
            let m = series_9486();
            let dt = x * m.params().t0;
            let rho = m.interference_term(dt).unwrap();
            let env = m.envelope_magnitude(dt);
            prop_assert!(rho.abs() <= env + 1e-12);
        }
    }
}
