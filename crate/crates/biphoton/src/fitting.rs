//! Parameter estimation from visibility scans: Gaussian envelope widths,
//! cavity length and finesse of the revival pattern, and synthetic scan
//! generation for testing the estimators.

mod optim;

pub use optim::{least_squares, Options as LeastSquaresOptions, Outcome as LeastSquaresOutcome};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{domain, fit, require_positive, Result};
use crate::mzi::{
    visibility_scan, visibility_scan_sequential, FpSeriesMz, FpSeriesParams, InterferenceModel,
    MachZehnder, ScanKind, ScanPoint, ScanSource, VisibilityScan,
};
use crate::numerics;
use crate::units::{self, SPEED_OF_LIGHT};

/// One named parameter of a completed fit.
#[derive(Clone, Debug)]
pub struct FittedParameter {
    pub name: &'static str,
    pub value: f64,
    /// Standard error from the scaled covariance; None for fixed parameters
    /// or when the covariance is unavailable.
    pub stderr: Option<f64>,
    pub free: bool,
}

/// Outcome bookkeeping shared by all fits.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub parameters: Vec<FittedParameter>,
    pub rss: f64,
    pub n_points: usize,
    pub iterations: usize,
    pub converged: bool,
    pub used_fallback: bool,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&FittedParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// A fit parameter: pinned to a value, or free within finite bounds with an
/// optional starting guess.
#[derive(Clone, Copy, Debug)]
pub enum FitParam {
    Fixed(f64),
    Free { guess: Option<f64>, min: f64, max: f64 },
}

impl FitParam {
    fn validate(&self, name: &str, hard_min: f64) -> Result<()> {
        match *self {
            FitParam::Fixed(v) => {
                if !(v.is_finite() && v > hard_min) {
                    return Err(domain(format!("{name} must be finite and > {hard_min}, got {v}")));
                }
            }
            FitParam::Free { guess, min, max } => {
                if !(min.is_finite() && max.is_finite() && hard_min < min && min < max) {
                    return Err(domain(format!(
                        "{name} needs finite bounds with {hard_min} < min < max, got [{min}, {max}]"
                    )));
                }
                if let Some(g) = guess {
                    if !(g.is_finite() && g >= min && g <= max) {
                        return Err(domain(format!("{name} guess {g} outside bounds [{min}, {max}]")));
                    }
                }
            }
        }
        Ok(())
    }

    fn is_free(&self) -> bool {
        matches!(self, FitParam::Free { .. })
    }
}

fn scan_weights(points: &[ScanPoint]) -> Vec<f64> {
    if points.iter().all(|p| p.sigma.is_some()) {
        points.iter().map(|p| 1.0 / p.sigma.unwrap()).collect()
    } else {
        vec![1.0; points.len()]
    }
}

/// Gaussian envelope estimate: amplitude and air-gap FWHM, with the envelope
/// curvature and the equivalent per-arm spectral FWHM derived from the width.
#[derive(Clone, Debug)]
pub struct GaussianEnvelopeFit {
    pub amplitude: f64,
    /// Air-gap FWHM of the envelope, m.
    pub fwhm_airgap: f64,
    /// Envelope curvature beta2 = fwhm^2 / (16 c^2 ln 2), s^2.
    pub beta2: f64,
    /// Intensity FWHM in wavelength of a single arm, assuming both arms share
    /// the fitted width equally, m.
    pub equivalent_fwhm_wavelength: f64,
    pub result: FitResult,
}

/// Fits amplitude * exp(-4 ln 2 l^2 / fwhm^2) to a visibility scan centered
/// at zero air gap. Needs at least 5 points and a scan that actually crosses
/// half its maximum, otherwise the width is unidentifiable.
pub fn fit_gaussian_envelope(scan: &VisibilityScan, lambda0: f64) -> Result<GaussianEnvelopeFit> {
    require_positive(lambda0, "lambda0")?;
    if scan.kind() != ScanKind::Visibility {
        return Err(domain("envelope fit expects a visibility scan".to_string()));
    }
    let points = scan.points();
    if points.len() < 5 {
        return Err(fit(format!("envelope fit needs at least 5 points, got {}", points.len())));
    }
    let vmax = points.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    let vmin = points.iter().map(|p| p.value).fold(f64::INFINITY, f64::min);
    if !(vmax > 0.0) {
        return Err(fit("all visibilities vanish; nothing to fit".to_string()));
    }
    if vmin > 0.5 * vmax {
        return Err(fit(
            "scan never falls below half its maximum; envelope width is unidentifiable".to_string(),
        ));
    }

    let first = points.first().unwrap().l_ag;
    let last = points.last().unwrap().l_ag;
    let span = last - first;
    let above: Vec<f64> = points
        .iter()
        .filter(|p| p.value >= 0.5 * vmax)
        .map(|p| p.l_ag)
        .collect();
    let w0 = if above.len() >= 2 {
        (above.last().unwrap() - above.first().unwrap()).max(span * 1e-3)
    } else {
        span * 0.25
    };
    let a0 = vmax.min(1.0);

    let lower = [1e-6, span * 1e-4];
    let upper = [2.0, span * 50.0];
    let initial = [a0.clamp(lower[0], upper[0]), w0.clamp(lower[1], upper[1])];

    let weights = scan_weights(points);
    let ln2 = std::f64::consts::LN_2;
    let residuals = move |p: &[f64]| -> Result<Vec<f64>> {
        let (a, w) = (p[0], p[1]);
        Ok(points
            .iter()
            .zip(&weights)
            .map(|(pt, wt)| {
                let x = pt.l_ag / w;
                wt * (a * (-4.0 * ln2 * x * x).exp() - pt.value)
            })
            .collect())
    };

    let out = least_squares(&residuals, &initial, &lower, &upper, &LeastSquaresOptions::default())?;
    let stderr = |i: usize| {
        out.covariance
            .as_ref()
            .map(|c| c[i][i].max(0.0).sqrt())
    };
    let amplitude = out.params[0];
    let fwhm = out.params[1];
    let beta2 = fwhm * fwhm / (16.0 * SPEED_OF_LIGHT * SPEED_OF_LIGHT * ln2);
    let sigma_arm = (2.0 / beta2).sqrt();
    let equivalent_fwhm_wavelength = units::sigma_to_fwhm_wavelength(sigma_arm, lambda0)?;

    Ok(GaussianEnvelopeFit {
        amplitude,
        fwhm_airgap: fwhm,
        beta2,
        equivalent_fwhm_wavelength,
        result: FitResult {
            parameters: vec![
                FittedParameter { name: "amplitude", value: amplitude, stderr: stderr(0), free: true },
                FittedParameter { name: "fwhm_airgap", value: fwhm, stderr: stderr(1), free: true },
            ],
            rss: out.rss,
            n_points: points.len(),
            iterations: out.iterations,
            converged: out.converged,
            used_fallback: out.used_fallback,
        },
    })
}

/// Configuration of the revival-pattern fit. The spectral envelope (beta2)
/// and the photon center frequencies are taken as known; cavity length,
/// finesse, and arm balance are each either pinned or free.
#[derive(Clone, Debug)]
pub struct FpFitConfig {
    /// Center frequency of the cavity-filtered remote photon, rad/s.
    pub omega1_0: f64,
    /// Center frequency of the interferometer photon, rad/s; sets the
    /// fringe carrier.
    pub omega2_0: f64,
    /// Gaussian envelope curvature, s^2.
    pub beta2: f64,
    /// Cavity optical length, m.
    pub l_f: FitParam,
    pub finesse: FitParam,
    pub arm_ratio: FitParam,
}

/// Revival-pattern estimate.
#[derive(Clone, Debug)]
pub struct FpVisibilityFit {
    /// Cavity optical length, m.
    pub l_f: f64,
    pub finesse: f64,
    pub arm_ratio: f64,
    pub result: FitResult,
}

fn build_series_model(
    cfg: &FpFitConfig,
    l_f: f64,
    finesse: f64,
    arm_ratio: f64,
) -> Result<FpSeriesMz> {
    let mzi = MachZehnder::from_ratio(arm_ratio, 0.0)?;
    let g = 2.0 * finesse / std::f64::consts::PI;
    let t0 = 2.0 * l_f / SPEED_OF_LIGHT;
    let params = FpSeriesParams::from_raw(g * g, t0, cfg.omega1_0 * t0, cfg.beta2, &mzi)?;
    FpSeriesMz::new(params, mzi, cfg.omega2_0, cfg.beta2)
}

/// Fits the roundtrip-series visibility model to a scan.
///
/// When the cavity length is free and no guess is given, the starting value
/// comes from the dominant modulation period of the scan (one revival per two
/// cavity lengths of air gap). Because the in-period phase wraps every half
/// carrier wavelength of cavity length, the objective is multimodal in l_f;
/// the fit therefore polishes the best of a sub-wavelength grid of starts.
pub fn fit_fp_visibility(scan: &VisibilityScan, cfg: &FpFitConfig) -> Result<FpVisibilityFit> {
    require_positive(cfg.omega1_0, "omega1_0")?;
    require_positive(cfg.omega2_0, "omega2_0")?;
    require_positive(cfg.beta2, "beta2")?;
    cfg.l_f.validate("l_f", 0.0)?;
    cfg.finesse.validate("finesse", 1.0)?;
    cfg.arm_ratio.validate("arm_ratio", 0.0)?;
    if scan.kind() != ScanKind::Visibility {
        return Err(domain("revival fit expects a visibility scan".to_string()));
    }
    let points = scan.points();
    if points.len() < 10 {
        return Err(fit(format!("revival fit needs at least 10 points, got {}", points.len())));
    }
    let positions = scan.positions();
    let values = scan.values();
    let span = positions.last().unwrap() - positions.first().unwrap();

    let l_f0 = match cfg.l_f {
        FitParam::Fixed(v) => v,
        FitParam::Free { guess: Some(g), .. } => g,
        FitParam::Free { guess: None, min, max } => {
            // Search well beyond the bounds so the peak has room to stand out
            // against the band average; clamp only the result.
            let mean_spacing = span / (points.len() - 1) as f64;
            let p_lo = 4.0 * mean_spacing;
            let p_hi = span / 3.0;
            if !(p_lo < p_hi) {
                return Err(fit(
                    "scan too short or too sparse to search for a modulation period".to_string(),
                ));
            }
            let period = dominant_period(&positions, &values, p_lo, p_hi)?;
            (0.5 * period).clamp(min, max)
        }
    };
    if cfg.l_f.is_free() && span < 3.0 * 2.0 * l_f0 {
        return Err(fit(format!(
            "scan span {span:e} m covers fewer than 3 modulation periods of {:e} m",
            2.0 * l_f0
        )));
    }

    let finesse0 = match cfg.finesse {
        FitParam::Fixed(v) => v,
        FitParam::Free { guess, min, max } => guess.unwrap_or(0.5 * (min + max)),
    };
    let ratio0 = match cfg.arm_ratio {
        FitParam::Fixed(v) => v,
        FitParam::Free { guess, min, max } => guess.unwrap_or_else(|| (min * max).sqrt().min(1.0).max(min)),
    };

    let specs = [&cfg.l_f, &cfg.finesse, &cfg.arm_ratio];
    let base = [l_f0, finesse0, ratio0];
    let free_idx: Vec<usize> = (0..3).filter(|&i| specs[i].is_free()).collect();
    if free_idx.is_empty() {
        return Err(fit("revival fit has no free parameters".to_string()));
    }
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for &i in &free_idx {
        if let FitParam::Free { min, max, .. } = specs[i] {
            lower.push(*min);
            upper.push(*max);
        }
    }

    let weights = scan_weights(points);
    let embed = |free: &[f64]| -> [f64; 3] {
        let mut full = base;
        for (slot, &i) in free.iter().zip(&free_idx) {
            full[i] = *slot;
        }
        full
    };
    let residuals = |free: &[f64]| -> Result<Vec<f64>> {
        let [l_f, finesse, ratio] = embed(free);
        let model = build_series_model(cfg, l_f, finesse, ratio)?;
        let model_scan = visibility_scan(&model, &positions)?;
        Ok(model_scan
            .points()
            .iter()
            .zip(points)
            .zip(&weights)
            .map(|((m, d), w)| w * (m.value - d.value))
            .collect())
    };

    // Candidate starts: the phase-wrapping grid when l_f is free.
    let starts: Vec<[f64; 3]> = if let FitParam::Free { min, max, .. } = cfg.l_f {
        let lambda1 = 2.0 * std::f64::consts::PI * SPEED_OF_LIGHT / cfg.omega1_0;
        (-5..=5)
            .map(|k| {
                let mut s = base;
                s[0] = (l_f0 + k as f64 * lambda1 / 8.0).clamp(min, max);
                s
            })
            .collect()
    } else {
        vec![base]
    };

    let free_of = |full: &[f64; 3]| -> Vec<f64> { free_idx.iter().map(|&i| full[i]).collect() };
    let rss_of = |full: &[f64; 3]| -> Result<f64> {
        let r = residuals(&free_of(full))?;
        Ok(r.iter().map(|x| x * x).sum())
    };

    let mut ranked: Vec<([f64; 3], f64)> = Vec::with_capacity(starts.len());
    for s in &starts {
        ranked.push((*s, rss_of(s)?));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    ranked.truncate(2);

    let opts = LeastSquaresOptions::default();
    let mut best: Option<optim::Outcome> = None;
    for (start, _) in &ranked {
        let out = least_squares(&residuals, &free_of(start), &lower, &upper, &opts)?;
        if best.as_ref().map_or(true, |b| out.rss < b.rss) {
            best = Some(out);
        }
    }
    let out = best.expect("at least one start");

    let full = embed(&out.params);
    let mut stderr_by_full = [None::<f64>; 3];
    if let Some(cov) = &out.covariance {
        for (slot, &i) in free_idx.iter().enumerate() {
            stderr_by_full[i] = Some(cov[slot][slot].max(0.0).sqrt());
        }
    }
    let names = ["l_f", "finesse", "arm_ratio"];
    let parameters = (0..3)
        .map(|i| FittedParameter {
            name: names[i],
            value: full[i],
            stderr: stderr_by_full[i],
            free: specs[i].is_free(),
        })
        .collect();

    Ok(FpVisibilityFit {
        l_f: full[0],
        finesse: full[1],
        arm_ratio: full[2],
        result: FitResult {
            parameters,
            rss: out.rss,
            n_points: points.len(),
            iterations: out.iterations,
            converged: out.converged,
            used_fallback: out.used_fallback,
        },
    })
}

/// Dominant modulation period of a sampled curve by direct periodogram over
/// a period grid, refined by golden-section search. Rejects curves without a
/// clear interior spectral peak.
pub fn dominant_period(
    positions: &[f64],
    values: &[f64],
    min_period: f64,
    max_period: f64,
) -> Result<f64> {
    if positions.len() != values.len() {
        return Err(domain("positions and values must have equal length".to_string()));
    }
    if positions.len() < 8 {
        return Err(fit(format!("periodogram needs at least 8 points, got {}", positions.len())));
    }
    require_positive(min_period, "min_period")?;
    if !(max_period.is_finite() && max_period > min_period) {
        return Err(domain(format!(
            "need min_period < max_period, got [{min_period}, {max_period}]"
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let dev: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let var: f64 = dev.iter().map(|d| d * d).sum();
    if var <= 0.0 {
        return Err(fit("curve is constant; no modulation to measure".to_string()));
    }

    let power = |p: f64| -> f64 {
        let k = std::f64::consts::TAU / p;
        let (mut c, mut s) = (0.0, 0.0);
        for (l, d) in positions.iter().zip(&dev) {
            let (sin, cos) = (k * l).sin_cos();
            c += d * cos;
            s += d * sin;
        }
        c * c + s * s
    };

    const GRID: usize = 2000;
    let step = (max_period - min_period) / (GRID - 1) as f64;
    let mut best = (0usize, f64::NEG_INFINITY);
    let mut total = 0.0;
    for i in 0..GRID {
        let pw = power(min_period + i as f64 * step);
        total += pw;
        if pw > best.1 {
            best = (i, pw);
        }
    }
    let mean_power = total / GRID as f64;
    if best.1 < 5.0 * mean_power {
        return Err(fit(format!(
            "no dominant period: peak power {:.3e} under 5x mean {:.3e}",
            best.1, mean_power
        )));
    }
    let edge = GRID / 50;
    if best.0 <= edge || best.0 >= GRID - 1 - edge {
        return Err(fit(
            "periodogram peak sits at the search boundary; period range does not bracket it"
                .to_string(),
        ));
    }

    let lo = min_period + (best.0 - 1) as f64 * step;
    let hi = min_period + (best.0 + 1) as f64 * step;
    let mut f = |p: f64| -> Result<f64> { Ok(power(p)) };
    let (p_star, _) = numerics::golden_section_max(&mut f, lo, hi, step * 1e-8)?;
    Ok(p_star)
}

/// Evaluates a model visibility scan and adds clamped Gaussian noise.
/// Deterministic for a given seed, independent of the `parallel` feature,
/// because the base scan is evaluated sequentially and noise is drawn in
/// position order from a counter-based generator.
pub fn generate_synthetic_scan<M: InterferenceModel + ?Sized>(
    model: &M,
    l_ags: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<VisibilityScan> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(domain(format!("noise sigma must be finite and >= 0, got {noise_sigma}")));
    }
    let base = visibility_scan_sequential(model, l_ags)?;
    if noise_sigma == 0.0 {
        return Ok(base);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_sigma)
        .map_err(|e| domain(format!("bad noise distribution: {e}")))?;
    let points: Vec<ScanPoint> = base
        .points()
        .iter()
        .map(|p| ScanPoint {
            l_ag: p.l_ag,
            value: (p.value + normal.sample(&mut rng)).clamp(0.0, 1.0),
            sigma: Some(noise_sigma),
        })
        .collect();
    VisibilityScan::new(points, ScanKind::Visibility, ScanSource::Measured)
}
