//! The scan, hom, spectrum, and fit commands. Each returns the process exit
//! code on success; errors bubble up and main maps them onto the exit-code
//! contract.

use std::path::Path;

use biphoton::fitting::{
    fit_fp_visibility, fit_gaussian_envelope, generate_synthetic_scan, FitParam, FitResult,
    FpFitConfig,
};
use biphoton::mzi::scan_rows;
use biphoton::units::{airgap_to_delay, wavelength_to_angular_frequency, MICROMETER, NANOMETER};
use biphoton::{Error, Result};

use crate::csvio::{read_visibility_csv, Table};
use crate::scenario::{self, Scenario};

fn domain(msg: String) -> Error {
    Error::Domain(msg)
}

pub const SCAN_HEADER: &[&str] =
    &["l_ag_um", "delta_t_s", "rho", "r_n_max", "r_n_min", "visibility"];
pub const NOISY_SCAN_HEADER: &[&str] = &["l_ag_um", "visibility", "sigma"];
pub const HOM_HEADER: &[&str] = &["path_diff_um", "delta_t_s", "rho_hom", "r_n"];
pub const SPECTRUM_HEADER: &[&str] = &["lambda_nm", "transmittance"];

/// Full forward scan table: interference term plus fringe extrema per point.
pub fn scan_table(sc: &Scenario) -> Result<Table> {
    let model = sc.scan_model()?;
    let positions = sc.grid.positions();
    let rows = scan_rows(&*model, &positions)?;
    let mut table = Table::new(SCAN_HEADER);
    for r in rows {
        table.push(vec![
            r.l_ag / MICROMETER,
            r.delta_t,
            r.rho,
            r.r_n_max,
            r.r_n_min,
            r.visibility,
        ]);
    }
    Ok(table)
}

/// Synthetic measured-style table: visibility plus the known noise level.
pub fn noisy_scan_table(sc: &Scenario, noise_sigma: f64, seed: u64) -> Result<Table> {
    let model = sc.scan_model()?;
    let positions = sc.grid.positions();
    let scan = generate_synthetic_scan(&*model, &positions, noise_sigma, seed)?;
    let mut table = Table::new(NOISY_SCAN_HEADER);
    for p in scan.points() {
        table.push(vec![p.l_ag / MICROMETER, p.value, p.sigma.unwrap_or(noise_sigma)]);
    }
    Ok(table)
}

pub fn cmd_scan(name_or_path: &str, out: Option<&Path>, noise_sigma: f64, seed: u64) -> Result<i32> {
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(domain(format!("--noise-sigma must be finite and >= 0, got {noise_sigma}")));
    }
    let sc = scenario::load(name_or_path)?;
    let table = if noise_sigma > 0.0 {
        noisy_scan_table(&sc, noise_sigma, seed)?
    } else {
        scan_table(&sc)?
    };
    table.write(out)?;
    Ok(0)
}

pub fn hom_table(sc: &Scenario) -> Result<Table> {
    let model = sc.hom_model()?;
    let mut table = Table::new(HOM_HEADER);
    for l in sc.grid.positions() {
        let dt = airgap_to_delay(l)?;
        let rho = model.interference_term(dt)?;
        // Coincidence rate normalized to the far-from-overlap level; the
        // bound mirrors HomModel::rate without re-running the quadrature.
        if rho.abs() > 1.0 + 1e-9 {
            return Err(domain(format!(
                "overlap {rho} exceeds unit magnitude at path difference {l:e} m"
            )));
        }
        let r_n = (1.0 - rho).max(0.0);
        table.push(vec![l / MICROMETER, dt, rho, r_n]);
    }
    Ok(table)
}

pub fn cmd_hom(name_or_path: &str, out: Option<&Path>) -> Result<i32> {
    let sc = scenario::load(name_or_path)?;
    hom_table(&sc)?.write(out)?;
    Ok(0)
}

/// Signal-arm spectrum: geometric profile times the signal cascade, sampled
/// across a wavelength window around the arm center.
pub fn spectrum_table(sc: &Scenario, span_nm: f64, points: usize) -> Result<Table> {
    if !(span_nm.is_finite() && span_nm > 0.0) {
        return Err(domain(format!("--span-nm must be positive, got {span_nm}")));
    }
    if points < 2 {
        return Err(domain(format!("--points must be at least 2, got {points}")));
    }
    let source = &sc.pair.source;
    let omega1 = source.omega1_0();
    let sigma1 = source.sigma_geo1();
    let lo = sc.lambda1 - 0.5 * span_nm * NANOMETER;
    if lo <= 0.0 {
        return Err(domain(format!("--span-nm {span_nm} reaches below zero wavelength")));
    }
    let step = span_nm * NANOMETER / (points - 1) as f64;
    let mut table = Table::new(SPECTRUM_HEADER);
    for i in 0..points {
        let lambda = lo + i as f64 * step;
        let omega = wavelength_to_angular_frequency(lambda)?;
        let d = (omega - omega1) / sigma1;
        let t = (-d * d).exp() * sc.pair.signal.transmittance(omega);
        table.push(vec![lambda / NANOMETER, t]);
    }
    Ok(table)
}

pub fn cmd_spectrum(name_or_path: &str, out: Option<&Path>, span_nm: f64, points: usize) -> Result<i32> {
    let sc = scenario::load(name_or_path)?;
    spectrum_table(&sc, span_nm, points)?.write(out)?;
    Ok(0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModelKind {
    Gaussian,
    Fp,
}

pub struct FitOptions {
    /// Override the model choice; default follows the scenario (cavity
    /// present -> fp, otherwise gaussian).
    pub model: Option<FitModelKind>,
    /// Let finesse float instead of pinning it to the scenario value.
    pub free_finesse: bool,
    /// Pin the arm ratio instead of fitting it.
    pub fixed_ratio: Option<f64>,
}

pub fn cmd_fit(data: &Path, name_or_path: &str, opts: &FitOptions) -> Result<i32> {
    let sc = scenario::load(name_or_path)?;
    let scan = read_visibility_csv(data)?;
    let kind = opts.model.unwrap_or(if sc.cavity.is_some() {
        FitModelKind::Fp
    } else {
        FitModelKind::Gaussian
    });
    let result = match kind {
        FitModelKind::Gaussian => {
            let fit = fit_gaussian_envelope(&scan, sc.lambda1)?;
            let derived = [
                ("fwhm_airgap_um", fit.fwhm_airgap / MICROMETER),
                ("beta2_s2", fit.beta2),
                ("equivalent_fwhm_nm", fit.equivalent_fwhm_wavelength / NANOMETER),
            ];
            print_report("gaussian_envelope", &fit.result, &derived);
            fit.result
        }
        FitModelKind::Fp => {
            let cfg = fp_config(&sc, opts)?;
            let fit = fit_fp_visibility(&scan, &cfg)?;
            let derived = [
                ("l_f_um", fit.l_f / MICROMETER),
                ("roundtrip_period_um", 2.0 * fit.l_f / MICROMETER),
                ("finesse", fit.finesse),
            ];
            print_report("fp_revivals", &fit.result, &derived);
            fit.result
        }
    };
    Ok(if result.converged { 0 } else { 4 })
}

/// Seed the revival fit from the scenario: cavity length floats inside a
/// +-2 um window around the configured value, finesse is pinned to it unless
/// freed, the arm ratio floats around balance unless pinned.
pub fn fp_config(sc: &Scenario, opts: &FitOptions) -> Result<FpFitConfig> {
    let cavity = sc.cavity.ok_or_else(|| {
        domain(format!(
            "scenario '{}' has no fabry_perot filter; nothing seeds the revival fit",
            sc.name
        ))
    })?;
    let r = sc.pair.gaussian_reduction();
    let source = &sc.pair.source;
    let l_f = cavity.l_f();
    Ok(FpFitConfig {
        omega1_0: source.omega1_0() + r.shift,
        omega2_0: source.omega2_0() - r.shift,
        beta2: r.beta2,
        l_f: FitParam::Free {
            guess: Some(l_f),
            min: (l_f - 2.0 * MICROMETER).max(1.0 * MICROMETER),
            max: l_f + 2.0 * MICROMETER,
        },
        finesse: if opts.free_finesse {
            FitParam::Free { guess: Some(cavity.finesse()), min: 10.0, max: 500.0 }
        } else {
            FitParam::Fixed(cavity.finesse())
        },
        arm_ratio: match opts.fixed_ratio {
            Some(r) => FitParam::Fixed(r),
            None => FitParam::Free { guess: Some(1.0), min: 0.2, max: 5.0 },
        },
    })
}

/// Human-readable block followed by stable `key=value` lines for scripts.
fn print_report(model: &str, result: &FitResult, derived: &[(&str, f64)]) {
    println!("fit model: {model}");
    println!("points: {}", result.n_points);
    println!(
        "converged: {}{}",
        if result.converged { "yes" } else { "NO" },
        if result.used_fallback { " (simplex fallback)" } else { "" }
    );
    println!("iterations: {}", result.iterations);
    println!("rss: {:.6e}", result.rss);
    for p in &result.parameters {
        let tag = if p.free { "" } else { " (fixed)" };
        match p.stderr {
            Some(s) => println!("  {:<12} {:.8e} +- {:.3e}{tag}", p.name, p.value, s),
            None => println!("  {:<12} {:.8e}{tag}", p.name, p.value),
        }
    }
    for (name, value) in derived {
        println!("  {name:<20} {value:.8e}");
    }
    println!("fit.model={model}");
    println!("fit.converged={}", result.converged);
    println!("fit.fallback={}", result.used_fallback);
    println!("fit.iterations={}", result.iterations);
    println!("fit.points={}", result.n_points);
    println!("fit.rss={:.16e}", result.rss);
    for p in &result.parameters {
        println!("param.{}.value={:.16e}", p.name, p.value);
        if let Some(s) = p.stderr {
            println!("param.{}.stderr={s:.16e}", p.name);
        }
        println!("param.{}.free={}", p.name, p.free);
    }
    for (name, value) in derived {
        println!("derived.{name}={value:.16e}");
    }
}
