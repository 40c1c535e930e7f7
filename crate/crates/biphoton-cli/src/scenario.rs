//! Scenario files: the TOML schema, its validation, and the translation into
//! runtime model objects.
//!
//! A scenario pins everything physical (pump, arm centers, geometric widths,
//! filter cascades, interferometer imbalance) plus exactly one sweep block,
//! either `[scan]` (air gap) or `[hom]` (path difference). Commands decide
//! what to do with the compiled scenario.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use biphoton::hom::HomModel;
use biphoton::mzi::{FpQuadratureMz, FpSeriesMz, GaussianMz, InterferenceModel, MachZehnder};
use biphoton::spectra::{
    BiphotonSource, FabryPerotFilter, Filter, FilterChain, FilteredPair, GaussianFilter,
};
use biphoton::units::{
    fwhm_wavelength_to_sigma, wavelength_to_angular_frequency, MICROMETER, NANOMETER,
};
use biphoton::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Scenarios shipped inside the binary, addressable by bare name.
const EMBEDDED: &[(&str, &str)] = &[
    ("fig2_nofilter", include_str!("../scenarios/fig2_nofilter.toml")),
    ("fig2_filter", include_str!("../scenarios/fig2_filter.toml")),
    (
        "fig2_filter_composed",
        include_str!("../scenarios/fig2_filter_composed.toml"),
    ),
    ("fig3_fp", include_str!("../scenarios/fig3_fp.toml")),
    ("fig3_fp_9480", include_str!("../scenarios/fig3_fp_9480.toml")),
    ("fig3_fp_9500", include_str!("../scenarios/fig3_fp_9500.toml")),
    (
        "fig5_fp_plus_filter",
        include_str!("../scenarios/fig5_fp_plus_filter.toml"),
    ),
    ("fig7_hom", include_str!("../scenarios/fig7_hom.toml")),
];

pub fn embedded_names() -> Vec<&'static str> {
    EMBEDDED.iter().map(|(n, _)| *n).collect()
}

fn domain(msg: String) -> Error {
    Error::Domain(msg)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    schema_version: u32,
    #[serde(default)]
    description: Option<String>,
    source: SourceBlock,
    #[serde(default)]
    signal_filters: Vec<FilterBlock>,
    #[serde(default)]
    idler_filters: Vec<FilterBlock>,
    #[serde(default)]
    mzi: Option<MziBlock>,
    #[serde(default)]
    scan: Option<RangeBlock>,
    #[serde(default)]
    hom: Option<RangeBlock>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceBlock {
    pump_nm: f64,
    signal_nm: f64,
    #[serde(default)]
    idler_nm: Option<f64>,
    signal_geometric_fwhm_nm: f64,
    idler_geometric_fwhm_nm: f64,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum FilterBlock {
    Gaussian {
        #[serde(default)]
        center_nm: Option<f64>,
        fwhm_nm: f64,
    },
    FabryPerot {
        l_f_um: f64,
        finesse: f64,
        #[serde(default = "default_t_max")]
        t_max: f64,
    },
}

fn default_t_max() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MziBlock {
    #[serde(default = "default_arm_ratio")]
    arm_ratio: f64,
    #[serde(default)]
    arm_phase_deg: f64,
}

fn default_arm_ratio() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeBlock {
    start_um: f64,
    stop_um: f64,
    step_um: f64,
}

/// Which sweep the scenario requests, with its grid in meters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepKind {
    Scan,
    Hom,
}

#[derive(Clone, Copy, Debug)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    fn from_block(b: &RangeBlock, what: &str) -> Result<Grid> {
        for (v, n) in [(b.start_um, "start_um"), (b.stop_um, "stop_um"), (b.step_um, "step_um")] {
            if !v.is_finite() {
                return Err(domain(format!("{what}.{n} must be finite, got {v}")));
            }
        }
        if b.stop_um < b.start_um {
            return Err(domain(format!(
                "{what} range runs backwards: stop_um {} < start_um {}",
                b.stop_um, b.start_um
            )));
        }
        if b.step_um <= 0.0 {
            return Err(domain(format!("{what}.step_um must be positive, got {}", b.step_um)));
        }
        let n = ((b.stop_um - b.start_um) / b.step_um).floor();
        if n > 5e6 {
            return Err(domain(format!("{what} range requests {n:.0} points; cap is 5e6")));
        }
        Ok(Grid {
            start: b.start_um * MICROMETER,
            stop: b.stop_um * MICROMETER,
            step: b.step_um * MICROMETER,
        })
    }

    /// Positions start, start+step, ... up to stop (inclusive, with a relative
    /// slack of 1e-9 step so binary representation of the bounds does not drop
    /// the final point). A zero-width range yields the single start point.
    pub fn positions(&self) -> Vec<f64> {
        if self.stop == self.start {
            return vec![self.start];
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// A validated scenario compiled into library objects.
#[derive(Debug)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub pair: FilteredPair,
    pub mzi: MachZehnder,
    pub sweep: SweepKind,
    pub grid: Grid,
    /// Signal-arm center wavelength, m.
    pub lambda1: f64,
    /// First cavity in either cascade, if any; seeds fits and spacing checks.
    pub cavity: Option<FabryPerotFilter>,
}

impl Scenario {
    /// Interference model for air-gap scans. Cavity-free cascades reduce to
    /// the closed Gaussian form; a single signal-side cavity uses the
    /// roundtrip series; anything else goes through quadrature.
    pub fn scan_model(&self) -> Result<Box<dyn InterferenceModel>> {
        if self.sweep != SweepKind::Scan {
            return Err(domain(format!(
                "scenario '{}' has a [hom] sweep; use the hom command",
                self.name
            )));
        }
        let n_signal = self.pair.signal.fabry_perots().len();
        let n_idler = self.pair.idler.fabry_perots().len();
        Ok(match (n_signal, n_idler) {
            (0, 0) => Box::new(GaussianMz::from_pair(&self.pair, self.mzi)?),
            (1, 0) => Box::new(FpSeriesMz::from_pair(&self.pair, self.mzi)?),
            _ => Box::new(FpQuadratureMz::from_pair(self.pair.clone(), self.mzi)?),
        })
    }

    /// Two-photon overlap model for path-difference sweeps. Requires a
    /// degenerate source with equal arm widths; the overlap integrand is
    /// built around that symmetry.
    pub fn hom_model(&self) -> Result<HomModel> {
        if self.sweep != SweepKind::Hom {
            return Err(domain(format!(
                "scenario '{}' has a [scan] sweep; use the scan command",
                self.name
            )));
        }
        let s = &self.pair.source;
        let rel_center = (s.omega1_0() - 0.5 * s.omega_p()).abs() / s.omega_p();
        if rel_center > 1e-9 {
            return Err(domain(format!(
                "hom sweep needs a degenerate source; signal sits {rel_center:.3e} (relative) off half the pump frequency"
            )));
        }
        let (s1, s2) = (s.sigma_geo1(), s.sigma_geo2());
        if (s1 - s2).abs() > 1e-9 * s1 {
            return Err(domain(format!(
                "hom sweep needs equal geometric widths; got {s1:.6e} and {s2:.6e} rad/s"
            )));
        }
        if self.pair.signal.is_empty() && self.pair.idler.is_empty() {
            HomModel::gaussian(s1)
        } else {
            HomModel::with_chains(s.omega1_0(), s1, self.pair.signal.clone(), self.pair.idler.clone())
        }
    }
}

/// Load by embedded name first, then as a filesystem path.
pub fn load(name_or_path: &str) -> Result<Scenario> {
    if let Some((name, text)) = EMBEDDED.iter().find(|(n, _)| *n == name_or_path) {
        return parse(name, text);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        let text = fs::read_to_string(path)
            .map_err(|e| domain(format!("cannot read scenario {}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| name_or_path.to_string());
        return parse(&name, &text);
    }
    let mut msg = format!("scenario '{name_or_path}' is neither a known name nor an existing file; known names:");
    for n in embedded_names() {
        let _ = write!(msg, " {n}");
    }
    Err(domain(msg))
}

pub fn parse(name: &str, text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text)
        .map_err(|e| domain(format!("scenario '{name}': {e}")))?;
    compile(name, file).map_err(|e| match e {
        Error::Domain(m) => domain(format!("scenario '{name}': {m}")),
        other => other,
    })
}

fn compile(name: &str, file: ScenarioFile) -> Result<Scenario> {
    if file.schema_version != SCHEMA_VERSION {
        return Err(domain(format!(
            "schema_version {} is not supported (this build reads version {SCHEMA_VERSION})",
            file.schema_version
        )));
    }

    let src = &file.source;
    let lambda_p = src.pump_nm * NANOMETER;
    let lambda1 = src.signal_nm * NANOMETER;
    let omega_p = wavelength_to_angular_frequency(lambda_p)?;
    let omega1 = wavelength_to_angular_frequency(lambda1)?;
    if omega1 >= omega_p {
        return Err(domain(format!(
            "signal_nm {} must lie above pump_nm {} (lower frequency)",
            src.signal_nm, src.pump_nm
        )));
    }
    let omega2 = omega_p - omega1;
    // Idler wavelength follows from pump-frequency conservation; when the file
    // states it explicitly the two must agree.
    let lambda2 = 2.0 * std::f64::consts::PI * biphoton::units::SPEED_OF_LIGHT / omega2;
    if let Some(idler_nm) = src.idler_nm {
        let stated = idler_nm * NANOMETER;
        if stated <= 0.0 || !stated.is_finite() {
            return Err(domain(format!("idler_nm must be positive and finite, got {idler_nm}")));
        }
        let lhs = 1.0 / lambda1 + 1.0 / stated;
        let rhs = 1.0 / lambda_p;
        if ((lhs - rhs) / rhs).abs() > 1e-9 {
            return Err(domain(format!(
                "energy conservation violated: 1/signal_nm + 1/idler_nm deviates from 1/pump_nm by {:.3e} (relative); idler consistent with the pump and signal would be {:.6} nm",
                ((lhs - rhs) / rhs).abs(),
                lambda2 / NANOMETER
            )));
        }
    }

    let sigma1 = fwhm_wavelength_to_sigma(src.signal_geometric_fwhm_nm * NANOMETER, lambda1)?;
    let sigma2 = fwhm_wavelength_to_sigma(src.idler_geometric_fwhm_nm * NANOMETER, lambda2)?;
    let source = BiphotonSource::new(omega_p, omega1, sigma1, sigma2)?;

    let signal = build_chain(&file.signal_filters, lambda1, "signal_filters")?;
    let idler = build_chain(&file.idler_filters, lambda2, "idler_filters")?;
    let cavity = signal
        .fabry_perots()
        .first()
        .or(idler.fabry_perots().first())
        .map(|fp| **fp);
    let pair = FilteredPair::new(source, signal, idler);

    let mzi = match &file.mzi {
        None => MachZehnder::balanced(),
        Some(b) => MachZehnder::from_ratio(b.arm_ratio, b.arm_phase_deg.to_radians())?,
    };

    let (sweep, grid) = match (&file.scan, &file.hom) {
        (Some(s), None) => (SweepKind::Scan, Grid::from_block(s, "scan")?),
        (None, Some(h)) => (SweepKind::Hom, Grid::from_block(h, "hom")?),
        (Some(_), Some(_)) => {
            return Err(domain("both [scan] and [hom] present; a scenario holds exactly one sweep".into()))
        }
        (None, None) => {
            return Err(domain("no sweep block; add [scan] or [hom]".into()))
        }
    };

    Ok(Scenario {
        name: name.to_string(),
        description: file.description,
        pair,
        mzi,
        sweep,
        grid,
        lambda1,
        cavity,
    })
}

fn build_chain(blocks: &[FilterBlock], lambda_arm: f64, what: &str) -> Result<FilterChain> {
    let mut chain = FilterChain::empty();
    for (i, b) in blocks.iter().enumerate() {
        let filter = match b {
            FilterBlock::Gaussian { center_nm, fwhm_nm } => {
                let center = center_nm.map_or(lambda_arm, |nm| nm * NANOMETER);
                Filter::Gaussian(
                    GaussianFilter::from_wavelength(center, *fwhm_nm * NANOMETER).map_err(
                        |e| annotate(e, what, i),
                    )?,
                )
            }
            FilterBlock::FabryPerot { l_f_um, finesse, t_max } => Filter::FabryPerot(
                FabryPerotFilter::new(*l_f_um * MICROMETER, *finesse, *t_max)
                    .map_err(|e| annotate(e, what, i))?,
            ),
        };
        chain.push(filter);
    }
    Ok(chain)
}

fn annotate(e: Error, what: &str, index: usize) -> Error {
    match e {
        Error::Domain(m) => domain(format!("{what}[{index}]: {m}")),
        other => other,
    }
}
