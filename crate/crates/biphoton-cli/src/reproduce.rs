//! The reproduce command: rerun a bundled scenario, write its curve CSV, and
//! print a summary table of headline numbers against reference values.

use std::fs;
use std::path::Path;

use biphoton::fitting::{dominant_period, fit_fp_visibility, fit_gaussian_envelope};
use biphoton::mzi::{ScanKind, ScanPoint, ScanSource, VisibilityScan};
use biphoton::units::MICROMETER;
use biphoton::{Error, Result};

use crate::csvio::Table;
use crate::run::{self, FitOptions};
use crate::scenario::{self, Grid, Scenario};

fn domain(msg: String) -> Error {
    Error::Domain(msg)
}

pub fn cmd_reproduce(id: &str, out_dir: &Path) -> Result<i32> {
    fs::create_dir_all(out_dir)
        .map_err(|e| domain(format!("cannot create {}: {e}", out_dir.display())))?;
    match id {
        "fig2" => fig2(out_dir),
        "fig3" => fig3(out_dir),
        "fig4" => fig4(out_dir),
        "fig5" => fig5(out_dir),
        "fig7" => fig7(out_dir),
        "all" => {
            fig2(out_dir)?;
            fig3(out_dir)?;
            fig4(out_dir)?;
            fig5(out_dir)?;
            fig7(out_dir)
        }
        other => Err(domain(format!(
            "unknown reproduce id '{other}'; known: fig2 fig3 fig4 fig5 fig7 all"
        ))),
    }
    .map(|()| 0)
}

struct SummaryRow {
    quantity: String,
    computed: String,
    reference: String,
    deviation: String,
}

impl SummaryRow {
    fn compared(quantity: &str, computed: f64, reference: f64, unit: &str) -> SummaryRow {
        SummaryRow {
            quantity: quantity.to_string(),
            computed: format!("{computed:.4} {unit}"),
            reference: format!("{reference} {unit}"),
            deviation: format!("{:+.2}%", 100.0 * (computed / reference - 1.0)),
        }
    }

    fn noted(quantity: &str, computed: String, reference: &str, deviation: &str) -> SummaryRow {
        SummaryRow {
            quantity: quantity.to_string(),
            computed,
            reference: reference.to_string(),
            deviation: deviation.to_string(),
        }
    }
}

fn print_summary(title: &str, rows: &[SummaryRow]) {
    let headers = ["quantity", "computed", "reference", "deviation"];
    let mut widths = headers.map(str::len);
    for r in rows {
        widths[0] = widths[0].max(r.quantity.len());
        widths[1] = widths[1].max(r.computed.len());
        widths[2] = widths[2].max(r.reference.len());
        widths[3] = widths[3].max(r.deviation.len());
    }
    println!("{title}");
    println!(
        "  {:<w0$}  {:<w1$}  {:<w2$}  {:<w3$}",
        headers[0],
        headers[1],
        headers[2],
        headers[3],
        w0 = widths[0],
        w1 = widths[1],
        w2 = widths[2],
        w3 = widths[3],
    );
    for r in rows {
        println!(
            "  {:<w0$}  {:<w1$}  {:<w2$}  {:<w3$}",
            r.quantity,
            r.computed,
            r.reference,
            r.deviation,
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3],
        );
    }
}

fn announce(sc: &Scenario) {
    match &sc.description {
        Some(d) => println!("{}: {d}", sc.name),
        None => println!("{}", sc.name),
    }
}

fn write_named(table: &Table, out_dir: &Path, name: &str) -> Result<()> {
    let path = out_dir.join(name);
    table.write(Some(&path))?;
    println!("wrote {} ({} rows)", path.display(), table.rows.len());
    Ok(())
}

/// Visibility table column pair as (positions m, visibilities).
fn scan_columns(table: &Table) -> (Vec<f64>, Vec<f64>) {
    let pos = table.rows.iter().map(|r| r[0] * MICROMETER).collect();
    let vis = table.rows.iter().map(|r| r[5]).collect();
    (pos, vis)
}

fn visibility_scan_of(table: &Table) -> Result<VisibilityScan> {
    let points = table
        .rows
        .iter()
        .map(|r| ScanPoint { l_ag: r[0] * MICROMETER, value: r[5], sigma: None })
        .collect();
    VisibilityScan::new(points, ScanKind::Visibility, ScanSource::Computed)
}

/// Full width at half maximum read off a sampled curve by linear
/// interpolation of the two half crossings around the global maximum.
fn half_crossing_width(xs: &[f64], vs: &[f64]) -> Result<f64> {
    let i0 = vs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| domain("empty curve".to_string()))?;
    let half = vs[i0] * 0.5;
    let cross = |mut i: usize, step: isize| -> Result<f64> {
        loop {
            let j = i as isize + step;
            if j < 0 || j as usize >= vs.len() {
                return Err(domain("curve does not fall to half maximum inside the window".to_string()));
            }
            let j = j as usize;
            if vs[j] < half {
                let f = (vs[i] - half) / (vs[i] - vs[j]);
                return Ok(xs[i] + f * (xs[j] - xs[i]));
            }
            i = j;
        }
    };
    Ok(cross(i0, 1)? - cross(i0, -1)?)
}

/// Distance from the global maximum to the half-maximum crossing on its
/// right. A scan of an even curve that starts at the symmetry point doubles
/// this for the full width.
fn half_width_right(xs: &[f64], vs: &[f64]) -> Result<f64> {
    let i0 = vs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| domain("empty curve".to_string()))?;
    let half = vs[i0] * 0.5;
    let mut i = i0;
    while i + 1 < vs.len() {
        if vs[i + 1] < half {
            let f = (vs[i] - half) / (vs[i] - vs[i + 1]);
            return Ok(xs[i] + f * (xs[i + 1] - xs[i]) - xs[i0]);
        }
        i += 1;
    }
    Err(domain("curve does not fall to half maximum inside the window".to_string()))
}

fn fig2(out_dir: &Path) -> Result<()> {
    let cases: [(&str, &str, Option<f64>); 3] = [
        ("fig2_nofilter", "envelope FWHM, 5.3 nm arms", Some(160.0)),
        ("fig2_filter", "envelope FWHM, 1.8 nm filter-only signal", Some(350.0)),
        ("fig2_filter_composed", "envelope FWHM, 1.8 nm filter composed with 5.3 nm", None),
    ];
    let mut rows = Vec::new();
    for (name, label, reference) in cases {
        let sc = scenario::load(name)?;
        announce(&sc);
        let table = run::scan_table(&sc)?;
        write_named(&table, out_dir, &format!("{name}.csv"))?;
        let fit = fit_gaussian_envelope(&visibility_scan_of(&table)?, sc.lambda1)?;
        let fwhm_um = fit.fwhm_airgap / MICROMETER;
        rows.push(match reference {
            Some(r) => SummaryRow::compared(label, fwhm_um, r, "um"),
            None => SummaryRow::noted(label, format!("{fwhm_um:.4} um"), "-", "-"),
        });
    }
    print_summary("fig2 summary", &rows);
    Ok(())
}

fn fig3(out_dir: &Path) -> Result<()> {
    let sc = scenario::load("fig3_fp")?;
    announce(&sc);
    let table = run::scan_table(&sc)?;
    write_named(&table, out_dir, "fig3_fp.csv")?;
    let mut rows = Vec::new();

    let (pos, vis) = scan_columns(&table);
    let period =
        dominant_period(&pos, &vis, 40.0 * MICROMETER, 1000.0 * MICROMETER)? / MICROMETER;
    rows.push(SummaryRow::compared("revival period (2 l_F)", period, 189.72, "um"));

    // Parameter recovery on a noiseless synthetic scan of the same scenario.
    let model = sc.scan_model()?;
    let grid = Grid { start: 0.0, stop: 1200.0 * MICROMETER, step: 4.0 * MICROMETER };
    let scan = biphoton::fitting::generate_synthetic_scan(&*model, &grid.positions(), 0.0, 0)?;
    let opts = FitOptions { model: None, free_finesse: false, fixed_ratio: None };
    let fit = fit_fp_visibility(&scan, &run::fp_config(&sc, &opts)?)?;
    rows.push(SummaryRow::compared(
        "cavity length from synthetic-scan fit",
        fit.l_f / MICROMETER,
        94.86,
        "um",
    ));

    // Depth ordering of the revival pattern near a 1 mm air gap across the
    // three cavity lengths.
    let mut depths = Vec::new();
    for name in ["fig3_fp_9480", "fig3_fp", "fig3_fp_9500"] {
        depths.push(modulation_depth_near_1mm(&scenario::load(name)?)?);
    }
    let ordered = depths[0] > depths[1] && depths[1] > depths[2];
    rows.push(SummaryRow::noted(
        "modulation depth near 1 mm (l_F = 94.80 / 94.86 / 95.00 um)",
        format!("{:.3} > {:.3} > {:.3}", depths[0], depths[1], depths[2]),
        "descending",
        if ordered { "ok" } else { "VIOLATED" },
    ));

    print_summary("fig3 summary", &rows);
    Ok(())
}

/// Peak-to-valley swing of the visibility over [0.85 mm, 1.15 mm], one full
/// revival around the fifth cavity roundtrip.
fn modulation_depth_near_1mm(sc: &Scenario) -> Result<f64> {
    let model = sc.scan_model()?;
    let grid = Grid {
        start: 850.0 * MICROMETER,
        stop: 1150.0 * MICROMETER,
        step: 0.5 * MICROMETER,
    };
    let scan = biphoton::mzi::visibility_scan(&*model, &grid.positions())?;
    let values = scan.values();
    let hi = values.iter().cloned().fold(f64::MIN, f64::max);
    let lo = values.iter().cloned().fold(f64::MAX, f64::min);
    Ok(hi - lo)
}

fn fig4(out_dir: &Path) -> Result<()> {
    let sc = scenario::load("fig3_fp")?;
    announce(&sc);
    let table = run::spectrum_table(&sc, 16.0, 2001)?;
    write_named(&table, out_dir, "fig4_spectrum.csv")?;
    let cavity = sc.cavity.expect("fig3_fp carries a cavity");
    let fsr_nm = cavity.lambda_fsr(sc.lambda1)? / biphoton::units::NANOMETER;
    let rows = [SummaryRow::compared(
        "mode spacing at 826.2 nm (l_F = 94.86 um)",
        fsr_nm,
        3.6,
        "nm",
    )];
    print_summary("fig4 summary", &rows);
    Ok(())
}

fn fig5(out_dir: &Path) -> Result<()> {
    let sc = scenario::load("fig5_fp_plus_filter")?;
    announce(&sc);
    let table = run::scan_table(&sc)?;
    write_named(&table, out_dir, "fig5_fp_plus_filter.csv")?;
    let (pos, vis) = scan_columns(&table);

    // The scan starts at the symmetry point, so only the right half exists.
    let width = 2.0 * half_width_right(&pos, &vis)? / MICROMETER;
    let residual = detrended_modulation(&pos, &vis, 2.0 * sc.cavity.expect("cavity").l_f());
    let rows = [
        SummaryRow::noted(
            "visibility half-maximum full width",
            format!("{width:.1} um"),
            "-",
            "-",
        ),
        SummaryRow::noted(
            "residual revival modulation (one-period detrend)",
            format!("{residual:.1e}"),
            "smooth decay",
            if residual < 0.02 { "ok" } else { "VIOLATED" },
        ),
    ];
    print_summary("fig5 summary", &rows);
    Ok(())
}

/// Largest deviation of the curve from its centered one-period moving
/// average, scored away from the window edges. Revivals of the unfiltered
/// cavity scenario push this to order one half the swing; a smooth decay
/// leaves only curvature residue.
fn detrended_modulation(pos: &[f64], vis: &[f64], period: f64) -> f64 {
    let n = pos.len();
    if n < 3 {
        return 0.0;
    }
    let step = (pos[n - 1] - pos[0]) / (n - 1) as f64;
    let k = ((period / step * 0.5).round() as usize).max(1);
    let mut worst: f64 = 0.0;
    for i in k..n - k {
        if pos[i] < 250.0 * MICROMETER {
            continue;
        }
        let window = &vis[i - k..=i + k];
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        worst = worst.max((vis[i] - mean).abs());
    }
    worst
}

fn fig7(out_dir: &Path) -> Result<()> {
    let sc = scenario::load("fig7_hom")?;
    announce(&sc);
    let table = run::hom_table(&sc)?;
    write_named(&table, out_dir, "fig7_hom.csv")?;
    let pos: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let rho: Vec<f64> = table.rows.iter().map(|r| r[2]).collect();
    let width = half_crossing_width(&pos, &rho)?;
    let rows = [SummaryRow::compared("coincidence dip FWHM", width, 72.0, "um")];
    print_summary("fig7 summary", &rows);
    Ok(())
}
