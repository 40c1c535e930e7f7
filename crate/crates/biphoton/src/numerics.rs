//! Shared numerical machinery: adaptive Gauss-Kronrod quadrature over complex
//! integrands and golden-section extremum refinement.

use crate::error::{numeric, Result};
use num_complex::Complex64;

// 15-point Kronrod rule with embedded 7-point Gauss rule. Positive abscissae
// in decreasing order; even indices are Kronrod-only nodes, odd indices carry
// both rules, the last entry is the midpoint.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

struct PanelEstimate {
    value: Complex64,
    error: f64,
}

/// One 15-point Kronrod evaluation over [a, b] with the usual QUADPACK-style
/// error estimate sharpening.
fn gk15(f: &mut dyn FnMut(f64) -> Result<Complex64>, a: f64, b: f64) -> Result<PanelEstimate> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);

    let mut values = [Complex64::new(0.0, 0.0); 15];
    let fc = f(center)?;
    values[14] = fc;
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = WGK[7] * fc.norm();

    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        values[2 * j] = f1;
        values[2 * j + 1] = f2;
        let sum = f1 + f2;
        resk += WGK[j] * sum;
        resabs += WGK[j] * (f1.norm() + f2.norm());
        if j % 2 == 1 {
            resg += WG[j / 2] * sum;
        }
    }

    let reskh = resk * 0.5;
    let mut resasc = WGK[7] * (fc - reskh).norm();
    for j in 0..7 {
        resasc += WGK[j] * ((values[2 * j] - reskh).norm() + (values[2 * j + 1] - reskh).norm());
    }

    let value = resk * half;
    if !value.re.is_finite() || !value.im.is_finite() {
        return Err(numeric(format!(
            "integrand produced a non-finite value on [{a:e}, {b:e}]"
        )));
    }
    resabs *= half.abs();
    resasc *= half.abs();
    let mut error = ((resk - resg) * half).norm();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    let tiny = f64::MIN_POSITIVE / (50.0 * f64::EPSILON);
    if resabs > tiny {
        error = error.max(50.0 * f64::EPSILON * resabs);
    }
    Ok(PanelEstimate { value, error })
}

struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

/// Adaptive quadrature of a complex-valued integrand over [a, b].
///
/// `breakpoints` marks interior locations of sharp structure (cavity
/// resonances); the initial subdivision is cut there so no panel straddles
/// one. Refinement stops when the summed error estimate drops below
/// max(rel_tol * |integral|, abs_tol). The panel budget bounds work on
/// hostile integrands; exhausting it is an error, not a silent return.
pub fn integrate(
    f: &mut dyn FnMut(f64) -> Result<Complex64>,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<Complex64> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(numeric(format!("bad integration interval [{a:e}, {b:e}]")));
    }

    let mut edges: Vec<f64> = Vec::with_capacity(breakpoints.len() + 2);
    edges.push(a);
    for &x in breakpoints {
        if x > a && x < b {
            edges.push(x);
        }
    }
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup();

    let mut panels: Vec<Panel> = Vec::new();
    for pair in edges.windows(2) {
        let est = gk15(f, pair[0], pair[1])?;
        panels.push(Panel { a: pair[0], b: pair[1], value: est.value, error: est.error });
    }

    loop {
        let mut total = Complex64::new(0.0, 0.0);
        let mut err_sum = 0.0;
        for p in &panels {
            total += p.value;
            err_sum += p.error;
        }
        if err_sum <= (rel_tol * total.norm()).max(abs_tol) {
            // Re-sum in positional order so the result does not depend on the
            // refinement history encoded in panel ordering.
            panels.sort_by(|x, y| x.a.total_cmp(&y.a));
            let mut v = Complex64::new(0.0, 0.0);
            for p in &panels {
                v += p.value;
            }
            return Ok(v);
        }
        if panels.len() >= max_panels {
            return Err(numeric(format!(
                "quadrature did not converge: {} panels, error estimate {:.3e} \
                 against target {:.3e} on [{:e}, {:e}]",
                panels.len(),
                err_sum,
                (rel_tol * total.norm()).max(abs_tol),
                a,
                b
            )));
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("panel list is non-empty");
        let Panel { a: pa, b: pb, .. } = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            return Err(numeric(format!(
                "quadrature panel [{pa:e}, {pb:e}] cannot be split further"
            )));
        }
        let left = gk15(f, pa, mid)?;
        let right = gk15(f, mid, pb)?;
        panels.push(Panel { a: pa, b: mid, value: left.value, error: left.error });
        panels.push(Panel { a: mid, b: pb, value: right.value, error: right.error });
    }
}

/// Convenience wrapper for real integrands.
pub fn integrate_real(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<f64> {
    let mut g = |x: f64| f(x).map(|v| Complex64::new(v, 0.0));
    Ok(integrate(&mut g, a, b, breakpoints, rel_tol, abs_tol, max_panels)?.re)
}

/// Golden-section search for the maximum of a unimodal function on [a, b].
/// Returns the best abscissa/value pair seen, which includes the bracket
/// endpoints, so a maximum sitting on the boundary is still reported.
pub fn golden_section_max(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    a: f64,
    b: f64,
    xtol: f64,
) -> Result<(f64, f64)> {
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (a, b);
    let mut best_x = lo;
    let mut best_f = f(lo)?;
    let fb = f(hi)?;
    if fb > best_f {
        best_x = hi;
        best_f = fb;
    }

    let mut x1 = hi - INVPHI * (hi - lo);
    let mut x2 = lo + INVPHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while hi - lo > xtol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INVPHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INVPHI * (hi - lo);
            f2 = f(x2)?;
        }
        let (xc, fc) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
        if fc > best_f {
            best_x = xc;
            best_f = fc;
        }
    }
    Ok((best_x, best_f))
}

/// Golden-section search for the minimum of a unimodal function on [a, b].
pub fn golden_section_min(
    f: &mut dyn FnMut(f64) -> Result<f64>,
    a: f64,
    b: f64,
    xtol: f64,
) -> Result<(f64, f64)> {
    let mut neg = |x: f64| f(x).map(|v| -v);
    let (x, fv) = golden_section_max(&mut neg, a, b, xtol)?;
    Ok((x, -fv))
}
