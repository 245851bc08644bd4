//! Adaptive Gauss–Kronrod (7, 15) integration on finite intervals.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("quadrature did not converge on [{a}, {b}] (estimated error {error:e})")]
    NoConvergence { a: f64, b: f64, error: f64 },
    #[error("integrand is not finite at {0}")]
    NonFinite(f64),
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_SEGMENTS: usize = 4000;

fn gk15<F, E>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<QuadratureError>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        if !f1.is_finite() || !f2.is_finite() {
            return Err(QuadratureError::NonFinite(center - dx).into());
        }
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

/// Integrates `f` over `[a, b]` to absolute tolerance `abs_tol` (or relative
/// tolerance `rel_tol` of the running total, whichever is looser).
///
/// `f` is fallible so that loss evaluation errors propagate unchanged.
pub fn integrate<F, E>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<QuadratureError>,
{
    if a == b {
        return Ok(0.0);
    }
    let (value, error) = gk15(&mut f, a, b)?;
    // Segments kept as (a, b, value, error); bisect the worst one until the
    // total error estimate is small enough.
    let mut segments = vec![(a, b, value, error)];
    let mut total = value;
    let mut total_err = error;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if segments.len() >= MAX_SEGMENTS {
            return Err(QuadratureError::NoConvergence { a, b, error: total_err }.into());
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("segments is never empty");
        let (sa, sb, sv, se) = segments.swap_remove(worst);
        let mid = 0.5 * (sa + sb);
        if mid <= sa || mid >= sb {
            return Err(QuadratureError::NoConvergence { a, b, error: total_err }.into());
        }
        let (lv, le) = gk15(&mut f, sa, mid)?;
        let (rv, re) = gk15(&mut f, mid, sb)?;
        total += lv + rv - sv;
        total_err += le + re - se;
        segments.push((sa, mid, lv, le));
        segments.push((mid, sb, rv, re));
    }
    // Re-sum to shed the drift of the incremental updates.
    Ok(segments.iter().map(|s| s.2).sum())
}

/// Integrates over consecutive pieces `[breaks[i], breaks[i+1]]`.
pub fn integrate_pieces<F, E>(mut f: F, breaks: &[f64], abs_tol: f64, rel_tol: f64) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
    E: From<QuadratureError>,
{
    let mut sum = 0.0;
    for w in breaks.windows(2) {
        sum += integrate(&mut f, w[0], w[1], abs_tol, rel_tol)?;
    }
    Ok(sum)
}
