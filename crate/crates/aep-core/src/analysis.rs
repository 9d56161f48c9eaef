//! Laplace-transform and Tauberian tooling: turning sampled curves into
//! transform values with error bounds, fitting power-law exponents with
//! bootstrap confidence intervals, and converting transform bounds into
//! pointwise bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, replica_rng};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("tail contributes {frac:.2}% at lambda = {lambda} and no tail model was given")]
    TailDominates { lambda: f64, frac: f64 },
    #[error("need >= {min_points} positive points spanning >= one decade")]
    InsufficientSpan { min_points: usize },
    #[error("alpha = {alpha} must be >= beta = {beta}")]
    BadOrder { alpha: f64, beta: f64 },
    #[error("curve grids do not match")]
    GridMismatch,
    #[error("lambda * horizon = {0} < 5 and no tail model was given")]
    HorizonTooShort(f64),
    #[error("curve must be sampled at >= 2 strictly increasing times")]
    DegenerateCurve,
}

/// A curve sampled on `[0, T]` at strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledCurve {
    pub ts: Vec<f64>,
    pub values: Vec<f64>,
}

impl SampledCurve {
    pub fn new(ts: Vec<f64>, values: Vec<f64>) -> Result<Self, AnalysisError> {
        if ts.len() != values.len() || ts.len() < 2 {
            return Err(AnalysisError::DegenerateCurve);
        }
        if ts.windows(2).any(|w| w[1] <= w[0]) || ts[0] < 0.0 {
            return Err(AnalysisError::DegenerateCurve);
        }
        Ok(SampledCurve { ts, values })
    }

    pub fn horizon(&self) -> f64 {
        *self.ts.last().unwrap()
    }
}

/// How to extend a sampled curve beyond its horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailPolicy {
    /// No extension: only valid when `lambda * T >= 5`, and the frozen-value
    /// tail estimate must stay below half of the total.
    None,
    /// Power-law tail `c t^beta` fitted on the last decade of samples.
    FitLastDecade,
    /// Explicit power-law tail `c t^beta`.
    Model { c: f64, beta: f64 },
}

/// A transform value with its error budget.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TransformValue {
    pub value: f64,
    /// Quadrature error estimate plus tail-model sensitivity.
    pub error: f64,
    pub tail_fraction: f64,
}

// 7-point Gauss-Legendre nodes/weights on [-1, 1].
const GL7_NODES: [f64; 7] = [
    -0.9491079123427585,
    -0.7415311855993945,
    -0.4058451513773972,
    0.0,
    0.4058451513773972,
    0.7415311855993945,
    0.9491079123427585,
];
const GL7_WEIGHTS: [f64; 7] = [
    0.1294849661688697,
    0.2797053914892766,
    0.3818300505051189,
    0.4179591836734694,
    0.3818300505051189,
    0.2797053914892766,
    0.1294849661688697,
];
const GL3_NODES: [f64; 3] = [-0.7745966692414834, 0.0, 0.7745966692414834];
const GL3_WEIGHTS: [f64; 3] = [0.5555555555555556, 0.8888888888888888, 0.5555555555555556];

/// Piecewise interpolant between samples: geometric (power-law) when both
/// endpoints are positive and the segment sits at positive times, otherwise
/// linear. Power segments make the quadrature exact on pure power laws.
#[derive(Clone, Copy)]
enum Segment {
    Power { ta: f64, fa: f64, exponent: f64 },
    Linear { ta: f64, tb: f64, fa: f64, fb: f64 },
}

impl Segment {
    fn build(ta: f64, tb: f64, fa: f64, fb: f64) -> Segment {
        if ta > 0.0 && fa > 0.0 && fb > 0.0 {
            let exponent = (fb / fa).ln() / (tb / ta).ln();
            Segment::Power { ta, fa, exponent }
        } else {
            Segment::Linear { ta, tb, fa, fb }
        }
    }

    fn eval(&self, t: f64) -> f64 {
        match *self {
            Segment::Power { ta, fa, exponent } => fa * (t / ta).powf(exponent),
            Segment::Linear { ta, tb, fa, fb } => fa + (fb - fa) * (t - ta) / (tb - ta),
        }
    }
}

fn gauss_segment(lambda: f64, ta: f64, tb: f64, seg: &Segment) -> (f64, f64) {
    let mid = 0.5 * (ta + tb);
    let half = 0.5 * (tb - ta);
    let mut i7 = 0.0;
    for (x, w) in GL7_NODES.iter().zip(&GL7_WEIGHTS) {
        let t = mid + half * x;
        i7 += w * (-lambda * t).exp() * seg.eval(t);
    }
    let mut i3 = 0.0;
    for (x, w) in GL3_NODES.iter().zip(&GL3_WEIGHTS) {
        let t = mid + half * x;
        i3 += w * (-lambda * t).exp() * seg.eval(t);
    }
    (half * i7, half * (i7 - i3).abs())
}

/// Nodes and weights for n-point Gauss-Laguerre quadrature
/// (`int_0^inf e^{-u} f(u) du ~ sum w_i f(u_i)`), by Newton iteration on the
/// Laguerre recurrence.
fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut z = 0.0;
    for i in 0..n {
        // Stroud-Secrest initial guesses.
        z = if i == 0 {
            3.0 / (1.0 + 2.4 * n as f64)
        } else if i == 1 {
            z + 15.0 / (1.0 + 2.5 * n as f64)
        } else {
            z + (1.0 + 2.55 * (i as f64 - 1.0)) / (1.9 * (i as f64 - 1.0)) * (z - nodes[i - 2])
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0 - z) * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            pp = n as f64 * (p1 - p2) / z;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        nodes[i] = z;
        // w = -1 / (n * L'_n(x) L_{n-1}(x)); with the recurrence values:
        let mut p1 = 1.0;
        let mut p2 = 0.0;
        for j in 0..n {
            let p3 = p2;
            p2 = p1;
            p1 = ((2.0 * j as f64 + 1.0 - z) * p2 - j as f64 * p3) / (j as f64 + 1.0);
        }
        weights[i] = -1.0 / (pp * n as f64 * p2);
    }
    (nodes, weights)
}

/// `int_T^inf e^{-lambda t} c t^beta dt` by 30-point Gauss-Laguerre after the
/// substitution `u = lambda (t - T)`.
fn power_tail_integral(lambda: f64, horizon: f64, c: f64, beta: f64) -> f64 {
    let (nodes, weights) = gauss_laguerre(30);
    let mut sum = 0.0;
    for (u, w) in nodes.iter().zip(&weights) {
        sum += w * (horizon + u / lambda).powf(beta);
    }
    c * (-lambda * horizon).exp() / lambda * sum
}

/// Fits `c t^beta` to the last decade of samples by log-log least squares.
pub fn fit_power_tail(curve: &SampledCurve) -> Option<(f64, f64)> {
    let horizon = curve.horizon();
    let lo = horizon / 10.0;
    let pts: Vec<(f64, f64)> = curve
        .ts
        .iter()
        .zip(&curve.values)
        .filter(|&(&t, &v)| t >= lo && t > 0.0 && v > 0.0)
        .map(|(&t, &v)| (t.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let beta = sxy / sxx;
    let c = (my - beta * mx).exp();
    Some((c, beta))
}

/// `int_0^inf e^{-lambda t} f(t) dt` from samples on `[0, T]` plus an
/// analytic tail integral.
///
/// Segments between samples are integrated with 7-point Gauss-Legendre on a
/// power-law (or linear) interpolant; the head `[0, t_0]` extends the first
/// segment. The reported error adds the quadrature estimate and the
/// sensitivity of the tail to shifting its exponent by +-0.1.
pub fn laplace_transform(
    curve: &SampledCurve,
    tail: TailPolicy,
    lambda: f64,
) -> Result<TransformValue, AnalysisError> {
    assert!(lambda > 0.0, "lambda must be positive");
    let horizon = curve.horizon();
    let mut value = 0.0;
    let mut quad_err = 0.0;

    // Head: constant extension of the first sample down to t = 0,
    // integrated exactly. Unlike a fitted extrapolation this is monotone in
    // the data; half the rectangle is charged as shape uncertainty.
    if curve.ts[0] > 0.0 {
        let t0 = curve.ts[0];
        let f0 = curve.values[0];
        value += f0 * (-(-lambda * t0).exp_m1()) / lambda;
        quad_err += 0.5 * t0 * f0.abs();
    }

    for i in 0..curve.ts.len() - 1 {
        let (ta, tb) = (curve.ts[i], curve.ts[i + 1]);
        let seg = Segment::build(ta, tb, curve.values[i], curve.values[i + 1]);
        let (v, e) = gauss_segment(lambda, ta, tb, &seg);
        value += v;
        quad_err += e;
    }

    let (tail_value, tail_err) = match tail {
        TailPolicy::None => {
            if lambda * horizon < 5.0 {
                return Err(AnalysisError::HorizonTooShort(lambda * horizon));
            }
            // Frozen-value estimate: |f(T)| e^{-lambda T} / lambda.
            let est = curve.values.last().unwrap().abs() * (-lambda * horizon).exp() / lambda;
            if est > 0.5 * (value.abs() + est) {
                return Err(AnalysisError::TailDominates {
                    lambda,
                    frac: 100.0 * est / (value.abs() + est),
                });
            }
            (0.0, est)
        }
        TailPolicy::FitLastDecade => {
            let (c, beta) = fit_power_tail(curve).ok_or(AnalysisError::DegenerateCurve)?;
            tail_with_sensitivity(lambda, horizon, c, beta)
        }
        TailPolicy::Model { c, beta } => tail_with_sensitivity(lambda, horizon, c, beta),
    };
    let total = value + tail_value;
    let tail_fraction = if total != 0.0 { tail_value / total } else { 0.0 };
    Ok(TransformValue { value: total, error: quad_err + tail_err, tail_fraction })
}

fn tail_with_sensitivity(lambda: f64, horizon: f64, c: f64, beta: f64) -> (f64, f64) {
    let v = power_tail_integral(lambda, horizon, c, beta);
    let up = power_tail_integral(lambda, horizon, c, beta + 0.1);
    let dn = power_tail_integral(lambda, horizon, c, beta - 0.1);
    (v, 0.5 * (up - dn).abs())
}

/// Weighted log-log least-squares fit with a bootstrap confidence interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% bootstrap percentile interval for the slope.
    pub ci: (f64, f64),
    pub n: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Fits `y ~ exp(intercept) x^slope` by weighted least squares on the
/// log-log scale. Points need `x, y > 0`; requires >= 4 points spanning at
/// least one decade in `x`.
pub fn exponent_fit(
    xs: &[f64],
    ys: &[f64],
    weights: Option<&[f64]>,
) -> Result<ExponentFit, AnalysisError> {
    let min_points = 4;
    let pts: Vec<(f64, f64, f64)> = xs
        .iter()
        .zip(ys)
        .enumerate()
        .filter(|&(_, (&x, &y))| x > 0.0 && y > 0.0)
        .map(|(i, (&x, &y))| (x.ln(), y.ln(), weights.map_or(1.0, |w| w[i])))
        .collect();
    if pts.len() < min_points {
        return Err(AnalysisError::InsufficientSpan { min_points });
    }
    let span = pts.iter().map(|p| p.0).fold(f64::MIN, f64::max)
        - pts.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    // Slack for grids hitting exactly one decade up to rounding.
    if span < std::f64::consts::LN_10 * 0.999 {
        return Err(AnalysisError::InsufficientSpan { min_points });
    }
    let (slope, intercept) = wls(&pts).ok_or(AnalysisError::InsufficientSpan { min_points })?;

    let mut rng = replica_rng(derive_seed(0x626f6f74, "exponent-fit-bootstrap"), 0);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut resample = Vec::with_capacity(pts.len());
    for _ in 0..BOOTSTRAP_RESAMPLES {
        resample.clear();
        for _ in 0..pts.len() {
            resample.push(pts[rng.gen_range(0..pts.len())]);
        }
        if let Some((s, _)) = wls(&resample) {
            slopes.push(s);
        }
    }
    slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ci = if slopes.is_empty() {
        (slope, slope)
    } else {
        let lo = slopes[(0.025 * (slopes.len() - 1) as f64).round() as usize];
        let hi = slopes[(0.975 * (slopes.len() - 1) as f64).round() as usize];
        (lo, hi)
    };
    Ok(ExponentFit { slope, intercept, ci, n: pts.len() })
}

fn wls(pts: &[(f64, f64, f64)]) -> Option<(f64, f64)> {
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    if sw <= 0.0 {
        return None;
    }
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.0 - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Pointwise upper bound derived from a transform upper bound: if
/// `int e^{-lambda t} v(t) dt <= c1 lambda^{-(1+beta)}` for
/// `lambda < lambda0` and `v` is nondecreasing, then `v(t) <= e c1 t^beta`
/// for `t > 1/lambda0` (the proof's inequality `e^{-1} v(t) <= c1 t^beta`).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UpperBound {
    pub c2: f64,
    pub t0: f64,
    pub beta: f64,
}

pub fn tauberian_upper(c1: f64, beta: f64, lambda0: f64) -> UpperBound {
    assert!(c1 > 0.0 && lambda0 > 0.0, "inputs must be positive");
    UpperBound { c2: std::f64::consts::E * c1, t0: 1.0 / lambda0, beta }
}

/// Functional form of a Tauberian pointwise lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LowerBoundForm {
    /// `c4 t^beta` (case alpha = beta).
    PowerLaw,
    /// `c4 t^beta (log t)^{-(1+beta)}` (case alpha > beta).
    PowerLawLogCorrected,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LowerBound {
    pub form: LowerBoundForm,
    pub c4: f64,
    pub t1: f64,
    pub beta: f64,
    /// The constant `c` in the prescribed `lambda = (1 + (alpha - beta)
    /// (log t + c log log t)) / t`.
    pub loglog_c: f64,
}

impl LowerBound {
    /// Evaluates the bound envelope at `t` (valid for `t > t1`).
    pub fn eval(&self, t: f64) -> f64 {
        match self.form {
            LowerBoundForm::PowerLaw => self.c4 * t.powf(self.beta),
            LowerBoundForm::PowerLawLogCorrected => {
                self.c4 * t.powf(self.beta) * t.ln().powf(-(1.0 + self.beta))
            }
        }
    }
}

/// Pointwise lower bound traced from a transform lower bound
/// `int e^{-lambda t} v(t) dt >= c3 lambda^{-(1+beta)}` combined with the
/// pointwise upper bound `v(t) <= c2 t^alpha`:
/// splitting the integral at `t` gives
/// `c3 lambda^{-(1+beta)} <= t v(t) + c2' lambda^{-1} e^{-lambda t} t^alpha`
/// with `c2' = c2 2^alpha (1 + Gamma(alpha + 1))`, and evaluating at the
/// prescribed `lambda(t)` yields `v(t) >= c4 t^beta` when `alpha = beta` and
/// `v(t) >= c4 t^beta (log t)^{-(1+beta)}` when `alpha > beta`.
pub fn tauberian_lower(
    c2: f64,
    c3: f64,
    alpha: f64,
    beta: f64,
    loglog_c: f64,
) -> Result<LowerBound, AnalysisError> {
    assert!(c2 > 0.0 && c3 > 0.0 && beta > 0.0, "constants must be positive");
    if alpha < beta {
        return Err(AnalysisError::BadOrder { alpha, beta });
    }
    let c2p = c2 * 2f64.powf(alpha) * (1.0 + statrs::function::gamma::gamma(alpha + 1.0));
    if alpha == beta {
        // lambda = 1/t: both sides scale as t^{1+beta} and the ratio is
        // constant, so c4 = c3 - c2'/e exactly.
        let c4 = c3 - c2p / std::f64::consts::E;
        return Ok(LowerBound {
            form: LowerBoundForm::PowerLaw,
            c4,
            t1: std::f64::consts::E,
            beta,
            loglog_c,
        });
    }
    // alpha > beta: evaluate the traced inequality on a log grid and take the
    // smallest envelope ratio once it turns positive.
    let lambda_of = |t: f64| (1.0 + (alpha - beta) * (t.ln() + loglog_c * t.ln().ln())) / t;
    let traced = |t: f64| {
        let l = lambda_of(t);
        (c3 * l.powf(-(1.0 + beta)) - c2p * (-l * t).exp() * t.powf(alpha) / l) / t
    };
    let envelope = |t: f64| t.powf(beta) * t.ln().powf(-(1.0 + beta));
    let mut t1 = f64::NAN;
    let mut c4 = f64::INFINITY;
    let mut t = std::f64::consts::E * std::f64::consts::E;
    for _ in 0..240 {
        let ratio = traced(t) / envelope(t);
        if ratio > 0.0 {
            if t1.is_nan() {
                t1 = t;
            }
            c4 = c4.min(ratio);
        } else {
            // Bound not yet positive; restart the validity window.
            t1 = f64::NAN;
            c4 = f64::INFINITY;
        }
        t *= 1.2;
        if !t.is_finite() {
            break;
        }
    }
    if t1.is_nan() || !c4.is_finite() {
        // The traced constants never produce a positive bound at any probed
        // scale; report an empty bound honestly.
        t1 = f64::INFINITY;
        c4 = 0.0;
    }
    Ok(LowerBound { form: LowerBoundForm::PowerLawLogCorrected, c4, t1, beta, loglog_c })
}

/// Verdict report comparing a law's transform growth against the reference
/// totally asymmetric curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeakSenseReport {
    pub lambdas: Vec<f64>,
    pub transform_law: Vec<f64>,
    pub transform_reference: Vec<f64>,
    pub ratio: Vec<f64>,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub exponent_law: f64,
    pub exponent_reference: f64,
    pub exponent_fit_lambdas: (f64, f64),
    pub pass_ratio_band: bool,
    pub pass_exponent_band: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictConfig {
    /// Full lambda grid for the ratio curve.
    pub lambdas: Vec<f64>,
    /// Sub-range of lambdas used for the exponent fit.
    pub fit_range: (f64, f64),
    /// Acceptance band for the reference transform exponent.
    pub exponent_band: (f64, f64),
    /// Acceptance band for the transform ratio across the grid.
    pub ratio_band: (f64, f64),
}

impl VerdictConfig {
    /// Grid `[1/T, 1]` at eight points per decade, fitting on
    /// `[5/T, 0.05]`, with the bands used by the acceptance suite.
    pub fn for_horizon(horizon: f64) -> Self {
        let lo = (1.0 / horizon).ln();
        let hi = 0.0; // ln(1)
        let decades = (hi - lo) / std::f64::consts::LN_10;
        let n = (8.0 * decades).ceil() as usize;
        let lambdas: Vec<f64> =
            (0..=n).map(|i| (lo + (hi - lo) * i as f64 / n as f64).exp()).collect();
        // Fit where the transform is horizon-safe (lambda T >= 5) over at
        // least a decade of grid points.
        let fit_lo = 5.0 / horizon;
        let fit_hi = (80.0 / horizon).max(0.06).min(1.0);
        VerdictConfig {
            lambdas,
            fit_range: (fit_lo, fit_hi),
            exponent_band: (-2.45, -2.25),
            ratio_band: (0.2, 5.0),
        }
    }
}

/// Compares transforms of `t D(t)` for a law and the reference curve on
/// matching time grids: fits the transform exponents, forms the ratio curve
/// across lambda, and checks both against the configured bands.
pub fn weak_sense_verdict(
    ts: &[f64],
    d_law: &[f64],
    d_reference: &[f64],
    cfg: &VerdictConfig,
) -> Result<WeakSenseReport, AnalysisError> {
    if d_law.len() != ts.len() || d_reference.len() != ts.len() {
        return Err(AnalysisError::GridMismatch);
    }
    let td_law = SampledCurve::new(
        ts.to_vec(),
        ts.iter().zip(d_law).map(|(&t, &d)| t * d).collect(),
    )?;
    let td_ref = SampledCurve::new(
        ts.to_vec(),
        ts.iter().zip(d_reference).map(|(&t, &d)| t * d).collect(),
    )?;
    let mut transform_law = Vec::with_capacity(cfg.lambdas.len());
    let mut transform_ref = Vec::with_capacity(cfg.lambdas.len());
    let mut ratio = Vec::with_capacity(cfg.lambdas.len());
    for &l in &cfg.lambdas {
        let a = laplace_transform(&td_law, TailPolicy::FitLastDecade, l)?.value;
        let b = laplace_transform(&td_ref, TailPolicy::FitLastDecade, l)?.value;
        transform_law.push(a);
        transform_ref.push(b);
        ratio.push(a / b);
    }
    let ratio_min = ratio.iter().cloned().fold(f64::MAX, f64::min);
    let ratio_max = ratio.iter().cloned().fold(f64::MIN, f64::max);

    let in_fit: Vec<usize> = cfg
        .lambdas
        .iter()
        .enumerate()
        .filter(|&(_, &l)| l >= cfg.fit_range.0 && l <= cfg.fit_range.1)
        .map(|(i, _)| i)
        .collect();
    let fit_xs: Vec<f64> = in_fit.iter().map(|&i| cfg.lambdas[i]).collect();
    let fit_law: Vec<f64> = in_fit.iter().map(|&i| transform_law[i]).collect();
    let fit_ref: Vec<f64> = in_fit.iter().map(|&i| transform_ref[i]).collect();
    let exp_law = exponent_fit(&fit_xs, &fit_law, None)?.slope;
    let exp_ref = exponent_fit(&fit_xs, &fit_ref, None)?.slope;

    Ok(WeakSenseReport {
        lambdas: cfg.lambdas.clone(),
        transform_law,
        transform_reference: transform_ref,
        ratio,
        ratio_min,
        ratio_max,
        exponent_law: exp_law,
        exponent_reference: exp_ref,
        exponent_fit_lambdas: cfg.fit_range,
        pass_ratio_band: ratio_min >= cfg.ratio_band.0 && ratio_max <= cfg.ratio_band.1,
        pass_exponent_band: exp_ref >= cfg.exponent_band.0 && exp_ref <= cfg.exponent_band.1,
    })
}
