//! Estimators, fits and budget arithmetic.

use serde::{Deserialize, Serialize};

use crate::photonics::{ClickRecord, Detector, Herald, SpinBasis, SpinResult};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AnalysisError {
    #[error("dataset has no usable records")]
    EmptyDataset,
    #[error("likelihood is flat: every recorded phase sits on a zero of the model")]
    Unidentifiable,
    #[error("readout fidelities sum to {0}, correction needs a sum above 1")]
    NonInvertibleReadout(f64),
    #[error("ellipse is degenerate (points are collinear)")]
    DegenerateEllipse,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut c = hi - GOLDEN * (hi - lo);
    let mut d = lo + GOLDEN * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - GOLDEN * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + GOLDEN * (hi - lo);
            fd = f(d);
        }
    }
    // Boundary maxima are common for visibilities near ±1.
    let mid = 0.5 * (lo + hi);
    [mid, lo, hi].into_iter().fold(mid, |best, x| if f(x) > f(best) { x } else { best })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VisibilityEstimate {
    pub alpha: f64,
    pub sigma: f64,
    pub n: usize,
}

/// Correlation sign of one central-bin click: detector 1 ↔ +1, spin up ↔ +1.
pub fn correlation_sign(record: &ClickRecord) -> Option<f64> {
    let d = match record.herald {
        Herald::CentralBin(Detector::One) => 1.0,
        Herald::CentralBin(Detector::Two) => -1.0,
        _ => return None,
    };
    Some(d * record.spin_result.sign())
}

/// `(sign, model coefficient)` pairs for one basis.
fn visibility_terms(records: &[ClickRecord], basis: SpinBasis, offset: f64) -> Result<Vec<(f64, f64)>, AnalysisError> {
    let trig: fn(f64) -> f64 = match basis {
        SpinBasis::X => f64::cos,
        SpinBasis::Y => f64::sin,
        SpinBasis::Z => return Err(AnalysisError::InvalidInput("visibility fit needs basis X or Y".into())),
    };
    Ok(records
        .iter()
        .filter(|r| r.spin_basis == basis)
        .filter_map(|r| correlation_sign(r).map(|s| (s, trig(r.phi_at_attempt + offset))))
        .collect())
}

pub fn log_likelihood(terms: &[(f64, f64)], alpha: f64) -> f64 {
    terms.iter().map(|&(s, c)| (0.5 * (1.0 + alpha * s * c)).max(1e-300).ln()).sum()
}

/// Maximum-likelihood visibility from central-bin clicks in basis X or Y.
pub fn estimate_visibility(records: &[ClickRecord], basis: SpinBasis) -> Result<VisibilityEstimate, AnalysisError> {
    estimate_visibility_with_offset(records, basis, 0.0)
}

/// As [`estimate_visibility`] with the model phase shifted by `offset`.
pub fn estimate_visibility_with_offset(
    records: &[ClickRecord],
    basis: SpinBasis,
    offset: f64,
) -> Result<VisibilityEstimate, AnalysisError> {
    let terms = visibility_terms(records, basis, offset)?;
    estimate_from_terms(&terms)
}

pub fn estimate_from_terms(terms: &[(f64, f64)]) -> Result<VisibilityEstimate, AnalysisError> {
    if terms.is_empty() {
        return Err(AnalysisError::EmptyDataset);
    }
    if terms.iter().all(|&(_, c)| c.abs() < 1e-12) {
        return Err(AnalysisError::Unidentifiable);
    }
    let alpha = golden_max(|a| log_likelihood(terms, a), -1.0, 1.0, 1e-6);
    // Curvature at the optimum, pulled inside the boundary where it diverges.
    let a = alpha.clamp(-0.999, 0.999);
    let info: f64 = terms
        .iter()
        .map(|&(s, c)| {
            let g = s * c;
            g * g / (1.0 + a * g).powi(2)
        })
        .sum();
    let sigma = if info > 0.0 { 1.0 / info.sqrt() } else { f64::INFINITY };
    Ok(VisibilityEstimate { alpha, sigma, n: terms.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corrected {
    pub value: f64,
    pub clamped: bool,
}

pub fn correct_readout(contrast: f64, f_up: f64, f_down: f64) -> Result<Corrected, AnalysisError> {
    let d = f_up + f_down - 1.0;
    if d <= 0.0 {
        return Err(AnalysisError::NonInvertibleReadout(f_up + f_down));
    }
    let v = contrast / d;
    Ok(Corrected { value: v.clamp(-1.0, 1.0), clamped: v.abs() > 1.0 })
}

pub fn fidelity(e_x: f64, e_y: f64, e_z: f64) -> f64 {
    (1.0 + e_x + e_y + e_z) / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZContrast {
    /// `P(up | late) − P(up | early)`.
    pub contrast: f64,
    pub sigma: f64,
    pub n_early: usize,
    pub n_late: usize,
}

/// Z-basis correlation from early/late heralds.
pub fn estimate_z_contrast(records: &[ClickRecord]) -> Result<ZContrast, AnalysisError> {
    let (mut ne, mut ue, mut nl, mut ul) = (0usize, 0usize, 0usize, 0usize);
    for r in records.iter().filter(|r| r.spin_basis == SpinBasis::Z) {
        let up = (r.spin_result == SpinResult::Up) as usize;
        match r.herald {
            Herald::EarlyBin => {
                ne += 1;
                ue += up;
            }
            Herald::LateBin => {
                nl += 1;
                ul += up;
            }
            _ => {}
        }
    }
    if ne == 0 || nl == 0 {
        return Err(AnalysisError::EmptyDataset);
    }
    let pe = ue as f64 / ne as f64;
    let pl = ul as f64 / nl as f64;
    let sigma = (pe * (1.0 - pe) / ne as f64 + pl * (1.0 - pl) / nl as f64).sqrt();
    Ok(ZContrast { contrast: pl - pe, sigma, n_early: ne, n_late: nl })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasisResult {
    pub raw: f64,
    pub raw_sigma: f64,
    pub corrected: f64,
    pub corrected_sigma: f64,
    pub clamped: bool,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetAnalysis {
    pub x: BasisResult,
    pub y: BasisResult,
    pub z: BasisResult,
    pub fidelity: f64,
    pub fidelity_sigma: f64,
}

/// Visibilities in all three bases, readout-corrected, and the fidelity.
pub fn analyze_dataset(
    records: &[ClickRecord],
    f_up: f64,
    f_down: f64,
    phase_offset: f64,
) -> Result<DatasetAnalysis, AnalysisError> {
    let d = f_up + f_down - 1.0;
    let basis = |raw: f64, sigma: f64, n: usize| -> Result<BasisResult, AnalysisError> {
        let c = correct_readout(raw, f_up, f_down)?;
        Ok(BasisResult { raw, raw_sigma: sigma, corrected: c.value, corrected_sigma: sigma / d, clamped: c.clamped, n })
    };
    let vx = estimate_visibility_with_offset(records, SpinBasis::X, phase_offset)?;
    let vy = estimate_visibility_with_offset(records, SpinBasis::Y, phase_offset)?;
    let z = estimate_z_contrast(records)?;
    let x = basis(vx.alpha, vx.sigma, vx.n)?;
    let y = basis(vy.alpha, vy.sigma, vy.n)?;
    let z = basis(z.contrast, z.sigma, z.n_early + z.n_late)?;
    let fid = fidelity(x.corrected, y.corrected, z.corrected);
    let fid_sigma = 0.25 * (x.corrected_sigma.powi(2) + y.corrected_sigma.powi(2) + z.corrected_sigma.powi(2)).sqrt();
    Ok(DatasetAnalysis { x, y, z, fidelity: fid, fidelity_sigma: fid_sigma })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParityBin {
    pub phi_center: f64,
    pub parity: f64,
    pub sigma: f64,
    pub n: usize,
}

/// Mean correlation sign in `n_bins` equal phase bins over `[0, 2π)`.
pub fn parity_curve(records: &[ClickRecord], basis: SpinBasis, n_bins: usize, offset: f64) -> Vec<ParityBin> {
    let tau = std::f64::consts::TAU;
    let mut sums = vec![(0.0f64, 0usize); n_bins];
    for r in records.iter().filter(|r| r.spin_basis == basis) {
        if let Some(s) = correlation_sign(r) {
            let phi = (r.phi_at_attempt + offset).rem_euclid(tau);
            let k = ((phi / tau * n_bins as f64) as usize).min(n_bins - 1);
            sums[k].0 += s;
            sums[k].1 += 1;
        }
    }
    sums.iter()
        .enumerate()
        .map(|(k, &(s, n))| {
            let p = if n > 0 { s / n as f64 } else { f64::NAN };
            let sigma = if n > 0 { ((1.0 - p * p).max(0.0) / n as f64).sqrt() } else { f64::NAN };
            ParityBin { phi_center: (k as f64 + 0.5) * tau / n_bins as f64, parity: p, sigma, n }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipseFit {
    /// Channel phase difference; positive unless a prior selects the other sign.
    pub delta_phi: f64,
    /// Per-point phase in `(0, 2π]`.
    pub phases: Vec<f64>,
}

fn normalize_channel(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span <= 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| 2.0 * (x - lo) / span - 1.0).collect()
}

/// Fits `APD₁ = cos φ`, `APD₂ = cos(φ + δφ)` after min/max scaling.
pub fn fit_ellipse(points: &[(f64, f64)]) -> Result<EllipseFit, AnalysisError> {
    fit_ellipse_tracked(points, None)
}

/// As [`fit_ellipse`]; `previous` picks the sign of δφ closest to an earlier fit.
pub fn fit_ellipse_tracked(points: &[(f64, f64)], previous: Option<f64>) -> Result<EllipseFit, AnalysisError> {
    if points.len() < 10 {
        return Err(AnalysisError::TooFewPoints { needed: 10, got: points.len() });
    }
    if points.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(AnalysisError::InvalidInput("non-finite APD value".into()));
    }
    let xs = normalize_channel(&points.iter().map(|p| p.0).collect::<Vec<_>>());
    let ys = normalize_channel(&points.iter().map(|p| p.1).collect::<Vec<_>>());
    // x² + y² = 2c·xy + k, linear in (c, k).
    let (mut suu, mut su, mut n, mut suz, mut sz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        let u = 2.0 * x * y;
        let z = x * x + y * y;
        suu += u * u;
        su += u;
        n += 1.0;
        suz += u * z;
        sz += z;
    }
    let det = suu * n - su * su;
    if det.abs() < 1e-12 * n * n {
        return Err(AnalysisError::DegenerateEllipse);
    }
    let c = (suz * n - su * sz) / det;
    if !c.is_finite() || c.abs() > 1.0 - 1e-6 {
        return Err(AnalysisError::DegenerateEllipse);
    }
    let mut delta = c.acos();
    if let Some(prev) = previous {
        if (prev - (-delta)).abs() < (prev - delta).abs() {
            delta = -delta;
        }
    }
    let s = delta.sin();
    let tau = std::f64::consts::TAU;
    let phases = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let p = ((x * c - y) / s).atan2(x).rem_euclid(tau);
            if p == 0.0 {
                tau
            } else {
                p
            }
        })
        .collect();
    Ok(EllipseFit { delta_phi: delta, phases })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub t_d: f64,
    pub sigma_omega: f64,
    /// No resolvable decay: `t_d` is at the search ceiling.
    pub flat: bool,
}

/// Least squares on `e^{−(τ/T_d)²}`.
pub fn fit_gaussian_decay(samples: &[(f64, f64)]) -> Result<DecayFit, AnalysisError> {
    if samples.len() < 2 {
        return Err(AnalysisError::TooFewPoints { needed: 2, got: samples.len() });
    }
    let tmax = samples.iter().map(|s| s.0.abs()).fold(0.0, f64::max);
    if !(tmax > 0.0 && tmax.is_finite()) {
        return Err(AnalysisError::InvalidInput("need at least one positive delay".into()));
    }
    let sse = |log_t: f64| -> f64 {
        let t = log_t.exp();
        samples.iter().map(|&(tau, c)| (c - (-(tau / t).powi(2)).exp()).powi(2)).sum::<f64>()
    };
    let (lo, hi) = ((tmax * 1e-3).ln(), (tmax * 1e4).ln());
    // Coarse scan first; the loss has a flat plateau at large T_d.
    let grid: Vec<f64> = (0..=200).map(|i| lo + (hi - lo) * i as f64 / 200.0).collect();
    let best = grid.iter().cloned().fold(lo, |b, x| if sse(x) < sse(b) { x } else { b });
    let step = (hi - lo) / 200.0;
    let log_t = golden_max(|x| -sse(x), (best - step).max(lo), (best + step).min(hi), 1e-9);
    let flat = log_t >= hi - 2.0 * step;
    let t_d = if flat { f64::INFINITY } else { log_t.exp() };
    Ok(DecayFit { t_d, sigma_omega: std::f64::consts::SQRT_2 / t_d, flat })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit {
    /// Exponent of the saturating model.
    pub beta: f64,
    pub k: f64,
    pub sigma_sat: f64,
    /// Log-log slope over the points below a quarter of `sigma_sat`.
    pub beta_presat: f64,
    pub flat: bool,
}

fn saturating(x: f64, log_k: f64, beta: f64, log_sat: f64) -> f64 {
    let sat = log_sat.exp();
    let s = (log_k + beta * x.ln()).exp() / sat;
    sat * s / (1.0 + s * s).sqrt()
}

fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for (i, o) in out.iter_mut().enumerate() {
        let mut m = a;
        for r in 0..3 {
            m[r][i] = b[r];
        }
        *o = det(m) / d;
    }
    Some(out)
}

/// Fits `σ = σ_sat·S/√(1+S²)` with `S = k·x^β/σ_sat` in log space.
pub fn fit_power_law_saturating(samples: &[(f64, f64)]) -> Result<PowerLawFit, AnalysisError> {
    if samples.iter().any(|&(x, _)| !(x > 0.0)) {
        return Err(AnalysisError::InvalidInput("abscissae must be positive".into()));
    }
    let pts: Vec<(f64, f64)> = samples.iter().filter(|s| s.1 > 0.0).cloned().collect();
    if pts.len() < samples.len() / 2 || pts.len() < 3 {
        if samples.len() >= 3 && samples.iter().all(|s| s.1.abs() < 1e-12) {
            return Ok(PowerLawFit { beta: 0.0, k: 0.0, sigma_sat: 0.0, beta_presat: 0.0, flat: true });
        }
        return Err(AnalysisError::TooFewPoints { needed: 3, got: pts.len() });
    }
    let logs: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mut sorted = logs.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let third = (sorted.len() / 3).max(2);
    let (b0, a0) = linear_fit(&sorted[..third]).unwrap_or((0.5, sorted[0].1));
    let ymax = sorted.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let mut p = [a0, b0, ymax + 0.2];
    let resid = |p: &[f64; 3]| -> Vec<f64> {
        pts.iter().map(|&(x, y)| saturating(x, p[0], p[1], p[2]).ln() - y.ln()).collect()
    };
    let cost = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut lambda = 1e-3;
    let mut r = resid(&p);
    let mut c = cost(&r);
    for _ in 0..500 {
        let h = 1e-7;
        let mut jac = vec![[0.0; 3]; pts.len()];
        for j in 0..3 {
            let mut q = p;
            q[j] += h;
            let rq = resid(&q);
            for i in 0..pts.len() {
                jac[i][j] = (rq[i] - r[i]) / h;
            }
        }
        let mut jtj = [[0.0; 3]; 3];
        let mut jtr = [0.0; 3];
        for i in 0..pts.len() {
            for a in 0..3 {
                jtr[a] -= jac[i][a] * r[i];
                for b in 0..3 {
                    jtj[a][b] += jac[i][a] * jac[i][b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] *= 1.0 + lambda;
            }
            let Some(dp) = solve3(m, jtr) else { break };
            let q = [p[0] + dp[0], p[1] + dp[1], p[2] + dp[2]];
            let rq = resid(&q);
            let cq = cost(&rq);
            if cq.is_finite() && cq < c {
                let done = (c - cq) < 1e-15 * (1.0 + c);
                p = q;
                r = rq;
                c = cq;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let sigma_sat = p[2].exp();
    let pre: Vec<(f64, f64)> = logs.iter().filter(|l| l.1.exp() < 0.25 * sigma_sat).cloned().collect();
    let beta_presat = linear_fit(&pre).map(|f| f.0).unwrap_or(f64::NAN);
    Ok(PowerLawFit { beta: p[1], k: p[0].exp(), sigma_sat, beta_presat, flat: false })
}

/// Contrast factors entering the predicted visibilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetInputs {
    pub f_op: f64,
    pub f_s: f64,
    pub f_p: f64,
    pub f_bg_xy: f64,
    pub f_bg_z: f64,
    pub f_i: f64,
    pub separation_us: f64,
    pub tau_a_us: f64,
    pub tau_b_us: f64,
    pub window_us: f64,
}

impl Default for BudgetInputs {
    fn default() -> Self {
        Self {
            f_op: 0.93,
            f_s: 0.75,
            f_p: 0.86,
            f_bg_xy: 0.95,
            f_bg_z: 0.96,
            f_i: 0.97,
            separation_us: 75.5,
            tau_a_us: 85.2,
            tau_b_us: 18.4,
            window_us: 1.9,
        }
    }
}

impl BudgetInputs {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        for (name, v) in [
            ("f_op", self.f_op),
            ("f_s", self.f_s),
            ("f_p", self.f_p),
            ("f_bg_xy", self.f_bg_xy),
            ("f_bg_z", self.f_bg_z),
            ("f_i", self.f_i),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AnalysisError::InvalidInput(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        for (name, v) in [
            ("separation_us", self.separation_us),
            ("tau_a_us", self.tau_a_us),
            ("tau_b_us", self.tau_b_us),
            ("window_us", self.window_us),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(AnalysisError::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    pub f_op: f64,
    pub f_s: f64,
    pub f_p: f64,
    pub f_bg_xy: f64,
    pub f_bg_z: f64,
    pub f_i: f64,
    pub f_l: f64,
    /// Late-window emission excited by the first pulse.
    pub p1: f64,
    /// Late-window emission excited by the second pulse.
    pub p2: f64,
    pub e_xy_pred: f64,
    pub e_z_pred: f64,
    pub f_pred: f64,
}

pub fn error_budget(inputs: &BudgetInputs) -> Result<ErrorBudget, AnalysisError> {
    inputs.validate()?;
    let t = inputs.separation_us;
    let (ta, tb, d) = (inputs.tau_a_us, inputs.tau_b_us, inputs.window_us);
    let p1 = (-t * (0.5 / ta + 0.5 / tb)).exp() * (1.0 - (-d / ta).exp());
    let p2 = 1.0 - (-d / tb).exp();
    let f_l = p2 / (p1 + p2);
    let e_xy = inputs.f_op * inputs.f_s * f_l * inputs.f_bg_xy * inputs.f_i;
    let e_z = inputs.f_p * f_l * inputs.f_bg_z;
    Ok(ErrorBudget {
        f_op: inputs.f_op,
        f_s: inputs.f_s,
        f_p: inputs.f_p,
        f_bg_xy: inputs.f_bg_xy,
        f_bg_z: inputs.f_bg_z,
        f_i: inputs.f_i,
        f_l,
        p1,
        p2,
        e_xy_pred: e_xy,
        e_z_pred: e_z,
        f_pred: (1.0 + 2.0 * e_xy + e_z) / 4.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateInputs {
    pub eta_cav: f64,
    pub eta_gc: f64,
    pub eta_net: f64,
    pub eta_det: f64,
    pub eta_mzi: f64,
    pub eta_pc: f64,
    pub attempt_rate_hz: f64,
    /// Measured success probability per attempt, if known.
    pub measured_p_ent: Option<f64>,
    /// Multiplicative rate improvements, applied to the measured rate.
    pub improvements: Vec<f64>,
}

impl Default for RateInputs {
    fn default() -> Self {
        Self {
            eta_cav: 0.24,
            eta_gc: 0.33,
            eta_net: 0.61,
            eta_det: 0.85,
            eta_mzi: 0.28,
            eta_pc: 0.091,
            attempt_rate_hz: 2.2e3,
            measured_p_ent: Some(6.7e-4),
            improvements: vec![1.5, 2.0, 3.0, 11.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateChain {
    pub eta_cav: f64,
    pub eta_gc: f64,
    pub eta_net: f64,
    pub eta_det: f64,
    pub eta_mzi: f64,
    pub eta_pc: f64,
    pub attempt_rate_hz: f64,
    pub improvements: Vec<f64>,
    pub p_detect: f64,
    pub p_ent_pred: f64,
    pub rate_pred_hz: f64,
    pub rate_measured_hz: Option<f64>,
    pub rate_improved_hz: f64,
}

pub fn rate_chain(inputs: &RateInputs) -> Result<RateChain, AnalysisError> {
    for (name, v) in [
        ("eta_cav", inputs.eta_cav),
        ("eta_gc", inputs.eta_gc),
        ("eta_net", inputs.eta_net),
        ("eta_det", inputs.eta_det),
        ("eta_mzi", inputs.eta_mzi),
        ("eta_pc", inputs.eta_pc),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(AnalysisError::InvalidInput(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    if !(inputs.attempt_rate_hz > 0.0 && inputs.attempt_rate_hz.is_finite()) {
        return Err(AnalysisError::InvalidInput("attempt_rate_hz must be positive".into()));
    }
    if let Some(p) = inputs.measured_p_ent {
        if !(0.0..=1.0).contains(&p) {
            return Err(AnalysisError::InvalidInput(format!("measured_p_ent must lie in [0, 1], got {p}")));
        }
    }
    if inputs.improvements.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
        return Err(AnalysisError::InvalidInput("improvement factors must be positive".into()));
    }
    let p = inputs.eta_cav * inputs.eta_gc * inputs.eta_net * inputs.eta_det;
    let p_ent = p * inputs.eta_mzi * inputs.eta_pc;
    let rate_pred = p_ent * inputs.attempt_rate_hz;
    let rate_meas = inputs.measured_p_ent.map(|m| m * inputs.attempt_rate_hz);
    let gain: f64 = inputs.improvements.iter().product();
    Ok(RateChain {
        eta_cav: inputs.eta_cav,
        eta_gc: inputs.eta_gc,
        eta_net: inputs.eta_net,
        eta_det: inputs.eta_det,
        eta_mzi: inputs.eta_mzi,
        eta_pc: inputs.eta_pc,
        attempt_rate_hz: inputs.attempt_rate_hz,
        improvements: inputs.improvements.clone(),
        p_detect: p,
        p_ent_pred: p_ent,
        rate_pred_hz: rate_pred,
        rate_measured_hz: rate_meas,
        rate_improved_hz: rate_meas.unwrap_or(rate_pred) * gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonics::SpinResult;

    fn click(phi: f64, det: Detector, res: SpinResult, basis: SpinBasis) -> ClickRecord {
        ClickRecord {
            attempt_id: 0,
            herald: Herald::CentralBin(det),
            detection_time_us: 77.0,
            phi_at_attempt: phi,
            spin_basis: basis,
            spin_result: res,
            window_index: 1,
            photon_count: 0,
        }
    }

    #[test]
    fn readout_examples() {
        let c = correct_readout(0.385, 0.81, 0.69).unwrap();
        assert!((c.value - 0.77).abs() < 1e-9);
        assert_eq!(correct_readout(0.4, 1.0, 1.0).unwrap().value, 0.4);
        assert!(matches!(correct_readout(0.6, 0.5, 0.5), Err(AnalysisError::NonInvertibleReadout(_))));
        let c = correct_readout(0.9, 0.8, 0.7).unwrap();
        assert!(c.clamped && c.value == 1.0);
    }

    #[test]
    fn fidelity_examples() {
        assert!((fidelity(0.60, 0.55, 0.77) - 0.73).abs() < 1e-12);
        assert_eq!(fidelity(1.0, 1.0, 1.0), 1.0);
        assert_eq!(fidelity(0.0, 0.0, 0.0), 0.25);
    }

    #[test]
    fn perfect_correlation_hits_boundary() {
        let recs: Vec<_> = (0..50).map(|_| click(0.0, Detector::One, SpinResult::Up, SpinBasis::X)).collect();
        let v = estimate_visibility(&recs, SpinBasis::X).unwrap();
        assert!(v.alpha > 1.0 - 1e-5);
    }

    #[test]
    fn unidentifiable_and_empty() {
        let recs: Vec<_> =
            (0..20).map(|_| click(std::f64::consts::FRAC_PI_2, Detector::One, SpinResult::Up, SpinBasis::X)).collect();
        assert_eq!(estimate_visibility(&recs, SpinBasis::X), Err(AnalysisError::Unidentifiable));
        assert_eq!(estimate_visibility(&[], SpinBasis::Y), Err(AnalysisError::EmptyDataset));
    }

    #[test]
    fn budget_defaults() {
        let b = error_budget(&BudgetInputs::default()).unwrap();
        assert!((b.p1 - 0.002).abs() < 2e-4);
        assert!((b.p2 - 0.098).abs() < 1e-3);
        assert!((b.f_l - 0.98).abs() < 0.005);
        assert!((b.e_xy_pred - 0.63).abs() < 0.01);
        assert!((b.e_z_pred - 0.81).abs() < 0.01);
        let unity =
            BudgetInputs { f_op: 1.0, f_s: 1.0, f_p: 1.0, f_bg_xy: 1.0, f_bg_z: 1.0, f_i: 1.0, ..Default::default() };
        let u = error_budget(&unity).unwrap();
        assert!((u.f_pred - (1.0 + 3.0 * u.f_l) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn rate_defaults() {
        let r = rate_chain(&RateInputs::default()).unwrap();
        assert!((r.p_detect - 0.04).abs() < 0.002);
        assert!((r.p_ent_pred / 1.0e-3 - 1.0).abs() < 0.05);
        assert!((r.rate_measured_hz.unwrap() - 1.474).abs() < 1e-9);
        assert!((r.rate_improved_hz / 150.0 - 1.0).abs() < 0.1);
        let bad = RateInputs { eta_det: 1.2, ..Default::default() };
        assert!(rate_chain(&bad).is_err());
    }

    #[test]
    fn quadrature_ellipse_exact() {
        let pts: Vec<_> = (0..40)
            .map(|i| {
                let phi = (i as f64 + 0.5) * std::f64::consts::TAU / 40.0;
                (phi.cos(), (phi + std::f64::consts::FRAC_PI_2).cos())
            })
            .collect();
        let fit = fit_ellipse(&pts).unwrap();
        assert!((fit.delta_phi - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        for (i, p) in fit.phases.iter().enumerate() {
            let phi = (i as f64 + 0.5) * std::f64::consts::TAU / 40.0;
            assert!((p - phi).abs() < 1e-9, "{i}: {p} vs {phi}");
        }
    }

    #[test]
    fn degenerate_ellipse() {
        let pts: Vec<_> = (0..40).map(|i| ((i as f64 * 0.3).cos(), (i as f64 * 0.3).cos())).collect();
        assert_eq!(fit_ellipse(&pts), Err(AnalysisError::DegenerateEllipse));
        assert!(matches!(fit_ellipse(&pts[..5]), Err(AnalysisError::TooFewPoints { .. })));
    }

    #[test]
    fn decay_identity_and_flat() {
        let s: Vec<_> = (0..30)
            .map(|i| {
                let t = i as f64 * 0.2;
                (t, (-(t / 2.1f64).powi(2)).exp())
            })
            .collect();
        let f = fit_gaussian_decay(&s).unwrap();
        assert!((f.t_d - 2.1).abs() < 1e-6);
        let flat: Vec<_> = (0..10).map(|i| (i as f64, 1.0)).collect();
        assert!(fit_gaussian_decay(&flat).unwrap().flat);
    }

    #[test]
    fn power_law_exact() {
        let sat = std::f64::consts::TAU * 0.364;
        let s: Vec<_> = (0..25)
            .map(|i| {
                let x = 0.1 * 1.4f64.powi(i);
                (x, saturating(x, (0.2f64).ln(), 0.5, sat.ln()))
            })
            .collect();
        let f = fit_power_law_saturating(&s).unwrap();
        assert!((f.beta - 0.5).abs() < 1e-4, "{f:?}");
        assert!((f.sigma_sat / sat - 1.0).abs() < 1e-4);
        let zero: Vec<_> = (1..10).map(|i| (i as f64, 0.0)).collect();
        assert!(fit_power_law_saturating(&zero).unwrap().flat);
    }

    #[test]
    fn parity_bins() {
        let recs: Vec<_> = (0..110)
            .map(|i| click(i as f64 * std::f64::consts::TAU / 110.0, Detector::One, SpinResult::Up, SpinBasis::X))
            .collect();
        let bins = parity_curve(&recs, SpinBasis::X, 11, 0.0);
        assert_eq!(bins.len(), 11);
        assert!(bins.iter().all(|b| b.n == 10 && b.parity == 1.0));
    }
}
