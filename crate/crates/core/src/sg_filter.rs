//! Windowed least-squares polynomial fitting with goodness-of-fit model
//! selection.
//!
//! A window holds `n = 2m+1` samples at abscissae `x = −m..=m`. A fit of
//! order `k−1` solves the Vandermonde least-squares problem `E·A ≈ Y`.
//! Mode I fixes the window and scans orders; Mode II fixes the order and
//! scans trailing windows. Both keep the candidate with the highest R².

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// R² values closer than this are ties; ties go to the simpler model.
pub const R2_TIE_TOLERANCE: f64 = 1e-12;

/// Sums of squares below this fraction of `Σy²` are round-off.
const ROUNDOFF: f64 = 1e-24;

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    half_width: usize,
    samples: Vec<f64>,
}

impl Window {
    /// `samples` must have odd length `2m+1` with `m ≥ 1`.
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        let n = samples.len();
        if n < 3 || n.is_multiple_of(2) {
            return Err(Error::InvalidParameter { name: "window", reason: format!("length must be odd and >= 3, got {n}") });
        }
        Ok(Self { half_width: n / 2, samples })
    }

    /// The trailing `2m+1` values of `history`.
    pub fn trailing(history: &[f64], half_width: usize) -> Option<Self> {
        let n = 2 * half_width + 1;
        (half_width >= 1 && history.len() >= n).then(|| Self { half_width, samples: history[history.len() - n..].to_vec() })
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Abscissa of sample `i`: `i − m`.
    pub fn abscissa(&self, i: usize) -> f64 {
        i as f64 - self.half_width as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// `a_0 .. a_{k−1}` in the unscaled abscissa `x`.
    pub coeffs: Vec<f64>,
    pub predictions: Vec<f64>,
    pub r2: f64,
    pub order: usize,
    pub half_width: usize,
}

impl FitResult {
    /// Fitted value at the window center, `x = 0`.
    pub fn center(&self) -> f64 {
        self.predictions[self.half_width]
    }

    /// Fitted value at the newest sample, `x = m`.
    pub fn latest(&self) -> f64 {
        self.predictions[self.predictions.len() - 1]
    }

    pub fn at(&self, point: Abscissa) -> f64 {
        match point {
            Abscissa::Center => self.center(),
            Abscissa::Latest => self.latest(),
        }
    }
}

/// Where a fit is read out: the true center for offline smoothing, the
/// newest sample for causal use on trailing history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Abscissa {
    Center,
    Latest,
}

/// Least-squares polynomial fit of the given order. Requires more samples
/// than coefficients.
pub fn fit_window(window: &Window, order: usize) -> Result<FitResult> {
    fit(window, order, true)
}

/// As [`fit_window`] but also accepts a square system (`n = k`), which
/// interpolates the samples.
pub fn fit_window_square_ok(window: &Window, order: usize) -> Result<FitResult> {
    fit(window, order, false)
}

fn fit(window: &Window, order: usize, strict: bool) -> Result<FitResult> {
    let n = window.len();
    let k = order + 1;
    if k > n || (strict && k == n) {
        return Err(Error::OrderTooHigh { order, needed: if strict { k } else { k - 1 }, window: n });
    }
    let m = window.half_width as f64;

    // Solve in u = x/m so the columns stay O(1); a_j = b_j / m^j.
    let design = DMatrix::from_fn(n, k, |i, j| (window.abscissa(i) / m).powi(j as i32));
    let y = DVector::from_column_slice(window.samples());
    let qr = design.clone().qr();
    let r = qr.r();
    let max_diag = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-12 * max_diag) || max_diag == 0.0 {
        return Err(Error::SingularFit);
    }
    let qty = qr.q().transpose() * &y;
    let scaled = r.solve_upper_triangular(&qty).ok_or(Error::SingularFit)?;

    let predictions: Vec<f64> = (&design * &scaled).iter().copied().collect();
    let coeffs = scaled.iter().enumerate().map(|(j, b)| b / m.powi(j as i32)).collect();
    let r2 = r_squared(window.samples(), &predictions)?;
    Ok(FitResult { coeffs, predictions, r2, order, half_width: window.half_width })
}

/// Coefficient of determination `1 − SS_res/SS_tot`.
///
/// A constant series (`SS_tot = 0`) scores 1 when the residual is also zero
/// and 0 otherwise; both sums are compared at round-off level.
pub fn r_squared(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    if observed.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: observed.len(), right: predicted.len() });
    }
    if observed.len() < 2 {
        return Err(Error::TooShort { needed: 2, got: observed.len() });
    }
    let n = observed.len() as f64;
    let mean = observed.iter().sum::<f64>() / n;
    let ss_tot: f64 = observed.iter().map(|k| (k - mean).powi(2)).sum();
    let ss_res: f64 = observed.iter().zip(predicted).map(|(k, h)| (k - h).powi(2)).sum();
    let scale: f64 = observed.iter().map(|k| k * k).sum();
    let floor = ROUNDOFF * scale;

    if ss_tot <= floor {
        return Ok(if ss_res <= floor { 1.0 } else { 0.0 });
    }
    if ss_res <= floor {
        return Ok(1.0);
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Index of the first candidate whose R² is within the tie tolerance of the best.
fn pick_best(fits: &[FitResult]) -> Option<usize> {
    let best = fits.iter().map(|f| f.r2).fold(f64::NEG_INFINITY, f64::max);
    fits.iter().position(|f| f.r2 >= best - R2_TIE_TOLERANCE)
}

/// Mode I: fixed window, orders `1..=max_order`, lowest order wins ties.
pub fn mode1_select(window: &Window, max_order: usize) -> Result<FitResult> {
    if max_order < 1 || max_order + 2 > window.len() {
        return Err(Error::InvalidParameter {
            name: "max_order",
            reason: format!("must be in 1..={} for a window of {}", window.len().saturating_sub(2), window.len()),
        });
    }
    let fits = (1..=max_order).map(|order| fit_window(window, order)).collect::<Result<Vec<_>>>()?;
    let best = pick_best(&fits).expect("at least one order");
    Ok(fits.into_iter().nth(best).expect("index in range"))
}

/// Mode II: fixed order over trailing windows of the given half-widths,
/// smallest window wins ties. Windows that need more history than is
/// available, or that cannot support the order, are skipped.
pub fn mode2_select(history: &[f64], half_widths: &[usize], order: usize) -> Result<FitResult> {
    let mut widths: Vec<usize> = half_widths.iter().copied().filter(|&m| m >= 1 && 2 * m + 1 > order + 1).collect();
    widths.sort_unstable();
    widths.dedup();
    let fits = widths
        .into_iter()
        .filter_map(|m| Window::trailing(history, m))
        .map(|w| fit_window(&w, order))
        .collect::<Result<Vec<_>>>()?;
    let best = pick_best(&fits).ok_or(Error::InsufficientHistory { history: history.len() })?;
    Ok(fits.into_iter().nth(best).expect("index in range"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Filtered,
    FuzzyFallback,
}

/// Passes a filtered battery command unless it exceeds the demand in
/// magnitude or opposes it in sign; the fuzzy command is used then.
pub fn rule_gate(p_fuzzy: f64, candidate: f64, p_req: f64) -> (f64, Provenance) {
    let too_large = candidate.abs() > p_req.abs();
    let opposed = p_req != 0.0 && candidate * p_req < 0.0;
    if too_large || opposed {
        (p_fuzzy, Provenance::FuzzyFallback)
    } else {
        (candidate, Provenance::Filtered)
    }
}

/// Picks the better of the Mode I and Mode II fits (Mode I on ties), reads it
/// at `point` and gates it against the demand. With neither fit available
/// the fuzzy command passes through.
pub fn rule_select(
    p_fuzzy: f64,
    mode1: Option<&FitResult>,
    mode2: Option<&FitResult>,
    p_req: f64,
    point: Abscissa,
) -> (f64, Provenance) {
    let chosen = match (mode1, mode2) {
        (Some(a), Some(b)) => Some(if b.r2 > a.r2 + R2_TIE_TOLERANCE { b } else { a }),
        (a, b) => a.or(b),
    };
    match chosen {
        Some(fit) => rule_gate(p_fuzzy, fit.at(point), p_req),
        None => (p_fuzzy, Provenance::FuzzyFallback),
    }
}

/// Candidate sets for the two selection modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub mode1_half_width: usize,
    pub mode1_max_order: usize,
    pub mode2_order: usize,
    pub mode2_half_widths: Vec<usize>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { mode1_half_width: 5, mode1_max_order: 4, mode2_order: 2, mode2_half_widths: vec![3, 5, 7] }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        let n1 = 2 * self.mode1_half_width + 1;
        if self.mode1_half_width < 1 || self.mode1_max_order < 1 || self.mode1_max_order + 2 > n1 {
            return Err(Error::InvalidParameter {
                name: "filter.mode1_max_order",
                reason: format!("need 1 <= max_order <= {} for half width {}", n1.saturating_sub(2), self.mode1_half_width),
            });
        }
        if !self.mode2_half_widths.iter().any(|&m| m >= 1 && 2 * m + 1 > self.mode2_order + 1) {
            return Err(Error::InvalidParameter {
                name: "filter.mode2_half_widths",
                reason: format!("no window can support order {}", self.mode2_order),
            });
        }
        Ok(())
    }

    /// Longest history either mode can use.
    pub fn max_window(&self) -> usize {
        let m2 = self.mode2_half_widths.iter().copied().max().unwrap_or(0);
        2 * self.mode1_half_width.max(m2) + 1
    }

    /// Runs both modes on trailing history; a mode without enough history
    /// yields `None`.
    pub fn fit_trailing(&self, history: &[f64]) -> Result<(Option<FitResult>, Option<FitResult>)> {
        let mode1 = match Window::trailing(history, self.mode1_half_width) {
            Some(w) => Some(mode1_select(&w, self.mode1_max_order)?),
            None => None,
        };
        let mode2 = match mode2_select(history, &self.mode2_half_widths, self.mode2_order) {
            Ok(fit) => Some(fit),
            Err(Error::InsufficientHistory { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok((mode1, mode2))
    }
}

/// Offline Mode I smoothing: each interior sample is replaced by the center
/// value of its best-order window; the first and last `m` samples are kept.
pub fn smooth_centered(series: &[f64], half_width: usize, max_order: usize) -> Result<Vec<f64>> {
    let n = 2 * half_width + 1;
    let mut out = series.to_vec();
    if series.len() < n {
        return Ok(out);
    }
    for center in half_width..series.len() - half_width {
        let w = Window::new(series[center - half_width..=center + half_width].to_vec())?;
        out[center] = mode1_select(&w, max_order)?.center();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn window(v: &[f64]) -> Window {
        Window::new(v.to_vec()).unwrap()
    }

    #[test]
    fn constant_series_fits_exactly() {
        let w = window(&[0.1; 11]);
        for order in 1..=4 {
            let fit = fit_window(&w, order).unwrap();
            assert_relative_eq!(fit.coeffs[0], 0.1, epsilon = 1e-14);
            assert!(fit.coeffs[1..].iter().all(|c| c.abs() < 1e-14));
            assert_eq!(fit.r2, 1.0);
        }
    }

    #[test]
    fn recovers_parabola() {
        let w = window(&[4.0, 1.0, 0.0, 1.0, 4.0]);
        let fit = fit_window(&w, 2).unwrap();
        assert_relative_eq!(fit.coeffs[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coeffs[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(fit.coeffs[2], 1.0, epsilon = 1e-12);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn order_too_high() {
        let w = window(&[1.0, 2.0, 3.0]);
        assert!(matches!(fit_window(&w, 2), Err(Error::OrderTooHigh { .. })));
        assert!(fit_window_square_ok(&w, 2).is_ok());
        assert!(matches!(fit_window_square_ok(&w, 3), Err(Error::OrderTooHigh { .. })));
    }

    #[test]
    fn r_squared_cases() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_relative_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(r_squared(&[5.0, 5.0], &[5.0, 5.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[5.0, 5.0], &[5.0, 6.0]).unwrap(), 0.0);
        assert!(matches!(r_squared(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn mode1_prefers_lowest_exact_order() {
        let cubic: Vec<f64> = (-4..=4).map(|x| { let x = x as f64; 0.5 * x * x * x - x + 2.0 }).collect();
        let fit = mode1_select(&window(&cubic), 5).unwrap();
        assert_eq!(fit.order, 3);
        assert_eq!(fit.r2, 1.0);

        let line: Vec<f64> = (-3..=3).map(|x| 2.0 * x as f64 + 1.0).collect();
        assert_eq!(mode1_select(&window(&line), 4).unwrap().order, 1);
    }

    #[test]
    fn mode1_rejects_bad_max_order() {
        let w = window(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(mode1_select(&w, 0).is_err());
        assert!(mode1_select(&w, 4).is_err());
        assert!(mode1_select(&w, 3).is_ok());
    }

    #[test]
    fn mode2_smallest_window_on_exact_polynomial() {
        let history: Vec<f64> = (0..20).map(|t| { let t = t as f64; 0.3 * t * t - 2.0 * t + 1.0 }).collect();
        let fit = mode2_select(&history, &[7, 3, 5], 2).unwrap();
        assert_eq!(fit.half_width, 3);
        assert_eq!(fit.r2, 1.0);
    }

    #[test]
    fn mode2_skips_long_windows_and_reports_short_history() {
        let history = [1.0, 2.0, 4.0, 3.0, 5.0];
        let fit = mode2_select(&history, &[2, 5], 1).unwrap();
        assert_eq!(fit.half_width, 2);
        assert!(matches!(mode2_select(&history[..3], &[2, 5], 1), Err(Error::InsufficientHistory { history: 3 })));
        // a window that cannot hold the order is not admissible
        assert!(matches!(mode2_select(&history, &[1], 2), Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn mode2_regime_change_prefers_short_window() {
        let mut history: Vec<f64> = (0..12).map(|t| (t as f64 * 1.7).sin() * 10.0).collect();
        history.extend((0..7).map(|t| 3.0 * t as f64));
        let fit = mode2_select(&history, &[3, 5, 7], 1).unwrap();
        assert_eq!(fit.half_width, 3);
    }

    #[test]
    fn rule_gate_branches() {
        assert_eq!(rule_gate(8e3, 5e3, 20e3), (5e3, Provenance::Filtered));
        assert_eq!(rule_gate(8e3, 25e3, 20e3), (8e3, Provenance::FuzzyFallback));
        assert_eq!(rule_gate(8e3, -3e3, 10e3), (8e3, Provenance::FuzzyFallback));
        assert_eq!(rule_gate(-2e3, -4e3, -5e3), (-4e3, Provenance::Filtered));
        assert_eq!(rule_gate(0.0, 1.0, 0.0), (0.0, Provenance::FuzzyFallback));
        assert_eq!(rule_gate(0.0, 0.0, 0.0), (0.0, Provenance::Filtered));
    }

    #[test]
    fn rule_select_prefers_higher_r2_and_mode1_on_ties() {
        let mk = |r2: f64, value: f64| FitResult { coeffs: vec![], predictions: vec![0.0, value, 0.0], r2, order: 1, half_width: 1 };
        let a = mk(0.9, 4.0);
        let b = mk(0.95, 6.0);
        assert_eq!(rule_select(1.0, Some(&a), Some(&b), 10.0, Abscissa::Center), (6.0, Provenance::Filtered));
        let tie = mk(0.9, 6.0);
        assert_eq!(rule_select(1.0, Some(&a), Some(&tie), 10.0, Abscissa::Center), (4.0, Provenance::Filtered));
        assert_eq!(rule_select(1.0, None, None, 10.0, Abscissa::Center), (1.0, Provenance::FuzzyFallback));
        assert_eq!(rule_select(1.0, None, Some(&b), 10.0, Abscissa::Latest), (0.0, Provenance::Filtered));
    }

    #[test]
    fn centered_smoothing_keeps_polynomials() {
        let series: Vec<f64> = (0..30).map(|t| { let t = t as f64; 0.01 * t * t * t - t }).collect();
        let smooth = smooth_centered(&series, 3, 4).unwrap();
        for (a, b) in series.iter().zip(&smooth) {
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }
}
