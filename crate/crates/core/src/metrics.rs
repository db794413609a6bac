//! Coefficient-error metrics and the data-savings computation.

use serde::Serialize;

use crate::choice::MnlParams;
use crate::error::{Error, Result};

/// Default denominator adjustment for [`mape`].
pub const DEFAULT_EPSILON: f64 = 0.1;

fn check_dims(a: &MnlParams, b: &MnlParams) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::dims(format!("{} vs {} coefficients", a.dim(), b.dim())));
    }
    Ok(())
}

/// Per-coefficient `|b_hat - b*| / (|b*| + epsilon) * 100`.
pub fn percentage_errors(beta_hat: &MnlParams, beta_star: &MnlParams, epsilon: f64) -> Result<Vec<f64>> {
    check_dims(beta_hat, beta_star)?;
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid("epsilon must be finite and non-negative"));
    }
    beta_hat
        .as_slice()
        .iter()
        .zip(beta_star.as_slice())
        .map(|(h, s)| {
            let den = s.abs() + epsilon;
            if den == 0.0 {
                Err(Error::invalid("zero true coefficient with epsilon = 0"))
            } else {
                Ok((h - s).abs() / den * 100.0)
            }
        })
        .collect()
}

/// Mean absolute percentage error across coefficients, in percent.
pub fn mape(beta_hat: &MnlParams, beta_star: &MnlParams, epsilon: f64) -> Result<f64> {
    let e = percentage_errors(beta_hat, beta_star, epsilon)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Mean squared coefficient error.
pub fn mse(beta_hat: &MnlParams, beta_star: &MnlParams) -> Result<f64> {
    check_dims(beta_hat, beta_star)?;
    let s: f64 = beta_hat
        .as_slice()
        .iter()
        .zip(beta_star.as_slice())
        .map(|(h, s)| (h - s).powi(2))
        .sum();
    Ok(s / beta_hat.dim() as f64)
}

/// Euclidean distance between coefficient vectors.
pub fn l2_error(beta_hat: &MnlParams, beta_star: &MnlParams) -> Result<f64> {
    Ok((mse(beta_hat, beta_star)? * beta_hat.dim() as f64).sqrt())
}

/// Mean estimation error of the primary-only estimator by primary sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorCurve {
    sizes: Vec<f64>,
    errors: Vec<f64>,
}

impl ErrorCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("error curve has no points"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::invalid("error curve sizes must be strictly increasing"));
            }
        }
        if points.iter().any(|(s, e)| !(*s > 0.0) || !s.is_finite() || !e.is_finite()) {
            return Err(Error::invalid("error curve needs positive sizes and finite errors"));
        }
        let (sizes, errors) = points.into_iter().unzip();
        Ok(Self { sizes, errors })
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    /// Non-increasing least-squares fit of the errors (pool adjacent violators).
    pub fn smoothed(&self) -> Vec<f64> {
        isotonic_non_increasing(&self.errors)
    }
}

/// Least-squares non-increasing fit of `values`.
pub fn isotonic_non_increasing(values: &[f64]) -> Vec<f64> {
    // Blocks of (mean, count); merge while a later block exceeds an earlier one.
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (b, nb) = blocks[blocks.len() - 1];
            let (a, na) = blocks[blocks.len() - 2];
            if b <= a {
                break;
            }
            blocks.pop();
            let n = na + nb;
            *blocks.last_mut().unwrap() = ((a * na as f64 + b * nb as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(v, n)| std::iter::repeat(v).take(n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SavingsResult {
    /// Primary size used by the augmented estimator.
    pub n1: f64,
    /// Primary size the primary-only estimator needs for the same error.
    pub n2: f64,
    /// `(n2 - n1) / n2 * 100`.
    pub percent: f64,
    /// `n2` lies outside the curve's size range.
    pub extrapolated: bool,
}

/// Percentage of human data saved: locate `n2` with `curve(n2) = aae_error`
/// and return `(n2 - n1) / n2 * 100`. Extrapolates past the curve's ends.
pub fn data_savings(aae_error: f64, curve: &ErrorCurve, n1: f64) -> Result<SavingsResult> {
    data_savings_with(aae_error, curve, n1, true)
}

/// As [`data_savings`]; with `extrapolate = false` a target outside the
/// curve's range is an error.
pub fn data_savings_with(aae_error: f64, curve: &ErrorCurve, n1: f64, extrapolate: bool) -> Result<SavingsResult> {
    if !aae_error.is_finite() || !(n1 > 0.0) {
        return Err(Error::invalid("savings need a finite error and a positive n1"));
    }
    let (n2, extrapolated) = invert_curve(curve, aae_error)?;
    if extrapolated && !extrapolate {
        return Err(Error::invalid(format!(
            "error {aae_error} lies outside the curve's range and extrapolation is disabled"
        )));
    }
    Ok(SavingsResult {
        n1,
        n2,
        percent: (n2 - n1) / n2 * 100.0,
        extrapolated,
    })
}

/// Size at which the smoothed curve reaches `target`, interpolating linearly in
/// `(log size, log error)`, or in `(log size, error)` if an error is not positive.
fn invert_curve(curve: &ErrorCurve, target: f64) -> Result<(f64, bool)> {
    let e = curve.smoothed();
    let s = &curve.sizes;
    if let Some(i) = e.iter().position(|v| *v == target) {
        return Ok((s[i], false));
    }
    let log_err = e.iter().all(|v| *v > 0.0) && target > 0.0;
    let ey = |v: f64| if log_err { v.ln() } else { v };
    let solve = |i: usize, j: usize| -> Option<f64> {
        let (x0, x1) = (s[i].ln(), s[j].ln());
        let (y0, y1) = (ey(e[i]), ey(e[j]));
        if y1 == y0 {
            return None;
        }
        Some((x0 + (ey(target) - y0) * (x1 - x0) / (y1 - y0)).exp())
    };
    if e.len() < 2 {
        return Err(Error::invalid("cannot invert an error curve with one point"));
    }
    // Interior: the first segment with e_i > target > e_{i+1}.
    for i in 0..e.len() - 1 {
        if e[i] > target && target > e[i + 1] {
            return Ok((solve(i, i + 1).expect("strictly decreasing segment"), false));
        }
    }
    let (i, j) = if target > e[0] {
        // Above the curve: extend the first decreasing segment to the left.
        let j = (1..e.len()).find(|&j| e[j] < e[0]);
        (0, j)
    } else {
        let last = e.len() - 1;
        let i = (0..last).rev().find(|&i| e[i] > e[last]);
        (i.unwrap_or(last), Some(last))
    };
    match j.and_then(|j| solve(i, j)) {
        Some(n2) => Ok((n2, true)),
        None => Err(Error::invalid("error curve is flat; cannot extrapolate")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub percentage_errors: Vec<f64>,
    pub mape: f64,
    pub mse: f64,
    pub epsilon: f64,
    pub savings: Vec<SavingsResult>,
}

impl MetricsReport {
    pub fn compute(beta_hat: &MnlParams, beta_star: &MnlParams, epsilon: f64) -> Result<Self> {
        let pe = percentage_errors(beta_hat, beta_star, epsilon)?;
        Ok(Self {
            mape: pe.iter().sum::<f64>() / pe.len() as f64,
            percentage_errors: pe,
            mse: mse(beta_hat, beta_star)?,
            epsilon,
            savings: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: &[f64]) -> MnlParams {
        MnlParams::new(v.to_vec()).unwrap()
    }

    #[test]
    fn mape_hand_values() {
        assert_eq!(mape(&p(&[1.0, 2.0]), &p(&[1.0, 2.0]), 0.1).unwrap(), 0.0);
        assert!((mape(&p(&[1.1, 1.8]), &p(&[1.0, 2.0]), 0.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((mape(&p(&[0.05, 1.0]), &p(&[0.0, 1.0]), 0.1).unwrap() - 25.0).abs() < 1e-12);
        assert!(mape(&p(&[0.05, 1.0]), &p(&[0.0, 1.0]), 0.0).is_err());
        assert!(mape(&p(&[0.05]), &p(&[0.0, 1.0]), 0.1).is_err());
    }

    #[test]
    fn mse_and_l2() {
        assert!((mse(&p(&[1.0, 3.0]), &p(&[0.0, 1.0])).unwrap() - 2.5).abs() < 1e-15);
        assert!((l2_error(&p(&[3.0, 4.0]), &p(&[0.0, 0.0])).unwrap() - 5.0).abs() < 1e-15);
    }

    fn root_curve(c: f64, sizes: &[f64]) -> ErrorCurve {
        ErrorCurve::new(sizes.iter().map(|&n| (n, c / n.sqrt())).collect()).unwrap()
    }

    #[test]
    fn inverse_square_root_curve() {
        let curve = root_curve(3.0, &[25.0, 50.0, 100.0, 200.0, 400.0, 800.0]);
        let r = data_savings(3.0 / 200f64.sqrt(), &curve, 50.0).unwrap();
        assert_eq!(r.percent, 75.0);
        assert!(!r.extrapolated);
        // Between grid points the log-log interpolation is exact for power laws.
        let r = data_savings(3.0 / 300f64.sqrt(), &curve, 50.0).unwrap();
        assert!((r.n2 - 300.0).abs() < 1e-9);
    }

    #[test]
    fn no_savings_at_own_error() {
        let curve = root_curve(1.0, &[10.0, 20.0, 40.0]);
        assert_eq!(data_savings(1.0 / 20f64.sqrt(), &curve, 20.0).unwrap().percent, 0.0);
    }

    #[test]
    fn extrapolation_is_flagged_or_refused() {
        let curve = root_curve(1.0, &[10.0, 20.0, 40.0]);
        let r = data_savings(1.0 / 160f64.sqrt(), &curve, 10.0).unwrap();
        assert!(r.extrapolated);
        assert!((r.n2 - 160.0).abs() < 1e-9);
        assert!(data_savings_with(1.0 / 160f64.sqrt(), &curve, 10.0, false).is_err());
        let r = data_savings(1.0, &curve, 1.0).unwrap();
        assert!(r.extrapolated && (r.n2 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn isotonic_smoothing() {
        assert_eq!(isotonic_non_increasing(&[3.0, 1.0, 2.0, 0.5]), vec![3.0, 1.5, 1.5, 0.5]);
        assert_eq!(isotonic_non_increasing(&[1.0, 2.0, 3.0]), vec![2.0, 2.0, 2.0]);
        let flat = ErrorCurve::new(vec![(1.0, 1.0), (2.0, 2.0)]).unwrap();
        assert!(data_savings(0.5, &flat, 1.0).is_err());
    }

    #[test]
    fn curve_validation() {
        assert!(ErrorCurve::new(vec![]).is_err());
        assert!(ErrorCurve::new(vec![(2.0, 1.0), (1.0, 0.5)]).is_err());
        assert!(ErrorCurve::new(vec![(0.0, 1.0)]).is_err());
        assert!(ErrorCurve::new(vec![(1.0, f64::NAN)]).is_err());
    }

    #[test]
    fn report_fields() {
        let r = MetricsReport::compute(&p(&[0.05, 1.0]), &p(&[0.0, 1.0]), 0.1).unwrap();
        assert_eq!(r.percentage_errors.len(), 2);
        assert!((r.mape - 25.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn mape_is_scale_free(
            star in prop::collection::vec(0.1f64..5.0, 1..6),
            noise in prop::collection::vec(-1.0f64..1.0, 6),
            c in 0.01f64..100.0,
        ) {
            let hat: Vec<f64> = star.iter().zip(&noise).map(|(s, n)| s + n).collect();
            let a = mape(&p(&hat), &p(&star), 0.0).unwrap();
            let sh: Vec<f64> = hat.iter().map(|v| v * c).collect();
            let ss: Vec<f64> = star.iter().map(|v| v * c).collect();
            let b = mape(&p(&sh), &p(&ss), 0.0).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn savings_invariant_to_size_rescaling(c in 0.5f64..4.0, scale in 0.1f64..10.0, n1 in 20.0f64..60.0, target_n in 30.0f64..700.0) {
            let sizes = [25.0, 50.0, 100.0, 200.0, 400.0, 800.0];
            let a = data_savings(c / target_n.sqrt(), &root_curve(c, &sizes), n1).unwrap();
            let scaled: Vec<f64> = sizes.iter().map(|s| s * scale).collect();
            let curve = ErrorCurve::new(scaled.iter().zip(&sizes).map(|(s, n)| (*s, c / n.sqrt())).collect()).unwrap();
            let b = data_savings(c / target_n.sqrt(), &curve, n1 * scale).unwrap();
            prop_assert!((a.percent - b.percent).abs() < 1e-9);
        }

        #[test]
        fn savings_unchanged_by_extra_points_on_the_curve(extra in prop::collection::btree_set(26u32..799, 0..6), target_n in 30.0f64..700.0) {
            let mut sizes: Vec<f64> = vec![25.0, 800.0];
            sizes.extend(extra.iter().map(|v| *v as f64));
            sizes.sort_by(|a, b| a.total_cmp(b));
            let a = data_savings(2.0 / target_n.sqrt(), &root_curve(2.0, &[25.0, 800.0]), 40.0).unwrap();
            let b = data_savings(2.0 / target_n.sqrt(), &root_curve(2.0, &sizes), 40.0).unwrap();
            prop_assert!((a.percent - b.percent).abs() < 1e-9);
        }
    }
}
