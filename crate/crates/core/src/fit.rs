//! Three-point limit extrapolation `v(t) ≈ L + C t^{-p}`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// `L + C t^{-p}` through the last three samples.
    PowerLaw,
    /// Increments already below the noise floor.
    Converged,
    /// Increments change sign or do not decay; the last sample is reported.
    LastValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitFit {
    pub limit: f64,
    /// Fitted decay exponent, when the power law was used.
    pub exponent: Option<f64>,
    pub method: FitMethod,
}

impl LimitFit {
    /// True unless the fit fell back to the last value.
    pub fn reliable(&self) -> bool {
        self.method != FitMethod::LastValue
    }
}

/// Extrapolates `values` sampled at increasing `times` to `t → ∞`.
///
/// On a geometric ladder this is Aitken's Δ² process.
pub fn extrapolate_limit(times: &[f64], values: &[f64]) -> LimitFit {
    let n = values.len();
    assert_eq!(times.len(), n, "times and values differ in length");
    let last = values.last().copied().unwrap_or(f64::NAN);
    let fallback = LimitFit {
        limit: last,
        exponent: None,
        method: FitMethod::LastValue,
    };
    if n < 3 {
        return fallback;
    }
    let (t1, t2, t3) = (times[n - 3], times[n - 2], times[n - 1]);
    let (v1, v2, v3) = (values[n - 3], values[n - 2], values[n - 1]);
    let d1 = v2 - v1;
    let d2 = v3 - v2;
    let scale = v1.abs().max(v2.abs()).max(v3.abs());
    if d2.abs() <= 1e-12 * scale || d2 == 0.0 {
        return LimitFit {
            limit: v3,
            exponent: None,
            method: FitMethod::Converged,
        };
    }
    if d1 * d2 <= 0.0 {
        return fallback;
    }
    let observed = d2 / d1;
    let ratio = |p: f64| (t3.powf(-p) - t2.powf(-p)) / (t2.powf(-p) - t1.powf(-p));
    // ratio decreases from ln(t3/t2)/ln(t2/t1) at p → 0 to 0 at p → ∞
    let (mut lo, mut hi) = (1e-6, 60.0);
    if observed >= ratio(lo) || observed <= ratio(hi) {
        return fallback;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > observed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let p = 0.5 * (lo + hi);
    let c = d1 / (t2.powf(-p) - t1.powf(-p));
    LimitFit {
        limit: v3 - c * t3.powf(-p),
        exponent: Some(p),
        method: FitMethod::PowerLaw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exact_power_laws() {
        let t = [1.0, 2.0, 5.0, 10.0];
        let v: Vec<f64> = t.iter().map(|t: &f64| 0.3 + 2.0 * t.powf(-0.5)).collect();
        let fit = extrapolate_limit(&t, &v);
        assert!((fit.limit - 0.3).abs() < 1e-9, "{fit:?}");
        assert!((fit.exponent.unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn oscillating_series_falls_back() {
        let fit = extrapolate_limit(&[1.0, 2.0, 4.0], &[1.0, 2.0, 1.5]);
        assert_eq!(fit.method, FitMethod::LastValue);
        assert_eq!(fit.limit, 1.5);
    }

    #[test]
    fn flat_series_is_converged() {
        let fit = extrapolate_limit(&[1.0, 2.0, 4.0], &[0.4, 0.4, 0.4]);
        assert_eq!(fit.method, FitMethod::Converged);
    }
}
