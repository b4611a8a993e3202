use super::AnalyzerError;

/// Upper bound on the per-step weight.
pub const EMA_CAP: f64 = 0.999;
/// Gives a per-step weight of 0.1.
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Steps are discrete, so the exponent on the weight is always one.
const STEP_DELTA: i32 = 1;

/// Smoothing parameters. The per-step weight on the newest observation is
/// `min(sqrt(alpha), cap)^dt` with `dt = 1`, so it is constant over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmaParams {
    pub alpha: f64,
    pub cap: f64,
}

impl Default for EmaParams {
    fn default() -> Self {
        Self::new(DEFAULT_ALPHA)
    }
}

impl EmaParams {
    pub fn new(alpha: f64) -> Self {
        Self { alpha, cap: EMA_CAP }
    }

    /// Parameters whose effective weight is exactly `weight`.
    pub fn with_weight(weight: f64) -> Self {
        Self {
            alpha: weight * weight,
            cap: EMA_CAP.max(weight),
        }
    }

    pub fn validate(&self) -> Result<(), AnalyzerError> {
        let ok = |x: f64| x > 0.0 && x <= 1.0;
        if ok(self.alpha) && ok(self.cap) {
            Ok(())
        } else {
            Err(AnalyzerError::InvalidEma {
                alpha: self.alpha,
                cap: self.cap,
            })
        }
    }

    pub fn effective_weight(&self) -> f64 {
        self.alpha.sqrt().min(self.cap).powi(STEP_DELTA)
    }
}

/// `S_1 = y_1`, `S_t = a * y_t + (1 - a) * S_{t-1}`.
pub fn ema_smooth(series: &[f64], params: EmaParams) -> Result<Vec<f64>, AnalyzerError> {
    params.validate()?;
    let (&first, rest) = series.split_first().ok_or(AnalyzerError::EmptySeries)?;
    let a = params.effective_weight();
    let mut out = Vec::with_capacity(series.len());
    out.push(first);
    let mut s = first;
    for &y in rest {
        s = a * y + (1.0 - a) * s;
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_recurrence() {
        let p = EmaParams::new(0.25);
        assert_eq!(p.effective_weight(), 0.5);
        assert_eq!(ema_smooth(&[10.0, 20.0], p).unwrap(), vec![10.0, 15.0]);
    }

    #[test]
    fn constant_is_fixed_point() {
        let y = vec![7.25; 50];
        assert_eq!(ema_smooth(&y, EmaParams::new(0.3)).unwrap(), y);
    }

    #[test]
    fn unit_weight_is_identity() {
        let y = vec![3.0, 1.0, 4.0, 1.0, 5.0];
        let p = EmaParams::with_weight(1.0);
        assert_eq!(p.effective_weight(), 1.0);
        assert_eq!(ema_smooth(&y, p).unwrap(), y);
    }

    #[test]
    fn cap_applies() {
        assert_eq!(EmaParams::new(1.0).effective_weight(), EMA_CAP);
    }

    #[test]
    fn errors() {
        assert_eq!(ema_smooth(&[], EmaParams::default()), Err(AnalyzerError::EmptySeries));
        assert!(ema_smooth(&[1.0], EmaParams::new(0.0)).is_err());
        assert!(ema_smooth(&[1.0], EmaParams::new(1.5)).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_monotone(
            mut ys in prop::collection::vec(1.0f64..1000.0, 1..60),
            alpha in 0.001f64..=1.0,
        ) {
            let s = ema_smooth(&ys, EmaParams::new(alpha)).unwrap();
            prop_assert_eq!(s.len(), ys.len());
            let lo = ys.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-9 * hi;
            prop_assert!(s.iter().all(|&v| v >= lo - tol && v <= hi + tol));

            ys.sort_by(f64::total_cmp);
            let up = ema_smooth(&ys, EmaParams::new(alpha)).unwrap();
            prop_assert!(up.windows(2).all(|w| w[1] >= w[0] - tol));
            ys.reverse();
            let down = ema_smooth(&ys, EmaParams::new(alpha)).unwrap();
            prop_assert!(down.windows(2).all(|w| w[1] <= w[0] + tol));
        }
    }
}
