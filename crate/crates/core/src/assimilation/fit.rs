use super::AssimilationError;

/// Fraction of the series dropped as transient before fitting.
pub const DEFAULT_TRIM: f64 = 0.2;
const MIN_SAMPLES: usize = 10;

/// Least-squares fit of `log e(t) = c − rate·t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub r_squared: f64,
    /// Points that entered the fit.
    pub samples: usize,
    /// The trimmed series is identically zero; `rate` is `+∞`.
    pub all_zero: bool,
}

/// [`fit_decay_rate_trimmed`] with [`DEFAULT_TRIM`].
pub fn fit_decay_rate(series: &[(f64, f64)]) -> Result<DecayFit, AssimilationError> {
    fit_decay_rate_trimmed(series, DEFAULT_TRIM)
}

/// Drops the first `trim` fraction of `(t, e)` pairs, keeps the prefix of
/// positive values and fits a line through `(t, log e)`.
pub fn fit_decay_rate_trimmed(
    series: &[(f64, f64)],
    trim: f64,
) -> Result<DecayFit, AssimilationError> {
    if !(0.0..1.0).contains(&trim) {
        return Err(AssimilationError::InvalidParameter {
            name: "trim",
            value: trim,
            constraint: "must lie in [0, 1)",
        });
    }
    let rest = &series[(series.len() as f64 * trim).floor() as usize..];
    if !rest.is_empty() && rest.iter().all(|&(_, e)| e == 0.0) {
        return Ok(DecayFit {
            rate: f64::INFINITY,
            r_squared: f64::NAN,
            samples: 0,
            all_zero: true,
        });
    }
    let pts: Vec<(f64, f64)> = rest
        .iter()
        .take_while(|&&(_, e)| e > 0.0 && e.is_finite())
        .map(|&(t, e)| (t, e.ln()))
        .collect();
    if pts.len() < MIN_SAMPLES {
        return Err(AssimilationError::TooFewSamples {
            needed: MIN_SAMPLES,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in &pts {
        stt += (t - tm) * (t - tm);
        sty += (t - tm) * (y - ym);
        syy += (y - ym) * (y - ym);
    }
    if stt == 0.0 {
        return Err(AssimilationError::InvalidParameter {
            name: "time span",
            value: 0.0,
            constraint: "fit points need distinct times",
        });
    }
    let slope = sty / stt;
    let ss_res: f64 = pts
        .iter()
        .map(|&(t, y)| {
            let r = y - (ym + slope * (t - tm));
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(DecayFit {
        rate: -slope,
        r_squared,
        samples: pts.len(),
        all_zero: false,
    })
}

/// Leading part of `series` whose values stay above `floor` times the
/// first value; the rest sits at the round-off level.
pub fn decaying_segment(series: &[(f64, f64)], floor: f64) -> &[(f64, f64)] {
    let Some(&(_, e0)) = series.first() else {
        return series;
    };
    let end = series
        .iter()
        .position(|&(_, e)| !(e > floor * e0))
        .unwrap_or(series.len());
    &series[..end]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::stream_rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_exponential() {
        let s: Vec<_> = (0..50).map(|k| (k as f64 * 0.1, (-3.0 * k as f64 * 0.1).exp())).collect();
        let f = fit_decay_rate(&s).unwrap();
        assert!((f.rate - 3.0).abs() < 1e-6);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(f.samples, 40);
    }

    #[test]
    fn constant_series() {
        let s: Vec<_> = (0..20).map(|k| (k as f64, 0.7)).collect();
        let f = fit_decay_rate(&s).unwrap();
        assert_eq!(f.rate, 0.0);
        assert_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn noisy_exponential() {
        let mut rng = stream_rng(11, 0);
        let s: Vec<_> = (0..200)
            .map(|k| {
                let t = k as f64 * 0.02;
                let noise: f64 = rng.sample(StandardNormal);
                (t, (-2.0 * t).exp() * (1.0 + 0.01 * noise))
            })
            .collect();
        let f = fit_decay_rate(&s).unwrap();
        assert!((f.rate - 2.0).abs() < 0.05, "{}", f.rate);
    }

    #[test]
    fn zeros_and_short_series() {
        let zeros: Vec<_> = (0..20).map(|k| (k as f64, 0.0)).collect();
        let f = fit_decay_rate(&zeros).unwrap();
        assert!(f.all_zero && f.rate == f64::INFINITY);
        // positive prefix only: the zero at index 15 leaves 9 points
        let mut s: Vec<_> = (0..30).map(|k| (k as f64, (-(k as f64)).exp())).collect();
        s[15].1 = 0.0;
        assert!(matches!(
            fit_decay_rate(&s),
            Err(AssimilationError::TooFewSamples { got: 9, .. })
        ));
        assert!(fit_decay_rate(&s[..5]).is_err());
    }

    #[test]
    fn segment_stops_at_the_floor() {
        let s = [(0.0, 1.0), (1.0, 1e-3), (2.0, 1e-13), (3.0, 1e-3)];
        assert_eq!(decaying_segment(&s, 1e-12).len(), 2);
        assert!(decaying_segment(&[], 1e-12).is_empty());
    }
}
