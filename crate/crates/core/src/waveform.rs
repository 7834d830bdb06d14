//! Phase-aligned half-sine row pulses.
//!
//! Each row is driven by one positive half period of a sinusoid at its own
//! frequency. The phase of row `j` is shifted by `(pi/2)(1 - f_j/f_min)` so
//! that every pulse peaks at `t_peak = 1/(4 f_min)`, the quarter period of
//! the slowest pulse in the schedule.

use std::f64::consts::{FRAC_PI_2, PI};

use thiserror::Error;

/// Default read-amplitude ceiling in volts.
pub const DEFAULT_AMPLITUDE_CEILING: f64 = 0.66;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveformError {
    #[error("frequency {freq_hz} Hz is below the schedule base {f_min_hz} Hz")]
    BelowBase { freq_hz: f64, f_min_hz: f64 },
    #[error("frequency {0} Hz must be finite and positive")]
    BadFrequency(f64),
    #[error("frequency {freq_hz} Hz outside device range [{lo}, {hi}] Hz")]
    FrequencyOutOfRange { freq_hz: f64, lo: f64, hi: f64 },
    #[error("amplitude {amplitude} V exceeds the read ceiling {ceiling} V")]
    AmplitudeTooHigh { amplitude: f64, ceiling: f64 },
    #[error("amplitude {0} V must be finite and non-negative")]
    BadAmplitude(f64),
    #[error("schedule has no rows")]
    Empty,
}

/// Phase shift that aligns a pulse at `freq_hz` with the slowest pulse.
pub fn phase_shift(freq_hz: f64, f_min_hz: f64) -> Result<f64, WaveformError> {
    for f in [freq_hz, f_min_hz] {
        if !(f.is_finite() && f > 0.0) {
            return Err(WaveformError::BadFrequency(f));
        }
    }
    if freq_hz < f_min_hz {
        return Err(WaveformError::BelowBase { freq_hz, f_min_hz });
    }
    Ok(FRAC_PI_2 * (1.0 - freq_hz / f_min_hz))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSinePulse {
    pub amplitude: f64,
    pub freq_hz: f64,
    pub phase: f64,
    pub f_min_hz: f64,
}

impl HalfSinePulse {
    pub fn new(amplitude: f64, freq_hz: f64, f_min_hz: f64) -> Result<Self, WaveformError> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(WaveformError::BadAmplitude(amplitude));
        }
        Ok(Self {
            amplitude,
            freq_hz,
            phase: phase_shift(freq_hz, f_min_hz)?,
            f_min_hz,
        })
    }

    /// Common peak time of the schedule this pulse belongs to.
    pub fn t_peak(&self) -> f64 {
        0.25 / self.f_min_hz
    }

    /// `[start, end]` of the half period centred on `t_peak`.
    pub fn support(&self) -> (f64, f64) {
        let half_width = 0.25 / self.freq_hz;
        (self.t_peak() - half_width, self.t_peak() + half_width)
    }

    /// Voltage at `t`. Zero outside the support.
    ///
    /// Evaluated as `V0 sin(2 pi f d)` with `d` the distance to the nearer
    /// support edge. On the support this equals `V0 sin(2 pi f t + phase)`
    /// but stays exact at the edges and avoids the cancellation of a large
    /// phase argument for fast pulses.
    pub fn value(&self, t: f64) -> f64 {
        let (start, end) = self.support();
        if t < start || t > end {
            return 0.0;
        }
        let d = (t - start).min(end - t);
        self.amplitude * (2.0 * PI * self.freq_hz * d).sin()
    }
}

/// Limits checked when building a schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleLimits {
    pub amplitude_ceiling: f64,
    /// Admissible `(min, max)` frequency, usually the device table range.
    pub freq_range: Option<(f64, f64)>,
}

impl Default for ScheduleLimits {
    fn default() -> Self {
        Self {
            amplitude_ceiling: DEFAULT_AMPLITUDE_CEILING,
            freq_range: None,
        }
    }
}

/// Row inputs for one MAC, all peaking at `t_peak`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSchedule {
    pulses: Vec<HalfSinePulse>,
    f_min_hz: f64,
    t_peak: f64,
}

impl PulseSchedule {
    /// Builds a schedule from `(amplitude V, frequency Hz)` per row.
    pub fn build(rows: &[(f64, f64)], limits: &ScheduleLimits) -> Result<Self, WaveformError> {
        if rows.is_empty() {
            return Err(WaveformError::Empty);
        }
        for &(amplitude, freq_hz) in rows {
            if !(freq_hz.is_finite() && freq_hz > 0.0) {
                return Err(WaveformError::BadFrequency(freq_hz));
            }
            if let Some((lo, hi)) = limits.freq_range {
                if freq_hz < lo || freq_hz > hi {
                    return Err(WaveformError::FrequencyOutOfRange { freq_hz, lo, hi });
                }
            }
            if !(amplitude.is_finite() && amplitude >= 0.0) {
                return Err(WaveformError::BadAmplitude(amplitude));
            }
            if amplitude > limits.amplitude_ceiling {
                return Err(WaveformError::AmplitudeTooHigh {
                    amplitude,
                    ceiling: limits.amplitude_ceiling,
                });
            }
        }
        let f_min_hz = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
        let pulses = rows
            .iter()
            .map(|&(v0, f)| HalfSinePulse::new(v0, f, f_min_hz))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            pulses,
            f_min_hz,
            t_peak: 0.25 / f_min_hz,
        })
    }

    pub fn pulses(&self) -> &[HalfSinePulse] {
        &self.pulses
    }

    pub fn len(&self) -> usize {
        self.pulses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    pub fn f_min_hz(&self) -> f64 {
        self.f_min_hz
    }

    pub fn f_max_hz(&self) -> f64 {
        self.pulses.iter().map(|p| p.freq_hz).fold(0.0, f64::max)
    }

    pub fn t_peak(&self) -> f64 {
        self.t_peak
    }

    /// Period of the slowest pulse.
    pub fn t_max(&self) -> f64 {
        1.0 / self.f_min_hz
    }

    pub fn amplitudes(&self) -> Vec<f64> {
        self.pulses.iter().map(|p| p.amplitude).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The gated form `V0 sin(2 pi f t + phase)` evaluated literally.
    fn literal(p: &HalfSinePulse, t: f64) -> f64 {
        p.amplitude * (2.0 * PI * p.freq_hz * t + p.phase).sin()
    }

    #[test]
    fn phase_examples() {
        assert_eq!(phase_shift(10.0, 10.0).unwrap(), 0.0);
        assert!((phase_shift(750.0, 10.0).unwrap() + 37.0 * PI).abs() < 1e-12);
        assert!((phase_shift(10_000.0, 10.0).unwrap() + 499.5 * PI).abs() < 1e-10);
        assert!(matches!(
            phase_shift(5.0, 10.0),
            Err(WaveformError::BelowBase { .. })
        ));
    }

    #[test]
    fn pulse_values() {
        let slow = HalfSinePulse::new(0.5, 10.0, 10.0).unwrap();
        assert_eq!(slow.value(0.0), 0.0);
        assert_eq!(slow.value(slow.t_peak()), 0.5);

        let fast = HalfSinePulse::new(0.5, 750.0, 10.0).unwrap();
        assert_eq!(fast.t_peak(), 0.025);
        assert_eq!(fast.value(0.020), 0.0);
        let (s, e) = fast.support();
        assert!((s - (0.025 - 1.0 / 3000.0)).abs() < 1e-15);
        assert!((e - (0.025 + 1.0 / 3000.0)).abs() < 1e-15);
        assert_eq!(fast.value(fast.t_peak()), 0.5);
    }

    #[test]
    fn stable_form_matches_literal_inside_support() {
        for &(f, f_min) in &[(10.0, 10.0), (750.0, 10.0), (500.0, 250.0), (1000.0, 0.5)] {
            let p = HalfSinePulse::new(0.4, f, f_min).unwrap();
            let (s, e) = p.support();
            for k in 0..=50 {
                let t = s + (e - s) * k as f64 / 50.0;
                assert!(
                    (p.value(t) - literal(&p, t).max(0.0)).abs() < 1e-9,
                    "f={f} t={t}"
                );
            }
        }
    }

    #[test]
    fn schedule_examples() {
        let limits = ScheduleLimits::default();
        let uniform = PulseSchedule::build(&[(0.3, 500.0), (0.2, 500.0)], &limits).unwrap();
        assert!(uniform.pulses().iter().all(|p| p.phase == 0.0));
        assert_eq!(uniform.t_peak(), 1.0 / 2000.0);

        let mixed = PulseSchedule::build(&[(0.66, 10_000.0), (0.66, 750.0), (0.66, 10.0)], &limits)
            .unwrap();
        assert_eq!(mixed.f_min_hz(), 10.0);
        assert_eq!(mixed.t_peak(), 0.025);

        let pair = PulseSchedule::build(&[(0.3, 750.0), (0.3, 500.0)], &limits).unwrap();
        assert_eq!(pair.f_min_hz(), 500.0);
        assert!((pair.pulses()[0].phase + PI / 4.0).abs() < 1e-15);
        assert_eq!(pair.pulses()[1].phase, 0.0);
    }

    #[test]
    fn schedule_errors() {
        let limits = ScheduleLimits {
            amplitude_ceiling: 0.66,
            freq_range: Some((0.5, 10_000.0)),
        };
        assert_eq!(
            PulseSchedule::build(&[], &limits),
            Err(WaveformError::Empty)
        );
        assert!(matches!(
            PulseSchedule::build(&[(0.7, 10.0)], &limits),
            Err(WaveformError::AmplitudeTooHigh { .. })
        ));
        assert!(matches!(
            PulseSchedule::build(&[(0.1, 20_000.0)], &limits),
            Err(WaveformError::FrequencyOutOfRange { .. })
        ));
        assert!(matches!(
            PulseSchedule::build(&[(-0.1, 10.0)], &limits),
            Err(WaveformError::BadAmplitude(_))
        ));
    }

    #[test]
    fn supports_nest_inside_slowest_half_period() {
        let limits = ScheduleLimits::default();
        let s = PulseSchedule::build(&[(0.1, 10_000.0), (0.2, 3.0), (0.3, 47.0)], &limits).unwrap();
        for p in s.pulses() {
            let (a, b) = p.support();
            assert!(a >= 0.0 && b <= s.t_max() / 2.0 + 1e-15);
            assert_eq!((p.value(a), p.value(b)), (0.0, 0.0));
        }
    }
}
