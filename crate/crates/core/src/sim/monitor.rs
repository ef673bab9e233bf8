use serde::{Deserialize, Serialize};

use super::runner::LyapunovSample;

/// Increase allowed before a step counts as a violation.
pub const DECREASE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    /// Pairs compared while the monitor was active.
    pub checked: usize,
    /// Steps at which the value rose by more than the tolerance.
    pub violations: Vec<usize>,
    pub worst_increase: f64,
}

/// Scan consecutive samples of the summed optimal cost for increases while
/// some vehicle is outside its invariant set.
pub fn monitor_lyapunov(samples: &[LyapunovSample]) -> LyapunovReport {
    let mut report = LyapunovReport {
        checked: 0,
        violations: Vec::new(),
        worst_increase: f64::NEG_INFINITY,
    };
    for pair in samples.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        if !prev.outside {
            continue;
        }
        report.checked += 1;
        let rise = next.value - prev.value;
        report.worst_increase = report.worst_increase.max(rise);
        if rise > DECREASE_TOL {
            report.violations.push(next.step);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(step: usize, value: f64, outside: bool) -> LyapunovSample {
        LyapunovSample { step, value, outside }
    }

    #[test]
    fn decreasing_sequence_is_clean() {
        let r = monitor_lyapunov(&[s(0, 5.0, true), s(1, 4.0, true), s(2, 3.9, true)]);
        assert_eq!(r.checked, 2);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn increase_outside_is_flagged() {
        let r = monitor_lyapunov(&[s(0, 5.0, true), s(1, 5.1, true)]);
        assert_eq!(r.violations, vec![1]);
    }

    #[test]
    fn inactive_inside_terminal_sets() {
        let r = monitor_lyapunov(&[s(0, 1.0, false), s(1, 2.0, false), s(2, 3.0, false)]);
        assert_eq!(r.checked, 0);
        assert!(r.violations.is_empty());
    }
}
