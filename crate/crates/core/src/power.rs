//! System power when the depth sensor runs at a reduced duty cycle.

use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum PowerError {
    #[error("duty cycle {0}% outside [0, 100]")]
    DutyCycle(f64),
    #[error("{name} = {value} W is out of range")]
    Param { name: &'static str, value: f64 },
}

/// Component powers in watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    /// Depth sensor while capturing.
    pub p_tof: f64,
    /// Processor and memory idling while the sensor captures.
    pub p_idle: f64,
    /// Processor active while estimating depth.
    pub p_core: f64,
    /// Memory active while estimating depth.
    pub p_mem: f64,
}

impl PowerParams {
    pub const P_TOF_RANGE: (f64, f64) = (0.1, 50.0);

    pub fn with_tof(p_tof: f64) -> Self {
        Self {
            p_tof,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PowerError> {
        let (lo, hi) = Self::P_TOF_RANGE;
        if !(self.p_tof >= lo && self.p_tof <= hi) {
            return Err(PowerError::Param {
                name: "p_tof",
                value: self.p_tof,
            });
        }
        for (name, value) in [
            ("p_idle", self.p_idle),
            ("p_core", self.p_core),
            ("p_mem", self.p_mem),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(PowerError::Param { name, value });
            }
        }
        Ok(())
    }
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            p_tof: 5.0,
            p_idle: 0.19,
            p_core: 0.63,
            p_mem: 0.06,
        }
    }
}

/// `DC/100 · (P_tof + P_idle) + (1 − DC/100) · (P_core + P_mem)`.
pub fn system_power(duty_cycle_percent: f64, p: &PowerParams) -> Result<f64, PowerError> {
    if !(0.0..=100.0).contains(&duty_cycle_percent) {
        return Err(PowerError::DutyCycle(duty_cycle_percent));
    }
    p.validate()?;
    let on = duty_cycle_percent / 100.0;
    Ok(on * (p.p_tof + p.p_idle) + (1.0 - on) * (p.p_core + p.p_mem))
}

/// Saving in percent relative to running the sensor alone on every frame.
pub fn reduction_vs_tof(duty_cycle_percent: f64, p: &PowerParams) -> Result<f64, PowerError> {
    Ok(100.0 * (1.0 - system_power(duty_cycle_percent, p)? / p.p_tof))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let p5 = PowerParams::with_tof(5.0);
        assert!((system_power(100.0, &p5).unwrap() - 5.19).abs() < 1e-12);
        assert!((system_power(0.0, &p5).unwrap() - 0.69).abs() < 1e-12);
        assert!((system_power(15.0, &p5).unwrap() - 1.365).abs() < 1e-12);
        assert!((reduction_vs_tof(15.0, &p5).unwrap() - 72.7).abs() < 1e-9);
        let p1 = PowerParams::with_tof(1.0);
        assert!((reduction_vs_tof(15.0, &p1).unwrap() - 23.5).abs() < 1e-9);
        assert!((reduction_vs_tof(100.0, &p5).unwrap() + 100.0 * 0.19 / 5.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = PowerParams::default();
        assert_eq!(system_power(101.0, &p), Err(PowerError::DutyCycle(101.0)));
        assert!(system_power(-1.0, &p).is_err());
        assert!(reduction_vs_tof(10.0, &PowerParams::with_tof(0.0)).is_err());
        assert!(system_power(10.0, &PowerParams { p_mem: -0.1, ..p }).is_err());
    }

    #[test]
    fn monotone_in_duty_cycle_and_tof() {
        let p = PowerParams::default();
        let mut last = f64::NEG_INFINITY;
        for dc in 0..=100 {
            let s = system_power(dc as f64, &p).unwrap();
            assert!(s > last);
            last = s;
        }
        let mut last = f64::NEG_INFINITY;
        for t in 1..=50 {
            let r = reduction_vs_tof(30.0, &PowerParams::with_tof(t as f64)).unwrap();
            assert!(r > last);
            last = r;
        }
    }
}
