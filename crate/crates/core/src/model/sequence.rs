//! Deterministic site sequences `a(n)`, `c(n)`, `d_n`.

use super::ModelError;

#[derive(Debug, Clone, PartialEq)]
pub enum SequenceSpec {
    Constant(f64),
    /// `values[n mod len]`, with `n = 0` reading `values[0]`.
    Periodic(Vec<f64>),
    /// `values[n - start]` inside the list; the end values are repeated outside.
    List { start: i64, values: Vec<f64> },
    /// `min(1, C|n|^{-ζ})` for `n ≠ 0` and `1` at the origin.
    PowerLaw { c: f64, zeta: f64 },
}

impl SequenceSpec {
    pub fn value(&self, n: i64) -> f64 {
        match self {
            SequenceSpec::Constant(v) => *v,
            SequenceSpec::Periodic(values) => values[n.rem_euclid(values.len() as i64) as usize],
            SequenceSpec::List { start, values } => {
                let idx = (n - start).clamp(0, values.len() as i64 - 1);
                values[idx as usize]
            }
            SequenceSpec::PowerLaw { c, zeta } => {
                if n == 0 {
                    1.0
                } else {
                    (c * (n.unsigned_abs() as f64).powf(-zeta)).min(1.0)
                }
            }
        }
    }

    /// `sup_n |value(n)|`.
    pub fn sup_abs(&self) -> f64 {
        match self {
            SequenceSpec::Constant(v) => v.abs(),
            SequenceSpec::Periodic(values) | SequenceSpec::List { values, .. } => {
                values.iter().fold(0.0, |m, v| m.max(v.abs()))
            }
            SequenceSpec::PowerLaw { .. } => 1.0,
        }
    }

    /// `inf_n value(n)`.
    pub fn inf(&self) -> f64 {
        match self {
            SequenceSpec::Constant(v) => *v,
            SequenceSpec::Periodic(values) | SequenceSpec::List { values, .. } => {
                values.iter().cloned().fold(f64::INFINITY, f64::min)
            }
            SequenceSpec::PowerLaw { c, zeta } => {
                if *zeta == 0.0 {
                    c.min(1.0)
                } else {
                    0.0
                }
            }
        }
    }

    fn check_shape(&self, name: &str) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidSequence(format!("{name}: {msg}")));
        match self {
            SequenceSpec::Constant(v) if !v.is_finite() => bad(format!("value {v} is not finite")),
            SequenceSpec::Periodic(values) | SequenceSpec::List { values, .. }
                if values.is_empty() =>
            {
                bad("empty value list".into())
            }
            SequenceSpec::Periodic(values) | SequenceSpec::List { values, .. }
                if values.iter().any(|v| !v.is_finite()) =>
            {
                bad("non-finite entry".into())
            }
            SequenceSpec::PowerLaw { c, zeta } if !(c.is_finite() && *c > 0.0) => {
                bad(format!("power-law constant {c} must be positive"))
            }
            SequenceSpec::PowerLaw { zeta, .. } if !(0.0..0.5).contains(zeta) => {
                bad(format!("power-law exponent {zeta} outside [0, 1/2)"))
            }
            _ => Ok(()),
        }
    }

    /// Hopping sequence: bounded and `≥ δ > 0`. Returns `(δ, ‖a‖_∞)`.
    pub fn validate_hopping(&self) -> Result<(f64, f64), ModelError> {
        self.check_shape("a")?;
        let delta = self.inf();
        if !(delta > 0.0) {
            return Err(ModelError::InvalidSequence(format!(
                "a: infimum {delta} must be strictly positive"
            )));
        }
        Ok((delta, self.sup_abs()))
    }

    /// Background sequence: bounded. Returns `‖c‖_∞`.
    pub fn validate_background(&self) -> Result<f64, ModelError> {
        self.check_shape("c")?;
        Ok(self.sup_abs())
    }

    /// Damping sequence: values in `(0, 1]`.
    pub fn validate_damping(&self) -> Result<(), ModelError> {
        self.check_shape("d")?;
        let ok = match self {
            SequenceSpec::Constant(v) => *v > 0.0 && *v <= 1.0,
            SequenceSpec::Periodic(values) | SequenceSpec::List { values, .. } => {
                values.iter().all(|v| *v > 0.0 && *v <= 1.0)
            }
            SequenceSpec::PowerLaw { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidSequence("d: values must lie in (0, 1]".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_law_values() {
        let d = SequenceSpec::PowerLaw { c: 1.0, zeta: 0.25 };
        assert_eq!(d.value(0), 1.0);
        assert_eq!(d.value(1), 1.0);
        assert!((d.value(-16) - 0.5).abs() < 1e-15);
        assert!((d.value(81) - 1.0 / 3.0).abs() < 1e-15);
        let capped = SequenceSpec::PowerLaw { c: 3.0, zeta: 0.25 };
        assert_eq!(capped.value(16), 1.0);
        assert!(d.validate_damping().is_ok());
        assert!(d.validate_hopping().is_err());
    }

    #[test]
    fn periodic_and_list_indexing() {
        let p = SequenceSpec::Periodic(vec![1.0, -1.0]);
        assert_eq!(p.value(0), 1.0);
        assert_eq!(p.value(-1), -1.0);
        assert_eq!(p.value(7), -1.0);
        let l = SequenceSpec::List { start: -1, values: vec![2.0, 3.0, 4.0] };
        assert_eq!(l.value(-5), 2.0);
        assert_eq!(l.value(0), 3.0);
        assert_eq!(l.value(9), 4.0);
        assert_eq!(l.validate_hopping().unwrap(), (2.0, 4.0));
    }

    #[test]
    fn rejects_bad_sequences() {
        assert!(SequenceSpec::Constant(0.0).validate_hopping().is_err());
        assert!(SequenceSpec::Constant(1.5).validate_damping().is_err());
        assert!(SequenceSpec::PowerLaw { c: 1.0, zeta: 0.5 }.validate_damping().is_err());
        assert!(SequenceSpec::Periodic(vec![]).validate_background().is_err());
    }
}
