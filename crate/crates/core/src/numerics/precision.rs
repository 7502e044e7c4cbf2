use serde::{Deserialize, Serialize};

/// Arithmetic width used inside a [`Graph`](super::Graph).
///
/// Single precision is emulated: every op output and every gradient is
/// rounded to the nearest `f32` before it is stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    Single,
    Double,
}

impl Arithmetic {
    pub fn round(self, v: f64) -> f64 {
        match self {
            Arithmetic::Single => v as f32 as f64,
            Arithmetic::Double => v,
        }
    }

    pub fn round_slice(self, values: &mut [f64]) {
        if self == Arithmetic::Single {
            for v in values {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// How a model splits work between single and double precision.
///
/// * `Single`: forward, backward, parameters and optimizer state all single.
/// * `Double`: everything double.
/// * `Mixed`: parameters and optimizer moments are double-precision masters;
///   each forward pass sees a single-precision copy and runs single-precision
///   arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrecisionMode {
    Single,
    Double,
    #[default]
    Mixed,
}

impl PrecisionMode {
    /// Arithmetic used by forward and backward passes.
    pub fn compute(self) -> Arithmetic {
        match self {
            PrecisionMode::Double => Arithmetic::Double,
            PrecisionMode::Single | PrecisionMode::Mixed => Arithmetic::Single,
        }
    }

    /// Arithmetic used for parameter storage and optimizer state.
    pub fn storage(self) -> Arithmetic {
        match self {
            PrecisionMode::Single => Arithmetic::Single,
            PrecisionMode::Double | PrecisionMode::Mixed => Arithmetic::Double,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PrecisionMode::Single => "single",
            PrecisionMode::Double => "double",
            PrecisionMode::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for PrecisionMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "single" => Ok(PrecisionMode::Single),
            "double" => Ok(PrecisionMode::Double),
            "mixed" => Ok(PrecisionMode::Mixed),
            other => Err(crate::Error::Config(format!(
                "unknown precision mode '{other}' (expected single, double or mixed)"
            ))),
        }
    }
}

impl std::fmt::Display for PrecisionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rounding_drops_low_bits() {
        let x = 0.1_f64;
        let r = Arithmetic::Single.round(x);
        assert_ne!(r, x);
        assert_eq!(r, 0.1_f32 as f64);
        assert_eq!(Arithmetic::Double.round(x), x);
    }

    #[test]
    fn mixed_splits_compute_and_storage() {
        assert_eq!(PrecisionMode::Mixed.compute(), Arithmetic::Single);
        assert_eq!(PrecisionMode::Mixed.storage(), Arithmetic::Double);
        assert_eq!(
            "mixed".parse::<PrecisionMode>().unwrap(),
            PrecisionMode::Mixed
        );
        assert!("bf16".parse::<PrecisionMode>().is_err());
    }
}
