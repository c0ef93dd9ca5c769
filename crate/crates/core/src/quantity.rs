use std::fmt;

/// Where a reported number came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    ClosedForm,
    Quadrature,
    FiniteDifference,
    MonteCarlo { stderr: f64, n_paths: usize, seed: u64 },
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::ClosedForm => f.write_str("closed-form"),
            Provenance::Quadrature => f.write_str("quadrature"),
            Provenance::FiniteDifference => f.write_str("finite-difference"),
            Provenance::MonteCarlo { stderr, n_paths, seed } => {
                write!(f, "mc(se={stderr:e}, n={n_paths}, seed={seed})")
            }
        }
    }
}

/// A value tagged with its provenance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub provenance: Provenance,
}

impl Quantity {
    pub fn closed(value: f64) -> Self {
        Self { value, provenance: Provenance::ClosedForm }
    }

    pub fn stderr(&self) -> f64 {
        match self.provenance {
            Provenance::MonteCarlo { stderr, .. } => stderr,
            _ => 0.0,
        }
    }
}

/// A positive quantity that may legitimately be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            Extended::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::Infinite)
    }

    /// Whether `v` lies strictly below this bound.
    pub fn exceeds(self, v: f64) -> bool {
        match self {
            Extended::Finite(x) => v < x,
            Extended::Infinite => true,
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v}"),
            Extended::Infinite => f.write_str("inf"),
        }
    }
}
