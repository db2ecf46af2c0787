//! Line-oriented circuit description language (`.qc` files).
//!
//! ```text
//! # comment
//! modes 6
//! truncation 2
//! source 1 2 epsilon=0.02 [gamma=G] [state=phi+|phi-|psi+|psi-]
//! hwp 2 angle=22.5          # degrees
//! qwp 2 angle=45            # degrees
//! phase 2 pol=V phi=3.14159 # radians
//! pbs 2 3
//! cpbs 4 5
//! loss 3 eta=0.5
//! overlap 3 v=0.96
//! detector 2 eff=0.75 [dark=0] [pol=H|V]
//! herald name = clicks(2H,3H,4H,5H)
//! ```
//!
//! A detector with `pol=H` on mode 2 is labelled `2H`; without `pol` it is
//! labelled `2` and sees both polarizations. A herald requires each listed
//! detector to click and every other detector on the same spatial modes to
//! stay silent; detectors on other modes are unconstrained.

mod parse;
mod serialize;
mod validate;

pub use parse::{parse, ParseError};
pub use serialize::serialize;
pub use validate::{validate, Violation};

use crate::fock::Pol;
use crate::sources::PairState;

/// Largest spatial mode count accepted by `modes`.
pub const MAX_MODES: u32 = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct SourceDecl {
    pub a: u32,
    pub b: u32,
    pub epsilon: f64,
    pub gamma: Option<f64>,
    pub state: Option<PairState>,
}

impl SourceDecl {
    pub fn gamma_or_default(&self) -> f64 {
        self.gamma.unwrap_or(1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorDecl {
    pub mode: u32,
    pub pol: Option<Pol>,
    pub eff: f64,
    pub dark: Option<f64>,
}

impl DetectorDecl {
    pub fn label(&self) -> String {
        match self.pol {
            Some(p) => format!("{}{}", self.mode, p),
            None => self.mode.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeraldDecl {
    pub name: String,
    pub clicks: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Statement {
    Source(SourceDecl),
    Hwp { mode: u32, angle_deg: f64 },
    Qwp { mode: u32, angle_deg: f64 },
    Phase { mode: u32, pol: Pol, phi: f64 },
    Pbs { a: u32, b: u32 },
    Cpbs { a: u32, b: u32 },
    Loss { mode: u32, eta: f64 },
    Overlap { mode: u32, v: f64 },
    Detector(DetectorDecl),
    Herald(HeraldDecl),
}

impl Statement {
    /// Spatial modes the statement refers to directly.
    pub fn modes(&self) -> Vec<u32> {
        match self {
            Statement::Source(s) => vec![s.a, s.b],
            Statement::Hwp { mode, .. }
            | Statement::Qwp { mode, .. }
            | Statement::Phase { mode, .. }
            | Statement::Loss { mode, .. }
            | Statement::Overlap { mode, .. } => vec![*mode],
            Statement::Pbs { a, b } | Statement::Cpbs { a, b } => vec![*a, *b],
            Statement::Detector(d) => vec![d.mode],
            Statement::Herald(_) => vec![],
        }
    }

    /// True for optical elements and loss (everything that acts on the
    /// field between sources and detectors).
    pub fn is_element(&self) -> bool {
        !matches!(
            self,
            Statement::Source(_) | Statement::Detector(_) | Statement::Herald(_)
        )
    }

    pub fn keyword(&self) -> &'static str {
        match self {
            Statement::Source(_) => "source",
            Statement::Hwp { .. } => "hwp",
            Statement::Qwp { .. } => "qwp",
            Statement::Phase { .. } => "phase",
            Statement::Pbs { .. } => "pbs",
            Statement::Cpbs { .. } => "cpbs",
            Statement::Loss { .. } => "loss",
            Statement::Overlap { .. } => "overlap",
            Statement::Detector(_) => "detector",
            Statement::Herald(_) => "herald",
        }
    }
}

/// Parsed circuit: a mode count, an optional pair truncation and the
/// statements in file order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CircuitSpec {
    pub modes: Option<u32>,
    pub truncation: Option<u8>,
    pub statements: Vec<Statement>,
}

impl CircuitSpec {
    pub fn sources(&self) -> impl Iterator<Item = &SourceDecl> {
        self.statements.iter().filter_map(|s| match s {
            Statement::Source(d) => Some(d),
            _ => None,
        })
    }

    pub fn detectors(&self) -> impl Iterator<Item = &DetectorDecl> {
        self.statements.iter().filter_map(|s| match s {
            Statement::Detector(d) => Some(d),
            _ => None,
        })
    }

    pub fn heralds(&self) -> impl Iterator<Item = &HeraldDecl> {
        self.statements.iter().filter_map(|s| match s {
            Statement::Herald(h) => Some(h),
            _ => None,
        })
    }

    pub fn elements(&self) -> impl Iterator<Item = &Statement> {
        self.statements.iter().filter(|s| s.is_element())
    }

    /// Two spectral bins when any overlap element is present.
    pub fn spectral_bins(&self) -> usize {
        if self
            .statements
            .iter()
            .any(|s| matches!(s, Statement::Overlap { .. }))
        {
            2
        } else {
            1
        }
    }

    /// Position just after the last source statement.
    pub fn after_sources(&self) -> usize {
        self.statements
            .iter()
            .rposition(|s| matches!(s, Statement::Source(_)))
            .map_or(0, |i| i + 1)
    }
}
