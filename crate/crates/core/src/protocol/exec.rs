use std::ops::Range;
use std::sync::Arc;

use super::ProtocolError;
use crate::circuitdsl::{validate, CircuitSpec, Statement};
use crate::detection::{ClickPattern, Detector, DetectorConfig};
use crate::fock::{ModeLayout, PureState, StateEnsemble};
use crate::optics::{
    apply_loss, apply_unitary, cpbs, hwp, pbs, phase, qwp, spectral_overlap, LossChannel,
    ModeUnitary,
};
use crate::sources::{spdc_pair, SpdcParams};

/// Default pair-number truncation when a circuit does not set one.
pub const DEFAULT_TRUNCATION: u8 = 2;

/// One compiled field operation. Unitaries are already expanded to every
/// spectral bin of the layout.
#[derive(Clone, Debug)]
pub enum Op {
    Unitary(ModeUnitary),
    Loss(LossChannel),
}

impl Op {
    pub fn touches(&self, spatial: u32) -> bool {
        match self {
            Op::Unitary(u) => u.modes().iter().any(|m| m.spatial == spatial),
            Op::Loss(l) => l.spatial == spatial,
        }
    }

    /// Spatial modes the operation acts on.
    pub fn spatial(&self) -> Vec<u32> {
        match self {
            Op::Unitary(u) => {
                let mut v: Vec<u32> = u.modes().iter().map(|m| m.spatial).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
            Op::Loss(l) => vec![l.spatial],
        }
    }

    pub fn apply(&self, ens: &StateEnsemble) -> Result<StateEnsemble, ProtocolError> {
        Ok(match self {
            Op::Unitary(u) => ens.map_states(|s| apply_unitary(s, u))?,
            Op::Loss(l) => apply_loss(ens, l)?,
        })
    }
}

/// A named acceptance condition: every detector in `clicks` fires and every
/// detector in `silent` stays dark.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Herald {
    pub name: String,
    pub clicks: ClickPattern,
    pub silent: ClickPattern,
}

impl Herald {
    pub fn accepts(&self, pattern: ClickPattern) -> bool {
        pattern.0 & self.clicks.0 == self.clicks.0 && pattern.0 & self.silent.0 == 0
    }

    /// Detectors the herald constrains either way.
    pub fn constrained(&self) -> u32 {
        self.clicks.0 | self.silent.0
    }
}

/// A validated circuit ready to run.
#[derive(Clone, Debug)]
pub struct Executable {
    pub layout: Arc<ModeLayout>,
    pub n_max: u8,
    pub sources: Vec<SpdcParams>,
    pub ops: Vec<Op>,
    pub detectors: DetectorConfig,
    pub heralds: Vec<Herald>,
}

/// Validates `spec` and lowers it to sources, field operations, detectors
/// and heralds.
pub fn compile(spec: &CircuitSpec) -> Result<Executable, ProtocolError> {
    let violations = validate(spec);
    if !violations.is_empty() {
        return Err(ProtocolError::Invalid(violations));
    }
    let bins = spec.spectral_bins();
    let layout = Arc::new(ModeLayout::numbered(spec.modes.unwrap_or(0), bins)?);
    let n_max = spec.truncation.unwrap_or(DEFAULT_TRUNCATION);

    let mut sources = Vec::new();
    let mut ops = Vec::new();
    let mut dets = Vec::new();
    let element = |u: ModeUnitary| Op::Unitary(u.on_all_bins(bins));
    for st in &spec.statements {
        match st {
            Statement::Source(s) => {
                let mut p = SpdcParams::new(s.a, s.b, s.epsilon);
                p.gamma = s.gamma_or_default();
                p.n_max = n_max;
                if let Some(state) = s.state {
                    p.state = state;
                }
                p.validate()?;
                sources.push(p);
            }
            Statement::Hwp { mode, angle_deg } => ops.push(element(hwp(*mode, angle_deg.to_radians())?)),
            Statement::Qwp { mode, angle_deg } => ops.push(element(qwp(*mode, angle_deg.to_radians())?)),
            Statement::Phase { mode, pol, phi } => ops.push(element(phase(*mode, *pol, *phi)?)),
            Statement::Pbs { a, b } => ops.push(element(pbs(*a, *b)?)),
            Statement::Cpbs { a, b } => ops.extend(cpbs(*a, *b)?.into_iter().map(element)),
            Statement::Loss { mode, eta } => ops.push(Op::Loss(LossChannel::new(*mode, *eta)?)),
            Statement::Overlap { mode, v } => ops.push(Op::Unitary(spectral_overlap(*mode, *v)?)),
            Statement::Detector(d) => {
                let mut det = Detector::new(d.mode, d.pol, d.eff);
                if let Some(dark) = d.dark {
                    det = det.with_dark(dark);
                }
                dets.push(det);
            }
            Statement::Herald(_) => {}
        }
    }
    let detectors = DetectorConfig::new(dets)?;

    let heralds = spec
        .heralds()
        .map(|h| {
            let mut clicks = 0u32;
            let mut spatial = Vec::new();
            for label in &h.clicks {
                // validate() guarantees the label exists
                let i = detectors.position(label).expect("validated herald label");
                clicks |= 1 << i;
                spatial.push(detectors.detectors()[i].spatial);
            }
            let silent = detectors
                .detectors()
                .iter()
                .enumerate()
                .filter(|(i, d)| clicks >> i & 1 == 0 && spatial.contains(&d.spatial))
                .fold(0u32, |m, (i, _)| m | 1 << i);
            Herald {
                name: h.name.clone(),
                clicks: ClickPattern(clicks),
                silent: ClickPattern(silent),
            }
        })
        .collect();

    Ok(Executable {
        layout,
        n_max,
        sources,
        ops,
        detectors,
        heralds,
    })
}

/// Adds `overlap b v=V` after the sources for the second input `b` of
/// every beam splitter that joins photons from two different sources.
/// Any existing overlap statements are replaced.
pub fn enable_partial_distinguishability(spec: &CircuitSpec, v: f64) -> CircuitSpec {
    let mut out = spec.clone();
    out.statements.retain(|s| !matches!(s, Statement::Overlap { .. }));
    let source_of = |m: u32| {
        out.statements.iter().position(|s| matches!(s, Statement::Source(d) if d.a == m || d.b == m))
    };
    let mut modes = Vec::new();
    for st in &out.statements {
        if let Statement::Pbs { a, b } | Statement::Cpbs { a, b } = st {
            let (sa, sb) = (source_of(*a), source_of(*b));
            if sa.is_some() && sb.is_some() && sa != sb && !modes.contains(b) {
                modes.push(*b);
            }
        }
    }
    if v < 1.0 {
        let at = out.after_sources();
        for (k, mode) in modes.into_iter().enumerate() {
            out.statements.insert(at + k, Statement::Overlap { mode, v });
        }
    }
    out
}

impl Executable {
    /// Product of all source states on the full layout; unsourced modes
    /// start in vacuum.
    pub fn initial_state(&self) -> Result<StateEnsemble, ProtocolError> {
        Ok(StateEnsemble::pure(self.source_state(|_| true)?))
    }

    /// Product of the sources selected by `keep`, on the full layout.
    pub fn source_state<F: Fn(&SpdcParams) -> bool>(&self, keep: F) -> Result<PureState, ProtocolError> {
        let bins = self.layout.spectral_bins();
        let mut joint: Option<PureState> = None;
        for p in self.sources.iter().filter(|p| keep(p)) {
            let src = spdc_pair(p, bins)?.state;
            joint = Some(match joint {
                Some(j) => j.tensor(&src)?,
                None => src,
            });
        }
        Ok(match joint {
            Some(j) => j.embed(&self.layout)?,
            None => PureState::vacuum(self.layout.clone()),
        })
    }

    /// Applies `ops[range]` in order.
    pub fn run_ops(
        &self,
        mut ens: StateEnsemble,
        range: Range<usize>,
    ) -> Result<StateEnsemble, ProtocolError> {
        for op in &self.ops[range] {
            ens = op.apply(&ens)?;
        }
        Ok(ens)
    }

    /// Applies the listed operations in order.
    pub fn run_indices(&self, mut ens: StateEnsemble, ops: &[usize]) -> Result<StateEnsemble, ProtocolError> {
        for &i in ops {
            ens = self.ops[i].apply(&ens)?;
        }
        Ok(ens)
    }

    /// Sources followed by every operation.
    pub fn evolve(&self) -> Result<StateEnsemble, ProtocolError> {
        self.run_ops(self.initial_state()?, 0..self.ops.len())
    }

    /// Index of the first operation acting on `spatial`, or `ops.len()`.
    pub fn first_op_touching(&self, spatial: u32) -> usize {
        self.ops
            .iter()
            .position(|op| op.touches(spatial))
            .unwrap_or(self.ops.len())
    }

    pub fn herald(&self, name: &str) -> Option<&Herald> {
        self.heralds.iter().find(|h| h.name == name)
    }

    /// Spatial modes whose detectors no herald constrains (the output
    /// modes of a heralded source), in ascending order.
    pub fn unheralded_modes(&self) -> Vec<u32> {
        let constrained = self.heralds.iter().fold(0u32, |m, h| m | h.constrained());
        let mut out: Vec<u32> = self
            .detectors
            .detectors()
            .iter()
            .enumerate()
            .filter(|(i, _)| constrained >> i & 1 == 0)
            .map(|(_, d)| d.spatial)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}
