use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::{CircuitSpec, Statement};
use crate::detection::MAX_DETECTORS;
use crate::fock::Pol;

/// One consistency problem. `statement` indexes `CircuitSpec::statements`
/// (`None` for whole-file problems).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub statement: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.statement {
            Some(i) => write!(f, "statement {}: {}", i + 1, self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Checks mode references, ordering, pairing and detector/herald
/// consistency. An empty list means the circuit can be executed.
pub fn validate(spec: &CircuitSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |statement: Option<usize>, message: String| {
        out.push(Violation { statement, message })
    };
    let declared = match spec.modes {
        Some(n) => n,
        None => {
            push(None, "no `modes` declaration".into());
            0
        }
    };

    let mut sourced: BTreeMap<u32, usize> = BTreeMap::new();
    let mut touched: BTreeSet<u32> = BTreeSet::new();
    let mut detected: BTreeMap<u32, usize> = BTreeMap::new();
    let mut labels: BTreeMap<String, (usize, u32, Option<Pol>)> = BTreeMap::new();
    let mut herald_names: BTreeSet<&str> = BTreeSet::new();
    let mut detector_count = 0;

    for (i, st) in spec.statements.iter().enumerate() {
        let at = Some(i);
        for m in st.modes() {
            if m > declared {
                push(at, format!("`{}` refers to undeclared mode {m}", st.keyword()));
            }
        }
        if let Statement::Pbs { a, b } | Statement::Cpbs { a, b } = st {
            if a == b {
                push(at, format!("`{}` needs two different modes, got {a} twice", st.keyword()));
            }
        }
        match st {
            Statement::Source(s) => {
                if s.a == s.b {
                    push(at, format!("source needs two different modes, got {} twice", s.a));
                }
                for m in [s.a, s.b] {
                    if let Some(prev) = sourced.insert(m, i) {
                        push(at, format!("mode {m} already fed by statement {}", prev + 1));
                    }
                    if touched.contains(&m) {
                        push(at, format!("source on mode {m} comes after an element acting on it"));
                    }
                }
            }
            Statement::Detector(d) => {
                detector_count += 1;
                let label = d.label();
                if let Some((prev, _, _)) = labels.get(&label) {
                    push(at, format!("detector {label} already declared at statement {}", prev + 1));
                } else {
                    let clash = labels
                        .iter()
                        .find(|(_, (_, m, p))| *m == d.mode && (d.pol.is_none() || p.is_none()));
                    if let Some((other, _)) = clash {
                        push(at, format!("detector {label} overlaps detector {other} on mode {}", d.mode));
                    }
                    labels.insert(label, (i, d.mode, d.pol));
                }
                detected.entry(d.mode).or_insert(i);
            }
            Statement::Herald(h) => {
                if !herald_names.insert(&h.name) {
                    push(at, format!("herald name `{}` used twice", h.name));
                }
                let mut seen = BTreeSet::new();
                for c in &h.clicks {
                    if !seen.insert(c) {
                        push(at, format!("herald `{}` lists detector {c} twice", h.name));
                    }
                }
            }
            _ => {
                for m in st.modes() {
                    if let Some(d) = detected.get(&m) {
                        push(
                            at,
                            format!(
                                "`{}` acts on mode {m} after its detector (statement {})",
                                st.keyword(),
                                d + 1
                            ),
                        );
                    }
                    touched.insert(m);
                }
            }
        }
    }
    // heralds may precede detector declarations; check references last
    for (i, st) in spec.statements.iter().enumerate() {
        if let Statement::Herald(h) = st {
            for c in &h.clicks {
                if !labels.contains_key(c) {
                    push(Some(i), format!("herald `{}` references unknown detector {c}", h.name));
                }
            }
        }
    }
    if detector_count > MAX_DETECTORS {
        push(None, format!("{detector_count} detectors exceed the limit of {MAX_DETECTORS}"));
    }
    out
}
