use std::fmt::Write;

use super::{CircuitSpec, Statement};

/// Canonical text: one statement per line, single spaces, option keys in
/// alphabetical order, shortest round-trip number formatting.
pub fn serialize(spec: &CircuitSpec) -> String {
    let mut out = String::new();
    if let Some(n) = spec.modes {
        let _ = writeln!(out, "modes {n}");
    }
    if let Some(k) = spec.truncation {
        let _ = writeln!(out, "truncation {k}");
    }
    for s in &spec.statements {
        out.push_str(&statement(s));
        out.push('\n');
    }
    out
}

fn statement(s: &Statement) -> String {
    match s {
        Statement::Source(d) => {
            let mut t = format!("source {} {} epsilon={}", d.a, d.b, d.epsilon);
            if let Some(g) = d.gamma {
                let _ = write!(t, " gamma={g}");
            }
            if let Some(st) = d.state {
                let _ = write!(t, " state={}", st.label());
            }
            t
        }
        Statement::Hwp { mode, angle_deg } => format!("hwp {mode} angle={angle_deg}"),
        Statement::Qwp { mode, angle_deg } => format!("qwp {mode} angle={angle_deg}"),
        Statement::Phase { mode, pol, phi } => format!("phase {mode} phi={phi} pol={pol}"),
        Statement::Pbs { a, b } => format!("pbs {a} {b}"),
        Statement::Cpbs { a, b } => format!("cpbs {a} {b}"),
        Statement::Loss { mode, eta } => format!("loss {mode} eta={eta}"),
        Statement::Overlap { mode, v } => format!("overlap {mode} v={v}"),
        Statement::Detector(d) => {
            let mut t = format!("detector {}", d.mode);
            if let Some(dark) = d.dark {
                let _ = write!(t, " dark={dark}");
            }
            let _ = write!(t, " eff={}", d.eff);
            if let Some(p) = d.pol {
                let _ = write!(t, " pol={p}");
            }
            t
        }
        Statement::Herald(h) => format!("herald {} = clicks({})", h.name, h.clicks.join(",")),
    }
}
