//! CPLEX-LP style text export.

use std::fmt::Write as _;

use super::fmt_num;
use super::model::{MipModel, ObjSense, Sense, VarId, VarKind};

const TERMS_PER_LINE: usize = 8;

fn write_terms(out: &mut String, model: &MipModel, terms: &[(VarId, f64)]) {
    if terms.is_empty() {
        out.push_str(" 0");
        return;
    }
    for (k, &(v, c)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 || (c == 0.0 && c.is_sign_negative()) { '-' } else { '+' };
        let name = &model.variable(v).name;
        let mag = c.abs();
        if k == 0 && sign == '+' {
            let _ = write!(out, " {} {}", fmt_num(mag), name);
        } else {
            let _ = write!(out, " {} {} {}", sign, fmt_num(mag), name);
        }
    }
}

pub fn export_lp(model: &MipModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name);
    out.push_str(match model.objective().sense {
        ObjSense::Minimize => "Minimize\n",
        ObjSense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    write_terms(&mut out, model, &model.objective().terms);
    out.push_str("\nSubject To\n");
    for c in model.constraints() {
        let _ = write!(out, " {}:", c.name);
        write_terms(&mut out, model, &c.terms);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {} {}", op, fmt_num(c.rhs));
    }
    out.push_str("Bounds\n");
    for v in model.variables() {
        if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
            continue;
        }
        let (lo, hi) = (v.lower, v.upper);
        if lo == hi {
            let _ = writeln!(out, " {} = {}", v.name, fmt_num(lo));
        } else if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            let _ = writeln!(out, " {} free", v.name);
        } else {
            let lo_s = if lo == f64::NEG_INFINITY { "-inf".to_string() } else { fmt_num(lo) };
            let hi_s = if hi == f64::INFINITY { "+inf".to_string() } else { fmt_num(hi) };
            let _ = writeln!(out, " {} <= {} <= {}", lo_s, v.name, hi_s);
        }
    }
    let binaries: Vec<&str> = model
        .variables()
        .iter()
        .filter(|v| v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0)
        .map(|v| v.name.as_str())
        .collect();
    let generals: Vec<&str> = model
        .variables()
        .iter()
        .filter(|v| v.kind.is_integral() && !(v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0))
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for b in binaries {
            let _ = writeln!(out, " {b}");
        }
    }
    if !generals.is_empty() {
        out.push_str("Generals\n");
        for g in generals {
            let _ = writeln!(out, " {g}");
        }
    }
    out.push_str("End\n");
    out
}
