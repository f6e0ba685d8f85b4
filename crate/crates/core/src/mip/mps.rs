//! Free-format MPS export and import.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::model::{MipModel, ObjSense, Sense, VarId, VarKind, OBJECTIVE_ROW};
use super::fmt_num;
use crate::error::{Error, Result};

pub fn export_mps(model: &MipModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "NAME {}", model.name);
    if model.objective().sense == ObjSense::Maximize {
        out.push_str("OBJSENSE\n    MAX\n");
    }
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N {OBJECTIVE_ROW}");
    for c in model.constraints() {
        let tag = match c.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {tag} {}", c.name);
    }

    let n = model.num_vars();
    let mut columns: Vec<Vec<(&str, f64)>> = vec![Vec::new(); n];
    for &(v, c) in &model.objective().terms {
        columns[v.0].push((OBJECTIVE_ROW, c));
    }
    for con in model.constraints() {
        for &(v, c) in &con.terms {
            columns[v.0].push((con.name.as_str(), c));
        }
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    for (j, var) in model.variables().iter().enumerate() {
        let integral = var.kind.is_integral();
        if integral && !in_int {
            out.push_str("    MARKER 'MARKER' 'INTORG'\n");
            in_int = true;
        } else if !integral && in_int {
            out.push_str("    MARKER 'MARKER' 'INTEND'\n");
            in_int = false;
        }
        if columns[j].is_empty() {
            let _ = writeln!(out, "    {} {OBJECTIVE_ROW} 0", var.name);
        }
        for (row, c) in &columns[j] {
            let _ = writeln!(out, "    {} {} {}", var.name, row, fmt_num(*c));
        }
    }
    if in_int {
        out.push_str("    MARKER 'MARKER' 'INTEND'\n");
    }

    out.push_str("RHS\n");
    for c in model.constraints() {
        if c.rhs != 0.0 {
            let _ = writeln!(out, "    RHS {} {}", c.name, fmt_num(c.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for var in model.variables() {
        let name = &var.name;
        let (lo, hi) = (var.lower, var.upper);
        match var.kind {
            VarKind::Binary if lo == 0.0 && hi == 1.0 => {
                let _ = writeln!(out, " BV BND {name}");
            }
            VarKind::Binary | VarKind::Integer => {
                if lo == f64::NEG_INFINITY {
                    let _ = writeln!(out, " MI BND {name}");
                } else {
                    let _ = writeln!(out, " LO BND {name} {}", fmt_num(lo));
                }
                if hi == f64::INFINITY {
                    let _ = writeln!(out, " PL BND {name}");
                } else {
                    let _ = writeln!(out, " UP BND {name} {}", fmt_num(hi));
                }
            }
            VarKind::Continuous => {
                if lo == hi {
                    let _ = writeln!(out, " FX BND {name} {}", fmt_num(lo));
                    continue;
                }
                if lo == f64::NEG_INFINITY {
                    let _ = writeln!(out, " MI BND {name}");
                } else if lo != 0.0 {
                    let _ = writeln!(out, " LO BND {name} {}", fmt_num(lo));
                }
                if hi.is_finite() {
                    let _ = writeln!(out, " UP BND {name} {}", fmt_num(hi));
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
}

struct PendingVar {
    name: String,
    integral: bool,
    lower: Option<f64>,
    upper: Option<f64>,
    binary: bool,
    entries: Vec<(usize, f64)>,
    objective: f64,
}

/// Parses free-format MPS. Variable roles and hull-cut data are not
/// represented in MPS and come back empty.
pub fn parse_mps(text: &str) -> Result<MipModel> {
    let err = |line: usize, detail: String| Error::Mps { line, detail };
    let mut name = String::from("model");
    let mut sense = ObjSense::Minimize;
    let mut section = Section::None;
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut objective_row: Option<String> = None;
    let mut rhs: Vec<f64> = Vec::new();
    let mut vars: Vec<PendingVar> = Vec::new();
    let mut var_index: HashMap<String, usize> = HashMap::new();
    let mut in_int = false;
    let mut ended = false;

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = raw.trim_end();
        if line.trim().is_empty() || line.starts_with('*') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            match fields[0] {
                "NAME" => {
                    name = fields.get(1).map(|s| s.to_string()).unwrap_or_default();
                    section = Section::None;
                }
                "OBJSENSE" => {
                    section = Section::ObjSense;
                    if let Some(s) = fields.get(1) {
                        sense = parse_sense(s).ok_or_else(|| err(lineno, format!("bad OBJSENSE '{s}'")))?;
                    }
                }
                "ROWS" => section = Section::Rows,
                "COLUMNS" => section = Section::Columns,
                "RHS" => section = Section::Rhs,
                "RANGES" => section = Section::Ranges,
                "BOUNDS" => section = Section::Bounds,
                "ENDATA" => {
                    ended = true;
                    break;
                }
                other => return Err(err(lineno, format!("unknown section '{other}'"))),
            }
            continue;
        }
        match section {
            Section::None => return Err(err(lineno, "data line outside any section".into())),
            Section::ObjSense => {
                sense = parse_sense(fields[0])
                    .ok_or_else(|| err(lineno, format!("bad OBJSENSE '{}'", fields[0])))?;
            }
            Section::Rows => {
                if fields.len() != 2 {
                    return Err(err(lineno, "ROWS entries need a type and a name".into()));
                }
                let rname = fields[1].to_string();
                let s = match fields[0] {
                    "N" => {
                        if objective_row.is_none() {
                            objective_row = Some(rname);
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    t => return Err(err(lineno, format!("unknown row type '{t}'"))),
                };
                if row_index.contains_key(&rname) {
                    return Err(err(lineno, format!("duplicate row '{rname}'")));
                }
                row_index.insert(rname.clone(), rows.len());
                rows.push((rname, s));
                rhs.push(0.0);
            }
            Section::Columns => {
                if fields.len() >= 3 && fields[1] == "'MARKER'" {
                    match fields[2] {
                        "'INTORG'" => in_int = true,
                        "'INTEND'" => in_int = false,
                        m => return Err(err(lineno, format!("unknown marker {m}"))),
                    }
                    continue;
                }
                if fields.len() != 3 && fields.len() != 5 {
                    return Err(err(lineno, "COLUMNS entries need 3 or 5 fields".into()));
                }
                let vname = fields[0];
                let j = match var_index.get(vname) {
                    Some(&j) => j,
                    None => {
                        var_index.insert(vname.to_string(), vars.len());
                        vars.push(PendingVar {
                            name: vname.to_string(),
                            integral: in_int,
                            lower: None,
                            upper: None,
                            binary: false,
                            entries: Vec::new(),
                            objective: 0.0,
                        });
                        vars.len() - 1
                    }
                };
                for pair in fields[1..].chunks(2) {
                    let val = parse_num(pair[1]).ok_or_else(|| err(lineno, format!("bad number '{}'", pair[1])))?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        vars[j].objective += val;
                    } else if let Some(&r) = row_index.get(pair[0]) {
                        vars[j].entries.push((r, val));
                    } else {
                        return Err(err(lineno, format!("unknown row '{}'", pair[0])));
                    }
                }
            }
            Section::Rhs => {
                if fields.len() != 3 && fields.len() != 5 {
                    return Err(err(lineno, "RHS entries need 3 or 5 fields".into()));
                }
                for pair in fields[1..].chunks(2) {
                    let val = parse_num(pair[1]).ok_or_else(|| err(lineno, format!("bad number '{}'", pair[1])))?;
                    if Some(pair[0]) == objective_row.as_deref() {
                        continue;
                    }
                    let r = *row_index
                        .get(pair[0])
                        .ok_or_else(|| err(lineno, format!("unknown row '{}'", pair[0])))?;
                    rhs[r] = val;
                }
            }
            Section::Ranges => return Err(err(lineno, "RANGES are not supported".into())),
            Section::Bounds => {
                if fields.len() < 3 {
                    return Err(err(lineno, "BOUNDS entries need at least 3 fields".into()));
                }
                let j = *var_index
                    .get(fields[2])
                    .ok_or_else(|| err(lineno, format!("unknown column '{}'", fields[2])))?;
                let value = || -> Result<f64> {
                    let s = fields.get(3).ok_or_else(|| err(lineno, "missing bound value".into()))?;
                    parse_num(s).ok_or_else(|| err(lineno, format!("bad number '{s}'")))
                };
                let v = &mut vars[j];
                match fields[0] {
                    "LO" => v.lower = Some(value()?),
                    "UP" => v.upper = Some(value()?),
                    "FX" => {
                        let x = value()?;
                        v.lower = Some(x);
                        v.upper = Some(x);
                    }
                    "MI" => v.lower = Some(f64::NEG_INFINITY),
                    "PL" => v.upper = Some(f64::INFINITY),
                    "FR" => {
                        v.lower = Some(f64::NEG_INFINITY);
                        v.upper = Some(f64::INFINITY);
                    }
                    "BV" => {
                        v.binary = true;
                        v.integral = true;
                        v.lower = Some(0.0);
                        v.upper = Some(1.0);
                    }
                    t => return Err(err(lineno, format!("unsupported bound type '{t}'"))),
                }
            }
        }
    }
    if !ended {
        return Err(err(text.lines().count(), "missing ENDATA".into()));
    }

    let mut model = MipModel::new(name);
    let mut ids = Vec::with_capacity(vars.len());
    for v in &vars {
        let kind = if v.binary {
            VarKind::Binary
        } else if v.integral {
            VarKind::Integer
        } else {
            VarKind::Continuous
        };
        let lo = v.lower.unwrap_or(0.0);
        let hi = v.upper.unwrap_or(f64::INFINITY);
        ids.push(model.add_variable(v.name.clone(), kind, lo, hi)?);
    }
    let mut row_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); rows.len()];
    for (v, id) in vars.iter().zip(&ids) {
        for &(r, c) in &v.entries {
            row_terms[r].push((*id, c));
        }
    }
    for (((rname, s), terms), b) in rows.iter().zip(&row_terms).zip(&rhs) {
        model.add_constraint(rname.clone(), terms, *s, *b)?;
    }
    let obj: Vec<(VarId, f64)> = vars
        .iter()
        .zip(&ids)
        .filter(|(v, _)| v.objective != 0.0)
        .map(|(v, id)| (*id, v.objective))
        .collect();
    model.set_objective(sense, &obj)?;
    Ok(model)
}

fn parse_sense(s: &str) -> Option<ObjSense> {
    match s.to_ascii_uppercase().as_str() {
        "MAX" | "MAXIMIZE" => Some(ObjSense::Maximize),
        "MIN" | "MINIMIZE" => Some(ObjSense::Minimize),
        _ => None,
    }
}

fn parse_num(s: &str) -> Option<f64> {
    match s {
        "inf" | "Inf" | "+inf" | "infinity" | "Infinity" => Some(f64::INFINITY),
        "-inf" | "-Inf" | "-infinity" | "-Infinity" => Some(f64::NEG_INFINITY),
        _ => s.parse().ok(),
    }
}
