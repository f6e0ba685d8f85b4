//! Model container plus MPS and LP text formats.

mod lp_format;
mod model;
mod mps;

pub use lp_format::export_lp;
pub use model::{
    Constraint, ConstraintId, HullCutPlan, HullNeuron, MipModel, ModelStats, ObjSense, Objective,
    Role, Sense, VarId, VarKind, VarMeta, Variable,
};
pub use mps::{export_mps, parse_mps};

/// Shortest decimal text that parses back to exactly the same `f64`.
pub(crate) fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let a = v.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
