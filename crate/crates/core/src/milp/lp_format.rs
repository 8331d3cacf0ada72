//! Export in the textual LP file format read by CPLEX, Gurobi, HiGHS and
//! friends.

use std::fmt::Write as _;

use super::model::{RowSense, VarRef};
use super::{EquipMode, PlacementModel};

fn coeff(out: &mut String, c: f64, name: &str, first: bool) {
    let sign = if c < 0.0 {
        " -"
    } else if first {
        ""
    } else {
        " +"
    };
    let mag = c.abs();
    if mag == 1.0 {
        let _ = write!(out, "{sign} {name}");
    } else {
        let _ = write!(out, "{sign} {mag} {name}");
    }
}

/// Writes the full program, one row per line.
pub fn write_lp(model: &PlacementModel) -> String {
    let mut out = String::from("\\ QKD link equipping and cooling placement\nMinimize\n obj:");
    let mut first = true;
    for e in 0..model.edge_count() {
        coeff(&mut out, 1.0, &model.var_name(VarRef::Equip(e)), first);
        first = false;
    }
    if model.cooling_cost != 0.0 {
        for n in 0..model.node_count() {
            coeff(&mut out, model.cooling_cost, &model.var_name(VarRef::Cool(n)), first);
        }
    }
    out.push_str("\nSubject To\n");
    for row in model.rows() {
        let _ = write!(out, " {}:", row.name);
        for (i, (v, c)) in row.terms.iter().enumerate() {
            coeff(&mut out, *c, &model.var_name(*v), i == 0);
        }
        let op = match row.sense {
            RowSense::Le => "<=",
            RowSense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("Bounds\n");
    for v in model.flow_vars() {
        let _ = writeln!(out, " {} >= 0", model.var_name(v));
    }
    if let EquipMode::Integer { max_links } = model.options.equip_mode {
        for e in 0..model.edge_count() {
            let _ = writeln!(out, " 0 <= {} <= {max_links}", model.var_name(VarRef::Equip(e)));
        }
    }
    out.push_str("Binary\n");
    if model.options.equip_mode == EquipMode::Binary {
        for e in 0..model.edge_count() {
            let _ = writeln!(out, " {}", model.var_name(VarRef::Equip(e)));
        }
    }
    for n in 0..model.node_count() {
        let _ = writeln!(out, " {}", model.var_name(VarRef::Cool(n)));
    }
    let mut generals: Vec<String> = Vec::new();
    if let EquipMode::Integer { .. } = model.options.equip_mode {
        generals.extend((0..model.edge_count()).map(|e| model.var_name(VarRef::Equip(e))));
    }
    if model.options.integral_flows {
        generals.extend(model.flow_vars().map(|v| model.var_name(v)));
    }
    if !generals.is_empty() {
        out.push_str("General\n");
        for g in generals {
            let _ = writeln!(out, " {g}");
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::tests::two_node_graph;
    use crate::milp::{build_demands, build_model, ModelOptions};

    #[test]
    fn two_node_export_sections() {
        let g = two_node_graph(20e3, 30e3);
        let k = build_demands(&g, 8000.0).unwrap();
        let m = build_model(&g, &k, 0.5, ModelOptions::default()).unwrap();
        let lp = write_lp(&m);
        for section in ["Minimize", "Subject To", "Bounds", "Binary", "End"] {
            assert!(lp.lines().any(|l| l == section), "missing {section}");
        }
        assert!(lp.contains(" obj: d_0_1 + d_1_0 + 0.5 xi_0 + 0.5 xi_1"));
        assert!(lp.contains("cold_0_1: x_0_1_0_1 + x_1_0_0_1 - 30000 d_0_1 <= 0"));
        assert!(lp.contains("src_0_1: x_0_1_0_1 + x_1_0_1_0 = 16000"));
        assert!(!lp.contains("General"));
    }
}
