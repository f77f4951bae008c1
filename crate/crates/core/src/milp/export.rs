//! MPS (fixed and free) and CPLEX LP writers.
//!
//! Output depends only on the model, in declaration order, so exports of the
//! same model are byte-identical.

use std::fmt::Write as _;

use super::{MilpModel, Sense, VarId, VarKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpsFormat {
    /// Column-positioned fields with generated 8-character names.
    Fixed,
    /// Whitespace-separated fields with the model's own names.
    Free,
}

pub fn fixed_col_name(j: VarId) -> String {
    format!("C{:07}", j + 1)
}

pub fn fixed_row_name(i: usize) -> String {
    format!("R{:07}", i + 1)
}

/// Shortest decimal form that fits in `width` characters.
fn num(v: f64, width: usize) -> String {
    let plain = format!("{v}");
    if plain.len() <= width {
        return plain;
    }
    for prec in (0..=16).rev() {
        let s = format!("{v:.prec$e}");
        if s.len() <= width {
            return s;
        }
    }
    format!("{v:e}")
}

/// Columns grouped as `(column, [(row, coef)])`, objective row first.
fn columns(model: &MilpModel) -> Vec<Vec<(Option<usize>, f64)>> {
    let mut cols: Vec<Vec<(Option<usize>, f64)>> = vec![Vec::new(); model.num_vars()];
    for &(j, c) in &model.objective {
        cols[j].push((None, c));
    }
    for (i, row) in model.constraints.iter().enumerate() {
        for &(j, a) in &row.terms {
            cols[j].push((Some(i), a));
        }
    }
    cols
}

fn sense_code(s: Sense) -> &'static str {
    match s {
        Sense::Le => "L",
        Sense::Ge => "G",
        Sense::Eq => "E",
    }
}

pub fn to_mps(model: &MilpModel, format: MpsFormat) -> String {
    let fixed = format == MpsFormat::Fixed;
    let col_name = |j: usize| if fixed { fixed_col_name(j) } else { model.variables[j].name.clone() };
    let row_name = |i: Option<usize>| match i {
        None => "COST".to_string(),
        Some(i) if fixed => fixed_row_name(i),
        Some(i) => model.constraints[i].name.clone(),
    };
    // Fixed format: fields start at columns 2, 5, 15, 25, 40, 50.
    let line = |out: &mut String, code: &str, f1: &str, f2: &str, n2: Option<f64>, f3: Option<(&str, f64)>| {
        if fixed {
            let mut l = format!(" {code:<2} {f1:<8}  {f2:<8}");
            if let Some(v) = n2 {
                let _ = write!(l, "  {:>12}", num(v, 12));
            }
            if let Some((name, v)) = f3 {
                let _ = write!(l, "   {name:<8}  {:>12}", num(v, 12));
            }
            out.push_str(l.trim_end());
        } else {
            let mut l = format!(" {code} {f1} {f2}");
            if let Some(v) = n2 {
                let _ = write!(l, " {v}");
            }
            if let Some((name, v)) = f3 {
                let _ = write!(l, " {name} {v}");
            }
            out.push_str(l.trim_end());
        }
        out.push('\n');
    };

    let mut out = String::new();
    let name = if fixed { model.name.chars().take(8).collect::<String>() } else { model.name.clone() };
    let _ = writeln!(out, "NAME          {name}");
    if model.objective_offset != 0.0 {
        let _ = writeln!(out, "* objective offset {}", model.objective_offset);
    }
    out.push_str("ROWS\n");
    line(&mut out, "N", "COST", "", None, None);
    for (i, row) in model.constraints.iter().enumerate() {
        line(&mut out, sense_code(row.sense), &row_name(Some(i)), "", None, None);
    }
    out.push_str("COLUMNS\n");
    let cols = columns(model);
    let mut in_int = false;
    let mut marker = 0usize;
    for (j, entries) in cols.iter().enumerate() {
        let integral = model.variables[j].kind.is_integral();
        if integral != in_int {
            let kind = if integral { "'INTORG'" } else { "'INTEND'" };
            let mname = format!("M{marker:07}");
            if fixed {
                let _ = writeln!(out, "    {mname:<8}  'MARKER'                 {kind}");
            } else {
                let _ = writeln!(out, " {mname} 'MARKER' {kind}");
            }
            if !integral {
                marker += 1;
            }
            in_int = integral;
        }
        let cname = col_name(j);
        if entries.is_empty() {
            // Keep the column declared even when it has no coefficients.
            line(&mut out, "", &cname, "COST", Some(0.0), None);
            continue;
        }
        for pair in entries.chunks(2) {
            let (r1, v1) = pair[0];
            let second = pair.get(1).map(|&(r2, v2)| (row_name(r2), v2));
            line(
                &mut out,
                "",
                &cname,
                &row_name(r1),
                Some(v1),
                second.as_ref().map(|(n, v)| (n.as_str(), *v)),
            );
        }
    }
    if in_int {
        let mname = format!("M{marker:07}");
        if fixed {
            let _ = writeln!(out, "    {mname:<8}  'MARKER'                 'INTEND'");
        } else {
            let _ = writeln!(out, " {mname} 'MARKER' 'INTEND'");
        }
    }
    out.push_str("RHS\n");
    let rhs: Vec<(usize, f64)> =
        model.constraints.iter().enumerate().filter(|(_, r)| r.rhs != 0.0).map(|(i, r)| (i, r.rhs)).collect();
    for pair in rhs.chunks(2) {
        let second = pair.get(1).map(|&(i, v)| (row_name(Some(i)), v));
        line(
            &mut out,
            "",
            "RHS",
            &row_name(Some(pair[0].0)),
            Some(pair[0].1),
            second.as_ref().map(|(n, v)| (n.as_str(), *v)),
        );
    }
    out.push_str("BOUNDS\n");
    for (j, v) in model.variables.iter().enumerate() {
        let cname = col_name(j);
        let bnd = |out: &mut String, code: &str, val: Option<f64>| line(out, code, "BND", &cname, val, None);
        if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
            bnd(&mut out, "BV", None);
            continue;
        }
        if v.lower == v.upper {
            bnd(&mut out, "FX", Some(v.lower));
            continue;
        }
        if v.lower == f64::NEG_INFINITY {
            bnd(&mut out, "MI", None);
        } else if v.lower != 0.0 {
            bnd(&mut out, "LO", Some(v.lower));
        }
        if v.upper.is_finite() {
            bnd(&mut out, "UP", Some(v.upper));
        } else if v.kind.is_integral() {
            bnd(&mut out, "PL", None);
        }
    }
    out.push_str("ENDATA\n");
    out
}

fn lp_terms(out: &mut String, terms: &[(VarId, f64)], model: &MilpModel) {
    if terms.is_empty() {
        out.push_str(" 0");
        return;
    }
    for (n, &(j, a)) in terms.iter().enumerate() {
        if n > 0 && n % 8 == 0 {
            out.push_str("\n   ");
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        let mag = a.abs();
        if n == 0 && sign == '+' {
            let _ = write!(out, " {mag} {}", model.variables[j].name);
        } else {
            let _ = write!(out, " {sign} {mag} {}", model.variables[j].name);
        }
    }
}

/// CPLEX LP format with the model's own names.
pub fn to_lp(model: &MilpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name);
    out.push_str("Minimize\n obj:");
    lp_terms(&mut out, &model.objective, model);
    if model.objective_offset != 0.0 {
        let _ = write!(out, " + {} __const", model.objective_offset);
    }
    out.push_str("\nSubject To\n");
    for row in &model.constraints {
        let _ = write!(out, " {}:", row.name);
        lp_terms(&mut out, &row.terms, model);
        let op = match row.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", row.rhs);
    }
    out.push_str("Bounds\n");
    for v in &model.variables {
        if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
            continue;
        }
        if v.lower == v.upper {
            let _ = writeln!(out, " {} = {}", v.name, v.lower);
            continue;
        }
        let lo = if v.lower == f64::NEG_INFINITY { "-inf".to_string() } else { format!("{}", v.lower) };
        let hi = if v.upper == f64::INFINITY { "+inf".to_string() } else { format!("{}", v.upper) };
        let _ = writeln!(out, " {lo} <= {} <= {hi}", v.name);
    }
    if model.objective_offset != 0.0 {
        out.push_str(" __const = 1\n");
    }
    let generals: Vec<&str> =
        model.variables.iter().filter(|v| v.kind == VarKind::Integer).map(|v| v.name.as_str()).collect();
    if !generals.is_empty() {
        out.push_str("Generals\n");
        for chunk in generals.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    let binaries: Vec<&str> =
        model.variables.iter().filter(|v| v.kind == VarKind::Binary).map(|v| v.name.as_str()).collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MilpModel {
        let mut m = MilpModel::new("sample");
        let x = m.add_var("x".into(), VarKind::Continuous, 0.0, 4.0, "a");
        let y = m.add_var("y".into(), VarKind::Integer, 0.0, 10.0, "a");
        let d = m.add_var("d".into(), VarKind::Binary, 0.0, 1.0, "b");
        let f = m.add_var("f".into(), VarKind::Continuous, 2.5, 2.5, "a");
        m.add_constraint("c1".into(), vec![(x, 1.0), (y, 2.0)], Sense::Ge, 3.0, "r");
        m.add_constraint("c2".into(), vec![(y, 1.0), (d, -7.25), (f, 1.0)], Sense::Le, 0.0, "r");
        m.objective = vec![(x, 1.0), (y, 0.123_456_789_012_345_6)];
        m
    }

    #[test]
    fn fixed_layout() {
        let s = to_mps(&sample(), MpsFormat::Fixed);
        assert!(s.contains(" G  R0000001"));
        assert!(s.contains("'INTORG'") && s.contains("'INTEND'"));
        assert!(s.contains(" BV BND       C0000003"));
        assert!(s.contains(&format!(" FX BND       C0000004  {:>12}", "2.5")));
        for l in s.lines().filter(|l| l.starts_with("    C")) {
            assert!(l.len() <= 61, "{l}");
            assert!(l[4..12].starts_with('C') && !l[14..22].trim_end().is_empty(), "{l}");
        }
        assert_eq!(s, to_mps(&sample(), MpsFormat::Fixed));
    }

    #[test]
    fn numbers_fit() {
        for v in [0.123_456_789_012_345_6, -1.0e-17, 123_456_789_012_345.0, 2.5, -7.0] {
            let s = num(v, 12);
            assert!(s.len() <= 12, "{s}");
            let back: f64 = s.parse().unwrap();
            // Twelve characters keep about eight significant digits.
            assert!((back - v).abs() <= 1e-7 * v.abs());
        }
    }

    #[test]
    fn lp_sections() {
        let s = to_lp(&sample());
        assert!(s.contains("Minimize\n obj: 1 x + 0.1234567890123456 y"), "{s}");
        assert!(s.contains(" c2: 1 y - 7.25 d + 1 f <= 0"));
        assert!(s.contains("Generals\n y\nBinaries\n d\nEnd"));
        assert!(s.contains(" f = 2.5"));
    }
}
