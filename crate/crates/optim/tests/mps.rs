use std::collections::HashMap;
use std::process::Command;

use mgplan_optim::{
    export_mps, solve_milp, to_mps_string, MilpOptions, MixedIntegerProgram, Sense, Var,
};
use proptest::prelude::*;

/// Minimal free-format MPS reader covering the sections the writer emits.
fn read_mps(text: &str) -> MixedIntegerProgram<f64> {
    let mut section = "";
    let mut obj_row = String::new();
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut cols: Vec<(String, bool)> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut costs: HashMap<usize, f64> = HashMap::new();
    let mut rhs: HashMap<usize, f64> = HashMap::new();
    let mut ranges: HashMap<usize, f64> = HashMap::new();
    let mut bounds: HashMap<usize, (f64, f64)> = HashMap::new();
    let mut offset = 0.0;
    let mut name = String::new();
    let mut in_int = false;
    for line in text.lines() {
        if !line.starts_with(' ') {
            let mut it = line.split_whitespace();
            section = match it.next().unwrap() {
                "NAME" => {
                    name = it.next().unwrap_or("").to_string();
                    "NAME"
                }
                s => match s {
                    "ROWS" => "ROWS",
                    "COLUMNS" => "COLUMNS",
                    "RHS" => "RHS",
                    "RANGES" => "RANGES",
                    "BOUNDS" => "BOUNDS",
                    "ENDATA" => "END",
                    other => panic!("unknown section {other}"),
                },
            };
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        match section {
            "ROWS" => {
                let sense = match f[0] {
                    "N" => {
                        obj_row = f[1].to_string();
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    other => panic!("row type {other}"),
                };
                row_index.insert(f[1].to_string(), rows.len());
                rows.push((f[1].to_string(), sense));
            }
            "COLUMNS" => {
                if f[1] == "'MARKER'" {
                    in_int = f[2] == "'INTORG'";
                    continue;
                }
                let j = *col_index.entry(f[0].to_string()).or_insert_with(|| {
                    cols.push((f[0].to_string(), in_int));
                    cols.len() - 1
                });
                for pair in f[1..].chunks(2) {
                    let v: f64 = pair[1].parse().unwrap();
                    if pair[0] == obj_row {
                        costs.insert(j, v);
                    } else {
                        entries.push((row_index[pair[0]], j, v));
                    }
                }
            }
            "RHS" => {
                for pair in f[1..].chunks(2) {
                    let v: f64 = pair[1].parse().unwrap();
                    if pair[0] == obj_row {
                        offset = -v;
                    } else {
                        rhs.insert(row_index[pair[0]], v);
                    }
                }
            }
            "RANGES" => {
                for pair in f[1..].chunks(2) {
                    ranges.insert(row_index[pair[0]], pair[1].parse().unwrap());
                }
            }
            "BOUNDS" => {
                let j = col_index[f[2]];
                let b = bounds.entry(j).or_insert((0.0, f64::INFINITY));
                let val = || f[3].parse::<f64>().unwrap();
                match f[0] {
                    "LO" => b.0 = val(),
                    "UP" => b.1 = val(),
                    "FX" => *b = (val(), val()),
                    "FR" => *b = (f64::NEG_INFINITY, f64::INFINITY),
                    "MI" => b.0 = f64::NEG_INFINITY,
                    "PL" => b.1 = f64::INFINITY,
                    other => panic!("bound type {other}"),
                }
            }
            _ => panic!("data outside a section"),
        }
    }
    let mut q = MixedIntegerProgram::new(name);
    let vars: Vec<Var> = cols
        .iter()
        .enumerate()
        .map(|(j, (n, int))| {
            let (l, u) = bounds.get(&j).copied().unwrap_or((0.0, f64::INFINITY));
            let v = if *int { q.add_integer(n.clone(), l, u) } else { q.add_var(n.clone(), l, u) };
            q.set_cost(v, costs.get(&j).copied().unwrap_or(0.0));
            v
        })
        .collect();
    let mut by_row: Vec<Vec<(Var, f64)>> = vec![Vec::new(); rows.len()];
    for (i, j, a) in entries {
        by_row[i].push((vars[j], a));
    }
    for (i, (n, sense)) in rows.iter().enumerate() {
        let b = rhs.get(&i).copied().unwrap_or(0.0);
        match ranges.get(&i) {
            None => {
                q.add_row(n.clone(), by_row[i].clone(), *sense, b);
            }
            Some(&rg) => {
                let (lo, hi) = match sense {
                    Sense::Le => (b - rg.abs(), b),
                    Sense::Ge => (b, b + rg.abs()),
                    Sense::Eq if rg >= 0.0 => (b, b + rg),
                    Sense::Eq => (b + rg, b),
                };
                q.add_ranged_row(n.clone(), by_row[i].clone(), lo, hi);
            }
        }
    }
    q.set_offset(offset);
    q
}

fn sample_program() -> MixedIntegerProgram<f64> {
    let mut p = MixedIntegerProgram::new("sample");
    let x = p.add_var("x", 3.0, f64::INFINITY);
    let z = p.add_binary("z");
    let y = p.add_var("y_with_a_name_longer_than_eight", f64::NEG_INFINITY, 4.0);
    let f = p.add_var("free", f64::NEG_INFINITY, f64::INFINITY);
    let k = p.add_integer("k", -2.0, 7.0);
    p.set_cost(x, 1.0);
    p.set_cost(z, 2.5);
    p.set_cost(k, -0.125);
    p.set_offset(10.0);
    p.add_row("c1", [(x, 1.0), (z, -4.0), (y, 0.5)], Sense::Le, 8.0);
    p.add_row("c2", [(f, 1.0), (y, 1.0)], Sense::Eq, 1.0);
    p.add_row("c3", [(k, 1.0), (x, 1.0)], Sense::Ge, 2.0);
    p.add_ranged_row("c4", [(x, 1.0), (k, 2.0)], -1.0, 20.0);
    p
}

#[test]
fn lower_bound_appears_as_lo_entry() {
    let mut p = MixedIntegerProgram::<f64>::new("lo");
    let x = p.add_var("x", 3.0, f64::INFINITY);
    p.set_cost(x, 1.0);
    let text = to_mps_string(&p).unwrap();
    let bounds = &text[text.find("BOUNDS\n").unwrap()..];
    assert!(bounds.lines().any(|l| l == " LO BND       x         3"), "{text}");
}

#[test]
fn binary_column_is_wrapped_in_markers() {
    let mut p = MixedIntegerProgram::<f64>::new("mk");
    let a = p.add_var("a", 0.0, 1.0);
    let b = p.add_binary("b");
    p.set_cost(a, 1.0);
    p.set_cost(b, 1.0);
    p.add_row("r", [(a, 1.0), (b, 1.0)], Sense::Ge, 1.0);
    let text = to_mps_string(&p).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let start = lines.iter().position(|l| l.contains("'INTORG'")).unwrap();
    let end = lines.iter().position(|l| l.contains("'INTEND'")).unwrap();
    let b_lines: Vec<usize> = (0..lines.len()).filter(|&i| lines[i].starts_with("    b ")).collect();
    assert!(!b_lines.is_empty());
    assert!(b_lines.iter().all(|&i| start < i && i < end));
    assert!(!lines[start..end].iter().any(|l| l.starts_with("    a ")));
    assert_eq!(lines[start], "    MRK0000   'MARKER'                 'INTORG'");
    let bnd: Vec<&&str> = lines.iter().filter(|l| l.contains("BND       b")).collect();
    assert_eq!(bnd, vec![&" LO BND       b         0", &" UP BND       b         1"]);
}

#[test]
fn sample_round_trips_through_reader() {
    let p = sample_program();
    let text = to_mps_string(&p).unwrap();
    let q = read_mps(&text);
    assert_eq!(p, q);
}

#[test]
fn export_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.mps");
    export_mps(&sample_program(), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("NAME          sample\nROWS\n N  COST\n"));
    assert!(text.ends_with("ENDATA\n"));
}

fn highs_objective(path: &std::path::Path) -> Option<f64> {
    let script = "import sys, highspy\nh = highspy.Highs()\nh.setOptionValue('output_flag', False)\nh.setOptionValue('mip_rel_gap', 1e-9)\nh.readModel(sys.argv[1])\nh.run()\nprint(repr(h.getInfo().objective_function_value))\n";
    let out = Command::new("python3").arg("-c").arg(script).arg(path).output().ok()?;
    if !out.status.success() {
        return None;
    }
    String::from_utf8(out.stdout).ok()?.trim().parse().ok()
}

#[test]
fn external_solver_agrees_when_available() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.mps");
    let p = sample_program();
    export_mps(&p, &path).unwrap();
    let Some(theirs) = highs_objective(&path) else {
        eprintln!("highspy not available; skipping cross-check");
        return;
    };
    let ours = solve_milp(&p, &MilpOptions::default()).unwrap().objective;
    assert!((ours - theirs).abs() <= 1e-5 * (1.0 + ours.abs()), "{ours} vs {theirs}");
}

fn arbitrary_program() -> impl Strategy<Value = MixedIntegerProgram<f64>> {
    (
        prop::collection::vec(("[a-z][a-z0-9_]{0,20}", -1e6f64..1e6, 0.0f64..1e3, any::<bool>(), -1e3f64..1e3), 1..8),
        prop::collection::vec((prop::collection::vec((0usize..8, -1e4f64..1e4), 0..5), 0u8..4, -1e5f64..1e5, 0.0f64..50.0), 0..6),
        -1e3f64..1e3,
    )
        .prop_map(|(cols, rows, offset)| {
            let mut p = MixedIntegerProgram::new("prop");
            let vars: Vec<Var> = cols
                .iter()
                .enumerate()
                .map(|(j, (n, l, w, int, c))| {
                    let name = format!("{n}_{j}");
                    let v = if *int {
                        p.add_integer(name, l.floor(), l.floor() + w.floor())
                    } else {
                        p.add_var(name, *l, l + w)
                    };
                    p.set_cost(v, *c);
                    v
                })
                .collect();
            for (i, (terms, s, b, r)) in rows.iter().enumerate() {
                let coeffs = terms.iter().map(|&(j, a)| (vars[j % vars.len()], a));
                match s {
                    0 => p.add_row(format!("r{i}"), coeffs, Sense::Le, *b),
                    1 => p.add_row(format!("r{i}"), coeffs, Sense::Ge, *b),
                    2 => p.add_row(format!("r{i}"), coeffs, Sense::Eq, *b),
                    _ => p.add_ranged_row(format!("r{i}"), coeffs, b - r - 1.0, *b),
                };
            }
            p.set_offset(offset);
            p
        })
}

proptest! {
    #[test]
    fn writer_round_trips(p in arbitrary_program()) {
        let q = read_mps(&to_mps_string(&p).unwrap());
        prop_assert_eq!(p, q);
    }
}
