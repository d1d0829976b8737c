//! Fixed-format MPS writer and reader.
//!
//! Rows are named `R0001...`, columns `C0001...`, and the objective row `COST`.
//! Fields sit in the classic fixed columns (2, 5, 15, 25, 40, 50). A number that
//! needs more than twelve characters to round-trip overflows its field, so the
//! reader tokenizes on whitespace rather than on column positions.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{MipError, MipProblem, Row, RowSense};

pub const OBJECTIVE_ROW: &str = "COST";

pub fn row_name(i: usize) -> String {
    format!("R{:04}", i + 1)
}

pub fn col_name(j: usize) -> String {
    format!("C{:04}", j + 1)
}

fn num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn line(out: &mut String, f1: &str, f2: &str, f3: &str, f4: &str) {
    let _ = writeln!(out, " {f1:<2} {f2:<8}  {f3:<8}  {f4:>12}");
}

pub fn to_mps_string(p: &MipProblem, name: &str) -> String {
    let n = p.num_vars();
    let mut out = String::new();
    let _ = writeln!(out, "NAME          {name}");
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N  {OBJECTIVE_ROW}");
    for (i, r) in p.rows.iter().enumerate() {
        let s = match r.sense {
            RowSense::Le => "L",
            RowSense::Ge => "G",
            RowSense::Eq => "E",
        };
        let _ = writeln!(out, " {s}  {}", row_name(i));
    }

    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, r) in p.rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            by_col[j].push((i, a));
        }
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for j in 0..n {
        if p.integer[j] != in_int {
            let tag = if p.integer[j] { "'INTORG'" } else { "'INTEND'" };
            let _ = writeln!(out, "    MARKER{marker:04}  'MARKER'                 {tag}");
            marker += 1;
            in_int = p.integer[j];
        }
        let c = col_name(j);
        line(&mut out, "", &c, OBJECTIVE_ROW, &num(p.objective[j]));
        for &(i, a) in &by_col[j] {
            line(&mut out, "", &c, &row_name(i), &num(a));
        }
    }
    if in_int {
        let _ = writeln!(out, "    MARKER{marker:04}  'MARKER'                 'INTEND'");
    }

    out.push_str("RHS\n");
    for (i, r) in p.rows.iter().enumerate() {
        if r.rhs != 0.0 {
            line(&mut out, "", "RHS", &row_name(i), &num(r.rhs));
        }
    }

    out.push_str("BOUNDS\n");
    for j in 0..n {
        let c = col_name(j);
        let (lo, hi) = (p.lower[j], p.upper[j]);
        if lo == hi {
            line(&mut out, "FX", "BND", &c, &num(lo));
            continue;
        }
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            let _ = writeln!(out, " FR BND       {c}");
            continue;
        }
        if lo == f64::NEG_INFINITY {
            let _ = writeln!(out, " MI BND       {c}");
        } else if lo != 0.0 || p.integer[j] {
            line(&mut out, "LO", "BND", &c, &num(lo));
        }
        if hi.is_finite() {
            line(&mut out, "UP", "BND", &c, &num(hi));
        } else if p.integer[j] {
            let _ = writeln!(out, " PL BND       {c}");
        }
    }
    out.push_str("ENDATA\n");
    out
}

pub fn write_mps(p: &MipProblem, path: &Path) -> Result<(), MipError> {
    p.validate()?;
    std::fs::write(path, to_mps_string(p, "REPSCEN"))?;
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Section {
    None,
    Name,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    Done,
}

fn err(line: usize, column: usize, message: impl Into<String>) -> MipError {
    MipError::Parse { line, column, message: message.into() }
}

/// Whitespace tokens with their 1-based column.
fn tokens(s: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in s.char_indices() {
        if ch.is_whitespace() {
            if let Some(st) = start.take() {
                out.push((st + 1, &s[st..i]));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(st) = start {
        out.push((st + 1, &s[st..]));
    }
    out
}

fn parse_num(tok: (usize, &str), line: usize) -> Result<f64, MipError> {
    tok.1.parse::<f64>().map_err(|_| err(line, tok.0, format!("expected a number, found `{}`", tok.1)))
}

/// Parses MPS text. Column order follows first appearance in COLUMNS.
pub fn parse_mps(text: &str) -> Result<(MipProblem, Vec<String>), MipError> {
    let mut section = Section::None;
    let mut obj_name: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Row> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut col_names: Vec<String> = Vec::new();
    let mut objective: Vec<f64> = Vec::new();
    let mut integer: Vec<bool> = Vec::new();
    let mut lower: Vec<f64> = Vec::new();
    let mut upper: Vec<f64> = Vec::new();
    let mut in_int = false;

    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let toks = tokens(raw);
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            let head = toks[0].1;
            section = match head {
                "NAME" => Section::Name,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "ENDATA" => Section::Done,
                "OBJSENSE" => return Err(err(ln, 1, "OBJSENSE is not supported (minimization only)")),
                other => return Err(err(ln, 1, format!("unknown section `{other}`"))),
            };
            continue;
        }
        match section {
            Section::None | Section::Name => return Err(err(ln, toks[0].0, "data line outside of a section")),
            Section::Done => return Err(err(ln, toks[0].0, "data after ENDATA")),
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(err(ln, toks[0].0, "ROWS line needs a type and a name"));
                }
                let name = toks[1].1.to_string();
                let sense = match toks[0].1 {
                    "N" => {
                        if obj_name.is_none() {
                            obj_name = Some(name);
                        }
                        continue;
                    }
                    "L" => RowSense::Le,
                    "G" => RowSense::Ge,
                    "E" => RowSense::Eq,
                    t => return Err(err(ln, toks[0].0, format!("unknown row type `{t}`"))),
                };
                if row_index.insert(name, rows.len()).is_some() {
                    return Err(err(ln, toks[1].0, "duplicate row name"));
                }
                rows.push(Row::new(Vec::new(), sense, 0.0));
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1].1 == "'MARKER'" {
                    match toks[2].1 {
                        "'INTORG'" => in_int = true,
                        "'INTEND'" => in_int = false,
                        t => return Err(err(ln, toks[2].0, format!("unknown marker `{t}`"))),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(err(ln, toks[0].0, "COLUMNS line needs 3 or 5 fields"));
                }
                let cname = toks[0].1;
                let j = match col_index.get(cname) {
                    Some(&j) => j,
                    None => {
                        let j = col_names.len();
                        col_index.insert(cname.to_string(), j);
                        col_names.push(cname.to_string());
                        objective.push(0.0);
                        integer.push(in_int);
                        lower.push(0.0);
                        upper.push(f64::INFINITY);
                        j
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let v = parse_num(pair[1], ln)?;
                    if Some(pair[0].1) == obj_name.as_deref() {
                        objective[j] = v;
                    } else {
                        let &i = row_index
                            .get(pair[0].1)
                            .ok_or_else(|| err(ln, pair[0].0, format!("unknown row `{}`", pair[0].1)))?;
                        rows[i].coeffs.push((j, v));
                    }
                }
            }
            Section::Rhs => {
                let body = if toks.len() % 2 == 1 { &toks[1..] } else { &toks[..] };
                for pair in body.chunks(2) {
                    if pair.len() != 2 {
                        return Err(err(ln, pair[0].0, "RHS entry without a value"));
                    }
                    let v = parse_num(pair[1], ln)?;
                    if Some(pair[0].1) == obj_name.as_deref() {
                        continue;
                    }
                    let &i = row_index
                        .get(pair[0].1)
                        .ok_or_else(|| err(ln, pair[0].0, format!("unknown row `{}`", pair[0].1)))?;
                    rows[i].rhs = v;
                }
            }
            Section::Ranges => return Err(err(ln, toks[0].0, "RANGES are not supported")),
            Section::Bounds => {
                if toks.len() < 3 {
                    return Err(err(ln, toks[0].0, "BOUNDS line needs type, set and column"));
                }
                let kind = toks[0].1;
                let &j = col_index
                    .get(toks[2].1)
                    .ok_or_else(|| err(ln, toks[2].0, format!("unknown column `{}`", toks[2].1)))?;
                let value = || -> Result<f64, MipError> {
                    toks.get(3)
                        .map(|&t| parse_num(t, ln))
                        .unwrap_or_else(|| Err(err(ln, raw.len() + 1, "bound value missing")))
                };
                match kind {
                    "UP" => upper[j] = value()?,
                    "LO" => lower[j] = value()?,
                    "FX" => {
                        let v = value()?;
                        lower[j] = v;
                        upper[j] = v;
                    }
                    "FR" => {
                        lower[j] = f64::NEG_INFINITY;
                        upper[j] = f64::INFINITY;
                    }
                    "MI" => lower[j] = f64::NEG_INFINITY,
                    "PL" => upper[j] = f64::INFINITY,
                    "BV" => {
                        lower[j] = 0.0;
                        upper[j] = 1.0;
                        integer[j] = true;
                    }
                    t => return Err(err(ln, toks[0].0, format!("unknown bound type `{t}`"))),
                }
            }
        }
    }
    if section != Section::Done {
        return Err(err(text.lines().count() + 1, 1, "missing ENDATA"));
    }
    let problem = MipProblem { objective, rows, lower, upper, integer, branch_priority: Vec::new() };
    problem.validate()?;
    Ok((problem, col_names))
}

pub fn read_mps(path: &Path) -> Result<(MipProblem, Vec<String>), MipError> {
    parse_mps(&std::fs::read_to_string(path)?)
}
