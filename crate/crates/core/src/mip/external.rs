//! Bridge to an external MIP solver through MPS files.
//!
//! The solution file starts with `objective <value>`, optionally followed by
//! `status <status>` and `bound <value>` lines, then one `<column> <value>`
//! pair per line.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use super::mps::{col_name, write_mps};
use super::{MipError, MipProblem, MipSolution, MipStatus, SolverConfig, FEAS_TOL, INT_TOL};

pub fn render_command(template: &str, input: &Path, output: &Path, cfg: &SolverConfig) -> String {
    template
        .replace("{input}", &input.display().to_string())
        .replace("{output}", &output.display().to_string())
        .replace("{gap}", &cfg.gap_limit.to_string())
        .replace("{timelimit}", &cfg.time_limit.to_string())
        .replace("{threads}", &cfg.threads.to_string())
}

pub fn solve_external(p: &MipProblem, cfg: &SolverConfig, template: &str) -> Result<MipSolution, MipError> {
    let dir = tempfile::tempdir()?;
    let input = dir.path().join("problem.mps");
    let output = dir.path().join("solution.txt");
    write_mps(p, &input)?;
    let cmd = render_command(template, &input, &output, cfg);
    let start = Instant::now();
    let out = Command::new("sh").arg("-c").arg(&cmd).output()?;
    let elapsed = start.elapsed().as_secs_f64();
    let diagnostics = format!(
        "command: {cmd}\nstdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    if !out.status.success() {
        return Err(MipError::Backend { message: format!("solver exited with {}", out.status), diagnostics });
    }
    let mut sol = read_external_solution(&output, p.num_vars()).map_err(|e| MipError::Backend {
        message: format!("unusable solution file: {e}"),
        diagnostics: diagnostics.clone(),
    })?;
    if sol.has_incumbent() {
        if !p.is_feasible(&sol.x, FEAS_TOL, INT_TOL) {
            return Err(MipError::Backend {
                message: "external solution violates the problem constraints".into(),
                diagnostics,
            });
        }
        sol.incumbent_trajectory = vec![(elapsed, sol.best_objective)];
    }
    Ok(sol)
}

/// Renders `sol` in the solution-file format, naming columns by `names`.
pub fn to_solution_string(sol: &MipSolution, names: &[String]) -> String {
    let mut out = format!("objective {:?}\nstatus {}\n", sol.best_objective, sol.status.as_str());
    if sol.has_incumbent() {
        out.push_str(&format!("bound {:?}\n", sol.best_bound));
        for (name, v) in names.iter().zip(&sol.x) {
            out.push_str(&format!("{name} {v:?}\n"));
        }
    }
    out
}

/// Reads a solution file for a problem with `num_vars` columns named `C0001...`.
pub fn read_external_solution(path: &Path, num_vars: usize) -> Result<MipSolution, MipError> {
    parse_external_solution(&std::fs::read_to_string(path)?, num_vars)
}

pub fn parse_external_solution(text: &str, num_vars: usize) -> Result<MipSolution, MipError> {
    let perr = |line: usize, column: usize, message: String| MipError::Parse { line, column, message };
    let names: HashMap<String, usize> = (0..num_vars).map(|j| (col_name(j), j)).collect();
    let mut objective: Option<f64> = None;
    let mut status: Option<MipStatus> = None;
    let mut bound: Option<f64> = None;
    let mut x = vec![0.0; num_vars];
    for (ln0, raw) in text.lines().enumerate() {
        let ln = ln0 + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or_default();
        let val = it.next().ok_or_else(|| perr(ln, raw.len() + 1, "missing value".into()))?;
        if it.next().is_some() {
            return Err(perr(ln, 1, "expected exactly two fields".into()));
        }
        let vcol = raw.find(val).map_or(1, |c| c + 1);
        if objective.is_none() {
            if key != "objective" {
                return Err(perr(ln, 1, "first line must be `objective <value>`".into()));
            }
            objective = Some(val.parse().map_err(|_| perr(ln, vcol, format!("bad number `{val}`")))?);
            continue;
        }
        match key {
            "status" => {
                status = Some(MipStatus::parse(val).ok_or_else(|| perr(ln, vcol, format!("unknown status `{val}`")))?)
            }
            "bound" => bound = Some(val.parse().map_err(|_| perr(ln, vcol, format!("bad number `{val}`")))?),
            name => {
                let &j = names.get(name).ok_or_else(|| perr(ln, 1, format!("unknown column `{name}`")))?;
                x[j] = val.parse().map_err(|_| perr(ln, vcol, format!("bad number `{val}`")))?;
            }
        }
    }
    let objective = objective.ok_or_else(|| perr(1, 1, "empty solution file".into()))?;
    let mut sol = MipSolution::empty(status.unwrap_or(MipStatus::Optimal));
    if objective.is_finite() {
        sol.best_objective = objective;
        sol.best_bound = bound.unwrap_or(objective);
        sol.gap = super::bnb::gap_of(objective, sol.best_bound);
        sol.x = x;
    }
    Ok(sol)
}
