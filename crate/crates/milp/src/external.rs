//! Delegation to an external solver through files.
//!
//! The model is written in LP format, the configured command is run with
//! `{model}` and `{solution}` substituted, and the solution file is read
//! back. The returned point is re-checked exactly against the problem.

use std::fs;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use crate::bnb::{Solution, SolveStats, Status};
use crate::lpfile::to_lp_string;
use crate::problem::Problem;
use crate::SolveError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalSolver {
    /// Shell command with `{model}` and `{solution}` placeholders.
    pub command: String,
    pub timeout: Duration,
}

/// Status and raw values read from a solution file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSolution {
    pub status: Status,
    pub values: Vec<(String, f64)>,
}

fn parse_status(line: &str) -> Option<Status> {
    let lower = line.trim().to_ascii_lowercase();
    let rest = lower
        .strip_prefix("status")
        .map(|r| r.trim_start_matches([':', ' ', '=']))
        .unwrap_or(&lower);
    if rest.starts_with("optimal") || rest.starts_with("integer optimal") {
        Some(Status::Optimal)
    } else if rest.starts_with("infeasible") || rest.starts_with("integer infeasible") {
        Some(Status::Infeasible)
    } else {
        None
    }
}

/// Parses a solution document.
///
/// The first line that names a status (`optimal`, `infeasible`, optionally
/// prefixed by `status`) decides the outcome. Every other line contributes
/// a value when it contains a known variable name followed by a number, so
/// both `name value` and `index name value reduced_cost` layouts work.
pub fn parse_solution(text: &str, p: &Problem) -> Result<ParsedSolution, SolveError> {
    let mut status = None;
    let mut values = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if status.is_none() {
            if let Some(s) = parse_status(trimmed) {
                status = Some(s);
                continue;
            }
        }
        let toks: Vec<&str> = trimmed.split_whitespace().collect();
        let Some(pos) = toks.iter().position(|t| p.find_var(t).is_some()) else {
            continue;
        };
        let raw = toks
            .get(pos + 1)
            .ok_or_else(|| SolveError::Parse(format!("line {}: missing value", no + 1)))?;
        let v: f64 = raw
            .parse()
            .map_err(|_| SolveError::Parse(format!("line {}: bad value {raw:?}", no + 1)))?;
        values.push((toks[pos].to_string(), v));
    }
    let status = status.ok_or_else(|| SolveError::Parse("no status line".into()))?;
    Ok(ParsedSolution { status, values })
}

/// Turns parsed values into an exact, checked [`Solution`].
pub fn to_solution(parsed: &ParsedSolution, p: &Problem) -> Result<Solution, SolveError> {
    if parsed.status == Status::Infeasible {
        return Ok(Solution::infeasible(SolveStats::default()));
    }
    let mut values = vec![0i64; p.num_vars()];
    for (name, v) in &parsed.values {
        let id = p.find_var(name).expect("parser only keeps known names");
        let r = v.round();
        if (v - r).abs() > 1e-6 {
            return Err(SolveError::Numerical(format!("{name} = {v} is not integral")));
        }
        values[id.0] = r as i64;
    }
    let violations = p.violations(&values);
    if let Some(first) = violations.first() {
        return Err(SolveError::Numerical(format!("external solution violates {first}")));
    }
    let objective = i64::try_from(p.objective(&values)).map_err(|_| SolveError::Numerical("objective overflow".into()))?;
    Ok(Solution {
        status: Status::Optimal,
        values,
        objective,
        stats: SolveStats::default(),
    })
}

impl ExternalSolver {
    pub fn render_command(&self, model: &Path, solution: &Path) -> String {
        self.command
            .replace("{model}", &model.display().to_string())
            .replace("{solution}", &solution.display().to_string())
    }

    pub fn solve(&self, p: &Problem) -> Result<Solution, SolveError> {
        if !self.command.contains("{model}") || !self.command.contains("{solution}") {
            return Err(SolveError::BackendUnavailable(
                "command template needs {model} and {solution}".into(),
            ));
        }
        let dir = tempfile::tempdir().map_err(|e| SolveError::Io(e.to_string()))?;
        let model = dir.path().join("model.lp");
        let solution = dir.path().join("solution.txt");
        fs::write(&model, to_lp_string(p)).map_err(|e| SolveError::Io(e.to_string()))?;

        let mut child = Command::new("sh")
            .arg("-c")
            .arg(self.render_command(&model, &solution))
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SolveError::BackendUnavailable(e.to_string()))?;

        let started = Instant::now();
        let status = loop {
            match child.try_wait().map_err(|e| SolveError::Io(e.to_string()))? {
                Some(status) => break status,
                None if started.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(SolveError::Timeout(self.timeout));
                }
                None => thread::sleep(Duration::from_millis(5)),
            }
        };
        if !status.success() {
            let mut err = String::new();
            if let Some(mut s) = child.stderr.take() {
                use std::io::Read;
                let _ = s.read_to_string(&mut err);
            }
            return Err(SolveError::BackendUnavailable(format!(
                "solver exited with {status}: {}",
                err.trim()
            )));
        }
        let text = fs::read_to_string(&solution).map_err(|e| SolveError::Io(format!("reading solution: {e}")))?;
        to_solution(&parse_solution(&text, p)?, p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::Sense;

    fn tiny() -> Problem {
        let mut p = Problem::new("tiny");
        let x = p.add_int_var("x", 0, Some(5), 1);
        let y = p.add_int_var("y", 0, Some(5), 2);
        p.add_constraint("need", [(x, 1), (y, 1)], Sense::Ge, 3);
        p
    }

    #[test]
    fn parses_plain_and_indexed_layouts() {
        let p = tiny();
        let plain = parse_solution("status: optimal\nx 3\ny 0\n", &p).unwrap();
        assert_eq!(plain.status, Status::Optimal);
        assert_eq!(plain.values, vec![("x".into(), 3.0), ("y".into(), 0.0)]);

        let indexed = parse_solution("Optimal - objective value 3.00000000\n      0 x  3  1\n", &p).unwrap();
        assert_eq!(indexed.values, vec![("x".into(), 3.0)]);
        let sol = to_solution(&indexed, &p).unwrap();
        assert_eq!(sol.values, vec![3, 0]);
        assert_eq!(sol.objective, 3);
    }

    #[test]
    fn infeasible_status_and_missing_status() {
        let p = tiny();
        let parsed = parse_solution("Infeasible - objective value 0\n", &p).unwrap();
        assert_eq!(to_solution(&parsed, &p).unwrap().status, Status::Infeasible);
        assert!(matches!(parse_solution("x 1\n", &p), Err(SolveError::Parse(_))));
    }

    #[test]
    fn rejects_fractional_or_infeasible_points() {
        let p = tiny();
        let frac = parse_solution("optimal\nx 1.5\ny 1.5\n", &p).unwrap();
        assert!(matches!(to_solution(&frac, &p), Err(SolveError::Numerical(_))));
        let bad = parse_solution("optimal\nx 1\n", &p).unwrap();
        assert!(matches!(to_solution(&bad, &p), Err(SolveError::Numerical(_))));
    }
}
