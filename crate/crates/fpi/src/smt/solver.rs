//! Subprocess session speaking SMT-LIB v2 over stdin/stdout.
//!
//! One session per verification task; queries are bracketed with
//! push/pop. The solver executable is configurable (`--solver`,
//! `FPI_SOLVER`, `z3` on PATH, or the bundled wasm shim under
//! `tools/z3-smt2/`). Every line sent is logged so scripts can be
//! replayed offline.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{Receiver, RecvTimeoutError};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SmtError {
    #[error("no SMT solver available: {0}")]
    SolverUnavailable(String),
    #[error("solver session died: {0}")]
    SessionDead(String),
    #[error("solver timed out after {0:?}")]
    SolverTimeout(Duration),
    #[error("malformed solver response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SatResult {
    Sat,
    Unsat,
    Unknown,
}

/// How to launch the solver.
#[derive(Debug, Clone)]
pub struct SolverCmd {
    pub program: String,
    pub args: Vec<String>,
}

impl SolverCmd {
    pub fn from_spec(spec: &str) -> SolverCmd {
        let mut parts = spec.split_whitespace().map(|s| s.to_string());
        let program = parts.next().unwrap_or_else(|| "z3".into());
        let mut args: Vec<String> = parts.collect();
        if args.is_empty() && program.ends_with(".js") {
            // a bare script path means "run it with node"
            return SolverCmd { program: "node".into(), args: vec![program] };
        }
        if Path::new(&program)
            .file_name()
            .map(|f| f.to_string_lossy().starts_with("z3"))
            .unwrap_or(false)
            && args.is_empty()
        {
            args = vec!["-in".into(), "-smt2".into()];
        }
        SolverCmd { program, args }
    }

    /// Resolution order: explicit spec, FPI_SOLVER, z3 on PATH, bundled
    /// wasm shim (requires `npm install` under tools/z3-smt2).
    pub fn discover(explicit: Option<&str>) -> Result<SolverCmd, SmtError> {
        if let Some(s) = explicit {
            return Ok(SolverCmd::from_spec(s));
        }
        if let Ok(s) = std::env::var("FPI_SOLVER") {
            if !s.trim().is_empty() {
                return Ok(SolverCmd::from_spec(&s));
            }
        }
        if which("z3").is_some() {
            return Ok(SolverCmd { program: "z3".into(), args: vec!["-in".into(), "-smt2".into()] });
        }
        for shim in shim_candidates() {
            if shim.exists() {
                return Ok(SolverCmd {
                    program: "node".into(),
                    args: vec![shim.to_string_lossy().into_owned()],
                });
            }
        }
        Err(SmtError::SolverUnavailable(
            "set FPI_SOLVER or --solver, install z3, or run `npm install` in tools/z3-smt2".into(),
        ))
    }
}

fn which(bin: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    for dir in std::env::split_paths(&path) {
        let cand = dir.join(bin);
        if cand.is_file() {
            return Some(cand);
        }
    }
    None
}

fn shim_candidates() -> Vec<PathBuf> {
    let mut out = Vec::new();
    let rel = Path::new("tools/z3-smt2/z3-smt2.js");
    // relative to the crate, the workspace root, and the current dir
    if let Some(manifest) = option_env!("CARGO_MANIFEST_DIR") {
        let m = Path::new(manifest);
        out.push(m.join("../../").join(rel));
        out.push(m.join(rel));
    }
    out.push(rel.to_path_buf());
    if let Ok(cwd) = std::env::current_dir() {
        let mut d = cwd.as_path();
        loop {
            out.push(d.join(rel));
            match d.parent() {
                Some(p) => d = p,
                None => break,
            }
        }
    }
    out.retain(|p| p.join("../node_modules/z3-solver").exists() || p.exists());
    out
}

pub struct Session {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
    pub timeout: Duration,
    pub log: Vec<String>,
    dead: bool,
}

impl Session {
    pub fn start(cmd: &SolverCmd, timeout: Duration) -> Result<Session, SmtError> {
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SmtError::SolverUnavailable(format!("{} {:?}: {}", cmd.program, cmd.args, e)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = std::sync::mpsc::channel();
        std::thread::spawn(move || {
            let reader = BufReader::new(stdout);
            for line in reader.lines() {
                match line {
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(Session { child, stdin, lines: rx, timeout, log: Vec::new(), dead: false })
    }

    pub fn is_dead(&self) -> bool {
        self.dead
    }

    pub fn send(&mut self, line: &str) -> Result<(), SmtError> {
        if self.dead {
            return Err(SmtError::SessionDead("session was terminated".into()));
        }
        self.log.push(line.to_string());
        writeln!(self.stdin, "{}", line).map_err(|e| {
            self.dead = true;
            SmtError::SessionDead(e.to_string())
        })?;
        self.stdin.flush().map_err(|e| {
            self.dead = true;
            SmtError::SessionDead(e.to_string())
        })
    }

    pub fn send_all(&mut self, lines: &[String]) -> Result<(), SmtError> {
        for l in lines {
            self.send(l)?;
        }
        Ok(())
    }

    fn read_line(&mut self) -> Result<String, SmtError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(l) => Ok(l),
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                Err(SmtError::SolverTimeout(self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                self.dead = true;
                Err(SmtError::SessionDead("solver closed its output".into()))
            }
        }
    }

    /// Read a complete s-expression (or a bare word) as a string.
    fn read_sexp(&mut self) -> Result<String, SmtError> {
        let mut buf = String::new();
        loop {
            let line = self.read_line()?;
            if !buf.is_empty() {
                buf.push('\n');
            }
            buf.push_str(&line);
            let depth = paren_depth(&buf);
            if depth <= 0 && !buf.trim().is_empty() {
                return Ok(buf);
            }
        }
    }

    pub fn push(&mut self) -> Result<(), SmtError> {
        self.send("(push 1)")
    }

    pub fn pop(&mut self) -> Result<(), SmtError> {
        self.send("(pop 1)")
    }

    pub fn check_sat(&mut self) -> Result<SatResult, SmtError> {
        self.send("(check-sat)")?;
        let line = self.read_line()?;
        let word = line.trim();
        match word {
            "sat" => Ok(SatResult::Sat),
            "unsat" => Ok(SatResult::Unsat),
            "unknown" => Ok(SatResult::Unknown),
            other if other.starts_with("(error") => {
                // surface encoding bugs loudly but keep the session usable
                Err(SmtError::BadResponse(other.to_string()))
            }
            other => Err(SmtError::BadResponse(other.to_string())),
        }
    }

    /// Fetch integer values for the given terms after a sat result.
    pub fn get_values(&mut self, terms: &[String]) -> Result<Vec<(String, i128)>, SmtError> {
        if terms.is_empty() {
            return Ok(Vec::new());
        }
        let q = format!("(get-value ({}))", terms.join(" "));
        self.send(&q)?;
        let resp = self.read_sexp()?;
        parse_value_response(&resp, terms)
    }

    pub fn kill(&mut self) {
        self.dead = true;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.send("(exit)");
        let _ = self.child.wait();
    }
}

fn paren_depth(s: &str) -> i64 {
    let mut d = 0;
    let mut in_str = false;
    for c in s.chars() {
        match c {
            '"' => in_str = !in_str,
            '(' if !in_str => d += 1,
            ')' if !in_str => d -= 1,
            _ => {}
        }
    }
    d
}

// -- tiny s-expression reader for (get-value ...) responses -------------

#[derive(Debug, Clone, PartialEq)]
enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

fn tokenize(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '(' | ')' => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(c.to_string());
            }
            c if c.is_whitespace() => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn parse_sexp(tokens: &[String], pos: &mut usize) -> Option<Sexp> {
    if *pos >= tokens.len() {
        return None;
    }
    let t = &tokens[*pos];
    *pos += 1;
    if t == "(" {
        let mut items = Vec::new();
        while *pos < tokens.len() && tokens[*pos] != ")" {
            items.push(parse_sexp(tokens, pos)?);
        }
        *pos += 1; // consume ')'
        Some(Sexp::List(items))
    } else if t == ")" {
        None
    } else {
        Some(Sexp::Atom(t.clone()))
    }
}

fn sexp_to_int(s: &Sexp) -> Option<i128> {
    match s {
        Sexp::Atom(a) => a.parse().ok(),
        Sexp::List(items) => {
            // (- 5)
            if items.len() == 2 {
                if let (Sexp::Atom(m), Some(v)) = (&items[0], sexp_to_int(&items[1])) {
                    if m == "-" {
                        return Some(-v);
                    }
                }
            }
            None
        }
    }
}

fn parse_value_response(resp: &str, terms: &[String]) -> Result<Vec<(String, i128)>, SmtError> {
    if resp.trim_start().starts_with("(error") {
        return Err(SmtError::BadResponse(resp.to_string()));
    }
    let tokens = tokenize(resp);
    let mut pos = 0;
    let top = parse_sexp(&tokens, &mut pos)
        .ok_or_else(|| SmtError::BadResponse(resp.to_string()))?;
    let entries = match top {
        Sexp::List(items) => items,
        _ => return Err(SmtError::BadResponse(resp.to_string())),
    };
    if entries.len() != terms.len() {
        return Err(SmtError::BadResponse(format!(
            "expected {} values, got {} in {}",
            terms.len(),
            entries.len(),
            resp
        )));
    }
    let mut out = Vec::new();
    for (term, entry) in terms.iter().zip(entries) {
        match &entry {
            Sexp::List(pair) if pair.len() == 2 => {
                let v = sexp_to_int(&pair[1])
                    .ok_or_else(|| SmtError::BadResponse(format!("non-integer value in {}", resp)))?;
                out.push((term.clone(), v));
            }
            _ => return Err(SmtError::BadResponse(resp.to_string())),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_value_responses() {
        let terms = vec!["N".to_string(), "(select A 0)".to_string()];
        let resp = "((N 21240)\n ((select A 0) (- 3)))";
        let vals = parse_value_response(resp, &terms).unwrap();
        assert_eq!(vals, vec![("N".into(), 21240), ("(select A 0)".into(), -3)]);
    }

    #[test]
    fn from_spec_variants() {
        let c = SolverCmd::from_spec("z3");
        assert_eq!(c.program, "z3");
        assert_eq!(c.args, vec!["-in", "-smt2"]);
        let c = SolverCmd::from_spec("/opt/tools/z3-smt2.js");
        assert_eq!(c.program, "node");
        let c = SolverCmd::from_spec("node /x/y.js --flag");
        assert_eq!(c.program, "node");
        assert_eq!(c.args, vec!["/x/y.js", "--flag"]);
    }
}
