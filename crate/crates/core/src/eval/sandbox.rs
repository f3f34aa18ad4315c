//! Subprocess execution of assembled candidate programs.
//!
//! Each run gets a fresh scratch directory as working directory, an empty
//! environment, a wall-clock limit and capped output. For Python the program
//! is prefixed with an audit-hook guard that refuses writes outside the
//! scratch directory and process spawning. This is a best-effort boundary,
//! not OS-level isolation: run untrusted code inside a container.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{EvalConfig, EvalError};
use crate::grammar::ToolCallMarkers;
use super::benchmark::BenchmarkProblem;

pub const PROGRAM_FILE: &str = "program.py";

const PYTHON_GUARD: &str = r#"import os as _tc_os, sys as _tc_sys
def _tc_install_guard():
    root = _tc_os.path.realpath(_tc_os.getcwd())
    def inside(path):
        if isinstance(path, int):
            return True
        try:
            full = _tc_os.path.realpath(_tc_os.path.join(root, _tc_os.fsdecode(path)))
        except Exception:
            return False
        return full == root or full.startswith(root + _tc_os.sep)
    write_flags = _tc_os.O_WRONLY | _tc_os.O_RDWR | _tc_os.O_CREAT | _tc_os.O_APPEND | _tc_os.O_TRUNC
    path_events = {"os.remove", "os.rename", "os.mkdir", "os.rmdir", "os.chmod", "os.chown",
                   "os.symlink", "os.link", "os.truncate", "os.utime", "shutil.rmtree",
                   "shutil.copyfile", "shutil.move"}
    spawn_events = {"os.system", "os.exec", "os.posix_spawn", "os.spawn", "os.fork",
                    "os.forkpty", "subprocess.Popen", "pty.spawn", "socket.connect"}
    def hook(event, args):
        if event == "open":
            path, mode, flags = args
            writing = any(c in (mode or "") for c in "wax+") or (isinstance(flags, int) and flags & write_flags)
            if writing and not inside(path):
                raise PermissionError("sandbox: write outside scratch directory: %r" % (path,))
        elif event in path_events:
            for arg in args[:2]:
                if isinstance(arg, (str, bytes, _tc_os.PathLike)) and not inside(arg):
                    raise PermissionError("sandbox: %s outside scratch directory: %r" % (event, arg))
        elif event in spawn_events:
            raise PermissionError("sandbox: %s is not allowed" % event)
    _tc_sys.addaudithook(hook)
_tc_install_guard()
del _tc_install_guard
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Pass,
    Fail,
    Error,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub problem_id: String,
    pub candidate_index: usize,
    pub status: CandidateStatus,
    pub stderr_excerpt: String,
    pub wall_ms: f64,
}

/// Fills the program template: `{context}`, `{completion}`, `{tests}`,
/// `{entry_point}`.
pub fn assemble_program(problem: &BenchmarkProblem, completion: &str, template: &str) -> String {
    // One pass so that placeholder-like text inside the pieces is left alone.
    let mut out = String::with_capacity(template.len() + completion.len() + problem.test_code.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open..];
        let pieces: [(&str, &str); 4] = [
            ("{context}", &problem.context_code),
            ("{completion}", completion),
            ("{tests}", &problem.test_code),
            ("{entry_point}", problem.entry_hint.as_deref().unwrap_or("")),
        ];
        match pieces.iter().find(|(key, _)| after.starts_with(key)) {
            Some((key, value)) => {
                out.push_str(value);
                rest = &after[key.len()..];
            }
            None => {
                out.push('{');
                rest = &after[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn read_capped(mut source: impl Read, cap: usize) -> Vec<u8> {
    let mut kept = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match source.read(&mut buf) {
            Ok(0) | Err(_) => break,
            Ok(n) => {
                let room = cap.saturating_sub(kept.len());
                kept.extend_from_slice(&buf[..n.min(room)]);
            }
        }
    }
    kept
}

fn tail_excerpt(bytes: &[u8], max_chars: usize) -> String {
    let text = String::from_utf8_lossy(bytes);
    let chars: Vec<char> = text.chars().collect();
    chars[chars.len().saturating_sub(max_chars)..].iter().collect()
}

pub(crate) fn is_python(cmd: &[String]) -> bool {
    cmd.first()
        .and_then(|p| Path::new(p).file_name())
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with("python"))
}

pub fn run_candidate(
    problem: &BenchmarkProblem,
    clean_code: &str,
    candidate_index: usize,
    config: &EvalConfig,
    markers: &ToolCallMarkers,
) -> Result<CandidateResult, EvalError> {
    if markers.contains_marker(clean_code) {
        return Err(EvalError::MarkersInCandidate(problem.id.clone()));
    }
    let (program, args) = config
        .interpreter_cmd
        .split_first()
        .ok_or_else(|| EvalError::InvalidConfig("interpreter command is empty".into()))?;

    let scratch = tempfile::tempdir().map_err(|e| EvalError::Io("scratch directory".into(), e))?;
    let mut source = String::new();
    if config.sandbox_guard && is_python(&config.interpreter_cmd) {
        source.push_str(PYTHON_GUARD);
    }
    source.push_str(&assemble_program(problem, clean_code, &config.template));
    let program_path = scratch.path().join(PROGRAM_FILE);
    std::fs::write(&program_path, source).map_err(|e| EvalError::Io(program_path.display().to_string(), e))?;

    let started = Instant::now();
    let mut child = Command::new(program)
        .args(args)
        .arg(PROGRAM_FILE)
        .current_dir(scratch.path())
        .env_clear()
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| EvalError::Spawn(format!("{program}: {e}")))?;

    let cap = config.output_cap_bytes;
    let stdout = child.stdout.take().expect("stdout piped");
    let stderr = child.stderr.take().expect("stderr piped");
    let out_reader = thread::spawn(move || read_capped(stdout, cap));
    let err_reader = thread::spawn(move || read_capped(stderr, cap));

    let limit = Duration::from_secs_f64(config.timeout_s);
    let mut timed_out = false;
    let exit = loop {
        match child.try_wait() {
            Ok(Some(status)) => break Some(status),
            Ok(None) if started.elapsed() >= limit => {
                let _ = child.kill();
                let _ = child.wait();
                timed_out = true;
                break None;
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(EvalError::Spawn(e.to_string())),
        }
    };
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let _ = out_reader.join();
    let stderr_bytes = err_reader.join().unwrap_or_default();
    let stderr_excerpt = tail_excerpt(&stderr_bytes, 1024);

    let status = match exit {
        None => CandidateStatus::Timeout,
        Some(s) if s.success() => CandidateStatus::Pass,
        Some(_) if stderr_excerpt.contains("AssertionError") => CandidateStatus::Fail,
        Some(_) => CandidateStatus::Error,
    };
    debug_assert!(timed_out == (status == CandidateStatus::Timeout));
    Ok(CandidateResult {
        problem_id: problem.id.clone(),
        candidate_index,
        status,
        stderr_excerpt,
        wall_ms,
    })
}
