//! Subprocess runner for generated programs.
//!
//! One process per invocation. The request is written to stdin as a single
//! JSON object `{"adj1": [[0|1]], "adj2": [[0|1]], "w0": [[f64]]}`; the
//! process must print exactly one object `{"weights": [[f64]]}` (surrounding
//! whitespace allowed) and exit 0. The child runs in its own process group,
//! which is killed on timeout, on output overflow and after every run so that
//! stray descendants do not outlive the invocation.

use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ExecOutcome;
use crate::matrix::WeightMatrix;

pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(10);
pub const DEFAULT_MAX_OUTPUT_BYTES: usize = 64 * 1024 * 1024;
pub const DEFAULT_MEMORY_LIMIT_BYTES: u64 = 2 * 1024 * 1024 * 1024;

const STDERR_TAIL_BYTES: usize = 4096;
const POLL_INTERVAL: Duration = Duration::from_millis(2);
/// How long to wait for pipes to close once the process group is dead.
const DRAIN_GRACE: Duration = Duration::from_secs(1);

/// Placeholder in a command template replaced by the script path.
pub const SOURCE_PLACEHOLDER: &str = "{source}";

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("cannot spawn `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: io::Error,
    },
    #[error("empty command template")]
    EmptyCommand,
    #[error("runner i/o failure: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxConfig {
    #[serde(with = "duration_secs", default = "default_time_limit")]
    pub time_limit: Duration,
    #[serde(default = "default_max_output")]
    pub max_output_bytes: usize,
    /// Address-space cap applied to the child; `None` leaves it unlimited.
    #[serde(default = "default_memory_limit")]
    pub memory_limit_bytes: Option<u64>,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
}

fn default_time_limit() -> Duration {
    DEFAULT_TIME_LIMIT
}
fn default_max_output() -> usize {
    DEFAULT_MAX_OUTPUT_BYTES
}
fn default_memory_limit() -> Option<u64> {
    Some(DEFAULT_MEMORY_LIMIT_BYTES)
}
fn default_max_parallel() -> usize {
    thread::available_parallelism().map_or(4, |n| n.get())
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            time_limit: DEFAULT_TIME_LIMIT,
            max_output_bytes: DEFAULT_MAX_OUTPUT_BYTES,
            memory_limit_bytes: default_memory_limit(),
            max_parallel: default_max_parallel(),
        }
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Serialize)]
pub struct WireRequest<'a> {
    pub adj1: &'a [Vec<u8>],
    pub adj2: &'a [Vec<u8>],
    pub w0: &'a WeightMatrix,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireResponse {
    weights: Vec<Vec<f64>>,
}

/// Counting semaphore bounding concurrent subprocesses.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct ExternalRunner {
    config: SandboxConfig,
    slots: Slots,
    workdir: tempfile::TempDir,
}

impl std::fmt::Debug for ExternalRunner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalRunner")
            .field("config", &self.config)
            .field("workdir", &self.workdir.path())
            .finish()
    }
}

/// What one invocation did, beyond its outcome. Used by tests and logs.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub outcome: ExecOutcome,
    pub elapsed: Duration,
    pub pid: u32,
    pub stderr_tail: String,
}

impl ExternalRunner {
    pub fn new(config: SandboxConfig) -> Result<Self, RunnerError> {
        let workdir = tempfile::Builder::new().prefix("ged-evolve-").tempdir()?;
        Ok(Self {
            slots: Slots {
                free: Mutex::new(config.max_parallel.max(1)),
                cv: Condvar::new(),
            },
            config,
            workdir,
        })
    }

    pub fn config(&self) -> &SandboxConfig {
        &self.config
    }

    /// Writes `script` to a fresh file and runs `command` on it.
    pub fn run_script(
        &self,
        script: &str,
        command: &[String],
        request: &WireRequest<'_>,
    ) -> Result<RunReport, RunnerError> {
        let mut file = tempfile::Builder::new()
            .prefix("prog-")
            .tempfile_in(self.workdir.path())?;
        file.write_all(script.as_bytes())?;
        file.flush()?;
        let n = request.w0.rows();
        let payload = serde_json::to_vec(request).map_err(io::Error::other)?;
        self.run_with_path(file.path(), command, &payload, n)
    }

    fn run_with_path(
        &self,
        script: &Path,
        template: &[String],
        payload: &[u8],
        n: usize,
    ) -> Result<RunReport, RunnerError> {
        let argv = expand_template(template, script)?;
        let _slot = self.slots.acquire();

        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("LANG", "C.UTF-8")
            .current_dir(self.workdir.path())
            .process_group(0);
        if let Some(limit) = self.config.memory_limit_bytes {
            // SAFETY: setrlimit is async-signal-safe and touches no Rust state.
            unsafe {
                cmd.pre_exec(move || {
                    let lim = libc::rlimit {
                        rlim_cur: limit as libc::rlim_t,
                        rlim_max: limit as libc::rlim_t,
                    };
                    if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                        return Err(io::Error::last_os_error());
                    }
                    let no_core = libc::rlimit {
                        rlim_cur: 0,
                        rlim_max: 0,
                    };
                    libc::setrlimit(libc::RLIMIT_CORE, &no_core);
                    Ok(())
                });
            }
        }

        let started = Instant::now();
        let mut child = cmd.spawn().map_err(|source| RunnerError::Spawn {
            command: argv.join(" "),
            source,
        })?;
        let pid = child.id();
        let overflow = Arc::new(AtomicBool::new(false));

        let stdin = child.stdin.take().expect("piped stdin");
        let payload = payload.to_vec();
        let writer = thread::spawn(move || {
            let mut stdin = stdin;
            // The program may legitimately ignore its input.
            let _ = stdin.write_all(&payload);
        });

        let stdout_rx = spawn_reader(
            child.stdout.take().expect("piped stdout"),
            self.config.max_output_bytes,
            Some((pid, Arc::clone(&overflow))),
        );
        let stderr_rx = spawn_reader(child.stderr.take().expect("piped stderr"), usize::MAX, None);

        let timed_out = wait_with_deadline(&mut child, pid, started + self.config.time_limit)?;
        let status = child.wait()?;
        kill_group(pid);
        let elapsed = started.elapsed();
        let _ = writer.join();

        let stdout = stdout_rx.recv_timeout(DRAIN_GRACE).ok();
        let stderr = stderr_rx
            .recv_timeout(DRAIN_GRACE)
            .map(|b| tail(&b))
            .unwrap_or_default();

        let outcome = if timed_out {
            ExecOutcome::Timeout
        } else if overflow.load(Ordering::SeqCst) {
            ExecOutcome::Malformed(format!(
                "output exceeds {} bytes",
                self.config.max_output_bytes
            ))
        } else if !status.success() {
            ExecOutcome::Crash {
                code: status.code(),
                signal: status.signal(),
            }
        } else {
            match stdout {
                Some(bytes) => parse_response(&bytes, n),
                None => ExecOutcome::Malformed("output stream left open".into()),
            }
        };
        Ok(RunReport {
            outcome,
            elapsed,
            pid,
            stderr_tail: stderr,
        })
    }
}

fn expand_template(template: &[String], script: &Path) -> Result<Vec<String>, RunnerError> {
    if template.is_empty() {
        return Err(RunnerError::EmptyCommand);
    }
    let path = script.to_string_lossy();
    let mut argv: Vec<String> = template
        .iter()
        .map(|a| a.replace(SOURCE_PLACEHOLDER, &path))
        .collect();
    if !template.iter().any(|a| a.contains(SOURCE_PLACEHOLDER)) {
        argv.push(path.into_owned());
    }
    Ok(argv)
}

/// Returns true if the deadline passed and the group was killed.
fn wait_with_deadline(child: &mut Child, pid: u32, deadline: Instant) -> io::Result<bool> {
    loop {
        if child.try_wait()?.is_some() {
            return Ok(false);
        }
        let now = Instant::now();
        if now >= deadline {
            kill_group(pid);
            return Ok(true);
        }
        thread::sleep(POLL_INTERVAL.min(deadline - now));
    }
}

fn kill_group(pid: u32) {
    // SAFETY: plain syscall; ESRCH for an already-empty group is fine.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

fn spawn_reader<R: Read + Send + 'static>(
    mut stream: R,
    cap: usize,
    overflow: Option<(u32, Arc<AtomicBool>)>,
) -> mpsc::Receiver<Vec<u8>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 64 * 1024];
        loop {
            match stream.read(&mut buf) {
                Ok(0) => break,
                Ok(k) => {
                    if let Some((pid, flag)) = &overflow {
                        if kept.len() + k > cap {
                            flag.store(true, Ordering::SeqCst);
                            kill_group(*pid);
                            break;
                        }
                        kept.extend_from_slice(&buf[..k]);
                    } else {
                        kept.extend_from_slice(&buf[..k]);
                        if kept.len() > 2 * STDERR_TAIL_BYTES {
                            kept.drain(..kept.len() - STDERR_TAIL_BYTES);
                        }
                    }
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        let _ = tx.send(kept);
    });
    rx
}

fn tail(bytes: &[u8]) -> String {
    let start = bytes.len().saturating_sub(STDERR_TAIL_BYTES);
    String::from_utf8_lossy(&bytes[start..]).into_owned()
}

/// Validates program output for an `n x n` instance.
pub fn parse_response(stdout: &[u8], n: usize) -> ExecOutcome {
    let text = match std::str::from_utf8(stdout) {
        Ok(t) => t,
        Err(_) => return ExecOutcome::Malformed("output is not UTF-8".into()),
    };
    if text.trim().is_empty() {
        return ExecOutcome::Malformed("empty output".into());
    }
    let response: WireResponse = match serde_json::from_str(text) {
        Ok(r) => r,
        Err(e) => return ExecOutcome::Malformed(format!("invalid output object: {e}")),
    };
    let w = match WeightMatrix::from_rows(response.weights) {
        Ok(w) => w,
        Err(e) => return ExecOutcome::Malformed(e.to_string()),
    };
    if w.rows() != n || w.cols() != n {
        return ExecOutcome::Malformed(format!(
            "dimension mismatch: expected {n}x{n}, got {}x{}",
            w.rows(),
            w.cols()
        ));
    }
    if let Err(e) = w.check_finite() {
        return ExecOutcome::Malformed(e.to_string());
    }
    ExecOutcome::Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_accepts_whitespace() {
        let out = parse_response(b"  {\"weights\": [[1, 2.5], [0, -1]]}\n", 2);
        assert!(matches!(out, ExecOutcome::Ok(ref w) if w.get(0, 1) == 2.5));
    }

    #[test]
    fn parse_rejections() {
        let cases: &[(&[u8], &str)] = &[
            (b"", "empty"),
            (b"{\"weights\": [[1, 2, 3], [4, 5, 6]]}", "dimension mismatch"),
            (b"{\"weights\": [[1, 2], [3]]}", "ragged"),
            (b"{\"weights\": [[NaN, 0], [0, 0]]}", "invalid output"),
            (b"{\"weights\": [[1e999, 0], [0, 0]]}", "invalid output"),
            (b"{\"weights\": [[1, 0], [0, 1]]} trailing", "invalid output"),
            (b"{\"weights\": [[1, 0], [0, 1]], \"x\": 1}", "invalid output"),
            (b"{\"weights\": [[1, 0], [0, ", "invalid output"),
            (b"\xff\xfe", "UTF-8"),
        ];
        for (bytes, needle) in cases {
            match parse_response(bytes, 2) {
                ExecOutcome::Malformed(reason) => {
                    assert!(reason.contains(needle), "{reason} lacks {needle}")
                }
                other => panic!("{:?} gave {other:?}", String::from_utf8_lossy(bytes)),
            }
        }
    }

    #[test]
    fn template_expansion() {
        let p = Path::new("/tmp/x.py");
        assert_eq!(
            expand_template(&["python3".into(), "-I".into(), "{source}".into()], p).unwrap(),
            vec!["python3", "-I", "/tmp/x.py"]
        );
        assert_eq!(
            expand_template(&["sh".into()], p).unwrap(),
            vec!["sh", "/tmp/x.py"]
        );
        assert!(expand_template(&[], p).is_err());
    }
}
