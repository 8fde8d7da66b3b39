//! Runs exercise-language programs in child processes.
//!
//! Every run gets a fresh temporary directory holding the candidate source,
//! the serialized input, and a generated driver. The driver calls the target
//! function and writes one tagged literal to a result file, which is the only
//! channel the harness reads; the child's stdout and stderr are discarded.

mod cache;

use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::literal::{Literal, LiteralError, TestInput};
use crate::model::{ErrorVector, Exercise};
use crate::selector::BehaviorMatrix;

pub use cache::CachedExecutor;

const DRIVER: &str = include_str!("driver.py");
const RESULT_FILE: &str = ".hypocompass-result.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Value { value: Literal },
    Error { error: String, message: String },
    Timeout,
}

impl Outcome {
    pub fn value(&self) -> Option<&Literal> {
        match self {
            Outcome::Value { value } => Some(value),
            _ => None,
        }
    }

    /// Short human-readable form, e.g. `3`, `IndexError: list index out of range`.
    pub fn describe(&self) -> String {
        match self {
            Outcome::Value { value } => value.to_python(),
            Outcome::Error { error, message } if message.is_empty() => error.clone(),
            Outcome::Error { error, message } => format!("{error}: {message}"),
            Outcome::Timeout => "timed out".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub outcome: Outcome,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LoadCheck {
    Loaded,
    Failed { error: String, message: String },
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Interpreter executable and arguments. A `{driver}` element is replaced
    /// with the driver path; without one, the driver path is appended.
    pub interpreter_command: Vec<String>,
    pub per_run_timeout_ms: u64,
    pub max_parallel: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            interpreter_command: vec!["python3".into(), "-I".into(), "-S".into()],
            per_run_timeout_ms: 2000,
            max_parallel: std::thread::available_parallelism().map_or(4, |n| n.get()).min(8),
        }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.interpreter_command.is_empty() || self.interpreter_command[0].trim().is_empty() {
            return Err(HarnessError::Config("interpreter_command must not be empty".into()));
        }
        if self.per_run_timeout_ms == 0 {
            return Err(HarnessError::Config("per_run_timeout_ms must be positive".into()));
        }
        if self.max_parallel == 0 {
            return Err(HarnessError::Config("max_parallel must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid harness configuration: {0}")]
    Config(String),
    #[error("interpreter `{0}` not found")]
    InterpreterMissing(String),
    #[error("failed to set up or spawn a run: {0}")]
    Environment(#[from] std::io::Error),
    #[error("input cannot be encoded: {0}")]
    InvalidInput(#[from] LiteralError),
    #[error("reference solution failed on input {index} ({input}): {outcome}")]
    ReferenceFailure { index: usize, input: String, outcome: String },
}

/// Something that can run exercise-language code.
pub trait Executor: Send + Sync {
    fn run(&self, source: &str, function_name: &str, input: &TestInput) -> Result<RunResult, HarnessError>;

    /// Checks that the module loads and defines `function_name`.
    fn load(&self, source: &str, function_name: &str) -> Result<LoadCheck, HarnessError>;

    /// How many runs may execute concurrently.
    fn parallelism(&self) -> usize {
        1
    }
}

/// Executes Python in isolated child processes.
#[derive(Debug, Clone)]
pub struct PythonHarness {
    config: HarnessConfig,
}

impl PythonHarness {
    pub fn new(config: HarnessConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        Ok(PythonHarness { config })
    }

    pub fn config(&self) -> &HarnessConfig {
        &self.config
    }

    fn invoke(&self, source: &str, function_name: &str, mode: &str, input: Option<&TestInput>) -> Result<(Option<serde_json::Value>, bool, u64), HarnessError> {
        let dir = tempfile::Builder::new().prefix("hypocompass-run-").tempdir()?;
        std::fs::write(dir.path().join("candidate.py"), source)?;
        std::fs::write(dir.path().join("driver.py"), DRIVER)?;
        if let Some(input) = input {
            std::fs::write(dir.path().join("input.json"), serde_json::to_vec(&input.args).expect("literals serialize"))?;
        }
        let mut cmd = self.command(dir.path());
        cmd.args([mode, function_name, RESULT_FILE]);

        let limit = Duration::from_millis(self.config.per_run_timeout_ms);
        let start = Instant::now();
        let mut child = cmd.spawn().map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => HarnessError::InterpreterMissing(self.config.interpreter_command[0].clone()),
            _ => HarnessError::Environment(e),
        })?;
        let status = child.wait_timeout(limit)?;
        let elapsed = start.elapsed().as_millis() as u64;
        if status.is_none() {
            let _ = child.kill();
            let _ = child.wait();
            return Ok((None, true, elapsed.max(self.config.per_run_timeout_ms)));
        }
        let result = std::fs::read(dir.path().join(RESULT_FILE))
            .ok()
            .and_then(|bytes| serde_json::from_slice(&bytes).ok());
        Ok((result, false, elapsed))
    }

    fn command(&self, dir: &Path) -> Command {
        let program = &self.config.interpreter_command[0];
        let mut cmd = Command::new(program);
        let driver = dir.join("driver.py");
        let mut placed = false;
        for arg in &self.config.interpreter_command[1..] {
            if arg == "{driver}" {
                cmd.arg(&driver);
                placed = true;
            } else {
                cmd.arg(arg);
            }
        }
        if !placed {
            cmd.arg(&driver);
        }
        cmd.current_dir(dir)
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null());
        cmd
    }
}

fn str_field(v: &serde_json::Value, key: &str) -> String {
    v.get(key).and_then(|s| s.as_str()).unwrap_or_default().to_string()
}

impl Executor for PythonHarness {
    fn run(&self, source: &str, function_name: &str, input: &TestInput) -> Result<RunResult, HarnessError> {
        input.validate()?;
        let (result, timed_out, wall_ms) = self.invoke(source, function_name, "run", Some(input))?;
        let outcome = if timed_out {
            Outcome::Timeout
        } else {
            match result {
                Some(v) => match v.get("status").and_then(|s| s.as_str()) {
                    Some("value") => match v.get("value").cloned().map(serde_json::from_value::<Literal>) {
                        Some(Ok(value)) => Outcome::Value { value },
                        _ => Outcome::Error { error: "ProtocolError".into(), message: "malformed result literal".into() },
                    },
                    Some("error") | Some("load_error") => Outcome::Error { error: str_field(&v, "kind"), message: str_field(&v, "message") },
                    _ => Outcome::Error { error: "ProtocolError".into(), message: "unknown result status".into() },
                },
                None => Outcome::Error { error: "Crash".into(), message: "process exited without a result".into() },
            }
        };
        Ok(RunResult { outcome, wall_ms })
    }

    fn load(&self, source: &str, function_name: &str) -> Result<LoadCheck, HarnessError> {
        let (result, timed_out, _) = self.invoke(source, function_name, "load", None)?;
        if timed_out {
            return Ok(LoadCheck::Timeout);
        }
        Ok(match result {
            Some(v) if v.get("status").and_then(|s| s.as_str()) == Some("loaded") => LoadCheck::Loaded,
            Some(v) => LoadCheck::Failed { error: str_field(&v, "kind"), message: str_field(&v, "message") },
            None => LoadCheck::Failed { error: "Crash".into(), message: "process exited without a result".into() },
        })
    }

    fn parallelism(&self) -> usize {
        self.config.max_parallel
    }
}

/// Maps `f` over `items` on up to `workers` threads, preserving order.
pub fn run_parallel<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap().into_iter().map(|r| r.expect("every slot filled")).collect()
}

pub fn run_one(exec: &dyn Executor, source: &str, function_name: &str, input: &TestInput) -> Result<RunResult, HarnessError> {
    exec.run(source, function_name, input)
}

/// Reference outputs for an exercise, computed or loaded once and reused for
/// every comparison.
#[derive(Debug, Clone)]
pub struct Oracle<'a> {
    exercise: &'a Exercise,
    outputs: Vec<Literal>,
}

impl<'a> Oracle<'a> {
    /// Runs the reference solution on every reference input.
    pub fn compute(exercise: &'a Exercise, exec: &dyn Executor) -> Result<Self, HarnessError> {
        let results = run_parallel(&exercise.reference_inputs, exec.parallelism(), |input| {
            exec.run(&exercise.reference_solution, &exercise.function_name, input)
        });
        let mut outputs = Vec::with_capacity(results.len());
        for (index, result) in results.into_iter().enumerate() {
            let result = result?;
            match result.outcome {
                Outcome::Value { value } => outputs.push(value),
                other => {
                    return Err(HarnessError::ReferenceFailure {
                        index,
                        input: exercise.reference_inputs[index].call_expr(&exercise.function_name),
                        outcome: other.describe(),
                    })
                }
            }
        }
        Ok(Oracle { exercise, outputs })
    }

    /// Uses the stored outputs when present, otherwise computes them.
    pub fn for_exercise(exercise: &'a Exercise, exec: &dyn Executor) -> Result<Self, HarnessError> {
        if exercise.reference_outputs.len() == exercise.reference_inputs.len() && !exercise.reference_inputs.is_empty() {
            Ok(Oracle { exercise, outputs: exercise.reference_outputs.clone() })
        } else {
            Self::compute(exercise, exec)
        }
    }

    pub fn exercise(&self) -> &Exercise {
        self.exercise
    }

    pub fn outputs(&self) -> &[Literal] {
        &self.outputs
    }

    pub fn into_outputs(self) -> Vec<Literal> {
        self.outputs
    }

    /// Expected output for any input; reference inputs use the stored value.
    pub fn expected(&self, input: &TestInput, exec: &dyn Executor) -> Result<Literal, HarnessError> {
        if let Some(i) = self.exercise.reference_index(input) {
            return Ok(self.outputs[i].clone());
        }
        expected_output(self.exercise, input, exec)
    }

    pub fn error_vector(&self, source: &str, exec: &dyn Executor) -> Result<ErrorVector, HarnessError> {
        let inputs = &self.exercise.reference_inputs;
        let results = run_parallel(inputs, exec.parallelism(), |input| exec.run(source, &self.exercise.function_name, input));
        let mut bits = Vec::with_capacity(inputs.len());
        for (result, expected) in results.into_iter().zip(&self.outputs) {
            let passed = result?.outcome.value().is_some_and(|v| v.matches(expected));
            bits.push(!passed);
        }
        Ok(ErrorVector(bits))
    }

    /// Rows of error vectors, one per `(id, source)` in order.
    pub fn behavior_matrix(&self, codes: &[(String, String)], exec: &dyn Executor) -> Result<BehaviorMatrix, HarnessError> {
        let mut rows = Vec::with_capacity(codes.len());
        for (id, source) in codes {
            rows.push((id.clone(), self.error_vector(source, exec)?));
        }
        Ok(BehaviorMatrix::new(rows, self.exercise.reference_inputs.len()).expect("harness rows are rectangular"))
    }
}

/// Output of the reference solution on `input`.
pub fn expected_output(exercise: &Exercise, input: &TestInput, exec: &dyn Executor) -> Result<Literal, HarnessError> {
    let result = exec.run(&exercise.reference_solution, &exercise.function_name, input)?;
    match result.outcome {
        Outcome::Value { value } => Ok(value),
        other => Err(HarnessError::ReferenceFailure {
            index: exercise.reference_index(input).unwrap_or(usize::MAX),
            input: input.call_expr(&exercise.function_name),
            outcome: other.describe(),
        }),
    }
}

pub fn error_vector(source: &str, exercise: &Exercise, exec: &dyn Executor) -> Result<ErrorVector, HarnessError> {
    Oracle::for_exercise(exercise, exec)?.error_vector(source, exec)
}

pub fn behavior_matrix(codes: &[(String, String)], exercise: &Exercise, exec: &dyn Executor) -> Result<BehaviorMatrix, HarnessError> {
    Oracle::for_exercise(exercise, exec)?.behavior_matrix(codes, exec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::literal::lit::*;

    fn harness() -> PythonHarness {
        PythonHarness::new(HarnessConfig { per_run_timeout_ms: 1500, ..Default::default() }).unwrap()
    }

    const ADD: &str = "def add(a, b):\n    return a + b\n";

    #[test]
    fn runs_a_function() {
        let r = harness().run(ADD, "add", &TestInput::new(vec![int(2), int(3)])).unwrap();
        assert_eq!(r.outcome, Outcome::Value { value: int(5) });
    }

    #[test]
    fn structured_values_cross_the_boundary() {
        let src = "def f(d):\n    return {v: k for k, v in d.items()}, (1, 'a'), [None, True, 1.5]\n";
        let input = TestInput::new(vec![dict(vec![(str("a"), int(1))])]);
        let r = harness().run(src, "f", &input).unwrap();
        let expected = tuple(vec![
            dict(vec![(int(1), str("a"))]),
            tuple(vec![int(1), str("a")]),
            list(vec![none(), Literal::Bool(true), Literal::Float(1.5)]),
        ]);
        assert_eq!(r.outcome, Outcome::Value { value: expected });
    }

    #[test]
    fn exceptions_are_outcomes() {
        let r = harness().run("def f(x):\n    return x[5]\n", "f", &TestInput::new(vec![ints(&[1])])).unwrap();
        assert!(matches!(r.outcome, Outcome::Error { ref error, .. } if error == "IndexError"), "{r:?}");
        let r = harness().run("def f(x):\n    return {1, 2}\n", "f", &TestInput::new(vec![int(0)])).unwrap();
        assert!(matches!(r.outcome, Outcome::Error { ref error, .. } if error == "TypeError"));
        let r = harness().run("import os\ndef f(x):\n    os._exit(3)\n", "f", &TestInput::new(vec![int(0)])).unwrap();
        assert!(matches!(r.outcome, Outcome::Error { ref error, .. } if error == "Crash"));
    }

    #[test]
    fn infinite_loop_times_out() {
        let h = PythonHarness::new(HarnessConfig { per_run_timeout_ms: 300, ..Default::default() }).unwrap();
        let r = h.run("def f(x):\n    while True:\n        pass\n", "f", &TestInput::new(vec![int(0)])).unwrap();
        assert_eq!(r.outcome, Outcome::Timeout);
        assert!(r.wall_ms >= 300);
    }

    #[test]
    fn runs_are_isolated() {
        let h = harness();
        let writer = "def f(x):\n    open('state.txt', 'w').write('dirty')\n    return 1\n";
        let reader = "import os\ndef f(x):\n    return os.path.exists('state.txt')\n";
        h.run(writer, "f", &TestInput::new(vec![int(0)])).unwrap();
        let r = h.run(reader, "f", &TestInput::new(vec![int(0)])).unwrap();
        assert_eq!(r.outcome, Outcome::Value { value: Literal::Bool(false) });
    }

    #[test]
    fn load_check() {
        let h = harness();
        assert_eq!(h.load(ADD, "add").unwrap(), LoadCheck::Loaded);
        assert!(matches!(h.load("def add(a, b)\n    return a\n", "add").unwrap(), LoadCheck::Failed { ref error, .. } if error == "SyntaxError"));
        assert!(matches!(h.load(ADD, "sub").unwrap(), LoadCheck::Failed { ref error, .. } if error == "NameError"));
    }

    #[test]
    fn missing_interpreter_is_an_error() {
        let h = PythonHarness::new(HarnessConfig { interpreter_command: vec!["no-such-python-xyz".into()], ..Default::default() }).unwrap();
        assert!(matches!(h.run(ADD, "add", &TestInput::new(vec![int(1), int(1)])), Err(HarnessError::InterpreterMissing(_))));
    }

    #[test]
    fn unencodable_input_rejected() {
        let bad = TestInput::new(vec![dict(vec![(ints(&[1]), int(1))])]);
        assert!(matches!(harness().run(ADD, "add", &bad), Err(HarnessError::InvalidInput(_))));
    }

    #[test]
    fn config_validation() {
        assert!(HarnessConfig { per_run_timeout_ms: 0, ..Default::default() }.validate().is_err());
        assert!(HarnessConfig { max_parallel: 0, ..Default::default() }.validate().is_err());
        assert!(HarnessConfig { interpreter_command: vec![], ..Default::default() }.validate().is_err());
    }

    #[test]
    fn parallel_map_preserves_order() {
        let items: Vec<usize> = (0..50).collect();
        assert_eq!(run_parallel(&items, 7, |x| x * 2), items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
