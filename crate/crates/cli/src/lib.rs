//! Instructor command line: generate a draft, verify it step by step,
//! select the final suite, export a handout, or run the service.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hypocompass::handout::export_handout;
use hypocompass::harness::{CachedExecutor, HarnessConfig, HarnessError, PythonHarness};
use hypocompass::model::{parse_exercise, parse_suite, serialize_suite, SuiteError};
use hypocompass::pipeline::{
    finalize, metric_report, parse_draft, serialize_draft, BackendConfig, BackendError, BackendSpec, FinalizeError, FinalizeOptions,
    GenerationStep, LlmBackend, Pipeline, PipelineConfig, PipelineError, SuiteDraft, TemplateError, TemplateSet, VerifyAction,
};
use hypocompass::selector::SelectorConfig;

#[derive(Debug, Parser)]
#[command(name = "hypocompass", version, about = "Author debugging-practice suites and serve tutoring sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
}

#[derive(Debug, Subcommand)]
pub enum CommandKind {
    /// Generate a draft suite for an exercise.
    Generate(GenerateArgs),
    /// Approve, edit, or reject the pending steps of a draft.
    Verify(VerifyArgs),
    /// Select practice and distractor codes from a verified draft.
    Select(SelectArgs),
    /// Render a finalized suite as a printable markdown handout.
    ExportHandout(HandoutArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Live,
    Replay,
    Canned,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "replay")]
    pub backend: BackendKind,
    /// Fixture directory for the replay backend.
    #[arg(long)]
    pub replay_dir: Option<PathBuf>,
    /// Directory of exercises known to the canned backend.
    #[arg(long)]
    pub canned_exercises: Option<PathBuf>,
    /// Directory of canned answers.
    #[arg(long)]
    pub canned_dir: Option<PathBuf>,
    /// TOML file with live backend settings (API base, model names, key variable).
    #[arg(long)]
    pub backend_config: Option<PathBuf>,
    /// Also write every completion to this directory as a replay fixture.
    #[arg(long)]
    pub record_dir: Option<PathBuf>,
    /// Directory of prompt templates overriding the built-in ones.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// TOML file with harness settings.
    #[arg(long)]
    pub harness_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub exercise: PathBuf,
    /// Buggy codes to over-generate.
    #[arg(long, default_value_t = 24)]
    pub count: usize,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// Output draft file; defaults to `<exercise id>.draft.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Draft file, updated in place unless `--output` is given.
    #[arg(long)]
    pub suite: PathBuf,
    /// Approve every approvable step and reject the rest.
    #[arg(long)]
    pub approve_all: bool,
    /// Name recorded as the editor of each decision.
    #[arg(long, default_value = "instructor")]
    pub instructor: String,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Verified draft file.
    #[arg(long)]
    pub suite: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub n_practice: usize,
    #[arg(long, default_value_t = 2)]
    pub m_distractors: usize,
    /// Flat clusters to cut the test dendrogram into.
    #[arg(long, default_value_t = 3)]
    pub clusters: usize,
    /// Output suite file; defaults to `<exercise id>.suite.json`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HandoutArgs {
    /// Finalized suite file.
    #[arg(long)]
    pub suite: PathBuf,
    /// Output file; defaults to standard output.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub config: PathBuf,
}

/// Failure classes with stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input files, invalid exercises, selection failures.
    #[error("{0}")]
    Validation(String),
    /// Missing files, interpreter, API key, or network.
    #[error("{0}")]
    Environment(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Environment(_) => 3,
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Backend(b) => b.into(),
            PipelineError::Harness(h) => h.into(),
            PipelineError::Template(t) => t.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        CliError::Environment(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidInput(_) | HarnessError::ReferenceFailure { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Environment(e.to_string()),
        }
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        match e {
            TemplateError::Io { .. } => CliError::Environment(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<FinalizeError> for CliError {
    fn from(e: FinalizeError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Environment(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Environment(format!("cannot write {}: {e}", path.display())))
}

fn invalid(path: &Path, e: SuiteError) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    toml::from_str(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

impl BackendArgs {
    pub fn spec(&self) -> Result<BackendSpec, CliError> {
        let need = |value: &Option<PathBuf>, flag: &str| {
            value.clone().ok_or_else(|| CliError::Validation(format!("--backend {:?} needs {flag}", self.backend).to_lowercase()))
        };
        let spec = match self.backend {
            BackendKind::Replay => BackendSpec::Replay { dir: need(&self.replay_dir, "--replay-dir")? },
            BackendKind::Canned => {
                BackendSpec::Canned { exercises_dir: need(&self.canned_exercises, "--canned-exercises")?, canned_dir: need(&self.canned_dir, "--canned-dir")? }
            }
            BackendKind::Live => {
                let config = match &self.backend_config {
                    Some(path) => read_toml::<BackendConfig>(path)?,
                    None => BackendConfig::default(),
                };
                BackendSpec::Live { config }
            }
        };
        Ok(match &self.record_dir {
            Some(dir) => BackendSpec::Record { dir: dir.clone(), inner: Box::new(spec) },
            None => spec,
        })
    }

    fn backend(&self) -> Result<Box<dyn LlmBackend>, CliError> {
        Ok(self.spec()?.build()?)
    }

    fn templates(&self) -> Result<TemplateSet, CliError> {
        Ok(match &self.templates {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::builtin(),
        })
    }

    fn harness(&self) -> Result<CachedExecutor<PythonHarness>, CliError> {
        let config = match &self.harness_config {
            Some(path) => read_toml::<HarnessConfig>(path)?,
            None => HarnessConfig::default(),
        };
        config.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(CachedExecutor::new(PythonHarness::new(config)?))
    }
}

/// Runs one command. `input` feeds the interactive verify loop.
pub fn run(cli: Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        CommandKind::Generate(args) => generate(&args, out),
        CommandKind::Verify(args) => verify(&args, input, out),
        CommandKind::Select(args) => select(&args, out),
        CommandKind::ExportHandout(args) => handout(&args, out),
        CommandKind::Serve(args) => serve(&args),
    }
}

fn say(out: &mut dyn Write, text: impl std::fmt::Display) {
    let _ = writeln!(out, "{text}");
}

pub fn generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.count == 0 {
        return Err(CliError::Validation("--count must be positive".into()));
    }
    let exercise = parse_exercise(&read(&args.exercise)?).map_err(|e| invalid(&args.exercise, e))?;
    let backend = args.backend.backend()?;
    let exec = args.backend.harness()?;
    let pipeline = Pipeline::new(backend.as_ref(), &exec, args.backend.templates()?);
    let config = PipelineConfig { buggy_count: args.count, ..PipelineConfig::default() };
    let output = args.output.clone().unwrap_or_else(|| PathBuf::from(format!("{}.draft.json", exercise.id)));
    let draft = pipeline.generate(exercise, config)?;
    write(&output, &serialize_draft(&draft))?;
    say(out, format_args!("wrote {} ({} steps, {} pending)", output.display(), draft.steps.len(), draft.pending_steps().count()));
    say(out, metric_report(&[&draft]));
    Ok(())
}

fn load_draft(path: &Path) -> Result<SuiteDraft, CliError> {
    parse_draft(&read(path)?).map_err(|e| invalid(path, e))
}

pub fn verify(args: &VerifyArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let mut draft = load_draft(&args.suite)?;
    let backend = args.backend.backend()?;
    let exec = args.backend.harness()?;
    let pipeline = Pipeline::new(backend.as_ref(), &exec, args.backend.templates()?);
    let output = args.output.clone().unwrap_or_else(|| args.suite.clone());
    if args.approve_all {
        let summary = pipeline.approve_all(&mut draft, &args.instructor)?;
        say(out, format_args!("approved {}, rejected {}, generated {}", summary.approved, summary.rejected, summary.generated));
    } else {
        interactive(&pipeline, &mut draft, args, &output, input, out)?;
    }
    write(&output, &serialize_draft(&draft))?;
    let state = if draft.is_fully_verified() { "fully verified" } else { "still has pending steps" };
    say(out, format_args!("wrote {} ({state})", output.display()));
    say(out, metric_report(&[&draft]));
    Ok(())
}

fn show_step(step: &GenerationStep, out: &mut dyn Write) {
    say(out, format_args!("\n== {} [{}] ==", step.id, step.template.file_name()));
    if !step.flags.is_empty() {
        say(out, format_args!("flags: {:?}", step.flags));
    }
    if let Some(e) = &step.parse_error {
        say(out, format_args!("parse error: {e}"));
    }
    say(out, step.final_text());
}

/// Prompts for each pending step until none remain or the user quits. The
/// draft is saved after every decision.
fn interactive(
    pipeline: &Pipeline<'_>,
    draft: &mut SuiteDraft,
    args: &VerifyArgs,
    output: &Path,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut skipped: Vec<String> = Vec::new();
    loop {
        let Some(step) = draft.pending_steps().find(|s| !skipped.contains(&s.id)).cloned() else { return Ok(()) };
        show_step(&step, out);
        let shown = Instant::now();
        loop {
            let _ = write!(out, "[a]pprove, [e]dit, [r]eject, [s]kip, [q]uit > ");
            let _ = out.flush();
            let Some(line) = read_line(input)? else { return Ok(()) };
            let action = match line.trim() {
                "a" | "approve" => VerifyAction::Approve,
                "r" | "reject" => VerifyAction::Reject,
                "e" | "edit" => {
                    say(out, "enter the replacement text, then a line with a single '.'");
                    let mut text = String::new();
                    loop {
                        match read_line(input)? {
                            None => break,
                            Some(l) if l.trim_end() == "." => break,
                            Some(l) => text.push_str(&l),
                        }
                    }
                    VerifyAction::Edit { text: text.trim_end_matches('\n').to_string() }
                }
                "s" | "skip" => {
                    skipped.push(step.id.clone());
                    break;
                }
                "q" | "quit" => return Ok(()),
                other => {
                    say(out, format_args!("unknown choice {other:?}"));
                    continue;
                }
            };
            let seconds = shown.elapsed().as_secs_f64();
            match pipeline.verify_step(draft, &step.id, action, &args.instructor, Some(seconds)) {
                Ok(status) => {
                    let created = pipeline.advance(draft)?;
                    say(out, format_args!("{} -> {:?}; {created} new steps", step.id, status.state));
                    write(output, &serialize_draft(draft))?;
                    break;
                }
                Err(e @ (PipelineError::Blocked { .. } | PipelineError::InvalidEdit { .. })) => say(out, e),
                Err(e) => return Err(e.into()),
            }
        }
    }
}

fn read_line(input: &mut dyn BufRead) -> Result<Option<String>, CliError> {
    let mut line = String::new();
    match input.read_line(&mut line) {
        Ok(0) => Ok(None),
        Ok(_) => Ok(Some(line)),
        Err(e) => Err(CliError::Environment(format!("reading input: {e}"))),
    }
}

pub fn select(args: &SelectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let draft = load_draft(&args.suite)?;
    let pending = draft.pending_steps().count();
    if pending > 0 {
        return Err(CliError::Validation(format!("{pending} steps still await verification; run verify first")));
    }
    let selector = SelectorConfig { n_practice: args.n_practice, m_distractors: args.m_distractors, ..SelectorConfig::default() };
    selector.validate().map_err(|e| CliError::Validation(e.to_string()))?;
    let options = FinalizeOptions { selector, clusters: args.clusters, ..FinalizeOptions::default() };
    let finalized = finalize(&draft, &options)?;
    for notice in &finalized.notices {
        say(out, format_args!("notice: {notice}"));
    }
    if let Some(report) = &finalized.clusters {
        for (i, group) in report.groups.iter().enumerate() {
            say(out, format_args!("cluster {}: reference inputs {group:?}", i + 1));
        }
    }
    let suite = &finalized.suite;
    let output = args.output.clone().unwrap_or_else(|| PathBuf::from(format!("{}.suite.json", suite.exercise.id)));
    write(&output, &serialize_suite(suite))?;
    say(out, format_args!(
        "wrote {} ({} practice codes, {} distractors)",
        output.display(),
        suite.practice_codes.len(),
        suite.distractor_codes.len()
    ));
    Ok(())
}

pub fn handout(args: &HandoutArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let suite = parse_suite(&read(&args.suite)?).map_err(|e| invalid(&args.suite, e))?;
    let text = export_handout(&suite).map_err(|e| CliError::Validation(e.to_string()))?;
    match &args.output {
        Some(path) => {
            write(path, &text)?;
            say(out, format_args!("wrote {}", path.display()));
        }
        None => {
            let _ = out.write_all(text.as_bytes());
        }
    }
    Ok(())
}

fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let config = hypocompass_service::ServiceConfig::load(&args.config).map_err(|e| match e {
        hypocompass_service::ConfigError::Io { .. } => CliError::Environment(e.to_string()),
        hypocompass_service::ConfigError::Invalid { .. } => CliError::Validation(e.to_string()),
    })?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Environment(e.to_string()))?;
    runtime.block_on(hypocompass_service::serve(config)).map_err(|e| {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Environment(e.to_string())
        }
    })
}
