//! Command implementations behind the `matrixgate` binary.
//!
//! Exit codes: 0 success, 1 the input was understood but failed (error
//! findings, no workflow, failed tasks, corrupt log), 2 the input could not
//! be read or parsed, or the flags were wrong.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use matrixgate::engine::{
    placeholder_content, verify_audit_chain, AgentAdapter, AutoApprove, ChainStatus, Decision,
    DriveReport, DriveStatus, Driver, HttpAdapter, HumanDesk, LogicalClock, MockAgent, Run,
    TaskStatus, Verdict, WorkflowSpec,
};
use matrixgate::io::{parse_bundle, parse_workflow, render_report, serialize_workflow, ReportFormat};
use matrixgate::model::{CellPolicy, ValidationMode};
use matrixgate::packs::{applicable_packs, builtin_packs};
use matrixgate::pipeline::{PipelineConfig, PipelineError, PipelineOutcome, StepStatus};
use matrixgate::{run_pipeline, validate_matrix, MatrixBundle};
use serde::Serialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const EXAMPLE_FILE: &str = "devops-planning.json";

#[derive(Debug, Parser)]
#[command(name = "matrixgate", version, about = "Validate RACI matrices and run supervised human/agent workflows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a bundle against the constraints and compliance packs.
    Validate(ValidateArgs),
    /// Run the nine-step analysis and write the compiled workflow.
    Pipeline(PipelineArgs),
    /// Execute a workflow (or a bundle, compiled first).
    Run(RunArgs),
    /// Write the DevOps planning example bundle.
    InitExample(InitArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
    /// Inspect the built-in rule packs.
    Packs {
        #[command(subcommand)]
        command: PacksCommand,
    },
    /// Check the hash chain of an audit log file.
    VerifyAudit(VerifyArgs),
}

#[derive(Debug, Subcommand)]
pub enum PacksCommand {
    /// List pack ids and their rules.
    List {
        #[arg(long, default_value = "text")]
        format: ReportFormat,
    },
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub bundle: PathBuf,
    #[arg(long)]
    pub mode: Option<ValidationMode>,
    /// Comma-separated pack ids; defaults to the bundle config or provenance-based selection.
    #[arg(long, value_delimiter = ',')]
    pub packs: Option<Vec<String>>,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
    #[arg(long)]
    pub policy: Option<CellPolicy>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    pub bundle: PathBuf,
    #[arg(long)]
    pub mode: Option<ValidationMode>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<u32>,
    #[arg(long)]
    pub policy: Option<CellPolicy>,
    #[arg(long, value_delimiter = ',')]
    pub packs: Option<Vec<String>>,
    /// Workflow output path; defaults to `<bundle stem>.workflow.json` beside the bundle.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Workflow file from `pipeline`, or a bundle to compile first.
    pub workflow: PathBuf,
    /// `mock` or `http:URL`.
    #[arg(long, default_value = "mock")]
    pub adapter: matrixgate_service::AdapterChoice,
    #[arg(long, conflicts_with = "interactive")]
    pub auto_approve: bool,
    #[arg(long)]
    pub interactive: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Injected mock adapter failure rate.
    #[arg(long, default_value_t = 0.0)]
    pub failure_rate: f64,
    #[arg(long, default_value_t = matrixgate::engine::driver::DEFAULT_RETRY_BUDGET)]
    pub retries: u32,
    #[arg(long, default_value_t = 10)]
    pub adapter_timeout_secs: u64,
    #[arg(long, env = matrixgate_service::DATA_DIR_ENV, default_value = "matrixgate-data")]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(default_value = ".")]
    pub dir: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = matrixgate_service::PORT_ENV, default_value_t = matrixgate_service::DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, env = matrixgate_service::DATA_DIR_ENV, default_value = "matrixgate-data")]
    pub data_dir: PathBuf,
    #[arg(long, default_value = "mock")]
    pub adapter: matrixgate_service::AdapterChoice,
    #[arg(long, default_value_t = matrixgate::engine::driver::DEFAULT_RETRY_BUDGET)]
    pub retries: u32,
    /// Fill human consultations and human-authored artifacts with placeholders.
    #[arg(long)]
    pub simulate_human_inputs: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub log: PathBuf,
    #[arg(long, default_value = "text")]
    pub format: ReportFormat,
}

/// Terminal streams a command reads from and writes to.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(cli, io),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let out = if e.use_stderr() { &mut *io.stderr } else { &mut *io.stdout };
            let _ = out.write_all(text.as_bytes());
            code
        }
    }
}

pub fn execute(cli: Cli, io: &mut Io<'_>) -> i32 {
    let result = match cli.command {
        Command::Validate(a) => cmd_validate(&a, io),
        Command::Pipeline(a) => cmd_pipeline(&a, io),
        Command::Run(a) => cmd_run(&a, io),
        Command::InitExample(a) => cmd_init_example(&a, io),
        Command::Serve(a) => cmd_serve(a, io),
        Command::Packs { command: PacksCommand::List { format } } => cmd_packs_list(format, io),
        Command::VerifyAudit(a) => cmd_verify_audit(&a, io),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            let _ = writeln!(io.stderr, "error: {}", failure.message);
            failure.code
        }
    }
}

/// A command that stopped early, with the exit code to report.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl ToString) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn failed(message: impl ToString) -> Self {
        Failure {
            code: EXIT_FAILED,
            message: message.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e)
    }
}

type CmdResult = Result<i32, Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_bundle(path: &Path) -> Result<MatrixBundle, Failure> {
    let text = read_text(path)?;
    parse_bundle(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> std::io::Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    out.write_all(s.as_bytes())
}

pub fn cmd_validate(args: &ValidateArgs, io: &mut Io<'_>) -> CmdResult {
    let mut bundle = load_bundle(&args.bundle)?;
    if let Some(policy) = args.policy {
        bundle.config.cell_policy = Some(policy);
    }
    let mode = args.mode.or(bundle.config.mode).unwrap_or_default();
    let packs = args
        .packs
        .clone()
        .or_else(|| bundle.config.packs.clone())
        .unwrap_or_else(|| applicable_packs(&bundle.actors));
    let report = validate_matrix(&bundle, mode, &packs).map_err(Failure::usage)?;
    io.stdout.write_all(render_report(&report, args.format).as_bytes())?;
    Ok(if report.is_valid() { EXIT_OK } else { EXIT_FAILED })
}

pub fn cmd_pipeline(args: &PipelineArgs, io: &mut Io<'_>) -> CmdResult {
    let bundle = load_bundle(&args.bundle)?;
    let mut config = PipelineConfig::for_bundle(&bundle);
    if let Some(mode) = args.mode {
        config.mode = mode;
    }
    if let Some(t) = args.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(Failure::usage("--threshold must lie in [0, 1]"));
        }
        config.threshold = t;
    }
    if let Some(n) = args.max_iterations {
        config.max_iterations = n;
    }
    if let Some(policy) = args.policy {
        config.policy = policy;
    }
    if args.packs.is_some() {
        config.packs = args.packs.clone();
    }
    let outcome = match run_pipeline(&bundle, &config) {
        Ok(outcome) => outcome,
        Err(e @ PipelineError::MaxIterationsExceeded { .. }) => {
            if args.format == ReportFormat::Json {
                print_json(io.stdout, &pipeline_error_json(&e))?;
            }
            return Err(Failure::failed(format!("MaxIterationsExceeded: {e}")));
        }
        Err(PipelineError::InvalidMatrix(report)) => {
            io.stdout.write_all(render_report(&report, args.format).as_bytes())?;
            return Ok(EXIT_FAILED);
        }
        Err(e) => return Err(Failure::usage(e)),
    };
    match args.format {
        ReportFormat::Json => print_json(io.stdout, &outcome)?,
        ReportFormat::Text => io.stdout.write_all(render_outcome(&outcome).as_bytes())?,
    }
    let Some(workflow) = &outcome.workflow else {
        let _ = writeln!(io.stderr, "no workflow: the matrix has error findings");
        return Ok(EXIT_FAILED);
    };
    let out = args.out.clone().unwrap_or_else(|| default_workflow_path(&args.bundle));
    std::fs::write(&out, serialize_workflow(workflow))
        .map_err(|e| Failure::usage(format!("{}: {e}", out.display())))?;
    let _ = writeln!(io.stderr, "wrote {}", out.display());
    Ok(EXIT_OK)
}

fn pipeline_error_json(e: &PipelineError) -> serde_json::Value {
    match e {
        PipelineError::MaxIterationsExceeded { step, iterations, findings } => serde_json::json!({
            "error": "max_iterations_exceeded",
            "step": step,
            "iterations": iterations,
            "findings": findings,
        }),
        other => serde_json::json!({ "error": other.to_string() }),
    }
}

fn default_workflow_path(bundle: &Path) -> PathBuf {
    let stem = bundle.file_stem().map_or_else(|| "bundle".into(), |s| s.to_string_lossy());
    bundle.with_file_name(format!("{stem}.workflow.json"))
}

fn render_outcome(outcome: &PipelineOutcome) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    for step in &outcome.steps {
        let status = match step.status {
            StepStatus::Passed => "passed",
            StepStatus::Warning => "warning",
            StepStatus::Failed => "FAILED",
        };
        let _ = write!(out, "step {} {:<28} {status}", step.step, step.name);
        if !step.findings.is_empty() {
            let _ = write!(out, " ({} finding(s))", step.findings.len());
        }
        out.push('\n');
    }
    out.push('\n');
    for d in &outcome.decisions {
        let agent = d.candidate_agent.as_deref().unwrap_or("-");
        let _ = writeln!(out, "{:<32} {:<12} {agent}", d.task_id, format!("{:?}", d.decision));
    }
    out.push('\n');
    out.push_str(&render_report(&outcome.report, ReportFormat::Text));
    if let Some(w) = &outcome.workflow {
        let _ = writeln!(out, "workflow: {} chain(s), audit {}", w.chains.len(), if w.audit_enabled { "on" } else { "off" });
    }
    out
}

/// Reads approvals from the terminal; consultations and human-authored
/// artifacts are filled with placeholders.
pub struct TerminalDesk<'a> {
    input: &'a mut dyn BufRead,
    output: &'a mut dyn Write,
    closed: bool,
}

impl<'a> TerminalDesk<'a> {
    pub fn new(input: &'a mut dyn BufRead, output: &'a mut dyn Write) -> Self {
        TerminalDesk {
            input,
            output,
            closed: false,
        }
    }

    fn prompt(&mut self, text: &str) -> Option<String> {
        if self.closed {
            return None;
        }
        let _ = write!(self.output, "{text}");
        let _ = self.output.flush();
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) | Err(_) => {
                self.closed = true;
                None
            }
            Ok(_) => Some(line.trim().to_string()),
        }
    }
}

impl HumanDesk for TerminalDesk<'_> {
    fn consult(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<String> {
        Some(placeholder_content(run, task_id, actor_id, "input"))
    }

    fn produce(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<String> {
        Some(placeholder_content(run, task_id, actor_id, "artifact"))
    }

    fn review(&mut self, run: &Run, task_id: &str, actor_id: &str) -> Option<Decision> {
        let task = run.state().task(task_id)?;
        let latest = task.artifact_versions.last()?;
        let _ = writeln!(
            self.output,
            "\n{task_id}: {} by {} (digest {})\n{}",
            latest.name, latest.actor_id, latest.digest, latest.content
        );
        loop {
            let answer = self.prompt(&format!("{actor_id}, approve or reject? [a/r] "))?;
            match answer.to_ascii_lowercase().as_str() {
                "a" | "approve" => {
                    let comment = self.prompt("comment (optional): ")?;
                    return Some(Decision {
                        verdict: Verdict::Approve,
                        comment: (!comment.is_empty()).then_some(comment),
                    });
                }
                "r" | "reject" => {
                    let comment = self.prompt("reason: ")?;
                    return Some(Decision::reject(comment));
                }
                _ => {
                    let _ = writeln!(self.output, "answer `a` or `r`");
                }
            }
        }
    }
}

/// Loads a workflow file, or compiles a bundle when given one.
fn load_workflow(path: &Path) -> Result<WorkflowSpec, Failure> {
    let text = read_text(path)?;
    let workflow_err = match parse_workflow(&text) {
        Ok(spec) => return Ok(spec),
        Err(e) => e,
    };
    let Ok(bundle) = parse_bundle(&text) else {
        return Err(Failure::usage(format!("{}: {workflow_err}", path.display())));
    };
    let outcome = run_pipeline(&bundle, &PipelineConfig::for_bundle(&bundle)).map_err(Failure::failed)?;
    outcome
        .workflow
        .ok_or_else(|| Failure::failed(format!("{}: the matrix has error findings; run `validate`", path.display())))
}

#[derive(Serialize)]
struct RunSummary<'a> {
    run_id: &'a str,
    status: DriveStatus,
    tasks: Vec<TaskLine<'a>>,
    failed: &'a [String],
    stranded: &'a [String],
    events: u64,
    chain: ChainStatus,
    audit_log: Option<String>,
}

#[derive(Serialize)]
struct TaskLine<'a> {
    task_id: &'a str,
    status: TaskStatus,
    revision: u32,
}

pub fn cmd_run(args: &RunArgs, io: &mut Io<'_>) -> CmdResult {
    let spec = load_workflow(&args.workflow)?;
    if !(0.0..=1.0).contains(&args.failure_rate) {
        return Err(Failure::usage("--failure-rate must lie in [0, 1]"));
    }
    let adapter: Box<dyn AgentAdapter> = match &args.adapter {
        matrixgate_service::AdapterChoice::Mock => {
            Box::new(MockAgent::new().with_failures(args.failure_rate, args.seed))
        }
        matrixgate_service::AdapterChoice::Http(url) => Box::new(
            HttpAdapter::new(url.clone(), Duration::from_secs(args.adapter_timeout_secs)).map_err(Failure::usage)?,
        ),
    };
    let run_id = format!("run-{}", args.seed);
    let mut run = Run::start(spec, &run_id, Box::new(LogicalClock::default())).map_err(Failure::usage)?;
    let driver = Driver::new(adapter.as_ref()).retry_budget(args.retries);
    let report = if args.interactive {
        let mut desk = TerminalDesk::new(&mut *io.stdin, &mut *io.stderr);
        driver.drive(&mut run, &mut desk)
    } else {
        driver.drive(&mut run, &mut AutoApprove)
    }
    .map_err(Failure::failed)?;

    let audit_log = if run.spec().audit_enabled {
        let dir = args.data_dir.join("runs");
        let path = dir.join(format!("{run_id}.jsonl"));
        std::fs::create_dir_all(&dir)
            .and_then(|()| matrixgate::io::write_audit_log(&path, run.events()))
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        Some(path)
    } else {
        None
    };
    print_run(&run, &report, audit_log.as_deref(), args.format, io)?;

    if !report.failed.is_empty() {
        let _ = writeln!(io.stderr, "failed tasks: {}", report.failed.join(", "));
        return Ok(EXIT_FAILED);
    }
    if report.status == DriveStatus::Blocked {
        let waiting: Vec<String> = run.pending_approvals().into_iter().map(|p| p.task_id).collect();
        let _ = writeln!(io.stderr, "run blocked; awaiting approval on: {}", waiting.join(", "));
        return Ok(EXIT_FAILED);
    }
    Ok(EXIT_OK)
}

fn print_run(
    run: &Run,
    report: &DriveReport,
    audit_log: Option<&Path>,
    format: ReportFormat,
    io: &mut Io<'_>,
) -> std::io::Result<()> {
    let summary = RunSummary {
        run_id: run.run_id(),
        status: report.status,
        tasks: run
            .state()
            .tasks
            .iter()
            .map(|(id, t)| TaskLine {
                task_id: id,
                status: t.status,
                revision: t.revision,
            })
            .collect(),
        failed: &report.failed,
        stranded: &report.stranded,
        events: run.log().last_seq(),
        chain: verify_audit_chain(run.events()),
        audit_log: audit_log.map(|p| p.display().to_string()),
    };
    match format {
        ReportFormat::Json => print_json(io.stdout, &summary),
        ReportFormat::Text => {
            for t in &summary.tasks {
                let status = serde_json::to_value(t.status).expect("status serializes");
                writeln!(
                    io.stdout,
                    "{:<32} {:<20} revision {}",
                    t.task_id,
                    status.as_str().unwrap_or_default(),
                    t.revision
                )?;
            }
            let chain = match summary.chain {
                ChainStatus::Intact => "intact".to_string(),
                ChainStatus::CorruptAt(seq) => format!("corrupt at seq {seq}"),
            };
            writeln!(io.stdout, "{} events, chain {chain}", summary.events)?;
            if let Some(path) = &summary.audit_log {
                writeln!(io.stdout, "audit log: {path}")?;
            }
            Ok(())
        }
    }
}

pub fn cmd_init_example(args: &InitArgs, io: &mut Io<'_>) -> CmdResult {
    let path = args.dir.join(EXAMPLE_FILE);
    if path.exists() && !args.force {
        return Err(Failure::failed(format!(
            "{} exists; pass --force to overwrite",
            path.display()
        )));
    }
    std::fs::create_dir_all(&args.dir)?;
    std::fs::write(&path, matrixgate::DEVOPS_PLANNING)
        .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    writeln!(io.stdout, "wrote {}", path.display())?;
    Ok(EXIT_OK)
}

pub fn cmd_serve(args: ServeArgs, io: &mut Io<'_>) -> CmdResult {
    let config = matrixgate_service::Config {
        port: args.port,
        data_dir: args.data_dir,
        adapter: args.adapter,
        retry_budget: args.retries,
        simulate_human_inputs: args.simulate_human_inputs,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    let _ = writeln!(
        io.stderr,
        "listening on http://127.0.0.1:{} (identity via X-Actor-Id is not authenticated)",
        config.port
    );
    runtime.block_on(matrixgate_service::serve(config))?;
    Ok(EXIT_OK)
}

pub fn cmd_packs_list(format: ReportFormat, io: &mut Io<'_>) -> CmdResult {
    let packs = builtin_packs();
    match format {
        ReportFormat::Json => print_json(io.stdout, &packs)?,
        ReportFormat::Text => {
            for pack in &packs {
                writeln!(io.stdout, "{}", pack.id)?;
                for rule in &pack.rules {
                    let tags: Vec<&str> = rule.requirements.iter().map(|r| r.label()).collect();
                    writeln!(
                        io.stdout,
                        "  {:<18} {:<7} {:<8} {} [{}]",
                        rule.id,
                        rule.severity.as_str(),
                        format!("{:?}", rule.scope).to_lowercase(),
                        rule.description,
                        tags.join(", ")
                    )?;
                }
            }
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify_audit(args: &VerifyArgs, io: &mut Io<'_>) -> CmdResult {
    let status = matrixgate::io::verify_audit_file(&args.log)
        .map_err(|e| Failure::usage(format!("{}: {e}", args.log.display())))?;
    match args.format {
        ReportFormat::Json => print_json(io.stdout, &status)?,
        ReportFormat::Text => match status {
            ChainStatus::Intact => writeln!(io.stdout, "intact")?,
            ChainStatus::CorruptAt(seq) => writeln!(io.stdout, "corrupt at seq {seq}")?,
        },
    }
    Ok(if status.is_intact() { EXIT_OK } else { EXIT_FAILED })
}
