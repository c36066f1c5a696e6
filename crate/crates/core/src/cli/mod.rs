//! The `ffn-skip` command line.
//!
//! Exit codes: 0 on success, 1 for runtime failures, 2 for usage errors
//! (unknown, missing or conflicting flags, invalid policy bounds).

mod report;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use report::{bench, sweep, BenchReport, Provenance, SweepRow};

use crate::engine::{default_warm_up_index, generate, DecodeRequest, Sampling, SkipConfig, SkipPolicy};
use crate::error::Error;
use crate::io::{self, ByteTokenizer, BOS, EOS};
use crate::model::{Model, ModelConfig};
use crate::profiler::{self, DetectionParams};

#[derive(Debug, Parser)]
#[command(name = "ffn-skip", version, about = "Transformer decoding with input-adaptive FFN skipping")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a randomly initialized model file.
    Init(InitArgs),
    /// Generate text under a skip policy.
    Generate(GenerateArgs),
    /// Measure per-layer FFN saturation over a calibration corpus.
    Profile(ProfileArgs),
    /// Run the adaptive policy at several thresholds.
    Sweep(SweepArgs),
    /// Time decoding under a policy.
    Bench(BenchArgs),
    /// Parameter and FLOP accounting for a model shape.
    Savings(SavingsArgs),
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub hidden: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 256)]
    pub ffn: usize,
    #[arg(long, default_value_t = 258)]
    pub vocab: usize,
    #[arg(long, default_value_t = 512)]
    pub max_seq_len: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct PromptSource {
    #[arg(long)]
    pub prompt: Option<String>,
    /// For `generate` and `bench` the whole file is one prompt; for `sweep`
    /// each non-blank line is a prompt.
    #[arg(long)]
    pub prompt_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Full,
    Random,
    RandomNoncold,
    Adaptive,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long, value_enum, default_value_t = PolicyKind::Full)]
    pub policy: PolicyKind,
    /// Skip probability for the random baselines.
    #[arg(long)]
    pub p: Option<f64>,
    /// Cosine similarity that triggers skipping (adaptive).
    #[arg(long)]
    pub threshold: Option<f32>,
    /// Generated tokens `0..=warmup` use the full model. Defaults to 10% of
    /// --max-new-tokens, rounded up.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// First layer of the skippable region.
    #[arg(long)]
    pub cold_s: Option<usize>,
    /// One past the last layer of the skippable region.
    #[arg(long)]
    pub cold_e: Option<usize>,
    /// Skip at most this many FFNs per token (adaptive; default unbounded).
    #[arg(long)]
    pub max_skip_k: Option<usize>,
    /// Seed for random masks and temperature sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub prompt: PromptSource,
    #[arg(long, default_value_t = 64)]
    pub max_new_tokens: usize,
    /// Sample at this temperature instead of greedy decoding.
    #[arg(long)]
    pub temperature: Option<f32>,
    /// Keep generating after the end-of-sequence token.
    #[arg(long)]
    pub no_stop: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Write the per-token trace here and its summary next to it
    /// (`<name>.summary.json`).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// UTF-8 text file, one prompt per line.
    #[arg(long)]
    pub calibration: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub tokens_per_prompt: usize,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also detect cold regions.
    #[arg(long)]
    pub detect: bool,
    #[arg(long, default_value_t = 0.90)]
    pub sigma_enter: f64,
    #[arg(long, default_value_t = 0.01)]
    pub slack: f64,
    #[arg(long, default_value_t = 2)]
    pub min_margin: usize,
    /// Where to write the cold-region report (requires --detect).
    #[arg(long, requires = "detect")]
    pub cold_json: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub thresholds: Vec<f32>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub cold_s: usize,
    #[arg(long)]
    pub cold_e: usize,
    #[arg(long)]
    pub max_skip_k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub decode: DecodeArgs,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
    /// Also time the full model and report the speedup.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SavingsArgs {
    /// Read the shape from a model file instead of the flags below.
    #[arg(long, conflicts_with_all = ["hidden", "ffn", "layers"])]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 4096)]
    pub hidden: usize,
    #[arg(long, default_value_t = 11008)]
    pub ffn: usize,
    #[arg(long, default_value_t = 32)]
    pub layers: usize,
    #[arg(long, default_value_t = 32000)]
    pub vocab: usize,
    #[arg(long, default_value_t = 0.0)]
    pub skip_ratio: f64,
    /// Cached positions assumed for attention FLOPs.
    #[arg(long, default_value_t = 0)]
    pub context: usize,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run_from_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return e.exit_code();
        }
    };
    let argv: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match run(cli, &argv, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, argv: &[String], out: &mut dyn Write) -> CliResult<()> {
    let command = argv.first().cloned().unwrap_or_default();
    let stamp = |seed: u64, model: &Model| Provenance {
        command: command.clone(),
        args: argv.to_vec(),
        seed,
        model_fingerprint: io::fingerprint(model),
    };
    match cli.command {
        Command::Init(a) => cmd_init(a, out),
        Command::Generate(a) => {
            let model = io::load_model(&a.decode.model)?;
            let prov = stamp(a.policy.seed, &model);
            cmd_generate(&model, a, prov, out)
        }
        Command::Profile(a) => {
            let model = io::load_model(&a.model)?;
            let prov = stamp(0, &model);
            cmd_profile(&model, a, prov, out)
        }
        Command::Sweep(a) => {
            let model = io::load_model(&a.decode.model)?;
            let prov = stamp(a.seed, &model);
            cmd_sweep(&model, a, prov, out)
        }
        Command::Bench(a) => {
            let model = io::load_model(&a.decode.model)?;
            let prov = stamp(a.policy.seed, &model);
            cmd_bench(&model, a, prov, out)
        }
        Command::Savings(a) => cmd_savings(a, out),
    }
}

fn write_out(out: &mut dyn Write, s: impl AsRef<[u8]>) -> CliResult<()> {
    out.write_all(s.as_ref())
        .map_err(|e| CliError::Runtime(Error::io("<stdout>", e)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e).into())
}

#[derive(Serialize)]
struct WithProvenance<'a, T: Serialize> {
    #[serde(flatten)]
    report: &'a T,
    provenance: &'a Provenance,
}

fn with_prov<'a, T: Serialize>(report: &'a T, provenance: &'a Provenance) -> WithProvenance<'a, T> {
    WithProvenance { report, provenance }
}

fn cmd_init(a: InitArgs, out: &mut dyn Write) -> CliResult<()> {
    let config = ModelConfig {
        num_layers: a.layers,
        hidden_dim: a.hidden,
        num_heads: a.heads,
        ffn_dim: a.ffn,
        vocab_size: a.vocab,
        max_seq_len: a.max_seq_len,
        norm_eps: 1e-5,
        rope_theta: 10_000.0,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let model = io::init_random_model(&config, a.seed)?;
    io::save_model(&model, &a.out)?;
    write_out(
        out,
        format!("wrote {} ({})\n", a.out.display(), io::fingerprint(&model)),
    )
}

/// Resolves policy flags, rejecting missing or meaningless combinations.
pub fn build_policy(a: &PolicyArgs, num_layers: usize, max_new_tokens: usize) -> CliResult<SkipPolicy> {
    let given = [
        ("--p", a.p.is_some()),
        ("--threshold", a.threshold.is_some()),
        ("--warmup", a.warmup.is_some()),
        ("--cold-s", a.cold_s.is_some()),
        ("--cold-e", a.cold_e.is_some()),
        ("--max-skip-k", a.max_skip_k.is_some()),
    ];
    let allowed: &[&str] = match a.policy {
        PolicyKind::Full => &[],
        PolicyKind::Random => &["--p", "--warmup"],
        PolicyKind::RandomNoncold => &["--p", "--warmup", "--cold-s", "--cold-e"],
        PolicyKind::Adaptive => &["--threshold", "--warmup", "--cold-s", "--cold-e", "--max-skip-k"],
    };
    if let Some((flag, _)) = given.iter().find(|(f, set)| *set && !allowed.contains(f)) {
        return Err(usage(format!(
            "{flag} does not apply to --policy {}",
            a.policy.to_possible_value().unwrap().get_name()
        )));
    }
    let need = |v: Option<f64>, flag: &str| {
        v.ok_or_else(|| {
            usage(format!(
                "--policy {} requires {flag}",
                a.policy.to_possible_value().unwrap().get_name()
            ))
        })
    };
    let warm_up_index = a.warmup.unwrap_or_else(|| default_warm_up_index(max_new_tokens));
    let cold = || -> CliResult<(usize, usize)> {
        let s = need(a.cold_s.map(|v| v as f64), "--cold-s")? as usize;
        let e = need(a.cold_e.map(|v| v as f64), "--cold-e")? as usize;
        Ok((s, e))
    };
    let policy = match a.policy {
        PolicyKind::Full => SkipPolicy::Full,
        PolicyKind::Random => SkipPolicy::RandomAnywhere {
            p: need(a.p, "--p")?,
            seed: a.seed,
            warm_up_index,
        },
        PolicyKind::RandomNoncold => {
            let (cold_s, cold_e) = cold()?;
            SkipPolicy::RandomNonCold {
                p: need(a.p, "--p")?,
                seed: a.seed,
                warm_up_index,
                cold_s,
                cold_e,
            }
        }
        PolicyKind::Adaptive => {
            let (cold_s, cold_e) = cold()?;
            SkipPolicy::InputAdaptive(SkipConfig {
                warm_up_index,
                cold_s,
                cold_e,
                sim_threshold: need(a.threshold.map(f64::from), "--threshold")? as f32,
                max_skip_k: a.max_skip_k,
            })
        }
    };
    policy
        .validate(num_layers)
        .map_err(|e| usage(e.to_string()))?;
    Ok(policy)
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e).into())
}

/// BOS followed by the prompt bytes.
fn encode_prompt(tok: &ByteTokenizer, text: &str) -> Vec<u32> {
    let mut ids = vec![BOS];
    ids.extend(tok.encode(text.as_bytes()));
    ids
}

fn decode_request(model: &Model, d: &DecodeArgs, prompt: Vec<u32>, seed: u64) -> DecodeRequest {
    let _ = model;
    DecodeRequest {
        prompt,
        max_new_tokens: d.max_new_tokens,
        sampling: match d.temperature {
            Some(temperature) => Sampling::Temperature { temperature, seed },
            None => Sampling::Greedy,
        },
        stop_token: (!d.no_stop).then_some(EOS),
    }
}

fn single_prompt(src: &PromptSource) -> CliResult<String> {
    match (&src.prompt, &src.prompt_file) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(path)) => read_text(path),
        (None, None) => Err(usage("one of --prompt or --prompt-file is required")),
    }
}

fn tokenizer_for(model: &Model) -> CliResult<ByteTokenizer> {
    Ok(ByteTokenizer::new(model.config.vocab_size)?)
}

fn cmd_generate(model: &Model, a: GenerateArgs, prov: Provenance, out: &mut dyn Write) -> CliResult<()> {
    let tok = tokenizer_for(model)?;
    let policy = build_policy(&a.policy, model.num_layers(), a.decode.max_new_tokens)?;
    let prompt = encode_prompt(&tok, &single_prompt(&a.decode.prompt)?);
    let req = decode_request(model, &a.decode, prompt, a.policy.seed);
    let g = generate(model, &req, &policy)?;
    let mut text = tok.decode(&g.tokens)?;
    text.push(b'\n');
    write_out(out, text)?;
    if let Some(path) = &a.trace {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        g.trace.write_lines(std::io::BufWriter::new(file))?;
        write_json(
            &path.with_extension("summary.json"),
            &with_prov(&g.trace.summary()?, &prov),
        )?;
    }
    Ok(())
}

fn cmd_profile(model: &Model, a: ProfileArgs, prov: Provenance, out: &mut dyn Write) -> CliResult<()> {
    let tok = tokenizer_for(model)?;
    let prompts = io::load_calibration(&a.calibration)?;
    if a.tokens_per_prompt == 0 || a.tokens_per_prompt >= model.config.max_seq_len {
        return Err(usage(format!(
            "--tokens-per-prompt must be in 1..{}",
            model.config.max_seq_len
        )));
    }
    // prompts longer than the context are cut to leave room for generation
    let room = model.config.max_seq_len - a.tokens_per_prompt;
    let calibration: Vec<Vec<u32>> = prompts
        .iter()
        .map(|p| {
            let mut ids = encode_prompt(&tok, p);
            ids.truncate(room);
            ids
        })
        .collect();
    let profile = profiler::profile_similarity(model, &calibration, a.tokens_per_prompt, a.jobs)?;

    let report = if a.detect {
        let params = DetectionParams {
            sigma_enter: a.sigma_enter,
            slack: a.slack,
            min_margin: a.min_margin,
        };
        Some(profiler::detect_cold_regions(&profile.means(), params).map_err(|e| usage(e.to_string()))?)
    } else {
        None
    };

    let mut table = format!(
        "{:>5}  {:>9}  {:>9}  {:>9}  {:>9}{}\n",
        "layer",
        "mean",
        "std",
        "min",
        "max",
        if report.is_some() { "  region" } else { "" }
    );
    for (i, l) in profile.layers.iter().enumerate() {
        let region = match &report {
            Some(r) if r.cold[i] => "  cold",
            Some(_) => "  skippable",
            None => "",
        };
        table += &format!(
            "{i:>5}  {:>9.6}  {:>9.6}  {:>9.6}  {:>9.6}{region}\n",
            l.mean, l.std, l.min, l.max
        );
    }
    table += &format!(
        "samples per layer: {} ({} prompts x {} tokens)\n",
        profile.num_samples, profile.num_prompts, profile.tokens_per_prompt
    );
    if let Some(r) = &report {
        table += &format!("cold_s={} cold_e={}\n", r.cold_s, r.cold_e);
        if let Some(w) = &r.warning {
            table += &format!("warning: {w}\n");
        }
    }
    write_out(out, table)?;

    if let Some(path) = &a.json {
        write_json(path, &with_prov(&profile, &prov))?;
    }
    if let Some(path) = &a.csv {
        let mut buf = Vec::new();
        profile
            .write_csv(&mut buf)
            .map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))?;
    }
    if let (Some(path), Some(r)) = (&a.cold_json, &report) {
        write_json(path, &with_prov(r, &prov))?;
    }
    Ok(())
}

fn cmd_sweep(model: &Model, a: SweepArgs, prov: Provenance, out: &mut dyn Write) -> CliResult<()> {
    let tok = tokenizer_for(model)?;
    let prompts = match (&a.decode.prompt.prompt, &a.decode.prompt.prompt_file) {
        (Some(p), _) => vec![p.clone()],
        (None, Some(path)) => io::parse_calibration(&read_text(path)?)?,
        (None, None) => return Err(usage("one of --prompt or --prompt-file is required")),
    };
    let requests: Vec<DecodeRequest> = prompts
        .iter()
        .map(|p| decode_request(model, &a.decode, encode_prompt(&tok, p), a.seed))
        .collect();
    let base = SkipConfig {
        warm_up_index: a
            .warmup
            .unwrap_or_else(|| default_warm_up_index(a.decode.max_new_tokens)),
        cold_s: a.cold_s,
        cold_e: a.cold_e,
        sim_threshold: 1.0,
        max_skip_k: a.max_skip_k,
    };
    base.validate(model.num_layers())
        .map_err(|e| usage(e.to_string()))?;
    if let Some(t) = a.thresholds.iter().find(|t| t.is_nan() || **t <= 0.0) {
        return Err(usage(format!("thresholds must be positive, got {t}")));
    }
    let rows = sweep(model, &requests, &base, &a.thresholds, a.jobs)?;

    let mut table = format!(
        "{:>9}  {:>10}  {:>10}  {:>12}\n",
        "threshold", "skip_ratio", "tokens/sec", "degeneration"
    );
    for r in &rows {
        table += &format!(
            "{:>9.4}  {:>10.4}  {:>10.1}  {:>12}\n",
            r.threshold,
            r.skip_ratio,
            r.tokens_per_sec,
            r.degeneration.map_or("-".to_string(), |d| format!("{d:.4}"))
        );
    }
    write_out(out, table)?;
    if let Some(path) = &a.json {
        #[derive(Serialize)]
        struct SweepReport<'a> {
            rows: &'a [SweepRow],
        }
        write_json(path, &with_prov(&SweepReport { rows: &rows }, &prov))?;
    }
    Ok(())
}

fn cmd_bench(model: &Model, a: BenchArgs, prov: Provenance, out: &mut dyn Write) -> CliResult<()> {
    let tok = tokenizer_for(model)?;
    let policy = build_policy(&a.policy, model.num_layers(), a.decode.max_new_tokens)?;
    if a.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }
    let prompt = encode_prompt(&tok, &single_prompt(&a.decode.prompt)?);
    let req = decode_request(model, &a.decode, prompt, a.policy.seed);
    let report = bench(model, &req, &policy, a.runs)?;
    let baseline = if a.baseline {
        Some(bench(model, &req, &SkipPolicy::Full, a.runs)?)
    } else {
        None
    };

    let mut text = String::new();
    for r in baseline.iter().chain(std::iter::once(&report)) {
        text += &format!(
            "policy: {}\n  tokens: {}  skip_ratio: {:.4}  ffn executed/skipped: {}/{}\n  tokens/sec: {:.1}  latency mean: {:.3} ms  p95: {:.3} ms\n  bigram repetition: {}\n",
            r.policy,
            r.tokens_generated,
            r.skip_ratio,
            r.ffn_executed,
            r.ffn_skipped,
            r.tokens_per_sec,
            r.latency_mean_ms,
            r.latency_p95_ms,
            r.degeneration.score(2).map_or("-".to_string(), |s| format!("{s:.4}")),
        );
    }
    if let Some(b) = &baseline {
        text += &format!("speedup vs full: {:.3}x\n", report.tokens_per_sec / b.tokens_per_sec);
    }
    write_out(out, text)?;
    if let Some(path) = &a.json {
        #[derive(Serialize)]
        struct BenchOutput<'a> {
            report: &'a BenchReport,
            baseline: Option<&'a BenchReport>,
        }
        write_json(
            path,
            &with_prov(
                &BenchOutput {
                    report: &report,
                    baseline: baseline.as_ref(),
                },
                &prov,
            ),
        )?;
    }
    Ok(())
}

fn cmd_savings(a: SavingsArgs, out: &mut dyn Write) -> CliResult<()> {
    let config = match &a.model {
        Some(path) => io::load_model(path)?.config,
        None => ModelConfig {
            num_layers: a.layers,
            hidden_dim: a.hidden,
            num_heads: 1,
            ffn_dim: a.ffn,
            vocab_size: a.vocab,
            max_seq_len: a.context.max(1),
            norm_eps: 1e-5,
            rope_theta: 10_000.0,
        },
    };
    let r = profiler::savings_report(&config, a.skip_ratio, a.context)
        .map_err(|e| usage(e.to_string()))?;
    let text = format!(
        "per attention matrix: {:>14}\nper FFN matrix:       {:>14}\nattention per layer:  {:>14}\nFFN per layer:        {:>14}\nFFN share of layer:   {:>14.4}\nmodel parameters:     {:>14}\nFFN FLOPs per eval:   {:>14}\nattn FLOPs per eval:  {:>14}\nprojected FLOP savings at skip ratio {}: {:.4}\n",
        r.params_attention_matrix,
        r.params_ffn_matrix,
        r.params_attention_per_layer,
        r.params_ffn_per_layer,
        r.ffn_param_fraction,
        r.params_model_total,
        r.ffn_flops_per_eval,
        r.attention_flops_per_eval,
        r.skip_ratio,
        r.projected_flop_savings,
    );
    write_out(out, text)?;
    if let Some(path) = &a.json {
        write_json(path, &r)?;
    }
    Ok(())
}
