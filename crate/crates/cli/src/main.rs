mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aasist3::diagnostics::{run_gradcheck_suite, CheckTarget};
use aasist3::dsp::read_wav;
use aasist3::eval::{
    compute_eer, compute_min_dcf, join_scores, parse_protocol, read_scores, write_scores, CostModel, ScoreRecord,
};
use aasist3::model::{fuse_scores, load_checkpoint, save_checkpoint, score_utterance, Aasist3Model};
use aasist3::train::{load_split, train_loop, write_toy_corpus};
use aasist3::{Error, Result};
use clap::{Args, Parser, Subcommand};

use config::ConfigDocument;

#[derive(Parser)]
#[command(name = "aasist3", version, about = "KAN graph-attention audio anti-spoofing countermeasure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-class corpus.
    MakeToyData(MakeToyData),
    /// Train a model and write its best checkpoint.
    Train(Train),
    /// Score every trial of a protocol.
    Score(Score),
    /// Compute EER and minDCF of a score file.
    Eval(Eval),
    /// Run finite-difference gradient checks.
    Gradcheck(Gradcheck),
}

#[derive(Args)]
struct MakeToyData {
    #[arg(long)]
    out: PathBuf,
    /// Utterances per class.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replace a previously generated corpus.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    config: PathBuf,
    /// Corpus directory holding train.txt and dev.txt.
    #[arg(long)]
    data: PathBuf,
    /// Best checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Metrics log, one JSON record per epoch [default: <out>.metrics.jsonl].
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("models").required(true).args(["ckpt", "fuse"])))]
struct Score {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Average the scores of several checkpoints.
    #[arg(long, num_args = 1..)]
    fuse: Vec<PathBuf>,
    #[arg(long)]
    protocol: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Eval {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    protocol: PathBuf,
    #[arg(long)]
    p_target: Option<f64>,
    #[arg(long)]
    c_miss: Option<f64>,
    #[arg(long)]
    c_fa: Option<f64>,
}

#[derive(Args)]
struct Gradcheck {
    /// Config document; the pocket model when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Restrict to one layer kind.
    #[arg(long)]
    module: Option<CheckTarget>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn make_toy_data(args: &MakeToyData) -> Result<()> {
    let n = usize::try_from(args.n).map_err(|_| Error::InvalidArgument("--n is too large".into()))?;
    let corpus = write_toy_corpus(&args.out, n, args.seed, args.force)?;
    println!("wrote {} utterances to {}", corpus.len(), args.out.display());
    Ok(())
}

fn train(args: &Train) -> Result<()> {
    let doc = ConfigDocument::load(&args.config)?;
    if !args.data.is_dir() {
        return Err(Error::InvalidArgument(format!("data directory {} does not exist", args.data.display())));
    }
    let train_set = load_split(&args.data.join("train.txt"))?;
    let dev_set = load_split(&args.data.join("dev.txt"))?;
    log::info!("{} training and {} dev utterances", train_set.len(), dev_set.len());
    let log_path = args.log.clone().unwrap_or_else(|| suffixed(&args.out, ".metrics.jsonl"));
    let file = File::create(&log_path).map_err(|e| Error::Io {
        path: log_path.clone(),
        source: e,
    })?;
    let mut log = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::Io {
        path: log_path.clone(),
        source: e,
    };
    let model = Aasist3Model::new(&doc.model)?;
    let cadence = doc.train.checkpoint_every;
    let outcome = train_loop(model, &train_set, &dev_set, &doc.train, |metrics, model| {
        let line = serde_json::to_string(metrics).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        writeln!(log, "{line}").and_then(|_| log.flush()).map_err(io_err)?;
        if cadence > 0 && metrics.epoch % cadence == 0 {
            save_checkpoint(model, &suffixed(&args.out, &format!(".epoch{}", metrics.epoch)))?;
        }
        Ok(())
    })?;
    save_checkpoint(&outcome.model, &args.out)?;
    let resolved = suffixed(&args.out, ".config.toml");
    fs::write(&resolved, doc.to_toml()?).map_err(|e| Error::Io {
        path: resolved.clone(),
        source: e,
    })?;
    if let Some(best) = outcome.history.iter().rev().find(|m| m.best) {
        println!(
            "best epoch {} (dev EER {}) saved to {}",
            best.epoch,
            best.dev_eer.map_or("n/a".into(), |e| format!("{:.4}%", 100.0 * e)),
            args.out.display()
        );
    }
    Ok(())
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn score(args: &Score) -> Result<()> {
    let paths: Vec<&PathBuf> = args.ckpt.iter().chain(&args.fuse).collect();
    let models = paths.iter().map(|p| load_checkpoint(p)).collect::<Result<Vec<_>>>()?;
    let trials = parse_protocol(&args.protocol)?;
    let root = args.protocol.parent().unwrap_or(Path::new("."));
    let missing: Vec<&str> = trials
        .iter()
        .filter(|t| !root.join(&t.wav_path).is_file())
        .map(|t| t.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::InvalidArgument(format!("missing WAV files for: {}", missing.join(", "))));
    }
    let mut records = Vec::with_capacity(trials.len());
    for t in &trials {
        let audio = read_wav(root.join(&t.wav_path))?;
        let per_model = models
            .iter()
            .map(|m| score_utterance(m, &audio))
            .collect::<Result<Vec<_>>>()?;
        records.push(ScoreRecord {
            id: t.id.clone(),
            score: fuse_scores(&per_model)?,
        });
    }
    write_scores(&args.out, &records)?;
    println!("scored {} trials with {} model(s)", records.len(), models.len());
    Ok(())
}

fn eval(args: &Eval) -> Result<()> {
    let defaults = CostModel::default();
    let cost = CostModel {
        p_target: args.p_target.unwrap_or(defaults.p_target),
        c_miss: args.c_miss.unwrap_or(defaults.c_miss),
        c_fa: args.c_fa.unwrap_or(defaults.c_fa),
    };
    let trials = parse_protocol(&args.protocol)?;
    let scores = read_scores(&args.scores)?;
    let labeled = join_scores(&trials, &scores)?;
    let eer = compute_eer(&labeled)?;
    let dcf = compute_min_dcf(&labeled, &cost)?;
    println!("EER {:.4}%", 100.0 * eer.rate);
    println!("minDCF {:.4}", dcf.cost);
    Ok(())
}

/// Returns whether every check passed.
fn gradcheck(args: &Gradcheck) -> Result<bool> {
    let model = match &args.config {
        Some(path) => ConfigDocument::load(path)?.model,
        None => ConfigDocument::pocket().model,
    };
    let targets = match args.module {
        Some(t) => vec![t],
        None => CheckTarget::ALL.to_vec(),
    };
    let checks = run_gradcheck_suite(&model, &targets, args.seed)?;
    let mut ok = true;
    for c in &checks {
        let worst = c.report.worst().map_or("-", |p| p.name.as_str());
        let verdict = if c.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<14} max rel err {:.3e} (tol {:.0e}, worst {worst}, {}) {verdict}",
            c.target.name(),
            c.max_rel_error(),
            c.target.tolerance(),
            c.shapes
        );
        ok &= c.passed();
    }
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::MakeToyData(a) => make_toy_data(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Score(a) => score(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
