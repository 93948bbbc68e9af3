use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use ncfrel::evaluation::{default_rule, Family, ValueKind};
use ncfrel::models::ModelKind;
use ncfrel::pipeline::{self, RecommendationRow, RunConfig};
use ncfrel::reliability::RecommendRule;

#[derive(Parser)]
#[command(name = "ncfrel", version, about = "Neural collaborative filtering with prediction reliabilities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and split a ratings file; print dataset statistics.
    Ingest(RunArgs),
    /// Train the selected models and write checkpoints and logs.
    Train(RunArgs),
    /// Run the experiment grid over trained checkpoints.
    Evaluate(RunArgs),
    /// Print a user's recommendation list.
    Recommend(RecommendArgs),
}

/// Flags mirror the keys of the run `config` file and override it.
#[derive(Args, Default)]
struct RunArgs {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    /// ml100k or csv.
    #[arg(long)]
    format: Option<String>,
    /// Score range, e.g. 1:5.
    #[arg(long)]
    scores: Option<String>,
    #[arg(long)]
    train_ratio: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// classification, regression, binary, deepmf, a comma list or all.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    embed: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    regression_trunk: Option<String>,
    #[arg(long)]
    deepmf_layers: Option<String>,
    /// Comma list of recommendation list lengths.
    #[arg(long)]
    n: Option<String>,
    /// Comma list of relevancy thresholds.
    #[arg(long)]
    theta: Option<String>,
    /// Comma list of beta thresholds.
    #[arg(long)]
    beta: Option<String>,
    /// topn, perrating, pvc, a comma list or all.
    #[arg(long)]
    family: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let fields = [
            ("data", &self.data),
            ("format", &self.format),
            ("scores", &self.scores),
            ("train_ratio", &self.train_ratio),
            ("seed", &self.seed),
            ("model", &self.model),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("lr", &self.lr),
            ("embed", &self.embed),
            ("hidden", &self.hidden),
            ("dropout", &self.dropout),
            ("regression_trunk", &self.regression_trunk),
            ("deepmf_layers", &self.deepmf_layers),
            ("n", &self.n),
            ("theta", &self.theta),
            ("beta", &self.beta),
            ("family", &self.family),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    /// Defaults, then the run directory's stored config, then `--config`,
    /// then flags.
    fn resolve(&self) -> Result<RunConfig> {
        let out = self.out.clone().unwrap_or_else(|| RunConfig::default().out);
        let mut cfg = pipeline::read_config(&out)?.unwrap_or_default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, v).with_context(|| format!("--{}", k.replace('_', "-")))?;
        }
        cfg.out = out;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RecommendArgs {
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Raw user id as it appears in the dataset.
    #[arg(long, required_unless_present = "dump")]
    user: Option<i64>,
    #[arg(long, default_value_t = 10)]
    n: usize,
    /// Relevancy threshold; defaults to the first configured theta.
    #[arg(long)]
    theta: Option<u8>,
    #[arg(long, default_value = "classification")]
    model: ModelKind,
    /// Rank with the classification baseline instead of reliabilities.
    #[arg(long)]
    baseline: bool,
    /// Write lists for every user to `<out>/recommendations.csv`.
    #[arg(long)]
    dump: bool,
}

fn cmd_ingest(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let (summary, _) = pipeline::ingest(&cfg)?;
    println!("{summary}");
    println!("split written to {}", cfg.out.join(pipeline::SPLIT_FILE).display());
    Ok(())
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let split = pipeline::ensure_split(&cfg)?;
    for t in pipeline::train(&cfg, &split)? {
        let name = pipeline::artifact_name(t.kind, t.theta);
        match t.history.epochs.last() {
            Some(e) => println!(
                "{name}: {} epochs, train loss {:.4}, test loss {}",
                t.history.len(),
                e.train_loss,
                e.test_loss.map_or("n/a".to_string(), |l| format!("{l:.4}"))
            ),
            None => println!("{name}: 0 epochs, initial weights saved"),
        }
    }
    Ok(())
}

fn cmd_evaluate(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let split = pipeline::load_split(&cfg).context("no split in run directory; run `ingest` or `train` first")?;
    pipeline::write_config(&cfg)?;
    let report = pipeline::evaluate(&cfg, &split)?;
    let dir = cfg.out.join("metrics");
    for f in Family::ALL.iter().filter(|f| cfg.eval.families.contains(f)) {
        println!("wrote {}", dir.join(format!("{}.csv", f.name())).display());
    }
    println!("wrote {}", dir.join("all.csv").display());
    let (n, theta) = (cfg.eval.n_values.last(), cfg.eval.theta_values.first());
    if let (Some(&n), Some(&theta), true) = (n, theta, cfg.eval.families.contains(&Family::TopN)) {
        println!("precision@{n} (theta {theta}):");
        let mut seen = Vec::new();
        for row in report.family(Family::TopN) {
            if seen.contains(&row.model) {
                continue;
            }
            seen.push(row.model.clone());
            let p = report.topn(&row.model, n, theta, ValueKind::Precision).and_then(|r| r.value);
            println!("  {:<15} {}", row.model, p.map_or("n/a".to_string(), |v| format!("{v:.4}")));
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

fn cmd_recommend(args: &RecommendArgs) -> Result<()> {
    let run = RunArgs {
        out: args.out.clone(),
        ..RunArgs::default()
    };
    let cfg = run.resolve()?;
    let split = pipeline::load_split(&cfg).context("no split in run directory; run `ingest` or `train` first")?;
    let theta = match args.theta {
        Some(t) => t,
        None => *cfg.eval.theta_values.first().context("no theta configured")?,
    };
    let rule = match (args.model, args.baseline) {
        (ModelKind::Classification, true) => RecommendRule::ClassificationBaseline,
        (_, true) => bail!("--baseline applies to the classification model only"),
        (kind, false) => default_rule(kind),
    };
    let model = pipeline::load_model(&cfg.out, args.model, (args.model == ModelKind::Binary).then_some(theta))?;
    let (_, index) = pipeline::load_dataset(&cfg)?;
    let rel_min = cfg.eval.reliability_min;
    if args.dump {
        let mut rows: Vec<RecommendationRow> = Vec::new();
        for user in 0..split.num_users {
            rows.extend(pipeline::recommend_for_user(&model, &split, &index, user, args.n, theta, rule, rel_min)?);
        }
        let path = cfg.out.join("recommendations.csv");
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        pipeline::write_recommendation_dump(&rows, &mut w)?;
        w.flush()?;
        println!("wrote {} rows to {}", rows.len(), path.display());
    }
    if let Some(user_raw) = args.user {
        let user = pipeline::lookup_user(&index, user_raw)?;
        let rows = pipeline::recommend_for_user(&model, &split, &index, user, args.n, theta, rule, rel_min)?;
        let stdout = io::stdout();
        let mut out = stdout.lock();
        writeln!(out, "rank,item,rating,reliability")?;
        for r in rows {
            writeln!(
                out,
                "{},{},{},{}",
                r.rank,
                r.item_raw,
                fmt_opt(r.rating, 2),
                fmt_opt(r.reliability, 4)
            )?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Recommend(a) => cmd_recommend(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
