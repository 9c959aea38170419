//! Command-line entry points.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::baselines;
use crate::dataset::{load_dataset, write_dataset, DatasetBundle};
use crate::experiments::{self, linspace, Preset, Study1Config, Study2Config, Study2Kind, Study3Config};
use crate::model::sequence_nll;
use crate::net::{self, normalize_traits, NetworkWeights, OutputHead, TeamData, TrainConfig, TraitNormalizer};
use crate::report::{self, envelope, write_json, SCHEMA_VERSION};
use crate::stats::{self, Alternative};
use crate::synthetic::{self, FixtureSpec, TrialSpec};

/// `println!` that stays quiet when stdout is closed early (e.g. piped to `head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

pub const OUT_ENV: &str = "TURNTAKING_OUT";
pub const WEIGHTS_FILE: &str = "weights.json";

#[derive(Debug, Parser)]
#[command(name = "turntaking", version, about = "Trait-driven turn-taking models and experiments")]
pub struct Cli {
    /// Base seed; required by every command that draws random numbers.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file overriding preset values, e.g. {"study1": {"n_trials": 4}}.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory. Falls back to $TURNTAKING_OUT, then "out".
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    pub preset: PresetArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    Desk,
    Paper,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Desk => Preset::Desk,
            PresetArg::Paper => Preset::Paper,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GenerateKind {
    /// Multi-meeting fixture in real-data format.
    Fixture,
    /// Train/val/test splits of one synthetic benchmark trial.
    Study1,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum HeadArg {
    Full,
    NoMemory,
    SharedPi,
}

impl From<HeadArg> for OutputHead {
    fn from(h: HeadArg) -> Self {
        match h {
            HeadArg::Full => OutputHead::Full,
            HeadArg::NoMemory => OutputHead::NoMemory,
            HeadArg::SharedPi => OutputHead::SharedPi,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StatsTest {
    KruskalWallis,
    RankSum,
    SignedRank,
    Pairwise,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlternativeArg {
    TwoSided,
    Less,
    Greater,
}

impl From<AlternativeArg> for Alternative {
    fn from(a: AlternativeArg) -> Self {
        match a {
            AlternativeArg::TwoSided => Alternative::TwoSided,
            AlternativeArg::Less => Alternative::Less,
            AlternativeArg::Greater => Alternative::Greater,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset in the on-disk format.
    Generate {
        #[arg(long, value_enum, default_value = "fixture")]
        kind: GenerateKind,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Fit a trait network and write weights.json.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        val: PathBuf,
        /// Comma-separated trait names; defaults to every trait.
        #[arg(long, value_delimiter = ',')]
        traits: Vec<String>,
        #[arg(long, value_enum, default_value = "full")]
        head: HeadArg,
        /// Replace every trait value with 0.5.
        #[arg(long)]
        same_traits: bool,
        /// Feed traits unscaled instead of min-max scaling on the training data.
        #[arg(long)]
        raw: bool,
    },
    /// Test loss of saved weights on a dataset.
    Eval {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Score only meetings every member attended.
        #[arg(long)]
        full_attendance: bool,
    },
    /// Synthetic benchmark: learned model against the baselines.
    Study1,
    /// Robustness sweeps over data model, trait function, conversation length or team size.
    Study2 {
        /// data-model, complexity, length or group-size
        #[arg(long)]
        kind: String,
    },
    /// Forward trait selection, then a baseline comparison on a real-format dataset.
    Study3 {
        #[arg(long)]
        data: PathBuf,
    },
    /// Forward trait selection only.
    ForwardSelect {
        #[arg(long)]
        data: PathBuf,
        /// Candidate traits; defaults to every trait.
        #[arg(long, value_delimiter = ',')]
        traits: Vec<String>,
    },
    /// Rank tests on a `group,value` CSV.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "kruskal-wallis")]
        test: StatsTest,
        #[arg(long, value_enum, default_value = "two-sided")]
        alternative: AlternativeArg,
    },
    /// Per-trait curves of saved weights.
    Curves {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, default_value_t = 50)]
        points: usize,
    },
}

/// Preset overrides read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    study1: Option<Value>,
    study2: Option<Value>,
    study3: Option<Value>,
    train: Option<Value>,
}

/// Trained network plus everything needed to feed it raw traits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub schema_version: u32,
    pub trait_names: Vec<String>,
    pub normalizer: Option<TraitNormalizer>,
    pub same_traits: bool,
    pub weights: NetworkWeights,
    pub best_epoch: usize,
    pub best_val_nll: f64,
}

impl WeightsFile {
    /// Model-ready team data for `bundle`.
    pub fn prepare(&self, bundle: &DatasetBundle) -> crate::Result<Vec<TeamData>> {
        let columns = bundle.trait_columns(&self.trait_names)?;
        let mut teams = bundle.team_data(&columns)?;
        if let Some(norm) = &self.normalizer {
            teams = teams
                .into_iter()
                .map(|t| TeamData::new(normalize_traits(&t.traits, norm)?, t.conversation))
                .collect::<crate::Result<_>>()?;
        }
        if self.same_traits {
            teams = baselines::same_traits(&teams);
        }
        Ok(teams)
    }
}

fn merge(base: &mut Value, patch: &Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p.clone(),
    }
}

fn apply<T: Serialize + for<'de> Deserialize<'de>>(base: T, patch: &Option<Value>) -> anyhow::Result<T> {
    let Some(p) = patch else { return Ok(base) };
    let mut v = serde_json::to_value(base)?;
    merge(&mut v, p);
    Ok(serde_json::from_value(v)?)
}

struct Ctx {
    seed: Option<u64>,
    out: PathBuf,
    preset: Preset,
    file: ConfigFile,
}

impl Ctx {
    fn seed(&self, command: &str) -> anyhow::Result<u64> {
        self.seed.ok_or_else(|| anyhow!("`{command}` draws random numbers and needs --seed"))
    }

    fn study1(&self) -> anyhow::Result<Study1Config> {
        apply(Study1Config::preset(self.preset), &self.file.study1).context("study1 config")
    }

    fn study2(&self) -> anyhow::Result<Study2Config> {
        apply(Study2Config::preset(self.preset), &self.file.study2).context("study2 config")
    }

    fn study3(&self) -> anyhow::Result<Study3Config> {
        apply(Study3Config::preset(self.preset), &self.file.study3).context("study3 config")
    }

    fn train(&self) -> anyhow::Result<TrainConfig> {
        apply(TrainConfig::default(), &self.file.train).context("train config")
    }
}

fn announce(paths: &[PathBuf]) {
    for p in paths {
        say!("wrote {}", p.display());
    }
}

fn generate(ctx: &Ctx, kind: GenerateKind, trial: usize) -> anyhow::Result<()> {
    let seed = ctx.seed("generate")?;
    match kind {
        GenerateKind::Fixture => {
            let bundle = synthetic::team_fixture(&FixtureSpec { seed, ..FixtureSpec::default() })?;
            write_dataset(&bundle, &ctx.out)?;
            say!("wrote fixture with {} teams to {}", bundle.teams.len(), ctx.out.display());
        }
        GenerateKind::Study1 => {
            let c = ctx.study1()?;
            let spec = TrialSpec {
                n_train_teams: c.n_train_teams,
                n_val_teams: c.n_val_teams,
                n_test_teams: c.n_test_teams,
                team_size: c.team_size,
                n_turns: c.n_turns,
                function: c.function,
                ..TrialSpec::study1(seed, trial)
            };
            let t = synthetic::build_trial(&spec)?;
            for (name, teams) in [("train", &t.train), ("val", &t.val), ("test", &t.test)] {
                let dir = ctx.out.join(name);
                write_dataset(&synthetic::to_bundle(teams, &format!("{name}-")), &dir)?;
                say!("wrote {}", dir.display());
            }
        }
    }
    Ok(())
}

fn train_cmd(
    ctx: &Ctx,
    data: &Path,
    val: &Path,
    traits: Vec<String>,
    head: HeadArg,
    same_traits: bool,
    raw: bool,
) -> anyhow::Result<()> {
    let seed = ctx.seed("train")?;
    let train_bundle = load_dataset(data).with_context(|| format!("loading {}", data.display()))?;
    let val_bundle = load_dataset(val).with_context(|| format!("loading {}", val.display()))?;
    let names = if traits.is_empty() { train_bundle.trait_names.clone() } else { traits };
    let columns = train_bundle.trait_columns(&names)?;
    let train_raw = train_bundle.team_data(&columns)?;
    let normalizer = if raw || same_traits {
        None
    } else {
        Some(TraitNormalizer::fit(names.clone(), train_raw.iter().flat_map(|t| t.traits.iter()))?)
    };
    let file = WeightsFile {
        schema_version: SCHEMA_VERSION,
        trait_names: names,
        normalizer,
        same_traits,
        weights: NetworkWeights::zeros(columns.len(), head.into()),
        best_epoch: 0,
        best_val_nll: f64::NAN,
    };
    let train = file.prepare(&train_bundle)?;
    let val = file.prepare(&val_bundle)?;
    let out = net::train(&train, &val, head.into(), &ctx.train()?.with_seed(seed))?;
    let file = WeightsFile { weights: out.weights, best_epoch: out.best_epoch, best_val_nll: out.best_val_nll, ..file };

    fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join(WEIGHTS_FILE);
    fs::write(&path, serde_json::to_string_pretty(&file)? + "\n")?;
    let mut w = csv::Writer::from_path(ctx.out.join("train_history.csv"))?;
    w.write_record(["epoch", "train_nll", "val_nll"])?;
    for r in &out.history {
        w.write_record([r.epoch.to_string(), r.train_nll.to_string(), r.val_nll.to_string()])?;
    }
    w.flush()?;
    say!("best epoch {} val nll {:.6}", out.best_epoch, out.best_val_nll);
    announce(&[path]);
    Ok(())
}

fn read_weights(path: &Path) -> anyhow::Result<WeightsFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn eval_cmd(ctx: &Ctx, weights: &Path, data: &Path, full_attendance: bool) -> anyhow::Result<()> {
    let w = read_weights(weights)?;
    let bundle = load_dataset(data).with_context(|| format!("loading {}", data.display()))?;
    let teams = w.prepare(&bundle)?;
    let mut total = 0.0;
    let mut per_team = Vec::new();
    for (record, team) in bundle.teams.iter().zip(&teams) {
        let conv = if full_attendance { team.conversation.full_attendance_only() } else { team.conversation.clone() };
        let nll = sequence_nll(&team.params(&w.weights), &conv)?;
        total += nll;
        per_team.push(json!({"team_id": record.team_id, "nll": nll, "n_turns": conv.n_turns()}));
    }
    fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join("eval.json");
    write_json(
        &path,
        &json!({"schema_version": SCHEMA_VERSION, "full_attendance": full_attendance, "nll": total, "teams": per_team}),
    )?;
    say!("nll {total:.12}");
    announce(&[path]);
    Ok(())
}

fn read_groups(path: &Path) -> anyhow::Result<Vec<(String, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| anyhow!("missing column `{name}`"));
    let (gi, vi) = (col("group")?, col("value")?);
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for row in r.records() {
        let row = row?;
        let g = row.get(gi).unwrap_or_default().to_string();
        let v: f64 = row.get(vi).unwrap_or_default().trim().parse().with_context(|| format!("bad value in {row:?}"))?;
        match groups.iter_mut().find(|(name, _)| *name == g) {
            Some((_, values)) => values.push(v),
            None => groups.push((g, vec![v])),
        }
    }
    Ok(groups)
}

fn stats_cmd(ctx: &Ctx, input: &Path, test: StatsTest, alternative: AlternativeArg) -> anyhow::Result<()> {
    let groups = read_groups(input)?;
    let samples: Vec<Vec<f64>> = groups.iter().map(|g| g.1.clone()).collect();
    let names: Vec<String> = groups.iter().map(|g| g.0.clone()).collect();
    let alt: Alternative = alternative.into();
    let results = match test {
        StatsTest::KruskalWallis => json!({"groups": names, "test": stats::kruskal_wallis(&samples)?}),
        StatsTest::RankSum => {
            if samples.len() != 2 {
                bail!("rank-sum needs exactly two groups, found {}", samples.len());
            }
            json!({"groups": names, "test": stats::wilcoxon_rank_sum(&samples[0], &samples[1], alt)?})
        }
        StatsTest::SignedRank => {
            let diffs: Vec<f64> = samples.concat();
            json!({"test": stats::wilcoxon_signed_rank(&diffs, alt)?})
        }
        StatsTest::Pairwise => {
            let m = stats::pairwise_wilcoxon(&samples, alt)?;
            fs::create_dir_all(&ctx.out)?;
            report::write_pairwise(&ctx.out.join(report::PAIRWISE_FILE), &names, &m.unadjusted())?;
            report::write_pairwise(&ctx.out.join(report::PAIRWISE_HOLM_FILE), &names, &m.holm())?;
            json!({"groups": names, "pairwise": m})
        }
    };
    fs::create_dir_all(&ctx.out)?;
    let path = ctx.out.join("stats.json");
    write_json(&path, &envelope("stats", &results)?)?;
    say!("{}", serde_json::to_string(&results["test"]).unwrap_or_default());
    announce(&[path]);
    Ok(())
}

fn curves_cmd(ctx: &Ctx, weights: &Path, points: usize) -> anyhow::Result<()> {
    if points == 0 {
        bail!("--points must be positive");
    }
    let w = read_weights(weights)?;
    let k = w.trait_names.len();
    let grid = linspace(0.0, 1.0, points);
    fs::create_dir_all(&ctx.out)?;
    let mut written = Vec::new();
    for (j, name) in w.trait_names.iter().enumerate() {
        let path = ctx.out.join(format!("curves_{name}.csv"));
        let mut out = csv::Writer::from_path(&path)?;
        out.write_record(["trait", "pi", "d", "peak"])?;
        for &u in &grid {
            let mut x = vec![0.5; k];
            x[j] = u;
            let p = w.weights.forward(&x);
            let value = match &w.normalizer {
                Some(norm) => norm.denormalize(&x)[j],
                None => u,
            };
            out.write_record(
                [value, p.pi, p.d, p.peak_likelihood()].iter().map(|v| report::round_sig(*v).to_string()),
            )?;
        }
        out.flush()?;
        written.push(path);
    }
    announce(&written);
    Ok(())
}

fn load_real(data: &Path) -> anyhow::Result<DatasetBundle> {
    load_dataset(data).with_context(|| format!("loading {}", data.display()))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ConfigFile::default(),
    };
    let out = cli
        .out
        .or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx { seed: cli.seed, out, preset: cli.preset.into(), file };

    match cli.command {
        Command::Generate { kind, trial } => generate(&ctx, kind, trial),
        Command::Train { data, val, traits, head, same_traits, raw } => {
            train_cmd(&ctx, &data, &val, traits, head, same_traits, raw)
        }
        Command::Eval { weights, data, full_attendance } => eval_cmd(&ctx, &weights, &data, full_attendance),
        Command::Study1 => {
            let report = experiments::run_study1(&ctx.study1()?, ctx.seed("study1")?)?;
            for (m, v) in &report.median_loss_diff {
                say!("{m:<24} median loss diff {v:>12.4}");
            }
            announce(&report::emit_study1(&report, &ctx.out)?);
            Ok(())
        }
        Command::Study2 { kind } => {
            let kind: Study2Kind = kind.parse()?;
            let report = experiments::run_study2(kind, &ctx.study2()?, ctx.seed("study2")?)?;
            for c in &report.conditions {
                say!("{:<32} median nll {:>12.4}", c.name, c.summary.median);
            }
            announce(&report::emit_study2(&report, &ctx.out)?);
            Ok(())
        }
        Command::Study3 { data } => {
            let report = experiments::run_study3(&load_real(&data)?, &ctx.study3()?, ctx.seed("study3")?)?;
            say!("selected traits: {}", report.final_traits.join(", "));
            announce(&report::emit_study3(&report, &ctx.out)?);
            Ok(())
        }
        Command::ForwardSelect { data, traits } => {
            let bundle = load_real(&data)?;
            let pool = if traits.is_empty() { bundle.trait_names.clone() } else { traits };
            let selection = experiments::run_forward_selection(&bundle, &pool, &ctx.study3()?, ctx.seed("forward-select")?)?;
            say!("selected traits: {}", selection.selected_traits.join(", "));
            announce(&report::emit_forward_selection(&selection, &ctx.out)?);
            Ok(())
        }
        Command::Stats { input, test, alternative } => stats_cmd(&ctx, &input, test, alternative),
        Command::Curves { weights, points } => curves_cmd(&ctx, &weights, points),
    }
}

/// Parses `argv` and runs the command. Returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
