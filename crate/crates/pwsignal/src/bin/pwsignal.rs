use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use pwsignal::error::{Error, Result};
use pwsignal::experiment::{
    self, default_sketch_width, evaluate_matrix, solve_point, Prepared, DEFAULT_LEVELS,
    DEFAULT_TOP_K,
};
use pwsignal::formats;
use pwsignal::{FileStore, Mode, SketchParams, SweepSpec};
use pwsignal_core::authsim::{IteratedSha256, LoginOutcome, Signaler};
use pwsignal_core::dpsketch::DEFAULT_DROP_THRESHOLD;
use pwsignal_core::{label_strength, label_strength_top_k, DpCountSketch, GameInstance, SignalMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "pwsignal", version, about = "Password strength signaling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus file utilities.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Strength-level thresholds.
    #[command(subcommand)]
    Strength(StrengthCmd),
    /// Private count-min sketches.
    #[command(subcommand)]
    Sketch(SketchCmd),
    /// Optimise a signaling matrix at one v/k.
    Solve(SolveArgs),
    /// Score a signaling matrix at one v/k.
    Evaluate(EvaluateArgs),
    /// Optimise and score a matrix at every v/k of a list.
    Sweep(SweepArgs),
    /// Score one fixed matrix across a v/k list.
    Robustness(RobustnessArgs),
    /// Print the attacker's best response.
    Attack(AttackArgs),
    /// Authentication server simulation.
    #[command(subcommand)]
    Authsim(AuthsimCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Group a plaintext password list into a frequency corpus.
    Compact {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "-")]
        out: String,
    },
}

#[derive(Subcommand)]
enum StrengthCmd {
    /// Compute thresholds for a frequency corpus.
    Label {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
        /// Only the most frequent passwords decide the thresholds.
        #[arg(long)]
        top_k: Option<u64>,
        #[arg(long, default_value = "-")]
        out: String,
    },
}

#[derive(Subcommand)]
enum SketchCmd {
    /// Insert a plaintext password list into a new sketch.
    Build {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        sketch: SketchFlags,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract the noisy corpus from a sketch file.
    Extract {
        sketch: PathBuf,
        #[arg(long, default_value_t = DEFAULT_DROP_THRESHOLD)]
        drop_threshold: f64,
        #[arg(long, default_value = "-")]
        out: String,
    },
}

#[derive(Args, Clone)]
struct SketchFlags {
    #[arg(long)]
    sketch_width: Option<usize>,
    #[arg(long)]
    sketch_depth: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
}

impl SketchFlags {
    fn params(&self, drop_threshold: f64) -> SketchParams {
        let d = SketchParams::default();
        SketchParams {
            width: self.sketch_width,
            depth: self.sketch_depth.unwrap_or(d.depth),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            drop_threshold,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Perfect,
    Imperfect,
    Online,
}

#[derive(Args, Clone)]
struct GameFlags {
    /// Frequency corpus.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    levels: usize,
    #[arg(long, value_enum, default_value = "perfect")]
    mode: ModeArg,
    /// Online mode: number of passwords deciding the thresholds.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    top_k: u64,
    #[command(flatten)]
    sketch: SketchFlags,
    #[arg(long, default_value_t = DEFAULT_DROP_THRESHOLD)]
    drop_threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl GameFlags {
    fn mode(&self) -> Mode {
        match self.mode {
            ModeArg::Perfect => Mode::Perfect,
            ModeArg::Imperfect => Mode::Imperfect,
            ModeArg::Online => Mode::Online { top_k: self.top_k },
        }
    }

    fn spec(&self, vk: Vec<f64>, iterations: usize) -> Result<SweepSpec> {
        let mut spec = SweepSpec::new(vk, self.levels, iterations, self.seed, self.mode())?;
        spec.sketch = self.sketch.params(self.drop_threshold);
        Ok(spec)
    }

    fn prepare(&self) -> Result<Prepared> {
        let corpus = formats::read_corpus(&self.corpus)?;
        Prepared::new(corpus, self.levels, self.mode(), &self.sketch.params(self.drop_threshold), self.seed)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    game: GameFlags,
    #[arg(long)]
    vk: f64,
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    game: GameFlags,
    #[arg(long)]
    vk: f64,
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    game: GameFlags,
    #[arg(long, value_delimiter = ',', required = true)]
    vk_list: Vec<f64>,
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    /// Re-score every point with the matrices found at lower v/k.
    #[arg(long)]
    monotone_repair: bool,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct RobustnessArgs {
    #[command(flatten)]
    game: GameFlags,
    #[arg(long, value_delimiter = ',', required = true)]
    vk_list: Vec<f64>,
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vk: f64,
    #[arg(long, default_value_t = DEFAULT_LEVELS)]
    levels: usize,
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value = "-")]
    out: String,
}

#[derive(Subcommand)]
enum AuthsimCmd {
    /// Register the corpus as users with delayed signaling, then log
    /// everyone in once.
    Demo {
        /// Frequency corpus; each class member becomes `frequency` users.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_LEVELS)]
        levels: usize,
        /// Signaling matrix; optimised on the sketch corpus when absent.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long, default_value_t = 10.0)]
        vk: f64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[command(flatten)]
        sketch: SketchFlags,
        #[arg(long, default_value_t = DEFAULT_DROP_THRESHOLD)]
        drop_threshold: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Record file to create.
        #[arg(long)]
        out: PathBuf,
    },
}

fn open_out(out: &str) -> Result<Box<dyn Write>> {
    if out == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let path = Path::new(out);
    let f = File::create(path).map_err(|source| Error::Io { path: path.into(), source })?;
    Ok(Box::new(BufWriter::new(f)))
}

fn write_out(out: &str, text: &str) -> Result<()> {
    let mut w = open_out(out)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|source| Error::Io { path: out.into(), source })
}

fn load_matrix(path: &Path, levels: usize) -> Result<SignalMatrix> {
    let s = formats::read_matrix(path)?;
    if s.levels() != levels {
        return Err(pwsignal_core::Error::Domain(format!(
            "{} is {}x{} but --levels is {levels}",
            path.display(),
            s.levels(),
            s.levels()
        ))
        .into());
    }
    Ok(s)
}

fn metrics_text(m: &experiment::PointMetrics) -> String {
    format!(
        "p_nosignal = {}\np_signal = {}\nimprovement = {}\nE_X = {}\nE_L = {}\nlow_confidence = {}\n",
        m.p_nosignal, m.p_signal, m.improvement, m.unlucky, m.lucky, m.low_confidence
    )
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Corpus(CorpusCmd::Compact { corpus, out }) => {
            let ecl = formats::load_plaintext(&corpus)?;
            info!("{} classes, {} distinct passwords", ecl.len(), ecl.distinct_passwords());
            write_out(&out, &ecl.to_text())?;
        }
        Command::Strength(StrengthCmd::Label { corpus, levels, top_k, out }) => {
            let ecl = formats::read_corpus(&corpus)?;
            let t = match top_k {
                Some(k) => label_strength_top_k(&ecl, levels, k)?,
                None => label_strength(&ecl, levels)?,
            };
            write_out(&out, &formats::thresholds_to_text(&t))?;
        }
        Command::Sketch(SketchCmd::Build { corpus, sketch, seed, out }) => {
            let passwords = formats::read_passwords(&corpus)?;
            let params = sketch.params(DEFAULT_DROP_THRESHOLD);
            let width = params.width.unwrap_or_else(|| default_sketch_width(passwords.len() as u64));
            let mut sk = DpCountSketch::new_column_aligned(width, params.depth, Some(params.epsilon), seed)?;
            for pw in passwords.iter().filter(|p| !p.is_empty()) {
                sk.insert(pw);
            }
            info!("inserted {} passwords into a {width}x{} sketch", passwords.len(), params.depth);
            formats::save_sketch(&out, &sk)?;
        }
        Command::Sketch(SketchCmd::Extract { sketch, drop_threshold, out }) => {
            let sk = formats::load_sketch(&sketch)?;
            write_out(&out, &sk.extract_noisy_corpus(drop_threshold)?.to_text())?;
        }
        Command::Solve(a) => {
            let prep = a.game.prepare()?;
            let s = solve_point(&prep, a.vk, a.game.levels, a.iters, a.game.seed)?;
            let m = evaluate_matrix(&prep, &s, a.vk)?;
            info!("p_nosignal {} p_signal {}", m.p_nosignal, m.p_signal);
            write_out(&a.out, &formats::matrix_to_text(&s))?;
        }
        Command::Evaluate(a) => {
            let s = load_matrix(&a.matrix, a.game.levels)?;
            let prep = a.game.prepare()?;
            write_out(&a.out, &metrics_text(&evaluate_matrix(&prep, &s, a.vk)?))?;
        }
        Command::Sweep(a) => {
            let mut spec = a.game.spec(a.vk_list, a.iters)?;
            spec.monotone_repair = a.monotone_repair;
            let corpus = formats::read_corpus(&a.game.corpus)?;
            let result = experiment::run_sweep(corpus, &spec)?;
            experiment::write_csv(open_out(&a.out)?, &result.rows)?;
            if result.failures() > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Robustness(a) => {
            let s = formats::read_matrix(&a.matrix)?;
            let spec = a.game.spec(a.vk_list, 1)?;
            let corpus = formats::read_corpus(&a.game.corpus)?;
            let rows = experiment::run_robustness(corpus, &spec, &s)?;
            experiment::write_csv(open_out(&a.out)?, &rows)?;
            if rows.iter().any(|r| r.outcome.is_err()) {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Attack(a) => {
            let corpus = formats::read_corpus(&a.corpus)?;
            let s = a.matrix.as_deref().map(|p| load_matrix(p, a.levels)).transpose()?;
            write_out(&a.out, &experiment::attack_report(&corpus, a.vk, a.levels, s.as_ref())?)?;
        }
        Command::Authsim(AuthsimCmd::Demo {
            corpus,
            levels,
            matrix,
            vk,
            iters,
            sketch,
            drop_threshold,
            seed,
            out,
        }) => authsim_demo(&corpus, levels, matrix.as_deref(), vk, iters, &sketch.params(drop_threshold), seed, &out)?,
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn authsim_demo(
    corpus: &Path,
    levels: usize,
    matrix: Option<&Path>,
    vk: f64,
    iters: usize,
    params: &SketchParams,
    seed: u64,
    out: &Path,
) -> Result<()> {
    if out.exists() {
        return Err(pwsignal_core::Error::Domain(format!("{} already exists", out.display())).into());
    }
    let ecl = formats::read_corpus(corpus)?;
    let mut users = Vec::new();
    for (i, c) in ecl.classes().iter().enumerate() {
        let copies = c.frequency.round().max(0.0) as u64;
        for j in 0..c.count {
            for _ in 0..copies {
                users.push((format!("user{}", users.len()), format!("pw{i}-{j}")));
            }
        }
    }
    info!("{} users", users.len());

    let hasher = IteratedSha256::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = params.width.unwrap_or_else(|| default_sketch_width(ecl.distinct_passwords()));
    let mut sk = DpCountSketch::new_column_aligned(width, params.depth, Some(params.epsilon), seed)?;
    let mut store = FileStore::open(out)?;
    for (user, pw) in &users {
        store.register(user, pw, None, &hasher, &mut rng)?;
        sk.insert(pw);
    }

    let noisy = sk.extract_noisy_corpus(params.drop_threshold)?;
    let t = label_strength(&noisy, levels)?;
    let s = match matrix {
        Some(p) => load_matrix(p, levels)?,
        None => {
            let prep = Prepared {
                baseline: GameInstance::unlabeled(&noisy),
                train: GameInstance::from_thresholds(&noisy, &t),
                eval: GameInstance::from_thresholds(&noisy, &t),
                corpus: noisy.clone(),
            };
            solve_point(&prep, vk, levels, iters, seed)?
        }
    };
    let signaler = Signaler::new(&t, &s, &sk)?;

    let mut assigned = 0usize;
    for (user, pw) in &users {
        if let LoginOutcome::Success { signal_assigned: true } =
            store.login(user, pw, Some(&signaler), &hasher, &mut rng)?
        {
            assigned += 1;
        }
    }
    let mut reassigned = 0usize;
    let mut failed = 0usize;
    for (user, pw) in &users {
        match store.login(user, pw, Some(&signaler), &hasher, &mut rng)? {
            LoginOutcome::Success { signal_assigned } => {
                reassigned += signal_assigned as usize
            }
            LoginOutcome::Fail => failed += 1,
        }
        if store.login(user, "wrong", None, &hasher, &mut rng)?.is_success() {
            failed += 1;
        }
    }
    store.flush()?;

    let mut hist = vec![vec![0usize; levels]; levels];
    for (user, pw) in &users {
        let rec = store.store().get(user).expect("registered");
        hist[signaler.strength(pw)][rec.signal.expect("assigned")] += 1;
    }
    println!("users = {}", users.len());
    println!("signals_assigned = {assigned}");
    println!("signals_reassigned = {reassigned}");
    println!("unexpected_login_results = {failed}");
    println!("matrix:\n{}", formats::matrix_to_text(&s).trim_end());
    println!("level signal_counts");
    for (level, row) in hist.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        println!("{level} {}", cells.join(" "));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
