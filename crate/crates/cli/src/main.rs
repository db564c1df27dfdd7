use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use strokesig_core::distort::{self, draw_distortion, draw_rotation, DistortionDegree};
use strokesig_core::ink::{self, Character, Dataset};
use strokesig_core::pipeline::{
    self, demo_rotation_confusion, evaluate, rotation_report, train, LabeledSet, MetricsLog, RotationDemo, TrainConfig,
};
use strokesig_core::rng::{Domain, Stream};
use strokesig_core::sigfeat::{
    self, featurize, path_signature, read_dump, write_dump, FeatureDump, FeatureMode, FeatureParams, WindowSpec,
    DUMP_MAGIC,
};
use strokesig_core::tensornet::gradcheck::{check_layers, check_network};
use strokesig_core::tensornet::{Checkpoint, NetworkSpec};

#[derive(Parser)]
#[command(
    name = "strokesig",
    version,
    about = "Online handwriting recognition with signature features and stochastic pooling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Generate a synthetic dataset in the canonical line format.
    Gen(GenArgs),
    /// Distort characters and write them back or render them as a PGM image.
    Distort(DistortArgs),
    /// Print the truncated signature of a path.
    Sig(SigArgs),
    /// Rasterise characters into a binary feature dump.
    Featurize(FeaturizeArgs),
    /// Train a network and save a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint with k-pass averaging.
    Eval(EvalArgs),
    /// Finite-difference gradient checks for every layer and a whole network.
    Gradcheck(GradcheckArgs),
    /// Train on a horizontal/vertical bar pair under growing rotation.
    DemoRotation(DemoArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 20)]
    categories: usize,
    #[arg(long = "per-category", default_value_t = 200)]
    per_category: usize,
    /// Standard deviation of per-point noise, in canvas units (canvas 50×50).
    #[arg(long, default_value_t = 1.0)]
    jitter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Render {
    Canonical,
    Pgm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Affine,
    Rotation,
}

#[derive(Args)]
struct DistortArgs {
    /// Canonical dataset, `-` for standard input.
    #[arg(long)]
    input: PathBuf,
    /// Distortion degree Θ.
    #[arg(long)]
    theta: f64,
    #[arg(long, value_enum, default_value_t = Kind::Affine)]
    kind: Kind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = ink::DEFAULT_GRID)]
    grid: usize,
    #[arg(long = "box", default_value_t = ink::DEFAULT_BOX)]
    box_size: f64,
    /// Only the first N characters.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, value_enum, default_value_t = Render::Canonical)]
    render: Render,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SigArgs {
    /// Truncation depth.
    #[arg(long, default_value_t = 4)]
    m: usize,
    /// Points as `x,y x,y ...`.
    #[arg(long, allow_hyphen_values = true)]
    path: String,
    /// Prepend a time coordinate running from 0 to 1 over the points.
    #[arg(long)]
    time: bool,
    /// Significant digits per value.
    #[arg(long, default_value_t = 12)]
    digits: usize,
}

#[derive(Args)]
struct FeatureArgs {
    #[arg(long, default_value = "sig3d")]
    features: FeatureMode,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = WindowSpec::default().half_window)]
    window: usize,
    #[arg(long, default_value_t = ink::DEFAULT_GRID)]
    grid: usize,
    #[arg(long = "box", default_value_t = ink::DEFAULT_BOX)]
    box_size: f64,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Canonical dataset, `-` for standard input.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    features: FeatureArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Training flags; each one overrides the configuration key of the same name.
#[derive(Args, Default)]
struct ConfigFlags {
    #[arg(long)]
    network: Option<String>,
    #[arg(long)]
    features: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    window: Option<String>,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long = "box")]
    box_size: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    schedule: Option<String>,
    #[arg(long = "schedule_mode", alias = "schedule-mode")]
    schedule_mode: Option<String>,
    #[arg(long)]
    patience: Option<String>,
    #[arg(long = "min_rel_improve", alias = "min-rel-improve")]
    min_rel_improve: Option<String>,
    #[arg(long)]
    distortion: Option<String>,
    #[arg(long)]
    ssmp: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    momentum: Option<String>,
    #[arg(long = "lr_initial", alias = "lr-initial")]
    lr_initial: Option<String>,
    #[arg(long = "lr_final", alias = "lr-final")]
    lr_final: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "eval_k", alias = "eval-k")]
    eval_k: Option<String>,
}

impl ConfigFlags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("network", &self.network),
            ("features", &self.features),
            ("m", &self.m),
            ("window", &self.window),
            ("grid", &self.grid),
            ("box", &self.box_size),
            ("schedule", &self.schedule),
            ("schedule_mode", &self.schedule_mode),
            ("patience", &self.patience),
            ("min_rel_improve", &self.min_rel_improve),
            ("distortion", &self.distortion),
            ("ssmp", &self.ssmp),
            ("epochs", &self.epochs),
            ("batch", &self.batch),
            ("momentum", &self.momentum),
            ("lr_initial", &self.lr_initial),
            ("lr_final", &self.lr_final),
            ("seed", &self.seed),
            ("eval_k", &self.eval_k),
        ]
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Training data: canonical dataset or feature dump.
    #[arg(long)]
    train: PathBuf,
    /// Validation data, evaluated after every epoch.
    #[arg(long)]
    val: Option<PathBuf>,
    /// Test data, evaluated once at the end with every `eval_k`.
    #[arg(long)]
    test: Option<PathBuf>,
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `key=value` override, applied after the file and before flags.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(flatten)]
    flags: ConfigFlags,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Checkpoint path, rewritten after every epoch.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Canonical dataset or feature dump.
    #[arg(long)]
    test: PathBuf,
    /// Numbers of averaged passes, such as `1-10` or `1,5,10`.
    #[arg(long, default_value = "1-10")]
    k: String,
    /// `k,test_err` CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Confusion matrix CSV for the largest k.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Preset name or compact notation.
    #[arg(long, default_value = "toy")]
    spec: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    channels: usize,
    #[arg(long, default_value_t = 12)]
    grid: usize,
    #[arg(long, default_value_t = 4)]
    categories: usize,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct DemoArgs {
    /// Rotation degrees, such as `0,pi/12,pi/2,pi`.
    #[arg(long, default_value = "0,pi/12,pi/4,pi/2,pi")]
    thetas: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = RotationDemo::default().train_per_category)]
    train_per_category: usize,
    #[arg(long, default_value_t = RotationDemo::default().test_per_category)]
    test_per_category: usize,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// `theta,accuracy` CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Outcome {
    Done,
    /// Ran to completion but a check failed.
    Failed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Gen(a) => cmd_gen(a),
        Command::Distort(a) => cmd_distort(a),
        Command::Sig(a) => cmd_sig(a),
        Command::Featurize(a) => cmd_featurize(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::DemoRotation(a) => cmd_demo(a),
    }
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

fn create_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) => {
            let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    let mut out = create_output(path)?;
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    ink::parse_canonical(open_input(path)?).with_context(|| format!("reading {}", path.display()))
}

/// A canonical dataset or a feature dump, told apart by the dump's magic.
enum Data {
    Ink(Dataset),
    Dump(FeatureDump),
}

fn read_data(path: &Path) -> Result<Data> {
    let mut bytes = Vec::new();
    open_input(path)?.read_to_end(&mut bytes).with_context(|| format!("reading {}", path.display()))?;
    if bytes.starts_with(DUMP_MAGIC) {
        let dump = read_dump(&mut bytes.as_slice()).with_context(|| format!("reading {}", path.display()))?;
        return Ok(Data::Dump(dump));
    }
    let d = ink::parse_canonical(bytes.as_slice()).with_context(|| format!("reading {}", path.display()))?;
    Ok(Data::Ink(d))
}

fn labeled(data: Data, categories: Option<&[String]>) -> Result<LabeledSet> {
    Ok(match data {
        Data::Ink(d) => {
            let cats = categories.map(<[String]>::to_vec).unwrap_or_else(|| d.categories.clone());
            LabeledSet::from_dataset(&d, &cats)?
        }
        Data::Dump(d) => LabeledSet::from_dump(d, categories)?,
    })
}

fn cmd_gen(a: GenArgs) -> Result<Outcome> {
    let d = ink::synth_dataset(a.categories, a.per_category, a.jitter, a.seed)?;
    write_text(a.out.as_deref(), &ink::serialize(&d))?;
    Ok(Outcome::Done)
}

fn cmd_distort(a: DistortArgs) -> Result<Outcome> {
    let theta = DistortionDegree::new(a.theta)?;
    let mut d = read_dataset(&a.input)?;
    if let Some(n) = a.limit {
        d.items.truncate(n);
    }
    let distorted: Vec<Character> = d
        .items
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let mut rng = Stream::new(a.seed, Domain::Distortion, &[i as u64]);
            let s = match a.kind {
                Kind::Affine => draw_distortion(theta, a.grid, &mut rng),
                Kind::Rotation => draw_rotation(theta, &mut rng),
            };
            Ok(distort::apply(&ink::normalize(c, a.box_size, a.grid)?, &s))
        })
        .collect::<Result<_>>()?;
    match a.render {
        Render::Canonical => write_text(a.out.as_deref(), &ink::serialize(&Dataset::from_items(distorted)))?,
        Render::Pgm => {
            let params = FeatureParams {
                mode: FeatureMode::Bitmap,
                grid: a.grid,
                box_size: a.box_size,
                ..FeatureParams::default()
            };
            let maps = distorted.iter().map(|c| sigfeat::rasterize(c, &params)).collect::<Result<Vec<_>, _>>()?;
            let mut out = create_output(a.out.as_deref())?;
            out.write_all(&render_pgm(&maps, a.grid))?;
            out.flush()?;
        }
    }
    Ok(Outcome::Done)
}

/// Tiles bitmaps into one binary PGM, black ink on white, with a one-pixel
/// grey gutter.
fn render_pgm(maps: &[sigfeat::FeatureMap], grid: usize) -> Vec<u8> {
    let n = maps.len().max(1);
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let (w, h) = (cols * (grid + 1) + 1, rows * (grid + 1) + 1);
    let mut pixels = vec![128u8; w * h];
    for (i, m) in maps.iter().enumerate() {
        let (ox, oy) = ((i % cols) * (grid + 1) + 1, (i / cols) * (grid + 1) + 1);
        for r in 0..grid {
            for c in 0..grid {
                pixels[(oy + r) * w + ox + c] = if m.get(0, r, c) > 0.0 { 0 } else { 255 };
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    out
}

fn parse_points(text: &str) -> Result<Vec<[f64; 2]>> {
    text.split_whitespace()
        .map(|tok| {
            let (x, y) = tok.split_once(',').with_context(|| format!("point `{tok}` is not `x,y`"))?;
            Ok([x.trim().parse().context("bad x")?, y.trim().parse().context("bad y")?])
        })
        .collect()
}

fn cmd_sig(a: SigArgs) -> Result<Outcome> {
    let pts = parse_points(&a.path)?;
    if pts.is_empty() {
        bail!("--path has no points");
    }
    let sig = if a.time {
        let last = (pts.len() - 1).max(1) as f64;
        let timed: Vec<[f64; 3]> = pts.iter().enumerate().map(|(i, p)| [i as f64 / last, p[0], p[1]]).collect();
        path_signature(&timed, a.m)?
    } else {
        path_signature(&pts, a.m)?
    };
    let digits = a.digits.max(1) - 1;
    let values: Vec<String> = sig.coeffs().iter().map(|v| format!("{v:.digits$e}")).collect();
    println!("{}", values.join(" "));
    Ok(Outcome::Done)
}

fn cmd_featurize(a: FeaturizeArgs) -> Result<Outcome> {
    let d = read_dataset(&a.input)?;
    let f = a.features;
    let params = FeatureParams {
        mode: f.features,
        depth: f.m,
        window: WindowSpec { half_window: f.window },
        grid: f.grid,
        box_size: f.box_size,
    };
    params.validate()?;
    let records = d
        .items
        .iter()
        .map(|c| {
            let label = c.label.as_deref().and_then(|l| d.category_index(l)).map(|i| i as u32);
            Ok((featurize(c, &params)?, label))
        })
        .collect::<Result<_>>()?;
    let dump = FeatureDump { channels: params.channels(), grid: params.grid, records };
    let mut out = create_output(Some(&a.out))?;
    write_dump(&mut out, &dump)?;
    out.flush()?;
    Ok(Outcome::Done)
}

fn build_config(file: Option<&Path>, sets: &[String], flags: &ConfigFlags) -> Result<TrainConfig> {
    let mut cfg = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            TrainConfig::from_text(&text).with_context(|| format!("in {}", p.display()))?
        }
        None => TrainConfig::default(),
    };
    for s in sets {
        cfg.set_pair(s)?;
    }
    for (key, value) in flags.pairs() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> Result<Outcome> {
    let cfg = build_config(a.config.as_deref(), &a.set, &a.flags)?;
    let train_set = labeled(read_data(&a.train)?, None)?;
    let cats = train_set.categories.clone();
    let val_set = a.val.as_deref().map(|p| labeled(read_data(p)?, Some(&cats))).transpose()?;
    let resume = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    let out = a.out.clone();
    let metrics_path = a.metrics.clone();
    let (ck, mut metrics) = train(&cfg, &train_set, val_set.as_ref(), resume, |ck| {
        ck.save(&out)?;
        if let Some(p) = &metrics_path {
            let m = pipeline::metrics_from_checkpoint(ck)?;
            std::fs::write(p, m.epochs_csv())
                .map_err(|source| strokesig_core::Error::File { path: p.clone(), source })?;
        }
        Ok(())
    })?;
    // a resumed run that was already complete never called back
    ck.save(&a.out)?;
    if let Some(p) = &a.metrics {
        std::fs::write(p, metrics.epochs_csv()).with_context(|| format!("cannot write {}", p.display()))?;
    }
    if let Some(p) = &a.test {
        let test_set = labeled(read_data(p)?, Some(&cats))?;
        metrics.test = evaluate(&ck, &test_set, &cfg.eval_k)?.errors;
        print!("{}", metrics.test_table());
    }
    Ok(Outcome::Done)
}

fn parse_k(text: &str) -> Result<Vec<usize>> {
    let mut probe = TrainConfig::default();
    probe.set("eval_k", text)?;
    Ok(probe.eval_k)
}

fn cmd_eval(a: EvalArgs) -> Result<Outcome> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let k = parse_k(&a.k)?;
    let test_set = labeled(read_data(&a.test)?, Some(&ck.categories))?;
    let report = evaluate(&ck, &test_set, &k)?;
    let log = MetricsLog { epochs: Vec::new(), test: report.errors.clone() };
    print!("{}", log.test_table());
    if let Some(p) = &a.out {
        write_text(Some(p), &log.test_csv())?;
    }
    if let Some(p) = &a.confusion {
        let mut text = format!("true\\predicted,{}\n", ck.categories.join(","));
        for (name, row) in ck.categories.iter().zip(&report.confusion) {
            let cells: Vec<String> = row.iter().map(usize::to_string).collect();
            text.push_str(&format!("{name},{}\n", cells.join(",")));
        }
        write_text(Some(p), &text)?;
    }
    Ok(Outcome::Done)
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<Outcome> {
    let spec = NetworkSpec::parse(&a.spec, a.channels, a.grid, a.categories)?;
    let layers = check_layers(a.seed)?;
    let network = check_network(&spec, a.seed)?;
    let mut ok = true;
    println!("{:<28} {:>8} {:>12}", "check", "values", "max rel err");
    for r in layers.iter().chain(&network) {
        let pass = r.max_rel_err < a.tolerance;
        ok &= pass;
        println!("{:<28} {:>8} {:>12.3e}{}", r.name, r.checked, r.max_rel_err, if pass { "" } else { "  FAIL" });
    }
    Ok(if ok { Outcome::Done } else { Outcome::Failed })
}

/// A number, `pi`, or `pi/<n>`, optionally with a leading factor: `3pi/4`.
fn parse_angle(text: &str) -> Result<f64> {
    let t = text.trim();
    if let Some(idx) = t.find("pi") {
        let factor = match &t[..idx] {
            "" => 1.0,
            f => f.trim_end_matches('*').parse::<f64>().with_context(|| format!("bad angle `{t}`"))?,
        };
        let rest = &t[idx + 2..];
        let div = match rest.strip_prefix('/') {
            Some(d) => d.parse::<f64>().with_context(|| format!("bad angle `{t}`"))?,
            None if rest.is_empty() => 1.0,
            None => bail!("bad angle `{t}`"),
        };
        return Ok(factor * std::f64::consts::PI / div);
    }
    t.parse().with_context(|| format!("bad angle `{t}`"))
}

fn cmd_demo(a: DemoArgs) -> Result<Outcome> {
    let thetas = a.thetas.split(',').map(parse_angle).collect::<Result<Vec<_>>>()?;
    let mut demo = RotationDemo {
        train_per_category: a.train_per_category,
        test_per_category: a.test_per_category,
        ..RotationDemo::default()
    };
    for s in &a.set {
        demo.config.set_pair(s)?;
    }
    let points = demo_rotation_confusion(&thetas, a.seed, &demo)?;
    write_text(a.out.as_deref(), &rotation_report(&points))?;
    Ok(Outcome::Done)
}
