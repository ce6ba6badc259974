//! `gvbsim`: run scenarios, score a caller context, or generate a message.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use gvb::generator::{
    compose_seed, fit_to_duration, ExternalClient, ExternalTarget, GenerationParams,
    MessageGenerator, SeedBundle, DEFAULT_SPEAKING_RATE,
};
use gvb::priority::{
    classify_tier, BaselineProfile, CallerContext, EmergencyAssessment, FactorConstants,
    LocationType, Point, PriorityTier, TierThresholds, Weights,
};
use gvb::sim::{parse_profile, parse_scenario, render_trace, BackendConfig, SimConfig};
use gvb::DecisionKind;

#[derive(Parser)]
#[command(name = "gvbsim", version, about = "Call-waiting voice burst simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write its trace.
    Run(RunArgs),
    /// Score one caller context against a baseline profile.
    Score(ScoreArgs),
    /// Generate an emergency message from keywords.
    Gen(GenArgs),
}

#[derive(Args)]
struct ScoringArgs {
    /// Factor weights: location,timing,health,activity.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<Weights>,
    /// Tier thresholds: connect,voice,text.
    #[arg(long, value_parser = parse_thresholds)]
    thresholds: Option<TierThresholds>,
}

#[derive(Args)]
struct GenerationArgs {
    /// `template`, or `external=<target>` where target is `tcp:<host:port>`
    /// or `exec:<command>`.
    #[arg(long, default_value = "template", value_parser = parse_backend)]
    backend: BackendConfig,
    /// Milliseconds to wait for an external generator reply.
    #[arg(long, default_value_t = 2000)]
    gen_timeout_ms: u64,
    #[arg(long, default_value_t = 0)]
    rng_seed: u64,
    /// Words per second used to size bursts.
    #[arg(long, default_value_t = DEFAULT_SPEAKING_RATE)]
    speaking_rate: f64,
}

impl GenerationArgs {
    fn backend(&self) -> BackendConfig {
        match &self.backend {
            BackendConfig::External { target, .. } => BackendConfig::External {
                target: target.clone(),
                timeout: Duration::from_millis(self.gen_timeout_ms),
            },
            other => other.clone(),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    scenario: PathBuf,
    /// Write the trace here instead of stdout.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    scoring: ScoringArgs,
    #[command(flatten)]
    generation: GenerationArgs,
    /// Seconds of inactivity after which a waiting call is abandoned.
    #[arg(long, default_value_t = 120)]
    abandon_after: u64,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, default_value = "Home")]
    loctype: LocationType,
    /// Caller position as x,y kilometres; defaults to the profile's home.
    #[arg(long, value_parser = parse_point)]
    loc: Option<Point>,
    #[arg(long)]
    hour: u32,
    #[arg(long)]
    hr: Option<f64>,
    #[arg(long)]
    speed: Option<f64>,
    /// Baseline profile file (home=, usual_hours=, resting_hr=, usual_moving=).
    #[arg(long)]
    profile: Option<PathBuf>,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    keywords: String,
    /// Burst length in seconds to fit the message into.
    #[arg(long)]
    t: Option<u64>,
    #[arg(long)]
    image: Option<String>,
    #[arg(long)]
    loctype: Option<LocationType>,
    #[command(flatten)]
    generation: GenerationArgs,
}

fn parse_floats<const K: usize>(s: &str) -> Result<[f64; K], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != K {
        return Err(format!("expected {K} comma-separated numbers"));
    }
    let mut out = [0.0; K];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("not a number: {p:?}"))?;
    }
    Ok(out)
}

fn parse_weights(s: &str) -> Result<Weights, String> {
    Weights::new(parse_floats::<4>(s)?).map_err(|e| e.to_string())
}

fn parse_thresholds(s: &str) -> Result<TierThresholds, String> {
    let [c, v, t] = parse_floats::<3>(s)?;
    TierThresholds::new(c, v, t).map_err(|e| e.to_string())
}

fn parse_point(s: &str) -> Result<Point, String> {
    let [x, y] = parse_floats::<2>(s.trim_start_matches('(').trim_end_matches(')'))?;
    Point::new(x, y).map_err(|e| e.to_string())
}

fn parse_backend(s: &str) -> Result<BackendConfig, String> {
    if s == "template" {
        return Ok(BackendConfig::Template);
    }
    let target = s
        .strip_prefix("external=")
        .ok_or_else(|| "expected `template` or `external=<target>`".to_string())?;
    let target: ExternalTarget = target.parse().map_err(|e: gvb::GeneratorError| e.to_string())?;
    Ok(BackendConfig::external(target))
}

fn run(args: RunArgs) -> ExitCode {
    let input = match fs::read_to_string(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.scenario.display());
            return ExitCode::from(1);
        }
    };
    let events = match parse_scenario(&input) {
        Ok(ev) => ev,
        Err(e) => {
            eprintln!("parse error: {}: {e}", args.scenario.display());
            return ExitCode::from(2);
        }
    };
    let defaults = SimConfig::default();
    let config = SimConfig {
        weights: args.scoring.weights.unwrap_or(defaults.weights),
        thresholds: args.scoring.thresholds.unwrap_or(defaults.thresholds),
        backend: args.generation.backend(),
        rng_seed: args.generation.rng_seed,
        speaking_rate: args.generation.speaking_rate,
        abandon_after: args.abandon_after,
        ..defaults
    };
    let trace = match gvb::sim::run(&events, &config) {
        Ok(records) => render_trace(&records),
        Err(e) => {
            eprintln!("simulation error: {}: {e}", args.scenario.display());
            return ExitCode::from(1);
        }
    };
    match args.trace {
        Some(path) => {
            if let Err(e) = fs::write(&path, trace) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => print!("{trace}"),
    }
    ExitCode::SUCCESS
}

fn score(args: ScoreArgs) -> ExitCode {
    let profile = match &args.profile {
        Some(path) => {
            let parsed = fs::read_to_string(path)
                .map_err(|e| e.to_string())
                .and_then(|s| parse_profile(&s).map_err(|e| e.to_string()));
            match parsed {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("profile error: {}: {e}", path.display());
                    return ExitCode::from(2);
                }
            }
        }
        None => BaselineProfile::new(
            vec![Point { x: 0.0, y: 0.0 }],
            BaselineProfile::hour_range(8, 22),
            70.0,
            false,
        )
        .expect("default profile is valid"),
    };
    let location = args
        .loc
        .or_else(|| profile.usual_locations.first().copied())
        .unwrap_or(Point { x: 0.0, y: 0.0 });
    let ctx = match CallerContext::new(location, args.loctype, args.hour, args.hr, args.speed) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let weights = args.scoring.weights.unwrap_or_default();
    let thresholds = args.scoring.thresholds.unwrap_or_default();
    let a = EmergencyAssessment::assess(&ctx, &profile, &FactorConstants::default(), &weights, &thresholds);
    let f = a.factor_scores;
    println!(
        "location={:.6} timing={:.6} health={:.6} activity={:.6}",
        f.location, f.timing, f.health, f.activity
    );
    let tier: PriorityTier = classify_tier(a.emergency_score, &thresholds);
    println!(
        "score={:.6} tier={} decision={}",
        a.emergency_score,
        tier,
        DecisionKind::for_tier(tier)
    );
    ExitCode::SUCCESS
}

fn gen(args: GenArgs) -> ExitCode {
    let bundle = SeedBundle {
        keywords: Some(args.keywords.clone()),
        image_desc: args.image.clone(),
        location_type: args.loctype.map(|l| l.to_string()),
        ..Default::default()
    };
    let seed = match compose_seed(&bundle) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let g = &args.generation;
    if !(g.speaking_rate > 0.0) {
        eprintln!("error: speaking rate must be positive");
        return ExitCode::from(2);
    }
    let mut generator = match g.backend() {
        BackendConfig::Template => MessageGenerator::template(g.speaking_rate),
        BackendConfig::External { target, timeout } => {
            MessageGenerator::external(ExternalClient::new(target, timeout), g.speaking_rate)
        }
    };
    let params = GenerationParams {
        rng_seed: g.rng_seed,
        ..Default::default()
    };
    let out = match generator.generate(&seed, &params) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(err) = &out.fallback {
        eprintln!("fallback to template: {err}");
    }
    let msg = match args.t {
        Some(0) => {
            eprintln!("error: --t must be at least 1");
            return ExitCode::from(2);
        }
        Some(t) => fit_to_duration(&out.message, t, g.speaking_rate),
        None => out.message,
    };
    println!("seed={seed}");
    println!(
        "backend={} words={} seconds={:.2}",
        msg.backend, msg.word_count, msg.estimated_speech_seconds
    );
    println!("{}", msg.text);
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Score(args) => score(args),
        Command::Gen(args) => gen(args),
    }
}
