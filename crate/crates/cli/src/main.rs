use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use visemekit::manifest::Manifest;
use visemekit::pipeline::{self, AamModels, Layout, PipelineConfig};
use visemekit::{Error, Result};

#[derive(Parser)]
#[command(name = "visemekit", version, about = "Visual speech features and viseme recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset manifest CSV.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic corpus and its manifest into --out.
    SynthGen(Common),
    /// DCT features for every sentence.
    DctExtract(Common),
    /// Sample training frames and train the AAM.
    AamTrain(Common),
    /// Fit the trained AAM to every frame.
    AamFit(Common),
    /// AAM parameter features from saved fits.
    AamFeatures(Common),
    /// Train the HMM recognizer on saved features.
    HmmTrain(Common),
    /// Decode the test split with the saved recognizer.
    Decode(Common),
    /// Score saved hypotheses against the manifest.
    Score(Common),
    /// Landmark error report for saved fits.
    FitEval(Common),
    /// Every stage of the configured chain.
    Run(Common),
}

fn load_config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_manifest(c: &Common) -> Result<Manifest> {
    let path = c
        .manifest
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--manifest is required".into()))?;
    Manifest::load(path)
}

fn execute(command: Command) -> Result<()> {
    let common = match &command {
        Command::SynthGen(c)
        | Command::DctExtract(c)
        | Command::AamTrain(c)
        | Command::AamFit(c)
        | Command::AamFeatures(c)
        | Command::HmmTrain(c)
        | Command::Decode(c)
        | Command::Score(c)
        | Command::FitEval(c)
        | Command::Run(c) => c.clone(),
    };
    let cfg = load_config(&common).map_err(|e| e.in_stage("config"))?;
    if !matches!(command, Command::Run(_)) {
        // `run` builds its own pool
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")).in_stage("config"))?;
    }
    if let Command::SynthGen(_) = command {
        let m = pipeline::synth_gen(&cfg, &cfg.out)?;
        println!("{} sentences written to {}", m.entries.len(), cfg.out.display());
        return Ok(());
    }
    let m = load_manifest(&common).map_err(|e| e.in_stage("manifest"))?;
    let layout = Layout::new(&cfg.out);
    match command {
        Command::SynthGen(_) => unreachable!(),
        Command::DctExtract(_) => {
            pipeline::dct_extract(&cfg, &m, &layout)?;
        }
        Command::AamTrain(_) => {
            pipeline::aam_train(&cfg, &m, &layout)?;
        }
        Command::AamFit(_) => {
            let models = AamModels::load(&layout).map_err(|e| e.in_stage("aam-fit"))?;
            pipeline::aam_fit(&m, &layout, &models)?;
        }
        Command::AamFeatures(_) => {
            let fits = pipeline::load_all_fits(&m, &layout).map_err(|e| e.in_stage("aam-features"))?;
            pipeline::aam_features(&cfg, &m, &layout, &fits)?;
        }
        Command::FitEval(_) => {
            let fits = pipeline::load_all_fits(&m, &layout).map_err(|e| e.in_stage("fit-eval"))?;
            match pipeline::fit_eval(&cfg, &m, &layout, &fits)? {
                Some(s) => println!(
                    "{}: {:.2}% of {} frames at error <= {}",
                    s.model,
                    100.0 * s.rate,
                    s.frames,
                    s.threshold
                ),
                None => println!("no ground truth found; fit log written"),
            }
        }
        Command::HmmTrain(_) => {
            let feats = pipeline::load_features(&m, &layout).map_err(|e| e.in_stage("hmm-train"))?;
            pipeline::hmm_train(&cfg, &m, &layout, &feats)?;
        }
        Command::Decode(_) => {
            let feats = pipeline::load_features(&m, &layout).map_err(|e| e.in_stage("decode"))?;
            let set = visemekit::hmm::HmmSet::load(&layout.hmm_file()).map_err(|e| e.in_stage("decode"))?;
            pipeline::decode(&cfg, &m, &layout, &set, &feats)?;
        }
        Command::Score(_) => {
            let hyps = pipeline::load_hypotheses(&layout).map_err(|e| e.in_stage("score"))?;
            print_scores(&pipeline::score(&cfg, &m, &layout, &hyps)?);
        }
        Command::Run(_) => {
            let reports = pipeline::run_pipeline(&cfg, &m)?;
            if let Some(f) = &reports.fit {
                println!(
                    "{}: {:.2}% of {} frames at error <= {}",
                    f.model,
                    100.0 * f.rate,
                    f.frames,
                    f.threshold
                );
            }
            print_scores(&reports.scores);
            println!("outputs in {}", Path::new(&cfg.out).display());
        }
    }
    Ok(())
}

fn print_scores(rows: &[visemekit::eval::ScoreRow]) {
    println!("{:<12} {:>6} {:>9} {:>9}", "group", "N", "Corr%", "Acc%");
    for r in rows {
        println!(
            "{:<12} {:>6} {:>9.2} {:>9.2}",
            r.group,
            r.stats.n,
            r.stats.correctness(),
            r.stats.accuracy()
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
