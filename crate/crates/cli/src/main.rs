use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ecp_core::clips::MotionClip;
use ecp_core::composer::{ComposerConfig, ToleranceSchedule};
use ecp_core::evalbench::{self, report, Strategy};
use ecp_core::experts::{train_expert, ExpertConfig};
use ecp_core::pipeline::{run_benchmark, ArtifactStore, BenchConfig, BenchSummary, EXPANSION_SKILLS, TRAINING_SKILLS};
use ecp_core::runtime::Manifest;
use ecp_core::simcore::SimConfig;

#[derive(Parser)]
#[command(name = "ecp", version, about = "Expert and composer policies for a planar quadruped")]
struct Cli {
    /// Simulator configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    sim_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the six default reference clips.
    GenClips {
        #[arg(long, default_value = "artifacts/clips")]
        out: PathBuf,
    },
    /// Check a clip file and print its summary.
    ValidateClip {
        /// Clip file (TOML).
        file: PathBuf,
    },
    /// Train one expert on a clip.
    TrainExpert {
        /// Reference clip (TOML).
        #[arg(long)]
        clip: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint to write; the learning curve goes next to it.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        expert: ExpertArgs,
    },
    /// Train the composer on skills from an artifact directory.
    TrainComposer {
        /// Comma-separated skill names.
        #[arg(long, value_delimiter = ',', default_values_t = TRAINING_SKILLS.map(String::from))]
        skills: Vec<String>,
        /// Tolerance schedule (TOML); the built-in table when omitted.
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        composer: ComposerArgs,
    },
    /// Write a manifest for the stored skills, with optimal phase intervals
    /// when a benchmark summary exists.
    Manifest {
        /// Comma-separated skill names; all six when omitted.
        #[arg(long, value_delimiter = ',')]
        skills: Option<Vec<String>>,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Evaluate transitions between skills of a manifest.
    Bench {
        /// random-switch, linear-interp, composer-R, composer-O, or `all`
        /// for the complete evaluation with expansion and PCA.
        #[arg(long, default_value = "all")]
        strategy: String,
        /// Only `all` is supported: every ordered pair including self pairs.
        #[arg(long, default_value = "all")]
        pairs: String,
        /// Episodes per ordered pair.
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Output directory; defaults to the store's bench directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Manifest for single-strategy runs; defaults to the store manifest.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        store: StoreArgs,
    },
    /// Clips, experts, composer, manifest and the complete benchmark in one go.
    /// Existing artifacts are reused.
    Pipeline {
        /// Benchmark episodes per ordered pair.
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        store: StoreArgs,
        #[command(flatten)]
        expert: ExpertArgs,
        #[command(flatten)]
        composer: ComposerArgs,
    },
    /// Run the live console service.
    Serve {
        #[arg(long, default_value = "artifacts/manifest.toml")]
        manifest: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct StoreArgs {
    /// Artifact directory; defaults to $ECP_ARTIFACTS or ./artifacts.
    #[arg(long)]
    artifacts: Option<PathBuf>,
}

impl StoreArgs {
    fn store(&self) -> ArtifactStore {
        match &self.artifacts {
            Some(p) => ArtifactStore::new(p),
            None => ArtifactStore::from_env(),
        }
    }
}

#[derive(Args)]
struct ExpertArgs {
    /// Expert training configuration (TOML).
    #[arg(long)]
    expert_config: Option<PathBuf>,
    /// PPO iterations, overriding the configuration.
    #[arg(long)]
    expert_iterations: Option<usize>,
}

impl ExpertArgs {
    fn config(&self) -> Result<ExpertConfig> {
        let mut c = match &self.expert_config {
            Some(p) => ExpertConfig::from_toml_str(&read(p)?)?,
            None => ExpertConfig::default(),
        };
        if let Some(n) = self.expert_iterations {
            c.iterations = n;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct ComposerArgs {
    /// Composer training configuration (TOML).
    #[arg(long)]
    composer_config: Option<PathBuf>,
    /// PPO iterations, overriding the configuration.
    #[arg(long)]
    composer_iterations: Option<usize>,
}

impl ComposerArgs {
    fn config(&self) -> Result<ComposerConfig> {
        let mut c = match &self.composer_config {
            Some(p) => ComposerConfig::from_toml_str(&read(p)?)?,
            None => ComposerConfig::default(),
        };
        if let Some(n) = self.composer_iterations {
            c.iterations = n;
        }
        c.validate()?;
        Ok(c)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn schedule(path: Option<&Path>) -> Result<ToleranceSchedule> {
    Ok(match path {
        Some(p) => ToleranceSchedule::load(p)?,
        None => ToleranceSchedule::default(),
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let sim = match &cli.sim_config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    match cli.command {
        Command::GenClips { out } => {
            // clips live under <root>/clips; accept either the root or the clips directory
            let root = if out.file_name().is_some_and(|n| n == "clips") {
                out.parent().map(Path::to_path_buf).unwrap_or_default()
            } else {
                out
            };
            let store = ArtifactStore::new(root);
            for c in store.generate_clips(&sim)? {
                println!("{}\t{}", c.name, store.clip_path(&c.name).display());
            }
        }
        Command::ValidateClip { file } => {
            let c = MotionClip::load(&file)?;
            println!(
                "{}: ok, period {:.4} s, {} frames, mean velocity {:.4} m/s",
                c.name,
                c.period,
                c.frames.len(),
                c.mean_velocity()
            );
        }
        Command::TrainExpert {
            clip,
            seed,
            out,
            expert,
        } => {
            let clip = MotionClip::load(&clip)?;
            let trained = train_expert(&clip, &sim, &expert.config()?, seed)?;
            if let Some(d) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(d)?;
            }
            trained.artifact.save(&out)?;
            let curve = out.with_extension("curve.csv");
            report::write_rows(&curve, &trained.curve)?;
            println!(
                "{}: survived {}/{}, imitation reward {:.3}; curve in {}",
                clip.name,
                trained.eval.survived,
                trained.eval.episodes,
                trained.eval.mean_imitation_reward,
                curve.display()
            );
        }
        Command::TrainComposer {
            skills,
            schedule: sched,
            seed,
            store,
            composer,
        } => {
            let names: Vec<&str> = skills.iter().map(String::as_str).collect();
            let store = store.store();
            let eval = store.train_composer(&sim, &names, &composer.config()?, &schedule(sched.as_deref())?, seed)?;
            println!(
                "composer: {} of {} transitions reached the target ({:.1}%), saved to {}",
                eval.reached,
                eval.episodes,
                100.0 * eval.success_rate(),
                store.composer_path().display()
            );
        }
        Command::Manifest { skills, store } => {
            let store = store.store();
            let all: Vec<String> = TRAINING_SKILLS.iter().chain(EXPANSION_SKILLS.iter()).map(|s| s.to_string()).collect();
            let skills_given = skills.is_some();
            let names = skills.unwrap_or(all);
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let summary = store.summary_path();
            let m = if skills_given || !summary.exists() {
                store.build_manifest(&names)?
            } else {
                // a finished benchmark supplies the optimal phase intervals
                store.manifest_with_intervals(&BenchSummary::load(&summary)?)?
            };
            m.save(&store.manifest_path())?;
            println!("{}", store.manifest_path().display());
        }
        Command::Bench {
            strategy,
            pairs,
            episodes,
            seed,
            out,
            manifest,
            store,
        } => {
            if pairs != "all" {
                bail!("unsupported --pairs {pairs:?}; only `all` is implemented");
            }
            let mut store = store.store();
            let cfg = BenchConfig {
                episodes,
                seed,
                ..BenchConfig::default()
            };
            if strategy == "all" {
                let out = out.unwrap_or_else(|| store.bench_dir());
                print_summary(&run_benchmark(&store, &sim, &cfg, &out)?);
                return Ok(());
            }
            let strategy: Strategy = strategy.parse().map_err(anyhow::Error::msg)?;
            let manifest_path = manifest.unwrap_or_else(|| store.manifest_path());
            let m = Manifest::load(&manifest_path)?;
            let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
            let lib = m.load_library(&base)?;
            store.root = base;
            let out = out.unwrap_or_else(|| store.bench_dir());
            std::fs::create_dir_all(&out)?;
            let pairs = evalbench::all_pairs(&lib);
            let run = evalbench::build_matrix(&lib, &sim, &cfg.episode, strategy, &pairs, episodes, seed, cfg.chunk);
            report::write_episodes(&out.join(format!("{strategy}-episodes.csv")), &run.episodes)?;
            report::write_matrices(&out.join(format!("{strategy}-matrix.csv")), std::slice::from_ref(&run.matrix))?;
            let names = lib.names();
            let profiles: Vec<_> = pairs
                .iter()
                .map(|&(a, b)| evalbench::PhaseProfile::from_results(&names[a], &names[b], evalbench::PHASE_BINS, &run.episodes))
                .collect();
            report::write_profiles(&out.join(format!("{strategy}-phase_profiles.csv")), &profiles)?;
            print_matrix(&run.matrix);
            if !run.invalid.is_empty() {
                println!("{} episodes were invalid and excluded", run.invalid.len());
            }
        }
        Command::Pipeline {
            episodes,
            seed,
            store,
            expert,
            composer,
        } => {
            let store = store.store();
            let ecfg = expert.config()?;
            let ccfg = composer.config()?;
            let names: Vec<&str> = TRAINING_SKILLS.iter().chain(EXPANSION_SKILLS.iter()).copied().collect();
            if names.iter().any(|n| !store.clip_path(n).exists()) {
                store.generate_clips(&sim)?;
            }
            for (k, name) in names.iter().enumerate() {
                if store.expert_path(name).exists() {
                    log::info!("expert {name} already trained");
                    continue;
                }
                let eval = store.train_expert(&sim, name, &ecfg, seed.wrapping_mul(1000).wrapping_add(k as u64))?;
                println!("expert {name}: survived {}/{}", eval.survived, eval.episodes);
            }
            if !store.composer_path().exists() {
                match store.train_composer(&sim, &TRAINING_SKILLS, &ccfg, &ToleranceSchedule::default(), seed ^ 0xc0) {
                    Ok(eval) => println!("composer: reached {:.1}% in training evaluation", 100.0 * eval.success_rate()),
                    // the saved composer is still benchmarked so its effect is measured
                    Err(e) => log::warn!("{e}"),
                }
            }
            store.build_manifest(&names)?.save(&store.manifest_path())?;
            let cfg = BenchConfig {
                episodes,
                ..BenchConfig::default()
            };
            print_summary(&run_benchmark(&store, &sim, &cfg, &store.bench_dir())?);
        }
        Command::Serve {
            manifest,
            bind,
            speed,
            seed,
        } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(ecp_console::serve(ecp_console::ServeConfig {
                manifest,
                bind,
                speed,
                seed,
                sim,
            }))?;
        }
    }
    Ok(())
}

fn print_matrix(m: &ecp_core::evalbench::SuccessMatrix) {
    println!("{}", m.strategy);
    for c in &m.cells {
        println!(
            "  {:>7} -> {:<7} {:6.1}%  [{:5.1}, {:5.1}]  n={}  duration {:.2} s",
            c.source,
            c.target,
            100.0 * c.rate,
            100.0 * c.ci_low,
            100.0 * c.ci_high,
            c.episodes,
            c.mean_duration
        );
    }
}

fn print_summary(s: &ecp_core::pipeline::BenchSummary) {
    for m in &s.matrices {
        print_matrix(m);
    }
    println!(
        "durations: same direction {:.3} s, reversed {:.3} s",
        s.durations.same_direction_mean, s.durations.reversed_direction_mean
    );
    println!(
        "pca: explained {:?}, reconstruction error {:.3e}, discarded eigenvalues {:.3e}",
        s.pca.explained_ratio, s.pca.reconstruction_error, s.pca.discarded_eigenvalue_sum
    );
    println!("invalid episodes: {}", s.invalid_episodes);
}
