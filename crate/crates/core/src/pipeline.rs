//! On-disk artifact layout and the end-to-end train and benchmark run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::file_sha256;
use crate::clips::{default_gaits, generate_clip, ClipError, MotionClip};
use crate::composer::{check_success_floor, train_composer_unchecked, untrained_composer, ComposerArtifact, ComposerConfig, ComposerSkill, ToleranceSchedule};
use crate::error::{ConfigError, TrainingError};
use crate::evalbench::pca::Kde2;
use crate::evalbench::report::{self, PcaRow};
use crate::evalbench::{
    all_pairs, build_matrix, direction_of, duration_summary, episode_seed, find_optimal_intervals, pca, run_episodes,
    CellStats, DurationSummary, EpisodeConfig, EpisodeSpec, PhaseProfile, Strategy, SuccessMatrix, PHASE_BINS,
};
use crate::experts::{evaluate_expert, train_expert, untrained_expert, ArtifactError, ExpertArtifact, ExpertConfig, ExpertEval};
use crate::runtime::{LibraryError, Manifest, ManifestSkill, SkillLibrary, MANIFEST_SCHEMA_VERSION};
use crate::simcore::SimConfig;

pub const SUMMARY_FILE: &str = "summary.toml";

/// Skills the composer is trained on.
pub const TRAINING_SKILLS: [&str; 3] = ["walk-F", "walk-B", "trot-F"];
/// Skills added to the library after composer training.
pub const EXPANSION_SKILLS: [&str; 3] = ["trot-B", "hop", "stand"];

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Clip(#[from] ClipError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Library(#[from] LibraryError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Directory holding clips, checkpoints, the manifest and benchmark output.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    pub root: PathBuf,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `$ECP_ARTIFACTS`, or `artifacts` under the working directory.
    pub fn from_env() -> Self {
        Self::new(std::env::var_os("ECP_ARTIFACTS").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("artifacts")))
    }

    pub fn clip_path(&self, name: &str) -> PathBuf {
        self.root.join("clips").join(format!("{name}.toml"))
    }

    pub fn expert_path(&self, name: &str) -> PathBuf {
        self.root.join("experts").join(format!("{name}.ckpt"))
    }

    pub fn expert_curve_path(&self, name: &str) -> PathBuf {
        self.root.join("experts").join(format!("{name}.curve.csv"))
    }

    pub fn expert_eval_path(&self, name: &str) -> PathBuf {
        self.root.join("experts").join(format!("{name}.eval.toml"))
    }

    pub fn composer_path(&self) -> PathBuf {
        self.root.join("composer").join("composer.ckpt")
    }

    pub fn composer_curve_path(&self) -> PathBuf {
        self.root.join("composer").join("curve.csv")
    }

    pub fn composer_eval_path(&self) -> PathBuf {
        self.root.join("composer").join("eval.toml")
    }

    pub fn schedule_path(&self) -> PathBuf {
        self.root.join("composer").join("schedule.toml")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.toml")
    }

    pub fn bench_dir(&self) -> PathBuf {
        self.root.join("bench")
    }

    pub fn summary_path(&self) -> PathBuf {
        self.bench_dir().join(SUMMARY_FILE)
    }

    fn ensure_parent(path: &Path) -> Result<(), PipelineError> {
        if let Some(d) = path.parent() {
            std::fs::create_dir_all(d).map_err(io_err(d))?;
        }
        Ok(())
    }

    pub fn load_clip(&self, name: &str) -> Result<MotionClip, PipelineError> {
        Ok(MotionClip::load(&self.clip_path(name))?)
    }

    pub fn load_expert(&self, name: &str) -> Result<ExpertArtifact, PipelineError> {
        Ok(ExpertArtifact::load(&self.expert_path(name))?)
    }

    pub fn load_composer(&self) -> Result<ComposerArtifact, PipelineError> {
        Ok(ComposerArtifact::load(&self.composer_path())?)
    }

    /// Writes the six default clips.
    pub fn generate_clips(&self, sim: &SimConfig) -> Result<Vec<MotionClip>, PipelineError> {
        let mut out = Vec::new();
        for spec in default_gaits() {
            let clip = generate_clip(&spec, &sim.model)?;
            let path = self.clip_path(&clip.name);
            Self::ensure_parent(&path)?;
            clip.save(&path)?;
            out.push(clip);
        }
        Ok(out)
    }

    /// Trains one expert on its stored clip and saves the checkpoint, the
    /// learning curve and the evaluation.
    pub fn train_expert(
        &self,
        sim: &SimConfig,
        name: &str,
        cfg: &ExpertConfig,
        seed: u64,
    ) -> Result<ExpertEval, PipelineError> {
        let clip = self.load_clip(name)?;
        let trained = train_expert(&clip, sim, cfg, seed)?;
        let path = self.expert_path(name);
        Self::ensure_parent(&path)?;
        trained.artifact.save(&path)?;
        report::write_rows(&self.expert_curve_path(name), &trained.curve)?;
        let eval_path = self.expert_eval_path(name);
        std::fs::write(&eval_path, toml::to_string(&trained.eval).expect("eval serializes")).map_err(io_err(&eval_path))?;
        Ok(trained.eval)
    }

    /// Trains the composer on `skills`, starting episodes from their experts
    /// when those are already stored. The artifact is saved even when it
    /// misses the success floor; the error is returned afterwards.
    pub fn train_composer(
        &self,
        sim: &SimConfig,
        skills: &[&str],
        cfg: &ComposerConfig,
        sched: &ToleranceSchedule,
        seed: u64,
    ) -> Result<crate::composer::ComposerEval, PipelineError> {
        let mut list = Vec::new();
        for name in skills {
            let clip = self.load_clip(name)?;
            let expert = ExpertArtifact::load(&self.expert_path(name)).ok();
            if expert.is_none() {
                log::warn!("no expert stored for {name}; its episodes start from clip frames only");
            }
            list.push(ComposerSkill { clip, expert });
        }
        let trained = train_composer_unchecked(&list, sim, cfg, sched, seed)?;
        let path = self.composer_path();
        Self::ensure_parent(&path)?;
        trained.artifact.save(&path)?;
        sched.save(&self.schedule_path())?;
        report::write_rows(&self.composer_curve_path(), &trained.curve)?;
        let eval_path = self.composer_eval_path();
        std::fs::write(&eval_path, toml::to_string(&trained.eval).expect("eval serializes")).map_err(io_err(&eval_path))?;
        check_success_floor(&trained, cfg)?;
        Ok(trained.eval)
    }

    /// Manifest listing `skills` and, when present, the composer. Paths are
    /// relative to the store root.
    pub fn build_manifest(&self, skills: &[&str]) -> Result<Manifest, PipelineError> {
        let rel = |p: &Path| p.strip_prefix(&self.root).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
        let sha = |p: &Path| file_sha256(p).map_err(io_err(p));
        let composer = self.composer_path();
        let (composer, composer_sha256) = if composer.exists() {
            (Some(rel(&composer)), Some(sha(&composer)?))
        } else {
            (None, None)
        };
        let mut entries = Vec::new();
        for name in skills {
            let e = self.expert_path(name);
            entries.push(ManifestSkill {
                name: name.to_string(),
                expert: rel(&e),
                expert_sha256: sha(&e)?,
                clip: rel(&self.clip_path(name)),
                optimal_intervals: BTreeMap::new(),
            });
        }
        Ok(Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            composer,
            composer_sha256,
            skills: entries,
        })
    }

    /// Manifest of all six skills carrying the optimal phase intervals
    /// measured by a benchmark run.
    pub fn manifest_with_intervals(&self, summary: &BenchSummary) -> Result<Manifest, PipelineError> {
        let names: Vec<&str> = TRAINING_SKILLS.iter().chain(EXPANSION_SKILLS.iter()).copied().collect();
        let mut m = self.build_manifest(&names)?;
        for skill in &mut m.skills {
            for (source, target, iv) in &summary.optimal_intervals {
                if *target == skill.name {
                    skill.optimal_intervals.insert(source.clone(), iv.clone());
                }
            }
        }
        Ok(m)
    }

    pub fn load_library(&self, skills: &[&str]) -> Result<SkillLibrary, PipelineError> {
        Ok(self.build_manifest(skills)?.load_library(&self.root)?)
    }
}

/// Settings of the benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub episodes: usize,
    pub seed: u64,
    /// Episodes stepped together per batch.
    pub chunk: usize,
    pub optimal_threshold: f64,
    /// Recorded composer-R episodes per pair for the state PCA.
    pub pca_episodes: usize,
    /// Upper bound on composer states fed to the density estimate.
    pub kde_points: usize,
    pub episode: EpisodeConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            seed: 2024,
            chunk: 512,
            optimal_threshold: 0.9,
            pca_episodes: 10,
            kde_points: 4000,
            episode: EpisodeConfig::default(),
        }
    }
}

/// Before and after expansion rates of one pre-existing pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreservationCell {
    pub before: CellStats,
    pub after: CellStats,
    pub overlapping: bool,
}

/// Principal-component summary of the visited states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaSummary {
    pub samples_expert: usize,
    pub samples_transition: usize,
    pub explained_ratio: Vec<f64>,
    pub reconstruction_error: f64,
    pub discarded_eigenvalue_sum: f64,
    pub contour_level_95: f64,
    pub contour_fraction_inside: f64,
}

/// Everything the acceptance checks read back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchSummary {
    pub config: BenchConfig,
    pub training_skills: Vec<String>,
    pub expansion_skills: Vec<String>,
    pub checksums_before: BTreeMap<String, String>,
    pub checksums_after: BTreeMap<String, String>,
    pub matrices: Vec<SuccessMatrix>,
    pub preservation: Vec<PreservationCell>,
    pub optimal_intervals: Vec<(String, String, Vec<crate::clips::PhaseInterval>)>,
    pub durations: DurationSummary,
    pub pca: PcaSummary,
    pub invalid_episodes: usize,
}

impl BenchSummary {
    pub fn matrix(&self, strategy: Strategy) -> Option<&SuccessMatrix> {
        self.matrices.iter().find(|m| m.strategy == strategy)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        ArtifactStore::ensure_parent(path)?;
        let text = toml::to_string(self).map_err(|e| PipelineError::Other(e.to_string()))?;
        std::fs::write(path, text).map_err(io_err(path))
    }
}

fn pairs_between(lib: &SkillLibrary, names: &[&str]) -> Vec<(usize, usize)> {
    let idx: Vec<usize> = names.iter().filter_map(|n| lib.index_of(n)).collect();
    idx.iter().flat_map(|&a| idx.iter().map(move |&b| (a, b))).collect()
}

/// Full evaluation: composer-R on the training pairs before expansion, then
/// every strategy on all pairs of the expanded library, phase profiles and
/// optimal intervals, durations and the state PCA. Writes CSV files and the
/// `summary.toml` into `out`.
pub fn run_benchmark(
    store: &ArtifactStore,
    sim: &SimConfig,
    cfg: &BenchConfig,
    out: &Path,
) -> Result<BenchSummary, PipelineError> {
    std::fs::create_dir_all(out).map_err(io_err(out))?;
    let mut invalid = 0;

    let mut lib = store.load_library(&TRAINING_SKILLS)?;
    let checksums_before = lib.checksums();
    let base_pairs = pairs_between(&lib, &TRAINING_SKILLS);
    log::info!("composer-R on {} training pairs before expansion", base_pairs.len());
    let before = build_matrix(&lib, sim, &cfg.episode, Strategy::ComposerR, &base_pairs, cfg.episodes, cfg.seed ^ 0xbef0_4e, cfg.chunk);
    invalid += before.invalid.len();

    for name in EXPANSION_SKILLS {
        lib.add_skill(store.load_expert(name)?, store.load_clip(name)?)?;
    }
    let checksums_after = lib.checksums();
    let pairs = all_pairs(&lib);

    let mut matrices = Vec::new();
    let mut episodes = Vec::new();
    for strategy in [Strategy::RandomSwitch, Strategy::LinearInterp, Strategy::ComposerR] {
        log::info!("{strategy} on {} pairs", pairs.len());
        let run = build_matrix(&lib, sim, &cfg.episode, strategy, &pairs, cfg.episodes, cfg.seed, cfg.chunk);
        invalid += run.invalid.len();
        matrices.push(run.matrix);
        episodes.extend(run.episodes);
    }

    let names = lib.names();
    let mut profiles = Vec::new();
    let mut optimal = Vec::new();
    let composer_r: Vec<_> = episodes.iter().filter(|e| e.strategy == Strategy::ComposerR).cloned().collect();
    for (a, b) in &pairs {
        let p = PhaseProfile::from_results(&names[*a], &names[*b], PHASE_BINS, &composer_r);
        let iv = find_optimal_intervals(&p, cfg.optimal_threshold);
        if iv.is_empty() {
            log::warn!("{} -> {}: no phase bin reaches {}", names[*a], names[*b], cfg.optimal_threshold);
        }
        lib.set_optimal_intervals(&names[*a], &names[*b], iv.clone())?;
        optimal.push((names[*a].clone(), names[*b].clone(), iv));
        profiles.push(p);
    }

    log::info!("composer-O on {} pairs", pairs.len());
    let run_o = build_matrix(&lib, sim, &cfg.episode, Strategy::ComposerO, &pairs, cfg.episodes, cfg.seed ^ 0x0e7_1a1, cfg.chunk);
    invalid += run_o.invalid.len();
    matrices.push(run_o.matrix);
    episodes.extend(run_o.episodes);

    let after_r = matrices.iter().find(|m| m.strategy == Strategy::ComposerR).expect("composer-R ran");
    let preservation = before
        .matrix
        .cells
        .iter()
        .filter_map(|b| {
            after_r.cell(&b.source, &b.target).map(|a| PreservationCell {
                before: b.clone(),
                after: a.clone(),
                overlapping: b.intervals_overlap(a),
            })
        })
        .collect();

    let directions: BTreeMap<String, i8> = (0..lib.len())
        .map(|i| (names[i].clone(), direction_of(lib.entry(i).clip.mean_velocity())))
        .collect();
    let durations = duration_summary(after_r, &directions);

    let pca_summary = state_pca(&lib, sim, cfg, &pairs, out)?;

    let mut with_before = matrices.clone();
    let mut before_m = before.matrix.clone();
    for c in &mut before_m.cells {
        c.source = format!("{} (before expansion)", c.source);
    }
    with_before.push(before_m);
    report::write_matrices(&out.join("matrix.csv"), &with_before)?;
    report::write_episodes(&out.join("episodes.csv"), &episodes)?;
    report::write_profiles(&out.join("phase_profiles.csv"), &profiles)?;

    let summary = BenchSummary {
        config: cfg.clone(),
        training_skills: TRAINING_SKILLS.iter().map(|s| s.to_string()).collect(),
        expansion_skills: EXPANSION_SKILLS.iter().map(|s| s.to_string()).collect(),
        checksums_before,
        checksums_after,
        matrices,
        preservation,
        optimal_intervals: optimal,
        durations,
        pca: pca_summary,
        invalid_episodes: invalid,
    };
    summary.save(&out.join(SUMMARY_FILE))?;
    store.manifest_with_intervals(&summary)?.save(&store.manifest_path())?;
    Ok(summary)
}

fn state_pca(
    lib: &SkillLibrary,
    sim: &SimConfig,
    cfg: &BenchConfig,
    pairs: &[(usize, usize)],
    out: &Path,
) -> Result<PcaSummary, PipelineError> {
    let specs: Vec<EpisodeSpec> = pairs
        .iter()
        .flat_map(|&(a, b)| {
            (0..cfg.pca_episodes).map(move |k| EpisodeSpec {
                record: true,
                ..EpisodeSpec::new(a, b, Strategy::ComposerR, episode_seed(cfg.seed ^ 0x9ca, Strategy::ComposerR, a, b, k))
            })
        })
        .collect();
    let mut expert = Vec::new();
    let mut transition = Vec::new();
    for (_, log) in run_episodes(lib, sim, &cfg.episode, specs) {
        // every fifth expert state keeps the two groups comparable in size
        expert.extend(log.expert.iter().step_by(5).map(|s| s.to_array().to_vec()));
        transition.extend(log.transition.iter().map(|s| s.to_array().to_vec()));
    }
    let mut all = expert.clone();
    all.extend(transition.iter().cloned());
    let p = pca(&all, 2).map_err(|e| PipelineError::Other(e.to_string()))?;
    let mut rows = Vec::with_capacity(all.len());
    let mut comp_pts = Vec::with_capacity(transition.len());
    for (group, data) in [("expert", &expert), ("composer", &transition)] {
        for x in data.iter() {
            let v = p.project(x);
            if group == "composer" {
                comp_pts.push([v[0], v[1]]);
            }
            rows.push(PcaRow {
                group: group.into(),
                pc1: v[0],
                pc2: v[1],
            });
        }
    }
    report::write_pca(&out.join("pca.csv"), &rows)?;
    let stride = (comp_pts.len() / cfg.kde_points.max(1)).max(1);
    let kde_pts: Vec<[f64; 2]> = comp_pts.iter().step_by(stride).copied().collect();
    let (level, inside) = if kde_pts.len() >= 2 {
        let kde = Kde2::new(kde_pts.clone());
        let level = kde.contour_level(0.95);
        report::write_density_grid(&out.join("pca_density.csv"), &kde.grid(80), level)?;
        let inside = kde_pts.iter().filter(|q| kde.density(**q) >= level).count() as f64 / kde_pts.len() as f64;
        (level, inside)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(PcaSummary {
        samples_expert: expert.len(),
        samples_transition: transition.len(),
        explained_ratio: p.explained_ratio(),
        reconstruction_error: p.reconstruction_error(&all),
        discarded_eigenvalue_sum: p.discarded_variance(),
        contour_level_95: level,
        contour_fraction_inside: inside,
    })
}

/// Re-evaluates every stored expert with fresh seeds.
pub fn evaluate_stored_experts(
    store: &ArtifactStore,
    sim: &SimConfig,
    cfg: &ExpertConfig,
    episodes: usize,
    seed: u64,
) -> Result<Vec<(String, ExpertEval)>, PipelineError> {
    let mut out = Vec::new();
    for name in TRAINING_SKILLS.iter().chain(EXPANSION_SKILLS.iter()) {
        let clip = store.load_clip(name)?;
        let artifact = store.load_expert(name)?;
        artifact.check_clip(&clip)?;
        out.push((name.to_string(), evaluate_expert(&artifact, &clip, sim, cfg, episodes, seed)?));
    }
    Ok(out)
}

/// Library of the six default skills and a composer, all with untrained
/// networks. Exercises the plumbing without hours of training.
pub fn untrained_library(sim: &SimConfig, seed: u64) -> SkillLibrary {
    let ecfg = ExpertConfig::default();
    let training: Vec<String> = TRAINING_SKILLS.iter().map(|s| s.to_string()).collect();
    let composer = untrained_composer(&training, &ComposerConfig::default(), &ToleranceSchedule::default(), seed);
    let mut lib = SkillLibrary::with_composer(composer);
    for (k, spec) in default_gaits().iter().enumerate() {
        let clip = generate_clip(spec, &sim.model).expect("default gaits are valid");
        let expert = untrained_expert(&clip, &ecfg, seed.wrapping_add(k as u64 + 1));
        lib.add_skill(expert, clip).expect("default skills are distinct");
    }
    lib
}
