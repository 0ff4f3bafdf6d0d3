//! Experiment configuration, run manifests and the command implementations
//! behind the `boson` binary.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::device::{apply_detector_model, Detection, DetectorModel, DeviceConfig, DeviceModel, NoiseModel, DEFAULT_P_MAX_MW};
use crate::randomness::{self, BitStream, RandomnessReport, Stage, TestResult};
use crate::reconstruction::{self, CountTable, ReconstructedMatrix};
use crate::rng;
use crate::sampling::{self, FockState, InputConfig, SampleRecord, Sampler};
use crate::unitary::{self, haar_unitary, UnitaryMatrix};
use crate::validation::{self, BenchmarkMode, BenchmarkReport, Histogram, SimilarityReport, ValidationTrace};
use crate::{stats, Error};

const DEMO_PIPELINE: &str = include_str!("../configs/demo_pipeline.json");

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_FAILED: i32 = 4;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Heater counts swept by the device figure.
pub const DEFAULT_HEATER_SWEEP: [usize; 6] = [2, 5, 8, 11, 14, 17];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Config,
    Data,
    /// A validation counter or statistical test did not pass.
    Failed,
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {message}")]
pub struct StageError {
    pub kind: FailureKind,
    pub stage: String,
    pub message: String,
}

impl StageError {
    pub fn new(kind: FailureKind, stage: &str, message: impl Into<String>) -> Self {
        Self {
            kind,
            stage: stage.to_string(),
            message: message.into(),
        }
    }

    pub fn config(stage: &str, message: impl Into<String>) -> Self {
        Self::new(FailureKind::Config, stage, message)
    }

    pub fn data(stage: &str, message: impl Into<String>) -> Self {
        Self::new(FailureKind::Data, stage, message)
    }

    pub fn failed(stage: &str, message: impl Into<String>) -> Self {
        Self::new(FailureKind::Failed, stage, message)
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            FailureKind::Config => EXIT_CONFIG,
            FailureKind::Data => EXIT_DATA,
            FailureKind::Failed => EXIT_FAILED,
        }
    }
}

pub type CmdResult<T> = std::result::Result<T, StageError>;

trait StageExt<T> {
    fn config_err(self, stage: &str) -> CmdResult<T>;
    fn data_err(self, stage: &str) -> CmdResult<T>;
}

impl<T, E: std::fmt::Display> StageExt<T> for std::result::Result<T, E> {
    fn config_err(self, stage: &str) -> CmdResult<T> {
        self.map_err(|e| StageError::config(stage, e.to_string()))
    }

    fn data_err(self, stage: &str) -> CmdResult<T> {
        self.map_err(|e| StageError::data(stage, e.to_string()))
    }
}

// ---------------------------------------------------------------------------
// configuration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Source {
    /// A fresh Haar unitary per power setting.
    Haar { modes: usize },
    /// The lattice device under random heater powers.
    Device {
        /// Device config file; the bundled device when absent.
        #[serde(default)]
        config: Option<PathBuf>,
        active_heaters: usize,
        #[serde(default = "default_p_max")]
        p_max_mw: f64,
    },
}

fn default_p_max() -> f64 {
    DEFAULT_P_MAX_MW
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerChoice {
    #[default]
    Bs,
    Distinguishable,
    Uniform,
    Mixture,
}

impl std::str::FromStr for SamplerChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bs" => Ok(Self::Bs),
            "distinguishable" | "dist" => Ok(Self::Distinguishable),
            "uniform" => Ok(Self::Uniform),
            "mixture" => Ok(Self::Mixture),
            _ => Err(format!("unknown sampler '{s}'")),
        }
    }
}

fn default_one() -> usize {
    1
}

fn default_validation_events() -> usize {
    10_000
}

fn default_block_size() -> usize {
    randomness::DEFAULT_BLOCK_SIZE
}

fn default_p_threshold() -> f64 {
    randomness::DEFAULT_P_THRESHOLD
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub source: Source,
    /// Photon number n, 1..=4.
    pub photons: usize,
    /// Pool of input modes; photons enter the first n. Defaults to the
    /// device input ports, or modes 0.. for a Haar source.
    #[serde(default)]
    pub input_modes: Option<Vec<usize>>,
    #[serde(default)]
    pub sampler: SamplerChoice,
    /// Overrides the noise model's indistinguishability for the mixture sampler.
    #[serde(default)]
    pub indistinguishability: Option<f64>,
    /// Draws per power setting.
    pub draws: u64,
    #[serde(default = "default_one")]
    pub power_settings: usize,
    /// Detected events fed to each validation counter.
    #[serde(default = "default_validation_events")]
    pub validation_events: usize,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default = "default_p_threshold")]
    pub p_threshold: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// n = 3 on a 16-mode Haar unitary.
    pub fn demo() -> Self {
        serde_json::from_str(DEMO_PIPELINE).expect("bundled demo config parses")
    }

    /// Reads a config; a relative device path is taken relative to the file.
    pub fn load(path: &Path) -> CmdResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| StageError::config("config", format!("{}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| StageError::config("config", format!("{}: {e}", path.display())))?;
        if let Source::Device { config: Some(p), .. } = &mut cfg.source {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CmdResult<()> {
        let bad = |m: String| Err(StageError::config("config", m));
        if !(1..=validation::CK_FOLD_LIMIT).contains(&self.photons) {
            return bad(format!("photons must be in 1..={}, got {}", validation::CK_FOLD_LIMIT, self.photons));
        }
        if self.draws == 0 || self.power_settings == 0 || self.validation_events == 0 {
            return bad("draws, power_settings and validation_events must be positive".into());
        }
        if !(1..=randomness::MAX_BLOCK_SIZE).contains(&self.block_size) {
            return bad(format!("block_size must be in 1..={}", randomness::MAX_BLOCK_SIZE));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return bad("p_threshold must lie in (0, 1)".into());
        }
        if let Some(x) = self.indistinguishability {
            if !(0.0..=1.0).contains(&x) {
                return bad("indistinguishability must lie in [0, 1]".into());
            }
        }
        match &self.source {
            Source::Haar { modes } if *modes < self.photons => bad(format!("{modes} modes cannot host {} photons", self.photons)),
            Source::Device { p_max_mw, .. } if !(*p_max_mw >= 0.0 && p_max_mw.is_finite()) => {
                bad("p_max_mw must be finite and non-negative".into())
            }
            _ => Ok(()),
        }
    }
}

/// A config resolved against its device: everything needed to run.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub device: Option<DeviceModel>,
    pub m: usize,
    pub input: InputConfig,
    pub detector: DetectorModel,
    pub noise: NoiseModel,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> CmdResult<Self> {
        config.validate()?;
        let n = config.photons;
        let (device, m) = match &config.source {
            Source::Haar { modes } => (None, *modes),
            Source::Device { config: path, .. } => {
                let cfg = match path {
                    Some(p) => DeviceConfig::load(p).config_err("device")?,
                    None => DeviceConfig::bundled(),
                };
                let d = DeviceModel::from_config(&cfg).config_err("device")?;
                let m = d.mode_count();
                (Some(d), m)
            }
        };
        let pool = match (&config.input_modes, &device) {
            (Some(p), _) => p.clone(),
            (None, Some(d)) => d.input_ports.clone(),
            (None, None) => (0..m).collect(),
        };
        if pool.len() < n {
            return Err(StageError::config("config", format!("{n} photons but only {} input modes", pool.len())));
        }
        let modes = pool[..n].to_vec();
        let input = match &device {
            Some(d) => InputConfig::with_ports(modes, m, &d.input_ports),
            None => InputConfig::new(modes, m),
        }
        .config_err("config")?;
        let (detector, noise) = match &device {
            Some(d) => (d.detector.clone(), d.noise.clone()),
            None => (DetectorModel::all_modes(m), NoiseModel::default()),
        };
        Ok(Self {
            config,
            device,
            m,
            input,
            detector,
            noise,
        })
    }

    fn stream(&self, name: &str) -> u64 {
        rng::substream_seed(self.config.seed, name)
    }

    /// Unitary and heater powers for power setting `s`.
    pub fn setting_unitary(&self, s: usize) -> CmdResult<(UnitaryMatrix, Option<Vec<f64>>)> {
        match (&self.config.source, &self.device) {
            (Source::Device { active_heaters, p_max_mw, .. }, Some(d)) => {
                let seed = rng::indexed_seed(self.stream("powers"), "setting", s as u64);
                let p = d.random_power_vector(*active_heaters, *p_max_mw, seed).config_err("evolve")?;
                let u = d.evolve(&p).data_err("evolve")?;
                Ok((u, Some(p)))
            }
            _ => {
                let seed = rng::indexed_seed(self.stream("device"), "setting", s as u64);
                Ok((haar_unitary(self.m, seed).data_err("evolve")?, None))
            }
        }
    }

    pub fn sampler(&self, u: &UnitaryMatrix) -> CmdResult<Sampler> {
        let x = self.config.indistinguishability.unwrap_or(self.noise.indistinguishability);
        match self.config.sampler {
            SamplerChoice::Bs => Sampler::bs(u, &self.input),
            SamplerChoice::Distinguishable => Sampler::distinguishable(u, &self.input),
            SamplerChoice::Uniform => Sampler::uniform(self.m, self.input.photon_count()),
            SamplerChoice::Mixture => Sampler::mixture(u, &self.input, x),
        }
        .config_err("sample")
    }
}

/// Threshold detection with n-fold post-selection. Detected records carry
/// the click pattern; discarded ones keep the emitted state with `kept` unset.
pub fn detect(records: Vec<SampleRecord>, detector: &DetectorModel, noise: &NoiseModel, fold: usize, seed: u64) -> Vec<SampleRecord> {
    let m = detector.mode_count();
    records
        .into_par_iter()
        .map(|mut r| {
            let mut rng = rng::trial_rng(seed, r.trial);
            match apply_detector_model(detector, noise, &r.output, fold, &mut rng) {
                Detection::Clicks(c) => r.output = FockState::from_modes(m, &c.modes),
                Detection::Discard => r.kept = false,
            }
            r
        })
        .collect()
}

// ---------------------------------------------------------------------------
// pipeline

pub struct SettingRun {
    pub index: usize,
    pub powers: Option<Vec<f64>>,
    pub unitary: UnitaryMatrix,
    pub samples: Vec<SampleRecord>,
    pub wk: ValidationTrace,
    pub ck: ValidationTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    pub index: usize,
    pub trials: usize,
    pub detected: usize,
    pub validation_events: usize,
    pub wk_final: i64,
    pub wk_rejects_uniform: bool,
    pub ck_final: i64,
    pub ck_rejects_distinguishable: bool,
    pub ck_skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub seed: u64,
    pub photons: usize,
    pub modes: usize,
    pub input_modes: Vec<usize>,
    pub sampler: SamplerChoice,
    pub settings: Vec<SettingSummary>,
    /// True when every trace rejected its null; bits are emitted only then.
    pub bits_emitted: bool,
    pub randomness: Option<RandomnessReport>,
}

pub struct PipelineRun {
    pub settings: Vec<SettingRun>,
    pub report: PipelineReport,
    pub vn: Option<BitStream>,
    pub hashed: Option<BitStream>,
}

/// evolve -> sample -> detect -> validate -> extract -> hash -> NIST.
pub fn run_pipeline(exp: &Experiment) -> CmdResult<PipelineRun> {
    let cfg = &exp.config;
    let n = exp.input.photon_count();
    let sampler_seed = exp.stream("sampler");
    let detector_seed = exp.stream("detector");
    let mut settings = Vec::with_capacity(cfg.power_settings);
    for s in 0..cfg.power_settings {
        let (unitary, powers) = exp.setting_unitary(s)?;
        let sampler = exp.sampler(&unitary)?;
        let start = s as u64 * cfg.draws;
        info!("setting {s}: sampling {} trials", cfg.draws);
        let raw = sampler.sample(start..start + cfg.draws, sampler_seed);
        let samples = detect(raw, &exp.detector, &exp.noise, n, detector_seed);
        let events: Vec<SampleRecord> = samples.iter().filter(|r| r.kept).take(cfg.validation_events).cloned().collect();
        if events.is_empty() {
            return Err(StageError::data("validate", format!("setting {s}: no {n}-fold events detected")));
        }
        if events.len() < cfg.validation_events {
            warn!("setting {s}: only {} detected events for validation", events.len());
        }
        let wk = validation::wk_counter(&unitary, &exp.input, &events).data_err("validate")?;
        let ck = validation::ck_counter(&unitary, &exp.input, &events).data_err("validate")?;
        settings.push(SettingRun {
            index: s,
            powers,
            unitary,
            samples,
            wk,
            ck,
        });
    }
    let summaries: Vec<SettingSummary> = settings
        .iter()
        .map(|r| SettingSummary {
            index: r.index,
            trials: r.samples.len(),
            detected: r.samples.iter().filter(|x| x.kept).count(),
            validation_events: r.wk.len(),
            wk_final: r.wk.final_value(),
            wk_rejects_uniform: r.wk.rejects_null(),
            ck_final: r.ck.final_value(),
            ck_rejects_distinguishable: r.ck.rejects_null(),
            ck_skipped: r.ck.skipped,
        })
        .collect();
    let gate = summaries.iter().all(|s| s.wk_rejects_uniform && s.ck_rejects_distinguishable);
    let (mut vn, mut hashed, mut report) = (None, None, None);
    if gate {
        let detected: Vec<SampleRecord> = settings.iter().flat_map(|r| r.samples.iter().filter(|x| x.kept).cloned()).collect();
        let out = randomness::pipeline(&detected, exp.m, cfg.block_size, cfg.p_threshold).data_err("extract")?;
        report = Some(out.report);
        vn = Some(out.vn);
        hashed = Some(out.hashed);
    } else {
        warn!("validation gate closed: no random bits emitted");
    }
    Ok(PipelineRun {
        settings,
        report: PipelineReport {
            seed: cfg.seed,
            photons: n,
            modes: exp.m,
            input_modes: exp.input.modes().to_vec(),
            sampler: cfg.sampler,
            settings: summaries,
            bits_emitted: gate,
            randomness: report,
        },
        vn,
        hashed,
    })
}

// ---------------------------------------------------------------------------
// output directories and manifests

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
    pub timings: Vec<StageTiming>,
    pub versions: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Output directory that deletes what it wrote unless the run is committed.
pub struct OutputDir {
    root: PathBuf,
    created_root: bool,
    written: Vec<PathBuf>,
    timings: Vec<StageTiming>,
    committed: bool,
}

impl OutputDir {
    pub fn create(root: &Path) -> CmdResult<Self> {
        let created_root = !root.exists();
        fs::create_dir_all(root).map_err(|e| StageError::config("output", format!("{}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            created_root,
            written: Vec::new(),
            timings: Vec::new(),
            committed: false,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_with<F>(&mut self, name: &str, f: F) -> CmdResult<PathBuf>
    where
        F: FnOnce(&mut BufWriter<fs::File>) -> crate::Result<()>,
    {
        let path = self.root.join(name);
        self.written.push(path.clone());
        let file = fs::File::create(&path).data_err("output")?;
        let mut w = BufWriter::new(file);
        f(&mut w).data_err("output")?;
        w.flush().data_err("output")?;
        Ok(path)
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CmdResult<PathBuf> {
        self.write_with(name, |w| Ok(w.write_all(bytes)?))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CmdResult<PathBuf> {
        let text = serde_json::to_string_pretty(value).data_err("output")?;
        self.write_bytes(name, format!("{text}\n").as_bytes())
    }

    pub fn write_unitary(&mut self, name: &str, u: &UnitaryMatrix) -> CmdResult<PathBuf> {
        let text = serde_json::to_string(&unitary::UnitaryFile::from(u)).data_err("output")?;
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_samples(&mut self, name: &str, records: &[SampleRecord]) -> CmdResult<PathBuf> {
        self.write_with(name, |w| sampling::write_samples(w, records))
    }

    pub fn write_trace(&mut self, name: &str, trace: &ValidationTrace) -> CmdResult<PathBuf> {
        self.write_with(name, |w| trace.write_csv(w))
    }

    pub fn write_bits(&mut self, name: &str, bits: &BitStream, h_min: Option<f64>, block_size: Option<usize>) -> CmdResult<PathBuf> {
        let path = self.root.join(name);
        self.written.push(path.clone());
        self.written.push(randomness::sidecar_path(&path));
        bits.save(&path, h_min, block_size).data_err("output")?;
        Ok(path)
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        out
    }

    /// Hashes every file under the root into the manifest and keeps the outputs.
    pub fn finish<C: Serialize>(mut self, command: &str, seed: Option<u64>, config: &C) -> CmdResult<RunManifest> {
        let mut files = Vec::new();
        collect_files(&self.root, &mut files).data_err("output")?;
        files.sort();
        let mut artifacts = Vec::new();
        for f in files {
            let rel = f.strip_prefix(&self.root).expect("under root").to_string_lossy().replace('\\', "/");
            if rel == MANIFEST_FILE {
                continue;
            }
            let bytes = fs::read(&f).data_err("output")?;
            artifacts.push(Artifact {
                path: rel,
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            });
        }
        let mut versions = BTreeMap::new();
        versions.insert("boson-core".to_string(), env!("CARGO_PKG_VERSION").to_string());
        let manifest = RunManifest {
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config).data_err("output")?,
            artifacts,
            timings: std::mem::take(&mut self.timings),
            versions,
        };
        self.write_json(MANIFEST_FILE, &manifest)?;
        self.committed = true;
        Ok(manifest)
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_root {
            let _ = fs::remove_dir(&self.root);
        }
    }
}

// ---------------------------------------------------------------------------
// commands

/// Seed-derived Haar unitary matching power setting 0 of a Haar pipeline.
pub fn cmd_haar(out: &Path, modes: usize, seed: u64) -> CmdResult<()> {
    if modes == 0 {
        return Err(StageError::config("haar", "modes must be positive"));
    }
    let mut dir = OutputDir::create(out)?;
    let s = rng::indexed_seed(rng::substream_seed(seed, "device"), "setting", 0);
    let u = dir.time("haar", || haar_unitary(modes, s)).data_err("haar")?;
    dir.write_unitary("unitary.json", &u)?;
    dir.finish("haar", Some(seed), &serde_json::json!({ "modes": modes, "seed": seed }))?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct EvolveArgs {
    pub device_config: Option<PathBuf>,
    pub powers: Option<PathBuf>,
    pub active_heaters: usize,
    pub p_max_mw: f64,
    pub seed: u64,
}

pub fn cmd_evolve(out: &Path, args: &EvolveArgs) -> CmdResult<()> {
    let cfg = match &args.device_config {
        Some(p) => DeviceConfig::load(p).config_err("device")?,
        None => DeviceConfig::bundled(),
    };
    let device = DeviceModel::from_config(&cfg).config_err("device")?;
    let p = match &args.powers {
        Some(path) => {
            let text = fs::read_to_string(path).data_err("evolve")?;
            serde_json::from_str::<Vec<f64>>(&text).data_err("evolve")?
        }
        None => {
            let seed = rng::indexed_seed(rng::substream_seed(args.seed, "powers"), "setting", 0);
            device.random_power_vector(args.active_heaters, args.p_max_mw, seed).config_err("evolve")?
        }
    };
    let mut dir = OutputDir::create(out)?;
    let u = dir.time("evolve", || device.evolve(&p)).data_err("evolve")?;
    dir.write_unitary("unitary.json", &u)?;
    dir.write_json("powers.json", &p)?;
    dir.finish("evolve", Some(args.seed), args)?;
    Ok(())
}

fn load_unitary(path: &Path, stage: &str) -> CmdResult<UnitaryMatrix> {
    let loaded = unitary::load_unitary(path, false).map_err(|e| StageError::data(stage, format!("{}: {e}", path.display())))?;
    info!("loaded {} (unitarity defect {:.2e})", path.display(), loaded.defect);
    Ok(loaded.unitary)
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleArgs {
    pub unitary: PathBuf,
    pub inputs: Vec<usize>,
    pub count: u64,
    pub sampler: SamplerChoice,
    pub indistinguishability: f64,
    pub seed: u64,
}

pub fn cmd_sample(out: &Path, args: &SampleArgs) -> CmdResult<()> {
    let u = load_unitary(&args.unitary, "sample")?;
    let input = InputConfig::new(args.inputs.clone(), u.dim()).config_err("sample")?;
    let sampler = match args.sampler {
        SamplerChoice::Bs => Sampler::bs(&u, &input),
        SamplerChoice::Distinguishable => Sampler::distinguishable(&u, &input),
        SamplerChoice::Uniform => Sampler::uniform(u.dim(), input.photon_count()),
        SamplerChoice::Mixture => Sampler::mixture(&u, &input, args.indistinguishability),
    }
    .config_err("sample")?;
    let mut dir = OutputDir::create(out)?;
    let seed = rng::substream_seed(args.seed, "sampler");
    let records = dir.time("sample", || sampler.sample(0..args.count, seed));
    dir.write_samples("samples.jsonl", &records)?;
    dir.finish("sample", Some(args.seed), args)?;
    Ok(())
}

fn read_samples(path: &Path, m: usize, stage: &str) -> CmdResult<Vec<SampleRecord>> {
    let f = fs::File::open(path).map_err(|e| StageError::data(stage, format!("{}: {e}", path.display())))?;
    sampling::read_samples(BufReader::new(f), m).map_err(|e| StageError::data(stage, format!("{}: {e}", path.display())))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub events: usize,
    pub wk_events: usize,
    pub wk_final: i64,
    pub wk_rejects_uniform: bool,
    pub ck_final: i64,
    pub ck_skipped: usize,
    pub ck_rejects_distinguishable: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidateArgs {
    pub unitary: PathBuf,
    pub inputs: Vec<usize>,
    pub samples: PathBuf,
}

/// Both counters; collision events are dropped from W_k only.
pub fn cmd_validate(out: &Path, args: &ValidateArgs) -> CmdResult<()> {
    let u = load_unitary(&args.unitary, "validate")?;
    let input = InputConfig::new(args.inputs.clone(), u.dim()).config_err("validate")?;
    let records = read_samples(&args.samples, u.dim(), "validate")?;
    let mut dir = OutputDir::create(out)?;
    let traces = dir.time("validate", || {
        let mut cf = records.clone();
        sampling::post_select_collision_free(&mut cf);
        let wk = validation::wk_counter(&u, &input, &cf)?;
        let ck = validation::ck_counter(&u, &input, &records)?;
        Ok::<_, Error>((wk, ck))
    });
    let (wk, ck) = traces.data_err("validate")?;
    let summary = ValidationSummary {
        events: records.iter().filter(|r| r.kept).count(),
        wk_events: wk.len(),
        wk_final: wk.final_value(),
        wk_rejects_uniform: wk.rejects_null(),
        ck_final: ck.final_value(),
        ck_skipped: ck.skipped,
        ck_rejects_distinguishable: ck.rejects_null(),
    };
    dir.write_trace("wk.csv", &wk)?;
    dir.write_trace("ck.csv", &ck)?;
    dir.write_json("validation.json", &summary)?;
    dir.finish("validate", None, args)?;
    if !(summary.wk_rejects_uniform && summary.ck_rejects_distinguishable) {
        return Err(StageError::failed(
            "validate",
            format!("null not rejected (W_k final {}, C_k final {})", summary.wk_final, summary.ck_final),
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub enum CountSource {
    File { counts: PathBuf, truth: Option<PathBuf> },
    Simulate { unitary: PathBuf, inputs: Vec<usize>, outputs: Vec<usize>, shots: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub matrix: ReconstructedMatrix,
    pub unresolved: Vec<(usize, usize)>,
    pub gauge_distance: Option<f64>,
}

pub fn cmd_reconstruct(out: &Path, source: &CountSource) -> CmdResult<()> {
    let mut dir = OutputDir::create(out)?;
    let (counts, truth) = match source {
        CountSource::File { counts, truth } => {
            let table = CountTable::load(counts).map_err(|e| StageError::data("reconstruct", format!("{}: {e}", counts.display())))?;
            let truth = match truth {
                Some(p) => Some(load_unitary(p, "reconstruct")?),
                None => None,
            };
            (table, truth)
        }
        CountSource::Simulate {
            unitary,
            inputs,
            outputs,
            shots,
            seed,
        } => {
            let u = load_unitary(unitary, "reconstruct")?;
            let s = rng::substream_seed(*seed, "sampler");
            let table = reconstruction::simulate_counts(&u, inputs, outputs, *shots, s).config_err("reconstruct")?;
            dir.write_bytes("counts.json", table.to_json().as_bytes())?;
            (table, Some(u))
        }
    };
    let rec = dir.time("reconstruct", || reconstruction::reconstruct(&counts)).data_err("reconstruct")?;
    let gauge_distance = match &truth {
        Some(u) => {
            if let Some(&j) = counts.outputs.iter().chain(&counts.inputs).find(|&&j| j >= u.dim()) {
                return Err(StageError::data("reconstruct", format!("mode {j} outside the truth unitary")));
            }
            let sub = u.matrix().select(&counts.outputs, &counts.inputs);
            Some(reconstruction::gauge_distance(&rec, &sub).data_err("reconstruct")?)
        }
        None => None,
    };
    let report = ReconstructionReport {
        unresolved: rec.unresolved(),
        matrix: rec,
        gauge_distance,
    };
    dir.write_json("reconstruction.json", &report)?;
    let seed = match source {
        CountSource::Simulate { seed, .. } => Some(*seed),
        CountSource::File { .. } => None,
    };
    dir.finish("reconstruct", seed, source)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractSummary {
    pub trials: usize,
    pub modes: usize,
    pub raw_bits: usize,
    pub vn_bits: usize,
    pub h_min: f64,
    pub block_size: usize,
    pub hash_block_length: usize,
    pub hashed_bits: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtractArgs {
    pub samples: PathBuf,
    pub modes: usize,
    pub block_size: usize,
}

pub fn cmd_extract(out: &Path, args: &ExtractArgs) -> CmdResult<()> {
    if !(1..=randomness::MAX_BLOCK_SIZE).contains(&args.block_size) {
        return Err(StageError::config("extract", format!("block size must be in 1..={}", randomness::MAX_BLOCK_SIZE)));
    }
    let records: Vec<SampleRecord> = read_samples(&args.samples, args.modes, "extract")?.into_iter().filter(|r| r.kept).collect();
    let mut dir = OutputDir::create(out)?;
    let result = dir.time("extract", || {
        let matrix = randomness::encode_occupancy(&records, args.modes);
        let vn = randomness::von_neumann_columns(&matrix);
        let h_min = randomness::min_entropy(&vn, args.block_size)?;
        let l = randomness::hash_block_length(h_min)?;
        let hashed = randomness::condition_hash(&vn, h_min)?;
        Ok::<_, Error>((vn, h_min, l, hashed))
    });
    let (vn, h_min, l, hashed) = result.data_err("extract")?;
    let summary = ExtractSummary {
        trials: records.len(),
        modes: args.modes,
        raw_bits: records.len() * args.modes,
        vn_bits: vn.len(),
        h_min,
        block_size: args.block_size,
        hash_block_length: l,
        hashed_bits: hashed.len(),
    };
    dir.write_bits("vn.bin", &BitStream::new(vn, Stage::Vn), Some(h_min), Some(args.block_size))?;
    dir.write_bits("bits.bin", &BitStream::new(hashed, Stage::Hashed), Some(h_min), Some(args.block_size))?;
    dir.write_json("extract.json", &summary)?;
    dir.finish("extract", None, args)?;
    Ok(())
}

pub fn cmd_nist(out: &Path, bits: &Path, p_threshold: f64) -> CmdResult<()> {
    if !(p_threshold > 0.0 && p_threshold < 1.0) {
        return Err(StageError::config("nist", "p threshold must lie in (0, 1)"));
    }
    let (stream, _) = BitStream::load(bits).map_err(|e| StageError::data("nist", format!("{}: {e}", bits.display())))?;
    let mut dir = OutputDir::create(out)?;
    let tests = dir.time("nist", || randomness::nist_suite(&stream.bits, p_threshold));
    dir.write_json("nist.json", &tests)?;
    dir.finish("nist", None, &serde_json::json!({ "bits": bits, "p_threshold": p_threshold }))?;
    check_nist(&tests)
}

fn check_nist(tests: &[TestResult]) -> CmdResult<()> {
    let failed: Vec<&str> = tests.iter().filter(|t| !t.skipped && !t.pass).map(|t| t.test.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(StageError::failed("nist", format!("failed: {}", failed.join(", "))))
    }
}

/// Writes every pipeline artifact; exits with a failure when the gate stays
/// closed or a computed NIST test fails. Outputs are kept in both cases.
pub fn cmd_pipeline(out: &Path, config: ExperimentConfig) -> CmdResult<PipelineReport> {
    let exp = Experiment::new(config)?;
    let mut dir = OutputDir::create(out)?;
    let run = dir.time("pipeline", || run_pipeline(&exp))?;
    dir.write_json("config.json", &exp.config)?;
    for s in &run.settings {
        let i = s.index;
        dir.write_unitary(&format!("unitary_{i}.json"), &s.unitary)?;
        if let Some(p) = &s.powers {
            dir.write_json(&format!("powers_{i}.json"), p)?;
        }
        dir.write_samples(&format!("samples_{i}.jsonl"), &s.samples)?;
        dir.write_trace(&format!("wk_{i}.csv"), &s.wk)?;
        dir.write_trace(&format!("ck_{i}.csv"), &s.ck)?;
    }
    if let (Some(vn), Some(hashed), Some(r)) = (&run.vn, &run.hashed, &run.report.randomness) {
        dir.write_bits("vn.bin", vn, Some(r.h_min), Some(r.block_size))?;
        dir.write_bits("bits.bin", hashed, Some(r.h_min), Some(r.block_size))?;
        dir.write_json("nist.json", &r.tests)?;
    }
    dir.write_json("report.json", &run.report)?;
    dir.finish("pipeline", Some(exp.config.seed), &exp.config)?;
    if !run.report.bits_emitted {
        return Err(StageError::failed("validation", "a validation counter did not reject its null; no bits emitted"));
    }
    if let Some(r) = &run.report.randomness {
        check_nist(&r.tests)?;
    }
    Ok(run.report)
}

// ---------------------------------------------------------------------------
// figure data

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FigureKind {
    Haar,
    Device,
    Validation,
    Randomness,
}

impl std::str::FromStr for FigureKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "haar" => Ok(Self::Haar),
            "device" => Ok(Self::Device),
            "validation" => Ok(Self::Validation),
            "randomness" => Ok(Self::Randomness),
            _ => Err(format!("unknown figure '{s}'")),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FigureArgs {
    pub seed: u64,
    /// Haar matrices for reference distributions.
    pub matrices: usize,
    /// Power vectors per heater count.
    pub vectors: usize,
    pub heaters: Vec<usize>,
    /// Events per validation trace.
    pub events: usize,
    pub device_config: Option<PathBuf>,
    /// Pipeline config for the randomness figure.
    pub experiment: Option<ExperimentConfig>,
}

impl FigureArgs {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            matrices: 100,
            vectors: 50,
            heaters: DEFAULT_HEATER_SWEEP.to_vec(),
            events: 10_000,
            device_config: None,
            experiment: None,
        }
    }

    fn device(&self) -> CmdResult<DeviceModel> {
        let cfg = match &self.device_config {
            Some(p) => DeviceConfig::load(p).config_err("device")?,
            None => DeviceConfig::bundled(),
        };
        DeviceModel::from_config(&cfg).config_err("device")
    }
}

fn histogram_csv<W: Write>(w: &mut W, h: &Histogram, density: Option<&dyn Fn(f64) -> f64>) -> crate::Result<()> {
    let bins = h.counts.len();
    let width = (h.hi - h.lo) / bins as f64;
    let total: u64 = h.counts.iter().sum::<u64>() + h.overflow;
    match density {
        Some(_) => writeln!(w, "bin_lo,bin_hi,count,density,reference")?,
        None => writeln!(w, "bin_lo,bin_hi,count,density")?,
    }
    for (b, &c) in h.counts.iter().enumerate() {
        let lo = h.lo + b as f64 * width;
        let hi = lo + width;
        let d = c as f64 / (total.max(1) as f64 * width);
        match density {
            Some(f) => writeln!(w, "{lo:.6e},{hi:.6e},{c},{d:.6e},{:.6e}", f(0.5 * (lo + hi)))?,
            None => writeln!(w, "{lo:.6e},{hi:.6e},{c},{d:.6e}")?,
        }
    }
    Ok(())
}

/// Mean-similarity trend of the device against the Haar band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceTrendPoint {
    pub active_heaters: usize,
    pub column: SimilarityReport,
    pub two_photon: SimilarityReport,
    pub moduli_ks_p_value: f64,
}

/// Column and two-photon similarity reports for `vectors` random power
/// settings at each heater count, restricted to the measured modes.
pub fn device_trend(device: &DeviceModel, heaters: &[usize], vectors: usize, seed: u64, matrices: usize) -> crate::Result<Vec<DeviceTrendPoint>> {
    let measured = device.detector.measured().to_vec();
    let m = device.mode_count();
    if device.input_ports.len() < 2 {
        return Err(Error::InvalidInput("device trend needs two input ports".into()));
    }
    let (a, b) = (device.input_ports[0], device.input_ports[1]);
    let haar_seed = rng::substream_seed(seed, "device");
    let column_band = validation::haar_reference(BenchmarkMode::ColumnSim, m, matrices, haar_seed, &measured)?;
    let pair_band = validation::haar_reference(BenchmarkMode::TwoPhotonSim, m, matrices, haar_seed, &measured)?;
    let powers_seed = rng::substream_seed(seed, "powers");
    heaters
        .iter()
        .map(|&h| {
            let unitaries: Vec<UnitaryMatrix> = (0..vectors as u64)
                .into_par_iter()
                .map(|k| {
                    let p = device.random_power_vector(h, DEFAULT_P_MAX_MW, rng::indexed_seed(powers_seed, &format!("heaters-{h}"), k))?;
                    device.evolve(&p)
                })
                .collect::<crate::Result<_>>()?;
            let columns: Vec<Vec<f64>> = unitaries.iter().map(|u| validation::column_distribution(u, a, &measured)).collect::<crate::Result<_>>()?;
            let pairs: Vec<Vec<f64>> = unitaries
                .par_iter()
                .map(|u| validation::two_photon_distribution(u, (a, b), &measured))
                .collect::<crate::Result<_>>()?;
            let moduli: Vec<f64> = unitaries.iter().flat_map(|u| measured.iter().map(move |&j| u.amplitude(j, a).norm_sqr())).collect();
            let ks = stats::ks_test(&moduli, |x| stats::haar_moduli_cdf(m, x));
            Ok(DeviceTrendPoint {
                active_heaters: h,
                column: SimilarityReport::new(validation::pairwise_similarities(&columns)?, Some(column_band)),
                two_photon: SimilarityReport::new(validation::pairwise_similarities(&pairs)?, Some(pair_band)),
                moduli_ks_p_value: ks.p_value,
            })
        })
        .collect()
}

pub fn cmd_figure(out: &Path, kind: FigureKind, args: &FigureArgs) -> CmdResult<()> {
    let mut dir = OutputDir::create(out)?;
    match kind {
        FigureKind::Haar => figure_haar(&mut dir, args)?,
        FigureKind::Device => figure_device(&mut dir, args)?,
        FigureKind::Validation => figure_validation(&mut dir, args)?,
        FigureKind::Randomness => figure_randomness(&mut dir, args)?,
    }
    dir.finish("figure", Some(args.seed), args)?;
    Ok(())
}

fn figure_haar(dir: &mut OutputDir, args: &FigureArgs) -> CmdResult<()> {
    let device = args.device()?;
    let measured = device.detector.measured().to_vec();
    let m = device.mode_count();
    let seed = rng::substream_seed(args.seed, "device");
    let mut reports = BTreeMap::new();
    for mode in [BenchmarkMode::Moduli, BenchmarkMode::ColumnSim, BenchmarkMode::TwoPhotonSim] {
        let r = dir
            .time("haar", || validation::haar_benchmark(mode, m, args.matrices, seed, &measured))
            .data_err("figure")?;
        match &r {
            BenchmarkReport::Moduli(x) => {
                let pdf = |v: f64| stats::haar_moduli_pdf(m, v);
                dir.write_with("haar_moduli.csv", |w| histogram_csv(w, &x.histogram, Some(&pdf)))?;
                reports.insert("moduli", serde_json::to_value(x).data_err("figure")?);
            }
            BenchmarkReport::ColumnSim(x) | BenchmarkReport::TwoPhotonSim(x) => {
                let name = if mode == BenchmarkMode::ColumnSim { "column_sim" } else { "two_photon_sim" };
                let h = Histogram::new(&x.similarities, 50, 0.0, 1.0);
                dir.write_with(&format!("haar_{name}.csv"), |w| histogram_csv(w, &h, None))?;
                reports.insert(name, serde_json::json!({ "mean": x.mean, "sd": x.sd, "pairs": x.similarities.len() }));
            }
        }
    }
    dir.write_json("haar_summary.json", &reports)?;
    Ok(())
}

fn figure_device(dir: &mut OutputDir, args: &FigureArgs) -> CmdResult<()> {
    let device = args.device()?;
    let points = dir
        .time("device", || device_trend(&device, &args.heaters, args.vectors, args.seed, args.matrices))
        .data_err("figure")?;
    dir.write_with("device_trend.csv", |w| {
        writeln!(
            w,
            "active_heaters,column_mean,column_sd,two_photon_mean,two_photon_sd,haar_column_mean,haar_column_sd,haar_two_photon_mean,haar_two_photon_sd,moduli_ks_p"
        )?;
        for p in &points {
            let c = p.column.reference.expect("band");
            let t = p.two_photon.reference.expect("band");
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                p.active_heaters, p.column.mean, p.column.sd, p.two_photon.mean, p.two_photon.sd, c.mean, c.sd, t.mean, t.sd, p.moduli_ks_p_value
            )?;
        }
        Ok(())
    })?;
    dir.write_with("device_similarities.csv", |w| {
        writeln!(w, "active_heaters,kind,similarity")?;
        for p in &points {
            for s in &p.column.similarities {
                writeln!(w, "{},column,{s:.6}", p.active_heaters)?;
            }
            for s in &p.two_photon.similarities {
                writeln!(w, "{},two_photon,{s:.6}", p.active_heaters)?;
            }
        }
        Ok(())
    })?;
    Ok(())
}

fn figure_validation(dir: &mut OutputDir, args: &FigureArgs) -> CmdResult<()> {
    let seed = rng::substream_seed(args.seed, "sampler");
    let u_seed = rng::indexed_seed(rng::substream_seed(args.seed, "device"), "setting", 0);
    let u = haar_unitary(16, u_seed).data_err("figure")?;
    for (n, events) in [(3usize, args.events as u64), (4, (args.events / 10).max(1) as u64)] {
        let input = InputConfig::new((0..n).collect(), 16).config_err("figure")?;
        let run = || -> crate::Result<Vec<(String, ValidationTrace)>> {
            let mut bs = sampling::sample_bs(&u, &input, events, rng::indexed_seed(seed, "bs", n as u64))?;
            let uni = sampling::sample_uniform(16, n, events, rng::indexed_seed(seed, "uniform", n as u64))?;
            let dist = sampling::sample_distinguishable(&u, &input, events, rng::indexed_seed(seed, "dist", n as u64))?;
            let ck_bs = validation::ck_counter(&u, &input, &bs)?;
            let ck_dist = validation::ck_counter(&u, &input, &dist)?;
            sampling::post_select_collision_free(&mut bs);
            Ok(vec![
                (format!("wk_bs_n{n}.csv"), validation::wk_counter(&u, &input, &bs)?),
                (format!("wk_uniform_n{n}.csv"), validation::wk_counter(&u, &input, &uni)?),
                (format!("ck_bs_n{n}.csv"), ck_bs),
                (format!("ck_distinguishable_n{n}.csv"), ck_dist),
            ])
        };
        let traces = dir.time("validation", run).data_err("figure")?;
        for (name, t) in &traces {
            dir.write_trace(name, t)?;
        }
    }
    Ok(())
}

fn figure_randomness(dir: &mut OutputDir, args: &FigureArgs) -> CmdResult<()> {
    let mut cfg = args.experiment.clone().unwrap_or_else(ExperimentConfig::demo);
    cfg.seed = args.seed;
    let exp = Experiment::new(cfg)?;
    let run = dir.time("pipeline", || run_pipeline(&exp))?;
    let vn = run.vn.as_ref().ok_or_else(|| StageError::failed("validation", "validation gate closed; no bits to report"))?;
    let r = run.report.randomness.as_ref().expect("gate open");
    dir.write_json("randomness_report.json", r)?;
    dir.write_json("nist.json", &r.tests)?;
    dir.write_with("min_entropy.csv", |w| {
        writeln!(w, "block_size,h_min")?;
        for bs in 1..=randomness::MAX_BLOCK_SIZE {
            if vn.len() / bs == 0 {
                break;
            }
            writeln!(w, "{bs},{:.6}", randomness::min_entropy(&vn.bits, bs)?)?;
        }
        Ok(())
    })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::SamplerTag;

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::demo();
        c.draws = 3000;
        c.validation_events = 1000;
        c
    }

    #[test]
    fn demo_config_is_valid() {
        let c = ExperimentConfig::demo();
        c.validate().unwrap();
        assert_eq!(c.photons, 3);
        assert_eq!(c.source, Source::Haar { modes: 16 });
    }

    #[test]
    fn config_rejects_bad_values() {
        let mut c = small_config();
        c.photons = 5;
        assert_eq!(c.validate().unwrap_err().kind, FailureKind::Config);
        let mut c = small_config();
        c.p_threshold = 1.5;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.input_modes = Some(vec![0, 1]);
        assert!(Experiment::new(c).is_err());
        let bad: std::result::Result<ExperimentConfig, _> = serde_json::from_str(r#"{"seed":1,"source":{"kind":"haar","modes":4},"photons":2,"draws":1,"typo":3}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn detection_keeps_only_fold_events() {
        let det = DetectorModel::all_modes(4);
        let noise = NoiseModel::default();
        let recs = vec![
            SampleRecord {
                trial: 0,
                output: FockState::from_modes(4, &[0, 2]),
                tag: SamplerTag::Bs,
                kept: true,
            },
            SampleRecord {
                trial: 1,
                output: FockState::from_modes(4, &[1, 1]),
                tag: SamplerTag::Bs,
                kept: true,
            },
        ];
        let out = detect(recs, &det, &noise, 2, 9);
        assert!(out[0].kept);
        assert_eq!(out[0].output.modes(), vec![0, 2]);
        assert!(!out[1].kept);
    }

    #[test]
    fn pipeline_small_run_validates() {
        let exp = Experiment::new(small_config()).unwrap();
        let run = run_pipeline(&exp).unwrap();
        assert_eq!(run.settings.len(), 1);
        let s = &run.report.settings[0];
        assert_eq!(s.trials, 3000);
        assert!(s.wk_rejects_uniform && s.ck_rejects_distinguishable, "{s:?}");
        assert!(run.report.bits_emitted);
        let r = run.report.randomness.unwrap();
        assert_eq!(r.hashed_bits % 256, 0);
        assert!(r.hashed_bits > 0);
    }

    #[test]
    fn uniform_sampler_closes_the_gate() {
        let mut c = small_config();
        c.sampler = SamplerChoice::Uniform;
        let run = run_pipeline(&Experiment::new(c).unwrap()).unwrap();
        assert!(!run.report.bits_emitted);
        assert!(run.vn.is_none() && run.hashed.is_none());
    }

    #[test]
    fn output_dir_cleans_up_unless_finished() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("run");
        {
            let mut d = OutputDir::create(&root).unwrap();
            d.write_bytes("a.txt", b"x").unwrap();
        }
        assert!(!root.exists());
        let mut d = OutputDir::create(&root).unwrap();
        d.write_bytes("a.txt", b"x").unwrap();
        let m = d.finish("test", Some(1), &serde_json::json!({})).unwrap();
        assert_eq!(m.artifacts.len(), 1);
        assert_eq!(m.artifacts[0].sha256, sha256_hex(b"x"));
        assert!(root.join(MANIFEST_FILE).exists());
    }

    #[test]
    fn stage_errors_map_to_exit_codes() {
        assert_eq!(StageError::config("x", "").exit_code(), EXIT_CONFIG);
        assert_eq!(StageError::data("x", "").exit_code(), EXIT_DATA);
        assert_eq!(StageError::failed("x", "").exit_code(), EXIT_FAILED);
    }
}
