//! Phenomenological model of the continuously-coupled 3D waveguide array.
//!
//! The cross-section is an `n_rows x n_cols` triangular lattice. Along the
//! propagation axis the chip is split into `sections`, each with its own
//! seeded random transverse displacement of every waveguide; the evolution is
//! integrated over `segments` z-slices, each evaluated at its midpoint. Heaters
//! add a power-proportional detuning to the sites under them, weighted by a
//! Gaussian kernel in transverse distance.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sampling::FockState;
use crate::unitary::{propagate_real_symmetric, ComplexMatrix, Provenance, UnitaryMatrix};

const BUNDLED_CONFIG: &str = include_str!("../configs/default_device.json");

/// Upper end of the uniform heater power draw, in mW.
pub const DEFAULT_P_MAX_MW: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    pub pitch_um: f64,
    pub length_mm: f64,
    /// z-slices used to integrate the evolution (K).
    pub segments: usize,
    /// Independently displaced sections along z.
    pub sections: usize,
    /// Half-width of the uniform transverse displacement; defaults to 0.1 pitch.
    #[serde(default)]
    pub modulation_um: Option<f64>,
}

/// Evanescent coupling c(d) = c0 exp(-(d - pitch)/decay) for d <= cutoff.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingLaw {
    pub c0_per_mm: f64,
    pub decay_um: f64,
    /// Defaults to 1.5 pitch.
    #[serde(default)]
    pub cutoff_um: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetuningConfig {
    /// Half-width of the seeded uniform detunings beta_i (1/mm).
    pub spread_per_mm: f64,
    /// Explicit detunings, overriding the seeded draw.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaterConfig {
    pub count: usize,
    /// Heater centers are laid out on a `grid_rows x grid_cols` grid over
    /// the cross-section unless `centers_um` is given.
    pub grid_rows: usize,
    pub grid_cols: usize,
    #[serde(default)]
    pub centers_um: Option<Vec<[f64; 2]>>,
    /// Gaussian kernel width; defaults to one pitch.
    #[serde(default)]
    pub width_um: Option<f64>,
    /// Detuning per unit power at the heater center, rad / (mW mm).
    pub peak_rad_per_mw_mm: f64,
    /// Usable heaters, in the order they are switched on.
    pub activation_order: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorAssignment {
    pub mode: usize,
    pub detector: usize,
    pub bin: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Efficiency {
    Uniform(f64),
    PerMode(Vec<f64>),
}

/// Source and detection imperfections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Probability that a trial is fully indistinguishable (maps to V_HOM).
    pub indistinguishability: f64,
    /// Multi-photon contamination, only used when extra-photon injection is on.
    pub g2: f64,
    pub efficiency: Efficiency,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            indistinguishability: 1.0,
            g2: 0.0,
            efficiency: Efficiency::Uniform(1.0),
        }
    }
}

impl NoiseModel {
    pub fn validate(&self, m: usize) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.indistinguishability) {
            return Err(Error::Config(format!(
                "indistinguishability {} outside [0, 1]",
                self.indistinguishability
            )));
        }
        if !(0.0..1.0).contains(&self.g2) {
            return Err(Error::Config(format!("g2 {} outside [0, 1)", self.g2)));
        }
        match &self.efficiency {
            Efficiency::Uniform(e) if !unit(*e) => {
                Err(Error::Config(format!("efficiency {e} outside [0, 1]")))
            }
            Efficiency::PerMode(v) if v.len() != m => Err(Error::Config(format!(
                "efficiency list has {} entries for {m} modes",
                v.len()
            ))),
            Efficiency::PerMode(v) if !v.iter().all(|&e| unit(e)) => {
                Err(Error::Config("per-mode efficiency outside [0, 1]".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn efficiency(&self, mode: usize) -> f64 {
        match &self.efficiency {
            Efficiency::Uniform(e) => *e,
            Efficiency::PerMode(v) => v[mode],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub coupling: CouplingLaw,
    pub detuning: DetuningConfig,
    pub heaters: HeaterConfig,
    pub input_ports: Vec<usize>,
    pub unmeasured_modes: Vec<usize>,
    /// Explicit mode -> (detector, time-bin) map; by default consecutive
    /// measured modes are paired onto one detector.
    #[serde(default)]
    pub detector_map: Option<Vec<DetectorAssignment>>,
    pub noise: NoiseModel,
}

impl DeviceConfig {
    /// The bundled 128-mode configuration: 8x16 lattice, 24 heaters,
    /// 20 input ports, 108 measured modes on 54 detectors.
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_CONFIG).expect("bundled device config is valid JSON")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read device config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid device config {}: {e}", path.display())))
    }
}

#[derive(Clone, Debug)]
pub struct LatticeGeometry {
    pub n_rows: usize,
    pub n_cols: usize,
    pub pitch_um: f64,
    pub length_mm: f64,
    pub segments: usize,
    pub modulation_um: f64,
    pub seed: u64,
    /// Undisplaced transverse site positions (um).
    pub base_positions: Vec<[f64; 2]>,
    /// Displaced positions for each section along z.
    pub section_positions: Vec<Vec<[f64; 2]>>,
}

impl LatticeGeometry {
    pub fn build(cfg: &GeometryConfig, seed: u64) -> Result<Self> {
        if cfg.n_rows == 0 || cfg.n_cols == 0 {
            return Err(Error::Config("lattice needs at least one row and column".into()));
        }
        if !(cfg.pitch_um > 0.0) || !(cfg.length_mm > 0.0) {
            return Err(Error::Config("pitch and chip length must be positive".into()));
        }
        if cfg.segments == 0 || cfg.sections == 0 {
            return Err(Error::Config("segments and sections must be >= 1".into()));
        }
        let pitch = cfg.pitch_um;
        let modulation = cfg.modulation_um.unwrap_or(0.1 * pitch);
        if !(modulation >= 0.0) || !modulation.is_finite() {
            return Err(Error::Config(format!("invalid modulation amplitude {modulation}")));
        }
        let row_height = pitch * 3f64.sqrt() / 2.0;
        let mut base = Vec::with_capacity(cfg.n_rows * cfg.n_cols);
        for r in 0..cfg.n_rows {
            let shift = if r % 2 == 1 { 0.5 * pitch } else { 0.0 };
            for c in 0..cfg.n_cols {
                base.push([c as f64 * pitch + shift, r as f64 * row_height]);
            }
        }
        let mut rng = rng::seeded(rng::substream_seed(seed, "geometry"));
        let section_positions = (0..cfg.sections)
            .map(|_| {
                base.iter()
                    .map(|&[x, y]| {
                        if modulation == 0.0 {
                            [x, y]
                        } else {
                            [
                                x + rng.random_range(-modulation..=modulation),
                                y + rng.random_range(-modulation..=modulation),
                            ]
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            n_rows: cfg.n_rows,
            n_cols: cfg.n_cols,
            pitch_um: pitch,
            length_mm: cfg.length_mm,
            segments: cfg.segments,
            modulation_um: modulation,
            seed,
            base_positions: base,
            section_positions,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.n_rows * self.n_cols
    }

    pub fn sections(&self) -> usize {
        self.section_positions.len()
    }

    /// Section sampled by the midpoint of z-slice `segment`.
    pub fn section_of(&self, segment: usize) -> usize {
        ((2 * segment + 1) * self.sections()) / (2 * self.segments)
    }

    pub fn positions(&self, segment: usize) -> &[[f64; 2]] {
        &self.section_positions[self.section_of(segment)]
    }

    pub fn segment_length_mm(&self) -> f64 {
        self.length_mm / self.segments as f64
    }
}

#[derive(Clone, Debug)]
pub struct HeaterBank {
    /// `influence[h][i]`: detuning on mode `i` per mW of heater `h`, 1/(mW mm).
    pub influence: Vec<Vec<f64>>,
    pub active: Vec<bool>,
    pub activation_order: Vec<usize>,
}

impl HeaterBank {
    fn build(cfg: &HeaterConfig, geometry: &LatticeGeometry) -> Result<Self> {
        let centers: Vec<[f64; 2]> = match &cfg.centers_um {
            Some(c) => {
                if c.len() != cfg.count {
                    return Err(Error::Config(format!(
                        "{} heater centers given for {} heaters",
                        c.len(),
                        cfg.count
                    )));
                }
                c.clone()
            }
            None => {
                if cfg.grid_rows * cfg.grid_cols != cfg.count {
                    return Err(Error::Config(format!(
                        "heater grid {}x{} does not hold {} heaters",
                        cfg.grid_rows, cfg.grid_cols, cfg.count
                    )));
                }
                let (xmax, ymax) = geometry
                    .base_positions
                    .iter()
                    .fold((0.0f64, 0.0f64), |(a, b), p| (a.max(p[0]), b.max(p[1])));
                let mut c = Vec::with_capacity(cfg.count);
                for r in 0..cfg.grid_rows {
                    for k in 0..cfg.grid_cols {
                        c.push([
                            (k as f64 + 0.5) * xmax / cfg.grid_cols as f64,
                            (r as f64 + 0.5) * ymax / cfg.grid_rows as f64,
                        ]);
                    }
                }
                c
            }
        };
        let width = cfg.width_um.unwrap_or(geometry.pitch_um);
        if !(width > 0.0) || !(cfg.peak_rad_per_mw_mm >= 0.0) || !cfg.peak_rad_per_mw_mm.is_finite() {
            return Err(Error::Config("heater width must be positive and peak non-negative".into()));
        }
        let influence = centers
            .iter()
            .map(|&[hx, hy]| {
                geometry
                    .base_positions
                    .iter()
                    .map(|&[x, y]| {
                        let d2 = (x - hx).powi(2) + (y - hy).powi(2);
                        cfg.peak_rad_per_mw_mm * (-d2 / (2.0 * width * width)).exp()
                    })
                    .collect()
            })
            .collect();
        let mut active = vec![false; cfg.count];
        for &h in &cfg.activation_order {
            if h >= cfg.count || active[h] {
                return Err(Error::Config(format!("invalid or repeated heater {h} in activation order")));
            }
            active[h] = true;
        }
        Ok(Self {
            influence,
            active,
            activation_order: cfg.activation_order.clone(),
        })
    }

    pub fn count(&self) -> usize {
        self.influence.len()
    }

    pub fn active_count(&self) -> usize {
        self.activation_order.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Click {
    pub detector: usize,
    pub bin: u8,
}

/// Which output modes are read out, and on which detector and time bin.
#[derive(Clone, Debug)]
pub struct DetectorModel {
    m: usize,
    measured: Vec<usize>,
    assignment: Vec<Option<Click>>,
}

impl DetectorModel {
    /// Pairs consecutive measured modes onto one detector (bins 0 and 1).
    pub fn paired(m: usize, measured: Vec<usize>) -> Result<Self> {
        let assignments: Vec<DetectorAssignment> = measured
            .iter()
            .enumerate()
            .map(|(k, &mode)| DetectorAssignment {
                mode,
                detector: k / 2,
                bin: (k % 2) as u8,
            })
            .collect();
        Self::from_assignments(m, &assignments)
    }

    /// Every mode measured.
    pub fn all_modes(m: usize) -> Self {
        Self::paired(m, (0..m).collect()).expect("full measurement is a valid detector model")
    }

    pub fn from_assignments(m: usize, assignments: &[DetectorAssignment]) -> Result<Self> {
        let mut assignment = vec![None; m];
        let mut load = std::collections::HashMap::<usize, Vec<u8>>::new();
        for a in assignments {
            if a.mode >= m {
                return Err(Error::Config(format!("detector map mode {} out of range", a.mode)));
            }
            if assignment[a.mode].is_some() {
                return Err(Error::Config(format!("mode {} mapped twice", a.mode)));
            }
            if a.bin > 1 {
                return Err(Error::Config(format!("time bin {} not in {{0, 1}}", a.bin)));
            }
            let bins = load.entry(a.detector).or_default();
            if bins.contains(&a.bin) || bins.len() >= 2 {
                return Err(Error::Config(format!(
                    "detector {} carries more than one mode per bin",
                    a.detector
                )));
            }
            bins.push(a.bin);
            assignment[a.mode] = Some(Click {
                detector: a.detector,
                bin: a.bin,
            });
        }
        let measured = (0..m).filter(|&j| assignment[j].is_some()).collect();
        Ok(Self {
            m,
            measured,
            assignment,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.m
    }

    pub fn measured(&self) -> &[usize] {
        &self.measured
    }

    pub fn is_measured(&self, mode: usize) -> bool {
        self.assignment.get(mode).is_some_and(|a| a.is_some())
    }

    pub fn click(&self, mode: usize) -> Option<Click> {
        self.assignment.get(mode).copied().flatten()
    }

    pub fn detector_count(&self) -> usize {
        self.assignment
            .iter()
            .flatten()
            .map(|c| c.detector)
            .collect::<std::collections::BTreeSet<_>>()
            .len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClickRecord {
    /// Modes that clicked, ascending.
    pub modes: Vec<usize>,
    pub clicks: Vec<Click>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Detection {
    Clicks(ClickRecord),
    Discard,
}

/// Threshold detection with losses and fold post-selection.
///
/// Photons in unmeasured modes are lost; each remaining photon survives with
/// the mode's efficiency. A mode with at least one surviving photon clicks
/// once. The event is discarded unless exactly `fold` modes click.
pub fn apply_detector_model<R: Rng + ?Sized>(
    detector: &DetectorModel,
    noise: &NoiseModel,
    output: &FockState,
    fold: usize,
    rng: &mut R,
) -> Detection {
    let mut modes = Vec::new();
    for (j, &t) in output.occupations().iter().enumerate() {
        if t == 0 || !detector.is_measured(j) {
            continue;
        }
        let eta = noise.efficiency(j);
        let survived = (0..t).filter(|_| eta >= 1.0 || rng.random::<f64>() < eta).count();
        if survived > 0 {
            modes.push(j);
        }
    }
    if modes.len() != fold {
        return Detection::Discard;
    }
    let clicks = modes.iter().map(|&j| detector.click(j).expect("measured mode")).collect();
    Detection::Clicks(ClickRecord { modes, clicks })
}

/// Immutable device: geometry, coupling law, heaters and read-out.
#[derive(Clone, Debug)]
pub struct DeviceModel {
    pub geometry: LatticeGeometry,
    pub heaters: HeaterBank,
    pub coupling: CouplingLaw,
    pub cutoff_um: f64,
    /// Base propagation-constant detunings beta_i (1/mm).
    pub detunings: Vec<f64>,
    pub input_ports: Vec<usize>,
    pub detector: DetectorModel,
    pub noise: NoiseModel,
    /// Coupled pairs (i, j, c_ij) for each section, i < j.
    couplings: Vec<Vec<(usize, usize, f64)>>,
}

impl DeviceModel {
    pub fn bundled() -> Self {
        Self::from_config(&DeviceConfig::bundled()).expect("bundled device config is consistent")
    }

    pub fn from_config(cfg: &DeviceConfig) -> Result<Self> {
        let geometry = LatticeGeometry::build(&cfg.geometry, cfg.seed)?;
        let m = geometry.mode_count();
        let heaters = HeaterBank::build(&cfg.heaters, &geometry)?;
        let law = &cfg.coupling;
        if !(law.c0_per_mm >= 0.0) || !(law.decay_um > 0.0) {
            return Err(Error::Config("coupling needs c0 >= 0 and decay > 0".into()));
        }
        let cutoff_um = law.cutoff_um.unwrap_or(1.5 * geometry.pitch_um);
        let detunings = match &cfg.detuning.values {
            Some(v) if v.len() != m => {
                return Err(Error::Config(format!("{} detunings for {m} modes", v.len())))
            }
            Some(v) => v.clone(),
            None => {
                let s = cfg.detuning.spread_per_mm;
                if !(s >= 0.0) {
                    return Err(Error::Config("detuning spread must be >= 0".into()));
                }
                let mut rng = rng::seeded(rng::substream_seed(cfg.seed, "detuning"));
                (0..m)
                    .map(|_| if s == 0.0 { 0.0 } else { rng.random_range(-s..=s) })
                    .collect()
            }
        };

        let mut seen = vec![false; m];
        for &p in &cfg.input_ports {
            if p >= m || seen[p] {
                return Err(Error::Config(format!("input port map is not injective at mode {p}")));
            }
            seen[p] = true;
        }
        if cfg.input_ports.len() > 20 {
            return Err(Error::Config(format!(
                "at most 20 input ports, got {}",
                cfg.input_ports.len()
            )));
        }

        let detector = match &cfg.detector_map {
            Some(map) => DetectorModel::from_assignments(m, map)?,
            None => {
                let mut unmeasured = vec![false; m];
                for &u in &cfg.unmeasured_modes {
                    if u >= m {
                        return Err(Error::Config(format!("unmeasured mode {u} out of range")));
                    }
                    unmeasured[u] = true;
                }
                DetectorModel::paired(m, (0..m).filter(|&j| !unmeasured[j]).collect())?
            }
        };
        cfg.noise.validate(m)?;

        let pitch = geometry.pitch_um;
        let couplings = geometry
            .section_positions
            .iter()
            .map(|pos| {
                let mut pairs = Vec::new();
                for i in 0..m {
                    for j in i + 1..m {
                        let d = ((pos[i][0] - pos[j][0]).powi(2) + (pos[i][1] - pos[j][1]).powi(2)).sqrt();
                        if d <= cutoff_um && law.c0_per_mm > 0.0 {
                            pairs.push((i, j, law.c0_per_mm * (-(d - pitch) / law.decay_um).exp()));
                        }
                    }
                }
                pairs
            })
            .collect();

        Ok(Self {
            geometry,
            heaters,
            coupling: law.clone(),
            cutoff_um,
            detunings,
            input_ports: cfg.input_ports.clone(),
            detector,
            noise: cfg.noise.clone(),
            couplings,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.geometry.mode_count()
    }

    fn check_powers(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.heaters.count() {
            return Err(Error::ShapeMismatch {
                expected: self.heaters.count(),
                got: p.len(),
            });
        }
        if let Some(x) = p.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidPower(format!("power {x} mW is not a finite non-negative value")));
        }
        Ok(())
    }

    fn hamiltonian_real(&self, section: usize, p: &[f64]) -> DMatrix<f64> {
        let m = self.mode_count();
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            h[(i, i)] = self.detunings[i];
        }
        for (heater, &power) in self.heaters.influence.iter().zip(p) {
            if power == 0.0 {
                continue;
            }
            for (i, &a) in heater.iter().enumerate() {
                h[(i, i)] += a * power;
            }
        }
        for &(i, j, c) in &self.couplings[section] {
            h[(i, j)] = c;
            h[(j, i)] = c;
        }
        h
    }

    /// Real-symmetric coupling Hamiltonian of z-slice `segment` under power `p`.
    pub fn build_hamiltonian(&self, segment: usize, p: &[f64]) -> Result<ComplexMatrix> {
        if segment >= self.geometry.segments {
            return Err(Error::InvalidInput(format!(
                "segment {segment} out of range (K = {})",
                self.geometry.segments
            )));
        }
        self.check_powers(p)?;
        let h = self.hamiltonian_real(self.geometry.section_of(segment), p);
        let m = self.mode_count();
        Ok(ComplexMatrix::from_fn(m, m, |r, c| h[(r, c)].into()))
    }

    /// Ordered product of slice propagators, later slices on the left.
    ///
    /// Consecutive slices that sample the same section share one Hamiltonian
    /// and are applied as a single exponential over their joint length.
    pub fn evolve(&self, p: &[f64]) -> Result<UnitaryMatrix> {
        self.check_powers(p)?;
        let k_total = self.geometry.segments;
        let dz = self.geometry.segment_length_mm();
        let mut u = ComplexMatrix::identity(self.mode_count());
        let mut k = 0;
        while k < k_total {
            let section = self.geometry.section_of(k);
            let mut run = 1;
            while k + run < k_total && self.geometry.section_of(k + run) == section {
                run += 1;
            }
            let h = self.hamiltonian_real(section, p);
            propagate_real_symmetric(&h, dz * run as f64, &mut u);
            k += run;
        }
        UnitaryMatrix::new(u, Provenance::Device)
    }

    /// Uniform i.i.d. powers in [0, p_max] on the first `n_active` heaters
    /// of the activation order, zero elsewhere.
    pub fn random_power_vector(&self, n_active: usize, p_max: f64, seed: u64) -> Result<Vec<f64>> {
        if n_active > self.heaters.active_count() {
            return Err(Error::InvalidSubset(format!(
                "{n_active} active heaters requested, {} available",
                self.heaters.active_count()
            )));
        }
        if !(p_max >= 0.0) || !p_max.is_finite() {
            return Err(Error::InvalidPower(format!("p_max {p_max} must be finite and >= 0")));
        }
        let mut rng = rng::seeded(seed);
        let mut p = vec![0.0; self.heaters.count()];
        for &h in &self.heaters.activation_order[..n_active] {
            p[h] = if p_max == 0.0 { 0.0 } else { rng.random_range(0.0..=p_max) };
        }
        Ok(p)
    }
}
