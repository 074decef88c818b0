//! Experiment configuration, run manifests and the corridor case study.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::classifier::{fit_measurement_map, ClassifierBank, Dataset, Pair};
use crate::error::{Error, Result};
use crate::model::{build_unicycle_inclusions, Control, FrenetState};
use crate::projection::{PairCertificate, ProjectionContext};
use crate::sim::{generate_dataset, mislabel, training_points, simulate_batch, CorridorWorld, OutcomeCriteria, PlantConfig, PlantOutcome, PlantRun};
use crate::training::{pgd_train, TrainConfig, TrainTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { seed: 1, output: "out".into() }
    }
}

/// A constrained pair: certificate centered at `center`, box half-widths
/// `half_box`, and the path curvature used for `U1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSetup {
    pub pair: Pair,
    pub center: Vec<f64>,
    pub rho: f64,
    pub half_box: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaseStudyConfig {
    pub constrained: Vec<PairSetup>,
    pub sectors: usize,
    /// Cut distance for the optional sliding blocks.
    pub sliding: Option<f64>,
    /// Sensor field of view used for the case study.
    pub fov: f64,
    pub mislabel: bool,
    pub map_degree: u32,
    pub runs: usize,
    /// Starts are uniform in `|psi| <= start_box[0]`, `|d| <= start_box[1]`.
    pub start_box: [f64; 2],
}

impl Default for CaseStudyConfig {
    fn default() -> Self {
        let half_box = vec![PI / 6.0, 0.5];
        Self {
            constrained: vec![
                PairSetup { pair: Pair::P12, center: vec![0.0, -0.25], rho: -1.0, half_box: half_box.clone() },
                PairSetup { pair: Pair::P13, center: vec![0.0, 0.25], rho: 1.0, half_box },
            ],
            sectors: 16,
            sliding: None,
            fov: 2.0 * PI / 3.0,
            mislabel: true,
            map_degree: 2,
            runs: 10,
            start_box: [PI / 12.0, 0.5],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub world: CorridorWorld,
    pub train: TrainConfig,
    pub plant: PlantConfig,
    pub criteria: OutcomeCriteria,
    pub case: CaseStudyConfig,
}

const ENV_PREFIX: &str = "CILSYNTH_";

/// Applies `CILSYNTH_<SECTION>_<KEY>=value` overrides to a JSON config.
/// Values parse as JSON when possible and as strings otherwise.
pub fn apply_env_overrides(cfg: &mut Value, vars: impl IntoIterator<Item = (String, String)>) -> Result<Vec<String>> {
    let mut applied = Vec::new();
    for (name, raw) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else { continue };
        let rest = rest.to_ascii_lowercase();
        let Some((section, key)) = rest.split_once('_') else {
            return Err(Error::Config(format!("{name}: expected {ENV_PREFIX}<SECTION>_<KEY>")));
        };
        let obj = cfg
            .as_object_mut()
            .and_then(|o| o.get_mut(section))
            .and_then(Value::as_object_mut)
            .ok_or_else(|| Error::Config(format!("{name}: unknown section `{section}`")))?;
        if !obj.contains_key(key) {
            return Err(Error::Config(format!("{name}: unknown key `{key}` in section `{section}`")));
        }
        let value = serde_json::from_str(&raw).unwrap_or(Value::String(raw));
        obj.insert(key.to_string(), value);
        applied.push(name);
    }
    Ok(applied)
}

impl ExperimentConfig {
    /// Parses JSON (defaults fill missing fields) and applies the overrides.
    pub fn from_json_with_env(text: Option<&str>, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let base: Self = match text {
            Some(t) => serde_json::from_str(t).map_err(|e| Error::Config(format!("config: {e}")))?,
            None => Self::default(),
        };
        let mut v = serde_json::to_value(&base)?;
        apply_env_overrides(&mut v, vars)?;
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(format!("override: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        self.world.check()?;
        self.train.check()?;
        let c = &self.case;
        if c.sectors < 4 || c.sectors % 2 == 1 || c.runs == 0 || !(c.fov > 0.0) {
            return Err(Error::Config("case study needs an even sector count >= 4, runs >= 1, fov > 0".into()));
        }
        if c.constrained.iter().any(|p| p.center.len() != 2 || p.half_box.len() != 2 || p.half_box.iter().any(|h| !(*h > 0.0))) {
            return Err(Error::Config("constrained pairs need a planar center and positive box half-widths".into()));
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn case_world(&self) -> CorridorWorld {
        let mut w = self.world.clone();
        w.sensor.fov = self.case.fov;
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    pub stages: Vec<StageTime>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.run.seed,
            config_hash: cfg.hash()?,
            config: cfg.clone(),
            outputs: vec![],
            stages: vec![],
            warnings: vec![],
        })
    }

    pub fn stage(&mut self, name: &str, started: Instant) {
        self.stages.push(StageTime { stage: name.into(), seconds: started.elapsed().as_secs_f64() });
    }
}

/// Serialized bank with any certificates and their provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankFile {
    pub bank: ClassifierBank,
    #[serde(default)]
    pub certificates: BTreeMap<Pair, PairCertificate>,
    #[serde(default)]
    pub metadata: serde_json::Map<String, Value>,
}

impl BankFile {
    pub fn new(bank: ClassifierBank, certificates: BTreeMap<Pair, PairCertificate>) -> Self {
        let mut metadata = serde_json::Map::new();
        metadata.insert("norm".into(), Value::String("l1".into()));
        metadata.insert("version".into(), Value::String(env!("CARGO_PKG_VERSION").into()));
        Self { bank, certificates, metadata }
    }
}

pub fn training_grid(cfg: &ExperimentConfig) -> Vec<crate::sim::GridPoint> {
    let g = training_points();
    if cfg.case.mislabel { mislabel(&g) } else { g }
}

fn field_index(label: Control) -> usize {
    label.index() as usize - 1
}

/// Projection contexts for the constrained pairs. Each map is linearized at
/// its pair's equilibrium.
pub fn build_contexts(cfg: &ExperimentConfig, data: &Dataset) -> Result<BTreeMap<Pair, ProjectionContext>> {
    let mut out = BTreeMap::new();
    for s in &cfg.case.constrained {
        let map = fit_measurement_map(data, cfg.case.map_degree, Some(&s.center))?;
        let inc = build_unicycle_inclusions(cfg.plant.v_star, cfg.plant.omega_star, (s.rho, s.rho))?;
        let (pos, neg) = s.pair.labels();
        let ctx = ProjectionContext {
            center: s.center.clone(),
            map,
            positive: inc[field_index(pos)].clone(),
            negative: inc[field_index(neg)].clone(),
            box_lo: s.center.iter().zip(&s.half_box).map(|(c, h)| c - h).collect(),
            box_hi: s.center.iter().zip(&s.half_box).map(|(c, h)| c + h).collect(),
            sectors: cfg.case.sectors,
            anchor: true,
            sliding: cfg.case.sliding,
        };
        ctx.check()?;
        out.insert(s.pair, ctx);
    }
    Ok(out)
}

/// Uniform starts inside the configured start box.
pub fn sample_starts(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<FrenetState>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [p, d] = cfg.case.start_box;
    (0..cfg.case.runs).map(|_| FrenetState::new(rng.random_range(-p..=p), rng.random_range(-d..=d))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub pair: Pair,
    pub slack_l1: f64,
    pub success: bool,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub unconstrained: ClassifierBank,
    pub constrained: ClassifierBank,
    pub certificates: BTreeMap<Pair, PairCertificate>,
    pub pairs: Vec<PairSummary>,
    pub starts: Vec<FrenetState>,
    pub outcomes_c1: Vec<PlantOutcome>,
    pub outcomes_c2: Vec<PlantOutcome>,
    pub c1_failures: usize,
    pub c2_converged: usize,
    pub train_seconds: f64,
    pub total_seconds: f64,
    #[serde(skip)]
    pub runs_c1: Vec<PlantRun>,
    #[serde(skip)]
    pub runs_c2: Vec<PlantRun>,
    #[serde(skip)]
    pub trace_c2: TrainTrace,
}

pub fn is_converged(o: &PlantOutcome) -> bool {
    matches!(o, PlantOutcome::Converged { .. })
}

/// Trains the unconstrained bank `C1` and the certified bank `C2` on the
/// same data, then runs both closed loops from the same starts.
pub fn run_case_study(cfg: &ExperimentConfig) -> Result<CaseStudyReport> {
    cfg.check()?;
    let clock = Instant::now();
    let world = cfg.case_world();
    let data = generate_dataset(&world, &training_grid(cfg), cfg.run.seed)?;
    let contexts = build_contexts(cfg, &data)?;
    let c1 = pgd_train(&data, &cfg.train, &BTreeMap::new())?;
    let c2 = pgd_train(&data, &cfg.train, &contexts)?;
    let train_seconds = clock.elapsed().as_secs_f64();
    let mut pairs = Vec::new();
    for (p, cert) in &c2.certificates {
        let w = c2.bank.get(*p).stacked();
        let verified = cert.verify(&w)?.feasible;
        pairs.push(PairSummary { pair: *p, slack_l1: cert.slack_l1, success: cert.success, verified });
    }
    let starts = sample_starts(cfg, cfg.run.seed)?;
    let collect = |bank: &ClassifierBank| -> Result<Vec<PlantRun>> {
        simulate_batch(bank, &world, &starts, &cfg.plant, &cfg.criteria, cfg.run.seed).into_iter().collect()
    };
    let runs_c1 = collect(&c1.bank)?;
    let runs_c2 = collect(&c2.bank)?;
    let outcomes_c1: Vec<PlantOutcome> = runs_c1.iter().map(|r| r.outcome).collect();
    let outcomes_c2: Vec<PlantOutcome> = runs_c2.iter().map(|r| r.outcome).collect();
    Ok(CaseStudyReport {
        c1_failures: outcomes_c1.iter().filter(|o| !is_converged(o)).count(),
        c2_converged: outcomes_c2.iter().filter(|o| is_converged(o)).count(),
        unconstrained: c1.bank,
        constrained: c2.bank,
        certificates: c2.certificates,
        pairs,
        starts,
        outcomes_c1,
        outcomes_c2,
        train_seconds,
        total_seconds: clock.elapsed().as_secs_f64(),
        runs_c1,
        runs_c2,
        trace_c2: c2.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides_reach_nested_keys() {
        let vars = vec![
            ("CILSYNTH_TRAIN_PROJECT_EVERY".to_string(), "50".to_string()),
            ("CILSYNTH_RUN_OUTPUT".to_string(), "elsewhere".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let cfg = ExperimentConfig::from_json_with_env(None, vars).unwrap();
        assert_eq!(cfg.train.project_every, 50);
        assert_eq!(cfg.run.output, "elsewhere");
    }

    #[test]
    fn unknown_override_is_a_config_error() {
        let vars = vec![("CILSYNTH_TRAIN_BOGUS".to_string(), "1".to_string())];
        assert!(matches!(ExperimentConfig::from_json_with_env(None, vars), Err(Error::Config(_))));
        let bad = ExperimentConfig::from_json_with_env(Some("{\"train\": {\"gamma\": -1}}"), Vec::new());
        assert!(matches!(bad, Err(Error::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.run.seed = 2;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn starts_stay_in_the_box() {
        let cfg = ExperimentConfig::default();
        let s = sample_starts(&cfg, 3).unwrap();
        assert_eq!(s.len(), 10);
        assert!(s.iter().all(|x| x.psi.abs() <= PI / 12.0 && x.d.abs() <= 0.5));
        assert_eq!(s, sample_starts(&cfg, 3).unwrap());
    }
}
