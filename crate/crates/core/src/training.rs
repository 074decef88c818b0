//! Projected subgradient training of the pairwise classifiers.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{hinge_loss_stacked, hinge_subgradient_stacked, BinaryData, ClassifierBank, Dataset, LinearClassifier, Pair};
use crate::error::{dim_check, Error, Result};
use crate::geometry::norm;
use crate::io::fmt_f64;
use crate::projection::{project, AcsConfig, AcsTrace, PairCertificate, ProjectionContext, ProjectionOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Hinge weight.
    pub gamma: f64,
    /// Step size `1 / (k + step_offset)`.
    pub step_offset: f64,
    /// Divide each subgradient by its norm.
    pub normalize: bool,
    /// Project every this many iterations and after the last one.
    pub project_every: usize,
    pub acs: AcsConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { iterations: 20_000, gamma: 100.0, step_offset: 10.0, normalize: true, project_every: 1000, acs: AcsConfig::default() }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.iterations == 0 || !(self.gamma > 0.0) || !(self.step_offset > 0.0) || self.project_every == 0 {
            return Err(Error::Config("training needs iterations >= 1, gamma > 0, step offset > 0, project_every >= 1".into()));
        }
        self.acs.check()
    }

    pub fn step_size(&self, k: usize) -> f64 {
        1.0 / (k as f64 + self.step_offset)
    }
}

/// `w - alpha_k g`, or `w - alpha_k g / |g|` when normalizing; a zero
/// subgradient leaves `w` unchanged.
pub fn gradient_step(w: &[f64], g: &[f64], k: usize, cfg: &TrainConfig) -> Vec<f64> {
    let a = cfg.step_size(k);
    let scale = if cfg.normalize {
        let n = norm(g);
        if n == 0.0 {
            return w.to_vec();
        }
        a / n
    } else {
        a
    };
    w.iter().zip(g).map(|(wi, gi)| wi - scale * gi).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub pair: Pair,
    pub iter: usize,
    pub loss: f64,
    pub w_norm: f64,
    /// Present on iterations that ended with a projection.
    pub slack: Option<f64>,
    pub success: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TrainRecord>,
}

impl TrainTrace {
    pub fn for_pair(&self, pair: Pair) -> impl Iterator<Item = &TrainRecord> {
        self.records.iter().filter(move |r| r.pair == pair)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header: Vec<String> = ["pair", "iter", "loss", "w_norm", "slack", "success"].map(String::from).to_vec();
        let rows = self.records.iter().map(|r| {
            vec![
                r.pair.key().to_string(),
                r.iter.to_string(),
                fmt_f64(r.loss),
                fmt_f64(r.w_norm),
                r.slack.map(fmt_f64).unwrap_or_default(),
                r.success.map(|s| s.to_string()).unwrap_or_default(),
            ]
        });
        crate::io::write_csv(path, &header, rows)
    }
}

pub struct PairTraining {
    pub w: Vec<f64>,
    pub outcome: Option<ProjectionOutcome>,
    pub trace: Vec<TrainRecord>,
}

/// Subgradient descent from `w = 0`. With a context, `w` is projected every
/// `project_every` iterations and after the last one.
pub fn train_pair(pair: Pair, data: &BinaryData, cfg: &TrainConfig, ctx: Option<&ProjectionContext>) -> Result<PairTraining> {
    cfg.check()?;
    if data.is_empty() {
        return Err(Error::Empty(format!("no records for pair {}", pair.key())));
    }
    let dim = data.y[0].len() + 1;
    if let Some(c) = ctx {
        dim_check(c.weights_dim() == dim, || format!("pair {} context expects {} weights, data gives {dim}", pair.key(), c.weights_dim()))?;
    }
    let mut w = vec![0.0; dim];
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut outcome = None;
    for k in 0..cfg.iterations {
        let g = hinge_subgradient_stacked(&w, data, cfg.gamma)?;
        w = gradient_step(&w, &g, k, cfg);
        let mut rec = TrainRecord { pair, iter: k, loss: 0.0, w_norm: 0.0, slack: None, success: None };
        if let Some(c) = ctx {
            if (k + 1) % cfg.project_every == 0 || k + 1 == cfg.iterations {
                let out = project(&w, &cfg.acs, c)?;
                w = out.w.clone();
                rec.slack = Some(out.slack);
                rec.success = Some(out.success && out.verified);
                outcome = Some(out);
            }
        }
        rec.loss = hinge_loss_stacked(&w, data, cfg.gamma)?;
        rec.w_norm = norm(&w);
        trace.push(rec);
    }
    Ok(PairTraining { w, outcome, trace })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedBank {
    pub bank: ClassifierBank,
    pub certificates: BTreeMap<Pair, PairCertificate>,
    pub trace: TrainTrace,
    /// Search trace of the final projection of each constrained pair.
    #[serde(skip)]
    pub acs_traces: BTreeMap<Pair, AcsTrace>,
}

/// Trains all three pairs in parallel; pairs with a context are constrained.
pub fn pgd_train(data: &Dataset, cfg: &TrainConfig, contexts: &BTreeMap<Pair, ProjectionContext>) -> Result<TrainedBank> {
    cfg.check()?;
    let runs: Vec<(Pair, Result<PairTraining>)> = Pair::ALL
        .par_iter()
        .map(|&p| (p, train_pair(p, &data.binary(p), cfg, contexts.get(&p))))
        .collect();
    let mut ws = BTreeMap::new();
    let mut certificates = BTreeMap::new();
    let mut trace = TrainTrace::default();
    let mut acs_traces = BTreeMap::new();
    for (p, run) in runs {
        let run = run?;
        if let (Some(out), Some(ctx)) = (run.outcome, contexts.get(&p)) {
            acs_traces.insert(p, out.trace);
            certificates.insert(
                p,
                PairCertificate {
                    context: ctx.clone(),
                    lyapunov: out.lyapunov,
                    witness: out.witness,
                    slack_l1: out.slack,
                    success: out.success && out.verified,
                },
            );
        }
        ws.insert(p, LinearClassifier::from_stacked(&run.w));
        trace.records.extend(run.trace);
    }
    let mut take = |p: Pair| ws.remove(&p).expect("every pair is trained");
    let bank = ClassifierBank::new(take(Pair::P12), take(Pair::P13), take(Pair::P23))?;
    Ok(TrainedBank { bank, certificates, trace, acs_traces })
}
