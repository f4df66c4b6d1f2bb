use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::memories::MemoryVariant;
use crate::scalar::Scalar;

use super::{fitted_projection, run_with_projection, MemoryPolicy, RunConfig, RunError, World};

/// Parameter grid. Every non-empty axis is swept and the points are the
/// cartesian product; empty axes stay at the base configuration's value. A
/// grid with every axis empty has no points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrid {
    pub variants: Vec<MemoryVariant>,
    pub policies: Vec<MemoryPolicy>,
    pub lambda: Vec<f64>,
    pub tau_s: Vec<f64>,
    pub noise_scale: Vec<f64>,
    pub episode_count: Vec<usize>,
}

impl SweepGrid {
    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
            && self.policies.is_empty()
            && self.lambda.is_empty()
            && self.tau_s.is_empty()
            && self.noise_scale.is_empty()
            && self.episode_count.is_empty()
    }

    /// Configurations in row-major order over (variant, policy, lambda,
    /// tau_s, noise scale, episode count).
    pub fn configs(&self, base: &RunConfig) -> Vec<RunConfig> {
        if self.is_empty() {
            return Vec::new();
        }
        fn axis<V: Clone>(values: &[V], current: V) -> Vec<V> {
            if values.is_empty() {
                vec![current]
            } else {
                values.to_vec()
            }
        }
        let mut out = Vec::new();
        for variant in axis(&self.variants, base.memory.variant) {
            for policy in axis(&self.policies, base.memory.policy) {
                for lambda in axis(&Self::lambda_axis(self.lambda.clone()), base.memory.lambda) {
                    for tau_s in axis(&self.tau_s, base.memory.tau_s) {
                        for scale in axis(&self.noise_scale, base.noise.scale) {
                            for count in axis(&self.episode_count, base.episodes.count) {
                                let mut cfg = base.clone();
                                cfg.memory.variant = variant;
                                cfg.memory.policy = policy;
                                cfg.memory.lambda = lambda;
                                cfg.memory.tau_s = tau_s;
                                cfg.noise.scale = scale;
                                cfg.episodes.count = count;
                                out.push(cfg);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn lambda_axis(values: Vec<f64>) -> Vec<Option<f64>> {
        values.into_iter().map(Some).collect()
    }
}

/// One grid point and its metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub variant: MemoryVariant,
    pub policy: MemoryPolicy,
    pub lambda: f64,
    pub tau_s: f64,
    pub noise_scale: f64,
    pub episode_count: usize,
    pub ap50: f64,
    pub recall_precision: f64,
    pub recall_recall: f64,
    pub recall_accuracy: f64,
    pub classification_accuracy: f64,
}

/// Runs every grid point against one world holding the largest episode
/// count. Points run in parallel, each with its own memory. Fitted
/// projections are shared by points that differ only in policy, noise scale,
/// episode count or a nonzero lambda.
pub fn sweep<T: Scalar>(base: &RunConfig, grid: &SweepGrid) -> Result<Vec<SweepPoint>, RunError> {
    let configs = grid.configs(base);
    if configs.is_empty() {
        return Ok(Vec::new());
    }
    let mut world_cfg = base.clone();
    world_cfg.episodes.count = configs.iter().map(|c| c.episodes.count).max().unwrap_or(0);
    world_cfg.validate().map_err(RunError::Config)?;
    let world = World::build(&world_cfg, None)?;
    for cfg in &configs {
        cfg.validate().map_err(RunError::Config)?;
    }

    let fit_key = |cfg: &RunConfig| (cfg.memory.variant, cfg.memory.tau_s.to_bits(), cfg.memory.lambda() == 0.0);
    let mut keys: Vec<_> = configs.iter().map(fit_key).collect();
    keys.sort();
    keys.dedup();
    let fits = keys
        .par_iter()
        .map(|key| {
            let cfg = configs.iter().find(|c| fit_key(c) == *key).expect("key from configs");
            fitted_projection::<T>(cfg, &world).map(|w| (*key, w))
        })
        .collect::<Result<Vec<_>, RunError>>()?;

    configs
        .par_iter()
        .map(|cfg| {
            let key = fit_key(cfg);
            let projection = fits.iter().find(|(k, _)| *k == key).and_then(|(_, w)| w.clone());
            let out = run_with_projection::<T>(cfg, &world, projection)?;
            let r = &out.report;
            Ok(SweepPoint {
                variant: r.variant,
                policy: r.policy,
                lambda: r.lambda,
                tau_s: r.tau_s,
                noise_scale: r.noise_scale,
                episode_count: r.episodes,
                ap50: r.ap.mean,
                recall_precision: r.recall.precision,
                recall_recall: r.recall.recall,
                recall_accuracy: r.recall.accuracy,
                classification_accuracy: r.classification_accuracy,
            })
        })
        .collect()
}
