//! Gradient-based refinement of SH coefficients under the masked magnitude objective.

mod loss;
mod params;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hrtf::HrtfSet;
use crate::mask::NotchMask;
use crate::solver::{cutoff_frequency, ShHrtf, DEFAULT_HEAD_RADIUS, DEFAULT_SPEED_OF_SOUND};

pub use loss::{loss_ls, loss_mmagls, split_bins, total_loss, Loss, LossTerm, Objective};
pub use params::{flatten, unflatten, ParamMap, ParamMode, HIDDEN_INIT_SCALE};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rng_seed: u64,
    pub hidden_width: usize,
    /// Return the iterate with the lowest ε instead of the last one.
    pub keep_best: bool,
    pub mode: ParamMode,
    /// Identity connection from input to output in network mode.
    pub skip: bool,
    /// Boundary between the LS and the masked magnitude term.
    pub cutoff_hz: f64,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            rng_seed: 0,
            hidden_width: 8,
            keep_best: true,
            mode: ParamMode::Network,
            skip: true,
            cutoff_hz: cutoff_frequency(1, DEFAULT_HEAD_RADIUS, DEFAULT_SPEED_OF_SOUND),
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment decay rates must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        if self.mode == ParamMode::Network && self.hidden_width == 0 {
            return bad("hidden width must be at least 1".into());
        }
        if !(self.cutoff_hz >= 0.0) || !self.cutoff_hz.is_finite() {
            return bad(format!("invalid cutoff {}", self.cutoff_hz));
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, cfg: &OptConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
        }
    }
}

/// ε and its gradient with respect to every real parameter of `map`.
pub fn gradient(map: &ParamMap, params: &[f64], objective: &Objective) -> (Loss, Vec<f64>) {
    let y = map.forward(params);
    let (loss, g) = objective.evaluate(&unflatten(&y), true);
    let g_y = flatten(&g.expect("gradient requested"));
    (loss, map.backward(params, &g_y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub eps: f64,
    pub eps_ls: f64,
    pub eps_mmagls: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptReport {
    /// One record per evaluated iterate, epoch 0 being the initialization.
    pub trace: Vec<EpochRecord>,
    pub initial: EpochRecord,
    /// Record of the returned iterate.
    pub final_record: EpochRecord,
    pub num_params: usize,
    pub wall_clock: Duration,
}

impl OptReport {
    /// Write `epoch,eps,eps_ls,eps_mmagls`.
    pub fn write_csv(&self, path: impl AsRef<Path>, comment: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        if let Some(c) = comment {
            writeln!(out, "# {c}").map_err(io)?;
        }
        writeln!(out, "epoch,eps,eps_ls,eps_mmagls").map_err(io)?;
        for r in &self.trace {
            writeln!(out, "{},{},{},{}", r.epoch, r.eps, r.eps_ls, r.eps_mmagls).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

fn record(epoch: usize, loss: &Loss) -> EpochRecord {
    EpochRecord {
        epoch,
        eps: loss.eps,
        eps_ls: loss.ls.value,
        eps_mmagls: loss.mmagls.value,
    }
}

/// Run `cfg.epochs` Adam steps on ε starting from `init`.
pub fn optimize(init: &ShHrtf, reference: &HrtfSet, mask: &NotchMask, cfg: &OptConfig) -> Result<(ShHrtf, OptReport)> {
    let start = Instant::now();
    cfg.validate()?;
    init.check_against(reference)?;
    let objective = Objective::with_cutoff(reference, mask, init.order(), cfg.cutoff_hz)?;
    let map = match cfg.mode {
        ParamMode::Network => ParamMap::network(init.coefficients(), cfg.hidden_width, cfg.skip),
        ParamMode::Direct => ParamMap::direct(init.coefficients()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut params = map.initial_params(&mut rng);
    let mut adam = Adam::new(params.len(), cfg);

    let rebuild = |y: &[f64]| -> Result<ShHrtf> {
        Ok(ShHrtf::new(init.order(), *init.freq(), unflatten(y))?.with_grid(init.grid_tag()))
    };
    let initial_loss = objective.evaluate(init.coefficients(), false).0;
    if !initial_loss.eps.is_finite() {
        return Err(Error::NonFiniteLoss {
            epoch: 0,
            last_finite: Box::new(init.clone()),
        });
    }
    let initial = record(0, &initial_loss);

    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    // `None` stands for the initialization itself, returned bit-exactly
    let mut best: (EpochRecord, Option<Vec<f64>>) = (initial, None);
    let mut last: (EpochRecord, Option<Vec<f64>>) = (initial, None);
    for epoch in 0..=cfg.epochs {
        let (loss, grad) = gradient(&map, &params, &objective);
        if !loss.eps.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            let last_finite = match &last.1 {
                None => init.clone(),
                Some(y) => rebuild(y)?,
            };
            return Err(Error::NonFiniteLoss {
                epoch,
                last_finite: Box::new(last_finite),
            });
        }
        let rec = record(epoch, &loss);
        trace.push(rec);
        let y = (epoch > 0).then(|| map.forward(&params));
        if epoch > 0 && rec.eps < best.0.eps {
            best = (rec, y.clone());
        }
        last = (rec, y);
        if epoch == cfg.epochs {
            break;
        }
        adam.step(&mut params, &grad);
    }
    trace[0] = initial;

    let (final_record, y) = if cfg.keep_best { best } else { last };
    let coeffs = match y {
        None => init.clone(),
        Some(y) => rebuild(&y)?,
    };
    Ok((
        coeffs,
        OptReport {
            trace,
            initial,
            final_record,
            num_params: map.num_params(),
            wall_clock: start.elapsed(),
        },
    ))
}
