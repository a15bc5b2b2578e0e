use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, ProbMatrix};
use crate::pixel::{real_pixel_loss, synthetic_pixel_loss, GateMask, LabelGrid, PseudoLabelGrid};
use crate::rng::stream_rng;
use crate::transport::{
    build_cost_matrix, conditional_rows, sinkhorn_solve, sinkhorn_solve_warm, Layout, MarginalPrior, SinkhornSettings,
};

use super::augment::{cutmix_box, paste_box, strong_augment, weak_augment, View, CUTMIX_ALPHA};
use super::config::TrainConfig;
use super::eval::{evaluate_miou, IouReport};
use super::features::{compute_features, FeatureMap, FEATURE_DIM};
use super::model::{poly_lr, LinearSoftmaxModel, Params};
use super::world::{Dataset, WorldConfig};

/// The transport problem uses every `OT_STRIDE`-th valid pixel along both
/// axes; the solved class scaling is then applied to all pixels.
pub const OT_STRIDE: usize = 8;

const STREAM_BATCH_LABELED: u64 = 201;
const STREAM_BATCH_UNLABELED: u64 = 202;
const STREAM_AUG_LABELED: u64 = 203;
const STREAM_AUG_WEAK: u64 = 204;
const STREAM_AUG_STRONG: u64 = 205;
const STREAM_CUTMIX: u64 = 206;

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss_real: f64,
    pub loss_syn: f64,
    pub lr: f64,
    /// Gated pixels over valid teacher-view pixels.
    pub gate_fraction: f64,
    /// `None` when no transport problem was solved.
    pub ot_converged: Option<bool>,
    pub ot_iterations: usize,
    pub ot_seconds: f64,
    pub step_seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: LinearSoftmaxModel,
    pub step: usize,
    /// Column log-scaling of the last transport solve, used as a warm start.
    pub ot_log_v: Option<Vec<f64>>,
}

impl TrainState {
    pub fn new(classes: usize) -> Self {
        Self {
            model: LinearSoftmaxModel::zeros(classes),
            step: 0,
            ot_log_v: None,
        }
    }
}

fn features_of(views: &[View]) -> FeatureMap {
    FeatureMap::concat(&views.iter().map(|v| compute_features(&v.image)).collect::<Vec<_>>())
}

/// Pseudo labels for the weak views, before mixing.
struct Assignment {
    q: Matrix,
    gate: Vec<bool>,
    gate_fraction: f64,
    ot_converged: Option<bool>,
    ot_iterations: usize,
    ot_seconds: f64,
}

fn assign(
    cfg: &TrainConfig,
    p_weak: &ProbMatrix,
    views: &[View],
    warm: &mut Option<Vec<f64>>,
) -> Result<Assignment> {
    let (w, h) = (views[0].width(), views[0].height());
    let valid: Vec<bool> = views.iter().flat_map(|v| v.valid.iter().copied()).collect();
    let gate: Vec<bool> = p_weak
        .matrix()
        .iter_rows()
        .zip(&valid)
        .map(|(r, &ok)| ok && r.iter().copied().fold(f64::NEG_INFINITY, f64::max) >= cfg.gamma)
        .collect();
    let n_valid = valid.iter().filter(|v| **v).count();
    let gate_fraction = if n_valid == 0 {
        0.0
    } else {
        gate.iter().filter(|g| **g).count() as f64 / n_valid as f64
    };
    let mut out = Assignment {
        q: Matrix::zeros(0, 0),
        gate,
        gate_fraction,
        ot_converged: None,
        ot_iterations: 0,
        ot_seconds: 0.0,
    };
    if !cfg.ot_enabled {
        out.q = ProbMatrix::one_hot(&p_weak.argmax_rows(), p_weak.cols())?.into_matrix();
        return Ok(out);
    }
    let start = Instant::now();
    let rows: Vec<usize> = (0..valid.len())
        .filter(|&i| {
            let (y, x) = ((i / w) % h, i % w);
            valid[i] && y % OT_STRIDE == 0 && x % OT_STRIDE == 0
        })
        .collect();
    if rows.is_empty() {
        out.q = p_weak.matrix().clone();
        return Ok(out);
    }
    let k = p_weak.cols();
    let mut sub = Vec::with_capacity(rows.len() * k);
    for &i in &rows {
        sub.extend_from_slice(p_weak.row(i));
    }
    let sub = ProbMatrix::new(Matrix::from_vec(rows.len(), k, sub)?)?;
    let settings = SinkhornSettings::with_beta(cfg.beta);
    let cost = build_cost_matrix(&sub, &settings)?;
    let prior = MarginalPrior::uniform(rows.len(), k);
    let plan = match warm.as_deref() {
        Some(lv) => sinkhorn_solve_warm(&cost, &prior, &settings, lv)?,
        None => sinkhorn_solve(&cost, &prior, &settings)?,
    };
    let scaling = plan
        .scaling
        .as_ref()
        .ok_or_else(|| Error::Invalid("solver returned no scaling".into()))?;
    // Only gated rows reach the loss; the rest keep the teacher row.
    let gated: Vec<usize> = (0..out.gate.len()).filter(|&i| out.gate[i]).collect();
    let mut q = p_weak.matrix().clone();
    if !gated.is_empty() {
        let mut sel = Vec::with_capacity(gated.len() * k);
        for &i in &gated {
            sel.extend_from_slice(p_weak.row(i));
        }
        let sel = ProbMatrix::from_matrix_unchecked(Matrix::from_vec(gated.len(), k, sel)?);
        let cond = conditional_rows(&sel, scaling, &settings)?;
        for (r, &i) in gated.iter().enumerate() {
            q.row_mut(i).copy_from_slice(cond.row(r));
        }
    }
    out.q = q;
    if scaling.log_v.iter().all(|x| x.is_finite()) {
        *warm = Some(scaling.log_v.clone());
    }
    out.ot_converged = Some(plan.converged);
    out.ot_iterations = plan.iterations_used;
    out.ot_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}

/// One teacher/student update on a labeled and an unlabeled mini-batch.
pub fn train_step(state: &mut TrainState, data: &Dataset, cfg: &TrainConfig) -> Result<StepRecord> {
    let start = Instant::now();
    let step = state.step;
    let k = state.model.classes();
    let (w, h) = (data.world.size, data.world.size);
    let lr = poly_lr(cfg.lr0, step, cfg.total_iters, cfg.poly_power);
    let mut gw = Matrix::zeros(FEATURE_DIM, k);
    let mut gb = vec![0.0; k];

    // Labeled branch.
    let bl = cfg.batch_labeled;
    let mut rng = stream_rng(cfg.seed, STREAM_BATCH_LABELED, step as u64);
    let views_l: Vec<View> = (0..bl)
        .map(|i| {
            let idx = rng.random_range(0..data.labeled.len());
            weak_augment(&data.labeled[idx], &mut stream_rng(cfg.seed, STREAM_AUG_LABELED, (step * bl + i) as u64))
        })
        .collect();
    let x_l = features_of(&views_l);
    let layout_l = Layout::new(bl, h, w)?;
    let labels = LabelGrid::new(views_l.iter().flat_map(|v| v.labels.iter().copied()).collect(), layout_l)?;
    let p_l = state.model.probs(&x_l, Params::Student);
    let real = real_pixel_loss(&labels, &p_l, &layout_l)?;
    LinearSoftmaxModel::accumulate_grad(&x_l, &real.grad, 0.5, &mut gw, &mut gb)?;

    // Synthetic branch.
    let bu = cfg.batch_unlabeled;
    let mut record = StepRecord {
        step,
        loss_real: real.loss,
        loss_syn: 0.0,
        lr,
        gate_fraction: 0.0,
        ot_converged: None,
        ot_iterations: 0,
        ot_seconds: 0.0,
        step_seconds: 0.0,
    };
    if bu > 0 && !data.unlabeled.is_empty() {
        let mut rng = stream_rng(cfg.seed, STREAM_BATCH_UNLABELED, step as u64);
        let weak: Vec<View> = (0..bu)
            .map(|i| {
                let idx = rng.random_range(0..data.unlabeled.len());
                weak_augment(&data.unlabeled[idx], &mut stream_rng(cfg.seed, STREAM_AUG_WEAK, (step * bu + i) as u64))
            })
            .collect();
        let p_weak = state.model.probs(&features_of(&weak), Params::Teacher);
        let a = assign(cfg, &p_weak, &weak, &mut state.ot_log_v)?;
        record.gate_fraction = a.gate_fraction;
        record.ot_converged = a.ot_converged;
        record.ot_iterations = a.ot_iterations;
        record.ot_seconds = a.ot_seconds;

        let mut strong: Vec<View> = weak
            .iter()
            .enumerate()
            .map(|(i, v)| strong_augment(v, &mut stream_rng(cfg.seed, STREAM_AUG_STRONG, (step * bu + i) as u64)))
            .collect();
        let mut q = a.q.clone();
        let mut gate = a.gate.clone();
        let originals = strong.clone();
        let hw = w * h;
        for i in 0..bu {
            let mut rng = stream_rng(cfg.seed, STREAM_CUTMIX, (step * bu + i) as u64);
            if !rng.random_bool(cfg.cutmix_prob) {
                continue;
            }
            let b = cutmix_box(&mut rng, w, h, CUTMIX_ALPHA);
            let j = (i + 1) % bu;
            paste_box(strong[i].image.data_mut(), originals[j].image.data(), w, 3, b);
            paste_box(&mut q.data_mut()[i * hw * k..(i + 1) * hw * k], &a.q.data()[j * hw * k..(j + 1) * hw * k], w, k, b);
            paste_box(&mut gate[i * hw..(i + 1) * hw], &a.gate[j * hw..(j + 1) * hw], w, 1, b);
        }
        let x_s = features_of(&strong);
        let p_s = state.model.probs(&x_s, Params::Student);
        let pl = PseudoLabelGrid::new(
            ProbMatrix::normalized(q)?,
            GateMask { flags: gate, gamma: cfg.gamma },
            Layout::new(bu, h, w)?,
        )?;
        let syn = synthetic_pixel_loss(&pl, &p_s)?;
        record.loss_syn = syn.loss;
        if syn.counted > 0 {
            LinearSoftmaxModel::accumulate_grad(&x_s, &syn.grad, 0.5, &mut gw, &mut gb)?;
        }
    }

    state.model.descend(lr, &gw, &gb);
    state.model.update_ema(cfg.ema_momentum);
    state.step += 1;
    if !state.model.is_finite() {
        return Err(Error::Invalid(format!("parameters diverged at step {step}")));
    }
    record.step_seconds = start.elapsed().as_secs_f64();
    Ok(record)
}

/// Mean per-step timings of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTimings {
    pub mean_step_seconds: f64,
    pub mean_ot_seconds: f64,
    pub ot_solves: usize,
    pub ot_not_converged: usize,
    pub eval_seconds: f64,
}

impl RunTimings {
    pub fn from_log(log: &[StepRecord], eval_seconds: f64) -> Self {
        let n = log.len().max(1) as f64;
        Self {
            mean_step_seconds: log.iter().map(|r| r.step_seconds).sum::<f64>() / n,
            mean_ot_seconds: log.iter().map(|r| r.ot_seconds).sum::<f64>() / n,
            ot_solves: log.iter().filter(|r| r.ot_converged.is_some()).count(),
            ot_not_converged: log.iter().filter(|r| r.ot_converged == Some(false)).count(),
            eval_seconds,
        }
    }

    pub fn ot_fraction(&self) -> f64 {
        if self.mean_step_seconds > 0.0 {
            self.mean_ot_seconds / self.mean_step_seconds
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: TrainConfig,
    pub log: Vec<StepRecord>,
    pub iou: IouReport,
    pub model: LinearSoftmaxModel,
    pub timings: RunTimings,
}

impl RunResult {
    /// `step,loss_real,loss_syn,lr,gate_fraction`; timings are excluded so
    /// identical runs give identical bytes.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("step,loss_real,loss_syn,lr,gate_fraction\n");
        for r in &self.log {
            let _ = writeln!(s, "{},{},{},{},{}", r.step, r.loss_real, r.loss_syn, r.lr, r.gate_fraction);
        }
        s
    }
}

pub fn run_training_on(cfg: &TrainConfig, data: &Dataset) -> Result<RunResult> {
    cfg.validate()?;
    let mut state = TrainState::new(data.world.classes);
    let mut log = Vec::with_capacity(cfg.total_iters);
    for _ in 0..cfg.total_iters {
        log.push(train_step(&mut state, data, cfg)?);
    }
    let start = Instant::now();
    let iou = evaluate_miou(&state.model, &data.eval)?;
    let timings = RunTimings::from_log(&log, start.elapsed().as_secs_f64());
    Ok(RunResult {
        config: cfg.clone(),
        log,
        iou,
        model: state.model,
        timings,
    })
}

/// Generates the world for `cfg.seed` and trains on it.
pub fn run_training(cfg: &TrainConfig, world: &WorldConfig) -> Result<RunResult> {
    let data = Dataset::generate(world, cfg.seed)?;
    run_training_on(cfg, &data)
}
