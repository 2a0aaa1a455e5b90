//! Experiment driver: per-trial simulation, NMSE over an area grid,
//! multi-trial averaging, the hyperslab threshold sweep and the analytic
//! complexity table.
//!
//! Every trial owns a ChaCha stream keyed by `(seed, trial)`. Draw order
//! within a trial is: node positions, one seed for the Fourier features,
//! then measurement noise node by node. All algorithms therefore see the
//! same networks and the same noise for a given trial.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Algorithm, MixingKind, SimConfig};
use crate::dictionary::Dictionary;
use crate::error::{check_len, Error, Result};
use crate::fields::FieldModel;
use crate::kernels::KernelBank;
use crate::learners::{
    central_chypass_step_with, dchypass_step_with, lms_step_with, local_only_step_with,
    zero_states, HyperslabParams, MultikernelModel, NodeState, Regressor, RffModel,
};
use crate::network::{Graph, MixingMatrix};

/// Number of trailing records averaged into the steady-state NMSE.
pub const STEADY_WINDOW: usize = 200;

/// Regularization tried when the unregularized Gram matrix is singular.
pub const FALLBACK_GAMMA: f64 = 0.01;

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// What a node's coefficient vector multiplies.
#[derive(Debug, Clone)]
pub enum FeatureMap {
    Kernel(MultikernelModel),
    Rff(RffModel),
}

impl FeatureMap {
    pub fn dim(&self) -> usize {
        match self {
            Self::Kernel(m) => m.dim(),
            Self::Rff(r) => r.dim(),
        }
    }

    pub fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        match self {
            Self::Kernel(m) => m.kernel_vector(x),
            Self::Rff(r) => r.features(x),
        }
    }

    pub fn kernel_model(&self) -> Option<&MultikernelModel> {
        match self {
            Self::Kernel(m) => Some(m),
            Self::Rff(_) => None,
        }
    }
}

/// Regular `n × n` lattice over `[0,1]²`, `x1` varying slowest.
pub fn grid_points(resolution: usize) -> Vec<[f64; 2]> {
    let step = 1.0 / (resolution - 1) as f64;
    (0..resolution)
        .flat_map(|i| (0..resolution).map(move |l| [i as f64 * step, l as f64 * step]))
        .collect()
}

/// `(1/J) Σ_j Σ_grid |ψ(x) - w_jᵀφ(x)|² / Σ_grid |ψ(x)|²`, evaluated point by
/// point.
pub fn nmse(
    weights: &[DVector<f64>],
    map: &FeatureMap,
    field: &FieldModel,
    k: usize,
    resolution: usize,
) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::InvalidParameter("no coefficient vectors".into()));
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter(
            "NMSE grid resolution must be ≥ 2".into(),
        ));
    }
    let mut num = vec![0.0; weights.len()];
    let mut den = 0.0;
    for p in grid_points(resolution) {
        let psi = field.eval(&p, k);
        let phi = map.features(&p)?;
        den += psi * psi;
        for (acc, w) in num.iter_mut().zip(weights) {
            check_len(phi.len(), w.len())?;
            let e = psi - w.dot(&phi);
            *acc += e * e;
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroField);
    }
    Ok(num.iter().map(|n| n / den).sum::<f64>() / weights.len() as f64)
}

/// Fast NMSE via `Σ|ψ - Φw|² = ψᵀψ - 2wᵀΦᵀψ + wᵀΦᵀΦw` with the
/// grid feature matrix `Φ` formed once per trial.
#[derive(Debug, Clone)]
pub struct NmseEvaluator {
    points: Vec<[f64; 2]>,
    phi: DMatrix<f64>,
    phi_t_phi: DMatrix<f64>,
    /// `(Φᵀψ, ψᵀψ)` for fields that do not depend on `k`.
    cached: Option<(DVector<f64>, f64)>,
}

impl NmseEvaluator {
    pub fn new(map: &FeatureMap, field: &FieldModel, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter(
                "NMSE grid resolution must be ≥ 2".into(),
            ));
        }
        let points = grid_points(resolution);
        let mut phi = DMatrix::zeros(points.len(), map.dim());
        for (i, p) in points.iter().enumerate() {
            phi.row_mut(i).copy_from(&map.features(p)?.transpose());
        }
        let phi_t_phi = phi.tr_mul(&phi);
        let mut eval = Self {
            points,
            phi,
            phi_t_phi,
            cached: None,
        };
        if field.is_static() {
            eval.cached = Some(eval.projections(field, 0)?);
        }
        Ok(eval)
    }

    fn projections(&self, field: &FieldModel, k: usize) -> Result<(DVector<f64>, f64)> {
        let psi = DVector::from_iterator(
            self.points.len(),
            self.points.iter().map(|p| field.eval(p, k)),
        );
        let energy = psi.norm_squared();
        if energy == 0.0 {
            return Err(Error::ZeroField);
        }
        Ok((self.phi.tr_mul(&psi), energy))
    }

    pub fn nmse(&self, weights: &[DVector<f64>], field: &FieldModel, k: usize) -> Result<f64> {
        let owned;
        let (b, c) = match &self.cached {
            Some((b, c)) => (b, *c),
            None => {
                owned = self.projections(field, k)?;
                (&owned.0, owned.1)
            }
        };
        let dim = self.phi.ncols();
        let mut w = DMatrix::zeros(dim, weights.len());
        for (j, wj) in weights.iter().enumerate() {
            check_len(dim, wj.len())?;
            w.set_column(j, wj);
        }
        let aw = &self.phi_t_phi * &w;
        let mut sum = 0.0;
        for j in 0..weights.len() {
            let wj = w.column(j);
            let quad = wj.dot(&aw.column(j));
            sum += (c - 2.0 * wj.dot(b) + quad).max(0.0) / c;
        }
        Ok(sum / weights.len() as f64)
    }
}

/// Reproducible stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Builds the bank, dictionary (from the node positions, in node order) and
/// Gram matrix. A singular Gram matrix at `γ = 0` is retried once with
/// [`FALLBACK_GAMMA`].
pub fn build_kernel_model(
    bandwidths: &[f64],
    tau: f64,
    gamma: f64,
    positions: &[[f64; 2]],
) -> Result<MultikernelModel> {
    let bank = KernelBank::from_bandwidths(bandwidths)?;
    let cands: Vec<Vec<f64>> = positions.iter().map(|p| p.to_vec()).collect();
    let dict = Dictionary::build_coherence(&bank, &cands, tau)?;
    match MultikernelModel::new(bank.clone(), dict.clone(), gamma) {
        Err(Error::Factorization { centers, .. }) if gamma == 0.0 => {
            log::warn!(
                "Gram matrix singular for r = {centers}; retrying with gamma = {FALLBACK_GAMMA}"
            );
            MultikernelModel::new(bank, dict, FALLBACK_GAMMA)
        }
        other => other,
    }
}

/// Network, combine weights and feature map for one trial.
#[derive(Debug, Clone)]
pub struct TrialSetup {
    pub graph: Graph,
    pub mixing: MixingMatrix,
    pub map: FeatureMap,
}

pub fn setup_trial<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<TrialSetup> {
    let graph = Graph::random_geometric(cfg.nodes, cfg.radius, rng)?;
    let rff_seed: u64 = rng.random();
    let mixing = match cfg.mixing {
        MixingKind::MetropolisHastings => MixingMatrix::metropolis_hastings(&graph),
        MixingKind::Identity => MixingMatrix::identity(cfg.nodes),
    };
    let map = if cfg.algorithm == Algorithm::RffDklms {
        let mut r = ChaCha8Rng::seed_from_u64(rff_seed);
        FeatureMap::Rff(RffModel::sample(
            cfg.rff_features,
            2,
            cfg.bandwidths[0],
            &mut r,
        )?)
    } else {
        FeatureMap::Kernel(build_kernel_model(
            &cfg.bandwidths,
            cfg.tau,
            cfg.gamma,
            graph.positions(),
        )?)
    };
    Ok(TrialSetup { graph, mixing, map })
}

/// Raw per-trial record.
#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub trial: u64,
    pub setup: TrialSetup,
    pub iters: Vec<usize>,
    /// Per-record NMSE of this trial alone.
    pub nmse: Vec<f64>,
    pub updates: Vec<u64>,
    /// One vector per node (a single shared vector for `central`).
    pub final_weights: Vec<DVector<f64>>,
    pub elapsed: Duration,
}

impl TrialOutput {
    pub fn curve(&self) -> NmseCurve {
        average(std::slice::from_ref(self))
    }

    /// Network-average estimate `(1/J) Σ_j w_jᵀφ(x)`.
    pub fn estimate(&self, x: &[f64]) -> Result<f64> {
        let phi = self.setup.map.features(x)?;
        let sum: f64 = self.final_weights.iter().map(|w| w.dot(&phi)).sum();
        Ok(sum / self.final_weights.len() as f64)
    }
}

enum Learner {
    Apsm {
        regs: Vec<Regressor>,
        params: HyperslabParams,
        diffuse: bool,
    },
    Lms {
        feats: Vec<DVector<f64>>,
    },
    Central {
        regs: Vec<Regressor>,
        w: DVector<f64>,
        counts: Vec<u64>,
    },
}

fn regressors(
    cfg: &SimConfig,
    model: &MultikernelModel,
    positions: &[[f64; 2]],
) -> Result<Vec<Regressor>> {
    positions
        .iter()
        .map(|p| match cfg.select {
            Some(s) => model.selective_regressor(p, s),
            None => model.regressor(p),
        })
        .collect()
}

pub fn run_trial(cfg: &SimConfig, field: &FieldModel, trial: u64) -> Result<TrialOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rng = trial_rng(cfg.seed, trial);
    let setup = setup_trial(cfg, &mut rng)?;
    let positions = setup.graph.positions().to_vec();
    let dim = setup.map.dim();
    let evaluator = NmseEvaluator::new(&setup.map, field, cfg.nmse_grid)?;

    let mut learner = match (&setup.map, cfg.algorithm) {
        (FeatureMap::Kernel(model), Algorithm::Dchypass | Algorithm::Local) => Learner::Apsm {
            regs: regressors(cfg, model, &positions)?,
            params: HyperslabParams::new(cfg.epsilon, cfg.mu)?,
            diffuse: cfg.algorithm == Algorithm::Dchypass,
        },
        (FeatureMap::Kernel(model), Algorithm::Central) => Learner::Central {
            regs: regressors(cfg, model, &positions)?,
            w: DVector::zeros(dim),
            counts: vec![0; cfg.nodes],
        },
        (map, _) => Learner::Lms {
            feats: positions
                .iter()
                .map(|p| map.features(p))
                .collect::<Result<_>>()?,
        },
    };
    let mut states: Vec<NodeState> = zero_states(cfg.nodes, dim);

    let capacity = cfg.iterations / cfg.nmse_every + 1;
    let mut iters = Vec::with_capacity(capacity);
    let mut nmse = Vec::with_capacity(capacity);
    let mut ys = vec![0.0; cfg.nodes];

    for k in 0..cfg.iterations {
        for (y, p) in ys.iter_mut().zip(&positions) {
            *y = field.measure(p, k, cfg.noise_var, &mut rng);
        }
        match &mut learner {
            Learner::Apsm {
                regs,
                params,
                diffuse,
            } => {
                if *diffuse {
                    dchypass_step_with(&mut states, regs, &ys, params, &setup.mixing)?;
                } else {
                    local_only_step_with(&mut states, regs, &ys, params)?;
                }
            }
            Learner::Lms { feats } => {
                lms_step_with(&mut states, feats, &ys, cfg.mu, &setup.mixing)?
            }
            Learner::Central { regs, w, counts } => {
                for j in central_chypass_step_with(w, regs, &ys, cfg.mu, cfg.epsilon)? {
                    counts[j] += 1;
                }
            }
        }
        if k % cfg.nmse_every == 0 || k + 1 == cfg.iterations {
            let value = match &learner {
                Learner::Central { w, .. } => evaluator.nmse(std::slice::from_ref(w), field, k)?,
                _ => {
                    let ws: Vec<DVector<f64>> =
                        states.iter().map(|s| s.weights().clone()).collect();
                    evaluator.nmse(&ws, field, k)?
                }
            };
            iters.push(k);
            nmse.push(value);
        }
    }

    let (updates, final_weights) = match learner {
        Learner::Central { w, counts, .. } => (counts, vec![w]),
        _ => (
            states.iter().map(|s| s.updates_performed()).collect(),
            states.iter().map(|s| s.weights().clone()).collect(),
        ),
    };
    Ok(TrialOutput {
        trial,
        setup,
        iters,
        nmse,
        updates,
        final_weights,
        elapsed: start.elapsed(),
    })
}

/// Runs trials `0..cfg.trials`, in parallel on up to `threads` workers
/// (all available cores when `None`). Output order is by trial index.
pub fn run_trials(
    cfg: &SimConfig,
    field: &FieldModel,
    threads: Option<usize>,
) -> Result<Vec<TrialOutput>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| run_trial(cfg, field, t))
            .collect()
    })
}

/// Averaged learning curve.
#[derive(Debug, Clone, PartialEq)]
pub struct NmseCurve {
    pub iters: Vec<usize>,
    pub nmse: Vec<f64>,
    /// Mean over trials of each node's update count.
    pub updates: Vec<f64>,
    pub trials: usize,
    pub wall_time: Duration,
}

impl NmseCurve {
    pub fn nmse_db(&self) -> Vec<f64> {
        self.nmse.iter().map(|&v| to_db(v)).collect()
    }

    /// Mean of the last [`STEADY_WINDOW`] records (all of them if fewer).
    pub fn steady_state(&self) -> f64 {
        let n = self.nmse.len().min(STEADY_WINDOW);
        let tail = &self.nmse[self.nmse.len() - n..];
        tail.iter().sum::<f64>() / n as f64
    }

    pub fn steady_state_db(&self) -> f64 {
        to_db(self.steady_state())
    }

    pub fn mean_updates(&self) -> f64 {
        self.updates.iter().sum::<f64>() / self.updates.len() as f64
    }
}

/// Averages across trials in slice order. The grid energy at time `k` is
/// the same in every trial, so the mean of per-trial ratios equals the mean
/// numerator over the energy.
pub fn average(outputs: &[TrialOutput]) -> NmseCurve {
    let first = &outputs[0];
    let n = outputs.len() as f64;
    let mut sum = vec![0.0; first.nmse.len()];
    let mut updates = vec![0.0; first.updates.len()];
    let mut wall = Duration::ZERO;
    for o in outputs {
        for (acc, v) in sum.iter_mut().zip(&o.nmse) {
            *acc += v;
        }
        for (acc, &u) in updates.iter_mut().zip(&o.updates) {
            *acc += u as f64;
        }
        wall += o.elapsed;
    }
    NmseCurve {
        iters: first.iters.clone(),
        nmse: sum.into_iter().map(|s| s / n).collect(),
        updates: updates.into_iter().map(|u| u / n).collect(),
        trials: outputs.len(),
        wall_time: wall,
    }
}

pub fn average_trials(
    cfg: &SimConfig,
    field: &FieldModel,
    threads: Option<usize>,
) -> Result<NmseCurve> {
    Ok(average(&run_trials(cfg, field, threads)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub mean_updates: f64,
    pub steady_nmse_db: f64,
}

/// Runs `cfg` once per threshold. Nonzero thresholds use `mu_slab` when set.
pub fn hyperslab_sweep(
    cfg: &SimConfig,
    field: &FieldModel,
    epsilons: &[f64],
    threads: Option<usize>,
) -> Result<Vec<SweepPoint>> {
    epsilons
        .iter()
        .map(|&eps| {
            let mut c = cfg.clone();
            c.epsilon = eps;
            if eps > 0.0 {
                c.mu = cfg.mu_slab.unwrap_or(cfg.mu);
            }
            let curve = average_trials(&c, field, threads)?;
            Ok(SweepPoint {
                epsilon: eps,
                mean_updates: curve.mean_updates(),
                steady_nmse_db: curve.steady_state_db(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityParams {
    pub nodes: u64,
    pub edges: u64,
    pub centers: u64,
    pub kernels: u64,
    pub input_dim: u64,
    pub select: u64,
    pub rff_features: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexityRow {
    pub algorithm: &'static str,
    pub multiplications: u64,
    pub overhead: u64,
}

/// Multiplications and transmitted scalars per network iteration, with
/// `p³` for a `p × p` inversion. `Qr²` counts per-kernel block solves.
pub fn complexity_table(p: &ComplexityParams) -> Vec<ComplexityRow> {
    let ComplexityParams {
        nodes: j,
        edges: e,
        centers: r,
        kernels: q,
        input_dim: l,
        select: s,
        rff_features: rf,
    } = *p;
    let qr = q * r;
    vec![
        ComplexityRow {
            algorithm: "D-CHYPASS",
            multiplications: (2 * e + j * (l + 4)) * qr + (q * r * r + 2) * j,
            overhead: j * qr,
        },
        ComplexityRow {
            algorithm: "D-CHYPASS (selective)",
            multiplications: ((l + 1) * qr + s.pow(3) + s * s + 2) * j + (2 * e + 3 * j) * s,
            overhead: j * qr,
        },
        ComplexityRow {
            algorithm: "DMKLMS",
            multiplications: (2 * e + j * (l + 4)) * qr + j,
            overhead: j * qr,
        },
        ComplexityRow {
            algorithm: "FATC-KLMS",
            multiplications: (2 * e + j * (l + 4)) * r + j,
            overhead: j * r,
        },
        ComplexityRow {
            algorithm: "MKDiCE",
            multiplications: (6 * e + 4 * j + l + 2) * qr + j * (1 + qr * qr + qr.pow(3)),
            overhead: 2 * j * qr + 2 * e * qr,
        },
        ComplexityRow {
            algorithm: "RFF-DKLMS",
            multiplications: j * (4 * rf + 1) + (2 * e + j) * rf,
            overhead: j * rf,
        },
    ]
}
