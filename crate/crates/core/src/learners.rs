//! Per-iteration updates for D-CHYPASS and the baselines.
//!
//! Node positions never move, so the harness builds one [`Regressor`] per node
//! up front and feeds only fresh measurements `y` into the `*_with` step
//! functions. The sample-based wrappers rebuild regressors each call and
//! exist for callers that move their inputs around.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::dictionary::Dictionary;
use crate::error::{check_len, Error, Result};
use crate::kernels::{GramMatrix, KernelBank};
use crate::network::MixingMatrix;

/// One node's coefficient vector and how many times it actually moved.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub index: usize,
    w: DVector<f64>,
    updates: u64,
}

impl NodeState {
    pub fn zeros(index: usize, dim: usize) -> Self {
        Self::with_weights(index, DVector::zeros(dim))
    }

    pub fn with_weights(index: usize, w: DVector<f64>) -> Self {
        Self {
            index,
            w,
            updates: 0,
        }
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn updates_performed(&self) -> u64 {
        self.updates
    }

    fn set_weights(&mut self, w: DVector<f64>) {
        self.w = w;
    }
}

pub fn zero_states(nodes: usize, dim: usize) -> Vec<NodeState> {
    (0..nodes).map(|j| NodeState::zeros(j, dim)).collect()
}

/// Hyperslab half-width `ε` and relaxation `μ ∈ (0, 2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperslabParams {
    epsilon: f64,
    mu: f64,
}

impl HyperslabParams {
    pub fn new(epsilon: f64, mu: f64) -> Result<Self> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "hyperslab threshold must be nonnegative, got {epsilon}"
            )));
        }
        if !(mu > 0.0 && mu < 2.0) {
            return Err(Error::InvalidParameter(format!(
                "APSM step size must lie in (0, 2), got {mu}"
            )));
        }
        Ok(Self { epsilon, mu })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
    pub k: usize,
}

/// Kernel vector `κ(x)` together with the K-metric gradient direction used
/// by the projection, `d = K⁻¹κ(x)`, and `κ(x)ᵀd`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    features: DVector<f64>,
    direction: DVector<f64>,
    denom: f64,
}

impl Regressor {
    pub fn full(gram: &GramMatrix, features: DVector<f64>) -> Result<Self> {
        let direction = gram.solve(&features)?;
        Self::from_parts(features, direction)
    }

    /// Restricts the correction to `coords`: `d_S = K_SS⁻¹κ_S`, zero elsewhere.
    pub fn selective(gram: &GramMatrix, features: DVector<f64>, coords: &[usize]) -> Result<Self> {
        check_len(gram.dim(), features.len())?;
        let sub = gram.metric_submatrix(coords);
        let k_s = DVector::from_iterator(coords.len(), coords.iter().map(|&c| features[c]));
        let chol = sub.cholesky().ok_or(Error::Factorization {
            centers: coords.len(),
            kernels: 1,
            gamma: gram.gamma(),
        })?;
        let d_s = chol.solve(&k_s);
        let mut direction = DVector::zeros(features.len());
        for (i, &c) in coords.iter().enumerate() {
            direction[c] = d_s[i];
        }
        Self::from_parts(features, direction)
    }

    fn from_parts(features: DVector<f64>, direction: DVector<f64>) -> Result<Self> {
        let denom = features.dot(&direction);
        if !(denom > 0.0 && denom.is_finite()) {
            return Err(Error::DegenerateRegressor);
        }
        Ok(Self {
            features,
            direction,
            denom,
        })
    }

    pub fn features(&self) -> &DVector<f64> {
        &self.features
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.direction
    }

    pub fn denom(&self) -> f64 {
        self.denom
    }

    /// Coefficient `c` with `P(w) = w - c·d`; zero inside the slab.
    fn correction(&self, w: &DVector<f64>, y: f64, epsilon: f64) -> f64 {
        let e = w.dot(&self.features) - y;
        if e > epsilon {
            (e - epsilon) / self.denom
        } else if e < -epsilon {
            (e + epsilon) / self.denom
        } else {
            0.0
        }
    }
}

/// Kernel bank, dictionary and Gram matrix shared by every node.
#[derive(Debug, Clone)]
pub struct MultikernelModel {
    bank: KernelBank,
    dict: Dictionary,
    gram: GramMatrix,
}

impl MultikernelModel {
    pub fn new(bank: KernelBank, dict: Dictionary, gamma: f64) -> Result<Self> {
        let gram = GramMatrix::build(&bank, &dict, gamma)?;
        Ok(Self { bank, dict, gram })
    }

    pub fn bank(&self) -> &KernelBank {
        &self.bank
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn gram(&self) -> &GramMatrix {
        &self.gram
    }

    /// Coefficient dimension `rQ`.
    pub fn dim(&self) -> usize {
        self.gram.dim()
    }

    pub fn kernel_vector(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.bank.kernel_vector(&self.dict, x)
    }

    pub fn regressor(&self, x: &[f64]) -> Result<Regressor> {
        Regressor::full(&self.gram, self.kernel_vector(x)?)
    }

    /// Regressor touching all `Q` coefficients of the `s` most coherent centers.
    pub fn selective_regressor(&self, x: &[f64], s: usize) -> Result<Regressor> {
        let r = self.dict.len();
        let centers = self.dict.select_top_s(&self.bank, x, s)?;
        let coords: Vec<usize> = (0..self.bank.len())
            .flat_map(|q| centers.iter().map(move |&l| q * r + l))
            .collect();
        Regressor::selective(&self.gram, self.kernel_vector(x)?, &coords)
    }

    fn regressors(&self, samples: &[Sample]) -> Result<(Vec<Regressor>, Vec<f64>)> {
        let regs = samples
            .iter()
            .map(|s| self.regressor(&s.x))
            .collect::<Result<Vec<_>>>()?;
        Ok((regs, samples.iter().map(|s| s.y).collect()))
    }

    fn features(&self, samples: &[Sample]) -> Result<(Vec<DVector<f64>>, Vec<f64>)> {
        let feats = samples
            .iter()
            .map(|s| self.kernel_vector(&s.x))
            .collect::<Result<Vec<_>>>()?;
        Ok((feats, samples.iter().map(|s| s.y).collect()))
    }
}

/// K-metric projection of `w` onto `{v : |vᵀκx - y| ≤ ε}`.
pub fn project_hyperslab(
    w: &DVector<f64>,
    kx: &DVector<f64>,
    y: f64,
    epsilon: f64,
    gram: &GramMatrix,
) -> Result<DVector<f64>> {
    check_len(gram.dim(), w.len())?;
    let reg = Regressor::full(gram, kx.clone())?;
    Ok(project_with(w, &reg, y, epsilon))
}

pub fn project_with(w: &DVector<f64>, reg: &Regressor, y: f64, epsilon: f64) -> DVector<f64> {
    let c = reg.correction(w, y, epsilon);
    if c == 0.0 {
        w.clone()
    } else {
        w - reg.direction() * c
    }
}

/// `‖w - P(w)‖_K`.
pub fn local_cost(
    w: &DVector<f64>,
    reg: &Regressor,
    y: f64,
    epsilon: f64,
    gram: &GramMatrix,
) -> Result<f64> {
    let c = reg.correction(w, y, epsilon);
    gram.k_norm(&(reg.direction() * c))
}

/// Relaxed projection `w' = w - μ(w - P(w))`, in place. Returns whether the
/// node was outside its slab.
pub fn apsm_local(
    state: &mut NodeState,
    reg: &Regressor,
    y: f64,
    params: &HyperslabParams,
) -> bool {
    let c = reg.correction(&state.w, y, params.epsilon);
    if c == 0.0 {
        return false;
    }
    state.w.axpy(-params.mu * c, reg.direction(), 1.0);
    state.updates += 1;
    true
}

/// Replaces each node's vector by the `G`-weighted sum of its neighbors'.
pub fn diffuse(states: &mut [NodeState], g: &MixingMatrix) -> Result<()> {
    let current: Vec<DVector<f64>> = states.iter().map(|s| s.w.clone()).collect();
    for (state, w) in states.iter_mut().zip(g.combine(&current)?) {
        state.set_weights(w);
    }
    Ok(())
}

fn check_batch(states: &[NodeState], n_regs: usize, n_ys: usize) -> Result<()> {
    check_len(states.len(), n_regs)?;
    check_len(states.len(), n_ys)
}

/// Local APSM at every node, then diffusion.
pub fn dchypass_step_with(
    states: &mut [NodeState],
    regs: &[Regressor],
    ys: &[f64],
    params: &HyperslabParams,
    g: &MixingMatrix,
) -> Result<()> {
    local_only_step_with(states, regs, ys, params)?;
    diffuse(states, g)
}

pub fn dchypass_step(
    states: &mut [NodeState],
    samples: &[Sample],
    params: &HyperslabParams,
    g: &MixingMatrix,
    model: &MultikernelModel,
) -> Result<()> {
    let (regs, ys) = model.regressors(samples)?;
    dchypass_step_with(states, &regs, &ys, params, g)
}

/// Local APSM at every node without any exchange.
pub fn local_only_step_with(
    states: &mut [NodeState],
    regs: &[Regressor],
    ys: &[f64],
    params: &HyperslabParams,
) -> Result<()> {
    check_batch(states, regs.len(), ys.len())?;
    for ((state, reg), &y) in states.iter_mut().zip(regs).zip(ys) {
        check_len(reg.features.len(), state.w.len())?;
        apsm_local(state, reg, y, params);
    }
    Ok(())
}

pub fn local_only_step(
    states: &mut [NodeState],
    samples: &[Sample],
    params: &HyperslabParams,
    model: &MultikernelModel,
) -> Result<()> {
    let (regs, ys) = model.regressors(samples)?;
    local_only_step_with(states, &regs, &ys, params)
}

/// Euclidean LMS `w' = w + μ(y - wᵀφ)φ`, in place.
pub fn lms_local(state: &mut NodeState, features: &DVector<f64>, y: f64, mu: f64) -> bool {
    let e = y - state.w.dot(features);
    if e == 0.0 {
        return false;
    }
    state.w.axpy(mu * e, features, 1.0);
    state.updates += 1;
    true
}

/// Diffusion LMS over arbitrary fixed features: kernel vectors for the
/// multikernel and single-kernel baselines, Fourier features for RFF.
pub fn lms_step_with(
    states: &mut [NodeState],
    features: &[DVector<f64>],
    ys: &[f64],
    mu: f64,
    g: &MixingMatrix,
) -> Result<()> {
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "LMS step size must be positive, got {mu}"
        )));
    }
    check_batch(states, features.len(), ys.len())?;
    for ((state, phi), &y) in states.iter_mut().zip(features).zip(ys) {
        check_len(phi.len(), state.w.len())?;
        lms_local(state, phi, y, mu);
    }
    diffuse(states, g)
}

pub fn dmklms_step(
    states: &mut [NodeState],
    samples: &[Sample],
    mu: f64,
    g: &MixingMatrix,
    model: &MultikernelModel,
) -> Result<()> {
    let (feats, ys) = model.features(samples)?;
    lms_step_with(states, &feats, &ys, mu, g)
}

/// DMKLMS with a single kernel.
pub fn fatc_klms_step(
    states: &mut [NodeState],
    samples: &[Sample],
    mu: f64,
    g: &MixingMatrix,
    model: &MultikernelModel,
) -> Result<()> {
    if model.bank().len() != 1 {
        return Err(Error::InvalidParameter(format!(
            "FATC-KLMS uses exactly one kernel, got {}",
            model.bank().len()
        )));
    }
    dmklms_step(states, samples, mu, g, model)
}

/// Random Fourier features for a Gaussian kernel, shared by all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RffModel {
    /// `r_RFF × L`, rows drawn from `N(0, ζ⁻²I)`.
    omega: DMatrix<f64>,
    /// Uniform on `[0, 2π)`.
    phases: DVector<f64>,
}

impl RffModel {
    pub fn sample<R: Rng + ?Sized>(
        features: usize,
        input_dim: usize,
        bandwidth: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if features == 0 || input_dim == 0 {
            return Err(Error::InvalidParameter(
                "RFF model needs at least one feature and one input dimension".into(),
            ));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        let normal = Normal::new(0.0, 1.0 / bandwidth).expect("positive std");
        let uniform = Uniform::new(0.0, std::f64::consts::TAU).expect("nonempty range");
        // Row-major draw order keeps streams stable across nalgebra layouts.
        let mut omega = DMatrix::zeros(features, input_dim);
        for i in 0..features {
            for l in 0..input_dim {
                omega[(i, l)] = normal.sample(rng);
            }
        }
        let phases = DVector::from_fn(features, |_, _| uniform.sample(rng));
        Ok(Self { omega, phases })
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.omega.ncols()
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn phases(&self) -> &DVector<f64> {
        &self.phases
    }

    /// `√(2/r)·cos(ω_iᵀx + b_i)`.
    pub fn features(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_len(self.input_dim(), x.len())?;
        let scale = (2.0 / self.dim() as f64).sqrt();
        Ok(DVector::from_fn(self.dim(), |i, _| {
            let arg: f64 = self.omega.row(i).iter().zip(x).map(|(o, v)| o * v).sum();
            scale * (arg + self.phases[i]).cos()
        }))
    }
}

pub fn rff_dklms_step(
    rff: &RffModel,
    states: &mut [NodeState],
    samples: &[Sample],
    mu: f64,
    g: &MixingMatrix,
) -> Result<()> {
    let feats = samples
        .iter()
        .map(|s| rff.features(&s.x))
        .collect::<Result<Vec<_>>>()?;
    let ys: Vec<f64> = samples.iter().map(|s| s.y).collect();
    lms_step_with(states, &feats, &ys, mu, g)
}

/// Fusion-center update `w ← w - μ Σ_j (w - P_j(w))`, all projections taken
/// at the same `w`. Returns the indices of the violated slabs.
pub fn central_chypass_step_with(
    w: &mut DVector<f64>,
    regs: &[Regressor],
    ys: &[f64],
    mu: f64,
    epsilon: f64,
) -> Result<Vec<usize>> {
    check_len(regs.len(), ys.len())?;
    if !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step size must be positive, got {mu}"
        )));
    }
    let mut delta = DVector::zeros(w.len());
    let mut violated = Vec::new();
    for (j, (reg, &y)) in regs.iter().zip(ys).enumerate() {
        check_len(w.len(), reg.features.len())?;
        let c = reg.correction(w, y, epsilon);
        if c != 0.0 {
            delta.axpy(c, reg.direction(), 1.0);
            violated.push(j);
        }
    }
    w.axpy(-mu, &delta, 1.0);
    Ok(violated)
}

pub fn central_chypass_step(
    w: &mut DVector<f64>,
    samples: &[Sample],
    mu: f64,
    epsilon: f64,
    model: &MultikernelModel,
) -> Result<Vec<usize>> {
    let (regs, ys) = model.regressors(samples)?;
    central_chypass_step_with(w, &regs, &ys, mu, epsilon)
}
