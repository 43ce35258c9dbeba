//! GRU cell, confusion-network timestep encoding and the turn combiner.
//!
//! At each timestep every hypothesis runs through the same GRU cell
//! against the shared previous hidden state, and the k resulting states are
//! pooled into the next hidden state. A network whose timesteps each hold a
//! single certain hypothesis therefore reduces to a plain sequential GRU.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cnet::ConfusionNetwork;
use crate::error::{Error, Result};
use crate::numerics::{ParamKind, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolingMode {
    Average,
    Weighted,
}

impl PoolingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PoolingMode::Average => "average",
            PoolingMode::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for PoolingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(PoolingMode::Average),
            "weighted" => Ok(PoolingMode::Weighted),
            other => Err(Error::Config(format!("unknown pooling mode {other:?}"))),
        }
    }
}

/// Pooling of hypothesis states within one timestep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pooling {
    pub mode: PoolingMode,
    /// Divide weighted-pooling scores by their sum.
    pub renormalize: bool,
}

impl Pooling {
    pub const AVERAGE: Pooling = Pooling {
        mode: PoolingMode::Average,
        renormalize: false,
    };
    pub const WEIGHTED: Pooling = Pooling {
        mode: PoolingMode::Weighted,
        renormalize: false,
    };
}

impl From<PoolingMode> for Pooling {
    fn from(mode: PoolingMode) -> Self {
        Pooling {
            mode,
            renormalize: false,
        }
    }
}

/// Update (`z`), candidate (`h`) and reset (`r`) parameters of a GRU cell.
#[derive(Clone, Debug, PartialEq)]
pub struct GruParams {
    pub w_z: Tensor,
    pub u_z: Tensor,
    pub b_z: Tensor,
    pub w_h: Tensor,
    pub u_h: Tensor,
    pub b_h: Tensor,
    pub w_r: Tensor,
    pub u_r: Tensor,
    pub b_r: Tensor,
}

/// Parameter names in store order, see [`GruParams::push_into`].
pub const GRU_PARAM_NAMES: [&str; 9] = [
    "w_z", "u_z", "b_z", "w_h", "u_h", "b_h", "w_r", "u_r", "b_r",
];

impl GruParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let w = || Tensor::zeros(&[hidden_dim, input_dim]);
        let u = || Tensor::zeros(&[hidden_dim, hidden_dim]);
        let b = || Tensor::zeros(&[hidden_dim]);
        Self {
            w_z: w(),
            u_z: u(),
            b_z: b(),
            w_h: w(),
            u_h: u(),
            b_h: b(),
            w_r: w(),
            u_r: u(),
            b_r: b(),
        }
    }

    /// Glorot-uniform matrices, zero biases.
    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(input_dim, hidden_dim);
        for w in [&mut p.w_z, &mut p.w_h, &mut p.w_r] {
            *w = Tensor::glorot_uniform(hidden_dim, input_dim, rng);
        }
        for u in [&mut p.u_z, &mut p.u_h, &mut p.u_r] {
            *u = Tensor::glorot_uniform(hidden_dim, hidden_dim, rng);
        }
        p
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    fn tensors(&self) -> [&Tensor; 9] {
        [
            &self.w_z, &self.u_z, &self.b_z, &self.w_h, &self.u_h, &self.b_h, &self.w_r, &self.u_r,
            &self.b_r,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let (d_in, d_h) = (self.input_dim(), self.hidden_dim());
        for (name, t) in GRU_PARAM_NAMES.iter().zip(self.tensors()) {
            let expected: Vec<usize> = match name.as_bytes()[0] {
                b'w' => vec![d_h, d_in],
                b'u' => vec![d_h, d_h],
                _ => vec![d_h],
            };
            if t.shape() != expected.as_slice() {
                return Err(Error::structural(format!(
                    "GRU parameter {name} has shape {:?}, expected {expected:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Appends the nine tensors as `<prefix>.<name>`; returns the index of
    /// the first one.
    pub fn push_into(&self, store: &mut ParamStore, prefix: &str) -> usize {
        let first = store.len();
        for (name, t) in GRU_PARAM_NAMES.iter().zip(self.tensors()) {
            let kind = if name.starts_with('b') {
                ParamKind::Bias
            } else {
                ParamKind::Weight
            };
            store.push(format!("{prefix}.{name}"), kind, t.clone());
        }
        first
    }

    /// Reads back nine consecutive tensors written by [`GruParams::push_into`].
    pub fn from_store(store: &ParamStore, first: usize) -> Result<Self> {
        if first + 9 > store.len() {
            return Err(Error::structural("store too short for GRU parameters"));
        }
        let t = |i: usize| store.get(first + i).value.clone();
        let p = Self {
            w_z: t(0),
            u_z: t(1),
            b_z: t(2),
            w_h: t(3),
            u_h: t(4),
            b_h: t(5),
            w_r: t(6),
            u_r: t(7),
            b_r: t(8),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn bind(&self, tape: &mut Tape) -> GruVars {
        let vars: Vec<Var> = self.tensors().iter().map(|t| tape.leaf(t)).collect();
        GruVars::from_slice(&vars, self.input_dim(), self.hidden_dim())
    }

    /// One GRU step on plain vectors.
    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let xv = tape.constant(x);
        let hv = tape.constant(h_prev);
        let out = gru_step(&mut tape, xv, hv, &vars)?;
        Ok(tape.value(out).to_vec())
    }

    /// Pools one timestep given `(embedding, confidence)` pairs.
    pub fn encode_timestep(
        &self,
        hyps: &[(Vec<f64>, f64)],
        h_prev: &[f64],
        pooling: Pooling,
    ) -> Result<Vec<f64>> {
        self.validate()?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let hv = tape.constant(h_prev);
        let inputs: Vec<(Var, f64)> = hyps.iter().map(|(x, s)| (tape.constant(x), *s)).collect();
        let out = encode_timestep(&mut tape, &inputs, hv, &vars, pooling)?;
        Ok(tape.value(out).to_vec())
    }

    /// Folds the network from `h0`; returns the final state and the state
    /// after every timestep.
    pub fn encode_cnet<F>(
        &self,
        cnet: &ConfusionNetwork,
        embed: F,
        h0: &[f64],
        pooling: Pooling,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)>
    where
        F: Fn(&str) -> Vec<f64>,
    {
        self.validate()?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let h0v = tape.constant(h0);
        let enc = encode_cnet(
            &mut tape,
            cnet,
            |t, tok| Ok(t.constant(&embed(tok))),
            h0v,
            &vars,
            pooling,
        )?;
        let trace = enc.trace.iter().map(|&v| tape.value(v).to_vec()).collect();
        Ok((tape.value(enc.last).to_vec(), trace))
    }
}

/// GRU parameters recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub u_z: Var,
    pub b_z: Var,
    pub w_h: Var,
    pub u_h: Var,
    pub b_h: Var,
    pub w_r: Var,
    pub u_r: Var,
    pub b_r: Var,
    input_dim: usize,
    hidden_dim: usize,
}

impl GruVars {
    /// `vars` in [`GRU_PARAM_NAMES`] order.
    pub fn from_slice(vars: &[Var], input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            w_z: vars[0],
            u_z: vars[1],
            b_z: vars[2],
            w_h: vars[3],
            u_h: vars[4],
            b_h: vars[5],
            w_r: vars[6],
            u_r: vars[7],
            b_r: vars[8],
            input_dim,
            hidden_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }
}

/// Gate pre-activation terms that depend only on the previous state and so
/// are shared by all hypotheses of a timestep.
struct SharedGates {
    z: Var,
    r: Var,
}

fn shared_gates(tape: &mut Tape, h_prev: Var, p: &GruVars) -> SharedGates {
    let uz = tape.matvec(p.u_z, h_prev);
    let z = tape.add(uz, p.b_z);
    let ur = tape.matvec(p.u_r, h_prev);
    let r = tape.add(ur, p.b_r);
    SharedGates { z, r }
}

fn step_with_shared(
    tape: &mut Tape,
    x: Var,
    h_prev: Var,
    shared: &SharedGates,
    p: &GruVars,
) -> Var {
    let wz = tape.matvec(p.w_z, x);
    let za = tape.add(wz, shared.z);
    let z = tape.sigmoid(za);

    let wr = tape.matvec(p.w_r, x);
    let ra = tape.add(wr, shared.r);
    let r = tape.sigmoid(ra);

    let rh = tape.mul(r, h_prev);
    let uh = tape.matvec(p.u_h, rh);
    let wh = tape.matvec(p.w_h, x);
    let ha = tape.add(wh, uh);
    let ha = tape.add(ha, p.b_h);
    let candidate = tape.tanh(ha);

    let keep = tape.mul(z, h_prev);
    let one_minus_z = tape.one_minus(z);
    let update = tape.mul(one_minus_z, candidate);
    tape.add(keep, update)
}

fn check_dims(tape: &Tape, x: Var, h_prev: Var, p: &GruVars) -> Result<()> {
    if tape.size(x) != p.input_dim || tape.size(h_prev) != p.hidden_dim {
        return Err(Error::structural(format!(
            "GRU expects input {} and state {}, got {} and {}",
            p.input_dim,
            p.hidden_dim,
            tape.size(x),
            tape.size(h_prev)
        )));
    }
    Ok(())
}

/// `z = σ(W_z x + U_z h + b_z)`, `r = σ(W_r x + U_r h + b_r)`,
/// `h̃ = tanh(W_h x + U_h (r·h) + b_h)`, `h' = z·h + (1 - z)·h̃`.
pub fn gru_step(tape: &mut Tape, x: Var, h_prev: Var, p: &GruVars) -> Result<Var> {
    check_dims(tape, x, h_prev, p)?;
    let shared = shared_gates(tape, h_prev, p);
    Ok(step_with_shared(tape, x, h_prev, &shared, p))
}

/// Runs every `(input, confidence)` hypothesis against the same `h_prev`
/// and pools the resulting states.
pub fn encode_timestep(
    tape: &mut Tape,
    hyps: &[(Var, f64)],
    h_prev: Var,
    p: &GruVars,
    pooling: Pooling,
) -> Result<Var> {
    if hyps.is_empty() {
        return Err(Error::structural("timestep with no hypotheses"));
    }
    for &(x, score) in hyps {
        check_dims(tape, x, h_prev, p)?;
        if !(score >= 0.0) || !score.is_finite() {
            return Err(Error::structural(format!(
                "invalid confidence score {score}"
            )));
        }
    }
    let weights: Vec<f64> = match pooling.mode {
        PoolingMode::Average => vec![1.0 / hyps.len() as f64; hyps.len()],
        PoolingMode::Weighted => {
            let total: f64 = hyps.iter().map(|h| h.1).sum();
            if total == 0.0 {
                return Err(Error::structural("weighted pooling with all-zero scores"));
            }
            if pooling.renormalize {
                hyps.iter().map(|h| h.1 / total).collect()
            } else {
                hyps.iter().map(|h| h.1).collect()
            }
        }
    };
    let shared = shared_gates(tape, h_prev, p);
    let terms: Vec<(Var, f64)> = hyps
        .iter()
        .zip(weights)
        .map(|(&(x, _), w)| (step_with_shared(tape, x, h_prev, &shared, p), w))
        .collect();
    Ok(tape.weighted_sum(&terms))
}

#[derive(Clone, Debug)]
pub struct CnetEncoding {
    pub last: Var,
    /// State after each timestep.
    pub trace: Vec<Var>,
}

/// Left fold of [`encode_timestep`] over the network starting at `h0`,
/// with confidences `exp(log_score)`. An empty network returns `h0`.
pub fn encode_cnet<E>(
    tape: &mut Tape,
    cnet: &ConfusionNetwork,
    mut embed: E,
    h0: Var,
    p: &GruVars,
    pooling: Pooling,
) -> Result<CnetEncoding>
where
    E: FnMut(&mut Tape, &str) -> Result<Var>,
{
    let mut h = h0;
    let mut trace = Vec::with_capacity(cnet.len());
    for step in cnet.timesteps() {
        let hyps = step
            .hypotheses()
            .iter()
            .map(|hyp| Ok((embed(tape, hyp.token())?, hyp.probability())))
            .collect::<Result<Vec<_>>>()?;
        h = encode_timestep(tape, &hyps, h, p, pooling)?;
        trace.push(h);
    }
    Ok(CnetEncoding { last: h, trace })
}

/// `c = W_s s + W_u u + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnCombinerParams {
    pub w_s: Tensor,
    pub w_u: Tensor,
    pub b: Tensor,
}

impl TurnCombinerParams {
    pub fn zeros(hidden_dim: usize, combined_dim: usize) -> Self {
        Self {
            w_s: Tensor::zeros(&[combined_dim, hidden_dim]),
            w_u: Tensor::zeros(&[combined_dim, hidden_dim]),
            b: Tensor::zeros(&[combined_dim]),
        }
    }

    pub fn random<R: Rng + ?Sized>(hidden_dim: usize, combined_dim: usize, rng: &mut R) -> Self {
        Self {
            w_s: Tensor::glorot_uniform(combined_dim, hidden_dim, rng),
            w_u: Tensor::glorot_uniform(combined_dim, hidden_dim, rng),
            b: Tensor::zeros(&[combined_dim]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_s.shape() != self.w_u.shape()
            || !self.w_s.is_matrix()
            || self.b.len() != self.w_s.rows()
        {
            return Err(Error::structural(format!(
                "turn combiner shapes W_s {:?}, W_u {:?}, b {:?}",
                self.w_s.shape(),
                self.w_u.shape(),
                self.b.shape()
            )));
        }
        Ok(())
    }

    pub fn combine(&self, s: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        let mut tape = Tape::new();
        let (ws, wu, b) = (
            tape.leaf(&self.w_s),
            tape.leaf(&self.w_u),
            tape.leaf(&self.b),
        );
        let (sv, uv) = (tape.constant(s), tape.constant(u));
        let c = combine_turn(&mut tape, sv, uv, ws, wu, b)?;
        Ok(tape.value(c).to_vec())
    }
}

pub fn combine_turn(tape: &mut Tape, s: Var, u: Var, w_s: Var, w_u: Var, b: Var) -> Result<Var> {
    let (rows, cols) = tape.dims(w_s);
    if tape.dims(w_u) != (rows, cols)
        || tape.size(s) != cols
        || tape.size(u) != cols
        || tape.size(b) != rows
    {
        return Err(Error::structural(format!(
            "turn combiner: W {rows}x{cols}, s {}, u {}, b {}",
            tape.size(s),
            tape.size(u),
            tape.size(b)
        )));
    }
    let a = tape.matvec(w_s, s);
    let c = tape.matvec(w_u, u);
    let sum = tape.add(a, c);
    Ok(tape.add(sum, b))
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::cnet::{degenerate_cnet, Hypothesis, Timestep};
    use crate::numerics::{grad_check, seeded_rng};
    use proptest::prelude::*;
    use rand::Rng;

    // Independent loop-based GRU step used as the oracle.
    fn matvec(m: &Tensor, v: &[f64]) -> Vec<f64> {
        let (rows, cols) = (m.rows(), m.cols());
        let mut out = vec![0.0; rows];
        for i in 0..rows {
            for j in 0..cols {
                out[i] += m.data()[i * cols + j] * v[j];
            }
        }
        out
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    fn oracle_step(p: &GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = h.len();
        let (wzx, uzh) = (matvec(&p.w_z, x), matvec(&p.u_z, h));
        let (wrx, urh) = (matvec(&p.w_r, x), matvec(&p.u_r, h));
        let z: Vec<f64> = (0..n)
            .map(|i| sig(wzx[i] + uzh[i] + p.b_z.data()[i]))
            .collect();
        let r: Vec<f64> = (0..n)
            .map(|i| sig(wrx[i] + urh[i] + p.b_r.data()[i]))
            .collect();
        let rh: Vec<f64> = (0..n).map(|i| r[i] * h[i]).collect();
        let (whx, uhrh) = (matvec(&p.w_h, x), matvec(&p.u_h, &rh));
        let cand: Vec<f64> = (0..n)
            .map(|i| (whx[i] + uhrh[i] + p.b_h.data()[i]).tanh())
            .collect();
        (0..n)
            .map(|i| z[i] * h[i] + (1.0 - z[i]) * cand[i])
            .collect()
    }

    fn random_params(seed: u64, d_in: usize, d_h: usize) -> GruParams {
        let mut rng = seeded_rng(seed, 0);
        let mut p = GruParams::random(d_in, d_h, &mut rng);
        for b in [&mut p.b_z, &mut p.b_h, &mut p.b_r] {
            b.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(-0.5..0.5));
        }
        p
    }

    fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    // Deterministic pseudo-embedding keyed by token text.
    fn embedding_for(token: &str, dim: usize) -> Vec<f64> {
        let mut h: u64 = 1469598103934665603;
        for b in token.bytes() {
            h = (h ^ b as u64).wrapping_mul(1099511628211);
        }
        let mut rng = seeded_rng(h, 7);
        random_vec(&mut rng, dim)
    }

    #[test]
    fn zero_params_fixed_points() {
        let p = GruParams::zeros(3, 4);
        assert_eq!(p.step(&[1.0, -2.0, 0.5], &[0.0; 4]).unwrap(), vec![0.0; 4]);
        let v = [0.4, -0.2, 0.9, -1.0];
        let h = p.step(&[0.3, 0.3, 0.3], &v).unwrap();
        assert!(close(&h, &v.map(|x| 0.5 * x), 0.0));
    }

    #[test]
    fn step_matches_loop_oracle() {
        let p = random_params(5, 3, 4);
        let mut rng = seeded_rng(6, 0);
        let (x, h) = (random_vec(&mut rng, 3), random_vec(&mut rng, 4));
        assert!(close(
            &p.step(&x, &h).unwrap(),
            &oracle_step(&p, &x, &h),
            1e-12
        ));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = GruParams::zeros(3, 4);
        assert!(p.step(&[1.0, 2.0], &[0.0; 4]).is_err());
        assert!(p.step(&[1.0, 2.0, 3.0], &[0.0; 3]).is_err());
        let mut bad = p.clone();
        bad.u_h = Tensor::zeros(&[4, 3]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_hypothesis_collapses_to_gru() {
        let p = random_params(8, 3, 4);
        let mut rng = seeded_rng(9, 0);
        let (x, h) = (random_vec(&mut rng, 3), random_vec(&mut rng, 4));
        let plain = p.step(&x, &h).unwrap();
        for pooling in [Pooling::AVERAGE, Pooling::WEIGHTED] {
            let pooled = p.encode_timestep(&[(x.clone(), 1.0)], &h, pooling).unwrap();
            assert!(close(&pooled, &plain, 1e-12));
        }
    }

    #[test]
    fn equal_embeddings_average_to_single_step() {
        let p = random_params(10, 3, 4);
        let mut rng = seeded_rng(11, 0);
        let (x, h) = (random_vec(&mut rng, 3), random_vec(&mut rng, 4));
        let hyps = vec![(x.clone(), 0.2), (x.clone(), 0.5), (x.clone(), 0.3)];
        let pooled = p.encode_timestep(&hyps, &h, Pooling::AVERAGE).unwrap();
        assert!(close(&pooled, &p.step(&x, &h).unwrap(), 1e-12));
    }

    #[test]
    fn one_hot_weights_select_first() {
        let p = random_params(12, 3, 4);
        let mut rng = seeded_rng(13, 0);
        let (x1, x2, h) = (
            random_vec(&mut rng, 3),
            random_vec(&mut rng, 3),
            random_vec(&mut rng, 4),
        );
        let pooled = p
            .encode_timestep(&[(x1.clone(), 1.0), (x2, 0.0)], &h, Pooling::WEIGHTED)
            .unwrap();
        assert!(close(&pooled, &p.step(&x1, &h).unwrap(), 1e-12));
    }

    #[test]
    fn timestep_errors() {
        let p = GruParams::zeros(2, 2);
        assert!(p.encode_timestep(&[], &[0.0; 2], Pooling::AVERAGE).is_err());
        let zeros = vec![(vec![1.0, 1.0], 0.0), (vec![0.0, 1.0], 0.0)];
        assert!(p
            .encode_timestep(&zeros, &[0.0; 2], Pooling::WEIGHTED)
            .is_err());
        assert!(p
            .encode_timestep(&zeros, &[0.0; 2], Pooling::AVERAGE)
            .is_ok());
    }

    #[test]
    fn renormalized_weighting() {
        let p = random_params(14, 3, 4);
        let mut rng = seeded_rng(15, 0);
        let (x1, x2, h) = (
            random_vec(&mut rng, 3),
            random_vec(&mut rng, 3),
            random_vec(&mut rng, 4),
        );
        let pooling = Pooling {
            mode: PoolingMode::Weighted,
            renormalize: true,
        };
        let a = p
            .encode_timestep(&[(x1.clone(), 0.2), (x2.clone(), 0.2)], &h, pooling)
            .unwrap();
        let b = p
            .encode_timestep(&[(x1, 0.5), (x2, 0.5)], &h, Pooling::AVERAGE)
            .unwrap();
        assert!(close(&a, &b, 1e-12));
    }

    #[test]
    fn degenerate_cnet_is_chained_steps() {
        let p = random_params(16, 3, 4);
        let cnet = degenerate_cnet(&["a", "b", "c"]).unwrap();
        let embed = |t: &str| embedding_for(t, 3);
        let (last, trace) = p
            .encode_cnet(&cnet, embed, &[0.0; 4], Pooling::WEIGHTED)
            .unwrap();
        let mut h = vec![0.0; 4];
        for tok in ["a", "b", "c"] {
            h = oracle_step(&p, &embed(tok), &h);
        }
        assert!(close(&last, &h, 1e-12));
        assert_eq!(trace.len(), 3);
    }

    #[test]
    fn empty_cnet_returns_initial_state() {
        let p = random_params(17, 3, 4);
        let h0 = vec![0.1, -0.2, 0.3, 0.0];
        let (last, trace) = p
            .encode_cnet(
                &ConfusionNetwork::empty(),
                |t| embedding_for(t, 3),
                &h0,
                Pooling::AVERAGE,
            )
            .unwrap();
        assert_eq!(last, h0);
        assert!(trace.is_empty());
    }

    #[test]
    fn combiner_examples() {
        let s = [1.0, -2.0, 0.5];
        let u = [0.3, 0.3, 0.3];
        let mut identity = TurnCombinerParams::zeros(3, 3);
        for i in 0..3 {
            identity.w_s.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(identity.combine(&s, &u).unwrap(), s.to_vec());

        let mut bias_only = TurnCombinerParams::zeros(3, 2);
        bias_only.b = Tensor::vector(vec![0.7, -0.1]);
        assert_eq!(bias_only.combine(&s, &u).unwrap(), vec![0.7, -0.1]);

        let mut rng = seeded_rng(18, 0);
        let mut p = TurnCombinerParams::random(3, 5, &mut rng);
        p.b = Tensor::vector(random_vec(&mut rng, 5));
        let expected: Vec<f64> = (0..5)
            .map(|i| {
                let mut acc = p.b.data()[i];
                for j in 0..3 {
                    acc += p.w_s.data()[i * 3 + j] * s[j];
                }
                for j in 0..3 {
                    acc += p.w_u.data()[i * 3 + j] * u[j];
                }
                acc
            })
            .collect();
        assert!(close(&p.combine(&s, &u).unwrap(), &expected, 1e-12));
        assert!(p.combine(&s[..2], &u).is_err());
    }

    fn arb_hyps(max_k: usize) -> impl Strategy<Value = Vec<(String, f64)>> {
        let words = prop::sample::select(vec!["a", "b", "c", "d", "e", "f", "!null"]);
        prop::collection::btree_map(words, 0.01f64..1.0, 1..=max_k)
            .prop_map(|m| m.into_iter().map(|(w, p)| (w.to_string(), p)).collect())
    }

    fn cnet_from(steps: &[Vec<(String, f64)>]) -> ConfusionNetwork {
        let timesteps = steps
            .iter()
            .enumerate()
            .map(|(i, hyps)| {
                let hyps = hyps
                    .iter()
                    .map(|(w, p)| Hypothesis::new(w, p.ln()).unwrap())
                    .collect();
                Timestep::new(i as f64, i as f64 + 1.0, hyps).unwrap()
            })
            .collect();
        ConfusionNetwork::new(timesteps).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn subsumes_sequential_gru(seed in any::<u64>(), len in 1usize..=8) {
            let p = random_params(seed, 3, 4);
            let words: Vec<String> = (0..len).map(|i| format!("w{}", (seed as usize + i * 7) % 5)).collect();
            let cnet = degenerate_cnet(&words).unwrap();
            let embed = |t: &str| embedding_for(t, 3);
            let mut h = vec![0.0; 4];
            for w in &words {
                h = oracle_step(&p, &embed(w), &h);
            }
            for pooling in [Pooling::AVERAGE, Pooling::WEIGHTED] {
                let (last, _) = p.encode_cnet(&cnet, embed, &[0.0; 4], pooling).unwrap();
                prop_assert!(close(&last, &h, 1e-12));
            }
        }

        #[test]
        fn pooling_is_permutation_invariant(seed in any::<u64>(), hyps in arb_hyps(5), rot in 0usize..5) {
            let p = random_params(seed, 3, 4);
            let mut rng = seeded_rng(seed, 1);
            let h = random_vec(&mut rng, 4);
            let embedded: Vec<(Vec<f64>, f64)> = hyps.iter().map(|(w, s)| (embedding_for(w, 3), *s)).collect();
            let mut permuted = embedded.clone();
            let k = permuted.len();
            permuted.rotate_left(rot % k);
            permuted.reverse();
            for pooling in [Pooling::AVERAGE, Pooling::WEIGHTED] {
                let a = p.encode_timestep(&embedded, &h, pooling).unwrap();
                let b = p.encode_timestep(&permuted, &h, pooling).unwrap();
                prop_assert!(close(&a, &b, 1e-12));
            }
        }

        #[test]
        fn average_equals_uniform_weights(seed in any::<u64>(), hyps in arb_hyps(5)) {
            let p = random_params(seed, 3, 4);
            let mut rng = seeded_rng(seed, 2);
            let h = random_vec(&mut rng, 4);
            let k = hyps.len() as f64;
            let embedded: Vec<(Vec<f64>, f64)> = hyps.iter().map(|(w, _)| (embedding_for(w, 3), 1.0 / k)).collect();
            let a = p.encode_timestep(&embedded, &h, Pooling::AVERAGE).unwrap();
            let b = p.encode_timestep(&embedded, &h, Pooling::WEIGHTED).unwrap();
            prop_assert!(close(&a, &b, 1e-12));
        }

        #[test]
        fn hidden_state_stays_bounded(seed in any::<u64>(), steps in prop::collection::vec(arb_hyps(4), 1..6)) {
            let p = random_params(seed, 3, 4);
            let cnet = cnet_from(&steps);
            let embed = |t: &str| embedding_for(t, 3).iter().map(|v| v * 5.0).collect();
            let (_, avg) = p.encode_cnet(&cnet, embed, &[0.0; 4], Pooling::AVERAGE).unwrap();
            prop_assert!(avg.iter().flatten().all(|v| v.abs() < 1.0));
            // raw scores summing to at most one keep the same bound
            let capped: Vec<Vec<(String, f64)>> = steps.iter().map(|hyps| {
                let total: f64 = hyps.iter().map(|h| h.1).sum();
                hyps.iter().map(|(w, s)| (w.clone(), s / total.max(1.0))).collect()
            }).collect();
            let (_, weighted) = p.encode_cnet(&cnet_from(&capped), embed, &[0.0; 4], Pooling::WEIGHTED).unwrap();
            prop_assert!(weighted.iter().flatten().all(|v| v.abs() < 1.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn cnet_gradients_pass_finite_differences(
            seed in any::<u64>(),
            steps in prop::collection::vec(arb_hyps(3), 1..=4),
            weighted in any::<bool>(),
        ) {
            let p = random_params(seed, 3, 4);
            let mut store = ParamStore::new();
            p.push_into(&mut store, "gru");
            let cnet = cnet_from(&steps);
            let pooling = if weighted { Pooling::WEIGHTED } else { Pooling::AVERAGE };
            let report = grad_check(
                |tape, vars| {
                    let gv = GruVars::from_slice(vars, 3, 4);
                    let h0 = tape.constant(&[0.0; 4]);
                    let enc = encode_cnet(tape, &cnet, |t, tok| Ok(t.constant(&embedding_for(tok, 3))), h0, &gv, pooling)?;
                    let target = tape.constant(&[0.3, -0.1, 0.2, 0.5]);
                    let diff = tape.sub(enc.last, target);
                    Ok(tape.sum_squares(diff))
                },
                &store,
                1e-4,
            ).unwrap();
            prop_assert!(report.max_rel_error < 1e-4, "{:?}", report);
        }
    }
}
