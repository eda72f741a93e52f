//! Iterative routing between explanatory features and per-label concepts.
//!
//! Features are projected into every concept space (`ĥ_ij = f_i W_ij`),
//! concepts start from a uniform assignment `r_ij = 1/J`, and each
//! iteration alternates
//!
//! * routing adjustment: `r_i· = softmax_j ⟨ĥ_ij, c_j⟩`
//! * concept update: `c_j = Σ_i p_i r_ij ĥ_ij`
//!
//! The value-level functions accept any number of features; the model
//! always routes seven.

use std::cell::Cell;

use rand::Rng;

use crate::autodiff::{Tape, Tensor, Var};
use crate::encoders::{FeatureSet, FeatureVars, NUM_FEATURES};
use crate::error::{dim_err, Error, Result};

thread_local! {
    static ADJUST_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of routing adjustments performed on this thread so far.
pub fn routing_adjust_calls() -> u64 {
    ADJUST_CALLS.with(Cell::get)
}

/// `W_ij` for every feature `i` and concept `j`, each `[d_f, d_c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingWeights {
    pub d_f: usize,
    pub d_c: usize,
    pub num_concepts: usize,
    /// Row-major over `(i, j)`.
    pub w: Vec<Tensor>,
}

impl RoutingWeights {
    pub fn new(d_f: usize, d_c: usize, num_concepts: usize, w: Vec<Tensor>) -> Result<Self> {
        let rw = Self { d_f, d_c, num_concepts, w };
        rw.validate()?;
        Ok(rw)
    }

    /// Uniform init in `±1/√d_f`.
    pub fn init(d_f: usize, d_c: usize, num_concepts: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d_f as f64).sqrt();
        let w = (0..NUM_FEATURES * num_concepts)
            .map(|_| Tensor::uniform(&[d_f, d_c], bound, rng).trainable())
            .collect();
        Self { d_f, d_c, num_concepts, w }
    }

    /// The same matrix for every pair.
    pub fn shared(w: Tensor, num_features: usize, num_concepts: usize) -> Result<Self> {
        let (d_f, d_c) = (w.rows(), w.cols());
        Self::new(d_f, d_c, num_concepts, vec![w; num_features * num_concepts])
    }

    pub fn num_features(&self) -> usize {
        self.w.len() / self.num_concepts
    }

    pub fn get(&self, i: usize, j: usize) -> &Tensor {
        &self.w[i * self.num_concepts + j]
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_concepts == 0 || self.w.is_empty() || self.w.len() % self.num_concepts != 0 {
            return Err(Error::Dimension(format!(
                "{} routing matrices do not tile {} concepts",
                self.w.len(),
                self.num_concepts
            )));
        }
        for w in &self.w {
            if w.shape() != [self.d_f, self.d_c] {
                return Err(dim_err("routing weight", w.shape(), &[self.d_f, self.d_c]));
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.w.iter().map(|t| tape.param(t)).collect()
    }
}

/// Routing quantities on a tape. `hhat[i][j]` is `[d_c]`, `s[i]` and `r[i]`
/// are `[J]`, `c[j]` is `[d_c]`.
#[derive(Debug, Clone)]
pub struct RoutingVars {
    pub hhat: Vec<Vec<Var>>,
    pub s: Vec<Var>,
    pub r: Vec<Var>,
    pub c: Vec<Var>,
    /// `r` after each iteration.
    pub r_trace: Vec<Vec<Var>>,
}

/// `ĥ_ij = f_i W_ij`.
pub fn project_var(tape: &mut Tape, f: &[Var], w: &[Var], num_concepts: usize) -> Result<Vec<Vec<Var>>> {
    if w.len() != f.len() * num_concepts {
        return Err(Error::Dimension(format!(
            "{} features × {num_concepts} concepts need {} matrices, got {}",
            f.len(),
            f.len() * num_concepts,
            w.len()
        )));
    }
    f.iter()
        .enumerate()
        .map(|(i, &fi)| (0..num_concepts).map(|j| tape.matmul(fi, w[i * num_concepts + j])).collect())
        .collect()
}

/// Stacks `ĥ_·j` into one `[n, d_c]` matrix per concept.
fn stack_concept_inputs(tape: &mut Tape, hhat: &[Vec<Var>]) -> Result<Vec<Var>> {
    let num_concepts = hhat.first().map_or(0, Vec::len);
    (0..num_concepts)
        .map(|j| {
            let col: Vec<Var> = hhat.iter().map(|row| row[j]).collect();
            tape.stack_rows(&col)
        })
        .collect()
}

/// `c_j = Σ_i w_ij ĥ_ij` with `weights[j]` the `[n]` column of `w_·j`.
fn weighted_concepts(tape: &mut Tape, stacked: &[Var], weights: &[Var]) -> Result<Vec<Var>> {
    stacked.iter().zip(weights).map(|(&h, &w)| tape.matmul(w, h)).collect()
}

/// Concepts under the uniform assignment `r_ij = 1/J`.
pub fn init_concepts_var(tape: &mut Tape, hhat: &[Vec<Var>], p: &[Var]) -> Result<Vec<Var>> {
    let num_concepts = hhat.first().map_or(0, Vec::len);
    let stacked = stack_concept_inputs(tape, hhat)?;
    let p_vec = tape.concat(p)?;
    let uniform = tape.scale(p_vec, 1.0 / num_concepts as f64);
    let weights = vec![uniform; num_concepts];
    weighted_concepts(tape, &stacked, &weights)
}

/// Similarities `s_i· = ⟨ĥ_i·, c_·⟩` and coefficients `r_i· = softmax(s_i·)`.
pub fn routing_adjust_var(tape: &mut Tape, hhat: &[Vec<Var>], c: &[Var]) -> Result<(Vec<Var>, Vec<Var>)> {
    ADJUST_CALLS.with(|n| n.set(n.get() + 1));
    let mut s = Vec::with_capacity(hhat.len());
    let mut r = Vec::with_capacity(hhat.len());
    for row in hhat {
        if row.len() != c.len() {
            return Err(dim_err("routing_adjust concepts", &[row.len()], &[c.len()]));
        }
        let sims = row.iter().zip(c).map(|(&h, &cj)| tape.dot(h, cj)).collect::<Result<Vec<_>>>()?;
        let si = tape.concat(&sims)?;
        r.push(tape.softmax(si)?);
        s.push(si);
    }
    Ok((s, r))
}

/// `c_j = Σ_i p_i r_ij ĥ_ij`.
pub fn concept_update_var(tape: &mut Tape, hhat: &[Vec<Var>], p: &[Var], r: &[Var]) -> Result<Vec<Var>> {
    let stacked = stack_concept_inputs(tape, hhat)?;
    concept_update_stacked(tape, &stacked, p, r)
}

fn concept_update_stacked(tape: &mut Tape, stacked: &[Var], p: &[Var], r: &[Var]) -> Result<Vec<Var>> {
    let p_vec = tape.concat(p)?;
    let weights = (0..stacked.len())
        .map(|j| {
            let col = r.iter().map(|&ri| tape.slice(ri, j, 1)).collect::<Result<Vec<_>>>()?;
            let col = tape.concat(&col)?;
            tape.mul(p_vec, col)
        })
        .collect::<Result<Vec<_>>>()?;
    weighted_concepts(tape, stacked, &weights)
}

/// The full procedure: project, initialise, then `iterations` rounds of
/// adjustment and update.
pub fn route_var(tape: &mut Tape, fv: &FeatureVars, w: &[Var], num_concepts: usize, iterations: usize) -> Result<RoutingVars> {
    if iterations < 1 {
        return Err(Error::Contract("routing needs at least one iteration".into()));
    }
    let hhat = project_var(tape, &fv.f, w, num_concepts)?;
    let stacked = stack_concept_inputs(tape, &hhat)?;
    let p_vec = tape.concat(&fv.p)?;
    let uniform = tape.scale(p_vec, 1.0 / num_concepts as f64);
    let mut c = weighted_concepts(tape, &stacked, &vec![uniform; num_concepts])?;
    let mut r_trace = Vec::with_capacity(iterations);
    let mut last = None;
    for _ in 0..iterations {
        let (s, r) = routing_adjust_var(tape, &hhat, &c)?;
        c = concept_update_stacked(tape, &stacked, &fv.p, &r)?;
        r_trace.push(r.clone());
        last = Some((s, r));
    }
    let (s, r) = last.expect("at least one iteration");
    Ok(RoutingVars { hhat, s, r, c, r_trace })
}

/// Plain-value snapshot of a routing pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutingState {
    /// `[i][j]` → `[d_c]`.
    pub hhat: Vec<Vec<Vec<f64>>>,
    pub s: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub iterations: usize,
    pub r_trace: Vec<Vec<Vec<f64>>>,
}

impl RoutingState {
    pub fn from_vars(tape: &Tape, rv: &RoutingVars) -> Self {
        let vals = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).data().to_vec()).collect::<Vec<_>>();
        Self {
            hhat: rv.hhat.iter().map(|row| vals(row)).collect(),
            s: vals(&rv.s),
            r: vals(&rv.r),
            c: vals(&rv.c),
            iterations: rv.r_trace.len(),
            r_trace: rv.r_trace.iter().map(|r| vals(r)).collect(),
        }
    }
}

type Projections = Vec<Vec<Vec<f64>>>;

fn lift(tape: &mut Tape, v: &[f64]) -> Result<Var> {
    Ok(tape.constant(Tensor::vector(v.to_vec())?))
}

fn lift_hhat(tape: &mut Tape, hhat: &Projections) -> Result<Vec<Vec<Var>>> {
    hhat.iter().map(|row| row.iter().map(|h| lift(tape, h)).collect()).collect()
}

fn lift_scalars(tape: &mut Tape, p: &[f64]) -> Vec<Var> {
    p.iter().map(|&x| tape.constant(Tensor::scalar(x))).collect()
}

fn read(tape: &Tape, vs: &[Var]) -> Vec<Vec<f64>> {
    vs.iter().map(|&v| tape.value(v).data().to_vec()).collect()
}

/// `ĥ_ij = f_i W_ij` for plain features.
pub fn project(features: &[Vec<f64>], w: &RoutingWeights) -> Result<Projections> {
    w.validate()?;
    let mut tape = Tape::new();
    let f = features.iter().map(|fi| lift(&mut tape, fi)).collect::<Result<Vec<_>>>()?;
    let wv = w.bind(&mut tape);
    let hhat = project_var(&mut tape, &f, &wv, w.num_concepts)?;
    Ok(hhat.iter().map(|row| read(&tape, row)).collect())
}

pub fn init_concepts(hhat: &Projections, p: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let h = lift_hhat(&mut tape, hhat)?;
    let pv = lift_scalars(&mut tape, p);
    let c = init_concepts_var(&mut tape, &h, &pv)?;
    Ok(read(&tape, &c))
}

pub fn routing_adjust(hhat: &Projections, c: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let h = lift_hhat(&mut tape, hhat)?;
    let cv = c.iter().map(|cj| lift(&mut tape, cj)).collect::<Result<Vec<_>>>()?;
    let (_, r) = routing_adjust_var(&mut tape, &h, &cv)?;
    Ok(read(&tape, &r))
}

pub fn concept_update(hhat: &Projections, p: &[f64], r: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let h = lift_hhat(&mut tape, hhat)?;
    let pv = lift_scalars(&mut tape, p);
    let rv = r.iter().map(|ri| lift(&mut tape, ri)).collect::<Result<Vec<_>>>()?;
    let c = concept_update_var(&mut tape, &h, &pv, &rv)?;
    Ok(read(&tape, &c))
}

/// Runs the routing procedure on a plain feature set.
pub fn route(features: &FeatureSet, w: &RoutingWeights, iterations: usize) -> Result<RoutingState> {
    w.validate()?;
    if features.d_f() != w.d_f {
        return Err(dim_err("route feature width", &[features.d_f()], &[w.d_f]));
    }
    let mut tape = Tape::new();
    let fv = features.to_vars(&mut tape);
    let wv = w.bind(&mut tape);
    let rv = route_var(&mut tape, &fv, &wv, w.num_concepts, iterations)?;
    Ok(RoutingState::from_vars(&tape, &rv))
}
