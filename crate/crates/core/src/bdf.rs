//! Linearly implicit BDF-q time stepping for the coupled system.
//!
//! Each step solves one linear system whose matrix depends only on the mesh,
//! the parameters, `q` and `τ`; it is factorized once in
//! [`build_step_operator`] and reused for every step.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::linalg::{block_assemble_sized, factorize, factorize_with_threshold, relative_residual, Factorization, SparseMatrix, WeightedBlock};
use crate::potentials::Potential;
use crate::system::{bulk_mass_of, combined_mass, energy, surface_mass_of, CoupledOperator, State};

pub const MAX_ORDER: usize = 5;

/// Diagonal preference of the step factorization. After the row pairing and
/// scaling the diagonal pivots are the natural ones, and keeping them keeps
/// the fill of the minimum-degree order.
pub const STEP_PIVOT_THRESHOLD: f64 = 1e-3;

/// Relative residual above which a step solve gets one refinement sweep.
pub const REFINE_TOLERANCE: f64 = 1e-13;
/// Upper bound on refinement sweeps per solve.
pub const REFINE_SWEEPS: usize = 3;

/// Coefficients of the `q`-step BDF method.
#[derive(Clone, Debug, PartialEq)]
pub struct BdfScheme {
    pub q: usize,
    /// `δ_0..δ_q` of `δ(ζ) = Σ_{l=1}^q (1/l)(1−ζ)^l`.
    pub delta: Vec<f64>,
    /// `γ_0..γ_{q−1}` of `γ(ζ) = (1 − (1−ζ)^q)/ζ`.
    pub gamma: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn sign(j: usize) -> f64 {
    if j % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl BdfScheme {
    pub fn new(q: usize) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&q) {
            return Err(Error::InvalidOrder(q));
        }
        let delta = (0..=q)
            .map(|j| {
                let s: f64 = (j.max(1)..=q).map(|l| binomial(l, j) / l as f64).sum();
                sign(j) * s
            })
            .collect();
        let gamma = (0..q).map(|j| sign(j) * binomial(q, j + 1)).collect();
        Ok(Self { q, delta, gamma })
    }

    /// `(1/τ) Σ_j δ_j y_{n−j}` for scalar samples `y[j] = y_{n−j}`.
    pub fn derivative(&self, samples: &[f64], tau: f64) -> f64 {
        self.delta.iter().zip(samples).map(|(d, y)| d * y).sum::<f64>() / tau
    }

    /// `Σ_j γ_j y_{n−1−j}` for scalar samples `y[j] = y_{n−1−j}`.
    pub fn extrapolate_scalar(&self, samples: &[f64]) -> f64 {
        self.gamma.iter().zip(samples).map(|(g, y)| g * y).sum()
    }
}

/// The most recent states, newest first, at uniform spacing `τ`.
#[derive(Clone, Debug)]
pub struct History {
    states: VecDeque<State>,
    depth: usize,
    /// Time index of the newest state.
    newest: usize,
}

impl History {
    /// Starts a history at time index 0 that keeps up to `depth` states.
    pub fn new(initial: State, depth: usize) -> Self {
        let mut states = VecDeque::with_capacity(depth.max(1));
        states.push_front(initial);
        Self {
            states,
            depth: depth.max(1),
            newest: 0,
        }
    }

    pub fn push(&mut self, s: State) {
        self.states.push_front(s);
        self.states.truncate(self.depth);
        self.newest += 1;
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn newest_index(&self) -> usize {
        self.newest
    }

    pub fn newest(&self) -> &State {
        &self.states[0]
    }

    /// State `n−1−j` relative to the next step `n`, i.e. `back(0)` is the newest.
    pub fn back(&self, j: usize) -> &State {
        &self.states[j]
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &State> {
        self.states.iter()
    }

    fn require(&self, q: usize) -> Result<()> {
        if self.states.len() < q {
            return Err(Error::IncompleteHistory {
                needed: q,
                got: self.states.len(),
            });
        }
        Ok(())
    }
}

/// Extrapolated `(ũ, ψ̃) = Σ_{j<q} γ_j (u, ψ)^{n−1−j}`.
pub fn extrapolate(h: &History, scheme: &BdfScheme) -> Result<(Vec<f64>, Vec<f64>)> {
    h.require(scheme.q)?;
    let mut u = vec![0.0; h.newest().u.len()];
    let mut psi = vec![0.0; h.newest().psi.len()];
    for (j, g) in scheme.gamma.iter().enumerate() {
        let s = h.back(j);
        for (a, b) in u.iter_mut().zip(&s.u) {
            *a += g * b;
        }
        for (a, b) in psi.iter_mut().zip(&s.psi) {
            *a += g * b;
        }
    }
    Ok((u, psi))
}

/// Time-dependent right-hand sides added to both equations of the scheme.
pub trait Forcing {
    /// Full-length `(load₁, load₂)` at time `t`, each of length `N + M`.
    fn loads(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Everything a step needs besides the matrix.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub op: &'a CoupledOperator,
    pub f_om: &'a Potential,
    pub f_ga: &'a Potential,
    pub forcing: Option<&'a dyn Forcing>,
}

impl<'a> Problem<'a> {
    pub fn new(op: &'a CoupledOperator, f_om: &'a Potential, f_ga: &'a Potential) -> Self {
        Self {
            op,
            f_om,
            f_ga,
            forcing: None,
        }
    }

    pub fn with_forcing(mut self, forcing: &'a dyn Forcing) -> Self {
        self.forcing = Some(forcing);
        self
    }

    fn loads(&self, t: f64) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        self.forcing.map(|f| f.loads(t)).transpose()
    }

    /// `(ε⁻¹F_Ω′(u), δ⁻¹F_Γ′(ψ))` nodally.
    fn nonlinearity(&self, u: &[f64], psi: &[f64]) -> Vec<f64> {
        let p = &self.op.params;
        u.iter()
            .map(|&x| self.f_om.derivative(x) / p.eps)
            .chain(psi.iter().map(|&x| self.f_ga.derivative(x) / p.delta))
            .collect()
    }
}

/// Factorized reduced step matrix for fixed `(op, q, τ)`.
#[derive(Clone, Debug)]
pub struct StepOperator {
    pub scheme: BdfScheme,
    pub tau: f64,
    matrix: SparseMatrix,
    /// Row `r` of `matrix` is equation `row_order[r]` of the block system.
    row_order: Vec<usize>,
    /// Factor applied to the second block equation before factorizing.
    eq2_scale: f64,
    factor: Factorization,
    p_k_t: SparseMatrix,
    p_l_t: SparseMatrix,
}

impl StepOperator {
    /// Reduced matrix `[[(δ₀/τ) P_Lᵀ M P_K, P_Lᵀ A_L P_L], [−S P_Kᵀ A_K P_K, S P_Kᵀ M P_L]]`
    /// with `S` = [`StepOperator::eq2_scale`] and rows permuted by
    /// [`StepOperator::row_order`].
    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    pub fn row_order(&self) -> &[usize] {
        &self.row_order
    }

    pub fn eq2_scale(&self) -> f64 {
        self.eq2_scale
    }

    /// Solves with [`StepOperator::matrix`], refining up to [`REFINE_SWEEPS`]
    /// times while the relative residual exceeds [`REFINE_TOLERANCE`].
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = self.factor.solve(b)?;
        let mut res = relative_residual(&self.matrix, &x, b);
        for _ in 0..REFINE_SWEEPS {
            if res <= REFINE_TOLERANCE {
                break;
            }
            let ax = self.matrix.spmv(&x)?;
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            self.factor.solve_in_place(&mut r)?;
            let y: Vec<f64> = x.iter().zip(&r).map(|(a, d)| a + d).collect();
            let next = relative_residual(&self.matrix, &y, b);
            if next >= res {
                break;
            }
            (x, res) = (y, next);
        }
        Ok(x)
    }

    /// Right-hand side of the unscaled block system, scaled and permuted into the row order of [`StepOperator::matrix`].
    pub fn permute_rhs(&self, rhs: &[f64]) -> Vec<f64> {
        let n_l = self.n_l();
        self.row_order
            .iter()
            .map(|&r| if r < n_l { rhs[r] } else { self.eq2_scale * rhs[r] })
            .collect()
    }

    pub fn factorization(&self) -> &Factorization {
        &self.factor
    }

    /// Number of `(u, ψ)` masters.
    pub fn n_k(&self) -> usize {
        self.p_k_t.nrows()
    }

    /// Number of `(μ, θ)` masters.
    pub fn n_l(&self) -> usize {
        self.p_l_t.nrows()
    }
}

/// Node a master of `p` lives at: the last row it touches, so surface
/// masters map to their surface node.
fn homes(p: &SparseMatrix) -> Vec<usize> {
    let pt = p.transpose();
    (0..pt.nrows()).map(|j| pt.row(j).last().map_or(0, |(i, _)| i)).collect()
}

/// Row order pairing each unknown with an equation tested at the same node,
/// so the diagonal carries the natural pivots. Unknowns `z` (masters of
/// `P_K`) prefer the first equation, whose tests are the masters of `P_L`;
/// unknowns `w` prefer the second. Leftovers are paired across equations.
fn pair_rows(p_k: &SparseMatrix, p_l: &SparseMatrix) -> Vec<usize> {
    let (hk, hl) = (homes(p_k), homes(p_l));
    let (n_k, n_l) = (hk.len(), hl.len());
    let n_nodes = p_k.nrows();
    // equations by home node: first equation rows 0..n_l, second n_l..
    let mut eq1 = vec![usize::MAX; n_nodes];
    let mut eq2 = vec![usize::MAX; n_nodes];
    for (j, &h) in hl.iter().enumerate() {
        eq1[h] = j;
    }
    for (j, &h) in hk.iter().enumerate() {
        eq2[h] = n_l + j;
    }
    let cols: Vec<(usize, bool)> = hk.iter().map(|&h| (h, true)).chain(hl.iter().map(|&h| (h, false))).collect();
    let mut order = vec![usize::MAX; n_k + n_l];
    let mut used = vec![false; n_k + n_l];
    for pass in 0..2 {
        for (c, &(h, is_z)) in cols.iter().enumerate() {
            if order[c] != usize::MAX {
                continue;
            }
            let r = if (pass == 0) == is_z { eq1[h] } else { eq2[h] };
            if r != usize::MAX && !used[r] {
                order[c] = r;
                used[r] = true;
            }
        }
    }
    // anything still unmatched keeps a valid permutation
    let mut free = (0..n_k + n_l).filter(|&r| !used[r]);
    for o in order.iter_mut().filter(|o| **o == usize::MAX) {
        *o = free.next().expect("row count equals column count");
    }
    order
}

pub fn build_step_operator(op: &CoupledOperator, scheme: &BdfScheme, tau: f64) -> Result<StepOperator> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {tau}")));
    }
    op.params
        .check_compatibility(op.fem.bulk_measure(), op.fem.surface_measure())?;
    let (p_k, p_l) = (&op.p_k, &op.p_l);
    let b11 = SparseMatrix::triple_product(p_l, &op.mass, p_k)?;
    let b12 = SparseMatrix::triple_product(p_l, &op.a_l, p_l)?;
    let b21 = SparseMatrix::triple_product(p_k, &op.a_k, p_k)?;
    let b22 = SparseMatrix::triple_product(p_k, &op.mass, p_l)?;
    let (n_k, n_l) = (p_k.ncols(), p_l.ncols());
    let c = scheme.delta[0] / tau;
    // Balances the diagonal against the stiffness entries in both column
    // blocks: |cM / sA_K| = |sM / A_L|.
    let peak = |a: &SparseMatrix| a.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (pa_l, pa_k) = (peak(&b12), peak(&b21));
    let s = if pa_l > 0.0 && pa_k > 0.0 { (c * pa_l / pa_k).sqrt() } else { 1.0 };
    let matrix = block_assemble_sized(
        &[n_l, n_k],
        &[n_k, n_l],
        &[
            vec![
                Some(WeightedBlock::new(&b11, c)),
                Some(WeightedBlock::unit(&b12)),
            ],
            vec![Some(WeightedBlock::new(&b21, -s)), Some(WeightedBlock::new(&b22, s))],
        ],
    )?;
    let row_order = pair_rows(p_k, p_l);
    let matrix = matrix.permute_rows(&row_order)?;
    let factor = factorize_with_threshold(&matrix, STEP_PIVOT_THRESHOLD)?;
    Ok(StepOperator {
        scheme: scheme.clone(),
        tau,
        matrix,
        row_order,
        eq2_scale: s,
        factor,
        p_k_t: p_k.transpose(),
        p_l_t: p_l.transpose(),
    })
}

/// Advances the history by one BDF-q step and returns the new state.
pub fn step(so: &StepOperator, pb: &Problem<'_>, h: &History) -> Result<State> {
    let scheme = &so.scheme;
    let op = pb.op;
    h.require(scheme.q)?;
    let np = op.n_pair();
    if h.newest().u.len() != op.n_bulk() || h.newest().psi.len() != op.n_surf() {
        return Err(Error::DimensionMismatch {
            expected: np,
            got: h.newest().u.len() + h.newest().psi.len(),
        });
    }
    let tau = so.tau;
    let t = h.newest().t + tau;
    let loads = pb.loads(t)?;

    // first equation: −(1/τ) Σ_{j≥1} δ_j x^{n−j} − (δ₀/τ) c_K, then through M
    let mut hist = vec![0.0; np];
    for j in 1..=scheme.q {
        let s = h.back(j - 1);
        let d = scheme.delta[j] / tau;
        for (a, b) in hist.iter_mut().zip(s.u.iter().chain(&s.psi)) {
            *a -= d * b;
        }
    }
    let d0 = scheme.delta[0] / tau;
    for (a, c) in hist.iter_mut().zip(&op.c_k) {
        *a -= d0 * c;
    }
    let mut r1 = op.mass.spmv(&hist)?;
    // second equation: M F′(x̃) + offset + A_K c_K
    let (ut, pt) = extrapolate(h, scheme)?;
    let mut r2 = op.mass.spmv(&pb.nonlinearity(&ut, &pt))?;
    let akc = op.a_k.spmv(&op.c_k)?;
    for i in 0..np {
        r2[i] += op.offset_load[i] + akc[i];
    }
    if let Some((l1, l2)) = &loads {
        for i in 0..np {
            r1[i] += l1[i];
            r2[i] += l2[i];
        }
    }
    let mut rhs = so.p_l_t.spmv(&r1)?;
    rhs.extend(so.p_k_t.spmv(&r2)?);
    let rhs = so.solve(&so.permute_rhs(&rhs))?;
    let (z, w) = rhs.split_at(so.n_k());
    let mut x = so.p_k_t.spmv_transpose(z)?;
    for (a, c) in x.iter_mut().zip(&op.c_k) {
        *a += c;
    }
    let y = so.p_l_t.spmv_transpose(w)?;
    Ok(State::from_pairs(t, op.n_bulk(), &x, &y))
}

/// How the `q` starting values are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartMode {
    /// Nodal values of an exact solution at `t_0..t_{q−1}`.
    Exact,
    /// `(u⁰, ψ⁰)` given; further levels by linearly implicit BDF1 steps.
    Bdf1Cascade,
}

/// Initial data for [`bootstrap`].
pub enum Start<'a> {
    Exact(&'a dyn Fn(f64) -> State),
    Phase { u0: Vec<f64>, psi0: Vec<f64> },
}

/// Chemical potentials consistent with `(u⁰, ψ⁰)`: solves
/// `m(y, η) = a^{K,α}(x⁰, η) + m(F′(x⁰), η) + load₂(t₀)` for test and
/// trial functions in `V_h^{L,β}`.
pub fn initial_potentials(pb: &Problem<'_>, u0: &[f64], psi0: &[f64], t0: f64) -> Result<Vec<f64>> {
    let op = pb.op;
    let x0 = [u0, psi0].concat();
    let mut r = op.a_k.spmv(&x0)?;
    let mf = op.mass.spmv(&pb.nonlinearity(u0, psi0))?;
    for i in 0..r.len() {
        r[i] += mf[i] + op.offset_load[i];
    }
    if let Some((_, l2)) = pb.loads(t0)? {
        for (a, b) in r.iter_mut().zip(&l2) {
            *a += b;
        }
    }
    let m_l = SparseMatrix::triple_product(&op.p_l, &op.mass, &op.p_l)?;
    let w = factorize(&m_l)?.solve(&op.p_l.spmv_transpose(&r)?)?;
    op.p_l.spmv(&w)
}

/// Produces a history holding the `q` starting states `0..q−1`.
pub fn bootstrap(scheme: &BdfScheme, tau: f64, pb: &Problem<'_>, start: Start<'_>) -> Result<History> {
    let q = scheme.q;
    match start {
        Start::Exact(exact) => {
            let mut h = History::new(exact(0.0), q);
            for k in 1..q {
                h.push(exact(k as f64 * tau));
            }
            Ok(h)
        }
        Start::Phase { u0, psi0 } => {
            let op = pb.op;
            if u0.len() != op.n_bulk() || psi0.len() != op.n_surf() {
                return Err(Error::DimensionMismatch {
                    expected: op.n_pair(),
                    got: u0.len() + psi0.len(),
                });
            }
            let chem = initial_potentials(pb, &u0, &psi0, 0.0)?;
            let phase = [u0.as_slice(), psi0.as_slice()].concat();
            let mut h = History::new(State::from_pairs(0.0, op.n_bulk(), &phase, &chem), q);
            if q > 1 {
                let so1 = build_step_operator(op, &BdfScheme::new(1)?, tau)?;
                for _ in 1..q {
                    let s = step(&so1, pb, &h)?;
                    h.push(s);
                }
            }
            Ok(h)
        }
    }
}

/// Builds the history for a [`StartMode`], failing if the data it needs is absent.
pub fn bootstrap_mode(
    mode: StartMode,
    scheme: &BdfScheme,
    tau: f64,
    pb: &Problem<'_>,
    exact: Option<&dyn Fn(f64) -> State>,
    phase0: Option<(Vec<f64>, Vec<f64>)>,
) -> Result<History> {
    let start = match mode {
        StartMode::Exact => Start::Exact(exact.ok_or_else(|| {
            Error::InvalidParameter("exact start requires an exact solution".into())
        })?),
        StartMode::Bdf1Cascade => match (phase0, exact) {
            (Some((u0, psi0)), _) => Start::Phase { u0, psi0 },
            (None, Some(ex)) => {
                let s = ex(0.0);
                Start::Phase { u0: s.u, psi0: s.psi }
            }
            (None, None) => {
                return Err(Error::InvalidParameter("cascade start requires initial data".into()))
            }
        },
    };
    bootstrap(scheme, tau, pb, start)
}

/// One line of the monitor stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonitorRow {
    pub step: usize,
    pub t: f64,
    pub mass_total: f64,
    pub mass_bulk: f64,
    pub mass_surf: f64,
    pub energy: f64,
    pub u_min: f64,
    pub u_max: f64,
}

pub const MONITOR_HEADER: &str = "step,t,mass_total,mass_bulk,mass_surf,energy,u_min,u_max";

impl MonitorRow {
    pub fn of(step: usize, s: &State, pb: &Problem<'_>) -> Result<Self> {
        let fem = &pb.op.fem;
        let p = &pb.op.params;
        let (u_min, u_max) = s
            .u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        Ok(Self {
            step,
            t: s.t,
            mass_total: combined_mass(fem, s, p.beta),
            mass_bulk: bulk_mass_of(fem, &s.u),
            mass_surf: surface_mass_of(fem, &s.psi),
            energy: energy(fem, p, s, pb.f_om, pb.f_ga)?,
            u_min,
            u_max,
        })
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.step, self.t, self.mass_total, self.mass_bulk, self.mass_surf, self.energy, self.u_min, self.u_max
        )
    }
}

/// Receives the states produced by [`run`].
pub trait Observer {
    /// Called once per time level, in order, starting with the bootstrap states.
    fn state(&mut self, _step: usize, _s: &State) -> Result<()> {
        Ok(())
    }

    /// Called for the state closest to each requested snapshot time.
    fn snapshot(&mut self, _requested: f64, _s: &State) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct Quiet;

impl Observer for Quiet {}

/// Steps until time index `n_steps` and returns the final history together
/// with one monitor row per time level.
pub fn run(
    so: &StepOperator,
    pb: &Problem<'_>,
    mut h: History,
    n_steps: usize,
    snapshot_times: &[f64],
    obs: &mut dyn Observer,
) -> Result<(History, Vec<MonitorRow>)> {
    let first = h.newest_index() + 1 - h.len();
    let mut snaps: Vec<(usize, f64)> = Vec::with_capacity(snapshot_times.len());
    for &ts in snapshot_times {
        let k = (ts / so.tau).round();
        if !(k >= 0.0) || k as usize > n_steps.max(h.newest_index()) {
            return Err(Error::InvalidParameter(format!("snapshot time {ts} outside the run")));
        }
        let k = (k as usize).max(first);
        snaps.push((k, ts));
    }
    let mut rows = Vec::with_capacity(n_steps + 1);
    let emit = |k: usize, s: &State, obs: &mut dyn Observer, rows: &mut Vec<MonitorRow>| -> Result<()> {
        rows.push(MonitorRow::of(k, s, pb)?);
        obs.state(k, s)?;
        for &(_, ts) in snaps.iter().filter(|(i, _)| *i == k) {
            obs.snapshot(ts, s)?;
        }
        Ok(())
    };
    let start: Vec<State> = h.iter().rev().cloned().collect();
    for (i, s) in start.iter().enumerate() {
        emit(first + i, s, obs, &mut rows)?;
    }
    while h.newest_index() < n_steps {
        let s = step(so, pb, &h)?;
        emit(h.newest_index() + 1, &s, obs, &mut rows)?;
        h.push(s);
    }
    Ok((h, rows))
}
