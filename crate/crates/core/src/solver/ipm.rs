//! Primal-dual interior-point method specialised to the allocation program.
//!
//! Variables are grouped in one block per provider, `[x (M*R) | y (C) | j (M) | u]`.
//! Every constraint except the capacity rows touches a single block, so the
//! Newton normal matrix is block diagonal plus a low-rank term from the
//! `M*R + C` capacity rows. Each step factors the provider blocks, then solves
//! a Schur complement in the capacity duals:
//!
//! ```text
//! (U' K^-1 U + W_cap^-1) t = U' K^-1 r,    dz = K^-1 (r - U t)
//! ```
//!
//! which stays well conditioned when capacities bind (`W_cap^-1 -> 0`).

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::MarketInstance;

use super::{SolverSettings, SolverStatus};

/// `maximize sum_s log_weights[s] * ln(u_s) + linear_weights[s] * u_s`
/// over the shared constraint set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgramObjective {
    pub log_weights: Vec<f64>,
    pub linear_weights: Vec<f64>,
}

impl ProgramObjective {
    pub fn eisenberg_gale(instance: &MarketInstance) -> Self {
        Self {
            log_weights: instance.budgets(),
            linear_weights: vec![0.0; instance.provider_count()],
        }
    }

    pub fn linear(weights: &[f64]) -> Self {
        Self {
            log_weights: vec![0.0; weights.len()],
            linear_weights: weights.to_vec(),
        }
    }

    pub fn value(&self, utilities: &[f64]) -> f64 {
        utilities
            .iter()
            .enumerate()
            .map(|(s, &u)| {
                let log_term = if self.log_weights[s] > 0.0 {
                    self.log_weights[s] * u.ln()
                } else {
                    0.0
                };
                log_term + self.linear_weights[s] * u
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutcome {
    /// `S*M*R`, same layout as `Allocation`.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub j: Vec<f64>,
    pub u: Vec<f64>,
    pub mec_prices: Vec<f64>,
    pub ran_prices: Vec<f64>,
    pub iterations: usize,
    pub status: SolverStatus,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
}

/// Static layout of the program: index maps and constraint coefficients.
struct Layout<'a> {
    instance: &'a MarketInstance,
    providers: usize,
    nodes: usize,
    resources: usize,
    cells: usize,
    /// Number of capacity rows, `M*R + C`.
    caps: usize,
    /// Block width, `M*R + C + M + 1`.
    width: usize,
    /// Local rows per block: `M*R` bottleneck rows, then MEC and RAN utility rows.
    local_rows: usize,
    /// Whether `u_s` carries an explicit `u_s >= 0` bound.
    u_bounded: Vec<bool>,
}

impl<'a> Layout<'a> {
    fn new(instance: &'a MarketInstance, objective: &ProgramObjective) -> Self {
        let shape = instance.shape();
        let mr = shape.nodes * shape.resources;
        Self {
            instance,
            providers: shape.providers,
            nodes: shape.nodes,
            resources: shape.resources,
            cells: shape.cells,
            caps: mr + shape.cells,
            width: mr + shape.cells + shape.nodes + 1,
            local_rows: mr + 2,
            u_bounded: objective.log_weights.iter().map(|&w| w <= 0.0).collect(),
        }
    }

    #[inline]
    fn ix(&self, m: usize, r: usize) -> usize {
        m * self.resources + r
    }

    #[inline]
    fn iy(&self, c: usize) -> usize {
        self.nodes * self.resources + c
    }

    #[inline]
    fn ij(&self, m: usize) -> usize {
        self.nodes * self.resources + self.cells + m
    }

    #[inline]
    fn iu(&self) -> usize {
        self.width - 1
    }

    #[inline]
    fn bounded(&self, s: usize, i: usize) -> bool {
        i != self.iu() || self.u_bounded[s]
    }

    fn cap_rhs(&self, q: usize) -> f64 {
        let mr = self.nodes * self.resources;
        if q < mr {
            self.instance
                .mec_capacity(q / self.resources, q % self.resources)
        } else {
            self.instance.ran_capacity(q - mr)
        }
    }

    /// Sparse coefficients of local row `row` of provider `s` (right-hand side 0).
    fn local_row(&self, s: usize, row: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let mr = self.nodes * self.resources;
        if row < mr {
            let (m, r) = (row / self.resources, row % self.resources);
            out.push((self.ij(m), 1.0));
            out.push((self.ix(m, r), -1.0 / self.instance.mec_demand(s, r)));
        } else if row == mr {
            out.push((self.iu(), 1.0));
            for m in 0..self.nodes {
                out.push((self.ij(m), -1.0));
            }
        } else {
            out.push((self.iu(), 1.0));
            for c in 0..self.cells {
                out.push((self.iy(c), -1.0 / self.instance.ran_demand(s, c)));
            }
        }
    }
}

/// Full primal-dual iterate.
#[derive(Clone)]
struct Iterate {
    /// Primal variables, `S` blocks of `width`.
    z: Vec<f64>,
    /// Local-row slacks and duals, `S` blocks of `local_rows`.
    local_slack: Vec<f64>,
    local_dual: Vec<f64>,
    /// Capacity slacks and duals (the prices).
    cap_slack: Vec<f64>,
    cap_dual: Vec<f64>,
    /// Bound duals, zero where a variable is unbounded.
    bound_dual: Vec<f64>,
}

struct Residuals {
    local_primal: Vec<f64>,
    cap_primal: Vec<f64>,
    dual: Vec<f64>,
    primal_max: f64,
    dual_max: f64,
    gap: f64,
    pairs: usize,
}

struct Direction {
    z: Vec<f64>,
    local_slack: Vec<f64>,
    local_dual: Vec<f64>,
    cap_slack: Vec<f64>,
    cap_dual: Vec<f64>,
    bound_dual: Vec<f64>,
}

/// Right-hand sides of the linearised complementarity equations.
struct Targets {
    local: Vec<f64>,
    cap: Vec<f64>,
    bound: Vec<f64>,
    /// Second-order correction on the `u_s` rows: with `w_s = B_s / u_s`
    /// this is `-du_s dw_s` from the affine step.
    log: Vec<f64>,
}

/// Factored Newton system at the current iterate.
///
/// Each provider block is kept in augmented form, `[H G'; G -S/L]`, with the
/// local-row duals as unknowns. Forming `G' (L/S) G` instead would add huge
/// rank-one terms whose cancellation wipes out the log curvature near the
/// optimum. The capacity rows couple the blocks and go through a Schur
/// complement in the price steps.
struct Factorization {
    /// Unregularised block matrices, used for refinement.
    blocks: Vec<DMatrix<f64>>,
    block_ldl: Vec<Ldl>,
    /// `A_s^-1 E_s`, block solves against unit loads on the capacity rows.
    coupling: Vec<DMatrix<f64>>,
    /// `cap_slack / cap_dual`.
    cap_inverse_weight: Vec<f64>,
    schur: Ldl,
}

impl Factorization {
    fn block_len(&self) -> usize {
        self.blocks[0].nrows()
    }

    fn caps(&self) -> usize {
        self.cap_inverse_weight.len()
    }

    /// Applies the unregularised system to `v = [blocks..., price steps]`.
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.block_len();
        let caps = self.caps();
        let tail = self.blocks.len() * n;
        let dp = &v[tail..];
        let mut out = vec![0.0; v.len()];
        for (s, block) in self.blocks.iter().enumerate() {
            let av = block * DVector::from_column_slice(&v[s * n..(s + 1) * n]);
            for i in 0..n {
                out[s * n + i] = av[i];
            }
            for q in 0..caps {
                out[s * n + q] += dp[q];
                out[tail + q] += v[s * n + q];
            }
        }
        for q in 0..caps {
            out[tail + q] -= self.cap_inverse_weight[q] * dp[q];
        }
        out
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.block_len();
        let caps = self.caps();
        let tail = self.blocks.len() * n;
        let mut out = rhs.to_vec();
        let mut schur_rhs = DVector::<f64>::zeros(caps);
        for (s, ldl) in self.block_ldl.iter().enumerate() {
            ldl.solve_in_place(&mut out[s * n..(s + 1) * n]);
            for q in 0..caps {
                schur_rhs[q] += out[s * n + q];
            }
        }
        for q in 0..caps {
            schur_rhs[q] -= rhs[tail + q];
        }
        self.schur.solve_in_place(schur_rhs.as_mut_slice());
        for (s, cols) in self.coupling.iter().enumerate() {
            let corr = cols * &schur_rhs;
            for i in 0..n {
                out[s * n + i] -= corr[i];
            }
        }
        out[tail..].copy_from_slice(schur_rhs.as_slice());
        out
    }
}

struct Solver<'a> {
    layout: Layout<'a>,
    objective: &'a ProgramObjective,
    row_buf: Vec<(usize, f64)>,
}

impl<'a> Solver<'a> {
    fn initial_iterate(&self, settings: &SolverSettings) -> Iterate {
        let l = &self.layout;
        let inst = l.instance;
        let mut shares = vec![1.0; l.providers];
        if let Some(seed) = settings.initial_seed {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for share in shares.iter_mut() {
                *share = rng.random_range(0.2..1.8);
            }
        }
        let total: f64 = shares.iter().sum();
        for share in shares.iter_mut() {
            *share *= settings.initial_share / total;
        }

        let mut z = vec![0.0; l.providers * l.width];
        for s in 0..l.providers {
            let block = &mut z[s * l.width..(s + 1) * l.width];
            let mut mec_jobs = 0.0;
            for m in 0..l.nodes {
                let mut jobs = f64::INFINITY;
                for r in 0..l.resources {
                    let x = shares[s] * inst.mec_capacity(m, r);
                    block[l.ix(m, r)] = x;
                    jobs = jobs.min(x / inst.mec_demand(s, r));
                }
                block[l.ij(m)] = 0.5 * jobs;
                mec_jobs += 0.5 * jobs;
            }
            let mut ran_jobs = 0.0;
            for c in 0..l.cells {
                let y = shares[s] * inst.ran_capacity(c);
                block[l.iy(c)] = y;
                ran_jobs += y / inst.ran_demand(s, c);
            }
            block[l.iu()] = 0.5 * mec_jobs.min(ran_jobs);
        }

        let mut it = Iterate {
            z,
            local_slack: vec![0.0; l.providers * l.local_rows],
            local_dual: vec![0.0; l.providers * l.local_rows],
            cap_slack: vec![0.0; l.caps],
            cap_dual: vec![0.0; l.caps],
            bound_dual: vec![0.0; l.providers * l.width],
        };
        let res = self.primal_values(&it);
        it.local_slack = res.0.iter().map(|v| -v).collect();
        it.cap_slack = (0..l.caps).map(|q| l.cap_rhs(q) - res.1[q]).collect();

        let mu0 = settings.initial_mu * l.instance.total_budget().max(1.0) / l.providers as f64;
        for (dual, &slack) in it.local_dual.iter_mut().zip(&it.local_slack) {
            *dual = mu0 / slack;
        }
        for (dual, &slack) in it.cap_dual.iter_mut().zip(&it.cap_slack) {
            *dual = mu0 / slack;
        }
        for s in 0..l.providers {
            for i in 0..l.width {
                if l.bounded(s, i) {
                    let k = s * l.width + i;
                    it.bound_dual[k] = mu0 / it.z[k];
                }
            }
        }
        it
    }

    /// Row activities: local `a.z` per block and capacity loads.
    fn primal_values(&self, it: &Iterate) -> (Vec<f64>, Vec<f64>) {
        let l = &self.layout;
        let mut local = vec![0.0; l.providers * l.local_rows];
        let mut row = Vec::new();
        for s in 0..l.providers {
            let block = &it.z[s * l.width..(s + 1) * l.width];
            for k in 0..l.local_rows {
                l.local_row(s, k, &mut row);
                local[s * l.local_rows + k] = row.iter().map(|&(i, a)| a * block[i]).sum();
            }
        }
        let mut caps = vec![0.0; l.caps];
        for s in 0..l.providers {
            for (q, load) in caps.iter_mut().enumerate() {
                *load += it.z[s * l.width + q];
            }
        }
        (local, caps)
    }

    fn residuals(&mut self, it: &Iterate) -> Residuals {
        let l = &self.layout;
        let (local_act, cap_act) = self.primal_values(it);
        let local_primal: Vec<f64> = local_act
            .iter()
            .zip(&it.local_slack)
            .map(|(a, s)| a + s)
            .collect();
        let cap_primal: Vec<f64> = (0..l.caps)
            .map(|q| cap_act[q] + it.cap_slack[q] - l.cap_rhs(q))
            .collect();

        // dual residual: grad(phi) + G' lambda - nu, with phi = -objective
        let mut dual = vec![0.0; l.providers * l.width];
        for s in 0..l.providers {
            let base = s * l.width;
            let u = it.z[base + l.iu()];
            let mut grad_u = -self.objective.linear_weights[s];
            if self.objective.log_weights[s] > 0.0 {
                grad_u -= self.objective.log_weights[s] / u;
            }
            dual[base + l.iu()] += grad_u;
            for k in 0..l.local_rows {
                l.local_row(s, k, &mut self.row_buf);
                let lam = it.local_dual[s * l.local_rows + k];
                for &(i, a) in &self.row_buf {
                    dual[base + i] += a * lam;
                }
            }
            for q in 0..l.caps {
                dual[base + q] += it.cap_dual[q];
            }
            for i in 0..l.width {
                dual[base + i] -= it.bound_dual[base + i];
            }
        }

        let mut gap = 0.0;
        let mut pairs = 0;
        for (s, d) in it.local_slack.iter().zip(&it.local_dual) {
            gap += s * d;
            pairs += 1;
        }
        for (s, d) in it.cap_slack.iter().zip(&it.cap_dual) {
            gap += s * d;
            pairs += 1;
        }
        for s in 0..l.providers {
            for i in 0..l.width {
                if l.bounded(s, i) {
                    let k = s * l.width + i;
                    gap += it.z[k] * it.bound_dual[k];
                    pairs += 1;
                }
            }
        }

        let primal_max = local_primal
            .iter()
            .chain(&cap_primal)
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let dual_max = dual.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        Residuals {
            local_primal,
            cap_primal,
            dual,
            primal_max,
            dual_max,
            gap,
            pairs,
        }
    }

    fn factor(&mut self, it: &Iterate) -> Option<Factorization> {
        let l = &self.layout;
        let n = l.width + l.local_rows;
        let signs: Vec<f64> = (0..n)
            .map(|i| if i < l.width { 1.0 } else { -1.0 })
            .collect();
        let mut blocks = Vec::with_capacity(l.providers);
        let mut block_ldl = Vec::with_capacity(l.providers);
        let mut coupling = Vec::with_capacity(l.providers);
        let mut schur = DMatrix::<f64>::zeros(l.caps, l.caps);
        for s in 0..l.providers {
            let base = s * l.width;
            let mut a = DMatrix::<f64>::zeros(n, n);
            let log_w = self.objective.log_weights[s];
            if log_w > 0.0 {
                let u = it.z[base + l.iu()];
                a[(l.iu(), l.iu())] += log_w / (u * u);
            }
            for i in 0..l.width {
                if l.bounded(s, i) {
                    a[(i, i)] += it.bound_dual[base + i] / it.z[base + i];
                }
            }
            for row in 0..l.local_rows {
                let idx = s * l.local_rows + row;
                l.local_row(s, row, &mut self.row_buf);
                for &(i, coef) in &self.row_buf {
                    a[(i, l.width + row)] = coef;
                    a[(l.width + row, i)] = coef;
                }
                a[(l.width + row, l.width + row)] = -it.local_slack[idx] / it.local_dual[idx];
            }
            let mut regularised = a.clone();
            for i in 0..n {
                regularised[(i, i)] += signs[i] * REGULARISATION;
            }
            let ldl = Ldl::new(&regularised, &signs)?;
            let mut cols = DMatrix::<f64>::zeros(n, l.caps);
            let mut unit = vec![0.0; n];
            for q in 0..l.caps {
                unit.iter_mut().for_each(|v| *v = 0.0);
                unit[q] = 1.0;
                ldl.solve_in_place(&mut unit);
                cols.set_column(q, &DVector::from_column_slice(&unit));
            }
            for a_q in 0..l.caps {
                for b_q in 0..l.caps {
                    schur[(a_q, b_q)] += 0.5 * (cols[(a_q, b_q)] + cols[(b_q, a_q)]);
                }
            }
            blocks.push(a);
            block_ldl.push(ldl);
            coupling.push(cols);
        }
        let cap_inverse_weight: Vec<f64> = (0..l.caps)
            .map(|q| it.cap_slack[q] / it.cap_dual[q])
            .collect();
        for q in 0..l.caps {
            schur[(q, q)] += cap_inverse_weight[q] + REGULARISATION;
        }
        let schur = Ldl::new(&schur, &vec![1.0; l.caps])?;
        Some(Factorization {
            blocks,
            block_ldl,
            coupling,
            cap_inverse_weight,
            schur,
        })
    }

    /// Solves the Newton system for the given complementarity targets.
    fn direction(
        &mut self,
        it: &Iterate,
        res: &Residuals,
        fac: &Factorization,
        targets: &Targets,
    ) -> Direction {
        let local_comp = &targets.local;
        let cap_comp = &targets.cap;
        let bound_comp = &targets.bound;
        let l = &self.layout;
        let n = l.width + l.local_rows;
        let tail = l.providers * n;
        let mut rhs = vec![0.0; tail + l.caps];
        for s in 0..l.providers {
            for i in 0..l.width {
                let k = s * l.width + i;
                rhs[s * n + i] = -res.dual[k];
                if l.bounded(s, i) {
                    rhs[s * n + i] += bound_comp[k] / it.z[k];
                }
            }
            if self.objective.log_weights[s] > 0.0 {
                rhs[s * n + l.iu()] += targets.log[s] / it.z[s * l.width + l.iu()];
            }
            for row in 0..l.local_rows {
                let idx = s * l.local_rows + row;
                rhs[s * n + l.width + row] =
                    -res.local_primal[idx] - local_comp[idx] / it.local_dual[idx];
            }
        }
        for q in 0..l.caps {
            rhs[tail + q] = -res.cap_primal[q] - cap_comp[q] / it.cap_dual[q];
        }

        // regularised solve, then refinement against the exact system
        let norm = |v: &[f64]| v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
        let mut sol = fac.solve(&rhs);
        let mut err = f64::INFINITY;
        for _ in 0..REFINE_STEPS {
            let applied = fac.apply(&sol);
            let resid: Vec<f64> = rhs.iter().zip(&applied).map(|(r, a)| r - a).collect();
            let next_err = norm(&resid);
            if next_err <= 1e-15 * norm(&rhs) || next_err >= 0.5 * err {
                break;
            }
            err = next_err;
            let corr = fac.solve(&resid);
            for (v, c) in sol.iter_mut().zip(&corr) {
                *v += c;
            }
        }

        let mut dz = vec![0.0; l.providers * l.width];
        let mut d_local_dual = vec![0.0; it.local_dual.len()];
        for s in 0..l.providers {
            dz[s * l.width..(s + 1) * l.width].copy_from_slice(&sol[s * n..s * n + l.width]);
            d_local_dual[s * l.local_rows..(s + 1) * l.local_rows]
                .copy_from_slice(&sol[s * n + l.width..(s + 1) * n]);
        }
        let d_cap_dual = sol[tail..].to_vec();

        let mut d_local_slack = vec![0.0; it.local_slack.len()];
        for s in 0..l.providers {
            let base = s * l.width;
            for row in 0..l.local_rows {
                let idx = s * l.local_rows + row;
                l.local_row(s, row, &mut self.row_buf);
                let g_dz: f64 = self.row_buf.iter().map(|&(i, a)| a * dz[base + i]).sum();
                d_local_slack[idx] = -res.local_primal[idx] - g_dz;
            }
        }
        let mut d_cap_slack = vec![0.0; l.caps];
        for q in 0..l.caps {
            let g_dz: f64 = (0..l.providers).map(|s| dz[s * l.width + q]).sum();
            d_cap_slack[q] = -res.cap_primal[q] - g_dz;
        }
        let mut d_bound_dual = vec![0.0; it.bound_dual.len()];
        for s in 0..l.providers {
            for i in 0..l.width {
                if l.bounded(s, i) {
                    let k = s * l.width + i;
                    d_bound_dual[k] = (bound_comp[k] - it.bound_dual[k] * dz[k]) / it.z[k];
                }
            }
        }

        Direction {
            z: dz,
            local_slack: d_local_slack,
            local_dual: d_local_dual,
            cap_slack: d_cap_slack,
            cap_dual: d_cap_dual,
            bound_dual: d_bound_dual,
        }
    }

    /// Largest step in `[0, 1]` keeping every positive quantity positive.
    fn max_step(&self, it: &Iterate, d: &Direction) -> f64 {
        let l = &self.layout;
        let mut alpha = 1.0_f64;
        let mut limit = |value: f64, delta: f64| {
            if delta < 0.0 {
                alpha = alpha.min(-value / delta);
            }
        };
        for (v, dv) in it.local_slack.iter().zip(&d.local_slack) {
            limit(*v, *dv);
        }
        for (v, dv) in it.local_dual.iter().zip(&d.local_dual) {
            limit(*v, *dv);
        }
        for (v, dv) in it.cap_slack.iter().zip(&d.cap_slack) {
            limit(*v, *dv);
        }
        for (v, dv) in it.cap_dual.iter().zip(&d.cap_dual) {
            limit(*v, *dv);
        }
        for s in 0..l.providers {
            for i in 0..l.width {
                let k = s * l.width + i;
                if l.bounded(s, i) {
                    limit(it.z[k], d.z[k]);
                    limit(it.bound_dual[k], d.bound_dual[k]);
                } else {
                    // u_s inside the log domain
                    limit(it.z[k], d.z[k]);
                }
            }
        }
        alpha
    }

    fn complementarity_after(&self, it: &Iterate, d: &Direction, alpha: f64) -> f64 {
        let l = &self.layout;
        let mut total = 0.0;
        for k in 0..it.local_slack.len() {
            total += (it.local_slack[k] + alpha * d.local_slack[k])
                * (it.local_dual[k] + alpha * d.local_dual[k]);
        }
        for q in 0..l.caps {
            total += (it.cap_slack[q] + alpha * d.cap_slack[q])
                * (it.cap_dual[q] + alpha * d.cap_dual[q]);
        }
        for s in 0..l.providers {
            for i in 0..l.width {
                if l.bounded(s, i) {
                    let k = s * l.width + i;
                    total +=
                        (it.z[k] + alpha * d.z[k]) * (it.bound_dual[k] + alpha * d.bound_dual[k]);
                }
            }
        }
        total
    }

    fn step(it: &Iterate, d: &Direction, alpha: f64) -> Iterate {
        let axpy = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, dx)| x + alpha * dx).collect()
        };
        Iterate {
            z: axpy(&it.z, &d.z),
            local_slack: axpy(&it.local_slack, &d.local_slack),
            local_dual: axpy(&it.local_dual, &d.local_dual),
            cap_slack: axpy(&it.cap_slack, &d.cap_slack),
            cap_dual: axpy(&it.cap_dual, &d.cap_dual),
            bound_dual: axpy(&it.bound_dual, &d.bound_dual),
        }
    }

    fn outcome(
        &self,
        it: &Iterate,
        res: &Residuals,
        iterations: usize,
        status: SolverStatus,
    ) -> IpmOutcome {
        let l = &self.layout;
        let mut x = Vec::with_capacity(l.providers * l.nodes * l.resources);
        let mut y = Vec::with_capacity(l.providers * l.cells);
        let mut j = Vec::with_capacity(l.providers * l.nodes);
        let mut u = Vec::with_capacity(l.providers);
        for s in 0..l.providers {
            let block = &it.z[s * l.width..(s + 1) * l.width];
            for m in 0..l.nodes {
                for r in 0..l.resources {
                    x.push(block[l.ix(m, r)]);
                }
            }
            for c in 0..l.cells {
                y.push(block[l.iy(c)]);
            }
            for m in 0..l.nodes {
                j.push(block[l.ij(m)]);
            }
            u.push(block[l.iu()]);
        }
        let mr = l.nodes * l.resources;
        IpmOutcome {
            x,
            y,
            j,
            u,
            mec_prices: it.cap_dual[..mr].to_vec(),
            ran_prices: it.cap_dual[mr..].to_vec(),
            iterations,
            status,
            primal_residual: res.primal_max,
            dual_residual: res.dual_max,
            duality_gap: res.gap,
        }
    }
}

/// Dense `L D L'` without pivoting for quasi-definite matrices. Each pivot is
/// forced to its expected sign and kept away from zero; refinement against the
/// exact system absorbs the perturbation.
struct Ldl {
    /// Unit lower factor.
    lower: DMatrix<f64>,
    diag: Vec<f64>,
}

const REGULARISATION: f64 = 1e-10;
const PIVOT_FLOOR: f64 = 1e-14;
const REFINE_STEPS: usize = 6;

impl Ldl {
    fn new(matrix: &DMatrix<f64>, signs: &[f64]) -> Option<Self> {
        let n = matrix.nrows();
        let mut lower = DMatrix::<f64>::identity(n, n);
        let mut diag = vec![0.0; n];
        // work[k] = L[j, k] * D[k] for the current column j
        let mut work = vec![0.0; n];
        for j in 0..n {
            for k in 0..j {
                work[k] = lower[(j, k)] * diag[k];
            }
            let mut pivot = matrix[(j, j)];
            for k in 0..j {
                pivot -= lower[(j, k)] * work[k];
            }
            if !pivot.is_finite() {
                return None;
            }
            if pivot * signs[j] < PIVOT_FLOOR {
                pivot = signs[j] * PIVOT_FLOOR;
            }
            diag[j] = pivot;
            for i in j + 1..n {
                let mut v = matrix[(i, j)];
                for k in 0..j {
                    v -= lower[(i, k)] * work[k];
                }
                lower[(i, j)] = v / pivot;
            }
        }
        Some(Self { lower, diag })
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.diag.len();
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= self.lower[(i, k)] * b[k];
            }
            b[i] = v;
        }
        for i in 0..n {
            b[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in i + 1..n {
                v -= self.lower[(k, i)] * b[k];
            }
            b[i] = v;
        }
    }
}

fn finite(it: &Iterate) -> bool {
    it.z.iter()
        .chain(&it.local_slack)
        .chain(&it.local_dual)
        .chain(&it.cap_slack)
        .chain(&it.cap_dual)
        .chain(&it.bound_dual)
        .all(|v| v.is_finite())
}

/// Runs Mehrotra predictor-corrector iterations from a strictly feasible start.
pub(crate) fn solve(
    instance: &MarketInstance,
    objective: &ProgramObjective,
    settings: &SolverSettings,
) -> IpmOutcome {
    let mut solver = Solver {
        layout: Layout::new(instance, objective),
        objective,
        row_buf: Vec::new(),
    };
    let target = settings.kkt_tolerance * settings.target_ratio;

    let mut it = solver.initial_iterate(settings);
    let mut res = solver.residuals(&it);
    let merit = |r: &Residuals| r.primal_max.max(r.dual_max).max(r.gap);
    let mut best = (it.clone(), merit(&res), 0usize);
    let mut stalled = 0usize;
    let mut done = 0usize;
    let mut broke_down = false;

    while done < settings.max_iterations {
        if merit(&res) <= target {
            return solver.outcome(&it, &res, done, SolverStatus::Converged);
        }
        let Some(fac) = solver.factor(&it) else {
            broke_down = true;
            break;
        };
        let pairs = res.pairs as f64;
        let mu = res.gap / pairs;

        // predictor
        let local_aff: Vec<f64> = it
            .local_slack
            .iter()
            .zip(&it.local_dual)
            .map(|(s, d)| -s * d)
            .collect();
        let cap_aff: Vec<f64> = it
            .cap_slack
            .iter()
            .zip(&it.cap_dual)
            .map(|(s, d)| -s * d)
            .collect();
        let bound_aff: Vec<f64> =
            it.z.iter()
                .zip(&it.bound_dual)
                .map(|(z, d)| -z * d)
                .collect();
        let aff = solver.direction(
            &it,
            &res,
            &fac,
            &Targets {
                local: local_aff,
                cap: cap_aff,
                bound: bound_aff,
                log: vec![0.0; solver.layout.providers],
            },
        );
        let alpha_aff = solver.max_step(&it, &aff);
        let mu_aff = solver.complementarity_after(&it, &aff, alpha_aff) / pairs;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let target_mu = sigma * mu;
        let local_cc: Vec<f64> = (0..it.local_slack.len())
            .map(|k| {
                target_mu
                    - it.local_slack[k] * it.local_dual[k]
                    - aff.local_slack[k] * aff.local_dual[k]
            })
            .collect();
        let cap_cc: Vec<f64> = (0..it.cap_slack.len())
            .map(|q| {
                target_mu - it.cap_slack[q] * it.cap_dual[q] - aff.cap_slack[q] * aff.cap_dual[q]
            })
            .collect();
        let width = solver.layout.width;
        let bound_cc: Vec<f64> = (0..it.z.len())
            .map(|k| {
                if solver.layout.bounded(k / width, k % width) {
                    target_mu - it.z[k] * it.bound_dual[k] - aff.z[k] * aff.bound_dual[k]
                } else {
                    0.0
                }
            })
            .collect();
        // the B/u curvature gets the same treatment as the products above
        let log_cc: Vec<f64> = (0..solver.layout.providers)
            .map(|s| {
                let u = it.z[s * width + solver.layout.iu()];
                let du = aff.z[s * width + solver.layout.iu()];
                solver.objective.log_weights[s] * (du / u).powi(2)
            })
            .collect();
        let dir = solver.direction(
            &it,
            &res,
            &fac,
            &Targets {
                local: local_cc,
                cap: cap_cc,
                bound: bound_cc,
                log: log_cc,
            },
        );
        let alpha = (settings.step_fraction * solver.max_step(&it, &dir)).min(1.0);

        let next = Solver::step(&it, &dir, alpha);
        done += 1;
        if !finite(&next) {
            broke_down = true;
            break;
        }
        it = next;
        res = solver.residuals(&it);
        let m = merit(&res);
        log::debug!(
            "ipm iter {done}: alpha={alpha:.3e} sigma={sigma:.2e} primal={:.2e} dual={:.2e} gap={:.2e}",
            res.primal_max, res.dual_max, res.gap
        );
        if m < best.1 {
            best = (it.clone(), m, done);
            stalled = 0;
        } else {
            stalled += 1;
        }
        if alpha < 1e-12 || stalled >= 10 {
            broke_down = true;
            break;
        }
    }

    // no clean convergence: hand back the best iterate seen, flagged
    let (best_it, best_merit, _) = best;
    let best_res = solver.residuals(&best_it);
    let status = if best_merit <= settings.kkt_tolerance {
        SolverStatus::Converged
    } else if broke_down {
        SolverStatus::InfeasibleNumerics
    } else {
        SolverStatus::MaxIterations
    };
    solver.outcome(&best_it, &best_res, done, status)
}
