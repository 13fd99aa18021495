//! Trajectory optimizer behind the predictive controllers.
//!
//! The supply temperature is chosen per hour block from a grid; for each candidate
//! profile the per-room flows (and, with personal devices, heater duty cycles) come
//! from projected gradient descent. Gradients are computed by an adjoint pass
//! through the dynamics, which are affine in the state for fixed inputs.
//!
//! The prediction model replays exactly what the simulator does: each coarse step
//! is `substeps` Euler steps with the inputs held, composed into one affine map.

use serde::{Deserialize, Serialize};

use crate::comfort::pmv;
use crate::config::{ComfortSpec, MpcParams, PlantParams};
use crate::error::{Error, Result};
use crate::state::RoomState;
use crate::thermal::{ComposedStep, RoomModel};

/// Which predictive controller is planning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MpcMode {
    /// Single-region rooms, no personal devices.
    Ns,
    /// Two-region rooms with desk heaters whose duty cycle is planned.
    Sa,
}

/// How much of the supply-temperature profile to search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum USearch {
    /// Uniform-profile scan over the grid followed by block refinement.
    Full,
    /// Re-search only the first few free blocks around the starting profile.
    Refine,
    /// Keep the starting profile, optimize flows only.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub patience: usize,
    pub refine_blocks: usize,
    pub refine_window: f64,
}

impl From<&MpcParams> for SolverSettings {
    fn from(m: &MpcParams) -> Self {
        Self {
            max_iters: m.max_iters,
            rel_tol: m.rel_tol,
            patience: m.patience,
            refine_blocks: m.refine_blocks,
            refine_window: m.refine_window,
        }
    }
}

/// A finite-horizon planning problem over `t_ex.len()` coarse steps.
///
/// Per-step arrays are indexed `[step][room]`; flattened decision vectors use
/// `step * n_rooms + room`.
#[derive(Debug, Clone)]
pub struct TrajectoryProblem {
    pub mode: MpcMode,
    pub rooms: Vec<RoomModel>,
    pub plant: PlantParams,
    pub comfort: ComfortSpec,
    /// The penalty uses the band shrunk by this much on both sides.
    pub margin: f64,
    pub penalty_weight: f64,
    pub reuse_ratio: f64,
    /// Air velocity assumed at the occupant when evaluating comfort, m/s.
    pub air_velocity: f64,
    pub tau_fine: f64,
    pub substeps: usize,
    pub initial: Vec<RoomState>,
    /// Forecast occupancy, 0 or 1.
    pub occupancy: Vec<Vec<f64>>,
    pub t_ex: Vec<f64>,
    /// Hour block of each step, starting at 0 and non-decreasing.
    pub block_of_step: Vec<usize>,
    /// Supply temperature of blocks that may not change.
    pub frozen: Vec<Option<f64>>,
    pub u_lo: f64,
    pub u_hi: f64,
    pub u_step: f64,
}

/// Starting point for [`solve_trajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub u_blocks: Vec<f64>,
    pub v: Vec<f64>,
    pub heater: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySolution {
    pub u_blocks: Vec<f64>,
    pub v: Vec<f64>,
    /// Empty without personal devices.
    pub heater: Vec<f64>,
    /// Predicted states at every step boundary, `(n_steps + 1) * n_rooms`.
    pub states: Vec<RoomState>,
    pub energy: f64,
    /// Penalty against the shrunk band, as optimized.
    pub penalty: f64,
    pub objective: f64,
    pub converged: bool,
    /// Descent iterations summed over all candidate profiles.
    pub iterations: usize,
    pub candidates: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rollout {
    pub energy: f64,
    pub penalty: f64,
}

struct Workspace {
    t: Vec<f64>,
    d: Vec<f64>,
    hv: Vec<ComposedStep>,
    off: Vec<ComposedStep>,
    a: Vec<f64>,
    s: Vec<f64>,
    vsum: Vec<f64>,
    dp: Vec<f64>,
    lam: Vec<f64>,
    mu: Vec<f64>,
}

impl Workspace {
    fn new(k: usize, n: usize) -> Self {
        Self {
            t: vec![0.0; (k + 1) * n],
            d: vec![0.0; (k + 1) * n],
            hv: vec![ComposedStep::default(); k * n],
            off: vec![ComposedStep::default(); k * n],
            a: vec![0.0; k * n],
            s: vec![0.0; k],
            vsum: vec![0.0; k],
            dp: vec![0.0; (k + 1) * n],
            lam: vec![0.0; n],
            mu: vec![0.0; n],
        }
    }
}

struct Descent {
    x: Vec<f64>,
    energy: f64,
    penalty: f64,
    converged: bool,
    iterations: usize,
}

impl Descent {
    fn objective(&self) -> f64 {
        self.energy + self.penalty
    }
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;

impl TrajectoryProblem {
    pub fn n_steps(&self) -> usize {
        self.t_ex.len()
    }

    pub fn n_rooms(&self) -> usize {
        self.rooms.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.frozen.len()
    }

    fn tau_coarse(&self) -> f64 {
        self.tau_fine * self.substeps as f64
    }

    fn cells(&self) -> usize {
        self.n_steps() * self.n_rooms()
    }

    fn n_vars(&self) -> usize {
        match self.mode {
            MpcMode::Ns => self.cells(),
            MpcMode::Sa => 2 * self.cells(),
        }
    }

    /// Candidate supply temperatures, `u_lo` upward in `u_step` increments.
    pub fn u_grid(&self) -> Vec<f64> {
        let count = ((self.u_hi - self.u_lo) / self.u_step + 1e-9).floor() as usize;
        (0..=count).map(|i| self.u_lo + i as f64 * self.u_step).collect()
    }

    fn validate(&self) -> Result<()> {
        let (k, n) = (self.n_steps(), self.n_rooms());
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("trajectory problem: {msg}")));
        if n == 0 {
            return bad("no rooms");
        }
        if self.initial.len() != n {
            return bad("initial state does not match room count");
        }
        if self.occupancy.len() != k || self.occupancy.iter().any(|o| o.len() != n) {
            return bad("occupancy does not cover every step and room");
        }
        if self.block_of_step.len() != k {
            return bad("block map does not cover every step");
        }
        if k > 0 && (self.block_of_step[0] != 0 || self.block_of_step[k - 1] + 1 != self.n_blocks()) {
            return bad("block map does not match the block count");
        }
        if self.block_of_step.windows(2).any(|w| w[1] < w[0] || w[1] > w[0] + 1) {
            return bad("block map must be contiguous");
        }
        if self.substeps == 0 || self.tau_fine <= 0.0 {
            return bad("non-positive step");
        }
        if !(self.u_lo <= self.u_hi) || self.u_step <= 0.0 {
            return bad("empty supply-temperature grid");
        }
        Ok(())
    }

    fn upper_bounds(&self) -> Vec<f64> {
        let mut ub = vec![self.plant.v_max; self.cells()];
        if self.mode == MpcMode::Sa {
            // a heater can only run while someone is expected at the desk
            ub.extend(self.occupancy.iter().flatten().map(|&o| if o > 0.0 { 1.0 } else { 0.0 }));
        }
        ub
    }

    fn u_per_step(&self, u_blocks: &[f64]) -> Vec<f64> {
        self.block_of_step.iter().map(|&b| u_blocks[b]).collect()
    }

    /// Forward pass and, when `grad` is given, the adjoint pass.
    fn evaluate(
        &self,
        u: &[f64],
        x: &[f64],
        margin: f64,
        ws: &mut Workspace,
        grad: Option<&mut [f64]>,
    ) -> Rollout {
        let (k_len, n) = (self.n_steps(), self.n_rooms());
        let sa = self.mode == MpcMode::Sa;
        let r = self.reuse_ratio;
        let dt_h = self.tau_coarse() / 3600.0;
        let pl = &self.plant;

        for (j, s) in self.initial.iter().enumerate() {
            ws.t[j] = s.t_hv;
            ws.d[j] = if sa { s.delta_oc } else { 0.0 };
        }
        let mut energy = 0.0;
        for k in 0..k_len {
            let (uk, tex) = (u[k], self.t_ex[k]);
            let (mut s, mut vsum, mut heater) = (0.0, 0.0, 0.0);
            for j in 0..n {
                let c = k * n + j;
                let p = &self.rooms[j].params;
                let o = self.occupancy[k][j];
                let v = x[c];
                let tk = ws.t[c];
                let a = uk - r * tk - (1.0 - r) * tex;
                ws.a[c] = a;
                s += v * a;
                vsum += v;
                let load = if sa { p.q_ap * o } else { (p.q_oc + p.q_ap) * o };
                let step = self.rooms[j]
                    .hvac_substep(uk, v, tex, load, self.tau_fine)
                    .compose(self.substeps);
                ws.t[c + n] = step.apply(tk);
                ws.hv[c] = step;
                if sa {
                    let h = x[self.cells() + c];
                    let off = self.rooms[j]
                        .offset_substep(o, h, self.tau_fine)
                        .compose(self.substeps);
                    ws.d[c + n] = off.apply(ws.d[c]);
                    ws.off[c] = off;
                    heater += p.q_heater * h;
                } else {
                    ws.d[c + n] = 0.0;
                }
            }
            ws.s[k] = s;
            ws.vsum[k] = vsum;
            energy += dt_h * (pl.eta_h * s.max(0.0) + pl.eta_c * (-s).max(0.0) + pl.eta_f * vsum * vsum + heater);
        }

        let lo = self.comfort.p_ll + margin;
        let hi = self.comfort.p_ul - margin;
        let half_w = 0.5 * self.penalty_weight;
        let mut penalty = 0.0;
        for i in 0..=k_len {
            for j in 0..n {
                let before = if i > 0 { self.occupancy[i - 1][j] } else { 0.0 };
                let after = if i < k_len { self.occupancy[i][j] } else { 0.0 };
                let weight = half_w * (before + after);
                let c = i * n + j;
                ws.dp[c] = 0.0;
                if weight == 0.0 {
                    continue;
                }
                let level = pmv(ws.t[c] + ws.d[c], self.air_velocity, &self.comfort);
                if level < lo {
                    penalty += weight * (lo - level);
                    ws.dp[c] = -weight * self.comfort.p1;
                } else if level > hi {
                    penalty += weight * (level - hi);
                    ws.dp[c] = weight * self.comfort.p1;
                }
            }
        }

        if let Some(g) = grad {
            let cells = self.cells();
            for j in 0..n {
                ws.lam[j] = ws.dp[k_len * n + j];
                ws.mu[j] = ws.dp[k_len * n + j];
            }
            for k in (0..k_len).rev() {
                let s = ws.s[k];
                for j in 0..n {
                    let c = k * n + j;
                    let a = ws.a[c];
                    // one-sided slope when the plant sits exactly at the coil switch
                    let slope = if s > 0.0 || (s == 0.0 && a > 0.0) {
                        pl.eta_h
                    } else {
                        -pl.eta_c
                    };
                    let step = ws.hv[c];
                    g[c] = dt_h * (slope * a + 2.0 * pl.eta_f * ws.vsum[k])
                        + ws.lam[j] * step.d_control(ws.t[c]);
                    let d_energy_dt = -dt_h * slope * r * x[c];
                    ws.lam[j] = ws.dp[c] + d_energy_dt + ws.lam[j] * step.gain;
                    if sa {
                        let off = ws.off[c];
                        g[cells + c] = dt_h * self.rooms[j].params.q_heater + ws.mu[j] * off.d_shift;
                        ws.mu[j] = ws.dp[c] + ws.mu[j] * off.gain;
                    }
                }
            }
        }
        Rollout { energy, penalty }
    }

    /// Predicted states, energy and penalty for explicit decisions. The penalty
    /// uses the unshrunk comfort band.
    pub fn rollout(&self, u_blocks: &[f64], v: &[f64], heater: &[f64]) -> Result<(Vec<RoomState>, Rollout)> {
        self.validate()?;
        if u_blocks.len() != self.n_blocks() || v.len() != self.cells() {
            return Err(Error::InvalidArgument("decision sizes do not match the problem".into()));
        }
        let mut x = v.to_vec();
        if self.mode == MpcMode::Sa {
            if heater.len() != self.cells() {
                return Err(Error::InvalidArgument("heater duty size does not match the problem".into()));
            }
            x.extend_from_slice(heater);
        }
        let mut ws = Workspace::new(self.n_steps(), self.n_rooms());
        let out = self.evaluate(&self.u_per_step(u_blocks), &x, 0.0, &mut ws, None);
        Ok((self.states(&ws, &x), out))
    }

    /// Penalty of each step against the unshrunk band, from predicted states.
    pub fn step_penalties(&self, states: &[RoomState]) -> Vec<f64> {
        let n = self.n_rooms();
        let d = |i: usize, j: usize| {
            let level = pmv(states[i * n + j].t_oc(), self.air_velocity, &self.comfort);
            crate::comfort::discomfort_instant(level, self.comfort.p_ll, self.comfort.p_ul)
        };
        (0..self.n_steps())
            .map(|k| {
                (0..n)
                    .map(|j| 0.5 * self.penalty_weight * self.occupancy[k][j] * (d(k, j) + d(k + 1, j)))
                    .sum()
            })
            .collect()
    }

    fn states(&self, ws: &Workspace, x: &[f64]) -> Vec<RoomState> {
        let n = self.n_rooms();
        (0..(self.n_steps() + 1) * n)
            .map(|c| {
                let (t_hv, delta_oc) = (ws.t[c], ws.d[c]);
                let j = c % n;
                let t_un = if c < n {
                    self.initial[j].t_un
                } else if self.mode == MpcMode::Sa {
                    // the unoccupied region sees the offset one fine step earlier
                    let (prev, k) = (c - n, c / n - 1);
                    let p = &self.rooms[j].params;
                    let lagged = self.rooms[j]
                        .offset_substep(self.occupancy[k][j], x[self.cells() + prev], self.tau_fine)
                        .compose(self.substeps - 1)
                        .apply(ws.d[prev]);
                    t_hv + self.tau_fine * p.alpha_in / (p.capacity - p.capacity_occupied) * lagged
                } else {
                    t_hv
                };
                RoomState {
                    t_hv,
                    delta_oc,
                    t_un,
                }
            })
            .collect()
    }

    fn descend(
        &self,
        u_blocks: &[f64],
        mut x: Vec<f64>,
        ub: &[f64],
        settings: &SolverSettings,
        ws: &mut Workspace,
    ) -> Descent {
        let u = self.u_per_step(u_blocks);
        project(&mut x, ub);
        let mut g = vec![0.0; x.len()];
        let Rollout {
            mut energy,
            mut penalty,
        } = self.evaluate(&u, &x, self.margin, ws, Some(&mut g));
        let mut f = energy + penalty;
        let span = ub.iter().cloned().fold(0.0, f64::max);
        let mut alpha = f64::INFINITY;
        let mut trial = vec![0.0; x.len()];
        let mut g_trial = vec![0.0; x.len()];
        let (mut streak, mut converged, mut iterations) = (0, false, 0);

        while iterations < settings.max_iters {
            iterations += 1;
            let g_max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if g_max == 0.0 {
                converged = true;
                break;
            }
            // never let one unprojected step cross more than the whole box
            alpha = alpha.min(span / g_max);
            let mut accepted = None;
            for _ in 0..MAX_BACKTRACK {
                let mut decrease = 0.0;
                let mut moved = 0.0f64;
                for i in 0..x.len() {
                    trial[i] = (x[i] - alpha * g[i]).clamp(0.0, ub[i]);
                    decrease += g[i] * (trial[i] - x[i]);
                    moved = moved.max((trial[i] - x[i]).abs());
                }
                if moved < 1e-12 {
                    break;
                }
                let out = self.evaluate(&u, &trial, self.margin, ws, Some(&mut g_trial));
                if out.energy + out.penalty <= f + ARMIJO * decrease {
                    accepted = Some(out);
                    break;
                }
                alpha *= 0.5;
            }
            let Some(out) = accepted else {
                // no descent direction left within numerical resolution
                converged = true;
                break;
            };
            let (mut ss, mut sy) = (0.0, 0.0);
            for i in 0..x.len() {
                let s = trial[i] - x[i];
                ss += s * s;
                sy += s * (g_trial[i] - g[i]);
            }
            alpha = if sy > 0.0 { ss / sy } else { 2.0 * alpha };
            let f_new = out.energy + out.penalty;
            let rel = (f - f_new) / f.abs().max(1e-12);
            std::mem::swap(&mut x, &mut trial);
            std::mem::swap(&mut g, &mut g_trial);
            f = f_new;
            energy = out.energy;
            penalty = out.penalty;
            if rel < settings.rel_tol {
                streak += 1;
                if streak >= settings.patience {
                    converged = true;
                    break;
                }
            } else {
                streak = 0;
            }
        }
        Descent {
            x,
            energy,
            penalty,
            converged,
            iterations,
        }
    }
}

fn project(x: &mut [f64], ub: &[f64]) {
    for (xi, &u) in x.iter_mut().zip(ub) {
        *xi = xi.clamp(0.0, u);
    }
}

/// Minimizes planned energy plus comfort penalty.
///
/// The outer loop picks hourly supply temperatures from the grid (see [`USearch`]);
/// every candidate profile is solved for flows by projected gradient descent,
/// warm-started from the best solution so far. The returned solution is the best
/// candidate seen; `converged` reports whether its descent met the stopping rule.
pub fn solve_trajectory(
    problem: &TrajectoryProblem,
    settings: &SolverSettings,
    search: USearch,
    warm: Option<&WarmStart>,
) -> Result<TrajectorySolution> {
    problem.validate()?;
    let (k_len, n) = (problem.n_steps(), problem.n_rooms());
    let grid = problem.u_grid();
    let ub = problem.upper_bounds();
    let mut ws = Workspace::new(k_len, n);

    let mut x0 = vec![0.0; problem.n_vars()];
    let mut profile: Vec<f64> = problem
        .frozen
        .iter()
        .map(|f| f.unwrap_or(grid[grid.len() / 2]))
        .collect();
    if let Some(w) = warm {
        if w.u_blocks.len() != problem.n_blocks() || w.v.len() != problem.cells() {
            return Err(Error::InvalidArgument("warm start does not match the problem".into()));
        }
        for (p, (f, &wu)) in profile.iter_mut().zip(problem.frozen.iter().zip(&w.u_blocks)) {
            if f.is_none() {
                *p = wu;
            }
        }
        x0[..problem.cells()].copy_from_slice(&w.v);
        if problem.mode == MpcMode::Sa && w.heater.len() == problem.cells() {
            x0[problem.cells()..].copy_from_slice(&w.heater);
        }
    }
    let free: Vec<usize> = (0..problem.n_blocks())
        .filter(|&b| problem.frozen[b].is_none())
        .collect();

    let mut iterations = 0;
    let mut candidates = 0;
    let mut run = |profile: &[f64], x: Vec<f64>, ws: &mut Workspace| {
        let d = problem.descend(profile, x, &ub, settings, ws);
        iterations += d.iterations;
        candidates += 1;
        d
    };
    let with_uniform = |u: f64| -> Vec<f64> {
        problem.frozen.iter().map(|f| f.unwrap_or(u)).collect()
    };

    let mut best;
    if search == USearch::Full && !free.is_empty() {
        // coarse scan of uniform profiles, then the neighbours of the winner
        let stride = 4;
        let mut tried = vec![false; grid.len()];
        let mut coarse: Vec<usize> = (0..grid.len()).step_by(stride).collect();
        if *coarse.last().unwrap() != grid.len() - 1 {
            coarse.push(grid.len() - 1);
        }
        let mut best_idx = coarse[0];
        best = run(&with_uniform(grid[best_idx]), x0.clone(), &mut ws);
        tried[best_idx] = true;
        profile = with_uniform(grid[best_idx]);
        for &i in &coarse[1..] {
            let p = with_uniform(grid[i]);
            let d = run(&p, best.x.clone(), &mut ws);
            tried[i] = true;
            if d.objective() < best.objective() {
                best = d;
                best_idx = i;
                profile = p;
            }
        }
        let lo = best_idx.saturating_sub(stride - 1);
        let hi = (best_idx + stride - 1).min(grid.len() - 1);
        for i in lo..=hi {
            if tried[i] {
                continue;
            }
            let p = with_uniform(grid[i]);
            let d = run(&p, best.x.clone(), &mut ws);
            if d.objective() < best.objective() {
                best = d;
                profile = p;
            }
        }
    } else {
        best = run(&profile, x0, &mut ws);
    }

    if search != USearch::Fixed {
        let flowing: Vec<usize> = free
            .iter()
            .copied()
            .filter(|&b| {
                (0..k_len)
                    .filter(|&k| problem.block_of_step[k] == b)
                    .any(|k| best.x[k * n..(k + 1) * n].iter().any(|&v| v > 1e-9))
            })
            .take(settings.refine_blocks)
            .collect();
        for b in flowing {
            let centre = profile[b];
            for &c in &grid {
                if c == centre || (c - centre).abs() > settings.refine_window + 1e-9 {
                    continue;
                }
                let mut p = profile.clone();
                p[b] = c;
                let d = run(&p, best.x.clone(), &mut ws);
                if d.objective() < best.objective() {
                    best = d;
                    profile = p;
                }
            }
        }
    }

    let u = problem.u_per_step(&profile);
    problem.evaluate(&u, &best.x, problem.margin, &mut ws, None);
    let states = problem.states(&ws, &best.x);
    let cells = problem.cells();
    let (v, heater) = match problem.mode {
        MpcMode::Ns => (best.x.clone(), Vec::new()),
        MpcMode::Sa => (best.x[..cells].to_vec(), best.x[cells..].to_vec()),
    };
    Ok(TrajectorySolution {
        u_blocks: profile,
        v,
        heater,
        states,
        energy: best.energy,
        penalty: best.penalty,
        objective: best.objective(),
        converged: best.converged,
        iterations,
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{BuildingSpec, ComfortConfig, Season, SimConfig};

    fn problem(mode: MpcMode, steps: usize, occupied: &[usize], t_ex: f64, t0: f64) -> TrajectoryProblem {
        let cfg = SimConfig::default();
        let building = BuildingSpec::default();
        let n = building.n_rooms();
        let mut occupancy = vec![vec![0.0; n]; steps];
        for &k in occupied {
            occupancy[k] = vec![1.0; n];
        }
        TrajectoryProblem {
            mode,
            rooms: RoomModel::for_building(&building),
            plant: building.plant,
            comfort: ComfortConfig::default().spec(Season::Summer),
            margin: cfg.mpc.comfort_margin,
            penalty_weight: cfg.mpc.penalty_weight,
            reuse_ratio: 0.8,
            air_velocity: 0.1,
            tau_fine: 30.0,
            substeps: 20,
            initial: vec![RoomState::uniform(t0); n],
            occupancy,
            t_ex: vec![t_ex; steps],
            block_of_step: (0..steps).map(|k| k / 6).collect(),
            frozen: vec![None; steps.div_ceil(6)],
            u_lo: 12.0,
            u_hi: 20.0,
            u_step: 0.5,
        }
    }

    fn settings() -> SolverSettings {
        SolverSettings::from(&MpcParams::default())
    }

    #[test]
    fn nothing_to_do_means_no_flow() {
        let p = problem(MpcMode::Ns, 12, &[], 24.0, 24.0);
        let sol = solve_trajectory(&p, &settings(), USearch::Full, None).unwrap();
        assert!(sol.v.iter().all(|&v| v == 0.0));
        assert_eq!(sol.objective, 0.0);
        assert!(sol.converged);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        for mode in [MpcMode::Ns, MpcMode::Sa] {
            let mut p = problem(mode, 8, &[3, 4, 5, 6, 7], 30.0, 27.0);
            p.occupancy[5][1] = 0.0;
            let u: Vec<f64> = p.block_of_step.iter().map(|&b| 13.0 + b as f64).collect();
            let nv = p.n_vars();
            let x: Vec<f64> = (0..nv).map(|i| 0.05 + 0.4 * ((i * 37 % 11) as f64 / 11.0)).collect();
            let mut ws = Workspace::new(p.n_steps(), p.n_rooms());
            let mut g = vec![0.0; nv];
            p.evaluate(&u, &x, 0.0, &mut ws, Some(&mut g));
            let h = 1e-7;
            for i in (0..nv).step_by(3) {
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fp = p.evaluate(&u, &xp, 0.0, &mut ws, None);
                let fm = p.evaluate(&u, &xm, 0.0, &mut ws, None);
                let fd = (fp.energy + fp.penalty - fm.energy - fm.penalty) / (2.0 * h);
                assert!(
                    (fd - g[i]).abs() <= 1e-4 * (1.0 + fd.abs()),
                    "{mode:?} var {i}: adjoint {} vs fd {fd}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn predicted_unoccupied_temperature_matches_simulation() {
        let mut p = problem(MpcMode::Sa, 2, &[0, 1], 20.0, 20.0);
        p.initial = vec![
            RoomState {
                t_hv: 20.0,
                delta_oc: 1.5,
                t_un: 20.1
            };
            5
        ];
        let v = vec![0.1; 10];
        let heater = vec![0.6; 10];
        let (states, _) = p.rollout(&[15.0], &v, &heater).unwrap();
        // same step with the reference two-region update, duty applied throughout
        let m = &p.rooms[0];
        let mut s = p.initial[0];
        for _ in 0..20 {
            s = m.step_two_region(&s, 15.0, 0.1, 0.6, &crate::thermal::ExogenousInputs::new(20.0, true), 30.0);
        }
        assert!((states[5].t_hv - s.t_hv).abs() < 1e-12);
        assert!((states[5].delta_oc - s.delta_oc).abs() < 1e-12);
        assert!((states[5].t_un - s.t_un).abs() < 1e-12);
    }

    #[test]
    fn descent_is_monotone_and_meets_the_band() {
        let p = problem(MpcMode::Ns, 24, &[14, 15, 16, 17, 18, 19], 30.0, 27.0);
        let sol = solve_trajectory(&p, &settings(), USearch::Full, None).unwrap();
        let n = p.n_rooms();
        for k in 14..=20 {
            for j in 0..n {
                let level = pmv(sol.states[k * n + j].t_oc(), 0.1, &p.comfort);
                assert!(level <= p.comfort.p_ul + 1e-3, "step {k}: pmv {level}");
            }
        }
        // pre-cooling happens before the first occupied step
        assert!(sol.v[..14 * n].iter().any(|&v| v > 0.0));
        assert!(sol.v.iter().all(|&v| (0.0..=p.plant.v_max).contains(&v)));
    }
}
