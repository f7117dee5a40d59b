//! Constrained NSGA-II.
//!
//! The generation loop is sequential; evaluation of each offspring batch is
//! spread over a rayon pool and collected in index order, so results do not
//! depend on the worker count. All randomness comes from one seeded stream
//! on the calling thread.

use std::cmp::Ordering;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objectives (minimized) and aggregate constraint violation of one point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objectives: Vec<f64>,
    pub violation: f64,
}

pub trait Problem: Sync {
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn objective_count(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Evaluation;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nsga2Config {
    pub population: usize,
    pub generations: usize,
    pub crossover_probability: f64,
    pub eta_c: f64,
    /// Per-variable mutation probability; `None` means `1 / n_vars`.
    pub mutation_probability: Option<f64>,
    pub eta_m: f64,
    pub seed: u64,
    pub workers: usize,
    pub feasibility_tolerance: f64,
    /// Hypervolume reference point; `None` skips the history.
    pub reference_point: Option<Vec<f64>>,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 200,
            crossover_probability: 0.9,
            eta_c: 15.0,
            mutation_probability: None,
            eta_m: 20.0,
            seed: 0,
            workers: 1,
            feasibility_tolerance: 0.0,
            reference_point: None,
        }
    }
}

impl Nsga2Config {
    pub fn validate(&self) -> Result<()> {
        if self.population < 8 {
            return Err(Error::Range("population must be at least 8".into()));
        }
        if self.generations < 1 {
            return Err(Error::Range("generations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover_probability) {
            return Err(Error::Range("crossover probability outside [0, 1]".into()));
        }
        if let Some(p) = self.mutation_probability {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Range("mutation probability outside [0, 1]".into()));
            }
        }
        if self.eta_c < 0.0 || self.eta_m < 0.0 {
            return Err(Error::Range("distribution indices must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub x: Vec<f64>,
    pub eval: Evaluation,
    pub rank: usize,
    pub crowding: f64,
}

impl Individual {
    pub fn feasible(&self, tolerance: f64) -> bool {
        self.eval.violation <= tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub feasible: usize,
    pub hypervolume: Option<f64>,
    /// Best feasible value of each objective.
    pub best: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nsga2Result {
    pub population: Vec<Individual>,
    /// Feasible rank-0 members of the final population.
    pub front: Vec<Individual>,
    pub history: Vec<GenerationStats>,
}

/// Pareto dominance for minimization.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Feasible beats infeasible, lower violation beats higher, and among
/// feasible points Pareto dominance decides.
pub fn constrained_dominates(a: &Evaluation, b: &Evaluation, tolerance: f64) -> bool {
    let fa = a.violation <= tolerance;
    let fb = b.violation <= tolerance;
    match (fa, fb) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.violation < b.violation,
        (true, true) => dominates(&a.objectives, &b.objectives),
    }
}

/// Fronts of indices, best first. Indices inside a front are ascending.
pub fn non_dominated_sort(evals: &[&Evaluation], tolerance: f64) -> Vec<Vec<usize>> {
    let n = evals.len();
    let mut dominated_by_count = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if constrained_dominates(evals[i], evals[j], tolerance) {
                dominates_list[i].push(j);
                dominated_by_count[j] += 1;
            } else if constrained_dominates(evals[j], evals[i], tolerance) {
                dominates_list[j].push(i);
                dominated_by_count[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by_count[j] -= 1;
                if dominated_by_count[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front (same order as `front`).
pub fn crowding_distance(objectives: &[&[f64]]) -> Vec<f64> {
    let n = objectives.len();
    let mut dist = vec![0.0; n];
    if n == 0 {
        return dist;
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = objectives[0].len();
    #[allow(clippy::needless_range_loop)] // k indexes the inner objective, not the rows
    for k in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| objectives[a][k].partial_cmp(&objectives[b][k]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let lo = objectives[order[0]][k];
        let hi = objectives[order[n - 1]][k];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span <= 0.0 || !span.is_finite() {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            if dist[i].is_finite() {
                dist[i] += (objectives[order[w + 1]][k] - objectives[order[w - 1]][k]) / span;
            }
        }
    }
    dist
}

fn assign_rank_and_crowding(pop: &mut [Individual], tolerance: f64) -> Vec<Vec<usize>> {
    let fronts = {
        let evals: Vec<&Evaluation> = pop.iter().map(|p| &p.eval).collect();
        non_dominated_sort(&evals, tolerance)
    };
    for (r, front) in fronts.iter().enumerate() {
        let objs: Vec<&[f64]> = front.iter().map(|&i| pop[i].eval.objectives.as_slice()).collect();
        let cd = crowding_distance(&objs);
        for (k, &i) in front.iter().enumerate() {
            pop[i].rank = r;
            pop[i].crowding = cd[k];
        }
    }
    fronts
}

/// Crowded comparison: lower rank, then larger crowding, then lower index.
fn crowded_better(pop: &[Individual], a: usize, b: usize) -> usize {
    let (pa, pb) = (&pop[a], &pop[b]);
    if pa.rank != pb.rank {
        return if pa.rank < pb.rank { a } else { b };
    }
    if pa.crowding != pb.crowding {
        return if pa.crowding > pb.crowding { a } else { b };
    }
    a.min(b)
}

fn tournament(pop: &[Individual], rng: &mut ChaCha8Rng) -> usize {
    let a = rng.gen_range(0..pop.len());
    let b = rng.gen_range(0..pop.len());
    crowded_better(pop, a, b)
}

/// Bounded simulated binary crossover.
pub fn sbx(
    p1: &[f64],
    p2: &[f64],
    lower: &[f64],
    upper: &[f64],
    eta: f64,
    probability: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    if rng.gen::<f64>() > probability {
        return (c1, c2);
    }
    for i in 0..p1.len() {
        if rng.gen::<f64>() > 0.5 {
            continue;
        }
        let (yl, yu) = (lower[i], upper[i]);
        if (p1[i] - p2[i]).abs() <= 1e-14 || yu <= yl {
            continue;
        }
        let (y1, y2) = if p1[i] < p2[i] { (p1[i], p2[i]) } else { (p2[i], p1[i]) };
        let u: f64 = rng.gen();
        let spread = |beta: f64| -> f64 {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let beta_l = 1.0 + 2.0 * (y1 - yl) / (y2 - y1);
        let child_lo = 0.5 * ((y1 + y2) - spread(beta_l) * (y2 - y1));
        let beta_u = 1.0 + 2.0 * (yu - y2) / (y2 - y1);
        let child_hi = 0.5 * ((y1 + y2) + spread(beta_u) * (y2 - y1));
        let child_lo = child_lo.clamp(yl, yu);
        let child_hi = child_hi.clamp(yl, yu);
        if rng.gen::<f64>() <= 0.5 {
            c1[i] = child_hi;
            c2[i] = child_lo;
        } else {
            c1[i] = child_lo;
            c2[i] = child_hi;
        }
    }
    (c1, c2)
}

/// Bounded polynomial mutation.
pub fn polynomial_mutation(x: &mut [f64], lower: &[f64], upper: &[f64], eta: f64, probability: f64, rng: &mut ChaCha8Rng) {
    for i in 0..x.len() {
        if rng.gen::<f64>() > probability {
            continue;
        }
        let (yl, yu) = (lower[i], upper[i]);
        let span = yu - yl;
        if span <= 0.0 {
            continue;
        }
        let y = x[i];
        let d1 = (y - yl) / span;
        let d2 = (yu - y) / span;
        let u: f64 = rng.gen();
        let pow = 1.0 / (eta + 1.0);
        let dq = if u < 0.5 {
            let v = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
            v.powf(pow) - 1.0
        } else {
            let v = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
            1.0 - v.powf(pow)
        };
        x[i] = (y + dq * span).clamp(yl, yu);
    }
}

fn evaluate_all<P: Problem>(problem: &P, xs: Vec<Vec<f64>>, pool: &rayon::ThreadPool) -> Vec<Individual> {
    pool.install(|| {
        xs.into_par_iter()
            .map(|x| {
                let eval = problem.evaluate(&x);
                Individual {
                    x,
                    eval,
                    rank: 0,
                    crowding: 0.0,
                }
            })
            .collect()
    })
}

fn stats(pop: &[Individual], generation: usize, config: &Nsga2Config, m: usize) -> GenerationStats {
    let feasible: Vec<&Individual> = pop.iter().filter(|p| p.feasible(config.feasibility_tolerance)).collect();
    let best = (0..m)
        .map(|k| feasible.iter().map(|p| p.eval.objectives[k]).fold(f64::INFINITY, f64::min))
        .collect();
    let hypervolume = config.reference_point.as_ref().map(|r| {
        let pts: Vec<Vec<f64>> = feasible
            .iter()
            .filter(|p| p.rank == 0)
            .map(|p| p.eval.objectives.clone())
            .collect();
        hypervolume(&pts, r)
    });
    GenerationStats {
        generation,
        feasible: feasible.len(),
        hypervolume,
        best,
    }
}

/// Runs NSGA-II. The initial population is uniform within the bounds,
/// optionally seeded with `initial` points.
pub fn nsga2<P: Problem>(problem: &P, config: &Nsga2Config, initial: &[Vec<f64>]) -> Result<Nsga2Result> {
    config.validate()?;
    let (lower, upper) = problem.bounds();
    let n = lower.len();
    if upper.len() != n || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::Range("malformed variable bounds".into()));
    }
    let m = problem.objective_count();
    let pm = config.mutation_probability.unwrap_or(1.0 / n as f64);
    let tol = config.feasibility_tolerance;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.max(1))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut xs: Vec<Vec<f64>> = initial.iter().take(config.population).cloned().collect();
    while xs.len() < config.population {
        xs.push((0..n).map(|i| rng.gen_range(lower[i]..=upper[i])).collect());
    }
    let mut pop = evaluate_all(problem, xs, &pool);
    assign_rank_and_crowding(&mut pop, tol);
    let mut history = vec![stats(&pop, 0, config, m)];

    for generation in 1..=config.generations {
        let mut children = Vec::with_capacity(config.population);
        while children.len() < config.population {
            let a = tournament(&pop, &mut rng);
            let b = tournament(&pop, &mut rng);
            let (mut c1, mut c2) = sbx(
                &pop[a].x,
                &pop[b].x,
                &lower,
                &upper,
                config.eta_c,
                config.crossover_probability,
                &mut rng,
            );
            polynomial_mutation(&mut c1, &lower, &upper, config.eta_m, pm, &mut rng);
            polynomial_mutation(&mut c2, &lower, &upper, config.eta_m, pm, &mut rng);
            children.push(c1);
            if children.len() < config.population {
                children.push(c2);
            }
        }
        let offspring = evaluate_all(problem, children, &pool);
        let mut merged = pop;
        merged.extend(offspring);
        let fronts = assign_rank_and_crowding(&mut merged, tol);
        let mut keep = Vec::with_capacity(config.population);
        for front in fronts {
            if keep.len() + front.len() <= config.population {
                keep.extend(front);
            } else {
                let mut last = front;
                last.sort_by(|&a, &b| {
                    merged[b].crowding.partial_cmp(&merged[a].crowding).unwrap_or(Ordering::Equal).then(a.cmp(&b))
                });
                keep.extend(last.into_iter().take(config.population - keep.len()));
            }
            if keep.len() == config.population {
                break;
            }
        }
        keep.sort_unstable();
        let mut slots: Vec<Option<Individual>> = merged.into_iter().map(Some).collect();
        pop = keep.into_iter().map(|i| slots[i].take().expect("unique index")).collect();
        assign_rank_and_crowding(&mut pop, tol);
        history.push(stats(&pop, generation, config, m));
    }

    let front: Vec<Individual> = pop.iter().filter(|p| p.rank == 0 && p.feasible(tol)).cloned().collect();
    Ok(Nsga2Result {
        population: pop,
        front,
        history,
    })
}

/// Hypervolume dominated by `points` (minimization) and bounded by `reference`.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let pts: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(x, r)| x < r))
        .cloned()
        .collect();
    hv_recursive(pts, reference)
}

fn hv_recursive(mut pts: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    if pts.is_empty() {
        return 0.0;
    }
    let d = reference.len();
    if d == 1 {
        let best = pts.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        return reference[0] - best;
    }
    if d == 2 {
        pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap_or(Ordering::Equal).then(a[1].partial_cmp(&b[1]).unwrap_or(Ordering::Equal)));
        let mut area = 0.0;
        let mut floor = reference[1];
        for p in &pts {
            if p[1] < floor {
                area += (reference[0] - p[0]) * (floor - p[1]);
                floor = p[1];
            }
        }
        return area;
    }
    // Slice along the last objective.
    pts.sort_by(|a, b| a[d - 1].partial_cmp(&b[d - 1]).unwrap_or(Ordering::Equal));
    let mut volume = 0.0;
    for i in 0..pts.len() {
        let z = pts[i][d - 1];
        let z_next = if i + 1 < pts.len() { pts[i + 1][d - 1] } else { reference[d - 1] };
        let depth = z_next - z;
        if depth <= 0.0 {
            continue;
        }
        let slice: Vec<Vec<f64>> = pts[..=i].iter().map(|p| p[..d - 1].to_vec()).collect();
        volume += depth * hv_recursive(slice, &reference[..d - 1]);
    }
    volume
}

/// ZDT1 benchmark, `n` variables in `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct Zdt1 {
    pub n: usize,
}

impl Zdt1 {
    /// Hypervolume of the true front `f2 = 1 - sqrt(f1)` wrt `(r1, r2)`, `r >= 1`.
    pub fn analytic_hypervolume(r1: f64, r2: f64) -> f64 {
        // Integral over f1 in [0, 1] of (r2 - 1 + sqrt f1), plus the strip beyond f1 = 1.
        (r2 - 1.0) + 2.0 / 3.0 + (r1 - 1.0) * r2
    }
}

impl Problem for Zdt1 {
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0; self.n], vec![1.0; self.n])
    }

    fn objective_count(&self) -> usize {
        2
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation {
        let f1 = x[0];
        let g = 1.0 + 9.0 * x[1..].iter().sum::<f64>() / (self.n - 1) as f64;
        let f2 = g * (1.0 - (f1 / g).sqrt());
        Evaluation {
            objectives: vec![f1, f2],
            violation: 0.0,
        }
    }
}
