use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sts_core::anthro::{build_body_model, AnthroInput, SegmentRatioTable};
use sts_core::mechanism::{actuator_torque, default_spring_catalog, ActuatorPlacement, DesignAreas, DesignVector, EngagementAngles, GasSpring};
use sts_core::optimizer::nsga2::{dominates, nsga2, Evaluation, Nsga2Config, Problem, Zdt1};
use sts_core::optimizer::placement::{place_actuator, LoadBand, PlacementSearch};
use sts_core::optimizer::{
    evaluate_candidate, moment_terms, nsga2_run, objective_moment_load, objective_motion_linearity,
    objective_torque_linearity, ConstraintHandling, EvalContext, NormConstants,
};
use sts_core::reference::ReferenceDesign;
use sts_core::sts_sim::{ExoModel, SimOptions};
use sts_core::Error;

struct Fixture {
    reference: ReferenceDesign,
    options: SimOptions,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let options = SimOptions::default()
            .normalized(&SegmentRatioTable::default_table(), &ExoModel::default(), &EngagementAngles::default())
            .unwrap();
        Fixture {
            reference: ReferenceDesign::shipped(),
            options,
        }
    })
}

fn context(mass: f64) -> EvalContext {
    let f = fixture();
    let body = build_body_model(&AnthroInput::new(mass, 1.75, 2, "u"), &SegmentRatioTable::default_table()).unwrap();
    f.reference
        .eval_context(&body, &ExoModel::default(), EngagementAngles::default(), &DesignAreas::default(), &f.options)
        .unwrap()
}

fn trapezoid(v: &[f64]) -> f64 {
    let n = v.len() - 1;
    let inner: f64 = v[1..n].iter().sum();
    (inner + 0.5 * (v[0] + v[n])) / n as f64
}

#[test]
fn reference_moment_objective_matches_quadrature_oracle() {
    let ctx = context(70.0);
    let d = fixture().reference.design;
    let (std, sit) = ctx.sweeps(&d).unwrap();
    let mref = ctx.norms.moment_ref;
    let standing = trapezoid(&std.iter().map(|p| p.mo).collect::<Vec<_>>()) / mref;
    let sitting = mref * trapezoid(&sit.iter().map(|p| 1.0 / p.mo).collect::<Vec<_>>());
    let t = objective_moment_load(&d, &ctx).unwrap();
    assert!((t.standing - standing).abs() < 1e-9);
    assert!((t.sitting - sitting).abs() < 1e-9);
    // Frozen golden values for the shipped reference, 70 kg / 1.75 m.
    assert!((t.standing - 0.328_317_019_617).abs() < 1e-9, "{}", t.standing);
    assert!((t.sitting - 5.060_729_961_367).abs() < 1e-9, "{}", t.sitting);
}

#[test]
fn reference_linearity_is_within_design_bounds() {
    let d = fixture().reference.design;
    let motion = objective_motion_linearity(&d, &context(70.0)).unwrap();
    assert!(motion.standing <= 0.15 && motion.sitting <= 0.15);
    let torque = objective_torque_linearity(&d, &context(88.0)).unwrap();
    assert!(torque.standing < 0.45 && torque.sitting < 0.45, "{torque:?}");
}

#[test]
fn scaling_moment_ref_scales_the_terms_inversely() {
    let a = EngagementAngles::default();
    let mo_std: Vec<f64> = (0..=180).map(|k| 100.0 + k as f64).collect();
    let mo_sit: Vec<f64> = (0..=180).map(|k| 300.0 - k as f64).collect();
    let base = moment_terms(&mo_std, &mo_sit, &NormConstants::new(450.0, &a, 0.5f64.to_radians()).unwrap()).unwrap();
    for c in [0.5, 2.0, 7.0] {
        let scaled =
            moment_terms(&mo_std, &mo_sit, &NormConstants::new(450.0 * c, &a, 0.5f64.to_radians()).unwrap()).unwrap();
        assert!((scaled.standing - base.standing / c).abs() < 1e-12 * base.standing);
        assert!((scaled.sitting - base.sitting * c).abs() < 1e-12 * base.sitting * c);
    }
    let halved: Vec<f64> = mo_std.iter().map(|m| m / 2.0).collect();
    let norms = NormConstants::new(450.0, &a, 0.5f64.to_radians()).unwrap();
    let h = moment_terms(&halved, &mo_sit, &norms).unwrap();
    assert_eq!(h.standing, base.standing / 2.0);
}

fn rect_exit(p: [f64; 2], x: (f64, f64), y: (f64, f64)) -> f64 {
    let dx = (x.0 - p[0]).max(0.0).max(p[0] - x.1);
    let dy = (y.0 - p[1]).max(0.0).max(p[1] - y.1);
    dx.hypot(dy)
}

/// Constraint check written from the definitions, independent of the crate.
fn violation_oracle(d: &DesignVector, a: &EngagementAngles) -> f64 {
    let to_base = |p: [f64; 2], q2: f64| {
        let (s, c) = (std::f64::consts::PI - q2).sin_cos();
        [c * p[0] - s * p[1], s * p[0] + c * p[1]]
    };
    let dist = |p: [f64; 2], q: [f64; 2]| (p[0] - q[0]).hypot(p[1] - q[1]);
    let s1 = |q2: f64| dist(d.p, to_base(d.w, q2)) + dist(d.o, to_base(d.v, q2));
    let s2 = |q2: f64| dist(d.n, to_base(d.u, q2));
    let r_std = (s1(a.q_f) - s1(a.q_o)) / d.r1 - (a.gamma - a.q_s);
    let r_sit = (s2(a.q_o) - s2(a.q_f)) / d.r2 - (a.delta - a.beta);
    let a2 = ((0.02, 0.30), (-0.08, 0.08));
    let a1 = ((-0.10, 0.10), (-0.30, -0.02));
    let area: f64 = [d.u, d.v, d.w].iter().map(|p| rect_exit(*p, a2.0, a2.1)).sum::<f64>()
        + [d.n, d.o, d.p].iter().map(|p| rect_exit(*p, a1.0, a1.1)).sum::<f64>();
    let radii: f64 = [d.r1, d.r2].iter().map(|r| (0.01 - r).max(0.0) + (r - 0.08).max(0.0)).sum();
    let eta = (0.8 - d.eta).max(0.0) + (d.eta - 1.0).max(0.0);
    r_std.abs() + r_sit.abs() + area + radii + eta
}

#[test]
fn feasibility_verdicts_match_an_independent_oracle() {
    let mut ctx = context(70.0);
    ctx.handling = ConstraintHandling::Penalty;
    let a = EngagementAngles::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = fixture().reference.design.to_vec();
    let mut feasible = 0;
    for _ in 0..1000 {
        // Small perturbations of the reference straddle the tolerance.
        let scale = 10f64.powf(rng.gen_range(-6.0..-1.0));
        let x: Vec<f64> = base.iter().map(|v| v + scale * rng.gen_range(-1.0..1.0)).collect();
        let d = DesignVector::from_slice(&x).unwrap();
        let c = evaluate_candidate(&d, &ctx);
        let oracle = violation_oracle(&d, &a);
        assert!((c.constraint_violation - oracle).abs() < 1e-9 || !c.feasible && c.constraint_violation >= oracle);
        let expect = oracle <= ctx.tolerance && c.objectives.j_moment < 1e8;
        assert_eq!(c.feasible, expect, "violation {oracle}");
        feasible += usize::from(c.feasible);
    }
    assert!(feasible > 50 && feasible < 950, "{feasible} feasible of 1000");
}

#[test]
fn area_exit_enters_the_violation_one_for_one() {
    // Repair keeps the endpoint residuals at zero, isolating the area term.
    let mut ctx = context(70.0);
    ctx.handling = ConstraintHandling::Repair;
    let mut d = fixture().reference.design;
    let before = evaluate_candidate(&d, &ctx).constraint_violation;
    // Moving w 0.01 m past the proximal edge of the thigh area.
    d.w = [0.01, d.w[1]];
    let moved = evaluate_candidate(&d, &ctx);
    assert!(moved.design.r1 > 0.01 && moved.design.r1 < 0.08, "{}", moved.design.r1);
    let after = moved.constraint_violation;
    let exit = 0.02 - 0.01;
    assert!((after - before - exit).abs() < 1e-9, "{after} - {before}");
}

/// Constrained toy: minimize distance to (0.3, -0.2) subject to x + y >= 0.5;
/// the second objective is constant.
struct Toy;

impl Problem for Toy {
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-1.0, -1.0], vec![1.0, 1.0])
    }
    fn objective_count(&self) -> usize {
        2
    }
    fn evaluate(&self, x: &[f64]) -> Evaluation {
        Evaluation {
            objectives: vec![(x[0] - 0.3).powi(2) + (x[1] + 0.2).powi(2), 0.0],
            violation: (0.5 - x[0] - x[1]).max(0.0),
        }
    }
}

#[test]
fn degenerate_single_objective_run_finds_the_grid_minimizer() {
    let mut best = (f64::INFINITY, [0.0; 2]);
    let n = 2000;
    for i in 0..=n {
        for j in 0..=n {
            let x = [-1.0 + 2.0 * i as f64 / n as f64, -1.0 + 2.0 * j as f64 / n as f64];
            let e = Toy.evaluate(&x);
            if e.violation == 0.0 && e.objectives[0] < best.0 {
                best = (e.objectives[0], x);
            }
        }
    }
    let config = Nsga2Config {
        population: 40,
        generations: 150,
        seed: 3,
        ..Nsga2Config::default()
    };
    let r = nsga2(&Toy, &config, &[]).unwrap();
    let top = r
        .front
        .iter()
        .min_by(|a, b| a.eval.objectives[0].total_cmp(&b.eval.objectives[0]))
        .unwrap();
    assert_eq!(top.eval.violation, 0.0);
    assert!((top.eval.objectives[0] - best.0).abs() < 1e-3, "{:?} vs {:?}", top.x, best.1);
}

#[test]
fn zdt1_history_is_elitist_and_front_is_non_dominated() {
    let config = Nsga2Config {
        population: 40,
        generations: 60,
        seed: 9,
        reference_point: Some(vec![1.1, 1.1]),
        ..Nsga2Config::default()
    };
    let r = nsga2(&Zdt1 { n: 30 }, &config, &[]).unwrap();
    for w in r.history.windows(2) {
        for k in 0..2 {
            assert!(w[1].best[k] <= w[0].best[k]);
        }
        assert!(w[1].hypervolume.unwrap() >= w[0].hypervolume.unwrap() - 1e-12);
    }
    for a in &r.front {
        for b in &r.front {
            assert!(!dominates(&a.eval.objectives, &b.eval.objectives));
        }
    }
    assert_eq!(r, nsga2(&Zdt1 { n: 30 }, &config, &[]).unwrap());
}

#[test]
fn exoskeleton_front_is_non_dominated_and_seeded() {
    let ctx = context(70.0);
    let config = Nsga2Config {
        population: 16,
        generations: 4,
        seed: 2,
        ..Nsga2Config::default()
    };
    let seed = [fixture().reference.design];
    let front = nsga2_run(&config, &ctx, &seed).unwrap();
    assert!(front.members.iter().all(|c| c.feasible));
    for a in &front.members {
        for b in &front.members {
            assert!(!dominates(&a.objectives.to_vec(), &b.objectives.to_vec()));
        }
    }
    let again = nsga2_run(&Nsga2Config { workers: 4, ..config }, &ctx, &seed).unwrap();
    assert_eq!(front, again);
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
}

/// Exhaustive 20 x 20 grid over each mounting area, every catalog spring
/// and both spring counts.
fn grid_oracle(band: &LoadBand, catalog: &[GasSpring], q_lo: f64, q_hi: f64) -> f64 {
    let n = 20;
    let last = band.q2.len() - 1;
    let mut oracle = f64::NEG_INFINITY;
    for spring in catalog {
        for count in [2, 3] {
            for ax in grid(0.02, 0.30, n) {
                for ay in grid(-0.08, 0.08, n) {
                    for bx in grid(-0.10, 0.10, n) {
                        for by in grid(-0.30, -0.02, n) {
                            let pl = ActuatorPlacement::spanning([ax, ay], [bx, by], count, q_lo, q_hi);
                            let mut sum = 0.0;
                            let mut ok = true;
                            for (k, &q2) in band.q2.iter().enumerate() {
                                let Ok(tau) = actuator_torque(&pl, spring, q2, 0.0) else {
                                    ok = false;
                                    break;
                                };
                                if !(tau > band.standing[k] && tau < band.sitting[k]) {
                                    ok = false;
                                    break;
                                }
                                sum += if k == 0 || k == last { 0.5 * tau } else { tau };
                            }
                            if ok {
                                oracle = oracle.max(sum / last as f64);
                            }
                        }
                    }
                }
            }
        }
    }
    oracle
}

#[test]
fn placement_matches_an_exhaustive_grid_within_one_percent() {
    let ctx = context(70.0);
    let d = fixture().reference.design;
    let catalog = default_spring_catalog();
    let band = LoadBand::for_design(&d, &ctx).unwrap();
    let oracle = grid_oracle(&band, &catalog, ctx.angles.q_o, ctx.angles.q_f);
    assert!(oracle.is_finite(), "grid found no feasible placement");
    let found = place_actuator(&d, &catalog, &ctx, &PlacementSearch::default()).unwrap();
    assert!(found.feasible());
    assert!(found.objective >= 0.99 * oracle, "search {} vs grid {}", found.objective, oracle);
}

#[test]
fn overpowered_spring_is_rejected_or_fits() {
    let ctx = context(70.0);
    let d = fixture().reference.design;
    let max_load = LoadBand::for_design(&d, &ctx)
        .unwrap()
        .sitting
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let huge = GasSpring::ideal("huge", 10.0 * max_load, 0.0, 0.0, 0.3, 1.0);
    match place_actuator(&d, &[huge], &ctx, &PlacementSearch::default()) {
        Ok(r) => assert!(r.feasible()),
        Err(e) => assert!(matches!(e, Error::NoFeasibleActuator(_))),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn doubling_the_spring_keeps_the_argmax_geometry(seed in 0u64..1000) {
        // A load band wide enough that every geometry stays feasible.
        let a = EngagementAngles::default();
        let q2: Vec<f64> = (0..=30).map(|k| a.q_o + (a.q_f - a.q_o) * k as f64 / 30.0).collect();
        let band = LoadBand { standing: vec![-1e9; q2.len()], sitting: vec![1e9; q2.len()], q2 };
        let spring = GasSpring::ideal("s", 1000.0, 500.0, 0.0, 0.5, 0.9);
        let doubled = spring.scaled(2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = (f64::NEG_INFINITY, 0usize);
        let mut best2 = (f64::NEG_INFINITY, 0usize);
        for k in 0..50 {
            let pl = ActuatorPlacement::spanning(
                [rng.gen_range(0.02..0.3), rng.gen_range(-0.08..0.08)],
                [rng.gen_range(-0.1..0.1), rng.gen_range(-0.3..-0.02)],
                2,
                a.q_o,
                a.q_f,
            );
            if let (Some(r1), Some(r2)) = (band.score(&pl, &spring), band.score(&pl, &doubled)) {
                prop_assert!((r2.objective - 2.0 * r1.objective).abs() <= 1e-9 * r1.objective.abs().max(1.0));
                if r1.objective > best.0 { best = (r1.objective, k); }
                if r2.objective > best2.0 { best2 = (r2.objective, k); }
            }
        }
        prop_assert_eq!(best.1, best2.1);
    }
}
