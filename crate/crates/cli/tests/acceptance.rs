//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `cargo test -p duet-cli --test acceptance`. Every criterion is
//! checked against an oracle written here, independent of the library code
//! it verifies.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use duet_core::collision::Capsule;
use duet_core::curriculum::{curriculum_alpha, sampling_distribution, CurriculumConfig, CurriculumState};
use duet_core::fixtures::{self, g1_like_model, random_chain_spec, random_configuration};
use duet_core::geometry;
use duet_core::interaction_mesh::{InterEdge, MeshConfig, SelfGraph};
use duet_core::metrics::{
    self, contact_f1, evaluate_trajectory, iee_policy_frame, iee_retarget, policy_metrics, EdgeFrame, MetricsReport,
    RolloutStep,
};
use duet_core::phase_sync::{simulate, ChannelModel, SyncAgent, SyncConfig};
use duet_core::qp::{kkt_residuals, solve_qp, QpOptions, QpProblem, QpStatus};
use duet_core::retarget::{retarget_clip, retract_pair, FrameProblem, FrameTargets, ObjectiveWeights, RobotTrajectory, SolverConfig};
use duet_core::rewards::{force_regularization, r_contact, r_inter, InteractionSample, RewardConfig};
use duet_core::robot_model::{RobotConfiguration, RobotModel};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    let runs = FixtureRuns::compute();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("penetration elimination", Box::new(|| criterion_1(&runs))),
        ("coupling benefit", Box::new(|| criterion_2(&runs))),
        ("optimizer correctness", Box::new(|| criterion_3(&runs))),
        ("linearization fidelity", Box::new(criterion_4)),
        ("reward formula conformance", Box::new(criterion_5)),
        ("curriculum conformance", Box::new(criterion_6)),
        ("phase sync", Box::new(criterion_7)),
        ("metrics oracles", Box::new(criterion_8)),
        ("pipeline determinism", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {} [{}] {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------------------
// Fixture runs shared by criteria 1-3.

struct Run {
    traj: RobotTrajectory,
    report: MetricsReport,
    secs: f64,
}

struct ClipRuns {
    name: &'static str,
    full: Run,
    no_collision: Run,
    ablation: Run,
}

struct FixtureRuns {
    model: RobotModel,
    config: SolverConfig,
    clips: Vec<ClipRuns>,
}

impl FixtureRuns {
    fn compute() -> Self {
        let model = g1_like_model();
        let config = SolverConfig::default();
        let variants = [
            config.clone(),
            SolverConfig {
                collision: false,
                ..config.clone()
            },
            SolverConfig {
                w_inter: 0.0,
                ..config.clone()
            },
        ];
        let mesh = MeshConfig::default();
        let clips = std::thread::scope(|s| {
            let handles: Vec<_> = fixtures::CLIP_NAMES
                .iter()
                .map(|&name| {
                    let (model, mesh, variants) = (&model, &mesh, &variants);
                    s.spawn(move || {
                        let clip = fixtures::clip_by_name(name).unwrap();
                        let mut runs = variants.iter().map(|cfg| {
                            let start = Instant::now();
                            let (reference, traj) = retarget_clip(&clip, [model, model], mesh, cfg).unwrap();
                            let secs = start.elapsed().as_secs_f64();
                            let report = evaluate_trajectory(
                                [model, model],
                                &traj.frames,
                                &traj.priors,
                                reference.h_robot,
                                &[],
                                mesh.contact_threshold,
                            )
                            .unwrap();
                            Run { traj, report, secs }
                        });
                        ClipRuns {
                            name,
                            full: runs.next().unwrap(),
                            no_collision: runs.next().unwrap(),
                            ablation: runs.next().unwrap(),
                        }
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        Self { model, config, clips }
    }
}

fn criterion_1(runs: &FixtureRuns) -> Outcome {
    let mut pass = true;
    let mut any_unconstrained_penetration = false;
    let mut parts = Vec::new();
    for c in &runs.clips {
        let f = &c.full.report;
        let n = &c.no_collision.report;
        pass &= f.ipr == 0.0 && f.mpd == 0.0 && c.full.secs <= 120.0 && c.full.traj.frames.len() >= 200;
        any_unconstrained_penetration |= n.ipr > 0.0;
        parts.push(format!(
            "{} ({} frames): full IPR {:.1}% MPD {:.2} cm in {:.1} s, no-collision IPR {:.1}% MPD {:.2} cm",
            c.name,
            c.full.traj.frames.len(),
            f.ipr,
            f.mpd,
            c.full.secs,
            n.ipr,
            n.mpd
        ));
    }
    outcome(pass && any_unconstrained_penetration, parts.join("; "))
}

fn criterion_2(runs: &FixtureRuns) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for c in &runs.clips {
        let (f, a) = (&c.full.report, &c.ablation.report);
        pass &= f.iee < a.iee && f.f1_strict.f1 >= a.f1_strict.f1;
        parts.push(format!(
            "{}: IEE {:.2}% vs ablation {:.2}%, F1-strict {:.3} vs {:.3}",
            c.name, f.iee, a.iee, f.f1_strict.f1, a.f1_strict.f1
        ));
    }
    outcome(pass, parts.join("; "))
}

// ---------------------------------------------------------------------------
// Criterion 3: QP against active-set enumeration, SQP monotonicity and bounds.

/// Minimizer found by trying every active set of at most `n` constraints.
fn enumerate_active_sets(p: &QpProblem) -> Option<DVector<f64>> {
    let n = p.dim();
    let mut cons: Vec<(DVector<f64>, f64)> = (0..p.lower.len()).map(|i| (p.a.row(i).transpose(), p.lower[i])).collect();
    for k in 0..n {
        let e = DVector::from_fn(n, |j, _| if j == k { 1.0 } else { 0.0 });
        if p.box_lower[k].is_finite() {
            cons.push((e.clone(), p.box_lower[k]));
        }
        if p.box_upper[k].is_finite() {
            cons.push((-e, -p.box_upper[k]));
        }
    }
    let m = cons.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1 << m) {
        let set: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        if set.len() > n {
            continue;
        }
        let k = set.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
        rhs.rows_mut(0, n).copy_from(&(-&p.g));
        for (r, &c) in set.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + r)] = -cons[c].0[j];
                kkt[(n + r, j)] = cons[c].0[j];
            }
            rhs[n + r] = cons[c].1;
        }
        let Some(sol) = kkt.clone().lu().solve(&rhs) else { continue };
        if (&kkt * &sol - &rhs).amax() > 1e-9 {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        if (0..k).any(|r| sol[n + r] < -1e-9) || p.max_violation(&x) > 1e-9 {
            continue;
        }
        let f = p.objective(&x);
        if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best.map(|b| b.1)
}

fn random_qp(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.gen_range(1..=5);
    let m = rng.gen_range(0..=4);
    let base = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = base.tr_mul(&base) + DMatrix::identity(n, n) * rng.gen_range(0.05..0.5);
    let g = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
    let x0 = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let ax0 = &a * &x0;
    let lower = DVector::from_fn(m, |i, _| ax0[i] - rng.gen_range(0.0..0.5));
    let box_lower = DVector::from_fn(n, |k, _| x0[k] - rng.gen_range(0.05..1.0));
    let box_upper = DVector::from_fn(n, |k, _| x0[k] + rng.gen_range(0.05..1.0));
    QpProblem {
        h,
        g,
        a,
        lower,
        box_lower,
        box_upper,
    }
}

fn criterion_3(runs: &FixtureRuns) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_kkt: f64 = 0.0;
    let mut worst_x: f64 = 0.0;
    let mut qp_ok = true;
    for _ in 0..1000 {
        let p = random_qp(&mut rng);
        let s = solve_qp(&p, &QpOptions::default()).unwrap();
        let oracle = enumerate_active_sets(&p);
        qp_ok &= s.status == QpStatus::Optimal && oracle.is_some();
        worst_kkt = worst_kkt.max(kkt_residuals(&p, &s).max());
        if let Some(x) = oracle {
            worst_x = worst_x.max((&s.x - x).amax());
        }
    }
    let mut worst_rise: f64 = 0.0;
    let mut worst_limit: f64 = 0.0;
    let mut worst_step: f64 = 0.0;
    for c in &runs.clips {
        for d in &c.full.traj.diagnostics {
            for w in d.objective_trace.windows(2) {
                worst_rise = worst_rise.max(w[1] - w[0]);
            }
            worst_step = d.step_norms.iter().fold(worst_step, |m, s| m.max(*s));
        }
        for conf in c.full.traj.frames.iter().flatten() {
            worst_limit = worst_limit.max(runs.model.limit_violation(&conf.q));
        }
    }
    let delta = runs.config.trust_region;
    let pass = qp_ok
        && worst_kkt <= 1e-6
        && worst_x <= 1e-6
        && worst_rise <= 1e-8
        && worst_limit <= 1e-9
        && worst_step <= delta + 1e-12;
    outcome(
        pass,
        format!(
            "1000 QPs: max KKT residual {worst_kkt:.1e}, max |x - oracle| {worst_x:.1e}; SQP: max objective rise \
             {worst_rise:.1e}, max joint-limit violation {worst_limit:.1e}, max step {worst_step:.4} (bound {delta})"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 4: finite-difference checks of the Gauss-Newton model.

fn basis(n: usize, k: usize, h: f64) -> Vec<f64> {
    let mut d = vec![0.0; n];
    d[k] = h;
    d
}

struct Instance {
    models: [RobotModel; 2],
    graph: SelfGraph,
    ids: [Vec<usize>; 2],
    weights: ObjectiveWeights,
    targets: FrameTargets,
}

impl Instance {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let joints = rng.gen_range(2..5);
        let models = [
            RobotModel::new(random_chain_spec(rng, joints)).unwrap(),
            RobotModel::new(random_chain_spec(rng, joints)).unwrap(),
        ];
        let names: Vec<String> = (0..=joints).map(|j| format!("k{j}")).collect();
        let mut edges: Vec<(String, String)> = names.windows(2).map(|w| (w[0].clone(), w[1].clone())).collect();
        edges.push((names[0].clone(), names[joints].clone()));
        let graph = SelfGraph::new(&MeshConfig {
            vertices: names.clone(),
            self_edges: edges,
            ..MeshConfig::default()
        })
        .unwrap();
        let ids = [
            names.iter().map(|n| models[0].keypoint_id(n).unwrap()).collect::<Vec<_>>(),
            names.iter().map(|n| models[1].keypoint_id(n).unwrap()).collect::<Vec<_>>(),
        ];
        let random_target = |rng: &mut ChaCha8Rng| Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
        let laplacian = [
            (0..=joints).map(|_| Some(random_target(rng))).collect(),
            (0..=joints).map(|_| Some(random_target(rng))).collect(),
        ];
        let orientation = [
            models[0].key_links.iter().map(|&l| (l, geometry::exp(&(random_target(rng) * 5.0)))).collect(),
            models[1].key_links.iter().map(|&l| (l, geometry::exp(&(random_target(rng) * 5.0)))).collect(),
        ];
        let inter = (0..rng.gen_range(1..5))
            .map(|_| {
                let d = random_target(rng) * 3.0;
                InterEdge {
                    i: rng.gen_range(0..=joints),
                    j: rng.gen_range(0..=joints),
                    weight: rng.gen_range(0.1..1.0),
                    reference: [d.x, d.y, d.z],
                }
            })
            .collect();
        let prev = [random_configuration(&models[0], rng), random_configuration(&models[1], rng)];
        let weights = ObjectiveWeights {
            w_self: rng.gen_range(0.5..3.0),
            w_inter: rng.gen_range(0.5..10.0),
            w_reg: rng.gen_range(0.05..1.0),
            lambda_rot: rng.gen_range(0.05..1.0),
        };
        Self {
            models,
            graph,
            ids,
            weights,
            targets: FrameTargets {
                laplacian,
                orientation,
                inter,
                prev,
            },
        }
    }

    fn problem(&self) -> FrameProblem<'_> {
        FrameProblem {
            models: [&self.models[0], &self.models[1]],
            graph: &self.graph,
            vertex_keypoints: [&self.ids[0], &self.ids[1]],
            targets: self.targets.clone(),
            weights: self.weights,
        }
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = 1e-6;
    let (mut g_err, mut h_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..100 {
        let inst = Instance::random(&mut rng);
        let p = inst.problem();
        let x = [
            random_configuration(&inst.models[0], &mut rng),
            random_configuration(&inst.models[1], &mut rng),
        ];
        let lin = p.linearize(&x).unwrap();
        let n = p.dim();
        let r0 = p.residuals(&x).unwrap();
        let mut g_fd = DVector::zeros(n);
        let mut j_fd = DMatrix::zeros(r0.len(), n);
        for k in 0..n {
            let plus = retract_pair(&x, p.models, &basis(n, k, h));
            let minus = retract_pair(&x, p.models, &basis(n, k, -h));
            g_fd[k] = (p.objective(&plus).unwrap() - p.objective(&minus).unwrap()) / (2.0 * h);
            j_fd.set_column(k, &((p.residuals(&plus).unwrap() - p.residuals(&minus).unwrap()) / (2.0 * h)));
        }
        g_err = g_err.max((lin.gradient() - &g_fd).norm() / g_fd.norm().max(1e-8));
        let hess_fd = j_fd.tr_mul(&j_fd) * 2.0;
        h_err = h_err.max((lin.hessian() - &hess_fd).norm() / hess_fd.norm().max(1e-8));
    }

    let mut models: Vec<RobotModel> = (0..5).map(|_| RobotModel::new(random_chain_spec(&mut rng, 5)).unwrap()).collect();
    models.push(g1_like_model());
    let (mut fk_err, mut ori_err): (f64, f64) = (0.0, 0.0);
    for model in &models {
        for _ in 0..4 {
            let c = random_configuration(model, &mut rng);
            let kin = model.forward_kinematics(&c).unwrap();
            let n = model.tangent_dim();
            let moved = |k: usize, s: f64| model.forward_kinematics(&c.retract(&basis(n, k, s))).unwrap();
            for kp in 0..model.keypoints.len() {
                let jac = model.point_jacobian(&kin, model.keypoints[kp].link, &model.keypoint_position(&kin, kp));
                for k in 0..n {
                    let fd = (model.keypoint_position(&moved(k, h), kp) - model.keypoint_position(&moved(k, -h), kp)) / (2.0 * h);
                    fk_err = fk_err.max((fd - jac.column(k)).amax());
                }
            }
            for link in 0..model.links.len() {
                let target = kin.link_rotation(link) * geometry::exp(&Vector3::new(0.3, -0.5, 0.4));
                let (_, jac) = model.orientation_error_jacobian(&kin, link, &target);
                for k in 0..n {
                    let e = |s: f64| model.orientation_error_jacobian(&moved(k, s), link, &target).0;
                    let fd = (e(h) - e(-h)) / (2.0 * h);
                    ori_err = ori_err.max((fd - jac.column(k)).amax());
                }
            }
        }
    }
    outcome(
        g_err <= 1e-5 && h_err <= 1e-5 && fk_err <= 1e-5 && ori_err <= 1e-4,
        format!(
            "100 instances: gradient rel err {g_err:.1e}, Hessian rel err {h_err:.1e}; point Jacobian {fk_err:.1e}, \
             orientation Jacobian {ori_err:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 5: reward formulas against direct summation.

fn random_sample(rng: &mut ChaCha8Rng) -> InteractionSample {
    let v = |rng: &mut ChaCha8Rng| Vector3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
    let edges = rng.gen_range(0..8);
    let nodes = rng.gen_range(1..8);
    InteractionSample {
        d_sim: (0..edges).map(|_| v(rng)).collect(),
        d_ref: (0..edges).map(|_| v(rng)).collect(),
        weights: (0..edges).map(|_| rng.gen_range(0.0..1.0)).collect(),
        contact_sim: (0..nodes).map(|_| rng.gen_bool(0.5)).collect(),
        forces: (0..nodes).map(|_| rng.gen_range(0.0..400.0)).collect(),
        active: (0..nodes).map(|_| rng.gen_bool(0.5)).collect(),
    }
}

fn oracle_r_inter(s: &InteractionSample, sigma: f64) -> f64 {
    let mut e = 0.0;
    for k in 0..s.d_sim.len() {
        let d = s.d_sim[k] - s.d_ref[k];
        e += s.weights[k] * (d.x * d.x + d.y * d.y + d.z * d.z);
    }
    (-e / sigma).exp()
}

fn oracle_l_force(f: f64, c: &RewardConfig) -> f64 {
    if f < c.f_min {
        1.0 - f / c.f_min
    } else if f > c.f_max {
        (f - c.f_max) / c.f_max
    } else {
        0.0
    }
}

fn oracle_r_contact(s: &InteractionSample, c: &RewardConfig) -> f64 {
    let n = s.active.len() as f64;
    let n_act = s.active.iter().filter(|a| **a).count() as f64;
    let mut e_act = 0.0;
    let mut e_inact = 0.0;
    for k in 0..s.active.len() {
        let flag = if s.contact_sim[k] { 1.0 } else { 0.0 };
        if s.active[k] {
            e_act += c.beta * (flag - 1.0f64).abs() + (1.0 - c.beta) * oracle_l_force(s.forces[k], c);
        } else {
            e_inact += flag;
        }
    }
    let s2 = c.sigma_c * c.sigma_c;
    (n_act / n) * (-e_act / s2).exp() + (1.0 - n_act / n) * (-e_inact / s2).exp()
}

fn criterion_5() -> Outcome {
    let c = RewardConfig::default();
    let points = [0.0, c.f_min, 0.5 * (c.f_min + c.f_max), c.f_max, 2.0 * c.f_max];
    let expected = [1.0, 0.0, 0.0, 0.0, 1.0];
    let values: Vec<f64> = points.iter().map(|f| force_regularization(*f, &c).unwrap()).collect();
    let force_ok = values == expected;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut in_range = true;
    let mut worst: f64 = 0.0;
    let mut zero_ok = true;
    for _ in 0..10_000 {
        let s = random_sample(&mut rng);
        let ri = r_inter(&s, &c).unwrap();
        let rc = r_contact(&s, &c).unwrap();
        in_range &= ri > 0.0 && ri <= 1.0 && rc > 0.0 && rc <= 1.0;
        worst = worst.max((ri - oracle_r_inter(&s, c.sigma_inter)).abs());
        worst = worst.max((rc - oracle_r_contact(&s, &c)).abs());
        let perfect = InteractionSample {
            d_sim: s.d_ref.clone(),
            contact_sim: s.active.clone(),
            forces: s.forces.iter().map(|_| 50.0).collect(),
            ..s.clone()
        };
        zero_ok &= r_inter(&perfect, &c).unwrap() == 1.0 && r_contact(&perfect, &c).unwrap() == 1.0;
    }
    outcome(
        force_ok && in_range && worst <= 1e-12 && zero_ok,
        format!(
            "L_force at {points:?} N = {values:?}; 10^4 samples in (0,1]: {in_range}, max |r - oracle| {worst:.1e}, \
             zero-error samples score 1: {zero_ok}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 6: curriculum schedule and sampling distribution.

fn criterion_6() -> Outcome {
    let c = CurriculumConfig::default();
    let close = |a: [f64; 3], b: [f64; 3]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12);
    let alpha_ok = close(curriculum_alpha(300.0, &c), [0.8, 0.1, 0.1])
        && close(curriculum_alpha(600.0, &c), [0.05, 0.30, 0.65])
        && close(curriculum_alpha(425.0, &c), [0.425, 0.2, 0.375]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut worst_sum, mut worst_floor, mut worst_oracle): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..10_000 {
        let bins = rng.gen_range(1..40);
        let errors: Vec<[f64; 3]> = (0..bins)
            .map(|_| {
                let mut e = [0.0; 3];
                for v in &mut e {
                    // Some components are entirely zero to exercise the fallback.
                    *v = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..3.0) };
                }
                e
            })
            .collect();
        let l_max = rng.gen_range(0.0..800.0);
        let state = CurriculumState {
            errors: errors.clone(),
            l_max,
            config: c.clone(),
        };
        let p = sampling_distribution(&state).unwrap();
        let floor = c.eta / bins as f64;
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        worst_floor = worst_floor.max(p.iter().fold(0.0f64, |m, v| m.max(floor - v)));
        let alpha = curriculum_alpha(l_max, &c);
        for (s, ps) in p.iter().enumerate() {
            let mut focus = 0.0;
            for k in 0..3 {
                let total: f64 = errors.iter().map(|e| e[k]).sum();
                focus += alpha[k] * if total > 0.0 { errors[s][k] / total } else { 1.0 / bins as f64 };
            }
            let expect = c.eta / bins as f64 + (1.0 - c.eta) * focus;
            worst_oracle = worst_oracle.max((ps - expect).abs());
        }
    }
    outcome(
        alpha_ok && worst_sum <= 1e-12 && worst_floor <= 1e-15 && worst_oracle <= 1e-12,
        format!(
            "alpha(300/425/600) match: {alpha_ok}; 10^4 landscapes: max |sum - 1| {worst_sum:.1e}, max floor deficit \
             {worst_floor:.1e}, max |P - oracle| {worst_oracle:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 7: phase synchronization.

fn criterion_7() -> Outcome {
    let agents = |k: f64| [SyncAgent::new(0.0, 1e-3, k), SyncAgent::new(0.0, -1e-3, k)];
    let ideal = ChannelModel::ideal();
    let cfg = |duration: f64| SyncConfig {
        duration,
        ..SyncConfig::default()
    };
    // Fixed point of the symmetric loop: rho1 - rho2 = 2 k e.
    let fixed = (1e-3 - -1e-3) / (2.0 * 0.2);
    let settled = simulate(agents(0.2), &ideal, &cfg(30.0)).unwrap();
    let at_30 = settled.error.last().unwrap().abs();
    let steady_ok = (at_30 - fixed).abs() <= 0.05 * fixed;

    let delayed = ChannelModel {
        delay_lo: 0.020,
        delay_hi: 0.060,
        drop_probability: 0.0,
        seed: 7,
    };
    let a = simulate(agents(0.2), &delayed, &cfg(60.0)).unwrap();
    let b = simulate(agents(0.2), &delayed, &cfg(60.0)).unwrap();
    let deterministic = a == b;
    let half = a.error.len() / 2;
    let late_max = a.error[half..].iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let bounded = a.max_abs_error() <= 2.0 * fixed && late_max <= 2.0 * fixed;

    let open = simulate(agents(0.0), &ideal, &cfg(60.0)).unwrap();
    let mut worst_linear: f64 = 0.0;
    for (t, e) in open.time.iter().zip(&open.error) {
        worst_linear = worst_linear.max((e.abs() - 2e-3 * t).abs());
    }
    let final_open = open.error.last().unwrap().abs();
    let diverges = worst_linear <= 1e-9 && final_open > 10.0 * fixed;
    outcome(
        steady_ok && bounded && deterministic && diverges,
        format!(
            "|dphi| at 30 s {at_30:.6} (target {fixed:.4} +/- 5%); with U[20,60] ms delay max |dphi| {:.6} over 60 s, \
             deterministic: {deterministic}; k = 0 error {final_open:.4} at 60 s, max deviation from 2e-3 t {worst_linear:.1e}",
            a.max_abs_error()
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 8: metrics against brute-force implementations.

/// Segment-segment distance by nested ternary search; the distance is jointly
/// convex in the two segment parameters.
fn oracle_segment_distance(a: &Capsule, b: &Capsule) -> f64 {
    let at = |c: &Capsule, t: f64| c.a + (c.b - c.a) * t;
    let inner = |s: f64| {
        let p = at(a, s);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..100 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if (p - at(b, m1)).norm() <= (p - at(b, m2)).norm() {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        (p - at(b, 0.5 * (lo + hi))).norm()
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if inner(m1) <= inner(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    inner(0.5 * (lo + hi)) - a.radius - b.radius
}

fn oracle_depth(models: [&RobotModel; 2], configs: &[RobotConfiguration; 2]) -> f64 {
    let capsules = |agent: usize| {
        let m = models[agent];
        let kin = m.forward_kinematics(&configs[agent]).unwrap();
        m.world_capsules(&kin)
            .into_iter()
            .map(|(_, a, b, r)| Capsule::new(a, b, r))
            .collect::<Vec<_>>()
    };
    let (ca, cb) = (capsules(0), capsules(1));
    let mut min = f64::INFINITY;
    for p in &ca {
        for q in &cb {
            min = min.min(oracle_segment_distance(p, q));
        }
    }
    (-min).max(0.0)
}

fn random_edge_frame(rng: &mut ChaCha8Rng) -> EdgeFrame {
    let n = rng.gen_range(0..6);
    let v = |rng: &mut ChaCha8Rng| Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.3..0.3));
    EdgeFrame {
        sim: (0..n).map(|_| v(rng)).collect(),
        reference: (0..n).map(|_| v(rng)).collect(),
        weights: (0..n).map(|_| rng.gen_range(0.05..1.0)).collect(),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut count_mismatch = 0usize;
    let mut penetrating = 0usize;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        // Two small robots placed close enough that some frames overlap.
        let models = [
            RobotModel::new(random_chain_spec(&mut rng, 3)).unwrap(),
            RobotModel::new(random_chain_spec(&mut rng, 3)).unwrap(),
        ];
        let frames: Vec<[RobotConfiguration; 2]> = (0..6)
            .map(|_| {
                let mut a = random_configuration(&models[0], &mut rng);
                let mut b = random_configuration(&models[1], &mut rng);
                a.root_position *= 0.15;
                b.root_position *= 0.15;
                [a, b]
            })
            .collect();
        let m = [&models[0], &models[1]];
        let depths = metrics::trajectory_penetration(m, &frames).unwrap();
        let pen = metrics::penetration_metrics(&depths);
        let oracle: Vec<f64> = frames.iter().map(|f| oracle_depth(m, f)).collect();
        let hits = oracle.iter().filter(|d| **d > 1e-6).count();
        penetrating += hits;
        let ipr = 100.0 * hits as f64 / frames.len() as f64;
        let mpd = 100.0 * oracle.iter().fold(0.0f64, |a, d| a.max(*d));
        count_mismatch += usize::from(ipr != pen.ipr);
        worst = worst.max((mpd - pen.mpd).abs() / 100.0);

        // Edge metrics.
        let edges: Vec<EdgeFrame> = (0..rng.gen_range(1..8)).map(|_| random_edge_frame(&mut rng)).collect();
        let h_robot = rng.gen_range(1.0..2.0);
        let mut per_frame = Vec::new();
        for f in &edges {
            if !f.reference.is_empty() {
                let s: f64 = (0..f.sim.len()).map(|k| (f.sim[k] - f.reference[k]).norm()).sum();
                per_frame.push(100.0 * s / (f.sim.len() as f64 * h_robot));
            }
        }
        let iee_oracle = if per_frame.is_empty() { 0.0 } else { per_frame.iter().sum::<f64>() / per_frame.len() as f64 };
        worst = worst.max((iee_retarget(&edges, h_robot).unwrap().value - iee_oracle).abs());
        for tau in [metrics::TAU_STRICT, metrics::TAU_LOOSE] {
            let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for f in &edges {
                for k in 0..f.sim.len() {
                    let pred = f.sim[k].norm() < tau;
                    let truth = f.reference[k].norm() < tau;
                    tp += usize::from(pred && truth);
                    fp += usize::from(pred && !truth);
                    fn_ += usize::from(!pred && truth);
                }
            }
            let r = contact_f1(&edges, tau).unwrap();
            count_mismatch += usize::from((r.true_positive, r.false_positive, r.false_negative) != (tp, fp, fn_));
            let f1 = if tp + fp + fn_ == 0 {
                1.0
            } else if tp == 0 {
                0.0
            } else {
                let p = tp as f64 / (tp + fp) as f64;
                let rc = tp as f64 / (tp + fn_) as f64;
                2.0 * p * rc / (p + rc)
            };
            worst = worst.max((r.f1 - f1).abs());
        }

        // Policy metrics.
        let eps = 0.02;
        let rollouts: Vec<Vec<RolloutStep>> = (0..rng.gen_range(1..4))
            .map(|_| {
                (0..rng.gen_range(1..6))
                    .map(|_| RolloutStep {
                        edges: random_edge_frame(&mut rng),
                        required_contact_distances: (0..rng.gen_range(0..5)).map(|_| rng.gen_range(-0.01..0.06)).collect(),
                    })
                    .collect()
            })
            .collect();
        let (mut isr_hit, mut isr_n, mut csr_hit, mut csr_n, mut miss, mut req, mut dsr_hit) = (0, 0, 0, 0, 0, 0, 0);
        for r in &rollouts {
            let mut ok = true;
            for s in r {
                let num: f64 = (0..s.edges.sim.len()).map(|k| s.edges.weights[k] * (s.edges.sim[k] - s.edges.reference[k]).norm()).sum();
                let den: f64 = (0..s.edges.sim.len()).map(|k| s.edges.weights[k] * s.edges.reference[k].norm()).sum();
                if den > 0.0 {
                    let e = 100.0 * num / den;
                    isr_n += 1;
                    isr_hit += usize::from(e < 10.0);
                    ok &= e < 20.0;
                    worst = worst.max((iee_policy_frame(&s.edges).unwrap().unwrap() - e).abs());
                }
                let d = &s.required_contact_distances;
                if !d.is_empty() {
                    let made = d.iter().filter(|x| **x <= eps).count();
                    csr_n += 1;
                    csr_hit += usize::from(made * 10 > d.len() * 8);
                    req += d.len();
                    miss += d.len() - made;
                }
            }
            dsr_hit += usize::from(ok);
        }
        let pct = |h: usize, n: usize| if n == 0 { 100.0 } else { 100.0 * h as f64 / n as f64 };
        let p = policy_metrics(&rollouts, eps).unwrap();
        let expect = [
            pct(isr_hit, isr_n),
            pct(csr_hit, csr_n),
            if req == 0 { 0.0 } else { miss as f64 / req as f64 },
            pct(dsr_hit, rollouts.len()),
        ];
        for (got, want) in [p.isr, p.csr, p.cer, p.dsr].iter().zip(expect) {
            count_mismatch += usize::from(*got != want);
        }
    }
    outcome(
        count_mismatch == 0 && worst <= 1e-9 && penetrating > 0,
        format!(
            "100 instances ({penetrating} penetrating frames): {count_mismatch} count mismatches, max continuous \
             deviation {worst:.1e} (F1 at tau 0.2 / 0.4 m)"
        ),
    )
}

// ---------------------------------------------------------------------------
// Criterion 9: byte-identical CLI runs.

fn run_pipeline(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let bin = env!("CARGO_BIN_EXE_duet");
    let out = dir.join("out");
    let status = Command::new(bin)
        .args(["retarget", "--clip", "handshake", "--out"])
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("retarget failed: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let clip_dir = out.join("handshake");
    let status = Command::new(bin)
        .arg("metrics")
        .arg("--trajectory")
        .arg(clip_dir.join("trajectory.json"))
        .arg("--priors")
        .arg(clip_dir.join("priors.json"))
        .arg("--out")
        .arg(clip_dir.join("metrics"))
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("metrics failed: {}", String::from_utf8_lossy(&status.stderr)));
    }
    let mut files = Vec::new();
    for rel in [
        "trajectory.json",
        "priors.json",
        "diagnostics.json",
        "metrics/metrics.json",
        "metrics/metrics.txt",
        "metrics/traces.tsv",
    ] {
        let bytes = fs::read(clip_dir.join(rel)).map_err(|e| format!("{rel}: {e}"))?;
        files.push((rel.to_string(), bytes));
    }
    Ok(files)
}

fn criterion_9() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    match (run_pipeline(a.path()), run_pipeline(b.path())) {
        (Ok(x), Ok(y)) => {
            let differing: Vec<&str> = x.iter().zip(&y).filter(|(p, q)| p.1 != q.1).map(|(p, _)| p.0.as_str()).collect();
            let bytes: usize = x.iter().map(|f| f.1.len()).sum();
            outcome(
                differing.is_empty(),
                format!("retarget -> metrics on handshake twice: {} files, {bytes} bytes, differing: {differing:?}", x.len()),
            )
        }
        (Err(e), _) | (_, Err(e)) => outcome(false, e),
    }
}
