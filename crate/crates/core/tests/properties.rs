//! Property tests for the invariants of the pure modules.

use duet_core::collision::{capsule_distance, Capsule};
use duet_core::curriculum::{curriculum_alpha, sampling_distribution, smooth_errors, CurriculumConfig, CurriculumState};
use duet_core::geometry;
use duet_core::metrics::{contact_f1, iee_policy, iee_retarget, EdgeFrame};
use duet_core::phase_sync::{simulate, ChannelModel, SyncAgent, SyncConfig};
use duet_core::rewards::{force_regularization, r_contact, r_inter, InteractionSample, RewardConfig};
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;

fn vec3() -> impl Strategy<Value = Vector3<f64>> {
    (-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn interaction_sample() -> impl Strategy<Value = InteractionSample> {
    (
        prop::collection::vec((vec3(), vec3(), 0.0..1.0f64), 0..8),
        prop::collection::vec((any::<bool>(), 0.0..400.0f64, any::<bool>()), 0..8),
    )
        // Edge vectors within 0.3 m keep the kernel well above underflow.
        .prop_map(|(edges, nodes)| InteractionSample {
            d_sim: edges.iter().map(|e| e.0 * 0.15).collect(),
            d_ref: edges.iter().map(|e| e.1 * 0.15).collect(),
            weights: edges.iter().map(|e| e.2).collect(),
            contact_sim: nodes.iter().map(|n| n.0).collect(),
            forces: nodes.iter().map(|n| n.1).collect(),
            active: nodes.iter().map(|n| n.2).collect(),
        })
}

fn edge_frames() -> impl Strategy<Value = Vec<EdgeFrame>> {
    prop::collection::vec(
        prop::collection::vec((vec3(), vec3(), 0.01..1.0f64), 0..5).prop_map(|e| EdgeFrame {
            sim: e.iter().map(|x| x.0 * 0.3).collect(),
            reference: e.iter().map(|x| x.1 * 0.3).collect(),
            weights: e.iter().map(|x| x.2).collect(),
        }),
        1..6,
    )
}

proptest! {
    #[test]
    fn rewards_lie_in_unit_interval(s in interaction_sample()) {
        let c = RewardConfig::default();
        let ri = r_inter(&s, &c).unwrap();
        let rc = r_contact(&s, &c).unwrap();
        prop_assert!(ri > 0.0 && ri <= 1.0);
        prop_assert!(rc > 0.0 && rc <= 1.0);
    }

    #[test]
    fn zero_error_maximizes_interaction_reward(s in interaction_sample(), scale in 0.0..1.0f64) {
        let c = RewardConfig::default();
        let exact = InteractionSample { d_sim: s.d_ref.clone(), ..s.clone() };
        prop_assert_eq!(r_inter(&exact, &c).unwrap(), 1.0);
        // Shrinking the error towards zero never lowers the reward.
        let closer = InteractionSample {
            d_sim: s.d_sim.iter().zip(&s.d_ref).map(|(a, b)| b + (a - b) * scale).collect(),
            ..s.clone()
        };
        prop_assert!(r_inter(&closer, &c).unwrap() >= r_inter(&s, &c).unwrap());
    }

    #[test]
    fn force_regularization_is_nonnegative(f in 0.0..1000.0f64) {
        prop_assert!(force_regularization(f, &RewardConfig::default()).unwrap() >= 0.0);
    }

    #[test]
    fn sampling_distribution_is_valid(
        errors in prop::collection::vec((0.0..5.0f64, 0.0..5.0f64, 0.0..5.0f64), 1..20),
        l_max in 0.0..800.0f64,
        factor in 0.01..100.0f64,
    ) {
        let state = CurriculumState {
            errors: errors.iter().map(|e| [e.0, e.1, e.2]).collect(),
            l_max,
            config: CurriculumConfig::default(),
        };
        let p = sampling_distribution(&state).unwrap();
        let floor = state.config.eta / p.len() as f64;
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|v| *v >= floor - 1e-15));
        let scaled = CurriculumState {
            errors: state.errors.iter().map(|e| [e[0] * factor, e[1] * factor, e[2] * factor]).collect(),
            ..state.clone()
        };
        for (a, b) in p.iter().zip(sampling_distribution(&scaled).unwrap()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn alpha_is_a_continuous_distribution(l in 0.0..800.0f64) {
        let c = CurriculumConfig::default();
        let a = curriculum_alpha(l, &c);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let b = curriculum_alpha(l + 1e-9, &c);
        for k in 0..3 {
            prop_assert!((a[k] - b[k]).abs() <= 1e-9);
        }
    }

    #[test]
    fn smoothing_preserves_mass_and_sign(raw in prop::collection::vec(0.0..10.0f64, 1..30)) {
        let out = smooth_errors(&raw, 1.0).unwrap();
        prop_assert!(out.iter().all(|v| *v >= 0.0));
        prop_assert!((out.iter().sum::<f64>() - raw.iter().sum::<f64>()).abs() <= 1e-9);
    }

    #[test]
    fn metrics_are_rigid_invariant(frames in edge_frames(), axis in vec3()) {
        // Edge vectors are differences, so translations cancel and only the
        // rotation of a rigid motion acts on them.
        let rot = UnitQuaternion::from_scaled_axis(axis);
        let moved: Vec<EdgeFrame> = frames
            .iter()
            .map(|f| EdgeFrame {
                sim: f.sim.iter().map(|v| rot * v).collect(),
                reference: f.reference.iter().map(|v| rot * v).collect(),
                weights: f.weights.clone(),
            })
            .collect();
        let a = iee_retarget(&frames, 1.3).unwrap().value;
        let b = iee_retarget(&moved, 1.3).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-9);
        let a = iee_policy(&frames).unwrap().value;
        let b = iee_policy(&moved).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        for tau in [0.2, 0.4] {
            let fa = contact_f1(&frames, tau).unwrap();
            let fb = contact_f1(&moved, tau).unwrap();
            // Lengths may cross tau by round-off only when they sit on it.
            prop_assert!((fa.f1 - fb.f1).abs() <= 1e-9 || frames.iter().flat_map(|f| f.sim.iter().chain(&f.reference)).any(|v| (v.norm() - tau).abs() < 1e-9));
        }
    }

    #[test]
    fn identical_edges_score_perfect_f1(frames in edge_frames(), tau in 0.01..2.0f64) {
        let same: Vec<EdgeFrame> = frames
            .iter()
            .map(|f| EdgeFrame { sim: f.reference.clone(), ..f.clone() })
            .collect();
        prop_assert_eq!(contact_f1(&same, tau).unwrap().f1, 1.0);
    }

    #[test]
    fn policy_iee_is_scale_invariant(frames in edge_frames(), c in 0.1..10.0f64) {
        let scaled: Vec<EdgeFrame> = frames
            .iter()
            .map(|f| EdgeFrame {
                sim: f.sim.iter().map(|v| v * c).collect(),
                reference: f.reference.iter().map(|v| v * c).collect(),
                weights: f.weights.clone(),
            })
            .collect();
        let a = iee_policy(&frames).unwrap().value;
        let b = iee_policy(&scaled).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn exp_log_round_trip(v in vec3()) {
        let v = v * 0.7;
        prop_assert!((geometry::log(&geometry::exp(&v)) - v).norm() <= 1e-12);
    }

    #[test]
    fn capsule_distance_is_symmetric(a in vec3(), b in vec3(), c in vec3(), d in vec3(), r1 in 0.01..0.3f64, r2 in 0.01..0.3f64) {
        let p = Capsule::new(a, b, r1);
        let q = Capsule::new(c, d, r2);
        let x = capsule_distance(&p, &q).signed_distance;
        let y = capsule_distance(&q, &p).signed_distance;
        prop_assert!((x - y).abs() <= 1e-12);
        // Never below the exact distance of the closest endpoints minus radii.
        let ends = [(a - c).norm(), (a - d).norm(), (b - c).norm(), (b - d).norm()];
        prop_assert!(x <= ends.iter().cloned().fold(f64::INFINITY, f64::min) - r1 - r2 + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sync_is_deterministic_and_continuous(
        seed in any::<u64>(),
        drift in -0.01..0.01f64,
        k in 0.0..1.0f64,
        phase in -1.0..1.0f64,
    ) {
        let agents = [SyncAgent::new(phase, drift, k), SyncAgent::new(0.0, -drift, k)];
        let channel = ChannelModel { delay_lo: 0.02, delay_hi: 0.06, drop_probability: 0.1, seed };
        let config = SyncConfig { duration: 10.0, ..SyncConfig::default() };
        let a = simulate(agents, &channel, &config).unwrap();
        let b = simulate(agents, &channel, &config).unwrap();
        prop_assert_eq!(&a, &b);
        let max_err = 1.0 + 0.02 * 10.0 + phase.abs();
        let bound = (1.0 + drift.abs()) * (1.0 + k * max_err) * config.dt;
        for w in a.phase.windows(2) {
            for i in 0..2 {
                let step = w[1][i] - w[0][i];
                prop_assert!(step > 0.0 && step <= bound + 1e-12);
            }
        }
    }
}
