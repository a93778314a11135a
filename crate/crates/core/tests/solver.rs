//! End-to-end solver invariants on the bundled fixtures.

use duet_core::fixtures::{g1_like_model, handshake_clip, hug_clip};
use duet_core::interaction_mesh::MeshConfig;
use duet_core::metrics::{evaluate_trajectory, penetration_metrics};
use duet_core::retarget::{retarget_clip, SolverConfig};

#[test]
fn sqp_iterations_respect_bounds_and_never_increase_the_objective() {
    let m = g1_like_model();
    let config = SolverConfig::default();
    for clip in [handshake_clip(), hug_clip()] {
        let (_, traj) = retarget_clip(&clip, [&m, &m], &MeshConfig::default(), &config).unwrap();
        assert!(traj.failed_frames().is_empty());
        for d in &traj.diagnostics {
            for w in d.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-8, "frame {}: {:?}", d.frame, d.objective_trace);
            }
            for s in &d.step_norms {
                assert!(*s <= config.trust_region + 1e-12, "frame {}: step {s}", d.frame);
            }
        }
        for (t, frame) in traj.frames.iter().enumerate() {
            for c in frame {
                assert!(m.limit_violation(&c.q) <= 1e-9, "frame {t}");
            }
        }
    }
}

#[test]
fn metrics_and_diagnostics_agree_on_penetration() {
    let m = g1_like_model();
    let config = SolverConfig {
        collision: false,
        ..SolverConfig::default()
    };
    let (reference, traj) = retarget_clip(&hug_clip(), [&m, &m], &MeshConfig::default(), &config).unwrap();
    let report = evaluate_trajectory([&m, &m], &traj.frames, &traj.priors, reference.h_robot, &[], 0.02).unwrap();
    let from_diag: Vec<f64> = traj.diagnostics.iter().map(|d| d.penetration_depth).collect();
    assert_eq!(report.penetration_trace, from_diag);
    assert_eq!(penetration_metrics(&from_diag).ipr, report.ipr);
    assert!(report.ipr > 0.0);
}

#[test]
fn retargeting_is_deterministic() {
    let m = g1_like_model();
    let run = || {
        retarget_clip(&handshake_clip(), [&m, &m], &MeshConfig::default(), &SolverConfig::default())
            .unwrap()
            .1
    };
    let (a, b) = (run(), run());
    assert_eq!(a.frames, b.frames);
    assert_eq!(a.priors, b.priors);
}
