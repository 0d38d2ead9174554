//! Scratch harness for watching the takeoff NLP converge on a yaw spin.

use leapplan::schedule::{build_reference, schedule_from_gait, Gait, JumpSpec, RotationAxis};
use leapplan::srb::{ModelParams, SrbState};
use leapplan::terrain::TerrainModel;
use leapplan::trajopt::{build_nlp, solve_trajectory, Weights};
use nalgebra::Vector3;
use std::f64::consts::PI;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LEAPPLAN_LOG", "debug"))
        .init();
    let args: Vec<String> = std::env::args().collect();
    let dist: f64 = args.get(1).map_or(0.0, |s| s.parse().unwrap());
    let angle: f64 = args.get(2).map_or(PI, |s| s.parse().unwrap());
    let params = ModelParams::default();
    let sched = schedule_from_gait(Gait::Static, 13, 0.02, 0.0).unwrap();
    let spec = JumpSpec {
        landing_target: Vector3::new(dist, 0.0, 0.28),
        landing_height: 0.0,
        stance_height: 0.0,
        rotation_axis: RotationAxis::Yaw,
        rotation_angle: angle,
        gait: Gait::Static,
        takeoff_duration: 0.24,
        beta: -0.1,
        gamma: 0.45,
    };
    let mut x0 = SrbState::zero();
    x0.p_c.z = 0.28;
    let reference = build_reference(&spec, &sched, &x0, &params).unwrap();
    let problem = build_nlp(
        &reference,
        &sched,
        &TerrainModel::flat(0.0),
        &params,
        &Weights::default(),
    )
    .unwrap();
    let t0 = std::time::Instant::now();
    match solve_trajectory(&problem, None) {
        Ok(plan) => {
            println!(
                "converged in {} iterations, kkt {:.2e}, viol {:.2e}, {:?}",
                plan.stats.iterations,
                plan.stats.kkt_residual,
                plan.stats.constraint_violation,
                t0.elapsed()
            );
            println!("report: {:?}", plan.report);
            let lo = plan.states.last().unwrap();
            println!("liftoff: v {:?} w {:?}", lo.v_c, lo.omega_b);
        }
        Err(e) => println!("solve failed after {:?}: {e}", t0.elapsed()),
    }
}
