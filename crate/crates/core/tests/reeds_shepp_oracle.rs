mod support;

use std::f64::consts::PI;

use headland_core::geometry::Pose2D;
use headland_core::reeds_shepp::{reeds_shepp, reeds_shepp_length};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::rs_oracle::{dubins_oracle, rs_oracle};

#[test]
fn shortest_length_matches_multistart_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let goal = Pose2D::new(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0), rng.gen_range(-PI..PI));
        let r = rng.gen_range(0.5..3.0);
        let ours = reeds_shepp_length(&Pose2D::default(), &goal, r);
        let oracle = r * rs_oracle(goal.x / r, goal.y / r, goal.theta);
        assert!((ours - oracle).abs() < 1e-6, "{goal:?} r={r}: {ours} vs {oracle}");
        let dubins = r * dubins_oracle(goal.x / r, goal.y / r, goal.theta);
        assert!(ours <= dubins + 1e-9, "{goal:?}: {ours} > dubins {dubins}");
    }
}

#[test]
fn path_reaches_goal_with_bounded_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let a = Pose2D::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-PI..PI));
        let b = Pose2D::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-PI..PI));
        let p = reeds_shepp(&a, &b, 2.0);
        let e = p.end_pose();
        assert!(e.position().distance(b.position()) < 1e-9);
        assert!(headland_core::geometry::angle_diff(e.theta, b.theta).abs() < 1e-9);
        for s in &p.segments {
            assert!(s.curvature == 0.0 || (s.curvature.abs() - 0.5).abs() < 1e-12);
        }
    }
}
