use approx::assert_relative_eq;
use braidmix::algebra::{parse_braid_word, schedule_steps, BraidStep};
use braidmix::controllers::*;
use braidmix::geometry::{braid_point_grid, uniform_times, waypoints, RegionRect, StrandKind, WaypointGrid};
use braidmix::sim::random_restricted_word;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn setup(seed: u64, n: usize, m: usize, a: f64, w: f64, t: f64) -> (WaypointGrid, Vec<BraidStep>, RegionRect) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let text = random_restricted_word(&mut rng, n, m);
    let word = parse_braid_word(&text, n).unwrap();
    let steps = schedule_steps(&word, true).unwrap();
    let region = RegionRect::new(a * (n - 1) as f64, w * m as f64, t).unwrap();
    let grid = braid_point_grid(n, steps.len(), &region).unwrap();
    (waypoints(grid, &steps).unwrap(), steps, region)
}

/// Smallest pairwise clearance `d_jk − δ_jk` over `samples` points per step.
fn sampled_clearance(n: usize, times: &[f64], sep: &Separation, pos: impl Fn(usize, f64) -> braidmix::Vec2, samples: usize) -> f64 {
    let mut worst = f64::INFINITY;
    for s in times.windows(2) {
        for k in 0..=samples {
            let t = s[0] + (s[1] - s[0]) * k as f64 / samples as f64;
            let p: Vec<_> = (0..n).map(|j| pos(j, t)).collect();
            for a in 0..n {
                for b in a + 1..n {
                    worst = worst.min((p[a] - p[b]).norm() - sep.get(a, b));
                }
            }
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reparameterized_strands_keep_separation(
        seed in any::<u64>(),
        n in 2usize..=6,
        m in 1usize..=6,
        a in 0.5f64..2.0,
        aspect in 0.5f64..2.0,
        frac in 0.05f64..0.2,
        city in any::<bool>(),
    ) {
        let (grid, steps, _) = setup(seed, n, m, a, a * aspect, 10.0 * m as f64);
        let kind = if city { StrandKind::CityBlock } else { StrandKind::Straight };
        let sep = Separation::Uniform(frac * a);
        let plan = reparameterization_plan(&grid, &steps, kind, &sep).unwrap();
        let clearance = sampled_clearance(n, grid.times(), &sep, |j, t| plan.position(j, t), 10_000);
        prop_assert!(clearance >= -1e-9, "clearance {clearance}");
        for i in 0..=steps.len() {
            for j in 0..n {
                prop_assert!((plan.position(j, grid.times()[i]) - grid.point(i, j)).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn per_pair_separations_are_respected(seed in any::<u64>(), n in 3usize..=5, m in 1usize..=5) {
        let (grid, steps, _) = setup(seed, n, m, 1.0, 1.2, 5.0 * m as f64);
        let rows: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|k| if j == k { 0.0 } else { 0.05 + 0.03 * ((j + k) % 5) as f64 }).collect()).collect();
        let sep = Separation::Matrix(rows);
        let plan = reparameterization_plan(&grid, &steps, StrandKind::Straight, &sep).unwrap();
        prop_assert!(sampled_clearance(n, grid.times(), &sep, |j, t| plan.position(j, t), 10_000) >= -1e-9);
    }

    #[test]
    fn schedules_are_minimum_energy(
        length in 0.5f64..3.0,
        crossing in 0.3f64..0.7,
        margin in 0.0f64..0.25,
        under in any::<bool>(),
        amp in -0.5f64..0.5,
        k in 1u32..4,
    ) {
        let role = if under { Role::Under } else { Role::Over };
        let p = reparameterize_crossing(length, crossing, margin, 0.0, 2.0, role).unwrap();
        prop_assert_eq!(p.position(0.0), 0.0);
        prop_assert!((p.position(1.0) - (crossing + role.sign() * margin / length)).abs() < 1e-12);
        prop_assert_eq!(p.position(2.0), 1.0);
        // bumps vanishing at t = 0, 1, 2 keep the interpolation constraints
        let bump_rate = |t: f64| amp * std::f64::consts::PI * k as f64 * (std::f64::consts::PI * k as f64 * t).cos();
        let n = 20_000;
        let h = 2.0 / n as f64;
        let energy: f64 = (0..n).map(|i| {
            let t = (i as f64 + 0.5) * h;
            0.5 * (p.velocity(t) + bump_rate(t)).powi(2) * h
        }).sum();
        prop_assert!(energy >= p.energy() - 1e-9);
    }

    #[test]
    fn mixing_bound_is_monotone(
        n in 2usize..30,
        h in 1.0f64..10.0,
        l in 1.0f64..10.0,
        t in 1.0f64..60.0,
        d in 0.01f64..0.5,
        v in 0.5f64..5.0,
        bump in 1.0f64..1.5,
    ) {
        let b = |n, h, l, t, d, v| mixing_limit_upper(n, h, l, t, d, v).unwrap().value;
        let base = b(n, h, l, t, d, v);
        prop_assert!(b(n, h, l, t * bump, d, v) >= base);
        prop_assert!(b(n, h, l, t, d, v * bump) >= base);
        prop_assert!(b(n, h, l, t, d * bump, v) <= base);
        if d > h / (n - 1) as f64 {
            prop_assert_eq!(base, 0);
        }
    }

    #[test]
    fn feasible_stop_go_stop_plans_are_safe(
        seed in any::<u64>(),
        n in 2usize..=5,
        m in 1usize..=5,
        a in 0.5f64..2.0,
        aspect in 0.5f64..2.0,
        frac in 0.05f64..0.6,
        v in 0.5f64..2.0,
        slack in 1.0f64..3.0,
    ) {
        let w = a * aspect;
        let h = a * (n - 1) as f64;
        let sep = frac * stop_go_stop_clearance(a, w);
        let hyp = w.hypot(h);
        let tau = sep / (v * w / hyp);
        let step = slack * (hyp / (v * w / hyp) + (n - 1) as f64 * tau);
        let (grid, steps, region) = setup(seed, n, m, a, w, step * m as f64);
        prop_assert!(stop_go_stop_feasible(n, steps.len(), &region, sep, v, grid.times()));
        let plan = stop_go_stop_plan(&grid, v, sep).unwrap();
        let clearance = sampled_clearance(n, grid.times(), &Separation::Uniform(sep), |j, t| plan.position(j, t), 10_000);
        prop_assert!(clearance >= -1e-9, "clearance {clearance}");
        for i in 0..=steps.len() {
            for j in 0..n {
                prop_assert!((plan.position(j, grid.times()[i]) - grid.point(i, j)).norm() <= 1e-12);
                if i > 0 {
                    prop_assert!(plan.velocity(j, 0.5 * (grid.times()[i - 1] + grid.times()[i])).norm() <= v * (1.0 + 1e-12));
                }
            }
        }
    }
}

#[test]
fn literal_schedule_reaches_offset_midpoint() {
    for (role, expected) in [(Role::Under, 0.6), (Role::Over, 0.4), (Role::None, 0.5)] {
        let p = reparameterize(2.0, 0.4, 1.0, 3.0, role).unwrap();
        assert_relative_eq!(p.position(2.0), expected, epsilon = 1e-15);
    }
    assert!(matches!(reparameterize(1.0, 2.0, 0.0, 1.0, Role::Under), Err(ControlError::MarginTooLarge { .. })));
}

#[test]
fn feasibility_test_shrinks_with_separation() {
    let region = RegionRect::new(4.0, 2.0, 30.0).unwrap();
    let mut last = usize::MAX;
    for d in [0.01, 0.05, 0.1, 0.2, 0.4] {
        let m = max_feasible_steps(5, &region, d, 2.0, 200).unwrap_or(0);
        assert!(m <= last);
        last = m;
    }
    assert!(stop_go_stop_feasible(3, 2, &region, 0.1, 2.0, &uniform_times(2, 30.0)));
}
