use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use asymstream::clustering::{
    build_coreset, clustering_cost, min_cluster_size, solve, solve_kmeans, solve_kmedian, CoresetParams, CoresetSummary,
    Objective, SolverOptions, SummaryConfig, WeightedPoint,
};
use asymstream::oracles::optimal_clustering_tiny;
use asymstream::Error;

fn naive_cost(points: &[WeightedPoint], centers: &[Vec<f64>], objective: Objective) -> f64 {
    let mut total = 0.0;
    for p in points {
        let mut best = f64::INFINITY;
        for c in centers {
            let mut s = 0.0;
            for j in 0..c.len() {
                s += (p.coords[j] - c[j]).powi(2);
            }
            let v = match objective {
                Objective::Means => s,
                Objective::Median => s.sqrt(),
            };
            if v < best {
                best = v;
            }
        }
        total += p.weight * best;
    }
    total
}

fn naive_min_size(points: &[WeightedPoint], centers: &[Vec<f64>]) -> u64 {
    let mut mass = vec![0.0; centers.len()];
    for p in points {
        let mut arg = 0;
        let mut best = f64::INFINITY;
        for (i, c) in centers.iter().enumerate() {
            let d: f64 = p.coords.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best {
                best = d;
                arg = i;
            }
        }
        mass[arg] += p.weight;
    }
    mass.iter().map(|m| m.floor() as u64).min().unwrap()
}

fn mixture(k: usize, n: usize, sep: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|i| vec![(i % k) as f64 * sep + noise.sample(&mut rng), noise.sample(&mut rng)])
        .collect()
}

fn unit(points: &[Vec<f64>]) -> Vec<WeightedPoint> {
    points.iter().cloned().map(WeightedPoint::unit).collect()
}

#[test]
fn cost_examples() {
    let c = vec![vec![0.0, 0.0]];
    let p = vec![WeightedPoint::new(vec![2.0, 0.0], 3.0).unwrap()];
    assert_eq!(clustering_cost(&p, &c, Objective::Means).unwrap(), 12.0);
    assert_eq!(clustering_cost(&p, &c, Objective::Median).unwrap(), 6.0);
    let on = unit(&[vec![0.0, 0.0]]);
    assert_eq!(clustering_cost(&on, &c, Objective::Means).unwrap(), 0.0);
    assert!(matches!(clustering_cost(&on, &[], Objective::Means), Err(Error::Contract(_))));
    assert!(WeightedPoint::new(vec![1.0], 0.0).is_err());
    assert!(WeightedPoint::new(vec![f64::NAN], 1.0).is_err());
}

#[test]
fn min_cluster_size_examples() {
    let mut pts = unit(&vec![vec![0.0]; 50]);
    pts.extend(unit(&vec![vec![10.0]; 50]));
    assert_eq!(min_cluster_size(&pts, &[vec![0.0], vec![10.0]]).unwrap(), 50);
    assert_eq!(min_cluster_size(&pts, &[vec![0.0], vec![10.0], vec![100.0]]).unwrap(), 0);
    // ties go to the lower index
    assert_eq!(min_cluster_size(&unit(&[vec![5.0]]), &[vec![0.0], vec![10.0]]).unwrap(), 0);
}

#[test]
fn cost_and_sizes_match_naive_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let n = rng.random_range(1..40);
        let k = rng.random_range(1..5);
        let d = rng.random_range(1..4);
        let pts: Vec<WeightedPoint> = (0..n)
            .map(|_| {
                let c = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
                WeightedPoint::new(c, rng.random_range(0.5..3.0)).unwrap()
            })
            .collect();
        let centers: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        for obj in [Objective::Means, Objective::Median] {
            let a = clustering_cost(&pts, &centers, obj).unwrap();
            let b = naive_cost(&pts, &centers, obj);
            assert!((a - b).abs() <= 1e-9 * (1.0 + b));
        }
        assert_eq!(min_cluster_size(&pts, &centers).unwrap(), naive_min_size(&pts, &centers));
    }
}

#[test]
fn repeated_point_collapses() {
    let pts = vec![vec![1.5, -2.0]; 100];
    let params = CoresetParams { k: 1, epsilon: 0.2, delta: 0.1, size_constant: 0.5, objective: Objective::Means, seed: 3 };
    let cs = build_coreset(&pts, &params).unwrap();
    assert_eq!(cs.points.len(), 1);
    assert_eq!(cs.points[0].weight, 100.0);
    let c = vec![vec![0.3, 0.7]];
    // one product against a hundred additions: equal up to rounding
    let a = clustering_cost(&cs.points, &c, Objective::Means).unwrap();
    let b = clustering_cost(&unit(&pts), &c, Objective::Means).unwrap();
    assert!((a - b).abs() <= 1e-12 * b);
}

#[test]
fn more_centers_than_points_returns_input() {
    let pts = mixture(2, 5, 4.0, 1);
    let params = CoresetParams { k: 9, epsilon: 0.2, delta: 0.1, size_constant: 0.5, objective: Objective::Means, seed: 0 };
    let cs = build_coreset(&pts, &params).unwrap();
    assert_eq!(cs.points, unit(&pts));
}

#[test]
fn coreset_errors() {
    let params = CoresetParams { k: 2, epsilon: 0.2, delta: 0.1, size_constant: 0.5, objective: Objective::Means, seed: 0 };
    assert!(matches!(build_coreset(&[], &params), Err(Error::Input(_))));
    assert!(matches!(build_coreset(&[vec![1.0], vec![1.0, 2.0]], &params), Err(Error::Dimension { .. })));
}

/// 4000 points compress to a few hundred, so this exercises real sampling.
#[test]
fn compressed_coreset_preserves_costs() {
    let eps = 0.2;
    let mut good = 0;
    let seeds = 100;
    for seed in 0..seeds {
        let pts = mixture(3, 4000, 10.0, 500 + seed);
        let params = CoresetParams { k: 3, epsilon: eps, delta: 0.05, size_constant: 0.5, objective: Objective::Means, seed };
        let cs = build_coreset(&pts, &params).unwrap();
        assert!(cs.points.len() < 4000 / 2, "{} points", cs.points.len());
        assert!((cs.total_weight() - 4000.0).abs() <= 1e-9 * 4000.0);
        let full = unit(&pts);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xBEEF);
        let worst = (0..200)
            .map(|_| {
                let centers: Vec<Vec<f64>> = (0..3).map(|_| vec![rng.random_range(-3.0..23.0), rng.random_range(-3.0..3.0)]).collect();
                let exact = naive_cost(&full, &centers, Objective::Means);
                let approx = clustering_cost(&cs.points, &centers, Objective::Means).unwrap();
                (approx - exact).abs() / exact
            })
            .fold(0.0, f64::max);
        if worst <= eps {
            good += 1;
        }
    }
    assert!(good >= 95, "{good}/{seeds}");
}

#[test]
fn stream_blocks_follow_powers_of_two() {
    let cfg = SummaryConfig { k: 2, dim: 2, ..SummaryConfig::default() };
    let mut s = CoresetSummary::new(cfg).unwrap();
    let pts = mixture(2, (1 << 12) - 1, 6.0, 2);
    for (n, p) in pts.iter().enumerate() {
        s.insert(p).unwrap();
        let n = n as u64 + 1;
        if n == 1 {
            assert_eq!(s.blocks().len(), 1);
            assert_eq!(s.blocks()[0].block_size, 1);
        }
        if (n + 1).is_power_of_two() {
            assert!(s.buffer().is_empty());
            assert_eq!(s.blocks().len() as u32, (n + 1).ilog2());
        }
    }
    assert!(matches!(s.insert(&[1.0]), Err(Error::Dimension { expected: 2, got: 1 })));
    assert!(matches!(s.insert(&[1.0, f64::INFINITY]), Err(Error::Input(_))));
}

#[test]
fn summary_size_stays_below_limit() {
    let cfg = SummaryConfig { k: 3, dim: 2, ..SummaryConfig::default() };
    let mut s = CoresetSummary::new(cfg.clone()).unwrap();
    for p in mixture(3, 1 << 14, 8.0, 5) {
        s.insert(&p).unwrap();
    }
    assert!(s.summary_len() <= cfg.summary_size_limit(1 << 14), "{} > {}", s.summary_len(), cfg.summary_size_limit(1 << 14));
    assert!(s.summary_len() < 1 << 14);
}

#[test]
fn solvers_on_trivial_instances() {
    let mut data = Vec::new();
    for loc in [[0.0, 0.0], [50.0, 0.0], [0.0, 50.0]] {
        data.extend(std::iter::repeat_n(loc.to_vec(), 100));
    }
    let cfg = SummaryConfig { k: 3, dim: 2, ..SummaryConfig::default() };
    let mut s = CoresetSummary::new(cfg).unwrap();
    for p in &data {
        s.insert(p).unwrap();
    }
    for r in [solve_kmeans(&s, 3, 5, 0).unwrap(), solve_kmedian(&s, 3, 5, 0).unwrap()] {
        assert!(r.cost < 1e-9, "{}", r.cost);
        let mut cs = r.centers.clone();
        cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (c, want) in cs.iter().zip([[0.0, 0.0], [0.0, 50.0], [50.0, 0.0]]) {
            assert!((c[0] - want[0]).abs() < 1e-6 && (c[1] - want[1]).abs() < 1e-6);
        }
    }

    let pts = unit(&mixture(3, 101, 4.0, 8));
    let opts = SolverOptions::default();
    let r = solve(&pts, 1, Objective::Means, &opts).unwrap();
    let mean: Vec<f64> = (0..2).map(|j| pts.iter().map(|p| p.coords[j]).sum::<f64>() / 101.0).collect();
    assert!((r.centers[0][0] - mean[0]).abs() < 1e-9 && (r.centers[0][1] - mean[1]).abs() < 1e-9);

    let line: Vec<WeightedPoint> = [4.0, -1.0, 9.0, 2.5, 7.0].iter().map(|&x| WeightedPoint::unit(vec![x])).collect();
    let r = solve(&line, 1, Objective::Median, &opts).unwrap();
    assert!((r.centers[0][0] - 4.0).abs() < 1e-6, "{:?}", r.centers);

    let empty = CoresetSummary::new(SummaryConfig::default()).unwrap();
    assert!(matches!(solve_kmeans(&empty, 3, 1, 0), Err(Error::NotReady(_))));
}

#[test]
fn solver_matches_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..20 {
        let pts: Vec<WeightedPoint> = (0..12).map(|_| WeightedPoint::unit(vec![rng.random_range(0.0..10.0)])).collect();
        let opt = optimal_clustering_tiny(&pts, 2, Objective::Means).unwrap();
        let got = solve(&pts, 2, Objective::Means, &SolverOptions { restarts: 50, ..SolverOptions::default() }).unwrap();
        assert!(got.cost <= 1.0001 * opt.cost + 1e-12, "{} vs {}", got.cost, opt.cost);
    }
    for _ in 0..10 {
        let pts: Vec<WeightedPoint> = (0..10)
            .map(|_| WeightedPoint::unit(vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]))
            .collect();
        let opt = optimal_clustering_tiny(&pts, 2, Objective::Median).unwrap();
        let got = solve(&pts, 2, Objective::Median, &SolverOptions { restarts: 10, ..SolverOptions::default() }).unwrap();
        assert!(got.cost <= 1.01 * opt.cost, "{} vs {}", got.cost, opt.cost);
    }
}

fn max_center_gap(from: &[Vec<f64>], to: &[Vec<f64>], objective: Objective) -> f64 {
    from.iter()
        .map(|a| {
            to.iter()
                .map(|b| objective.from_sq(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Any solution within twice the optimum keeps each optimal center close:
/// squared gap at most `12 cost* / f` for means, gap at most `6 cost* / f`
/// for median, `f` being the smallest optimal cluster.
#[test]
fn near_optimal_centers_stay_close() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut checked = 0;
    for trial in 0..60 {
        let objective = if trial % 2 == 0 { Objective::Means } else { Objective::Median };
        let n = rng.random_range(6..=12);
        let pts: Vec<WeightedPoint> = (0..n)
            .map(|i| WeightedPoint::unit(vec![(i % 2) as f64 * 8.0 + rng.random_range(-1.5..1.5)]))
            .collect();
        let opt = optimal_clustering_tiny(&pts, 2, objective).unwrap();
        let f = min_cluster_size(&pts, &opt.centers).unwrap();
        let got = solve(&pts, 2, objective, &SolverOptions { restarts: 1, seed: trial, ..SolverOptions::default() }).unwrap();
        if f == 0 || got.cost > 2.0 * opt.cost {
            continue;
        }
        checked += 1;
        let factor = if objective == Objective::Means { 12.0 } else { 6.0 };
        let gap = max_center_gap(&opt.centers, &got.centers, objective);
        assert!(gap <= factor * opt.cost / f as f64 + 1e-9, "trial {trial}: {gap}");
    }
    assert!(checked >= 30, "{checked}");
}

fn rand_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<WeightedPoint> {
    (0..n)
        .map(|_| WeightedPoint::unit((0..d).map(|_| rng.random_range(-10.0..10.0)).collect()))
        .collect()
}

/// Moving every center by at most `alpha` changes the cost by a bounded amount.
#[test]
fn shifted_centers_cost_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let d = rng.random_range(1..=3);
        let k = rng.random_range(1..=4);
        let pts = rand_points(&mut rng, n, d);
        let c2: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| rng.random_range(-10.0..10.0)).collect()).collect();
        let c1: Vec<Vec<f64>> = c2.iter().map(|c| c.iter().map(|v| v + rng.random_range(-2.0..2.0)).collect()).collect();
        let alpha = max_center_gap(&c2, &c1, Objective::Median);
        let nf = n as f64;
        let means2 = naive_cost(&pts, &c2, Objective::Means);
        let means1 = naive_cost(&pts, &c1, Objective::Means);
        assert!(means1 <= means2 + nf * alpha * alpha + 2.0 * alpha * (nf * means2).sqrt() + 1e-9);
        let med2 = naive_cost(&pts, &c2, Objective::Median);
        let med1 = naive_cost(&pts, &c1, Objective::Median);
        assert!(med1 <= nf * alpha + med2 + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn summary_accounting(seed in any::<u64>(), n in 1usize..3000, k in 1usize..4, median in any::<bool>()) {
        let objective = if median { Objective::Median } else { Objective::Means };
        let cfg = SummaryConfig { k, dim: 2, objective, seed, ..SummaryConfig::default() };
        let mut s = CoresetSummary::new(cfg).unwrap();
        for p in mixture(k, n, 5.0, seed) {
            s.insert(&p).unwrap();
        }
        let sealed: u64 = s.blocks().iter().map(|b| b.block_size as u64).sum();
        prop_assert_eq!(sealed + s.buffer().len() as u64, s.points_total());
        prop_assert_eq!(s.points_total(), n as u64);
        for (i, b) in s.blocks().iter().enumerate() {
            prop_assert_eq!(b.block_index as usize, i);
            prop_assert_eq!(b.block_size, 1usize << i);
            prop_assert!((b.total_weight() - b.block_size as f64).abs() <= 1e-9 * b.block_size as f64);
            prop_assert!(b.points.iter().all(|p| p.weight > 0.0));
            prop_assert!(b.points.len() <= s.config().block_size_g(i as u32));
        }
        let w: f64 = s.points().iter().map(|p| p.weight).sum();
        prop_assert!((w - s.sealed_points() as f64).abs() <= 1e-9 * w.max(1.0));
    }

    #[test]
    fn summary_is_deterministic(seed in any::<u64>(), n in 1usize..600) {
        let cfg = SummaryConfig { seed, ..SummaryConfig::default() };
        let mut a = CoresetSummary::new(cfg.clone()).unwrap();
        let mut b = CoresetSummary::new(cfg).unwrap();
        for p in mixture(3, n, 5.0, seed) {
            a.insert(&p).unwrap();
            b.insert(&p).unwrap();
        }
        prop_assert_eq!(a.blocks(), b.blocks());
    }
}
