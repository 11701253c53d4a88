use fklab::analysis::{
    bridge_covariance_test, brownian_bridge_profiles, conditioned_cluster_sampler, cone_density,
    exact_exit_probability, exit_decay, fit_inverse_correlation_length, fit_support_function,
    hausdorff_quantiles, ising_worm_correlation, jackknife, linear_fit, mean_ci, oz_exponent_fit,
    step_tail_fit, torus_connectivity, wilson, AnalysisError, ConditionedSource, DecaySeries,
    EstimateWithCI, Level, SplittingConfig, TorusStudy, WormStudy,
};
use fklab::clustergeo::EffectiveWalk;
use fklab::fkmodel::{Boundary, ModelParams, Sampler};
use fklab::geometry::{boundary_curvature, ConvexBody};
use fklab::lattice::{BondGraph, LatticeBox, Site};
use fklab::rng::stream_rng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

const REPLICATIONS: usize = 1000;

fn assert_coverage(hits: usize, what: &str) {
    let rate = hits as f64 / REPLICATIONS as f64;
    assert!((0.93..=0.97).contains(&rate), "{what}: coverage {rate}");
}

#[test]
fn mean_interval_coverage() {
    let mut rng = stream_rng(1, 0);
    let hits = (0..REPLICATIONS)
        .filter(|_| {
            let xs: Vec<f64> = (0..30)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    2.0 + 0.5 * z
                })
                .collect();
            mean_ci(&xs, "test").unwrap().covers(2.0)
        })
        .count();
    assert_coverage(hits, "mean");
}

#[test]
fn wilson_interval_coverage() {
    let mut rng = stream_rng(2, 0);
    let hits = (0..REPLICATIONS)
        .filter(|_| {
            let k = (0..400).filter(|_| rng.gen::<f64>() < 0.3).count() as u64;
            wilson(k, 400).covers(0.3)
        })
        .count();
    assert_coverage(hits, "wilson");
}

#[test]
fn regression_slope_coverage() {
    // unit weights with noise sd 2: the residual scale drives the interval
    let mut rng = stream_rng(3, 0);
    let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64]).collect();
    let hits = (0..REPLICATIONS)
        .filter(|_| {
            let y: Vec<f64> = (0..20)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    1.0 - 0.3 * i as f64 + 2.0 * z
                })
                .collect();
            linear_fit(&rows, &y, &[1.0; 20])
                .unwrap()
                .interval(1, "test", 20)
                .covers(-0.3)
        })
        .count();
    assert_coverage(hits, "slope");
}

#[test]
fn jackknife_ratio_coverage() {
    // log-ratio of two correlated means, the statistic behind successive exit rates
    let mut rng = stream_rng(4, 0);
    let truth = (2.0f64 / 1.0).ln();
    let hits = (0..REPLICATIONS)
        .filter(|_| {
            let reps: Vec<Vec<f64>> = (0..40)
                .map(|_| {
                    let common: f64 = StandardNormal.sample(&mut rng);
                    let own: f64 = StandardNormal.sample(&mut rng);
                    vec![2.0 + 0.2 * common, 1.0 + 0.1 * common + 0.05 * own]
                })
                .collect();
            jackknife(&reps, |m| (m[0] / m[1]).ln(), "test")
                .unwrap()
                .covers(truth)
        })
        .count();
    assert_coverage(hits, "jackknife");
}

#[test]
fn decay_fits_recover_exact_parameters() {
    let scales: Vec<f64> = (4..=40).step_by(4).map(f64::from).collect();
    let probs: Vec<f64> = scales
        .iter()
        .map(|&k: &f64| 0.7 * k.powf(-0.5) * (-0.35 * k).exp())
        .collect();
    let series = DecaySeries::exact("p", &scales, &probs).unwrap();
    let oz = oz_exponent_fit(&series, 2).unwrap();
    assert!((oz.xi.estimate - 0.35).abs() < 1e-10);
    assert!((oz.alpha.estimate - 0.5).abs() < 1e-9);
    assert!((oz.log_psi.estimate - 0.7f64.ln()).abs() < 1e-9);
    assert!(oz.covers_expected);
    let xi = fit_inverse_correlation_length(&series, 2).unwrap();
    assert!((xi.xi.estimate - 0.35).abs() < 1e-10);
    // the naive sequence converges to xi from above
    assert!(xi
        .naive
        .windows(2)
        .all(|w| w[1].1 < w[0].1 && w[1].1 > 0.35));
}

#[test]
fn short_series_are_rejected() {
    let series = DecaySeries::exact("p", &[1.0, 2.0, 3.0], &[0.5, 0.25, 0.125]).unwrap();
    assert!(matches!(
        fit_inverse_correlation_length(&series, 2),
        Err(AnalysisError::InsufficientDecades { .. })
    ));
    assert!(matches!(
        oz_exponent_fit(&series, 2),
        Err(AnalysisError::InsufficientDecades { .. })
    ));
    assert!(DecaySeries::exact("p", &[2.0, 1.0], &[0.1, 0.2]).is_err());
}

#[test]
fn one_dimensional_exit_is_exact() {
    for p in [0.2, 0.5, 0.8] {
        let params = ModelParams::from_p(p, 1.0).unwrap();
        for n in 1..=6 {
            let exact = exact_exit_probability(1, n, &params).unwrap();
            let formula = 2.0 * p.powi(n as i32 + 1) - p.powi(2 * (n as i32 + 1));
            assert!((exact - formula).abs() < 1e-12, "p={p} n={n}");
        }
    }
}

#[test]
fn exit_rates_of_a_geometric_series() {
    let sizes: Vec<i64> = (1..=6).collect();
    let probs: Vec<f64> = sizes.iter().map(|&n| 0.4f64.powi(n as i32)).collect();
    let rep = exit_decay("exit", &sizes, &[probs]).unwrap();
    for (_, r) in &rep.successive_rates {
        assert!((r.estimate + 0.4f64.ln()).abs() < 1e-12);
    }
    assert!((rep.log_linear.coefficients[1] + 0.4f64.ln()).abs() < 1e-12);
}

#[test]
fn one_dimensional_splitting_is_geometric() {
    let p = 0.6;
    let cfg = SplittingConfig {
        dim: 1,
        p,
        level: Level::Axis(0),
        thresholds: (1..=12).map(f64::from).collect(),
        per_stage: 500,
        max_sites: 10_000,
    };
    let targets: Vec<Site> = (1..=12).map(|k| Site::new(&[k])).collect();
    let est = cfg.run(&targets, 30, 17).unwrap();
    for k in 0..12 {
        let truth = p.powi(k as i32 + 1);
        for e in [est.reach_ci(k).unwrap(), est.hit_ci(k).unwrap()] {
            assert!(
                (e.estimate - truth).abs() < 2.0 * e.half_width() + 1e-12,
                "k={} {e:?} vs {truth}",
                k + 1
            );
        }
    }
}

#[test]
fn splitting_is_reproducible() {
    let cfg = SplittingConfig {
        dim: 2,
        p: 0.4,
        level: Level::SupNorm,
        thresholds: vec![1.0, 2.0, 3.0],
        per_stage: 100,
        max_sites: 10_000,
    };
    let t = [Site::xy(3, 0)];
    let a = cfg.run(&t, 3, 5).unwrap();
    let b = cfg.run(&t, 3, 5).unwrap();
    assert_eq!((a.reach, a.hits), (b.reach, b.hits));
}

/// `<s_0 s_x>` on an `l x l` Ising torus at coupling `k`, by enumeration.
fn exact_torus_correlation(l: usize, k: f64, x: (usize, usize)) -> f64 {
    let n = l * l;
    let (mut num, mut z) = (0.0, 0.0);
    for mask in 0u64..1 << n {
        let s = |i: usize, j: usize| {
            if mask >> ((i % l) * l + j % l) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        };
        let mut energy = 0.0;
        for i in 0..l {
            for j in 0..l {
                energy += s(i, j) * (s(i + 1, j) + s(i, j + 1));
            }
        }
        let w = (k * energy).exp();
        z += w;
        num += w * s(0, 0) * s(x.0, x.1);
    }
    num / z
}

#[test]
fn worm_matches_exact_small_torus() {
    let beta = 0.8;
    let study = WormStudy {
        side: 4,
        beta,
        bias_rate: 0.0,
        bias_radius: 0.0,
        max_displacement: 1,
        burn_in: 10_000,
        steps: 4_000_000,
        batches: 40,
    };
    let worm = ising_worm_correlation(&study, 9).unwrap();
    for x in [(1, 0), (1, 1)] {
        let exact = exact_torus_correlation(4, beta / 2.0, x);
        let e = worm.estimate(x.0 as i64, x.1 as i64).unwrap();
        assert!(
            (e.estimate - exact).abs() < 0.01,
            "{x:?}: {} vs {exact}",
            e.estimate
        );
        assert!(
            (e.estimate - exact).abs() < 3.0 * e.half_width(),
            "{x:?}: {e:?} vs {exact}"
        );
    }
    let again = ising_worm_correlation(
        &WormStudy {
            steps: 20_000,
            ..study.clone()
        },
        9,
    )
    .unwrap();
    let twice = ising_worm_correlation(
        &WormStudy {
            steps: 20_000,
            ..study
        },
        9,
    )
    .unwrap();
    assert_eq!(again.estimate(1, 0).unwrap(), twice.estimate(1, 0).unwrap());
}

#[test]
fn torus_connectivity_matches_ising_correlation() {
    // for q = 2 the random-cluster connectivity equals the spin correlation on any graph
    let beta: f64 = 0.8;
    let params = ModelParams::from_p(1.0 - (-beta).exp(), 2.0).unwrap();
    let study = TorusStudy {
        side: 4,
        params,
        sampler: Sampler::SwendsenWang,
        burn_in: 100,
        sweeps: 100_000,
        batches: 20,
        max_displacement: 1,
    };
    let tc = torus_connectivity(&study, 4).unwrap();
    for x in [(1, 0), (1, 1)] {
        let exact = exact_torus_correlation(4, beta / 2.0, x);
        let e = tc.estimate(x.0 as i64, x.1 as i64).unwrap();
        assert!(
            (e.estimate - exact).abs() < 0.01,
            "{x:?}: {} vs {exact}",
            e.estimate
        );
    }
}

#[test]
fn brownian_bridges_pass_and_scale() {
    let mut rng = stream_rng(8, 0);
    let profiles = brownian_bridge_profiles(16, 5000, 2.5, &mut rng);
    let rep = bridge_covariance_test(&profiles, 50).unwrap();
    assert!(rep.chi.covers(2.5), "{:?}", rep.chi);
    assert!(rep.r_squared > 0.99);
    assert!((rep.midpoint_kurtosis - 3.0).abs() < 0.3);
    assert!(rep.max_covariance_defect < 0.1);
    assert!(rep.relative_deviation(2.5) < 0.05);
    assert!(matches!(
        bridge_covariance_test(&profiles[..100], 10),
        Err(AnalysisError::TooFewSamples { .. })
    ));
    let mut mixed = profiles.clone();
    mixed.extend(brownian_bridge_profiles(8, 10, 1.0, &mut rng));
    assert!(matches!(
        bridge_covariance_test(&mixed, 50),
        Err(AnalysisError::GridMismatch)
    ));
}

#[test]
fn conditioned_sampler_rejects_impossible_targets() {
    let source = ConditionedSource::Bernoulli {
        dim: 2,
        p: 0.0,
        max_sites: 100,
    };
    let mut it = conditioned_cluster_sampler(source, Site::xy(4, 0), 500, 1).unwrap();
    assert!(matches!(
        it.next(),
        Some(Err(AnalysisError::AcceptanceTooLow { max_rejects: 500 }))
    ));
    assert!(it.next().is_none());
    let source = ConditionedSource::Bernoulli {
        dim: 2,
        p: 0.3,
        max_sites: 100,
    };
    assert!(conditioned_cluster_sampler(source, Site::xy(4, 0), 0, 1).is_err());
}

#[test]
fn conditioned_sampler_accepts_often_at_high_density() {
    let graph = BondGraph::nearest_neighbour(&LatticeBox::centered(2, 6).unwrap());
    let source = ConditionedSource::Chain {
        graph: &graph,
        params: ModelParams::from_p(0.9, 1.0).unwrap(),
        boundary: Boundary::Free,
        sampler: Sampler::HeatBath,
        burn_in: 10,
        thinning: 1,
    };
    let target = Site::xy(4, 0);
    let mut it = conditioned_cluster_sampler(source, target, 1000, 2).unwrap();
    for _ in 0..200 {
        let c = it.next().unwrap().unwrap();
        assert!(c.contains(Site::ORIGIN) && c.contains(target));
    }
    assert!(it.accepted as f64 / it.proposals as f64 > 0.1);
}

#[test]
fn step_tail_of_geometric_steps() {
    // P(L >= k) = (1 - rho)^(k - 1), so the survival slope is log(1 - rho)
    let rho: f64 = 0.3;
    let mut rng = stream_rng(6, 0);
    let walks: Vec<EffectiveWalk> = (0..200)
        .map(|_| {
            let steps = (0..25)
                .map(|_| {
                    let mut k = 1;
                    while rng.gen::<f64>() > rho {
                        k += 1;
                    }
                    Site::xy(k, 0)
                })
                .collect();
            EffectiveWalk {
                start: Site::ORIGIN,
                steps,
            }
        })
        .collect();
    let tail = step_tail_fit(&walks).unwrap();
    let truth = -(1.0 - rho).ln();
    assert!(!tail.degenerate);
    assert!(tail.kappa.lo > 0.0);
    assert!(
        (tail.kappa.estimate - truth).abs() < 0.1 * truth,
        "{:?} vs {truth}",
        tail.kappa
    );
    let unit: Vec<EffectiveWalk> = (0..50)
        .map(|_| EffectiveWalk {
            start: Site::ORIGIN,
            steps: vec![Site::xy(1, 0); 25],
        })
        .collect();
    assert!(step_tail_fit(&unit).unwrap().degenerate);
    assert!(matches!(
        step_tail_fit(&walks[..10]),
        Err(AnalysisError::TooFewSteps(250))
    ));
}

#[test]
fn cone_density_and_hausdorff_trends() {
    let mut rng = stream_rng(7, 0);
    let scales = [12.0, 20.0, 28.0];
    let counts: Vec<(f64, Vec<usize>)> = scales
        .iter()
        .map(|&s| {
            (
                s,
                (0..300)
                    .map(|_| (0..s as usize).filter(|_| rng.gen::<f64>() < 0.4).count())
                    .collect(),
            )
        })
        .collect();
    let dens = cone_density(&counts).unwrap();
    assert!(
        dens.slope.lo > 0.0 && dens.slope.covers(0.4),
        "{:?}",
        dens.slope
    );
    let dists: Vec<(f64, Vec<f64>)> = scales
        .iter()
        .map(|&s: &f64| (s, (0..300).map(|_| s.ln() * rng.gen::<f64>()).collect()))
        .collect();
    let (per, slope) = hausdorff_quantiles(&dists, 0.95).unwrap();
    assert_eq!(per.len(), 3);
    assert!(per
        .iter()
        .all(|(_, q)| q.estimate > 0.9 && q.estimate <= 1.0));
    assert!(slope.covers(0.0), "{slope:?}");
}

/// Support function of `{t : cosh t1 + cosh t2 <= a}` in direction `theta`.
fn ising_support(a: f64, theta: f64) -> f64 {
    let tau = (a - 1.0).acosh();
    let f = |u: f64| u * theta.cos() + (a - u.cosh()).acosh() * theta.sin();
    let (mut lo, mut hi) = (-tau, tau);
    for _ in 0..200 {
        let (m1, m2) = (lo + (hi - lo) / 3.0, hi - (hi - lo) / 3.0);
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    f(0.5 * (lo + hi))
}

#[test]
fn exact_ising_shape_curvature() {
    // high-temperature Ising at coupling k = ln(2)/4, the dual of the self-dual point at
    // twice the critical coupling; the axis rate is tau = 2(k* - k)
    let k = 2f64.ln() / 4.0;
    let a = (2.0 * k).cosh().powi(2) / (2.0 * k).sinh();
    let tau = (a - 1.0).acosh();
    let k_star = (-(2.0 * k)).exp().atanh();
    assert!((tau - 2.0 * (k_star - k)).abs() < 1e-12);
    let directional: Vec<(f64, EstimateWithCI)> = (0..=24)
        .map(|i| {
            let th = std::f64::consts::FRAC_PI_4 * i as f64 / 24.0;
            (th, EstimateWithCI::exact(ising_support(a, th), "exact"))
        })
        .collect();
    let fit = fit_support_function(&directional, 4).unwrap();
    let t = fit.norm.gradient(&[1.0, 0.0]);
    assert!((t[0] - tau).abs() < 1e-3 && t[1].abs() < 1e-9, "{t:?}");
    let curvature = boundary_curvature(&ConvexBody::Support(fit.norm.clone()), &t).unwrap();
    let exact = 1.0 / tau.sinh();
    assert!(
        (curvature - exact).abs() < 0.01 * exact,
        "{curvature} vs {exact}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn intervals_contain_their_estimate(values in proptest::collection::vec(-10.0f64..10.0, 2..40)) {
        let e = mean_ci(&values, "p").unwrap();
        prop_assert!(e.lo <= e.estimate && e.estimate <= e.hi);
        prop_assert!(e.covers(e.estimate));
    }

    #[test]
    fn wilson_stays_in_unit_interval(n in 1u64..500, frac in 0.0f64..=1.0) {
        let k = (frac * n as f64).floor() as u64;
        let e = wilson(k, n);
        prop_assert!(0.0 <= e.lo && e.hi <= 1.0 && e.covers(k as f64 / n as f64));
    }
}
