use std::collections::VecDeque;
use std::io::BufReader;

use fklab::fkmodel::{
    bond_probability, cluster_count, cluster_labeling, config_weight, connected,
    exact_distribution, read_dump, restricted_connected, sample_chain, write_dump,
    BondConfiguration, Boundary, DumpHeader, FkChain, ModelParams, Sampler,
};
use fklab::lattice::{BondGraph, LatticeBox, Site};
use fklab::rng::stream_rng;
use proptest::prelude::*;

fn graph(sides: &[i64]) -> BondGraph {
    BondGraph::nearest_neighbour(&LatticeBox::rect(sides).unwrap())
}

/// Flood-fill cluster count with the exterior as an extra vertex under wired conditions.
fn flood_fill_count(g: &BondGraph, open: &[bool], bc: Boundary) -> usize {
    let n = g.num_vertices();
    let mut adj = vec![Vec::new(); n + 1];
    for (e, &o) in open.iter().enumerate() {
        if o {
            let (a, b) = g.ends(e);
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    if bc == Boundary::Wired {
        for v in 0..n {
            if g.touches_exterior(v) {
                adj[v].push(n);
                adj[n].push(v);
            }
        }
    }
    let mut seen = vec![false; n + 1];
    let mut count = 0;
    for s in 0..n {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    count
}

/// Unnormalised FK weight computed from scratch.
fn brute_weight(g: &BondGraph, mask: u64, p: f64, q: f64, bc: Boundary) -> f64 {
    let open: Vec<bool> = (0..g.num_bonds()).map(|e| mask >> e & 1 == 1).collect();
    let k = open.iter().filter(|&&o| o).count() as i32;
    p.powi(k)
        * (1.0 - p).powi(g.num_bonds() as i32 - k)
        * q.powi(flood_fill_count(g, &open, bc) as i32)
}

fn fixtures() -> Vec<BondGraph> {
    vec![graph(&[2]), graph(&[2, 2]), graph(&[2, 3])]
}

#[test]
fn bond_probability_examples() {
    assert_eq!(bond_probability(1.0, 0.0), 0.0);
    assert_eq!(bond_probability(0.0, 5.0), 0.0);
    assert!((bond_probability(1.0, 2f64.ln() / 2.0) - 0.5).abs() < 1e-15);
}

#[test]
fn single_bond_weights() {
    let g = graph(&[2]);
    let params = ModelParams::from_p(0.4, 3.0).unwrap();
    let open = BondConfiguration::from_mask(&g, Boundary::Free, 1);
    let closed = BondConfiguration::from_mask(&g, Boundary::Free, 0);
    assert!((config_weight(&g, &open, &params).unwrap() - 0.4 * 3.0).abs() < 1e-12);
    assert!((config_weight(&g, &closed, &params).unwrap() - 0.6 * 9.0).abs() < 1e-12);
}

#[test]
fn wired_closed_box_weight() {
    let g = BondGraph::nearest_neighbour(&LatticeBox::centered(2, 1).unwrap());
    let params = ModelParams::from_p(0.3, 2.5).unwrap();
    let c = BondConfiguration::closed(&g, Boundary::Wired);
    let w = config_weight(&g, &c, &params).unwrap();
    assert!((w / (0.7f64.powi(12) * 2.5 * 2.5) - 1.0).abs() < 1e-12);
}

#[test]
fn cluster_labeling_examples() {
    let g = BondGraph::nearest_neighbour(&LatticeBox::centered(2, 1).unwrap());
    assert_eq!(
        cluster_labeling(&g, &BondConfiguration::closed(&g, Boundary::Free)).count,
        9
    );
    assert_eq!(
        cluster_labeling(
            &g,
            &BondConfiguration::from_mask(&g, Boundary::Free, (1 << 12) - 1)
        )
        .count,
        1
    );
    assert_eq!(
        cluster_labeling(&g, &BondConfiguration::closed(&g, Boundary::Wired)).count,
        2
    );
}

#[test]
fn exact_distribution_matches_brute_force() {
    for g in fixtures() {
        for &q in &[1.0, 1.5, 2.0, 3.0] {
            for &p in &[0.3, 0.6] {
                for bc in [Boundary::Free, Boundary::Wired] {
                    let d =
                        exact_distribution(&g, &ModelParams::from_p(p, q).unwrap(), bc).unwrap();
                    let w: Vec<f64> = (0..1u64 << g.num_bonds())
                        .map(|m| brute_weight(&g, m, p, q, bc))
                        .collect();
                    let z: f64 = w.iter().sum();
                    assert!((d.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    for (a, b) in d.probs.iter().zip(&w) {
                        assert!((a - b / z).abs() < 1e-13);
                    }
                }
            }
        }
    }
}

#[test]
fn exact_single_bond_examples() {
    let g = graph(&[2]);
    let d =
        exact_distribution(&g, &ModelParams::from_p(0.5, 2.0).unwrap(), Boundary::Free).unwrap();
    assert!((d.probs[1] - 1.0 / 3.0).abs() < 1e-15);
    let d =
        exact_distribution(&g, &ModelParams::from_p(0.37, 1.0).unwrap(), Boundary::Free).unwrap();
    assert!((d.probs[1] - 0.37).abs() < 1e-15);
}

#[test]
fn two_disjoint_bonds_are_independent_at_q_one() {
    // In a 2x2 box the bottom and top horizontal bonds share no endpoint.
    let g = graph(&[2, 2]);
    let bonds = g.bonds();
    let e = bonds
        .iter()
        .position(|b| b.a == Site::xy(0, 0) && b.b == Site::xy(1, 0))
        .unwrap();
    let f = bonds
        .iter()
        .position(|b| b.a == Site::xy(0, 1) && b.b == Site::xy(1, 1))
        .unwrap();
    let d =
        exact_distribution(&g, &ModelParams::from_p(0.3, 1.0).unwrap(), Boundary::Free).unwrap();
    let both = d.probability(|m| m >> e & 1 == 1 && m >> f & 1 == 1);
    assert!((both - 0.09).abs() < 1e-14);
}

#[test]
fn enumeration_cap() {
    let g = BondGraph::nearest_neighbour(&LatticeBox::centered(2, 2).unwrap());
    assert!(
        exact_distribution(&g, &ModelParams::from_p(0.5, 1.0).unwrap(), Boundary::Free).is_err()
    );
}

#[test]
fn heat_bath_kernel_leaves_exact_measure_invariant() {
    for g in fixtures() {
        let m = g.num_bonds();
        for &q in &[1.0, 1.5, 2.0, 3.0] {
            for &p in &[0.3, 0.6] {
                for bc in [Boundary::Free, Boundary::Wired] {
                    let pi = exact_distribution(&g, &ModelParams::from_p(p, q).unwrap(), bc)
                        .unwrap()
                        .probs;
                    for e in 0..m {
                        let mut next = vec![0.0; pi.len()];
                        for (mask, &w) in pi.iter().enumerate() {
                            let mask = mask as u64;
                            let opened = mask | 1 << e;
                            let closed = mask & !(1 << e);
                            // the bond is pivotal iff opening it merges two clusters
                            let pivotal = {
                                let a: Vec<bool> = (0..m).map(|i| opened >> i & 1 == 1).collect();
                                let b: Vec<bool> = (0..m).map(|i| closed >> i & 1 == 1).collect();
                                flood_fill_count(&g, &a, bc) != flood_fill_count(&g, &b, bc)
                            };
                            let p_open = if pivotal { p / (p + q * (1.0 - p)) } else { p };
                            next[opened as usize] += w * p_open;
                            next[closed as usize] += w * (1.0 - p_open);
                        }
                        for (a, b) in pi.iter().zip(&next) {
                            assert!((a - b).abs() < 1e-10);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn wired_dominates_free() {
    for g in fixtures() {
        let m = g.num_bonds();
        for &q in &[1.5, 2.0, 3.0] {
            let params = ModelParams::from_p(0.45, q).unwrap();
            let free = exact_distribution(&g, &params, Boundary::Free).unwrap();
            let wired = exact_distribution(&g, &params, Boundary::Wired).unwrap();
            for s in 0..1u64 << m {
                let pf = free.probability(|mask| mask & s == s);
                let pw = wired.probability(|mask| mask & s == s);
                assert!(pw >= pf - 1e-14, "subset {s:b}: wired {pw} < free {pf}");
            }
        }
    }
}

fn total_variation(samples: &[BondConfiguration], exact: &[f64]) -> f64 {
    let mut counts = vec![0usize; exact.len()];
    for s in samples {
        counts[s.mask() as usize] += 1;
    }
    let n = samples.len() as f64;
    0.5 * counts
        .iter()
        .zip(exact)
        .map(|(&c, p)| (c as f64 / n - p).abs())
        .sum::<f64>()
}

#[test]
fn samplers_agree_with_enumeration() {
    let g = graph(&[2, 2]);
    for (sampler, q) in [
        (Sampler::HeatBath, 1.5),
        (Sampler::HeatBath, 3.0),
        (Sampler::SwendsenWang, 2.0),
        (Sampler::SwendsenWang, 3.0),
    ] {
        for bc in [Boundary::Free, Boundary::Wired] {
            let params = ModelParams::from_p(0.6, q).unwrap();
            let exact = exact_distribution(&g, &params, bc).unwrap();
            let samples = sample_chain(&g, params, bc, sampler, 100, 100_000, 1, 17).unwrap();
            let tv = total_variation(&samples, &exact.probs);
            assert!(tv < 0.02, "{sampler:?} q={q} {bc}: TV {tv}");
        }
    }
}

#[test]
fn samplers_agree_on_marginals() {
    let g = graph(&[2, 3]);
    let params = ModelParams::from_p(0.3, 2.0).unwrap();
    let n = 100_000;
    let hb = sample_chain(&g, params, Boundary::Free, Sampler::HeatBath, 100, n, 1, 3).unwrap();
    let sw = sample_chain(
        &g,
        params,
        Boundary::Free,
        Sampler::SwendsenWang,
        100,
        n,
        1,
        4,
    )
    .unwrap();
    let exact = exact_distribution(&g, &params, Boundary::Free)
        .unwrap()
        .bond_marginals(g.num_bonds());
    for e in 0..g.num_bonds() {
        let a = hb.iter().filter(|c| c.open[e]).count() as f64 / n as f64;
        let b = sw.iter().filter(|c| c.open[e]).count() as f64 / n as f64;
        // five standard errors, inflated for autocorrelation
        let tol = 5.0 * (exact[e] * (1.0 - exact[e]) / n as f64).sqrt() * 2.0;
        assert!(
            (a - exact[e]).abs() < tol && (b - exact[e]).abs() < tol && (a - b).abs() < 2.0 * tol,
            "bond {e}: {a} {b} {}",
            exact[e]
        );
    }
}

#[test]
fn single_sweep_at_q_one_is_bernoulli() {
    let g = graph(&[3, 3]);
    let params = ModelParams::from_p(0.3, 1.0).unwrap();
    let samples = sample_chain(
        &g,
        params,
        Boundary::Free,
        Sampler::HeatBath,
        0,
        20_000,
        1,
        5,
    )
    .unwrap();
    let open: usize = samples.iter().map(|c| c.num_open()).sum();
    let freq = open as f64 / (20_000 * g.num_bonds()) as f64;
    assert!((freq - 0.3).abs() < 0.005);
}

#[test]
fn swendsen_wang_at_infinite_temperature() {
    let g = graph(&[4, 4]);
    let params = ModelParams::new(0.0, 3.0).unwrap();
    let mut chain = FkChain::new(
        &g,
        params,
        Boundary::Free,
        Sampler::SwendsenWang,
        stream_rng(1, 0),
    )
    .unwrap();
    let mut counts = [0usize; 3];
    for _ in 0..2000 {
        chain.sweep();
        assert_eq!(chain.state().num_open(), 0);
        for &s in chain.spins() {
            counts[s as usize] += 1;
        }
    }
    for c in counts {
        assert!((c as f64 / 32_000.0 - 1.0 / 3.0).abs() < 0.01);
    }
}

#[test]
fn swendsen_wang_wired_clusters_keep_boundary_colour() {
    let g = BondGraph::nearest_neighbour(&LatticeBox::centered(2, 2).unwrap());
    let params = ModelParams::from_p(0.5, 3.0).unwrap();
    let mut chain = FkChain::new(
        &g,
        params,
        Boundary::Wired,
        Sampler::SwendsenWang,
        stream_rng(2, 0),
    )
    .unwrap();
    for _ in 0..200 {
        let before = chain.state().clone();
        chain.sweep();
        let labels = cluster_labeling(&g, &before);
        for v in 0..g.num_vertices() {
            if labels.touches_exterior(v) {
                assert_eq!(chain.spins()[v], 0);
            }
        }
    }
}

#[test]
fn non_integer_q_is_rejected_by_swendsen_wang() {
    let g = graph(&[2]);
    let params = ModelParams::from_p(0.5, 1.5).unwrap();
    assert!(FkChain::new(
        &g,
        params,
        Boundary::Free,
        Sampler::SwendsenWang,
        stream_rng(0, 0)
    )
    .is_err());
}

#[test]
fn parameters_below_one_are_rejected() {
    assert!(ModelParams::new(0.5, 0.5).is_err());
    assert!(ModelParams::new(-0.1, 2.0).is_err());
}

#[test]
fn chains_are_deterministic() {
    let g = graph(&[3, 3]);
    let params = ModelParams::from_p(0.5, 2.0).unwrap();
    for sampler in [Sampler::HeatBath, Sampler::SwendsenWang] {
        let a = sample_chain(&g, params, Boundary::Wired, sampler, 10, 50, 2, 99).unwrap();
        let b = sample_chain(&g, params, Boundary::Wired, sampler, 10, 50, 2, 99).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn connectivity_examples() {
    let line = graph(&[3]);
    let all_open = BondConfiguration::from_mask(&line, Boundary::Free, 0b11);
    let closed = BondConfiguration::closed(&line, Boundary::Free);
    let (x, y) = (Site::new(&[0]), Site::new(&[2]));
    assert!(connected(&line, &closed, x, x).unwrap());
    assert!(!connected(&line, &closed, x, y).unwrap());
    assert!(connected(&line, &all_open, x, y).unwrap());
    let in_a =
        |allowed: &'static [i64]| move |s: Site| allowed.contains(&s.0[0]) || s == Site::new(&[2]);
    let is_y = |s: Site| s == Site::new(&[2]);
    assert!(restricted_connected(&line, &all_open, x, &in_a(&[0, 1]), &is_y).unwrap());
    assert!(!restricted_connected(&line, &all_open, x, &in_a(&[0]), &is_y).unwrap());
}

#[test]
fn dump_round_trip() {
    let g = BondGraph::nearest_neighbour(&LatticeBox::centered(2, 2).unwrap());
    let params = ModelParams::from_p(0.5, 2.0).unwrap();
    let config = sample_chain(&g, params, Boundary::Wired, Sampler::HeatBath, 5, 1, 1, 8)
        .unwrap()
        .remove(0);
    let header = DumpHeader {
        dim: 2,
        half_width: 2,
        q: 2.0,
        beta: params.beta,
        boundary: Boundary::Wired,
        seed: 8,
    };
    let mut buf = Vec::new();
    write_dump(&mut buf, &header, &config).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("fk d=2 N=2 q=2 beta="));
    assert!(text.lines().next().unwrap().ends_with("bc=wired seed=8"));
    let (h, c) = read_dump(&mut BufReader::new(&buf[..])).unwrap();
    assert_eq!(h, header);
    assert_eq!(c, config);
}

proptest! {
    #[test]
    fn labeling_count_matches_flood_fill(mask in any::<u64>(), wired in any::<bool>(), w in 1i64..5, h in 1i64..5) {
        let g = graph(&[w, h]);
        let bc = if wired { Boundary::Wired } else { Boundary::Free };
        let open: Vec<bool> = (0..g.num_bonds()).map(|e| mask.rotate_left(e as u32 * 7) & 1 == 1).collect();
        let config = BondConfiguration { bx: *g.lattice_box(), boundary: bc, open: open.clone() };
        prop_assert_eq!(cluster_labeling(&g, &config).count, flood_fill_count(&g, &open, bc));
        prop_assert_eq!(cluster_count(&g, &config), flood_fill_count(&g, &open, bc));
    }
}
