use std::collections::BTreeSet;

use fklab::lattice::{edge_set, outer_boundary, BondGraph, CouplingField, LatticeBox, Site};
use proptest::prelude::*;

fn nn(dim: usize) -> CouplingField {
    CouplingField::nearest_neighbour(dim).unwrap()
}

/// Counts nearest-neighbour pairs in `{-n..n}^d` by looking at every ordered pair of sites.
fn brute_force_bonds(dim: usize, n: i64) -> usize {
    let bx = LatticeBox::centered(dim, n).unwrap();
    let sites: Vec<Site> = bx.sites().collect();
    let mut count = 0;
    for (i, a) in sites.iter().enumerate() {
        for b in &sites[i + 1..] {
            if a.sub(*b).l1_norm() == 1 {
                count += 1;
            }
        }
    }
    count
}

#[test]
fn single_site_box_has_no_bonds() {
    assert!(edge_set(&LatticeBox::centered(2, 0).unwrap(), &nn(2)).is_empty());
}

#[test]
fn three_by_three_has_twelve_bonds() {
    assert_eq!(
        edge_set(&LatticeBox::centered(2, 1).unwrap(), &nn(2)).len(),
        12
    );
}

#[test]
fn next_nearest_couplings_in_one_dimension() {
    let field = CouplingField::new(
        1,
        2.0,
        &[
            (Site::new(&[1]), 1.0),
            (Site::new(&[-1]), 1.0),
            (Site::new(&[2]), 0.5),
            (Site::new(&[-2]), 0.5),
        ],
    )
    .unwrap();
    // {-1, 0, 1} holds the pairs (-1,0), (0,1) at distance one and (-1,1) at distance two
    let pairs = (-1i64..=1)
        .flat_map(|a| (a + 1..=1).map(move |b| b - a))
        .filter(|d| *d <= 2)
        .count();
    assert_eq!(pairs, 3);
    assert_eq!(
        edge_set(&LatticeBox::centered(1, 1).unwrap(), &field).len(),
        pairs
    );
}

#[test]
fn bond_count_matches_brute_force() {
    for dim in 1..=3 {
        for n in 0..=3 {
            let bx = LatticeBox::centered(dim, n).unwrap();
            let side = 2 * n as usize + 1;
            let formula = dim * side.pow(dim as u32 - 1) * (side - 1);
            assert_eq!(edge_set(&bx, &nn(dim)).len(), formula, "d={dim} N={n}");
            assert_eq!(brute_force_bonds(dim, n), formula, "d={dim} N={n}");
        }
    }
}

#[test]
fn box_sizes() {
    for dim in 1..=3 {
        for n in 0..4 {
            assert_eq!(
                LatticeBox::centered(dim, n).unwrap().len(),
                (2 * n as usize + 1).pow(dim as u32)
            );
        }
    }
}

#[test]
fn empty_set_has_empty_boundary() {
    assert!(outer_boundary(&BTreeSet::new(), 3.0, 2).is_empty());
}

#[test]
fn boundary_of_three_by_three() {
    let set: BTreeSet<Site> = LatticeBox::centered(2, 1).unwrap().sites().collect();
    let b = outer_boundary(&set, 1.0, 2);
    assert_eq!(b.len(), 12);
    assert!(b.iter().all(|s| s.sup_norm() == 2 && s.l1_norm() <= 3));
}

#[test]
fn moore_neighbourhood() {
    let set: BTreeSet<Site> = [Site::ORIGIN].into_iter().collect();
    let b = outer_boundary(&set, 2f64.sqrt(), 2);
    assert_eq!(b.len(), 8);
    assert!(b.iter().all(|s| s.sup_norm() == 1));
}

#[test]
fn torus_graph_is_regular() {
    let g = BondGraph::torus(2, 5).unwrap();
    assert_eq!(g.num_vertices(), 25);
    assert_eq!(g.num_bonds(), 50);
    assert!((0..25).all(|v| g.neighbours(v).len() == 4));
}

fn site_set() -> impl Strategy<Value = BTreeSet<Site>> {
    proptest::collection::btree_set(
        (-4i64..=4, -4i64..=4).prop_map(|(x, y)| Site::xy(x, y)),
        0..12,
    )
}

proptest! {
    #[test]
    fn outer_boundary_is_disjoint_from_the_set(set in site_set(), range in 0.5f64..3.0) {
        let b = outer_boundary(&set, range, 2);
        prop_assert!(b.iter().all(|s| !set.contains(s)));
        for s in &b {
            prop_assert!(set.iter().any(|a| a.sub(*s).norm2() <= range + 1e-12));
        }
    }

    #[test]
    fn edge_set_is_deterministic_and_sorted(n in 0i64..4, dim in 1usize..=3) {
        let bx = LatticeBox::centered(dim, n).unwrap();
        let a = edge_set(&bx, &nn(dim));
        let b = edge_set(&bx, &nn(dim));
        prop_assert_eq!(&a, &b);
        prop_assert!(a.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(a.iter().all(|e| e.a < e.b && bx.contains(e.a) && bx.contains(e.b)));
    }
}
