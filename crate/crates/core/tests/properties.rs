use hjlab::catalog;
use hjlab::dynamics::{check_member, gronwall_bound, sample_bundle, BundleScheme};
use hjlab::game::{solve_game, TreeOptions};
use hjlab::hamiltonian::{game_minimax, l1_distance, steklov_smooth};
use hjlab::regularization::{McShaneExtension, PathDictionary};
use hjlab::{Grid, HamiltonianSpec, Path, Side, TimeDensity};
use proptest::prelude::*;
use std::sync::Arc;

fn grid() -> Grid {
    Grid::new(0.5, 1.0, 0.125).unwrap()
}

fn path_strategy(n: usize) -> impl Strategy<Value = Path> {
    prop::collection::vec(-3.0f64..3.0, grid().len() * n).prop_map(move |v| Path::new(grid(), n, v).unwrap())
}

fn node_strategy() -> impl Strategy<Value = usize> {
    let g = grid();
    g.zero_index()..=g.last_index()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stopping_is_idempotent_and_freezes_the_tail(x in path_strategy(2), i in node_strategy(), tau in 0.0f64..1.0) {
        let s = x.stopped_at_index(i);
        prop_assert_eq!(s.stopped_at_index(i), s.clone());
        let t = grid().time(i);
        prop_assert_eq!(s.eval(t.max(tau)), x.eval(t));
        let off = x.stopped_at(tau);
        prop_assert_eq!(off.stopped_at(tau), off.clone());
        prop_assert_eq!(off.eval(1.0), x.eval(tau));
    }

    #[test]
    fn sup_norm_is_monotone_and_bounds_values(x in path_strategy(1), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let m_lo = x.sup_norm(lo).unwrap();
        let m_hi = x.sup_norm(hi).unwrap();
        prop_assert!(m_lo <= m_hi);
        prop_assert!(x.eval(lo)[0].abs() <= m_lo + 1e-15);
    }

    #[test]
    fn refinement_preserves_the_function(x in path_strategy(1), tau in -0.5f64..1.0) {
        let fine = x.refine(4).unwrap();
        prop_assert!((fine.eval(tau)[0] - x.eval(tau)[0]).abs() <= 1e-12);
    }

    #[test]
    fn bundle_members_obey_growth_and_gronwall(x in path_strategy(2), i in 0usize..8, c in 0.1f64..2.0, seed in 0u64..1000) {
        let g = grid();
        let start = g.zero_index() + i;
        let t = g.time(start);
        let density = TimeDensity::constant(g, c).unwrap();
        let bundle = sample_bundle(t, &x, &density, &BundleScheme::default(), 6, seed).unwrap();
        let bound = gronwall_bound(&x, t, &density).unwrap();
        for m in bundle.members() {
            prop_assert!(check_member(start, &x.stopped_at_index(start), &density, &m.path).is_ok());
            prop_assert!(m.path.sup_norm(1.0).unwrap() <= bound + 1e-9);
        }
    }

    #[test]
    fn mcshane_extension_interpolates_and_is_lipschitz(
        members in prop::collection::vec(path_strategy(1), 2..6),
        y in path_strategy(1),
        z in path_strategy(1),
    ) {
        let f = |p: &Path| p.eval(0.5)[0].sin();
        let dict = PathDictionary::new(members.clone()).unwrap();
        // |sin a − sin b| ≤ |a − b| ≤ ‖·‖∞ up to τ = ½
        let ext = McShaneExtension::new(&f, &dict, 1.0, 0.5).unwrap();
        for m in &members {
            prop_assert!((ext.eval(m).unwrap() - f(m)).abs() <= 1e-12);
        }
        let d = y.stopped_distance(&z, 0.5).unwrap();
        prop_assert!((ext.eval(&y).unwrap() - ext.eval(&z).unwrap()).abs() <= d + 1e-12);
    }

    #[test]
    fn lower_hamiltonian_never_exceeds_upper(seed in 0u64..200, x in path_strategy(2), tau in 0.0f64..1.0, s0 in -2.0f64..2.0, s1 in -2.0f64..2.0) {
        let game = catalog::random_game(seed);
        let x = Path::new(grid(), game.n, x.values()[..grid().len() * game.n].to_vec()).unwrap();
        let s = [s0, s1];
        let lower = game_minimax(&game, Side::Lower, tau, &x, &s[..game.n]).0;
        let upper = game_minimax(&game, Side::Upper, tau, &x, &s[..game.n]).0;
        prop_assert!(lower <= upper);
    }
}

#[test]
fn steklov_distance_shrinks_with_k_for_a_kinked_profile() {
    // H(t) = |t − ⅓| s, continuous but not smooth in time
    let h = HamiltonianSpec::new("|t - 1/3| s", 1.0, Arc::new(|_| 1.0), |t, _, s| (t - 1.0 / 3.0).abs() * s[0])
        .with_kinks(vec![1.0 / 3.0]);
    let dict = PathDictionary::single(Path::zeros(grid(), 1));
    let d: Vec<f64> = [2u32, 4, 8, 16]
        .iter()
        .map(|&k| l1_distance(&h, &steklov_smooth(&h, k).unwrap().to_spec(), &dict, &[1.0]).unwrap())
        .collect();
    assert!(d.windows(2).all(|w| w[1] < w[0]), "{d:?}");
}

#[test]
fn tree_values_agree_with_the_mirrored_game() {
    // ρ⁻ of G equals −ρ⁺ of the game with players swapped and payoff negated
    let game = catalog::random_game(3);
    let steps = 4;
    let g = game.grid_for(0.0, steps).unwrap();
    let x = Path::from_fn(g, game.n, |t| vec![0.5 * t; game.n]).unwrap();
    let opts = TreeOptions::default();
    let r = solve_game(&game, 0.0, &x, steps, &opts).unwrap();
    let m = solve_game(&game.mirrored(), 0.0, &x, steps, &opts).unwrap();
    assert!((r.rho_lower + m.rho_upper).abs() <= 1e-12);
    assert!((r.rho_upper + m.rho_lower).abs() <= 1e-12);
}

#[test]
fn thread_count_does_not_change_tree_values() {
    let game = catalog::random_game(5);
    let steps = 4;
    let g = game.grid_for(0.0, steps).unwrap();
    let x = Path::zeros(g, game.n);
    let one = solve_game(&game, 0.0, &x, steps, &TreeOptions { threads: Some(1), ..TreeOptions::default() }).unwrap();
    let four = solve_game(&game, 0.0, &x, steps, &TreeOptions { threads: Some(4), ..TreeOptions::default() }).unwrap();
    assert_eq!(one, four);
}
