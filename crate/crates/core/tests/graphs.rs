use graphon_sde::graphon::{discretize, graph_to_graphon, Graphon, GridSpec, SingularPolicy, StepGraphon};
use graphon_sde::graphs::{
    deterministic_graph, graph_stats, sample_random_points, sample_w_random, GraphMode, InteractionGraph,
};
use proptest::prelude::*;
use support::TestRng;

mod support;

fn bounded_graphon() -> impl Strategy<Value = Graphon> {
    prop_oneof![
        (0.0..1.0f64).prop_map(|c| Graphon::constant(c).unwrap()),
        Just(Graphon::UniformAttachment),
        Just(Graphon::Product),
        (1usize..5)
            .prop_flat_map(|k| proptest::collection::vec(0.0..1.0f64, k * k).prop_map(move |v| (k, v)))
            .prop_map(|(k, v)| {
                // symmetrize
                let w: Vec<Vec<f64>> = (0..k)
                    .map(|i| (0..k).map(|j| v[i.min(j) * k + i.max(j)]).collect())
                    .collect();
                Graphon::Step(StepGraphon::equal(w).unwrap())
            }),
    ]
}

fn adjacency(graph: &InteractionGraph) -> Vec<Vec<u8>> {
    let n = graph.n();
    (0..n)
        .map(|i| (0..n).map(|j| graph.weight(i, j) as u8).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn discretization_matches_kernel_at_grid(g in bounded_graphon(), n in 1usize..40) {
        let grid = GridSpec::new(n).unwrap();
        let g_n = discretize(&g, &grid, SingularPolicy::Reject).unwrap();
        prop_assert_eq!(g_n.blocks(), n);
        for i in 0..n {
            for j in 0..n {
                let (x, y) = (grid.point(i), grid.point(j));
                prop_assert_eq!(g_n.value(i, j), g.eval(x, y));
                prop_assert_eq!(g_n.value(i, j), g_n.value(j, i));
                prop_assert_eq!(g_n.eval(x, y), g.eval(x, y));
            }
        }
    }

    #[test]
    fn projection_is_the_left_grid_point(n in 1usize..200, x in 0.0..=1.0f64) {
        let grid = GridSpec::new(n).unwrap();
        let p = grid.project(x);
        prop_assert!(p <= x);
        prop_assert!(x - p <= 1.0 / n as f64 + 1e-15);
        prop_assert_eq!(grid.project(p), p);
    }

    #[test]
    fn symmetric_samples_are_simple(g in bounded_graphon(), n in 2usize..60, beta in 0.05..=1.0f64, seed: u64) {
        let graph = sample_w_random(&g, n, beta, GraphMode::SymmetricSimple, seed).unwrap();
        for i in 0..n {
            prop_assert_eq!(graph.weight(i, i), 0.0);
            for j in 0..n {
                let w = graph.weight(i, j);
                prop_assert!(w == 0.0 || w == 1.0);
                prop_assert_eq!(w, graph.weight(j, i));
                if beta * g.eval(graph.points()[i], graph.points()[j]) <= 0.0 {
                    prop_assert_eq!(w, 0.0);
                }
            }
        }
        let again = sample_w_random(&g, n, beta, GraphMode::SymmetricSimple, seed).unwrap();
        prop_assert_eq!(graph.to_text(), again.to_text());
    }

    #[test]
    fn directed_samples_have_no_loops(g in bounded_graphon(), n in 2usize..40, seed: u64) {
        let graph = sample_w_random(&g, n, 1.0, GraphMode::DirectedIndependent, seed).unwrap();
        prop_assert!((0..n).all(|i| graph.weight(i, i) == 0.0));
    }

    #[test]
    fn text_round_trip(g in bounded_graphon(), n in 2usize..30, seed: u64) {
        let graph = sample_w_random(&g, n, 0.7, GraphMode::DirectedIndependent, seed).unwrap();
        let back = InteractionGraph::read_text(graph.to_text().as_bytes()).unwrap();
        prop_assert_eq!(back.to_text(), graph.to_text());
    }

    #[test]
    fn graph_graphon_norm_is_density(g in bounded_graphon(), n in 2usize..40, seed: u64) {
        let graph = sample_w_random(&g, n, 1.0, GraphMode::SymmetricSimple, seed).unwrap();
        let step = graph_to_graphon(&adjacency(&graph)).unwrap();
        let density = graph.nnz() as f64 / (n * n) as f64;
        prop_assert!((step.lp_norm(1.0) - density).abs() < 1e-12);
        prop_assert!((graph_stats(&graph).norm_1 - density).abs() < 1e-12);
    }

    #[test]
    fn deterministic_weights_scale_the_step_values(g in bounded_graphon(), n in 1usize..30, beta in 0.0..=1.0f64) {
        let g_n = discretize(&g, &GridSpec::new(n).unwrap(), SingularPolicy::Reject).unwrap();
        let graph = deterministic_graph(&g_n, n, beta.max(1e-6)).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(graph.weight(i, j), beta.max(1e-6) * g_n.value(i, j));
            }
        }
    }

    #[test]
    fn shift_distance_equals_shift(k in 1usize..6, eps in 0.0..1.0f64, p in 1.0..4.0f64) {
        let w = vec![vec![0.25; k]; k];
        let s = StepGraphon::equal(w).unwrap();
        let t = s.shifted(eps).unwrap();
        prop_assert!((s.lp_distance(&t, p) - eps).abs() < 1e-12);
    }

    #[test]
    fn random_points_are_ordered(n in 2usize..200, seed: u64) {
        let u = sample_random_points(n, seed).unwrap();
        prop_assert_eq!(u.len(), n + 1);
        prop_assert_eq!(u[0], 0.0);
        prop_assert_eq!(u[n], 1.0);
        prop_assert!(u.windows(2).all(|w| w[0] < w[1]));
    }
}

/// Mean of `sum_i S_i^2` over `reps` draws, with its standard error.
fn spacing_moment(reps: usize, mut draw: impl FnMut(usize) -> Vec<f64>) -> (f64, f64) {
    let values: Vec<f64> = (0..reps)
        .map(|r| draw(r).windows(2).map(|w| (w[1] - w[0]).powi(2)).sum())
        .collect();
    let mean = values.iter().sum::<f64>() / reps as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    (mean, (var / reps as f64).sqrt())
}

// The m + 1 spacings of m iid uniforms are exchangeable with
// E[S^2] = 2 / ((m + 1)(m + 2)).
fn uniform_spacing_second_moment(m: usize) -> f64 {
    let m = m as f64;
    2.0 / ((m + 1.0) * (m + 2.0))
}

#[test]
fn sampler_spacings_match_interior_uniform_count() {
    let n = 10;
    let (mean, se) = spacing_moment(40_000, |r| sample_random_points(n, r as u64).unwrap());
    let per_spacing = mean / n as f64;
    // N - 1 interior uniforms give 2 / (N (N + 1))
    let expected = uniform_spacing_second_moment(n - 1);
    assert!((per_spacing - expected).abs() < 4.0 * se / n as f64, "{per_spacing} vs {expected}");
}

#[test]
fn iid_uniform_spacings_oracle() {
    let n = 10;
    let mut rng = TestRng::new(5);
    let (mean, se) = spacing_moment(40_000, |_| {
        let mut u: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
        u.sort_by(f64::total_cmp);
        let mut v = vec![0.0];
        v.extend(u);
        v.push(1.0);
        v
    });
    let per_spacing = mean / (n + 1) as f64;
    let expected = uniform_spacing_second_moment(n);
    assert!((per_spacing - expected).abs() < 4.0 * se / (n + 1) as f64, "{per_spacing} vs {expected}");
}

#[test]
fn singular_kernels_need_a_policy() {
    let g = Graphon::power_law(0.3).unwrap();
    let grid = GridSpec::new(8).unwrap();
    assert!(discretize(&g, &grid, SingularPolicy::Reject).is_err());
    let shifted = discretize(&g, &grid, SingularPolicy::MidpointShift).unwrap();
    assert!(shifted.max_value().is_finite());
    let clamped = discretize(&g, &grid, SingularPolicy::Clamp { cap: 3.0 }).unwrap();
    assert_eq!(clamped.max_value(), 3.0);
}
