use proptest::prelude::*;

use rsappm::grid::{Adjacency, CellOrder, GridDescriptor, GridTopology};
use rsappm::io::{standardize, RawRecord, RawSeriesTable};
use rsappm::linalg::log_sum_exp;
use rsappm::model::{elicit_inverse_gamma, Design, Hyperparameters};
use rsappm::partitions::{
    allocation_log_weights, enumerate_prior, log_prior_unnormalized, rand_index, vi_distance, Partition, PriorSpec,
    PriorVariant, WeightRule, WorkingPartition,
};
use rsappm::sampler::{run_chain, SamplerConfig};
use rsappm::summaries::{coclustering, fit_scores, PointwiseAccumulator};
use rsappm::timeline::{HarmonicDesign, RegimeSchedule};

fn grid_dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..7, 1usize..7)
}

/// A grid together with a labelling of its cells.
fn labelled_grid() -> impl Strategy<Value = (GridTopology, Partition)> {
    grid_dims().prop_flat_map(|(r, c)| {
        let n = r * c;
        prop::collection::vec(0usize..4, n)
            .prop_map(move |raw| (GridTopology::new(r, c).unwrap(), Partition::from_labels(&raw)))
    })
}

fn labels_pair(n: usize) -> impl Strategy<Value = (Partition, Partition)> {
    (prop::collection::vec(0usize..4, n), prop::collection::vec(0usize..4, n))
        .prop_map(|(a, b)| (Partition::from_labels(&a), Partition::from_labels(&b)))
}

proptest! {
    #[test]
    fn adjacency_is_symmetric_chebyshev((rows, cols) in grid_dims()) {
        let g = GridTopology::new(rows, cols).unwrap();
        for i in 0..g.n_cells() {
            prop_assert!(!g.is_adjacent(i, i));
            for j in 0..g.n_cells() {
                let (ri, ci) = g.position(i);
                let (rj, cj) = g.position(j);
                let near = i != j && ri.abs_diff(rj) <= 1 && ci.abs_diff(cj) <= 1;
                prop_assert_eq!(g.is_adjacent(i, j), near);
                prop_assert_eq!(g.is_adjacent(i, j), g.is_adjacent(j, i));
            }
        }
    }

    #[test]
    fn degrees_by_position(rows in 3usize..8, cols in 3usize..8) {
        let g = GridTopology::new(rows, cols).unwrap();
        for i in 0..g.n_cells() {
            let (r, c) = g.position(i);
            let border = (r == 0 || r == rows - 1) as usize + (c == 0 || c == cols - 1) as usize;
            prop_assert_eq!(g.degree(i), [8, 5, 3][border]);
        }
    }

    #[test]
    fn cell_index_inverts_position((rows, cols) in grid_dims()) {
        let g = GridTopology::new(rows, cols).unwrap();
        for i in 0..g.n_cells() {
            let (r, c) = g.position(i);
            prop_assert_eq!(g.cell_index(r, c), i);
            prop_assert_eq!(i, c * rows + r);
        }
    }

    #[test]
    fn induced_sub_lattice_keeps_adjacency((rows, cols) in grid_dims(), keep in prop::collection::vec(any::<bool>(), 36)) {
        let g = GridTopology::new(rows, cols).unwrap();
        let cells: Vec<usize> = (0..g.n_cells()).filter(|&i| keep[i]).collect();
        prop_assume!(!cells.is_empty());
        let sub = g.induced(&cells).unwrap();
        prop_assert_eq!(sub.n_cells(), cells.len());
        for a in 0..cells.len() {
            for b in 0..cells.len() {
                prop_assert_eq!(sub.neighbors(a).contains(&b), g.is_adjacent(cells[a], cells[b]));
            }
        }
    }

    #[test]
    fn leroux_entries_and_definiteness((rows, cols) in grid_dims(), zeta in 0.0f64..0.999) {
        let g = GridTopology::new(rows, cols).unwrap();
        let q = g.leroux_precision(zeta).unwrap();
        let dense = q.matrix().to_dense();
        for i in 0..g.n_cells() {
            prop_assert!((dense[(i, i)] - (zeta * g.degree(i) as f64 + 1.0 - zeta)).abs() < 1e-12);
            for j in 0..g.n_cells() {
                let w = g.is_adjacent(i, j) as u8 as f64;
                if i != j {
                    prop_assert!((dense[(i, j)] + zeta * w).abs() < 1e-12);
                }
            }
        }
        prop_assert!(q.matrix().cholesky().is_ok());
        prop_assert!(dense.symmetric_eigen().eigenvalues.min() > 0.0);
    }

    #[test]
    fn intrinsic_limit_has_one_null_direction(rows in 1usize..6, cols in 2usize..6) {
        let g = GridTopology::new(rows, cols).unwrap();
        let dense = g.leroux_precision(1.0).unwrap().matrix().to_dense();
        let eig = dense.symmetric_eigen().eigenvalues;
        prop_assert_eq!(eig.iter().filter(|e| e.abs() < 1e-9).count(), 1);
        prop_assert!(eig.iter().all(|&e| e > -1e-9));
    }

    #[test]
    fn quadratic_form_is_non_negative((rows, cols) in grid_dims(), zeta in 0.0f64..=1.0, u in prop::collection::vec(-5.0f64..5.0, 36)) {
        let g = GridTopology::new(rows, cols).unwrap();
        let q = g.leroux_precision(zeta).unwrap();
        prop_assert!(q.quad_form(&u[..g.n_cells()]) >= -1e-12);
    }

    #[test]
    fn partitions_are_canonical(raw in prop::collection::vec(0usize..6, 1..20)) {
        let p = Partition::from_labels(&raw);
        let labels = p.labels();
        prop_assert_eq!(p.sizes().iter().sum::<usize>(), raw.len());
        prop_assert!(p.sizes().iter().all(|&s| s > 0));
        let mut next = 0;
        for &l in labels {
            prop_assert!(l <= next);
            if l == next {
                next += 1;
            }
        }
        prop_assert_eq!(next, p.n_clusters());
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                prop_assert_eq!(raw[i] == raw[j], labels[i] == labels[j]);
            }
        }
    }

    #[test]
    fn boundary_lengths_sum_to_total((g, p) in labelled_grid()) {
        let per_cell: usize = (0..g.n_cells()).map(|i| g.boundary_length(&p, i).unwrap()).sum();
        prop_assert_eq!(per_cell, g.total_boundary_length(&p));
        prop_assert_eq!(per_cell, Adjacency::total_boundary_length(&g, &p));
        prop_assert_eq!(per_cell % 2, 0);
    }

    #[test]
    fn exact_allocation_weights_match_prior_ratios((g, p) in labelled_grid(), item in 0usize..36, kappa in 0.1f64..5.0, xi in 0.0f64..3.0, hb in any::<bool>()) {
        let item = item % g.n_cells();
        let variant = if hb { PriorVariant::HbOnly } else { PriorVariant::Appm };
        let spec = PriorSpec::new(kappa, xi, variant).unwrap();
        let mut work = WorkingPartition::from_partition(&p);
        let (c, emptied) = work.remove(item).unwrap();
        if emptied {
            work.remove_cluster(c);
        }
        let w = allocation_log_weights(&work, item, &spec, &g, WeightRule::Exact);
        prop_assert_eq!(w.len(), work.n_clusters() + 1);
        let full: Vec<f64> = (0..w.len())
            .map(|k| {
                let mut trial = work.clone();
                trial.assign(item, k);
                log_prior_unnormalized(&trial.finish().0, &spec, &g)
            })
            .collect();
        for k in 1..w.len() {
            prop_assert!(((w[k] - w[0]) - (full[k] - full[0])).abs() < 1e-9);
        }
    }

    #[test]
    fn dp_only_ignores_the_boundary_penalty((g, p) in labelled_grid(), kappa in 0.1f64..5.0, xi in 0.0f64..3.0) {
        let a = PriorSpec::new(kappa, xi, PriorVariant::DpOnly).unwrap();
        let b = PriorSpec::appm(kappa, 0.0).unwrap();
        prop_assert_eq!(a.xi, 0.0);
        prop_assert!((log_prior_unnormalized(&p, &a, &g) - log_prior_unnormalized(&p, &b, &g)).abs() < 1e-12);
    }

    #[test]
    fn enumerated_probabilities_sum_to_one(rows in 1usize..3, cols in 1usize..4, kappa in 0.1f64..5.0, xi in 0.0f64..3.0) {
        let g = GridTopology::new(rows, cols).unwrap();
        let t = enumerate_prior(&g, &PriorSpec::appm(kappa, xi).unwrap()).unwrap();
        let total: f64 = t.entries().iter().map(|(p, _)| t.probability(p)).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((t.cluster_count_pmf().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rand_index_is_a_similarity((a, b) in labels_pair(9)) {
        let r = rand_index(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!((r - rand_index(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
        prop_assert_eq!(r == 1.0, a == b);
    }

    #[test]
    fn vi_is_a_metric((a, b) in labels_pair(9), c in prop::collection::vec(0usize..4, 9)) {
        let c = Partition::from_labels(&c);
        let ab = vi_distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - vi_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(vi_distance(&a, &a).unwrap().abs() < 1e-12);
        prop_assert!(ab <= vi_distance(&a, &c).unwrap() + vi_distance(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn coclustering_is_a_similarity_matrix(draws in prop::collection::vec(prop::collection::vec(0usize..3, 6), 1..8)) {
        let parts: Vec<Partition> = draws.iter().map(|d| Partition::from_labels(d)).collect();
        let cc = coclustering(&parts).unwrap();
        for i in 0..6 {
            prop_assert_eq!(cc.get(i, i), 1.0);
            for j in 0..6 {
                prop_assert_eq!(cc.get(i, j), cc.get(j, i));
                prop_assert!((0.0..=1.0).contains(&cc.get(i, j)));
            }
        }
    }

    #[test]
    fn supports_are_disjoint_and_shifts_move_one_time(n_lambda in 0usize..4, gaps in prop::collection::vec(0usize..5, 1..4), step in any::<bool>()) {
        let mut centers = Vec::new();
        let mut at = n_lambda;
        for g in &gaps {
            centers.push(at);
            at += 2 * n_lambda + 1 + g;
        }
        let t_len = at + 1;
        let pattern: Vec<usize> = (0..=centers.len()).map(|k| k % 2).collect();
        let n_regimes = if centers.is_empty() { 1 } else { 2 };
        let s = RegimeSchedule::new(t_len, n_regimes, centers.clone(), n_lambda, pattern).unwrap();
        for m in 1..centers.len() {
            prop_assert!(s.changepoint_support(m - 1).unwrap().end() < s.changepoint_support(m).unwrap().start());
        }
        prop_assert_eq!(s.regime_counts().iter().sum::<usize>(), t_len);
        let before = s.regimes();
        let mut moved = s.clone();
        let c = centers[0];
        let target = if step { c + 1 } else { c.wrapping_sub(1) };
        prop_assume!(s.in_support(0, target));
        moved.set_changepoint(0, target).unwrap();
        let changed = before.iter().zip(moved.regimes()).filter(|(a, b)| **a != *b).count();
        prop_assert_eq!(changed, 1);
    }

    #[test]
    fn harmonics_repeat_with_their_period(extra in 0usize..3, j in 1usize..5, t in 0usize..40) {
        let period = 8 * (extra + 1);
        let t_len = period * j;
        let h = HarmonicDesign::new(t_len, vec![j]).unwrap();
        let a = h.design_vector(t % t_len).unwrap();
        let b = h.design_vector((t % t_len + period) % t_len).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        let last = h.design_vector(t_len - 1).unwrap();
        prop_assert!((last[0] - 1.0).abs() < 1e-12 && last[1].abs() < 1e-12);
    }

    #[test]
    fn inverse_gamma_elicitation_round_trips(mean in 0.01f64..100.0, cv in 0.01f64..2.0) {
        let variance = (cv * mean).powi(2);
        let ig = elicit_inverse_gamma(mean, variance).unwrap();
        prop_assert!(ig.shape > 2.0);
        prop_assert!((ig.mean() - mean).abs() < 1e-9 * mean);
        prop_assert!((ig.variance() - variance).abs() < 1e-9 * variance);
    }

    #[test]
    fn standardization_is_invertible(values in prop::collection::vec(prop::option::weighted(0.8, 0.0f64..1e4), 12), odd in any::<bool>()) {
        let grid = GridDescriptor { rows: 2, cols: 2, order: CellOrder::ColumnMajor };
        let t_raw = if odd { 3 } else { 2 };
        let records: Vec<RawRecord> = (0..4)
            .flat_map(|cell| (0..t_raw).map(move |time| (cell, time)))
            .map(|(cell, time)| RawRecord { cell, time, value: values[cell * 3 + time] })
            .collect();
        let raw = RawSeriesTable::new(grid, t_raw, records.clone()).unwrap();
        let design = Design::new(raw.padded_times(), 1, vec![1.0; raw.padded_times()]).unwrap();
        let observed: Vec<f64> = records.iter().filter_map(|r| r.value).collect();
        let spread = observed.iter().any(|&v| v != observed[0]);
        prop_assume!(spread && observed.iter().any(|&v| v != 0.0));
        let (data, rec) = standardize(&raw, design).unwrap();
        prop_assert_eq!(data.n_times() % 2, 0);
        let z: Vec<f64> = data.observed().iter().map(|&(i, t)| data.value(i, t).unwrap()).collect();
        let m = z.iter().sum::<f64>() / z.len() as f64;
        let sd = (z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (z.len() - 1) as f64).sqrt();
        prop_assert!(m.abs() < 1e-10 && (sd - 1.0).abs() < 1e-10);
        for r in &records {
            if let Some(v) = r.value {
                let back = rec.inverse(data.value(r.cell, r.time).unwrap());
                prop_assert!((back - v).abs() <= 1e-10 * v.abs().max(1.0));
            }
        }
    }

    #[test]
    fn pointwise_scores_are_consistent(rows in prop::collection::vec(prop::collection::vec(-8.0f64..0.0, 5), 2..12)) {
        let acc = PointwiseAccumulator::from_matrix(&rows).unwrap();
        let mut streamed = PointwiseAccumulator::new(5);
        for r in &rows {
            streamed.push(r);
        }
        let scores = fit_scores(&acc).unwrap();
        let again = fit_scores(&streamed).unwrap();
        prop_assert!((scores.lpml - again.lpml).abs() < 1e-9 && (scores.waic - again.waic).abs() < 1e-9);
        let log_cpo = acc.log_cpo().unwrap();
        prop_assert!((log_cpo.iter().sum::<f64>() - scores.lpml).abs() < 1e-9);
        for (j, c) in log_cpo.iter().enumerate() {
            let col: Vec<f64> = rows.iter().map(|r| -r[j]).collect();
            let direct = (rows.len() as f64).ln() - log_sum_exp(&col);
            prop_assert!((c - direct).abs() < 1e-9);
        }
        prop_assert!(scores.p_waic >= -1e-12);
        prop_assert!((scores.waic - (-2.0 * (scores.lppd - scores.p_waic))).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn stored_draw_count_follows_the_schedule(burn_in in 0usize..6, extra in 1usize..10, thinning in 1usize..4, seed in any::<u64>()) {
        let g = GridTopology::new(1, 2).unwrap();
        let design = Design::new(4, 1, vec![0.5, -1.0, 1.5, 0.2]).unwrap();
        let values = vec![Some(0.1), None, Some(0.4), Some(-0.3), Some(1.2), Some(0.0), Some(-0.8), Some(0.6)];
        let data = rsappm::model::Dataset::new(g, design, values).unwrap();
        let config = SamplerConfig { iterations: burn_in + extra, burn_in, thinning, seed, ..Default::default() };
        let chain = run_chain(&config, &Hyperparameters::default(), &data, &RegimeSchedule::single(4).unwrap()).unwrap();
        prop_assert_eq!(chain.draws.len(), extra / thinning);
        prop_assert_eq!(chain.draws.len(), config.n_draws());
        prop_assert!(chain.draws.iter().all(|d| d.log_likelihood.is_finite()));
    }
}
