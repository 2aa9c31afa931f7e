use brm_core::agent::{AgentMode, Termination};
use brm_core::concepts::{smooth_filter, RelationObservation};
use brm_core::eval::{aggregate, spl_term, EpisodeRow, ReportMeta};
use brm_core::graph::{plan, PriorMatrix};
use brm_core::houseworld::{generate_house, DetectorModel, HouseParams};
use brm_core::{ConceptId, ConceptVocabulary, ConfidenceVector, RelationGraph, SemanticVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const K: usize = 5;
const NODES: usize = K + 1;

fn vocab() -> ConceptVocabulary {
    ConceptVocabulary::new(["a", "b", "c", "d", "e"]).unwrap()
}

fn arb_graph() -> impl Strategy<Value = RelationGraph> {
    let pairs = NODES * (NODES - 1) / 2;
    (
        proptest::collection::vec(0.01f64..0.99, pairs),
        proptest::collection::vec((0..NODES, 0..NODES, any::<bool>()), 0..40),
    )
        .prop_map(|(priors, obs)| {
            let mut g = RelationGraph::new(vocab(), &PriorMatrix::from_upper(NODES, priors).unwrap(), 0.01, 0.2).unwrap();
            let obs: Vec<_> = obs
                .into_iter()
                .filter(|(a, b, _)| a != b)
                .map(|(a, b, v)| RelationObservation::new(ConceptId(a), ConceptId(b), v))
                .collect();
            g.update(&obs).unwrap();
            g
        })
}

fn meta() -> ReportMeta {
    ReportMeta {
        mode: AgentMode::Brm,
        horizon: 300,
        replan_period: 10,
        termination: Termination::Environment,
        corpus: "p".into(),
        episodes: 0,
    }
}

proptest! {
    #[test]
    fn spl_never_exceeds_success_rate(rows in proptest::collection::vec((any::<bool>(), 1usize..6, 2u32..80, 0usize..400), 1..60)) {
        let rows: Vec<EpisodeRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (success, plan_steps, shortest, steps))| EpisodeRow {
                episode_seed: i as u64,
                mode: "brm".into(),
                plan_steps,
                success,
                steps,
                shortest,
                spl_term: spl_term(success, f64::from(shortest), steps as f64),
            })
            .collect();
        let report = aggregate(meta(), &rows).unwrap();
        let cells = report.buckets.iter().map(|b| (b.spl, b.success_rate)).chain([(report.overall.spl, report.overall.success_rate)]);
        for (spl, rate) in cells {
            prop_assert!(0.0 <= spl && spl <= rate + 1e-12 && rate <= 1.0);
        }
        prop_assert_eq!(report.buckets.iter().map(|b| b.n).sum::<usize>(), rows.len());
    }

    #[test]
    fn plans_are_simple_paths_to_the_target(
        g in arb_graph(),
        active in proptest::collection::vec(any::<bool>(), K),
        target in 0..K,
    ) {
        let current = SemanticVector::from_concepts(&active);
        let p = plan(&g, &current, ConceptId(target));
        prop_assert_eq!(p.target(), ConceptId(target));
        prop_assert!(current.get(p.path[0]) || p.path.len() == 1);
        let mut seen = std::collections::HashSet::new();
        prop_assert!(p.path.iter().all(|c| seen.insert(*c)));
        prop_assert!(p.path[1..].iter().all(|c| c.index() < K));
        let product: f64 = p.path.windows(2).map(|w| g.posterior(w[0], w[1])).product();
        prop_assert!(p.score > 0.0 && p.score <= 1.0);
        prop_assert!((p.score - product).abs() <= 1e-12 * product.max(1e-300));
    }

    #[test]
    fn posteriors_stay_open_and_symmetric(g in arb_graph()) {
        for i in 0..NODES {
            for j in 0..NODES {
                if i != j {
                    let p = g.posterior(ConceptId(i), ConceptId(j));
                    prop_assert!(p > 0.0 && p < 1.0);
                    prop_assert_eq!(p, g.posterior(ConceptId(j), ConceptId(i)));
                }
            }
        }
        prop_assert_eq!(g.edge_count(), NODES * (NODES - 1) / 2);
    }

    #[test]
    fn smoothing_matches_its_definition(
        scores in proptest::collection::vec(proptest::collection::vec(0.0f64..=1.0, K), 0..15),
        threshold in 0.05f64..=1.0,
        persistence in 1usize..5,
    ) {
        let stream: Vec<_> = scores.iter().cloned().map(|s| ConfidenceVector::new(s).unwrap()).collect();
        let out = smooth_filter(&stream, threshold, persistence);
        prop_assert_eq!(out.len(), stream.len());
        for (t, v) in out.iter().enumerate() {
            // A bit needs a full window of `persistence` frames.
            let full = t + 1 >= persistence;
            let window = &scores[(t + 1).saturating_sub(persistence)..=t];
            for c in 0..K {
                prop_assert_eq!(v.get(ConceptId(c)), full && window.iter().all(|s| s[c] >= threshold));
            }
            prop_assert_eq!(v.get(ConceptId(K)), (0..K).all(|c| !v.get(ConceptId(c))));
        }
    }

    #[test]
    fn detector_scores_are_confidences(seed in any::<u64>(), truth in proptest::option::of(0..K), hit in 0.5f64..=1.0, fa in 0.0f64..0.4) {
        let det = DetectorModel::new(hit, fa).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = det.emit(truth.map(ConceptId), K, &mut rng);
        prop_assert_eq!(v.len(), K);
        prop_assert!(v.scores().iter().all(|s| (0.0..=1.0).contains(s)));
        let clean = DetectorModel::noiseless().emit(truth.map(ConceptId), K, &mut rng);
        for c in 0..K {
            prop_assert_eq!(clean.scores()[c] >= 0.9, truth == Some(c));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_houses_are_well_formed(seed in any::<u64>()) {
        let params = HouseParams { width: 24, height: 16, min_room: 4, ..HouseParams::default() };
        let h = generate_house(seed, &params).unwrap();
        prop_assert_eq!(&h, &generate_house(seed, &params).unwrap());
        let covered: usize = h.rooms().iter().map(|r| r.cells.len()).sum();
        prop_assert_eq!(covered, h.open_cells().count());
        let start = h.open_cells().next().unwrap();
        let dist = h.bfs_from(&[h.index(start)]);
        prop_assert!(h.open_cells().all(|c| dist[h.index(c)] != u32::MAX));
        prop_assert!(h.rooms().len() >= 8);
    }
}
