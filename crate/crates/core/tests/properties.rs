mod common;

use std::collections::HashMap;

use common::{random_matrix, random_treebank};
use ndarray::Array2;
use pareto_probe::complexity::{matrix_rank, nuclear_norm, RANK_TOL};
use pareto_probe::corpus::{parse_conllu, write_conllu, Sentence, Split, Target, TaskKind, Token, Treebank};
use pareto_probe::eval::{accuracy, uas, LookupTable};
use pareto_probe::linalg::{frobenius, softmax_rows};
use pareto_probe::pareto::{dominates, hypervolume, pareto_frontier, ProbePoint, Provenance};
use pareto_probe::probes::{biaffine_forward, Architecture, LinearMap, Probe};
use pareto_probe::representations::{build_provider, ProviderKind, Vocabulary};
use pareto_probe::training::Family;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn forms(tb: &Treebank) -> Vec<String> {
    let mut f: Vec<String> = tb.forms().map(str::to_string).collect();
    f.sort();
    f
}

fn arb_treebank() -> impl Strategy<Value = Treebank> {
    let token = ("[^\\s\\t\\n#_][^\\s\\t\\n]{0,6}", "[A-Z]{1,5}", "[a-z]{1,6}(:[a-z]{1,4})?");
    prop::collection::vec(prop::collection::vec(token, 1..8), 1..6).prop_perturb(|sents, mut rng| {
        let sentences = sents
            .into_iter()
            .enumerate()
            .map(|(s, toks)| {
                let n = toks.len();
                let tokens = toks
                    .into_iter()
                    .enumerate()
                    .map(|(i, (form, upos, deprel))| {
                        let head = if i == 0 {
                            0
                        } else {
                            let h = rng.random_range(0..=n);
                            if h == i + 1 {
                                0
                            } else {
                                h
                            }
                        };
                        Token { form, upos, head, deprel }
                    })
                    .collect();
                Sentence { tokens, sent_index: s }
            })
            .collect();
        Treebank { split: Split::Train, language: "xx".into(), sentences }
    })
}

fn point(id: usize, c: f64, a: f64) -> ProbePoint {
    let provenance = Provenance {
        task: TaskKind::Posl,
        language: "xx".into(),
        representation: "r".into(),
        family: Family::LinearNuclear,
        probe_id: id,
        seed: 0,
    };
    ProbePoint::new(c, a, provenance)
}

fn arb_points(max: usize) -> impl Strategy<Value = Vec<ProbePoint>> {
    // Coarse grids make ties in both coordinates common.
    prop::collection::vec((0u32..40, 0u32..40), 1..max)
        .prop_map(|v| v.into_iter().enumerate().map(|(i, (c, a))| point(i, c as f64 * 12.5, a as f64 / 40.0)).collect())
}

fn arb_matrix(max: usize) -> impl Strategy<Value = Array2<f64>> {
    (1..max, 1..max, any::<u64>()).prop_map(|(m, n, seed)| random_matrix(m, n, &mut ChaCha8Rng::seed_from_u64(seed)))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn conllu_round_trips(tb in arb_treebank()) {
        let back = parse_conllu(&write_conllu(&tb), Split::Train, "xx").unwrap();
        prop_assert_eq!(back.sentences, tb.sentences);
    }

    #[test]
    fn label_shuffle_keeps_multisets(seed in any::<u64>(), shuffle_seed in any::<u64>(), task in prop::sample::select(vec![TaskKind::Posl, TaskKind::Dal])) {
        let ds = common::dataset(random_treebank(12, 7, 15, seed), task);
        let sh = ds.shuffle_labels(shuffle_seed);
        prop_assert_eq!(sh.len(), ds.len());
        let count = |d: &pareto_probe::TaskDataset| {
            let mut c: HashMap<Option<usize>, usize> = HashMap::new();
            for t in d.label_targets() {
                *c.entry(t).or_default() += 1;
            }
            c
        };
        prop_assert_eq!(count(&sh), count(&ds));
        prop_assert_eq!(sh.instances.iter().map(|i| i.input).collect::<Vec<_>>(), ds.instances.iter().map(|i| i.input).collect::<Vec<_>>());
        prop_assert_eq!(write_conllu(&sh.to_treebank()), write_conllu(&ds.shuffle_labels(shuffle_seed).to_treebank()));
    }

    #[test]
    fn head_shuffle_stays_within_sentences(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
        let ds = common::dataset(random_treebank(10, 6, 15, seed), TaskKind::Parse);
        let sh = ds.shuffle_labels(shuffle_seed);
        for (a, b) in ds.instances.iter().zip(&sh.instances) {
            let (Target::Heads(ha), Target::Heads(hb)) = (&a.target, &b.target) else { panic!() };
            let (mut sa, mut sb) = (ha.clone(), hb.clone());
            sa.sort_unstable();
            sb.sort_unstable();
            prop_assert_eq!(sa, sb);
            prop_assert!(hb.iter().enumerate().all(|(i, &h)| h != i + 1));
        }
    }

    #[test]
    fn input_shuffle_keeps_forms_and_shape(seed in any::<u64>(), shuffle_seed in any::<u64>()) {
        let ds = common::dataset(random_treebank(15, 5, 30, seed), TaskKind::Posl);
        let sh = ds.shuffle_fully(shuffle_seed);
        prop_assert_eq!(forms(&sh.treebank), forms(&ds.treebank));
        let lens = |t: &Treebank| t.sentences.iter().map(Sentence::len).collect::<Vec<_>>();
        prop_assert_eq!(lens(&sh.treebank), lens(&ds.treebank));
        prop_assert_eq!(sh.len(), ds.len());
        prop_assert_eq!(write_conllu(&sh.to_treebank()), write_conllu(&ds.shuffle_fully(shuffle_seed).to_treebank()));
    }

    #[test]
    fn frontier_is_the_nondominated_set(pts in arb_points(60)) {
        let f = pareto_frontier(&pts);
        for w in f.points.windows(2) {
            prop_assert!(w[0].complexity <= w[1].complexity);
            prop_assert!(w[0].accuracy < w[1].accuracy);
        }
        for p in &f.points {
            prop_assert!(!pts.iter().any(|q| dominates(q, p)));
        }
        for p in &pts {
            let on = f.points.iter().any(|q| q.provenance.probe_id == p.provenance.probe_id);
            let matched = f.points.iter().any(|q| q.complexity == p.complexity && q.accuracy == p.accuracy);
            prop_assert!(on || matched || f.points.iter().any(|q| dominates(q, p)));
        }
    }

    #[test]
    fn hypervolume_invariants(pts in arb_points(40), extra in (0u32..40, 0u32..40), scale in 0.01f64..100.0, seed in any::<u64>()) {
        let c_max = 400.0;
        let hv = hypervolume(&pts, c_max).value;
        prop_assert!((0.0..=1.0).contains(&hv));
        prop_assert_eq!(hv, hypervolume(&pareto_frontier(&pts).points, c_max).value);

        let mut more = pts.clone();
        more.push(point(999, extra.0 as f64 * 12.5, extra.1 as f64 / 40.0));
        prop_assert!(hypervolume(&more, c_max).value >= hv);

        let mut perm = pts.clone();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(hypervolume(&perm, c_max).value, hv);

        let scaled: Vec<ProbePoint> = pts.iter().map(|p| point(p.provenance.probe_id, p.complexity * scale, p.accuracy)).collect();
        prop_assert!((hypervolume(&scaled, c_max * scale).value - hv).abs() <= 1e-12);
    }

    #[test]
    fn nuclear_norm_is_homogeneous(w in arb_matrix(12)) {
        let base = nuclear_norm(w.view()).unwrap();
        for c in [-2.0, 0.5] {
            let scaled = nuclear_norm((&w * c).view()).unwrap();
            prop_assert!((scaled - f64::abs(c) * base).abs() <= 1e-9 * base.max(1e-300));
        }
        prop_assert!(base >= frobenius(w.view()) * (1.0 - 1e-12));
    }

    #[test]
    fn nuclear_equals_frobenius_only_at_rank_one(m in 3usize..10, n in 3usize..10, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank1 = random_matrix(m, 1, &mut rng).dot(&random_matrix(1, n, &mut rng));
        let r1 = nuclear_norm(rank1.view()).unwrap();
        prop_assert!((r1 - frobenius(rank1.view())).abs() <= 1e-9 * r1);
        let rank3 = random_matrix(m, 3, &mut rng).dot(&random_matrix(3, n, &mut rng));
        prop_assert_eq!(matrix_rank(rank3.view(), RANK_TOL).unwrap(), 3);
        prop_assert!(nuclear_norm(rank3.view()).unwrap() > frobenius(rank3.view()) * (1.0 + 1e-9));
    }

    #[test]
    fn factorized_rank_never_exceeds_cap(r in 1usize..6, out in 1usize..12, inp in 1usize..12, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = LinearMap::Factorized { left: random_matrix(r, out, &mut rng), right: random_matrix(r, inp, &mut rng) };
        prop_assert!(matrix_rank(map.effective().view(), RANK_TOL).unwrap() <= r);
    }

    #[test]
    fn softmax_ignores_row_shifts(w in arb_matrix(8), shift in -50.0f64..50.0) {
        let mut a = w.clone();
        let mut b = &w + shift;
        softmax_rows(&mut a);
        softmax_rows(&mut b);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        for row in a.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn parser_never_attaches_a_token_to_itself(n in 1usize..8, seed in 0u64..1000, mlp in any::<bool>()) {
        let arch = if mlp { Architecture::Mlp { layers: 1, hidden: 4, dropout: 0.0 } } else { Architecture::Linear { rank: None } };
        let probe = common::gradcheck::randomized(arch, TaskKind::Parse, 5, 0, seed);
        let x = random_matrix(n, 5, &mut ChaCha8Rng::seed_from_u64(seed + 1));
        let Probe::Biaffine(p) = &probe else { panic!() };
        let probs = biaffine_forward(p, x.view()).unwrap();
        for j in 0..n {
            prop_assert_eq!(probs[[j, j + 1]], 0.0);
            prop_assert!((probs.row(j).sum() - 1.0).abs() <= 1e-12);
        }
        prop_assert!(probe.predict_heads(x.view()).iter().enumerate().all(|(j, &h)| h != j + 1));
    }

    #[test]
    fn metrics_commute_with_permutation(pairs in prop::collection::vec((0u8..4, 0u8..4), 1..50), seed in any::<u64>()) {
        let (p, g): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
        let mut shuffled = pairs.clone();
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed));
        let (ps, gs): (Vec<u8>, Vec<u8>) = shuffled.into_iter().unzip();
        prop_assert_eq!(accuracy(&p, &g).unwrap(), accuracy(&ps, &gs).unwrap());

        let sents: Vec<Vec<usize>> = p.chunks(3).map(|c| c.iter().map(|&v| v as usize).collect()).collect();
        let golds: Vec<Vec<usize>> = g.chunks(3).map(|c| c.iter().map(|&v| v as usize).collect()).collect();
        let mut order: Vec<usize> = (0..sents.len()).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        let sp: Vec<_> = order.iter().map(|&i| sents[i].clone()).collect();
        let sg: Vec<_> = order.iter().map(|&i| golds[i].clone()).collect();
        prop_assert_eq!(uas(&sents, &golds).unwrap(), uas(&sp, &sg).unwrap());
    }

    #[test]
    fn lookup_beats_any_constant_guess(seed in any::<u64>(), task in prop::sample::select(vec![TaskKind::Posl, TaskKind::Dal])) {
        let ds = common::dataset(random_treebank(10, 6, 8, seed), task);
        let table = LookupTable::build(&ds);
        prop_assert_eq!(&table, &LookupTable::build(&ds));
        let acc = table.evaluate(&ds).unwrap();
        let mut counts = vec![0usize; ds.num_labels()];
        for t in ds.label_targets().into_iter().flatten() {
            counts[t] += 1;
        }
        let best_constant = *counts.iter().max().unwrap() as f64 / ds.len() as f64;
        prop_assert!(acc >= best_constant - 1e-12, "{} < {}", acc, best_constant);
    }

    #[test]
    fn embeddings_have_provider_width(seed in any::<u64>(), dim in 1usize..20, onehot in any::<bool>()) {
        let tb = random_treebank(4, 5, 10, seed);
        let half = Treebank { sentences: tb.sentences[..2].to_vec(), ..tb.clone() };
        let kind = if onehot { ProviderKind::OnehotLearned } else { ProviderKind::RandomFrozen };
        let provider = build_provider(kind, &Vocabulary::from_treebank(&half), dim, seed).unwrap();
        for s in &tb.sentences {
            let m = provider.embed_sentence(s).unwrap();
            prop_assert_eq!(m.dim(), (s.len(), dim));
            prop_assert_eq!(&m, &provider.embed_sentence(s).unwrap());
        }
    }
}
