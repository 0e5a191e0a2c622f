#![allow(dead_code)]

use ndarray::Array2;
use profdenoise::multivae::{elbo_loss, Dims, ElboBatch, ModelParams};
use profdenoise::rng::seeded_rng;
use rand_distr::{Distribution, StandardNormal};

/// Max relative error between the analytic gradient and central finite
/// differences over every parameter of a tiny float64 model.
pub fn max_gradient_error(seed: u64) -> f64 {
    let dims = Dims {
        n_items: 7,
        hidden: 5,
        latent: 3,
    };
    let mut rng = seeded_rng(seed, &[]);
    let params = ModelParams::init(dims, &mut rng);
    let rows: Vec<Vec<usize>> = vec![vec![0, 2, 5], vec![1, 3], vec![4, 5, 6, 0]];
    let refs: Vec<&[usize]> = rows.iter().map(Vec::as_slice).collect();
    let batch = ElboBatch::from_rows(&refs, dims.n_items, 0.0, &mut rng);
    let noise = Array2::from_shape_simple_fn((rows.len(), dims.latent), || StandardNormal.sample(&mut rng));
    let beta = 0.2;
    let (_, grads) = elbo_loss(&params, &batch, beta, &noise);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let analytic = grads.tensors().map(|t| t.to_vec());
    for (t, g_t) in analytic.iter().enumerate() {
        for j in 0..g_t.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[t][j] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[t][j] -= h;
            let fd = (elbo_loss(&plus, &batch, beta, &noise).0 - elbo_loss(&minus, &batch, beta, &noise).0) / (2.0 * h);
            let a = g_t[j];
            let rel = (a - fd).abs() / (a.abs() + fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    worst
}

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use profdenoise::dataset::{kcore_filter, temporal_split, Interaction, SplitDataset};
use profdenoise::multivae::{train, TrainConfig};
use profdenoise::synth::{generate, SynthData, SynthSpec};
use profdenoise::ExternalId;
use rand::Rng;

/// Training settings sized for the synthetic catalog.
pub fn desk_train_config(seed: u64, n_users: usize) -> TrainConfig {
    TrainConfig {
        hidden: 64,
        latent: 16,
        epochs: 100,
        batch_size: 64,
        learning_rate: 3e-3,
        seed,
        ..Default::default()
    }
    .with_scaled_anneal(n_users)
}

pub struct Fixture {
    pub spec: SynthSpec,
    pub data: SynthData,
    pub split: Arc<SplitDataset>,
    pub model: Arc<profdenoise::multivae::ModelParams>,
}

pub fn synth_fixture(spec: SynthSpec) -> Fixture {
    let data = generate(&spec).expect("valid spec");
    let split = temporal_split(&data.interactions, Some(&data.titles)).expect("split");
    let cfg = desk_train_config(spec.seed, split.n_users());
    let model = train(&split.train_rows(), split.n_items(), &cfg).expect("training");
    Fixture {
        spec,
        data,
        split: Arc::new(split),
        model: Arc::new(model),
    }
}

/// Reference k-core: repeatedly drop every edge touching an under-degree
/// user or item, recounting degrees from scratch each round.
pub fn kcore_oracle(edges: &[(usize, usize)], user_min: usize, item_min: usize) -> BTreeSet<(usize, usize)> {
    let mut alive: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    loop {
        let mut ud: HashMap<usize, usize> = HashMap::new();
        let mut id: HashMap<usize, usize> = HashMap::new();
        for &(u, i) in &alive {
            *ud.entry(u).or_default() += 1;
            *id.entry(i).or_default() += 1;
        }
        let next: BTreeSet<_> = alive
            .iter()
            .copied()
            .filter(|(u, i)| ud[u] >= user_min && id[i] >= item_min)
            .collect();
        if next.len() == alive.len() {
            return alive;
        }
        alive = next;
    }
}

/// Compares `kcore_filter` against the oracle on `graphs` random bipartite
/// graphs. Returns the number of mismatches.
pub fn kcore_mismatches(graphs: usize, seed: u64) -> usize {
    let mut rng = seeded_rng(seed, &[]);
    let mut bad = 0;
    for _ in 0..graphs {
        let n_users = rng.random_range(2..12);
        let n_items = rng.random_range(2..12);
        let density: f64 = rng.random_range(0.1..0.7);
        let mut edges = Vec::new();
        for u in 0..n_users {
            for i in 0..n_items {
                if rng.random_bool(density) {
                    edges.push((u, i));
                }
            }
        }
        let user_min = rng.random_range(1..5);
        let item_min = rng.random_range(1..5);
        let log: Vec<Interaction> = edges
            .iter()
            .enumerate()
            .map(|(t, &(u, i))| Interaction {
                user: ExternalId::new(format!("u{u}")),
                item: ExternalId::new(format!("i{i}")),
                rating: 1,
                timestamp: t as u64,
            })
            .collect();
        let got: BTreeSet<(usize, usize)> = match kcore_filter(&log, user_min, item_min) {
            Ok(kept) => kept,
            Err(profdenoise::dataset::DatasetError::EmptyAfterKcore { .. }) => Vec::new(),
            Err(e) => panic!("{e}"),
        }
        .iter()
            .map(|x| (x.user.as_str()[1..].parse().unwrap(), x.item.as_str()[1..].parse().unwrap()))
            .collect();
        if got != kcore_oracle(&edges, user_min, item_min) {
            bad += 1;
        }
    }
    bad
}

/// Holdout and window invariants of a split built from `log`; returns the
/// violations found.
pub fn split_violations(log: &[Interaction], split: &SplitDataset) -> Vec<String> {
    let mut by_user: BTreeMap<&ExternalId, Vec<&Interaction>> = BTreeMap::new();
    for x in log {
        by_user.entry(&x.user).or_default().push(x);
    }
    let mut out = Vec::new();
    for (u, us) in split.users.iter().enumerate() {
        let uid = split.catalog.user_id(u);
        let mut events = by_user.get(uid).cloned().unwrap_or_default();
        events.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then(a.item.cmp(&b.item)));
        let ids: Vec<&ExternalId> = events.iter().map(|x| &x.item).collect();
        let n = ids.len();
        if n != us.history.len() + 3 {
            out.push(format!("user {uid}: {n} events but {} training items", us.history.len()));
            continue;
        }
        let item = |i: usize| split.catalog.item_id(i);
        if item(us.test) != ids[n - 1] || item(us.val) != ids[n - 2] || item(us.val2) != ids[n - 3] {
            out.push(format!("user {uid}: holdouts are not the three most recent"));
        }
        if us.history.iter().map(|&i| item(i)).ne(ids[..n - 3].iter().copied()) {
            out.push(format!("user {uid}: history is not chronological"));
        }
        let window = split.prompt_window(u);
        if window.len() != split.window_len || window != &us.history[us.history.len() - split.window_len..] {
            out.push(format!("user {uid}: window is not the most recent {}", split.window_len));
        }
    }
    let min = split.users.iter().map(|u| u.history.len()).min().unwrap_or(0);
    if split.window_len != min {
        out.push(format!("window length {} != shortest history {min}", split.window_len));
    }
    out
}

use profdenoise::denoise::{
    apply_and_gate, build_context, run_campaign, Campaign, CampaignConfig, ContextNeeds, ContextOptions, ItemRef,
    ProposalError, ProposalSource, RandomDenoiser, RemovalProposal, SemanticDenoiser, TopPopDenoiser,
    UpperBoundOnValDenoiser, UserContext,
};
use profdenoise::llm::PromptVariant;
use profdenoise::synth::{mixed_script, mock_denoiser, MockBackend, MockMode};
use profdenoise::Scorer;

fn brute_rank(scores: &[f64], candidate: usize, mask: &BTreeSet<usize>) -> usize {
    let mut items: Vec<usize> = (0..scores.len()).filter(|i| !mask.contains(i)).collect();
    items.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    items.iter().position(|&i| i == candidate).unwrap() + 1
}

fn fuzz_proposal<R: Rng>(rng: &mut R, ctx: &UserContext, n_items: usize, run: u32) -> RemovalProposal {
    let window = ctx.window_items();
    let outside: Vec<usize> = ctx.profile.iter().copied().filter(|i| !window.contains(i)).collect();
    let k = rng.random_range(1..=2);
    let pick = |rng: &mut R, pool: &[usize]| pool[rng.random_range(0..pool.len())];
    let mut removals: Vec<ItemRef> = (0..k)
        .map(|_| {
            let roll = rng.random_range(0..20);
            ItemRef::Item(match roll {
                0 if !outside.is_empty() => pick(rng, &outside),
                1 => rng.random_range(0..n_items),
                _ => pick(rng, &window),
            })
        })
        .collect();
    match rng.random_range(0..20) {
        0 => removals.push(ItemRef::Text("not a title".into())),
        1 => removals.clear(),
        _ => {}
    }
    let error = match rng.random_range(0..10) {
        0 => ProposalError::Formatting,
        1 => ProposalError::Hallucination,
        _ => ProposalError::None,
    };
    RemovalProposal {
        removals,
        source: ProposalSource {
            denoiser: "fuzz".into(),
            run,
            response: None,
            transport_error: None,
        },
        error,
    }
}

/// Gates `n` fuzzed proposals and checks each outcome against a from-scratch
/// recomputation. Returns (violations, accepted count).
pub fn gate_violations(fx: &Fixture, n: usize, seed: u64) -> (Vec<String>, usize) {
    let split = &*fx.split;
    let model = &*fx.model;
    let ctxs: Vec<UserContext> = (0..split.n_users())
        .map(|u| build_context(split, u, model, ContextNeeds::default(), &ContextOptions::default()).unwrap())
        .collect();
    let mut rng = seeded_rng(seed, &[0x9a7e]);
    let mut bad = Vec::new();
    let mut accepted = 0;
    for t in 0..n {
        let ctx = &ctxs[rng.random_range(0..ctxs.len())];
        let proposal = fuzz_proposal(&mut rng, ctx, split.n_items(), t as u32);
        let declared = proposal.error;
        let items = proposal.items();
        let out = apply_and_gate(ctx, proposal.clone(), model).unwrap();

        let window = ctx.window_items();
        let well_formed = items.as_ref().is_some_and(|v| {
            !v.is_empty() && v.iter().collect::<BTreeSet<_>>().len() == v.len() && v.iter().all(|i| window.contains(i))
        });
        let valid = declared == ProposalError::None && well_formed;
        let improves = valid && {
            let removed: BTreeSet<usize> = items.clone().unwrap().into_iter().collect();
            let edited: Vec<usize> = ctx.profile.iter().copied().filter(|i| !removed.contains(i)).collect();
            let mask: BTreeSet<usize> = edited.iter().copied().collect();
            let fresh = brute_rank(&model.score(&edited), ctx.candidate.item, &mask);
            if fresh != out.rank_after {
                bad.push(format!("#{t}: rank_after {} but recomputed {fresh}", out.rank_after));
            }
            fresh < ctx.candidate_rank
        };
        if out.accepted != improves {
            bad.push(format!("#{t}: accepted={} expected {improves}", out.accepted));
        }
        if (out.proposal.error == ProposalError::None) != valid {
            bad.push(format!("#{t}: error label {:?} for valid={valid}", out.proposal.error));
        }
        if out.accepted {
            accepted += 1;
            let removed = items.unwrap();
            let expect: Vec<usize> = ctx.profile.iter().copied().filter(|i| !removed.contains(i)).collect();
            if out.final_profile != expect {
                bad.push(format!("#{t}: accepted profile does not drop exactly the removals"));
            }
        } else if out.final_profile != ctx.profile || out.rank_after != ctx.candidate_rank && !valid {
            bad.push(format!("#{t}: rejected proposal changed the profile or rank"));
        }
    }
    (bad, accepted)
}

pub fn campaign_config(k: usize, runs: u32, seed: u64) -> CampaignConfig {
    CampaignConfig {
        k,
        runs,
        seed,
        ..Default::default()
    }
}

pub fn oracle_mock(fx: &Fixture, k: usize) -> profdenoise::llm::LlmDenoiser {
    let scorer: Arc<dyn Scorer> = fx.model.clone();
    let backend = MockBackend::new(MockMode::Oracle, k, fx.spec.seed, fx.split.clone(), Some(scorer)).unwrap();
    mock_denoiser("oracle-mock", backend, PromptVariant::ZeroShot, "items")
}

pub struct Dominance {
    pub users: usize,
    /// (method, users where upperBoundOnVal-1 ends with a worse validation rank)
    pub vs_single: Vec<(String, usize)>,
    pub pair_worse: usize,
}

fn final_ranks(c: &Campaign) -> BTreeMap<usize, Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for o in &c.outcomes {
        m.entry(o.user).or_default().push(o.final_rank());
    }
    m
}

pub fn dominance(fx: &Fixture) -> Dominance {
    let split = &*fx.split;
    let model = &*fx.model;
    let users: Vec<usize> = (0..split.n_users()).collect();
    let seed = fx.spec.seed;
    let c1 = campaign_config(1, 3, seed);
    let run = |d: &dyn profdenoise::Denoiser, cfg: &CampaignConfig| run_campaign(split, model, d, &users, cfg).unwrap();

    let ub1 = final_ranks(&run(&UpperBoundOnValDenoiser::new("ub1", model), &c1));
    let ub2 = final_ranks(&run(&UpperBoundOnValDenoiser::new("ub2", model), &campaign_config(2, 1, seed)));
    let valid_mock = {
        let backend = MockBackend::new(MockMode::ValidRandom, 1, seed, fx.split.clone(), None).unwrap();
        mock_denoiser("valid-mock", backend, PromptVariant::ZeroShot, "items")
    };
    let others: Vec<(&str, Campaign)> = vec![
        ("random-1", run(&RandomDenoiser::new("random-1"), &c1)),
        ("toppop-1", run(&TopPopDenoiser::new("toppop-1", split.popularity()), &c1)),
        ("semantic-1", run(&SemanticDenoiser::new("semantic-1", model.item_embeddings()), &c1)),
        ("valid-random-mock-1", run(&valid_mock, &c1)),
        ("oracle-mock-1", run(&oracle_mock(fx, 1), &c1)),
    ];
    let vs_single = others
        .iter()
        .map(|(name, c)| {
            let worse = final_ranks(c)
                .iter()
                .filter(|(u, ranks)| ranks.iter().any(|&r| ub1[u][0] > r))
                .count();
            (name.to_string(), worse)
        })
        .collect();
    let pair_worse = users.iter().filter(|u| ub2[u][0] > ub1[u][0]).count();
    Dominance {
        users: users.len(),
        vs_single,
        pair_worse,
    }
}

/// Outcome logs of the direct and text-path oracle, with the source field
/// blanked. Returns (mismatching outcomes, error-labelled text outcomes).
pub fn oracle_equivalence(fx: &Fixture) -> (usize, usize) {
    let split = &*fx.split;
    let model = &*fx.model;
    let users: Vec<usize> = (0..split.n_users()).collect();
    let cfg = campaign_config(1, 1, fx.spec.seed);
    let direct = run_campaign(split, model, &UpperBoundOnValDenoiser::new("ub1", model), &users, &cfg).unwrap();
    let text = run_campaign(split, model, &oracle_mock(fx, 1), &users, &cfg).unwrap();
    let blank = |o: &profdenoise::DenoiseOutcome| {
        let mut o = o.clone();
        o.proposal.source = ProposalSource {
            denoiser: String::new(),
            run: 0,
            response: None,
            transport_error: None,
        };
        o
    };
    let errors = text.outcomes.iter().filter(|o| o.proposal.error != ProposalError::None).count();
    let mismatches = if direct.outcomes.len() != text.outcomes.len() {
        usize::MAX
    } else {
        direct.outcomes.iter().zip(&text.outcomes).filter(|(a, b)| blank(a) != blank(b)).count()
    };
    (mismatches, errors)
}

/// 60/25/15 valid/malformed/hallucinated script over 100 users x 3 runs.
pub fn scripted_error_rates(fx: &Fixture) -> profdenoise::eval::ErrorRates {
    let split = &*fx.split;
    let users = profdenoise::dataset::stratified_sample(split, 100, fx.spec.seed).unwrap();
    let script = mixed_script(split, &users, 3, 1, [60, 25, 15], fx.spec.seed).unwrap();
    let d = mock_denoiser("scripted", MockBackend::scripted(script, fx.split.clone()), PromptVariant::ZeroShot, "items");
    let c = run_campaign(split, &*fx.model, &d, &users, &campaign_config(1, 3, fx.spec.seed)).unwrap();
    let records = profdenoise::eval::evaluate_campaign("scripted", &c.outcomes, &*fx.model, split).unwrap();
    profdenoise::eval::error_rates(&records)
}

use profdenoise::denoise::{ExemplarRemoval, FewShotExemplar, TitledItem};
use profdenoise::eval::Metric;
use profdenoise::llm::{build_prompt, PromptSpec};

/// Reference values from scipy.stats.ttest_rel.
pub const T_FIXTURES: &[(&[f64], &[f64], f64, f64)] = &[
    (&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5], 4.242640687119285, 0.013235599563682695),
    (&[0.3, 0.1, 0.25, 0.4], &[0.2, 0.15, 0.1, 0.1], 1.732050807568877, 0.18169011381620928),
    (&[1.0, 2.0, 3.0], &[1.5, 2.1, 3.2], -2.2188007849009184, 0.15672595728843194),
];

/// Closed-form metrics against DCG and reciprocal rank over an explicit
/// ranked list with one relevant item. Returns the number of mismatches.
pub fn metric_mismatches(pairs: usize, seed: u64) -> usize {
    let mut rng = seeded_rng(seed, &[]);
    let mut bad = 0;
    for _ in 0..pairs {
        let rank: usize = rng.random_range(1..300);
        let k: usize = rng.random_range(1..150);
        let list: Vec<bool> = (1..=rank.max(k)).map(|p| p == rank).collect();
        let dcg: f64 = list.iter().take(k).enumerate().filter(|(_, &r)| r).map(|(i, _)| 1.0 / ((i + 2) as f64).log2()).sum();
        let rr: f64 = list.iter().take(k).position(|&r| r).map_or(0.0, |p| 1.0 / (p + 1) as f64);
        let hit = list.iter().take(k).any(|&r| r) as u8 as f64;
        if Metric::Ndcg.at(rank, k) != dcg || Metric::Mrr.at(rank, k) != rr || Metric::Hr.at(rank, k) != hit {
            bad += 1;
        }
    }
    bad
}

pub fn titled(item: usize, title: &str) -> TitledItem {
    TitledItem {
        item,
        title: Some(title.to_string()),
    }
}

pub fn golden_context() -> UserContext {
    let window = ["Die Hard", "Back to the Future", "Home Alone", "Toy Story"];
    UserContext {
        user: 7,
        profile: vec![0, 1, 2, 3, 4, 5],
        window: window.iter().enumerate().map(|(i, t)| titled(i + 2, t)).collect(),
        candidate: titled(40, "Lion King"),
        candidate_rank: 13,
        examples: Some(FewShotExemplar {
            candidate: titled(41, "Aladdin"),
            best: ExemplarRemoval {
                item: titled(3, "Back to the Future"),
                rank_before: 21,
                rank_after: 9,
            },
            worst: ExemplarRemoval {
                item: titled(5, "Toy Story"),
                rank_before: 21,
                rank_after: 30,
            },
        }),
        top_recs: Some(
            [
                "Aladdin", "Beauty and the Beast", "Mulan", "Hercules", "Tarzan", "Pocahontas", "Bambi", "Dumbo",
                "Cinderella", "Pinocchio",
            ]
            .iter()
            .enumerate()
            .map(|(i, t)| titled(41 + i, t))
            .collect(),
        ),
        model_name: "MultiVAE".into(),
    }
}

/// Renders every (variant, k) prompt for the golden context and compares it
/// with the pinned file; `update` rewrites the files instead.
pub fn golden_mismatches(update: bool) -> Vec<String> {
    let dir = std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let ctx = golden_context();
    let mut bad = Vec::new();
    for variant in PromptVariant::ALL {
        for k in [1, 2] {
            let spec = PromptSpec::new(variant, k, "movie");
            let text = build_prompt(&spec, &ctx).unwrap();
            let path = dir.join(format!("{}_k{k}.txt", variant.as_str()));
            if update {
                std::fs::write(&path, &text).unwrap();
            }
            match std::fs::read_to_string(&path) {
                Ok(want) if want == text && build_prompt(&spec, &ctx).unwrap() == text => {}
                Ok(_) => bad.push(format!("{} differs", path.display())),
                Err(e) => bad.push(format!("{}: {e}", path.display())),
            }
        }
    }
    bad
}
