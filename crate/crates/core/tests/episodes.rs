use earshot_core::eval::{
    generate_synthetic_corpus, sample_episodes, EpisodeSpec, EvalReport, Evaluator, Method, RunConfig, SynthSpec,
};
use earshot_core::nn::TrainScope;
use earshot_core::{EmbedderConfig, EmbedderModel};

fn embedder() -> EmbedderModel {
    EmbedderModel::init(EmbedderConfig { conv_channels: vec![4], embed_dim: 8, normalize: false, seed: 1 }).unwrap()
}

#[test]
fn default_protocol_shape() {
    let corpus = generate_synthetic_corpus(&SynthSpec::clean(7, 20, 2)).unwrap();
    let spec = EpisodeSpec::default();
    let episodes = sample_episodes(&corpus, &spec).unwrap();
    assert_eq!(episodes.len(), 100);
    for ep in &episodes {
        assert_eq!(ep.classes.len(), 5);
        assert_eq!(ep.support_len(), 25);
        assert_eq!(ep.query_len(), 75);
        let mut all: Vec<usize> = ep.support.iter().chain(&ep.queries).flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 100, "support and queries overlap in task {}", ep.task);
        for (c, class) in ep.classes.iter().enumerate() {
            assert!(ep.support[c].iter().chain(&ep.queries[c]).all(|&i| &corpus.clips[i].class == class));
        }
    }
    // Tasks differ from each other.
    assert!(episodes.windows(2).any(|w| w[0].classes != w[1].classes || w[0].support != w[1].support));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let corpus = generate_synthetic_corpus(&SynthSpec::context_shift(5, 6, 3)).unwrap();
    let spec = EpisodeSpec {
        n_way: 3,
        k_shot: 2,
        queries_per_way: 3,
        n_tasks: 5,
        seed: 8,
        support_context: Some("quiet".into()),
    };
    let run = || {
        let episodes = sample_episodes(&corpus, &spec).unwrap();
        let mut config = RunConfig::default();
        config.finetune.epochs = 2;
        let eval = Evaluator::new(&corpus, embedder(), config);
        let results = eval.run(&Method::ALL, &episodes).unwrap();
        let report = EvalReport::build(&embedder().version_hash(), &spec, &episodes, &results, TrainScope::Full).unwrap();
        (report.to_json(), report.to_text())
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let parsed: EvalReport = serde_json::from_str(&a.0).unwrap();
    assert_eq!(parsed.to_json(), a.0);
}
