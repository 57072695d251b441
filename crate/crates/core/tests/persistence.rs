use earshot_core::audio::segment_one_second;
use earshot_core::container::{ContainerError, FORMAT_VERSION};
use earshot_core::eval::{generate_synthetic_corpus, SynthSpec};
use earshot_core::fewshot::{train_location, Encoder, FewShotError, LocationConfig, Origin, SupportSet};
use earshot_core::{EmbedderConfig, EmbedderModel, LocationModel};

fn embedder() -> EmbedderModel {
    EmbedderModel::init(EmbedderConfig { conv_channels: vec![8, 16], embed_dim: 16, normalize: false, seed: 3 }).unwrap()
}

/// A six-class location model trained on quiet recordings for the noisy
/// context, plus 100 held-back query clips.
fn fixture(encoder: &Encoder) -> (LocationModel, Vec<earshot_core::AudioClip>) {
    let corpus = generate_synthetic_corpus(&SynthSpec::context_shift(6, 12, 5)).unwrap();
    let mut support = SupportSet::new(Some(corpus.ambients["quiet"].clone()));
    let mut used = Vec::new();
    for (class, idx) in corpus.by_class() {
        let quiet: Vec<usize> = idx.into_iter().filter(|&i| corpus.clips[i].context == "quiet").take(5).collect();
        let segments = quiet.iter().map(|&i| segment_one_second(&corpus.clips[i].clip).unwrap().swap_remove(0)).collect();
        used.extend(quiet);
        support.add_class(class, Origin::User, segments);
    }
    let config = LocationConfig { seed: 9, ..LocationConfig::default() };
    let trained = train_location("kitchen", &support, &corpus.ambients["noisy"], encoder, &config).unwrap();
    assert_eq!(trained.augmented, 30);
    let queries = (0..corpus.clips.len())
        .filter(|i| !used.contains(i))
        .take(100)
        .map(|i| corpus.clips[i].clip.clone())
        .collect::<Vec<_>>();
    assert_eq!(queries.len(), 100);
    (trained.model, queries)
}

#[test]
fn embedder_round_trip_is_byte_exact() {
    let m = embedder();
    let bytes = m.to_bytes();
    let back = EmbedderModel::from_bytes(&bytes).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.to_bytes(), bytes);
    assert_eq!(back.version_hash(), m.version_hash());
}

#[test]
fn location_export_import_export_and_replay() {
    let encoder = Encoder::new(embedder());
    let (model, queries) = fixture(&encoder);
    let exported = model.to_bytes();
    let imported = LocationModel::from_bytes(&exported).unwrap();
    assert_eq!(imported.to_bytes(), exported);
    assert_eq!(imported, model);
    for q in &queries {
        let a = model.predict_clip(&encoder, q).unwrap();
        let b = imported.predict_clip(&encoder, q).unwrap();
        assert_eq!(a, b, "{}", q.source_id);
    }
}

#[test]
fn damaged_containers_are_rejected() {
    let encoder = Encoder::new(embedder());
    let bytes = fixture(&encoder).0.to_bytes();

    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(
        LocationModel::from_bytes(&magic),
        Err(FewShotError::Container(ContainerError::VersionMismatch(_)))
    ));

    let mut version = bytes.clone();
    version[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    assert!(matches!(
        LocationModel::from_bytes(&version),
        Err(FewShotError::Container(ContainerError::VersionMismatch(_)))
    ));

    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(LocationModel::from_bytes(&bytes[..cut]).is_err(), "truncated at {cut}");
    }
    // An embedder file is not a location model.
    assert!(LocationModel::from_bytes(&embedder().to_bytes()).is_err());
}

#[test]
fn prediction_refuses_a_different_embedder() {
    let encoder = Encoder::new(embedder());
    let (model, queries) = fixture(&encoder);
    let other = Encoder::new(EmbedderModel::init(EmbedderConfig { seed: 4, ..embedder().config }).unwrap());
    assert!(matches!(
        model.predict_clip(&other, &queries[0]),
        Err(FewShotError::VersionMismatch { .. })
    ));
}
