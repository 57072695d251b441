mod common;

use common::*;
use serde_json::{json, Value};

#[tokio::test]
async fn locations_are_distinct_and_start_empty() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(config(dir.path())).await;
    let client = reqwest::Client::new();
    let a = create(&client, &server, "kitchen").await;
    let b = create(&client, &server, "kitchen").await;
    assert_ne!(a, b);
    let view: Value = client.get(server.url(&format!("/locations/{a}"))).send().await.unwrap().json().await.unwrap();
    assert_eq!(view["name"], "kitchen");
    assert_eq!(view["classes"].as_array().unwrap().len(), 0);
    assert!(view["model"].is_null());
    let r = client.post(server.url("/locations")).json(&json!({ "name": "  " })).send().await.unwrap();
    assert_eq!(r.status(), 400);
    let r = client.get(server.url("/locations/nope")).send().await.unwrap();
    assert_eq!(r.status(), 404);
    assert_eq!(r.json::<Value>().await.unwrap()["error"]["kind"], "UnknownLocation");
}

#[tokio::test]
async fn rerecording_replaces_a_sample() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(config(dir.path())).await;
    let client = reqwest::Client::new();
    let id = create(&client, &server, "hall").await;
    let mut ids = Vec::new();
    for k in 0..5 {
        let r: Value = add_sample(&client, &server, &id, "doorbell", class_audio(1, 1.0, k)).await.json().await.unwrap();
        assert_eq!(r["count"], k + 1);
        ids.push(r["sample_id"].as_str().unwrap().to_string());
    }
    let view: Value = client.get(server.url(&format!("/locations/{id}"))).send().await.unwrap().json().await.unwrap();
    assert_eq!(view["classes"][0]["complete"], true);
    let r = add_sample(&client, &server, &id, "doorbell", class_audio(1, 1.0, 9)).await;
    assert_eq!(r.status(), 400);

    let url = server.url(&format!("/locations/{id}/classes/doorbell/samples/{}", ids[2]));
    let before = client.get(&url).send().await.unwrap().bytes().await.unwrap();
    assert_eq!(client.delete(&url).send().await.unwrap().status(), 204);
    assert_eq!(client.get(&url).send().await.unwrap().status(), 404);
    let r: Value = add_sample(&client, &server, &id, "doorbell", class_audio(1, 1.0, 42)).await.json().await.unwrap();
    assert_eq!(r["count"], 5);
    let new_url = server.url(&format!("/locations/{id}/classes/doorbell/samples/{}", r["sample_id"].as_str().unwrap()));
    let after = client.get(&new_url).send().await.unwrap().bytes().await.unwrap();
    assert_ne!(before, after);
    assert_eq!(&after[..4], b"RIFF");
}

#[tokio::test]
async fn training_preconditions() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(config(dir.path())).await;
    let client = reqwest::Client::new();
    let id = create(&client, &server, "office").await;
    for k in 0..5 {
        add_sample(&client, &server, &id, "a", class_audio(1, 1.0, k)).await;
    }
    let train_err = |body: Value| body["error"]["kind"].as_str().unwrap().to_string();
    let r = client.post(server.url(&format!("/locations/{id}/train"))).send().await.unwrap();
    assert_eq!(r.status(), 409);
    assert_eq!(train_err(r.json().await.unwrap()), "IncompleteClasses");
    for k in 0..3 {
        add_sample(&client, &server, &id, "b", class_audio(2, 1.0, k)).await;
    }
    let r = client.post(server.url(&format!("/locations/{id}/train"))).send().await.unwrap();
    assert_eq!(train_err(r.json().await.unwrap()), "IncompleteClasses");
    for k in 3..5 {
        add_sample(&client, &server, &id, "b", class_audio(2, 1.0, k)).await;
    }
    let r = client.post(server.url(&format!("/locations/{id}/train"))).send().await.unwrap();
    assert_eq!(train_err(r.json().await.unwrap()), "MissingSoundscape");
    let r = client
        .post(server.url(&format!("/locations/{id}/ambient")))
        .body(b"not a wav".to_vec())
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 400);
    assert_eq!(train_err(r.json().await.unwrap()), "BadAudio");
    let r = client
        .post(server.url(&format!("/locations/{id}/ambient")))
        .body(wav(vec![0.01; 16_000]))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 200);
    // One second of ambient is too short to draw crops from.
    let r = client.post(server.url(&format!("/locations/{id}/train"))).send().await.unwrap();
    assert_eq!(train_err(r.json().await.unwrap()), "MissingSoundscape");
    let r = client
        .post(server.url(&format!("/locations/{id}/ambient")))
        .body(wav(vec![0.01; 48_000]))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 200);
    let body = train(&client, &server, &id).await;
    assert!(body["training_ms"].as_f64().unwrap() > 0.0);
    assert!(body["model_version"].as_str().unwrap().starts_with("1-"));
    assert_eq!(body["class_names"], json!(["a", "b"]));
    assert_eq!(body["augmented"], 0);
}

#[tokio::test]
async fn library_classes_draw_five_recordings() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("library");
    std::fs::create_dir_all(lib.join("fire_alarm")).unwrap();
    for k in 0..4 {
        std::fs::write(lib.join("fire_alarm").join(format!("{k}.wav")), wav(class_audio(7, 2.0, k))).unwrap();
    }
    let mut cfg = config(&dir.path().join("state"));
    cfg.library_dir = Some(lib);
    let server = start(cfg).await;
    let client = reqwest::Client::new();
    let lib_view: Value = client.get(server.url("/library")).send().await.unwrap().json().await.unwrap();
    assert_eq!(lib_view["classes"], json!(["fire alarm"]));
    let id = create(&client, &server, "flat").await;
    let r = client
        .post(server.url(&format!("/locations/{id}/library-classes")))
        .json(&json!({ "class": "Fire Alarm" }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 201);
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["class"], "fire alarm");
    assert_eq!(body["sample_ids"].as_array().unwrap().len(), 5);
    let r = client
        .post(server.url(&format!("/locations/{id}/library-classes")))
        .json(&json!({ "class": "siren" }))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 404);
    assert_eq!(r.json::<Value>().await.unwrap()["error"]["kind"], "UnknownLibraryClass");

    populate(&client, &server, &id, &[1]).await;
    let body = train(&client, &server, &id).await;
    // Library recordings are always mixed with the location's soundscape.
    assert_eq!(body["augmented"], 5);
}

#[tokio::test]
async fn export_import_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(config(dir.path())).await;
    let client = reqwest::Client::new();
    let id = create(&client, &server, "garage").await;
    let r = client.get(server.url(&format!("/locations/{id}/export"))).send().await.unwrap();
    assert_eq!(r.status(), 409);
    populate(&client, &server, &id, &[1, 2, 3]).await;
    train(&client, &server, &id).await;
    let exported = client.get(server.url(&format!("/locations/{id}/export"))).send().await.unwrap().bytes().await.unwrap();
    assert_eq!(&exported[..4], b"PSND");

    let r = client.post(server.url("/locations/import")).body(exported.clone()).send().await.unwrap();
    assert_eq!(r.status(), 201);
    let imported: Value = r.json().await.unwrap();
    assert_eq!(imported["name"], "garage");
    let new_id = imported["id"].as_str().unwrap();
    assert_ne!(new_id, id);
    let again = client.get(server.url(&format!("/locations/{new_id}/export"))).send().await.unwrap().bytes().await.unwrap();
    assert_eq!(exported, again);

    let mut bad = exported.to_vec();
    bad[0] = b'X';
    let r = client.post(server.url("/locations/import")).body(bad).send().await.unwrap();
    assert_eq!(r.status(), 400);
    assert_eq!(r.json::<Value>().await.unwrap()["error"]["kind"], "VersionMismatch");
}

#[tokio::test]
async fn import_refuses_a_foreign_embedder() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(config(dir.path())).await;
    let other = earshot_core::fewshot::Encoder::new(earshot_core::EmbedderModel::init(Default::default()).unwrap());
    let mut support = earshot_core::SupportSet::new(None);
    for c in 0..2 {
        let segs = (0..2)
            .map(|k| earshot_core::Segment::new(class_audio(c, 1.0, k), "x", 0.0))
            .collect();
        support.add_class(format!("c{c}"), earshot_core::fewshot::Origin::User, segs);
    }
    let ambient = earshot_core::AudioClip::canonical(vec![0.0; 32_000], "a");
    let model = earshot_core::fewshot::train_location("x", &support, &ambient, &other, &Default::default())
        .unwrap()
        .model;
    let r = reqwest::Client::new()
        .post(server.url("/locations/import"))
        .body(model.to_bytes())
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 400);
    assert_eq!(r.json::<Value>().await.unwrap()["error"]["kind"], "VersionMismatch");
}
