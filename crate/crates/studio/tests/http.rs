mod common;

use axum::http::StatusCode;
use serde_json::json;

use common::*;
use custom_tokens::encoder::encode_image;
use custom_tokens::trainer::TokenArtifact;
use custom_tokens_studio::api;

#[tokio::test(flavor = "multi_thread")]
async fn malformed_bodies_are_rejected_with_400() {
    let studio = studio(5);
    let app = api::router(studio.clone());
    let image = png_b64(&concept_images(1)[0]);
    let cases = [
        ("/concepts", "{not json".to_string()),
        ("/concepts", json!({"parent": "square"}).to_string()),
        ("/concepts", json!({"parent": "square", "images": [], "colour": 1}).to_string()),
        ("/concepts", json!({"parent": "square", "images": []}).to_string()),
        ("/concepts", json!({"parent": "", "images": [image]}).to_string()),
        ("/concepts", json!({"parent": "square", "images": ["%%%"]}).to_string()),
        ("/concepts", json!({"parent": "square", "images": ["aGVsbG8="]}).to_string()),
        ("/concepts", json!({"parent": "square", "images": [image], "attributes": []}).to_string()),
        ("/queries/compose", json!({"concept_id": "concept-000001", "weight": 1.5}).to_string()),
        ("/queries/compose", json!({"concept_id": "concept-000001", "weight": 0.5}).to_string()),
        ("/queries/compose", json!({"weight": 1.0}).to_string()),
        ("/queries/retrieve", json!({"index_id": "ab", "text": "a", "feature": [1.0]}).to_string()),
        ("/queries/gair", json!({"concept_id": "concept-000001", "attributes": "red"}).to_string()),
        ("/queries/preview", json!({"query": {"concept_id": "c"}, "count": "four"}).to_string()),
        ("/indexes", json!({"items": [{"id": "x"}]}).to_string()),
        ("/indexes", json!({"items": []}).to_string()),
    ];
    for (uri, body) in cases {
        let (status, bytes) = call_raw(&app, "POST", uri, Some(body.clone().into_bytes())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri} {body}: {}", String::from_utf8_lossy(&bytes));
        let err: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        assert!(err["error"].is_string() && err["message"].is_string(), "{err}");
    }
    let (status, _) = call(&app, "POST", "/concepts/concept-000001/train", Some(json!({"iterations": "many"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_ids_are_404() {
    let studio = studio(5);
    let app = api::router(studio);
    for uri in [
        "/concepts/concept-000042",
        "/jobs/job-000042",
        "/indexes/abc123",
        "/images/abc",
        "/previews/abc",
        "/schema/Nope",
        "/nowhere",
        "/concepts/..%2Fetc",
    ] {
        let (status, _) = call(&app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
    let (status, body) = call(&app, "POST", "/concepts/concept-000042/train", Some(json!({}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{body}");
    let (status, _) = call(&app, "POST", "/queries/compose", Some(json!({"concept_id": "concept-000042"}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn second_train_job_on_a_concept_is_409() {
    let studio = studio(400);
    let app = api::router(studio);
    let images: Vec<String> = concept_images(2).iter().map(png_b64).collect();
    let (_, concept) = call(
        &app,
        "POST",
        "/concepts",
        Some(json!({"parent": "square", "images": images, "attributes": ["red", "blue", "teal"]})),
    )
    .await;
    let uri = format!("/concepts/{}/train", concept["id"].as_str().unwrap());
    let (status, first) = call(&app, "POST", &uri, Some(json!({"lambda_ce": 0.0}))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let (status, body) = call(&app, "POST", &uri, Some(json!({}))).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert_eq!(body["error"], "concept_busy");
    let done = wait_for_job(&app, first["id"].as_str().unwrap()).await;
    assert_eq!(done["state"], "done");
    let (status, _) = call(&app, "POST", &uri, Some(json!({"iterations": 1, "lambda_ce": 0.0}))).await;
    assert_eq!(status, StatusCode::ACCEPTED, "a finished job frees the concept");
}

#[tokio::test(flavor = "multi_thread")]
async fn training_job_yields_a_round_tripping_artifact() {
    let t = trained().await;
    let (_, concept) = call(&t.app, "GET", &format!("/concepts/{}", t.concept_id), None).await;
    let hash = concept["token"].as_str().unwrap();
    let path = t.studio.store.token_path(hash);
    let text = std::fs::read_to_string(&path).unwrap();
    let artifact = TokenArtifact::load(&path).unwrap();
    assert_eq!(artifact.to_json().unwrap(), text);
    let token = artifact.token().unwrap();
    assert_eq!(TokenArtifact::new(&token, artifact.subspace().unwrap().as_ref(), artifact.metrics.clone()), artifact);
    assert_eq!(concept["attribute_source"], "selected");
    assert_eq!(concept["attributes"].as_array().unwrap().len(), 30);
}

#[tokio::test(flavor = "multi_thread")]
async fn get_job_is_idempotent() {
    let t = trained().await;
    let (_, job) =
        call(&t.app, "POST", &format!("/concepts/{}/train", t.concept_id), Some(json!({"iterations": 2}))).await;
    let id = job["id"].as_str().unwrap();
    let done = wait_for_job(&t.app, id).await;
    let (_, again) = call(&t.app, "GET", &format!("/jobs/{id}"), None).await;
    let (_, third) = call(&t.app, "GET", &format!("/jobs/{id}"), None).await;
    assert_eq!(done, again);
    assert_eq!(again, third);
    assert_eq!(done["progress"], 1.0);
    assert!(done["result_ref"].as_str().unwrap().starts_with("tokens/"));
}

#[tokio::test(flavor = "multi_thread")]
async fn compose_at_full_weight_is_the_token_only_query() {
    let t = trained().await;
    let body = json!({"concept_id": t.concept_id, "attributes": ["red", "teal"], "weight": 1.0});
    let (status, r) = call(&t.app, "POST", "/queries/compose", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["feature_fingerprint"], r["token_only_fingerprint"]);
    assert_eq!(r["components"]["attributes"].as_array().unwrap().len(), 2);

    let body = json!({"concept_id": t.concept_id, "attributes": ["red", "teal"], "weight": 0.4});
    let (_, mixed) = call(&t.app, "POST", "/queries/compose", Some(body)).await;
    assert_ne!(mixed["feature_fingerprint"], mixed["token_only_fingerprint"]);
    assert_eq!(mixed["token_only_fingerprint"], r["feature_fingerprint"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn preview_images_are_served_as_png() {
    let t = trained().await;
    let body = json!({"query": {"concept_id": t.concept_id}, "count": 3, "seed": 11});
    let (status, r) = call(&t.app, "POST", "/queries/preview", Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK, "{r}");
    let images = r["images"].as_array().unwrap();
    assert_eq!(images.len(), 3);
    assert_eq!(images[2]["seed"], 13);
    let (status, png) = call_raw(&t.app, "GET", images[0]["url"].as_str().unwrap(), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&png[1..4], b"PNG");
    let (_, again) = call(&t.app, "POST", "/queries/preview", Some(body)).await;
    assert_eq!(r, again, "same seed, same previews");
    let (status, _) =
        call(&t.app, "POST", "/queries/preview", Some(json!({"query": {"concept_id": t.concept_id}, "count": 0})))
            .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn retrieve_ranks_the_matching_entry_first() {
    let t = trained().await;
    let images = concept_images(3);
    let items: Vec<_> = ["a", "b", "c"]
        .iter()
        .zip(&images)
        .map(|(id, img)| json!({"id": id, "image": png_b64(img), "label": "toy"}))
        .collect();
    let (status, index) = call(&t.app, "POST", "/indexes", Some(json!({"items": items}))).await;
    assert_eq!(status, StatusCode::CREATED, "{index}");
    let index_id = index["id"].as_str().unwrap();
    let (status, info) = call(&t.app, "GET", &format!("/indexes/{index_id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(info["count"], 3);

    for (k, id) in ["a", "b", "c"].iter().enumerate() {
        let feature = encode_image(t.studio.backbone.image.as_ref(), &images[k]).unwrap().values;
        let body = json!({"index_id": index_id, "feature": feature.as_slice()});
        let (status, r) = call(&t.app, "POST", "/queries/retrieve", Some(body)).await;
        assert_eq!(status, StatusCode::OK, "{r}");
        assert_eq!(r["results"][0]["id"], *id);
        assert_eq!(r["results"][0]["rank"], 1);
        assert_eq!(r["total"], 3);
        let url = r["results"][0]["image_url"].as_str().unwrap();
        assert_eq!(call_raw(&t.app, "GET", url, None).await.0, StatusCode::OK);
    }

    let body = json!({"index_id": index_id, "query": {"concept_id": t.concept_id}, "offset": 1, "limit": 1});
    let (status, r) = call(&t.app, "POST", "/queries/retrieve", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["results"].as_array().unwrap().len(), 1);
    assert_eq!(r["results"][0]["rank"], 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn gair_with_a_singleton_grid_returns_that_weight() {
    let t = trained().await;
    let body =
        json!({"concept_id": t.concept_id, "attributes": ["red"], "weight_grid": [0.5], "previews_per_weight": 2});
    let (status, r) = call(&t.app, "POST", "/queries/gair", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{r}");
    assert_eq!(r["optimal_weight"], 0.5);
    assert_eq!(r["previews"][0].as_array().unwrap().len(), 2);
    assert_eq!(r["context_images"].as_array().unwrap().len(), 2);
    assert!(r["curve_csv"].as_str().unwrap().starts_with("w,score\n0.5,"));

    let body = json!({"concept_id": t.concept_id, "attributes": ["red"], "weight_grid": [0.5, 0.2]});
    let (status, _) = call(&t.app, "POST", "/queries/gair", Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "descending grid");
}

#[tokio::test(flavor = "multi_thread")]
async fn async_gair_embeds_its_result_in_the_job() {
    let t = trained().await;
    let body = json!({"concept_id": t.concept_id, "attributes": ["red", "blue"], "weight_grid": [0.0, 1.0], "previews_per_weight": 1, "async": true});
    let (status, job) = call(&t.app, "POST", "/queries/gair", Some(body.clone())).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{job}");
    assert_eq!(job["kind"], "gair");
    let job = wait_for_job(&t.app, job["id"].as_str().unwrap()).await;
    assert_eq!(job["state"], "done", "{job}");
    let mut sync = body;
    sync["async"] = json!(false);
    let (_, direct) = call(&t.app, "POST", "/queries/gair", Some(sync)).await;
    assert_eq!(job["result"]["per_weight_scores"], direct["per_weight_scores"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn schemas_are_published() {
    let studio = studio(5);
    let app = api::router(studio);
    let (status, names) = call(&app, "GET", "/schema", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(names.as_array().unwrap().iter().any(|n| n == "RetrieveRequest"));
    let (status, schema) = call(&app, "GET", "/schema/IngestRequest", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(schema["properties"]["parent"].is_object());
}

#[tokio::test(flavor = "multi_thread")]
async fn concepts_are_listed_and_manual_attributes_kept() {
    let studio = studio(5);
    let app = api::router(studio);
    let images: Vec<String> = concept_images(2).iter().map(png_b64).collect();
    let body = json!({"parent": "square", "images": images, "attributes": ["teal", "orange"]});
    let (_, a) = call(&app, "POST", "/concepts", Some(body.clone())).await;
    let (_, b) = call(&app, "POST", "/concepts", Some(body)).await;
    assert_ne!(a["id"], b["id"]);
    assert_eq!(a["images"], b["images"], "same content, same hashes");
    assert_eq!(a["attribute_source"], "manual");
    let (_, list) = call(&app, "GET", "/concepts", None).await;
    assert_eq!(list.as_array().unwrap().len(), 2);
}
