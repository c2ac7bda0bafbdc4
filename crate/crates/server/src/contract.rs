//! Scripted client for the service contract.
//!
//! Drives a router in-process through the full workflow (upload, replace
//! image, recommend, recolor, favorite) and the documented 4xx cases. Every
//! response body is validated against the schema in [`crate::OPENAPI`] for
//! its path, method and status.

use std::collections::HashMap;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use base64::Engine;
use chromaseq::color::Vocabulary;
use chromaseq::{GraphicDocument, RasterImage, Rgb};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

struct Client {
    router: Router,
    openapi: Value,
    validators: HashMap<String, jsonschema::Validator>,
}

struct Reply {
    status: StatusCode,
    body: Value,
}

type Check = Result<(), String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

impl Client {
    fn new(router: Router) -> Self {
        Self {
            router,
            openapi: serde_json::from_str(crate::OPENAPI).expect("bundled schema is JSON"),
            validators: HashMap::new(),
        }
    }

    /// Sends a request; the reply must match the schema for `template`.
    async fn call(&mut self, method: Method, template: &str, uri: &str, content_type: &str, body: Vec<u8>) -> Result<Reply, String> {
        let req = Request::builder()
            .method(method.clone())
            .uri(uri)
            .header("content-type", content_type)
            .body(Body::from(body))
            .map_err(|e| e.to_string())?;
        let resp = self.router.clone().oneshot(req).await.map_err(|e| e.to_string())?;
        let status = resp.status();
        let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
        let body: Value = serde_json::from_slice(&bytes).map_err(|e| format!("{method} {uri}: body is not JSON: {e}"))?;
        self.validate(&method, template, status, &body).map_err(|e| format!("{method} {uri} -> {status}: {e}"))?;
        Ok(Reply { status, body })
    }

    async fn json(&mut self, method: Method, template: &str, uri: &str, body: Value) -> Result<Reply, String> {
        self.call(method, template, uri, "application/json", body.to_string().into_bytes()).await
    }

    async fn get(&mut self, template: &str, uri: &str) -> Result<Reply, String> {
        self.call(Method::GET, template, uri, "application/json", Vec::new()).await
    }

    fn validate(&mut self, method: &Method, template: &str, status: StatusCode, body: &Value) -> Check {
        let schema = &self.openapi["paths"][template][method.as_str().to_lowercase()]["responses"][status.as_str()]["content"]["application/json"]["schema"]["$ref"];
        let Some(r) = schema.as_str() else {
            return Err("status not documented for this endpoint".into());
        };
        if !self.validators.contains_key(r) {
            let mut root = self.openapi.clone();
            root["$ref"] = json!(r);
            let v = jsonschema::validator_for(&root).map_err(|e| format!("schema {r}: {e}"))?;
            self.validators.insert(r.to_string(), v);
        }
        let errors: Vec<String> = self.validators[r].iter_errors(body).map(|e| format!("{} at {}", e, e.instance_path)).collect();
        ensure(errors.is_empty(), || format!("does not match {r}: {}", errors.join("; ")))
    }
}

fn expect_status(r: &Reply, want: StatusCode) -> Check {
    ensure(r.status == want, || format!("expected {want}, got {} with {}", r.status, r.body))
}

fn decode_preview(uri: &Value) -> Result<RasterImage, String> {
    let s = uri.as_str().ok_or("preview is not a string")?;
    let b64 = s.strip_prefix("data:image/png;base64,").ok_or("preview is not a PNG data URI")?;
    let bytes = base64::engine::general_purpose::STANDARD.decode(b64).map_err(|e| e.to_string())?;
    RasterImage::decode_png(&bytes).map_err(|e| e.to_string())
}

fn max_channel_diff(a: &RasterImage, b: &RasterImage) -> Option<u8> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return None;
    }
    Some(
        a.pixels()
            .iter()
            .zip(b.pixels())
            .map(|(p, q)| p.r.abs_diff(q.r).max(p.g.abs_diff(q.g)).max(p.b.abs_diff(q.b)))
            .max()
            .unwrap_or(0),
    )
}

fn image_elements(doc: &Value) -> Vec<Value> {
    doc["elements"]
        .as_array()
        .map(|els| els.iter().filter(|e| e["kind"] == "imageElement" || e["kind"] == "maskElement").cloned().collect())
        .unwrap_or_default()
}

struct Run<'a> {
    client: Client,
    results: Vec<CaseResult>,
    sample: &'a GraphicDocument,
    vocab: &'a Vocabulary,
}

impl Run<'_> {
    fn record(&mut self, name: &'static str, outcome: Check) {
        self.results.push(CaseResult { name, outcome });
    }

    async fn upload(&mut self) -> Result<(String, Value), String> {
        let r = self.client.json(Method::POST, "/documents", "/documents", self.sample.to_json_value()).await?;
        expect_status(&r, StatusCode::OK)?;
        Ok((r.body["id"].as_str().ok_or("no id")?.to_string(), r.body["palettes"].clone()))
    }
}

/// Runs every contract case against `router`.
///
/// `sample` needs an `imageElement` with id `photo`, a non-image element
/// with id `badge`, and fewer than five svg colors; `vocab` is the served
/// model's vocabulary.
pub async fn run_contract_suite(router: Router, sample: &GraphicDocument, vocab: &Vocabulary) -> Vec<CaseResult> {
    let mut run = Run {
        client: Client::new(router),
        results: Vec::new(),
        sample,
        vocab,
    };
    let r = happy_path(&mut run).await;
    run.record("happy path: upload, replace image, recommend top-3, recolor, favorite", r);
    error_cases(&mut run).await;
    run.results
}

async fn happy_path(run: &mut Run<'_>) -> Check {
    let c = &mut run.client;
    let r = c.get("/health", "/health").await?;
    expect_status(&r, StatusCode::OK)?;

    let (id, palettes) = run.upload().await?;
    let (other, _) = run.upload().await?;
    ensure(id != other, || "re-upload reused the id".into())?;
    for g in ["image", "svg", "text"] {
        ensure(palettes[g].as_array().is_some_and(|p| !p.is_empty()), || format!("{g} palette empty"))?;
    }
    let c = &mut run.client;
    let doc_uri = format!("/documents/{id}");
    let before = c.get("/documents/{id}", &doc_uri).await?;
    expect_status(&before, StatusCode::OK)?;

    // replace the photo with a two-tone image
    let px: Vec<Rgb> = (0..64).map(|i| if i < 40 { Rgb::new(180, 40, 60) } else { Rgb::new(250, 250, 240) }).collect();
    let png = RasterImage::new(8, 8, px).map_err(|e| e.to_string())?.encode_png();
    let r = c
        .call(Method::PUT, "/documents/{id}/elements/{eid}/image", &format!("/documents/{id}/elements/photo/image"), "image/png", png)
        .await?;
    expect_status(&r, StatusCode::OK)?;
    ensure(r.body["palettes"]["image"] != palettes["image"], || "image palette did not change".into())?;
    ensure(r.body["palettes"]["svg"] == palettes["svg"], || "svg palette changed on image swap".into())?;

    // top-3 for one slot, deterministic
    let rec_uri = format!("/documents/{id}/recommend");
    let req = json!({"slots": ["svg:0"], "n": 3});
    let r = c.json(Method::POST, "/documents/{id}/recommend", &rec_uri, req.clone()).await?;
    expect_status(&r, StatusCode::OK)?;
    let cands = r.body["recommendations"][0]["candidates"].as_array().cloned().unwrap_or_default();
    let ranks: Vec<_> = cands.iter().map(|c| c["rank"].as_u64()).collect();
    ensure(ranks == [Some(1), Some(2), Some(3)], || format!("ranks {ranks:?}"))?;
    let again = c.json(Method::POST, "/documents/{id}/recommend", &rec_uri, req).await?;
    ensure(again.body == r.body, || "recommendation not deterministic".into())?;

    let n_svg = palettes["svg"].as_array().map_or(0, Vec::len);
    let all: Vec<String> = (0..n_svg).map(|i| format!("svg:{i}")).collect();
    let multi = c.json(Method::POST, "/documents/{id}/recommend", &rec_uri, json!({"slots": all, "n": 3})).await?;
    expect_status(&multi, StatusCode::OK)?;
    ensure(multi.body["recommendations"].as_array().map(Vec::len) == Some(n_svg), || "one recommendation per slot".into())?;

    // identity recolor: preview equal to a fresh render of the current state
    let cur = c.get("/documents/{id}", &doc_uri).await?;
    let current_code = cur.body["palettes"]["svg"][0]["code"].clone();
    let recolor_uri = format!("/documents/{id}/recolor");
    let ident = c.json(Method::POST, "/documents/{id}/recolor", &recolor_uri, json!({"slot": "svg:0", "code": current_code})).await?;
    expect_status(&ident, StatusCode::OK)?;
    ensure(ident.body["document"] == cur.body["document"], || "identity recolor changed the document".into())?;
    let current_doc = GraphicDocument::parse(cur.body["document"].to_string().as_bytes()).map_err(|e| e.to_string())?;
    let rendered = chromaseq::document::render_preview(&current_doc);
    let diff = max_channel_diff(&decode_preview(&ident.body["preview"])?, &rendered);
    ensure(diff.is_some_and(|d| d <= 1), || format!("identity preview differs by {diff:?}"))?;

    // real recolor with a recommended code
    let pick = cands.iter().find(|c| c["code"] != current_code).ok_or("every candidate is the current code")?;
    let r = c.json(Method::POST, "/documents/{id}/recolor", &recolor_uri, json!({"slot": "svg:0", "code": pick["code"]})).await?;
    expect_status(&r, StatusCode::OK)?;
    ensure(image_elements(&r.body["document"]) == image_elements(&cur.body["document"]), || "svg edit touched a raster".into())?;
    ensure(r.body["document"] != cur.body["document"], || "recolor changed nothing".into())?;
    let preview = decode_preview(&r.body["preview"])?;
    ensure((preview.width(), preview.height()) == (run.sample.width, run.sample.height), || "preview size".into())?;

    // favorites: mark twice, list once
    let fav_uri = format!("/documents/{id}/favorites");
    let m1 = c.json(Method::POST, "/documents/{id}/favorites", &fav_uri, json!({})).await?;
    expect_status(&m1, StatusCode::OK)?;
    let m2 = c.json(Method::POST, "/documents/{id}/favorites", &fav_uri, json!({})).await?;
    ensure(m1.body["created"] == true && m2.body["created"] == false, || "re-mark was not idempotent".into())?;
    let list = c.get("/documents/{id}/favorites", &fav_uri).await?;
    expect_status(&list, StatusCode::OK)?;
    ensure(list.body["favorites"].as_array().map(Vec::len) == Some(1), || format!("favorites {}", list.body))?;
    let snap = c.json(Method::POST, "/documents/{id}/favorites", &fav_uri, json!({"snapshot": run.sample.to_json_value()})).await?;
    ensure(snap.body["created"] == true && snap.body["count"] == 2, || format!("snapshot mark {}", snap.body))?;

    // the second session saw none of this
    let o = c.get("/documents/{id}", &format!("/documents/{other}")).await?;
    ensure(o.body["document"] == run.sample.to_json_value(), || "sessions interfered".into())?;
    let of = c.get("/documents/{id}/favorites", &format!("/documents/{other}/favorites")).await?;
    ensure(of.body["favorites"].as_array().is_some_and(Vec::is_empty), || "favorites leaked across sessions".into())
}

async fn error_cases(run: &mut Run<'_>) {
    let setup = run.upload().await;
    let (id, palettes) = match setup {
        Ok(v) => v,
        Err(e) => {
            run.record("error cases: setup upload", Err(e));
            return;
        }
    };
    let ghost = "00000000-0000-4000-8000-000000000000";
    let n_svg = palettes["svg"].as_array().map_or(0, Vec::len);
    let out_of_vocab = chromaseq::VocabConfig::default()
        .all_codes()
        .find(|c| !run.vocab.contains(*c) && palettes["svg"].as_array().is_none_or(|p| p.iter().all(|e| e["code"] != c.to_string())))
        .map(|c| c.to_string());
    let png = RasterImage::solid(2, 2, Rgb::BLACK).expect("raster").encode_png();

    type Case = (&'static str, Method, &'static str, String, &'static str, Vec<u8>, StatusCode, Option<&'static str>);
    let j = |v: Value| v.to_string().into_bytes();
    let mut cases: Vec<Case> = vec![
        ("upload: malformed JSON -> 400", Method::POST, "/documents", "/documents".into(), "application/json", b"{\"canvas\":".to_vec(), StatusCode::BAD_REQUEST, None),
        (
            "upload: invalid document -> 400 with path",
            Method::POST,
            "/documents",
            "/documents".into(),
            "application/json",
            j(json!({"canvas": {"width": 10, "height": 10}, "elements": [{"id": "a", "kind": "svgElement", "position": {"x": 0, "y": 0}, "size": {"w": 1, "h": 1}, "colors": ["nope"]}]})),
            StatusCode::BAD_REQUEST,
            Some("elements[0].colors[0]"),
        ),
        ("document: unknown id -> 404", Method::GET, "/documents/{id}", format!("/documents/{ghost}"), "application/json", vec![], StatusCode::NOT_FOUND, None),
        ("image: unknown document -> 404", Method::PUT, "/documents/{id}/elements/{eid}/image", format!("/documents/{ghost}/elements/photo/image"), "image/png", png.clone(), StatusCode::NOT_FOUND, None),
        ("image: unknown element -> 404", Method::PUT, "/documents/{id}/elements/{eid}/image", format!("/documents/{id}/elements/nope/image"), "image/png", png.clone(), StatusCode::NOT_FOUND, None),
        ("image: wrong element kind -> 409", Method::PUT, "/documents/{id}/elements/{eid}/image", format!("/documents/{id}/elements/badge/image"), "image/png", png, StatusCode::CONFLICT, None),
        ("image: not a PNG -> 400", Method::PUT, "/documents/{id}/elements/{eid}/image", format!("/documents/{id}/elements/photo/image"), "image/png", b"GIF89a".to_vec(), StatusCode::BAD_REQUEST, None),
        ("recommend: PAD slot -> 422", Method::POST, "/documents/{id}/recommend", format!("/documents/{id}/recommend"), "application/json", j(json!({"slots": [format!("svg:{n_svg}")]})), StatusCode::UNPROCESSABLE_ENTITY, None),
        ("recommend: bad slot name -> 422", Method::POST, "/documents/{id}/recommend", format!("/documents/{id}/recommend"), "application/json", j(json!({"slots": ["video:0"]})), StatusCode::UNPROCESSABLE_ENTITY, None),
        ("recommend: n = 0 -> 422", Method::POST, "/documents/{id}/recommend", format!("/documents/{id}/recommend"), "application/json", j(json!({"slots": ["svg:0"], "n": 0})), StatusCode::UNPROCESSABLE_ENTITY, None),
        ("recommend: malformed body -> 400", Method::POST, "/documents/{id}/recommend", format!("/documents/{id}/recommend"), "application/json", j(json!({"slot": "svg:0"})), StatusCode::BAD_REQUEST, None),
        ("recommend: unknown document -> 404", Method::POST, "/documents/{id}/recommend", format!("/documents/{ghost}/recommend"), "application/json", j(json!({"slots": ["svg:0"]})), StatusCode::NOT_FOUND, None),
        ("recolor: invalid code -> 422", Method::POST, "/documents/{id}/recolor", format!("/documents/{id}/recolor"), "application/json", j(json!({"slot": "svg:0", "code": "99_0_0"})), StatusCode::UNPROCESSABLE_ENTITY, None),
        ("recolor: PAD slot -> 422", Method::POST, "/documents/{id}/recolor", format!("/documents/{id}/recolor"), "application/json", j(json!({"slot": "svg:4", "code": "8_8_8"})), StatusCode::UNPROCESSABLE_ENTITY, None),
        ("recolor: unknown document -> 404", Method::POST, "/documents/{id}/recolor", format!("/documents/{ghost}/recolor"), "application/json", j(json!({"slot": "svg:0", "code": "8_8_8"})), StatusCode::NOT_FOUND, None),
        ("favorites: mark on unknown document -> 404", Method::POST, "/documents/{id}/favorites", format!("/documents/{ghost}/favorites"), "application/json", j(json!({})), StatusCode::NOT_FOUND, None),
        ("favorites: list on unknown document -> 404", Method::GET, "/documents/{id}/favorites", format!("/documents/{ghost}/favorites"), "application/json", vec![], StatusCode::NOT_FOUND, None),
        ("favorites: invalid snapshot -> 400", Method::POST, "/documents/{id}/favorites", format!("/documents/{id}/favorites"), "application/json", j(json!({"snapshot": {"canvas": {}}})), StatusCode::BAD_REQUEST, None),
    ];
    if let Some(code) = out_of_vocab {
        cases.push((
            "recolor: code outside the vocabulary -> 422",
            Method::POST,
            "/documents/{id}/recolor",
            format!("/documents/{id}/recolor"),
            "application/json",
            j(json!({"slot": "svg:0", "code": code})),
            StatusCode::UNPROCESSABLE_ENTITY,
            None,
        ));
    }
    for (name, method, template, uri, ct, body, want, path) in cases {
        let outcome = async {
            let r = run.client.call(method, template, &uri, ct, body).await?;
            expect_status(&r, want)?;
            if let Some(p) = path {
                ensure(r.body["error"]["path"] == p, || format!("error path {} (wanted {p})", r.body["error"]["path"]))?;
            }
            Ok(())
        }
        .await;
        run.record(name, outcome);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validator_rejects_off_schema_bodies() {
        let mut c = Client::new(Router::new());
        let ok = json!({"status": "ok", "vocab_size": 40, "sessions": 0});
        assert!(c.validate(&Method::GET, "/health", StatusCode::OK, &ok).is_ok());
        let extra = json!({"status": "ok", "vocab_size": 40, "sessions": 0, "x": 1});
        assert!(c.validate(&Method::GET, "/health", StatusCode::OK, &extra).is_err());
        let err = json!({"error": {"status": 404, "kind": "document_not_found", "message": "gone"}});
        assert!(c.validate(&Method::GET, "/documents/{id}", StatusCode::NOT_FOUND, &err).is_ok());
        // nested refs are followed
        let bad = json!({"id": "x", "palettes": {"image": [{"hex": "red", "code": "1_2_3", "weight": 1.0}], "svg": [], "text": []}});
        assert!(c.validate(&Method::POST, "/documents", StatusCode::OK, &bad).is_err());
        // undocumented status
        assert!(c.validate(&Method::GET, "/health", StatusCode::IM_A_TEAPOT, &ok).is_err());
    }
}
