//! HTTP front end for tagcube.
//!
//! | method | path | body / params | success |
//! |---|---|---|---|
//! | POST | `/datasets` | delimited text; `name`, `delimiter`, `header` | 201 `{"id",...}` |
//! | POST | `/datasets/{id}/schema` | `{"dimensions":[..],"measures":[..]}` | 200 |
//! | GET | `/datasets/{id}/dimensions` | | 200 |
//! | GET | `/datasets/{id}/cloud` | descriptor fields as query parameters | 200 wire JSON |
//! | DELETE | `/datasets/{id}` | | 204 |
//! | GET | `/c/{token}` | | 200 wire JSON |
//! | GET | `/embed/{token}` | | 200 HTML |
//!
//! Cloud query parameters: `dims=a,b`, `agg`, `measure`, repeated
//! `slice=dim:value`, repeated `dice=dim:v1|v2`, repeated `group=<grouping JSON>`,
//! `k`, `limit`, `exact`, `cluster=a,b`, `similarity`, `heuristic`, `seed`,
//! `buckets`. Errors are `{"error": message}`.

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, RawQuery, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use tagcube_core::cube::GroupingMap;
use tagcube_core::layout::LayoutEntry;
use tagcube_core::{
    bind_schema, parse_table, Aggregator, BoundDataset, CloudEngine, CloudResponse, Error,
    QueryDescriptor, RawTable, Schema,
};
use tower_http::cors::{AllowOrigin, CorsLayer};

pub const PORT_ENV: &str = "TAGCUBE_PORT";
pub const ORIGIN_ENV: &str = "TAGCUBE_UI_ORIGIN";
pub const DEFAULT_PORT: u16 = 8080;
const MAX_UPLOAD: usize = 512 * 1024 * 1024;

struct Entry {
    table: Arc<RawTable>,
    bound: Option<Arc<BoundDataset>>,
}

/// Dataset registry plus the shared cloud engine.
#[derive(Default)]
pub struct AppState {
    datasets: RwLock<HashMap<String, Entry>>,
    engine: CloudEngine,
    next_id: AtomicU64,
}

impl AppState {
    pub fn new(engine: CloudEngine) -> Self {
        AppState {
            datasets: RwLock::default(),
            engine,
            next_id: AtomicU64::new(0),
        }
    }

    pub fn engine(&self) -> &CloudEngine {
        &self.engine
    }

    /// Stores a parsed table; takes `name` as the id when it is free.
    pub fn insert_table(&self, name: Option<&str>, table: RawTable) -> String {
        let mut datasets = self.datasets.write().unwrap();
        let id = match name.map(str::trim).filter(|n| !n.is_empty()) {
            Some(n) if !datasets.contains_key(n) => n.to_string(),
            _ => loop {
                let n = self.next_id.fetch_add(1, Ordering::Relaxed) + 1;
                let id = format!("ds{n}");
                if !datasets.contains_key(&id) {
                    break id;
                }
            },
        };
        datasets.insert(
            id.clone(),
            Entry {
                table: Arc::new(table),
                bound: None,
            },
        );
        id
    }

    pub fn bind(&self, id: &str, schema: &Schema) -> Result<Arc<BoundDataset>, ApiError> {
        let table = {
            let datasets = self.datasets.read().unwrap();
            datasets.get(id).ok_or_else(|| not_found(id))?.table.clone()
        };
        let bound = Arc::new(
            bind_schema(id, table.clone(), &schema.dimensions, &schema.measures)
                .map_err(ApiError::unprocessable)?,
        );
        let mut datasets = self.datasets.write().unwrap();
        match datasets.get_mut(id) {
            // deleted or replaced while binding
            Some(entry) if Arc::ptr_eq(&entry.table, &table) => {
                entry.bound = Some(bound.clone());
            }
            _ => return Err(not_found(id)),
        }
        drop(datasets);
        self.engine.icebergs().evict_dataset(id);
        Ok(bound)
    }

    pub fn bound(&self, id: &str) -> Result<Arc<BoundDataset>, ApiError> {
        let datasets = self.datasets.read().unwrap();
        let entry = datasets.get(id).ok_or_else(|| not_found(id))?;
        entry.bound.clone().ok_or_else(|| ApiError {
            status: StatusCode::CONFLICT,
            message: format!("dataset `{id}` has no schema yet"),
        })
    }

    pub fn remove(&self, id: &str) -> bool {
        let removed = self.datasets.write().unwrap().remove(id).is_some();
        if removed {
            self.engine.icebergs().evict_dataset(id);
        }
        removed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(e: impl ToString) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: e.to_string(),
        }
    }

    fn unprocessable(e: impl ToString) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: e.to_string(),
        }
    }
}

fn not_found(id: &str) -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        message: format!("no dataset `{id}`"),
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.message });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    let origin = match std::env::var(ORIGIN_ENV) {
        Ok(o) => match HeaderValue::from_str(&o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::any(),
        },
        Err(_) => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods(tower_http::cors::Any)
        .allow_headers(tower_http::cors::Any);
    Router::new()
        .route("/datasets", post(upload))
        .route("/datasets/{id}", axum::routing::delete(delete_dataset))
        .route("/datasets/{id}/schema", post(set_schema))
        .route("/datasets/{id}/dimensions", get(dimensions))
        .route("/datasets/{id}/cloud", get(cloud))
        .route("/c/{token}", get(permalink))
        .route("/embed/{token}", get(embed))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .layer(cors)
        .with_state(state)
}

/// Port from `TAGCUBE_PORT`, else 8080.
pub fn port_from_env() -> u16 {
    std::env::var(PORT_ENV)
        .ok()
        .and_then(|p| p.parse().ok())
        .unwrap_or(DEFAULT_PORT)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn parse_bool(key: &str, value: &str) -> ApiResult<bool> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" | "" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ApiError::bad_request(format!("`{key}` must be a boolean"))),
    }
}

fn parse_delimiter(value: &str) -> ApiResult<char> {
    match value {
        "tab" | "\\t" | "\t" => Ok('\t'),
        _ => {
            let mut chars = value.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(ApiError::bad_request("delimiter must be a single character")),
            }
        }
    }
}

#[derive(Serialize)]
struct Uploaded {
    id: String,
    columns: Vec<String>,
    rows: usize,
}

async fn upload(
    State(state): State<Arc<AppState>>,
    RawQuery(query): RawQuery,
    body: Bytes,
) -> ApiResult<impl IntoResponse> {
    let mut name = None;
    let mut delimiter = ',';
    let mut header = true;
    for (k, v) in url::form_urlencoded::parse(query.unwrap_or_default().as_bytes()) {
        match &*k {
            "name" => name = Some(v.into_owned()),
            "delimiter" => delimiter = parse_delimiter(&v)?,
            "header" => header = parse_bool("header", &v)?,
            other => return Err(ApiError::bad_request(format!("unknown parameter `{other}`"))),
        }
    }
    let table = tokio::task::spawn_blocking(move || parse_table(&body, delimiter, header))
        .await
        .map_err(ApiError::bad_request)?
        .map_err(ApiError::bad_request)?;
    let columns = table.columns().to_vec();
    let rows = table.len();
    let id = state.insert_table(name.as_deref(), table);
    log::info!("stored dataset {id} ({rows} rows)");
    Ok((StatusCode::CREATED, Json(Uploaded { id, columns, rows })))
}

#[derive(Serialize)]
struct Bound {
    id: String,
    dimensions: Vec<String>,
    measures: Vec<String>,
    facts: usize,
}

async fn set_schema(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Bound>> {
    let schema: Schema = serde_json::from_slice(&body).map_err(ApiError::unprocessable)?;
    let st = state.clone();
    let bound = tokio::task::spawn_blocking(move || st.bind(&id, &schema))
        .await
        .map_err(ApiError::unprocessable)??;
    Ok(Json(Bound {
        id: bound.id().to_string(),
        dimensions: bound.schema().dimensions.clone(),
        measures: bound.schema().measures.clone(),
        facts: bound.fact_count(),
    }))
}

#[derive(Serialize)]
struct Dimension<'a> {
    name: &'a str,
    values: &'a [String],
}

async fn dimensions(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let ds = state.bound(&id)?;
    let dims: Vec<Dimension> = ds
        .dimensions()
        .iter()
        .map(|d| Dimension {
            name: &d.name,
            values: &d.dictionary,
        })
        .collect();
    let body = serde_json::json!({
        "id": ds.id(),
        "dimensions": dims,
        "measures": ds.schema().measures,
    });
    Ok(Json(body).into_response())
}

async fn delete_dataset(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    if state.remove(&id) {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(not_found(&id))
    }
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn number<T: std::str::FromStr>(key: &str, v: &str) -> ApiResult<T> {
    v.trim()
        .parse()
        .map_err(|_| ApiError::unprocessable(format!("`{key}` must be a non-negative integer")))
}

/// Builds a descriptor from cloud query parameters.
pub fn descriptor_from_query(dataset: &str, query: &str) -> ApiResult<QueryDescriptor> {
    let mut q = QueryDescriptor::new(dataset, Vec::new());
    for (k, v) in url::form_urlencoded::parse(query.as_bytes()) {
        match &*k {
            "dims" => q.dims.extend(split_list(&v)),
            "agg" => q.agg = v.parse::<Aggregator>().map_err(ApiError::unprocessable)?,
            "measure" => q.measure = Some(v.into_owned()).filter(|m| !m.is_empty()),
            "slice" => {
                let (d, value) = v
                    .split_once(':')
                    .ok_or_else(|| ApiError::unprocessable("slice must be `dimension:value`"))?;
                q.slices.insert(d.to_string(), value.to_string());
            }
            "dice" => {
                let (d, values) = v
                    .split_once(':')
                    .ok_or_else(|| ApiError::unprocessable("dice must be `dimension:v1|v2`"))?;
                let set: BTreeSet<String> = values.split('|').map(str::to_string).collect();
                q.dices.entry(d.to_string()).or_default().extend(set);
            }
            "group" => {
                let g: GroupingMap = serde_json::from_str(&v).map_err(|e| {
                    ApiError::unprocessable(format!("bad grouping: {e}"))
                })?;
                q.groupings.push(g);
            }
            "k" => q.k = number("k", &v)?,
            "limit" => q.limit = number("limit", &v)?,
            "exact" => q.exact = parse_bool("exact", &v).map_err(|e| ApiError::unprocessable(e.message))?,
            "cluster" => q.cluster.extend(split_list(&v)),
            "similarity" => q.similarity = v.into_owned(),
            "heuristic" => q.heuristic = v.into_owned(),
            "seed" => q.seed = number("seed", &v)?,
            "buckets" => q.buckets = number("buckets", &v)?,
            other => return Err(ApiError::unprocessable(format!("unknown parameter `{other}`"))),
        }
    }
    Ok(q)
}

async fn run(state: Arc<AppState>, query: QueryDescriptor) -> ApiResult<CloudResponse> {
    let ds = state.bound(&query.dataset)?;
    tokio::task::spawn_blocking(move || state.engine.run(&ds, &query))
        .await
        .map_err(ApiError::unprocessable)?
        .map_err(ApiError::unprocessable)
}

fn json_body(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

async fn cloud(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    RawQuery(query): RawQuery,
) -> ApiResult<Response> {
    state.bound(&id)?;
    let q = descriptor_from_query(&id, &query.unwrap_or_default())?;
    Ok(json_body(run(state, q).await?.to_json()))
}

fn decode_token(token: &str) -> ApiResult<QueryDescriptor> {
    QueryDescriptor::decode(token).map_err(|e: Error| ApiError {
        status: StatusCode::NOT_FOUND,
        message: e.to_string(),
    })
}

async fn permalink(
    State(state): State<Arc<AppState>>,
    Path(token): Path<String>,
) -> ApiResult<Response> {
    let q = decode_token(&token)?;
    Ok(json_body(run(state, q).await?.to_json()))
}

async fn embed(
    State(state): State<Arc<AppState>>,
    Path(token): Path<String>,
) -> ApiResult<Response> {
    let q = decode_token(&token)?;
    let response = run(state, q).await?;
    Ok((
        [(header::CONTENT_TYPE, "text/html; charset=utf-8")],
        render_html(&response),
    )
        .into_response())
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Self-contained HTML for an iframe: one `span.t` per tag in layout order,
/// sized by class `b{bucket}`; tags joined by GLUED tokens share a `span.nw`.
pub fn render_html(response: &CloudResponse) -> String {
    let buckets = response.query.buckets.max(1);
    let mut css = String::from(
        ".cloud{font-family:sans-serif;line-height:1.5;text-align:center}\
         .t{margin:0 .3em;display:inline-block}.nw{white-space:nowrap}",
    );
    for b in 1..=buckets {
        let size = if buckets == 1 {
            1.0
        } else {
            0.8 + 1.6 * f64::from(b - 1) / f64::from(buckets - 1)
        };
        css.push_str(&format!(".b{b}{{font-size:{size:.2}em}}"));
    }

    let entries = response.layout.entries();
    let mut body = String::new();
    let mut i = 0;
    while i < entries.len() {
        // A tag followed by GLUED starts a run that ends at the first tag not
        // followed by GLUED.
        let glued = matches!(entries.get(i + 1), Some(LayoutEntry::Glued));
        if glued {
            body.push_str("<span class=\"nw\">");
        }
        loop {
            if let LayoutEntry::Tag {
                term,
                weight,
                bucket,
            } = &entries[i]
            {
                body.push_str(&format!(
                    "<span class=\"t b{bucket}\" title=\"{}\">{}</span>",
                    tagcube_core::query::format_number(*weight),
                    escape(term)
                ));
            }
            i += 1;
            match entries.get(i) {
                Some(LayoutEntry::Glued) if glued => i += 1,
                Some(LayoutEntry::Permutable) => {
                    i += 1;
                    break;
                }
                _ => break,
            }
        }
        if glued {
            body.push_str("</span>");
        }
        body.push('\n');
    }
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{}</title><style>{css}</style></head>\n<body><div class=\"cloud\">\n{body}</div></body></html>\n",
        escape(&response.query.dataset)
    )
}
