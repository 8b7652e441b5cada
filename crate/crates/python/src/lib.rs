//! Python bindings: keys, the local notary and HTTP client, the reference
//! perception stack, the transform fit and the signature codec.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use proves_core::codec::{self, SignatureContainer};
use proves_core::engine::{self, TransformParams};
use proves_core::imageops::{decode_png, encode_png};
use proves_core::notary::{self as notary_mod, SignRequest};
use proves_core::perception::{self, GlyphFaceSpec};
use proves_core::{
    BBox, Clock, Config, FeatureVector, FixedClock, ImageBuffer, SceneLabel, SystemClock,
    Timestamp, VerificationReport,
};
use proves_server::{ApiError, HttpClient, NotaryApi, ServerHandle};

create_exception!(proves, ProvesError, PyException, "Base error for this module.");
create_exception!(proves, RejectedError, ProvesError, "The notary refused the request.");

fn err(e: impl std::fmt::Display) -> PyErr {
    ProvesError::new_err(e.to_string())
}

fn api_err(e: ApiError) -> PyErr {
    match e {
        ApiError::Status { code, message } => RejectedError::new_err((code, message)),
        other => err(other),
    }
}

fn notary_err(e: proves_core::NotaryError) -> PyErr {
    let code = proves_server::api::status_for(proves_server::api::Operation::Sign, &e);
    RejectedError::new_err((code, e.to_string()))
}

fn image(png: &[u8]) -> PyResult<ImageBuffer> {
    decode_png(png).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn bbox((x0, y0, x1, y1): (f64, f64, f64, f64)) -> PyResult<BBox> {
    BBox::new(x0, y0, x1, y1).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn scene_label(name: &str) -> PyResult<SceneLabel> {
    match name.to_ascii_lowercase().as_str() {
        "indoor" => Ok(SceneLabel::Indoor),
        "outdoor" => Ok(SceneLabel::Outdoor),
        _ => Err(PyValueError::new_err(format!("scene must be 'indoor' or 'outdoor', got {name:?}"))),
    }
}

/// Reports and payloads cross as JSON and come out as plain dicts.
fn to_py<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// ECDSA P-256 key pair.
#[pyclass(frozen)]
struct KeyPair(proves_core::KeyPair);

#[pymethods]
impl KeyPair {
    #[staticmethod]
    fn generate() -> Self {
        Self(proves_core::KeyPair::generate(&mut rand::rng()))
    }

    #[staticmethod]
    fn from_seed(seed: u64) -> Self {
        Self(proves_core::KeyPair::from_seed(seed))
    }

    #[staticmethod]
    fn from_secret(secret: &[u8]) -> PyResult<Self> {
        proves_core::KeyPair::from_secret_bytes(secret).map(Self).map_err(err)
    }

    fn secret_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.secret_bytes())
    }

    /// SEC1 uncompressed public key.
    #[getter]
    fn public_key<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.public_key().to_sec1_bytes())
    }

    /// Deterministic DER signature over SHA-256 of `message`.
    fn sign<'py>(&self, py: Python<'py>, message: &[u8]) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.sign(message))
    }

    /// Device signature over a PNG's raw pixels, as the notary expects.
    fn sign_image<'py>(&self, py: Python<'py>, png: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &notary_mod::device_sign(&self.0, &image(png)?)))
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyfunction]
fn verify_signature(public_key: &[u8], message: &[u8], signature: &[u8]) -> PyResult<bool> {
    let key = proves_core::PublicKey::from_sec1_bytes(public_key).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(proves_core::crypto::verify(&key, message, signature))
}

fn sign_request(device_id: &str, png: &[u8], device_signature: &[u8]) -> SignRequest {
    SignRequest {
        device_id: device_id.to_owned(),
        image: png.to_vec(),
        device_signature: device_signature.to_vec(),
    }
}

/// In-process notary. With `now` the clock is fixed (see `set_time`);
/// otherwise it follows the system clock.
#[pyclass(frozen)]
struct Notary {
    inner: Arc<proves_core::Notary>,
    clock: Option<Arc<FixedClock>>,
}

#[pymethods]
impl Notary {
    #[new]
    #[pyo3(signature = (seed=None, now=None, config=None))]
    fn new(seed: Option<u64>, now: Option<u64>, config: Option<&str>) -> PyResult<Self> {
        let config = match config {
            Some(text) => Config::parse(text).map_err(err)?,
            None => Config::default(),
        };
        let key = match seed {
            Some(s) => proves_core::KeyPair::from_seed(s),
            None => proves_core::KeyPair::generate(&mut rand::rng()),
        };
        let fixed = now.map(|t| Arc::new(FixedClock::new(Timestamp(t))));
        let clock: Arc<dyn Clock> = match &fixed {
            Some(c) => c.clone(),
            None => Arc::new(SystemClock),
        };
        Ok(Self {
            inner: Arc::new(proves_core::Notary::ephemeral(key, &config, clock)),
            clock: fixed,
        })
    }

    /// Notary with its key and registry persisted under `data_dir`.
    #[staticmethod]
    #[pyo3(signature = (data_dir, now=None))]
    fn open(data_dir: PathBuf, now: Option<u64>) -> PyResult<Self> {
        let fixed = now.map(|t| Arc::new(FixedClock::new(Timestamp(t))));
        let clock: Arc<dyn Clock> = match &fixed {
            Some(c) => c.clone(),
            None => Arc::new(SystemClock),
        };
        let inner = proves_core::Notary::open(&data_dir, &Config::default(), clock).map_err(err)?;
        Ok(Self {
            inner: Arc::new(inner),
            clock: fixed,
        })
    }

    #[getter]
    fn public_key<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.public_key().to_sec1_bytes())
    }

    fn set_time(&self, now: u64) -> PyResult<()> {
        match &self.clock {
            Some(c) => {
                c.set(Timestamp(now));
                Ok(())
            }
            None => Err(ProvesError::new_err("this notary uses the system clock")),
        }
    }

    fn register(&self, device_id: &str, public_key: &[u8]) -> PyResult<()> {
        self.inner.register(device_id, public_key).map_err(notary_err)
    }

    fn revoke(&self, device_id: &str, effective: u64) -> PyResult<u64> {
        self.inner
            .revoke(device_id, Timestamp(effective))
            .map(|t| t.0)
            .map_err(notary_err)
    }

    /// Sign a PNG; returns the signature container bytes.
    fn sign<'py>(&self, py: Python<'py>, device_id: &str, png: &[u8], device_signature: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
        let request = sign_request(device_id, png, device_signature);
        let inner = self.inner.clone();
        let response = py.detach(move || inner.sign(&request)).map_err(notary_err)?;
        Ok(PyBytes::new(py, &response.container.to_bytes().map_err(err)?))
    }

    /// Verify a PNG against its embedded signature or `container`.
    #[pyo3(signature = (png, container=None))]
    fn verify<'py>(&self, py: Python<'py>, png: &[u8], container: Option<&[u8]>) -> PyResult<Bound<'py, PyAny>> {
        let inner = self.inner.clone();
        let report: VerificationReport = py
            .detach(|| inner.verify(png, container))
            .map_err(notary_err)?;
        to_py(py, &report)
    }

    /// Serve this notary over HTTP on `addr` (port 0 picks a free one).
    #[pyo3(signature = (addr="127.0.0.1:0"))]
    fn serve(&self, addr: &str) -> PyResult<Server> {
        let handle = ServerHandle::spawn(self.inner.clone(), addr).map_err(err)?;
        Ok(Server(Mutex::new(Some(handle))))
    }
}

/// Running HTTP server; stops on `close()` or when collected.
#[pyclass(frozen)]
struct Server(Mutex<Option<ServerHandle>>);

#[pymethods]
impl Server {
    #[getter]
    fn url(&self) -> PyResult<String> {
        self.0
            .lock()
            .unwrap()
            .as_ref()
            .map(|h| h.base_url())
            .ok_or_else(|| ProvesError::new_err("server is closed"))
    }

    fn close(&self) {
        self.0.lock().unwrap().take();
    }
}

/// Blocking HTTP client for a running notary.
#[pyclass(frozen)]
struct Client(HttpClient);

#[pymethods]
impl Client {
    #[new]
    fn new(addr: &str) -> Self {
        Self(HttpClient::new(addr))
    }

    fn notary_key<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let key = py.detach(|| self.0.notary_key()).map_err(api_err)?;
        Ok(PyBytes::new(py, &key.to_sec1_bytes()))
    }

    fn register(&self, py: Python<'_>, device_id: &str, public_key: &[u8]) -> PyResult<()> {
        py.detach(|| self.0.register(device_id, public_key)).map_err(api_err)
    }

    fn revoke(&self, py: Python<'_>, device_id: &str, effective: u64) -> PyResult<u64> {
        py.detach(|| self.0.revoke(device_id, Timestamp(effective)))
            .map(|t| t.0)
            .map_err(api_err)
    }

    fn sign<'py>(&self, py: Python<'py>, device_id: &str, png: &[u8], device_signature: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
        let request = sign_request(device_id, png, device_signature);
        let response = py.detach(|| self.0.sign(&request)).map_err(api_err)?;
        Ok(PyBytes::new(py, &response.container.to_bytes().map_err(err)?))
    }

    #[pyo3(signature = (png, container=None))]
    fn verify<'py>(&self, py: Python<'py>, png: &[u8], container: Option<&[u8]>) -> PyResult<Bound<'py, PyAny>> {
        let report = py.detach(|| self.0.verify(png, container)).map_err(api_err)?;
        to_py(py, &report)
    }
}

/// Render a synthetic scene to PNG. `glyphs` holds
/// `(identity_seed, center_x, center_y, size)` tuples.
#[pyfunction]
#[pyo3(signature = (width, height, scene, glyphs, rng_seed=0))]
fn render_scene<'py>(
    py: Python<'py>,
    width: u32,
    height: u32,
    scene: &str,
    glyphs: Vec<(u64, f64, f64, f64)>,
    rng_seed: u64,
) -> PyResult<Bound<'py, PyBytes>> {
    let glyphs: Vec<GlyphFaceSpec> = glyphs
        .into_iter()
        .map(|(seed, x, y, size)| GlyphFaceSpec::new(seed, (x, y), size))
        .collect();
    let img = perception::render_scene(width, height, scene_label(scene)?, &glyphs, rng_seed)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyBytes::new(py, &encode_png(&img).map_err(err)?))
}

/// Glyph boxes found by the reference detector, as `(x0, y0, x1, y1)`.
#[pyfunction]
fn detect(png: &[u8]) -> PyResult<Vec<[f64; 4]>> {
    Ok(perception::reference_detect(&image(png)?)
        .iter()
        .map(BBox::corners)
        .collect())
}

#[pyfunction]
fn embed(png: &[u8], bbox_: (f64, f64, f64, f64)) -> PyResult<Vec<f64>> {
    perception::reference_embed(&image(png)?, &bbox(bbox_)?)
        .map(|f| f.components().to_vec())
        .map_err(err)
}

/// Probability that the scene is indoor.
#[pyfunction]
fn scene_probability(png: &[u8]) -> PyResult<f64> {
    Ok(perception::reference_scene_prob(&image(png)?))
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let a = FeatureVector::new(a).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let b = FeatureVector::new(b).map_err(|e| PyValueError::new_err(e.to_string()))?;
    engine::cosine_similarity(&a, &b).map_err(err)
}

/// Least-squares `(s, alpha, beta)` from `((x, y), (u, v))` center pairs.
#[pyfunction]
fn fit_transform(pairs: Vec<((f64, f64), (f64, f64))>) -> PyResult<(f64, f64, f64)> {
    let fit = engine::fit_similarity_transform(&pairs, 2).map_err(err)?;
    let TransformParams { s, alpha, beta } = fit.params;
    Ok((s, alpha, beta))
}

/// Attach a signature container to a PNG as a chunk.
#[pyfunction]
fn embed_signature<'py>(py: Python<'py>, png: &[u8], container: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    let c = SignatureContainer::from_bytes(container).map_err(err)?;
    Ok(PyBytes::new(py, &codec::embed_png(png, &c).map_err(err)?))
}

#[pyfunction]
fn extract_signature<'py>(py: Python<'py>, png: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    let c = codec::extract_signature(png).map_err(err)?;
    Ok(PyBytes::new(py, &c.to_bytes().map_err(err)?))
}

/// The signed payload of a container as a dict. Does not check the
/// notary signature.
#[pyfunction]
fn decode_container<'py>(py: Python<'py>, container: &[u8]) -> PyResult<Bound<'py, PyAny>> {
    let c = SignatureContainer::from_bytes(container).map_err(err)?;
    let p = c.payload();
    let faces: Vec<serde_json::Value> = p
        .faces
        .iter()
        .map(|f| serde_json::json!({ "bbox": f.bbox.corners(), "feature": f.feature.components() }))
        .collect();
    to_py(
        py,
        &serde_json::json!({
            "image_width": p.image_width,
            "image_height": p.image_height,
            "scene": p.scene.to_string(),
            "device_id": p.device_id,
            "signed_at": p.signed_at.0,
            "faces": faces,
        }),
    )
}

#[pymodule]
fn proves(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ProvesError", m.py().get_type::<ProvesError>())?;
    m.add("RejectedError", m.py().get_type::<RejectedError>())?;
    m.add_class::<KeyPair>()?;
    m.add_class::<Notary>()?;
    m.add_class::<Server>()?;
    m.add_class::<Client>()?;
    m.add_function(wrap_pyfunction!(verify_signature, m)?)?;
    m.add_function(wrap_pyfunction!(render_scene, m)?)?;
    m.add_function(wrap_pyfunction!(detect, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(scene_probability, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(fit_transform, m)?)?;
    m.add_function(wrap_pyfunction!(embed_signature, m)?)?;
    m.add_function(wrap_pyfunction!(extract_signature, m)?)?;
    m.add_function(wrap_pyfunction!(decode_container, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_names() {
        assert_eq!(scene_label("Indoor").unwrap(), SceneLabel::Indoor);
        assert_eq!(scene_label("outdoor").unwrap(), SceneLabel::Outdoor);
        assert!(scene_label("cave").is_err());
    }

    #[test]
    fn sign_request_copies_inputs() {
        let r = sign_request("cam", b"png", b"sig");
        assert_eq!((r.device_id.as_str(), &r.image[..], &r.device_signature[..]), ("cam", &b"png"[..], &b"sig"[..]));
        assert!(bbox((0.0, 0.0, 1.0, 1.0)).is_ok());
    }
}
