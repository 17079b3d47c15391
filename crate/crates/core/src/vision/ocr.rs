use std::collections::HashMap;
use std::io::Write;
use std::process::Command;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::VisionError;
use crate::domain::{MediaKind, MediaRef};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcrResult {
    pub media_id: String,
    pub text: String,
    pub engine_tag: String,
}

pub trait OcrEngine: Send + Sync {
    fn tag(&self) -> &str;

    fn recognize(&self, payload: &[u8]) -> Result<String, VisionError>;
}

/// Treats the payload as already-recognised UTF-8 text. Simulated images
/// carry their visible text as the payload.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityOcr;

impl OcrEngine for IdentityOcr {
    fn tag(&self) -> &str {
        "identity"
    }

    fn recognize(&self, payload: &[u8]) -> Result<String, VisionError> {
        Ok(String::from_utf8_lossy(payload).into_owned())
    }
}

/// Shells out to a `tesseract` binary. Optional; nothing in the default
/// pipeline depends on it.
#[derive(Debug, Clone)]
pub struct TesseractCli {
    pub binary: String,
    pub languages: String,
}

impl Default for TesseractCli {
    fn default() -> Self {
        Self { binary: "tesseract".into(), languages: "eng+chi_sim".into() }
    }
}

impl OcrEngine for TesseractCli {
    fn tag(&self) -> &str {
        "tesseract"
    }

    fn recognize(&self, payload: &[u8]) -> Result<String, VisionError> {
        let unavailable = |e: std::io::Error| VisionError::EngineUnavailable(e.to_string());
        let path = scratch_path();
        std::fs::File::create(&path)
            .and_then(|mut f| f.write_all(payload))
            .map_err(unavailable)?;
        let out = Command::new(&self.binary)
            .arg(&path)
            .arg("stdout")
            .arg("-l")
            .arg(&self.languages)
            .output();
        let _ = std::fs::remove_file(&path);
        let out = out.map_err(unavailable)?;
        if !out.status.success() {
            return Err(VisionError::EngineUnavailable(
                String::from_utf8_lossy(&out.stderr).trim().to_string(),
            ));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    }
}

fn scratch_path() -> std::path::PathBuf {
    use std::sync::atomic::{AtomicU64, Ordering};
    static NEXT: AtomicU64 = AtomicU64::new(0);
    std::env::temp_dir().join(format!(
        "baitline-ocr-{}-{}",
        std::process::id(),
        NEXT.fetch_add(1, Ordering::Relaxed)
    ))
}

/// OCR front-end with a per-media-id result cache.
pub struct OcrService {
    engine: Box<dyn OcrEngine>,
    cache: Mutex<HashMap<String, OcrResult>>,
}

impl OcrService {
    pub fn new(engine: impl OcrEngine + 'static) -> Self {
        Self { engine: Box::new(engine), cache: Mutex::new(HashMap::new()) }
    }

    pub fn identity() -> Self {
        Self::new(IdentityOcr)
    }

    pub fn engine_tag(&self) -> &str {
        self.engine.tag()
    }

    pub fn extract(&self, media: &MediaRef, payload: &[u8]) -> Result<OcrResult, VisionError> {
        if media.kind != MediaKind::Image {
            return Err(VisionError::NotAnImage(media.media_id.clone()));
        }
        if let Some(hit) = self.cache.lock().unwrap().get(&media.media_id) {
            return Ok(hit.clone());
        }
        let text = self.engine.recognize(payload)?;
        let result = OcrResult {
            media_id: media.media_id.clone(),
            text,
            engine_tag: self.engine.tag().to_string(),
        };
        self.cache
            .lock()
            .unwrap()
            .entry(media.media_id.clone())
            .or_insert_with(|| result.clone());
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Counting(Arc<AtomicUsize>);

    impl OcrEngine for Counting {
        fn tag(&self) -> &str {
            "counting"
        }
        fn recognize(&self, payload: &[u8]) -> Result<String, VisionError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(String::from_utf8_lossy(payload).to_uppercase())
        }
    }

    fn media(kind: MediaKind) -> MediaRef {
        MediaRef { media_id: "m1".into(), kind, person_labels: vec![], digest: None }
    }

    #[test]
    fn identity_engine_returns_payload() {
        let svc = OcrService::identity();
        let r = svc.extract(&media(MediaKind::Image), "支付宝 138...".as_bytes()).unwrap();
        assert_eq!(r.text, "支付宝 138...");
        assert_eq!(r.engine_tag, "identity");
    }

    #[test]
    fn non_image_is_rejected() {
        let svc = OcrService::identity();
        assert_eq!(
            svc.extract(&media(MediaKind::Other), b"x"),
            Err(VisionError::NotAnImage("m1".into()))
        );
    }

    #[test]
    fn repeat_calls_hit_the_cache() {
        let calls = Arc::new(AtomicUsize::new(0));
        let svc = OcrService::new(Counting(calls.clone()));
        let a = svc.extract(&media(MediaKind::Image), b"qr").unwrap();
        let b = svc.extract(&media(MediaKind::Image), b"different payload").unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn missing_tesseract_binary_is_unavailable() {
        let engine = TesseractCli { binary: "/nonexistent/tesseract".into(), languages: "eng".into() };
        assert!(matches!(engine.recognize(b"x"), Err(VisionError::EngineUnavailable(_))));
    }
}
