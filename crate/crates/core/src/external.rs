//! Callback boundary for host-supplied denoisers.
//!
//! A host registers one callback; each call receives the crop latent as a
//! contiguous `f64` buffer with an explicit `(height, width, channels)` prefix
//! and fills a reply buffer of the same shape. Calls are serialized through a
//! mutex and the pipeline never issues them concurrently.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::denoiser::Denoiser;
use crate::error::{Error, Result};
use crate::{Grid, Schedule};

/// One request/reply exchange with the host.
#[derive(Debug)]
pub struct ExternalCallFrame<'a> {
    pub shape: (usize, usize, usize),
    pub latent: &'a [f64],
    pub timestep: usize,
    pub x_offset: usize,
    pub condition: &'a str,
    /// Pre-sized to `latent.len()` zeros; the host overwrites it.
    pub reply: Vec<f64>,
}

pub type ExternalCallback =
    Box<dyn FnMut(&mut ExternalCallFrame<'_>) -> std::result::Result<(), String> + Send>;

pub struct ExternalDenoiser {
    callback: Mutex<ExternalCallback>,
    condition: String,
    calls: AtomicUsize,
}

impl std::fmt::Debug for ExternalDenoiser {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalDenoiser")
            .field("condition", &self.condition)
            .field("calls", &self.calls.load(Ordering::Relaxed))
            .finish_non_exhaustive()
    }
}

impl ExternalDenoiser {
    pub fn new(callback: ExternalCallback, condition: impl Into<String>) -> Self {
        Self {
            callback: Mutex::new(callback),
            condition: condition.into(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Denoiser for ExternalDenoiser {
    fn predict_noise(
        &self,
        z_t: &Grid,
        t: usize,
        x_offset: usize,
        _sched: &Schedule,
    ) -> Result<Grid> {
        let (h, w, c) = z_t.shape();
        let mut frame = ExternalCallFrame {
            shape: (h, w, c),
            latent: z_t.as_slice(),
            timestep: t,
            x_offset,
            condition: &self.condition,
            reply: vec![0.0; z_t.len()],
        };
        {
            let mut cb = self
                .callback
                .lock()
                .map_err(|_| Error::External("callback lock poisoned".into()))?;
            self.calls.fetch_add(1, Ordering::Relaxed);
            (cb)(&mut frame).map_err(Error::External)?;
        }
        if frame.reply.len() != z_t.len() {
            return Err(Error::ShapeMismatch {
                expected: (h, w, c),
                actual: (frame.reply.len(), 1, 1),
            });
        }
        Grid::new(h, w, c, frame.reply).map_err(|e| match e {
            Error::NonFinite(_) => Error::NonFinite("external reply"),
            other => other,
        })
    }

    fn is_serial(&self) -> bool {
        true
    }
}

/// Registration handle returned to the host.
#[derive(Debug, Clone)]
pub struct ExternalHandle {
    inner: Arc<ExternalDenoiser>,
}

impl ExternalHandle {
    pub(crate) fn new(inner: Arc<ExternalDenoiser>) -> Self {
        Self { inner }
    }

    /// Number of callback invocations so far.
    pub fn calls(&self) -> usize {
        self.inner.calls()
    }
}
