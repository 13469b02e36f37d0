//! The host-callback surface used by foreign-language bindings.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use panofuse::denoiser::sample_pattern;
use panofuse::pipeline::ScheduleConfig;
use panofuse::{
    DenoiserKind, DenoiserSpec, Error, ExternalCallFrame, Pattern, Pipeline, RunConfig,
};

fn config(kind: DenoiserKind) -> RunConfig {
    RunConfig {
        pano_width: 128,
        schedule: ScheduleConfig {
            steps: 10,
            ..ScheduleConfig::default()
        },
        denoiser: DenoiserSpec {
            kind,
            condition: "a wide mountain range".into(),
            ..DenoiserSpec::default()
        },
        seed: 21,
        ..RunConfig::default()
    }
}

#[test]
fn zero_callback_matches_constant_zero() {
    let mut p = Pipeline::new(config(DenoiserKind::External)).unwrap();
    p.register_external_denoiser(Box::new(|_| Ok(()))).unwrap();
    let host = p.generate_panorama().unwrap();
    let native = Pipeline::new(config(DenoiserKind::Constant))
        .unwrap()
        .generate_panorama()
        .unwrap();
    assert_eq!(host.latent, native.latent);
}

#[test]
fn host_exact_noise_matches_native() {
    let native_cfg = config(DenoiserKind::ExactNoise);
    let sched = native_cfg.schedule.build().unwrap();
    let pattern = Pattern::default();
    let alpha_bars = sched.alpha_bars().to_vec();

    let mut p = Pipeline::new(config(DenoiserKind::External)).unwrap();
    let handle = p
        .register_external_denoiser(Box::new(move |f: &mut ExternalCallFrame<'_>| {
            let target =
                sample_pattern(&pattern, f.x_offset, f.shape).map_err(|e| e.to_string())?;
            let a = alpha_bars[f.timestep];
            for ((r, z), g) in f.reply.iter_mut().zip(f.latent).zip(target.as_slice()) {
                *r = (z - a.sqrt() * g) / (1.0 - a).sqrt();
            }
            Ok(())
        }))
        .unwrap();
    let host = p.generate_panorama().unwrap();
    let native = Pipeline::new(native_cfg)
        .unwrap()
        .generate_panorama()
        .unwrap();
    assert!(host.latent.max_abs_diff(&native.latent).unwrap() <= 1e-10);
    assert_eq!(handle.calls(), native.timing.denoiser_calls);
}

#[test]
fn callback_error_names_crop_and_timestep() {
    let mut p = Pipeline::new(config(DenoiserKind::External)).unwrap();
    p.register_external_denoiser(Box::new(|f| {
        if f.timestep == 10 {
            Err("host exploded".into())
        } else {
            Ok(())
        }
    }))
    .unwrap();
    let err = p.generate_panorama().unwrap_err();
    assert!(
        matches!(err, Error::DenoiserCall { crop: 1, t: 10, .. }),
        "{err:?}"
    );
    let msg = err.to_string();
    assert!(msg.contains("crop 1") && msg.contains("timestep 10") && msg.contains("host exploded"));
}

#[test]
fn reply_shape_mismatch_is_structured() {
    let mut p = Pipeline::new(config(DenoiserKind::External)).unwrap();
    p.register_external_denoiser(Box::new(|f| {
        f.reply.truncate(3);
        Ok(())
    }))
    .unwrap();
    match p.generate_panorama().unwrap_err() {
        Error::DenoiserCall { source, .. } => {
            assert!(matches!(*source, Error::ShapeMismatch { .. }))
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn calls_are_serial_and_ordered_even_with_workers() {
    let mut cfg = config(DenoiserKind::External);
    cfg.workers = 4;
    let mut p = Pipeline::new(cfg).unwrap();
    let busy = Arc::new(AtomicBool::new(false));
    let log = Arc::new(Mutex::new(Vec::new()));
    let (b, l) = (Arc::clone(&busy), Arc::clone(&log));
    p.register_external_denoiser(Box::new(move |f| {
        assert!(!b.swap(true, Ordering::SeqCst), "concurrent callback");
        assert_eq!(f.condition, "a wide mountain range");
        l.lock().unwrap().push((f.timestep, f.x_offset));
        b.store(false, Ordering::SeqCst);
        Ok(())
    }))
    .unwrap();
    p.generate_panorama().unwrap();
    let log = log.lock().unwrap();
    for pair in log.windows(2) {
        let ((t0, x0), (t1, x1)) = (pair[0], pair[1]);
        assert!(t1 < t0 || (t1 == t0 && x1 > x0), "{pair:?}");
    }
}

#[test]
fn double_registration_is_rejected() {
    let mut p = Pipeline::new(config(DenoiserKind::External)).unwrap();
    p.register_external_denoiser(Box::new(|_| Ok(()))).unwrap();
    assert!(matches!(
        p.register_external_denoiser(Box::new(|_| Ok(()))),
        Err(Error::External(_))
    ));
}
