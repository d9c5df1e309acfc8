use std::ffi::{CStr, CString};
use std::ptr;

use funcnet::curvedata::SparseCurve;
use funcnet::funcnet::TrainConfig;
use funcnet::pipeline::Scorer;
use funcnet::simgen::{generate, KlConfig};
use funcnet::{Pipeline, PipelineConfig, ScoreMode};
use funcnet_ffi::*;

fn fitted(mode: ScoreMode) -> Pipeline {
    let sim = generate(&KlConfig {
        n_per_group: 30,
        ..KlConfig::two_group(3)
    })
    .unwrap();
    let cfg = PipelineConfig {
        score_mode: mode,
        train: TrainConfig {
            epochs: 100,
            ..TrainConfig::default()
        },
        ..PipelineConfig::default()
    };
    Pipeline::fit(&sim.dataset, &cfg).unwrap()
}

fn last_error() -> String {
    let p = funcnet_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Raw {
    lens: Vec<usize>,
    times: Vec<*const f64>,
    values: Vec<*const f64>,
}

fn raw(curves: &[SparseCurve]) -> Raw {
    Raw {
        lens: curves.iter().map(SparseCurve::len).collect(),
        times: curves.iter().map(|c| c.times().as_ptr()).collect(),
        values: curves.iter().map(|c| c.values().as_ptr()).collect(),
    }
}

#[test]
fn predictions_and_scores_match_the_library() {
    let dir = tempfile::tempdir().unwrap();
    for mode in [ScoreMode::Univariate, ScoreMode::Mfpca] {
        let p = fitted(mode);
        let path = dir.path().join("model.json");
        p.save(&path).unwrap();
        let cpath = CString::new(path.to_str().unwrap()).unwrap();

        let mut h: *mut FuncnetPipeline = ptr::null_mut();
        assert_eq!(unsafe { funcnet_pipeline_load(cpath.as_ptr(), &mut h) }, FuncnetStatus::Ok);
        assert!(funcnet_last_error().is_null());

        let mut nf = 0usize;
        let mut ni = 0usize;
        unsafe {
            assert_eq!(funcnet_pipeline_n_features(h, &mut nf), FuncnetStatus::Ok);
            assert_eq!(funcnet_pipeline_n_inputs(h, &mut ni), FuncnetStatus::Ok);
        }
        assert_eq!(nf, 1);
        assert_eq!(ni, p.network.n_inputs());

        let sim = generate(&KlConfig {
            n_per_group: 5,
            ..KlConfig::two_group(99)
        })
        .unwrap();
        for s in sim.dataset.subjects() {
            let r = raw(&s.curves);
            let want = p.predict_curves(&s.curves).unwrap();
            let (mut value, mut label) = (f64::NAN, -7i32);
            let st = unsafe {
                funcnet_pipeline_predict(h, 1, r.lens.as_ptr(), r.times.as_ptr(), r.values.as_ptr(), &mut value, &mut label)
            };
            assert_eq!(st, FuncnetStatus::Ok);
            assert_eq!(value, want.value);
            assert_eq!(label, i32::from(want.label.unwrap()));

            let want_scores = p.scorer.inputs(&s.curves).unwrap();
            let mut buf = vec![0.0; ni];
            let mut len = 0usize;
            let st = unsafe {
                funcnet_pipeline_scores(h, 1, r.lens.as_ptr(), r.times.as_ptr(), r.values.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut len)
            };
            assert_eq!(st, FuncnetStatus::Ok);
            assert_eq!(len, ni);
            assert_eq!(buf, want_scores);
        }
        unsafe { funcnet_pipeline_free(h) };
    }
}

#[test]
fn fpca_handle_reads_scorer_and_pipeline_bundles() {
    let p = fitted(ScoreMode::Univariate);
    let dir = tempfile::tempdir().unwrap();
    let scorer_path = dir.path().join("models.json");
    let pipe_path = dir.path().join("pipe.json");
    p.scorer.save(&scorer_path).unwrap();
    p.save(&pipe_path).unwrap();
    let curve = SparseCurve::new(vec![0.1, 0.4, 0.8], vec![0.3, -0.2, 0.5]).unwrap();
    let want = p.scorer.inputs(std::slice::from_ref(&curve)).unwrap();
    for path in [scorer_path, pipe_path] {
        let c = CString::new(path.to_str().unwrap()).unwrap();
        let mut h: *mut FuncnetFpca = ptr::null_mut();
        assert_eq!(unsafe { funcnet_fpca_load(c.as_ptr(), &mut h) }, FuncnetStatus::Ok);
        let (mut nf, mut ns) = (0usize, 0usize);
        unsafe {
            assert_eq!(funcnet_fpca_n_features(h, &mut nf), FuncnetStatus::Ok);
            assert_eq!(funcnet_fpca_n_scores(h, &mut ns), FuncnetStatus::Ok);
        }
        assert_eq!((nf, ns), (1, want.len()));
        let r = raw(std::slice::from_ref(&curve));

        let mut len = 0usize;
        let mut small = vec![0.0; ns - 1];
        let st = unsafe {
            funcnet_fpca_scores(h, 1, r.lens.as_ptr(), r.times.as_ptr(), r.values.as_ptr(), small.as_mut_ptr(), small.len(), &mut len)
        };
        assert_eq!(st, FuncnetStatus::BufferTooSmall);
        assert_eq!(len, ns);

        let mut buf = vec![0.0; ns];
        let st = unsafe {
            funcnet_fpca_scores(h, 1, r.lens.as_ptr(), r.times.as_ptr(), r.values.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut len)
        };
        assert_eq!(st, FuncnetStatus::Ok);
        assert_eq!(buf, want);
        assert_eq!(Scorer::load(&path).unwrap(), p.scorer);
        unsafe { funcnet_fpca_free(h) };
    }
}

#[test]
fn errors_carry_status_and_message() {
    let mut h: *mut FuncnetPipeline = ptr::null_mut();
    assert_eq!(unsafe { funcnet_pipeline_load(ptr::null(), &mut h) }, FuncnetStatus::NullPointer);
    assert!(last_error().contains("path"));

    let missing = CString::new("/nonexistent/model.json").unwrap();
    assert_eq!(unsafe { funcnet_pipeline_load(missing.as_ptr(), &mut h) }, FuncnetStatus::Io);
    assert!(h.is_null());

    let junk = CString::new("{not json").unwrap();
    assert_eq!(unsafe { funcnet_pipeline_from_json(junk.as_ptr(), &mut h) }, FuncnetStatus::Parse);

    let future = CString::new(r#"{"format_version": 999, "kind": "pipeline", "body": {}}"#).unwrap();
    assert_eq!(unsafe { funcnet_pipeline_from_json(future.as_ptr(), &mut h) }, FuncnetStatus::FormatVersion);
    assert!(last_error().contains("999"));

    let bad_utf8 = [0xffu8, 0xfe, 0];
    assert_eq!(
        unsafe { funcnet_pipeline_from_json(bad_utf8.as_ptr().cast(), &mut h) },
        FuncnetStatus::InvalidUtf8
    );

    let mut n = 0usize;
    assert_eq!(unsafe { funcnet_pipeline_n_features(ptr::null(), &mut n) }, FuncnetStatus::NullPointer);
    unsafe { funcnet_pipeline_free(ptr::null_mut()) };
    unsafe { funcnet_fpca_free(ptr::null_mut()) };
}

#[test]
fn wrong_feature_count_is_a_dimension_error() {
    let p = fitted(ScoreMode::Univariate);
    let json = CString::new(p.to_json().unwrap()).unwrap();
    let mut h: *mut FuncnetPipeline = ptr::null_mut();
    assert_eq!(unsafe { funcnet_pipeline_from_json(json.as_ptr(), &mut h) }, FuncnetStatus::Ok);
    let c = SparseCurve::new(vec![0.5], vec![1.0]).unwrap();
    let r = raw(&[c.clone(), c]);
    let mut v = 0.0;
    let st = unsafe { funcnet_pipeline_predict(h, 2, r.lens.as_ptr(), r.times.as_ptr(), r.values.as_ptr(), &mut v, ptr::null_mut()) };
    assert_eq!(st, FuncnetStatus::DimensionMismatch);
    let unsorted_t = [0.5, 0.2];
    let unsorted_v = [1.0, 2.0];
    let lens = [2usize];
    let st = unsafe {
        funcnet_pipeline_predict(h, 1, lens.as_ptr(), [unsorted_t.as_ptr()].as_ptr(), [unsorted_v.as_ptr()].as_ptr(), &mut v, ptr::null_mut())
    };
    assert_ne!(st, FuncnetStatus::Ok);
    assert!(!last_error().is_empty());
    unsafe { funcnet_pipeline_free(h) };
}

#[test]
fn counts_rul_and_version() {
    let mut n = 0u64;
    unsafe {
        assert_eq!(funcnet_count_params(FuncnetModelKind::Rnn, 32, 21, 0, &mut n), FuncnetStatus::Ok);
        assert_eq!(n, 1728);
        assert_eq!(funcnet_count_params(FuncnetModelKind::Fmlp, 4, 21, 2, &mut n), FuncnetStatus::Ok);
        assert_eq!(n, 177);
        assert_eq!(funcnet_count_params(FuncnetModelKind::Lstm, 32, 21, 0, ptr::null_mut()), FuncnetStatus::NullPointer);
    }
    assert_eq!(funcnet_piecewise_rul(200.0, 130.0), 130.0);
    assert_eq!(funcnet_piecewise_rul(42.0, 130.0), 42.0);
    let v = unsafe { CStr::from_ptr(funcnet_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
