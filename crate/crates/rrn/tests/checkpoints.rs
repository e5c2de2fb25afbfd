use rrn::checkpoint::{load_json, save_json, ForecasterCheckpoint, TransformCheckpoint};
use rrn::config::ExperimentConfig;
use rrn::experiments::{build_forecaster, load_dataset};
use rrn::RrnError;
use rrn_core::numerics::rng;
use rrn_core::{BackboneKind, Forecaster};

fn config(backbone: BackboneKind, single: bool) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.data.n_nodes = 6;
    cfg.data.t_total = 300;
    cfg.data.n_features = 2;
    cfg.model.hidden = 5;
    cfg.model.single_weight = single;
    cfg.model.backbone = backbone.name().into();
    cfg
}

fn perturbed(mut m: Forecaster) -> Forecaster {
    let mut r = rng::seeded(9);
    for s in m.param_slices_mut() {
        for v in s.iter_mut() {
            *v += 0.01 * rng::gaussian_vec(&mut r, 1)[0];
        }
    }
    m.project();
    m
}

#[test]
fn forecasters_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for (k, (kind, single)) in [
        (BackboneKind::PerNodeLinear, false),
        (BackboneKind::GraphMlp, true),
    ]
    .into_iter()
    .enumerate()
    {
        let cfg = config(kind, single);
        let ds = load_dataset(&cfg, 1).unwrap();
        let m = perturbed(build_forecaster(&cfg, ds.graph(), 2, 1, true).unwrap());
        let path = dir.path().join(format!("m{k}.json"));
        save_json(&path, &ForecasterCheckpoint::from_forecaster(&m)).unwrap();
        let back = load_json::<ForecasterCheckpoint>(&path).unwrap().to_forecaster(ds.graph()).unwrap();
        assert_eq!(back, m);
    }
}

#[test]
fn wrong_graph_is_refused() {
    let cfg = config(BackboneKind::PerNodeLinear, false);
    let ds = load_dataset(&cfg, 1).unwrap();
    let other = load_dataset(&cfg, 2).unwrap();
    assert_ne!(ds.graph(), other.graph());
    let m = build_forecaster(&cfg, ds.graph(), 2, 1, true).unwrap();
    let ck = ForecasterCheckpoint::from_forecaster(&m);
    assert!(matches!(ck.to_forecaster(other.graph()), Err(RrnError::GraphMismatch(_))));
    let tk = TransformCheckpoint::from_transform(m.transform.as_ref().unwrap());
    assert!(matches!(tk.to_transform(other.graph()), Err(RrnError::GraphMismatch(_))));
}

#[test]
fn unknown_fields_are_rejected() {
    let cfg = config(BackboneKind::PerNodeLinear, false);
    let ds = load_dataset(&cfg, 1).unwrap();
    let m = build_forecaster(&cfg, ds.graph(), 2, 1, false).unwrap();
    let mut v = serde_json::to_value(ForecasterCheckpoint::from_forecaster(&m)).unwrap();
    v["extra"] = serde_json::json!(1);
    assert!(serde_json::from_value::<ForecasterCheckpoint>(v).is_err());
}
