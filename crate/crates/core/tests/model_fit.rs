//! Body model through its file format, posed, and recovered by fitting.

use evscan_core::body::{load_model, skin, BodyParams};
use evscan_core::fit::{fit, initial_params, FitConfig, FitResult};
use evscan_core::geometry::Vec3;
use evscan_core::io::{decode_model, encode_model, parse_obj, write_obj};
use evscan_core::metrics::{chamfer_distance, pel_mpjpe};
use evscan_core::toy::{make_toy_model, ToySpec, L_ELBOW, PELVIS, R_ELBOW};

#[test]
fn model_file_round_trip_poses_identically() {
    let model = make_toy_model(&ToySpec::default()).unwrap();
    let path = std::env::temp_dir().join(format!("evscan-model-{}.evm", std::process::id()));
    std::fs::write(&path, encode_model(&model)).unwrap();
    let loaded = load_model(&path).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert_eq!(loaded.arrays(), model.arrays());

    let mut p = BodyParams::zeros(&model);
    p.beta[1] = -0.7;
    p.theta[3 * L_ELBOW + 1] = 0.5;
    p.t = Vec3::new(0.1, -0.2, 0.3);
    let a = skin(&model, &p).unwrap();
    let b = skin(&decode_model(&encode_model(&loaded)).unwrap(), &p).unwrap();
    assert_eq!(a.mesh.vertices, b.mesh.vertices);
    assert_eq!(a.joints, b.joints);
}

#[test]
fn fit_recovers_pose_and_shape_from_a_mesh_file() {
    let model = make_toy_model(&ToySpec::default()).unwrap();
    let mut gt = BodyParams::zeros(&model);
    gt.beta[0] = 0.4;
    gt.theta[3 * L_ELBOW + 2] = -0.35;
    gt.theta[3 * R_ELBOW + 2] = 0.25;
    gt.t = Vec3::new(0.3, -0.1, 0.2);
    let posed = skin(&model, &gt).unwrap();
    let target = parse_obj(&write_obj(&posed.mesh)).unwrap();

    let init = initial_params(&model, &target).unwrap();
    let cfg = FitConfig { iters: 300, n_samples: 4000, ..Default::default() };
    let res = fit(&model, &target, &init, &cfg).unwrap();
    let json = serde_json::to_string(&res).unwrap();
    let back: FitResult = serde_json::from_str(&json).unwrap();
    assert_eq!(back, res);

    let fitted = skin(&model, &res.params).unwrap();
    let err = pel_mpjpe(&fitted.joints, &posed.joints, PELVIS).unwrap();
    assert!(err < 15.0, "PEL-MPJPE {err:.1} mm");
    let before = chamfer_distance(&posed.mesh, &skin(&model, &init).unwrap().mesh, 20_000, 0).unwrap();
    let after = chamfer_distance(&posed.mesh, &fitted.mesh, 20_000, 0).unwrap();
    assert!(after.cd_mm2 < 0.25 * before.cd_mm2, "CD {:.1} -> {:.1} mm²", before.cd_mm2, after.cd_mm2);
}
