//! Encoding annotations into target maps and decoding them back must be a
//! perfect round trip: exact positions, exact classes, headings to within
//! arithmetic noise, and nothing extra.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use raddet_core::inference::{decode_frame, DecodeParams, FrameMaps};
use raddet_core::labeling::{build_targets, LabelConfig, LabelMode};
use raddet_core::sim::{render_frame, sample_scene, DatasetSpec, ScenePreset};
use raddet_core::RadarGeometry;

fn run_inversion(mode: LabelMode, seed: u64) {
    let geometry = RadarGeometry::default();
    let spec = DatasetSpec {
        class_counts: [1, 1, 1],
        seed,
        preset: ScenePreset::Standard,
        ..DatasetSpec::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = sample_scene(&spec, &mut rng);
    assert_eq!(scene.len(), 3, "seed {seed} failed to place all objects");
    let (frame, anns) = render_frame(&scene, &geometry, 0.05, 0, &mut rng).unwrap();

    let cfg = LabelConfig {
        mode,
        ..LabelConfig::default()
    };
    let targets = build_targets(&frame.ra, &anns, &cfg).unwrap();
    let maps = FrameMaps::from_targets(&targets);
    let dets = decode_frame(&maps, &geometry, &DecodeParams::default());

    assert_eq!(
        dets.len(),
        anns.len(),
        "seed {seed}: expected exactly one detection per annotation"
    );
    for ann in &anns {
        let hit = dets
            .iter()
            .find(|d| d.class_id == ann.class_id)
            .unwrap_or_else(|| panic!("seed {seed}: class {} missing", ann.class_id));
        let dr = (hit.pos_bins.0 - ann.center_bin_r).abs();
        let da = (hit.pos_bins.1 - ann.center_bin_a).abs();
        assert!(dr < 1e-9 && da < 1e-9, "seed {seed}: position error {dr}/{da}");
        let heading = hit.heading_rad.expect("heading present");
        let err = raddet_core::geometry::angular_error(heading, ann.heading_rad);
        assert!(err < 1e-9, "seed {seed}: heading error {err}");
        assert!(hit.confidence > 0.1);
    }
}

#[test]
fn inversion_bivariate_labels() {
    for seed in [1, 2, 3, 4, 5] {
        run_inversion(LabelMode::Bivariate, seed);
    }
}

#[test]
fn inversion_gaussian_labels() {
    for seed in [11, 12, 13] {
        run_inversion(LabelMode::Gaussian, seed);
    }
}

#[test]
fn bivariate_recovery_roundtrip_20_cases() {
    // Render isolated blobs through the simulator, then measure them back:
    // mean within half a bin, sigmas within 15%.
    let geometry = RadarGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for seed in 0..20u64 {
        use rand::Rng;
        let class = (seed % 3) as u8;
        let range = 12.0 + (seed as f64) * 1.4;
        let az = rng.gen_range(-0.8..0.8);
        let obj =
            raddet_core::sim::SceneObject::with_class_defaults(class, range, az, (0.0, 0.0));
        let (frame, anns) = render_frame(&[obj.clone()], &geometry, 0.0, 0, &mut rng).unwrap();
        let p = raddet_core::labeling::bivariate_from_spectrum(&frame.ra, anns[0].box_ra, 0.5)
            .unwrap();

        let sr_true = obj.sigma_r_bins * (1.0 + range / geometry.r_max_m);
        let smear = (1.0 / az.cos()).min(raddet_core::sim::ANGLE_SMEAR_CAP);
        let sa_true = obj.sigma_a_bins * smear;

        assert!(
            (p.mu.0 - anns[0].center_bin_r).abs() < 0.5,
            "case {seed}: mu_r {} vs {}",
            p.mu.0,
            anns[0].center_bin_r
        );
        assert!((p.mu.1 - anns[0].center_bin_a).abs() < 0.5);
        assert!(
            (p.sigma.0 - sr_true).abs() / sr_true < 0.15,
            "case {seed}: sigma_r {} vs {sr_true}",
            p.sigma.0
        );
        assert!(
            (p.sigma.1 - sa_true).abs() / sa_true < 0.15,
            "case {seed}: sigma_a {} vs {sa_true}",
            p.sigma.1
        );
        checked += 1;
    }
    assert_eq!(checked, 20);
}
