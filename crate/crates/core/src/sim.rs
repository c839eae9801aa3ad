//! Synthetic radar scenes: moving point targets rendered as anisotropic
//! Gaussian blobs on the three magnitude views, plus scene/sequence sampling
//! for dataset generation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{cartesian_to_polar, polar_to_cartesian, radial_velocity, RadarGeometry};
use crate::labeling::{quantize_center, Annotation};
use crate::{CoreError, Map2d, Result};

pub const CLASS_NAMES: [&str; 3] = ["pedestrian", "cyclist", "car"];
/// Doppler spread of a point target, in bins.
pub const DOPPLER_SIGMA_BINS: f64 = 1.0;
/// Angular smear factor `1/cos(az)` is capped here.
pub const ANGLE_SMEAR_CAP: f64 = 3.0;

/// Default render amplitude and base spread per class, ordered by radar
/// cross section: pedestrian < cyclist < car.
pub fn class_defaults(class_id: u8) -> (f64, f64, f64) {
    match class_id {
        0 => (0.4, 1.0, 1.5),
        1 => (0.6, 1.5, 2.0),
        _ => (1.0, 2.0, 3.5),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub class_id: u8,
    pub range_m: f64,
    pub azimuth_rad: f64,
    /// Cartesian bird's-eye velocity (vx, vy) in m/s.
    pub vel: (f64, f64),
    pub rcs_amp: f64,
    pub sigma_r_bins: f64,
    pub sigma_a_bins: f64,
}

impl SceneObject {
    pub fn with_class_defaults(
        class_id: u8,
        range_m: f64,
        azimuth_rad: f64,
        vel: (f64, f64),
    ) -> Self {
        let (amp, sr, sa) = class_defaults(class_id);
        SceneObject {
            class_id,
            range_m,
            azimuth_rad,
            vel,
            rcs_amp: amp,
            sigma_r_bins: sr,
            sigma_a_bins: sa,
        }
    }

    /// Velocity direction in the project heading convention.
    pub fn heading(&self) -> f64 {
        self.vel.0.atan2(self.vel.1)
    }

    pub fn cartesian(&self) -> (f64, f64) {
        polar_to_cartesian(self.range_m, self.azimuth_rad)
    }
}

/// One radar capture: the three magnitude views plus geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarFrame {
    /// Range x angle.
    pub ra: Map2d,
    /// Range x Doppler.
    pub rd: Map2d,
    /// Angle x Doppler.
    pub ad: Map2d,
    pub geometry: RadarGeometry,
    pub frame_index: usize,
}

fn add_blob(map: &mut Map2d, c0: f64, c1: f64, s0: f64, s1: f64, amp: f64) {
    for i in 0..map.rows {
        let d0 = (i as f64 - c0) / s0;
        let e0 = (-0.5 * (d0 * d0)).exp();
        for j in 0..map.cols {
            let d1 = (j as f64 - c1) / s1;
            *map.at_mut(i, j) += amp * e0 * (-0.5 * (d1 * d1)).exp();
        }
    }
}

fn contour_box(c0: f64, s0: f64, n0: usize, c1: f64, s1: f64, n1: usize) -> [usize; 4] {
    let lo = |c: f64, s: f64| ((c - 3.0 * s).floor().max(0.0)) as usize;
    let hi = |c: f64, s: f64, n: usize| ((c + 3.0 * s).ceil() as usize).min(n - 1);
    [lo(c0, s0), lo(c1, s1), hi(c0, s0, n0), hi(c1, s1, n1)]
}

/// Effective render spreads (range-inflated, angle-smeared), in bins.
pub fn effective_spread(obj: &SceneObject, geometry: &RadarGeometry) -> (f64, f64) {
    let sr = obj.sigma_r_bins * (1.0 + obj.range_m / geometry.r_max_m);
    let smear = (1.0 / obj.azimuth_rad.cos().abs().max(1e-9)).min(ANGLE_SMEAR_CAP);
    (sr, obj.sigma_a_bins * smear)
}

/// The 3-sigma range-angle contour box this object will render to.
pub fn ra_box(obj: &SceneObject, geometry: &RadarGeometry) -> [usize; 4] {
    let (sr, sa) = effective_spread(obj, geometry);
    let cr = geometry.range_to_bin(obj.range_m);
    let ca = geometry.azimuth_to_bin(obj.azimuth_rad);
    contour_box(cr, sr, geometry.r_bins, ca, sa, geometry.a_bins)
}

/// Renders a scene into the three views and derives its annotations.
///
/// Per object: the range-angle blob widens with distance
/// (`sigma_r * (1 + range/r_max)`) and with boresight angle (capped
/// `1/cos`); range-Doppler and angle-Doppler blobs sit at the radial
/// velocity's bin. Additive noise is half-normal with scale `noise_sigma`.
/// Annotation centers are the rendered blob centers (quantized to the
/// 1/256-bin grid), boxes the 3-sigma contours, heading the velocity
/// direction.
pub fn render_frame(
    scene: &[SceneObject],
    geometry: &RadarGeometry,
    noise_sigma: f64,
    frame_index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(RadarFrame, Vec<Annotation>)> {
    geometry.validate()?;
    let (nr, na, nd) = (geometry.r_bins, geometry.a_bins, geometry.d_bins);
    let mut ra = Map2d::zeros(nr, na);
    let mut rd = Map2d::zeros(nr, nd);
    let mut ad = Map2d::zeros(na, nd);
    let mut annotations = Vec::with_capacity(scene.len());

    for (index, obj) in scene.iter().enumerate() {
        if !geometry.in_bounds(obj.range_m, obj.azimuth_rad) {
            return Err(CoreError::ObjectOutOfBounds {
                index,
                range_m: obj.range_m,
                azimuth_deg: obj.azimuth_rad.to_degrees(),
            });
        }
        let cr = quantize_center(geometry.range_to_bin(obj.range_m));
        let ca = quantize_center(geometry.azimuth_to_bin(obj.azimuth_rad));
        let v_r = radial_velocity(obj.azimuth_rad, obj.vel.0, obj.vel.1)
            .clamp(-geometry.v_max_mps, geometry.v_max_mps);
        let cd = quantize_center(geometry.velocity_to_bin(v_r));

        let (sr, sa) = effective_spread(obj, geometry);

        add_blob(&mut ra, cr, ca, sr, sa, obj.rcs_amp);
        add_blob(&mut rd, cr, cd, sr, DOPPLER_SIGMA_BINS, obj.rcs_amp);
        add_blob(&mut ad, ca, cd, sa, DOPPLER_SIGMA_BINS, obj.rcs_amp);

        annotations.push(Annotation {
            class_id: obj.class_id,
            center_bin_r: cr,
            center_bin_a: ca,
            box_ra: contour_box(cr, sr, nr, ca, sa, na),
            box_rd: contour_box(cr, sr, nr, cd, DOPPLER_SIGMA_BINS, nd),
            heading_rad: obj.heading(),
        });
    }

    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma)
            .map_err(|e| CoreError::Config(format!("noise sigma: {e}")))?;
        for map in [&mut ra, &mut rd, &mut ad] {
            for v in &mut map.data {
                *v += normal.sample(rng).abs();
            }
        }
    }

    Ok((
        RadarFrame {
            ra,
            rd,
            ad,
            geometry: *geometry,
            frame_index,
        },
        annotations,
    ))
}

/// Constant-velocity update in Cartesian coordinates; objects that leave the
/// field of view are dropped (and logged).
pub fn advance_scene(scene: &[SceneObject], geometry: &RadarGeometry, dt: f64) -> Vec<SceneObject> {
    assert!(dt > 0.0, "dt must be positive");
    let mut out = Vec::with_capacity(scene.len());
    for (index, obj) in scene.iter().enumerate() {
        let (x, y) = obj.cartesian();
        let (nx, ny) = (x + obj.vel.0 * dt, y + obj.vel.1 * dt);
        let (range, az) = cartesian_to_polar(nx, ny);
        if !geometry.in_bounds(range, az) {
            log::warn!(
                "object {index} (class {}) left bounds at range {range:.1} m, azimuth {:.1} deg; dropped",
                obj.class_id,
                az.to_degrees()
            );
            continue;
        }
        out.push(SceneObject {
            range_m: range,
            azimuth_rad: az,
            ..obj.clone()
        });
    }
    out
}

/// Scene style for dataset generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenePreset {
    /// Class-typical amplitudes, spreads, and speeds.
    Standard,
    /// Two classes with identical range-angle appearance that differ only in
    /// speed, so only the Doppler views separate them.
    DopplerConfusable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSpec {
    /// Objects per scene for pedestrian/cyclist/car.
    pub class_counts: [usize; 3],
    pub n_sequences: usize,
    pub frames_per_sequence: usize,
    pub geometry: RadarGeometry,
    pub noise_sigma: f64,
    pub frame_dt: f64,
    pub seed: u64,
    pub preset: ScenePreset,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            class_counts: [1, 1, 1],
            n_sequences: 60,
            frames_per_sequence: 5,
            geometry: RadarGeometry::default(),
            noise_sigma: 0.05,
            frame_dt: 0.1,
            seed: 0,
            preset: ScenePreset::Standard,
        }
    }
}

fn class_speed_range(class_id: u8) -> (f64, f64) {
    match class_id {
        0 => (0.5, 1.5),
        1 => (2.0, 6.0),
        _ => (3.0, 9.0),
    }
}

const MIN_SEPARATION_M: f64 = 8.0;
/// Spawn-time clearance between 3-sigma boxes, bins; absorbs the drift a
/// short constant-velocity sequence can accumulate.
const BOX_MARGIN_BINS: (usize, usize) = (5, 8);

fn boxes_clear(a: [usize; 4], b: [usize; 4], margin: (usize, usize)) -> bool {
    let gap_r = a[2] + margin.0 < b[0] || b[2] + margin.0 < a[0];
    let gap_a = a[3] + margin.1 < b[1] || b[3] + margin.1 < a[1];
    gap_r || gap_a
}

/// Samples one scene with pairwise clearance both in Cartesian distance
/// (detections stay unambiguous at the association thresholds) and between
/// rendered blob boxes (a bright neighbor inside an annotation box would
/// corrupt its spectrum-measured statistics).
pub fn sample_scene(spec: &DatasetSpec, rng: &mut ChaCha8Rng) -> Vec<SceneObject> {
    let mut objects: Vec<SceneObject> = Vec::new();
    // Stay away from the extreme angular-smear region.
    let fov_margin = spec.geometry.fov_rad() / 2.0 * (5.0 / 9.0);
    // Widest blobs first; small objects still fit once the cars are down.
    for class_id in (0..3u8).rev() {
        for _ in 0..spec.class_counts[class_id as usize] {
            let mut placed = false;
            for _try in 0..1000 {
                let range = rng.gen_range(10.0..42.0);
                let az = rng.gen_range(-fov_margin..fov_margin);
                let obj = match spec.preset {
                    ScenePreset::Standard => {
                        let speed = {
                            let (lo, hi) = class_speed_range(class_id);
                            rng.gen_range(lo..hi)
                        };
                        let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                        let (amp, sr, sa) = class_defaults(class_id);
                        SceneObject {
                            class_id,
                            range_m: range,
                            azimuth_rad: az,
                            vel: (speed * heading.sin(), speed * heading.cos()),
                            rcs_amp: amp * rng.gen_range(0.85..1.15),
                            sigma_r_bins: sr * rng.gen_range(0.9..1.1),
                            sigma_a_bins: sa * rng.gen_range(0.9..1.1),
                        }
                    }
                    ScenePreset::DopplerConfusable => {
                        // Shared appearance; speed is the only class cue, and
                        // motion is kept near-radial so it shows in Doppler.
                        let speed = if class_id == 0 {
                            rng.gen_range(1.5..2.5)
                        } else {
                            rng.gen_range(8.0..12.0)
                        };
                        let toward = if rng.gen_bool(0.5) {
                            0.0
                        } else {
                            std::f64::consts::PI
                        };
                        let heading = az + toward + rng.gen_range(-0.3..0.3);
                        SceneObject {
                            class_id,
                            range_m: range,
                            azimuth_rad: az,
                            vel: (speed * heading.sin(), speed * heading.cos()),
                            rcs_amp: 0.7 * rng.gen_range(0.9..1.1),
                            sigma_r_bins: 1.5 * rng.gen_range(0.95..1.05),
                            sigma_a_bins: 2.0 * rng.gen_range(0.95..1.05),
                        }
                    }
                };
                let (x, y) = obj.cartesian();
                let bbox = ra_box(&obj, &spec.geometry);
                let clear = objects.iter().all(|o| {
                    let (ox, oy) = o.cartesian();
                    let far_enough =
                        ((x - ox).powi(2) + (y - oy).powi(2)).sqrt() >= MIN_SEPARATION_M;
                    far_enough && boxes_clear(bbox, ra_box(o, &spec.geometry), BOX_MARGIN_BINS)
                });
                if !clear {
                    continue;
                }
                objects.push(obj);
                placed = true;
                break;
            }
            if !placed {
                log::warn!("could not place class {class_id} object with clearance; skipped");
            }
        }
    }
    objects.sort_by_key(|o| o.class_id);
    objects
}

/// One generated sequence: frames in time order with their annotations.
pub struct GeneratedSequence {
    pub frames: Vec<(RadarFrame, Vec<Annotation>)>,
}

/// Renders `n_sequences` constant-velocity sequences; deterministic in
/// `spec.seed` (each sequence derives its own stream).
pub fn generate_sequences(spec: &DatasetSpec) -> Result<Vec<GeneratedSequence>> {
    spec.geometry.validate()?;
    if spec.frames_per_sequence == 0 {
        return Err(CoreError::Config("frames_per_sequence must be >= 1".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sequences = Vec::with_capacity(spec.n_sequences);
    for _ in 0..spec.n_sequences {
        let seq_seed = master.gen::<u64>();
        let mut rng = ChaCha8Rng::seed_from_u64(seq_seed);
        let mut scene = sample_scene(spec, &mut rng);
        let mut frames = Vec::with_capacity(spec.frames_per_sequence);
        for f in 0..spec.frames_per_sequence {
            let (frame, anns) = render_frame(&scene, &spec.geometry, spec.noise_sigma, f, &mut rng)?;
            frames.push((frame, anns));
            if f + 1 < spec.frames_per_sequence {
                scene = advance_scene(&scene, &spec.geometry, spec.frame_dt);
            }
        }
        sequences.push(GeneratedSequence { frames });
    }
    Ok(sequences)
}

/// Deterministic 70/10/20 split of sequence indices.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    // Distinct stream from the scene sampler.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7331);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        indices.swap(i, j);
    }
    let n_train = (n as f64 * 0.7).floor() as usize;
    let n_val = (n as f64 * 0.1).floor() as usize;
    let mut train: Vec<usize> = indices[..n_train].to_vec();
    let mut val: Vec<usize> = indices[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = indices[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    (train, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn empty_scene_no_noise_is_zero() {
        let g = RadarGeometry::default();
        let (frame, anns) = render_frame(&[], &g, 0.0, 0, &mut rng()).unwrap();
        assert!(anns.is_empty());
        assert!(frame.ra.data.iter().all(|&v| v == 0.0));
        assert!(frame.rd.data.iter().all(|&v| v == 0.0));
        assert!(frame.ad.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn static_car_argmax_at_expected_bins() {
        let g = RadarGeometry::default();
        let car = SceneObject::with_class_defaults(2, 25.0, 0.0, (0.0, 0.0));
        let (frame, anns) = render_frame(&[car], &g, 0.0, 0, &mut rng()).unwrap();
        let (r, a) = frame.ra.argmax();
        assert_eq!(r, g.range_to_bin(25.0).round() as usize);
        assert_eq!(a, g.a_bins / 2);
        // Doppler argmax at the zero-velocity bin (fractional center, so
        // within half a bin of it).
        let (_, d) = frame.rd.argmax();
        assert!((d as f64 - g.velocity_to_bin(0.0)).abs() <= 0.5 + 1e-9);
        // Annotation center is the blob argmax.
        assert_eq!(anns[0].center_bin_r.round() as usize, r);
        assert_eq!(anns[0].center_bin_a.round() as usize, a);
    }

    #[test]
    fn range_spread_grows_with_distance() {
        let g = RadarGeometry::default();
        let near = SceneObject::with_class_defaults(0, 10.0, 0.0, (0.0, 0.0));
        let far = SceneObject::with_class_defaults(0, 40.0, 0.0, (0.0, 0.0));
        let (f_near, a_near) = render_frame(&[near], &g, 0.0, 0, &mut rng()).unwrap();
        let (f_far, a_far) = render_frame(&[far], &g, 0.0, 0, &mut rng()).unwrap();
        let fit = |f: &RadarFrame, ann: &Annotation| {
            crate::labeling::bivariate_from_spectrum(&f.ra, ann.box_ra, 0.5)
                .unwrap()
                .sigma
                .0
        };
        let s_near = fit(&f_near, &a_near[0]);
        let s_far = fit(&f_far, &a_far[0]);
        assert!(s_far > s_near, "sigma_r {s_far} should exceed {s_near}");
    }

    #[test]
    fn out_of_bounds_object_is_an_error() {
        let g = RadarGeometry::default();
        let obj = SceneObject::with_class_defaults(0, 3.0, 0.0, (0.0, 0.0));
        let err = render_frame(&[obj], &g, 0.0, 0, &mut rng()).unwrap_err();
        assert!(err.to_string().contains("out of bounds"));
    }

    #[test]
    fn advance_zero_velocity_fixed_point() {
        let g = RadarGeometry::default();
        let obj = SceneObject::with_class_defaults(1, 20.0, 0.3, (0.0, 0.0));
        let out = advance_scene(&[obj.clone()], &g, 0.1);
        assert!((out[0].range_m - 20.0).abs() < 1e-12);
        assert!((out[0].azimuth_rad - 0.3).abs() < 1e-12);
    }

    #[test]
    fn advance_downrange_adds_range() {
        let g = RadarGeometry::default();
        let obj = SceneObject::with_class_defaults(1, 20.0, 0.0, (0.0, 10.0));
        let out = advance_scene(&[obj], &g, 0.1);
        assert!((out[0].range_m - 21.0).abs() < 1e-12);
    }

    #[test]
    fn advance_five_small_steps_equal_one_big() {
        let g = RadarGeometry::default();
        let obj = SceneObject::with_class_defaults(2, 25.0, -0.4, (3.0, -2.0));
        let mut scene = vec![obj.clone()];
        for _ in 0..5 {
            scene = advance_scene(&scene, &g, 0.1);
        }
        let big = advance_scene(&[obj], &g, 0.5);
        assert!((scene[0].range_m - big[0].range_m).abs() < 1e-12);
        assert!((scene[0].azimuth_rad - big[0].azimuth_rad).abs() < 1e-12);
    }

    #[test]
    fn advance_drops_escaping_object() {
        let g = RadarGeometry::default();
        let obj = SceneObject::with_class_defaults(2, 49.5, 0.0, (0.0, 13.0));
        let out = advance_scene(&[obj], &g, 0.1);
        assert!(out.is_empty());
    }

    #[test]
    fn split_is_70_10_20() {
        let (train, val, test) = split_indices(10, 7);
        assert_eq!(train.len(), 7);
        assert_eq!(val.len(), 1);
        assert_eq!(test.len(), 2);
        let mut all: Vec<usize> = train.iter().chain(&val).chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DatasetSpec {
            n_sequences: 2,
            frames_per_sequence: 3,
            ..DatasetSpec::default()
        };
        let a = generate_sequences(&spec).unwrap();
        let b = generate_sequences(&spec).unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            for ((fa, aa), (fb, ab)) in sa.frames.iter().zip(&sb.frames) {
                assert_eq!(fa.ra.data, fb.ra.data);
                assert_eq!(fa.rd.data, fb.rd.data);
                assert_eq!(aa, ab);
            }
        }
    }
}
