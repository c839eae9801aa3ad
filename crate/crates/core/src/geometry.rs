//! Radar cube geometry and the bin/metric coordinate mappings used
//! everywhere else.
//!
//! Conventions, fixed project-wide:
//! - range bin `r` maps to `r * r_max_m / r_bins` meters (bin 0 = 0 m);
//! - azimuth spans `[-fov/2, +fov/2]`, bin `a` at
//!   `a / a_bins * fov - fov/2` (so azimuth 0 sits at bin `a_bins/2`);
//! - Doppler bin 0 is `-v_max_mps`, bin `d_bins-1` is `+v_max_mps`;
//! - Cartesian bird's-eye frame: `x = r sin(az)`, `y = r cos(az)` (y points
//!   downrange);
//! - heading is the direction of the velocity vector,
//!   `theta = atan2(vx, vy)` in `(-pi, pi]`: 0 means moving downrange,
//!   positive toward increasing azimuth.

use serde::{Deserialize, Serialize};

use crate::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarGeometry {
    pub r_bins: usize,
    pub a_bins: usize,
    pub d_bins: usize,
    pub r_max_m: f64,
    pub fov_deg: f64,
    pub v_max_mps: f64,
}

impl Default for RadarGeometry {
    fn default() -> Self {
        RadarGeometry {
            r_bins: 64,
            a_bins: 64,
            d_bins: 16,
            r_max_m: 50.0,
            fov_deg: 180.0,
            v_max_mps: 13.0,
        }
    }
}

/// Objects closer than this are not rendered (near-field clutter region).
pub const MIN_RANGE_M: f64 = 5.0;

impl RadarGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.r_bins < 8 || self.a_bins < 8 || self.d_bins < 8 {
            return Err(CoreError::Geometry(format!(
                "all bin counts must be >= 8, got {}x{}x{}",
                self.r_bins, self.a_bins, self.d_bins
            )));
        }
        if self.r_max_m <= MIN_RANGE_M || self.fov_deg <= 0.0 || self.v_max_mps <= 0.0 {
            return Err(CoreError::Geometry("non-positive extents".into()));
        }
        Ok(())
    }

    pub fn fov_rad(&self) -> f64 {
        self.fov_deg.to_radians()
    }

    /// Range resolution in meters per bin.
    pub fn r_res(&self) -> f64 {
        self.r_max_m / self.r_bins as f64
    }

    pub fn range_to_bin(&self, range_m: f64) -> f64 {
        range_m / self.r_res()
    }

    pub fn bin_to_range(&self, r_bin: f64) -> f64 {
        r_bin * self.r_res()
    }

    pub fn azimuth_to_bin(&self, az_rad: f64) -> f64 {
        (az_rad + self.fov_rad() / 2.0) / self.fov_rad() * self.a_bins as f64
    }

    pub fn bin_to_azimuth(&self, a_bin: f64) -> f64 {
        a_bin / self.a_bins as f64 * self.fov_rad() - self.fov_rad() / 2.0
    }

    /// Doppler bin of a radial velocity (positive = receding).
    pub fn velocity_to_bin(&self, v_mps: f64) -> f64 {
        (v_mps + self.v_max_mps) / (2.0 * self.v_max_mps) * (self.d_bins - 1) as f64
    }

    pub fn bin_to_velocity(&self, d_bin: f64) -> f64 {
        d_bin / (self.d_bins - 1) as f64 * 2.0 * self.v_max_mps - self.v_max_mps
    }

    /// Cartesian position of fractional map bins.
    pub fn bins_to_cartesian(&self, r_bin: f64, a_bin: f64) -> (f64, f64) {
        polar_to_cartesian(self.bin_to_range(r_bin), self.bin_to_azimuth(a_bin))
    }

    pub fn in_bounds(&self, range_m: f64, az_rad: f64) -> bool {
        (MIN_RANGE_M..=self.r_max_m).contains(&range_m) && az_rad.abs() <= self.fov_rad() / 2.0
    }
}

/// `x = r sin(az)`, `y = r cos(az)`.
pub fn polar_to_cartesian(range_m: f64, az_rad: f64) -> (f64, f64) {
    (range_m * az_rad.sin(), range_m * az_rad.cos())
}

pub fn cartesian_to_polar(x: f64, y: f64) -> (f64, f64) {
    ((x * x + y * y).sqrt(), x.atan2(y))
}

/// Radial velocity of a Cartesian velocity seen from the sensor at the
/// object's azimuth (positive = moving away).
pub fn radial_velocity(az_rad: f64, vx: f64, vy: f64) -> f64 {
    vx * az_rad.sin() + vy * az_rad.cos()
}

/// Wraps an angle difference into `[-pi, pi]` and returns its magnitude.
pub fn angular_error(a: f64, b: f64) -> f64 {
    let d = a - b;
    d.sin().atan2(d.cos()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polar_axes() {
        let (x, y) = polar_to_cartesian(10.0, 0.0);
        assert!((x - 0.0).abs() < 1e-12 && (y - 10.0).abs() < 1e-12);
        let (x, y) = polar_to_cartesian(10.0, std::f64::consts::FRAC_PI_2);
        assert!((x - 10.0).abs() < 1e-12 && y.abs() < 1e-9);
    }

    #[test]
    fn doppler_bin_endpoints() {
        let g = RadarGeometry::default();
        assert_eq!(g.velocity_to_bin(-g.v_max_mps), 0.0);
        assert_eq!(g.velocity_to_bin(g.v_max_mps), (g.d_bins - 1) as f64);
    }

    #[test]
    fn azimuth_center_bin() {
        let g = RadarGeometry::default();
        assert_eq!(g.azimuth_to_bin(0.0), g.a_bins as f64 / 2.0);
    }

    #[test]
    fn angular_error_wraps() {
        let e = angular_error(175f64.to_radians(), -175f64.to_radians());
        assert!((e - 10f64.to_radians()).abs() < 1e-12);
    }
}
