#pragma once

#include <Eigen/Core>

#include <vector>

#include "vpfc/errors.hpp"

namespace vpfc::geom {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kRadToDeg = 180.0 / kPi;

// Unit head rotation, (w, x, y, z) component order. Frame convention throughout:
// right-handed, +X forward, +Z up.
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

// Viewing direction on the sphere, degrees. lat in [-90, 90], lon in [-180, 180].
struct GazeAngle {
    double lat = 0.0;
    double lon = 0.0;
};

struct Viewport {
    GazeAngle center;
    double h_fov = 110.0;  // degrees, (0, 360]
    double v_fov = 90.0;   // degrees, (0, 180]
};

// Row-major rows x cols tiling of an equirectangular frame.
struct TileGrid {
    int rows = 4;
    int cols = 8;
    int frame_width = 512;
    int frame_height = 256;
};

inline double dot(const Quaternion& a, const Quaternion& b) {
    return a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z;
}

inline double norm(const Quaternion& q) { return std::sqrt(dot(q, q)); }

inline Quaternion conjugate(const Quaternion& q) { return {q.w, -q.x, -q.y, -q.z}; }

inline Quaternion negate(const Quaternion& q) { return {-q.w, -q.x, -q.y, -q.z}; }

// Hamilton product; multiply(a, b) applies b first, then a.
inline Quaternion multiply(const Quaternion& a, const Quaternion& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

// Sign canonicalization only; input must already be unit norm. q and -q encode the
// same rotation, so one representative is picked: w >= 0, ties broken by the first
// nonzero vector component.
Quaternion canonical(const Quaternion& q);

// Unit-norm, canonical-sign copy. Throws ZeroNorm when the norm is below 1e-12.
Quaternion normalize(const Quaternion& q);

Eigen::Vector3d rotate(const Quaternion& q, const Eigen::Vector3d& v);

// Direction of the rotated forward vector (+X): lat = asin(v_z), lon = atan2(v_y, v_x).
GazeAngle quat_to_gaze(const Quaternion& q);

// Zero-roll inverse of quat_to_gaze: yaw about +Z by lon, then pitch about +Y by -lat.
Quaternion gaze_to_quat(const GazeAngle& g);

// Great-circle angle between two gaze directions, degrees in [0, 180]:
// arccos(sin x sin x' + cos x cos x' cos|y - y'|) with x = lat, y = lon.
double angle_error_deg(const GazeAngle& actual, const GazeAngle& predicted);

// Shortest-path spherical interpolation between unit quaternions; falls back to
// normalized lerp when the endpoints are nearly parallel. Result is canonical.
Quaternion slerp(const Quaternion& a, const Quaternion& b, double t);

// Containing tile of one gaze direction: project to the equirectangular frame,
// round to the nearest pixel, clamp, and index row-major.
int tile_of(const GazeAngle& g, const TileGrid& grid);

// Tiles touched by the viewport: a 64x64 grid of (azimuth, elevation) offsets over
// [-h_fov/2, +h_fov/2] x [-v_fov/2, +v_fov/2] is rotated into world coordinates by
// gaze_to_quat(center) and each sample's containing tile is marked. Sorted, unique.
std::vector<int> tiles_covered(const Viewport& v, const TileGrid& grid);

// Same algorithm at an arbitrary sampling density (test oracle hook).
std::vector<int> tiles_covered_sampled(const Viewport& v, const TileGrid& grid, int samples_az,
                                       int samples_el);

}  // namespace vpfc::geom
