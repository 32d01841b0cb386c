#include "vpfc/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace vpfc::geom {

namespace {

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

Quaternion canonical(const Quaternion& q) {
    if (q.w > 0.0) return q;
    if (q.w < 0.0) return negate(q);
    // w == 0: first nonzero of (x, y, z) decides the sign.
    for (double c : {q.x, q.y, q.z}) {
        if (c > 0.0) return q;
        if (c < 0.0) return negate(q);
    }
    return q;
}

Quaternion normalize(const Quaternion& q) {
    const double n = norm(q);
    if (n <= 1e-12) throw ZeroNorm();
    return canonical({q.w / n, q.x / n, q.y / n, q.z / n});
}

Eigen::Vector3d rotate(const Quaternion& q, const Eigen::Vector3d& v) {
    // v' = v + 2 w (u x v) + 2 u x (u x v), u = (x, y, z)
    const Eigen::Vector3d u(q.x, q.y, q.z);
    const Eigen::Vector3d uv = u.cross(v);
    return v + 2.0 * (q.w * uv + u.cross(uv));
}

GazeAngle quat_to_gaze(const Quaternion& q) {
    const Eigen::Vector3d v = rotate(q, Eigen::Vector3d(1.0, 0.0, 0.0));
    GazeAngle g;
    g.lat = std::asin(clamp_unit(v.z())) * kRadToDeg;
    g.lon = std::atan2(v.y(), v.x()) * kRadToDeg;
    return g;
}

Quaternion gaze_to_quat(const GazeAngle& g) {
    const double half_yaw = 0.5 * g.lon * kDegToRad;
    const double half_pitch = -0.5 * g.lat * kDegToRad;
    const Quaternion yaw{std::cos(half_yaw), 0.0, 0.0, std::sin(half_yaw)};
    const Quaternion pitch{std::cos(half_pitch), 0.0, std::sin(half_pitch), 0.0};
    return normalize(multiply(yaw, pitch));
}

double angle_error_deg(const GazeAngle& actual, const GazeAngle& predicted) {
    const double x = actual.lat * kDegToRad;
    const double xh = predicted.lat * kDegToRad;
    const double dy = std::abs(actual.lon - predicted.lon) * kDegToRad;
    const double c = std::sin(x) * std::sin(xh) + std::cos(x) * std::cos(xh) * std::cos(dy);
    return std::acos(clamp_unit(c)) * kRadToDeg;
}

Quaternion slerp(const Quaternion& a, const Quaternion& b, double t) {
    Quaternion bb = b;
    double d = dot(a, b);
    if (d < 0.0) {  // shortest path
        bb = negate(bb);
        d = -d;
    }
    if (d > 1.0 - 1e-6) {
        const double s = 1.0 - t;
        return normalize({s * a.w + t * bb.w, s * a.x + t * bb.x, s * a.y + t * bb.y,
                          s * a.z + t * bb.z});
    }
    const double theta = std::acos(clamp_unit(d));
    const double sa = std::sin((1.0 - t) * theta) / std::sin(theta);
    const double sb = std::sin(t * theta) / std::sin(theta);
    return normalize({sa * a.w + sb * bb.w, sa * a.x + sb * bb.x, sa * a.y + sb * bb.y,
                      sa * a.z + sb * bb.z});
}

int tile_of(const GazeAngle& g, const TileGrid& grid) {
    const long w = grid.frame_width;
    const long h = grid.frame_height;
    long px = std::lround((g.lon + 180.0) / 360.0 * static_cast<double>(w));
    long py = std::lround((90.0 - g.lat) / 180.0 * static_cast<double>(h));
    px = std::clamp(px, 0L, w - 1);
    py = std::clamp(py, 0L, h - 1);
    const long col = px * grid.cols / w;
    const long row = py * grid.rows / h;
    return static_cast<int>(row * grid.cols + col);
}

std::vector<int> tiles_covered_sampled(const Viewport& v, const TileGrid& grid, int samples_az,
                                       int samples_el) {
    if (v.h_fov <= 0.0 || v.v_fov <= 0.0) throw DataError("viewport fov must be positive");
    if (grid.rows < 1 || grid.cols < 1 || grid.frame_width < 1 || grid.frame_height < 1)
        throw DataError("invalid tile grid");

    const Quaternion q = gaze_to_quat(v.center);
    std::vector<char> hit(static_cast<std::size_t>(grid.rows) * grid.cols, 0);

    for (int i = 0; i < samples_el; ++i) {
        const double el =
            samples_el == 1 ? 0.0 : -0.5 * v.v_fov + v.v_fov * i / (samples_el - 1.0);
        for (int j = 0; j < samples_az; ++j) {
            const double az =
                samples_az == 1 ? 0.0 : -0.5 * v.h_fov + v.h_fov * j / (samples_az - 1.0);
            // local frame: azimuth = longitude offset, elevation = latitude offset
            const double cel = std::cos(el * kDegToRad);
            const Eigen::Vector3d local(cel * std::cos(az * kDegToRad),
                                        cel * std::sin(az * kDegToRad),
                                        std::sin(el * kDegToRad));
            const Eigen::Vector3d world = rotate(q, local);
            GazeAngle g;
            g.lat = std::asin(clamp_unit(world.z())) * kRadToDeg;
            g.lon = std::atan2(world.y(), world.x()) * kRadToDeg;
            hit[static_cast<std::size_t>(tile_of(g, grid))] = 1;
        }
    }

    std::vector<int> tiles;
    for (std::size_t k = 0; k < hit.size(); ++k)
        if (hit[k]) tiles.push_back(static_cast<int>(k));
    return tiles;
}

std::vector<int> tiles_covered(const Viewport& v, const TileGrid& grid) {
    return tiles_covered_sampled(v, grid, 64, 64);
}

}  // namespace vpfc::geom
