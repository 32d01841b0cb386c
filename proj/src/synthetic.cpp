#include "vpfc/synthetic.hpp"

#include <cmath>
#include <filesystem>

#include "vpfc/rng.hpp"

namespace vpfc::data {

using geom::GazeAngle;
using geom::kDegToRad;
using geom::kRadToDeg;

void SyntheticConfig::validate() const {
    if (videos < 1 || users < 1) throw DataError("synthetic: videos and users must be positive");
    if (duration_s <= 0.0 || rate_hz <= 0.0)
        throw DataError("synthetic: duration_s and rate_hz must be positive");
    if (frame_height < 8) throw DataError("synthetic: frame_height must be >= 8");
    if (channels < 1) throw DataError("synthetic: channels must be >= 1");
    if (blob_speed < 0.0 || blob_sigma_deg <= 0.0 || gaze_noise_deg < 0.0 || max_lag_s < 0.0)
        throw DataError("synthetic: negative path parameter");
}

GazeAngle BlobPath::at(double t) const {
    GazeAngle g;
    g.lat = amp_lat1 * std::sin(omega_lat1 * t + phase_lat1) +
            amp_lat2 * std::sin(omega_lat2 * t + phase_lat2);
    double lon = lon0 + amp_lon1 * std::sin(omega_lon1 * t + phase_lon1) +
                 amp_lon2 * std::sin(omega_lon2 * t + phase_lon2);
    g.lon = std::remainder(lon, 360.0);
    return g;
}

namespace {

BlobPath draw_path(double blob_speed, Rng& rng) {
    BlobPath p;
    p.lon0 = rng.uniform(-180.0, 180.0);
    p.amp_lon1 = rng.uniform(30.0, 60.0);
    p.omega_lon1 = blob_speed * 2.0 * geom::kPi / rng.uniform(18.0, 30.0);
    p.phase_lon1 = rng.uniform(0.0, 2.0 * geom::kPi);
    p.amp_lon2 = rng.uniform(8.0, 16.0);
    p.omega_lon2 = blob_speed * 2.0 * geom::kPi / rng.uniform(7.0, 12.0);
    p.phase_lon2 = rng.uniform(0.0, 2.0 * geom::kPi);
    p.amp_lat1 = rng.uniform(15.0, 25.0);
    p.omega_lat1 = blob_speed * 2.0 * geom::kPi / rng.uniform(15.0, 25.0);
    p.phase_lat1 = rng.uniform(0.0, 2.0 * geom::kPi);
    p.amp_lat2 = rng.uniform(4.0, 8.0);
    p.omega_lat2 = blob_speed * 2.0 * geom::kPi / rng.uniform(6.0, 10.0);
    p.phase_lat2 = rng.uniform(0.0, 2.0 * geom::kPi);
    return p;
}

Eigen::Vector3d unit_vector(const GazeAngle& g) {
    const double lat = g.lat * kDegToRad, lon = g.lon * kDegToRad;
    return {std::cos(lat) * std::cos(lon), std::cos(lat) * std::sin(lon), std::sin(lat)};
}

GazeAngle to_gaze(const Eigen::Vector3d& v) {
    GazeAngle g;
    g.lat = std::asin(std::clamp(v.z(), -1.0, 1.0)) * kRadToDeg;
    g.lon = std::atan2(v.y(), v.x()) * kRadToDeg;
    return g;
}

// Rotate the direction by `deg` degrees along a tangent bearing.
GazeAngle perturb(const GazeAngle& g, double bearing_rad, double deg) {
    const Eigen::Vector3d p = unit_vector(g);
    Eigen::Vector3d east = Eigen::Vector3d::UnitZ().cross(p);
    const double en = east.norm();
    if (en < 1e-12) east = Eigen::Vector3d::UnitY();  // at a pole any bearing works
    else east /= en;
    const Eigen::Vector3d north = p.cross(east);
    const Eigen::Vector3d dir = std::cos(bearing_rad) * east + std::sin(bearing_rad) * north;
    const double a = deg * kDegToRad;
    return to_gaze(std::cos(a) * p + std::sin(a) * dir);
}

// One frame: brightness falls off with angular distance from the blob center.
nn::NdArray render_frame(const GazeAngle& blob, double sigma_deg, nn::Index channels,
                         nn::Index height, nn::Index width,
                         const std::vector<Eigen::Vector3d>& pixel_dirs) {
    nn::NdArray img({channels, height, width});
    const Eigen::Vector3d b = unit_vector(blob);
    const double two_sigma_sq = 2.0 * sigma_deg * sigma_deg;
    for (nn::Index y = 0; y < height; ++y) {
        for (nn::Index x = 0; x < width; ++x) {
            const double cosang =
                std::clamp(pixel_dirs[static_cast<std::size_t>(y * width + x)].dot(b), -1.0, 1.0);
            const double theta = std::acos(cosang) * kRadToDeg;
            // quantized to 8-bit levels so in-memory frames match disk round-trips
            const double v =
                std::round(255.0 * std::exp(-theta * theta / two_sigma_sq)) / 255.0;
            for (nn::Index c = 0; c < channels; ++c) img.at(c, y, x) = v;
        }
    }
    return img;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);

    const nn::Index height = cfg.frame_height;
    const nn::Index width = 2 * height;
    const long samples = std::lround(cfg.duration_s * cfg.rate_hz);
    if (samples < 2) throw DataError("synthetic: duration too short for the sample rate");

    // pixel-center directions, shared across frames and videos
    std::vector<Eigen::Vector3d> pixel_dirs;
    pixel_dirs.reserve(static_cast<std::size_t>(height * width));
    for (nn::Index y = 0; y < height; ++y) {
        const double lat = 90.0 - (static_cast<double>(y) + 0.5) / static_cast<double>(height) * 180.0;
        for (nn::Index x = 0; x < width; ++x) {
            const double lon =
                (static_cast<double>(x) + 0.5) / static_cast<double>(width) * 360.0 - 180.0;
            pixel_dirs.push_back(unit_vector({lat, lon}));
        }
    }

    SyntheticData data;
    for (int v = 0; v < cfg.videos; ++v) {
        const std::string video_id = "video" + std::to_string(v);
        const BlobPath path = draw_path(cfg.blob_speed, rng);
        data.blob_paths.push_back(path);

        FrameStore store;
        store.video_id = video_id;
        store.width = width;
        store.height = height;
        store.channels = cfg.channels;
        store.frames.reserve(static_cast<std::size_t>(samples));
        for (long j = 0; j < samples; ++j)
            store.frames.push_back(render_frame(path.at(j / cfg.rate_hz), cfg.blob_sigma_deg,
                                                cfg.channels, height, width, pixel_dirs));
        data.catalog.stores.push_back(std::move(store));

        for (int u = 0; u < cfg.users; ++u) {
            const double lag = cfg.max_lag_s > 0.0 ? rng.uniform(0.0, cfg.max_lag_s) : 0.0;
            data.user_lags_s.push_back(lag);

            HeadTrace trace;
            trace.video_id = video_id;
            trace.user_id = "user" + std::to_string(u);
            trace.samples.reserve(static_cast<std::size_t>(samples));
            for (long j = 0; j < samples; ++j) {
                const double t = j / cfg.rate_hz;
                GazeAngle gaze = path.at(std::max(0.0, t - lag));
                if (cfg.gaze_noise_deg > 0.0) {
                    const double bearing = rng.uniform(0.0, 2.0 * geom::kPi);
                    const double mag = std::abs(rng.normal(0.0, cfg.gaze_noise_deg));
                    gaze = perturb(gaze, bearing, mag);
                }
                TraceSample s;
                s.timestamp_s = t;
                s.frame_index = j;
                s.orientation = geom::gaze_to_quat(gaze);
                trace.samples.push_back(s);
            }
            data.traces.push_back(std::move(trace));
        }
    }
    return data;
}

void write_synthetic(const std::string& out_dir, const SyntheticData& data) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_traces((fs::path(out_dir) / "traces.csv").string(), data.traces);
    for (const auto& store : data.catalog.stores)
        write_frame_store((fs::path(out_dir) / store.video_id).string(), store);
}

}  // namespace vpfc::data
