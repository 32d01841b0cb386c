#pragma once

#include <cstdint>
#include <vector>

#include "vpfc/dataset.hpp"

namespace vpfc::data {

// Desk-scale stand-in for a real head-movement dataset: each video shows a bright
// Gaussian blob drifting along a seeded smooth path on the equirectangular canvas;
// each user's gaze tracks the blob with a per-user time lag plus angular noise, so
// frame content statistically predicts future gaze.
struct SyntheticConfig {
    int videos = 3;
    int users = 8;
    double duration_s = 60.0;
    double rate_hz = 5.0;
    nn::Index frame_height = 32;  // frames rendered at frame_height x 2*frame_height
    nn::Index channels = 1;
    double blob_speed = 1.0;       // scales the path's angular velocity; 0 = stationary
    double blob_sigma_deg = 18.0;  // blob angular radius
    double gaze_noise_deg = 5.0;   // per-sample angular noise scale
    double max_lag_s = 0.4;        // per-user tracking lag drawn from [0, max_lag_s]
    std::uint64_t seed = 0;

    void validate() const;
};

// Sum-of-sinusoids path; exposed so tests can query the ground-truth blob center.
struct BlobPath {
    double lon0 = 0.0;
    double amp_lon1 = 0.0, omega_lon1 = 0.0, phase_lon1 = 0.0;
    double amp_lon2 = 0.0, omega_lon2 = 0.0, phase_lon2 = 0.0;
    double amp_lat1 = 0.0, omega_lat1 = 0.0, phase_lat1 = 0.0;
    double amp_lat2 = 0.0, omega_lat2 = 0.0, phase_lat2 = 0.0;

    geom::GazeAngle at(double t) const;
};

struct SyntheticData {
    FrameCatalog catalog;
    std::vector<HeadTrace> traces;
    std::vector<BlobPath> blob_paths;   // per video
    std::vector<double> user_lags_s;    // video-major: videos x users
};

SyntheticData generate_synthetic(const SyntheticConfig& cfg);

// Writes traces.csv plus one frame-store directory per video under out_dir.
void write_synthetic(const std::string& out_dir, const SyntheticData& data);

}  // namespace vpfc::data
