#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vpfc/geometry.hpp"
#include "vpfc/nd_array.hpp"

namespace vpfc::data {

struct TraceSample {
    double timestamp_s = 0.0;
    long frame_index = 0;
    geom::Quaternion orientation;
};

// Per-frame head orientations for one (video, user) pair. Timestamps strictly
// increase, frame indices never decrease, orientations are unit canonical.
struct HeadTrace {
    std::string video_id;
    std::string user_id;
    std::vector<TraceSample> samples;
};

// Component remap applied at ingestion when a dataset's quaternion convention
// differs from ours: out[j] = sign[j] * in[src[j]], components indexed w,x,y,z.
struct QuatAxisMap {
    std::array<int, 4> src{0, 1, 2, 3};
    std::array<double, 4> sign{1.0, 1.0, 1.0, 1.0};

    // Spec string like "w,x,y,z" or "w,-y,x,z".
    static QuatAxisMap parse(const std::string& spec);
    geom::Quaternion apply(const geom::Quaternion& q) const;
    bool is_identity() const;
};

inline constexpr const char* kTraceCsvHeader =
    "video_id,user_id,timestamp_s,frame_index,q0,q1,q2,q3";

// Reads a trace CSV (header required); rows grouped contiguously per
// (video, user). Orientations are normalized and canonicalized after the
// optional axis remap.
std::vector<HeadTrace> load_traces(const std::string& path,
                                   const QuatAxisMap& axis_map = QuatAxisMap());

// Convenience for single-trace files.
HeadTrace load_trace(const std::string& path, const QuatAxisMap& axis_map = QuatAxisMap());

void write_traces(const std::string& path, const std::vector<HeadTrace>& traces);

// Equirectangular frames of one video, pixel values in [0, 1], held as
// [C, H, W] arrays with width = 2 * height.
struct FrameStore {
    std::string video_id;
    nn::Index width = 0;
    nn::Index height = 0;
    nn::Index channels = 0;
    std::vector<nn::NdArray> frames;

    const nn::NdArray& frame(long index) const;
};

// Directory format: manifest.txt with width=/height=/channels=/count= lines plus
// frame_NNNNNN.bin raw row-major interleaved u8 files. target_height = 0 keeps the
// stored resolution; otherwise frames are area-average resized to
// target_height x 2*target_height on load.
FrameStore load_frame_store(const std::string& dir, const std::string& video_id,
                            nn::Index target_height = 0);
void write_frame_store(const std::string& dir, const FrameStore& store);

// Area-average resize of a [C, H, W] image to [C, out_h, out_w].
nn::NdArray resize_area(const nn::NdArray& image, nn::Index out_h, nn::Index out_w);

// Lookup of frame stores by video id.
struct FrameCatalog {
    std::vector<FrameStore> stores;

    const FrameStore* find(const std::string& video_id) const;
    const FrameStore& at(const std::string& video_id) const;
};

// One supervised example: n input steps (with a keep mask) and T target steps.
struct WindowSample {
    std::string video_id;
    std::string user_id;
    long start_index = 0;  // trace index of the first input sample
    std::vector<long> input_frames;
    std::vector<geom::Quaternion> input_orientations;
    std::vector<char> reduce_mask;  // 1 = kept; exactly n - k entries set
    std::vector<geom::Quaternion> target_orientations;
};

// Keeps samples at indices 0, keep_every, 2*keep_every, ...
HeadTrace downsample(const HeadTrace& trace, long keep_every);

// Uniform grid at rate_hz over [t0, t_end]; orientations slerped between
// bracketing samples, frame_index taken from the nearest original sample.
HeadTrace resample(const HeadTrace& trace, double rate_hz);

// Center-block keep mask: the k positions starting at floor((n-k)/2) are cleared.
std::vector<char> center_reduce_mask(int n, int k);

std::vector<WindowSample> make_windows(const HeadTrace& trace, int n, int horizon, int k,
                                       int stride);

struct SplitSpec {
    double train_fraction = 0.7;
    double val_fraction = 0.1;
    double test_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct Split {
    std::vector<HeadTrace> train, val, test;
};

// Per video, users are shuffled by the spec seed and partitioned by user; no user
// lands in two splits. Deterministic for a fixed seed.
Split split_users(const std::vector<HeadTrace>& traces, const SplitSpec& spec);

}  // namespace vpfc::data
