#include "vpfc/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "vpfc/rng.hpp"

namespace vpfc::data {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

double parse_double(const std::string& s, const std::string& file, long line,
                    const char* field) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError(file, line, std::string("bad ") + field + " value '" + s + "'");
    return v;
}

long parse_long(const std::string& s, const std::string& file, long line, const char* field) {
    long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError(file, line, std::string("bad ") + field + " value '" + s + "'");
    return v;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

QuatAxisMap QuatAxisMap::parse(const std::string& spec) {
    const auto tokens = split_fields(spec);
    if (tokens.size() != 4)
        throw DataError("quat_axis_map needs 4 comma-separated components: " + spec);
    QuatAxisMap m;
    std::set<int> seen;
    for (int j = 0; j < 4; ++j) {
        std::string t = tokens[static_cast<std::size_t>(j)];
        double sign = 1.0;
        if (!t.empty() && t.front() == '-') {
            sign = -1.0;
            t.erase(t.begin());
        }
        int src;
        if (t == "w")
            src = 0;
        else if (t == "x")
            src = 1;
        else if (t == "y")
            src = 2;
        else if (t == "z")
            src = 3;
        else
            throw DataError("quat_axis_map component must be one of w,x,y,z: " + spec);
        if (!seen.insert(src).second)
            throw DataError("quat_axis_map repeats a component: " + spec);
        m.src[static_cast<std::size_t>(j)] = src;
        m.sign[static_cast<std::size_t>(j)] = sign;
    }
    return m;
}

geom::Quaternion QuatAxisMap::apply(const geom::Quaternion& q) const {
    const std::array<double, 4> in{q.w, q.x, q.y, q.z};
    return {sign[0] * in[static_cast<std::size_t>(src[0])],
            sign[1] * in[static_cast<std::size_t>(src[1])],
            sign[2] * in[static_cast<std::size_t>(src[2])],
            sign[3] * in[static_cast<std::size_t>(src[3])]};
}

bool QuatAxisMap::is_identity() const {
    return src == std::array<int, 4>{0, 1, 2, 3} &&
           sign == std::array<double, 4>{1.0, 1.0, 1.0, 1.0};
}

std::vector<HeadTrace> load_traces(const std::string& path, const QuatAxisMap& axis_map) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open: " + path);

    std::string line;
    long line_no = 0;
    if (!std::getline(is, line)) throw ParseError(path, 1, "empty file");
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kTraceCsvHeader)
        throw ParseError(path, 1, "expected header '" + std::string(kTraceCsvHeader) + "'");

    std::vector<HeadTrace> traces;
    std::set<std::pair<std::string, std::string>> finished;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 8)
            throw ParseError(path, line_no,
                             "expected 8 fields, got " + std::to_string(f.size()));

        TraceSample s;
        s.timestamp_s = parse_double(f[2], path, line_no, "timestamp_s");
        s.frame_index = parse_long(f[3], path, line_no, "frame_index");
        if (s.frame_index < 0) throw ParseError(path, line_no, "negative frame_index");
        geom::Quaternion q{parse_double(f[4], path, line_no, "q0"),
                           parse_double(f[5], path, line_no, "q1"),
                           parse_double(f[6], path, line_no, "q2"),
                           parse_double(f[7], path, line_no, "q3")};
        try {
            s.orientation = geom::normalize(axis_map.apply(q));
        } catch (const ZeroNorm&) {
            throw ZeroNormQuaternion(path, line_no);
        }

        if (traces.empty() || traces.back().video_id != f[0] || traces.back().user_id != f[1]) {
            if (!finished.insert({f[0], f[1]}).second)
                throw ParseError(path, line_no,
                                 "rows for " + f[0] + "/" + f[1] + " are not contiguous");
            traces.push_back({f[0], f[1], {}});
        }
        auto& t = traces.back();
        if (!t.samples.empty()) {
            if (s.timestamp_s <= t.samples.back().timestamp_s)
                throw NonMonotonicTimestamps(path, line_no);
            if (s.frame_index < t.samples.back().frame_index)
                throw ParseError(path, line_no, "frame_index decreases");
        }
        t.samples.push_back(s);
    }
    return traces;
}

HeadTrace load_trace(const std::string& path, const QuatAxisMap& axis_map) {
    auto traces = load_traces(path, axis_map);
    if (traces.size() != 1)
        throw DataError(path + ": expected exactly one (video, user) trace, found " +
                        std::to_string(traces.size()));
    return std::move(traces.front());
}

void write_traces(const std::string& path, const std::vector<HeadTrace>& traces) {
    std::ofstream os(path, std::ios::binary);  // binary: LF line endings everywhere
    if (!os) throw DataError("cannot open for write: " + path);
    os << kTraceCsvHeader << "\n";
    for (const auto& t : traces) {
        for (const auto& s : t.samples) {
            os << t.video_id << ',' << t.user_id << ',' << format_double(s.timestamp_s) << ','
               << s.frame_index << ',' << format_double(s.orientation.w) << ','
               << format_double(s.orientation.x) << ',' << format_double(s.orientation.y) << ','
               << format_double(s.orientation.z) << "\n";
        }
    }
    if (!os) throw DataError("failed writing " + path);
}

const nn::NdArray& FrameStore::frame(long index) const {
    if (index < 0 || index >= static_cast<long>(frames.size()))
        throw DataError("frame index " + std::to_string(index) + " out of range for video " +
                        video_id + " (" + std::to_string(frames.size()) + " frames)");
    return frames[static_cast<std::size_t>(index)];
}

nn::NdArray resize_area(const nn::NdArray& image, nn::Index out_h, nn::Index out_w) {
    const nn::Index c = image.dim(0), in_h = image.dim(1), in_w = image.dim(2);
    if (out_h == in_h && out_w == in_w) return image;
    nn::NdArray out({c, out_h, out_w});
    const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (nn::Index ch = 0; ch < c; ++ch) {
        for (nn::Index oy = 0; oy < out_h; ++oy) {
            const double y0 = oy * sy, y1 = (oy + 1) * sy;
            for (nn::Index ox = 0; ox < out_w; ++ox) {
                const double x0 = ox * sx, x1 = (ox + 1) * sx;
                double acc = 0.0;
                // integrate source pixels overlapping the destination cell
                for (nn::Index iy = static_cast<nn::Index>(std::floor(y0)); iy < in_h; ++iy) {
                    const double oy0 = std::max(y0, static_cast<double>(iy));
                    const double oy1 = std::min(y1, static_cast<double>(iy + 1));
                    if (oy1 <= oy0) break;
                    for (nn::Index ix = static_cast<nn::Index>(std::floor(x0)); ix < in_w; ++ix) {
                        const double ox0 = std::max(x0, static_cast<double>(ix));
                        const double ox1 = std::min(x1, static_cast<double>(ix + 1));
                        if (ox1 <= ox0) break;
                        acc += (oy1 - oy0) * (ox1 - ox0) * image.at(ch, iy, ix);
                    }
                }
                out.at(ch, oy, ox) = acc / (sx * sy);
            }
        }
    }
    return out;
}

namespace {

std::string frame_file_name(long index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%06ld.bin", index);
    return buf;
}

}  // namespace

FrameStore load_frame_store(const std::string& dir, const std::string& video_id,
                            nn::Index target_height) {
    const fs::path root(dir);
    std::ifstream manifest(root / "manifest.txt");
    if (!manifest) throw DataError("cannot open: " + (root / "manifest.txt").string());

    std::map<std::string, long> fields;
    std::string line;
    long line_no = 0;
    while (std::getline(manifest, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError((root / "manifest.txt").string(), line_no, "expected key=value");
        fields[line.substr(0, eq)] =
            parse_long(line.substr(eq + 1), (root / "manifest.txt").string(), line_no, "value");
    }
    for (const char* key : {"width", "height", "channels", "count"})
        if (!fields.count(key))
            throw DataError((root / "manifest.txt").string() + ": missing " + key);

    const nn::Index width = fields["width"], height = fields["height"];
    const nn::Index channels = fields["channels"];
    const long count = fields["count"];
    if (width != 2 * height)
        throw DataError(dir + ": equirectangular frames need width = 2 * height, got " +
                        std::to_string(width) + "x" + std::to_string(height));
    if (channels < 1 || height < 1 || count < 0) throw DataError(dir + ": bad manifest values");

    FrameStore store;
    store.video_id = video_id;
    store.channels = channels;
    store.height = target_height > 0 ? target_height : height;
    store.width = 2 * store.height;
    store.frames.reserve(static_cast<std::size_t>(count));

    std::vector<unsigned char> raw(static_cast<std::size_t>(width * height * channels));
    for (long i = 0; i < count; ++i) {
        const fs::path file = root / frame_file_name(i);
        std::ifstream is(file, std::ios::binary);
        if (!is) throw DataError("cannot open: " + file.string());
        is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
        if (is.gcount() != static_cast<std::streamsize>(raw.size()))
            throw DataError(file.string() + ": truncated frame");

        // interleaved [H, W, C] bytes -> planar [C, H, W] doubles in [0, 1]
        nn::NdArray img({channels, height, width});
        for (nn::Index y = 0; y < height; ++y)
            for (nn::Index x = 0; x < width; ++x)
                for (nn::Index ch = 0; ch < channels; ++ch)
                    img.at(ch, y, x) =
                        raw[static_cast<std::size_t>((y * width + x) * channels + ch)] / 255.0;
        store.frames.push_back(target_height > 0 ? resize_area(img, store.height, store.width)
                                                 : std::move(img));
    }
    return store;
}

void write_frame_store(const std::string& dir, const FrameStore& store) {
    const fs::path root(dir);
    fs::create_directories(root);
    std::ofstream manifest(root / "manifest.txt", std::ios::binary);
    if (!manifest) throw DataError("cannot open for write: " + (root / "manifest.txt").string());
    manifest << "width=" << store.width << "\nheight=" << store.height
             << "\nchannels=" << store.channels << "\ncount=" << store.frames.size() << "\n";

    std::vector<unsigned char> raw(
        static_cast<std::size_t>(store.width * store.height * store.channels));
    for (std::size_t i = 0; i < store.frames.size(); ++i) {
        const auto& img = store.frames[i];
        for (nn::Index y = 0; y < store.height; ++y)
            for (nn::Index x = 0; x < store.width; ++x)
                for (nn::Index ch = 0; ch < store.channels; ++ch)
                    raw[static_cast<std::size_t>((y * store.width + x) * store.channels + ch)] =
                        static_cast<unsigned char>(
                            std::lround(std::clamp(img.at(ch, y, x), 0.0, 1.0) * 255.0));
        std::ofstream os(root / frame_file_name(static_cast<long>(i)), std::ios::binary);
        os.write(reinterpret_cast<const char*>(raw.data()),
                 static_cast<std::streamsize>(raw.size()));
        if (!os) throw DataError("failed writing frame " + std::to_string(i) + " in " + dir);
    }
}

const FrameStore* FrameCatalog::find(const std::string& video_id) const {
    for (const auto& s : stores)
        if (s.video_id == video_id) return &s;
    return nullptr;
}

const FrameStore& FrameCatalog::at(const std::string& video_id) const {
    const FrameStore* s = find(video_id);
    if (!s) throw DataError("no frame store for video " + video_id);
    return *s;
}

HeadTrace downsample(const HeadTrace& trace, long keep_every) {
    if (keep_every < 1) throw DataError("keep_every must be >= 1");
    HeadTrace out{trace.video_id, trace.user_id, {}};
    for (std::size_t i = 0; i < trace.samples.size(); i += static_cast<std::size_t>(keep_every))
        out.samples.push_back(trace.samples[i]);
    return out;
}

HeadTrace resample(const HeadTrace& trace, double rate_hz) {
    if (rate_hz <= 0.0) throw DataError("rate_hz must be positive");
    if (trace.samples.size() < 2) throw TraceTooShort(trace.video_id + "/" + trace.user_id);

    const double t0 = trace.samples.front().timestamp_s;
    const double t_end = trace.samples.back().timestamp_s;
    const long steps = static_cast<long>(std::floor((t_end - t0) * rate_hz)) + 1;

    HeadTrace out{trace.video_id, trace.user_id, {}};
    out.samples.reserve(static_cast<std::size_t>(steps));
    std::size_t hi = 1;  // bracketing upper index
    for (long j = 0; j < steps; ++j) {
        const double t = t0 + j / rate_hz;
        while (hi + 1 < trace.samples.size() && trace.samples[hi].timestamp_s < t) ++hi;
        const auto& a = trace.samples[hi - 1];
        const auto& b = trace.samples[hi];
        const double span = b.timestamp_s - a.timestamp_s;
        const double u = std::clamp((t - a.timestamp_s) / span, 0.0, 1.0);

        TraceSample s;
        s.timestamp_s = t;
        s.orientation = geom::slerp(a.orientation, b.orientation, u);
        s.frame_index = (t - a.timestamp_s <= b.timestamp_s - t) ? a.frame_index : b.frame_index;
        out.samples.push_back(s);
    }
    return out;
}

std::vector<char> center_reduce_mask(int n, int k) {
    std::vector<char> mask(static_cast<std::size_t>(n), 1);
    const int start = (n - k) / 2;
    for (int i = 0; i < k; ++i) mask[static_cast<std::size_t>(start + i)] = 0;
    return mask;
}

std::vector<WindowSample> make_windows(const HeadTrace& trace, int n, int horizon, int k,
                                       int stride) {
    if (n < 2 || horizon < 1 || k < 0 || k > n - 2 || stride < 1)
        throw InvalidWindowConfig("make_windows(n=" + std::to_string(n) +
                                  ", T=" + std::to_string(horizon) + ", k=" + std::to_string(k) +
                                  ", stride=" + std::to_string(stride) + ")");
    const auto mask = center_reduce_mask(n, k);
    std::vector<WindowSample> out;
    const long len = static_cast<long>(trace.samples.size());
    for (long s = 0; s + n + horizon <= len; s += stride) {
        WindowSample w;
        w.video_id = trace.video_id;
        w.user_id = trace.user_id;
        w.start_index = s;
        w.reduce_mask = mask;
        for (int i = 0; i < n; ++i) {
            const auto& smp = trace.samples[static_cast<std::size_t>(s + i)];
            w.input_frames.push_back(smp.frame_index);
            w.input_orientations.push_back(smp.orientation);
        }
        for (int j = 0; j < horizon; ++j)
            w.target_orientations.push_back(
                trace.samples[static_cast<std::size_t>(s + n + j)].orientation);
        out.push_back(std::move(w));
    }
    return out;
}

Split split_users(const std::vector<HeadTrace>& traces, const SplitSpec& spec) {
    const double sum = spec.train_fraction + spec.val_fraction + spec.test_fraction;
    if (std::abs(sum - 1.0) > 1e-9)
        throw DataError("split fractions must sum to 1, got " + std::to_string(sum));

    // users per video, in first-appearance order
    std::map<std::string, std::vector<std::string>> users_by_video;
    for (const auto& t : traces) {
        auto& users = users_by_video[t.video_id];
        if (std::find(users.begin(), users.end(), t.user_id) == users.end())
            users.push_back(t.user_id);
    }

    const auto piece = [](double fraction, std::size_t n) -> std::size_t {
        if (fraction == 0.0) return 0;
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
    };

    // assignment: 0 = train, 1 = val, 2 = test
    std::map<std::pair<std::string, std::string>, int> assignment;
    Rng rng(spec.seed);
    for (auto& [video, users] : users_by_video) {
        const std::size_t n = users.size();
        const std::size_t n_val = piece(spec.val_fraction, n);
        const std::size_t n_test = piece(spec.test_fraction, n);
        if (spec.train_fraction > 0.0 && n_val + n_test >= n)
            throw TooFewUsers("video " + video + " has " + std::to_string(n) +
                              " users; need at least 3 for a nonempty 3-way split");
        std::vector<std::string> shuffled = users;
        rng.shuffle(shuffled.begin(), shuffled.end());
        for (std::size_t i = 0; i < n; ++i) {
            int bucket = 0;
            if (i >= n - n_val - n_test) bucket = (i >= n - n_test) ? 2 : 1;
            assignment[{video, shuffled[i]}] = bucket;
        }
    }

    Split split;
    for (const auto& t : traces) {
        switch (assignment.at({t.video_id, t.user_id})) {
            case 0: split.train.push_back(t); break;
            case 1: split.val.push_back(t); break;
            default: split.test.push_back(t); break;
        }
    }
    return split;
}

}  // namespace vpfc::data
