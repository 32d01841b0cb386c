#include "vpfc/models.hpp"

#include <algorithm>
#include <cmath>

namespace vpfc::models {

using nn::Index;
using nn::NdArray;

void FeatureExtractorConfig::validate() const {
    if (conv_blocks.empty()) throw DataError("backbone needs at least one conv block");
    if (feature_dim < 1) throw DataError("feature_dim must be positive");
    if (fc_widths[2] != feature_dim)
        throw DataError("last fc width must equal feature_dim");
    if (in_channels < 1 || in_height < 1 || in_width < 1)
        throw DataError("backbone input dims must be positive");
    for (const auto& b : conv_blocks)
        if (b.out_channels < 1 || b.kernel < 1 || b.stride < 1)
            throw DataError("conv block fields must be positive");
}

void PredictorConfig::validate() const {
    if (n_input_steps < 2) throw DataError("n_input_steps must be >= 2");
    if (horizon < 1) throw DataError("horizon must be >= 1");
    if (lstm_layers < 1) throw DataError("lstm_layers must be >= 1");
    if (hidden_size < 1) throw DataError("hidden_size must be >= 1");
    if (use_content) backbone.validate();
}

LstmLayer::LstmLayer(Index input, Index hidden, const std::string& prefix, Rng& rng)
    : w_ih(prefix + ".w_ih", nn::glorot_uniform({4 * hidden, input}, input, 4 * hidden, rng)),
      w_hh(prefix + ".w_hh", nn::glorot_uniform({4 * hidden, hidden}, hidden, 4 * hidden, rng)),
      bias(prefix + ".bias", nn::NdArray({4 * hidden})) {
    // forget-gate bias starts at 1 so early training does not wash out the cell state
    for (Index i = hidden; i < 2 * hidden; ++i) bias.value[i] = 1.0;
}

FeatureExtractor::FeatureExtractor(const FeatureExtractorConfig& cfg, const std::string& prefix,
                                   Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    Index in_ch = cfg_.in_channels;
    for (std::size_t i = 0; i < cfg_.conv_blocks.size(); ++i) {
        const auto& b = cfg_.conv_blocks[i];
        convs_.emplace_back(b.out_channels, in_ch, b.kernel, b.stride,
                            prefix + ".conv" + std::to_string(i), rng);
        in_ch = b.out_channels;
    }
    Index in = in_ch;  // pooled width
    for (std::size_t i = 0; i < cfg_.fc_widths.size(); ++i) {
        fcs_.emplace_back(cfg_.fc_widths[i], in, prefix + ".fc" + std::to_string(i), rng);
        in = cfg_.fc_widths[i];
    }
}

nn::NdArray FeatureExtractor::forward_batch(const std::vector<const NdArray*>& frames,
                                            Cache* cache) const {
    const Index batch = static_cast<Index>(frames.size());
    const Index c_last = cfg_.conv_blocks.back().out_channels;
    NdArray pooled({std::max<Index>(batch, 0), c_last});
    if (cache) {
        cache->conv_in.assign(frames.size(), {});
        cache->conv_pre.assign(frames.size(), {});
    }

    for (Index f = 0; f < batch; ++f) {
        const NdArray* frame = frames[static_cast<std::size_t>(f)];
        if (frame->rank() != 3 || frame->dim(0) != cfg_.in_channels ||
            frame->dim(1) != cfg_.in_height || frame->dim(2) != cfg_.in_width)
            throw ShapeMismatch("backbone frame " + frame->shape_string());
        NdArray a = *frame;
        for (std::size_t i = 0; i < convs_.size(); ++i) {
            NdArray z = convs_[i].forward(a);
            if (cache) {
                cache->conv_in[static_cast<std::size_t>(f)].push_back(std::move(a));
                cache->conv_pre[static_cast<std::size_t>(f)].push_back(z);
            }
            a = nn::relu_forward(z);
        }
        const NdArray p = nn::global_avg_pool_forward(a);
        pooled.mat2d().row(f) = p.vec().transpose();
    }

    NdArray h1 = nn::relu_forward(fcs_[0].forward(pooled));
    NdArray h2 = nn::relu_forward(fcs_[1].forward(h1));
    NdArray out = fcs_[2].forward(h2);
    if (cache) {
        cache->fc1_in = std::move(pooled);
        cache->fc2_in = std::move(h1);
        cache->fc3_in = std::move(h2);
    }
    return out;
}

void FeatureExtractor::backward_batch(const Cache& cache, const NdArray& grad_features) {
    // FC stack (stored stage inputs are post-ReLU, so the ReLU mask is input > 0)
    NdArray g = fcs_[2].backward(cache.fc3_in, grad_features);
    g.array() *= (cache.fc3_in.array() > 0.0).cast<double>();
    g = fcs_[1].backward(cache.fc2_in, g);
    g.array() *= (cache.fc2_in.array() > 0.0).cast<double>();
    g = fcs_[0].backward(cache.fc1_in, g);

    const Index batch = g.dim(0);
    for (Index f = 0; f < batch; ++f) {
        const auto& ins = cache.conv_in[static_cast<std::size_t>(f)];
        const auto& pres = cache.conv_pre[static_cast<std::size_t>(f)];
        const NdArray& last_pre = pres.back();
        NdArray pooled_grad({last_pre.dim(0)});
        pooled_grad.vec() = g.mat2d().row(f).transpose();
        NdArray da = nn::global_avg_pool_backward(last_pre.shape(), pooled_grad);
        for (std::size_t i = convs_.size(); i-- > 0;) {
            NdArray dz = nn::relu_backward(pres[i], da);
            da = convs_[i].backward(ins[i], dz);
        }
    }
}

nn::NdArray FeatureExtractor::features(const NdArray& frame) const {
    const std::vector<const NdArray*> one{&frame};
    return forward_batch(one, nullptr).reshaped({cfg_.feature_dim});
}

void FeatureExtractor::collect(std::vector<nn::Parameter*>& out) {
    for (auto& c : convs_) c.collect(out);
    for (auto& f : fcs_) f.collect(out);
}

namespace {

// RNG draw order is fixed: backbone, lstm0, lstm1, ..., decoder.
std::vector<LstmLayer> make_lstm_stack(const PredictorConfig& cfg, Rng& rng) {
    std::vector<LstmLayer> layers;
    layers.reserve(static_cast<std::size_t>(cfg.lstm_layers));
    for (int l = 0; l < cfg.lstm_layers; ++l) {
        const Index in = l == 0 ? cfg.step_input_size() : cfg.hidden_size;
        layers.emplace_back(in, cfg.hidden_size, "lstm" + std::to_string(l), rng);
    }
    return layers;
}

struct SeededRng {
    Rng rng;
    explicit SeededRng(std::uint64_t seed) : rng(seed) {}
};

}  // namespace

SequencePredictor::SequencePredictor(const PredictorConfig& cfg, Rng& rng)
    : cfg_([&cfg] {
          cfg.validate();
          return cfg;
      }()),
      backbone_(cfg.use_content ? std::optional<FeatureExtractor>(
                                      std::in_place, cfg.backbone, "backbone", rng)
                                : std::nullopt),
      lstm_(make_lstm_stack(cfg, rng)),
      decoder_(cfg.output_size(), cfg.hidden_size, "decoder", rng) {}

SequencePredictor::SequencePredictor(const PredictorConfig& cfg, std::uint64_t init_seed)
    : SequencePredictor(cfg, SeededRng(init_seed).rng) {}

void SequencePredictor::build_step_inputs(const std::vector<const data::WindowSample*>& windows,
                                          const data::FrameCatalog* catalog,
                                          const std::vector<nn::NdArray>* external_features,
                                          ForwardCache& cache) const {
    const Index batch = static_cast<Index>(windows.size());
    const int n = cfg_.n_input_steps;
    const Index dim = cfg_.step_input_size();
    const Index feat = cfg_.use_content ? cfg_.backbone.feature_dim : 0;

    cache.kept_slots.clear();
    cache.step_inputs.assign(static_cast<std::size_t>(n), NdArray({batch, dim}));

    std::vector<const NdArray*> frames;
    for (Index b = 0; b < batch; ++b) {
        const auto& w = *windows[static_cast<std::size_t>(b)];
        if (static_cast<int>(w.input_orientations.size()) != n ||
            static_cast<int>(w.reduce_mask.size()) != n ||
            static_cast<int>(w.target_orientations.size()) != cfg_.horizon ||
            static_cast<int>(w.input_frames.size()) != n)
            throw ShapeMismatch("window does not match predictor config (n=" +
                                std::to_string(n) + ", T=" + std::to_string(cfg_.horizon) + ")");
        for (int t = 0; t < n; ++t) {
            auto& x = cache.step_inputs[static_cast<std::size_t>(t)];
            if (!w.reduce_mask[static_cast<std::size_t>(t)]) {
                x.at(b, dim - 1) = 1.0;  // missing flag; feature+orientation stay zero
                continue;
            }
            const geom::Quaternion q = geom::canonical(w.input_orientations[static_cast<std::size_t>(t)]);
            x.at(b, feat + 0) = q.w;
            x.at(b, feat + 1) = q.x;
            x.at(b, feat + 2) = q.y;
            x.at(b, feat + 3) = q.z;
            if (cfg_.use_content && !external_features) {
                if (!catalog)
                    throw DataError("content predictor needs a frame catalog");
                const auto& store = catalog->at(w.video_id);
                frames.push_back(&store.frame(w.input_frames[static_cast<std::size_t>(t)]));
                cache.kept_slots.push_back({b, t});
            }
        }
    }

    if (cfg_.use_content && external_features) {
        // single-window path with caller-supplied features
        if (batch != 1) throw DataError("external features only supported for one window");
        const auto& w = *windows[0];
        for (int t = 0; t < n; ++t) {
            if (!w.reduce_mask[static_cast<std::size_t>(t)]) continue;
            const auto& fv = (*external_features)[static_cast<std::size_t>(t)];
            if (fv.numel() != feat)
                throw ShapeMismatch("feature vector " + fv.shape_string());
            auto& x = cache.step_inputs[static_cast<std::size_t>(t)];
            for (Index j = 0; j < feat; ++j) x.at(0, j) = fv[j];
        }
    } else if (cfg_.use_content && !frames.empty()) {
        const NdArray feats = backbone_->forward_batch(frames, &cache.backbone);
        for (std::size_t s = 0; s < cache.kept_slots.size(); ++s) {
            const auto& slot = cache.kept_slots[s];
            auto& x = cache.step_inputs[static_cast<std::size_t>(slot.step)];
            for (Index j = 0; j < feat; ++j) x.at(slot.row, j) = feats.at(static_cast<Index>(s), j);
        }
    }
    cache.batch = batch;
}

nn::NdArray SequencePredictor::run_sequence(ForwardCache& cache) const {
    const int n = cfg_.n_input_steps;
    const Index batch = cache.batch;
    const Index hidden = cfg_.hidden_size;

    cache.lstm.assign(lstm_.size(), {});
    std::vector<nn::LstmCellState> state;
    for (std::size_t l = 0; l < lstm_.size(); ++l) {
        state.push_back(nn::LstmCellState::zeros(batch, hidden));
        cache.lstm[l].reserve(static_cast<std::size_t>(n));
    }

    for (int t = 0; t < n; ++t) {
        const NdArray* x = &cache.step_inputs[static_cast<std::size_t>(t)];
        for (std::size_t l = 0; l < lstm_.size(); ++l) {
            auto cc = nn::lstm_cell_forward(*x, state[l], lstm_[l].w_ih.value, lstm_[l].w_hh.value,
                                            lstm_[l].bias.value);
            state[l].h = cc.h_new;
            state[l].c = cc.c_new;
            cache.lstm[l].push_back(std::move(cc));
            x = &cache.lstm[l].back().h_new;
        }
    }

    cache.decoder_in = state.back().h;
    cache.outputs = decoder_.forward(cache.decoder_in);
    cache.valid = true;
    return cache.outputs;
}

nn::NdArray SequencePredictor::forward_batch(const std::vector<const data::WindowSample*>& windows,
                                             const data::FrameCatalog* catalog,
                                             ForwardCache& cache) const {
    if (windows.empty()) throw EmptyDataset("forward_batch: no windows");
    cache = ForwardCache();
    build_step_inputs(windows, catalog, nullptr, cache);
    return run_sequence(cache);
}

void SequencePredictor::backward_batch(ForwardCache& cache, const nn::NdArray& grad_outputs) {
    if (!cache.valid) throw GraphInconsistent("backward_batch");
    const int n = cfg_.n_input_steps;
    const Index batch = cache.batch;
    const Index hidden = cfg_.hidden_size;
    const Index feat = cfg_.use_content ? cfg_.backbone.feature_dim : 0;

    NdArray grad_h_last = decoder_.backward(cache.decoder_in, grad_outputs);

    const std::size_t layers = lstm_.size();
    std::vector<NdArray> gh(layers, NdArray({batch, hidden}));
    std::vector<NdArray> gc(layers, NdArray({batch, hidden}));
    gh[layers - 1] = grad_h_last;

    NdArray grad_feats;
    if (cfg_.use_content && !cache.kept_slots.empty())
        grad_feats = NdArray({static_cast<Index>(cache.kept_slots.size()), feat});

    for (int t = n - 1; t >= 0; --t) {
        NdArray from_above;  // grad wrt this step's input of the layer below
        for (std::size_t l = layers; l-- > 0;) {
            if (l + 1 < layers) gh[l].array() += from_above.array();
            auto g = nn::lstm_cell_backward(cache.lstm[l][static_cast<std::size_t>(t)],
                                            lstm_[l].w_ih.value, lstm_[l].w_hh.value, gh[l], gc[l]);
            lstm_[l].w_ih.grad.array() += g.gw_ih.array();
            lstm_[l].w_hh.grad.array() += g.gw_hh.array();
            lstm_[l].bias.grad.array() += g.gb.array();
            gh[l] = std::move(g.gh_prev);
            gc[l] = std::move(g.gc_prev);
            from_above = std::move(g.gx);
        }
        if (cfg_.use_content) {
            // feature block of the step-input gradient feeds the backbone
            for (std::size_t s = 0; s < cache.kept_slots.size(); ++s) {
                const auto& slot = cache.kept_slots[s];
                if (slot.step != t) continue;
                for (Index j = 0; j < feat; ++j)
                    grad_feats.at(static_cast<Index>(s), j) = from_above.at(slot.row, j);
            }
        }
    }

    if (cfg_.use_content && !cache.kept_slots.empty())
        backbone_->backward_batch(cache.backbone, grad_feats);
    cache.valid = false;
}

PredictedSequence SequencePredictor::decode_outputs(const NdArray& raw, int horizon) {
    PredictedSequence seq;
    seq.orientations.reserve(static_cast<std::size_t>(horizon));
    for (int j = 0; j < horizon; ++j) {
        const Index base = 4 * static_cast<Index>(j);
        geom::Quaternion q{raw[base], raw[base + 1], raw[base + 2], raw[base + 3]};
        if (geom::norm(q) < 1e-8) {
            seq.orientations.push_back(geom::Quaternion{});
            seq.degenerate = true;
        } else {
            seq.orientations.push_back(geom::normalize(q));
        }
    }
    return seq;
}

PredictedSequence SequencePredictor::predict(const data::WindowSample& window,
                                             const data::FrameCatalog* catalog) const {
    ForwardCache cache;
    const std::vector<const data::WindowSample*> one{&window};
    const NdArray out = forward_batch(one, catalog, cache);
    return decode_outputs(out.reshaped({out.numel()}), cfg_.horizon);
}

PredictedSequence SequencePredictor::predict_with_features(
    const data::WindowSample& window, const std::vector<nn::NdArray>& step_features) const {
    if (!cfg_.use_content) throw DataError("predict_with_features requires a content model");
    ForwardCache cache;
    const std::vector<const data::WindowSample*> one{&window};
    build_step_inputs(one, nullptr, &step_features, cache);
    const NdArray out = run_sequence(cache);
    return decode_outputs(out.reshaped({out.numel()}), cfg_.horizon);
}

nn::NdArray SequencePredictor::extract_features(const nn::NdArray& frame) const {
    if (!backbone_) throw DataError("position-only model has no feature extractor");
    return backbone_->features(frame);
}

void SequencePredictor::zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
}

std::vector<nn::Parameter*> SequencePredictor::parameters() {
    std::vector<nn::Parameter*> out;
    if (backbone_) backbone_->collect(out);
    for (auto& l : lstm_) l.collect(out);
    decoder_.collect(out);
    return out;
}

std::vector<const nn::Parameter*> SequencePredictor::parameters() const {
    auto mut = const_cast<SequencePredictor*>(this)->parameters();
    return {mut.begin(), mut.end()};
}

void SequencePredictor::load_parameters(const std::vector<nn::NamedArray>& values) {
    auto params = parameters();
    if (values.size() != params.size())
        throw DataError("checkpoint has " + std::to_string(values.size()) + " parameters, model " +
                        std::to_string(params.size()));
    for (const auto& v : values) {
        bool found = false;
        for (auto* p : params) {
            if (p->name != v.name) continue;
            if (!p->value.same_shape(v.value))
                throw ShapeMismatch("checkpoint parameter " + v.name + " " +
                                    v.value.shape_string() + " vs model " +
                                    p->value.shape_string());
            p->value = v.value;
            found = true;
            break;
        }
        if (!found) throw DataError("checkpoint parameter not in model: " + v.name);
    }
}

nn::NdArray SequencePredictor::targets_matrix(
    const std::vector<const data::WindowSample*>& windows) {
    if (windows.empty()) throw EmptyDataset("targets_matrix");
    const Index batch = static_cast<Index>(windows.size());
    const Index horizon = static_cast<Index>(windows[0]->target_orientations.size());
    NdArray t({batch, 4 * horizon});
    for (Index b = 0; b < batch; ++b) {
        const auto& w = *windows[static_cast<std::size_t>(b)];
        if (static_cast<Index>(w.target_orientations.size()) != horizon)
            throw ShapeMismatch("inconsistent target lengths in batch");
        for (Index j = 0; j < horizon; ++j) {
            const geom::Quaternion q =
                geom::canonical(w.target_orientations[static_cast<std::size_t>(j)]);
            t.at(b, 4 * j + 0) = q.w;
            t.at(b, 4 * j + 1) = q.x;
            t.at(b, 4 * j + 2) = q.y;
            t.at(b, 4 * j + 3) = q.z;
        }
    }
    return t;
}

PredictedSequence predict_static(const data::WindowSample& window) {
    if (window.input_orientations.empty()) throw TooFewPoints("static: empty window");
    PredictedSequence seq;
    seq.orientations.assign(window.target_orientations.size(),
                            geom::canonical(window.input_orientations.back()));
    return seq;
}

PredictedSequence predict_linreg(const data::WindowSample& window) {
    std::vector<double> ts, lats, lons;
    for (std::size_t i = 0; i < window.input_orientations.size(); ++i) {
        if (!window.reduce_mask[i]) continue;
        const geom::GazeAngle g = geom::quat_to_gaze(window.input_orientations[i]);
        ts.push_back(static_cast<double>(i));
        lats.push_back(g.lat);
        // unwrap longitudes so consecutive kept samples differ by at most 180
        double lon = g.lon;
        if (!lons.empty()) {
            while (lon - lons.back() > 180.0) lon -= 360.0;
            while (lon - lons.back() < -180.0) lon += 360.0;
        }
        lons.push_back(lon);
    }
    if (ts.size() < 2) throw TooFewPoints("linreg needs >= 2 unmasked input samples");

    const auto fit = [&ts](const std::vector<double>& ys) {
        const double n = static_cast<double>(ts.size());
        double mt = 0, my = 0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            mt += ts[i];
            my += ys[i];
        }
        mt /= n;
        my /= n;
        double cov = 0, var = 0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            cov += (ts[i] - mt) * (ys[i] - my);
            var += (ts[i] - mt) * (ts[i] - mt);
        }
        const double slope = cov / var;
        return std::pair<double, double>(my - slope * mt, slope);
    };
    const auto [lat0, lat_slope] = fit(lats);
    const auto [lon0, lon_slope] = fit(lons);

    PredictedSequence seq;
    const double n_steps = static_cast<double>(window.input_orientations.size());
    for (std::size_t j = 0; j < window.target_orientations.size(); ++j) {
        const double t = n_steps + static_cast<double>(j);
        geom::GazeAngle g;
        g.lat = std::clamp(lat0 + lat_slope * t, -90.0, 90.0);
        double lon = lon0 + lon_slope * t;
        lon = std::remainder(lon, 360.0);  // wrap to [-180, 180]
        g.lon = lon;
        seq.orientations.push_back(geom::gaze_to_quat(g));
    }
    return seq;
}

PredictedSequence ModelPredictor::predict(const data::WindowSample& w,
                                          const data::FrameCatalog* catalog) {
    if (!model_.config().use_content) return model_.predict(w, nullptr);
    if (!catalog) throw DataError("content predictor needs a frame catalog");

    const auto& store = catalog->at(w.video_id);
    std::vector<nn::NdArray> feats(w.input_frames.size());
    for (std::size_t t = 0; t < w.input_frames.size(); ++t) {
        if (!w.reduce_mask[t]) continue;
        const FrameKey key{w.video_id, w.input_frames[t]};
        auto it = feature_cache_.find(key);
        if (it == feature_cache_.end())
            it = feature_cache_.emplace(key, model_.extract_features(store.frame(w.input_frames[t])))
                     .first;
        feats[t] = it->second;
    }
    return model_.predict_with_features(w, feats);
}

}  // namespace vpfc::models
