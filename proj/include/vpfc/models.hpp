#pragma once

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vpfc/dataset.hpp"
#include "vpfc/geometry.hpp"
#include "vpfc/layers.hpp"
#include "vpfc/serialize.hpp"

namespace vpfc::models {

struct PredictedSequence {
    std::vector<geom::Quaternion> orientations;
    // true when a raw output 4-tuple had norm < 1e-8 and was replaced by identity
    bool degenerate = false;
};

struct ConvBlockSpec {
    nn::Index out_channels = 8;
    int kernel = 3;
    int stride = 2;
};

// Frame feature backbone: conv blocks (ReLU, stride per block) -> global average
// pool -> three fully connected layers, the last one feature_dim wide.
struct FeatureExtractorConfig {
    std::vector<ConvBlockSpec> conv_blocks{{8, 3, 2}, {16, 3, 2}, {32, 3, 2}};
    std::array<nn::Index, 3> fc_widths{64, 64, 32};
    nn::Index feature_dim = 32;
    nn::Index in_channels = 1;
    nn::Index in_height = 32;
    nn::Index in_width = 64;

    void validate() const;
};

struct PredictorConfig {
    int n_input_steps = 5;
    int horizon = 5;  // T predicted orientations
    int lstm_layers = 2;
    nn::Index hidden_size = 256;
    bool use_content = true;
    FeatureExtractorConfig backbone;

    // Per-step LSTM input width: [features][orientation 4][missing flag 1].
    nn::Index step_input_size() const {
        return (use_content ? backbone.feature_dim : 0) + 4 + 1;
    }
    nn::Index output_size() const { return 4 * static_cast<nn::Index>(horizon); }
    void validate() const;
};

struct FcLayer {
    nn::Parameter w, b;

    FcLayer(nn::Index out, nn::Index in, const std::string& prefix, Rng& rng)
        : w(prefix + ".weight", nn::glorot_uniform({out, in}, in, out, rng)),
          b(prefix + ".bias", nn::NdArray({out})) {}

    nn::NdArray forward(const nn::NdArray& x) const { return nn::fc_forward(x, w.value, b.value); }

    // Accumulates parameter gradients, returns grad wrt x.
    nn::NdArray backward(const nn::NdArray& x, const nn::NdArray& grad_out) {
        auto g = nn::fc_backward(x, w.value, grad_out);
        w.grad.array() += g.gw.array();
        b.grad.array() += g.gb.array();
        return std::move(g.gx);
    }

    void collect(std::vector<nn::Parameter*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

struct ConvLayer {
    nn::Parameter w, b;
    int stride;
    int pad;

    ConvLayer(nn::Index out_ch, nn::Index in_ch, int kernel, int stride_, const std::string& prefix,
              Rng& rng)
        : w(prefix + ".weight", nn::glorot_uniform({out_ch, in_ch, kernel, kernel},
                                                   in_ch * kernel * kernel,
                                                   out_ch * kernel * kernel, rng)),
          b(prefix + ".bias", nn::NdArray({out_ch})),
          stride(stride_),
          pad(kernel / 2) {}

    nn::NdArray forward(const nn::NdArray& x) const {
        return nn::conv2d_forward(x, w.value, b.value, stride, pad);
    }

    nn::NdArray backward(const nn::NdArray& x, const nn::NdArray& grad_out) {
        auto g = nn::conv2d_backward(x, w.value, stride, pad, grad_out);
        w.grad.array() += g.gw.array();
        b.grad.array() += g.gb.array();
        return std::move(g.gx);
    }

    void collect(std::vector<nn::Parameter*>& out) {
        out.push_back(&w);
        out.push_back(&b);
    }
};

struct LstmLayer {
    nn::Parameter w_ih, w_hh, bias;

    LstmLayer(nn::Index input, nn::Index hidden, const std::string& prefix, Rng& rng);

    nn::Index hidden_size() const { return w_hh.value.dim(1); }
    void collect(std::vector<nn::Parameter*>& out) {
        out.push_back(&w_ih);
        out.push_back(&w_hh);
        out.push_back(&bias);
    }
};

// h1: per-frame feature extractor.
class FeatureExtractor {
public:
    FeatureExtractor(const FeatureExtractorConfig& cfg, const std::string& prefix, Rng& rng);

    struct Cache {
        std::vector<std::vector<nn::NdArray>> conv_in;   // per frame, per block input
        std::vector<std::vector<nn::NdArray>> conv_pre;  // per frame, per block pre-ReLU
        nn::NdArray fc1_in, fc2_in, fc3_in;              // stage inputs (fc1_in = pooled)
    };

    // frames: pointers to [C, H, W] arrays; returns [B, feature_dim].
    nn::NdArray forward_batch(const std::vector<const nn::NdArray*>& frames, Cache* cache) const;
    void backward_batch(const Cache& cache, const nn::NdArray& grad_features);

    // Single-frame convenience, no cache.
    nn::NdArray features(const nn::NdArray& frame) const;

    void collect(std::vector<nn::Parameter*>& out);
    const FeatureExtractorConfig& config() const { return cfg_; }

private:
    FeatureExtractorConfig cfg_;
    std::vector<ConvLayer> convs_;
    std::vector<FcLayer> fcs_;
};

// h2 (optionally fed by h1): stacked LSTM over the n-step window, one FC decoder
// from the final hidden state to 4*T raw outputs.
class SequencePredictor {
public:
    SequencePredictor(const PredictorConfig& cfg, Rng& rng);
    SequencePredictor(const PredictorConfig& cfg, std::uint64_t init_seed);

    struct ForwardCache {
        bool valid = false;
        nn::Index batch = 0;
        std::vector<nn::NdArray> step_inputs;  // n arrays [B, D]
        struct KeptSlot {
            nn::Index row;  // batch row
            int step;
        };
        std::vector<KeptSlot> kept_slots;               // content slots fed by the backbone
        FeatureExtractor::Cache backbone;
        std::vector<std::vector<nn::LstmCellCache>> lstm;  // [layer][step]
        nn::NdArray decoder_in;                            // [B, hidden]
        nn::NdArray outputs;                               // [B, 4T]
    };

    // Raw (pre-normalization) outputs [B, 4T]. Windows must match the config.
    nn::NdArray forward_batch(const std::vector<const data::WindowSample*>& windows,
                              const data::FrameCatalog* catalog, ForwardCache& cache) const;

    // Accumulates parameter gradients from d(loss)/d(outputs).
    void backward_batch(ForwardCache& cache, const nn::NdArray& grad_outputs);

    PredictedSequence predict(const data::WindowSample& window,
                              const data::FrameCatalog* catalog) const;
    // Inference with externally supplied per-step features ([n][feature_dim] for
    // kept steps; entries for masked steps are ignored). Content models only.
    PredictedSequence predict_with_features(const data::WindowSample& window,
                                            const std::vector<nn::NdArray>& step_features) const;

    nn::NdArray extract_features(const nn::NdArray& frame) const;

    void zero_grad();
    std::vector<nn::Parameter*> parameters();
    std::vector<const nn::Parameter*> parameters() const;
    void load_parameters(const std::vector<nn::NamedArray>& values);

    const PredictorConfig& config() const { return cfg_; }

    // Canonical quaternion targets as a [B, 4T] matrix.
    static nn::NdArray targets_matrix(const std::vector<const data::WindowSample*>& windows);
    // Raw 4-tuples -> unit canonical quaternions with the degenerate-output rule.
    static PredictedSequence decode_outputs(const nn::NdArray& raw, int horizon);

private:
    PredictorConfig cfg_;
    std::optional<FeatureExtractor> backbone_;
    std::vector<LstmLayer> lstm_;
    FcLayer decoder_;

    void build_step_inputs(const std::vector<const data::WindowSample*>& windows,
                           const data::FrameCatalog* catalog,
                           const std::vector<nn::NdArray>* external_features,
                           ForwardCache& cache) const;
    nn::NdArray run_sequence(ForwardCache& cache) const;
};

// Baseline: the user does not move; every output repeats the last input orientation.
PredictedSequence predict_static(const data::WindowSample& window);

// Baseline: independent ordinary least squares on latitude and unwrapped longitude
// over the kept input steps, extrapolated to the target steps.
PredictedSequence predict_linreg(const data::WindowSample& window);

// Uniform prediction interface for evaluation and the streaming simulator.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::string name() const = 0;
    virtual PredictedSequence predict(const data::WindowSample& window,
                                      const data::FrameCatalog* catalog) = 0;
};

class StaticPredictor final : public Predictor {
public:
    std::string name() const override { return "static"; }
    PredictedSequence predict(const data::WindowSample& w,
                              const data::FrameCatalog*) override {
        return predict_static(w);
    }
};

class LinRegPredictor final : public Predictor {
public:
    std::string name() const override { return "linreg"; }
    PredictedSequence predict(const data::WindowSample& w,
                              const data::FrameCatalog*) override {
        return predict_linreg(w);
    }
};

// Returns the window's target orientations; upper bound for any predictor.
class OraclePredictor final : public Predictor {
public:
    std::string name() const override { return "oracle"; }
    PredictedSequence predict(const data::WindowSample& w,
                              const data::FrameCatalog*) override {
        return {w.target_orientations, false};
    }
};

// Wraps a trained model; caches per-frame features so evaluation over overlapping
// windows runs the backbone once per distinct frame.
class ModelPredictor final : public Predictor {
public:
    explicit ModelPredictor(const SequencePredictor& model) : model_(model) {}

    std::string name() const override {
        return model_.config().use_content ? "content_position_lstm" : "position_lstm";
    }
    PredictedSequence predict(const data::WindowSample& w,
                              const data::FrameCatalog* catalog) override;

private:
    const SequencePredictor& model_;
    struct FrameKey {
        std::string video_id;
        long frame;
        bool operator<(const FrameKey& o) const {
            return video_id < o.video_id || (video_id == o.video_id && frame < o.frame);
        }
    };
    std::map<FrameKey, nn::NdArray> feature_cache_;
};

}  // namespace vpfc::models
