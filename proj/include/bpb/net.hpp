#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bpb/features.hpp"
#include "bpb/modality.hpp"
#include "bpb/rng.hpp"

namespace bpb {

// Stacked LSTM embedding network. The input passes through a batch
// normalization layer (per feature, statistics shared over time steps), then
// `layers` LSTM layers of `hidden` units. The embedding is the last valid
// hidden state of the top layer, linearly projected when embedding_dim
// differs from hidden.
struct ModelSpec {
    std::size_t input_dim = 12;
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t embedding_dim = 64;
    double dropout = 0.5;            // between layers, one mask per step
    double recurrent_dropout = 0.5;  // on h(t-1), one mask per sequence
    double bn_momentum = 0.99;
    double bn_epsilon = 1e-3;

    static ModelSpec canonical(ModalityId m);
    static ModelSpec desk(ModalityId m);

    void validate() const;  // throws ConfigError
    bool operator==(const ModelSpec&) const = default;
};

// Offsets of every tensor inside the flat parameter vector. LSTM gate blocks
// are ordered input, forget, candidate, output; weights are row-major with
// the gate axis (4*hidden) innermost.
struct ParamLayout {
    struct Lstm {
        std::size_t in_dim;
        std::size_t kernel;     // in_dim x 4H
        std::size_t recurrent;  // H x 4H
        std::size_t bias;       // 4H
    };
    std::size_t bn_gamma = 0;
    std::size_t bn_beta = 0;
    std::vector<Lstm> lstm;
    bool has_projection = false;
    std::size_t proj_weight = 0;  // H x E
    std::size_t proj_bias = 0;    // E
    std::size_t total = 0;

    explicit ParamLayout(const ModelSpec& spec);
};

struct ModelParams {
    ModelSpec spec;
    std::vector<double> values;        // trainable, see ParamLayout
    std::vector<double> running_mean;  // input normalization, inference only
    std::vector<double> running_var;

    ParamLayout layout() const { return ParamLayout(spec); }
    std::size_t parameter_count() const noexcept { return values.size(); }
    bool operator==(const ModelParams&) const = default;
};

// Glorot-uniform kernels, orthogonal recurrent weights, forget bias 1.
ModelParams init_model(const ModelSpec& spec, std::uint64_t seed);

struct Embedding {
    std::vector<double> values;
    ModalityId modality = ModalityId::Accelerometer;
};

// Dropout masks for one sequence, already scaled by 1/(1-rate). Empty vectors
// mean "no dropout".
struct SequenceMasks {
    std::vector<std::vector<double>> recurrent;  // per layer, hidden
    std::vector<std::vector<double>> between;    // per layer boundary, rows * hidden
};

SequenceMasks draw_masks(const ModelSpec& spec, std::size_t rows, Rng& rng);

enum class Mode { Train, Infer };

// Infer: running statistics, no dropout, deterministic. Train: the window is
// its own normalization batch and masks are drawn from `rng`.
Embedding embed(const ModelParams& params, const Window& window, Mode mode = Mode::Infer, Rng* rng = nullptr);
std::vector<Embedding> embed_all(const ModelParams& params, std::span<const Window> windows);

struct TripletRef {
    const Window* anchor;
    const Window* positive;
    const Window* negative;
};

// Activations of one sequence, stored per layer as flat [t][unit] arrays
// over the valid steps only.
struct SequenceTrace {
    struct Layer {
        std::vector<double> input;   // T x in_dim, after normalization / dropout
        std::vector<double> h_prev;  // T x H, masked h(t-1)
        std::vector<double> gates;   // T x 4H activations (i f g o)
        std::vector<double> c;       // T x H
        std::vector<double> tanh_c;  // T x H
    };
    const Window* window = nullptr;
    const SequenceMasks* masks = nullptr;
    std::size_t steps = 0;
    std::vector<Layer> layers;
    std::vector<double> top_h;      // last valid top-layer state
    std::vector<double> embedding;
};

// Everything backward() needs: per-window activations, the normalization
// statistics used, and a digest of the parameters.
struct ForwardCache {
    std::vector<SequenceTrace> sequences;  // 3 per triplet: a, p, n
    std::vector<double> batch_mean, batch_var, batch_inv_std;
    std::size_t batch_rows = 0;
    double loss = 0.0;
    double active_fraction = 0.0;
    double margin = 0.0;
    std::size_t triplets = 0;
    std::uint64_t param_digest = 0;
};

struct Gradients {
    std::vector<double> values;  // same layout as ModelParams::values
};

// Mean triplet loss over the batch in training mode (batch statistics).
// `masks` holds one entry per sequence (3 per triplet) or is empty for no
// dropout. The masks must outlive the cache.
ForwardCache forward_triplets(const ModelParams& params, std::span<const TripletRef> batch,
                              std::span<const SequenceMasks> masks, double margin);

// d(mean loss)/d(params). Throws StaleCache when `cache` was produced from
// different parameter values.
Gradients backward(const ModelParams& params, const ForwardCache& cache);

// Max over parameters of |g_a - g_fd| / max(floor, |g_a| + |g_fd|) using
// central differences, where floor = kGradCheckFloor * max_j |g_j|.
// Throws std::invalid_argument when fd_step <= 0.
inline constexpr double kGradCheckFloor = 1e-5;
double grad_check(const ModelParams& params, std::span<const TripletRef> batch, std::span<const SequenceMasks> masks,
                  double margin, double fd_step);

// Loss and gradient in one pass, keeping only one triplet's activations
// alive at a time. Bit-identical to forward_triplets + backward.
struct LossAndGradient {
    double loss = 0.0;
    double active_fraction = 0.0;
    Gradients gradients;
    std::vector<double> batch_mean, batch_var;
};
LossAndGradient loss_and_gradient(const ModelParams& params, std::span<const TripletRef> batch,
                                  std::span<const SequenceMasks> masks, double margin);

// Mean loss only (used by the finite-difference checker).
double batch_loss(const ModelParams& params, std::span<const TripletRef> batch, std::span<const SequenceMasks> masks,
                  double margin);

// Exponential moving update of the inference statistics.
void update_running_stats(ModelParams& params, std::span<const double> batch_mean, std::span<const double> batch_var);

std::uint64_t digest(std::span<const double> values);

// Versioned JSON checkpoint. load_checkpoint throws SchemaError when the
// stored spec differs from `expected`.
void save_checkpoint(const ModelParams& params, ModalityId modality, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path, const ModelSpec& expected);
ModelParams load_checkpoint(const std::filesystem::path& path);

} // namespace bpb
