#include "bpb/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "bpb/error.hpp"
#include "bpb/triplet_loss.hpp"

namespace bpb {

ModelSpec ModelSpec::canonical(ModalityId m) {
    ModelSpec s;
    s.input_dim = feature_dim(m);
    return s;
}

ModelSpec ModelSpec::desk(ModalityId m) {
    ModelSpec s = canonical(m);
    s.hidden = 16;
    s.embedding_dim = 16;
    return s;
}

void ModelSpec::validate() const {
    if (input_dim == 0 || hidden == 0 || layers == 0 || embedding_dim == 0)
        throw ConfigError("model dimensions must be positive");
    if (dropout < 0.0 || dropout >= 1.0 || recurrent_dropout < 0.0 || recurrent_dropout >= 1.0)
        throw ConfigError("dropout rates must lie in [0, 1)");
    if (bn_momentum < 0.0 || bn_momentum >= 1.0 || bn_epsilon <= 0.0)
        throw ConfigError("invalid batch normalization settings");
}

ParamLayout::ParamLayout(const ModelSpec& spec) {
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
        const std::size_t off = at;
        at += n;
        return off;
    };
    bn_gamma = take(spec.input_dim);
    bn_beta = take(spec.input_dim);
    const std::size_t g = 4 * spec.hidden;
    for (std::size_t l = 0; l < spec.layers; ++l) {
        Lstm L{};
        L.in_dim = l == 0 ? spec.input_dim : spec.hidden;
        L.kernel = take(L.in_dim * g);
        L.recurrent = take(spec.hidden * g);
        L.bias = take(g);
        lstm.push_back(L);
    }
    has_projection = spec.embedding_dim != spec.hidden;
    if (has_projection) {
        proj_weight = take(spec.hidden * spec.embedding_dim);
        proj_bias = take(spec.embedding_dim);
    }
    total = at;
}

ModelParams init_model(const ModelSpec& spec, std::uint64_t seed) {
    spec.validate();
    const ParamLayout L(spec);
    ModelParams p;
    p.spec = spec;
    p.values.assign(L.total, 0.0);
    p.running_mean.assign(spec.input_dim, 0.0);
    p.running_var.assign(spec.input_dim, 1.0);
    Rng rng = Rng::stream({seed, 0x696e6974});
    const std::size_t H = spec.hidden, G = 4 * H;

    std::fill_n(p.values.begin() + static_cast<std::ptrdiff_t>(L.bn_gamma), spec.input_dim, 1.0);
    for (const auto& layer : L.lstm) {
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim + G));
        for (std::size_t i = 0; i < layer.in_dim * G; ++i) p.values[layer.kernel + i] = rng.uniform(-bound, bound);

        // Orthonormal rows (H rows of length 4H) by modified Gram-Schmidt.
        double* U = p.values.data() + layer.recurrent;
        for (std::size_t r = 0; r < H; ++r) {
            double* row = U + r * G;
            for (;;) {
                for (std::size_t j = 0; j < G; ++j) row[j] = rng.normal();
                for (std::size_t q = 0; q < r; ++q) {
                    const double* prev = U + q * G;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < G; ++j) dot += row[j] * prev[j];
                    for (std::size_t j = 0; j < G; ++j) row[j] -= dot * prev[j];
                }
                double norm = 0.0;
                for (std::size_t j = 0; j < G; ++j) norm += row[j] * row[j];
                norm = std::sqrt(norm);
                if (norm < 1e-8) continue;
                for (std::size_t j = 0; j < G; ++j) row[j] /= norm;
                break;
            }
        }
        for (std::size_t j = 0; j < H; ++j) p.values[layer.bias + H + j] = 1.0;  // forget gate
    }
    if (L.has_projection) {
        const double bound = std::sqrt(6.0 / static_cast<double>(H + spec.embedding_dim));
        for (std::size_t i = 0; i < H * spec.embedding_dim; ++i) p.values[L.proj_weight + i] = rng.uniform(-bound, bound);
    }
    return p;
}

SequenceMasks draw_masks(const ModelSpec& spec, std::size_t rows, Rng& rng) {
    SequenceMasks m;
    const std::size_t H = spec.hidden;
    if (spec.recurrent_dropout > 0.0) {
        const double keep = 1.0 / (1.0 - spec.recurrent_dropout);
        m.recurrent.resize(spec.layers);
        for (auto& v : m.recurrent) {
            v.resize(H);
            for (auto& x : v) x = rng.bernoulli(spec.recurrent_dropout) ? 0.0 : keep;
        }
    }
    if (spec.dropout > 0.0 && spec.layers > 1) {
        const double keep = 1.0 / (1.0 - spec.dropout);
        m.between.resize(spec.layers - 1);
        for (auto& v : m.between) {
            v.resize(rows * H);
            for (auto& x : v) x = rng.bernoulli(spec.dropout) ? 0.0 : keep;
        }
    }
    return m;
}

std::uint64_t digest(std::span<const double> values) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_window(const ModelSpec& spec, const Window& w) {
    if (w.dim != spec.input_dim)
        throw DimensionError(fmt::format("window dim {} does not match model input dim {}", w.dim, spec.input_dim));
    if (w.valid_len > w.rows || w.data.size() != w.rows * w.dim) throw DimensionError("malformed window");
}

struct NormStats {
    std::vector<double> mean, var, inv_std;
    std::size_t rows = 0;
};

NormStats batch_stats(const ModelSpec& spec, std::span<const Window* const> windows) {
    const std::size_t D = spec.input_dim;
    NormStats s;
    s.mean.assign(D, 0.0);
    s.var.assign(D, 0.0);
    for (const Window* w : windows)
        for (std::size_t t = 0; t < w->valid_len; ++t)
            for (std::size_t k = 0; k < D; ++k) s.mean[k] += w->data[t * D + k];
    for (const Window* w : windows) s.rows += w->valid_len;
    if (s.rows == 0) {
        s.var.assign(D, 1.0);
    } else {
        for (auto& m : s.mean) m /= static_cast<double>(s.rows);
        for (const Window* w : windows)
            for (std::size_t t = 0; t < w->valid_len; ++t)
                for (std::size_t k = 0; k < D; ++k) {
                    const double d = w->data[t * D + k] - s.mean[k];
                    s.var[k] += d * d;
                }
        for (auto& v : s.var) v /= static_cast<double>(s.rows);
    }
    s.inv_std.resize(D);
    for (std::size_t k = 0; k < D; ++k) s.inv_std[k] = 1.0 / std::sqrt(s.var[k] + spec.bn_epsilon);
    return s;
}

NormStats running_stats(const ModelParams& p) {
    NormStats s;
    s.mean = p.running_mean;
    s.var = p.running_var;
    s.inv_std.resize(s.var.size());
    for (std::size_t k = 0; k < s.var.size(); ++k) s.inv_std[k] = 1.0 / std::sqrt(s.var[k] + p.spec.bn_epsilon);
    return s;
}

// Forward pass over the valid steps of one window.
//
//   x^    = gamma * (x - mean) * inv_std + beta
//   z     = b + in . W + (h(t-1) * r) . U
//   i,f,o = sigmoid(z_i, z_f, z_o),  g = tanh(z_g)
//   c     = f * c(t-1) + i * g,       h = o * tanh(c)
//
// `in` is x^ for the first layer and the dropped-out output of the layer below
// otherwise; `r` is the per-sequence recurrent dropout mask.
SequenceTrace forward_sequence(const ModelParams& p, const ParamLayout& L, const Window& w, const SequenceMasks* masks,
                               const NormStats& norm) {
    const ModelSpec& spec = p.spec;
    const std::size_t H = spec.hidden, G = 4 * H, D = spec.input_dim, T = w.valid_len;
    const double* theta = p.values.data();
    SequenceTrace tr;
    tr.window = &w;
    tr.masks = masks;
    tr.steps = T;
    tr.layers.resize(spec.layers);

    std::vector<double> below;  // T x H output of the previous layer
    std::vector<double> h(H), c(H);
    for (std::size_t l = 0; l < spec.layers; ++l) {
        const auto& lay = L.lstm[l];
        auto& st = tr.layers[l];
        const std::size_t in_dim = lay.in_dim;
        st.input.resize(T * in_dim);
        st.h_prev.resize(T * H);
        st.gates.resize(T * G);
        st.c.resize(T * H);
        st.tanh_c.resize(T * H);

        if (l == 0) {
            const double* gamma = theta + L.bn_gamma;
            const double* beta = theta + L.bn_beta;
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t k = 0; k < D; ++k)
                    st.input[t * D + k] = gamma[k] * (w.data[t * D + k] - norm.mean[k]) * norm.inv_std[k] + beta[k];
        } else {
            const bool drop = masks && !masks->between.empty();
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t k = 0; k < H; ++k)
                    st.input[t * H + k] = below[t * H + k] * (drop ? masks->between[l - 1][t * H + k] : 1.0);
        }

        const double* W = theta + lay.kernel;
        const double* U = theta + lay.recurrent;
        const double* b = theta + lay.bias;
        const bool rdrop = masks && !masks->recurrent.empty();
        std::fill(h.begin(), h.end(), 0.0);
        std::fill(c.begin(), c.end(), 0.0);
        std::vector<double> out(T * H);
        std::vector<double> z(G);
        for (std::size_t t = 0; t < T; ++t) {
            double* hp = st.h_prev.data() + t * H;
            for (std::size_t k = 0; k < H; ++k) hp[k] = h[k] * (rdrop ? masks->recurrent[l][k] : 1.0);
            std::copy(b, b + G, z.begin());
            const double* in = st.input.data() + t * in_dim;
            for (std::size_t k = 0; k < in_dim; ++k) {
                const double v = in[k];
                if (v == 0.0) continue;
                const double* row = W + k * G;
                for (std::size_t j = 0; j < G; ++j) z[j] += v * row[j];
            }
            for (std::size_t k = 0; k < H; ++k) {
                const double v = hp[k];
                if (v == 0.0) continue;
                const double* row = U + k * G;
                for (std::size_t j = 0; j < G; ++j) z[j] += v * row[j];
            }
            double* gt = st.gates.data() + t * G;
            for (std::size_t j = 0; j < H; ++j) {
                gt[j] = sigmoid(z[j]);
                gt[H + j] = sigmoid(z[H + j]);
                gt[2 * H + j] = std::tanh(z[2 * H + j]);
                gt[3 * H + j] = sigmoid(z[3 * H + j]);
            }
            for (std::size_t j = 0; j < H; ++j) {
                c[j] = gt[H + j] * c[j] + gt[j] * gt[2 * H + j];
                const double tc = std::tanh(c[j]);
                st.c[t * H + j] = c[j];
                st.tanh_c[t * H + j] = tc;
                h[j] = gt[3 * H + j] * tc;
                out[t * H + j] = h[j];
            }
        }
        below = std::move(out);
    }
    tr.top_h = h;  // zero when T == 0
    if (T == 0) std::fill(tr.top_h.begin(), tr.top_h.end(), 0.0);

    const std::size_t E = spec.embedding_dim;
    if (L.has_projection) {
        tr.embedding.assign(theta + L.proj_bias, theta + L.proj_bias + E);
        const double* P = theta + L.proj_weight;
        for (std::size_t k = 0; k < H; ++k)
            for (std::size_t e = 0; e < E; ++e) tr.embedding[e] += tr.top_h[k] * P[k * E + e];
    } else {
        tr.embedding = tr.top_h;
    }
    return tr;
}

// Backpropagation through time for one sequence; accumulates into `grad`.
void backward_sequence(const ModelParams& p, const ParamLayout& L, const SequenceTrace& tr,
                       std::span<const double> d_embedding, const NormStats& norm, double* grad) {
    const ModelSpec& spec = p.spec;
    const std::size_t H = spec.hidden, G = 4 * H, D = spec.input_dim, T = tr.steps, E = spec.embedding_dim;
    if (T == 0) return;
    const double* theta = p.values.data();

    std::vector<double> d_top(H, 0.0);
    if (L.has_projection) {
        const double* P = theta + L.proj_weight;
        for (std::size_t e = 0; e < E; ++e) grad[L.proj_bias + e] += d_embedding[e];
        for (std::size_t k = 0; k < H; ++k)
            for (std::size_t e = 0; e < E; ++e) {
                grad[L.proj_weight + k * E + e] += tr.top_h[k] * d_embedding[e];
                d_top[k] += P[k * E + e] * d_embedding[e];
            }
    } else {
        std::copy(d_embedding.begin(), d_embedding.end(), d_top.begin());
    }

    // dh arriving from above at every step (only the last step for the top).
    std::vector<double> d_above(T * H, 0.0);
    std::copy(d_top.begin(), d_top.end(), d_above.begin() + static_cast<std::ptrdiff_t>((T - 1) * H));

    const SequenceMasks* masks = tr.masks;
    std::vector<double> dc_next(H), dh_rec(H);
    for (std::size_t li = spec.layers; li-- > 0;) {
        const auto& lay = L.lstm[li];
        const auto& st = tr.layers[li];
        const std::size_t in_dim = lay.in_dim;
        const double* W = theta + lay.kernel;
        const double* U = theta + lay.recurrent;
        double* dW = grad + lay.kernel;
        double* dU = grad + lay.recurrent;
        double* db = grad + lay.bias;
        const bool rdrop = masks && !masks->recurrent.empty();
        std::vector<double> d_input(T * in_dim, 0.0);
        // Gate-major copies so the input/recurrent gradient sums vectorize
        // over the unit axis; summation order over gates is unchanged.
        std::vector<double> WT(G * in_dim), UT(G * H);
        for (std::size_t k = 0; k < in_dim; ++k)
            for (std::size_t j = 0; j < G; ++j) WT[j * in_dim + k] = W[k * G + j];
        for (std::size_t k = 0; k < H; ++k)
            for (std::size_t j = 0; j < G; ++j) UT[j * H + k] = U[k * G + j];
        std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
        std::fill(dc_next.begin(), dc_next.end(), 0.0);

        // Gate gradients of every step first; the weight and input gradients
        // are then accumulated row by row in the same (descending t) order.
        std::vector<double> dZ(T * G);
        for (std::size_t t = T; t-- > 0;) {
            const double* gt = st.gates.data() + t * G;
            const double* tc = st.tanh_c.data() + t * H;
            double* dz = dZ.data() + t * G;
            for (std::size_t j = 0; j < H; ++j) {
                const double i = gt[j], f = gt[H + j], g = gt[2 * H + j], o = gt[3 * H + j];
                const double c_prev = t > 0 ? st.c[(t - 1) * H + j] : 0.0;
                const double dhj = d_above[t * H + j] + dh_rec[j];
                const double d_o = dhj * tc[j];
                const double dc = dc_next[j] + dhj * o * (1.0 - tc[j] * tc[j]);
                dc_next[j] = dc * f;
                dz[j] = dc * g * i * (1.0 - i);
                dz[H + j] = dc * c_prev * f * (1.0 - f);
                dz[2 * H + j] = dc * i * (1.0 - g * g);
                dz[3 * H + j] = d_o * o * (1.0 - o);
            }
            for (std::size_t j = 0; j < G; ++j) db[j] += dz[j];
            std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
            for (std::size_t j = 0; j < G; ++j) {
                const double d = dz[j];
                const double* col = UT.data() + j * H;
                for (std::size_t k = 0; k < H; ++k) dh_rec[k] += col[k] * d;
            }
            if (rdrop)
                for (std::size_t k = 0; k < H; ++k) dh_rec[k] *= masks->recurrent[li][k];
        }
        for (std::size_t k = 0; k < in_dim; ++k) {
            double* drow = dW + k * G;
            for (std::size_t t = T; t-- > 0;) {
                const double v = st.input[t * in_dim + k];
                const double* dz = dZ.data() + t * G;
                for (std::size_t j = 0; j < G; ++j) drow[j] += v * dz[j];
            }
        }
        for (std::size_t k = 0; k < H; ++k) {
            double* drow = dU + k * G;
            for (std::size_t t = T; t-- > 0;) {
                const double v = st.h_prev[t * H + k];
                const double* dz = dZ.data() + t * G;
                for (std::size_t j = 0; j < G; ++j) drow[j] += v * dz[j];
            }
        }
        for (std::size_t t = 0; t < T; ++t) {
            double* din = d_input.data() + t * in_dim;
            const double* dz = dZ.data() + t * G;
            for (std::size_t j = 0; j < G; ++j) {
                const double d = dz[j];
                const double* col = WT.data() + j * in_dim;
                for (std::size_t k = 0; k < in_dim; ++k) din[k] += col[k] * d;
            }
        }

        if (li > 0) {
            const bool drop = masks && !masks->between.empty();
            for (std::size_t i = 0; i < T * H; ++i)
                d_above[i] = d_input[i] * (drop ? masks->between[li - 1][i] : 1.0);
        } else {
            const double* x = tr.window->data.data();
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t k = 0; k < D; ++k) {
                    const double d = d_input[t * D + k];
                    grad[L.bn_gamma + k] += d * (x[t * D + k] - norm.mean[k]) * norm.inv_std[k];
                    grad[L.bn_beta + k] += d;
                }
        }
    }
}

const SequenceMasks* mask_at(std::span<const SequenceMasks> masks, std::size_t i) {
    if (masks.empty()) return nullptr;
    return &masks[i];
}

void check_batch(const ModelParams& params, std::span<const TripletRef> batch, std::span<const SequenceMasks> masks) {
    if (batch.empty()) throw InsufficientData("empty triplet batch");
    if (!masks.empty() && masks.size() != 3 * batch.size())
        throw DimensionError(fmt::format("expected {} dropout masks, got {}", 3 * batch.size(), masks.size()));
    for (const auto& tr : batch) {
        check_window(params.spec, *tr.anchor);
        check_window(params.spec, *tr.positive);
        check_window(params.spec, *tr.negative);
    }
}

std::vector<const Window*> batch_windows(std::span<const TripletRef> batch) {
    std::vector<const Window*> out;
    out.reserve(batch.size() * 3);
    for (const auto& t : batch) {
        out.push_back(t.anchor);
        out.push_back(t.positive);
        out.push_back(t.negative);
    }
    return out;
}

NormStats stats_of(const ForwardCache& c) {
    NormStats s;
    s.mean = c.batch_mean;
    s.var = c.batch_var;
    s.inv_std = c.batch_inv_std;
    s.rows = c.batch_rows;
    return s;
}

} // namespace

Embedding embed(const ModelParams& params, const Window& window, Mode mode, Rng* rng) {
    check_window(params.spec, window);
    const ParamLayout L(params.spec);
    Embedding e;
    e.modality = ModalityId::Accelerometer;
    if (mode == Mode::Infer) {
        e.values = forward_sequence(params, L, window, nullptr, running_stats(params)).embedding;
        return e;
    }
    if (!rng) throw std::invalid_argument("embed: training mode needs an rng");
    const Window* one[] = {&window};
    const NormStats s = batch_stats(params.spec, one);
    const SequenceMasks m = draw_masks(params.spec, window.rows, *rng);
    e.values = forward_sequence(params, L, window, &m, s).embedding;
    return e;
}

std::vector<Embedding> embed_all(const ModelParams& params, std::span<const Window> windows) {
    const ParamLayout L(params.spec);
    const NormStats s = running_stats(params);
    std::vector<Embedding> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        check_window(params.spec, w);
        out.push_back({forward_sequence(params, L, w, nullptr, s).embedding, ModalityId::Accelerometer});
    }
    return out;
}

ForwardCache forward_triplets(const ModelParams& params, std::span<const TripletRef> batch,
                              std::span<const SequenceMasks> masks, double margin) {
    check_batch(params, batch, masks);
    const ParamLayout L(params.spec);
    const auto windows = batch_windows(batch);
    const NormStats s = batch_stats(params.spec, windows);
    ForwardCache c;
    c.batch_mean = s.mean;
    c.batch_var = s.var;
    c.batch_inv_std = s.inv_std;
    c.batch_rows = s.rows;
    c.margin = margin;
    c.triplets = batch.size();
    c.param_digest = digest(params.values);
    c.sequences.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i)
        c.sequences.push_back(forward_sequence(params, L, *windows[i], mask_at(masks, i), s));
    std::size_t active = 0;
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const double l = triplet_loss(c.sequences[3 * b].embedding, c.sequences[3 * b + 1].embedding,
                                      c.sequences[3 * b + 2].embedding, margin);
        total += l;
        if (l > 0.0) ++active;
    }
    c.loss = total / static_cast<double>(batch.size());
    c.active_fraction = static_cast<double>(active) / static_cast<double>(batch.size());
    return c;
}

Gradients backward(const ModelParams& params, const ForwardCache& cache) {
    if (cache.sequences.empty() || cache.triplets == 0) throw StaleCache("backward: missing forward cache");
    if (cache.param_digest != digest(params.values))
        throw StaleCache("backward: forward cache was computed with different parameters");
    const ParamLayout L(params.spec);
    const NormStats s = stats_of(cache);
    Gradients g;
    g.values.assign(L.total, 0.0);
    const std::size_t E = params.spec.embedding_dim;
    const double scale = 1.0 / static_cast<double>(cache.triplets);
    std::vector<double> da(E), dp(E), dn(E);
    for (std::size_t b = 0; b < cache.triplets; ++b) {
        const auto& A = cache.sequences[3 * b];
        const auto& P = cache.sequences[3 * b + 1];
        const auto& N = cache.sequences[3 * b + 2];
        std::fill(da.begin(), da.end(), 0.0);
        std::fill(dp.begin(), dp.end(), 0.0);
        std::fill(dn.begin(), dn.end(), 0.0);
        if (triplet_loss_grad(A.embedding, P.embedding, N.embedding, cache.margin, scale, da, dp, dn) <= 0.0) continue;
        backward_sequence(params, L, A, da, s, g.values.data());
        backward_sequence(params, L, P, dp, s, g.values.data());
        backward_sequence(params, L, N, dn, s, g.values.data());
    }
    return g;
}

LossAndGradient loss_and_gradient(const ModelParams& params, std::span<const TripletRef> batch,
                                  std::span<const SequenceMasks> masks, double margin) {
    check_batch(params, batch, masks);
    const ParamLayout L(params.spec);
    const NormStats s = batch_stats(params.spec, batch_windows(batch));
    LossAndGradient out;
    out.gradients.values.assign(L.total, 0.0);
    out.batch_mean = s.mean;
    out.batch_var = s.var;
    const std::size_t E = params.spec.embedding_dim;
    const double scale = 1.0 / static_cast<double>(batch.size());
    std::vector<double> da(E), dp(E), dn(E);
    std::size_t active = 0;
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto A = forward_sequence(params, L, *batch[b].anchor, mask_at(masks, 3 * b), s);
        const auto P = forward_sequence(params, L, *batch[b].positive, mask_at(masks, 3 * b + 1), s);
        const auto N = forward_sequence(params, L, *batch[b].negative, mask_at(masks, 3 * b + 2), s);
        std::fill(da.begin(), da.end(), 0.0);
        std::fill(dp.begin(), dp.end(), 0.0);
        std::fill(dn.begin(), dn.end(), 0.0);
        const double l = triplet_loss_grad(A.embedding, P.embedding, N.embedding, margin, scale, da, dp, dn);
        total += l;
        if (l <= 0.0) continue;
        ++active;
        backward_sequence(params, L, A, da, s, out.gradients.values.data());
        backward_sequence(params, L, P, dp, s, out.gradients.values.data());
        backward_sequence(params, L, N, dn, s, out.gradients.values.data());
    }
    out.loss = total / static_cast<double>(batch.size());
    out.active_fraction = static_cast<double>(active) / static_cast<double>(batch.size());
    return out;
}

double batch_loss(const ModelParams& params, std::span<const TripletRef> batch, std::span<const SequenceMasks> masks,
                  double margin) {
    check_batch(params, batch, masks);
    const ParamLayout L(params.spec);
    const NormStats s = batch_stats(params.spec, batch_windows(batch));
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto A = forward_sequence(params, L, *batch[b].anchor, mask_at(masks, 3 * b), s);
        const auto P = forward_sequence(params, L, *batch[b].positive, mask_at(masks, 3 * b + 1), s);
        const auto N = forward_sequence(params, L, *batch[b].negative, mask_at(masks, 3 * b + 2), s);
        total += triplet_loss(A.embedding, P.embedding, N.embedding, margin);
    }
    return total / static_cast<double>(batch.size());
}

double grad_check(const ModelParams& params, std::span<const TripletRef> batch, std::span<const SequenceMasks> masks,
                  double margin, double fd_step) {
    if (!(fd_step > 0.0)) throw std::invalid_argument("grad_check: fd_step must be positive");
    const ForwardCache cache = forward_triplets(params, batch, masks, margin);
    const Gradients g = backward(params, cache);
    ModelParams probe = params;
    std::vector<double> fd(probe.values.size());
    double scale = 0.0;
    for (std::size_t i = 0; i < probe.values.size(); ++i) {
        const double orig = probe.values[i];
        probe.values[i] = orig + fd_step;
        const double up = batch_loss(probe, batch, masks, margin);
        probe.values[i] = orig - fd_step;
        const double down = batch_loss(probe, batch, masks, margin);
        probe.values[i] = orig;
        fd[i] = (up - down) / (2.0 * fd_step);
        scale = std::max({scale, std::abs(fd[i]), std::abs(g.values[i])});
    }
    // Central differences carry an absolute rounding error of roughly
    // eps * loss / fd_step, so components far below the gradient's own scale
    // are compared against that scale instead of their own magnitude.
    const double floor = std::max(1e-12, kGradCheckFloor * scale);
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double err = std::abs(g.values[i] - fd[i]) / std::max(floor, std::abs(g.values[i]) + std::abs(fd[i]));
        worst = std::max(worst, err);
    }
    return worst;
}

void update_running_stats(ModelParams& params, std::span<const double> batch_mean, std::span<const double> batch_var) {
    const double m = params.spec.bn_momentum;
    for (std::size_t k = 0; k < params.running_mean.size(); ++k) {
        params.running_mean[k] = m * params.running_mean[k] + (1.0 - m) * batch_mean[k];
        params.running_var[k] = m * params.running_var[k] + (1.0 - m) * batch_var[k];
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointFormat = "bpb-model/1";

nlohmann::ordered_json spec_json(const ModelSpec& s) {
    nlohmann::ordered_json j;
    j["input_dim"] = s.input_dim;
    j["hidden"] = s.hidden;
    j["layers"] = s.layers;
    j["embedding_dim"] = s.embedding_dim;
    j["dropout"] = s.dropout;
    j["recurrent_dropout"] = s.recurrent_dropout;
    j["bn_momentum"] = s.bn_momentum;
    j["bn_epsilon"] = s.bn_epsilon;
    return j;
}

ModelSpec spec_from(const nlohmann::json& j) {
    ModelSpec s;
    s.input_dim = j.at("input_dim").get<std::size_t>();
    s.hidden = j.at("hidden").get<std::size_t>();
    s.layers = j.at("layers").get<std::size_t>();
    s.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    s.dropout = j.at("dropout").get<double>();
    s.recurrent_dropout = j.at("recurrent_dropout").get<double>();
    s.bn_momentum = j.at("bn_momentum").get<double>();
    s.bn_epsilon = j.at("bn_epsilon").get<double>();
    return s;
}

} // namespace

void save_checkpoint(const ModelParams& params, ModalityId modality, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["format"] = kCheckpointFormat;
    j["modality"] = modality_name(modality);
    j["spec"] = spec_json(params.spec);
    j["values"] = params.values;
    j["running_mean"] = params.running_mean;
    j["running_var"] = params.running_var;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write checkpoint '{}'", path.string()));
    out << j.dump() << '\n';
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifact(fmt::format("missing checkpoint '{}'", path.string()));
    std::stringstream ss;
    ss << in.rdbuf();
    ModelParams p;
    try {
        const auto j = nlohmann::json::parse(ss.str());
        if (j.at("format").get<std::string>() != kCheckpointFormat)
            throw SchemaError(fmt::format("{}: unsupported checkpoint format", path.string()));
        p.spec = spec_from(j.at("spec"));
        p.values = j.at("values").get<std::vector<double>>();
        p.running_mean = j.at("running_mean").get<std::vector<double>>();
        p.running_var = j.at("running_var").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
    }
    p.spec.validate();
    if (p.values.size() != ParamLayout(p.spec).total || p.running_mean.size() != p.spec.input_dim ||
        p.running_var.size() != p.spec.input_dim)
        throw SchemaError(fmt::format("{}: tensor sizes do not match the stored spec", path.string()));
    return p;
}

ModelParams load_checkpoint(const std::filesystem::path& path, const ModelSpec& expected) {
    ModelParams p = load_checkpoint(path);
    if (!(p.spec == expected))
        throw SchemaError(fmt::format("{}: checkpoint spec (input {}, hidden {}, embedding {}) does not match the "
                                      "requested spec (input {}, hidden {}, embedding {})",
                                      path.string(), p.spec.input_dim, p.spec.hidden, p.spec.embedding_dim,
                                      expected.input_dim, expected.hidden, expected.embedding_dim));
    return p;
}

} // namespace bpb
