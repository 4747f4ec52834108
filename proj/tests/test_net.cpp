#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "bpb/error.hpp"
#include "bpb/net.hpp"

using namespace bpb;

namespace {

Window random_window(std::size_t rows, std::size_t dim, std::size_t valid, Rng& rng, double scale = 1.0) {
    Window w;
    w.rows = rows;
    w.dim = dim;
    w.valid_len = valid;
    w.data.assign(rows * dim, 0.0);
    for (std::size_t i = 0; i < valid * dim; ++i) w.data[i] = scale * rng.normal();
    return w;
}

ModelSpec mini_spec(std::size_t dim) {
    ModelSpec s;
    s.input_dim = dim;
    s.hidden = 4;
    s.layers = 2;
    s.embedding_dim = 3;
    return s;
}

struct MiniBatch {
    std::vector<Window> windows;
    std::vector<TripletRef> triplets;
    std::vector<SequenceMasks> masks;
};

MiniBatch mini_batch(const ModelSpec& spec, std::size_t triplets, std::uint64_t seed, bool dropout) {
    Rng rng(seed);
    MiniBatch b;
    b.windows.reserve(3 * triplets);
    for (std::size_t i = 0; i < 3 * triplets; ++i)
        b.windows.push_back(random_window(6, spec.input_dim, i % 3 == 2 ? 4 : 6, rng));
    for (std::size_t i = 0; i < triplets; ++i)
        b.triplets.push_back({&b.windows[3 * i], &b.windows[3 * i + 1], &b.windows[3 * i + 2]});
    if (dropout)
        for (std::size_t i = 0; i < 3 * triplets; ++i) b.masks.push_back(draw_masks(spec, 6, rng));
    return b;
}

} // namespace

TEST_CASE("initialization") {
    const auto spec = ModelSpec::canonical(ModalityId::Gyroscope);
    const auto a = init_model(spec, 5);
    CHECK(a == init_model(spec, 5));
    CHECK(a.values != init_model(spec, 6).values);
    const ParamLayout L(spec);
    CHECK(a.parameter_count() == L.total);
    CHECK_FALSE(L.has_projection);

    const std::size_t H = spec.hidden, G = 4 * H;
    for (const auto& layer : L.lstm) {
        const double bound = std::sqrt(6.0 / static_cast<double>(layer.in_dim + G));
        for (std::size_t i = 0; i < layer.in_dim * G; ++i) CHECK(std::abs(a.values[layer.kernel + i]) <= bound);
        for (std::size_t j = 0; j < G; ++j) CHECK(a.values[layer.bias + j] == (j >= H && j < 2 * H ? 1.0 : 0.0));
        // Recurrent rows are orthonormal.
        double worst = 0.0;
        for (std::size_t r = 0; r < H; ++r)
            for (std::size_t q = 0; q <= r; ++q) {
                double dot = 0.0;
                for (std::size_t j = 0; j < G; ++j)
                    dot += a.values[layer.recurrent + r * G + j] * a.values[layer.recurrent + q * G + j];
                worst = std::max(worst, std::abs(dot - (r == q ? 1.0 : 0.0)));
            }
        CHECK(worst < 1e-10);
    }
    auto bad = spec;
    bad.dropout = 1.0;
    CHECK_THROWS_AS(init_model(bad, 1), ConfigError);
}

TEST_CASE("embedding shape and range") {
    Rng rng(3);
    const auto spec = ModelSpec::canonical(ModalityId::Magnetometer);
    const auto p = init_model(spec, 1);
    const auto w = random_window(150, 12, 150, rng);
    const auto e = embed(p, w);
    REQUIRE(e.values.size() == 64);
    for (double v : e.values) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }
    CHECK(embed(p, w).values == e.values);

    const auto wrong = random_window(150, 8, 150, rng);
    CHECK_THROWS_AS(embed(p, wrong), DimensionError);
    CHECK_THROWS_AS(embed(p, w, Mode::Train, nullptr), std::invalid_argument);
}

TEST_CASE("zero parameters give a zero embedding") {
    Rng rng(4);
    auto p = init_model(mini_spec(8), 2);
    std::fill(p.values.begin(), p.values.end(), 0.0);
    const auto e = embed(p, random_window(6, 8, 6, rng, 10.0));
    for (double v : e.values) CHECK(v == 0.0);
}

TEST_CASE("padding rows do not affect the embedding") {
    Rng rng(5);
    const auto p = init_model(mini_spec(8), 3);
    auto w = random_window(20, 8, 12, rng);
    const auto before = embed(p, w).values;
    for (std::size_t i = 12 * 8; i < w.data.size(); ++i) w.data[i] = 1e3 * rng.normal();
    CHECK(embed(p, w).values == before);
}

TEST_CASE("embedding a batch matches single windows") {
    Rng rng(6);
    const auto p = init_model(mini_spec(2), 4);
    std::vector<Window> ws;
    for (int i = 0; i < 4; ++i) ws.push_back(random_window(6, 2, 3 + static_cast<std::size_t>(i), rng));
    const auto all = embed_all(p, ws);
    REQUIRE(all.size() == ws.size());
    for (std::size_t i = 0; i < ws.size(); ++i) CHECK(all[i].values == embed(p, ws[i]).values);
}

TEST_CASE("gradient check") {
    for (std::size_t dim : {2u, 8u, 12u}) {
        for (std::size_t embedding : {4u, 3u}) {
            for (bool dropout : {false, true}) {
                for (std::uint64_t seed = 1; seed <= 5; ++seed) {
                    CAPTURE(dim);
                    CAPTURE(embedding);
                    CAPTURE(dropout);
                    CAPTURE(seed);
                    auto spec = mini_spec(dim);
                    spec.embedding_dim = embedding;
                    const auto p = init_model(spec, seed);
                    const auto b = mini_batch(spec, 1, 7 * seed, dropout);
                    // The hinge must be active or every gradient is trivially zero.
                    REQUIRE(forward_triplets(p, b.triplets, b.masks, 1.0).active_fraction == 1.0);
                    CHECK(grad_check(p, b.triplets, b.masks, 1.0, 1e-5) < 1e-4);
                }
            }
        }
    }
    const auto spec = mini_spec(2);
    const auto b = mini_batch(spec, 1, 1, false);
    CHECK_THROWS_AS(grad_check(init_model(spec, 1), b.triplets, b.masks, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("fused loss and gradient match the two-pass path") {
    const auto spec = mini_spec(8);
    const auto p = init_model(spec, 9);
    const auto b = mini_batch(spec, 3, 9, true);
    const auto cache = forward_triplets(p, b.triplets, b.masks, 1.0);
    const auto g = backward(p, cache);
    const auto fused = loss_and_gradient(p, b.triplets, b.masks, 1.0);
    CHECK(fused.loss == cache.loss);
    CHECK(fused.gradients.values == g.values);
    CHECK(batch_loss(p, b.triplets, b.masks, 1.0) == cache.loss);
    // Same masks, same loss.
    CHECK(forward_triplets(p, b.triplets, b.masks, 1.0).loss == cache.loss);
}

TEST_CASE("inactive triplets give zero gradient") {
    Rng rng(8);
    const auto spec = mini_spec(8);
    const auto p = init_model(spec, 8);
    const auto a = random_window(6, 8, 6, rng);
    const auto n = random_window(6, 8, 6, rng);
    const TripletRef t{&a, &a, &n};
    const auto r = loss_and_gradient(p, std::span(&t, 1), {}, 0.0);
    CHECK(r.loss == 0.0);
    for (double g : r.gradients.values) CHECK(g == 0.0);
}

TEST_CASE("stale forward cache is rejected") {
    const auto spec = mini_spec(2);
    auto p = init_model(spec, 1);
    const auto b = mini_batch(spec, 1, 2, false);
    const auto cache = forward_triplets(p, b.triplets, b.masks, 1.0);
    CHECK_NOTHROW(backward(p, cache));
    p.values[0] += 1e-3;
    CHECK_THROWS_AS(backward(p, cache), StaleCache);
    CHECK_THROWS_AS(backward(p, ForwardCache{}), StaleCache);
}

TEST_CASE("running statistics update") {
    auto p = init_model(mini_spec(2), 1);
    const std::vector<double> mean{1.0, -1.0}, var{4.0, 9.0};
    update_running_stats(p, mean, var);
    CHECK(p.running_mean[0] == doctest::Approx(0.01));
    CHECK(p.running_mean[1] == doctest::Approx(-0.01));
    CHECK(p.running_var[0] == doctest::Approx(0.99 + 0.04));
    CHECK(p.running_var[1] == doctest::Approx(0.99 + 0.09));
}

TEST_CASE("checkpoint round trip") {
    auto p = init_model(mini_spec(12), 7);
    p.running_mean = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2};
    const auto path = std::filesystem::temp_directory_path() / "bpb_test_net.json";
    save_checkpoint(p, ModalityId::Gyroscope, path);
    CHECK(load_checkpoint(path) == p);
    CHECK(load_checkpoint(path, p.spec) == p);
    auto other = p.spec;
    other.hidden = 5;
    CHECK_THROWS_AS(load_checkpoint(path, other), SchemaError);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), MissingArtifact);
}
