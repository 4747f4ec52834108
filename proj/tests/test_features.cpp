#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "bpb/error.hpp"
#include "bpb/features.hpp"
#include "bpb/rng.hpp"

using namespace bpb;

namespace {

std::vector<double> naive_dft_magnitude(const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t t = 0; t < n; ++t)
            acc += v[t] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n));
        out[k] = std::abs(acc);
    }
    return out;
}

ChannelSeries sensor_series(Rng& rng, std::size_t n, double scale = 1.0) {
    ChannelSeries s;
    for (std::size_t i = 0; i < n; ++i) s.t.push_back(5.0 * static_cast<double>(i));
    for (const char* axis : {"x", "y", "z"}) {
        std::vector<double> v(n);
        for (auto& x : v) x = scale * (rng.normal() + 2.0);
        s.columns[axis] = v;
    }
    return s;
}

FeatureSequence ramp(std::size_t len, std::size_t dim = 2) {
    FeatureSequence fs;
    fs.modality = ModalityId::Keystroke;
    fs.dim = dim;
    for (std::size_t i = 0; i < len * dim; ++i) fs.values.push_back(static_cast<double>(i + 1));
    return fs;
}

} // namespace

TEST_CASE("z-score hand examples") {
    const auto z = zscore(std::vector{1.0, 2.0, 3.0});
    CHECK(z[0] == doctest::Approx(-1.224744871391589));
    CHECK(z[1] == doctest::Approx(0.0));
    CHECK(z[2] == doctest::Approx(1.224744871391589));
    CHECK(zscore(std::vector{5.0, 5.0, 5.0}) == std::vector{0.0, 0.0, 0.0});
}

TEST_CASE("z-score output has zero mean and unit variance") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(2 + rng.below(500));
        for (auto& x : v) x = rng.normal(rng.uniform(-100, 100), rng.uniform(0.01, 50));
        const auto z = zscore(v);
        double mean = 0.0, var = 0.0;
        for (double x : z) mean += x;
        mean /= static_cast<double>(z.size());
        for (double x : z) var += (x - mean) * (x - mean);
        var /= static_cast<double>(z.size());
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
    }
}

TEST_CASE("normalization is invariant to positive axis scaling") {
    Rng rng(2);
    for (double scale : {0.001, 0.5, 3.0, 1000.0}) {
        Rng a(7), b(7);
        const auto base = normalize_session(sensor_series(a, 200), ModalityId::Gyroscope);
        const auto scaled = normalize_session(sensor_series(b, 200, scale), ModalityId::Gyroscope);
        for (const char* axis : {"x", "y", "z"})
            for (std::size_t i = 0; i < 200; ++i)
                CHECK(scaled.column(axis)[i] == doctest::Approx(base.column(axis)[i]).epsilon(1e-9));
    }
}

TEST_CASE("touch coordinates are divided by the screen size") {
    ChannelSeries s;
    s.t = {0, 100};
    s.columns["x"] = {540, 1080};
    s.columns["y"] = {960, 0};
    const auto n = normalize_session(s, ModalityId::Tapping, ScreenSize{1080, 1920});
    CHECK(n.column("x") == std::vector{0.5, 1.0});
    CHECK(n.column("y") == std::vector{0.5, 0.0});
    CHECK_THROWS_AS(normalize_session(ChannelSeries{}, ModalityId::Tapping), InsufficientData);
}

TEST_CASE("forward difference") {
    CHECK(forward_difference(std::vector{0.0, 1.0, 4.0}) == std::vector{1.0, 3.0, 3.0});
    CHECK(forward_difference(std::vector{2.0}) == std::vector{0.0});
    CHECK(forward_difference(std::vector<double>{}).empty());
}

TEST_CASE("magnitude spectrum") {
    const auto c = magnitude_spectrum(std::vector(16, -2.5));
    CHECK(c[0] == doctest::Approx(40.0));
    for (std::size_t k = 1; k < 16; ++k) CHECK(std::abs(c[k]) < 1e-12);

    Rng rng(3);
    for (std::size_t n : {1u, 2u, 7u, 64u, 150u, 333u}) {
        std::vector<double> v(n);
        for (auto& x : v) x = rng.normal();
        const auto fast = magnitude_spectrum(v);
        const auto slow = naive_dft_magnitude(v);
        for (std::size_t k = 0; k < n; ++k) CHECK(fast[k] == doctest::Approx(slow[k]).epsilon(1e-9).scale(1.0));
    }
}

TEST_CASE("long sessions are transformed in blocks") {
    Rng rng(4);
    std::vector<double> v(kSpectrumBlock + 100);
    for (auto& x : v) x = rng.normal();
    const auto spec = magnitude_spectrum(v);
    const std::vector<double> tail(v.begin() + kSpectrumBlock, v.end());
    const auto tail_spec = naive_dft_magnitude(tail);
    for (std::size_t k = 0; k < tail.size(); ++k)
        CHECK(spec[kSpectrumBlock + k] == doctest::Approx(tail_spec[k]).epsilon(1e-9).scale(1.0));
}

TEST_CASE("keystroke features") {
    ChannelSeries s;
    s.t = {0, 100, 250};
    s.columns["ascii"] = {97, 98, 99};
    const auto fs = derive_features(normalize_session(s, ModalityId::Keystroke), ModalityId::Keystroke);
    REQUIRE(fs.dim == 2);
    REQUIRE(fs.length() == 3);
    CHECK(fs.row(0)[0] == 0.0);
    CHECK(fs.row(1)[0] == doctest::Approx(0.1));
    CHECK(fs.row(2)[0] == doctest::Approx(0.15));
    CHECK(fs.row(0)[1] == doctest::Approx(0.7638).epsilon(1e-4));
    CHECK(fs.row(1)[1] == doctest::Approx(0.7717).epsilon(1e-4));
    CHECK(fs.row(2)[1] == doctest::Approx(0.7795).epsilon(1e-4));
}

TEST_CASE("feature layout per modality") {
    Rng rng(5);
    const auto raw = sensor_series(rng, 120);
    for (ModalityId m : kSensors) {
        const auto fs = extract_features(raw, m, {});
        CHECK(fs.dim == 12);
        CHECK(fs.length() == 120);
        const auto norm = normalize_session(raw, m);
        const auto dx = forward_difference(norm.column("x"));
        const auto ddx = forward_difference(dx);
        const auto fx = magnitude_spectrum(raw.column("x"));
        for (std::size_t i = 0; i < 120; ++i) {
            CHECK(fs.row(i)[0] == norm.column("x")[i]);
            CHECK(fs.row(i)[3] == dx[i]);
            CHECK(fs.row(i)[6] == ddx[i]);
            CHECK(fs.row(i)[9] == fx[i]);
        }
    }
    ChannelSeries touch;
    touch.t = {0, 50, 100, 150};
    touch.columns["x"] = {100, 200, 300, 400};
    touch.columns["y"] = {10, 20, 30, 40};
    for (ModalityId m : {ModalityId::TextReading, ModalityId::GallerySwiping, ModalityId::Tapping})
        CHECK(extract_features(touch, m, {}).dim == 8);
    CHECK(feature_dim(ModalityId::Keystroke) == 2);

    ChannelSeries missing = touch;
    missing.columns.erase("y");
    CHECK_THROWS_AS(derive_features(missing, ModalityId::Tapping), DimensionError);
    CHECK_THROWS_AS(derive_features(touch, ModalityId::Keystroke), DimensionError);
}

TEST_CASE("windowing examples") {
    const auto a = make_windows(ramp(10), 4, 3, 50);
    REQUIRE(a.size() == 3);
    CHECK(a[0].origin.start == 0);
    CHECK(a[1].origin.start == 3);
    CHECK(a[2].origin.start == 6);
    for (const auto& w : a) CHECK(w.valid_len == 4);

    const auto b = make_windows(ramp(2), 4, 3, 50);
    REQUIRE(b.size() == 1);
    CHECK(b[0].valid_len == 2);
    for (std::size_t r = 2; r < 4; ++r)
        for (double v : b[0].row(r)) CHECK(v == 0.0);

    const auto c = make_windows(ramp(10000, 1), 150, 50, 50);
    CHECK(c.size() == 50);
    CHECK(c.front().origin.start == 0);
    CHECK(c.back().origin.start + 150 == 10000);
    for (const auto& w : c) CHECK(w.valid_len == 150);
}

TEST_CASE("evaluation windows use modality constants") {
    FeatureSequence fs = ramp(600, 12);
    fs.modality = ModalityId::Magnetometer;
    const auto ws = make_eval_windows(fs);
    CHECK(ws.size() == 10);
    CHECK(ws[0].rows == 150);
    CHECK(window_length(ModalityId::Keystroke) == 50);
    CHECK(window_length(ModalityId::TextReading) == 100);
    CHECK(window_length(ModalityId::GallerySwiping) == 100);
    CHECK(window_length(ModalityId::Tapping) == 20);
    CHECK(window_stride(ModalityId::Keystroke) == 20);
    CHECK(window_stride(ModalityId::Tapping) == 10);
    CHECK(window_stride(ModalityId::Accelerometer) == 50);
}

TEST_CASE("window count never exceeds the cap and windows are finite") {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t len = 1 + rng.below(3000), rows = 1 + rng.below(200), stride = 1 + rng.below(60);
        const std::size_t cap = 1 + rng.below(60);
        const auto ws = make_windows(ramp(len, 1), rows, stride, cap);
        CHECK(ws.size() >= 1);
        CHECK(ws.size() <= cap);
        for (const auto& w : ws) {
            CHECK(w.origin.start + w.valid_len <= len);
            for (double v : w.data) CHECK(std::isfinite(v));
            for (std::size_t r = w.valid_len; r < w.rows; ++r) CHECK(w.row(r)[0] == 0.0);
        }
    }
}

TEST_CASE("non-overlapping windows concatenate to a prefix") {
    for (std::size_t len : {10u, 57u, 300u}) {
        const auto fs = ramp(len, 3);
        const auto ws = make_windows(fs, 7, 7, 1000);
        std::vector<double> joined;
        for (const auto& w : ws) joined.insert(joined.end(), w.data.begin(), w.data.begin() + w.valid_len * w.dim);
        REQUIRE(joined.size() <= fs.values.size());
        CHECK(std::equal(joined.begin(), joined.end(), fs.values.begin()));
    }
}

TEST_CASE("feature csv dump") {
    ChannelSeries s;
    s.t = {0, 100};
    s.columns["ascii"] = {97, 98};
    const auto fs = derive_features(s, ModalityId::Keystroke);
    std::ostringstream out;
    write_feature_csv(fs, out);
    CHECK(out.str().rfind("inter_press,ascii\n", 0) == 0);
    CHECK(feature_column_names(ModalityId::GravitySensor).size() == 12);
}
