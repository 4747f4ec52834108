#include "bpb/features.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fftw3.h>
#include <fmt/format.h>

#include "bpb/error.hpp"

namespace bpb {

std::vector<double> zscore(std::span<const double> axis) {
    const auto n = static_cast<double>(axis.size());
    std::vector<double> out(axis.size(), 0.0);
    if (axis.empty()) return out;
    double mean = 0.0;
    for (double v : axis) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : axis) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    if (sd < 1e-9) return out;
    for (std::size_t i = 0; i < axis.size(); ++i) out[i] = (axis[i] - mean) / sd;
    return out;
}

ChannelSeries normalize_session(const ChannelSeries& series, ModalityId modality, const ScreenSize& screen) {
    if (series.empty()) throw InsufficientData("normalize_session: empty series");
    ChannelSeries out = series;
    if (is_sensor(modality)) {
        for (auto& [name, col] : out.columns) col = zscore(col);
    } else if (modality != ModalityId::Keystroke) {
        if (!(screen.width > 0 && screen.height > 0)) throw DimensionError("screen size must be positive");
        if (auto it = out.columns.find("x"); it != out.columns.end())
            for (auto& v : it->second) v /= screen.width;
        if (auto it = out.columns.find("y"); it != out.columns.end())
            for (auto& v : it->second) v /= screen.height;
    }
    return out;
}

std::vector<double> forward_difference(std::span<const double> v) {
    std::vector<double> d(v.size(), 0.0);
    if (v.size() < 2) return d;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) d[i] = v[i + 1] - v[i];
    d.back() = d[d.size() - 2];
    return d;
}

std::vector<double> magnitude_spectrum(std::span<const double> v) {
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t base = 0; base < v.size(); base += kSpectrumBlock) {
        const std::size_t n = std::min(kSpectrumBlock, v.size() - base);
        std::vector<double> in(v.begin() + static_cast<std::ptrdiff_t>(base),
                               v.begin() + static_cast<std::ptrdiff_t>(base + n));
        const std::size_t bins = n / 2 + 1;
        auto* spec = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins));
        fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), spec, FFTW_ESTIMATE);
        fftw_execute(plan);
        for (std::size_t k = 0; k < n; ++k) {
            // Real input: |X[n-k]| = |X[k]|.
            const std::size_t b = k < bins ? k : n - k;
            out[base + k] = std::hypot(spec[b][0], spec[b][1]);
        }
        fftw_destroy_plan(plan);
        fftw_free(spec);
    }
    return out;
}

namespace {

const std::vector<double>& need(const ChannelSeries& s, const char* col, ModalityId m) {
    auto it = s.columns.find(col);
    if (it == s.columns.end())
        throw DimensionError(fmt::format("{} series is missing column '{}'", modality_name(m), col));
    if (it->second.size() != s.t.size())
        throw DimensionError(fmt::format("{} column '{}' length differs from timestamps", modality_name(m), col));
    return it->second;
}

} // namespace

FeatureSequence derive_features(const ChannelSeries& normalized, ModalityId modality,
                                const ChannelSeries& spectral_source) {
    FeatureSequence fs;
    fs.modality = modality;
    fs.dim = feature_dim(modality);
    const std::size_t n = normalized.size();
    fs.values.assign(n * fs.dim, 0.0);
    auto put = [&](std::size_t col, const std::vector<double>& v) {
        for (std::size_t i = 0; i < n; ++i) fs.values[i * fs.dim + col] = v[i];
    };

    if (modality == ModalityId::Keystroke) {
        const auto& ascii = need(normalized, "ascii", modality);
        for (std::size_t i = 0; i < n; ++i) {
            fs.values[i * 2] = i == 0 ? 0.0 : (normalized.t[i] - normalized.t[i - 1]) / 1000.0;
            fs.values[i * 2 + 1] = ascii[i] / 127.0;
        }
        return fs;
    }

    static const char* kSensorAxes[] = {"x", "y", "z"};
    const std::size_t axes = is_sensor(modality) ? 3 : 2;
    if (spectral_source.size() != n) throw DimensionError("spectral source length differs from series length");
    for (std::size_t a = 0; a < axes; ++a) {
        const auto& v = need(normalized, kSensorAxes[a], modality);
        const auto d1 = forward_difference(v);
        const auto d2 = forward_difference(d1);
        put(a, v);
        put(axes + a, d1);
        put(2 * axes + a, d2);
        put(3 * axes + a, magnitude_spectrum(need(spectral_source, kSensorAxes[a], modality)));
    }
    for (double v : fs.values)
        if (!std::isfinite(v)) throw DimensionError(fmt::format("non-finite feature in {}", modality_name(modality)));
    return fs;
}

FeatureSequence derive_features(const ChannelSeries& normalized, ModalityId modality) {
    return derive_features(normalized, modality, normalized);
}

FeatureSequence extract_features(const ChannelSeries& raw, ModalityId modality, const ScreenSize& screen) {
    const ChannelSeries norm = normalize_session(raw, modality, screen);
    // Sensor spectra come from the raw signal; touch spectra from the
    // screen-normalized coordinates.
    return derive_features(norm, modality, is_sensor(modality) ? raw : norm);
}

Window window_at(const FeatureSequence& fs, std::size_t rows, std::size_t start) {
    Window w;
    w.rows = rows;
    w.dim = fs.dim;
    w.data.assign(rows * fs.dim, 0.0);
    const std::size_t len = fs.length();
    w.valid_len = start >= len ? 0 : std::min(rows, len - start);
    std::copy_n(fs.values.begin() + static_cast<std::ptrdiff_t>(start * fs.dim), w.valid_len * fs.dim, w.data.begin());
    w.origin = {fs.origin.user, fs.origin.session, fs.origin.task, start};
    return w;
}

std::vector<Window> make_windows(const FeatureSequence& fs, std::size_t rows, std::size_t stride, std::size_t cap) {
    const std::size_t len = fs.length();
    std::vector<Window> out;
    if (rows == 0 || stride == 0 || cap == 0 || len == 0) return out;
    if (len <= rows) {
        out.push_back(window_at(fs, rows, 0));
        return out;
    }
    const std::size_t count = (len - rows) / stride + 1;
    if (count <= cap) {
        for (std::size_t k = 0; k < count; ++k) out.push_back(window_at(fs, rows, k * stride));
        return out;
    }
    for (std::size_t j = 0; j < cap; ++j) {
        const std::size_t k = cap == 1 ? 0 : j * (count - 1) / (cap - 1);
        out.push_back(window_at(fs, rows, k * stride));
    }
    return out;
}

std::vector<Window> make_eval_windows(const FeatureSequence& fs) {
    return make_windows(fs, window_length(fs.modality), window_stride(fs.modality), kMaxEvalWindows);
}

std::vector<std::string> feature_column_names(ModalityId m) {
    if (m == ModalityId::Keystroke) return {"inter_press", "ascii"};
    if (is_sensor(m)) return {"x", "y", "z", "dx", "dy", "dz", "ddx", "ddy", "ddz", "fftx", "ffty", "fftz"};
    return {"x", "y", "dx", "dy", "ddx", "ddy", "fftx", "ffty"};
}

void write_feature_csv(const FeatureSequence& fs, std::ostream& out) {
    const auto names = feature_column_names(fs.modality);
    for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
    out << '\n';
    for (std::size_t i = 0; i < fs.length(); ++i) {
        auto r = fs.row(i);
        for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << fmt::format("{}", r[c]);
        out << '\n';
    }
}

} // namespace bpb
