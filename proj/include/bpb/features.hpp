#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bpb/dataset.hpp"
#include "bpb/modality.hpp"

namespace bpb {

// Where a feature sequence (and the windows cut from it) came from.
struct SeriesOrigin {
    std::string user;
    int session = 0;
    Task task = Task::Keystroke;
    bool impostor = false;  // performed by someone other than the owner
};

// Row-major sequence of fixed-dimension feature vectors.
struct FeatureSequence {
    ModalityId modality = ModalityId::Accelerometer;
    std::size_t dim = 0;
    std::vector<double> values;  // length() * dim
    SeriesOrigin origin;

    std::size_t length() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
};

struct WindowOrigin {
    std::string user;
    int session = 0;
    Task task = Task::Keystroke;
    std::size_t start = 0;
};

// M x dim slice of a feature sequence, zero-padded past valid_len.
struct Window {
    std::size_t rows = 0;       // M
    std::size_t dim = 0;
    std::size_t valid_len = 0;
    std::vector<double> data;   // rows * dim, row-major
    WindowOrigin origin;

    std::span<const double> row(std::size_t i) const { return {data.data() + i * dim, dim}; }
    std::span<double> row(std::size_t i) { return {data.data() + i * dim, dim}; }
};

// Per-session normalization. Sensors: z-score every axis (population std,
// zeros when std < 1e-9). Touch x/y: divide by screen width/height.
// Keystroke: unchanged. Throws InsufficientData on an empty series.
ChannelSeries normalize_session(const ChannelSeries& series, ModalityId modality, const ScreenSize& screen = {});

// z-score of one axis, exposed for tests.
std::vector<double> zscore(std::span<const double> axis);

// Forward difference with the last value repeated; preserves length.
std::vector<double> forward_difference(std::span<const double> v);

// |DFT| of v, bin k at index k. Inputs longer than kSpectrumBlock are
// transformed in contiguous blocks of that size.
inline constexpr std::size_t kSpectrumBlock = 4096;
std::vector<double> magnitude_spectrum(std::span<const double> v);

// Build per-timestamp feature vectors:
//   sensors   [x y z x' y' z' x'' y'' z'' |X| |Y| |Z|]
//   touch     [x y x' y' x'' y'' |X| |Y|]
//   keystroke [inter-press seconds, ascii / 127]
// Spectral columns are computed from `spectral_source`, which for sensors is
// the raw (un-normalized) session. Throws DimensionError on missing columns.
FeatureSequence derive_features(const ChannelSeries& normalized, ModalityId modality,
                                const ChannelSeries& spectral_source);
FeatureSequence derive_features(const ChannelSeries& normalized, ModalityId modality);

// normalize_session followed by derive_features with the correct spectral
// source for the modality.
FeatureSequence extract_features(const ChannelSeries& raw, ModalityId modality, const ScreenSize& screen);

// Window starting at `start` (rows past the end are zero).
Window window_at(const FeatureSequence& fs, std::size_t rows, std::size_t start);

// Evaluation windows: starts 0, stride, 2*stride, ... keeping only full
// windows; a single zero-padded window when the sequence is shorter than M;
// evenly spaced subset when more than `cap` starts exist.
std::vector<Window> make_windows(const FeatureSequence& fs, std::size_t rows, std::size_t stride, std::size_t cap);
std::vector<Window> make_eval_windows(const FeatureSequence& fs);

// Debug dump: one row per timestamp with named columns.
void write_feature_csv(const FeatureSequence& fs, std::ostream& out);
std::vector<std::string> feature_column_names(ModalityId modality);

} // namespace bpb
