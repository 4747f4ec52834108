#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bpb/modality.hpp"

namespace bpb {

inline constexpr std::string_view kSchemaVersion = "behavepass-canon/1";

// One raw time series. Timestamps are milliseconds. Column names follow the
// canonical layout: sensors x,y,z; touch x,y; keystroke ascii.
struct ChannelSeries {
    std::vector<double> t;
    std::map<std::string, std::vector<double>> columns;

    std::size_t size() const noexcept { return t.size(); }
    bool empty() const noexcept { return t.empty(); }
    const std::vector<double>& column(const std::string& name) const;
    bool has_column(const std::string& name) const { return columns.count(name) != 0; }

    bool operator==(const ChannelSeries&) const = default;
};

// task key -> series key -> series. String keys so that unknown tasks and
// modalities survive a load/save round trip.
using TaskMap = std::map<std::string, std::map<std::string, ChannelSeries>>;

struct Session {
    int session_id = 1;
    std::string device_id;
    std::string performed_by;
    TaskMap tasks;

    const ChannelSeries* find(Task task, ModalityId modality) const;

    bool operator==(const Session&) const = default;
};

struct ScreenSize {
    double width = 1080.0;
    double height = 1920.0;
    bool operator==(const ScreenSize&) const = default;
};

struct UserRecord {
    std::string id;
    std::string device;
    ScreenSize screen;
    std::vector<Session> sessions;

    bool is_impostor(const Session& s) const { return s.performed_by != id; }
    // Genuine (owner-performed) session with the given id.
    const Session* genuine_session(int session_id) const;
    // Sessions performed by someone else on this user's device.
    std::vector<const Session*> skilled_sessions() const;

    bool operator==(const UserRecord&) const = default;
};

enum class Split { Train, Validation, Evaluation };

std::string_view split_name(Split s) noexcept;
std::optional<Split> split_from_name(std::string_view name) noexcept;

struct Dataset {
    Split split = Split::Train;
    std::vector<UserRecord> users;
    // "task/series" paths seen at load time that this toolkit does not model.
    // Not part of value identity.
    std::vector<std::string> unknown_modalities;

    const UserRecord* find_user(const std::string& id) const;

    bool operator==(const Dataset& o) const { return split == o.split && users == o.users; }
};

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

// Parameters of the synthetic generator. User ids and RNG streams are keyed
// by global user index (first_user + i) so that growing n_users never changes
// already generated users.
struct SynthConfig {
    Split split = Split::Train;
    int n_users = 8;
    int first_user = 0;
    int sessions_per_user = 4;
    int sensor_samples = 600;   // per task, at 200 Hz
    int touch_events = 200;     // per task
    std::uint64_t seed = 1;

    // User signature: AR(2) pole radius/angle, two sinusoids, posture mean.
    Range ar_radius{0.55, 0.95};
    Range ar_angle{0.05, 0.6};   // radians per sample
    Range sine_freq_hz{0.5, 12.0};
    Range sine_amplitude{0.3, 1.5};
    Range posture_mean{-1.0, 1.0};
    double session_jitter = 0.1; // relative per-session perturbation

    // Device fingerprint applied to sensor channels.
    Range device_gain{0.98, 1.02};
    Range device_offset{-0.5, 0.5};
    double noise_std = 0.2;

    // Throws ConfigError.
    void validate() const;

    bool operator==(const SynthConfig&) const = default;
};

inline bool operator==(const Range& a, const Range& b) { return a.lo == b.lo && a.hi == b.hi; }

Dataset generate_synthetic(const SynthConfig& config);

// Noise-free user signal of one sensor axis as it would be generated for the
// given owner/session/task before the device model is applied. Exposed for
// tests that need to separate user and device contributions.
std::vector<double> synthetic_user_axis(const SynthConfig& config, int owner_index, int performer_index,
                                        int session_slot, Task task, ModalityId sensor, int axis);

struct DeviceModel {
    std::array<double, 3> gain{1.0, 1.0, 1.0};
    std::array<double, 3> offset{0.0, 0.0, 0.0};
};
DeviceModel synthetic_device(const SynthConfig& config, int device_index, ModalityId sensor);

// Canonical JSON (UTF-8). Throws ParseError / SchemaError.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& text);
std::string serialize_dataset(const Dataset& d);
void save_dataset(const Dataset& d, const std::filesystem::path& path);

std::string serialize_synth_config(const SynthConfig& c);
SynthConfig parse_synth_config(const std::string& text);

enum class FindingKind { MissingModality, EmptySeries, NonMonotoneTimestamps, ColumnLengthMismatch, MissingColumn };

std::string_view finding_name(FindingKind k) noexcept;

struct Finding {
    FindingKind kind;
    std::string user;
    int session = 0;          // 0 when the finding is per-user
    std::string task;         // empty when per-user
    std::string modality;
    std::size_t index = 0;    // offending sample for NonMonotoneTimestamps

    std::string describe() const;
};

struct ValidationReport {
    std::vector<Finding> findings;

    bool clean() const noexcept { return findings.empty(); }
    // Modalities a user lacks somewhere; such users are dropped from every
    // fusion subset that contains the modality.
    std::vector<ModalityId> excluded_modalities(const std::string& user) const;
};

ValidationReport validate_dataset(const Dataset& d);

} // namespace bpb
