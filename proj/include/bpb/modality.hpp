#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace bpb {

// The four evaluated touch tasks. Each one also records the five background
// sensors while it runs.
enum class Task { Keystroke, TextReading, GallerySwiping, Tapping };

// Trainable modalities: one touch channel per task plus five sensors.
enum class ModalityId {
    Keystroke,
    TextReading,
    GallerySwiping,
    Tapping,
    Accelerometer,
    GravitySensor,
    Gyroscope,
    LinearAccelerometer,
    Magnetometer,
};

inline constexpr std::array<Task, 4> kTasks{Task::Keystroke, Task::TextReading, Task::GallerySwiping,
                                            Task::Tapping};

inline constexpr std::array<ModalityId, 5> kSensors{ModalityId::Accelerometer, ModalityId::GravitySensor,
                                                    ModalityId::Gyroscope, ModalityId::LinearAccelerometer,
                                                    ModalityId::Magnetometer};

inline constexpr std::array<ModalityId, 9> kModalities{
    ModalityId::Keystroke,     ModalityId::TextReading,   ModalityId::GallerySwiping,
    ModalityId::Tapping,       ModalityId::Accelerometer, ModalityId::GravitySensor,
    ModalityId::Gyroscope,     ModalityId::LinearAccelerometer, ModalityId::Magnetometer};

constexpr bool is_sensor(ModalityId m) noexcept { return static_cast<int>(m) >= 4; }
constexpr bool is_touch(ModalityId m) noexcept { return !is_sensor(m); }

constexpr ModalityId touch_modality(Task t) noexcept { return static_cast<ModalityId>(static_cast<int>(t)); }

// Only meaningful for touch modalities.
constexpr Task task_of(ModalityId m) noexcept { return static_cast<Task>(static_cast<int>(m)); }

// Per-timestamp feature dimension.
constexpr std::size_t feature_dim(ModalityId m) noexcept {
    if (is_sensor(m)) return 12;
    return m == ModalityId::Keystroke ? 2 : 8;
}

// Window length M.
constexpr std::size_t window_length(ModalityId m) noexcept {
    switch (m) {
    case ModalityId::Keystroke: return 50;
    case ModalityId::TextReading:
    case ModalityId::GallerySwiping: return 100;
    case ModalityId::Tapping: return 20;
    default: return 150;
    }
}

// Hop between evaluation window starts.
constexpr std::size_t window_stride(ModalityId m) noexcept {
    if (is_sensor(m)) return 50;
    return m == ModalityId::Keystroke ? 20 : 10;
}

inline constexpr std::size_t kMaxEvalWindows = 50;

// Keys used by the canonical JSON layout.
std::string_view task_key(Task t) noexcept;
std::optional<Task> task_from_key(std::string_view key) noexcept;

// Key of a modality inside a task block: "touch" for every touch modality,
// the sensor name otherwise.
std::string_view series_key(ModalityId m) noexcept;

// Globally unique name, e.g. "keystroke", "accelerometer".
std::string_view modality_name(ModalityId m) noexcept;
std::optional<ModalityId> modality_from_name(std::string_view name) noexcept;

// Table acronyms: K, TR, GS, T, A, Gr, Gy, L, M.
std::string_view modality_acronym(ModalityId m) noexcept;

} // namespace bpb
