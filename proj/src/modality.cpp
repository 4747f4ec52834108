#include "bpb/modality.hpp"

namespace bpb {

namespace {

constexpr std::array<std::string_view, 4> kTaskKeys{"keystroke", "text_reading", "gallery_swiping", "tapping"};
constexpr std::array<std::string_view, 9> kNames{"keystroke",     "text_reading",  "gallery_swiping",
                                                 "tapping",       "accelerometer", "gravity",
                                                 "gyroscope",     "linear_accelerometer", "magnetometer"};
constexpr std::array<std::string_view, 9> kAcronyms{"K", "TR", "GS", "T", "A", "Gr", "Gy", "L", "M"};

} // namespace

std::string_view task_key(Task t) noexcept { return kTaskKeys[static_cast<std::size_t>(t)]; }

std::optional<Task> task_from_key(std::string_view key) noexcept {
    for (std::size_t i = 0; i < kTaskKeys.size(); ++i)
        if (kTaskKeys[i] == key) return static_cast<Task>(i);
    return std::nullopt;
}

std::string_view series_key(ModalityId m) noexcept {
    return is_touch(m) ? std::string_view{"touch"} : kNames[static_cast<std::size_t>(m)];
}

std::string_view modality_name(ModalityId m) noexcept { return kNames[static_cast<std::size_t>(m)]; }

std::optional<ModalityId> modality_from_name(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kNames.size(); ++i)
        if (kNames[i] == name) return static_cast<ModalityId>(i);
    return std::nullopt;
}

std::string_view modality_acronym(ModalityId m) noexcept { return kAcronyms[static_cast<std::size_t>(m)]; }

} // namespace bpb
