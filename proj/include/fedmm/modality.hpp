// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <string_view>

namespace fedmm {

/// Which modality branches are live. A disabled branch contributes an
/// all-zeros feature vector; the all-off state is legal (the classifier
/// degrades to its head acting on a zero vector).
struct ModalityMask {
    bool image = true;
    bool spectrogram = true;
    bool sign = true;

    static ModalityMask full() { return {true, true, true}; }
    static ModalityMask none() { return {false, false, false}; }

    bool all_on() const { return image && spectrogram && sign; }
    bool all_off() const { return !image && !spectrogram && !sign; }

    friend bool operator==(const ModalityMask&, const ModalityMask&) = default;

    std::string str() const;
};

/// Named training scenario: the set of modalities AVAILABLE in client
/// support data. Evaluation and query sets always run full-modality.
enum class Scenario {
    img_sign,  // image + sign available, spectrogram missing
    sp_sign,   // spectrogram + sign available
    img_sp,    // image + spectrogram available
    img,       // image only
    sp,        // spectrogram only
    sign,      // sign only
    full,      // nothing missing
};

inline constexpr std::array<Scenario, 7> kAllScenarios = {
    Scenario::img_sign, Scenario::sp_sign, Scenario::img_sp, Scenario::img,
    Scenario::sp,       Scenario::sign,    Scenario::full,
};

/// The six missing-modality scenarios (everything except full).
inline constexpr std::array<Scenario, 6> kMissingScenarios = {
    Scenario::img_sign, Scenario::sp_sign, Scenario::img_sp,
    Scenario::img,      Scenario::sp,      Scenario::sign,
};

ModalityMask scenario_mask(Scenario s);

/// Canonical name, e.g. "sp/sign".
std::string_view scenario_name(Scenario s);

/// Parses a canonical name; also accepts the spelled-out "spect"/"spectrogram"
/// variants. Throws ConfigError for anything else.
Scenario parse_scenario(std::string_view name);

}  // namespace fedmm
