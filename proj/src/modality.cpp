// SPDX-License-Identifier: Apache-2.0
#include "fedmm/modality.hpp"

#include "fedmm/errors.hpp"

namespace fedmm {

std::string ModalityMask::str() const {
    std::string s = "{";
    s += image ? "image" : "-";
    s += ",";
    s += spectrogram ? "spectrogram" : "-";
    s += ",";
    s += sign ? "sign" : "-";
    s += "}";
    return s;
}

ModalityMask scenario_mask(Scenario s) {
    switch (s) {
        case Scenario::img_sign: return {true, false, true};
        case Scenario::sp_sign: return {false, true, true};
        case Scenario::img_sp: return {true, true, false};
        case Scenario::img: return {true, false, false};
        case Scenario::sp: return {false, true, false};
        case Scenario::sign: return {false, false, true};
        case Scenario::full: return {true, true, true};
    }
    throw ConfigError("unknown scenario value");
}

std::string_view scenario_name(Scenario s) {
    switch (s) {
        case Scenario::img_sign: return "img/sign";
        case Scenario::sp_sign: return "sp/sign";
        case Scenario::img_sp: return "img/sp";
        case Scenario::img: return "img";
        case Scenario::sp: return "sp";
        case Scenario::sign: return "sign";
        case Scenario::full: return "full";
    }
    return "?";
}

Scenario parse_scenario(std::string_view name) {
    if (name == "img/sign") return Scenario::img_sign;
    if (name == "sp/sign" || name == "spect/sign") return Scenario::sp_sign;
    if (name == "img/sp" || name == "img/spect") return Scenario::img_sp;
    if (name == "img") return Scenario::img;
    if (name == "sp" || name == "spect" || name == "spectrogram") return Scenario::sp;
    if (name == "sign") return Scenario::sign;
    if (name == "full") return Scenario::full;
    throw ConfigError("unknown scenario '" + std::string(name) +
                      "' (expected img/sign, sp/sign, img/sp, img, sp, sign or full)");
}

}  // namespace fedmm
