#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>

#include "twostream/error.hpp"

namespace twostream {

// Step learning-rate schedule: base_lr * decay_factor^floor(iter / step_iters),
// with the decay applied at exact multiples of step_iters (iteration
// step_iters already runs at the decayed rate).
struct StepSchedule {
    double base_lr = 0.0;
    double decay_factor = 0.1;
    std::uint64_t step_iters = 1;
    std::uint64_t stop_iter = 0;

    void validate() const {
        if (!(base_lr > 0.0)) throw ValueError("schedule base_lr must be positive");
        if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
            throw ValueError("schedule decay_factor must be in (0, 1)");
        }
        if (step_iters == 0) throw ValueError("schedule step_iters must be >= 1");
        if (stop_iter > 0 && step_iters > stop_iter) {
            throw ValueError("schedule step_iters exceeds stop_iter");
        }
    }
};

// nullopt means the schedule is exhausted: training complete, not a rate.
inline std::optional<double> lr_at(const StepSchedule& s, std::uint64_t iter) {
    s.validate();
    if (iter >= s.stop_iter) return std::nullopt;
    return s.base_lr * std::pow(s.decay_factor, static_cast<double>(iter / s.step_iters));
}

enum class Stream { spatial, temporal };

inline Stream parse_stream(const std::string& s) {
    if (s == "spatial") return Stream::spatial;
    if (s == "temporal") return Stream::temporal;
    throw ValueError("unknown stream '" + s + "' (expected spatial or temporal)");
}

inline const char* stream_name(Stream s) {
    return s == Stream::spatial ? "spatial" : "temporal";
}

inline StepSchedule preset_schedule(Stream stream) {
    if (stream == Stream::temporal) return {0.005, 0.1, 10000, 30000};
    return {0.001, 0.1, 4000, 10000};
}

}  // namespace twostream
