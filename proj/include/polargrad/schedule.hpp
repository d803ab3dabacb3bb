#pragma once

#include <cstdint>
#include <string_view>

namespace polargrad {

enum class ScheduleKind { Constant, StepDecay, LinearToZero, WarmupCosine };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

/// Learning-rate schedule γ_k for step k = 0, 1, ...
struct Schedule {
    ScheduleKind kind = ScheduleKind::Constant;
    double base_lr = 0.0;
    double factor = 1.0;            // StepDecay multiplier
    std::int64_t every = 1;         // StepDecay period
    std::int64_t total_steps = 1;   // LinearToZero, WarmupCosine
    double decay_ratio = 0.0;       // LinearToZero: fraction of total_steps spent decaying
    std::int64_t warmup_steps = 0;  // WarmupCosine

    static Schedule constant(double lr);
    /// γ₀ · factor^⌊k / every⌋
    static Schedule step_decay(double lr, double factor, std::int64_t every);
    /// γ₀ until (1 − ratio)·T, then linear to 0 at T.
    static Schedule linear_to_zero(double lr, std::int64_t total_steps, double decay_ratio);
    /// Linear ramp γ₀(k+1)/W over W steps, then cosine decay to 0 at T.
    static Schedule warmup_cosine(double lr, std::int64_t warmup_steps, std::int64_t total_steps);

    double value(std::int64_t k) const;
    /// Throws std::invalid_argument on negative rates or non-positive periods.
    void validate() const;
};

}  // namespace polargrad
