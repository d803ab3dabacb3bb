#include "polargrad/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace polargrad {

std::string_view to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::Constant: return "constant";
        case ScheduleKind::StepDecay: return "step";
        case ScheduleKind::LinearToZero: return "linear_to_zero";
        case ScheduleKind::WarmupCosine: return "warmup_cosine";
    }
    return "unknown";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
    if (name == "constant") return ScheduleKind::Constant;
    if (name == "step") return ScheduleKind::StepDecay;
    if (name == "linear_to_zero") return ScheduleKind::LinearToZero;
    if (name == "warmup_cosine") return ScheduleKind::WarmupCosine;
    throw std::invalid_argument("unknown schedule '" + std::string(name) + "'");
}

Schedule Schedule::constant(double lr) {
    Schedule s;
    s.base_lr = lr;
    return s;
}

Schedule Schedule::step_decay(double lr, double factor, std::int64_t every) {
    Schedule s;
    s.kind = ScheduleKind::StepDecay;
    s.base_lr = lr;
    s.factor = factor;
    s.every = every;
    return s;
}

Schedule Schedule::linear_to_zero(double lr, std::int64_t total_steps, double decay_ratio) {
    Schedule s;
    s.kind = ScheduleKind::LinearToZero;
    s.base_lr = lr;
    s.total_steps = total_steps;
    s.decay_ratio = decay_ratio;
    return s;
}

Schedule Schedule::warmup_cosine(double lr, std::int64_t warmup_steps, std::int64_t total_steps) {
    Schedule s;
    s.kind = ScheduleKind::WarmupCosine;
    s.base_lr = lr;
    s.warmup_steps = warmup_steps;
    s.total_steps = total_steps;
    return s;
}

void Schedule::validate() const {
    if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) {
        throw std::invalid_argument("schedule: base learning rate must be finite and >= 0");
    }
    switch (kind) {
        case ScheduleKind::Constant:
            break;
        case ScheduleKind::StepDecay:
            if (every < 1 || !(factor >= 0.0)) {
                throw std::invalid_argument("schedule: step decay needs every >= 1 and factor >= 0");
            }
            break;
        case ScheduleKind::LinearToZero:
            if (total_steps < 1 || !(decay_ratio >= 0.0 && decay_ratio <= 1.0)) {
                throw std::invalid_argument("schedule: linear decay needs T >= 1 and ratio in [0, 1]");
            }
            break;
        case ScheduleKind::WarmupCosine:
            if (total_steps < 1 || warmup_steps < 0 || warmup_steps > total_steps) {
                throw std::invalid_argument("schedule: warmup must lie in [0, T]");
            }
            break;
    }
}

double Schedule::value(std::int64_t k) const {
    if (k < 0) {
        throw std::invalid_argument("schedule: step must be non-negative");
    }
    const auto kd = static_cast<double>(k);
    switch (kind) {
        case ScheduleKind::Constant:
            return base_lr;
        case ScheduleKind::StepDecay:
            return base_lr * std::pow(factor, static_cast<double>(k / every));
        case ScheduleKind::LinearToZero: {
            const double t = static_cast<double>(total_steps);
            const double start = (1.0 - decay_ratio) * t;
            if (kd <= start) {
                return base_lr;
            }
            if (kd >= t) {
                return 0.0;
            }
            return base_lr * (t - kd) / (t - start);
        }
        case ScheduleKind::WarmupCosine: {
            if (k < warmup_steps) {
                return base_lr * (kd + 1.0) / static_cast<double>(warmup_steps);
            }
            if (k >= total_steps) {
                return 0.0;
            }
            const double span = static_cast<double>(std::max<std::int64_t>(1, total_steps - warmup_steps));
            const double progress = (kd - static_cast<double>(warmup_steps)) / span;
            return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
        }
    }
    return base_lr;
}

}  // namespace polargrad
