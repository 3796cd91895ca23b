#include "schedule.hpp"

namespace fading {

NoiseSchedule NoiseSchedule::make(ScheduleKind kind, int total_steps, double beta_min, double beta_max) {
    if (total_steps < 1) throw_usage("schedule: total_train_steps must be >= 1");
    if (!(beta_min > 0.0) || !(beta_max > beta_min) || !(beta_max < 1.0))
        throw_usage("schedule: need 0 < beta_min < beta_max < 1");
    NoiseSchedule s;
    s.total_train_steps = total_steps;
    s.beta_min = beta_min;
    s.beta_max = beta_max;
    s.kind = kind;
    s.alpha_bar_table.assign(static_cast<std::size_t>(total_steps) + 1, 1.0);
    double prod = 1.0;
    for (int t = 1; t <= total_steps; ++t) {
        double frac = total_steps == 1 ? 0.0 : static_cast<double>(t - 1) / (total_steps - 1);
        double beta;
        if (kind == ScheduleKind::linear) {
            beta = beta_min + (beta_max - beta_min) * frac;
        } else {
            double r = std::sqrt(beta_min) + (std::sqrt(beta_max) - std::sqrt(beta_min)) * frac;
            beta = r * r;
        }
        prod *= 1.0 - beta;
        s.alpha_bar_table[static_cast<std::size_t>(t)] = prod;
    }
    return s;
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > total_train_steps) throw_usage("alpha_bar: timestep out of range");
    return alpha_bar_table[static_cast<std::size_t>(t)];
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "linear") return ScheduleKind::linear;
    if (s == "scaled_linear") return ScheduleKind::scaled_linear;
    throw_usage("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::linear ? "linear" : "scaled_linear";
}

StepPlan StepPlan::make(const NoiseSchedule& schedule, int inference_steps) {
    if (inference_steps < 1 || inference_steps > schedule.total_train_steps)
        throw_usage("step plan: inference_steps must be in [1, total_train_steps]");
    StepPlan p;
    p.inference_steps = inference_steps;
    p.timestep_list.reserve(static_cast<std::size_t>(inference_steps));
    // Evenly strided, largest timestep first, never touching t = 0.
    double stride = static_cast<double>(schedule.total_train_steps) / inference_steps;
    for (int i = inference_steps; i >= 1; --i) {
        int t = static_cast<int>(std::llround(stride * i));
        t = std::max(1, std::min(schedule.total_train_steps, t));
        if (!p.timestep_list.empty() && t >= p.timestep_list.back()) t = p.timestep_list.back() - 1;
        if (t < 1) throw_usage("step plan: too many inference steps for schedule");
        p.timestep_list.push_back(t);
    }
    return p;
}

Tensor q_sample(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& schedule) {
    require_same_shape(z0, eps, "q_sample");
    double ab = schedule.alpha_bar(t);
    float cs = static_cast<float>(std::sqrt(ab));
    float cn = static_cast<float>(std::sqrt(1.0 - ab));
    Tensor out(z0.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = cs * z0[i] + cn * eps[i];
    return out;
}

static Tensor apply_ddim(const Tensor& z, const Tensor& eps_pred, double abar_from, double abar_to) {
    require_same_shape(z, eps_pred, "ddim step");
    if (abar_from <= 0.0) throw_compute("ddim step: alpha_bar singularity");
    auto c = ddim_coeffs<double>(abar_from, abar_to);
    float cz = static_cast<float>(c.c_z);
    float ce = static_cast<float>(c.c_eps);
    Tensor out(z.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = cz * z[i] + ce * eps_pred[i];
    return out;
}

Tensor ddim_step(const Tensor& z_t, const Tensor& eps_pred, int t, int s, const NoiseSchedule& schedule) {
    if (s >= t) throw_usage("ddim_step: target timestep must be smaller than source");
    return apply_ddim(z_t, eps_pred, schedule.alpha_bar(t), schedule.alpha_bar(s));
}

Tensor ddim_invert_step(const Tensor& z_t, const Tensor& eps_pred, int t, int u, const NoiseSchedule& schedule) {
    if (u <= t) throw_usage("ddim_invert_step: target timestep must be larger than source");
    return apply_ddim(z_t, eps_pred, schedule.alpha_bar(t), schedule.alpha_bar(u));
}

Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double w) {
    require_same_shape(eps_uncond, eps_cond, "cfg_combine");
    if (w < 0.0) throw_usage("cfg_combine: guidance scale must be >= 0");
    Tensor out(eps_uncond.shape);
    float wf = static_cast<float>(w);
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = eps_uncond[i] + wf * (eps_cond[i] - eps_uncond[i]);
    return out;
}

}  // namespace fading
