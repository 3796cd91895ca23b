#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace fading {

enum class ScheduleKind { linear, scaled_linear };

// DDPM-style variance schedule with precomputed cumulative products.
// Index convention: t = 0 is the clean image with alpha_bar = 1; the
// trained noise levels live at t = 1..total_train_steps.
struct NoiseSchedule {
    int total_train_steps = 1000;
    double beta_min = 0.00085;
    double beta_max = 0.012;
    ScheduleKind kind = ScheduleKind::scaled_linear;
    std::vector<double> alpha_bar_table;  // size total_train_steps + 1, alpha_bar_table[0] == 1

    static NoiseSchedule make(ScheduleKind kind, int total_steps, double beta_min, double beta_max);
    static NoiseSchedule make_default() {
        return make(ScheduleKind::scaled_linear, 1000, 0.00085, 0.012);
    }

    double alpha_bar(int t) const;
};

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

// Evenly strided deterministic DDIM plan. timestep_list is strictly
// decreasing (sampling order, largest t first); eta is fixed at 0.
struct StepPlan {
    int inference_steps = 50;
    std::vector<int> timestep_list;
    double eta = 0.0;

    static StepPlan make(const NoiseSchedule& schedule, int inference_steps);

    // Timestep below list position i in sampling order; 0 past the end.
    int prev_timestep(std::size_t i) const {
        return i + 1 < timestep_list.size() ? timestep_list[i + 1] : 0;
    }
};

// Coefficients of the deterministic DDIM map z_to = c_z * z_from + c_eps * eps_pred,
// valid in both directions (denoise: abar_to > abar_from index-wise t_to < t_from).
template <typename S>
struct DdimCoeffs {
    S c_z;
    S c_eps;
};

template <typename S>
DdimCoeffs<S> ddim_coeffs(S abar_from, S abar_to) {
    S c_z = std::sqrt(abar_to / abar_from);
    S c_eps = std::sqrt(S(1) - abar_to) - c_z * std::sqrt(S(1) - abar_from);
    return {c_z, c_eps};
}

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
Tensor q_sample(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& schedule);

// One deterministic denoising step t -> s (s < t).
Tensor ddim_step(const Tensor& z_t, const Tensor& eps_pred, int t, int s, const NoiseSchedule& schedule);

// One inversion step t -> u (u > t); exact algebraic inverse of ddim_step
// when the same eps_pred is used in both directions.
Tensor ddim_invert_step(const Tensor& z_t, const Tensor& eps_pred, int t, int u, const NoiseSchedule& schedule);

// eps_uncond + w * (eps_cond - eps_uncond)
Tensor cfg_combine(const Tensor& eps_uncond, const Tensor& eps_cond, double w);

}  // namespace fading
