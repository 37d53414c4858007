#ifndef UNETSURV_VISUALIZE_HPP
#define UNETSURV_VISUALIZE_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "unetsurv/logistic.hpp"
#include "unetsurv/unet.hpp"

namespace unetsurv::viz {

struct ActMaxConfig {
    int iterations = 20;
    double init_mean = 128.0;  // raw intensity units
    double init_std = 1.0;
    std::uint64_t seed = 0;
    bool pre_activation = false;  // maximize the conv output before the ReLU
};

template <typename T>
struct AscendResult {
    ad::Tensor<T> x;
    bool stopped_early = false;       // zero gradient field encountered
    std::vector<double> trace;        // objective per iteration, incl. final
};

// Gradient ascent x += (1/sigma(g)) * g on an arbitrary objective; stops
// early when the gradient field is identically zero.
template <typename T>
AscendResult<T> ascend(
    const std::function<double(const ad::Tensor<T>&, ad::Tensor<T>& grad_out)>& value_and_grad,
    ad::Tensor<T> x0, int iterations);

template <typename T>
struct ActMaxResult {
    vol::Volume image;  // raw intensity units
    bool stopped_early = false;
    std::vector<double> trace;
};

// Input pattern maximizing one bottleneck neuron, from an N(init_mean,
// init_std) start mapped through the model's input normalization.
template <typename T>
ActMaxResult<T> activation_maximize(const unet::UNetModel<T>& model, std::size_t neuron,
                                    const ActMaxConfig& cfg, vol::Modality modality);

enum class AlphaReduction { max, mean };

// Per-channel weights alpha^(m): rectified gradients of P(death) w.r.t. the
// bottleneck activation map, reduced per channel (max by default). Channels
// with no LASSO-selected feature get exactly 0.
template <typename T>
std::vector<double> guided_alphas(const unet::UNetModel<T>& model,
                                  const survival::SurvivalModel& survival_model,
                                  const vol::Volume& image,
                                  AlphaReduction reduction = AlphaReduction::max);

struct RiskMap {
    std::string case_id;
    vol::Volume values;         // input-resolution, min-max normalized to [0,1]
    std::vector<double> alpha;  // per bottleneck channel
    bool all_zero = false;
};

// Pre-normalization alpha-weighted sum of bottleneck activation maps, at
// bottleneck resolution (linear in alpha).
template <typename T>
vol::Volume weighted_activation_sum(const unet::UNetModel<T>& model, const vol::Volume& image,
                                    const std::vector<double>& alpha);

template <typename T>
RiskMap risk_map(const unet::UNetModel<T>& model, const survival::SurvivalModel& survival_model,
                 const vol::Volume& image, AlphaReduction reduction = AlphaReduction::max);

// One binary PGM (P5) per slice, or PPM (P6) with a red overlay when a risk
// map is given. Returns the written paths, slice index ascending.
std::vector<std::filesystem::path> export_slices(const vol::Volume& v, const RiskMap* overlay,
                                                 char axis, const std::filesystem::path& dir,
                                                 const std::string& case_label);

}  // namespace unetsurv::viz

#endif
