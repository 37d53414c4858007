#ifndef UNETSURV_UNET_HPP
#define UNETSURV_UNET_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "unetsurv/adam.hpp"
#include "unetsurv/graph.hpp"
#include "unetsurv/volume.hpp"

namespace unetsurv::unet {

// Encoder-decoder with skip connections. Channel widths double at each of
// `depth` down-samplings: base_width << level, bottleneck at base_width << depth.
struct UNetConfig {
    std::array<int, 3> input_dims{32, 32, 16};
    int base_width = 8;
    int depth = 4;
    int convs_per_level = 1;
    // Raw intensities are mapped to [0,1] over [input_lo, input_hi] before
    // entering the network (normally the modality clip range).
    float input_lo = -500.f;
    float input_hi = 200.f;

    void validate() const;
    int width(int level) const { return base_width << level; }
    std::array<int, 3> bottleneck_spatial() const;
    std::size_t bottleneck_feature_count() const;
};

template <typename T>
struct UNetModel {
    UNetConfig config;
    std::vector<std::pair<std::string, ad::Tensor<T>>> params;  // fixed order

    const ad::Tensor<T>& param(const std::string& name) const;
    ad::Tensor<T>& param(const std::string& name);
};

// He-initialized parameters, deterministic under seed.
template <typename T>
UNetModel<T> build(const UNetConfig& cfg, std::uint64_t seed);

template <typename T>
struct ForwardResult {
    int input = -1;
    int bottleneck = -1;      // post-activation
    int bottleneck_pre = -1;  // last bottleneck conv before its ReLU
    int prob = -1;            // sigmoid head; -1 in encoder-only mode
    std::vector<int> param_nodes;
};

// Assembles the network on the graph. The input tensor's requires_grad flag
// is honored (used by activation maximization).
template <typename T>
ForwardResult<T> forward_graph(const UNetModel<T>& model, ad::Graph<T>& g,
                               ad::Tensor<T> input, bool params_require_grad,
                               bool encoder_only);

// Normalize a raw-intensity volume and lay it out as a [1,X,Y,Z] tensor.
template <typename T>
ad::Tensor<T> volume_to_input(const UNetConfig& cfg, const vol::Volume& v);

// Per-voxel tumor probabilities, same dims/spacing as the input image.
template <typename T>
vol::Volume forward_segment(const UNetModel<T>& model, const vol::Volume& image);

// Flattened post-activation bottleneck in (channel, x, y, z) order.
template <typename T>
std::vector<T> encode_bottleneck(const UNetModel<T>& model, const vol::Volume& image);

// Column label for one bottleneck feature: C00048-style for CT, P for PET.
std::string feature_name(vol::Modality m, std::size_t flat_index);

struct TrainConfig {
    int epochs = 20;
    ad::AdamConfig adam;
    vol::AugmentationSpec augmentation;
    int aug_per_pair = 1;  // fresh transforms per pair per epoch; 0 = originals
    std::uint64_t seed = 0;
};

struct EpochStats {
    double mean_loss = 0;
    double val_dsc = 0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;
    double best_val_dsc = 0;
};

// Batch-size-1 Adam training; after each epoch the mean validation DSC is
// computed and the best-epoch parameters are the ones kept (early stop by
// selection). Volumes carry raw clipped intensities; masks are binary.
template <typename T>
TrainHistory train(UNetModel<T>& model,
                   const std::vector<std::pair<vol::Volume, vol::Volume>>& train_pairs,
                   const std::vector<std::pair<vol::Volume, vol::Volume>>& val_pairs,
                   const TrainConfig& cfg);

// Sorensen-Dice coefficient of two binary masks; 1.0 when both are empty.
double dice(const vol::Volume& a, const vol::Volume& b);

// Checkpoint file: magic "UNW1", then per parameter: u32 name length, name
// bytes, u32 rank, u32 dims, float32 little-endian payload. Bit-exact.
template <typename T>
void save_checkpoint(const UNetModel<T>& model, const std::filesystem::path& path);
template <typename T>
void load_checkpoint(UNetModel<T>& model, const std::filesystem::path& path);

extern template struct UNetModel<float>;
extern template struct UNetModel<double>;
extern template UNetModel<float> build<float>(const UNetConfig&, std::uint64_t);
extern template UNetModel<double> build<double>(const UNetConfig&, std::uint64_t);
extern template ForwardResult<float> forward_graph<float>(const UNetModel<float>&,
                                                          ad::Graph<float>&, ad::Tensor<float>,
                                                          bool, bool);
extern template ForwardResult<double> forward_graph<double>(const UNetModel<double>&,
                                                            ad::Graph<double>&,
                                                            ad::Tensor<double>, bool, bool);
extern template ad::Tensor<float> volume_to_input<float>(const UNetConfig&, const vol::Volume&);
extern template ad::Tensor<double> volume_to_input<double>(const UNetConfig&, const vol::Volume&);
extern template vol::Volume forward_segment<float>(const UNetModel<float>&, const vol::Volume&);
extern template vol::Volume forward_segment<double>(const UNetModel<double>&, const vol::Volume&);
extern template std::vector<float> encode_bottleneck<float>(const UNetModel<float>&,
                                                            const vol::Volume&);
extern template std::vector<double> encode_bottleneck<double>(const UNetModel<double>&,
                                                              const vol::Volume&);
extern template TrainHistory train<float>(
    UNetModel<float>&, const std::vector<std::pair<vol::Volume, vol::Volume>>&,
    const std::vector<std::pair<vol::Volume, vol::Volume>>&, const TrainConfig&);
extern template TrainHistory train<double>(
    UNetModel<double>&, const std::vector<std::pair<vol::Volume, vol::Volume>>&,
    const std::vector<std::pair<vol::Volume, vol::Volume>>&, const TrainConfig&);
extern template void save_checkpoint<float>(const UNetModel<float>&,
                                            const std::filesystem::path&);
extern template void save_checkpoint<double>(const UNetModel<double>&,
                                             const std::filesystem::path&);
extern template void load_checkpoint<float>(UNetModel<float>&, const std::filesystem::path&);
extern template void load_checkpoint<double>(UNetModel<double>&, const std::filesystem::path&);

}  // namespace unetsurv::unet

#endif
