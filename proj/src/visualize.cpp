#include "unetsurv/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "unetsurv/rng.hpp"

namespace unetsurv::viz {

template <typename T>
AscendResult<T> ascend(
    const std::function<double(const ad::Tensor<T>&, ad::Tensor<T>& grad_out)>& value_and_grad,
    ad::Tensor<T> x0, int iterations) {
    if (iterations < 1) throw std::invalid_argument("ascend: iterations must be >= 1");
    AscendResult<T> r;
    r.x = std::move(x0);
    for (int k = 0; k < iterations; ++k) {
        ad::Tensor<T> g;
        r.trace.push_back(value_and_grad(r.x, g));
        if (g.data.size() != r.x.data.size())
            throw std::logic_error("ascend: gradient size mismatch");
        const double n = static_cast<double>(g.data.size());
        double mean = 0;
        for (T v : g.data) mean += static_cast<double>(v);
        mean /= n;
        double var = 0;
        for (T v : g.data) var += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
        var /= n;
        const double sigma = std::sqrt(var);
        if (sigma == 0.0) {
            r.stopped_early = true;
            return r;
        }
        const double step = 1.0 / sigma;
        for (std::size_t i = 0; i < r.x.data.size(); ++i)
            r.x.data[i] += static_cast<T>(step * static_cast<double>(g.data[i]));
    }
    ad::Tensor<T> g;
    r.trace.push_back(value_and_grad(r.x, g));
    return r;
}

template <typename T>
ActMaxResult<T> activation_maximize(const unet::UNetModel<T>& model, std::size_t neuron,
                                    const ActMaxConfig& cfg, vol::Modality modality) {
    const unet::UNetConfig& c = model.config;
    if (neuron >= c.bottleneck_feature_count())
        throw std::invalid_argument("activation_maximize: neuron index out of range");
    if (!(cfg.init_std > 0)) throw std::invalid_argument("activation_maximize: init_std must be > 0");

    const double lo = c.input_lo, span = c.input_hi - c.input_lo;
    Rng rng(cfg.seed);
    ad::Tensor<T> x0 =
        ad::Tensor<T>::zeros({1, c.input_dims[0], c.input_dims[1], c.input_dims[2]});
    for (T& v : x0.data)
        v = static_cast<T>((rng.normal(cfg.init_mean, cfg.init_std) - lo) / span);

    const auto fn = [&](const ad::Tensor<T>& xt, ad::Tensor<T>& gout) {
        ad::Graph<T> g;
        ad::Tensor<T> xin = xt;
        xin.requires_grad = true;
        auto fw = unet::forward_graph(model, g, std::move(xin), false, true);
        const int target = cfg.pre_activation ? fw.bottleneck_pre : fw.bottleneck;
        const int obj = g.select(target, neuron);
        g.backward(obj);
        gout = ad::Tensor<T>(xt.shape, g.grad(fw.input));
        return static_cast<double>(g.value(obj).data[0]);
    };
    AscendResult<T> asc = ascend<T>(fn, std::move(x0), cfg.iterations);

    ActMaxResult<T> out;
    out.stopped_early = asc.stopped_early;
    out.trace = std::move(asc.trace);
    out.image.dims = {static_cast<std::uint32_t>(c.input_dims[0]),
                      static_cast<std::uint32_t>(c.input_dims[1]),
                      static_cast<std::uint32_t>(c.input_dims[2])};
    out.image.spacing = {1.f, 1.f, 1.f};
    out.image.modality = modality;
    out.image.voxels.resize(out.image.size());
    std::size_t i = 0;
    for (int x = 0; x < c.input_dims[0]; ++x)
        for (int y = 0; y < c.input_dims[1]; ++y)
            for (int z = 0; z < c.input_dims[2]; ++z, ++i)
                out.image.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                             static_cast<std::uint32_t>(z)) =
                    static_cast<float>(asc.x.data[i] * span + lo);
    return out;
}

template <typename T>
std::vector<double> guided_alphas(const unet::UNetModel<T>& model,
                                  const survival::SurvivalModel& survival_model,
                                  const vol::Volume& image, AlphaReduction reduction) {
    const unet::UNetConfig& c = model.config;
    const auto spatial = c.bottleneck_spatial();
    const std::size_t per_channel =
        static_cast<std::size_t>(spatial[0]) * spatial[1] * spatial[2];
    const int channels = c.width(c.depth);
    const std::vector<T> feats = unet::encode_bottleneck(model, image);

    featsel::FeatureMatrix fm;
    fm.n_cases = 1;
    fm.n_features = feats.size();
    fm.case_ids = {"viz"};
    fm.modalities = {vol::to_string(image.modality)};
    fm.values.assign(feats.begin(), feats.end());
    fm.feature_ids.resize(feats.size());
    std::unordered_map<std::string, std::size_t> name_to_flat;
    for (std::size_t j = 0; j < feats.size(); ++j) {
        fm.feature_ids[j] = unet::feature_name(image.modality, j);
        name_to_flat.emplace(fm.feature_ids[j], j);
    }

    const double y = survival::predict_survival(survival_model, fm, 0);

    // P(death) = 1 - sigmoid(z); the survival head is shallow, so the
    // backpropagated gradient at the bottleneck has the closed form
    // dP/dx_j = -y(1-y) * beta_j / sd_j on selected features, 0 elsewhere.
    std::vector<double> dpdx(feats.size(), 0.0);
    for (std::size_t j = 0; j < survival_model.feature_ids.size(); ++j) {
        const auto it = name_to_flat.find(survival_model.feature_ids[j]);
        if (it == name_to_flat.end())
            throw std::invalid_argument("guided_alphas: survival model feature " +
                                        survival_model.feature_ids[j] +
                                        " is not produced by this model/image");
        dpdx[it->second] =
            -y * (1.0 - y) * survival_model.beta[j + 1] / survival_model.standardization.stddev[j];
    }

    std::vector<double> alpha(static_cast<std::size_t>(channels), 0.0);
    for (int m = 0; m < channels; ++m) {
        const double* g = dpdx.data() + static_cast<std::size_t>(m) * per_channel;
        double acc = 0;
        for (std::size_t v = 0; v < per_channel; ++v) {
            const double rect = std::max(g[v], 0.0);
            acc = reduction == AlphaReduction::max ? std::max(acc, rect) : acc + rect;
        }
        alpha[static_cast<std::size_t>(m)] =
            reduction == AlphaReduction::max ? acc : acc / static_cast<double>(per_channel);
    }
    return alpha;
}

template <typename T>
vol::Volume weighted_activation_sum(const unet::UNetModel<T>& model, const vol::Volume& image,
                                    const std::vector<double>& alpha) {
    const unet::UNetConfig& c = model.config;
    const auto spatial = c.bottleneck_spatial();
    const std::size_t per_channel =
        static_cast<std::size_t>(spatial[0]) * spatial[1] * spatial[2];
    const int channels = c.width(c.depth);
    if (alpha.size() != static_cast<std::size_t>(channels))
        throw std::invalid_argument("weighted_activation_sum: alpha length mismatch");
    const std::vector<T> feats = unet::encode_bottleneck(model, image);

    vol::Volume out;
    out.dims = {static_cast<std::uint32_t>(spatial[0]), static_cast<std::uint32_t>(spatial[1]),
                static_cast<std::uint32_t>(spatial[2])};
    out.spacing = {1.f, 1.f, 1.f};
    out.modality = image.modality;
    out.voxels.assign(per_channel, 0.f);
    for (int m = 0; m < channels; ++m) {
        const float am = static_cast<float>(alpha[static_cast<std::size_t>(m)]);
        if (am == 0.f) continue;
        const T* a = feats.data() + static_cast<std::size_t>(m) * per_channel;
        std::size_t i = 0;
        for (int x = 0; x < spatial[0]; ++x)
            for (int y = 0; y < spatial[1]; ++y)
                for (int z = 0; z < spatial[2]; ++z, ++i)
                    out.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                           static_cast<std::uint32_t>(z)) += am * static_cast<float>(a[i]);
    }
    return out;
}

namespace {

vol::Volume upsample_trilinear(const vol::Volume& src, const std::array<std::uint32_t, 3>& dims) {
    vol::Volume out;
    out.dims = dims;
    out.spacing = src.spacing;
    out.modality = src.modality;
    out.voxels.resize(out.size());
    for (std::uint32_t z = 0; z < dims[2]; ++z)
        for (std::uint32_t y = 0; y < dims[1]; ++y)
            for (std::uint32_t x = 0; x < dims[0]; ++x) {
                // Pixel-center alignment between the two grids.
                const double fx = std::clamp((x + 0.5) * src.dims[0] / dims[0] - 0.5, 0.0,
                                             static_cast<double>(src.dims[0] - 1));
                const double fy = std::clamp((y + 0.5) * src.dims[1] / dims[1] - 0.5, 0.0,
                                             static_cast<double>(src.dims[1] - 1));
                const double fz = std::clamp((z + 0.5) * src.dims[2] / dims[2] - 0.5, 0.0,
                                             static_cast<double>(src.dims[2] - 1));
                const std::uint32_t x0 = static_cast<std::uint32_t>(fx);
                const std::uint32_t y0 = static_cast<std::uint32_t>(fy);
                const std::uint32_t z0 = static_cast<std::uint32_t>(fz);
                const std::uint32_t x1 = std::min(x0 + 1, src.dims[0] - 1);
                const std::uint32_t y1 = std::min(y0 + 1, src.dims[1] - 1);
                const std::uint32_t z1 = std::min(z0 + 1, src.dims[2] - 1);
                const double tx = fx - x0, ty = fy - y0, tz = fz - z0;
                const double c00 = src.at(x0, y0, z0) * (1 - tx) + src.at(x1, y0, z0) * tx;
                const double c10 = src.at(x0, y1, z0) * (1 - tx) + src.at(x1, y1, z0) * tx;
                const double c01 = src.at(x0, y0, z1) * (1 - tx) + src.at(x1, y0, z1) * tx;
                const double c11 = src.at(x0, y1, z1) * (1 - tx) + src.at(x1, y1, z1) * tx;
                const double c0 = c00 * (1 - ty) + c10 * ty;
                const double c1 = c01 * (1 - ty) + c11 * ty;
                out.at(x, y, z) = static_cast<float>(c0 * (1 - tz) + c1 * tz);
            }
    return out;
}

}  // namespace

template <typename T>
RiskMap risk_map(const unet::UNetModel<T>& model, const survival::SurvivalModel& survival_model,
                 const vol::Volume& image, AlphaReduction reduction) {
    RiskMap rm;
    rm.alpha = guided_alphas(model, survival_model, image, reduction);
    double alpha_sum = 0;
    for (double a : rm.alpha) alpha_sum += a;
    rm.all_zero = alpha_sum == 0.0;

    const vol::Volume pre = weighted_activation_sum(model, image, rm.alpha);
    rm.values = upsample_trilinear(pre, image.dims);
    float lo = rm.values.voxels[0], hi = rm.values.voxels[0];
    for (float v : rm.values.voxels) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi > lo) {
        const float inv = 1.f / (hi - lo);
        for (float& v : rm.values.voxels) v = std::clamp((v - lo) * inv, 0.f, 1.f);
    } else {
        std::fill(rm.values.voxels.begin(), rm.values.voxels.end(), 0.f);
    }
    return rm;
}

namespace {

struct SlicePlane {
    std::uint32_t width, height, count;
};

SlicePlane plane_for_axis(const vol::Volume& v, char axis) {
    switch (axis) {
        case 'x': return {v.dims[1], v.dims[2], v.dims[0]};
        case 'y': return {v.dims[0], v.dims[2], v.dims[1]};
        case 'z': return {v.dims[0], v.dims[1], v.dims[2]};
        default: throw std::invalid_argument("export_slices: axis must be x, y or z");
    }
}

float voxel_on_slice(const vol::Volume& v, char axis, std::uint32_t slice, std::uint32_t col,
                     std::uint32_t row) {
    switch (axis) {
        case 'x': return v.at(slice, col, row);
        case 'y': return v.at(col, slice, row);
        default: return v.at(col, row, slice);
    }
}

}  // namespace

std::vector<std::filesystem::path> export_slices(const vol::Volume& v, const RiskMap* overlay,
                                                 char axis, const std::filesystem::path& dir,
                                                 const std::string& case_label) {
    vol::validate(v);
    if (overlay && overlay->values.dims != v.dims)
        throw std::invalid_argument("export_slices: overlay dims differ from volume");
    const SlicePlane plane = plane_for_axis(v, axis);
    std::filesystem::create_directories(dir);

    float lo = v.voxels[0], hi = v.voxels[0];
    for (float w : v.voxels) {
        lo = std::min(lo, w);
        hi = std::max(hi, w);
    }
    const bool flat = !(hi > lo);
    const auto gray = [&](float w) {
        if (flat) return static_cast<unsigned char>(128);
        const float t = (w - lo) / (hi - lo);
        return static_cast<unsigned char>(std::lround(t * 255.f));
    };

    std::vector<std::filesystem::path> paths;
    for (std::uint32_t s = 0; s < plane.count; ++s) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%c%03u.%s", case_label.c_str(), axis, s,
                      overlay ? "ppm" : "pgm");
        const std::filesystem::path path = dir / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("export_slices: cannot write " + path.string());
        out << (overlay ? "P6" : "P5") << '\n'
            << plane.width << ' ' << plane.height << '\n'
            << "255\n";
        for (std::uint32_t row = 0; row < plane.height; ++row)
            for (std::uint32_t col = 0; col < plane.width; ++col) {
                const unsigned char g = gray(voxel_on_slice(v, axis, s, col, row));
                if (!overlay) {
                    out.put(static_cast<char>(g));
                } else {
                    const float w =
                        std::clamp(voxel_on_slice(overlay->values, axis, s, col, row), 0.f, 1.f);
                    const unsigned char r =
                        static_cast<unsigned char>(std::lround(g + w * (255.f - g)));
                    const unsigned char gb =
                        static_cast<unsigned char>(std::lround(g * (1.f - w)));
                    out.put(static_cast<char>(r));
                    out.put(static_cast<char>(gb));
                    out.put(static_cast<char>(gb));
                }
            }
        if (!out) throw std::runtime_error("export_slices: write failed for " + path.string());
        paths.push_back(path);
    }
    return paths;
}

template AscendResult<float> ascend<float>(
    const std::function<double(const ad::Tensor<float>&, ad::Tensor<float>&)>&, ad::Tensor<float>,
    int);
template AscendResult<double> ascend<double>(
    const std::function<double(const ad::Tensor<double>&, ad::Tensor<double>&)>&,
    ad::Tensor<double>, int);
template ActMaxResult<float> activation_maximize<float>(const unet::UNetModel<float>&,
                                                        std::size_t, const ActMaxConfig&,
                                                        vol::Modality);
template ActMaxResult<double> activation_maximize<double>(const unet::UNetModel<double>&,
                                                          std::size_t, const ActMaxConfig&,
                                                          vol::Modality);
template std::vector<double> guided_alphas<float>(const unet::UNetModel<float>&,
                                                  const survival::SurvivalModel&,
                                                  const vol::Volume&, AlphaReduction);
template std::vector<double> guided_alphas<double>(const unet::UNetModel<double>&,
                                                   const survival::SurvivalModel&,
                                                   const vol::Volume&, AlphaReduction);
template vol::Volume weighted_activation_sum<float>(const unet::UNetModel<float>&,
                                                    const vol::Volume&,
                                                    const std::vector<double>&);
template vol::Volume weighted_activation_sum<double>(const unet::UNetModel<double>&,
                                                     const vol::Volume&,
                                                     const std::vector<double>&);
template RiskMap risk_map<float>(const unet::UNetModel<float>&, const survival::SurvivalModel&,
                                 const vol::Volume&, AlphaReduction);
template RiskMap risk_map<double>(const unet::UNetModel<double>&, const survival::SurvivalModel&,
                                  const vol::Volume&, AlphaReduction);

}  // namespace unetsurv::viz
