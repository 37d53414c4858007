#include "unetsurv/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "unetsurv/rng.hpp"

namespace unetsurv::unet {

void UNetConfig::validate() const {
    if (depth < 1) throw std::invalid_argument("unet: depth must be >= 1");
    if (base_width < 1) throw std::invalid_argument("unet: base_width must be >= 1");
    if (convs_per_level < 1 || convs_per_level > 2)
        throw std::invalid_argument("unet: convs_per_level must be 1 or 2");
    if (!(input_lo < input_hi)) throw std::invalid_argument("unet: input range must be ordered");
    const int div = 1 << depth;
    for (int a = 0; a < 3; ++a) {
        if (input_dims[a] <= 0 || input_dims[a] % div != 0)
            throw std::invalid_argument("unet: input dims must be divisible by 2^depth");
    }
}

std::array<int, 3> UNetConfig::bottleneck_spatial() const {
    return {input_dims[0] >> depth, input_dims[1] >> depth, input_dims[2] >> depth};
}

std::size_t UNetConfig::bottleneck_feature_count() const {
    const auto s = bottleneck_spatial();
    return static_cast<std::size_t>(s[0]) * s[1] * s[2] * static_cast<std::size_t>(width(depth));
}

namespace {

template <typename T>
ad::Tensor<T> he_conv(int cout, int cin, int k, Rng& rng) {
    ad::Tensor<T> w = ad::Tensor<T>::zeros({cout, cin, k, k, k});
    const double stddev = std::sqrt(2.0 / (static_cast<double>(cin) * k * k * k));
    for (T& v : w.data) v = static_cast<T>(rng.normal(0.0, stddev));
    return w;
}

struct LayerSpec {
    std::string name;
    int cin, cout;
};

// Parameter plan shared by build() and forward_graph(); order defines the
// checkpoint layout.
std::vector<LayerSpec> layer_plan(const UNetConfig& cfg) {
    std::vector<LayerSpec> plan;
    const auto width = [&](int l) { return cfg.width(l); };
    for (int l = 0; l < cfg.depth; ++l)
        for (int j = 0; j < cfg.convs_per_level; ++j) {
            const int cin = j > 0 ? width(l) : (l == 0 ? 1 : width(l - 1));
            plan.push_back({"enc" + std::to_string(l) + ".c" + std::to_string(j), cin, width(l)});
        }
    for (int j = 0; j < cfg.convs_per_level; ++j) {
        const int cin = j > 0 ? width(cfg.depth) : width(cfg.depth - 1);
        plan.push_back({"bott.c" + std::to_string(j), cin, width(cfg.depth)});
    }
    for (int l = cfg.depth - 1; l >= 0; --l)
        for (int j = 0; j < cfg.convs_per_level; ++j) {
            const int above = l == cfg.depth - 1 ? width(cfg.depth) : width(l + 1);
            const int cin = j > 0 ? width(l) : above + width(l);
            plan.push_back({"dec" + std::to_string(l) + ".c" + std::to_string(j), cin, width(l)});
        }
    plan.push_back({"head", width(0), 1});
    return plan;
}

}  // namespace

template <typename T>
const ad::Tensor<T>& UNetModel<T>::param(const std::string& name) const {
    for (const auto& [n, t] : params)
        if (n == name) return t;
    throw std::invalid_argument("unet: unknown parameter " + name);
}

template <typename T>
ad::Tensor<T>& UNetModel<T>::param(const std::string& name) {
    for (auto& [n, t] : params)
        if (n == name) return t;
    throw std::invalid_argument("unet: unknown parameter " + name);
}

template <typename T>
UNetModel<T> build(const UNetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    UNetModel<T> model;
    model.config = cfg;
    Rng rng(seed);
    for (const LayerSpec& l : layer_plan(cfg)) {
        model.params.emplace_back(l.name + ".w", he_conv<T>(l.cout, l.cin, 3, rng));
        model.params.emplace_back(l.name + ".b", ad::Tensor<T>::zeros({l.cout}));
    }
    return model;
}

template <typename T>
ForwardResult<T> forward_graph(const UNetModel<T>& model, ad::Graph<T>& g,
                               ad::Tensor<T> input, bool params_require_grad,
                               bool encoder_only) {
    const UNetConfig& cfg = model.config;
    if (input.shape != std::vector<int>{1, cfg.input_dims[0], cfg.input_dims[1], cfg.input_dims[2]})
        throw std::invalid_argument("unet: input dims do not match config");

    ForwardResult<T> r;
    r.param_nodes.reserve(model.params.size());
    for (const auto& [name, t] : model.params) {
        ad::Tensor<T> p = t;
        p.requires_grad = params_require_grad;
        r.param_nodes.push_back(g.leaf(std::move(p)));
    }
    const auto pnode = [&](const std::string& name) {
        for (std::size_t i = 0; i < model.params.size(); ++i)
            if (model.params[i].first == name) return r.param_nodes[i];
        throw std::invalid_argument("unet: unknown parameter " + name);
    };
    int last_conv = -1;
    const auto conv_block = [&](int x, const std::string& base) {
        for (int j = 0; j < cfg.convs_per_level; ++j) {
            const std::string c = base + ".c" + std::to_string(j);
            last_conv = g.conv3d(x, pnode(c + ".w"), pnode(c + ".b"));
            x = g.relu(last_conv);
        }
        return x;
    };

    r.input = g.leaf(std::move(input));
    int x = r.input;
    std::vector<int> skips;
    for (int l = 0; l < cfg.depth; ++l) {
        x = conv_block(x, "enc" + std::to_string(l));
        skips.push_back(x);
        x = g.maxpool3d(x);
    }
    x = conv_block(x, "bott");
    r.bottleneck = x;
    r.bottleneck_pre = last_conv;
    if (encoder_only) return r;

    for (int l = cfg.depth - 1; l >= 0; --l) {
        x = g.upsample3d_nn(x);
        x = g.concat_channels(x, skips[static_cast<std::size_t>(l)]);
        x = conv_block(x, "dec" + std::to_string(l));
    }
    r.prob = g.sigmoid(g.conv3d(x, pnode("head.w"), pnode("head.b")));
    return r;
}

template <typename T>
ad::Tensor<T> volume_to_input(const UNetConfig& cfg, const vol::Volume& v) {
    if (static_cast<int>(v.dims[0]) != cfg.input_dims[0] ||
        static_cast<int>(v.dims[1]) != cfg.input_dims[1] ||
        static_cast<int>(v.dims[2]) != cfg.input_dims[2])
        throw std::invalid_argument("unet: volume dims do not match config input dims");
    const int nx = cfg.input_dims[0], ny = cfg.input_dims[1], nz = cfg.input_dims[2];
    ad::Tensor<T> t = ad::Tensor<T>::zeros({1, nx, ny, nz});
    const double lo = cfg.input_lo, inv = 1.0 / (cfg.input_hi - cfg.input_lo);
    std::size_t i = 0;
    for (int x = 0; x < nx; ++x)
        for (int y = 0; y < ny; ++y)
            for (int z = 0; z < nz; ++z, ++i)
                t.data[i] = static_cast<T>(
                    (v.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                          static_cast<std::uint32_t>(z)) -
                     lo) *
                    inv);
    return t;
}

template <typename T>
vol::Volume forward_segment(const UNetModel<T>& model, const vol::Volume& image) {
    ad::Graph<T> g;
    auto r = forward_graph(model, g, volume_to_input<T>(model.config, image), false, false);
    const ad::Tensor<T>& prob = g.value(r.prob);

    vol::Volume out;
    out.dims = image.dims;
    out.spacing = image.spacing;
    out.modality = image.modality;
    out.voxels.resize(image.size());
    const int nx = model.config.input_dims[0], ny = model.config.input_dims[1],
              nz = model.config.input_dims[2];
    std::size_t i = 0;
    for (int x = 0; x < nx; ++x)
        for (int y = 0; y < ny; ++y)
            for (int z = 0; z < nz; ++z, ++i)
                out.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                       static_cast<std::uint32_t>(z)) = static_cast<float>(prob.data[i]);
    return out;
}

template <typename T>
std::vector<T> encode_bottleneck(const UNetModel<T>& model, const vol::Volume& image) {
    ad::Graph<T> g;
    auto r = forward_graph(model, g, volume_to_input<T>(model.config, image), false, true);
    return g.value(r.bottleneck).data;
}

std::string feature_name(vol::Modality m, std::size_t flat_index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%c%05zu", m == vol::Modality::pet ? 'P' : 'C', flat_index);
    return buf;
}

double dice(const vol::Volume& a, const vol::Volume& b) {
    if (a.dims != b.dims) throw std::invalid_argument("dice: dims differ");
    std::size_t na = 0, nb = 0, inter = 0;
    for (std::size_t i = 0; i < a.voxels.size(); ++i) {
        const float va = a.voxels[i], vb = b.voxels[i];
        if ((va != 0.f && va != 1.f) || (vb != 0.f && vb != 1.f))
            throw std::invalid_argument("dice: masks must be binary");
        na += va != 0.f;
        nb += vb != 0.f;
        inter += (va != 0.f) && (vb != 0.f);
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

template <typename T>
TrainHistory train(UNetModel<T>& model,
                   const std::vector<std::pair<vol::Volume, vol::Volume>>& train_pairs,
                   const std::vector<std::pair<vol::Volume, vol::Volume>>& val_pairs,
                   const TrainConfig& cfg) {
    if (train_pairs.empty() || val_pairs.empty())
        throw std::invalid_argument("train: train and validation sets must be non-empty");
    if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");

    TrainHistory history;
    if (cfg.epochs == 0) return history;

    ad::AdamState<T> adam(cfg.adam);
    std::vector<std::pair<std::string, ad::Tensor<T>>> best_params;

    const auto validate_dsc = [&]() {
        double acc = 0;
        for (const auto& [img, mask] : val_pairs)
            acc += dice(vol::threshold_mask(forward_segment(model, img), 0.5f), mask);
        return acc / static_cast<double>(val_pairs.size());
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fresh augmented variants of every pair each epoch, visited in a
        // seeded shuffled order.
        std::vector<std::pair<vol::Volume, vol::Volume>> samples;
        if (cfg.aug_per_pair <= 0) {
            samples = train_pairs;
        } else {
            for (std::size_t i = 0; i < train_pairs.size(); ++i) {
                vol::AugmentationSpec aug = cfg.augmentation;
                aug.seed = derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)),
                                       static_cast<std::uint64_t>(i));
                auto variants =
                    vol::augment(train_pairs[i].first, train_pairs[i].second, aug, cfg.aug_per_pair);
                for (auto& v : variants) samples.push_back(std::move(v));
            }
        }
        std::vector<std::size_t> order(samples.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(derive_seed(cfg.seed ^ 0x511f7eedULL, static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_acc = 0;
        for (std::size_t idx : order) {
            const auto& [img, mask] = samples[idx];
            ad::Graph<T> g;
            auto r = forward_graph(model, g, volume_to_input<T>(model.config, img), true, false);
            ad::Tensor<T> target = ad::Tensor<T>::zeros(g.value(r.prob).shape);
            {
                const int nx = model.config.input_dims[0], ny = model.config.input_dims[1],
                          nz = model.config.input_dims[2];
                std::size_t i = 0;
                for (int x = 0; x < nx; ++x)
                    for (int y = 0; y < ny; ++y)
                        for (int z = 0; z < nz; ++z, ++i)
                            target.data[i] = static_cast<T>(
                                mask.at(static_cast<std::uint32_t>(x), static_cast<std::uint32_t>(y),
                                        static_cast<std::uint32_t>(z)));
            }
            const int loss = g.soft_dice_bce_loss(r.prob, g.leaf(std::move(target)));
            g.backward(loss);
            loss_acc += static_cast<double>(g.value(loss).data[0]);

            std::vector<std::vector<T>*> params;
            std::vector<const std::vector<T>*> grads;
            params.reserve(model.params.size());
            grads.reserve(model.params.size());
            for (std::size_t i = 0; i < model.params.size(); ++i) {
                params.push_back(&model.params[i].second.data);
                grads.push_back(&g.grad(r.param_nodes[i]));
            }
            adam.step(params, grads);
        }

        EpochStats stats;
        stats.mean_loss = samples.empty() ? 0.0 : loss_acc / static_cast<double>(samples.size());
        stats.val_dsc = validate_dsc();
        history.epochs.push_back(stats);
        if (history.best_epoch < 0 || stats.val_dsc > history.best_val_dsc) {
            history.best_epoch = epoch;
            history.best_val_dsc = stats.val_dsc;
            best_params = model.params;
        }
    }

    model.params = std::move(best_params);
    return history;
}

namespace {

constexpr char kCheckpointMagic[4] = {'U', 'N', 'W', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4) throw std::runtime_error("UNW1: truncated record");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

template <typename T>
void save_checkpoint(const UNetModel<T>& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("UNW1: cannot write " + path.string());
    out.write(kCheckpointMagic, 4);
    for (const auto& [name, t] : model.params) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
        for (T v : t.data) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            put_u32(out, bits);
        }
    }
    if (!out) throw std::runtime_error("UNW1: write failed for " + path.string());
}

template <typename T>
void load_checkpoint(UNetModel<T>& model, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("UNW1: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("UNW1: bad magic in " + path.string());

    std::size_t loaded = 0;
    while (true) {
        in.peek();
        if (in.eof()) break;
        const std::uint32_t name_len = read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        if (in.gcount() != static_cast<std::streamsize>(name_len))
            throw std::runtime_error("UNW1: truncated name");
        const std::uint32_t rank = read_u32(in);
        std::vector<int> shape(rank);
        std::size_t count = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<int>(read_u32(in));
            count *= static_cast<std::size_t>(shape[i]);
        }
        ad::Tensor<T>& dst = model.param(name);
        if (dst.shape != shape)
            throw std::runtime_error("UNW1: shape mismatch for parameter " + name);
        for (std::size_t i = 0; i < count; ++i) {
            const std::uint32_t bits = read_u32(in);
            float f;
            std::memcpy(&f, &bits, 4);
            dst.data[i] = static_cast<T>(f);
        }
        ++loaded;
    }
    if (loaded != model.params.size())
        throw std::runtime_error("UNW1: parameter count mismatch in " + path.string());
}

template struct UNetModel<float>;
template struct UNetModel<double>;
template UNetModel<float> build<float>(const UNetConfig&, std::uint64_t);
template UNetModel<double> build<double>(const UNetConfig&, std::uint64_t);
template ForwardResult<float> forward_graph<float>(const UNetModel<float>&, ad::Graph<float>&,
                                                   ad::Tensor<float>, bool, bool);
template ForwardResult<double> forward_graph<double>(const UNetModel<double>&, ad::Graph<double>&,
                                                     ad::Tensor<double>, bool, bool);
template ad::Tensor<float> volume_to_input<float>(const UNetConfig&, const vol::Volume&);
template ad::Tensor<double> volume_to_input<double>(const UNetConfig&, const vol::Volume&);
template vol::Volume forward_segment<float>(const UNetModel<float>&, const vol::Volume&);
template vol::Volume forward_segment<double>(const UNetModel<double>&, const vol::Volume&);
template std::vector<float> encode_bottleneck<float>(const UNetModel<float>&, const vol::Volume&);
template std::vector<double> encode_bottleneck<double>(const UNetModel<double>&,
                                                       const vol::Volume&);
template TrainHistory train<float>(UNetModel<float>&,
                                   const std::vector<std::pair<vol::Volume, vol::Volume>>&,
                                   const std::vector<std::pair<vol::Volume, vol::Volume>>&,
                                   const TrainConfig&);
template TrainHistory train<double>(UNetModel<double>&,
                                    const std::vector<std::pair<vol::Volume, vol::Volume>>&,
                                    const std::vector<std::pair<vol::Volume, vol::Volume>>&,
                                    const TrainConfig&);
template void save_checkpoint<float>(const UNetModel<float>&, const std::filesystem::path&);
template void save_checkpoint<double>(const UNetModel<double>&, const std::filesystem::path&);
template void load_checkpoint<float>(UNetModel<float>&, const std::filesystem::path&);
template void load_checkpoint<double>(UNetModel<double>&, const std::filesystem::path&);

}  // namespace unetsurv::unet
