#ifndef UNETSURV_ADAM_HPP
#define UNETSURV_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace unetsurv::ad {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;  // decoupled, applied before the adaptive step
};

// Moment buffers for one fixed list of parameters (order matters).
template <typename T>
class AdamState {
public:
    explicit AdamState(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return step_; }

    // One optimizer step over all parameters. params[i] and grads[i] must
    // refer to the same parameter across every call.
    void step(const std::vector<std::vector<T>*>& params,
              const std::vector<const std::vector<T>*>& grads) {
        if (params.size() != grads.size())
            throw std::invalid_argument("adam: params/grads count mismatch");
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(params[i]->size(), T(0));
                v_[i].assign(params[i]->size(), T(0));
            }
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            std::vector<T>& p = *params[i];
            const std::vector<T>& g = *grads[i];
            if (p.size() != m_[i].size() || g.size() != p.size())
                throw std::invalid_argument("adam: parameter shape changed between steps");
            for (std::size_t j = 0; j < p.size(); ++j) {
                double pj = p[j] - cfg_.lr * cfg_.weight_decay * p[j];
                const double gj = g[j];
                const double mj = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * gj;
                const double vj = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * gj * gj;
                m_[i][j] = static_cast<T>(mj);
                v_[i][j] = static_cast<T>(vj);
                pj -= cfg_.lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps);
                p[j] = static_cast<T>(pj);
            }
        }
    }

private:
    AdamConfig cfg_;
    long step_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace unetsurv::ad

#endif
