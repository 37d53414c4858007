#include "unetsurv/kmedoids.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "unetsurv/rng.hpp"

namespace unetsurv::featsel {

namespace {

// Population-standardized column: mean 0, variance 1 with 1/n scaling, so
// distance(i,j) = 1 - dot(z_i, z_j)/n.
std::vector<double> standardize_column(const std::vector<double>& x) {
    if (x.size() < 2) throw std::invalid_argument("pearson: column length must be >= 2");
    const double n = static_cast<double>(x.size());
    double mean = 0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    if (var <= 0)
        throw std::invalid_argument("pearson: correlation undefined for constant column");
    const double inv_sd = 1.0 / std::sqrt(var);
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean) * inv_sd;
    return z;
}

}  // namespace

double pearson_distance(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: column lengths differ");
    const std::vector<double> zx = standardize_column(x);
    const std::vector<double> zy = standardize_column(y);
    double dot = 0;
    for (std::size_t i = 0; i < zx.size(); ++i) dot += zx[i] * zy[i];
    return std::clamp(1.0 - dot / static_cast<double>(zx.size()), 0.0, 2.0);
}

DistanceProvider::DistanceProvider(const FeatureMatrix& fm, std::size_t memory_budget_bytes) {
    fm.validate();
    n_ = fm.n_features;
    cases_ = fm.n_cases;
    z_.resize(n_ * cases_);
    for (std::size_t f = 0; f < n_; ++f) {
        const std::vector<double> z = standardize_column(fm.column(f));
        std::copy(z.begin(), z.end(), z_.begin() + f * cases_);
    }
    if (n_ * n_ * sizeof(float) <= memory_budget_bytes) {
        matrix_.assign(n_ * n_, 0.f);
        for (std::size_t i = 0; i < n_; ++i) {
            matrix_[i * n_ + i] = 0.f;
            for (std::size_t j = i + 1; j < n_; ++j) {
                const float d = static_cast<float>(compute(i, j));
                matrix_[i * n_ + j] = d;
                matrix_[j * n_ + i] = d;
            }
        }
        has_matrix_ = true;
    }
}

double DistanceProvider::compute(std::size_t i, std::size_t j) const {
    const double* a = z_.data() + i * cases_;
    const double* b = z_.data() + j * cases_;
    double dot = 0;
    for (std::size_t c = 0; c < cases_; ++c) dot += a[c] * b[c];
    // clamp to the mathematical range so fp noise on duplicate columns
    // cannot produce tiny negative distances
    return std::clamp(1.0 - dot / static_cast<double>(cases_), 0.0, 2.0);
}

double DistanceProvider::operator()(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    if (has_matrix_) return matrix_[i * n_ + j];
    return compute(i, j);
}

namespace {

// Swap local search (PAM-style): replace one medoid by one non-medoid while
// the total within-cluster distance decreases. Deltas are evaluated in O(n)
// per candidate via nearest/second-nearest medoid distances.
void swap_polish(const DistanceProvider& d, Clustering& c) {
    const std::size_t n = d.count();
    const int k = c.k;
    for (int sweep = 0; sweep < 200; ++sweep) {
        std::vector<double> d1(n), d2(n);
        std::vector<int> n1(n);
        for (std::size_t f = 0; f < n; ++f) {
            d1[f] = d2[f] = std::numeric_limits<double>::infinity();
            for (int slot = 0; slot < k; ++slot) {
                const double df = d(f, c.medoid_indices[static_cast<std::size_t>(slot)]);
                if (df < d1[f]) {
                    d2[f] = d1[f];
                    d1[f] = df;
                    n1[f] = slot;
                } else if (df < d2[f]) {
                    d2[f] = df;
                }
            }
        }

        double best_delta = -1e-12;
        std::size_t best_h = 0;
        int best_slot = -1;
        std::vector<double> slot_adjust(static_cast<std::size_t>(k));
        for (std::size_t h = 0; h < n; ++h) {
            bool is_medoid = false;
            for (std::size_t m : c.medoid_indices) is_medoid |= m == h;
            if (is_medoid) continue;
            std::fill(slot_adjust.begin(), slot_adjust.end(), 0.0);
            double keep_gain = 0;
            for (std::size_t f = 0; f < n; ++f) {
                const double dfh = d(f, h);
                const double gain_keep = std::min(dfh, d1[f]) - d1[f];
                keep_gain += gain_keep;
                slot_adjust[static_cast<std::size_t>(n1[f])] +=
                    (std::min(dfh, d2[f]) - d1[f]) - gain_keep;
            }
            for (int slot = 0; slot < k; ++slot) {
                const double delta = keep_gain + slot_adjust[static_cast<std::size_t>(slot)];
                if (delta < best_delta) {
                    best_delta = delta;
                    best_h = h;
                    best_slot = slot;
                }
            }
        }
        if (best_slot < 0) break;
        c.medoid_indices[static_cast<std::size_t>(best_slot)] = best_h;

        double total = 0;
        for (std::size_t f = 0; f < n; ++f) {
            int best = 0;
            double bd = d(f, c.medoid_indices[0]);
            for (int slot = 1; slot < k; ++slot) {
                const double df = d(f, c.medoid_indices[static_cast<std::size_t>(slot)]);
                if (df < bd) {
                    bd = df;
                    best = slot;
                }
            }
            c.assignment[f] = best;
            total += bd;
        }
        for (int slot = 0; slot < k; ++slot)
            c.assignment[c.medoid_indices[static_cast<std::size_t>(slot)]] = slot;
        c.total_within_distance = total;
        c.iteration_within.push_back(total);
    }
}

}  // namespace

Clustering kmedoids(const FeatureMatrix& fm, int k, std::uint64_t seed,
                    const DistanceProvider* dist) {
    if (k < 2 || static_cast<std::size_t>(k) >= fm.n_features)
        throw std::invalid_argument("kmedoids: need 2 <= k < n_features");
    std::unique_ptr<DistanceProvider> owned;
    if (!dist) {
        owned = std::make_unique<DistanceProvider>(fm);
        dist = owned.get();
    }
    const std::size_t n = fm.n_features;
    const auto& d = *dist;

    // Random init with distance-squared weighting: later medoids prefer
    // features far from the ones already drawn, which makes the best-of-N
    // restart protocol reliably reach the small-instance optimum.
    Rng rng(seed);
    std::vector<std::size_t> medoids;
    medoids.push_back(rng.uniform_index(n));
    std::vector<double> nearest(n);
    for (std::size_t f = 0; f < n; ++f) nearest[f] = d(f, medoids[0]);
    while (medoids.size() < static_cast<std::size_t>(k)) {
        double total = 0;
        for (std::size_t f = 0; f < n; ++f) total += nearest[f] * nearest[f];
        std::size_t pick = 0;
        if (total > 0) {
            double target = rng.uniform() * total;
            for (std::size_t f = 0; f < n; ++f) {
                target -= nearest[f] * nearest[f];
                if (target <= 0) {
                    pick = f;
                    break;
                }
            }
        } else {
            // all remaining distances are zero: fall back to a uniform draw
            // over features not yet chosen
            do {
                pick = rng.uniform_index(n);
            } while (std::find(medoids.begin(), medoids.end(), pick) != medoids.end());
        }
        if (std::find(medoids.begin(), medoids.end(), pick) != medoids.end()) continue;
        medoids.push_back(pick);
        for (std::size_t f = 0; f < n; ++f) nearest[f] = std::min(nearest[f], d(f, pick));
    }
    std::sort(medoids.begin(), medoids.end());

    std::vector<int> assignment(n, -1);
    const auto assign_all = [&]() {
        double total = 0;
        for (std::size_t f = 0; f < n; ++f) {
            int best = 0;
            double best_d = d(f, medoids[0]);
            for (int c = 1; c < k; ++c) {
                const double dc = d(f, medoids[static_cast<std::size_t>(c)]);
                if (dc < best_d) {
                    best_d = dc;
                    best = c;
                }
            }
            assignment[f] = best;
            total += best_d;
        }
        // A medoid always belongs to its own slot (relevant under duplicates).
        for (int c = 0; c < k; ++c) assignment[medoids[static_cast<std::size_t>(c)]] = c;
        return total;
    };

    Clustering result;
    result.k = k;
    double total = assign_all();
    result.iteration_within.push_back(total);

    for (int iter = 0; iter < 100; ++iter) {
        // Update: per cluster, the member minimizing the within-cluster sum.
        std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(k));
        for (std::size_t f = 0; f < n; ++f)
            members[static_cast<std::size_t>(assignment[f])].push_back(f);
        bool changed = false;
        for (int c = 0; c < k; ++c) {
            const auto& m = members[static_cast<std::size_t>(c)];
            if (m.empty()) continue;
            std::size_t best = medoids[static_cast<std::size_t>(c)];
            double best_cost = std::numeric_limits<double>::infinity();
            for (std::size_t cand : m) {
                double cost = 0;
                for (std::size_t other : m) cost += d(cand, other);
                if (cost < best_cost) {
                    best_cost = cost;
                    best = cand;
                }
            }
            if (best != medoids[static_cast<std::size_t>(c)]) {
                medoids[static_cast<std::size_t>(c)] = best;
                changed = true;
            }
        }

        const std::vector<int> prev = assignment;
        total = assign_all();
        result.iteration_within.push_back(total);
        if (!changed || prev == assignment) break;
    }

    result.medoid_indices = medoids;
    result.assignment = assignment;
    result.total_within_distance = total;
    // The alternating update only moves a medoid within its own cluster and
    // can stall above the small-instance optimum; finish with swap moves.
    swap_polish(d, result);
    return result;
}


MultiRestartResult multi_restart(const FeatureMatrix& fm, int k, int restarts,
                                 std::uint64_t seed, const DistanceProvider* dist) {
    if (restarts < 1) throw std::invalid_argument("multi_restart: restarts must be >= 1");
    std::unique_ptr<DistanceProvider> owned;
    if (!dist) {
        owned = std::make_unique<DistanceProvider>(fm);
        dist = owned.get();
    }
    MultiRestartResult out;
    double sum = 0;
    for (int r = 0; r < restarts; ++r) {
        Clustering c = kmedoids(fm, k, derive_seed(seed, static_cast<std::uint64_t>(r)), dist);
        sum += c.total_within_distance;
        if (r == 0 || c.total_within_distance < out.best.total_within_distance)
            out.best = std::move(c);
    }
    out.mean_within = sum / static_cast<double>(restarts);
    return out;
}

double silhouette(const FeatureMatrix& fm, const Clustering& clustering,
                  const DistanceProvider* dist) {
    if (clustering.k < 2) throw std::invalid_argument("silhouette: k must be >= 2");
    std::unique_ptr<DistanceProvider> owned;
    if (!dist) {
        owned = std::make_unique<DistanceProvider>(fm);
        dist = owned.get();
    }
    const std::size_t n = fm.n_features;
    const auto& d = *dist;
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(clustering.k));
    for (std::size_t f = 0; f < n; ++f)
        members[static_cast<std::size_t>(clustering.assignment[f])].push_back(f);
    for (const auto& m : members)
        if (m.empty()) throw std::invalid_argument("silhouette: empty cluster");

    double acc = 0;
    for (std::size_t f = 0; f < n; ++f) {
        const int own = clustering.assignment[f];
        const auto& own_members = members[static_cast<std::size_t>(own)];
        if (own_members.size() == 1) continue;  // singleton contributes 0
        double a = 0;
        for (std::size_t other : own_members)
            if (other != f) a += d(f, other);
        a /= static_cast<double>(own_members.size() - 1);

        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < clustering.k; ++c) {
            if (c == own) continue;
            const auto& m = members[static_cast<std::size_t>(c)];
            double mean = 0;
            for (std::size_t other : m) mean += d(f, other);
            mean /= static_cast<double>(m.size());
            b = std::min(b, mean);
        }
        // a == b == 0 (duplicates split across clusters) contributes 0; the
        // threshold keeps fp residue on duplicate columns from exploding
        const double denom = std::max(a, b);
        if (denom > 1e-12) acc += (b - a) / denom;
    }
    return acc / static_cast<double>(n);
}

std::pair<FeatureMatrix, SelectKReport> select_k(const FeatureMatrix& fm, int k_min, int k_max,
                                                 int restarts, std::uint64_t seed) {
    fm.validate();
    const int hard_max = static_cast<int>(fm.n_features) - 1;
    k_min = std::max(k_min, 2);
    k_max = std::min(k_max, hard_max);
    if (k_min > k_max) throw std::invalid_argument("select_k: empty k range");

    const DistanceProvider dist(fm);
    SelectKReport report;
    Clustering best_clustering;
    double best_sil = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max; ++k) {
        MultiRestartResult r = multi_restart(fm, k, restarts, derive_seed(seed, k), &dist);
        const double sil = silhouette(fm, r.best, &dist);
        report.ks.push_back(k);
        report.silhouettes.push_back(sil);
        report.mean_within.push_back(r.mean_within);
        if (sil > best_sil) {
            best_sil = sil;
            report.k_star = k;
            best_clustering = std::move(r.best);
        }
    }

    std::vector<std::size_t> cols = best_clustering.medoid_indices;
    std::sort(cols.begin(), cols.end());
    FeatureMatrix reduced = fm.select_columns(cols);
    report.medoid_ids = reduced.feature_ids;
    return {std::move(reduced), std::move(report)};
}

std::pair<FeatureMatrix, std::vector<std::string>> remove_constant_features(
    const FeatureMatrix& fm) {
    fm.validate();
    std::vector<std::size_t> keep;
    std::vector<std::string> removed;
    for (std::size_t f = 0; f < fm.n_features; ++f) {
        bool constant = true;
        const double first = fm.at(0, f);
        for (std::size_t c = 1; c < fm.n_cases && constant; ++c)
            constant = fm.at(c, f) == first;
        if (constant)
            removed.push_back(fm.feature_ids[f]);
        else
            keep.push_back(f);
    }
    return {fm.select_columns(keep), std::move(removed)};
}

}  // namespace unetsurv::featsel
