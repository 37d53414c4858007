#ifndef UNETSURV_KMEDOIDS_HPP
#define UNETSURV_KMEDOIDS_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "unetsurv/feature_matrix.hpp"

namespace unetsurv::featsel {

// Pearson correlation distance 1 - R between two feature columns. Both
// columns must have length >= 2 and positive variance.
double pearson_distance(const std::vector<double>& x, const std::vector<double>& y);

// Pairwise feature distances over a matrix's columns. Precomputes the full
// n_features^2 table when it fits the memory budget, otherwise falls back to
// dot products of cached standardized columns.
class DistanceProvider {
public:
    explicit DistanceProvider(const FeatureMatrix& fm,
                              std::size_t memory_budget_bytes = 256u << 20);
    double operator()(std::size_t i, std::size_t j) const;
    std::size_t count() const { return n_; }

private:
    std::size_t n_ = 0;
    std::size_t cases_ = 0;
    std::vector<double> z_;       // standardized columns, feature-major
    std::vector<float> matrix_;   // full table when within budget
    bool has_matrix_ = false;
    double compute(std::size_t i, std::size_t j) const;
};

struct Clustering {
    int k = 0;
    std::vector<std::size_t> medoid_indices;  // per cluster slot
    std::vector<int> assignment;              // per feature -> cluster slot
    double total_within_distance = 0;
    std::vector<double> iteration_within;     // trace, non-increasing
};

// Alternating assign/update k-medoids with random initial medoids. All ties
// break toward the lowest index; every medoid stays assigned to its own slot.
Clustering kmedoids(const FeatureMatrix& fm, int k, std::uint64_t seed,
                    const DistanceProvider* dist = nullptr);

struct MultiRestartResult {
    Clustering best;
    double mean_within = 0;
};

MultiRestartResult multi_restart(const FeatureMatrix& fm, int k, int restarts,
                                 std::uint64_t seed, const DistanceProvider* dist = nullptr);

// Mean silhouette value over features; singletons contribute 0, a==b==0
// contributes 0. Requires k >= 2 and no empty cluster.
double silhouette(const FeatureMatrix& fm, const Clustering& clustering,
                  const DistanceProvider* dist = nullptr);

struct SelectKReport {
    int k_star = 0;
    std::vector<int> ks;
    std::vector<double> silhouettes;
    std::vector<double> mean_within;
    std::vector<std::string> medoid_ids;
};

// Silhouette-maximizing k over [k_min, k_max] (clamped to valid bounds, ties
// to the lowest k); returns the medoid columns as a reduced matrix.
std::pair<FeatureMatrix, SelectKReport> select_k(const FeatureMatrix& fm, int k_min, int k_max,
                                                 int restarts, std::uint64_t seed);

// Zero-variance columns make the correlation distance undefined; strip them
// before clustering. Returns the surviving matrix and the removed ids.
std::pair<FeatureMatrix, std::vector<std::string>> remove_constant_features(
    const FeatureMatrix& fm);

}  // namespace unetsurv::featsel

#endif
