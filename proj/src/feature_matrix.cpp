#include "unetsurv/feature_matrix.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace unetsurv::featsel {

std::vector<double> FeatureMatrix::column(std::size_t f) const {
    std::vector<double> col(n_cases);
    for (std::size_t c = 0; c < n_cases; ++c) col[c] = at(c, f);
    return col;
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<std::size_t>& rows) const {
    FeatureMatrix out;
    out.n_cases = rows.size();
    out.n_features = n_features;
    out.feature_ids = feature_ids;
    out.values.reserve(rows.size() * n_features);
    for (std::size_t r : rows) {
        if (r >= n_cases) throw std::out_of_range("feature matrix: row out of range");
        out.values.insert(out.values.end(), values.begin() + r * n_features,
                          values.begin() + (r + 1) * n_features);
        out.case_ids.push_back(case_ids[r]);
        if (!modalities.empty()) out.modalities.push_back(modalities[r]);
    }
    return out;
}

FeatureMatrix FeatureMatrix::select_columns(const std::vector<std::size_t>& cols) const {
    FeatureMatrix out;
    out.n_cases = n_cases;
    out.n_features = cols.size();
    out.case_ids = case_ids;
    out.modalities = modalities;
    out.values.resize(n_cases * cols.size());
    for (std::size_t f : cols)
        if (f >= n_features) throw std::out_of_range("feature matrix: column out of range");
    for (std::size_t j = 0; j < cols.size(); ++j) out.feature_ids.push_back(feature_ids[cols[j]]);
    for (std::size_t c = 0; c < n_cases; ++c)
        for (std::size_t j = 0; j < cols.size(); ++j) out.at(c, j) = at(c, cols[j]);
    return out;
}

void FeatureMatrix::validate() const {
    if (values.size() != n_cases * n_features)
        throw std::invalid_argument("feature matrix: value count does not match dims");
    if (feature_ids.size() != n_features)
        throw std::invalid_argument("feature matrix: feature id count mismatch");
    if (case_ids.size() != n_cases)
        throw std::invalid_argument("feature matrix: case id count mismatch");
    std::unordered_set<std::string> seen;
    for (const std::string& id : feature_ids)
        if (!seen.insert(id).second)
            throw std::invalid_argument("feature matrix: duplicate feature id " + id);
}

FeatureMatrix read_feature_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("feature csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("feature csv: empty file");

    FeatureMatrix fm;
    {
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');
        if (tok != "case_id") throw std::runtime_error("feature csv: bad header");
        std::getline(ss, tok, ',');
        if (tok != "modality") throw std::runtime_error("feature csv: bad header");
        while (std::getline(ss, tok, ',')) fm.feature_ids.push_back(tok);
    }
    fm.n_features = fm.feature_ids.size();

    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');
        fm.case_ids.push_back(tok);
        std::getline(ss, tok, ',');
        fm.modalities.push_back(tok);
        std::size_t count = 0;
        while (std::getline(ss, tok, ',')) {
            fm.values.push_back(std::stod(tok));
            ++count;
        }
        if (count != fm.n_features)
            throw std::runtime_error("feature csv: row width mismatch in " + path.string());
        ++fm.n_cases;
    }
    fm.validate();
    return fm;
}

void write_feature_csv(const FeatureMatrix& fm, const std::filesystem::path& path) {
    fm.validate();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("feature csv: cannot write " + path.string());
    out << "case_id,modality";
    for (const std::string& id : fm.feature_ids) out << ',' << id;
    out << '\n';
    char buf[64];
    for (std::size_t c = 0; c < fm.n_cases; ++c) {
        out << fm.case_ids[c] << ',' << (fm.modalities.empty() ? "ct" : fm.modalities[c]);
        for (std::size_t f = 0; f < fm.n_features; ++f) {
            std::snprintf(buf, sizeof(buf), "%.9g", fm.at(c, f));
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("feature csv: write failed for " + path.string());
}

FeatureMatrix concat_features(const FeatureMatrix& a, const FeatureMatrix& b) {
    if (a.case_ids != b.case_ids)
        throw std::invalid_argument("concat_features: case id sequences differ");
    FeatureMatrix out;
    out.n_cases = a.n_cases;
    out.n_features = a.n_features + b.n_features;
    out.case_ids = a.case_ids;
    out.modalities.assign(a.n_cases, "both");
    out.feature_ids = a.feature_ids;
    out.feature_ids.insert(out.feature_ids.end(), b.feature_ids.begin(), b.feature_ids.end());
    out.values.resize(out.n_cases * out.n_features);
    for (std::size_t c = 0; c < out.n_cases; ++c) {
        for (std::size_t f = 0; f < a.n_features; ++f) out.at(c, f) = a.at(c, f);
        for (std::size_t f = 0; f < b.n_features; ++f) out.at(c, a.n_features + f) = b.at(c, f);
    }
    out.validate();
    return out;
}

}  // namespace unetsurv::featsel
