#include "unetsurv/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace unetsurv::pipeline {

namespace {

struct Value {
    enum class Kind { integer, real, text, boolean, array } kind;
    long long i = 0;
    double d = 0;
    std::string s;
    bool b = false;
    std::vector<Value> items;
};

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

Value parse_value(const std::string& raw, int line_no);

Value parse_array(const std::string& raw, int line_no) {
    Value v;
    v.kind = Value::Kind::array;
    const std::string inner = trim(raw.substr(1, raw.size() - 2));
    if (inner.empty()) return v;
    std::size_t depth = 0, start = 0;
    for (std::size_t i = 0; i <= inner.size(); ++i) {
        if (i == inner.size() || (inner[i] == ',' && depth == 0)) {
            v.items.push_back(parse_value(trim(inner.substr(start, i - start)), line_no));
            start = i + 1;
        } else if (inner[i] == '[') {
            ++depth;
        } else if (inner[i] == ']') {
            --depth;
        }
    }
    return v;
}

Value parse_value(const std::string& raw, int line_no) {
    if (raw.empty())
        throw std::invalid_argument("config: empty value at line " + std::to_string(line_no));
    Value v;
    if (raw.front() == '[') {
        if (raw.back() != ']')
            throw std::invalid_argument("config: unterminated array at line " +
                                        std::to_string(line_no));
        return parse_array(raw, line_no);
    }
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            throw std::invalid_argument("config: unterminated string at line " +
                                        std::to_string(line_no));
        v.kind = Value::Kind::text;
        v.s = raw.substr(1, raw.size() - 2);
        return v;
    }
    if (raw == "true" || raw == "false") {
        v.kind = Value::Kind::boolean;
        v.b = raw == "true";
        return v;
    }
    const bool looks_real = raw.find_first_of(".eE") != std::string::npos;
    try {
        std::size_t used = 0;
        if (looks_real) {
            v.kind = Value::Kind::real;
            v.d = std::stod(raw, &used);
        } else {
            v.kind = Value::Kind::integer;
            v.i = std::stoll(raw, &used);
        }
        if (used != raw.size()) throw std::invalid_argument("trailing");
    } catch (...) {
        throw std::invalid_argument("config: cannot parse value '" + raw + "' at line " +
                                    std::to_string(line_no));
    }
    return v;
}

using Table = std::map<std::string, std::map<std::string, Value>>;

Table parse_table(const std::string& text) {
    Table table;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) {
            // keep '#' inside quoted strings
            bool in_quote = false;
            std::size_t cut = std::string::npos;
            for (std::size_t i = 0; i < line.size(); ++i) {
                if (line[i] == '"') in_quote = !in_quote;
                if (line[i] == '#' && !in_quote) {
                    cut = i;
                    break;
                }
            }
            if (cut != std::string::npos) line = line.substr(0, cut);
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config: bad section header at line " +
                                            std::to_string(line_no));
            section = trim(line.substr(1, line.size() - 2));
            table[section];
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: expected key = value at line " +
                                        std::to_string(line_no));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config: empty key at line " + std::to_string(line_no));
        table[section][key] = parse_value(value, line_no);
    }
    return table;
}

class Reader {
public:
    explicit Reader(Table t) : table_(std::move(t)) {}

    bool has(const std::string& sec, const std::string& key) const {
        const auto s = table_.find(sec);
        return s != table_.end() && s->second.count(key) > 0;
    }

    const Value& get(const std::string& sec, const std::string& key) {
        used_.insert(sec + "." + key);
        return table_.at(sec).at(key);
    }

    long long integer(const std::string& sec, const std::string& key, long long dflt) {
        if (!has(sec, key)) return dflt;
        const Value& v = get(sec, key);
        if (v.kind != Value::Kind::integer)
            throw std::invalid_argument("config: " + sec + "." + key + " must be an integer");
        return v.i;
    }

    double real(const std::string& sec, const std::string& key, double dflt) {
        if (!has(sec, key)) return dflt;
        const Value& v = get(sec, key);
        if (v.kind == Value::Kind::integer) return static_cast<double>(v.i);
        if (v.kind != Value::Kind::real)
            throw std::invalid_argument("config: " + sec + "." + key + " must be a number");
        return v.d;
    }

    std::string text(const std::string& sec, const std::string& key, const std::string& dflt) {
        if (!has(sec, key)) return dflt;
        const Value& v = get(sec, key);
        if (v.kind != Value::Kind::text)
            throw std::invalid_argument("config: " + sec + "." + key + " must be a string");
        return v.s;
    }

    std::vector<long long> int_array(const std::string& sec, const std::string& key,
                                     std::vector<long long> dflt) {
        if (!has(sec, key)) return dflt;
        const Value& v = get(sec, key);
        if (v.kind != Value::Kind::array)
            throw std::invalid_argument("config: " + sec + "." + key + " must be an array");
        std::vector<long long> out;
        for (const Value& item : v.items) {
            if (item.kind != Value::Kind::integer)
                throw std::invalid_argument("config: " + sec + "." + key +
                                            " must contain integers");
            out.push_back(item.i);
        }
        return out;
    }

    void check_all_used() const {
        for (const auto& [sec, entries] : table_)
            for (const auto& [key, value] : entries) {
                const std::string full = sec + "." + key;
                if (used_.find(full) == used_.end())
                    throw std::invalid_argument("config: unknown key " + full);
            }
    }

private:
    Table table_;
    std::set<std::string> used_;
};

}  // namespace

PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    Reader r(parse_table(text));
    PipelineConfig c;

    std::filesystem::path out = r.text("paths", "out_dir", c.out_dir.string());
    c.out_dir = out.is_absolute() ? out : base_dir / out;
    c.seed = static_cast<std::uint64_t>(r.integer("seeds", "master", static_cast<long long>(c.seed)));
    c.modality = r.text("run", "modality", c.modality);
    c.jobs = static_cast<int>(r.integer("run", "jobs", c.jobs));

    auto& p = c.phantom;
    p.n_cases = static_cast<int>(r.integer("phantom", "n_cases", p.n_cases));
    const auto dims = r.int_array("phantom", "dims",
                                  {static_cast<long long>(p.dims[0]),
                                   static_cast<long long>(p.dims[1]),
                                   static_cast<long long>(p.dims[2])});
    if (dims.size() != 3) throw std::invalid_argument("config: phantom.dims must have 3 entries");
    for (int a = 0; a < 3; ++a) p.dims[static_cast<std::size_t>(a)] = static_cast<std::uint32_t>(dims[static_cast<std::size_t>(a)]);
    p.radius_min = r.real("phantom", "radius_min", p.radius_min);
    p.radius_max = r.real("phantom", "radius_max", p.radius_max);
    p.heterogeneity = r.real("phantom", "heterogeneity", p.heterogeneity);
    p.vessel_count = static_cast<int>(r.integer("phantom", "vessel_count", p.vessel_count));
    p.noise_sigma = r.real("phantom", "noise_sigma", p.noise_sigma);
    p.label_a0 = r.real("phantom", "label_a0", p.label_a0);
    p.label_a1 = r.real("phantom", "label_a1", p.label_a1);
    p.label_a2 = r.real("phantom", "label_a2", p.label_a2);

    c.preprocess.target_spacing = r.real("preprocess", "target_spacing", 1.0);

    auto& u = c.unet;
    u.base_width = static_cast<int>(r.integer("unet", "base_width", u.base_width));
    u.depth = static_cast<int>(r.integer("unet", "depth", u.depth));
    u.convs_per_level = static_cast<int>(r.integer("unet", "convs_per_level", u.convs_per_level));
    u.epochs = static_cast<int>(r.integer("unet", "epochs", u.epochs));
    u.seg_train_cases = static_cast<int>(r.integer("unet", "seg_train_cases", u.seg_train_cases));
    u.seg_val_cases = static_cast<int>(r.integer("unet", "seg_val_cases", u.seg_val_cases));
    u.aug_per_pair = static_cast<int>(r.integer("unet", "aug_per_pair", u.aug_per_pair));
    u.learning_rate = r.real("unet", "learning_rate", u.learning_rate);
    u.weight_decay = r.real("unet", "weight_decay", u.weight_decay);
    u.max_translation = static_cast<int>(r.integer("unet", "max_translation", u.max_translation));
    std::vector<long long> rotations(u.rotations.begin(), u.rotations.end());
    u.rotations.clear();
    for (long long q : r.int_array("unet", "rotations", rotations))
        u.rotations.push_back(static_cast<int>(q));
    u.flips = r.text("unet", "flips", u.flips);

    auto& cl = c.cluster;
    cl.k_min = static_cast<int>(r.integer("cluster", "k_min", cl.k_min));
    cl.k_max = static_cast<int>(r.integer("cluster", "k_max", cl.k_max));
    cl.restarts = static_cast<int>(r.integer("cluster", "restarts", cl.restarts));
    cl.source = r.text("cluster", "source", cl.source);

    auto& la = c.lasso;
    la.grid_points = static_cast<int>(r.integer("lasso", "grid_points", la.grid_points));
    la.grid_decades = r.real("lasso", "grid_decades", la.grid_decades);
    la.folds = static_cast<int>(r.integer("lasso", "folds", la.folds));
    if (r.has("lasso", "fixed_lambda")) la.fixed_lambda = r.real("lasso", "fixed_lambda", 0.0);

    c.cv.folds = static_cast<int>(r.integer("cv", "folds", c.cv.folds));
    c.cv.category = r.text("cv", "category", c.cv.category);

    auto& v = c.viz;
    v.iterations = static_cast<int>(r.integer("visualize", "iterations", v.iterations));
    v.init_mean = r.real("visualize", "init_mean", v.init_mean);
    v.init_std = r.real("visualize", "init_std", v.init_std);
    v.neurons = static_cast<int>(r.integer("visualize", "neurons", v.neurons));
    v.cases = static_cast<int>(r.integer("visualize", "cases", v.cases));
    v.axis = r.text("visualize", "axis", v.axis);
    v.modality = r.text("visualize", "modality", v.modality);

    r.check_all_used();

    if (c.modality != "ct" && c.modality != "pet" && c.modality != "both")
        throw std::invalid_argument("config: run.modality must be ct, pet or both");
    if (v.axis.size() != 1 || (v.axis != "x" && v.axis != "y" && v.axis != "z"))
        throw std::invalid_argument("config: visualize.axis must be x, y or z");
    if (v.modality != "ct" && v.modality != "pet")
        throw std::invalid_argument("config: visualize.modality must be ct or pet");
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.has_parent_path() ? path.parent_path() : ".");
}

std::string canonical_config(const PipelineConfig& c) {
    std::ostringstream os;
    char buf[64];
    const auto real = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    os << "out_dir=" << c.out_dir.string() << "\nseed=" << c.seed << "\nmodality=" << c.modality
       << "\n";
    os << "phantom=" << c.phantom.n_cases << ',' << c.phantom.dims[0] << ',' << c.phantom.dims[1]
       << ',' << c.phantom.dims[2] << ',' << real(c.phantom.radius_min) << ','
       << real(c.phantom.radius_max) << ',' << real(c.phantom.heterogeneity) << ','
       << c.phantom.vessel_count << ',' << real(c.phantom.noise_sigma) << ','
       << real(c.phantom.label_a0) << ',' << real(c.phantom.label_a1) << ','
       << real(c.phantom.label_a2) << "\n";
    os << "preprocess=" << real(c.preprocess.target_spacing) << "\n";
    os << "unet=" << c.unet.base_width << ',' << c.unet.depth << ',' << c.unet.convs_per_level
       << ',' << c.unet.epochs << ',' << c.unet.seg_train_cases << ',' << c.unet.seg_val_cases
       << ',' << c.unet.aug_per_pair << ',' << real(c.unet.learning_rate) << ','
       << real(c.unet.weight_decay) << ',' << c.unet.max_translation << ",rot[";
    for (int q : c.unet.rotations) os << q << ';';
    os << "]," << c.unet.flips << "\n";
    os << "cluster=" << c.cluster.k_min << ',' << c.cluster.k_max << ',' << c.cluster.restarts
       << ',' << c.cluster.source << "\n";
    os << "lasso=" << c.lasso.grid_points << ',' << real(c.lasso.grid_decades) << ','
       << c.lasso.folds << ',' << (c.lasso.fixed_lambda ? real(*c.lasso.fixed_lambda) : "cv")
       << "\n";
    os << "cv=" << c.cv.folds << ',' << c.cv.category << "\n";
    os << "viz=" << c.viz.iterations << ',' << real(c.viz.init_mean) << ','
       << real(c.viz.init_std) << ',' << c.viz.neurons << ',' << c.viz.cases << ',' << c.viz.axis
       << ',' << c.viz.modality << "\n";
    return os.str();
}

std::string config_fingerprint(const PipelineConfig& cfg) {
    const std::string canon = canonical_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace unetsurv::pipeline
