#include "fsr/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace fsr {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    std::istringstream is(v);
    is.imbue(std::locale::classic());
    double out = 0.0;
    is >> out;
    if (is.fail() || !is.eof()) throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "1" || v == "true") return true;
    if (v == "0" || v == "false") return false;
    throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt(double v) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << std::setprecision(17) << v;
    return os.str();
}

struct Field {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define FSR_SIZE(name)                                                                                    \
    Field {                                                                                               \
        #name, [](RunConfig& c, const std::string& v) { c.train.name = to_uint(#name, v); },                \
            [](const RunConfig& c) { return std::to_string(c.train.name); }                               \
    }
#define FSR_REAL(name)                                                                          \
    Field {                                                                                     \
        #name, [](RunConfig& c, const std::string& v) { c.train.name = to_double(#name, v); },    \
            [](const RunConfig& c) { return fmt(c.train.name); }                                \
    }
#define FSR_FLAG(name)                                                                        \
    Field {                                                                                   \
        #name, [](RunConfig& c, const std::string& v) { c.train.name = to_bool(#name, v); },    \
            [](const RunConfig& c) { return std::string(c.train.name ? "true" : "false"); }   \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        {"data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; },
         [](const RunConfig& c) { return c.data_dir; }},
        {"out_dir", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
         [](const RunConfig& c) { return c.out_dir; }},
        FSR_SIZE(epochs),
        FSR_SIZE(warmup_epochs),
        FSR_SIZE(cosine_period),
        FSR_REAL(base_lr),
        FSR_REAL(momentum),
        FSR_REAL(weight_decay),
        FSR_SIZE(classes_per_batch),
        FSR_SIZE(samples_per_class),
        FSR_REAL(lambda1),
        FSR_REAL(lambda2),
        FSR_REAL(rho),
        FSR_REAL(beta_a),
        FSR_REAL(beta_b),
        FSR_SIZE(seed),
        FSR_FLAG(efa),
        FSR_FLAG(ada),
        FSR_FLAG(dhfr),
        FSR_SIZE(image_size),
        {"similarity",
         [](RunConfig& c, const std::string& v) {
             if (v == "pooled")
                 c.train.similarity = SimilaritySource::pooled;
             else if (v == "flattened")
                 c.train.similarity = SimilaritySource::flattened;
             else
                 throw ConfigError("config key 'similarity': expected pooled or flattened, got '" + v + "'");
         },
         [](const RunConfig& c) {
             return std::string(c.train.similarity == SimilaritySource::pooled ? "pooled" : "flattened");
         }},
        FSR_SIZE(eval_threads),
    };
    return table;
}

#undef FSR_SIZE
#undef FSR_REAL
#undef FSR_FLAG

}  // namespace

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (warmup_epochs >= epochs) throw ConfigError("warmup_epochs must be smaller than epochs");
    if (warmup_epochs == 0) throw ConfigError("warmup_epochs must be positive");
    if (cosine_period == 0) throw ConfigError("cosine_period must be positive");
    if (classes_per_batch < 2 || samples_per_class < 2)
        throw ConfigError("classes_per_batch and samples_per_class must be at least 2");
    if (rho < 0.0) throw ConfigError("rho must be non-negative");
    if (beta_a <= 0.0 || beta_b <= 0.0) throw ConfigError("beta parameters must be positive");
    if (image_size < 16) throw ConfigError("image_size must be at least 16");
    if (base_lr < 0.0 || momentum < 0.0 || weight_decay < 0.0)
        throw ConfigError("base_lr, momentum and weight_decay must be non-negative");
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& f : fields())
        if (key == f.key) {
            f.set(cfg, value);
            return;
        }
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
    apply_setting(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig parse_config(const std::string& text, RunConfig base) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        try {
            apply_setting(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

RunConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string render_config(const RunConfig& cfg) {
    std::string out;
    for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.emplace_back(f.key);
    return keys;
}

}  // namespace fsr
