#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsr/extractor.hpp"
#include "fsr/optimizer.hpp"

namespace fsr {

struct TrainConfig {
    std::size_t epochs = 160;
    std::size_t warmup_epochs = 15;
    std::size_t cosine_period = 320;
    double base_lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-5;
    std::size_t classes_per_batch = 4;  // P
    std::size_t samples_per_class = 8;  // Q
    double lambda1 = 1.0;
    double lambda2 = 0.8;
    double rho = 1.0;
    double beta_a = 0.1;
    double beta_b = 0.1;
    std::uint64_t seed = 0;
    bool efa = true;
    bool ada = true;
    bool dhfr = true;
    std::size_t image_size = 32;
    SimilaritySource similarity = SimilaritySource::pooled;
    std::size_t eval_threads = 1;

    Schedule schedule() const { return {base_lr, warmup_epochs, cosine_period}; }
    /// Throws ConfigError on inconsistent values.
    void validate() const;
};

struct RunConfig {
    TrainConfig train;
    std::string data_dir;
    std::string out_dir = "runs/default";
};

class ConfigError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// `key = value` lines; `#` starts a comment. Unknown keys are rejected.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path);
void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value);
/// `key=value` form used by --set.
void apply_override(RunConfig& cfg, const std::string& assignment);
/// Every key with its resolved value; parse_config(render_config(c)) == c.
std::string render_config(const RunConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace fsr
