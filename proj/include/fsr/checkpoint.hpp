#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsr/model.hpp"
#include "fsr/optimizer.hpp"

namespace fsr {

class CheckpointError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    ModelConfig model;
    std::vector<std::string> class_names;
    ParamStore params;
    OptimState optim;
    std::size_t epochs_completed = 0;
};

/// Directory layout: manifest.txt, params/<name>.tns, velocity/<name>.tns.
/// Values are stored at 32-bit width.
void save_checkpoint(const std::filesystem::path& dir, const Model& model, const OptimState& optim,
                     const std::vector<std::string>& class_names, std::size_t epochs_completed);

/// Throws CheckpointError naming the file or parameter at fault.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Rebuilds a model from a checkpoint; the parameter layout is checked.
Model restore_model(const Checkpoint& ckpt);

/// Copies checkpoint values into `target`, failing on unknown, missing or
/// mis-shaped names.
void load_params_into(ParamStore& target, const ParamStore& source);

}  // namespace fsr
