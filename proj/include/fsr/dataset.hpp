#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsr/tensor.hpp"

namespace fsr {

enum class Split { train, test };
const char* split_name(Split s);

/// root/{train,test}/<class_name>/<id>.tns; class ids follow lexicographic name order.
struct DatasetIndex {
    std::filesystem::path root;
    std::vector<std::string> classes;
    std::vector<std::vector<std::filesystem::path>> train;  // [class][sample]
    std::vector<std::vector<std::filesystem::path>> test;

    const std::vector<std::vector<std::filesystem::path>>& samples(Split s) const {
        return s == Split::train ? train : test;
    }
    std::vector<std::size_t> class_counts(Split s) const;
    std::size_t total(Split s) const;
};

class DatasetError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

/// Scans a dataset tree. Throws DatasetError naming the offending path.
DatasetIndex index_dataset(const std::filesystem::path& root);

struct LoadedSplit {
    Tensor images;  // N×1×S×S
    std::vector<int> labels;
    std::vector<std::string> ids;
    std::vector<std::vector<std::size_t>> by_class;  // rows of `images` per class
};

/// Loads a split, resizing every image to S×S with bilinear interpolation.
LoadedSplit load_split(const DatasetIndex& index, Split split, std::size_t size);

/// Half-pixel-centre bilinear resize of a 1×H×W image; samples clamp to the border.
Tensor bilinear_resize(const Tensor& img, std::size_t out_h, std::size_t out_w);

struct SyntheticSpec {
    std::size_t classes = 4;
    std::size_t train_per_class = 20;
    std::size_t test_per_class = 50;
    std::size_t size = 32;
    std::uint64_t seed = 0;
};

struct Scatterer {
    double row;
    double col;
    double amplitude;
    double sigma;
};

/// Scatterer layout of class `c` (image coordinates for an S×S image).
std::vector<Scatterer> class_scatterers(std::size_t c, std::size_t size);
/// Noise-free rendering of a layout shifted by (dy, dx) pixels, over the clutter floor.
Tensor render_template(const std::vector<Scatterer>& layout, std::size_t size, double dy = 0.0, double dx = 0.0);

inline constexpr double kClutterLevel = 0.08;

std::string class_dir_name(std::size_t c);

/// Writes the synthetic tree under `root` and returns its index.
DatasetIndex generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& root);

}  // namespace fsr
