#include "fsr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "fsr/rng.hpp"
#include "fsr/tns_io.hpp"

namespace fsr {

namespace fs = std::filesystem;

const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

std::vector<std::size_t> DatasetIndex::class_counts(Split s) const {
    std::vector<std::size_t> out;
    for (const auto& c : samples(s)) out.push_back(c.size());
    return out;
}

std::size_t DatasetIndex::total(Split s) const {
    std::size_t n = 0;
    for (const auto& c : samples(s)) n += c.size();
    return n;
}

namespace {

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    return names;
}

std::vector<fs::path> sorted_tns(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".tns") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

DatasetIndex index_dataset(const fs::path& root) {
    DatasetIndex index;
    index.root = root;
    for (Split s : {Split::train, Split::test}) {
        const fs::path dir = root / split_name(s);
        if (!fs::is_directory(dir)) throw DatasetError("dataset split directory not found: " + dir.string());
    }
    index.classes = sorted_subdirs(root / "train");
    if (index.classes.size() < 2)
        throw DatasetError("dataset needs at least 2 classes under " + (root / "train").string());
    const auto test_classes = sorted_subdirs(root / "test");
    for (const auto& name : test_classes)
        if (!std::binary_search(index.classes.begin(), index.classes.end(), name))
            throw DatasetError("test class not present in train split: " + (root / "test" / name).string());
    for (const auto& name : index.classes) {
        index.train.push_back(sorted_tns(root / "train" / name));
        if (index.train.back().empty())
            throw DatasetError("class directory has no .tns files: " + (root / "train" / name).string());
        const fs::path test_dir = root / "test" / name;
        index.test.push_back(fs::is_directory(test_dir) ? sorted_tns(test_dir) : std::vector<fs::path>{});
    }
    return index;
}

Tensor bilinear_resize(const Tensor& img, std::size_t out_h, std::size_t out_w) {
    if (img.rank() != 3 || img.dim(0) != 1) throw ShapeError("bilinear_resize expects 1×H×W, got " + shape_str(img.shape()));
    if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: zero target size");
    const std::size_t h = img.dim(1), w = img.dim(2);
    if (h == out_h && w == out_w) return img.detach();
    auto src = img.data();
    auto coord = [](std::size_t t, std::size_t in, std::size_t out, std::size_t& i0, std::size_t& i1, double& frac) {
        double s = (static_cast<double>(t) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(in - 1));
        i0 = static_cast<std::size_t>(std::floor(s));
        i1 = std::min(i0 + 1, in - 1);
        frac = s - static_cast<double>(i0);
    };
    std::vector<double> out(out_h * out_w);
    for (std::size_t y = 0; y < out_h; ++y) {
        std::size_t y0, y1;
        double fy;
        coord(y, h, out_h, y0, y1, fy);
        for (std::size_t x = 0; x < out_w; ++x) {
            std::size_t x0, x1;
            double fx;
            coord(x, w, out_w, x0, x1, fx);
            const double top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            const double bottom = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out[y * out_w + x] = top * (1.0 - fy) + bottom * fy;
        }
    }
    return Tensor({1, out_h, out_w}, std::move(out));
}

LoadedSplit load_split(const DatasetIndex& index, Split split, std::size_t size) {
    LoadedSplit out;
    const auto& samples = index.samples(split);
    std::vector<double> pixels;
    out.by_class.resize(samples.size());
    for (std::size_t c = 0; c < samples.size(); ++c) {
        for (const auto& path : samples[c]) {
            Tensor img = tns_read(path);
            if (img.rank() == 2) img = Tensor({1, img.dim(0), img.dim(1)}, std::vector<double>(img.data().begin(), img.data().end()));
            if (img.rank() != 3 || img.dim(0) != 1)
                throw DatasetError(path.string() + ": expected a 1×H×W image, got " + shape_str(img.shape()));
            img = bilinear_resize(img, size, size);
            out.by_class[c].push_back(out.labels.size());
            pixels.insert(pixels.end(), img.data().begin(), img.data().end());
            out.labels.push_back(static_cast<int>(c));
            out.ids.push_back(index.classes[c] + "/" + path.stem().string());
        }
    }
    if (out.labels.empty()) throw DatasetError(index.root.string() + ": split '" + split_name(split) + "' is empty");
    out.images = Tensor({out.labels.size(), 1, size, size}, std::move(pixels));
    return out;
}

std::vector<Scatterer> class_scatterers(std::size_t c, std::size_t size) {
    Rng rng(0x5ca77e7ULL + 7919ULL * c);
    const double s = static_cast<double>(size);
    std::uniform_real_distribution<double> pos(0.3 * s, 0.7 * s);
    std::uniform_real_distribution<double> amp(0.35, 0.5);
    std::uniform_real_distribution<double> spread(0.8, 1.2);
    const std::size_t count = 3 + c % 3;
    std::vector<Scatterer> layout;
    for (std::size_t i = 0; i < count; ++i) {
        const double r = pos(rng);
        const double col = pos(rng);
        const double a = amp(rng);
        layout.push_back({r, col, a, s / 20.0 * spread(rng)});
    }
    return layout;
}

Tensor render_template(const std::vector<Scatterer>& layout, std::size_t size, double dy, double dx) {
    std::vector<double> img(size * size, kClutterLevel);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            double v = kClutterLevel;
            for (const auto& sc : layout) {
                const double ry = static_cast<double>(y) - (sc.row + dy);
                const double rx = static_cast<double>(x) - (sc.col + dx);
                v += sc.amplitude * std::exp(-(ry * ry + rx * rx) / (2.0 * sc.sigma * sc.sigma));
            }
            img[y * size + x] = std::min(v, 1.0);
        }
    return Tensor({1, size, size}, std::move(img));
}

std::string class_dir_name(std::size_t c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "class_%02zu", c);
    return buf;
}

DatasetIndex generate_synthetic(const SyntheticSpec& spec, const fs::path& root) {
    if (spec.classes < 2) throw std::invalid_argument("need at least 2 classes");
    if (spec.size < 16) throw std::invalid_argument("image size must be at least 16");
    if (spec.train_per_class == 0) throw std::invalid_argument("need at least 1 training sample per class");
    const std::size_t s = spec.size;
    const long max_shift = static_cast<long>(s / 16);
    for (Split split : {Split::train, Split::test}) {
        const std::size_t per_class = split == Split::train ? spec.train_per_class : spec.test_per_class;
        for (std::size_t c = 0; c < spec.classes; ++c) {
            const fs::path dir = root / split_name(split) / class_dir_name(c);
            fs::create_directories(dir);
            const auto layout = class_scatterers(c, s);
            for (std::size_t i = 0; i < per_class; ++i) {
                Rng rng = keyed_rng({spec.seed, static_cast<std::uint64_t>(split), c, i});
                std::uniform_int_distribution<long> shift(-max_shift, max_shift);
                const double dy = static_cast<double>(shift(rng));
                const double dx = static_cast<double>(shift(rng));
                Tensor img = render_template(layout, s, dy, dx);
                std::exponential_distribution<double> speckle(1.0);
                auto px = img.mutable_data();
                for (auto& v : px) v = std::clamp(v * speckle(rng), 0.0, 1.0);
                char name[32];
                std::snprintf(name, sizeof name, "%05zu.tns", i);
                tns_write(dir / name, img);
            }
        }
    }
    return index_dataset(root);
}

}  // namespace fsr
