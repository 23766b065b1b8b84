#include "fsr/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "fsr/tns_io.hpp"

namespace fsr {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "fsr-checkpoint 1";

std::string shape_token(const Shape& s) {
    if (s.empty()) return "scalar";
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

Shape parse_shape(const std::string& token, const std::string& context) {
    if (token == "scalar") return {};
    Shape out;
    std::istringstream is(token);
    std::string part;
    while (std::getline(is, part, 'x')) {
        try {
            out.push_back(std::stoul(part));
        } catch (const std::exception&) {
            throw CheckpointError(context + ": bad shape '" + token + "'");
        }
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Model& model, const OptimState& optim,
                     const std::vector<std::string>& class_names, std::size_t epochs_completed) {
    fs::create_directories(dir / "params");
    fs::create_directories(dir / "velocity");
    std::ostringstream manifest;
    manifest << "format: " << kFormat << "\n";
    manifest << "classes: " << model.config().classes << "\n";
    manifest << "image_size: " << model.config().image_size << "\n";
    manifest << "dhfr: " << (model.config().dhfr ? 1 : 0) << "\n";
    manifest << "epochs_completed: " << epochs_completed << "\n";
    manifest << "momentum: " << fmt(optim.momentum) << "\n";
    manifest << "weight_decay: " << fmt(optim.weight_decay) << "\n";
    for (const auto& name : class_names) manifest << "class " << name << "\n";
    for (const auto& e : model.params().entries()) {
        manifest << (e.trainable ? "param " : "buffer ") << e.name << " " << shape_token(e.value.shape()) << "\n";
        tns_write(dir / "params" / (e.name + ".tns"), e.value);
        auto it = optim.velocity.find(e.name);
        if (e.trainable && it != optim.velocity.end()) {
            manifest << "velocity " << e.name << " " << shape_token(e.value.shape()) << "\n";
            tns_write(dir / "velocity" / (e.name + ".tns"), Tensor(e.value.shape(), it->second));
        }
    }
    std::ofstream out(dir / "manifest.txt", std::ios::trunc);
    if (!out) throw CheckpointError((dir / "manifest.txt").string() + ": cannot write");
    out << manifest.str();
}

Checkpoint load_checkpoint(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.txt";
    std::ifstream in(manifest_path);
    if (!in) throw CheckpointError(manifest_path.string() + ": cannot open");
    Checkpoint ckpt;
    std::map<std::string, std::string> header;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string where = manifest_path.string() + ":" + std::to_string(lineno);
        const auto colon = line.find(": ");
        if (colon != std::string::npos && line.find(' ') == colon + 1) {
            header[line.substr(0, colon)] = line.substr(colon + 2);
            continue;
        }
        std::istringstream is(line);
        std::string kind, name, shape;
        is >> kind >> name;
        if (kind == "class") {
            ckpt.class_names.push_back(name);
            continue;
        }
        is >> shape;
        if ((kind != "param" && kind != "buffer" && kind != "velocity") || name.empty() || shape.empty())
            throw CheckpointError(where + ": unrecognized record '" + line + "'");
        const Shape expected = parse_shape(shape, where);
        const fs::path file = dir / (kind == "velocity" ? "velocity" : "params") / (name + ".tns");
        Tensor value;
        try {
            value = tns_read(file);
        } catch (const TnsError& e) {
            throw CheckpointError("parameter " + name + ": " + e.what());
        }
        if (value.shape() != expected)
            throw CheckpointError("parameter " + name + ": file shape " + shape_str(value.shape()) +
                                  " disagrees with manifest " + shape_str(expected));
        if (kind == "velocity") {
            ckpt.optim.velocity[name] = std::vector<double>(value.data().begin(), value.data().end());
        } else if (ckpt.params.contains(name)) {
            throw CheckpointError(where + ": duplicate parameter " + name);
        } else if (kind == "param") {
            ckpt.params.add_param(name, value);
        } else {
            ckpt.params.add_buffer(name, value);
        }
    }
    if (header["format"] != kFormat) throw CheckpointError(manifest_path.string() + ": not an fsr checkpoint");
    try {
        ckpt.model.classes = std::stoul(header.at("classes"));
        ckpt.model.image_size = std::stoul(header.at("image_size"));
        ckpt.model.dhfr = header.at("dhfr") == "1";
        ckpt.epochs_completed = std::stoul(header.at("epochs_completed"));
        ckpt.optim.momentum = std::stod(header.at("momentum"));
        ckpt.optim.weight_decay = std::stod(header.at("weight_decay"));
    } catch (const std::exception&) {
        throw CheckpointError(manifest_path.string() + ": incomplete header");
    }
    for (const auto& [name, v] : ckpt.optim.velocity)
        if (!ckpt.params.contains(name)) throw CheckpointError("velocity for unknown parameter " + name);
    try {
        check_param_layout(Model(ckpt.model, 0).params(), ckpt.params);
    } catch (const std::exception& e) {
        throw CheckpointError(manifest_path.string() + ": checkpoint does not match architecture: " + e.what());
    }
    return ckpt;
}

Model restore_model(const Checkpoint& ckpt) {
    try {
        return Model(ckpt.model, ckpt.params.clone());
    } catch (const std::exception& e) {
        throw CheckpointError(std::string("checkpoint does not match architecture: ") + e.what());
    }
}

void load_params_into(ParamStore& target, const ParamStore& source) {
    try {
        check_param_layout(target, source);
    } catch (const std::exception& e) {
        throw CheckpointError(e.what());
    }
    for (const auto& e : source.entries()) {
        auto dst = target.get(e.name).mutable_data();
        std::copy(e.value.data().begin(), e.value.data().end(), dst.begin());
    }
}

}  // namespace fsr
