#include "losa/model.hpp"

#include <cstring>
#include <fstream>
#include <utility>

#include "json.hpp"
#include "losa/error.hpp"

namespace losa {

void LayerStack::validate_chain() const {
    for (size_t i = 1; i < layers.size(); ++i) {
        if (layers[i].weight.cols != layers[i - 1].weight.rows) {
            throw shape_error("layer chain broken: " + layers[i - 1].name + " outputs " +
                              std::to_string(layers[i - 1].weight.rows) + " features but " +
                              layers[i].name + " expects " +
                              std::to_string(layers[i].weight.cols));
        }
    }
}

const char* activation_name(Activation a) {
    return a == Activation::relu ? "relu" : "identity";
}

ForwardCapture forward_capture(const LayerStack& stack, const Matrix& inputs, Activation act) {
    if (stack.layers.empty()) {
        throw shape_error("forward_capture: empty layer stack");
    }
    if (inputs.cols != stack.layers.front().weight.cols) {
        throw shape_error("forward_capture: inputs are " + shape_str(inputs) + " but " +
                          stack.layers.front().name + " expects " +
                          std::to_string(stack.layers.front().weight.cols) + " features");
    }
    ForwardCapture fc;
    fc.maps.reserve(stack.layers.size());
    Matrix cur = inputs;
    for (size_t i = 0; i < stack.layers.size(); ++i) {
        fc.maps.push_back(cur);
        Matrix y = matmul(cur, transpose(stack.layers[i].weight));
        if (act == Activation::relu) {
            for (double& v : y.data) {
                if (v < 0.0) v = 0.0;
            }
        }
        cur = std::move(y);
    }
    fc.outputs = std::move(cur);
    return fc;
}

LayerStack make_synthetic(int n_layers, const std::vector<int>& dims, uint64_t seed,
                          double sigma) {
    if (n_layers <= 0) {
        throw numeric_error("make_synthetic: layer count " + std::to_string(n_layers) +
                            " must be positive");
    }
    if (dims.size() != static_cast<size_t>(n_layers) + 1) {
        throw shape_error("make_synthetic: " + std::to_string(n_layers) + " layers need " +
                          std::to_string(n_layers + 1) + " dims, got " +
                          std::to_string(dims.size()));
    }
    for (int d : dims) {
        if (d <= 0) {
            throw shape_error("make_synthetic: dim " + std::to_string(d) + " must be positive");
        }
    }
    LayerStack stack;
    for (int i = 0; i < n_layers; ++i) {
        Layer l;
        l.name = "layer" + std::to_string(i);
        Rng rng{derive_seed(seed, "weights." + l.name), 0};
        l.weight = gaussian_fill(rng, dims[static_cast<size_t>(i) + 1],
                                 dims[static_cast<size_t>(i)], sigma);
        stack.layers.push_back(std::move(l));
    }
    return stack;
}

Matrix make_synthetic_calib(int samples, int width, uint64_t seed) {
    if (samples <= 0 || width <= 0) {
        throw shape_error("make_synthetic_calib: shape " + std::to_string(samples) + "x" +
                          std::to_string(width) + " must be positive");
    }
    Rng rng{derive_seed(seed, "calib"), 0};
    return gaussian_fill(rng, samples, width, 1.0);
}

namespace {

void push_u32_le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void push_f32_le(std::string& out, float f) {
    uint32_t u;
    std::memcpy(&u, &f, 4);
    push_u32_le(out, u);
}

uint32_t read_u32_le(const std::string& buf, size_t off) {
    return static_cast<uint32_t>(static_cast<uint8_t>(buf[off])) |
           (static_cast<uint32_t>(static_cast<uint8_t>(buf[off + 1])) << 8) |
           (static_cast<uint32_t>(static_cast<uint8_t>(buf[off + 2])) << 16) |
           (static_cast<uint32_t>(static_cast<uint8_t>(buf[off + 3])) << 24);
}

float read_f32_le(const std::string& buf, size_t off) {
    uint32_t u = read_u32_le(buf, off);
    float f;
    std::memcpy(&f, &u, 4);
    return f;
}

constexpr char kMagic[8] = {'L', 'O', 'S', 'A', 'C', 'K', 'P', 'T'};

struct NamedTensor {
    std::string name;
    const Matrix* mat;
};

void write_container(const std::string& path, const std::vector<NamedTensor>& tensors) {
    nlohmann::json manifest;
    manifest["tensors"] = nlohmann::json::array();
    uint64_t offset = 0;
    for (const NamedTensor& t : tensors) {
        uint64_t nbytes = static_cast<uint64_t>(t.mat->data.size()) * 4;
        nlohmann::json e;
        e["name"] = t.name;
        e["shape"] = {t.mat->rows, t.mat->cols};
        e["dtype"] = "f32";
        e["offset"] = offset;
        e["nbytes"] = nbytes;
        manifest["tensors"].push_back(std::move(e));
        offset += nbytes;
    }
    std::string mjson = manifest.dump();

    std::string out;
    out.reserve(8 + 4 + mjson.size() + offset);
    out.append(kMagic, 8);
    push_u32_le(out, static_cast<uint32_t>(mjson.size()));
    out += mjson;
    for (const NamedTensor& t : tensors) {
        for (double v : t.mat->data) push_f32_le(out, static_cast<float>(v));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open " + path + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) throw io_error("write failed for " + path);
}

struct LoadedTensor {
    std::string name;
    Matrix mat;
};

std::vector<LoadedTensor> read_container(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (buf.size() < 12) throw io_error(path + ": truncated header");
    if (std::memcmp(buf.data(), kMagic, 8) != 0) {
        throw io_error(path + ": bad magic, not a checkpoint container");
    }
    uint32_t mlen = read_u32_le(buf, 8);
    if (buf.size() < 12 + static_cast<size_t>(mlen)) {
        throw io_error(path + ": truncated manifest");
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(buf.substr(12, mlen));
    } catch (const nlohmann::json::exception& e) {
        throw io_error(path + ": manifest is not valid JSON: " + e.what());
    }
    if (!manifest.contains("tensors") || !manifest["tensors"].is_array()) {
        throw io_error(path + ": manifest has no tensor list");
    }
    size_t blob_base = 12 + static_cast<size_t>(mlen);
    std::vector<LoadedTensor> out;
    for (const auto& e : manifest["tensors"]) {
        LoadedTensor t;
        try {
            t.name = e.at("name").get<std::string>();
            std::string dtype = e.at("dtype").get<std::string>();
            if (dtype != "f32") {
                throw io_error(path + ": tensor " + t.name + " has unsupported dtype " + dtype);
            }
            auto shape = e.at("shape");
            if (!shape.is_array() || shape.size() != 2) {
                throw io_error(path + ": tensor " + t.name + " shape must have 2 entries");
            }
            int rows = shape[0].get<int>();
            int cols = shape[1].get<int>();
            if (rows < 0 || cols < 0) {
                throw io_error(path + ": tensor " + t.name + " has negative shape");
            }
            uint64_t offset = e.at("offset").get<uint64_t>();
            uint64_t nbytes = e.at("nbytes").get<uint64_t>();
            uint64_t expect = static_cast<uint64_t>(rows) * static_cast<uint64_t>(cols) * 4;
            if (nbytes != expect) {
                throw io_error(path + ": tensor " + t.name + " declares " +
                               std::to_string(nbytes) + " bytes but shape needs " +
                               std::to_string(expect));
            }
            if (blob_base + offset + nbytes > buf.size()) {
                throw io_error(path + ": tensor " + t.name + " data is truncated");
            }
            t.mat = Matrix(rows, cols);
            for (size_t i = 0; i < t.mat.data.size(); ++i) {
                t.mat.data[i] =
                    static_cast<double>(read_f32_le(buf, blob_base + offset + i * 4));
            }
        } catch (const nlohmann::json::exception& ex) {
            throw io_error(path + ": malformed tensor entry: " + ex.what());
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::vector<NamedTensor> tensors;
    for (const Layer& l : ckpt.stack.layers) {
        tensors.push_back({l.name + ".weight", &l.weight});
    }
    // Masks and adapters follow the weights, grouped per layer in stack order.
    std::vector<Matrix> mask_mats;
    mask_mats.reserve(ckpt.masks.size());
    for (const Layer& l : ckpt.stack.layers) {
        auto mit = ckpt.masks.find(l.name);
        if (mit != ckpt.masks.end()) {
            Matrix mm(mit->second.rows, mit->second.cols);
            for (size_t i = 0; i < mm.data.size(); ++i) {
                mm.data[i] = mit->second.bits[i] ? 1.0 : 0.0;
            }
            mask_mats.push_back(std::move(mm));
            tensors.push_back({l.name + ".mask", &mask_mats.back()});
        }
        auto ait = ckpt.adapters.find(l.name);
        if (ait != ckpt.adapters.end()) {
            tensors.push_back({l.name + ".B", &ait->second.b});
            tensors.push_back({l.name + ".A", &ait->second.a});
        }
    }
    write_container(path, tensors);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::vector<LoadedTensor> tensors = read_container(path);
    Checkpoint ckpt;
    std::map<std::string, Matrix> bs, as;
    for (LoadedTensor& t : tensors) {
        size_t dot = t.name.rfind('.');
        if (dot == std::string::npos || dot == 0) {
            throw io_error(path + ": tensor name " + t.name + " has no layer prefix");
        }
        std::string layer = t.name.substr(0, dot);
        std::string kind = t.name.substr(dot + 1);
        if (kind == "weight") {
            ckpt.stack.layers.push_back({layer, std::move(t.mat)});
        } else if (kind == "mask") {
            Mask m(t.mat.rows, t.mat.cols, 0);
            for (size_t i = 0; i < t.mat.data.size(); ++i) {
                double v = t.mat.data[i];
                if (v != 0.0 && v != 1.0) {
                    throw io_error(path + ": mask " + t.name + " holds " + std::to_string(v) +
                                   ", expected 0 or 1");
                }
                m.bits[i] = v == 1.0 ? 1 : 0;
            }
            m.recount();
            ckpt.masks.emplace(layer, std::move(m));
        } else if (kind == "B") {
            bs.emplace(layer, std::move(t.mat));
        } else if (kind == "A") {
            as.emplace(layer, std::move(t.mat));
        } else {
            throw io_error(path + ": unexpected tensor " + t.name);
        }
    }
    for (auto& [layer, b] : bs) {
        auto ait = as.find(layer);
        if (ait == as.end()) {
            throw io_error(path + ": adapter " + layer + " has B but no A");
        }
        if (b.cols != ait->second.rows) {
            throw io_error(path + ": adapter " + layer + " rank mismatch, B is " + shape_str(b) +
                           " but A is " + shape_str(ait->second));
        }
        Adapter ad;
        ad.rank = b.cols;
        ad.b = std::move(b);
        ad.a = std::move(ait->second);
        ckpt.adapters.emplace(layer, std::move(ad));
    }
    for (auto& [layer, a] : as) {
        if (bs.find(layer) == bs.end()) {
            throw io_error(path + ": adapter " + layer + " has A but no B");
        }
        (void)a;
    }
    if (ckpt.stack.layers.empty()) {
        throw io_error(path + ": no weight tensors");
    }
    for (const Layer& l : ckpt.stack.layers) {
        auto mit = ckpt.masks.find(l.name);
        if (mit != ckpt.masks.end() &&
            (mit->second.rows != l.weight.rows || mit->second.cols != l.weight.cols)) {
            throw io_error(path + ": mask for " + l.name + " is " +
                           std::to_string(mit->second.rows) + "x" +
                           std::to_string(mit->second.cols) + " but weight is " +
                           shape_str(l.weight));
        }
        auto ait = ckpt.adapters.find(l.name);
        if (ait != ckpt.adapters.end() &&
            (ait->second.b.rows != l.weight.rows || ait->second.a.cols != l.weight.cols)) {
            throw io_error(path + ": adapter for " + l.name + " does not match weight " +
                           shape_str(l.weight));
        }
    }
    for (const auto& [layer, m] : ckpt.masks) {
        bool found = false;
        for (const Layer& l : ckpt.stack.layers) found = found || l.name == layer;
        if (!found) throw io_error(path + ": mask for unknown layer " + layer);
    }
    for (const auto& [layer, ad] : ckpt.adapters) {
        (void)ad;
        bool found = false;
        for (const Layer& l : ckpt.stack.layers) found = found || l.name == layer;
        if (!found) throw io_error(path + ": adapter for unknown layer " + layer);
    }
    try {
        ckpt.stack.validate_chain();
    } catch (const shape_error& e) {
        throw io_error(path + ": " + e.what());
    }
    return ckpt;
}

void save_calib(const std::string& path, const Matrix& calib) {
    std::vector<NamedTensor> tensors{{"calib.inputs", &calib}};
    write_container(path, tensors);
}

Matrix load_calib(const std::string& path) {
    std::vector<LoadedTensor> tensors = read_container(path);
    if (tensors.size() != 1 || tensors[0].name != "calib.inputs") {
        throw io_error(path + ": expected a single calib.inputs tensor");
    }
    return std::move(tensors[0].mat);
}

}  // namespace losa
