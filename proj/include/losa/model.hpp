#pragma once

#include <map>
#include <string>
#include <vector>

#include "losa/adapters.hpp"
#include "losa/masks.hpp"
#include "losa/matrix.hpp"

namespace losa {

// One linear layer y = x * W^T with W of shape c_out x c_in.
struct Layer {
    std::string name;
    Matrix weight;
};

struct LayerStack {
    std::vector<Layer> layers;

    int depth() const { return static_cast<int>(layers.size()); }

    // Every layer's input width must equal the previous layer's output width.
    void validate_chain() const;
};

enum class Activation { relu, identity };

const char* activation_name(Activation a);

// Forward pass that records the input feature map of every layer.
// maps[i] is the input to layer i (maps[0] == inputs); outputs is the
// post-activation result of the last layer.
struct ForwardCapture {
    std::vector<Matrix> maps;
    Matrix outputs;
};

ForwardCapture forward_capture(const LayerStack& stack, const Matrix& inputs, Activation act);

// Random dense stack: dims has n_layers + 1 entries, layer i maps
// dims[i] -> dims[i+1] and is named "layer{i}". Weights draw from
// N(0, sigma^2) with a per-layer sub-seed.
LayerStack make_synthetic(int n_layers, const std::vector<int>& dims, uint64_t seed, double sigma);

// Calibration batch drawn from N(0, 1), samples x width.
Matrix make_synthetic_calib(int samples, int width, uint64_t seed);

// Serialized training state. Adapters and masks are keyed by layer name and
// may be absent (a dense checkpoint has weights only).
struct Checkpoint {
    LayerStack stack;
    std::map<std::string, Adapter> adapters;
    std::map<std::string, Mask> masks;
};

// Container layout: 8-byte magic "LOSACKPT", little-endian u32 manifest
// length, UTF-8 JSON manifest, then raw little-endian f32 tensor data.
// Manifest: {"tensors": [{"name", "shape", "dtype": "f32", "offset",
// "nbytes"}, ...]} with offsets relative to the end of the manifest.
// Tensor names are "{layer}.weight", "{layer}.mask", "{layer}.B",
// "{layer}.A"; masks hold 0.0/1.0. Layer order follows the order of
// ".weight" entries in the manifest. Math runs in f64; storage is f32,
// widened on load, so save -> load -> save is byte-identical.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Same container holding a single tensor "calib.inputs".
void save_calib(const std::string& path, const Matrix& calib);
Matrix load_calib(const std::string& path);

}  // namespace losa
