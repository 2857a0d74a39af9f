#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mufmt/mesh.hpp"

namespace mufmt {

// Sinusoidal positional encoding over coordinates normalized to [-1, 1]
// inside `box`. Output is (gamma(x), gamma(y), gamma(z)) with
// gamma(p) = (sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^(L-1) pi p), cos(2^(L-1) pi p)).
struct EncodingConfig {
    int bands = 6;
    BoundingBox box;

    int dim() const { return 6 * bands; }
    Vec3 normalize(const Vec3& r) const;
    void validate() const;
};

Eigen::VectorXd encode(const EncodingConfig& cfg, const Vec3& r);
// One column per coordinate.
Eigen::MatrixXd encode_batch(const EncodingConfig& cfg, const std::vector<Vec3>& coords);
// Encoding of one already-normalized scalar coordinate (length 2L).
Eigen::VectorXd encode_scalar(double p, int bands);

struct Architecture {
    int hidden_layers = 8;
    int hidden_width = 512;
    int head_width = 128;
    int skip_layer = 4;  // 1-based hidden layer that also receives the encoding
    double output_scale = 1.0;

    void validate() const;
};

struct InitOptions {
    std::uint64_t seed = 0;
    bool zero_output_layer = true;
};

// Offsets of one dense layer inside the flat parameter buffer.
struct LayerShape {
    int in = 0;
    int out = 0;
    std::size_t weight_offset = 0;  // column-major out x in
    std::size_t bias_offset = 0;
};

// Per-layer activations recorded by field_forward.
struct Tape {
    Eigen::MatrixXd input;                      // d x B encodings
    std::vector<Eigen::MatrixXd> pre;           // per layer, out x B
    std::vector<Eigen::MatrixXd> post;          // per hidden/head layer, rectified
    std::size_t batch() const { return static_cast<std::size_t>(input.cols()); }
};

// Cθ(r) = scale * softplus(f(Γ(r))): hidden_layers rectified layers of
// hidden_width with the encoding concatenated into `skip_layer`, one rectified
// head layer of head_width, and a scalar output layer.
class NeuralField {
public:
    static NeuralField create(const EncodingConfig& enc, const Architecture& arch, const InitOptions& init = {});

    const EncodingConfig& encoding() const { return enc_; }
    const Architecture& architecture() const { return arch_; }
    const std::vector<LayerShape>& layers() const { return shapes_; }

    std::size_t parameter_count() const { return params_.size(); }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;
    Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
    Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);

    void set_output_scale(double s) { arch_.output_scale = s; }

    std::string to_text() const;
    static NeuralField from_text(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static NeuralField load(const std::filesystem::path& path);

private:
    EncodingConfig enc_;
    Architecture arch_;
    std::vector<LayerShape> shapes_;
    std::vector<double> params_;
};

double softplus(double z);

// Values for a batch of coordinates. The tape is filled when non-null.
Eigen::VectorXd field_forward(const NeuralField& nf, const std::vector<Vec3>& coords, Tape* tape = nullptr);
Eigen::VectorXd field_forward_encoded(const NeuralField& nf, const Eigen::MatrixXd& encoded, Tape* tape = nullptr);

// Gradient of sum_b dL_dvalues[b] * value[b] with respect to every parameter,
// laid out like NeuralField::parameters().
std::vector<double> field_backward(const NeuralField& nf, const Tape& tape, const Eigen::VectorXd& dL_dvalues);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Bias-corrected Adam update in place.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

}  // namespace mufmt
