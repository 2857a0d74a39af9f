#include "mufmt/inr.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "mufmt/io.hpp"

namespace mufmt {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

Vec3 EncodingConfig::normalize(const Vec3& r) const
{
    Vec3 ext = box.extent();
    return (2.0 * (r - box.lo).array() / ext.array() - 1.0).matrix();
}

void EncodingConfig::validate() const
{
    if (bands < 1) throw std::invalid_argument("encoding needs at least one frequency band");
    if (!(box.extent().minCoeff() > 0.0)) throw std::invalid_argument("encoding box is degenerate");
}

Eigen::VectorXd encode_scalar(double p, int bands)
{
    Eigen::VectorXd out(2 * bands);
    double freq = kPi;
    for (int k = 0; k < bands; ++k) {
        out[2 * k] = std::sin(freq * p);
        out[2 * k + 1] = std::cos(freq * p);
        freq *= 2.0;
    }
    return out;
}

Eigen::VectorXd encode(const EncodingConfig& cfg, const Vec3& r)
{
    Vec3 p = cfg.normalize(r);
    Eigen::VectorXd out(cfg.dim());
    for (int a = 0; a < 3; ++a) out.segment(2 * cfg.bands * a, 2 * cfg.bands) = encode_scalar(p[a], cfg.bands);
    return out;
}

Eigen::MatrixXd encode_batch(const EncodingConfig& cfg, const std::vector<Vec3>& coords)
{
    Eigen::MatrixXd out(cfg.dim(), static_cast<Eigen::Index>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = encode(cfg, coords[i]);
    return out;
}

void Architecture::validate() const
{
    if (hidden_layers < 1 || hidden_width < 1 || head_width < 1)
        throw std::invalid_argument("network layers must have positive sizes");
    if (skip_layer < 1 || skip_layer > hidden_layers)
        throw std::invalid_argument("skip layer must be a hidden layer index in [1, hidden_layers]");
    if (!(output_scale > 0.0)) throw std::invalid_argument("output scale must be positive");
}

NeuralField NeuralField::create(const EncodingConfig& enc, const Architecture& arch, const InitOptions& init)
{
    enc.validate();
    arch.validate();
    NeuralField nf;
    nf.enc_ = enc;
    nf.arch_ = arch;

    std::size_t offset = 0;
    auto add = [&](int in, int out) {
        LayerShape s;
        s.in = in;
        s.out = out;
        s.weight_offset = offset;
        offset += static_cast<std::size_t>(in) * static_cast<std::size_t>(out);
        s.bias_offset = offset;
        offset += static_cast<std::size_t>(out);
        nf.shapes_.push_back(s);
    };
    const int d = enc.dim();
    for (int h = 1; h <= arch.hidden_layers; ++h) {
        int in = h == 1 ? d : arch.hidden_width;
        if (h == arch.skip_layer && h != 1) in += d;
        add(in, arch.hidden_width);
    }
    add(arch.hidden_width, arch.head_width);
    add(arch.head_width, 1);
    nf.params_.assign(offset, 0.0);

    std::mt19937_64 rng(init.seed);
    for (std::size_t l = 0; l < nf.shapes_.size(); ++l) {
        bool output = l + 1 == nf.shapes_.size();
        if (output && init.zero_output_layer) continue;
        const auto& s = nf.shapes_[l];
        double bound = std::sqrt(6.0 / s.in);
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t k = 0; k < static_cast<std::size_t>(s.in) * static_cast<std::size_t>(s.out); ++k)
            nf.params_[s.weight_offset + k] = dist(rng);
    }
    return nf;
}

Eigen::Map<const Eigen::MatrixXd> NeuralField::weight(std::size_t l) const
{
    const auto& s = shapes_[l];
    return {params_.data() + s.weight_offset, s.out, s.in};
}

Eigen::Map<const Eigen::VectorXd> NeuralField::bias(std::size_t l) const
{
    const auto& s = shapes_[l];
    return {params_.data() + s.bias_offset, s.out};
}

Eigen::Map<Eigen::MatrixXd> NeuralField::weight(std::size_t l)
{
    const auto& s = shapes_[l];
    return {params_.data() + s.weight_offset, s.out, s.in};
}

Eigen::Map<Eigen::VectorXd> NeuralField::bias(std::size_t l)
{
    const auto& s = shapes_[l];
    return {params_.data() + s.bias_offset, s.out};
}

std::string NeuralField::to_text() const
{
    std::string out = "neuralfield v1\n";
    out += "bands " + std::to_string(enc_.bands) + "\n";
    out += "box " + format_double(enc_.box.lo.x()) + " " + format_double(enc_.box.lo.y()) + " " +
           format_double(enc_.box.lo.z()) + " " + format_double(enc_.box.hi.x()) + " " +
           format_double(enc_.box.hi.y()) + " " + format_double(enc_.box.hi.z()) + "\n";
    out += "architecture " + std::to_string(arch_.hidden_layers) + " " + std::to_string(arch_.hidden_width) + " " +
           std::to_string(arch_.head_width) + " " + std::to_string(arch_.skip_layer) + " " +
           format_double(arch_.output_scale) + "\n";
    out += "parameters " + std::to_string(params_.size()) + "\n";
    for (double v : params_) {
        out += format_double(v);
        out += '\n';
    }
    return out;
}

NeuralField NeuralField::from_text(const std::string& text)
{
    auto tok = split_whitespace(text);
    std::size_t k = 0;
    auto expect = [&](std::string_view word) {
        if (k >= tok.size() || tok[k] != word)
            throw FormatError("checkpoint: expected '" + std::string(word) + "'");
        ++k;
    };
    auto next = [&]() {
        if (k >= tok.size()) throw FormatError("checkpoint: truncated");
        return tok[k++];
    };
    expect("neuralfield");
    expect("v1");
    expect("bands");
    EncodingConfig enc;
    enc.bands = static_cast<int>(parse_integer(next()));
    expect("box");
    for (int a = 0; a < 3; ++a) enc.box.lo[a] = parse_double(next());
    for (int a = 0; a < 3; ++a) enc.box.hi[a] = parse_double(next());
    expect("architecture");
    Architecture arch;
    arch.hidden_layers = static_cast<int>(parse_integer(next()));
    arch.hidden_width = static_cast<int>(parse_integer(next()));
    arch.head_width = static_cast<int>(parse_integer(next()));
    arch.skip_layer = static_cast<int>(parse_integer(next()));
    arch.output_scale = parse_double(next());
    expect("parameters");
    auto count = static_cast<std::size_t>(parse_integer(next()));
    NeuralField nf = create(enc, arch, {});
    if (count != nf.parameter_count())
        throw FormatError("checkpoint: parameter count " + std::to_string(count) + " does not match architecture (" +
                          std::to_string(nf.parameter_count()) + ")");
    if (tok.size() - k != count) throw FormatError("checkpoint: wrong number of parameter values");
    for (std::size_t i = 0; i < count; ++i) nf.params_[i] = parse_double(next());
    return nf;
}

void NeuralField::save(const std::filesystem::path& path) const { write_text_file(path, to_text()); }

NeuralField NeuralField::load(const std::filesystem::path& path) { return from_text(read_text_file(path)); }

double softplus(double z)
{
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

namespace {

double sigmoid(double z)
{
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

Eigen::VectorXd field_forward_encoded(const NeuralField& nf, const Eigen::MatrixXd& encoded, Tape* tape)
{
    const auto& arch = nf.architecture();
    if (encoded.rows() != nf.encoding().dim()) throw std::invalid_argument("field_forward: encoding width mismatch");
    const std::size_t n_layers = nf.layers().size();
    const std::size_t skip = static_cast<std::size_t>(arch.skip_layer - 1);

    Tape local;
    Tape& t = tape ? *tape : local;
    t.input = encoded;
    t.pre.assign(n_layers, {});
    t.post.assign(n_layers - 1, {});

    Eigen::MatrixXd x;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const Eigen::MatrixXd* in = l == 0 ? &encoded : &t.post[l - 1];
        Eigen::MatrixXd cat;
        if (l == skip && l != 0) {
            cat.resize(in->rows() + encoded.rows(), encoded.cols());
            cat.topRows(in->rows()) = *in;
            cat.bottomRows(encoded.rows()) = encoded;
            in = &cat;
        }
        t.pre[l].noalias() = nf.weight(l) * (*in);
        t.pre[l].colwise() += nf.bias(l);
        if (l + 1 < n_layers) t.post[l] = t.pre[l].cwiseMax(0.0);
    }
    const Eigen::MatrixXd& z = t.pre.back();
    Eigen::VectorXd values(z.cols());
    for (Eigen::Index b = 0; b < z.cols(); ++b) values[b] = arch.output_scale * softplus(z(0, b));
    if (!tape) t = Tape{};
    return values;
}

Eigen::VectorXd field_forward(const NeuralField& nf, const std::vector<Vec3>& coords, Tape* tape)
{
    return field_forward_encoded(nf, encode_batch(nf.encoding(), coords), tape);
}

std::vector<double> field_backward(const NeuralField& nf, const Tape& tape, const Eigen::VectorXd& dL_dvalues)
{
    const std::size_t n_layers = nf.layers().size();
    if (tape.pre.size() != n_layers || static_cast<Eigen::Index>(tape.batch()) != dL_dvalues.size())
        throw std::invalid_argument("field_backward: tape does not match network or batch");
    const auto& arch = nf.architecture();
    const std::size_t skip = static_cast<std::size_t>(arch.skip_layer - 1);

    std::vector<double> grads(nf.parameter_count(), 0.0);
    auto gw = [&](std::size_t l) {
        const auto& s = nf.layers()[l];
        return Eigen::Map<Eigen::MatrixXd>(grads.data() + s.weight_offset, s.out, s.in);
    };
    auto gb = [&](std::size_t l) {
        const auto& s = nf.layers()[l];
        return Eigen::Map<Eigen::VectorXd>(grads.data() + s.bias_offset, s.out);
    };

    // d value / d z_out = scale * sigmoid(z_out)
    Eigen::MatrixXd delta(1, dL_dvalues.size());
    for (Eigen::Index b = 0; b < dL_dvalues.size(); ++b)
        delta(0, b) = dL_dvalues[b] * arch.output_scale * sigmoid(tape.pre.back()(0, b));

    for (std::size_t l = n_layers; l-- > 0;) {
        const bool has_skip = l == skip && l != 0;
        const Eigen::MatrixXd& prev = l == 0 ? tape.input : tape.post[l - 1];
        if (has_skip) {
            const Eigen::Index h = prev.rows();
            gw(l).leftCols(h).noalias() = delta * prev.transpose();
            gw(l).rightCols(tape.input.rows()).noalias() = delta * tape.input.transpose();
        } else {
            gw(l).noalias() = delta * prev.transpose();
        }
        // Fixed summation order; Eigen's vectorized redux depends on alignment.
        auto bias_grad = gb(l);
        bias_grad.setZero();
        for (Eigen::Index b = 0; b < delta.cols(); ++b) bias_grad += delta.col(b);
        if (l == 0) break;
        Eigen::MatrixXd back;
        if (has_skip)
            back.noalias() = nf.weight(l).leftCols(prev.rows()).transpose() * delta;
        else
            back.noalias() = nf.weight(l).transpose() * delta;
        // Rectifier derivative of the previous layer (0 at the kink).
        delta = (tape.pre[l - 1].array() > 0.0).select(back, 0.0);
    }
    return grads;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr)
{
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient size mismatch");
    if (state.m.size() != params.size()) {
        if (state.step != 0 || !state.m.empty()) throw std::invalid_argument("adam_step: state size mismatch");
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    ++state.step;
    const double b1 = state.beta1, b2 = state.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

}  // namespace mufmt
