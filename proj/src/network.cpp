#include "r3/network.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "r3/rng.hpp"

namespace r3::net {

namespace {

constexpr Index kChunk = 4096;
constexpr std::array<char, 4> kMagic{'R', '3', 'N', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void validate(const NetworkSpec& spec) {
    if (spec.input_dim < 1) throw UsageError("network input_dim must be >= 1");
    if (spec.hidden_width < 1) throw UsageError("network hidden_width must be >= 1");
    if (spec.hidden_depth < 1) throw UsageError("network hidden_depth must be >= 1");
    if (spec.embedding.kind == Embedding::Kind::periodic) {
        if (!(spec.embedding.period > 0.0)) throw UsageError("periodic embedding needs period > 0");
        if (spec.embedding.harmonics < 1) throw UsageError("periodic embedding needs >= 1 harmonic");
        if (spec.embedding.axis < 0 || spec.embedding.axis >= spec.input_dim)
            throw UsageError("periodic embedding axis out of range");
    }
}

int feature_count(const NetworkSpec& spec) {
    if (spec.embedding.kind == Embedding::Kind::none) return spec.input_dim;
    return spec.input_dim - 1 + 2 * spec.embedding.harmonics;
}

Index parameter_count(const NetworkSpec& spec) {
    validate(spec);
    const Index f = feature_count(spec);
    const Index w = spec.hidden_width;
    Index n = f * w + w;                      // first hidden layer
    n += (spec.hidden_depth - 1) * (w * w + w);  // remaining hidden layers
    n += w + 1;                                // scalar output
    if (spec.variant == Variant::modified) n += 2 * (f * w + w);
    return n;
}

std::vector<double> periodic_embed(double x, double period, int harmonics) {
    if (!(period > 0.0)) throw UsageError("periodic_embed: period must be positive");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(2 * harmonics));
    for (int k = 1; k <= harmonics; ++k) {
        const double w = 2.0 * std::numbers::pi * k / period;
        // Reduce the phase first so that x and x + period map to bit-identical
        // features.
        const double phase = std::remainder(x, period / k) * w;
        out.push_back(std::cos(phase));
        out.push_back(std::sin(phase));
    }
    return out;
}

ad::Var JetOutput::channel(int c) const {
    if (c < 0 || c >= layout.channels()) throw UsageError("jet channel out of range");
    return stacked.tape()->cols(stacked, c * batch, batch);
}

FieldNetwork::FieldNetwork(NetworkSpec spec, Vector theta) : spec_(spec), theta_(std::move(theta)) {
    validate(spec_);
    if (theta_.size() != net::parameter_count(spec_))
        throw UsageError("parameter vector length does not match network spec");
    if (!theta_.allFinite()) throw UsageError("network parameters must be finite");
}

std::vector<FieldNetwork::Dense> FieldNetwork::layout() const {
    std::vector<Dense> layers;
    Index at = 0;
    auto add = [&](Index rows, Index cols) {
        layers.push_back({at, rows, cols, at + rows * cols});
        at += rows * cols + rows;
    };
    const Index f = feature_count(spec_);
    const Index w = spec_.hidden_width;
    if (spec_.variant == Variant::modified) {
        add(w, f);  // encoder U
        add(w, f);  // encoder V
    }
    add(w, f);
    for (int l = 1; l < spec_.hidden_depth; ++l) add(w, w);
    add(1, w);
    return layers;
}

FieldNetwork FieldNetwork::init(const NetworkSpec& spec) {
    validate(spec);
    Rng rng(spec.seed);
    Vector theta = Vector::Zero(net::parameter_count(spec));
    FieldNetwork shell;
    shell.spec_ = spec;
    for (const Dense& d : shell.layout()) {
        const double limit = std::sqrt(6.0 / static_cast<double>(d.rows + d.cols));
        for (Index k = 0; k < d.rows * d.cols; ++k) theta(d.w_offset + k) = rng.uniform(-limit, limit);
    }
    return FieldNetwork(spec, std::move(theta));
}

ad::Var FieldNetwork::input_jets(ad::Tape& tape, const Points& points, const ad::JetLayout& jl) const {
    const Index batch = points.cols();
    const int dim = spec_.input_dim;
    const int features = feature_count(spec_);
    Matrix a = Matrix::Zero(features, jl.channels() * batch);
    auto blk = [&](int c) { return a.middleCols(c * batch, batch); };

    int row = 0;
    const bool periodic = spec_.embedding.kind == Embedding::Kind::periodic;
    if (periodic) {
        const int axis = spec_.embedding.axis;
        const double period = spec_.embedding.period;
        for (Index p = 0; p < batch; ++p) {
            const std::vector<double> f = periodic_embed(points(axis, p), period, spec_.embedding.harmonics);
            for (int k = 1; k <= spec_.embedding.harmonics; ++k) {
                const double w = 2.0 * std::numbers::pi * k / period;
                const double c = f[static_cast<std::size_t>(2 * (k - 1))];
                const double s = f[static_cast<std::size_t>(2 * (k - 1) + 1)];
                const int rc = 2 * (k - 1), rs = rc + 1;
                blk(0)(rc, p) = c;
                blk(0)(rs, p) = s;
                if (jl.order() >= 1) {
                    blk(jl.first(axis))(rc, p) = -w * s;
                    blk(jl.first(axis))(rs, p) = w * c;
                }
                if (jl.order() >= 2) {
                    blk(jl.second(axis, axis))(rc, p) = -w * w * c;
                    blk(jl.second(axis, axis))(rs, p) = -w * w * s;
                }
            }
        }
        row = 2 * spec_.embedding.harmonics;
    }
    for (int i = 0; i < dim; ++i) {
        if (periodic && i == spec_.embedding.axis) continue;
        blk(0).row(row) = points.row(i);
        if (jl.order() >= 1) blk(jl.first(i)).row(row).setOnes();
        ++row;
    }
    return tape.constant(std::move(a));
}

JetOutput FieldNetwork::forward(ad::Tape& tape, const Points& points, int order) const {
    if (points.rows() != spec_.input_dim)
        throw UsageError("point dimension " + std::to_string(points.rows()) + " does not match network input_dim " +
                         std::to_string(spec_.input_dim));
    const ad::JetLayout jl(spec_.input_dim, order);
    const Index batch = points.cols();
    const std::span<const double> theta(theta_.data(), static_cast<std::size_t>(theta_.size()));
    const std::vector<Dense> layers = layout();

    auto dense = [&](const Dense& d, ad::Var input) {
        ad::Var w = tape.parameter(theta, d.w_offset, d.rows, d.cols);
        ad::Var b = tape.parameter(theta, d.b_offset, d.rows, 1);
        return tape.jet_affine(w, input, b, batch);
    };
    auto finite = [&](ad::Var v, int layer) {
        if (!v.value().allFinite())
            throw NumericOverflow("non-finite activation in layer " + std::to_string(layer), layer);
    };

    const ad::Var features = input_jets(tape, points, jl);
    std::size_t next = 0;
    ad::Var u, v_minus_u;
    if (spec_.variant == Variant::modified) {
        u = tape.jet_activate(dense(layers[next++], features), spec_.activation, jl, batch);
        ad::Var v = tape.jet_activate(dense(layers[next++], features), spec_.activation, jl, batch);
        finite(u, 0);
        finite(v, 0);
        v_minus_u = tape.sub(v, u);
    }
    ad::Var h = features;
    for (int l = 0; l < spec_.hidden_depth; ++l) {
        ad::Var z = tape.jet_activate(dense(layers[next++], h), spec_.activation, jl, batch);
        if (spec_.variant == Variant::modified) {
            // (1 - z) * u + z * v
            h = tape.add(u, tape.jet_mul(z, v_minus_u, jl, batch));
        } else {
            h = z;
        }
        finite(h, l);
    }
    ad::Var out = dense(layers[next], h);
    finite(out, spec_.hidden_depth);
    return JetOutput{out, jl, batch};
}

ad::JetValue FieldNetwork::eval_jet(std::span<const double> point, int order) const {
    if (static_cast<int>(point.size()) != spec_.input_dim) throw UsageError("point dimension mismatch");
    Points p(spec_.input_dim, 1);
    for (int i = 0; i < spec_.input_dim; ++i) p(i, 0) = point[static_cast<std::size_t>(i)];
    ad::Tape tape;
    tape.set_grad_enabled(false);
    const JetOutput out = forward(tape, p, order);
    const Matrix& s = out.stacked.value();
    ad::JetValue jet;
    jet.value = s(0, 0);
    const int dim = spec_.input_dim;
    if (order >= 1) {
        jet.d1.resize(dim);
        for (int i = 0; i < dim; ++i) jet.d1(i) = s(0, out.layout.first(i));
    }
    if (order >= 2) {
        jet.d2.resize(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) jet.d2(i, j) = s(0, out.layout.second(i, j));
    }
    return jet;
}

double FieldNetwork::operator()(std::span<const double> point) const { return eval_jet(point, 0).value; }

Vector FieldNetwork::values(const Points& points) const {
    Vector out(points.cols());
    for (Index start = 0; start < points.cols(); start += kChunk) {
        const Index n = std::min(kChunk, points.cols() - start);
        ad::Tape tape;
        tape.set_grad_enabled(false);
        const JetOutput jo = forward(tape, points.middleCols(start, n), 0);
        out.segment(start, n) = jo.stacked.value().row(0).transpose();
    }
    return out;
}

ad::JetValue eval_jet(const FieldNetwork& net, std::span<const double> point, int order) {
    return net.eval_jet(point, order);
}

namespace {

void put_u32(std::ofstream& os, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b.data(), 4);
}

void put_u64(std::ofstream& os, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xffu);
    os.write(b.data(), 8);
}

std::uint64_t get_bytes(std::ifstream& is, int n) {
    std::array<unsigned char, 8> b{};
    is.read(reinterpret_cast<char*>(b.data()), n);
    if (!is) throw IoError("checkpoint truncated");
    std::uint64_t v = 0;
    for (int i = n - 1; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

}  // namespace

void save_checkpoint(const FieldNetwork& net, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path.string());
    const NetworkSpec& s = net.spec();
    os.write(kMagic.data(), 4);
    put_u32(os, kFormatVersion);
    put_u32(os, static_cast<std::uint32_t>(s.input_dim));
    put_u32(os, static_cast<std::uint32_t>(s.hidden_width));
    put_u32(os, static_cast<std::uint32_t>(s.hidden_depth));
    put_u32(os, static_cast<std::uint32_t>(s.activation));
    put_u32(os, static_cast<std::uint32_t>(s.variant));
    put_u32(os, static_cast<std::uint32_t>(s.embedding.kind));
    put_u32(os, static_cast<std::uint32_t>(s.embedding.harmonics));
    put_u32(os, static_cast<std::uint32_t>(s.embedding.axis));
    put_u64(os, std::bit_cast<std::uint64_t>(s.embedding.period));
    put_u64(os, s.seed);
    put_u64(os, static_cast<std::uint64_t>(net.theta().size()));
    for (Index i = 0; i < net.theta().size(); ++i) put_u64(os, std::bit_cast<std::uint64_t>(net.theta()(i)));
    os.flush();
    if (!os) throw IoError("failed writing checkpoint: " + path.string());
}

FieldNetwork load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    std::array<char, 4> magic{};
    is.read(magic.data(), 4);
    if (!is || magic != kMagic) throw IoError("not a network checkpoint: " + path.string());
    if (get_bytes(is, 4) != kFormatVersion) throw IoError("unsupported checkpoint version");
    NetworkSpec s;
    s.input_dim = static_cast<int>(get_bytes(is, 4));
    s.hidden_width = static_cast<int>(get_bytes(is, 4));
    s.hidden_depth = static_cast<int>(get_bytes(is, 4));
    s.activation = static_cast<ad::Activation>(get_bytes(is, 4));
    s.variant = static_cast<Variant>(get_bytes(is, 4));
    s.embedding.kind = static_cast<Embedding::Kind>(get_bytes(is, 4));
    s.embedding.harmonics = static_cast<int>(get_bytes(is, 4));
    s.embedding.axis = static_cast<int>(get_bytes(is, 4));
    s.embedding.period = std::bit_cast<double>(get_bytes(is, 8));
    s.seed = get_bytes(is, 8);
    const auto n = static_cast<Index>(get_bytes(is, 8));
    if (n != net::parameter_count(s)) throw IoError("checkpoint parameter count does not match its spec");
    Vector theta(n);
    for (Index i = 0; i < n; ++i) theta(i) = std::bit_cast<double>(get_bytes(is, 8));
    return FieldNetwork(s, std::move(theta));
}

}  // namespace r3::net
