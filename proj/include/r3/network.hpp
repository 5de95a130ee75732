#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "r3/autodiff.hpp"

namespace r3::net {

using ad::Index;
using ad::Matrix;
using ad::Vector;

// Points are stored column-wise: one column per point, one row per input
// coordinate.
using Points = Eigen::MatrixXd;

enum class Variant : std::uint32_t { plain = 0, modified = 1 };

struct Embedding {
    enum class Kind : std::uint32_t { none = 0, periodic = 1 };
    Kind kind = Kind::none;
    double period = 1.0;
    int harmonics = 1;
    int axis = 0;  // coordinate that is encoded; the others pass through raw

    static Embedding none() { return {}; }
    static Embedding periodic(double period, int harmonics = 1, int axis = 0) {
        return {Kind::periodic, period, harmonics, axis};
    }
    bool operator==(const Embedding&) const = default;
};

struct NetworkSpec {
    int input_dim = 2;
    int hidden_width = 50;
    int hidden_depth = 4;
    ad::Activation activation = ad::Activation::tanh;
    Variant variant = Variant::plain;
    Embedding embedding;
    std::uint64_t seed = 0;

    bool operator==(const NetworkSpec&) const = default;
};

void validate(const NetworkSpec& spec);
Index parameter_count(const NetworkSpec& spec);
// Width of the first dense layer's input after embedding.
int feature_count(const NetworkSpec& spec);

// [cos(2 pi k x / period), sin(2 pi k x / period)] for k = 1..harmonics.
std::vector<double> periodic_embed(double x, double period, int harmonics);

// Output jets of a batched forward pass recorded on a tape.
struct JetOutput {
    ad::Var stacked;  // 1 x (channels * batch)
    ad::JetLayout layout;
    Index batch;

    ad::Var channel(int c) const;
    ad::Var value() const { return channel(0); }
    ad::Var d(int i) const { return channel(layout.first(i)); }
    ad::Var dd(int i, int j) const { return channel(layout.second(i, j)); }
};

class FieldNetwork {
public:
    FieldNetwork() = default;
    FieldNetwork(NetworkSpec spec, Vector theta);

    // Glorot-uniform weights, zero biases, drawn from spec.seed.
    static FieldNetwork init(const NetworkSpec& spec);

    const NetworkSpec& spec() const noexcept { return spec_; }
    const Vector& theta() const noexcept { return theta_; }
    Vector& theta() noexcept { return theta_; }
    Index parameter_count() const noexcept { return theta_.size(); }

    // Records the jet forward pass for all columns of `points` on `tape`.
    // Throws NumericOverflow naming the first layer whose output is not finite.
    JetOutput forward(ad::Tape& tape, const Points& points, int order) const;

    // Single point: value and input derivatives up to `order`.
    ad::JetValue eval_jet(std::span<const double> point, int order) const;
    double operator()(std::span<const double> point) const;

    // Values only, evaluated in chunks to bound memory.
    Vector values(const Points& points) const;

private:
    struct Dense {
        Index w_offset, rows, cols, b_offset;
    };
    std::vector<Dense> layout() const;
    ad::Var input_jets(ad::Tape& tape, const Points& points, const ad::JetLayout& layout) const;

    NetworkSpec spec_;
    Vector theta_;
};

ad::JetValue eval_jet(const FieldNetwork& net, std::span<const double> point, int order);

// Flat binary checkpoint: magic, spec fields (little-endian), then theta as
// IEEE-754 doubles. Round-trips bit-exactly.
void save_checkpoint(const FieldNetwork& net, const std::filesystem::path& path);
FieldNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace r3::net
