#pragma once

// Reverse-mode tape over dense matrices, plus batched forward propagation of
// truncated Taylor coefficients ("jets") of order <= 2 through network layers.
//
// A jet batch for B points in D input coordinates is stored as one matrix
// with the channels stacked side by side: columns [c*B, (c+1)*B) hold
// channel c. Channel 0 is the value, channels 1..D the first derivatives,
// followed by one channel per unordered pair (i <= j) of second derivatives.
// Stacking lets each dense layer run as a single GEMM over all channels.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "r3/errors.hpp"

namespace r3::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr int kMaxOrder = 2;

struct JetValue {
    double value = 0.0;
    Vector d1;  // one entry per input coordinate (empty when order < 1)
    Matrix d2;  // symmetric, D x D (empty when order < 2)
};

class JetLayout {
public:
    JetLayout(int dim, int order);

    int dim() const noexcept { return dim_; }
    int order() const noexcept { return order_; }
    int channels() const noexcept { return channels_; }

    static constexpr int value() noexcept { return 0; }
    int first(int i) const;
    int second(int i, int j) const;

private:
    int dim_;
    int order_;
    int channels_;
};

enum class Activation { tanh, sin, identity };

class Tape;

// Handle to a node on a tape. Cheap to copy; only valid while the tape lives
// and has not been cleared.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    double scalar() const;
    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    Tape* tape() const noexcept { return tape_; }
    int id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Records elementary matrix operations so that the gradient of a scalar node
// with respect to every registered parameter block can be replayed.
class Tape {
public:
    explicit Tape(Index parameter_count = 0);
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Index parameter_count() const noexcept { return parameter_count_; }
    void set_parameter_count(Index n) { parameter_count_ = n; }
    std::size_t size() const noexcept { return nodes_.size(); }
    bool empty() const noexcept { return nodes_.empty(); }
    void clear();

    // When disabled, parameters are recorded as constants: forward-only
    // evaluation without the memory cost of backward closures.
    void set_grad_enabled(bool enabled) noexcept { grad_enabled_ = enabled; }
    bool grad_enabled() const noexcept { return grad_enabled_; }

    // theta[offset .. offset + rows*cols) viewed column-major as rows x cols.
    Var parameter(std::span<const double> theta, Index offset, Index rows, Index cols);
    Var constant(Matrix value);
    Var constant(double value);

    const Matrix& value(Var v) const { return nodes_.at(check(v)).value; }

    // d(loss)/d(theta) for a 1x1 node. Does not modify the tape, so repeated
    // calls are bit-identical.
    Vector gradient(Var loss) const;

    // Elementwise ops. Binary ops accept equal shapes or a 1x1 operand.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double s);
    Var shift(Var a, double s);
    Var square(Var a);
    Var sqrt(Var a);
    Var tanh(Var a);
    Var sin(Var a);
    Var cos(Var a);
    Var exp(Var a);
    Var relu(Var a);

    Var matmul(Var a, Var b);
    Var sum(Var a);
    Var mean(Var a);
    Var cols(Var a, Index start, Index count);
    Var hcat(std::span<const Var> parts);

    // Jet-aware network ops; `batch` is the number of points B.
    Var jet_affine(Var weight, Var input, Var bias, Index batch);
    Var jet_activate(Var z, Activation act, const JetLayout& layout, Index batch);
    Var jet_mul(Var a, Var b, const JetLayout& layout, Index batch);

private:
    using Grads = std::vector<Matrix>;
    using Backward = std::function<void(const Tape&, int self, Grads&)>;

    struct Node {
        Matrix value;
        std::vector<int> inputs;
        std::vector<Matrix> aux;
        Backward backward;
        bool needs_grad = false;
        Index param_offset = -1;
    };

    int check(Var v) const;
    Var push(Matrix value, std::vector<int> inputs, Backward backward, std::vector<Matrix> aux = {});
    bool needs(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    template <typename Expr>
    static void accumulate(Grads& g, int id, const Eigen::MatrixBase<Expr>& delta);
    static void accumulate(Grads& g, int id, Matrix&& delta);
    Var unary(Var a, Matrix value, Matrix local_derivative);

    std::vector<Node> nodes_;
    Index parameter_count_;
    bool grad_enabled_ = true;
};

// Operator sugar so residual operators can be written once for double and Var.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double s);
Var operator+(double s, Var a);
Var operator-(Var a, double s);
Var operator-(double s, Var a);
Var operator*(Var a, double s);
Var operator*(double s, Var a);
Var operator/(Var a, double s);
Var sqrt(Var a);
Var tanh(Var a);
Var sin(Var a);
Var cos(Var a);
Var exp(Var a);
Var square(Var a);
Var relu(Var a);
Var sum(Var a);
Var mean(Var a);

inline double square(double x) { return x * x; }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// Gradient of the scalar `loss` recorded on `tape`.
Vector loss_gradient(const Tape& tape, Var loss);

// Activation and its first three derivatives, elementwise.
struct ActivationDerivatives {
    Matrix s0, s1, s2, s3;
};
ActivationDerivatives activation_derivatives(Activation act, const Matrix& z);

using ScalarField = std::function<double(std::span<const double>)>;

// Central finite differences of `f` at `point`. `step` > 0; when `lower` and
// `upper` are given, the point must sit at least 2*step inside the box.
JetValue finite_diff_oracle(const ScalarField& f, std::span<const double> point, int order, double step,
                            std::span<const double> lower = {}, std::span<const double> upper = {});

// Sum in a fixed pairwise order; results do not depend on vectorization.
double pairwise_sum(std::span<const double> values);

}  // namespace r3::ad
