#include "r3/autodiff.hpp"

#include <cmath>
#include <mutex>
#include <string>

#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <utility>

namespace r3::ad {

JetLayout::JetLayout(int dim, int order) : dim_(dim), order_(order) {
    if (dim < 1) throw UsageError("jet layout needs at least one input coordinate");
    if (order < 0 || order > kMaxOrder) throw UsageError("jet order must be 0, 1 or 2");
    channels_ = 1;
    if (order >= 1) channels_ += dim;
    if (order >= 2) channels_ += dim * (dim + 1) / 2;
}

int JetLayout::first(int i) const {
    if (order_ < 1 || i < 0 || i >= dim_) throw UsageError("first-derivative channel out of range");
    return 1 + i;
}

int JetLayout::second(int i, int j) const {
    if (order_ < 2 || i < 0 || j < 0 || i >= dim_ || j >= dim_)
        throw UsageError("second-derivative channel out of range");
    if (i > j) std::swap(i, j);
    // Upper-triangle pairs enumerated row by row: (0,0),(0,1),..,(1,1),..
    int offset = 0;
    for (int r = 0; r < i; ++r) offset += dim_ - r;
    return 1 + dim_ + offset + (j - i);
}

const Matrix& Var::value() const {
    if (!tape_) throw UsageError("unbound Var");
    return tape_->value(*this);
}

double Var::scalar() const {
    const Matrix& v = value();
    if (v.size() != 1) throw UsageError("Var is not a scalar");
    return v(0, 0);
}

Tape::Tape(Index parameter_count) : parameter_count_(parameter_count) {
#if defined(__GLIBC__)
    // Tape nodes are multi-megabyte matrices freed and reallocated every
    // step. Keeping them on the heap instead of fresh mmap regions avoids
    // page-faulting the whole working set on each iteration.
    static std::once_flag once;
    std::call_once(once, [] {
        mallopt(M_MMAP_THRESHOLD, 1 << 30);
        mallopt(M_TRIM_THRESHOLD, 1 << 30);
    });
#endif
    nodes_.reserve(64);
}

void Tape::clear() { nodes_.clear(); }

int Tape::check(Var v) const {
    if (v.tape_ != this || v.id_ < 0 || static_cast<std::size_t>(v.id_) >= nodes_.size())
        throw UsageError("Var does not belong to this tape");
    return v.id_;
}

Var Tape::push(Matrix value, std::vector<int> inputs, Backward backward, std::vector<Matrix> aux) {
    Node node;
    node.value = std::move(value);
    for (int in : inputs) node.needs_grad = node.needs_grad || needs(in);
    node.inputs = std::move(inputs);
    if (node.needs_grad) {
        node.backward = std::move(backward);
        node.aux = std::move(aux);
    }
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

template <typename Expr>
void Tape::accumulate(Grads& g, int id, const Eigen::MatrixBase<Expr>& delta) {
    Matrix& slot = g[static_cast<std::size_t>(id)];
    if (slot.size() == 0)
        slot.noalias() = delta;
    else
        slot.noalias() += delta;
}

void Tape::accumulate(Grads& g, int id, Matrix&& delta) {
    Matrix& slot = g[static_cast<std::size_t>(id)];
    if (slot.size() == 0)
        slot = std::move(delta);
    else
        slot += delta;
}

Var Tape::parameter(std::span<const double> theta, Index offset, Index rows, Index cols) {
    if (offset < 0 || rows < 0 || cols < 0 || static_cast<std::size_t>(offset + rows * cols) > theta.size())
        throw UsageError("parameter block exceeds parameter vector");
    if (offset + rows * cols > parameter_count_) parameter_count_ = offset + rows * cols;
    Node node;
    node.value = Eigen::Map<const Matrix>(theta.data() + offset, rows, cols);
    node.needs_grad = grad_enabled_;
    node.param_offset = offset;
    nodes_.push_back(std::move(node));
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) { return push(std::move(value), {}, nullptr); }

Var Tape::constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

Vector Tape::gradient(Var loss) const {
    const int root = check(loss);
    if (nodes_[static_cast<std::size_t>(root)].value.size() != 1)
        throw UsageError("gradient requires a scalar loss node");
    Vector out = Vector::Zero(parameter_count_);
    if (!nodes_[static_cast<std::size_t>(root)].needs_grad) return out;

    Grads grads(static_cast<std::size_t>(root) + 1);
    grads[static_cast<std::size_t>(root)] = Matrix::Ones(1, 1);
    for (int id = root; id >= 0; --id) {
        const Node& node = nodes_[static_cast<std::size_t>(id)];
        Matrix& g = grads[static_cast<std::size_t>(id)];
        if (!node.needs_grad || g.size() == 0) continue;
        if (node.param_offset >= 0) {
            out.segment(node.param_offset, g.size()) += Eigen::Map<const Vector>(g.data(), g.size());
        } else if (node.backward) {
            node.backward(*this, id, grads);
        }
        g.resize(0, 0);
    }
    return out;
}

namespace {

// Eigen evaluates tanh on doubles one element at a time; the exp-based form
// vectorizes and agrees to ~1e-15 absolute. Saturates correctly at +-inf.
Matrix fast_tanh(const Matrix& z) {
    const auto e = (2.0 * z.array().abs()).exp();
    return (z.array().sign() * (1.0 - 2.0 / (e + 1.0))).matrix();
}

// Gradient flowing into a broadcast 1x1 operand is the sum of the upstream
// gradient; otherwise it is passed through with the operand's shape.
Matrix reduce_to(const Matrix& g, const Matrix& target) {
    if (target.size() == 1 && g.size() != 1) {
        return Matrix::Constant(1, 1, pairwise_sum(std::span<const double>(g.data(), static_cast<std::size_t>(g.size()))));
    }
    return g;
}

void check_binary(const Matrix& a, const Matrix& b, const char* op) {
    const bool same = a.rows() == b.rows() && a.cols() == b.cols();
    if (!same && a.size() != 1 && b.size() != 1)
        throw UsageError(std::string("shape mismatch in ") + op);
}

}  // namespace

Var Tape::add(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    const Matrix& va = nodes_[ia].value;
    const Matrix& vb = nodes_[ib].value;
    check_binary(va, vb, "add");
    Matrix out;
    if (va.size() == vb.size())
        out = va + vb;
    else if (va.size() == 1)
        out = (vb.array() + va(0, 0)).matrix();
    else
        out = (va.array() + vb(0, 0)).matrix();
    return push(std::move(out), {ia, ib}, [ia, ib](const Tape& t, int self, Grads& g) {
        const Matrix& up = g[self];
        for (int id : {ia, ib}) {
            if (!t.needs(id)) continue;
            if (t.nodes_[id].value.size() == up.size())
                accumulate(g, id, up);
            else
                accumulate(g, id, reduce_to(up, t.nodes_[id].value));
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    const Matrix& va = nodes_[ia].value;
    const Matrix& vb = nodes_[ib].value;
    check_binary(va, vb, "sub");
    Matrix out;
    if (va.size() == vb.size())
        out = va - vb;
    else if (va.size() == 1)
        out = (-vb.array() + va(0, 0)).matrix();
    else
        out = (va.array() - vb(0, 0)).matrix();
    return push(std::move(out), {ia, ib}, [ia, ib](const Tape& t, int self, Grads& g) {
        const Matrix& up = g[self];
        if (t.needs(ia)) {
            if (t.nodes_[ia].value.size() == up.size())
                accumulate(g, ia, up);
            else
                accumulate(g, ia, reduce_to(up, t.nodes_[ia].value));
        }
        if (t.needs(ib)) {
            if (t.nodes_[ib].value.size() == up.size())
                accumulate(g, ib, -up);
            else
                accumulate(g, ib, reduce_to(-up, t.nodes_[ib].value));
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    const Matrix& va = nodes_[ia].value;
    const Matrix& vb = nodes_[ib].value;
    check_binary(va, vb, "mul");
    Matrix out;
    if (va.size() == vb.size())
        out = va.cwiseProduct(vb);
    else if (va.size() == 1)
        out = vb * va(0, 0);
    else
        out = va * vb(0, 0);
    return push(std::move(out), {ia, ib}, [ia, ib](const Tape& t, int self, Grads& g) {
        const Matrix& up = g[self];
        const Matrix& xa = t.nodes_[ia].value;
        const Matrix& xb = t.nodes_[ib].value;
        auto times = [&](const Matrix& other) -> Matrix {
            if (other.size() == 1) return up * other(0, 0);
            return up.cwiseProduct(other);
        };
        if (t.needs(ia)) accumulate(g, ia, reduce_to(times(xb), xa));
        if (t.needs(ib)) accumulate(g, ib, reduce_to(times(xa), xb));
    });
}

Var Tape::unary(Var a, Matrix value, Matrix local_derivative) {
    const int ia = check(a);
    std::vector<Matrix> aux;
    aux.push_back(std::move(local_derivative));
    return push(std::move(value), {ia}, [ia](const Tape& t, int self, Grads& g) {
        accumulate(g, ia, g[self].cwiseProduct(t.nodes_[self].aux[0]));
    }, std::move(aux));
}

Var Tape::scale(Var a, double s) {
    const int ia = check(a);
    Matrix out = nodes_[ia].value * s;
    return push(std::move(out), {ia}, [ia, s](const Tape&, int self, Grads& g) { accumulate(g, ia, g[self] * s); });
}

Var Tape::shift(Var a, double s) {
    const int ia = check(a);
    Matrix out = nodes_[ia].value.array() + s;
    return push(std::move(out), {ia}, [ia](const Tape&, int self, Grads& g) { accumulate(g, ia, g[self]); });
}

Var Tape::square(Var a) {
    const Matrix& x = nodes_.at(check(a)).value;
    return unary(a, x.array().square().matrix(), (2.0 * x.array()).matrix());
}

Var Tape::sqrt(Var a) {
    const Matrix& x = nodes_.at(check(a)).value;
    Matrix y = x.array().sqrt().matrix();
    Matrix d = (0.5 / y.array()).matrix();
    return unary(a, std::move(y), std::move(d));
}

Var Tape::tanh(Var a) {
    const Matrix& x = nodes_.at(check(a)).value;
    Matrix y = fast_tanh(x);
    Matrix d = (1.0 - y.array().square()).matrix();
    return unary(a, std::move(y), std::move(d));
}

Var Tape::sin(Var a) {
    const Matrix& x = nodes_.at(check(a)).value;
    return unary(a, x.array().sin().matrix(), x.array().cos().matrix());
}

Var Tape::cos(Var a) {
    const Matrix& x = nodes_.at(check(a)).value;
    return unary(a, x.array().cos().matrix(), (-x.array().sin()).matrix());
}

Var Tape::exp(Var a) {
    const Matrix& x = nodes_.at(check(a)).value;
    Matrix y = x.array().exp().matrix();
    Matrix d = y;
    return unary(a, std::move(y), std::move(d));
}

Var Tape::relu(Var a) {
    const Matrix& x = nodes_.at(check(a)).value;
    Matrix y = x.cwiseMax(0.0);
    Matrix d = (x.array() > 0.0).cast<double>().matrix();
    return unary(a, std::move(y), std::move(d));
}

Var Tape::matmul(Var a, Var b) {
    const int ia = check(a), ib = check(b);
    if (nodes_[ia].value.cols() != nodes_[ib].value.rows()) throw UsageError("shape mismatch in matmul");
    Matrix out = nodes_[ia].value * nodes_[ib].value;
    return push(std::move(out), {ia, ib}, [ia, ib](const Tape& t, int self, Grads& g) {
        const Matrix& up = g[self];
        if (t.needs(ia)) accumulate(g, ia, up * t.nodes_[ib].value.transpose());
        if (t.needs(ib)) accumulate(g, ib, t.nodes_[ia].value.transpose() * up);
    });
}

Var Tape::sum(Var a) {
    const int ia = check(a);
    const Matrix& x = nodes_[ia].value;
    const double s = pairwise_sum(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    const Index r = x.rows(), c = x.cols();
    return push(Matrix::Constant(1, 1, s), {ia}, [ia, r, c](const Tape&, int self, Grads& g) {
        accumulate(g, ia, Matrix::Constant(r, c, g[self](0, 0)));
    });
}

Var Tape::mean(Var a) {
    const Index n = nodes_.at(check(a)).value.size();
    if (n == 0) throw UsageError("mean of empty node");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var Tape::cols(Var a, Index start, Index count) {
    const int ia = check(a);
    const Matrix& x = nodes_[ia].value;
    if (start < 0 || count < 0 || start + count > x.cols()) throw UsageError("column block out of range");
    const Index r = x.rows(), c = x.cols();
    Matrix out = x.middleCols(start, count);
    return push(std::move(out), {ia}, [ia, start, count, r, c](const Tape&, int self, Grads& g) {
        Matrix& slot = g[static_cast<std::size_t>(ia)];
        if (slot.size() == 0) slot = Matrix::Zero(r, c);
        slot.middleCols(start, count) += g[self];
    });
}

Var Tape::hcat(std::span<const Var> parts) {
    if (parts.empty()) throw UsageError("hcat of nothing");
    std::vector<int> ids;
    Index rows = -1, total = 0;
    for (Var p : parts) {
        const int id = check(p);
        const Matrix& x = nodes_[id].value;
        if (rows >= 0 && x.rows() != rows) throw UsageError("row mismatch in hcat");
        rows = x.rows();
        total += x.cols();
        ids.push_back(id);
    }
    Matrix out(rows, total);
    std::vector<Index> starts;
    Index at = 0;
    for (int id : ids) {
        starts.push_back(at);
        out.middleCols(at, nodes_[id].value.cols()) = nodes_[id].value;
        at += nodes_[id].value.cols();
    }
    std::vector<int> inputs = ids;
    return push(std::move(out), std::move(inputs), [ids, starts](const Tape& t, int self, Grads& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (!t.needs(ids[k])) continue;
            accumulate(g, ids[k], g[self].middleCols(starts[k], t.nodes_[ids[k]].value.cols()));
        }
    });
}

Var Tape::jet_affine(Var weight, Var input, Var bias, Index batch) {
    const int iw = check(weight), ia = check(input), ib = check(bias);
    const Matrix& w = nodes_[iw].value;
    const Matrix& a = nodes_[ia].value;
    const Matrix& b = nodes_[ib].value;
    if (w.cols() != a.rows() || b.rows() != w.rows() || b.cols() != 1 || batch > a.cols())
        throw UsageError("shape mismatch in jet_affine");
    Matrix z = w * a;
    z.leftCols(batch).colwise() += b.col(0);
    return push(std::move(z), {iw, ia, ib}, [iw, ia, ib, batch](const Tape& t, int self, Grads& g) {
        const Matrix& up = g[self];
        if (t.needs(iw)) accumulate(g, iw, up * t.nodes_[ia].value.transpose());
        if (t.needs(ia)) accumulate(g, ia, t.nodes_[iw].value.transpose() * up);
        if (t.needs(ib)) accumulate(g, ib, up.leftCols(batch).rowwise().sum());
    });
}

ActivationDerivatives activation_derivatives(Activation act, const Matrix& z) {
    ActivationDerivatives d;
    switch (act) {
        case Activation::tanh: {
            d.s0 = fast_tanh(z);
            d.s1 = (1.0 - d.s0.array().square()).matrix();
            d.s2 = (-2.0 * d.s0.array() * d.s1.array()).matrix();
            d.s3 = (d.s1.array() * (4.0 * d.s0.array().square() - 2.0 * d.s1.array())).matrix();
            break;
        }
        case Activation::sin: {
            d.s0 = z.array().sin().matrix();
            d.s1 = z.array().cos().matrix();
            d.s2 = -d.s0;
            d.s3 = -d.s1;
            break;
        }
        case Activation::identity: {
            d.s0 = z;
            d.s1 = Matrix::Ones(z.rows(), z.cols());
            d.s2 = Matrix::Zero(z.rows(), z.cols());
            d.s3 = Matrix::Zero(z.rows(), z.cols());
            break;
        }
    }
    return d;
}

namespace {

// Derivatives s1..s3 of the activation, rebuilt from the activation value s0
// (and cos z for sine) up to the requested order.
struct Slopes {
    Matrix s1, s2, s3;
};

Slopes slopes_from_value(Activation act, const Eigen::Ref<const Matrix>& s0, const Matrix& cosine, int upto) {
    Slopes d;
    switch (act) {
        case Activation::tanh:
            d.s1 = (1.0 - s0.array().square()).matrix();
            if (upto >= 2) d.s2 = (-2.0 * s0.array() * d.s1.array()).matrix();
            if (upto >= 3) d.s3 = (d.s1.array() * (4.0 * s0.array().square() - 2.0 * d.s1.array())).matrix();
            break;
        case Activation::sin:
            d.s1 = cosine;
            if (upto >= 2) d.s2 = -s0;
            if (upto >= 3) d.s3 = -cosine;
            break;
        case Activation::identity:
            d.s1 = Matrix::Ones(s0.rows(), s0.cols());
            if (upto >= 2) d.s2 = Matrix::Zero(s0.rows(), s0.cols());
            if (upto >= 3) d.s3 = Matrix::Zero(s0.rows(), s0.cols());
            break;
    }
    return d;
}

}  // namespace

Var Tape::jet_activate(Var z_var, Activation act, const JetLayout& layout, Index batch) {
    const int iz = check(z_var);
    const Matrix& z = nodes_[iz].value;
    const int channels = layout.channels();
    if (z.cols() != channels * batch) throw UsageError("jet_activate: column count does not match layout");
    const int dim = layout.dim();
    const int order = layout.order();
    auto blk = [batch](auto& m, int c) { return m.middleCols(c * batch, batch); };

    Matrix h(z.rows(), z.cols());
    Matrix cosine;
    switch (act) {
        case Activation::tanh:
            blk(h, 0) = fast_tanh(blk(z, 0));
            break;
        case Activation::sin:
            blk(h, 0) = blk(z, 0).array().sin().matrix();
            cosine = blk(z, 0).array().cos().matrix();
            break;
        case Activation::identity:
            blk(h, 0) = blk(z, 0);
            break;
    }
    if (order >= 1) {
        const Slopes d = slopes_from_value(act, blk(h, 0), cosine, order);
        for (int i = 0; i < dim; ++i) {
            const int ci = layout.first(i);
            blk(h, ci) = d.s1.cwiseProduct(blk(z, ci));
        }
        if (order >= 2) {
            for (int i = 0; i < dim; ++i) {
                for (int j = i; j < dim; ++j) {
                    const int cij = layout.second(i, j);
                    blk(h, cij) = (d.s2.array() * blk(z, layout.first(i)).array() * blk(z, layout.first(j)).array() +
                                   d.s1.array() * blk(z, cij).array())
                                      .matrix();
                }
            }
        }
    }
    std::vector<Matrix> aux;
    if (act == Activation::sin) aux.push_back(std::move(cosine));
    return push(std::move(h), {iz}, [iz, act, layout, batch](const Tape& t, int self, Grads& g) {
        const Matrix& up = g[self];
        const Matrix& zz = t.nodes_[iz].value;
        const Node& me = t.nodes_[self];
        const int dim = layout.dim();
        const int order = layout.order();
        auto cb = [batch](const Matrix& m, int c) { return m.middleCols(c * batch, batch); };
        static const Matrix kNone;
        const Slopes d = slopes_from_value(act, cb(me.value, 0), me.aux.empty() ? kNone : me.aux[0], order + 1);
        const Matrix& s1 = d.s1;
        const Matrix& s2 = d.s2;
        const Matrix& s3 = d.s3;
        Matrix gz(zz.rows(), zz.cols());
        auto out = [&gz, batch](int c) { return gz.middleCols(c * batch, batch); };

        out(0) = cb(up, 0).cwiseProduct(s1);
        if (order >= 1) {
            for (int i = 0; i < dim; ++i) {
                const int ci = layout.first(i);
                out(ci) = cb(up, ci).cwiseProduct(s1);
                out(0).array() += cb(up, ci).array() * s2.array() * cb(zz, ci).array();
            }
        }
        if (order >= 2) {
            for (int i = 0; i < dim; ++i) {
                for (int j = i; j < dim; ++j) {
                    const int cij = layout.second(i, j);
                    const int ci = layout.first(i), cj = layout.first(j);
                    const auto gij = cb(up, cij).array();
                    out(cij) = (gij * s1.array()).matrix();
                    if (i == j) {
                        out(ci).array() += 2.0 * gij * s2.array() * cb(zz, ci).array();
                    } else {
                        out(ci).array() += gij * s2.array() * cb(zz, cj).array();
                        out(cj).array() += gij * s2.array() * cb(zz, ci).array();
                    }
                    out(0).array() += gij * (s3.array() * cb(zz, ci).array() * cb(zz, cj).array() +
                                             s2.array() * cb(zz, cij).array());
                }
            }
        }
        accumulate(g, iz, std::move(gz));
    }, std::move(aux));
}

Var Tape::jet_mul(Var a_var, Var b_var, const JetLayout& layout, Index batch) {
    const int ia = check(a_var), ib = check(b_var);
    const Matrix& a = nodes_[ia].value;
    const Matrix& b = nodes_[ib].value;
    const int channels = layout.channels();
    if (a.rows() != b.rows() || a.cols() != channels * batch || b.cols() != a.cols())
        throw UsageError("jet_mul: shape mismatch");
    const int dim = layout.dim();
    const int order = layout.order();
    auto cb = [batch](const Matrix& m, int c) { return m.middleCols(c * batch, batch); };
    Matrix p(a.rows(), a.cols());
    auto out = [&p, batch](int c) { return p.middleCols(c * batch, batch); };
    out(0) = cb(a, 0).cwiseProduct(cb(b, 0));
    if (order >= 1) {
        for (int i = 0; i < dim; ++i) {
            const int ci = layout.first(i);
            out(ci) = (cb(a, ci).array() * cb(b, 0).array() + cb(a, 0).array() * cb(b, ci).array()).matrix();
        }
    }
    if (order >= 2) {
        for (int i = 0; i < dim; ++i) {
            for (int j = i; j < dim; ++j) {
                const int cij = layout.second(i, j);
                const int ci = layout.first(i), cj = layout.first(j);
                out(cij) = (cb(a, cij).array() * cb(b, 0).array() + cb(a, ci).array() * cb(b, cj).array() +
                            cb(a, cj).array() * cb(b, ci).array() + cb(a, 0).array() * cb(b, cij).array())
                               .matrix();
            }
        }
    }
    return push(std::move(p), {ia, ib}, [ia, ib, layout, batch](const Tape& t, int self, Grads& g) {
        const Matrix& up = g[self];
        auto cb = [batch](const Matrix& m, int c) { return m.middleCols(c * batch, batch); };
        // d(a*b)/da has the same form as the product with a's channels
        // replaced by the upstream gradient, mirrored for b.
        auto pull = [&](const Matrix& other) {
            const int dim = layout.dim();
            const int order = layout.order();
            Matrix gx(other.rows(), other.cols());
            auto out = [&gx, batch](int c) { return gx.middleCols(c * batch, batch); };
            out(0) = cb(up, 0).cwiseProduct(cb(other, 0));
            if (order >= 1) {
                for (int i = 0; i < dim; ++i) {
                    const int ci = layout.first(i);
                    out(ci) = cb(up, ci).cwiseProduct(cb(other, 0));
                    out(0).array() += cb(up, ci).array() * cb(other, ci).array();
                }
            }
            if (order >= 2) {
                for (int i = 0; i < dim; ++i) {
                    for (int j = i; j < dim; ++j) {
                        const int cij = layout.second(i, j);
                        const int ci = layout.first(i), cj = layout.first(j);
                        const auto gij = cb(up, cij).array();
                        out(cij) = (gij * cb(other, 0).array()).matrix();
                        out(0).array() += gij * cb(other, cij).array();
                        out(ci).array() += gij * cb(other, cj).array();
                        out(cj).array() += gij * cb(other, ci).array();
                    }
                }
            }
            return gx;
        };
        if (t.needs(ia)) accumulate(g, ia, pull(t.nodes_[ib].value));
        if (t.needs(ib)) accumulate(g, ib, pull(t.nodes_[ia].value));
    });
}

Var operator+(Var a, Var b) { return a.tape()->add(a, b); }
Var operator-(Var a, Var b) { return a.tape()->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape()->mul(a, b); }
Var operator-(Var a) { return a.tape()->scale(a, -1.0); }
Var operator+(Var a, double s) { return a.tape()->shift(a, s); }
Var operator+(double s, Var a) { return a.tape()->shift(a, s); }
Var operator-(Var a, double s) { return a.tape()->shift(a, -s); }
Var operator-(double s, Var a) { return a.tape()->shift(a.tape()->scale(a, -1.0), s); }
Var operator*(Var a, double s) { return a.tape()->scale(a, s); }
Var operator*(double s, Var a) { return a.tape()->scale(a, s); }
Var operator/(Var a, double s) { return a.tape()->scale(a, 1.0 / s); }
Var sqrt(Var a) { return a.tape()->sqrt(a); }
Var tanh(Var a) { return a.tape()->tanh(a); }
Var sin(Var a) { return a.tape()->sin(a); }
Var cos(Var a) { return a.tape()->cos(a); }
Var exp(Var a) { return a.tape()->exp(a); }
Var square(Var a) { return a.tape()->square(a); }
Var relu(Var a) { return a.tape()->relu(a); }
Var sum(Var a) { return a.tape()->sum(a); }
Var mean(Var a) { return a.tape()->mean(a); }

Vector loss_gradient(const Tape& tape, Var loss) {
    if (tape.empty()) throw UsageError("loss_gradient: tape is empty");
    return tape.gradient(loss);
}

JetValue finite_diff_oracle(const ScalarField& f, std::span<const double> point, int order, double step,
                            std::span<const double> lower, std::span<const double> upper) {
    if (!(step > 0.0)) throw UsageError("finite_diff_oracle: step must be positive");
    if (order < 0 || order > kMaxOrder) throw UsageError("finite_diff_oracle: order must be 0, 1 or 2");
    const std::size_t dim = point.size();
    if (!lower.empty() || !upper.empty()) {
        if (lower.size() != dim || upper.size() != dim) throw UsageError("finite_diff_oracle: box dimension mismatch");
        for (std::size_t i = 0; i < dim; ++i) {
            if (point[i] - lower[i] < 2.0 * step || upper[i] - point[i] < 2.0 * step)
                throw UsageError("finite_diff_oracle: point closer than 2*step to the domain boundary");
        }
    }
    std::vector<double> x(point.begin(), point.end());
    auto at = [&](int i, double di, int j, double dj) {
        std::vector<double> y = x;
        if (i >= 0) y[static_cast<std::size_t>(i)] += di;
        if (j >= 0) y[static_cast<std::size_t>(j)] += dj;
        return f(y);
    };
    JetValue jet;
    jet.value = f(x);
    const double h = step;
    if (order >= 1) {
        jet.d1.resize(static_cast<Index>(dim));
        for (std::size_t i = 0; i < dim; ++i) {
            const int ii = static_cast<int>(i);
            jet.d1(ii) = (at(ii, h, -1, 0) - at(ii, -h, -1, 0)) / (2.0 * h);
        }
    }
    if (order >= 2) {
        jet.d2.resize(static_cast<Index>(dim), static_cast<Index>(dim));
        for (std::size_t i = 0; i < dim; ++i) {
            const int ii = static_cast<int>(i);
            jet.d2(ii, ii) = (at(ii, h, -1, 0) - 2.0 * jet.value + at(ii, -h, -1, 0)) / (h * h);
            for (std::size_t j = i + 1; j < dim; ++j) {
                const int jj = static_cast<int>(j);
                const double v = (at(ii, h, jj, h) - at(ii, h, jj, -h) - at(ii, -h, jj, h) + at(ii, -h, jj, -h)) /
                                 (4.0 * h * h);
                jet.d2(ii, jj) = v;
                jet.d2(jj, ii) = v;
            }
        }
    }
    return jet;
}

double pairwise_sum(std::span<const double> values) {
    constexpr std::size_t kLeaf = 32;
    if (values.size() <= kLeaf) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

}  // namespace r3::ad
