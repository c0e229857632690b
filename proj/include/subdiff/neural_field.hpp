#pragma once

#include "subdiff/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace subdiff {

// Swish activation z * sigmoid(z) and its first three derivatives.
namespace swish {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double value(double z) { return z * sigmoid(z); }

inline double d1(double z) {
    const double g = sigmoid(z);
    return g + z * g * (1.0 - g);
}

inline double d2(double z) {
    const double g = sigmoid(z);
    const double q = g * (1.0 - g);
    return q * (2.0 + z * (1.0 - 2.0 * g));
}

inline double d3(double z) {
    const double g = sigmoid(z);
    const double q = g * (1.0 - g);
    const double h = 1.0 - 2.0 * g;
    return q * (h * (3.0 + z * h) - 2.0 * z * q);
}

}  // namespace swish

enum class DerivativeOrder : int {
    Value = 0,     // network output only
    Gradient = 1,  // plus d/dx_k
    Second = 2,    // plus pure d2/dx_k2
};

/// Output of the network at a single point, differentiated in the spatial inputs only.
struct DerivativeBundle {
    double value = 0.0;
    std::vector<double> gradient;  // d/dx_k
    std::vector<double> second;    // d2/dx_k2, summing to the Laplacian

    [[nodiscard]] double laplacian() const { return std::accumulate(second.begin(), second.end(), 0.0); }
};

/// Column-per-point form of DerivativeBundle. Also used for adjoints (dLoss/dbundle).
struct BundleBatch {
    Eigen::VectorXd value;     // N
    Eigen::MatrixXd gradient;  // d x N, empty below DerivativeOrder::Gradient
    Eigen::MatrixXd second;    // d x N, empty below DerivativeOrder::Second

    [[nodiscard]] Eigen::Index size() const { return value.size(); }

    [[nodiscard]] DerivativeBundle at(Eigen::Index i) const {
        DerivativeBundle b;
        b.value = value(i);
        b.gradient.resize(static_cast<std::size_t>(gradient.rows()));
        for (Eigen::Index k = 0; k < gradient.rows(); ++k) b.gradient[k] = gradient(k, i);
        b.second.resize(static_cast<std::size_t>(second.rows()));
        for (Eigen::Index k = 0; k < second.rows(); ++k) b.second[k] = second(k, i);
        return b;
    }

    static BundleBatch zeros(int dim, Eigen::Index n, DerivativeOrder order) {
        BundleBatch b;
        b.value = Eigen::VectorXd::Zero(n);
        if (order >= DerivativeOrder::Gradient) b.gradient = Eigen::MatrixXd::Zero(dim, n);
        if (order >= DerivativeOrder::Second) b.second = Eigen::MatrixXd::Zero(dim, n);
        return b;
    }
};

class FieldTape;

/**
 * Fully connected network u(x, s) with Swish hidden layers and an identity output.
 *
 * Inputs are the d spatial coordinates, followed by ln(s) when the network is a
 * Laplace-domain field. Callers always pass raw s; the log map is internal and
 * derivatives are taken with respect to x only. A coefficient network (no
 * Laplace input) takes x alone.
 *
 * Parameters live in one flat vector, layer-major: for each layer the weight
 * matrix (out x in, row-major) followed by the bias vector (out).
 */
class NeuralField {
public:
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    struct Architecture {
        int spatial_dim = 1;
        bool laplace_input = true;
        std::vector<int> hidden;  // widths of the Swish layers

        [[nodiscard]] int input_dim() const { return spatial_dim + (laplace_input ? 1 : 0); }

        [[nodiscard]] std::vector<int> widths() const {
            std::vector<int> w{input_dim()};
            w.insert(w.end(), hidden.begin(), hidden.end());
            w.push_back(1);
            return w;
        }

        bool operator==(const Architecture&) const = default;
    };

    static constexpr const char* kActivation = "swish";

    /// Glorot-uniform weights, zero biases.
    NeuralField(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)), seed_(seed) {
        layout();
        params_ = Eigen::VectorXd::Zero(num_parameters());
        std::mt19937_64 gen(seed);
        for (int l = 0; l < num_layers(); ++l) {
            const double limit = std::sqrt(6.0 / static_cast<double>(in_dim(l) + out_dim(l)));
            std::uniform_real_distribution<double> dist(-limit, limit);
            double* w = params_.data() + weight_offset_[l];
            for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(in_dim(l)) * out_dim(l); ++i) w[i] = dist(gen);
        }
    }

    NeuralField(Architecture arch, Eigen::VectorXd params, std::uint64_t seed)
        : arch_(std::move(arch)), params_(std::move(params)), seed_(seed) {
        layout();
        if (params_.size() != num_parameters())
            throw ContractViolation("NeuralField: expected " + std::to_string(num_parameters()) +
                                    " parameters, got " + std::to_string(params_.size()));
    }

    [[nodiscard]] const Architecture& architecture() const { return arch_; }
    [[nodiscard]] std::vector<int> widths() const { return arch_.widths(); }
    [[nodiscard]] int spatial_dim() const { return arch_.spatial_dim; }
    [[nodiscard]] int input_dim() const { return arch_.input_dim(); }
    [[nodiscard]] bool laplace_input() const { return arch_.laplace_input; }
    [[nodiscard]] int num_layers() const { return static_cast<int>(weight_offset_.size()); }
    [[nodiscard]] Eigen::Index num_parameters() const { return num_params_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }

    [[nodiscard]] int in_dim(int layer) const { return widths_[layer]; }
    [[nodiscard]] int out_dim(int layer) const { return widths_[layer + 1]; }
    [[nodiscard]] Eigen::Index weight_offset(int layer) const { return weight_offset_[layer]; }
    [[nodiscard]] Eigen::Index bias_offset(int layer) const { return bias_offset_[layer]; }

    [[nodiscard]] const Eigen::VectorXd& parameters() const { return params_; }
    [[nodiscard]] Eigen::VectorXd& parameters() { return params_; }

    [[nodiscard]] Eigen::Map<const RowMatrix> weight(int l) const {
        return {params_.data() + weight_offset_[l], out_dim(l), in_dim(l)};
    }
    [[nodiscard]] Eigen::Map<RowMatrix> weight(int l) { return {params_.data() + weight_offset_[l], out_dim(l), in_dim(l)}; }
    [[nodiscard]] Eigen::Map<const Eigen::VectorXd> bias(int l) const {
        return {params_.data() + bias_offset_[l], out_dim(l)};
    }
    [[nodiscard]] Eigen::Map<Eigen::VectorXd> bias(int l) { return {params_.data() + bias_offset_[l], out_dim(l)}; }

    /// Batched forward pass recording everything the reverse sweep needs.
    /// `x` is spatial_dim x N; `s` holds N Laplace variables (ignored and may be empty for coefficient nets).
    [[nodiscard]] FieldTape forward(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& s,
                                    DerivativeOrder order) const;
    /// Same as forward() but reuses the buffers of an existing tape.
    void forward_into(FieldTape& tape, const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const Eigen::Ref<const Eigen::VectorXd>& s, DerivativeOrder order) const;

    [[nodiscard]] double eval(std::span<const double> x, double s = 1.0) const;
    [[nodiscard]] DerivativeBundle spatial_derivatives(std::span<const double> x, double s = 1.0) const;

private:
    void layout() {
        if (arch_.spatial_dim < 1) throw ContractViolation("NeuralField: spatial_dim must be >= 1");
        for (int w : arch_.hidden)
            if (w < 1) throw ContractViolation("NeuralField: hidden widths must be >= 1");
        widths_ = arch_.widths();
        weight_offset_.clear();
        bias_offset_.clear();
        Eigen::Index off = 0;
        for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
            weight_offset_.push_back(off);
            off += static_cast<Eigen::Index>(widths_[l]) * widths_[l + 1];
            bias_offset_.push_back(off);
            off += widths_[l + 1];
        }
        num_params_ = off;
    }

    Architecture arch_;
    std::vector<int> widths_;
    std::vector<Eigen::Index> weight_offset_;
    std::vector<Eigen::Index> bias_offset_;
    Eigen::Index num_params_ = 0;
    Eigen::VectorXd params_;
    std::uint64_t seed_ = 0;
};

/**
 * Recorded forward pass over N points. Column blocks of each layer matrix hold
 * [value | d/dx_1 .. d/dx_d | d2/dx_1^2 .. d2/dx_d^2] (tangent blocks present
 * only up to the requested order). Refers to its network; do not outlive it.
 */
class FieldTape {
public:
    [[nodiscard]] const BundleBatch& outputs() const { return out_; }
    [[nodiscard]] Eigen::Index size() const { return n_; }
    [[nodiscard]] DerivativeOrder order() const { return order_; }

    /// Accumulate dLoss/dparams into `grad` given dLoss/d(outputs()).
    void backward(const BundleBatch& adjoint, Eigen::Ref<Eigen::VectorXd> grad) const {
        const NeuralField& net = *net_;
        const int d = net.spatial_dim();
        const Eigen::Index n = n_;
        if (grad.size() != net.num_parameters()) throw ContractViolation("FieldTape::backward: gradient size mismatch");
        if (adjoint.value.size() != n) throw ContractViolation("FieldTape::backward: adjoint size mismatch");

        Eigen::MatrixXd& bar = bar_;
        bar.resize(1, blocks_ * n);
        bar.leftCols(n) = adjoint.value.transpose();
        if (order_ >= DerivativeOrder::Gradient) {
            for (int k = 0; k < d; ++k) {
                if (adjoint.gradient.size() == 0)
                    bar.middleCols((1 + k) * n, n).setZero();
                else
                    bar.middleCols((1 + k) * n, n) = adjoint.gradient.row(k);
            }
        }
        if (order_ >= DerivativeOrder::Second) {
            for (int k = 0; k < d; ++k) {
                if (adjoint.second.size() == 0)
                    bar.middleCols((1 + d + k) * n, n).setZero();
                else
                    bar.middleCols((1 + d + k) * n, n) = adjoint.second.row(k);
            }
        }
        if (!bar.allFinite()) throw TrainingDivergence("loss adjoint");

        for (int l = net.num_layers() - 1; l >= 0; --l) {
            const Eigen::MatrixXd& in = l == 0 ? input_ : post_[l - 1];
            Eigen::Map<NeuralField::RowMatrix> gw(grad.data() + net.weight_offset(l), net.out_dim(l), net.in_dim(l));
            Eigen::Map<Eigen::VectorXd> gb(grad.data() + net.bias_offset(l), net.out_dim(l));
            gw.noalias() += bar * in.transpose();
            gb += bar.leftCols(n).rowwise().sum();
            if (l == 0) break;
            hbar_.resize(net.in_dim(l), bar.cols());
            hbar_.noalias() = net.weight(l).transpose() * bar;
            activation_backward(l - 1, hbar_, zbar_);
            bar.swap(zbar_);
        }
    }

private:
    friend class NeuralField;

    // Adjoint through h = swish(z) and its propagated tangents for hidden layer j.
    void activation_backward(int j, const Eigen::MatrixXd& hbar, Eigen::MatrixXd& zbar) const {
        const int d = net_->spatial_dim();
        const Eigen::Index n = n_;
        const Eigen::MatrixXd& pre = pre_[j];
        const Eigen::ArrayXXd& s1 = d1_[j];
        zbar.resize(pre.rows(), pre.cols());
        auto zb = zbar.leftCols(n).array();
        zb = s1 * hbar.leftCols(n).array();
        if (order_ >= DerivativeOrder::Gradient) {
            const Eigen::ArrayXXd& s2 = d2_[j];
            for (int k = 0; k < d; ++k) {
                const auto t = pre.middleCols((1 + k) * n, n).array();
                const auto tout_bar = hbar.middleCols((1 + k) * n, n).array();
                auto tb = zbar.middleCols((1 + k) * n, n).array();
                if (order_ >= DerivativeOrder::Second) {
                    const Eigen::ArrayXXd& s3 = d3_[j];
                    const auto sv = pre.middleCols((1 + d + k) * n, n).array();
                    const auto sout_bar = hbar.middleCols((1 + d + k) * n, n).array();
                    zbar.middleCols((1 + d + k) * n, n).array() = s1 * sout_bar;
                    tb = s1 * tout_bar + 2.0 * s2 * t * sout_bar;
                    zb += s2 * (t * tout_bar + sv * sout_bar) + s3 * t.square() * sout_bar;
                } else {
                    tb = s1 * tout_bar;
                    zb += s2 * t * tout_bar;
                }
            }
        }
    }

    const NeuralField* net_ = nullptr;
    DerivativeOrder order_ = DerivativeOrder::Value;
    Eigen::Index n_ = 0;
    int blocks_ = 1;
    Eigen::MatrixXd input_;
    std::vector<Eigen::MatrixXd> pre_;   // per layer, pre-activation stacks
    std::vector<Eigen::MatrixXd> post_;  // per hidden layer, activated stacks
    std::vector<Eigen::ArrayXXd> d1_, d2_, d3_;
    BundleBatch out_;
    // Reverse-sweep scratch, reused across calls.
    mutable Eigen::MatrixXd bar_, hbar_, zbar_;
    Eigen::ArrayXXd sig_, q_;
};

inline FieldTape NeuralField::forward(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                     const Eigen::Ref<const Eigen::VectorXd>& s, DerivativeOrder order) const {
    FieldTape tape;
    forward_into(tape, x, s, order);
    return tape;
}

inline void NeuralField::forward_into(FieldTape& tape, const Eigen::Ref<const Eigen::MatrixXd>& x,
                                      const Eigen::Ref<const Eigen::VectorXd>& s, DerivativeOrder order) const {
    const int d = spatial_dim();
    if (x.rows() != d)
        throw ContractViolation("NeuralField::forward: expected " + std::to_string(d) + " spatial rows, got " +
                                std::to_string(x.rows()));
    const Eigen::Index n = x.cols();
    if (laplace_input()) {
        if (s.size() != n) throw ContractViolation("NeuralField::forward: need one s per point");
        if ((s.array() <= 0.0).any()) throw DomainError("NeuralField::forward: s must be positive");
    }

    tape.net_ = this;
    tape.order_ = order;
    tape.n_ = n;
    const int blocks = 1 + (order >= DerivativeOrder::Gradient ? d : 0) + (order >= DerivativeOrder::Second ? d : 0);
    tape.blocks_ = blocks;

    tape.input_.setZero(input_dim(), blocks * n);
    tape.input_.topLeftCorner(d, n) = x;
    if (laplace_input()) tape.input_.row(d).head(n) = s.array().log().matrix().transpose();
    if (order >= DerivativeOrder::Gradient)
        for (int k = 0; k < d; ++k) tape.input_.row(k).segment((1 + k) * n, n).setOnes();

    const int layers = num_layers();
    tape.pre_.resize(layers);
    tape.post_.resize(layers - 1);
    tape.d1_.resize(layers - 1);
    tape.d2_.resize(layers - 1);
    tape.d3_.resize(layers - 1);

    for (int l = 0; l < layers; ++l) {
        const Eigen::MatrixXd& in = l == 0 ? tape.input_ : tape.post_[l - 1];
        Eigen::MatrixXd& pre = tape.pre_[l];
        pre.resize(out_dim(l), in.cols());
        pre.noalias() = weight(l) * in;
        pre.leftCols(n).colwise() += bias(l);
        if (l == layers - 1) break;

        const auto z = pre.leftCols(n).array();
        Eigen::ArrayXXd& g = tape.sig_;
        Eigen::ArrayXXd& q = tape.q_;
        g.resize(z.rows(), n);
        q.resize(z.rows(), n);
        g = (1.0 + (-z).exp()).inverse();
        q = g * (1.0 - g);
        Eigen::ArrayXXd& s1 = tape.d1_[l];
        s1.resize(z.rows(), n);
        s1 = g + z * q;
        if (order >= DerivativeOrder::Gradient) {
            tape.d2_[l].resize(z.rows(), n);
            tape.d2_[l] = q * (2.0 + z * (1.0 - 2.0 * g));
        }
        if (order >= DerivativeOrder::Second) {
            tape.d3_[l].resize(z.rows(), n);
            tape.d3_[l] = q * ((1.0 - 2.0 * g) * (3.0 + z * (1.0 - 2.0 * g)) - 2.0 * z * q);
        }

        Eigen::MatrixXd& post = tape.post_[l];
        post.resize(pre.rows(), pre.cols());
        post.leftCols(n).array() = z * g;
        for (int k = 0; k < d && order >= DerivativeOrder::Gradient; ++k) {
            const auto t = pre.middleCols((1 + k) * n, n).array();
            post.middleCols((1 + k) * n, n).array() = s1 * t;
            if (order >= DerivativeOrder::Second) {
                const auto sv = pre.middleCols((1 + d + k) * n, n).array();
                post.middleCols((1 + d + k) * n, n).array() = tape.d2_[l] * t.square() + s1 * sv;
            }
        }
    }

    const Eigen::MatrixXd& out = tape.pre_.back();
    tape.out_.value = out.leftCols(n).transpose();
    if (order >= DerivativeOrder::Gradient) {
        tape.out_.gradient.resize(d, n);
        for (int k = 0; k < d; ++k) tape.out_.gradient.row(k) = out.middleCols((1 + k) * n, n);
    } else {
        tape.out_.gradient.resize(0, 0);
    }
    if (order >= DerivativeOrder::Second) {
        tape.out_.second.resize(d, n);
        for (int k = 0; k < d; ++k) tape.out_.second.row(k) = out.middleCols((1 + d + k) * n, n);
    } else {
        tape.out_.second.resize(0, 0);
    }
}

namespace detail {
inline Eigen::MatrixXd column(std::span<const double> x, int dim) {
    if (static_cast<int>(x.size()) != dim)
        throw ContractViolation("NeuralField: point has dimension " + std::to_string(x.size()) + ", expected " +
                                std::to_string(dim));
    Eigen::MatrixXd c(dim, 1);
    for (int k = 0; k < dim; ++k) c(k, 0) = x[k];
    return c;
}
}  // namespace detail

inline double NeuralField::eval(std::span<const double> x, double s) const {
    const Eigen::VectorXd sv = Eigen::VectorXd::Constant(1, s);
    return forward(detail::column(x, spatial_dim()), sv, DerivativeOrder::Value).outputs().value(0);
}

inline DerivativeBundle NeuralField::spatial_derivatives(std::span<const double> x, double s) const {
    const Eigen::VectorXd sv = Eigen::VectorXd::Constant(1, s);
    DerivativeBundle b = forward(detail::column(x, spatial_dim()), sv, DerivativeOrder::Second).outputs().at(0);
    // The stacked pass can round differently from the value-only pass; report the latter.
    b.value = eval(x, s);
    return b;
}

/// Evaluate values only, in chunks to bound memory. Used for reconstruction and export.
inline Eigen::VectorXd eval_batch(const NeuralField& net, const Eigen::Ref<const Eigen::MatrixXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& s, Eigen::Index chunk = 8192) {
    Eigen::VectorXd out(x.cols());
    FieldTape tape;
    for (Eigen::Index start = 0; start < x.cols(); start += chunk) {
        const Eigen::Index len = std::min(chunk, x.cols() - start);
        net.forward_into(tape, x.middleCols(start, len), net.laplace_input() ? s.segment(start, len) : s.head(0),
                         DerivativeOrder::Value);
        out.segment(start, len) = tape.outputs().value;
    }
    return out;
}

/**
 * Gradient of a scalar batch loss with respect to all parameters.
 * `loss` receives the forward bundles and returns the loss value while filling
 * the adjoint bundle (dLoss/dbundle) it is handed.
 */
template <class LossFn>
double parameter_gradient(const NeuralField& net, const Eigen::MatrixXd& x, const Eigen::VectorXd& s,
                          DerivativeOrder order, LossFn&& loss, Eigen::VectorXd& grad) {
    const FieldTape tape = net.forward(x, s, order);
    BundleBatch adjoint = BundleBatch::zeros(net.spatial_dim(), tape.size(), order);
    const double value = loss(tape.outputs(), adjoint);
    if (!std::isfinite(value)) throw TrainingDivergence("batch loss");
    grad = Eigen::VectorXd::Zero(net.num_parameters());
    tape.backward(adjoint, grad);
    return value;
}

}  // namespace subdiff
