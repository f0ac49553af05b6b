#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace acr {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dense row-major tensor of 64-bit floats. Copying a Tensor copies the
// handle, not the storage, so a tensor keeps its identity inside a
// computation graph. The gradient buffer is allocated lazily and is the
// only mutable part after construction.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from_values(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    static Tensor uniform(Shape shape, double lo, double hi, std::mt19937& rng);

    bool defined() const { return static_cast<bool>(p_); }
    const Shape& shape() const;
    std::size_t size() const;
    // 2-d accessors; throw on tensors of other ranks
    std::size_t rows() const;
    std::size_t cols() const;
    double at(std::size_t r, std::size_t c) const;

    std::uint64_t node_id() const;

    std::vector<double>& values();
    const std::vector<double>& values() const;
    double value() const;  // scalar tensors only

    bool has_grad() const;
    std::vector<double>& grad();  // allocates a zero buffer on first use
    const std::vector<double>& grad() const;
    void zero_grad();

    bool all_finite() const;

private:
    struct Payload {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;  // empty means absent
        std::uint64_t id = 0;
    };
    explicit Tensor(std::shared_ptr<Payload> p) : p_(std::move(p)) {}
    Payload& payload();
    const Payload& payload() const;

    std::shared_ptr<Payload> p_;
};

// Records primitive operations in execution order, which is already a
// topological order of the graph. backward() replays the records in
// reverse, so every input's adjoint is complete before its producing
// operation pulls gradients. A tape is single use: a second backward()
// call throws instead of silently double-accumulating.
class Tape {
public:
    void record(std::function<void()> pull);
    void backward(const Tensor& loss);
    std::size_t recorded_ops() const { return entries_.size(); }
    bool consumed() const { return consumed_; }

private:
    std::vector<std::function<void()>> entries_;
    bool consumed_ = false;
};

// Primitive forward ops. Passing tape == nullptr evaluates without
// recording (used for inference and finite-difference probes).
Tensor matmul(Tensor a, Tensor b, Tape* tape = nullptr);
// a · b^T, the proxy-logit shape (n x d) · (c x d)^T
Tensor matmul_nt(Tensor a, Tensor b, Tape* tape = nullptr);
Tensor add(Tensor a, Tensor b, Tape* tape = nullptr);
Tensor sub(Tensor a, Tensor b, Tape* tape = nullptr);
Tensor mul(Tensor a, Tensor b, Tape* tape = nullptr);
Tensor scale(Tensor a, double factor, Tape* tape = nullptr);
Tensor relu(Tensor a, Tape* tape = nullptr);
Tensor exp_elem(Tensor a, Tape* tape = nullptr);
Tensor log_elem(Tensor a, Tape* tape = nullptr);
// x (n x d) plus a length-d bias added to every row
Tensor add_row_bias(Tensor x, Tensor bias, Tape* tape = nullptr);
Tensor softmax_rows(Tensor logits, Tape* tape = nullptr);
Tensor log_softmax_rows(Tensor logits, Tape* tape = nullptr);
Tensor l2_normalize_rows(Tensor x, Tape* tape = nullptr);
Tensor take_rows(Tensor m, std::vector<std::size_t> row_idx, Tape* tape = nullptr);
// out[i] = m[i, col_idx[i]]
Tensor pick_per_row(Tensor m, std::vector<std::size_t> col_idx, Tape* tape = nullptr);
Tensor sum(Tensor a, Tape* tape = nullptr);
Tensor mean(Tensor a, Tape* tape = nullptr);

}  // namespace acr
