#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "acr/tensor.hpp"

namespace acr {

// Multilayer perceptron encoder: input -> hidden widths -> embedding, ReLU
// between layers, linear output. Weights start Glorot-uniform from the
// given generator, biases at zero.
class Mlp {
public:
    Mlp(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t embed_dim,
        std::mt19937& rng);

    Tensor forward(Tensor x, Tape* tape = nullptr) const;
    std::vector<Tensor> parameters() const;
    std::size_t input_dim() const { return input_dim_; }
    std::size_t embed_dim() const { return embed_dim_; }
    const std::vector<std::size_t>& hidden() const { return hidden_; }

    // Deep copy with fresh storage, for read-only evaluation snapshots.
    Mlp clone() const;

    // Direct layer access, used by checkpoint load and tests.
    std::vector<Tensor>& weights() { return weights_; }
    std::vector<Tensor>& biases() { return biases_; }

private:
    Mlp() = default;
    std::size_t input_dim_ = 0;
    std::size_t embed_dim_ = 0;
    std::vector<std::size_t> hidden_;
    std::vector<Tensor> weights_;  // [in x out] per layer
    std::vector<Tensor> biases_;   // [out] per layer
};

// One proxy row per class label ever observed. Rows appear on demand with
// small uniform init; the matrix is rebuilt on growth so earlier training
// steps keep their recorded graph nodes intact.
class ProxyClassifier {
public:
    explicit ProxyClassifier(std::size_t embed_dim) : embed_dim_(embed_dim) {}

    // Grows the proxy matrix to cover every label in `labels`.
    void ensure_classes(const std::vector<std::size_t>& labels, std::mt19937& rng);

    std::size_t num_classes() const;
    std::size_t embed_dim() const { return embed_dim_; }
    Tensor proxies() const { return w_; }
    void set_proxies(Tensor w) { w_ = std::move(w); }

    ProxyClassifier clone() const;

private:
    std::size_t embed_dim_;
    Tensor w_;  // [num_classes x embed_dim], undefined until first class
};

// z·Wᵀ / τ over the given proxy rows.
Tensor proxy_logits(Tensor z, Tensor proxies, double tau, Tape* tape = nullptr);

// Softmax class probabilities over every known class, never taped.
Tensor class_probabilities(Tensor z, const ProxyClassifier& clf, double tau);

// Contrastive loss over proxies: −(1/N)·Σᵢ log[exp(zᵢ·W_{yᵢ}/τ) / Σ_{L∈batch_classes} exp(zᵢ·W_L/τ)].
// batch_classes must be sorted, unique, hold every label, and name at
// least two classes; the overload without it uses the labels' own classes.
Tensor pcl_loss(Tensor z, const std::vector<std::size_t>& labels, Tensor proxies,
                double tau, const std::vector<std::size_t>& batch_classes,
                Tape* tape = nullptr);
Tensor pcl_loss(Tensor z, const std::vector<std::size_t>& labels, Tensor proxies,
                double tau, Tape* tape = nullptr);

// Softmax cross-entropy against every known class (τ fixed at 1).
Tensor ce_loss(Tensor z, const std::vector<std::size_t>& labels, Tensor proxies,
               Tape* tape = nullptr);

// p ← p − lr·g for each parameter, then clears every gradient. Parameters
// that never received a gradient are left unchanged.
void sgd_step(std::vector<Tensor> params, double lr);

// Versioned JSON checkpoint of encoder and proxy matrix.
void save_checkpoint(const std::string& path, const Mlp& encoder,
                     const ProxyClassifier& clf);
struct Checkpoint {
    Mlp encoder;
    ProxyClassifier classifier;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace acr
