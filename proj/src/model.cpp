#include "acr/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace acr {

namespace {

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937& rng) {
    const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return Tensor::uniform({fan_in, fan_out}, -r, r, rng);
}

}  // namespace

Mlp::Mlp(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t embed_dim,
         std::mt19937& rng)
    : input_dim_(input_dim), embed_dim_(embed_dim), hidden_(std::move(hidden)) {
    if (input_dim == 0 || embed_dim == 0) {
        throw std::invalid_argument("Mlp: zero input or embedding dimensionality");
    }
    std::vector<std::size_t> widths;
    widths.push_back(input_dim_);
    widths.insert(widths.end(), hidden_.begin(), hidden_.end());
    widths.push_back(embed_dim_);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        weights_.push_back(glorot_uniform(widths[i], widths[i + 1], rng));
        biases_.push_back(Tensor::zeros({widths[i + 1]}));
        weights_.back().zero_grad();
        biases_.back().zero_grad();
    }
}

Tensor Mlp::forward(Tensor x, Tape* tape) const {
    if (x.shape().size() != 2 || x.cols() != input_dim_) {
        throw ShapeError("Mlp::forward: input " + shape_str(x.shape()) + " does not match " +
                         std::to_string(input_dim_) + " input features");
    }
    Tensor h = x;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        h = add_row_bias(matmul(h, weights_[i], tape), biases_[i], tape);
        if (i + 1 < weights_.size()) h = relu(h, tape);
    }
    return h;
}

std::vector<Tensor> Mlp::parameters() const {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        out.push_back(weights_[i]);
        out.push_back(biases_[i]);
    }
    return out;
}

Mlp Mlp::clone() const {
    Mlp copy;
    copy.input_dim_ = input_dim_;
    copy.embed_dim_ = embed_dim_;
    copy.hidden_ = hidden_;
    for (const Tensor& w : weights_) {
        copy.weights_.push_back(Tensor::from_values(w.shape(), w.values()));
    }
    for (const Tensor& b : biases_) {
        copy.biases_.push_back(Tensor::from_values(b.shape(), b.values()));
    }
    return copy;
}

void ProxyClassifier::ensure_classes(const std::vector<std::size_t>& labels,
                                     std::mt19937& rng) {
    std::size_t needed = num_classes();
    for (std::size_t y : labels) needed = std::max(needed, y + 1);
    if (needed == num_classes()) return;

    std::vector<double> values;
    values.reserve(needed * embed_dim_);
    if (w_.defined()) {
        values.insert(values.end(), w_.values().begin(), w_.values().end());
    }
    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    while (values.size() < needed * embed_dim_) values.push_back(dist(rng));
    w_ = Tensor::from_values({needed, embed_dim_}, std::move(values));
    w_.zero_grad();
}

std::size_t ProxyClassifier::num_classes() const {
    return w_.defined() ? w_.rows() : 0;
}

ProxyClassifier ProxyClassifier::clone() const {
    ProxyClassifier copy(embed_dim_);
    if (w_.defined()) copy.w_ = Tensor::from_values(w_.shape(), w_.values());
    return copy;
}

Tensor proxy_logits(Tensor z, Tensor proxies, double tau, Tape* tape) {
    if (tau <= 0.0) {
        throw std::invalid_argument("proxy_logits: tau must be positive, got " +
                                    std::to_string(tau));
    }
    return scale(matmul_nt(z, proxies, tape), 1.0 / tau, tape);
}

Tensor class_probabilities(Tensor z, const ProxyClassifier& clf, double tau) {
    if (clf.num_classes() == 0) {
        throw std::logic_error("class_probabilities: classifier has no classes yet");
    }
    return softmax_rows(proxy_logits(z, clf.proxies(), tau));
}

Tensor pcl_loss(Tensor z, const std::vector<std::size_t>& labels, Tensor proxies,
                double tau, const std::vector<std::size_t>& batch_classes, Tape* tape) {
    if (labels.empty()) throw std::invalid_argument("pcl_loss: empty batch");
    if (tau <= 0.0) {
        throw std::invalid_argument("pcl_loss: tau must be positive, got " +
                                    std::to_string(tau));
    }
    if (z.shape().size() != 2 || z.rows() != labels.size()) {
        throw ShapeError("pcl_loss: embeddings " + shape_str(z.shape()) + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    if (batch_classes.size() < 2) {
        throw std::invalid_argument(
                "pcl_loss: batch covers a single class, loss is degenerate");
    }
    if (!std::is_sorted(batch_classes.begin(), batch_classes.end()) ||
        std::adjacent_find(batch_classes.begin(), batch_classes.end()) !=
                batch_classes.end()) {
        throw std::invalid_argument("pcl_loss: batch_classes must be sorted and unique");
    }
    const std::size_t known = proxies.defined() ? proxies.rows() : 0;
    for (std::size_t c : batch_classes) {
        if (c >= known) {
            throw std::out_of_range("pcl_loss: class " + std::to_string(c) +
                                    " has no proxy (only " + std::to_string(known) +
                                    " known)");
        }
    }

    // map each label to its position among the batch classes
    std::vector<std::size_t> target_cols(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = std::lower_bound(batch_classes.begin(), batch_classes.end(), labels[i]);
        if (it == batch_classes.end() || *it != labels[i]) {
            throw std::invalid_argument("pcl_loss: label " + std::to_string(labels[i]) +
                                        " missing from batch_classes");
        }
        target_cols[i] = static_cast<std::size_t>(it - batch_classes.begin());
    }

    Tensor w_batch = take_rows(proxies, batch_classes, tape);
    Tensor logits = proxy_logits(z, w_batch, tau, tape);
    Tensor logp = log_softmax_rows(logits, tape);
    Tensor picked = pick_per_row(logp, std::move(target_cols), tape);
    return scale(sum(picked, tape), -1.0 / static_cast<double>(labels.size()), tape);
}

Tensor pcl_loss(Tensor z, const std::vector<std::size_t>& labels, Tensor proxies,
                double tau, Tape* tape) {
    std::set<std::size_t> uniq(labels.begin(), labels.end());
    return pcl_loss(std::move(z), labels, std::move(proxies), tau,
                    std::vector<std::size_t>(uniq.begin(), uniq.end()), tape);
}

Tensor ce_loss(Tensor z, const std::vector<std::size_t>& labels, Tensor proxies,
               Tape* tape) {
    const std::size_t known = proxies.defined() ? proxies.rows() : 0;
    std::vector<std::size_t> all(known);
    for (std::size_t c = 0; c < known; ++c) all[c] = c;
    return pcl_loss(std::move(z), labels, std::move(proxies), 1.0, all, tape);
}

void sgd_step(std::vector<Tensor> params, double lr) {
    if (lr <= 0.0) {
        throw std::invalid_argument("sgd_step: lr must be positive, got " +
                                    std::to_string(lr));
    }
    for (Tensor& p : params) {
        if (p.has_grad()) {
            const std::vector<double>& g = std::as_const(p).grad();
            for (std::size_t i = 0; i < p.size(); ++i) p.values()[i] -= lr * g[i];
        }
        p.zero_grad();
    }
}

namespace {

nlohmann::json tensor_to_json(const Tensor& t) {
    return {{"shape", t.shape()}, {"values", t.values()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
    return Tensor::from_values(j.at("shape").get<Shape>(),
                               j.at("values").get<std::vector<double>>());
}

}  // namespace

void save_checkpoint(const std::string& path, const Mlp& encoder,
                     const ProxyClassifier& clf) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["encoder"] = {{"input_dim", encoder.input_dim()},
                    {"hidden", encoder.hidden()},
                    {"embed_dim", encoder.embed_dim()}};
    nlohmann::json params = nlohmann::json::array();
    for (const Tensor& p : encoder.parameters()) params.push_back(tensor_to_json(p));
    j["encoder"]["params"] = std::move(params);
    j["proxies"] = {{"embed_dim", clf.embed_dim()}};
    if (clf.num_classes() > 0) j["proxies"]["w"] = tensor_to_json(clf.proxies());

    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (j.at("format_version").get<int>() != 1) {
        throw std::runtime_error("load_checkpoint: unsupported format version in " + path);
    }

    const auto& je = j.at("encoder");
    std::mt19937 scratch(0);
    Mlp encoder(je.at("input_dim").get<std::size_t>(),
                je.at("hidden").get<std::vector<std::size_t>>(),
                je.at("embed_dim").get<std::size_t>(), scratch);
    const auto& params = je.at("params");
    const std::size_t layers = encoder.weights().size();
    if (params.size() != 2 * layers) {
        throw std::runtime_error("load_checkpoint: parameter count mismatch in " + path);
    }
    for (std::size_t i = 0; i < layers; ++i) {
        Tensor w = tensor_from_json(params[2 * i]);
        Tensor b = tensor_from_json(params[2 * i + 1]);
        if (w.shape() != encoder.weights()[i].shape() ||
            b.shape() != encoder.biases()[i].shape()) {
            throw std::runtime_error("load_checkpoint: layer shape mismatch in " + path);
        }
        encoder.weights()[i] = w;
        encoder.biases()[i] = b;
    }

    ProxyClassifier clf(j.at("proxies").at("embed_dim").get<std::size_t>());
    if (j.at("proxies").contains("w")) clf.set_proxies(tensor_from_json(j["proxies"]["w"]));
    return Checkpoint{std::move(encoder), std::move(clf)};
}

}  // namespace acr
