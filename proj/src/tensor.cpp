#include "acr/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>

namespace acr {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};

std::size_t shape_product(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void require_same_shape(Tensor a, Tensor b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

void require_2d(const Tensor& t, const char* op) {
    if (t.shape().size() != 2) {
        throw ShapeError(std::string(op) + ": expected a 2-d tensor, got shape " +
                         shape_str(t.shape()));
    }
}

}  // namespace

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Payload& Tensor::payload() {
    if (!p_) throw std::logic_error("use of an undefined Tensor");
    return *p_;
}

const Tensor::Payload& Tensor::payload() const {
    if (!p_) throw std::logic_error("use of an undefined Tensor");
    return *p_;
}

Tensor Tensor::zeros(Shape shape) {
    return full(std::move(shape), 0.0);
}

Tensor Tensor::full(Shape shape, double value) {
    auto p = std::make_shared<Payload>();
    p->values.assign(shape_product(shape), value);
    p->shape = std::move(shape);
    p->id = g_next_node_id.fetch_add(1);
    return Tensor(std::move(p));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values) {
    if (shape_product(shape) != values.size()) {
        throw ShapeError("from_values: shape " + shape_str(shape) + " needs " +
                         std::to_string(shape_product(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    auto p = std::make_shared<Payload>();
    p->shape = std::move(shape);
    p->values = std::move(values);
    p->id = g_next_node_id.fetch_add(1);
    return Tensor(std::move(p));
}

Tensor Tensor::scalar(double value) {
    return from_values({1}, {value});
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, std::mt19937& rng) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_product(shape));
    for (double& x : v) x = dist(rng);
    return from_values(std::move(shape), std::move(v));
}

const Shape& Tensor::shape() const { return payload().shape; }

std::size_t Tensor::size() const { return payload().values.size(); }

std::size_t Tensor::rows() const {
    require_2d(*this, "rows");
    return shape()[0];
}

std::size_t Tensor::cols() const {
    require_2d(*this, "cols");
    return shape()[1];
}

double Tensor::at(std::size_t r, std::size_t c) const {
    require_2d(*this, "at");
    return payload().values[r * shape()[1] + c];
}

std::uint64_t Tensor::node_id() const { return payload().id; }

std::vector<double>& Tensor::values() { return payload().values; }

const std::vector<double>& Tensor::values() const { return payload().values; }

double Tensor::value() const {
    if (size() != 1) {
        throw std::logic_error("value(): tensor of shape " + shape_str(shape()) +
                               " is not a scalar");
    }
    return payload().values[0];
}

bool Tensor::has_grad() const { return !payload().grad.empty(); }

std::vector<double>& Tensor::grad() {
    auto& p = payload();
    if (p.grad.empty()) p.grad.assign(p.values.size(), 0.0);
    return p.grad;
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw std::logic_error("grad(): no gradient recorded for this tensor");
    return payload().grad;
}

void Tensor::zero_grad() {
    auto& p = payload();
    p.grad.assign(p.values.size(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : payload().values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tape::record(std::function<void()> pull) {
    entries_.push_back(std::move(pull));
}

void Tape::backward(const Tensor& loss) {
    if (consumed_) {
        throw std::logic_error("Tape::backward called twice on the same tape");
    }
    if (loss.size() != 1) {
        throw std::logic_error("Tape::backward requires a scalar loss, got shape " +
                               shape_str(loss.shape()));
    }
    consumed_ = true;
    Tensor seed = loss;
    seed.grad()[0] += 1.0;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

// ---- primitive ops ---------------------------------------------------------

Tensor matmul(Tensor a, Tensor b, Tape* tape) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
    Tensor y = Tensor::zeros({m, n});
    {
        const double* pa = a.values().data();
        const double* pb = b.values().data();
        double* py = y.values().data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double aik = pa[i * k + kk];
                const double* brow = pb + kk * n;
                double* yrow = py + i * n;
                for (std::size_t j = 0; j < n; ++j) yrow[j] += aik * brow[j];
            }
        }
    }
    if (tape) {
        tape->record([a, b, y, m, k, n]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            const double* pa = a.values().data();
            const double* pb = b.values().data();
            double* ga = a.grad().data();
            double* gb = b.grad().data();
            // dL/da = dL/dy · b^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t kk = 0; kk < k; ++kk) {
                    double acc = 0.0;
                    const double* gyrow = gy + i * n;
                    const double* brow = pb + kk * n;
                    for (std::size_t j = 0; j < n; ++j) acc += gyrow[j] * brow[j];
                    ga[i * k + kk] += acc;
                }
            }
            // dL/db = a^T · dL/dy
            for (std::size_t kk = 0; kk < k; ++kk) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double aik = pa[i * k + kk];
                    const double* gyrow = gy + i * n;
                    double* gbrow = gb + kk * n;
                    for (std::size_t j = 0; j < n; ++j) gbrow[j] += aik * gyrow[j];
                }
            }
        });
    }
    return y;
}

Tensor matmul_nt(Tensor a, Tensor b, Tape* tape) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) {
        throw ShapeError("matmul_nt: contraction dimensions disagree, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor y = Tensor::zeros({m, n});
    {
        const double* pa = a.values().data();
        const double* pb = b.values().data();
        double* py = y.values().data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                const double* arow = pa + i * k;
                const double* brow = pb + j * k;
                for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
                py[i * n + j] = acc;
            }
        }
    }
    if (tape) {
        tape->record([a, b, y, m, k, n]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            const double* pa = a.values().data();
            const double* pb = b.values().data();
            double* ga = a.grad().data();
            double* gb = b.grad().data();
            // y = a·b^T: dL/da = dL/dy · b, dL/db = (dL/dy)^T · a
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double g = gy[i * n + j];
                    if (g == 0.0) continue;
                    const double* brow = pb + j * k;
                    double* garow = ga + i * k;
                    for (std::size_t kk = 0; kk < k; ++kk) garow[kk] += g * brow[kk];
                }
            }
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t i = 0; i < m; ++i) {
                    const double g = gy[i * n + j];
                    if (g == 0.0) continue;
                    const double* arow = pa + i * k;
                    double* gbrow = gb + j * k;
                    for (std::size_t kk = 0; kk < k; ++kk) gbrow[kk] += g * arow[kk];
                }
            }
        });
    }
    return y;
}

namespace {

using FwdFn = double (*)(double, double);
using PullFn = void (*)(double g, double x, double y, double& ga, double& gb);

Tensor binary_elementwise(Tensor a, Tensor b, Tape* tape, const char* name,
                          FwdFn fwd, PullFn pull) {
    require_same_shape(a, b, name);
    Tensor y = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) y.values()[i] = fwd(a.values()[i], b.values()[i]);
    if (tape) {
        tape->record([a, b, y, n, pull]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            double* ga = a.grad().data();
            double* gb = b.grad().data();
            const double* pa = a.values().data();
            const double* pb = b.values().data();
            for (std::size_t i = 0; i < n; ++i) pull(gy[i], pa[i], pb[i], ga[i], gb[i]);
        });
    }
    return y;
}

}  // namespace

Tensor add(Tensor a, Tensor b, Tape* tape) {
    return binary_elementwise(
            a, b, tape, "add", [](double x, double y) { return x + y; },
            [](double g, double, double, double& ga, double& gb) {
                ga += g;
                gb += g;
            });
}

Tensor sub(Tensor a, Tensor b, Tape* tape) {
    return binary_elementwise(
            a, b, tape, "sub", [](double x, double y) { return x - y; },
            [](double g, double, double, double& ga, double& gb) {
                ga += g;
                gb -= g;
            });
}

Tensor mul(Tensor a, Tensor b, Tape* tape) {
    return binary_elementwise(
            a, b, tape, "mul", [](double x, double y) { return x * y; },
            [](double g, double x, double y, double& ga, double& gb) {
                ga += g * y;
                gb += g * x;
            });
}

Tensor scale(Tensor a, double factor, Tape* tape) {
    Tensor y = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) y.values()[i] = factor * a.values()[i];
    if (tape) {
        tape->record([a, y, n, factor]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            double* ga = a.grad().data();
            for (std::size_t i = 0; i < n; ++i) ga[i] += factor * gy[i];
        });
    }
    return y;
}

Tensor relu(Tensor a, Tape* tape) {
    Tensor y = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) y.values()[i] = std::max(0.0, a.values()[i]);
    if (tape) {
        tape->record([a, y, n]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            const double* pa = a.values().data();
            double* ga = a.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                if (pa[i] > 0.0) ga[i] += gy[i];
            }
        });
    }
    return y;
}

Tensor exp_elem(Tensor a, Tape* tape) {
    Tensor y = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) y.values()[i] = std::exp(a.values()[i]);
    if (tape) {
        tape->record([a, y, n]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            const double* py = y.values().data();
            double* ga = a.grad().data();
            for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i] * py[i];
        });
    }
    return y;
}

Tensor log_elem(Tensor a, Tape* tape) {
    Tensor y = Tensor::zeros(a.shape());
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.values()[i];
        if (x <= 0.0) {
            throw std::domain_error("log_elem: non-positive input " + std::to_string(x));
        }
        y.values()[i] = std::log(x);
    }
    if (tape) {
        tape->record([a, y, n]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            const double* pa = a.values().data();
            double* ga = a.grad().data();
            for (std::size_t i = 0; i < n; ++i) ga[i] += gy[i] / pa[i];
        });
    }
    return y;
}

Tensor add_row_bias(Tensor x, Tensor bias, Tape* tape) {
    require_2d(x, "add_row_bias");
    const std::size_t n = x.rows(), d = x.cols();
    if (bias.size() != d) {
        throw ShapeError("add_row_bias: bias " + shape_str(bias.shape()) +
                         " does not match row width of " + shape_str(x.shape()));
    }
    Tensor y = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            y.values()[i * d + j] = x.values()[i * d + j] + bias.values()[j];
        }
    }
    if (tape) {
        tape->record([x, bias, y, n, d]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            double* gx = x.grad().data();
            double* gb = bias.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < d; ++j) {
                    gx[i * d + j] += gy[i * d + j];
                    gb[j] += gy[i * d + j];
                }
            }
        });
    }
    return y;
}

namespace {

// shared forward kernel: log_softmax per row with max subtraction
void log_softmax_forward(Tensor logits, std::vector<double>& out) {
    const std::size_t n = logits.rows(), c = logits.cols();
    out.resize(n * c);
    const double* in = logits.values().data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = in + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        const double lse = mx + std::log(denom);
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lse;
    }
}

}  // namespace

Tensor softmax_rows(Tensor logits, Tape* tape) {
    require_2d(logits, "softmax_rows");
    const std::size_t n = logits.rows(), c = logits.cols();
    std::vector<double> lsm;
    log_softmax_forward(logits, lsm);
    for (double& v : lsm) v = std::exp(v);
    Tensor y = Tensor::from_values({n, c}, std::move(lsm));
    if (tape) {
        tape->record([logits, y, n, c]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            const double* py = y.values().data();
            double* gx = logits.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += gy[i * c + j] * py[i * c + j];
                for (std::size_t j = 0; j < c; ++j) {
                    gx[i * c + j] += py[i * c + j] * (gy[i * c + j] - dot);
                }
            }
        });
    }
    return y;
}

Tensor log_softmax_rows(Tensor logits, Tape* tape) {
    require_2d(logits, "log_softmax_rows");
    const std::size_t n = logits.rows(), c = logits.cols();
    std::vector<double> lsm;
    log_softmax_forward(logits, lsm);
    Tensor y = Tensor::from_values({n, c}, std::move(lsm));
    if (tape) {
        tape->record([logits, y, n, c]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            const double* py = y.values().data();
            double* gx = logits.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                double gsum = 0.0;
                for (std::size_t j = 0; j < c; ++j) gsum += gy[i * c + j];
                for (std::size_t j = 0; j < c; ++j) {
                    gx[i * c + j] += gy[i * c + j] - std::exp(py[i * c + j]) * gsum;
                }
            }
        });
    }
    return y;
}

Tensor l2_normalize_rows(Tensor x, Tape* tape) {
    require_2d(x, "l2_normalize_rows");
    const std::size_t n = x.rows(), d = x.cols();
    Tensor y = Tensor::zeros(x.shape());
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += x.at(i, j) * x.at(i, j);
        norms[i] = std::max(std::sqrt(s), 1e-12);
        for (std::size_t j = 0; j < d; ++j) y.values()[i * d + j] = x.at(i, j) / norms[i];
    }
    if (tape) {
        tape->record([x, y, norms, n, d]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            const double* py = y.values().data();
            double* gx = x.grad().data();
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < d; ++j) dot += gy[i * d + j] * py[i * d + j];
                for (std::size_t j = 0; j < d; ++j) {
                    gx[i * d + j] += (gy[i * d + j] - py[i * d + j] * dot) / norms[i];
                }
            }
        });
    }
    return y;
}

Tensor take_rows(Tensor m, std::vector<std::size_t> row_idx, Tape* tape) {
    require_2d(m, "take_rows");
    const std::size_t d = m.cols();
    for (std::size_t r : row_idx) {
        if (r >= m.rows()) {
            throw ShapeError("take_rows: row " + std::to_string(r) + " out of range for " +
                             shape_str(m.shape()));
        }
    }
    Tensor y = Tensor::zeros({row_idx.size(), d});
    for (std::size_t i = 0; i < row_idx.size(); ++i) {
        const double* src = m.values().data() + row_idx[i] * d;
        std::copy(src, src + d, y.values().data() + i * d);
    }
    if (tape) {
        tape->record([m, y, row_idx = std::move(row_idx), d]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            double* gm = m.grad().data();
            for (std::size_t i = 0; i < row_idx.size(); ++i) {
                double* dst = gm + row_idx[i] * d;
                for (std::size_t j = 0; j < d; ++j) dst[j] += gy[i * d + j];
            }
        });
    }
    return y;
}

Tensor pick_per_row(Tensor m, std::vector<std::size_t> col_idx, Tape* tape) {
    require_2d(m, "pick_per_row");
    const std::size_t n = m.rows(), c = m.cols();
    if (col_idx.size() != n) {
        throw ShapeError("pick_per_row: " + std::to_string(col_idx.size()) +
                         " indices for " + std::to_string(n) + " rows");
    }
    for (std::size_t j : col_idx) {
        if (j >= c) {
            throw ShapeError("pick_per_row: column " + std::to_string(j) +
                             " out of range for " + shape_str(m.shape()));
        }
    }
    Tensor y = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) y.values()[i] = m.values()[i * c + col_idx[i]];
    if (tape) {
        tape->record([m, y, col_idx = std::move(col_idx), n, c]() mutable {
            if (!y.has_grad()) return;
            const double* gy = y.grad().data();
            double* gm = m.grad().data();
            for (std::size_t i = 0; i < n; ++i) gm[i * c + col_idx[i]] += gy[i];
        });
    }
    return y;
}

Tensor sum(Tensor a, Tape* tape) {
    double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    Tensor y = Tensor::scalar(s);
    if (tape) {
        tape->record([a, y]() mutable {
            if (!y.has_grad()) return;
            const double g = y.grad()[0];
            double* ga = a.grad().data();
            for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g;
        });
    }
    return y;
}

Tensor mean(Tensor a, Tape* tape) {
    if (a.size() == 0) throw ShapeError("mean: empty tensor");
    const double inv = 1.0 / static_cast<double>(a.size());
    double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    Tensor y = Tensor::scalar(s * inv);
    if (tape) {
        tape->record([a, y, inv]() mutable {
            if (!y.has_grad()) return;
            const double g = y.grad()[0] * inv;
            double* ga = a.grad().data();
            for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g;
        });
    }
    return y;
}

}  // namespace acr
