#include "fast/autodiff.hpp"

#include <cmath>

namespace fast {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double gelu_val(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    const double phi = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * phi;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shapes " + a.shape_string() + " and " +
                         b.shape_string() + " differ");
    }
}

void check_probability(const Tensor& t, const char* name) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (t[i] < 0.0) throw UsageError(std::string("kl_divergence: ") + name + " has a negative entry");
        s += t[i];
    }
    if (std::abs(s - 1.0) > 1e-9) {
        throw UsageError(std::string("kl_divergence: ") + name + " sums to " + std::to_string(s) +
                         ", not 1");
    }
}

} // namespace

NodeId Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

NodeId Tape::leaf(Tensor value, bool trainable) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(value);
    n.needs_grad = trainable;
    return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
    check_same_shape(val(a), val(b), "add");
    Node n;
    n.op = Op::Add;
    n.inputs = {a, b};
    n.value = val(a);
    const Tensor& vb = val(b);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] += vb[i];
    n.needs_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

NodeId Tape::sub(NodeId a, NodeId b) {
    check_same_shape(val(a), val(b), "sub");
    Node n;
    n.op = Op::Sub;
    n.inputs = {a, b};
    n.value = val(a);
    const Tensor& vb = val(b);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] -= vb[i];
    n.needs_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

NodeId Tape::scale(NodeId a, double c) {
    Node n;
    n.op = Op::Scale;
    n.inputs = {a};
    n.c = c;
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] *= c;
    n.needs_grad = needs_grad(a);
    return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (va.cols() != vb.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, " + va.shape_string() + " * " +
                         vb.shape_string());
    }
    Node n;
    n.op = Op::Matmul;
    n.inputs = {a, b};
    n.value = Tensor({va.rows(), vb.cols()});
    mm_nn_acc(va.data(), vb.data(), n.value.data(), va.rows(), va.cols(), vb.cols());
    n.needs_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
    const Tensor& va = val(a);
    const Tensor& vb = val(b);
    if (va.cols() != vb.cols()) {
        throw ShapeError("matmul_nt: inner dimensions disagree, " + va.shape_string() + " * " +
                         vb.shape_string() + "^T");
    }
    Node n;
    n.op = Op::MatmulNT;
    n.inputs = {a, b};
    n.value = Tensor({va.rows(), vb.rows()});
    mm_nt_acc(va.data(), vb.data(), n.value.data(), va.rows(), va.cols(), vb.rows());
    n.needs_grad = needs_grad(a) || needs_grad(b);
    return push(std::move(n));
}

NodeId Tape::relu(NodeId a) {
    Node n;
    n.op = Op::Relu;
    n.inputs = {a};
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) {
        if (n.value[i] < 0.0) n.value[i] = 0.0;
    }
    n.needs_grad = needs_grad(a);
    return push(std::move(n));
}

NodeId Tape::gelu(NodeId a) {
    Node n;
    n.op = Op::Gelu;
    n.inputs = {a};
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] = gelu_val(n.value[i]);
    n.needs_grad = needs_grad(a);
    return push(std::move(n));
}

NodeId Tape::abs(NodeId a) {
    Node n;
    n.op = Op::Abs;
    n.inputs = {a};
    n.value = val(a);
    for (std::size_t i = 0; i < n.value.numel(); ++i) n.value[i] = std::abs(n.value[i]);
    n.needs_grad = needs_grad(a);
    return push(std::move(n));
}

NodeId Tape::softmax_rows(NodeId a) {
    Node n;
    n.op = Op::SoftmaxRows;
    n.inputs = {a};
    n.value = val(a);
    const std::size_t rows = n.value.rows();
    const std::size_t cols = n.value.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = n.value.data() + r * cols;
        double mx = row[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < cols; ++j) row[j] *= inv;
    }
    n.needs_grad = needs_grad(a);
    return push(std::move(n));
}

NodeId Tape::log_softmax_rows(NodeId a) {
    Node n;
    n.op = Op::LogSoftmaxRows;
    n.inputs = {a};
    n.value = val(a);
    const std::size_t rows = n.value.rows();
    const std::size_t cols = n.value.cols();
    for (std::size_t r = 0; r < rows; ++r) {
        double* row = n.value.data() + r * cols;
        double mx = row[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) sum += std::exp(row[j] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < cols; ++j) row[j] -= lse;
    }
    n.needs_grad = needs_grad(a);
    return push(std::move(n));
}

NodeId Tape::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor& vx = val(x);
    const Tensor& vg = val(gamma);
    const Tensor& vb = val(beta);
    const std::size_t rows = vx.rows();
    const std::size_t cols = vx.cols();
    if (vg.numel() != cols || vb.numel() != cols) {
        throw ShapeError("layer_norm: gamma/beta length must equal row width " + std::to_string(cols));
    }
    Node n;
    n.op = Op::LayerNorm;
    n.inputs = {x, gamma, beta};
    n.value = Tensor(vx.shape());
    Tensor xhat(vx.shape());
    Tensor inv_std({rows});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = vx.data() + r * cols;
        double mean = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mean += row[j];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < cols; ++j) {
            const double xh = (row[j] - mean) * is;
            xhat.data()[r * cols + j] = xh;
            n.value.data()[r * cols + j] = vg[j] * xh + vb[j];
        }
    }
    n.saved.push_back(std::move(xhat));
    n.saved.push_back(std::move(inv_std));
    n.needs_grad = needs_grad(x) || needs_grad(gamma) || needs_grad(beta);
    return push(std::move(n));
}

NodeId Tape::gather_rows(NodeId table, std::vector<std::size_t> rows) {
    const Tensor& vt = val(table);
    if (vt.rank() != 2) throw ShapeError("gather_rows: table must be rank 2");
    const std::size_t cols = vt.cols();
    Node n;
    n.op = Op::GatherRows;
    n.inputs = {table};
    n.value = Tensor({rows.size(), cols});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= vt.rows()) {
            throw ValidationError("gather_rows: row " + std::to_string(rows[i]) + " out of range " +
                                  std::to_string(vt.rows()));
        }
        const double* src = vt.data() + rows[i] * cols;
        double* dst = n.value.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) dst[j] = src[j];
    }
    n.idx = std::move(rows);
    n.needs_grad = needs_grad(table);
    return push(std::move(n));
}

NodeId Tape::slice_cols(NodeId a, std::size_t start, std::size_t count) {
    const Tensor& va = val(a);
    if (start + count > va.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") exceeds width " + std::to_string(va.cols()));
    }
    Node n;
    n.op = Op::SliceCols;
    n.inputs = {a};
    n.idx = {start, count};
    n.value = Tensor({va.rows(), count});
    for (std::size_t r = 0; r < va.rows(); ++r) {
        const double* src = va.data() + r * va.cols() + start;
        double* dst = n.value.data() + r * count;
        for (std::size_t j = 0; j < count; ++j) dst[j] = src[j];
    }
    n.needs_grad = needs_grad(a);
    return push(std::move(n));
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
    if (parts.empty()) throw UsageError("concat_cols: empty part list");
    const std::size_t rows = val(parts[0]).rows();
    std::size_t total = 0;
    for (NodeId p : parts) {
        if (val(p).rows() != rows) throw ShapeError("concat_cols: parts disagree on row count");
        total += val(p).cols();
    }
    Node n;
    n.op = Op::ConcatCols;
    n.inputs = parts;
    n.value = Tensor({rows, total});
    std::size_t off = 0;
    for (NodeId p : parts) {
        const Tensor& vp = val(p);
        for (std::size_t r = 0; r < rows; ++r) {
            const double* src = vp.data() + r * vp.cols();
            double* dst = n.value.data() + r * total + off;
            for (std::size_t j = 0; j < vp.cols(); ++j) dst[j] = src[j];
        }
        off += vp.cols();
        n.needs_grad = n.needs_grad || needs_grad(p);
    }
    return push(std::move(n));
}

NodeId Tape::pick(NodeId a, std::size_t flat_index) {
    const Tensor& va = val(a);
    if (flat_index >= va.numel()) {
        throw ValidationError("pick: index " + std::to_string(flat_index) + " out of range " +
                              std::to_string(va.numel()));
    }
    Node n;
    n.op = Op::Pick;
    n.inputs = {a};
    n.idx = {flat_index};
    n.value = Tensor::scalar(va[flat_index]);
    n.needs_grad = needs_grad(a);
    return push(std::move(n));
}

NodeId Tape::sum(NodeId a) {
    const Tensor& va = val(a);
    double s = 0.0;
    for (std::size_t i = 0; i < va.numel(); ++i) s += va[i];
    Node n;
    n.op = Op::Sum;
    n.inputs = {a};
    n.value = Tensor::scalar(s);
    n.needs_grad = needs_grad(a);
    return push(std::move(n));
}

NodeId Tape::nll_rows(NodeId log_probs, std::vector<std::size_t> targets) {
    const Tensor& lp = val(log_probs);
    if (targets.size() != lp.rows()) {
        throw ShapeError("nll_rows: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(lp.rows()) + " rows");
    }
    double s = 0.0;
    for (std::size_t r = 0; r < targets.size(); ++r) {
        if (targets[r] >= lp.cols()) throw ValidationError("nll_rows: target out of vocabulary range");
        s -= lp.at(r, targets[r]);
    }
    Node n;
    n.op = Op::NllRows;
    n.inputs = {log_probs};
    n.idx = std::move(targets);
    n.value = Tensor::scalar(s / static_cast<double>(lp.rows()));
    n.needs_grad = needs_grad(log_probs);
    return push(std::move(n));
}

NodeId Tape::kl_divergence(NodeId p, NodeId q) {
    const Tensor& vp = val(p);
    const Tensor& vq = val(q);
    check_same_shape(vp, vq, "kl_divergence");
    check_probability(vp, "p");
    check_probability(vq, "q");
    double s = 0.0;
    for (std::size_t i = 0; i < vp.numel(); ++i) {
        if (vp[i] > 0.0) s += vp[i] * std::log(vp[i] / std::max(vq[i], kKlFloor));
    }
    Node n;
    n.op = Op::KlDivergence;
    n.inputs = {p, q};
    n.value = Tensor::scalar(s);
    n.needs_grad = needs_grad(p) || needs_grad(q);
    return push(std::move(n));
}

GradMap Tape::backward(NodeId root) const {
    if (root >= nodes_.size()) throw UsageError("backward: unknown root node");
    if (val(root).numel() != 1) {
        throw UsageError("backward: root must be scalar, got shape " + val(root).shape_string());
    }
    GradMap grads(nodes_.size());
    if (!nodes_[root].needs_grad) return grads;
    grads.slot(root, val(root).shape())[0] = 1.0;

    for (std::size_t i = root + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (!n.needs_grad) continue;
        const Tensor* gp = grads.find(i);
        if (!gp) continue;
        const Tensor& g = *gp;

        auto acc = [&](NodeId in) -> Tensor* {
            if (!nodes_[in].needs_grad) return nullptr;
            return &grads.slot(in, val(in).shape());
        };

        switch (n.op) {
        case Op::Leaf:
            break;
        case Op::Add: {
            for (int k = 0; k < 2; ++k) {
                if (Tensor* ga = acc(n.inputs[k])) {
                    for (std::size_t j = 0; j < g.numel(); ++j) (*ga)[j] += g[j];
                }
            }
            break;
        }
        case Op::Sub: {
            if (Tensor* ga = acc(n.inputs[0])) {
                for (std::size_t j = 0; j < g.numel(); ++j) (*ga)[j] += g[j];
            }
            if (Tensor* gb = acc(n.inputs[1])) {
                for (std::size_t j = 0; j < g.numel(); ++j) (*gb)[j] -= g[j];
            }
            break;
        }
        case Op::Scale: {
            if (Tensor* ga = acc(n.inputs[0])) {
                for (std::size_t j = 0; j < g.numel(); ++j) (*ga)[j] += n.c * g[j];
            }
            break;
        }
        case Op::Matmul: {
            const Tensor& a = val(n.inputs[0]);
            const Tensor& b = val(n.inputs[1]);
            if (Tensor* ga = acc(n.inputs[0])) {
                mm_nt_acc(g.data(), b.data(), ga->data(), a.rows(), b.cols(), a.cols());
            }
            if (Tensor* gb = acc(n.inputs[1])) {
                mm_tn_acc(a.data(), g.data(), gb->data(), a.rows(), a.cols(), b.cols());
            }
            break;
        }
        case Op::MatmulNT: {
            const Tensor& a = val(n.inputs[0]);
            const Tensor& b = val(n.inputs[1]);
            if (Tensor* ga = acc(n.inputs[0])) {
                mm_nn_acc(g.data(), b.data(), ga->data(), a.rows(), b.rows(), a.cols());
            }
            if (Tensor* gb = acc(n.inputs[1])) {
                mm_tn_acc(g.data(), a.data(), gb->data(), a.rows(), b.rows(), a.cols());
            }
            break;
        }
        case Op::Relu: {
            if (Tensor* ga = acc(n.inputs[0])) {
                const Tensor& x = val(n.inputs[0]);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    if (x[j] > 0.0) (*ga)[j] += g[j];
                }
            }
            break;
        }
        case Op::Gelu: {
            if (Tensor* ga = acc(n.inputs[0])) {
                const Tensor& x = val(n.inputs[0]);
                for (std::size_t j = 0; j < g.numel(); ++j) (*ga)[j] += g[j] * gelu_grad(x[j]);
            }
            break;
        }
        case Op::Abs: {
            if (Tensor* ga = acc(n.inputs[0])) {
                const Tensor& x = val(n.inputs[0]);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    if (x[j] > 0.0) (*ga)[j] += g[j];
                    else if (x[j] < 0.0) (*ga)[j] -= g[j];
                }
            }
            break;
        }
        case Op::SoftmaxRows: {
            if (Tensor* ga = acc(n.inputs[0])) {
                const Tensor& s = n.value;
                const std::size_t rows = s.rows();
                const std::size_t cols = s.cols();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* srow = s.data() + r * cols;
                    const double* grow = g.data() + r * cols;
                    double dot = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) dot += srow[j] * grow[j];
                    double* garow = ga->data() + r * cols;
                    for (std::size_t j = 0; j < cols; ++j) garow[j] += srow[j] * (grow[j] - dot);
                }
            }
            break;
        }
        case Op::LogSoftmaxRows: {
            if (Tensor* ga = acc(n.inputs[0])) {
                const Tensor& ls = n.value;
                const std::size_t rows = ls.rows();
                const std::size_t cols = ls.cols();
                for (std::size_t r = 0; r < rows; ++r) {
                    const double* lrow = ls.data() + r * cols;
                    const double* grow = g.data() + r * cols;
                    double gsum = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) gsum += grow[j];
                    double* garow = ga->data() + r * cols;
                    for (std::size_t j = 0; j < cols; ++j) {
                        garow[j] += grow[j] - std::exp(lrow[j]) * gsum;
                    }
                }
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& xhat = n.saved[0];
            const Tensor& inv_std = n.saved[1];
            const Tensor& gamma = val(n.inputs[1]);
            const std::size_t rows = xhat.rows();
            const std::size_t cols = xhat.cols();
            Tensor* gx = acc(n.inputs[0]);
            Tensor* gg = acc(n.inputs[1]);
            Tensor* gb = acc(n.inputs[2]);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* xrow = xhat.data() + r * cols;
                const double* grow = g.data() + r * cols;
                if (gg) {
                    for (std::size_t j = 0; j < cols; ++j) (*gg)[j] += grow[j] * xrow[j];
                }
                if (gb) {
                    for (std::size_t j = 0; j < cols; ++j) (*gb)[j] += grow[j];
                }
                if (gx) {
                    double m1 = 0.0;
                    double m2 = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        const double dxh = grow[j] * gamma[j];
                        m1 += dxh;
                        m2 += dxh * xrow[j];
                    }
                    m1 /= static_cast<double>(cols);
                    m2 /= static_cast<double>(cols);
                    double* gxrow = gx->data() + r * cols;
                    for (std::size_t j = 0; j < cols; ++j) {
                        const double dxh = grow[j] * gamma[j];
                        gxrow[j] += inv_std[r] * (dxh - m1 - xrow[j] * m2);
                    }
                }
            }
            break;
        }
        case Op::GatherRows: {
            if (Tensor* gt = acc(n.inputs[0])) {
                const std::size_t cols = n.value.cols();
                for (std::size_t i2 = 0; i2 < n.idx.size(); ++i2) {
                    double* dst = gt->data() + n.idx[i2] * cols;
                    const double* src = g.data() + i2 * cols;
                    for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
                }
            }
            break;
        }
        case Op::SliceCols: {
            if (Tensor* ga = acc(n.inputs[0])) {
                const std::size_t start = n.idx[0];
                const std::size_t count = n.idx[1];
                const std::size_t w = ga->cols();
                for (std::size_t r = 0; r < g.rows(); ++r) {
                    double* dst = ga->data() + r * w + start;
                    const double* src = g.data() + r * count;
                    for (std::size_t j = 0; j < count; ++j) dst[j] += src[j];
                }
            }
            break;
        }
        case Op::ConcatCols: {
            std::size_t off = 0;
            const std::size_t total = n.value.cols();
            for (NodeId in : n.inputs) {
                const std::size_t w = val(in).cols();
                if (Tensor* gp2 = acc(in)) {
                    for (std::size_t r = 0; r < g.rows(); ++r) {
                        double* dst = gp2->data() + r * w;
                        const double* src = g.data() + r * total + off;
                        for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
                    }
                }
                off += w;
            }
            break;
        }
        case Op::Pick: {
            if (Tensor* ga = acc(n.inputs[0])) {
                (*ga)[n.idx[0]] += g[0];
            }
            break;
        }
        case Op::Sum: {
            if (Tensor* ga = acc(n.inputs[0])) {
                for (std::size_t j = 0; j < ga->numel(); ++j) (*ga)[j] += g[0];
            }
            break;
        }
        case Op::NllRows: {
            if (Tensor* ga = acc(n.inputs[0])) {
                const double s = -g[0] / static_cast<double>(n.idx.size());
                const std::size_t cols = ga->cols();
                for (std::size_t r = 0; r < n.idx.size(); ++r) {
                    ga->data()[r * cols + n.idx[r]] += s;
                }
            }
            break;
        }
        case Op::KlDivergence: {
            const Tensor& p = val(n.inputs[0]);
            const Tensor& q = val(n.inputs[1]);
            if (Tensor* gp2 = acc(n.inputs[0])) {
                for (std::size_t j = 0; j < p.numel(); ++j) {
                    (*gp2)[j] += g[0] * (std::log(std::max(p[j], kKlFloor) / std::max(q[j], kKlFloor)) + 1.0);
                }
            }
            if (Tensor* gq = acc(n.inputs[1])) {
                for (std::size_t j = 0; j < q.numel(); ++j) {
                    if (q[j] >= kKlFloor && p[j] > 0.0) (*gq)[j] -= g[0] * p[j] / q[j];
                }
            }
            break;
        }
        }
    }
    return grads;
}

} // namespace fast
