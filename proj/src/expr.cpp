#include "decreg/expr.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace decreg {

namespace {

int64_t prod(const std::vector<int64_t>& dims, size_t from, size_t to) {
    int64_t p = 1;
    for (size_t i = from; i < to; ++i) p *= dims[i];
    return p;
}

bool is_suffix(const std::vector<int64_t>& small, const std::vector<int64_t>& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

std::shared_ptr<ExprNode> make_node(OpKind op, std::vector<Expr> inputs, std::vector<int64_t> shape) {
    auto n = std::make_shared<ExprNode>();
    n->op = op;
    n->inputs = std::move(inputs);
    n->shape = std::move(shape);
    return n;
}

// C[m,n] += A[m,k] * B[k,n]
void mm_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + p * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
void mm_nt_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        double* c = C + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const double* b = B + j * k;
            double acc = 0.0;
            for (int64_t p = 0; p < k; ++p) acc += a[p] * b[p];
            c[j] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn_acc(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* a = A + i * k;
        const double* b = B + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = a[p];
            double* c = C + p * n;
            for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace

const char* ExprNode::op_name() const {
    switch (op) {
        case OpKind::kInput: return "input";
        case OpKind::kConst: return "const";
        case OpKind::kAdd: return "add";
        case OpKind::kMul: return "mul";
        case OpKind::kDiv: return "div";
        case OpKind::kScale: return "scale";
        case OpKind::kAddScalar: return "add_scalar";
        case OpKind::kMatmul: return "matmul";
        case OpKind::kTransposeLast2: return "transpose_last2";
        case OpKind::kRelu: return "relu";
        case OpKind::kSigmoid: return "sigmoid";
        case OpKind::kElu: return "elu";
        case OpKind::kExp: return "exp";
        case OpKind::kLog: return "log";
        case OpKind::kSoftmaxLast: return "softmax_last";
        case OpKind::kLogSoftmaxLast: return "log_softmax_last";
        case OpKind::kLogSumExpLast: return "logsumexp_last";
        case OpKind::kLayerNorm: return "layer_norm";
        case OpKind::kEmbedding: return "embedding";
        case OpKind::kConcat: return "concat";
        case OpKind::kSlice: return "slice";
        case OpKind::kReshape: return "reshape";
        case OpKind::kReduceSum: return "reduce_sum";
        case OpKind::kReduceMean: return "reduce_mean";
        case OpKind::kGatherLast: return "gather_last";
    }
    return "?";
}

Expr input(std::string name, std::vector<int64_t> shape) {
    Tensor::shape_numel(shape);
    auto n = make_node(OpKind::kInput, {}, std::move(shape));
    n->name = std::move(name);
    return n;
}

Expr constant(Tensor value) {
    auto n = make_node(OpKind::kConst, {}, value.shape());
    n->value = std::move(value);
    return n;
}

static Expr broadcast_binary(OpKind op, Expr a, Expr b) {
    if (Tensor::shape_numel(b->shape) > Tensor::shape_numel(a->shape)) std::swap(a, b);
    if (!is_suffix(b->shape, a->shape))
        throw ConfigError(std::string(a->op_name()) + shape_str(a->shape) + " and " + b->op_name() +
                          shape_str(b->shape) + " are not broadcast-compatible");
    auto shape = a->shape;
    return make_node(op, {std::move(a), std::move(b)}, std::move(shape));
}

Expr add(Expr a, Expr b) { return broadcast_binary(OpKind::kAdd, std::move(a), std::move(b)); }
Expr mul(Expr a, Expr b) { return broadcast_binary(OpKind::kMul, std::move(a), std::move(b)); }
Expr sub(Expr a, Expr b) { return add(std::move(a), scale(std::move(b), -1.0)); }

Expr div(Expr a, Expr b) {
    if (a->shape != b->shape) throw ConfigError("div requires equal shapes");
    auto shape = a->shape;
    return make_node(OpKind::kDiv, {std::move(a), std::move(b)}, std::move(shape));
}

Expr scale(Expr a, double c) {
    auto shape = a->shape;
    auto n = make_node(OpKind::kScale, {std::move(a)}, std::move(shape));
    n->scalar = c;
    return n;
}

Expr add_scalar(Expr a, double c) {
    auto shape = a->shape;
    auto n = make_node(OpKind::kAddScalar, {std::move(a)}, std::move(shape));
    n->scalar = c;
    return n;
}

Expr matmul(Expr a, Expr b) {
    const auto& sa = a->shape;
    const auto& sb = b->shape;
    std::vector<int64_t> out;
    if (sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0]) {
        out = {sa[0], sb[1]};
    } else if (sa.size() == 3 && sb.size() == 2 && sa[2] == sb[0]) {
        out = {sa[0], sa[1], sb[1]};
    } else if (sa.size() == 3 && sb.size() == 3 && sa[0] == sb[0] && sa[2] == sb[1]) {
        out = {sa[0], sa[1], sb[2]};
    } else {
        throw ConfigError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
    }
    return make_node(OpKind::kMatmul, {std::move(a), std::move(b)}, std::move(out));
}

Expr transpose_last2(Expr a) {
    if (a->shape.size() < 2) throw ConfigError("transpose_last2 requires rank >= 2");
    auto shape = a->shape;
    std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
    return make_node(OpKind::kTransposeLast2, {std::move(a)}, std::move(shape));
}

static Expr unary(OpKind op, Expr a) {
    auto shape = a->shape;
    return make_node(op, {std::move(a)}, std::move(shape));
}

Expr relu(Expr a) { return unary(OpKind::kRelu, std::move(a)); }
Expr sigmoid(Expr a) { return unary(OpKind::kSigmoid, std::move(a)); }
Expr elu(Expr a) { return unary(OpKind::kElu, std::move(a)); }
Expr exp(Expr a) { return unary(OpKind::kExp, std::move(a)); }
Expr log(Expr a) { return unary(OpKind::kLog, std::move(a)); }

static Expr lastaxis(OpKind op, Expr a) {
    if (a->shape.empty()) throw ConfigError("last-axis op requires rank >= 1");
    auto shape = a->shape;
    if (op == OpKind::kLogSumExpLast) shape.pop_back();
    return make_node(op, {std::move(a)}, std::move(shape));
}

Expr softmax_last(Expr a) { return lastaxis(OpKind::kSoftmaxLast, std::move(a)); }
Expr log_softmax_last(Expr a) { return lastaxis(OpKind::kLogSoftmaxLast, std::move(a)); }
Expr logsumexp_last(Expr a) { return lastaxis(OpKind::kLogSumExpLast, std::move(a)); }

Expr layer_norm(Expr x, Expr gamma, Expr beta, double eps) {
    if (x->shape.empty()) throw ConfigError("layer_norm requires rank >= 1");
    const int64_t d = x->shape.back();
    if (gamma->shape != std::vector<int64_t>{d} || beta->shape != std::vector<int64_t>{d})
        throw ConfigError("layer_norm: gamma/beta must have shape [last_dim]");
    auto shape = x->shape;
    auto n = make_node(OpKind::kLayerNorm, {std::move(x), std::move(gamma), std::move(beta)}, std::move(shape));
    n->scalar = eps;
    return n;
}

Expr embedding(Expr table, std::vector<int64_t> ids, std::vector<int64_t> ids_shape) {
    if (table->shape.size() != 2) throw ConfigError("embedding table must be rank 2");
    if (Tensor::shape_numel(ids_shape) != static_cast<int64_t>(ids.size()))
        throw ConfigError("embedding: ids length does not match ids shape");
    auto shape = ids_shape;
    shape.push_back(table->shape[1]);
    auto n = make_node(OpKind::kEmbedding, {std::move(table)}, std::move(shape));
    n->ids = std::move(ids);
    return n;
}

Expr concat(std::vector<Expr> parts, int64_t axis) {
    if (parts.empty()) throw ConfigError("concat of zero parts");
    auto shape = parts[0]->shape;
    if (axis < 0 || axis >= static_cast<int64_t>(shape.size())) throw ConfigError("concat: bad axis");
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p->shape.size() != shape.size()) throw ConfigError("concat: rank mismatch");
        for (size_t i = 0; i < shape.size(); ++i)
            if (static_cast<int64_t>(i) != axis && p->shape[i] != shape[i])
                throw ConfigError("concat: dimension mismatch off the concat axis");
        total += p->shape[static_cast<size_t>(axis)];
    }
    shape[static_cast<size_t>(axis)] = total;
    auto n = make_node(OpKind::kConcat, std::move(parts), std::move(shape));
    n->axis = axis;
    return n;
}

Expr slice(Expr a, int64_t axis, int64_t start, int64_t length) {
    const auto& s = a->shape;
    if (axis < 0 || axis >= static_cast<int64_t>(s.size())) throw ConfigError("slice: bad axis");
    if (start < 0 || length <= 0 || start + length > s[static_cast<size_t>(axis)])
        throw ConfigError("slice: range out of bounds");
    auto shape = s;
    shape[static_cast<size_t>(axis)] = length;
    auto n = make_node(OpKind::kSlice, {std::move(a)}, std::move(shape));
    n->axis = axis;
    n->start = start;
    n->length = length;
    return n;
}

Expr reshape(Expr a, std::vector<int64_t> shape) {
    if (Tensor::shape_numel(shape) != Tensor::shape_numel(a->shape))
        throw ConfigError("reshape: element count mismatch");
    return make_node(OpKind::kReshape, {std::move(a)}, std::move(shape));
}

static Expr reduce(OpKind op, Expr a, int64_t axis) {
    const auto& s = a->shape;
    if (axis < 0 || axis >= static_cast<int64_t>(s.size())) throw ConfigError("reduce: bad axis");
    std::vector<int64_t> shape;
    for (size_t i = 0; i < s.size(); ++i)
        if (static_cast<int64_t>(i) != axis) shape.push_back(s[i]);
    auto n = make_node(op, {std::move(a)}, std::move(shape));
    n->axis = axis;
    return n;
}

Expr reduce_sum(Expr a, int64_t axis) { return reduce(OpKind::kReduceSum, std::move(a), axis); }
Expr reduce_mean(Expr a, int64_t axis) { return reduce(OpKind::kReduceMean, std::move(a), axis); }

Expr gather_last(Expr a, std::vector<int64_t> ids) {
    const auto& s = a->shape;
    if (s.empty()) throw ConfigError("gather_last requires rank >= 1");
    std::vector<int64_t> shape(s.begin(), s.end() - 1);
    if (Tensor::shape_numel(shape) != static_cast<int64_t>(ids.size()))
        throw ConfigError("gather_last: ids length mismatch");
    auto n = make_node(OpKind::kGatherLast, {std::move(a)}, std::move(shape));
    n->ids = std::move(ids);
    return n;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

std::vector<const ExprNode*> topo_order(const ExprNode* root) {
    std::vector<const ExprNode*> order;
    std::unordered_set<const ExprNode*> seen;
    // Iterative post-order DFS.
    std::vector<std::pair<const ExprNode*, size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            const ExprNode* child = node->inputs[next].get();
            ++next;
            if (seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

using ValueMap = std::unordered_map<const ExprNode*, Tensor>;

void forward_node(const ExprNode* n, ValueMap& vals, const Bindings& bindings) {
    auto in = [&](size_t i) -> const Tensor& { return vals.at(n->inputs[i].get()); };
    switch (n->op) {
        case OpKind::kInput: {
            auto it = bindings.find(n->name);
            if (it == bindings.end()) throw ConfigError("unbound leaf '" + n->name + "'");
            if (it->second.shape() != n->shape)
                throw ConfigError("leaf '" + n->name + "' bound with shape mismatch: expected " +
                                  shape_str(n->shape) + ", got " + shape_str(it->second.shape()));
            vals.emplace(n, it->second);
            return;
        }
        case OpKind::kConst:
            vals.emplace(n, n->value);
            return;
        case OpKind::kAdd:
        case OpKind::kMul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            Tensor out = Tensor::zeros_like(a);
            const int64_t an = a.numel(), bn = b.numel();
            const double* ap = a.data();
            const double* bp = b.data();
            double* op = out.data();
            if (n->op == OpKind::kAdd) {
                for (int64_t i = 0; i < an; ++i) op[i] = ap[i] + bp[i % bn];
            } else {
                for (int64_t i = 0; i < an; ++i) op[i] = ap[i] * bp[i % bn];
            }
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kDiv: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            Tensor out = Tensor::zeros_like(a);
            for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] / b[i];
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kScale: {
            const Tensor& a = in(0);
            Tensor out = Tensor::zeros_like(a);
            for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * n->scalar;
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kAddScalar: {
            const Tensor& a = in(0);
            Tensor out = Tensor::zeros_like(a);
            for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + n->scalar;
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kMatmul: {
            const Tensor& a = in(0);
            const Tensor& b = in(1);
            Tensor out(n->shape);
            const auto& sa = a.shape();
            const auto& sb = b.shape();
            if (sa.size() == 2) {
                mm_acc(a.data(), b.data(), out.data(), sa[0], sa[1], sb[1]);
            } else if (sb.size() == 2) {
                mm_acc(a.data(), b.data(), out.data(), sa[0] * sa[1], sa[2], sb[1]);
            } else {
                const int64_t bsz = sa[0], m = sa[1], k = sa[2], nn = sb[2];
                for (int64_t bi = 0; bi < bsz; ++bi)
                    mm_acc(a.data() + bi * m * k, b.data() + bi * k * nn, out.data() + bi * m * nn, m, k, nn);
            }
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kTransposeLast2: {
            const Tensor& a = in(0);
            const auto& s = a.shape();
            const int64_t r = s[s.size() - 2], c = s.back();
            const int64_t batch = a.numel() / (r * c);
            Tensor out(n->shape);
            for (int64_t bi = 0; bi < batch; ++bi) {
                const double* ap = a.data() + bi * r * c;
                double* op = out.data() + bi * r * c;
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j) op[j * r + i] = ap[i * c + j];
            }
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kRelu: {
            const Tensor& a = in(0);
            Tensor out = Tensor::zeros_like(a);
            for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] > 0 ? a[i] : 0.0;
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kSigmoid: {
            const Tensor& a = in(0);
            Tensor out = Tensor::zeros_like(a);
            for (int64_t i = 0; i < a.numel(); ++i) {
                const double x = a[i];
                out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            }
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kElu: {
            const Tensor& a = in(0);
            Tensor out = Tensor::zeros_like(a);
            for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] > 0 ? a[i] : std::expm1(a[i]);
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kExp: {
            const Tensor& a = in(0);
            Tensor out = Tensor::zeros_like(a);
            for (int64_t i = 0; i < a.numel(); ++i) out[i] = std::exp(a[i]);
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kLog: {
            const Tensor& a = in(0);
            Tensor out = Tensor::zeros_like(a);
            for (int64_t i = 0; i < a.numel(); ++i) {
                if (a[i] <= 0.0) throw DataError("log of non-positive value");
                out[i] = std::log(a[i]);
            }
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kSoftmaxLast:
        case OpKind::kLogSoftmaxLast: {
            const Tensor& a = in(0);
            const int64_t d = a.shape().back();
            const int64_t rows = a.numel() / d;
            Tensor out = Tensor::zeros_like(a);
            for (int64_t r = 0; r < rows; ++r) {
                const double* x = a.data() + r * d;
                double* o = out.data() + r * d;
                double m = x[0];
                for (int64_t j = 1; j < d; ++j) m = std::max(m, x[j]);
                double s = 0.0;
                for (int64_t j = 0; j < d; ++j) s += std::exp(x[j] - m);
                if (n->op == OpKind::kSoftmaxLast) {
                    for (int64_t j = 0; j < d; ++j) o[j] = std::exp(x[j] - m) / s;
                } else {
                    const double ls = std::log(s);
                    for (int64_t j = 0; j < d; ++j) o[j] = x[j] - m - ls;
                }
            }
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kLogSumExpLast: {
            const Tensor& a = in(0);
            const int64_t d = a.shape().back();
            const int64_t rows = a.numel() / d;
            Tensor out(n->shape);
            for (int64_t r = 0; r < rows; ++r) {
                const double* x = a.data() + r * d;
                double m = x[0];
                for (int64_t j = 1; j < d; ++j) m = std::max(m, x[j]);
                double s = 0.0;
                for (int64_t j = 0; j < d; ++j) s += std::exp(x[j] - m);
                out[r] = m + std::log(s);
            }
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kLayerNorm: {
            const Tensor& x = in(0);
            const Tensor& gamma = in(1);
            const Tensor& beta = in(2);
            const int64_t d = x.shape().back();
            const int64_t rows = x.numel() / d;
            Tensor out = Tensor::zeros_like(x);
            for (int64_t r = 0; r < rows; ++r) {
                const double* xp = x.data() + r * d;
                double* o = out.data() + r * d;
                double mean = 0.0;
                for (int64_t j = 0; j < d; ++j) mean += xp[j];
                mean /= d;
                double var = 0.0;
                for (int64_t j = 0; j < d; ++j) var += (xp[j] - mean) * (xp[j] - mean);
                var /= d;
                const double inv = 1.0 / std::sqrt(var + n->scalar);
                for (int64_t j = 0; j < d; ++j) o[j] = gamma[j] * ((xp[j] - mean) * inv) + beta[j];
            }
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kEmbedding: {
            const Tensor& table = in(0);
            const int64_t v = table.shape()[0], d = table.shape()[1];
            Tensor out(n->shape);
            for (size_t r = 0; r < n->ids.size(); ++r) {
                const int64_t id = n->ids[r];
                if (id < 0 || id >= v) throw UsageError("embedding id out of range");
                std::copy_n(table.data() + id * d, d, out.data() + static_cast<int64_t>(r) * d);
            }
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kConcat: {
            Tensor out(n->shape);
            const auto& s = n->shape;
            const size_t ax = static_cast<size_t>(n->axis);
            const int64_t outer = prod(s, 0, ax);
            const int64_t inner_total = out.numel() / std::max<int64_t>(outer, 1);
            int64_t offset = 0;
            for (size_t pi = 0; pi < n->inputs.size(); ++pi) {
                const Tensor& p = in(pi);
                const int64_t block = p.numel() / std::max<int64_t>(outer, 1);
                for (int64_t o = 0; o < outer; ++o)
                    std::copy_n(p.data() + o * block, block, out.data() + o * inner_total + offset);
                offset += block;
            }
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kSlice: {
            const Tensor& a = in(0);
            const auto& s = a.shape();
            const size_t ax = static_cast<size_t>(n->axis);
            const int64_t outer = prod(s, 0, ax);
            const int64_t inner = prod(s, ax + 1, s.size());
            const int64_t dim = s[ax];
            Tensor out(n->shape);
            for (int64_t o = 0; o < outer; ++o)
                std::copy_n(a.data() + (o * dim + n->start) * inner, n->length * inner,
                            out.data() + o * n->length * inner);
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kReshape: {
            Tensor out(n->shape, in(0).vec());
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kReduceSum:
        case OpKind::kReduceMean: {
            const Tensor& a = in(0);
            const auto& s = a.shape();
            const size_t ax = static_cast<size_t>(n->axis);
            const int64_t outer = prod(s, 0, ax);
            const int64_t dim = s[ax];
            const int64_t inner = prod(s, ax + 1, s.size());
            Tensor out(n->shape);
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t m = 0; m < dim; ++m)
                    for (int64_t i = 0; i < inner; ++i)
                        out[o * inner + i] += a[(o * dim + m) * inner + i];
            if (n->op == OpKind::kReduceMean)
                for (int64_t i = 0; i < out.numel(); ++i) out[i] /= dim;
            vals.emplace(n, std::move(out));
            return;
        }
        case OpKind::kGatherLast: {
            const Tensor& a = in(0);
            const int64_t d = a.shape().back();
            Tensor out(n->shape);
            for (size_t r = 0; r < n->ids.size(); ++r) {
                const int64_t id = n->ids[r];
                if (id < 0 || id >= d) throw UsageError("gather_last id out of range");
                out[static_cast<int64_t>(r)] = a[static_cast<int64_t>(r) * d + id];
            }
            vals.emplace(n, std::move(out));
            return;
        }
    }
    throw Error("unhandled op in forward pass");
}

void backward_node(const ExprNode* n, const ValueMap& vals, ValueMap& adj) {
    auto git = adj.find(n);
    if (git == adj.end()) return;  // node does not influence the root
    const Tensor& g = git->second;  // element addresses are stable under rehash
    auto in_val = [&](size_t i) -> const Tensor& { return vals.at(n->inputs[i].get()); };
    auto acc = [&](size_t i) -> Tensor& {
        const ExprNode* child = n->inputs[i].get();
        auto it = adj.find(child);
        if (it == adj.end()) it = adj.emplace(child, Tensor(child->shape)).first;
        return it->second;
    };
    switch (n->op) {
        case OpKind::kInput:
        case OpKind::kConst:
            return;
        case OpKind::kAdd: {
            Tensor& da = acc(0);
            for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
            Tensor& db = acc(1);
            const int64_t bn = db.numel();
            for (int64_t i = 0; i < g.numel(); ++i) db[i % bn] += g[i];
            return;
        }
        case OpKind::kMul: {
            const Tensor& a = in_val(0);
            const Tensor& b = in_val(1);
            const int64_t bn = b.numel();
            {
                Tensor& da = acc(0);
                for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * b[i % bn];
            }
            {
                Tensor& db = acc(1);
                for (int64_t i = 0; i < g.numel(); ++i) db[i % bn] += g[i] * a[i];
            }
            return;
        }
        case OpKind::kDiv: {
            const Tensor& a = in_val(0);
            const Tensor& b = in_val(1);
            {
                Tensor& da = acc(0);
                for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] / b[i];
            }
            {
                Tensor& db = acc(1);
                for (int64_t i = 0; i < g.numel(); ++i) db[i] -= g[i] * a[i] / (b[i] * b[i]);
            }
            return;
        }
        case OpKind::kScale: {
            Tensor& da = acc(0);
            for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * n->scalar;
            return;
        }
        case OpKind::kAddScalar: {
            Tensor& da = acc(0);
            for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
            return;
        }
        case OpKind::kMatmul: {
            const Tensor& a = in_val(0);
            const Tensor& b = in_val(1);
            const auto& sa = a.shape();
            const auto& sb = b.shape();
            Tensor& da = acc(0);
            Tensor& db = acc(1);
            if (sa.size() == 2) {
                mm_nt_acc(g.data(), b.data(), da.data(), sa[0], sb[1], sa[1]);
                mm_tn_acc(a.data(), g.data(), db.data(), sa[0], sa[1], sb[1]);
            } else if (sb.size() == 2) {
                const int64_t m = sa[0] * sa[1];
                mm_nt_acc(g.data(), b.data(), da.data(), m, sb[1], sa[2]);
                mm_tn_acc(a.data(), g.data(), db.data(), m, sa[2], sb[1]);
            } else {
                const int64_t bsz = sa[0], m = sa[1], k = sa[2], nn = sb[2];
                for (int64_t bi = 0; bi < bsz; ++bi) {
                    mm_nt_acc(g.data() + bi * m * nn, b.data() + bi * k * nn, da.data() + bi * m * k, m, nn, k);
                    mm_tn_acc(a.data() + bi * m * k, g.data() + bi * m * nn, db.data() + bi * k * nn, m, k, nn);
                }
            }
            return;
        }
        case OpKind::kTransposeLast2: {
            const auto& s = n->shape;  // transposed shape
            const int64_t r = s[s.size() - 2], c = s.back();
            const int64_t batch = g.numel() / (r * c);
            Tensor& da = acc(0);
            for (int64_t bi = 0; bi < batch; ++bi) {
                const double* gp = g.data() + bi * r * c;
                double* dp = da.data() + bi * r * c;
                for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j) dp[j * r + i] += gp[i * c + j];
            }
            return;
        }
        case OpKind::kRelu: {
            const Tensor& a = in_val(0);
            Tensor& da = acc(0);
            for (int64_t i = 0; i < g.numel(); ++i)
                if (a[i] > 0) da[i] += g[i];
            return;
        }
        case OpKind::kSigmoid: {
            const Tensor& out = vals.at(n);
            Tensor& da = acc(0);
            for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * out[i] * (1.0 - out[i]);
            return;
        }
        case OpKind::kElu: {
            const Tensor& a = in_val(0);
            const Tensor& out = vals.at(n);
            Tensor& da = acc(0);
            for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * (a[i] > 0 ? 1.0 : out[i] + 1.0);
            return;
        }
        case OpKind::kExp: {
            const Tensor& out = vals.at(n);
            Tensor& da = acc(0);
            for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] * out[i];
            return;
        }
        case OpKind::kLog: {
            const Tensor& a = in_val(0);
            Tensor& da = acc(0);
            for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i] / a[i];
            return;
        }
        case OpKind::kSoftmaxLast: {
            const Tensor& out = vals.at(n);
            const int64_t d = out.shape().back();
            const int64_t rows = out.numel() / d;
            Tensor& da = acc(0);
            for (int64_t r = 0; r < rows; ++r) {
                const double* s = out.data() + r * d;
                const double* gp = g.data() + r * d;
                double dot = 0.0;
                for (int64_t j = 0; j < d; ++j) dot += gp[j] * s[j];
                double* dp = da.data() + r * d;
                for (int64_t j = 0; j < d; ++j) dp[j] += s[j] * (gp[j] - dot);
            }
            return;
        }
        case OpKind::kLogSoftmaxLast: {
            const Tensor& out = vals.at(n);
            const int64_t d = out.shape().back();
            const int64_t rows = out.numel() / d;
            Tensor& da = acc(0);
            for (int64_t r = 0; r < rows; ++r) {
                const double* lp = out.data() + r * d;
                const double* gp = g.data() + r * d;
                double gsum = 0.0;
                for (int64_t j = 0; j < d; ++j) gsum += gp[j];
                double* dp = da.data() + r * d;
                for (int64_t j = 0; j < d; ++j) dp[j] += gp[j] - std::exp(lp[j]) * gsum;
            }
            return;
        }
        case OpKind::kLogSumExpLast: {
            const Tensor& a = in_val(0);
            const Tensor& out = vals.at(n);
            const int64_t d = a.shape().back();
            const int64_t rows = a.numel() / d;
            Tensor& da = acc(0);
            for (int64_t r = 0; r < rows; ++r) {
                const double* xp = a.data() + r * d;
                double* dp = da.data() + r * d;
                for (int64_t j = 0; j < d; ++j) dp[j] += g[r] * std::exp(xp[j] - out[r]);
            }
            return;
        }
        case OpKind::kLayerNorm: {
            const Tensor& x = in_val(0);
            const Tensor& gamma = in_val(1);
            const int64_t d = x.shape().back();
            const int64_t rows = x.numel() / d;
            Tensor& dx = acc(0);
            Tensor& dgamma = acc(1);
            Tensor& dbeta = acc(2);
            for (int64_t r = 0; r < rows; ++r) {
                const double* xp = x.data() + r * d;
                const double* gp = g.data() + r * d;
                double mean = 0.0;
                for (int64_t j = 0; j < d; ++j) mean += xp[j];
                mean /= d;
                double var = 0.0;
                for (int64_t j = 0; j < d; ++j) var += (xp[j] - mean) * (xp[j] - mean);
                var /= d;
                const double inv = 1.0 / std::sqrt(var + n->scalar);
                double a_mean = 0.0, ax_mean = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    const double xhat = (xp[j] - mean) * inv;
                    const double aj = gp[j] * gamma[j];
                    a_mean += aj;
                    ax_mean += aj * xhat;
                    dgamma[j] += gp[j] * xhat;
                    dbeta[j] += gp[j];
                }
                a_mean /= d;
                ax_mean /= d;
                double* dp = dx.data() + r * d;
                for (int64_t j = 0; j < d; ++j) {
                    const double xhat = (xp[j] - mean) * inv;
                    dp[j] += inv * (gp[j] * gamma[j] - a_mean - xhat * ax_mean);
                }
            }
            return;
        }
        case OpKind::kEmbedding: {
            const int64_t d = n->shape.back();
            Tensor& dt = acc(0);
            for (size_t r = 0; r < n->ids.size(); ++r) {
                const double* gp = g.data() + static_cast<int64_t>(r) * d;
                double* tp = dt.data() + n->ids[r] * d;
                for (int64_t j = 0; j < d; ++j) tp[j] += gp[j];
            }
            return;
        }
        case OpKind::kConcat: {
            const auto& s = n->shape;
            const size_t ax = static_cast<size_t>(n->axis);
            const int64_t outer = prod(s, 0, ax);
            const int64_t inner_total = g.numel() / std::max<int64_t>(outer, 1);
            int64_t offset = 0;
            for (size_t pi = 0; pi < n->inputs.size(); ++pi) {
                Tensor& dp = acc(pi);
                const int64_t block = dp.numel() / std::max<int64_t>(outer, 1);
                for (int64_t o = 0; o < outer; ++o) {
                    const double* gp = g.data() + o * inner_total + offset;
                    double* d0 = dp.data() + o * block;
                    for (int64_t i = 0; i < block; ++i) d0[i] += gp[i];
                }
                offset += block;
            }
            return;
        }
        case OpKind::kSlice: {
            const auto& s = n->inputs[0]->shape;
            const size_t ax = static_cast<size_t>(n->axis);
            const int64_t outer = prod(s, 0, ax);
            const int64_t inner = prod(s, ax + 1, s.size());
            const int64_t dim = s[ax];
            Tensor& da = acc(0);
            for (int64_t o = 0; o < outer; ++o) {
                const double* gp = g.data() + o * n->length * inner;
                double* dp = da.data() + (o * dim + n->start) * inner;
                for (int64_t i = 0; i < n->length * inner; ++i) dp[i] += gp[i];
            }
            return;
        }
        case OpKind::kReshape: {
            Tensor& da = acc(0);
            for (int64_t i = 0; i < g.numel(); ++i) da[i] += g[i];
            return;
        }
        case OpKind::kReduceSum:
        case OpKind::kReduceMean: {
            const auto& s = n->inputs[0]->shape;
            const size_t ax = static_cast<size_t>(n->axis);
            const int64_t outer = prod(s, 0, ax);
            const int64_t dim = s[ax];
            const int64_t inner = prod(s, ax + 1, s.size());
            const double w = n->op == OpKind::kReduceMean ? 1.0 / static_cast<double>(dim) : 1.0;
            Tensor& da = acc(0);
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t m = 0; m < dim; ++m)
                    for (int64_t i = 0; i < inner; ++i)
                        da[(o * dim + m) * inner + i] += g[o * inner + i] * w;
            return;
        }
        case OpKind::kGatherLast: {
            const int64_t d = n->inputs[0]->shape.back();
            Tensor& da = acc(0);
            for (size_t r = 0; r < n->ids.size(); ++r)
                da[static_cast<int64_t>(r) * d + n->ids[r]] += g[static_cast<int64_t>(r)];
            return;
        }
    }
    throw Error("unhandled op in backward pass");
}

}  // namespace

Tensor evaluate(const Expr& root, const Bindings& bindings) {
    auto order = topo_order(root.get());
    ValueMap vals;
    vals.reserve(order.size() * 2);
    for (const ExprNode* n : order) forward_node(n, vals, bindings);
    return vals.at(root.get());
}

std::map<std::string, Tensor> gradient(const Expr& root, const Bindings& bindings,
                                       const std::vector<std::string>& wrt, double* value_out) {
    if (Tensor::shape_numel(root->shape) != 1)
        throw UsageError("gradient requires a scalar root expression");
    auto order = topo_order(root.get());
    ValueMap vals;
    vals.reserve(order.size() * 2);
    for (const ExprNode* n : order) forward_node(n, vals, bindings);
    if (value_out) *value_out = vals.at(root.get())[0];

    ValueMap adj;
    adj.reserve(order.size() * 2);
    adj.emplace(root.get(), Tensor::full(root->shape, 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) backward_node(*it, vals, adj);

    std::map<std::string, Tensor> grads;
    for (const auto& name : wrt) {
        auto bit = bindings.find(name);
        if (bit == bindings.end()) throw UsageError("gradient: unknown leaf '" + name + "'");
        grads.emplace(name, Tensor::zeros_like(bit->second));
    }
    for (const ExprNode* n : order) {
        if (n->op != OpKind::kInput) continue;
        auto git = grads.find(n->name);
        if (git == grads.end()) continue;
        auto ait = adj.find(n);
        if (ait == adj.end()) continue;
        Tensor& acc = git->second;
        const Tensor& a = ait->second;
        for (int64_t i = 0; i < acc.numel(); ++i) acc[i] += a[i];
    }
    return grads;
}

double grad_check(const Expr& root, const Bindings& bindings, std::vector<std::string> wrt, double eps) {
    if (wrt.empty()) {
        auto order = topo_order(root.get());
        std::unordered_set<std::string> seen;
        for (const ExprNode* n : order)
            if (n->op == OpKind::kInput && bindings.count(n->name) && seen.insert(n->name).second)
                wrt.push_back(n->name);
        std::sort(wrt.begin(), wrt.end());
    }
    auto grads = gradient(root, bindings, wrt);
    double worst = 0.0;
    Bindings work = bindings;
    for (const auto& name : wrt) {
        Tensor& t = work.at(name);
        const Tensor& g = grads.at(name);
        for (int64_t i = 0; i < t.numel(); ++i) {
            const double keep = t[i];
            t[i] = keep + eps;
            const double fp = evaluate(root, work).item();
            t[i] = keep - eps;
            const double fm = evaluate(root, work).item();
            t[i] = keep;
            const double fd = (fp - fm) / (2.0 * eps);
            const double denom = std::max({std::abs(g[i]), std::abs(fd), 1e-2});
            worst = std::max(worst, std::abs(g[i] - fd) / denom);
        }
    }
    return worst;
}

}  // namespace decreg
