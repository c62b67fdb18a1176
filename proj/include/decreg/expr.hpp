#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "decreg/tensor.hpp"

namespace decreg {

// Reverse-mode automatic differentiation over a DAG of tensor operations.
// Graphs are immutable once built; evaluation binds named leaves to tensors.

enum class OpKind {
    kInput,
    kConst,
    kAdd,
    kMul,
    kDiv,
    kScale,
    kAddScalar,
    kMatmul,
    kTransposeLast2,
    kRelu,
    kSigmoid,
    kElu,
    kExp,
    kLog,
    kSoftmaxLast,
    kLogSoftmaxLast,
    kLogSumExpLast,
    kLayerNorm,
    kEmbedding,
    kConcat,
    kSlice,
    kReshape,
    kReduceSum,
    kReduceMean,
    kGatherLast,
};

class ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

class ExprNode {
  public:
    OpKind op;
    std::vector<Expr> inputs;
    std::vector<int64_t> shape;  // statically inferred at construction

    std::string name;            // kInput
    Tensor value;                // kConst
    double scalar = 0.0;         // kScale / kAddScalar / kLayerNorm epsilon
    int64_t axis = -1;           // kConcat / kSlice / kReduce*
    int64_t start = 0;           // kSlice
    int64_t length = 0;          // kSlice
    std::vector<int64_t> ids;    // kEmbedding / kGatherLast, row-major

    const char* op_name() const;
};

using Bindings = std::map<std::string, Tensor>;

// Leaves.
Expr input(std::string name, std::vector<int64_t> shape);
Expr constant(Tensor value);

// Elementwise. add/mul accept equal shapes or a second operand whose shape is
// a trailing suffix of the first (row broadcast); div requires equal shapes.
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr mul(Expr a, Expr b);
Expr div(Expr a, Expr b);
Expr scale(Expr a, double c);
Expr add_scalar(Expr a, double c);

// Linear algebra. Supports [m,k]x[k,n], [b,m,k]x[k,n] and [b,m,k]x[b,k,n].
Expr matmul(Expr a, Expr b);
Expr transpose_last2(Expr a);

// Nonlinearities.
Expr relu(Expr a);
Expr sigmoid(Expr a);
Expr elu(Expr a);
Expr exp(Expr a);
Expr log(Expr a);

// Normalizations over the last axis.
Expr softmax_last(Expr a);
Expr log_softmax_last(Expr a);
Expr logsumexp_last(Expr a);  // reduces the last axis
Expr layer_norm(Expr x, Expr gamma, Expr beta, double eps = 1e-5);

// Structure.
Expr embedding(Expr table, std::vector<int64_t> ids, std::vector<int64_t> ids_shape);
Expr concat(std::vector<Expr> parts, int64_t axis);
Expr slice(Expr a, int64_t axis, int64_t start, int64_t length);
Expr reshape(Expr a, std::vector<int64_t> shape);
Expr reduce_sum(Expr a, int64_t axis);
Expr reduce_mean(Expr a, int64_t axis);
Expr gather_last(Expr a, std::vector<int64_t> ids);

// Forward pass. All named leaves must be bound with matching shapes.
Tensor evaluate(const Expr& root, const Bindings& bindings);

// Reverse accumulation of d(root)/d(leaf) for each requested leaf name.
// The root must evaluate to a single element; its value is written to
// `value_out` when given.
std::map<std::string, Tensor> gradient(const Expr& root, const Bindings& bindings,
                                       const std::vector<std::string>& wrt,
                                       double* value_out = nullptr);

// Worst relative discrepancy between reverse-mode gradients and central
// finite differences over every entry of every requested leaf. When wrt is
// empty, every bound leaf that appears in the graph is checked.
double grad_check(const Expr& root, const Bindings& bindings,
                  std::vector<std::string> wrt = {}, double eps = 1e-5);

}  // namespace decreg
