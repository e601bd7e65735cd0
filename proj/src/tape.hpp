#pragma once

#include <vector>

#include "tensor.hpp"

namespace mrckg {

// Handle to a node on a Tape.
struct Val {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// index sweep is a reverse topological order; backward visits each node once.
// Nodes behind stop_grad (and constants) receive no gradient.
class Tape {
public:
    Val input(Tensor v);     // differentiable leaf
    Val constant(Tensor v);  // non-differentiable leaf

    Val add(Val a, Val b);
    Val sub(Val a, Val b);
    Val scale(Val a, double c);
    Val add_n(const std::vector<Val>& xs);

    Val matmul(Val a, Val b);     // (p,q)*(q,r) -> (p,r)
    Val matmul_nt(Val a, Val b);  // (p,q)*(r,q)^T -> (p,r)
    Val vecmat(Val v, Val m);     // (q)*(q,r) -> (r)
    Val matvec(Val m, Val v);     // (p,q)*(q) -> (p)

    Val rows(Val m, std::vector<int> idx);
    Val row(Val m, int r);
    Val concat_rows(const std::vector<Val>& parts);  // rank-1 parts are single rows
    Val cols(Val m, int lo, int hi);
    Val concat_cols(const std::vector<Val>& parts);
    Val mean_rows(Val m);

    Val layer_norm(Val x, Val gamma, Val beta);  // normalizes each row
    Val gelu(Val x);
    Val softmax_rows(Val x);

    Val dot(Val u, Val v);
    Val l2_normalize(Val v);  // zero vector stays zero
    Val cosine(Val u, Val v);
    Val smooth_l1(Val a, Val b, double beta);
    // sum_e w_e * smooth_l1(cur_row_e, ref_row_e); w is plain data, not differentiated
    Val weighted_smooth_l1_rows(Val cur, Val ref, std::vector<double> w, double beta);
    Val sq_diff_sum(Val a, Val b);
    Val softmax_cross_entropy(Val logits, int target);
    Val stop_grad(Val a);

    // q_c = sum_{a,b} core_abc * h_a * r_b
    Val tucker_query_tail(Val core, Val h, Val r);
    // q_a = sum_{b,c} core_abc * r_b * t_c
    Val tucker_query_head(Val core, Val r, Val t);
    // 0.5 * sum_k fisher_k * (p_k - anchor_k)^2
    Val ewc_quad(Val p, Tensor fisher, Tensor anchor);

    const Tensor& value(Val v) const { return node(v).value; }
    // Gradient of the last backward() target w.r.t. v; zeros if none reached it.
    Tensor grad(Val v) const;
    const Tensor* grad_ptr(Val v) const;

    void backward(Val loss);

    size_t node_count() const { return nodes_.size(); }

private:
    enum class Op {
        Input, Const, Add, Sub, Scale, AddN, MatMul, MatMulNT, VecMat, MatVec,
        Rows, Row, ConcatRows, Cols, ConcatCols, MeanRows, LayerNorm, Gelu,
        SoftmaxRows, Dot, L2Normalize, Cosine, SmoothL1, WeightedSL1Rows,
        SqDiffSum, SoftmaxCE, StopGrad, TuckerTail, TuckerHead, EwcQuad
    };

    struct Node {
        Op op;
        bool requires_grad = false;
        Tensor value;
        Tensor grad;               // lazily allocated
        std::vector<int> parents;
        std::vector<int> aux_idx;  // gather indices / concat split sizes
        Tensor aux_a, aux_b;       // op-specific caches (ln stats, probs, fisher...)
        double aux_c = 0.0;        // scalar payload (scale factor, beta, ...)
        int aux_i = 0, aux_j = 0;
    };

    Node& node(Val v) { return nodes_[static_cast<size_t>(v.idx)]; }
    const Node& node(Val v) const { return nodes_[static_cast<size_t>(v.idx)]; }
    Val push(Node n);
    Tensor& grad_buf(int idx);  // allocate-on-demand
    void backprop(Node& n);

    std::vector<Node> nodes_;
};

}  // namespace mrckg
