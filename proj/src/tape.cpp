#include "tape.hpp"

#include <cmath>

namespace mrckg {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kNormFloor = 1e-12;
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

void require(bool ok, const char* msg) {
    if (!ok) throw Fault(msg);
}

double smooth_l1_elem(double r, double beta) {
    double a = std::fabs(r);
    return a < beta ? 0.5 * r * r / beta : a - 0.5 * beta;
}

double smooth_l1_deriv(double r, double beta) {
    if (std::fabs(r) < beta) return r / beta;
    return r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
}

}  // namespace

Val Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Val{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_buf(int idx) {
    Node& n = nodes_[static_cast<size_t>(idx)];
    if (n.grad.size() == 0 && n.value.size() > 0) n.grad = Tensor::zeros(n.value.shape());
    return n.grad;
}

Val Tape::input(Tensor v) {
    Node n;
    n.op = Op::Input;
    n.requires_grad = true;
    n.value = std::move(v);
    return push(std::move(n));
}

Val Tape::constant(Tensor v) {
    Node n;
    n.op = Op::Const;
    n.value = std::move(v);
    return push(std::move(n));
}

Val Tape::add(Val a, Val b) {
    const Node &na = node(a), &nb = node(b);
    require(na.value.same_shape(nb.value), "add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.parents = {a.idx, b.idx};
    n.value = na.value;
    for (size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] += nb.value.data()[i];
    return push(std::move(n));
}

Val Tape::sub(Val a, Val b) {
    const Node &na = node(a), &nb = node(b);
    require(na.value.same_shape(nb.value), "sub: shape mismatch");
    Node n;
    n.op = Op::Sub;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.parents = {a.idx, b.idx};
    n.value = na.value;
    for (size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] -= nb.value.data()[i];
    return push(std::move(n));
}

Val Tape::scale(Val a, double c) {
    const Node& na = node(a);
    Node n;
    n.op = Op::Scale;
    n.requires_grad = na.requires_grad;
    n.parents = {a.idx};
    n.aux_c = c;
    n.value = na.value;
    for (size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] *= c;
    return push(std::move(n));
}

Val Tape::add_n(const std::vector<Val>& xs) {
    require(!xs.empty(), "add_n: empty list");
    Node n;
    n.op = Op::AddN;
    n.value = node(xs[0]).value;
    n.parents.push_back(xs[0].idx);
    n.requires_grad = node(xs[0]).requires_grad;
    for (size_t k = 1; k < xs.size(); ++k) {
        const Node& nk = node(xs[k]);
        require(nk.value.same_shape(n.value), "add_n: shape mismatch");
        for (size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] += nk.value.data()[i];
        n.parents.push_back(xs[k].idx);
        n.requires_grad = n.requires_grad || nk.requires_grad;
    }
    return push(std::move(n));
}

Val Tape::matmul(Val a, Val b) {
    const Node &na = node(a), &nb = node(b);
    require(na.value.rank() == 2 && nb.value.rank() == 2, "matmul: rank != 2");
    const int p = na.value.dim(0), q = na.value.dim(1), r = nb.value.dim(1);
    require(nb.value.dim(0) == q, "matmul: inner dim mismatch");
    Node n;
    n.op = Op::MatMul;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.parents = {a.idx, b.idx};
    n.value = Tensor::zeros({p, r});
    const double *A = na.value.data(), *B = nb.value.data();
    double* C = n.value.data();
    for (int i = 0; i < p; ++i)
        for (int k = 0; k < q; ++k) {
            const double aik = A[i * q + k];
            if (aik == 0.0) continue;
            const double* Bk = B + k * r;
            double* Ci = C + i * r;
            for (int j = 0; j < r; ++j) Ci[j] += aik * Bk[j];
        }
    return push(std::move(n));
}

Val Tape::matmul_nt(Val a, Val b) {
    const Node &na = node(a), &nb = node(b);
    require(na.value.rank() == 2 && nb.value.rank() == 2, "matmul_nt: rank != 2");
    const int p = na.value.dim(0), q = na.value.dim(1), r = nb.value.dim(0);
    require(nb.value.dim(1) == q, "matmul_nt: inner dim mismatch");
    Node n;
    n.op = Op::MatMulNT;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.parents = {a.idx, b.idx};
    n.value = Tensor::zeros({p, r});
    const double *A = na.value.data(), *B = nb.value.data();
    double* C = n.value.data();
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < r; ++j) {
            double s = 0.0;
            const double *Ai = A + i * q, *Bj = B + j * q;
            for (int k = 0; k < q; ++k) s += Ai[k] * Bj[k];
            C[i * r + j] = s;
        }
    return push(std::move(n));
}

Val Tape::vecmat(Val v, Val m) {
    const Node &nv = node(v), &nm = node(m);
    require(nv.value.rank() == 1 && nm.value.rank() == 2, "vecmat: bad ranks");
    const int q = nv.value.dim(0), r = nm.value.dim(1);
    require(nm.value.dim(0) == q, "vecmat: dim mismatch");
    Node n;
    n.op = Op::VecMat;
    n.requires_grad = nv.requires_grad || nm.requires_grad;
    n.parents = {v.idx, m.idx};
    n.value = Tensor::zeros({r});
    const double *x = nv.value.data(), *M = nm.value.data();
    double* y = n.value.data();
    for (int k = 0; k < q; ++k) {
        const double xk = x[k];
        if (xk == 0.0) continue;
        const double* Mk = M + k * r;
        for (int j = 0; j < r; ++j) y[j] += xk * Mk[j];
    }
    return push(std::move(n));
}

Val Tape::matvec(Val m, Val v) {
    const Node &nm = node(m), &nv = node(v);
    require(nm.value.rank() == 2 && nv.value.rank() == 1, "matvec: bad ranks");
    const int p = nm.value.dim(0), q = nm.value.dim(1);
    require(nv.value.dim(0) == q, "matvec: dim mismatch");
    Node n;
    n.op = Op::MatVec;
    n.requires_grad = nm.requires_grad || nv.requires_grad;
    n.parents = {m.idx, v.idx};
    n.value = Tensor::zeros({p});
    const double *M = nm.value.data(), *x = nv.value.data();
    double* y = n.value.data();
    for (int i = 0; i < p; ++i) {
        double s = 0.0;
        const double* Mi = M + i * q;
        for (int k = 0; k < q; ++k) s += Mi[k] * x[k];
        y[i] = s;
    }
    return push(std::move(n));
}

Val Tape::rows(Val m, std::vector<int> idx) {
    const Node& nm = node(m);
    require(nm.value.rank() == 2, "rows: rank != 2");
    const int c = nm.value.dim(1);
    Node n;
    n.op = Op::Rows;
    n.requires_grad = nm.requires_grad;
    n.parents = {m.idx};
    n.value = Tensor::zeros({static_cast<int>(idx.size()), c});
    for (size_t k = 0; k < idx.size(); ++k) {
        require(idx[k] >= 0 && idx[k] < nm.value.dim(0), "rows: index out of range");
        for (int j = 0; j < c; ++j) n.value.at(static_cast<int>(k), j) = nm.value.at(idx[k], j);
    }
    n.aux_idx = std::move(idx);
    return push(std::move(n));
}

Val Tape::row(Val m, int r) {
    const Node& nm = node(m);
    require(nm.value.rank() == 2, "row: rank != 2");
    require(r >= 0 && r < nm.value.dim(0), "row: index out of range");
    const int c = nm.value.dim(1);
    Node n;
    n.op = Op::Row;
    n.requires_grad = nm.requires_grad;
    n.parents = {m.idx};
    n.aux_i = r;
    n.value = Tensor::zeros({c});
    for (int j = 0; j < c; ++j) n.value.at(j) = nm.value.at(r, j);
    return push(std::move(n));
}

Val Tape::concat_rows(const std::vector<Val>& parts) {
    require(!parts.empty(), "concat_rows: empty");
    int cols_n = -1, total = 0;
    for (Val p : parts) {
        const Tensor& t = node(p).value;
        require(t.rank() == 1 || t.rank() == 2, "concat_rows: bad rank");
        const int c = t.rank() == 1 ? t.dim(0) : t.dim(1);
        if (cols_n < 0) cols_n = c;
        require(c == cols_n, "concat_rows: column mismatch");
        total += t.rank() == 1 ? 1 : t.dim(0);
    }
    Node n;
    n.op = Op::ConcatRows;
    n.value = Tensor::zeros({total, cols_n});
    int at = 0;
    for (Val p : parts) {
        const Node& np = node(p);
        n.requires_grad = n.requires_grad || np.requires_grad;
        n.parents.push_back(p.idx);
        const int r = np.value.rank() == 1 ? 1 : np.value.dim(0);
        n.aux_idx.push_back(r);
        for (size_t i = 0; i < np.value.size(); ++i)
            n.value.data()[static_cast<size_t>(at) * cols_n + i] = np.value.data()[i];
        at += r;
    }
    return push(std::move(n));
}

Val Tape::cols(Val m, int lo, int hi) {
    const Node& nm = node(m);
    require(nm.value.rank() == 2, "cols: rank != 2");
    require(0 <= lo && lo < hi && hi <= nm.value.dim(1), "cols: bad range");
    const int r = nm.value.dim(0), w = hi - lo;
    Node n;
    n.op = Op::Cols;
    n.requires_grad = nm.requires_grad;
    n.parents = {m.idx};
    n.aux_i = lo;
    n.aux_j = hi;
    n.value = Tensor::zeros({r, w});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j) n.value.at(i, j) = nm.value.at(i, lo + j);
    return push(std::move(n));
}

Val Tape::concat_cols(const std::vector<Val>& parts) {
    require(!parts.empty(), "concat_cols: empty");
    const int r = node(parts[0]).value.dim(0);
    int total = 0;
    for (Val p : parts) {
        const Tensor& t = node(p).value;
        require(t.rank() == 2 && t.dim(0) == r, "concat_cols: row mismatch");
        total += t.dim(1);
    }
    Node n;
    n.op = Op::ConcatCols;
    n.value = Tensor::zeros({r, total});
    int at = 0;
    for (Val p : parts) {
        const Node& np = node(p);
        n.requires_grad = n.requires_grad || np.requires_grad;
        n.parents.push_back(p.idx);
        const int w = np.value.dim(1);
        n.aux_idx.push_back(w);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j) n.value.at(i, at + j) = np.value.at(i, j);
        at += w;
    }
    return push(std::move(n));
}

Val Tape::mean_rows(Val m) {
    const Node& nm = node(m);
    require(nm.value.rank() == 2 && nm.value.dim(0) > 0, "mean_rows: bad input");
    const int r = nm.value.dim(0), c = nm.value.dim(1);
    Node n;
    n.op = Op::MeanRows;
    n.requires_grad = nm.requires_grad;
    n.parents = {m.idx};
    n.value = Tensor::zeros({c});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) n.value.at(j) += nm.value.at(i, j);
    for (int j = 0; j < c; ++j) n.value.at(j) /= r;
    return push(std::move(n));
}

Val Tape::layer_norm(Val x, Val gamma, Val beta) {
    const Node &nx = node(x), &ng = node(gamma), &nb = node(beta);
    const bool vec = nx.value.rank() == 1;
    require(vec || nx.value.rank() == 2, "layer_norm: bad rank");
    const int r = vec ? 1 : nx.value.dim(0);
    const int c = vec ? nx.value.dim(0) : nx.value.dim(1);
    require(ng.value.rank() == 1 && ng.value.dim(0) == c, "layer_norm: gamma dim");
    require(nb.value.rank() == 1 && nb.value.dim(0) == c, "layer_norm: beta dim");
    Node n;
    n.op = Op::LayerNorm;
    n.requires_grad = nx.requires_grad || ng.requires_grad || nb.requires_grad;
    n.parents = {x.idx, gamma.idx, beta.idx};
    n.value = Tensor::zeros(nx.value.shape());
    n.aux_a = Tensor::zeros({r});  // mean per row
    n.aux_b = Tensor::zeros({r});  // inv std per row
    const double* X = nx.value.data();
    for (int i = 0; i < r; ++i) {
        const double* xi = X + static_cast<size_t>(i) * c;
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += xi[j];
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = xi[j] - mu;
            var += d * d;
        }
        var /= c;
        const double inv = 1.0 / std::sqrt(var + kLnEps);
        n.aux_a.at(i) = mu;
        n.aux_b.at(i) = inv;
        for (int j = 0; j < c; ++j)
            n.value.data()[static_cast<size_t>(i) * c + j] =
                ng.value.at(j) * ((xi[j] - mu) * inv) + nb.value.at(j);
    }
    return push(std::move(n));
}

Val Tape::gelu(Val x) {
    const Node& nx = node(x);
    Node n;
    n.op = Op::Gelu;
    n.requires_grad = nx.requires_grad;
    n.parents = {x.idx};
    n.value = nx.value;
    for (size_t i = 0; i < n.value.size(); ++i) {
        const double v = n.value.data()[i];
        n.value.data()[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    return push(std::move(n));
}

Val Tape::softmax_rows(Val x) {
    const Node& nx = node(x);
    require(nx.value.rank() == 2, "softmax_rows: rank != 2");
    const int r = nx.value.dim(0), c = nx.value.dim(1);
    Node n;
    n.op = Op::SoftmaxRows;
    n.requires_grad = nx.requires_grad;
    n.parents = {x.idx};
    n.value = Tensor::zeros({r, c});
    for (int i = 0; i < r; ++i) {
        double mx = nx.value.at(i, 0);
        for (int j = 1; j < c; ++j) mx = std::max(mx, nx.value.at(i, j));
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
            const double e = std::exp(nx.value.at(i, j) - mx);
            n.value.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < c; ++j) n.value.at(i, j) /= z;
    }
    return push(std::move(n));
}

Val Tape::dot(Val u, Val v) {
    const Node &nu = node(u), &nv = node(v);
    require(nu.value.rank() == 1 && nv.value.rank() == 1 &&
                nu.value.dim(0) == nv.value.dim(0),
            "dot: bad inputs");
    Node n;
    n.op = Op::Dot;
    n.requires_grad = nu.requires_grad || nv.requires_grad;
    n.parents = {u.idx, v.idx};
    double s = 0.0;
    for (int i = 0; i < nu.value.dim(0); ++i) s += nu.value.at(i) * nv.value.at(i);
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

Val Tape::l2_normalize(Val v) {
    const Node& nv = node(v);
    require(nv.value.rank() == 1, "l2_normalize: rank != 1");
    double s = 0.0;
    for (size_t i = 0; i < nv.value.size(); ++i) s += nv.value.data()[i] * nv.value.data()[i];
    const double norm = std::sqrt(s);
    Node n;
    n.op = Op::L2Normalize;
    n.requires_grad = nv.requires_grad;
    n.parents = {v.idx};
    n.aux_c = norm;
    n.value = nv.value;
    if (norm < kNormFloor) {
        for (size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] = 0.0;
    } else {
        for (size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] /= norm;
    }
    return push(std::move(n));
}

Val Tape::cosine(Val u, Val v) {
    const Node &nu = node(u), &nv = node(v);
    require(nu.value.rank() == 1 && nv.value.rank() == 1 &&
                nu.value.dim(0) == nv.value.dim(0),
            "cosine: bad inputs");
    double uu = 0.0, vv = 0.0;
    for (int i = 0; i < nu.value.dim(0); ++i) {
        uu += nu.value.at(i) * nu.value.at(i);
        vv += nv.value.at(i) * nv.value.at(i);
    }
    Node n;
    n.op = Op::Cosine;
    n.requires_grad = nu.requires_grad || nv.requires_grad;
    n.parents = {u.idx, v.idx};
    n.aux_a = Tensor::vector({std::sqrt(uu), std::sqrt(vv)});
    n.value = Tensor::scalar(cosine_value(nu.value, nv.value));
    return push(std::move(n));
}

Val Tape::smooth_l1(Val a, Val b, double beta) {
    const Node &na = node(a), &nb = node(b);
    require(na.value.same_shape(nb.value), "smooth_l1: shape mismatch");
    require(beta > 0.0, "smooth_l1: beta must be positive");
    Node n;
    n.op = Op::SmoothL1;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.parents = {a.idx, b.idx};
    n.aux_c = beta;
    double s = 0.0;
    for (size_t i = 0; i < na.value.size(); ++i)
        s += smooth_l1_elem(na.value.data()[i] - nb.value.data()[i], beta);
    n.value = Tensor::scalar(s / static_cast<double>(na.value.size()));
    return push(std::move(n));
}

Val Tape::weighted_smooth_l1_rows(Val cur, Val ref, std::vector<double> w, double beta) {
    const Node &nc = node(cur), &nr = node(ref);
    require(nc.value.rank() == 2 && nc.value.same_shape(nr.value),
            "weighted_smooth_l1_rows: shape mismatch");
    require(static_cast<int>(w.size()) == nc.value.dim(0),
            "weighted_smooth_l1_rows: weight count mismatch");
    require(beta > 0.0, "weighted_smooth_l1_rows: beta must be positive");
    Node n;
    n.op = Op::WeightedSL1Rows;
    n.requires_grad = nc.requires_grad || nr.requires_grad;
    n.parents = {cur.idx, ref.idx};
    n.aux_c = beta;
    n.aux_a = Tensor::vector(std::move(w));
    const int r = nc.value.dim(0), c = nc.value.dim(1);
    double total = 0.0;
    for (int i = 0; i < r; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j)
            s += smooth_l1_elem(nc.value.at(i, j) - nr.value.at(i, j), beta);
        total += n.aux_a.at(i) * (s / c);
    }
    n.value = Tensor::scalar(total);
    return push(std::move(n));
}

Val Tape::sq_diff_sum(Val a, Val b) {
    const Node &na = node(a), &nb = node(b);
    require(na.value.same_shape(nb.value), "sq_diff_sum: shape mismatch");
    Node n;
    n.op = Op::SqDiffSum;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.parents = {a.idx, b.idx};
    double s = 0.0;
    for (size_t i = 0; i < na.value.size(); ++i) {
        const double d = na.value.data()[i] - nb.value.data()[i];
        s += d * d;
    }
    n.value = Tensor::scalar(s);
    return push(std::move(n));
}

Val Tape::softmax_cross_entropy(Val logits, int target) {
    const Node& nl = node(logits);
    require(nl.value.rank() == 1, "softmax_cross_entropy: logits must be rank 1");
    const int c = nl.value.dim(0);
    require(target >= 0 && target < c, "softmax_cross_entropy: target out of range");
    nl.value.require_finite("softmax_cross_entropy logits");
    Node n;
    n.op = Op::SoftmaxCE;
    n.requires_grad = nl.requires_grad;
    n.parents = {logits.idx};
    n.aux_i = target;
    double mx = nl.value.at(0);
    for (int j = 1; j < c; ++j) mx = std::max(mx, nl.value.at(j));
    double z = 0.0;
    n.aux_a = Tensor::zeros({c});  // probabilities
    for (int j = 0; j < c; ++j) {
        const double e = std::exp(nl.value.at(j) - mx);
        n.aux_a.at(j) = e;
        z += e;
    }
    for (int j = 0; j < c; ++j) n.aux_a.at(j) /= z;
    n.value = Tensor::scalar(-(nl.value.at(target) - mx - std::log(z)));
    return push(std::move(n));
}

Val Tape::stop_grad(Val a) {
    Node n;
    n.op = Op::StopGrad;
    n.requires_grad = false;
    n.parents = {a.idx};
    n.value = node(a).value;
    return push(std::move(n));
}

Val Tape::tucker_query_tail(Val core, Val h, Val r) {
    const Node &nc = node(core), &nh = node(h), &nr = node(r);
    require(nc.value.rank() == 3, "tucker_query_tail: core rank != 3");
    const int d0 = nc.value.dim(0), d1 = nc.value.dim(1), d2 = nc.value.dim(2);
    require(nh.value.rank() == 1 && nh.value.dim(0) == d0, "tucker_query_tail: head dim");
    require(nr.value.rank() == 1 && nr.value.dim(0) == d1, "tucker_query_tail: rel dim");
    Node n;
    n.op = Op::TuckerTail;
    n.requires_grad = nc.requires_grad || nh.requires_grad || nr.requires_grad;
    n.parents = {core.idx, h.idx, r.idx};
    n.value = Tensor::zeros({d2});
    const double* W = nc.value.data();
    double* q = n.value.data();
    for (int a = 0; a < d0; ++a) {
        const double ha = nh.value.at(a);
        if (ha == 0.0) continue;
        for (int b = 0; b < d1; ++b) {
            const double hr = ha * nr.value.at(b);
            if (hr == 0.0) continue;
            const double* Wab = W + (static_cast<size_t>(a) * d1 + b) * d2;
            for (int cdx = 0; cdx < d2; ++cdx) q[cdx] += hr * Wab[cdx];
        }
    }
    return push(std::move(n));
}

Val Tape::tucker_query_head(Val core, Val r, Val t) {
    const Node &nc = node(core), &nr = node(r), &nt = node(t);
    require(nc.value.rank() == 3, "tucker_query_head: core rank != 3");
    const int d0 = nc.value.dim(0), d1 = nc.value.dim(1), d2 = nc.value.dim(2);
    require(nr.value.rank() == 1 && nr.value.dim(0) == d1, "tucker_query_head: rel dim");
    require(nt.value.rank() == 1 && nt.value.dim(0) == d2, "tucker_query_head: tail dim");
    Node n;
    n.op = Op::TuckerHead;
    n.requires_grad = nc.requires_grad || nr.requires_grad || nt.requires_grad;
    n.parents = {core.idx, r.idx, t.idx};
    n.value = Tensor::zeros({d0});
    const double* W = nc.value.data();
    double* q = n.value.data();
    for (int a = 0; a < d0; ++a) {
        double s = 0.0;
        for (int b = 0; b < d1; ++b) {
            const double rb = nr.value.at(b);
            if (rb == 0.0) continue;
            const double* Wab = W + (static_cast<size_t>(a) * d1 + b) * d2;
            double inner = 0.0;
            for (int cdx = 0; cdx < d2; ++cdx) inner += Wab[cdx] * nt.value.at(cdx);
            s += rb * inner;
        }
        q[a] = s;
    }
    return push(std::move(n));
}

Val Tape::ewc_quad(Val p, Tensor fisher, Tensor anchor) {
    const Node& np = node(p);
    require(np.value.same_shape(fisher) && np.value.same_shape(anchor),
            "ewc_quad: shape mismatch");
    Node n;
    n.op = Op::EwcQuad;
    n.requires_grad = np.requires_grad;
    n.parents = {p.idx};
    double s = 0.0;
    for (size_t i = 0; i < np.value.size(); ++i) {
        const double d = np.value.data()[i] - anchor.data()[i];
        s += fisher.data()[i] * d * d;
    }
    n.value = Tensor::scalar(0.5 * s);
    n.aux_a = std::move(fisher);
    n.aux_b = std::move(anchor);
    return push(std::move(n));
}

Tensor Tape::grad(Val v) const {
    const Node& n = node(v);
    if (n.grad.size() > 0) return n.grad;
    return Tensor::zeros(n.value.shape());
}

const Tensor* Tape::grad_ptr(Val v) const {
    const Node& n = node(v);
    return n.grad.size() > 0 ? &n.grad : nullptr;
}

void Tape::backward(Val loss) {
    Node& ln = node(loss);
    if (ln.value.size() != 1 || ln.value.rank() > 0)
        throw Fault("backward: loss must be a scalar");
    grad_buf(loss.idx).data()[0] = 1.0;
    for (int i = loss.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        backprop(n);
    }
}

void Tape::backprop(Node& n) {
    auto parent_grad = [&](int k) -> Tensor* {
        Node& p = nodes_[static_cast<size_t>(n.parents[static_cast<size_t>(k)])];
        if (!p.requires_grad) return nullptr;
        return &grad_buf(n.parents[static_cast<size_t>(k)]);
    };
    auto pval = [&](int k) -> const Tensor& {
        return nodes_[static_cast<size_t>(n.parents[static_cast<size_t>(k)])].value;
    };
    const Tensor& g = n.grad;
    switch (n.op) {
        case Op::Input:
        case Op::Const:
        case Op::StopGrad:
            break;
        case Op::Add:
            for (int k = 0; k < 2; ++k)
                if (Tensor* pg = parent_grad(k))
                    for (size_t i = 0; i < g.size(); ++i) pg->data()[i] += g.data()[i];
            break;
        case Op::Sub: {
            if (Tensor* pg = parent_grad(0))
                for (size_t i = 0; i < g.size(); ++i) pg->data()[i] += g.data()[i];
            if (Tensor* pg = parent_grad(1))
                for (size_t i = 0; i < g.size(); ++i) pg->data()[i] -= g.data()[i];
            break;
        }
        case Op::Scale:
            if (Tensor* pg = parent_grad(0))
                for (size_t i = 0; i < g.size(); ++i) pg->data()[i] += n.aux_c * g.data()[i];
            break;
        case Op::AddN:
            for (size_t k = 0; k < n.parents.size(); ++k)
                if (Tensor* pg = parent_grad(static_cast<int>(k)))
                    for (size_t i = 0; i < g.size(); ++i) pg->data()[i] += g.data()[i];
            break;
        case Op::MatMul: {
            const Tensor &A = pval(0), &B = pval(1);
            const int p = A.dim(0), q = A.dim(1), r = B.dim(1);
            if (Tensor* pg = parent_grad(0)) {  // dA += g * B^T
                for (int i = 0; i < p; ++i)
                    for (int k = 0; k < q; ++k) {
                        double s = 0.0;
                        for (int j = 0; j < r; ++j) s += g.at(i, j) * B.at(k, j);
                        pg->at(i, k) += s;
                    }
            }
            if (Tensor* pg = parent_grad(1)) {  // dB += A^T * g
                for (int i = 0; i < p; ++i)
                    for (int k = 0; k < q; ++k) {
                        const double a = A.at(i, k);
                        if (a == 0.0) continue;
                        for (int j = 0; j < r; ++j) pg->at(k, j) += a * g.at(i, j);
                    }
            }
            break;
        }
        case Op::MatMulNT: {
            const Tensor &A = pval(0), &B = pval(1);
            const int p = A.dim(0), q = A.dim(1), r = B.dim(0);
            if (Tensor* pg = parent_grad(0)) {  // dA += g * B
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < r; ++j) {
                        const double gij = g.at(i, j);
                        if (gij == 0.0) continue;
                        for (int k = 0; k < q; ++k) pg->at(i, k) += gij * B.at(j, k);
                    }
            }
            if (Tensor* pg = parent_grad(1)) {  // dB += g^T * A
                for (int i = 0; i < p; ++i)
                    for (int j = 0; j < r; ++j) {
                        const double gij = g.at(i, j);
                        if (gij == 0.0) continue;
                        for (int k = 0; k < q; ++k) pg->at(j, k) += gij * A.at(i, k);
                    }
            }
            break;
        }
        case Op::VecMat: {
            const Tensor &x = pval(0), &M = pval(1);
            const int q = x.dim(0), r = M.dim(1);
            if (Tensor* pg = parent_grad(0))
                for (int k = 0; k < q; ++k) {
                    double s = 0.0;
                    for (int j = 0; j < r; ++j) s += M.at(k, j) * g.at(j);
                    pg->at(k) += s;
                }
            if (Tensor* pg = parent_grad(1))
                for (int k = 0; k < q; ++k) {
                    const double xk = x.at(k);
                    if (xk == 0.0) continue;
                    for (int j = 0; j < r; ++j) pg->at(k, j) += xk * g.at(j);
                }
            break;
        }
        case Op::MatVec: {
            const Tensor &M = pval(0), &x = pval(1);
            const int p = M.dim(0), q = M.dim(1);
            if (Tensor* pg = parent_grad(0))
                for (int i = 0; i < p; ++i) {
                    const double gi = g.at(i);
                    if (gi == 0.0) continue;
                    for (int k = 0; k < q; ++k) pg->at(i, k) += gi * x.at(k);
                }
            if (Tensor* pg = parent_grad(1))
                for (int i = 0; i < p; ++i) {
                    const double gi = g.at(i);
                    if (gi == 0.0) continue;
                    for (int k = 0; k < q; ++k) pg->at(k) += gi * M.at(i, k);
                }
            break;
        }
        case Op::Rows: {
            if (Tensor* pg = parent_grad(0)) {
                const int c = g.dim(1);
                for (size_t k = 0; k < n.aux_idx.size(); ++k)
                    for (int j = 0; j < c; ++j)
                        pg->at(n.aux_idx[k], j) += g.at(static_cast<int>(k), j);
            }
            break;
        }
        case Op::Row: {
            if (Tensor* pg = parent_grad(0))
                for (int j = 0; j < g.dim(0); ++j) pg->at(n.aux_i, j) += g.at(j);
            break;
        }
        case Op::ConcatRows: {
            const int c = g.dim(1);
            int at = 0;
            for (size_t k = 0; k < n.parents.size(); ++k) {
                const int r = n.aux_idx[k];
                if (Tensor* pg = parent_grad(static_cast<int>(k))) {
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < c; ++j)
                            pg->data()[static_cast<size_t>(i) * c + j] += g.at(at + i, j);
                }
                at += r;
            }
            break;
        }
        case Op::Cols: {
            if (Tensor* pg = parent_grad(0))
                for (int i = 0; i < g.dim(0); ++i)
                    for (int j = 0; j < g.dim(1); ++j) pg->at(i, n.aux_i + j) += g.at(i, j);
            break;
        }
        case Op::ConcatCols: {
            int at = 0;
            for (size_t k = 0; k < n.parents.size(); ++k) {
                const int w = n.aux_idx[k];
                if (Tensor* pg = parent_grad(static_cast<int>(k))) {
                    for (int i = 0; i < g.dim(0); ++i)
                        for (int j = 0; j < w; ++j) pg->at(i, j) += g.at(i, at + j);
                }
                at += w;
            }
            break;
        }
        case Op::MeanRows: {
            if (Tensor* pg = parent_grad(0)) {
                const int r = pg->dim(0), c = pg->dim(1);
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < c; ++j) pg->at(i, j) += g.at(j) / r;
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor &X = pval(0), &gamma = pval(1);
            const bool vec = X.rank() == 1;
            const int r = vec ? 1 : X.dim(0);
            const int c = vec ? X.dim(0) : X.dim(1);
            Tensor* pgx = parent_grad(0);
            Tensor* pgg = parent_grad(1);
            Tensor* pgb = parent_grad(2);
            for (int i = 0; i < r; ++i) {
                const double mu = n.aux_a.at(i), inv = n.aux_b.at(i);
                double m1 = 0.0, m2 = 0.0;
                for (int j = 0; j < c; ++j) {
                    const size_t off = static_cast<size_t>(i) * c + j;
                    const double xhat = (X.data()[off] - mu) * inv;
                    const double gg = g.data()[off] * gamma.at(j);
                    m1 += gg;
                    m2 += gg * xhat;
                    if (pgg) pgg->at(j) += g.data()[off] * xhat;
                    if (pgb) pgb->at(j) += g.data()[off];
                }
                m1 /= c;
                m2 /= c;
                if (pgx) {
                    for (int j = 0; j < c; ++j) {
                        const size_t off = static_cast<size_t>(i) * c + j;
                        const double xhat = (X.data()[off] - mu) * inv;
                        const double gg = g.data()[off] * gamma.at(j);
                        pgx->data()[off] += inv * (gg - m1 - xhat * m2);
                    }
                }
            }
            break;
        }
        case Op::Gelu: {
            if (Tensor* pg = parent_grad(0)) {
                const Tensor& X = pval(0);
                for (size_t i = 0; i < g.size(); ++i) {
                    const double x = X.data()[i];
                    const double d = 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                                     x * std::exp(-0.5 * x * x) * kInvSqrt2Pi;
                    pg->data()[i] += g.data()[i] * d;
                }
            }
            break;
        }
        case Op::SoftmaxRows: {
            if (Tensor* pg = parent_grad(0)) {
                const Tensor& A = n.value;
                const int r = A.dim(0), c = A.dim(1);
                for (int i = 0; i < r; ++i) {
                    double s = 0.0;
                    for (int j = 0; j < c; ++j) s += g.at(i, j) * A.at(i, j);
                    for (int j = 0; j < c; ++j) pg->at(i, j) += A.at(i, j) * (g.at(i, j) - s);
                }
            }
            break;
        }
        case Op::Dot: {
            const double gs = g.data()[0];
            const Tensor &u = pval(0), &v = pval(1);
            if (Tensor* pg = parent_grad(0))
                for (int i = 0; i < u.dim(0); ++i) pg->at(i) += gs * v.at(i);
            if (Tensor* pg = parent_grad(1))
                for (int i = 0; i < u.dim(0); ++i) pg->at(i) += gs * u.at(i);
            break;
        }
        case Op::L2Normalize: {
            if (Tensor* pg = parent_grad(0)) {
                const double nrm = n.aux_c;
                if (nrm >= kNormFloor) {
                    const Tensor& y = n.value;
                    double yg = 0.0;
                    for (int i = 0; i < y.dim(0); ++i) yg += y.at(i) * g.at(i);
                    for (int i = 0; i < y.dim(0); ++i)
                        pg->at(i) += (g.at(i) - y.at(i) * yg) / nrm;
                }
            }
            break;
        }
        case Op::Cosine: {
            const double gs = g.data()[0];
            const double nu = n.aux_a.at(0), nv = n.aux_a.at(1);
            if (nu < kNormFloor || nv < kNormFloor) break;
            const Tensor &u = pval(0), &v = pval(1);
            const double cosv = n.value.data()[0];
            if (Tensor* pg = parent_grad(0))
                for (int i = 0; i < u.dim(0); ++i)
                    pg->at(i) += gs * (v.at(i) / (nu * nv) - cosv * u.at(i) / (nu * nu));
            if (Tensor* pg = parent_grad(1))
                for (int i = 0; i < u.dim(0); ++i)
                    pg->at(i) += gs * (u.at(i) / (nu * nv) - cosv * v.at(i) / (nv * nv));
            break;
        }
        case Op::SmoothL1: {
            const double gs = g.data()[0] / static_cast<double>(pval(0).size());
            const Tensor &a = pval(0), &b = pval(1);
            Tensor* pga = parent_grad(0);
            Tensor* pgb = parent_grad(1);
            for (size_t i = 0; i < a.size(); ++i) {
                const double d = gs * smooth_l1_deriv(a.data()[i] - b.data()[i], n.aux_c);
                if (pga) pga->data()[i] += d;
                if (pgb) pgb->data()[i] -= d;
            }
            break;
        }
        case Op::WeightedSL1Rows: {
            const double gs = g.data()[0];
            const Tensor &a = pval(0), &b = pval(1);
            const int r = a.dim(0), c = a.dim(1);
            Tensor* pga = parent_grad(0);
            Tensor* pgb = parent_grad(1);
            for (int i = 0; i < r; ++i) {
                const double wi = gs * n.aux_a.at(i) / c;
                for (int j = 0; j < c; ++j) {
                    const double d = wi * smooth_l1_deriv(a.at(i, j) - b.at(i, j), n.aux_c);
                    if (pga) pga->at(i, j) += d;
                    if (pgb) pgb->at(i, j) -= d;
                }
            }
            break;
        }
        case Op::SqDiffSum: {
            const double gs = g.data()[0];
            const Tensor &a = pval(0), &b = pval(1);
            Tensor* pga = parent_grad(0);
            Tensor* pgb = parent_grad(1);
            for (size_t i = 0; i < a.size(); ++i) {
                const double d = 2.0 * gs * (a.data()[i] - b.data()[i]);
                if (pga) pga->data()[i] += d;
                if (pgb) pgb->data()[i] -= d;
            }
            break;
        }
        case Op::SoftmaxCE: {
            if (Tensor* pg = parent_grad(0)) {
                const double gs = g.data()[0];
                const Tensor& p = n.aux_a;
                for (int j = 0; j < p.dim(0); ++j)
                    pg->at(j) += gs * (p.at(j) - (j == n.aux_i ? 1.0 : 0.0));
            }
            break;
        }
        case Op::TuckerTail: {
            const Tensor &W = pval(0), &h = pval(1), &r = pval(2);
            const int d0 = W.dim(0), d1 = W.dim(1), d2 = W.dim(2);
            if (Tensor* pg = parent_grad(0)) {
                for (int a = 0; a < d0; ++a) {
                    const double ha = h.at(a);
                    if (ha == 0.0) continue;
                    for (int b = 0; b < d1; ++b) {
                        const double hr = ha * r.at(b);
                        if (hr == 0.0) continue;
                        for (int cdx = 0; cdx < d2; ++cdx) pg->at(a, b, cdx) += hr * g.at(cdx);
                    }
                }
            }
            Tensor* pgh = parent_grad(1);
            Tensor* pgr = parent_grad(2);
            if (pgh || pgr) {
                // M_ab = sum_c W_abc g_c;  dh = M r, dr = M^T h
                for (int a = 0; a < d0; ++a)
                    for (int b = 0; b < d1; ++b) {
                        double m = 0.0;
                        for (int cdx = 0; cdx < d2; ++cdx) m += W.at(a, b, cdx) * g.at(cdx);
                        if (pgh) pgh->at(a) += m * r.at(b);
                        if (pgr) pgr->at(b) += m * h.at(a);
                    }
            }
            break;
        }
        case Op::TuckerHead: {
            const Tensor &W = pval(0), &r = pval(1), &t = pval(2);
            const int d0 = W.dim(0), d1 = W.dim(1), d2 = W.dim(2);
            if (Tensor* pg = parent_grad(0)) {
                for (int a = 0; a < d0; ++a) {
                    const double ga = g.at(a);
                    if (ga == 0.0) continue;
                    for (int b = 0; b < d1; ++b) {
                        const double gr = ga * r.at(b);
                        if (gr == 0.0) continue;
                        for (int cdx = 0; cdx < d2; ++cdx) pg->at(a, b, cdx) += gr * t.at(cdx);
                    }
                }
            }
            Tensor* pgr = parent_grad(1);
            Tensor* pgt = parent_grad(2);
            if (pgr || pgt) {
                // M_bc = sum_a W_abc g_a;  dr = M t, dt = M^T r
                for (int b = 0; b < d1; ++b)
                    for (int cdx = 0; cdx < d2; ++cdx) {
                        double m = 0.0;
                        for (int a = 0; a < d0; ++a) m += W.at(a, b, cdx) * g.at(a);
                        if (pgr) pgr->at(b) += m * t.at(cdx);
                        if (pgt) pgt->at(cdx) += m * r.at(b);
                    }
            }
            break;
        }
        case Op::EwcQuad: {
            if (Tensor* pg = parent_grad(0)) {
                const double gs = g.data()[0];
                const Tensor& p = pval(0);
                for (size_t i = 0; i < p.size(); ++i)
                    pg->data()[i] +=
                        gs * n.aux_a.data()[i] * (p.data()[i] - n.aux_b.data()[i]);
            }
            break;
        }
    }
}

}  // namespace mrckg
