#include "optim.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>

#include "rng.hpp"

namespace mrckg {

Tensor& ParamStore::at(const std::string& name) {
    auto it = map_.find(name);
    if (it == map_.end()) throw Fault("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = map_.find(name);
    if (it == map_.end()) throw Fault("unknown parameter: " + name);
    return it->second;
}

void ParamStore::put(const std::string& name, Tensor t) {
    auto it = map_.find(name);
    if (it == map_.end()) {
        order_.push_back(name);
        map_.emplace(name, std::move(t));
    } else {
        it->second = std::move(t);
    }
}

void ParamStore::remove(const std::string& name) {
    map_.erase(name);
    order_.erase(std::remove(order_.begin(), order_.end(), name), order_.end());
}

size_t ParamStore::total_elements() const {
    size_t n = 0;
    for (const auto& name : order_) n += map_.at(name).size();
    return n;
}

size_t FreezeMask::masked_entries(const ParamStore& params) const {
    size_t n = 0;
    for (const auto& [name, m] : rows) {
        if (!params.has(name)) continue;
        const Tensor& t = params.at(name);
        const size_t row_elems = t.rank() >= 2 ? t.size() / static_cast<size_t>(t.dim(0)) : 1;
        for (uint8_t b : m) n += b ? row_elems : 0;
    }
    return n;
}

void Adam::step(ParamStore& params, const GradMap& grads, const FreezeMask& mask,
                const AdamConfig& cfg) {
    for (const auto& name : params.names()) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        Tensor& p = params.at(name);
        const Tensor& g = git->second;
        if (!g.same_shape(p)) throw Fault("adam: gradient shape mismatch for " + name);
        if (!g.all_finite()) throw Fault("adam: non-finite gradient for " + name);

        Slot& s = slots_[name];
        if (!s.m.same_shape(p)) {
            s.m = Tensor::zeros(p.shape());
            s.v = Tensor::zeros(p.shape());
            s.t = 0;
        }
        s.t += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));

        const std::vector<uint8_t>* row_mask = nullptr;
        if (auto mit = mask.rows.find(name); mit != mask.rows.end()) row_mask = &mit->second;
        const size_t rows_n = p.rank() >= 1 ? static_cast<size_t>(p.dim(0)) : 1;
        const size_t row_elems = p.size() / std::max<size_t>(rows_n, 1);

        for (size_t i = 0; i < p.size(); ++i) {
            if (row_mask) {
                const size_t r = i / row_elems;
                if (r < row_mask->size() && (*row_mask)[r]) continue;
            }
            double& m = s.m.data()[i];
            double& v = s.v.data()[i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g.data()[i];
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.data()[i] * g.data()[i];
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            p.data()[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

Val ParamRefs::at(const std::string& name) const {
    for (const auto& [n, v] : refs)
        if (n == name) return v;
    throw Fault("unregistered parameter: " + name);
}

ParamRefs register_params(Tape& tape, const ParamStore& params) {
    ParamRefs out;
    out.refs.reserve(params.names().size());
    for (const auto& name : params.names()) out.refs.emplace_back(name, tape.input(params.at(name)));
    return out;
}

GradMap collect_grads(const Tape& tape, const ParamRefs& refs) {
    GradMap out;
    for (const auto& [name, val] : refs.refs) out.emplace(name, tape.grad(val));
    return out;
}

double grad_check(const LossFn& fn, const ParamStore& params, double epsilon,
                  int coords_per_tensor, uint64_t seed) {
    Tape tape;
    ParamRefs refs = register_params(tape, params);
    Val loss = fn(tape, refs);
    tape.backward(loss);
    GradMap analytic = collect_grads(tape, refs);

    auto eval = [&](const ParamStore& p) {
        Tape t;
        ParamRefs r = register_params(t, p);
        return t.value(fn(t, r)).item();
    };

    double max_rel = 0.0;
    auto rng = make_rng(seed);
    ParamStore work = params;
    for (const auto& name : params.names()) {
        const size_t n = params.at(name).size();
        if (n == 0) continue;
        std::uniform_int_distribution<size_t> pick(0, n - 1);
        for (int k = 0; k < coords_per_tensor; ++k) {
            const size_t i = pick(rng);
            const double orig = work.at(name).data()[i];
            work.at(name).data()[i] = orig + epsilon;
            const double lp = eval(work);
            work.at(name).data()[i] = orig - epsilon;
            const double lm = eval(work);
            work.at(name).data()[i] = orig;
            const double numeric = (lp - lm) / (2.0 * epsilon);
            const double rel = std::fabs(analytic.at(name).data()[i] - numeric) /
                               std::max(1e-8, std::fabs(numeric));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace mrckg
