#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tape.hpp"
#include "tensor.hpp"

namespace mrckg {

// Named tensors with deterministic (insertion-order) iteration.
class ParamStore {
public:
    bool has(const std::string& name) const { return map_.count(name) > 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    void put(const std::string& name, Tensor t);
    void remove(const std::string& name);
    const std::vector<std::string>& names() const { return order_; }
    size_t total_elements() const;

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> map_;
};

// Row-level freeze mask per named 2-D parameter. Masked rows keep their bits
// across optimizer steps.
struct FreezeMask {
    std::unordered_map<std::string, std::vector<uint8_t>> rows;
    bool empty() const { return rows.empty(); }
    size_t masked_entries(const ParamStore& params) const;
};

using GradMap = std::unordered_map<std::string, Tensor>;

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with per-tensor step counters. Masked rows are skipped entirely
// (moments included), so frozen parameters stay bit-identical.
class Adam {
public:
    void step(ParamStore& params, const GradMap& grads, const FreezeMask& mask,
              const AdamConfig& cfg);
    void reset() { slots_.clear(); }

private:
    struct Slot {
        Tensor m, v;
        int64_t t = 0;
    };
    std::unordered_map<std::string, Slot> slots_;
};

// Tape handles for a registered parameter set.
struct ParamRefs {
    std::vector<std::pair<std::string, Val>> refs;
    Val at(const std::string& name) const;
};

ParamRefs register_params(Tape& tape, const ParamStore& params);
GradMap collect_grads(const Tape& tape, const ParamRefs& refs);

using LossFn = std::function<Val(Tape&, const ParamRefs&)>;

// Max relative error between analytic and central-difference gradients over
// seeded sampled coordinates: |analytic - numeric| / max(1e-8, |numeric|).
double grad_check(const LossFn& fn, const ParamStore& params, double epsilon,
                  int coords_per_tensor, uint64_t seed);

}  // namespace mrckg
