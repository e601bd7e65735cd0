#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "benchmark.hpp"
#include "preservation.hpp"
#include "replay.hpp"
#include "trainer.hpp"

namespace mrckg {

// Small two-snapshot world for gradient checks and stop-gradient tests.
struct ToyWorld {
    SnapshotSequence seq;
    ModalityStore store;
    ModelConfig mcfg;
    Model current;  // registered for snapshot 1, perturbed away from frozen
    Model frozen_model;
    FrozenReference frozen;
    ReplayBuffer buffer;
    std::vector<double> lambda_e;
    GradMap fisher;  // synthetic positive diagonal for the EWC term
    double tau = 0.5;
    double beta = 1.0;
};

ToyWorld make_toy_world(uint64_t seed, int entities = 12, int d = 8);

struct SelfCheckResult {
    std::vector<std::pair<std::string, double>> per_term;
    double max_rel_error = 0.0;
};

// Central-difference gradient check of every loss term on the toy world.
SelfCheckResult selfcheck_grad(uint64_t seed);

}  // namespace mrckg
