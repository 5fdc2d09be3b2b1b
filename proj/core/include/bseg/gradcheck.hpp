#pragma once

#include <cstdint>
#include <utility>

#include "bseg/grid.hpp"
#include "bseg/losses.hpp"

namespace bseg::gradcheck {

struct Config {
    double h = 1e-4;          // central-difference step
    double rel_floor = 1e-6;  // denominators below this count as agreement at zero
};

struct Report {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0;  // tie-ambiguous coordinates (pooling argmax or relu mask flipped)
    int worst_index = -1;
    double worst_analytic = 0.0;
    double worst_fd = 0.0;
};

// Seeded trial fixtures: prediction uniform in [0.05,0.95] (bounded away from
// the bce clamp), mask Bernoulli(0.5).
std::pair<ProbMap, BinaryMap> make_trial_maps(int size, std::uint64_t seed);

// Central finite differences of the loss w.r.t. every prediction pixel vs the
// analytic gradient. Pixels whose perturbation flips any pooling argmax are
// excluded (the subgradient is set-valued there).
Report check_loss(losses::LossKind kind, int size, std::uint64_t seed, double w = 0.5,
                  const losses::LossParams& params = {}, const Config& cfg = {});

// Same comparison for d(combined loss)/d(every model parameter) with a fresh
// seeded model on a size x size input; relu-mask flips are excluded too.
Report check_model(int size, std::uint64_t seed, double w = 0.5,
                   const losses::LossParams& params = {}, const Config& cfg = {});

}  // namespace bseg::gradcheck
