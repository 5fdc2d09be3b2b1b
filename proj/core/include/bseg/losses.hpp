#pragma once

#include <cstdint>
#include <string>

#include "bseg/grid.hpp"

namespace bseg::losses {

struct LossParams {
    int theta0 = 3;          // boundary-extraction window, odd, as small as possible
    int theta = 5;           // boundary-extension window, odd, >= theta0
    double lambda = 0.5;     // specificity/sensitivity balance
    double eps = 1e-7;       // added to every denominator
    double bce_clamp = 1e-7; // probability clamp for the log terms
    void validate() const;
};

struct LossComponents {
    double bce = 0.0;
    double iou = 0.0;
    double dice = 0.0;
    double ss = 0.0;
    double bf1 = 0.0;
    double weight_w = 0.0;  // w used by the combined loss
};

struct LossResult {
    double value = 0.0;
    GradMap grad;  // d value / d prediction, same shape as the input
    LossComponents components;
};

// Differentiable relaxation of the confusion counts: products of p and g.
// Equal to the integer counts when p is hard.
struct SoftCounts {
    double tp = 0.0, fp = 0.0, fn = 0.0, tn = 0.0;
};
SoftCounts soft_confusion(const ProbMap& p, const BinaryMap& g);

// Mean binary cross-entropy with clamped probabilities.
LossResult bce_loss(const ProbMap& p, const BinaryMap& g, const LossParams& params = {});

// 1 - soft metric, eps in every denominator.
LossResult iou_loss(const ProbMap& p, const BinaryMap& g, const LossParams& params = {});
LossResult dice_loss(const ProbMap& p, const BinaryMap& g, const LossParams& params = {});
LossResult ss_loss(const ProbMap& p, const BinaryMap& g, const LossParams& params = {});

// Boundary-F1 surrogate: boundaries via windowed pooling of the inverted maps,
// extension via a second pooling, precision/recall as normalized overlap sums.
// The ground-truth branch is constant; gradient flows only through p.
LossResult bf1_loss(const ProbMap& p, const BinaryMap& g, const LossParams& params = {});

// bce + w * bf1 + (1-w) * iou, single backward pass, components recorded.
LossResult combined_loss(const ProbMap& p, const BinaryMap& g, double w, const LossParams& params = {});

// Loss selector shared by the trainer, the CLI and the gradient checker.
// "combined" is the weighted bce/bf1/iou sum; the other names are bce + that
// single term (w ignored), except the five bare names which are the term alone.
enum class LossKind { bce, iou, dice, ss, bf1, combined };
LossKind loss_kind_from_name(const std::string& name);
LossResult eval_loss(LossKind kind, const ProbMap& p, const BinaryMap& g, double w,
                     const LossParams& params = {});

// Forward value only; `digest` (optional) receives a hash of every pooling
// argmax decision made during evaluation, for tie-ambiguity detection.
double eval_loss_value(LossKind kind, const ProbMap& p, const BinaryMap& g, double w,
                       const LossParams& params = {}, std::uint64_t* digest = nullptr);

}  // namespace bseg::losses
