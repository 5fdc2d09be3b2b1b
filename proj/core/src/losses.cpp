#include "bseg/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "bseg/morphgrad.hpp"

namespace bseg::losses {

using morph::Tape;

void LossParams::validate() const {
    if (theta0 < 1 || theta0 % 2 == 0) throw std::invalid_argument("LossParams: theta0 must be odd >= 1");
    if (theta < 1 || theta % 2 == 0) throw std::invalid_argument("LossParams: theta must be odd >= 1");
    if (theta0 > theta) throw std::invalid_argument("LossParams: theta0 must be <= theta");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("LossParams: lambda outside [0,1]");
    if (!(eps > 0.0)) throw std::invalid_argument("LossParams: eps must be > 0");
    if (!(bce_clamp > 0.0 && bce_clamp < 0.5))
        throw std::invalid_argument("LossParams: bce_clamp outside (0,0.5)");
}

SoftCounts soft_confusion(const ProbMap& p, const BinaryMap& g) {
    if (!p.same_shape(g)) throw std::invalid_argument("soft_confusion: shape mismatch");
    SoftCounts c;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        const double pv = p.values[i], gv = g.values[i];
        c.tp += pv * gv;
        c.fp += pv * (1.0 - gv);
        c.fn += (1.0 - pv) * gv;
        c.tn += (1.0 - pv) * (1.0 - gv);
    }
    return c;
}

namespace {

struct SoftCountIds {
    Tape::ScalarId tp, fp, fn, tn;
};

SoftCountIds tape_soft_counts(Tape& t, Tape::MapId pn, Tape::MapId gn) {
    auto inv_p = t.affine(pn, -1.0, 1.0);
    auto inv_g = t.affine(gn, -1.0, 1.0);
    return {t.sum(t.mul(pn, gn)), t.sum(t.mul(pn, inv_g)), t.sum(t.mul(inv_p, gn)),
            t.sum(t.mul(inv_p, inv_g))};
}

Tape::ScalarId tape_bce(Tape& t, Tape::MapId pn, Tape::MapId gn, int n_pixels, const LossParams& prm) {
    auto ph = t.clamp(pn, prm.bce_clamp, 1.0 - prm.bce_clamp);
    auto pos = t.mul(gn, t.log(ph));
    auto neg = t.mul(t.affine(gn, -1.0, 1.0), t.log(t.affine(ph, -1.0, 1.0)));
    return t.mul(t.scalar(-1.0 / n_pixels), t.sum(t.add(pos, neg)));
}

Tape::ScalarId tape_iou_loss(Tape& t, const SoftCountIds& c, const LossParams& prm) {
    auto den = t.add(t.add(c.fp, c.tp), t.add(c.fn, t.scalar(prm.eps)));
    return t.sub(t.scalar(1.0), t.div(c.tp, den));
}

Tape::ScalarId tape_dice_loss(Tape& t, const SoftCountIds& c, const LossParams& prm) {
    auto two_tp = t.mul(t.scalar(2.0), c.tp);
    auto den = t.add(two_tp, t.add(t.add(c.fn, c.fp), t.scalar(prm.eps)));
    return t.sub(t.scalar(1.0), t.div(two_tp, den));
}

Tape::ScalarId tape_ss_loss(Tape& t, const SoftCountIds& c, const LossParams& prm) {
    auto spec = t.div(c.tn, t.add(t.add(c.tn, c.fp), t.scalar(prm.eps)));
    auto sens = t.div(c.tp, t.add(t.add(c.tp, c.fn), t.scalar(prm.eps)));
    auto ss = t.add(t.mul(t.scalar(prm.lambda), spec), t.mul(t.scalar(1.0 - prm.lambda), sens));
    return t.sub(t.scalar(1.0), ss);
}

Tape::ScalarId tape_bf1_loss(Tape& t, Tape::MapId pn, Tape::MapId gn, const LossParams& prm) {
    auto b_pd = morph::boundary(t, pn, prm.theta0);
    auto b_gt = morph::boundary(t, gn, prm.theta0);
    auto ext_pd = morph::extend_boundary(t, b_pd, prm.theta);
    auto ext_gt = morph::extend_boundary(t, b_gt, prm.theta);

    auto precision = t.div(t.sum(t.mul(b_pd, ext_gt)), t.add(t.sum(b_pd), t.scalar(prm.eps)));
    auto recall = t.div(t.sum(t.mul(b_gt, ext_pd)), t.add(t.sum(b_gt), t.scalar(prm.eps)));
    auto bf1 = t.div(t.mul(t.scalar(2.0), t.mul(precision, recall)),
                     t.add(t.add(precision, recall), t.scalar(prm.eps)));
    return t.sub(t.scalar(1.0), bf1);
}

struct BuiltLoss {
    Tape::MapId p_leaf;
    Tape::ScalarId out;
    LossComponents components;
};

BuiltLoss build_loss(Tape& t, LossKind kind, const ProbMap& p, const BinaryMap& g, double w,
                     const LossParams& prm) {
    if (!p.same_shape(g)) throw std::invalid_argument("loss: shape mismatch");
    prm.validate();

    BuiltLoss built;
    built.p_leaf = t.input(p);
    auto gn = t.constant(g);

    switch (kind) {
        case LossKind::bce: {
            built.out = tape_bce(t, built.p_leaf, gn, p.size(), prm);
            built.components.bce = t.scalar_value(built.out);
            break;
        }
        case LossKind::iou: {
            built.out = tape_iou_loss(t, tape_soft_counts(t, built.p_leaf, gn), prm);
            built.components.iou = t.scalar_value(built.out);
            break;
        }
        case LossKind::dice: {
            built.out = tape_dice_loss(t, tape_soft_counts(t, built.p_leaf, gn), prm);
            built.components.dice = t.scalar_value(built.out);
            break;
        }
        case LossKind::ss: {
            built.out = tape_ss_loss(t, tape_soft_counts(t, built.p_leaf, gn), prm);
            built.components.ss = t.scalar_value(built.out);
            break;
        }
        case LossKind::bf1: {
            built.out = tape_bf1_loss(t, built.p_leaf, gn, prm);
            built.components.bf1 = t.scalar_value(built.out);
            break;
        }
        case LossKind::combined: {
            if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("combined_loss: w outside [0,1]");
            auto bce = tape_bce(t, built.p_leaf, gn, p.size(), prm);
            auto bf1 = tape_bf1_loss(t, built.p_leaf, gn, prm);
            auto iou = tape_iou_loss(t, tape_soft_counts(t, built.p_leaf, gn), prm);
            auto weighted = t.add(t.mul(t.scalar(w), bf1), t.mul(t.scalar(1.0 - w), iou));
            built.out = t.add(bce, weighted);
            built.components.bce = t.scalar_value(bce);
            built.components.bf1 = t.scalar_value(bf1);
            built.components.iou = t.scalar_value(iou);
            built.components.weight_w = w;
            break;
        }
    }
    return built;
}

LossResult run_loss(LossKind kind, const ProbMap& p, const BinaryMap& g, double w,
                    const LossParams& prm) {
    Tape t;
    BuiltLoss built = build_loss(t, kind, p, g, w, prm);
    t.backward(built.out);
    LossResult r;
    r.value = t.scalar_value(built.out);
    r.grad = t.grad(built.p_leaf);
    r.components = built.components;
    if (!std::isfinite(r.value)) throw std::domain_error("loss: non-finite value");
    return r;
}

}  // namespace

LossResult bce_loss(const ProbMap& p, const BinaryMap& g, const LossParams& params) {
    return run_loss(LossKind::bce, p, g, 0.0, params);
}

LossResult iou_loss(const ProbMap& p, const BinaryMap& g, const LossParams& params) {
    return run_loss(LossKind::iou, p, g, 0.0, params);
}

LossResult dice_loss(const ProbMap& p, const BinaryMap& g, const LossParams& params) {
    return run_loss(LossKind::dice, p, g, 0.0, params);
}

LossResult ss_loss(const ProbMap& p, const BinaryMap& g, const LossParams& params) {
    return run_loss(LossKind::ss, p, g, 0.0, params);
}

LossResult bf1_loss(const ProbMap& p, const BinaryMap& g, const LossParams& params) {
    return run_loss(LossKind::bf1, p, g, 0.0, params);
}

LossResult combined_loss(const ProbMap& p, const BinaryMap& g, double w, const LossParams& params) {
    return run_loss(LossKind::combined, p, g, w, params);
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "bce") return LossKind::bce;
    if (name == "iou") return LossKind::iou;
    if (name == "dice") return LossKind::dice;
    if (name == "ss") return LossKind::ss;
    if (name == "bf1") return LossKind::bf1;
    if (name == "combined") return LossKind::combined;
    throw std::invalid_argument("unknown loss name: " + name);
}

LossResult eval_loss(LossKind kind, const ProbMap& p, const BinaryMap& g, double w,
                     const LossParams& params) {
    return run_loss(kind, p, g, w, params);
}

double eval_loss_value(LossKind kind, const ProbMap& p, const BinaryMap& g, double w,
                       const LossParams& params, std::uint64_t* digest) {
    Tape t;
    BuiltLoss built = build_loss(t, kind, p, g, w, params);
    if (digest) *digest = t.cache_digest();
    return t.scalar_value(built.out);
}

}  // namespace bseg::losses
