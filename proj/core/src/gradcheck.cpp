#include "bseg/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "bseg/nnet.hpp"
#include "bseg/rng.hpp"

namespace bseg::gradcheck {

namespace {

void observe(Report& rep, int index, double analytic, double fd, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), floor});
    const double rel = std::abs(analytic - fd) / denom;
    ++rep.checked;
    if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_index = index;
        rep.worst_analytic = analytic;
        rep.worst_fd = fd;
    }
}

}  // namespace

std::pair<ProbMap, BinaryMap> make_trial_maps(int size, std::uint64_t seed) {
    SplitMix64 rng(substream_seed(seed, 0x6d617073ull));
    Map p(size, size), g(size, size);
    for (double& v : p.values) v = rng.uniform(0.05, 0.95);
    for (double& v : g.values) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    return {ProbMap(std::move(p)), BinaryMap(std::move(g))};
}

Report check_loss(losses::LossKind kind, int size, std::uint64_t seed, double w,
                  const losses::LossParams& params, const Config& cfg) {
    auto [p, g] = make_trial_maps(size, seed);
    const losses::LossResult res = losses::eval_loss(kind, p, g, w, params);

    std::uint64_t base = 0;
    losses::eval_loss_value(kind, p, g, w, params, &base);

    Report rep;
    ProbMap probe = p;
    for (int i = 0; i < p.size(); ++i) {
        const double orig = probe.values[i];
        std::uint64_t dplus = 0, dminus = 0;

        probe.values[i] = orig + cfg.h;
        const double fplus = losses::eval_loss_value(kind, probe, g, w, params, &dplus);
        probe.values[i] = orig - cfg.h;
        const double fminus = losses::eval_loss_value(kind, probe, g, w, params, &dminus);
        probe.values[i] = orig;

        if (dplus != base || dminus != base) {
            ++rep.skipped;
            continue;
        }
        observe(rep, i, res.grad.values[i], (fplus - fminus) / (2.0 * cfg.h), cfg.rel_floor);
    }
    return rep;
}

Report check_model(int size, std::uint64_t seed, double w, const losses::LossParams& params,
                   const Config& cfg) {
    nn::ModelParams model = nn::ModelParams::init(seed);

    SplitMix64 rng(substream_seed(seed, 0x696d67ull));
    Map image(size, size);
    for (double& v : image.values) v = rng.uniform();
    Map gmask(size, size);
    for (double& v : gmask.values) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const BinaryMap g{Map(gmask)};

    auto eval = [&](const nn::ModelParams& m, std::uint64_t* digest) {
        nn::ForwardCache cache;
        const ProbMap y = nn::forward(m, image, &cache);
        std::uint64_t dloss = 0;
        const double value = losses::eval_loss_value(losses::LossKind::combined, y, g, w, params, &dloss);
        if (digest) *digest = cache.digest() * 0x100000001B3ull ^ dloss;
        return value;
    };

    // analytic route
    nn::ForwardCache cache;
    const ProbMap y = nn::forward(model, image, &cache);
    const losses::LossResult lres = losses::eval_loss(losses::LossKind::combined, y, g, w, params);
    const nn::ModelGrads analytic = nn::backward(model, cache, lres.grad);

    std::uint64_t base = 0;
    eval(model, &base);

    Report rep;
    int flat_index = 0;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        auto sweep = [&](std::vector<double>& theta, const std::vector<double>& ga) {
            for (std::size_t k = 0; k < theta.size(); ++k, ++flat_index) {
                const double orig = theta[k];
                std::uint64_t dplus = 0, dminus = 0;
                theta[k] = orig + cfg.h;
                const double fplus = eval(model, &dplus);
                theta[k] = orig - cfg.h;
                const double fminus = eval(model, &dminus);
                theta[k] = orig;
                if (dplus != base || dminus != base) {
                    ++rep.skipped;
                    continue;
                }
                observe(rep, flat_index, ga[k], (fplus - fminus) / (2.0 * cfg.h), cfg.rel_floor);
            }
        };
        sweep(model.layers[li].w, analytic.layers[li].w);
        sweep(model.layers[li].b, analytic.layers[li].b);
    }
    return rep;
}

}  // namespace bseg::gradcheck
