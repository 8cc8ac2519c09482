#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "a2f/rng.hpp"
#include "a2f/tensor.hpp"

namespace a2f {

// A named parameter exposed to the finite-difference harness.
template <typename S>
struct ParamView {
    std::string name;
    TensorT<S>* value = nullptr;
    TensorT<S>* grad = nullptr;
};

struct GradCheckEntry {
    std::string name;
    double rel_err = 0.0;
    std::int64_t checked = 0;
    std::int64_t skipped = 0;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::int64_t checked = 0;
    std::int64_t skipped = 0;
    std::vector<GradCheckEntry> entries;
};

// Compares analytic gradients against central finite differences.
//
//   loss          re-evaluates the full (deterministic) computation and
//                 returns its scalar value; must observe parameter edits.
//   compute_grads zeroes all grads, then runs forward + backward once.
//   samples       per-tensor cap on checked coordinates; tensors at or below
//                 the cap are checked exhaustively, larger ones sampled.
//
// Reported error per coordinate: |analytic - fd| / max(|analytic|, |fd|, 1e-8).
//
// Central differences are only meaningful where the computation is smooth
// across [x-eps, x+eps]; a ReLU mask flipping inside that interval poisons
// the quotient no matter how exact the analytic gradient is. Each coordinate
// is therefore measured at eps and eps/2, and coordinates where the two
// estimates disagree by more than guard_rel (relative) are excluded and
// counted in `skipped` instead. Callers assert on `skipped` staying a small
// fraction of `checked`; guard_rel should sit at or below half the rel-error
// tolerance being asserted so surviving contamination cannot mask a real
// gradient bug.
//
// Throws NumericError if a non-finite value shows up, naming the parameter.
template <typename S>
GradCheckReport finite_diff_gradcheck(const std::function<double()>& loss,
                                      const std::function<void()>& compute_grads,
                                      std::span<const ParamView<S>> params, double eps,
                                      int samples, std::uint64_t seed,
                                      double guard_rel = 0.05) {
    if (eps <= 0.0) throw ConfigError("finite_diff_gradcheck: eps must be positive");
    compute_grads();

    std::vector<std::vector<S>> analytic;
    analytic.reserve(params.size());
    for (const auto& p : params) {
        analytic.emplace_back(p.grad->data(), p.grad->data() + p.grad->size());
    }

    Rng rng(seed);
    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& p = params[pi];
        std::vector<std::int64_t> idx;
        const std::int64_t total = p.value->size();
        if (total <= samples) {
            idx.resize(static_cast<std::size_t>(total));
            for (std::int64_t i = 0; i < total; ++i) idx[static_cast<std::size_t>(i)] = i;
        } else {
            for (int i = 0; i < samples; ++i) {
                idx.push_back(
                    static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(total)));
            }
        }

        GradCheckEntry entry{p.name, 0.0, 0, 0};
        for (std::int64_t i : idx) {
            const S saved = (*p.value)[i];
            auto eval_at = [&](double offset) {
                (*p.value)[i] = static_cast<S>(static_cast<double>(saved) + offset);
                const double v = loss();
                (*p.value)[i] = saved;
                return v;
            };
            const double fd_full = (eval_at(eps) - eval_at(-eps)) / (2.0 * eps);
            const double fd_half = (eval_at(eps / 2) - eval_at(-eps / 2)) / eps;
            const double an = static_cast<double>(analytic[pi][static_cast<std::size_t>(i)]);
            if (!std::isfinite(fd_full) || !std::isfinite(fd_half) || !std::isfinite(an)) {
                throw NumericError("finite_diff_gradcheck: non-finite value for parameter " +
                                   p.name + "[" + std::to_string(i) + "]");
            }
            if (std::abs(fd_full - fd_half) >
                guard_rel * std::max({std::abs(fd_full), std::abs(fd_half), 1e-8})) {
                ++entry.skipped;
                continue;
            }
            ++entry.checked;
            const double denom = std::max({std::abs(an), std::abs(fd_full), 1e-8});
            const double rel = std::abs(an - fd_full) / denom;
            entry.rel_err = std::max(entry.rel_err, rel);
        }
        if (entry.rel_err >= report.max_rel_err) {
            report.max_rel_err = entry.rel_err;
            report.worst_param = p.name;
        }
        report.checked += entry.checked;
        report.skipped += entry.skipped;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace a2f
