#pragma once

#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "smoothbin/bytes.hpp"
#include "smoothbin/model.hpp"
#include "smoothbin/rng.hpp"

namespace smoothbin::smoothing {

using model::Token;
using model::kPad;

struct SmoothingConfig {
    double p = 0.2;             // per-byte ablation probability
    int L = 100;                // ablated versions at inference
    double abstain_margin = 0;  // per-view no-vote band around 0.5
    std::uint64_t seed = 0;

    void check() const {
        if (p < 0.0 || p > 1.0)
            throw ConfigError("ablation probability must be in [0,1]");
        if (L < 1) throw ConfigError("L must be >= 1");
        if (abstain_margin < 0.0 || abstain_margin >= 0.5)
            throw ConfigError("abstain margin must be in [0,0.5)");
    }
};

using AblationMask = std::vector<std::uint8_t>;  // 1 = ablate

inline AblationMask create_mask(std::size_t length, double p, Rng& rng) {
    if (p < 0.0 || p > 1.0)
        throw ConfigError("ablation probability must be in [0,1]");
    AblationMask m(length, 0);
    for (auto& bit : m)
        if (rng.next_double() <= p) bit = 1;
    return m;
}

inline std::vector<Token> apply_mask(const std::vector<Token>& tokens,
                                     const AblationMask& mask) {
    if (tokens.size() != mask.size())
        throw DataError("mask length differs from token length");
    std::vector<Token> out(tokens);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (mask[i]) out[i] = kPad;
    return out;
}

inline std::vector<Token> ablate(const std::vector<Token>& tokens, double p,
                                 Rng& rng) {
    return apply_mask(tokens, create_mask(tokens.size(), p, rng));
}

struct VoteResult {
    int n_benign = 0;
    int n_malicious = 0;
    int abstentions = 0;
    double p_benign = 0.0;    // N_benign / L
    double p_malicious = 0.0; // N_malicious / L
    Label label = Label::benign;
};

// Reduces per-view scores to a VoteResult. A view votes malicious when its
// score >= 0.5 + delta, benign when <= 0.5 - delta, and abstains in between.
// Ties in counts go to malicious.
inline VoteResult tally_votes(const std::vector<double>& scores, double delta) {
    VoteResult r;
    for (double s : scores) {
        if (s >= 0.5 + delta)
            ++r.n_malicious;
        else if (s <= 0.5 - delta)
            ++r.n_benign;
        else
            ++r.abstentions;
    }
    const auto L = static_cast<double>(scores.size());
    r.p_benign = r.n_benign / L;
    r.p_malicious = r.n_malicious / L;
    r.label = r.n_malicious >= r.n_benign ? Label::malicious : Label::benign;
    return r;
}

// Majority vote over L independently ablated views. View substreams are
// derived from (seed, content hash, view index) so results do not depend on
// evaluation order.
inline VoteResult smoothed_predict(const model::ClassifierParams& params,
                                   const Bytes& bytes,
                                   const model::ModelConfig& cfg,
                                   const SmoothingConfig& smooth_cfg,
                                   int threads = 1) {
    smooth_cfg.check();
    const std::vector<Token> tokens = model::tokenize(bytes, cfg.max_len);
    const std::uint64_t subject_key = hash_prefix_u64(sha256(bytes));

    std::vector<double> scores(static_cast<std::size_t>(smooth_cfg.L), 0.0);
    auto eval_range = [&](std::size_t begin, std::size_t end) {
        for (std::size_t v = begin; v < end; ++v) {
            Rng rng(derive_seed(smooth_cfg.seed ^ subject_key, "smoothing.view", v));
            const auto view = ablate(tokens, smooth_cfg.p, rng);
            scores[v] = model::forward(params, view, cfg).score;
        }
    };

    const auto L = static_cast<std::size_t>(smooth_cfg.L);
    if (threads <= 1 || L < 2) {
        eval_range(0, L);
    } else {
        const std::size_t nt = std::min<std::size_t>(threads, L);
        std::vector<std::thread> pool;
        const std::size_t chunk = (L + nt - 1) / nt;
        for (std::size_t t = 0; t < nt; ++t)
            pool.emplace_back(eval_range, t * chunk,
                              std::min(L, (t + 1) * chunk));
        for (auto& th : pool) th.join();
    }
    return tally_votes(scores, smooth_cfg.abstain_margin);
}

// Smoothed training: the base trainer with a fresh ablation per example per
// epoch.
inline model::ClassifierParams train_smoothed(
    const model::ModelConfig& base_cfg, const SmoothingConfig& smooth_cfg,
    const std::vector<model::TrainExample>& corpus) {
    smooth_cfg.check();
    model::AblationHook hook = [&smooth_cfg](const std::vector<Token>& toks,
                                             std::size_t index, int epoch) {
        Rng rng(derive_seed(smooth_cfg.seed, "smoothing.train",
                            (static_cast<std::uint64_t>(epoch) << 32) | index));
        return ablate(toks, smooth_cfg.p, rng);
    };
    return model::train(model::init_params(base_cfg), corpus, base_cfg, hook);
}

}  // namespace smoothbin::smoothing
