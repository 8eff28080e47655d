#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "smoothbin/bytes.hpp"
#include "smoothbin/corpus.hpp"
#include "smoothbin/ga.hpp"
#include "smoothbin/model.hpp"
#include "smoothbin/pe.hpp"
#include "smoothbin/rng.hpp"
#include "smoothbin/smoothing.hpp"

namespace smoothbin::attacks {

enum class AttackKind { shift, gamma, caves };

inline const char* to_string(AttackKind k) {
    switch (k) {
        case AttackKind::shift: return "shift";
        case AttackKind::gamma: return "gamma";
        default: return "caves";
    }
}

inline AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "shift") return AttackKind::shift;
    if (s == "gamma") return AttackKind::gamma;
    if (s == "caves") return AttackKind::caves;
    throw ConfigError("unknown attack kind: " + s);
}

struct AttackConfig {
    AttackKind kind = AttackKind::shift;
    std::size_t size_cap = pe::kDefaultSizeCap;
    int L_attack = 20;
    std::uint32_t shift_extension = 2048;
    int gamma_num_sections = 10;
    std::uint32_t gamma_section_max = 4096;  // payload bytes per injected section
    double gamma_size_penalty = 0.0;         // lambda
    std::uint32_t cave_budget = 512;         // cave size per section
};

// One logical query per candidate file, regardless of how many ablated views
// a smoothed detector evaluates internally.
class DetectorOracle {
public:
    struct Result {
        double score = 0.0;
        Label label = Label::benign;
    };
    using Fn = std::function<Result(const Bytes&)>;

    explicit DetectorOracle(std::string id, Fn fn)
        : id_(std::move(id)), fn_(std::move(fn)) {}

    Result query(const Bytes& bytes) {
        ++queries_;
        return fn_(bytes);
    }
    std::size_t queries() const { return queries_; }
    void reset_queries() { queries_ = 0; }
    const std::string& id() const { return id_; }

private:
    std::string id_;
    Fn fn_;
    std::size_t queries_ = 0;
};

inline DetectorOracle make_ns_oracle(const model::ClassifierParams& params,
                                     const model::ModelConfig& cfg) {
    return DetectorOracle("NS", [params, cfg](const Bytes& b) {
        const auto pred = model::forward(params, model::tokenize(b, cfg.max_len), cfg);
        return DetectorOracle::Result{pred.score, pred.label};
    });
}

inline DetectorOracle make_ra_oracle(const model::ClassifierParams& params,
                                     const model::ModelConfig& cfg,
                                     const smoothing::SmoothingConfig& smooth_cfg,
                                     int threads = 1) {
    return DetectorOracle("RA", [params, cfg, smooth_cfg, threads](const Bytes& b) {
        const auto vote =
            smoothing::smoothed_predict(params, b, cfg, smooth_cfg, threads);
        return DetectorOracle::Result{vote.p_malicious, vote.label};
    });
}

struct AttackOutcome {
    bool evaded = false;
    std::size_t queries_used = 0;
    int generations_run = 0;
    Bytes final_bytes;
    pe::ValidityReport validity;
    std::vector<double> best_fitness_trace;
};

// Benign-donor byte bank: benign motifs tiled into a deterministic blob.
// Attack payload populations are initialized from it.
inline const Bytes& benign_bank() {
    static const Bytes bank = [] {
        Bytes b;
        b.reserve(8192);
        const auto& motifs = corpus::benign_motifs();
        while (b.size() < 8192)
            for (const auto& m : motifs) b.insert(b.end(), m.begin(), m.end());
        return b;
    }();
    return bank;
}

namespace detail {

inline constexpr double kRejectedFitness = -std::numeric_limits<double>::infinity();

// Kind-specific rendering of a genome into a candidate file.
struct Carrier {
    AttackKind kind;
    pe::PeImage base;                                       // shift/caves
    std::vector<std::pair<std::size_t, std::size_t>> holes; // writable (offset,size)
    std::size_t gene_count = 0;
    const pe::PeImage* subject_image = nullptr;             // gamma
    AttackConfig cfg;

    // Returns empty on size-cap rejection (gamma only; fixed carriers are
    // checked at construction).
    Bytes render(const ga::Genome& genome, std::size_t* injected_out) const {
        if (kind == AttackKind::gamma) {
            pe::PeImage img = *subject_image;
            const auto& bank = benign_bank();
            std::size_t injected = 0;
            try {
                for (int s = 0; s < cfg.gamma_num_sections; ++s) {
                    const std::uint32_t start = genome.genes[2 * s];
                    const std::uint32_t len = genome.genes[2 * s + 1];
                    Bytes payload(len);
                    for (std::uint32_t i = 0; i < len; ++i)
                        payload[i] = bank[(start + i) % bank.size()];
                    injected += len;
                    img = pe::add_section(
                        img, ".gam" + std::to_string(s), payload,
                        pe::kScnInitializedData | pe::kScnMemRead, cfg.size_cap);
                }
            } catch (const pe::SizeCapError&) {
                return {};
            }
            if (injected_out) *injected_out = injected;
            return pe::serialize(img);
        }
        pe::PeImage img = base;
        std::size_t gi = 0, injected = 0;
        for (auto [off, size] : holes) {
            Bytes payload(size);
            for (std::size_t i = 0; i < size; ++i)
                payload[i] = static_cast<std::uint8_t>(genome.genes[gi++]);
            pe::write_region(img, off, payload);
            injected += size;
        }
        if (injected_out) *injected_out = injected;
        return pe::serialize(img);
    }
};

inline Carrier build_carrier(const pe::PeImage& subject, const AttackConfig& cfg) {
    Carrier c;
    c.kind = cfg.kind;
    c.cfg = cfg;
    switch (cfg.kind) {
        case AttackKind::shift: {
            auto res = pe::shift_sections(subject, cfg.shift_extension, cfg.size_cap);
            c.base = std::move(res.image);
            if (res.gap_size > 0) c.holes.emplace_back(res.gap_offset, res.gap_size);
            c.gene_count = res.gap_size;
            break;
        }
        case AttackKind::caves: {
            std::vector<std::uint32_t> sizes(subject.sections.size(),
                                             cfg.cave_budget);
            auto res = pe::extend_code_caves(subject, sizes, cfg.size_cap);
            c.base = std::move(res.image);
            c.holes = res.caves;
            for (auto [off, size] : c.holes) c.gene_count += size;
            break;
        }
        case AttackKind::gamma:
            c.subject_image = &subject;
            c.gene_count = static_cast<std::size_t>(cfg.gamma_num_sections) * 2;
            break;
    }
    return c;
}

inline ga::Genome init_genome(const Carrier& c, Rng& rng) {
    ga::Genome g;
    g.genes.resize(c.gene_count);
    const auto& bank = benign_bank();
    if (c.kind == AttackKind::gamma) {
        for (std::size_t i = 0; i < c.gene_count; i += 2) {
            g.genes[i] = static_cast<std::uint32_t>(rng.below(bank.size()));
            g.genes[i + 1] =
                static_cast<std::uint32_t>(rng.below(c.cfg.gamma_section_max + 1));
        }
    } else {
        // Payload bytes copied from a random window of the benign bank.
        const std::size_t start = rng.below(bank.size());
        for (std::size_t i = 0; i < c.gene_count; ++i)
            g.genes[i] = bank[(start + i) % bank.size()];
    }
    return g;
}

inline ga::GeneSampler make_sampler(const Carrier& c) {
    if (c.kind == AttackKind::gamma) {
        const std::size_t bank_size = benign_bank().size();
        const std::uint32_t max_len = c.cfg.gamma_section_max;
        return [bank_size, max_len](std::size_t i, Rng& rng) {
            return i % 2 == 0
                       ? static_cast<std::uint32_t>(rng.below(bank_size))
                       : static_cast<std::uint32_t>(rng.below(max_len + 1));
        };
    }
    return [](std::size_t, Rng& rng) {
        return static_cast<std::uint32_t>(rng.below(256));
    };
}

}  // namespace detail

// Black-box GA evasion campaign. queries_used counts candidate queries; the
// initial screening of the unmodified subject is only counted when it alone
// decides the outcome.
inline AttackOutcome run_attack(const ByteSample& subject,
                                DetectorOracle& detector,
                                const AttackConfig& a_cfg,
                                const ga::GaConfig& g_cfg) {
    g_cfg.check();
    if (a_cfg.size_cap < subject.bytes.size())
        throw ConfigError("size cap smaller than subject file");

    AttackOutcome out;
    const auto initial = detector.query(subject.bytes);
    if (initial.label == Label::benign) {
        out.evaded = true;
        out.queries_used = 1;
        out.final_bytes = subject.bytes;
        const auto img = pe::parse(subject.bytes);
        const auto baseline = pe::section_hashes(img);
        out.validity = pe::validate(img, &baseline);
        return out;
    }

    const pe::PeImage subject_img = pe::parse(subject.bytes);
    const auto baseline = pe::section_hashes(subject_img);
    const auto carrier = detail::build_carrier(subject_img, a_cfg);

    const std::uint64_t subject_key = hash_prefix_u64(subject.content_hash);
    Rng rng(derive_seed(g_cfg.seed ^ subject_key, "attack.campaign"));
    const auto sampler = detail::make_sampler(carrier);

    std::vector<ga::Genome> population(
        static_cast<std::size_t>(g_cfg.population_size));
    for (auto& g : population) g = detail::init_genome(carrier, rng);

    std::size_t queries = 0;
    double best_fitness = detail::kRejectedFitness;
    Bytes best_bytes = subject.bytes;

    auto evaluate = [&](std::vector<ga::Genome>& pop) -> std::optional<Bytes> {
        for (auto& g : pop) {
            if (g.evaluated) continue;
            std::size_t injected = 0;
            Bytes candidate = carrier.render(g, &injected);
            if (candidate.empty() || candidate.size() > a_cfg.size_cap) {
                g.fitness = detail::kRejectedFitness;
                g.evaluated = true;
                continue;
            }
            const auto img = pe::parse(candidate);
            if (!pe::validate(img, &baseline).all_passed()) {
                g.fitness = detail::kRejectedFitness;
                g.evaluated = true;
                continue;
            }
            const auto res = detector.query(candidate);
            ++queries;
            g.fitness = (1.0 - res.score) -
                        a_cfg.gamma_size_penalty *
                            (static_cast<double>(injected) /
                             static_cast<double>(a_cfg.size_cap));
            g.evaluated = true;
            if (g.fitness > best_fitness) {
                best_fitness = g.fitness;
                best_bytes = candidate;
            }
            if (res.label == Label::benign) return candidate;  // early termination
        }
        return std::nullopt;
    };

    for (int gen = 0; gen <= g_cfg.max_generations; ++gen) {
        if (auto hit = evaluate(population)) {
            double gen_best = detail::kRejectedFitness;
            for (const auto& g : population)
                if (g.evaluated) gen_best = std::max(gen_best, g.fitness);
            out.best_fitness_trace.push_back(gen_best);
            out.evaded = true;
            out.queries_used = queries;
            out.generations_run = gen;
            out.final_bytes = std::move(*hit);
            out.validity = pe::validate(pe::parse(out.final_bytes), &baseline);
            return out;
        }
        double gen_best = detail::kRejectedFitness;
        for (const auto& g : population) gen_best = std::max(gen_best, g.fitness);
        out.best_fitness_trace.push_back(gen_best);
        if (gen == g_cfg.max_generations) break;

        auto selected = ga::select(population, g_cfg, rng);
        std::vector<ga::Genome> next(selected.begin(),
                                     selected.begin() + g_cfg.elite_count);
        // Cross every elite with every tournament winner, two offspring per
        // pair, until the population is refilled; offspring are then mutated.
        const std::size_t n_tour = selected.size() - g_cfg.elite_count;
        std::size_t pair_idx = 0;
        while (next.size() < static_cast<std::size_t>(g_cfg.population_size)) {
            const auto& pa = selected[pair_idx / std::max<std::size_t>(n_tour, 1) %
                                      std::max<std::size_t>(g_cfg.elite_count, 1)];
            const auto& pb =
                n_tour > 0 ? selected[g_cfg.elite_count + pair_idx % n_tour] : pa;
            auto [c1, c2] = ga::crossover(pa, pb, g_cfg.chunk_count);
            ++pair_idx;
            next.push_back(ga::mutate(std::move(c1), g_cfg.p1, g_cfg.p2, sampler, rng));
            if (next.size() < static_cast<std::size_t>(g_cfg.population_size))
                next.push_back(
                    ga::mutate(std::move(c2), g_cfg.p1, g_cfg.p2, sampler, rng));
        }
        population = std::move(next);
        out.generations_run = gen + 1;
    }

    out.evaded = false;
    out.queries_used = queries;
    out.final_bytes = std::move(best_bytes);
    out.validity = pe::validate(pe::parse(out.final_bytes), &baseline);
    return out;
}

}  // namespace smoothbin::attacks
