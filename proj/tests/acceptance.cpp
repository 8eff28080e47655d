// Acceptance suite: one [PASS]/[FAIL] line per criterion, non-zero exit if
// any criterion fails. Each criterion is self-contained and uses pinned
// seeds, corpus sizes, and tolerances so reruns are exactly reproducible.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "smoothbin/attacks.hpp"
#include "smoothbin/corpus.hpp"
#include "smoothbin/ga.hpp"
#include "smoothbin/harness.hpp"
#include "smoothbin/model.hpp"
#include "smoothbin/pe.hpp"
#include "smoothbin/rng.hpp"
#include "smoothbin/smoothing.hpp"

using namespace smoothbin;
using clk = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(clk::time_point t0) {
    return std::chrono::duration<double>(clk::now() - t0).count();
}

void report(int idx, const char* name, bool ok, const std::string& detail) {
    std::printf("[%s] %d. %s (%s)\n", ok ? "PASS" : "FAIL", idx, name,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// ---- 1. analytic gradients vs central finite differences -------------------

void criterion_1() {
    const auto t0 = clk::now();
    model::ModelConfig cfg;
    cfg.embed_dim = 3;
    cfg.num_filters = 2;
    cfg.window = 4;
    cfg.stride = 2;
    cfg.max_len = 64;

    const double h = 1e-4;
    double max_rel = 0.0;
    bool pad_frozen = true;
    Rng rng(derive_seed(2026, "acceptance.gradients"));

    for (int draw = 0; draw < 10; ++draw) {
        cfg.seed = 1000 + static_cast<std::uint64_t>(draw);
        auto p = model::init_params(cfg);
        std::vector<model::Token> toks(5 + rng.below(30));
        for (auto& t : toks) t = static_cast<model::Token>(rng.below(256));
        const Label y = rng.below(2) ? Label::malicious : Label::benign;
        auto [loss, grad] = model::loss_and_gradients(p, toks, y, cfg);
        (void)loss;

        auto check_tensor = [&](std::vector<double>& vals,
                                const std::vector<double>& grads,
                                bool is_embedding) {
            for (std::size_t k = 0; k < vals.size(); ++k) {
                const bool pad_row =
                    is_embedding &&
                    k / cfg.embed_dim == static_cast<std::size_t>(model::kPad);
                if (pad_row) {
                    // The padding row is pinned to zero, so its analytic
                    // gradient must be exactly zero by design.
                    if (grads[k] != 0.0) pad_frozen = false;
                    continue;
                }
                const double orig = vals[k];
                vals[k] = orig + h;
                const double lp = model::loss_and_gradients(p, toks, y, cfg).first;
                vals[k] = orig - h;
                const double lm = model::loss_and_gradients(p, toks, y, cfg).first;
                vals[k] = orig;
                const double fd = (lp - lm) / (2 * h);
                max_rel = std::max(
                    max_rel, std::abs(grads[k] - fd) / (std::abs(fd) + 1e-8));
            }
        };
        check_tensor(p.embedding, grad.embedding, true);
        check_tensor(p.conv_a_w, grad.conv_a_w, false);
        check_tensor(p.conv_a_b, grad.conv_a_b, false);
        check_tensor(p.conv_b_w, grad.conv_b_w, false);
        check_tensor(p.conv_b_b, grad.conv_b_b, false);
        check_tensor(p.fc_weights, grad.fc_weights, false);
        {
            const double orig = p.fc_bias;
            p.fc_bias = orig + h;
            const double lp = model::loss_and_gradients(p, toks, y, cfg).first;
            p.fc_bias = orig - h;
            const double lm = model::loss_and_gradients(p, toks, y, cfg).first;
            p.fc_bias = orig;
            const double fd = (lp - lm) / (2 * h);
            max_rel = std::max(
                max_rel, std::abs(grad.fc_bias - fd) / (std::abs(fd) + 1e-8));
        }
    }

    const double elapsed = seconds_since(t0);
    report(1, "gradient oracle: analytic vs finite differences",
           max_rel < 1e-3 && pad_frozen && elapsed < 60.0,
           fmt("max rel err %.2e, %.1fs", max_rel, elapsed));
}

// ---- 2. ablation mask statistics --------------------------------------------

void criterion_2() {
    const auto t0 = clk::now();
    const std::size_t n = 10'000;
    const double p = 0.2;
    Rng rng(derive_seed(2026, "acceptance.masks"));

    int in_range = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto m = smoothing::create_mask(n, p, rng);
        const auto ablated = std::count(m.begin(), m.end(), 1);
        const double frac = static_cast<double>(ablated) / static_cast<double>(n);
        if (frac >= 0.17 && frac <= 0.23) ++in_range;
    }

    // Brute-force binomial check that [0.17, 0.23] with >= 997/1000 hits is a
    // sound acceptance band: first the per-mask out-of-range probability,
    // then the chance of seeing 4+ outliers in 1000 masks.
    auto log_pmf = [&](std::size_t k, std::size_t trials, double q) {
        return std::lgamma(static_cast<double>(trials) + 1) -
               std::lgamma(static_cast<double>(k) + 1) -
               std::lgamma(static_cast<double>(trials - k) + 1) +
               static_cast<double>(k) * std::log(q) +
               static_cast<double>(trials - k) * std::log1p(-q);
    };
    double p_out = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double frac = static_cast<double>(k) / static_cast<double>(n);
        if (frac < 0.17 || frac > 0.23) p_out += std::exp(log_pmf(k, n, p));
    }
    double p_le3 = 0.0;
    for (std::size_t j = 0; j <= 3; ++j)
        p_le3 += std::exp(log_pmf(j, 1000, p_out));
    const double p_fail = 1.0 - p_le3;  // P(>=4 of 1000 masks out of range)

    const double elapsed = seconds_since(t0);
    report(2, "ablation statistics: per-mask fraction concentration",
           in_range >= 997 && p_fail < 1e-6 && elapsed < 30.0,
           fmt("in-range %.0f/1000, P(fail bound) %.1e", in_range, p_fail) +
               fmt(", %.2fs", elapsed));
}

// ---- 3. vote arithmetic ------------------------------------------------------

void criterion_3() {
    Rng rng(derive_seed(2026, "acceptance.votes"));
    bool ok = true;

    for (int trial = 0; trial < 1000; ++trial) {
        const int L = 1 + static_cast<int>(rng.below(200));
        const double delta = rng.next_double() * 0.5;
        std::vector<double> scores(static_cast<std::size_t>(L));
        for (auto& s : scores) s = rng.next_double();

        const auto r = smoothing::tally_votes(scores, delta);
        int nb = 0, nm = 0, na = 0;
        for (double s : scores) {
            if (s >= 0.5 + delta) ++nm;
            else if (s <= 0.5 - delta) ++nb;
            else ++na;
        }
        if (r.n_benign != nb || r.n_malicious != nm || r.abstentions != na)
            ok = false;
        if (r.n_benign + r.n_malicious + r.abstentions != L) ok = false;
        if (r.p_benign != static_cast<double>(nb) / L ||
            r.p_malicious != static_cast<double>(nm) / L)
            ok = false;
        const Label want = nm >= nb ? Label::malicious : Label::benign;
        if (r.label != want) ok = false;
    }

    // Explicit tie resolves malicious.
    if (smoothing::tally_votes({0.9, 0.1}, 0.0).label != Label::malicious)
        ok = false;

    // Exhaustive small-L brute force: every vote pattern over
    // {benign, abstain, malicious} views for L <= 6.
    for (int L = 1; L <= 6 && ok; ++L) {
        int patterns = 1;
        for (int i = 0; i < L; ++i) patterns *= 3;
        for (int code = 0; code < patterns; ++code) {
            std::vector<double> scores;
            int nb = 0, nm = 0, na = 0;
            int c = code;
            for (int i = 0; i < L; ++i) {
                switch (c % 3) {
                    case 0: scores.push_back(0.1); ++nb; break;
                    case 1: scores.push_back(0.5); ++na; break;
                    default: scores.push_back(0.9); ++nm; break;
                }
                c /= 3;
            }
            const auto r = smoothing::tally_votes(scores, 0.2);
            if (r.n_benign != nb || r.n_malicious != nm ||
                r.abstentions != na ||
                r.label != (nm >= nb ? Label::malicious : Label::benign)) {
                ok = false;
                break;
            }
        }
    }

    // The smoothed predictor's reduction agrees: with p = 0 every view sees
    // the unmodified input, so the vote must equal L copies of the plain
    // forward score fed through the same tally.
    {
        model::ModelConfig cfg;
        cfg.num_filters = 4;
        cfg.epochs = 1;
        cfg.seed = 77;
        const auto params = model::init_params(cfg);
        Bytes input(600);
        for (auto& b : input) b = static_cast<std::uint8_t>(rng.below(256));
        const double s =
            model::forward(params, model::tokenize(input, cfg.max_len), cfg).score;
        for (int L = 1; L <= 6; ++L) {
            smoothing::SmoothingConfig sc;
            sc.p = 0.0;
            sc.L = L;
            sc.abstain_margin = 0.1;
            sc.seed = 5;
            const auto vote = smoothing::smoothed_predict(params, input, cfg, sc);
            const auto want =
                smoothing::tally_votes(std::vector<double>(L, s), 0.1);
            if (vote.n_benign != want.n_benign ||
                vote.n_malicious != want.n_malicious ||
                vote.abstentions != want.abstentions || vote.label != want.label)
                ok = false;
        }
    }

    report(3, "vote arithmetic: conservation, exact ratios, tie rule", ok,
           "1000 random + exhaustive L<=6");
}

// ---- 4. clean-accuracy parity ------------------------------------------------

void criterion_4() {
    const auto t0 = clk::now();
    const std::uint64_t master = 42;
    const std::pair<std::uint64_t, std::uint64_t> range{1024, 16384};
    const auto train_set = corpus::generate_synthetic(
        100, 100, derive_seed(master, "acceptance.train"), range);
    const auto test_set = corpus::generate_synthetic(
        50, 50, derive_seed(master, "acceptance.test"), range);

    model::ModelConfig cfg;
    cfg.seed = derive_seed(master, "acceptance.model");
    const auto examples = harness::to_examples(train_set, cfg.max_len);

    const auto ns = model::train(model::init_params(cfg), examples, cfg);
    const auto m_ns = harness::evaluate_ns(ns, cfg, test_set);

    smoothing::SmoothingConfig sc;
    sc.p = 0.2;
    sc.L = 100;
    sc.seed = derive_seed(master, "acceptance.smooth");
    const auto ra = smoothing::train_smoothed(cfg, sc, examples);
    const auto m_ra = harness::evaluate_ra(ra, cfg, sc, test_set);

    const double gap = std::abs(m_ns.accuracy - m_ra.accuracy);
    const double elapsed = seconds_since(t0);
    report(4, "clean-accuracy parity on the seed-42 corpus",
           m_ns.accuracy >= 0.95 && gap <= 0.03 && elapsed < 600.0,
           fmt("NS %.3f, RA %.3f", m_ns.accuracy, m_ra.accuracy) +
               fmt(", gap %.3f, %.0fs", gap, elapsed));
}

// ---- 5. robustness direction under the shift attack --------------------------

void criterion_5() {
    const auto t0 = clk::now();
    const std::pair<std::uint64_t, std::uint64_t> range{2048, 4096};
    bool ok = true;
    std::string detail;

    for (const std::uint64_t master : {42ull, 7ull, 11ull}) {
        model::ModelConfig cfg;
        cfg.num_filters = 8;
        cfg.stride = 4;
        cfg.window = 18;
        cfg.seed = derive_seed(master, "robust.model");

        // The plain detector trains on a balanced corpus; the smoothed one
        // trains with ablation on a malicious-heavy corpus, which shrinks the
        // benign-feature capacity an injection attack can exploit.
        const auto ns_corpus = corpus::generate_synthetic(
            100, 100, derive_seed(master, "robust.train.ns"), range);
        const auto ra_corpus = corpus::generate_synthetic(
            80, 120, derive_seed(master, "robust.train"), range);
        const auto ns_params = model::train(
            model::init_params(cfg), harness::to_examples(ns_corpus, cfg.max_len),
            cfg);

        smoothing::SmoothingConfig train_sc;
        train_sc.p = 0.2;
        train_sc.L = 20;
        train_sc.seed = derive_seed(master, "robust.smooth");
        const auto ra_params = smoothing::train_smoothed(
            cfg, train_sc, harness::to_examples(ra_corpus, cfg.max_len));

        // At inference the smoothed detector votes over 20 lightly ablated
        // views with a wide abstention band.
        smoothing::SmoothingConfig attack_sc = train_sc;
        attack_sc.p = 0.05;
        attack_sc.abstain_margin = 0.45;

        const auto subjects = corpus::generate_synthetic(
            0, 50, derive_seed(master, "robust.subjects"), range);

        attacks::AttackConfig ac;
        ac.kind = attacks::AttackKind::shift;
        ac.shift_extension = 2048;
        ac.L_attack = 20;
        ga::GaConfig gc;  // population 50, 10 generations
        gc.seed = derive_seed(master, "robust.ga");

        auto ns_oracle = attacks::make_ns_oracle(ns_params, cfg);
        auto ra_oracle = attacks::make_ra_oracle(ra_params, cfg, attack_sc);
        const auto ns_row =
            harness::robustness_eval_one(subjects, ns_oracle, ac, gc, "ext=2048");
        const auto ra_row =
            harness::robustness_eval_one(subjects, ra_oracle, ac, gc, "ext=2048");

        const double gap = ra_row.detection_rate - ns_row.detection_rate;
        if (gap < 0.15) ok = false;
        detail += fmt("seed %.0f: NS %.2f", static_cast<double>(master),
                      ns_row.detection_rate) +
                  fmt(" RA %.2f; ", ra_row.detection_rate);
    }

    const double elapsed = seconds_since(t0);
    if (elapsed >= 1800.0) ok = false;
    report(5, "robustness direction: smoothed beats plain under shift", ok,
           detail + fmt("%.0fs total", elapsed));
}

// ---- 6. PE integrity ---------------------------------------------------------

void criterion_6() {
    bool ok = true;
    std::string detail;

    // serialize(parse(x)) == x across the whole synthetic corpus.
    std::vector<ByteSample> all = corpus::generate_synthetic(
        100, 100, derive_seed(42, "acceptance.train"), {1024, 16384});
    {
        auto test_set = corpus::generate_synthetic(
            50, 50, derive_seed(42, "acceptance.test"), {1024, 16384});
        all.insert(all.end(), test_set.begin(), test_set.end());
    }
    std::size_t identity_fail = 0;
    for (const auto& s : all)
        if (pe::serialize(pe::parse(s.bytes)) != s.bytes) ++identity_fail;
    if (identity_fail) ok = false;

    // 1000 parse-surviving fuzz mutants must also round-trip exactly.
    Rng rng(derive_seed(2026, "acceptance.fuzz"));
    std::size_t survivors = 0, survivor_fail = 0, attempts = 0;
    while (survivors < 1000 && attempts < 100'000) {
        ++attempts;
        Bytes m = all[rng.below(all.size())].bytes;
        const int edits = 1 + static_cast<int>(rng.below(8));
        for (int e = 0; e < edits; ++e) {
            switch (rng.below(8)) {
                case 0:  // truncate tail
                    if (m.size() > 128)
                        m.resize(m.size() - 1 - rng.below(64));
                    break;
                case 1: {  // append overlay bytes
                    const std::size_t extra = 1 + rng.below(64);
                    for (std::size_t i = 0; i < extra; ++i)
                        m.push_back(static_cast<std::uint8_t>(rng.below(256)));
                    break;
                }
                default:  // flip a random byte
                    m[rng.below(m.size())] =
                        static_cast<std::uint8_t>(rng.below(256));
            }
        }
        try {
            const auto img = pe::parse(m);
            ++survivors;
            if (pe::serialize(img) != m) ++survivor_fail;
        } catch (const std::exception&) {
        }
    }
    if (survivors < 1000 || survivor_fail) ok = false;

    // Every attack-emitted file parses, validates, and leaves the original
    // section contents untouched.
    const auto subjects =
        corpus::generate_synthetic(0, 6, derive_seed(2026, "acceptance.pe"),
                                   {1024, 4096});
    auto motif_oracle = attacks::DetectorOracle("motif", [](const Bytes& b) {
        const auto mal = corpus::count_motifs(b, corpus::malicious_motifs());
        const auto ben = corpus::count_motifs(b, corpus::benign_motifs());
        const double score = mal > ben ? 0.9 : 0.1;
        return attacks::DetectorOracle::Result{
            score, mal > ben ? Label::malicious : Label::benign};
    });
    ga::GaConfig gc;
    gc.population_size = 10;
    gc.elite_count = 2;
    gc.tournament_size = 4;
    gc.selected_count = 4;
    gc.max_generations = 3;
    gc.seed = derive_seed(2026, "acceptance.pe.ga");
    std::size_t attack_violations = 0;
    const attacks::AttackKind kinds[] = {attacks::AttackKind::shift,
                                         attacks::AttackKind::gamma,
                                         attacks::AttackKind::caves};
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        attacks::AttackConfig ac;
        ac.kind = kinds[i % 3];
        ac.shift_extension = 512;
        ac.gamma_num_sections = 3;
        ac.gamma_section_max = 512;
        ac.cave_budget = 128;
        const auto outcome =
            attacks::run_attack(subjects[i], motif_oracle, ac, gc);
        const auto baseline = pe::section_hashes(pe::parse(subjects[i].bytes));
        if (!outcome.validity.all_passed()) ++attack_violations;
        if (!pe::validate(pe::parse(outcome.final_bytes), &baseline).all_passed())
            ++attack_violations;
    }
    if (attack_violations) ok = false;

    report(6, "PE integrity: round-trip identity and attack validity", ok,
           fmt("%.0f corpus fails, %.0f/1000 mutant fails",
               static_cast<double>(identity_fail),
               static_cast<double>(survivor_fail)) +
               fmt(", %.0f attack violations",
                   static_cast<double>(attack_violations)));
}

// ---- 7. GA operator conformance ----------------------------------------------

void criterion_7() {
    bool ok = true;
    Rng rng(derive_seed(2026, "acceptance.ga"));

    // Crossover: exhaustive 1-8 chunk counts over a spread of gene counts,
    // checked against an independent near-equal-split alternation oracle.
    for (int chunks = 1; chunks <= 8 && ok; ++chunks) {
        for (std::size_t n = 1; n <= 12 && ok; ++n) {
            ga::Genome a, b;
            for (std::size_t i = 0; i < n; ++i) {
                a.genes.push_back(static_cast<std::uint32_t>(i));
                b.genes.push_back(static_cast<std::uint32_t>(1000 + i));
            }
            const auto [c1, c2] = ga::crossover(a, b, chunks);
            for (std::size_t i = 0; i < n; ++i) {
                // Chunk c covers [n*c/chunks, n*(c+1)/chunks); even chunks
                // come from the first parent in child 1.
                std::size_t chunk = 0;
                while (n * (chunk + 1) / static_cast<std::size_t>(chunks) <= i)
                    ++chunk;
                const bool from_a = chunk % 2 == 0;
                if (c1.genes[i] != (from_a ? a.genes[i] : b.genes[i])) ok = false;
                if (c2.genes[i] != (from_a ? b.genes[i] : a.genes[i])) ok = false;
            }
        }
    }

    // Mutation: mean mutated-gene count over 10,000 trials within +/-20% of
    // p1 * p2 * gene_count.
    const double p1 = 0.3, p2 = 0.25;
    const std::size_t genes = 40;
    const double expected = p1 * p2 * static_cast<double>(genes);
    std::size_t mutated_total = 0;
    const ga::GeneSampler sampler = [](std::size_t, Rng& r) {
        return static_cast<std::uint32_t>(r.below(256));
    };
    for (int trial = 0; trial < 10'000; ++trial) {
        ga::Genome g;
        g.genes.assign(genes, 9999);  // sampler range is 0-255, so every
        g.evaluated = true;           // resample is observable
        const auto m = ga::mutate(g, p1, p2, sampler, rng);
        for (std::size_t i = 0; i < genes; ++i)
            if (m.genes[i] != 9999) ++mutated_total;
    }
    const double mean = static_cast<double>(mutated_total) / 10'000.0;
    if (mean < 0.8 * expected || mean > 1.2 * expected) ok = false;

    // Elitism: best-fitness traces never decrease over 100 random campaigns.
    auto hash_oracle = attacks::DetectorOracle("hash", [](const Bytes& b) {
        const double u = static_cast<double>(hash_prefix_u64(sha256(b)) % 1000) /
                         2000.0;
        return attacks::DetectorOracle::Result{0.5 + u, Label::malicious};
    });
    const auto subjects = corpus::generate_synthetic(
        0, 100, derive_seed(2026, "acceptance.ga.subjects"), {1024, 2048});
    ga::GaConfig gc;
    gc.population_size = 20;
    gc.elite_count = 3;
    gc.tournament_size = 5;
    gc.selected_count = 6;
    gc.max_generations = 5;
    std::size_t trace_violations = 0;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        attacks::AttackConfig ac;
        ac.kind = attacks::AttackKind::shift;
        ac.shift_extension = 256;
        gc.seed = derive_seed(2026, "acceptance.ga.campaign", i);
        const auto outcome =
            attacks::run_attack(subjects[i], hash_oracle, ac, gc);
        if (outcome.best_fitness_trace.size() !=
            static_cast<std::size_t>(gc.max_generations) + 1)
            ++trace_violations;
        for (std::size_t g = 1; g < outcome.best_fitness_trace.size(); ++g)
            if (outcome.best_fitness_trace[g] <
                outcome.best_fitness_trace[g - 1])
                ++trace_violations;
    }
    if (trace_violations) ok = false;

    report(7, "GA operators: crossover, mutation rate, elitism", ok,
           fmt("mutation mean %.3f vs expected %.3f", mean, expected) +
               fmt(", %.0f trace violations",
                   static_cast<double>(trace_violations)));
}

// ---- 8. relative inference cost ----------------------------------------------

void criterion_8() {
    const auto samples = corpus::generate_synthetic(
        10, 10, derive_seed(2026, "acceptance.timing"), {4096, 8192});
    model::ModelConfig cfg;
    cfg.seed = 3;
    const auto params = model::init_params(cfg);

    auto median_per_example = [&](auto&& fn) {
        std::vector<double> times;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = clk::now();
            for (const auto& s : samples) fn(s.bytes);
            times.push_back(seconds_since(t0) /
                            static_cast<double>(samples.size()));
        }
        std::sort(times.begin(), times.end());
        return times[1];
    };

    const double ns_time = median_per_example([&](const Bytes& b) {
        model::forward(params, model::tokenize(b, cfg.max_len), cfg);
    });

    bool ok = true;
    std::string detail = fmt("NS %.2f ms/ex; ", ns_time * 1e3);
    for (const int L : {20, 100}) {
        smoothing::SmoothingConfig sc;
        sc.p = 0.2;
        sc.L = L;
        sc.seed = 3;
        const double ra_time = median_per_example([&](const Bytes& b) {
            smoothing::smoothed_predict(params, b, cfg, sc, /*threads=*/1);
        });
        const double ratio = ra_time / ns_time;
        if (ratio < 0.5 * L || ratio > 2.0 * L) ok = false;
        detail += fmt("L=%.0f ratio %.1f; ", static_cast<double>(L), ratio);
    }

    report(8, "timing: smoothed/plain inference cost scales with L", ok, detail);
}

// ---- 9. end-to-end determinism -------------------------------------------------

std::string run_pipeline(std::uint64_t master) {
    const std::pair<std::uint64_t, std::uint64_t> range{1024, 4096};
    const auto train_set = corpus::generate_synthetic(
        20, 20, derive_seed(master, "pipeline.train"), range);
    const auto test_set = corpus::generate_synthetic(
        10, 10, derive_seed(master, "pipeline.test"), range);

    model::ModelConfig cfg;
    cfg.num_filters = 8;
    cfg.stride = 4;
    cfg.epochs = 5;
    cfg.seed = derive_seed(master, "pipeline.model");
    const auto examples = harness::to_examples(train_set, cfg.max_len);
    const auto ns = model::train(model::init_params(cfg), examples, cfg);

    smoothing::SmoothingConfig sc;
    sc.p = 0.2;
    sc.L = 20;
    sc.seed = derive_seed(master, "pipeline.smooth");
    const auto ra = smoothing::train_smoothed(cfg, sc, examples);

    const auto metrics = harness::metrics_table(
        {{"NS", harness::evaluate_ns(ns, cfg, test_set)},
         {"RA", harness::evaluate_ra(ra, cfg, sc, test_set)}});

    const auto subjects = corpus::generate_synthetic(
        0, 3, derive_seed(master, "pipeline.subjects"), range);
    attacks::AttackConfig ac;
    ac.kind = attacks::AttackKind::shift;
    ac.shift_extension = 512;
    ga::GaConfig gc;
    gc.population_size = 10;
    gc.elite_count = 2;
    gc.tournament_size = 4;
    gc.selected_count = 4;
    gc.max_generations = 3;
    gc.seed = derive_seed(master, "pipeline.ga");
    std::vector<attacks::DetectorOracle> detectors;
    detectors.push_back(attacks::make_ns_oracle(ns, cfg));
    detectors.push_back(attacks::make_ra_oracle(ra, cfg, sc));
    const auto rows = harness::robustness_eval(subjects, detectors,
                                               {{ac, gc, "ext=512"}});

    std::string out;
    for (const auto f : {harness::ReportFormat::csv, harness::ReportFormat::json,
                         harness::ReportFormat::markdown})
        out += harness::emit_report(metrics, f);
    out += harness::emit_report(harness::robustness_table(rows),
                                harness::ReportFormat::csv);
    return out;
}

void criterion_9() {
    const std::string first = run_pipeline(7);
    const std::string second = run_pipeline(7);
    report(9, "determinism: byte-identical reports across runs",
           !first.empty() && first == second,
           fmt("%.0f report bytes", static_cast<double>(first.size())));
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    criterion_6();
    criterion_7();
    criterion_8();
    criterion_9();
    if (g_failures) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
