// Umbrella command-line tool: corpus generation and splitting, training,
// smoothed prediction, PE inspection/rewriting, attack campaigns, and the
// experiment reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "smoothbin/attacks.hpp"
#include "smoothbin/harness.hpp"

namespace fs = std::filesystem;
using namespace smoothbin;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
}

void write_bytes(const fs::path& path, const Bytes& data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
}

corpus::CorpusManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    return corpus::manifest_from_csv(in);
}

json validity_to_json(const pe::ValidityReport& rep) {
    json checks = json::array();
    for (const auto& c : rep.checks)
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    return {{"all_passed", rep.all_passed()}, {"checks", checks}};
}

struct GlobalOpts {
    std::uint64_t seed = 0;
    int threads = 1;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"randomized ablation smoothing toolkit for byte-level "
                 "malware detectors"};
    app.require_subcommand(1);
    GlobalOpts g;
    app.add_option("--seed", g.seed, "master seed");
    app.add_option("--threads", g.threads, "worker threads for view evaluation");
    app.set_config("--config", "", "key=value configuration file");

    // ---- corpus ----
    auto* corpus_cmd = app.add_subcommand("corpus", "synthetic corpus tools");
    corpus_cmd->require_subcommand(1);

    auto* gen = corpus_cmd->add_subcommand("gen", "generate a synthetic corpus");
    std::size_t gen_benign = 100, gen_malicious = 100;
    std::uint64_t gen_min = 1024, gen_max = 65536;
    std::string gen_out = "corpus";
    gen->add_option("--benign", gen_benign);
    gen->add_option("--malicious", gen_malicious);
    gen->add_option("--min-size", gen_min);
    gen->add_option("--max-size", gen_max);
    gen->add_option("--out", gen_out)->required();
    gen->callback([&] {
        auto samples = corpus::generate_synthetic(gen_benign, gen_malicious,
                                                  g.seed, {gen_min, gen_max});
        corpus::write_corpus(samples, gen_out, g.seed);
        std::cout << "wrote " << samples.size() << " samples to " << gen_out
                  << "\n";
    });

    auto* split = corpus_cmd->add_subcommand("split", "time-ordered split");
    std::string split_manifest;
    corpus::SplitSpec split_spec;
    split->add_option("--manifest", split_manifest)->required();
    split->add_option("--train", split_spec.train_fraction);
    split->add_option("--val", split_spec.val_fraction);
    split->add_option("--test", split_spec.test_fraction);
    split->add_option("--max-size", split_spec.max_size_bytes);
    split->callback([&] {
        auto manifest = load_manifest(split_manifest);
        std::size_t skipped = 0;
        std::erase_if(manifest.entries, [&](const corpus::ManifestEntry& e) {
            const bool skip = e.size > split_spec.max_size_bytes;
            skipped += skip;
            return skip;
        });
        auto res = corpus::time_split(manifest, split_spec);
        const fs::path base = fs::path(split_manifest).parent_path();
        const std::string stem = fs::path(split_manifest).stem().string();
        for (auto& [name, part] :
             {std::pair{std::string("train"), &res.train},
              {std::string("val"), &res.val}, {std::string("test"), &res.test}}) {
            const fs::path out = base / (stem + "." + name + ".csv");
            write_text(out, corpus::manifest_to_csv(*part));
            std::cout << name << ": " << part->entries.size() << " -> " << out
                      << "\n";
        }
        std::cout << "skipped (size filter): " << skipped << "\n";
    });

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a detector");
    std::string train_manifest, train_out = "model.ckpt";
    model::ModelConfig mcfg;
    bool smoothed = false;
    double train_p = 0.2;
    train_cmd->add_option("--manifest", train_manifest)->required();
    train_cmd->add_option("--out", train_out);
    train_cmd->add_option("--epochs", mcfg.epochs);
    train_cmd->add_option("--lr", mcfg.learning_rate);
    train_cmd->add_option("--batch-size", mcfg.batch_size);
    train_cmd->add_option("--max-len", mcfg.max_len);
    train_cmd->add_flag("--smoothed", smoothed, "train with random ablation");
    train_cmd->add_option("--p", train_p, "ablation probability");
    train_cmd->callback([&] {
        mcfg.seed = g.seed;
        auto manifest = load_manifest(train_manifest);
        auto samples = corpus::load_samples(
            manifest, fs::path(train_manifest).parent_path());
        auto examples = harness::to_examples(samples, mcfg.max_len);
        model::ClassifierParams params;
        if (smoothed) {
            smoothing::SmoothingConfig scfg;
            scfg.p = train_p;
            scfg.seed = derive_seed(g.seed, "cli.smoothing");
            params = smoothing::train_smoothed(mcfg, scfg, examples);
        } else {
            params = model::train(model::init_params(mcfg), examples, mcfg);
        }
        model::save_checkpoint(params, mcfg, train_out);
        std::cout << "wrote " << train_out << "\n";
    });

    // ---- predict ----
    auto* predict_cmd = app.add_subcommand("predict", "smoothed prediction");
    std::string pred_model, pred_file;
    smoothing::SmoothingConfig pred_scfg;
    bool pred_json = false;
    predict_cmd->add_option("--model", pred_model)->required();
    predict_cmd->add_option("--file", pred_file)->required();
    predict_cmd->add_option("--p", pred_scfg.p);
    predict_cmd->add_option("--L", pred_scfg.L);
    predict_cmd->add_option("--delta", pred_scfg.abstain_margin);
    predict_cmd->add_flag("--json", pred_json);
    predict_cmd->callback([&] {
        pred_scfg.seed = g.seed;
        auto [params, cfg] = model::load_checkpoint(pred_model);
        const Bytes bytes = corpus::read_file(pred_file);
        const auto vote =
            smoothing::smoothed_predict(params, bytes, cfg, pred_scfg, g.threads);
        if (pred_json) {
            json j = {{"n_benign", vote.n_benign},
                      {"n_malicious", vote.n_malicious},
                      {"abstentions", vote.abstentions},
                      {"p_benign", vote.p_benign},
                      {"p_malicious", vote.p_malicious},
                      {"label", to_string(vote.label)}};
            std::cout << j.dump(2) << "\n";
        } else {
            std::cout << to_string(vote.label) << " p_malicious="
                      << vote.p_malicious << " (" << vote.n_malicious << "/"
                      << pred_scfg.L << " votes, " << vote.abstentions
                      << " abstained)\n";
        }
    });

    // ---- pe ----
    auto* pe_cmd = app.add_subcommand("pe", "PE inspection and rewriting");
    pe_cmd->require_subcommand(1);

    auto* inspect = pe_cmd->add_subcommand("inspect", "dump structure");
    std::string ins_file;
    inspect->add_option("file", ins_file)->required();
    inspect->callback([&] {
        auto img = pe::parse(corpus::read_file(ins_file));
        std::cout << "machine=0x" << std::hex << img.machine << std::dec
                  << " sections=" << img.sections.size()
                  << " entry=0x" << std::hex << img.entry_point << std::dec
                  << " file_alignment=" << img.file_alignment
                  << " size_of_image=" << img.size_of_image
                  << " overlay=" << img.overlay.size() << "B\n";
        for (const auto& s : img.sections)
            std::cout << "  " << s.name_str() << " raw=[" << s.raw_offset << ","
                      << s.raw_offset + s.raw_size << ") va=0x" << std::hex
                      << s.virtual_address << std::dec
                      << " vsize=" << s.virtual_size << " chars=0x" << std::hex
                      << s.characteristics << std::dec << "\n";
    });

    auto* shift = pe_cmd->add_subcommand("shift", "insert a gap before the first section");
    std::string shift_file, shift_out;
    std::uint32_t shift_gap = 2048;
    shift->add_option("file", shift_file)->required();
    shift->add_option("--gap", shift_gap);
    shift->add_option("--out", shift_out)->required();
    shift->callback([&] {
        auto img = pe::parse(corpus::read_file(shift_file));
        auto res = pe::shift_sections(std::move(img), shift_gap);
        write_bytes(shift_out, pe::serialize(res.image));
        std::cout << "gap_offset=" << res.gap_offset
                  << " gap_size=" << res.gap_size << "\n";
    });

    auto* addsec = pe_cmd->add_subcommand("add-section", "append a new section");
    std::string add_file, add_payload, add_out, add_name = ".inj";
    addsec->add_option("file", add_file)->required();
    addsec->add_option("--payload", add_payload)->required();
    addsec->add_option("--name", add_name);
    addsec->add_option("--out", add_out)->required();
    addsec->callback([&] {
        auto img = pe::parse(corpus::read_file(add_file));
        auto payload = corpus::read_file(add_payload);
        img = pe::add_section(std::move(img), add_name, payload,
                              pe::kScnInitializedData | pe::kScnMemRead);
        write_bytes(add_out, pe::serialize(img));
        std::cout << "sections=" << img.sections.size() << "\n";
    });

    auto* baseline_cmd = pe_cmd->add_subcommand(
        "baseline", "write a section-content hash baseline");
    std::string base_file, base_out;
    baseline_cmd->add_option("file", base_file)->required();
    baseline_cmd->add_option("--out", base_out)->required();
    baseline_cmd->callback([&] {
        auto img = pe::parse(corpus::read_file(base_file));
        json j;
        for (const auto& [name, hash] : pe::section_hashes(img))
            j[name] = to_hex(hash);
        write_text(base_out, j.dump(2) + "\n");
    });

    auto* validate_cmd = pe_cmd->add_subcommand("validate", "structural validity report");
    std::string val_file, val_baseline;
    validate_cmd->add_option("file", val_file)->required();
    validate_cmd->add_option("--baseline", val_baseline);
    validate_cmd->callback([&] {
        auto img = pe::parse(corpus::read_file(val_file));
        pe::SectionHashMap baseline;
        pe::SectionHashMap* baseline_ptr = nullptr;
        if (!val_baseline.empty()) {
            std::ifstream in(val_baseline);
            if (!in) throw DataError("cannot read " + val_baseline);
            json j = json::parse(in);
            for (auto& [name, hex] : j.items()) {
                const std::string h = hex;
                Hash256 digest{};
                for (std::size_t i = 0; i < 32; ++i)
                    digest[i] = static_cast<std::uint8_t>(
                        std::stoul(h.substr(2 * i, 2), nullptr, 16));
                baseline[name] = digest;
            }
            baseline_ptr = &baseline;
        }
        const auto rep = pe::validate(img, baseline_ptr);
        std::cout << validity_to_json(rep).dump(2) << "\n";
        if (!rep.all_passed()) std::exit(3);
    });

    // ---- attack ----
    auto* attack_cmd = app.add_subcommand("attack", "run an evasion campaign");
    std::string atk_kind = "shift", atk_model, atk_file, atk_out;
    bool atk_smoothed = false, atk_json = false;
    attacks::AttackConfig a_cfg;
    ga::GaConfig g_cfg;
    attack_cmd->add_option("--kind", atk_kind, "shift|gamma|caves");
    attack_cmd->add_option("--model", atk_model)->required();
    attack_cmd->add_option("--file", atk_file)->required();
    attack_cmd->add_flag("--smoothed", atk_smoothed, "attack the smoothed detector");
    attack_cmd->add_option("--pop", g_cfg.population_size);
    attack_cmd->add_option("--gens", g_cfg.max_generations);
    attack_cmd->add_option("--extension", a_cfg.shift_extension);
    attack_cmd->add_option("--sections", a_cfg.gamma_num_sections);
    attack_cmd->add_option("--cap", a_cfg.size_cap);
    attack_cmd->add_option("--L", a_cfg.L_attack);
    attack_cmd->add_option("--lambda", a_cfg.gamma_size_penalty);
    attack_cmd->add_option("--cave-budget", a_cfg.cave_budget);
    attack_cmd->add_option("--out", atk_out, "path for the final file");
    attack_cmd->add_flag("--json", atk_json);
    attack_cmd->callback([&] {
        a_cfg.kind = attacks::attack_kind_from_string(atk_kind);
        g_cfg.seed = g.seed;
        auto [params, cfg] = model::load_checkpoint(atk_model);
        ByteSample subject;
        subject.bytes = corpus::read_file(atk_file);
        subject.label = Label::malicious;
        subject.rehash();
        auto detector =
            atk_smoothed
                ? attacks::make_ra_oracle(
                      params, cfg,
                      smoothing::SmoothingConfig{
                          .p = 0.2,
                          .L = a_cfg.L_attack,
                          .seed = derive_seed(g.seed, "cli.ra")},
                      g.threads)
                : attacks::make_ns_oracle(params, cfg);
        const auto outcome = attacks::run_attack(subject, detector, a_cfg, g_cfg);
        const std::string final_path =
            atk_out.empty() ? atk_file + ".adv" : atk_out;
        write_bytes(final_path, outcome.final_bytes);
        if (atk_json) {
            json j = {{"evaded", outcome.evaded},
                      {"queries", outcome.queries_used},
                      {"generations", outcome.generations_run},
                      {"final_path", final_path},
                      {"fitness_trace", outcome.best_fitness_trace}};
            std::cout << j.dump(2) << "\n";
        } else {
            std::cout << (outcome.evaded ? "evaded" : "detected") << " after "
                      << outcome.queries_used << " queries, "
                      << outcome.generations_run << " generations -> "
                      << final_path << "\n";
        }
    });

    // ---- sweep ----
    auto* sweep_cmd = app.add_subcommand("sweep", "ablation probability sweep");
    std::string sweep_manifest;
    std::vector<double> sweep_ps = {0.1, 0.2, 0.3, 0.4, 0.5};
    int sweep_L = 100;
    model::ModelConfig sweep_cfg;
    double sweep_val_fraction = 0.2;
    sweep_cmd->add_option("--manifest", sweep_manifest)->required();
    sweep_cmd->add_option("--p", sweep_ps);
    sweep_cmd->add_option("--L", sweep_L);
    sweep_cmd->add_option("--epochs", sweep_cfg.epochs);
    sweep_cmd->add_option("--max-len", sweep_cfg.max_len);
    sweep_cmd->add_option("--val-fraction", sweep_val_fraction);
    sweep_cmd->callback([&] {
        sweep_cfg.seed = g.seed;
        auto manifest = load_manifest(sweep_manifest);
        auto samples = corpus::load_samples(
            manifest, fs::path(sweep_manifest).parent_path());
        // Last val_fraction of the time-ordered manifest is held out.
        const auto n_val = std::max<std::size_t>(
            1, static_cast<std::size_t>(
                   static_cast<double>(samples.size()) * sweep_val_fraction));
        std::vector<ByteSample> val(samples.end() - n_val, samples.end());
        samples.resize(samples.size() - n_val);
        auto examples = harness::to_examples(samples, sweep_cfg.max_len);
        auto res = harness::p_sweep(examples, val, sweep_ps, sweep_cfg, sweep_L,
                                    g.seed, g.threads);
        std::vector<std::pair<std::string, harness::MetricsReport>> rows;
        for (auto& [p, m] : res.rows)
            rows.emplace_back("p=" + harness::format_double(p), m);
        std::cout << harness::emit_report(harness::metrics_table(rows),
                                          harness::ReportFormat::csv);
        std::cout << "# best_p=" << res.best_p << "\n";
    });

    // ---- robust ----
    auto* robust_cmd = app.add_subcommand("robust", "attack-matrix robustness table");
    std::string rob_manifest, rob_ns_model, rob_ra_model, rob_kind = "shift";
    attacks::AttackConfig rob_acfg;
    ga::GaConfig rob_gcfg;
    double rob_p = 0.2;
    robust_cmd->add_option("--manifest", rob_manifest)->required();
    robust_cmd->add_option("--ns-model", rob_ns_model)->required();
    robust_cmd->add_option("--ra-model", rob_ra_model)->required();
    robust_cmd->add_option("--kind", rob_kind);
    robust_cmd->add_option("--pop", rob_gcfg.population_size);
    robust_cmd->add_option("--gens", rob_gcfg.max_generations);
    robust_cmd->add_option("--extension", rob_acfg.shift_extension);
    robust_cmd->add_option("--sections", rob_acfg.gamma_num_sections);
    robust_cmd->add_option("--L", rob_acfg.L_attack);
    robust_cmd->add_option("--p", rob_p);
    robust_cmd->callback([&] {
        rob_acfg.kind = attacks::attack_kind_from_string(rob_kind);
        rob_gcfg.seed = derive_seed(g.seed, "cli.robust.ga");
        auto manifest = load_manifest(rob_manifest);
        auto subjects = corpus::load_samples(
            manifest, fs::path(rob_manifest).parent_path());
        std::erase_if(subjects, [](const ByteSample& s) {
            return s.label != Label::malicious;
        });
        auto [ns_params, ns_cfg] = model::load_checkpoint(rob_ns_model);
        auto [ra_params, ra_cfg] = model::load_checkpoint(rob_ra_model);
        std::vector<attacks::DetectorOracle> detectors;
        detectors.push_back(attacks::make_ns_oracle(ns_params, ns_cfg));
        detectors.push_back(attacks::make_ra_oracle(
            ra_params, ra_cfg,
            smoothing::SmoothingConfig{.p = rob_p,
                                       .L = rob_acfg.L_attack,
                                       .seed = derive_seed(g.seed, "cli.robust.ra")},
            g.threads));
        std::ostringstream hp;
        hp << "kind=" << rob_kind << " ext=" << rob_acfg.shift_extension
           << " pop=" << rob_gcfg.population_size
           << " gens=" << rob_gcfg.max_generations;
        auto rows = harness::robustness_eval(
            subjects, detectors, {{rob_acfg, rob_gcfg, hp.str()}});
        std::cout << harness::emit_report(harness::robustness_table(rows),
                                          harness::ReportFormat::csv);
    });

    // ---- timing ----
    auto* timing_cmd = app.add_subcommand("timing", "NS vs RA inference timing");
    std::string tim_manifest, tim_model;
    int tim_L = 100, tim_reps = 3;
    double tim_p = 0.2;
    timing_cmd->add_option("--manifest", tim_manifest)->required();
    timing_cmd->add_option("--model", tim_model)->required();
    timing_cmd->add_option("--L", tim_L);
    timing_cmd->add_option("--p", tim_p);
    timing_cmd->add_option("--reps", tim_reps);
    timing_cmd->callback([&] {
        auto manifest = load_manifest(tim_manifest);
        auto samples = corpus::load_samples(
            manifest, fs::path(tim_manifest).parent_path());
        auto [params, cfg] = model::load_checkpoint(tim_model);
        smoothing::SmoothingConfig scfg{.p = tim_p, .L = tim_L,
                                        .seed = derive_seed(g.seed, "cli.timing")};
        std::vector<harness::TimedDetector> dets;
        dets.push_back({"NS",
                        [&](const Bytes& b) {
                            model::forward(params, model::tokenize(b, cfg.max_len),
                                           cfg);
                        },
                        nullptr});
        dets.push_back({"RA-L" + std::to_string(tim_L),
                        [&](const Bytes& b) {
                            smoothing::smoothed_predict(params, b, cfg, scfg, 1);
                        },
                        nullptr});
        auto rows = harness::timing_eval(dets, samples, tim_reps);
        std::cout << harness::emit_report(harness::timing_table(rows),
                                          harness::ReportFormat::csv);
    });

    // ---- report ----
    auto* report_cmd = app.add_subcommand("report", "re-render a CSV report");
    std::string rep_in, rep_format = "markdown";
    report_cmd->add_option("--in", rep_in)->required();
    report_cmd->add_option("--format", rep_format, "csv|json|markdown");
    report_cmd->callback([&] {
        std::ifstream in(rep_in);
        if (!in) throw DataError("cannot read " + rep_in);
        const auto table = harness::parse_csv(in);
        std::cout << harness::emit_report(
            table, harness::report_format_from_string(rep_format));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
