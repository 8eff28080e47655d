#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "smoothbin/attacks.hpp"
#include "smoothbin/bytes.hpp"
#include "smoothbin/corpus.hpp"
#include "smoothbin/model.hpp"
#include "smoothbin/smoothing.hpp"

namespace smoothbin::harness {

struct MetricsReport {
    double accuracy = 0, f1 = 0, precision = 0, recall = 0;
    int tp = 0, fp = 0, tn = 0, fn = 0;
    int n = 0;
};

// Malicious is the positive class. 0/0 ratios are defined as 0.
inline MetricsReport compute_metrics(
    const std::vector<std::pair<Label, Label>>& predictions /* (pred, truth) */) {
    if (predictions.empty()) throw DataError("no predictions to score");
    MetricsReport r;
    for (const auto& [pred, truth] : predictions) {
        const bool p = pred == Label::malicious;
        const bool t = truth == Label::malicious;
        if (p && t) ++r.tp;
        else if (p && !t) ++r.fp;
        else if (!p && t) ++r.fn;
        else ++r.tn;
    }
    r.n = static_cast<int>(predictions.size());
    r.accuracy = static_cast<double>(r.tp + r.tn) / r.n;
    r.precision = r.tp + r.fp > 0 ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
    r.recall = r.tp + r.fn > 0 ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
    r.f1 = r.precision + r.recall > 0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

struct RobustnessRow {
    std::string attack;
    std::string hyperparameters;
    std::string detector_id;
    double detection_rate = 0.0;
    std::size_t n_subjects = 0;
    double mean_queries = 0.0;
};

struct TimingRow {
    std::string detector_id;
    double train_minutes_per_epoch = 0.0;
    double test_seconds_per_example = 0.0;
};

// ---- report rendering -------------------------------------------------------

enum class ReportFormat { csv, json, markdown };

inline ReportFormat report_format_from_string(const std::string& s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    throw ConfigError("unknown report format: " + s);
}

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

inline std::string emit_report(const Table& t, ReportFormat format) {
    std::ostringstream os;
    switch (format) {
        case ReportFormat::csv: {
            for (std::size_t i = 0; i < t.columns.size(); ++i)
                os << (i ? "," : "") << t.columns[i];
            os << '\n';
            for (const auto& row : t.rows) {
                for (std::size_t i = 0; i < row.size(); ++i)
                    os << (i ? "," : "") << row[i];
                os << '\n';
            }
            break;
        }
        case ReportFormat::json: {
            nlohmann::json arr = nlohmann::json::array();
            for (const auto& row : t.rows) {
                nlohmann::json obj;
                for (std::size_t i = 0; i < t.columns.size(); ++i)
                    obj[t.columns[i]] = row[i];
                arr.push_back(obj);
            }
            os << arr.dump(2) << '\n';
            break;
        }
        case ReportFormat::markdown: {
            os << '|';
            for (const auto& c : t.columns) os << ' ' << c << " |";
            os << "\n|";
            for (std::size_t i = 0; i < t.columns.size(); ++i) os << "---|";
            os << '\n';
            for (const auto& row : t.rows) {
                os << '|';
                for (const auto& cell : row) os << ' ' << cell << " |";
                os << '\n';
            }
            break;
        }
    }
    return os.str();
}

inline Table parse_csv(std::istream& in) {
    Table t;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::istringstream ls(s);
        std::string field;
        while (std::getline(ls, field, ',')) out.push_back(field);
        return out;
    };
    if (!std::getline(in, line)) throw DataError("empty CSV input");
    t.columns = split(line);
    while (std::getline(in, line))
        if (!line.empty()) t.rows.push_back(split(line));
    return t;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

inline Table metrics_table(
    const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    Table t;
    t.columns = {"key", "accuracy", "f1", "precision", "recall",
                 "tp", "fp", "tn", "fn", "n"};
    for (const auto& [key, m] : rows)
        t.rows.push_back({key, format_double(m.accuracy), format_double(m.f1),
                          format_double(m.precision), format_double(m.recall),
                          std::to_string(m.tp), std::to_string(m.fp),
                          std::to_string(m.tn), std::to_string(m.fn),
                          std::to_string(m.n)});
    return t;
}

inline Table robustness_table(const std::vector<RobustnessRow>& rows) {
    Table t;
    t.columns = {"attack", "hyperparameters", "detector",
                 "detection_rate", "n_subjects", "mean_queries"};
    for (const auto& r : rows)
        t.rows.push_back({r.attack, r.hyperparameters, r.detector_id,
                          format_double(r.detection_rate),
                          std::to_string(r.n_subjects),
                          format_double(r.mean_queries)});
    return t;
}

inline Table timing_table(const std::vector<TimingRow>& rows) {
    Table t;
    t.columns = {"detector", "train_minutes_per_epoch", "test_seconds_per_example"};
    for (const auto& r : rows)
        t.rows.push_back({r.detector_id, format_double(r.train_minutes_per_epoch),
                          format_double(r.test_seconds_per_example)});
    return t;
}

// ---- evaluation drivers -----------------------------------------------------

inline std::vector<model::TrainExample> to_examples(
    const std::vector<ByteSample>& samples, int max_len) {
    std::vector<model::TrainExample> out;
    out.reserve(samples.size());
    for (const auto& s : samples)
        out.push_back({model::tokenize(s.bytes, max_len), s.label});
    return out;
}

inline MetricsReport evaluate_ns(const model::ClassifierParams& params,
                                 const model::ModelConfig& cfg,
                                 const std::vector<ByteSample>& samples) {
    std::vector<std::pair<Label, Label>> preds;
    preds.reserve(samples.size());
    for (const auto& s : samples)
        preds.emplace_back(
            model::forward(params, model::tokenize(s.bytes, cfg.max_len), cfg).label,
            s.label);
    return compute_metrics(preds);
}

inline MetricsReport evaluate_ra(const model::ClassifierParams& params,
                                 const model::ModelConfig& cfg,
                                 const smoothing::SmoothingConfig& smooth_cfg,
                                 const std::vector<ByteSample>& samples,
                                 int threads = 1) {
    std::vector<std::pair<Label, Label>> preds;
    preds.reserve(samples.size());
    for (const auto& s : samples)
        preds.emplace_back(
            smoothing::smoothed_predict(params, s.bytes, cfg, smooth_cfg, threads)
                .label,
            s.label);
    return compute_metrics(preds);
}

struct PSweepResult {
    std::vector<std::pair<double, MetricsReport>> rows;  // keyed by p
    double best_p = 0.0;
};

// One smoothed model per p (shared seed), scored with L views on the
// validation samples.
inline PSweepResult p_sweep(const std::vector<model::TrainExample>& train_set,
                            const std::vector<ByteSample>& val_set,
                            const std::vector<double>& p_values,
                            const model::ModelConfig& base_cfg, int L,
                            std::uint64_t seed, int threads = 1) {
    if (p_values.empty()) throw ConfigError("p_sweep needs at least one p value");
    PSweepResult res;
    double best_acc = -1;
    for (double p : p_values) {
        smoothing::SmoothingConfig scfg;
        scfg.p = p;
        scfg.L = L;
        scfg.seed = derive_seed(seed, "sweep.smoothing");
        auto params = smoothing::train_smoothed(base_cfg, scfg, train_set);
        auto m = evaluate_ra(params, base_cfg, scfg, val_set, threads);
        if (m.accuracy > best_acc) {
            best_acc = m.accuracy;
            res.best_p = p;
        }
        res.rows.emplace_back(p, m);
    }
    return res;
}

// For each (detector, attack config) runs a campaign per subject. Subjects
// the detector misclassifies before any manipulation count as evaded with
// one query.
inline RobustnessRow robustness_eval_one(
    const std::vector<ByteSample>& subjects, attacks::DetectorOracle& detector,
    const attacks::AttackConfig& a_cfg, const ga::GaConfig& g_cfg,
    std::string hyperparameters) {
    for (const auto& s : subjects)
        if (s.label != Label::malicious)
            throw DataError("robustness subjects must all be malicious");
    std::size_t detected = 0;
    double total_queries = 0;
    for (const auto& s : subjects) {
        auto outcome = attacks::run_attack(s, detector, a_cfg, g_cfg);
        if (!outcome.evaded) ++detected;
        total_queries += static_cast<double>(outcome.queries_used);
    }
    RobustnessRow row;
    row.attack = attacks::to_string(a_cfg.kind);
    row.hyperparameters = std::move(hyperparameters);
    row.detector_id = detector.id();
    row.n_subjects = subjects.size();
    row.detection_rate =
        static_cast<double>(detected) / static_cast<double>(subjects.size());
    row.mean_queries = total_queries / static_cast<double>(subjects.size());
    return row;
}

struct NamedAttack {
    attacks::AttackConfig config;
    ga::GaConfig ga;
    std::string hyperparameters;
};

inline std::vector<RobustnessRow> robustness_eval(
    const std::vector<ByteSample>& subjects,
    std::vector<attacks::DetectorOracle>& detectors,
    const std::vector<NamedAttack>& matrix) {
    std::vector<RobustnessRow> rows;
    for (const auto& cell : matrix)
        for (auto& det : detectors)
            rows.push_back(robustness_eval_one(subjects, det, cell.config,
                                               cell.ga, cell.hyperparameters));
    return rows;
}

struct TimedDetector {
    std::string id;
    std::function<void(const Bytes&)> predict;
    std::function<void()> train_epoch;  // optional
};

// Wall-clock medians over `reps` repetitions, single-threaded by contract.
inline std::vector<TimingRow> timing_eval(std::vector<TimedDetector>& detectors,
                                          const std::vector<ByteSample>& samples,
                                          int reps = 3) {
    if (samples.size() < 10)
        throw ConfigError("timing_eval needs at least 10 samples");
    using clock = std::chrono::steady_clock;
    std::vector<TimingRow> rows;
    for (auto& det : detectors) {
        std::vector<double> test_times, train_times;
        for (int r = 0; r < reps; ++r) {
            const auto t0 = clock::now();
            for (const auto& s : samples) det.predict(s.bytes);
            const auto t1 = clock::now();
            test_times.push_back(
                std::chrono::duration<double>(t1 - t0).count() /
                static_cast<double>(samples.size()));
            if (det.train_epoch) {
                const auto t2 = clock::now();
                det.train_epoch();
                const auto t3 = clock::now();
                train_times.push_back(
                    std::chrono::duration<double>(t3 - t2).count() / 60.0);
            }
        }
        auto median = [](std::vector<double> v) {
            if (v.empty()) return 0.0;
            std::sort(v.begin(), v.end());
            return v[v.size() / 2];
        };
        rows.push_back({det.id, median(train_times), median(test_times)});
    }
    return rows;
}

}  // namespace smoothbin::harness
