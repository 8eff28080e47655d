#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "smoothbin/bytes.hpp"
#include "smoothbin/rng.hpp"

namespace smoothbin::model {

using Token = std::uint16_t;
inline constexpr Token kPad = 256;       // ablated / absent byte
inline constexpr int kVocabSize = 257;   // 0..255 plus PAD

struct ModelConfig {
    int embed_dim = 8;
    int num_filters = 16;
    int window = 18;
    int stride = 2;
    int max_len = 65536;
    double learning_rate = 0.7;
    int epochs = 20;
    int batch_size = 16;
    std::uint64_t seed = 0;

    void check() const {
        if (embed_dim < 1 || num_filters < 1 || window < 1 ||
            window > max_len || stride < 1)
            throw ConfigError("invalid model configuration");
    }
};

// All learnable tensors. The PAD embedding row (index 256) stays exactly
// zero before, during, and after training.
struct ClassifierParams {
    int embed_dim = 0;
    int num_filters = 0;
    int window = 0;
    std::vector<double> embedding;                 // kVocabSize x E
    std::vector<double> conv_a_w, conv_b_w;        // F x W x E
    std::vector<double> conv_a_b, conv_b_b;        // F
    std::vector<double> fc_weights;                // F
    double fc_bias = 0.0;

    static ClassifierParams zeros(const ModelConfig& cfg) {
        ClassifierParams p;
        p.embed_dim = cfg.embed_dim;
        p.num_filters = cfg.num_filters;
        p.window = cfg.window;
        p.embedding.assign(static_cast<std::size_t>(kVocabSize) * cfg.embed_dim, 0.0);
        const std::size_t wsz =
            static_cast<std::size_t>(cfg.num_filters) * cfg.window * cfg.embed_dim;
        p.conv_a_w.assign(wsz, 0.0);
        p.conv_b_w.assign(wsz, 0.0);
        p.conv_a_b.assign(cfg.num_filters, 0.0);
        p.conv_b_b.assign(cfg.num_filters, 0.0);
        p.fc_weights.assign(cfg.num_filters, 0.0);
        return p;
    }

    void zero_pad_row() {
        std::fill(embedding.begin() + static_cast<std::size_t>(kPad) * embed_dim,
                  embedding.begin() + static_cast<std::size_t>(kPad + 1) * embed_dim,
                  0.0);
    }

    template <typename Fn>
    void for_each_tensor(Fn&& fn) {
        fn(embedding);
        fn(conv_a_w);
        fn(conv_a_b);
        fn(conv_b_w);
        fn(conv_b_b);
        fn(fc_weights);
    }

    bool all_finite() const {
        auto ok = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(),
                               [](double x) { return std::isfinite(x); });
        };
        return ok(embedding) && ok(conv_a_w) && ok(conv_b_w) && ok(conv_a_b) &&
               ok(conv_b_b) && ok(fc_weights) && std::isfinite(fc_bias);
    }
};

inline ClassifierParams init_params(const ModelConfig& cfg) {
    cfg.check();
    ClassifierParams p = ClassifierParams::zeros(cfg);
    Rng rng(derive_seed(cfg.seed, "model.init"));
    auto fill = [&](std::vector<double>& v, double scale) {
        for (auto& x : v) x = (rng.next_double() * 2.0 - 1.0) * scale;
    };
    // Byte embeddings start from a signed bit code of the byte value plus a
    // little noise. With max pooling the gradient only flows through argmax
    // windows, so a high-contrast, structured embedding is what makes
    // small-corpus training converge at all; a small uniform init leaves all
    // pooled features statistically indistinguishable.
    for (int b = 0; b < 256; ++b)
        for (int e = 0; e < cfg.embed_dim; ++e)
            p.embedding[static_cast<std::size_t>(b) * cfg.embed_dim + e] =
                (((b >> (e % 8)) & 1) ? 0.5 : -0.5) +
                (rng.next_double() * 2.0 - 1.0) * 0.02;
    fill(p.conv_a_w, 0.05);
    fill(p.conv_b_w, 0.05);
    fill(p.conv_a_b, 0.01);
    fill(p.conv_b_b, 0.01);
    fill(p.fc_weights, 0.1);
    p.fc_bias = 0.0;
    p.zero_pad_row();
    return p;
}

struct Prediction {
    double score = 0.0;  // malicious probability, strictly in (0,1)
    Label label = Label::benign;
};

inline std::vector<Token> tokenize(const Bytes& bytes, int max_len) {
    const std::size_t n =
        std::min<std::size_t>(bytes.size(), static_cast<std::size_t>(max_len));
    std::vector<Token> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = bytes[i];
    return t;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

namespace detail {

struct ForwardCache {
    std::vector<Token> padded;
    std::vector<double> pooled;       // F
    std::vector<int> argmax_t;        // F
    std::vector<double> a_at_max;     // F, pre-gate conv_a at the max window
    std::vector<double> b_at_max;     // F
    double logit = 0.0;
    double score = 0.0;
};

inline ForwardCache forward_impl(const ClassifierParams& p,
                                 const std::vector<Token>& tokens,
                                 const ModelConfig& cfg) {
    if (tokens.empty()) throw DataError("empty token sequence");
    for (Token t : tokens)
        if (t > kPad) throw DataError("token id out of range");
    if (static_cast<int>(tokens.size()) > cfg.max_len)
        throw DataError("token sequence longer than max_len");

    ForwardCache c;
    c.padded = tokens;
    if (static_cast<int>(c.padded.size()) < cfg.window)
        c.padded.resize(cfg.window, kPad);

    const int E = cfg.embed_dim, F = cfg.num_filters, W = cfg.window;
    const int T =
        static_cast<int>((c.padded.size() - W) / cfg.stride) + 1;

    c.pooled.assign(F, -std::numeric_limits<double>::infinity());
    c.argmax_t.assign(F, 0);
    c.a_at_max.assign(F, 0.0);
    c.b_at_max.assign(F, 0.0);

    // Token ids index one of 257 embedding rows, so each (filter, window
    // slot, token) contribution to a conv sum is precomputable. This turns
    // the per-window work from W*E multiply-adds into W table adds per
    // filter, which dominates runtime for long inputs.
    const std::size_t slots = static_cast<std::size_t>(F) * W;
    std::vector<double> lut_a(slots * kVocabSize), lut_b(slots * kVocabSize);
    for (int f = 0; f < F; ++f) {
        for (int w = 0; w < W; ++w) {
            const double* wa =
                &p.conv_a_w[(static_cast<std::size_t>(f) * W + w) * E];
            const double* wb =
                &p.conv_b_w[(static_cast<std::size_t>(f) * W + w) * E];
            double* la = &lut_a[(static_cast<std::size_t>(f) * W + w) * kVocabSize];
            double* lb = &lut_b[(static_cast<std::size_t>(f) * W + w) * kVocabSize];
            for (int tok = 0; tok < kVocabSize; ++tok) {
                const double* row =
                    &p.embedding[static_cast<std::size_t>(tok) * E];
                double a = 0.0, b = 0.0;
                for (int e = 0; e < E; ++e) {
                    a += wa[e] * row[e];
                    b += wb[e] * row[e];
                }
                la[tok] = a;
                lb[tok] = b;
            }
        }
    }

    for (int t = 0; t < T; ++t) {
        const int base = t * cfg.stride;
        for (int f = 0; f < F; ++f) {
            const double* la = &lut_a[static_cast<std::size_t>(f) * W * kVocabSize];
            const double* lb = &lut_b[static_cast<std::size_t>(f) * W * kVocabSize];
            double a = p.conv_a_b[f], b = p.conv_b_b[f];
            for (int w = 0; w < W; ++w) {
                const Token tok = c.padded[base + w];
                a += la[static_cast<std::size_t>(w) * kVocabSize + tok];
                b += lb[static_cast<std::size_t>(w) * kVocabSize + tok];
            }
            const double g = a * sigmoid(b);
            if (g > c.pooled[f]) {
                c.pooled[f] = g;
                c.argmax_t[f] = t;
                c.a_at_max[f] = a;
                c.b_at_max[f] = b;
            }
        }
    }

    c.logit = p.fc_bias;
    for (int f = 0; f < F; ++f) c.logit += p.fc_weights[f] * c.pooled[f];
    c.score = sigmoid(c.logit);
    // Keep the score in the open interval even for extreme logits.
    c.score = std::clamp(c.score, std::numeric_limits<double>::min(),
                         1.0 - std::numeric_limits<double>::epsilon());
    return c;
}

}  // namespace detail

inline Prediction forward(const ClassifierParams& p,
                          const std::vector<Token>& tokens,
                          const ModelConfig& cfg) {
    auto c = detail::forward_impl(p, tokens, cfg);
    Prediction pred;
    pred.score = c.score;
    pred.label = pred.score >= 0.5 ? Label::malicious : Label::benign;
    return pred;
}

// Binary cross-entropy loss and exact analytic gradients. The PAD embedding
// row's gradient is forced to zero (frozen row).
inline std::pair<double, ClassifierParams> loss_and_gradients(
    const ClassifierParams& p, const std::vector<Token>& tokens, Label label,
    const ModelConfig& cfg) {
    if (label == Label::unlabeled) throw DataError("unlabeled training example");
    const double y = label == Label::malicious ? 1.0 : 0.0;
    auto c = detail::forward_impl(p, tokens, cfg);

    // Numerically stable BCE on the logit.
    const double z = c.logit;
    const double loss =
        std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));

    ClassifierParams g = ClassifierParams::zeros(
        ModelConfig{.embed_dim = cfg.embed_dim,
                    .num_filters = cfg.num_filters,
                    .window = cfg.window,
                    .stride = cfg.stride,
                    .max_len = cfg.max_len});

    const double dz = sigmoid(z) - y;
    g.fc_bias = dz;
    const int E = cfg.embed_dim, F = cfg.num_filters, W = cfg.window;
    for (int f = 0; f < F; ++f) {
        g.fc_weights[f] = dz * c.pooled[f];
        const double dpool = dz * p.fc_weights[f];
        const double a = c.a_at_max[f], sb = sigmoid(c.b_at_max[f]);
        const double da = dpool * sb;
        const double db = dpool * a * sb * (1.0 - sb);
        g.conv_a_b[f] += da;
        g.conv_b_b[f] += db;
        const int base = c.argmax_t[f] * cfg.stride;
        const double* wa = &p.conv_a_w[static_cast<std::size_t>(f) * W * E];
        const double* wb = &p.conv_b_w[static_cast<std::size_t>(f) * W * E];
        double* ga = &g.conv_a_w[static_cast<std::size_t>(f) * W * E];
        double* gb = &g.conv_b_w[static_cast<std::size_t>(f) * W * E];
        for (int w = 0; w < W; ++w) {
            const Token tok = c.padded[base + w];
            const double* x = &p.embedding[static_cast<std::size_t>(tok) * E];
            double* ge = &g.embedding[static_cast<std::size_t>(tok) * E];
            for (int e = 0; e < E; ++e) {
                ga[w * E + e] += da * x[e];
                gb[w * E + e] += db * x[e];
                ge[e] += da * wa[w * E + e] + db * wb[w * E + e];
            }
        }
    }
    g.zero_pad_row();
    return {loss, g};
}

struct TrainExample {
    std::vector<Token> tokens;
    Label label = Label::unlabeled;
};

// Per-example transform applied freshly each epoch (realizes ablation during
// smoothed training).
using AblationHook = std::function<std::vector<Token>(
    const std::vector<Token>&, std::size_t example_index, int epoch)>;

inline constexpr double kGradClipNorm = 5.0;

inline ClassifierParams train(ClassifierParams params,
                              const std::vector<TrainExample>& corpus,
                              const ModelConfig& cfg,
                              const AblationHook& hook = nullptr) {
    cfg.check();
    if (corpus.empty()) throw DataError("empty training corpus");

    // Similar-size batching: sort by length, group neighbors.
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return corpus[a].tokens.size() < corpus[b].tokens.size();
    });
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size();
         i += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(
            order.size(), i + static_cast<std::size_t>(cfg.batch_size));
        batches.emplace_back(order.begin() + i, order.begin() + end);
    }

    ClassifierParams grad_sum = ClassifierParams::zeros(cfg);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Shuffle batch order, not batch membership, each epoch.
        std::vector<std::size_t> batch_order(batches.size());
        std::iota(batch_order.begin(), batch_order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed, "train.shuffle",
                                    static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = batch_order.size(); i > 1; --i)
            std::swap(batch_order[i - 1], batch_order[shuffle_rng.below(i)]);

        for (std::size_t bi : batch_order) {
            const auto& batch = batches[bi];
            grad_sum.for_each_tensor(
                [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); });
            grad_sum.fc_bias = 0.0;
            double batch_loss = 0.0;
            for (std::size_t idx : batch) {
                const auto& ex = corpus[idx];
                std::vector<Token> toks =
                    hook ? hook(ex.tokens, idx, epoch) : ex.tokens;
                auto [loss, g] = loss_and_gradients(params, toks, ex.label, cfg);
                batch_loss += loss;
                auto* src = &g;
                std::size_t ti = 0;
                grad_sum.for_each_tensor([&](std::vector<double>& dst) {
                    const std::vector<double>* sv = nullptr;
                    switch (ti++) {
                        case 0: sv = &src->embedding; break;
                        case 1: sv = &src->conv_a_w; break;
                        case 2: sv = &src->conv_a_b; break;
                        case 3: sv = &src->conv_b_w; break;
                        case 4: sv = &src->conv_b_b; break;
                        default: sv = &src->fc_weights; break;
                    }
                    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += (*sv)[k];
                });
                grad_sum.fc_bias += g.fc_bias;
            }
            if (!std::isfinite(batch_loss))
                throw DataError("non-finite training loss, aborting");

            const double inv = 1.0 / static_cast<double>(batch.size());
            double sq = grad_sum.fc_bias * grad_sum.fc_bias * inv * inv;
            grad_sum.for_each_tensor([&](std::vector<double>& v) {
                for (double& x : v) {
                    x *= inv;
                    sq += x * x;
                }
            });
            grad_sum.fc_bias *= inv;
            const double norm = std::sqrt(sq);
            const double scale =
                norm > kGradClipNorm ? kGradClipNorm / norm : 1.0;

            const double step = cfg.learning_rate * scale;
            std::size_t ti = 0;
            params.for_each_tensor([&](std::vector<double>& dst) {
                const std::vector<double>* sv = nullptr;
                switch (ti++) {
                    case 0: sv = &grad_sum.embedding; break;
                    case 1: sv = &grad_sum.conv_a_w; break;
                    case 2: sv = &grad_sum.conv_a_b; break;
                    case 3: sv = &grad_sum.conv_b_w; break;
                    case 4: sv = &grad_sum.conv_b_b; break;
                    default: sv = &grad_sum.fc_weights; break;
                }
                for (std::size_t k = 0; k < dst.size(); ++k)
                    dst[k] -= step * (*sv)[k];
            });
            params.fc_bias -= step * grad_sum.fc_bias;
            params.zero_pad_row();
        }
    }
    if (!params.all_finite()) throw DataError("non-finite parameters after training");
    return params;
}

// ---- checkpoint format -----------------------------------------------------
// magic "RSMWCKPT" | u32 version | u32 json length | JSON config |
// little-endian f32 tensors: embedding, conv_a_w, conv_a_b, conv_b_w,
// conv_b_b, fc_weights, fc_bias.

inline constexpr char kCkptMagic[8] = {'R', 'S', 'M', 'W', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCkptVersion = 1;

class FormatError : public DataError {
    using DataError::DataError;
};

namespace detail {

inline void put_u32(Bytes& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 24));
}

inline void put_f32(Bytes& out, double x) {
    float f = static_cast<float>(x);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
}

inline std::uint32_t get_u32(const Bytes& in, std::size_t& off) {
    if (off + 4 > in.size()) throw FormatError("truncated checkpoint");
    std::uint32_t v = static_cast<std::uint32_t>(in[off]) |
                      (static_cast<std::uint32_t>(in[off + 1]) << 8) |
                      (static_cast<std::uint32_t>(in[off + 2]) << 16) |
                      (static_cast<std::uint32_t>(in[off + 3]) << 24);
    off += 4;
    return v;
}

inline double get_f32(const Bytes& in, std::size_t& off) {
    const std::uint32_t bits = get_u32(in, off);
    float f;
    std::memcpy(&f, &bits, 4);
    return static_cast<double>(f);
}

}  // namespace detail

inline Bytes encode_checkpoint(const ClassifierParams& p, const ModelConfig& cfg) {
    nlohmann::json j = {
        {"embed_dim", cfg.embed_dim},   {"num_filters", cfg.num_filters},
        {"window", cfg.window},         {"stride", cfg.stride},
        {"max_len", cfg.max_len},       {"learning_rate", cfg.learning_rate},
        {"epochs", cfg.epochs},         {"batch_size", cfg.batch_size},
        {"seed", cfg.seed},
    };
    const std::string js = j.dump();
    Bytes out(kCkptMagic, kCkptMagic + 8);
    detail::put_u32(out, kCkptVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(js.size()));
    out.insert(out.end(), js.begin(), js.end());
    for (const auto* v : {&p.embedding, &p.conv_a_w, &p.conv_a_b, &p.conv_b_w,
                          &p.conv_b_b, &p.fc_weights})
        for (double x : *v) detail::put_f32(out, x);
    detail::put_f32(out, p.fc_bias);
    return out;
}

inline std::pair<ClassifierParams, ModelConfig> decode_checkpoint(const Bytes& in) {
    if (in.size() < 16 || std::memcmp(in.data(), kCkptMagic, 8) != 0)
        throw FormatError("bad checkpoint magic");
    std::size_t off = 8;
    if (detail::get_u32(in, off) != kCkptVersion)
        throw FormatError("unsupported checkpoint version");
    const std::uint32_t jlen = detail::get_u32(in, off);
    if (off + jlen > in.size()) throw FormatError("truncated checkpoint");
    ModelConfig cfg;
    try {
        auto j = nlohmann::json::parse(in.begin() + off, in.begin() + off + jlen);
        cfg.embed_dim = j.at("embed_dim");
        cfg.num_filters = j.at("num_filters");
        cfg.window = j.at("window");
        cfg.stride = j.at("stride");
        cfg.max_len = j.at("max_len");
        cfg.learning_rate = j.at("learning_rate");
        cfg.epochs = j.at("epochs");
        cfg.batch_size = j.at("batch_size");
        cfg.seed = j.at("seed");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint config: ") + e.what());
    }
    off += jlen;
    ClassifierParams p = ClassifierParams::zeros(cfg);
    for (auto* v : {&p.embedding, &p.conv_a_w, &p.conv_a_b, &p.conv_b_w,
                    &p.conv_b_b, &p.fc_weights})
        for (double& x : *v) x = detail::get_f32(in, off);
    p.fc_bias = detail::get_f32(in, off);
    if (off != in.size()) throw FormatError("trailing bytes in checkpoint");
    return {std::move(p), cfg};
}

inline void save_checkpoint(const ClassifierParams& p, const ModelConfig& cfg,
                            const std::filesystem::path& path) {
    const Bytes data = encode_checkpoint(p, cfg);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
}

inline std::pair<ClassifierParams, ModelConfig> load_checkpoint(
    const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path.string());
    Bytes data((std::istreambuf_iterator<char>(in)),
               std::istreambuf_iterator<char>());
    return decode_checkpoint(data);
}

}  // namespace smoothbin::model
