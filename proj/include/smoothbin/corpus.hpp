#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "smoothbin/bytes.hpp"
#include "smoothbin/pe.hpp"
#include "smoothbin/rng.hpp"

namespace smoothbin::corpus {

// 16-byte class-discriminative motifs planted in section data. Fixed bank so
// corpora are stable across versions; values chosen once at random.
using Motif = std::array<std::uint8_t, 16>;

inline const std::vector<Motif>& malicious_motifs() {
    static const std::vector<Motif> bank = {
        Motif{0xd3, 0x4a, 0x11, 0xbe, 0x7f, 0x02, 0x9c, 0xe5,
              0x31, 0xa8, 0x60, 0xf4, 0x2d, 0x96, 0x0b, 0xc7},
        Motif{0x58, 0xe1, 0x3c, 0x07, 0xaa, 0x94, 0x4f, 0xd2,
              0x19, 0x6b, 0xf0, 0x85, 0xce, 0x23, 0x7a, 0x40},
        Motif{0x0f, 0xb7, 0x62, 0xd9, 0x15, 0xfc, 0x88, 0x2e,
              0xa1, 0x50, 0x3b, 0xe7, 0x9d, 0x44, 0xc0, 0x76},
        Motif{0xe9, 0x26, 0x71, 0x5c, 0xb3, 0x08, 0xdf, 0x9a,
              0x45, 0xf2, 0x1d, 0x80, 0x6e, 0xcb, 0x34, 0x57},
    };
    return bank;
}

inline const std::vector<Motif>& benign_motifs() {
    static const std::vector<Motif> bank = {
        Motif{0x21, 0x8d, 0x5a, 0xf7, 0x03, 0xc4, 0x6f, 0x92,
              0xe0, 0x3d, 0xb1, 0x48, 0xfa, 0x17, 0xac, 0x65},
        Motif{0x7c, 0x30, 0xe4, 0x1b, 0xd6, 0x89, 0x52, 0xbf,
              0x0a, 0xc1, 0x78, 0x2f, 0x95, 0xee, 0x43, 0xd8},
        Motif{0xb5, 0x4e, 0x09, 0xf1, 0x67, 0x2a, 0xdc, 0x83,
              0x3e, 0x90, 0xc5, 0x16, 0x7b, 0xa2, 0xf9, 0x04},
        Motif{0x12, 0xa7, 0xe8, 0x53, 0x0c, 0xbd, 0x36, 0xf5,
              0x61, 0x8e, 0x29, 0xd0, 0x47, 0xfe, 0x9b, 0x74},
    };
    return bank;
}

inline std::size_t count_occurrences(const Bytes& haystack, const Motif& motif) {
    if (haystack.size() < motif.size()) return 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i + motif.size() <= haystack.size(); ++i)
        if (std::equal(motif.begin(), motif.end(), haystack.begin() + i)) ++n;
    return n;
}

inline std::size_t count_motifs(const Bytes& data, const std::vector<Motif>& bank) {
    std::size_t n = 0;
    for (const auto& m : bank) n += count_occurrences(data, m);
    return n;
}

struct ManifestEntry {
    std::string path;
    Label label = Label::unlabeled;
    std::int64_t timestamp = 0;
    std::uint64_t size = 0;
    Hash256 hash{};
};

struct CorpusManifest {
    std::vector<ManifestEntry> entries;  // sorted by timestamp ascending
    std::optional<std::uint64_t> generator_seed;
};

struct SplitSpec {
    double train_fraction = 0.8;
    double val_fraction = 0.1;
    double test_fraction = 0.1;
    std::uint64_t max_size_bytes = 1 << 20;

    void check() const {
        const double sum = train_fraction + val_fraction + test_fraction;
        if (train_fraction <= 0 || val_fraction <= 0 || test_fraction <= 0 ||
            std::abs(sum - 1.0) > 1e-9)
            throw ConfigError("split fractions must be positive and sum to 1");
    }
};

namespace detail {

// Places `count` non-overlapping copies of motifs from `bank` at random
// positions, then scrubs any accidental occurrence of `forbidden` motifs.
inline void plant_motifs(Bytes& data, const std::vector<Motif>& bank,
                         std::size_t count, const std::vector<Motif>& forbidden,
                         Rng& rng) {
    const std::size_t mlen = 16;
    std::vector<std::pair<std::size_t, std::size_t>> placed;
    std::size_t planted = 0;
    std::size_t attempts = 0;
    while (planted < count && attempts < count * 200) {
        ++attempts;
        const std::size_t pos = rng.below(data.size() - mlen + 1);
        bool clash = false;
        for (auto [p, l] : placed)
            if (pos < p + l && p < pos + mlen) clash = true;
        if (clash) continue;
        const Motif& m = bank[rng.below(bank.size())];
        std::copy(m.begin(), m.end(), data.begin() + pos);
        placed.emplace_back(pos, mlen);
        ++planted;
    }
    if (planted < count) throw DataError("could not place motifs, data too small");

    // Random filler can collide with a forbidden motif; break such runs
    // without touching planted regions.
    for (const auto& m : forbidden) {
        for (std::size_t i = 0; i + mlen <= data.size(); ++i) {
            if (!std::equal(m.begin(), m.end(), data.begin() + i)) continue;
            bool inside_planted = false;
            for (auto [p, l] : placed)
                if (i < p + l && p < i + mlen) inside_planted = true;
            if (!inside_planted) data[i] ^= 0xff;
        }
    }
}

inline pe::PeImage build_pe(const std::vector<Bytes>& section_payloads,
                            std::uint32_t entry_rva) {
    using namespace pe::detail;
    const std::uint32_t fa = 512, sa = 4096;
    pe::PeImage img;
    img.e_lfanew = 64;
    img.machine = 0x014c;  // i386
    img.coff_characteristics = 0x0102;
    img.opt_size = 224;
    img.section_alignment = sa;
    img.file_alignment = fa;
    img.size_of_headers = align_up(
        64 + 24 + 224 + 40 * section_payloads.size(), fa);
    img.entry_point = entry_rva;

    // DOS header + section-table area, patched by serialize().
    img.head.assign(img.size_of_headers, 0);
    img.head[0] = 'M';
    img.head[1] = 'Z';
    wr32(img.head, 0x3c, img.e_lfanew);
    std::memcpy(img.head.data() + img.e_lfanew, "PE\0\0", 4);
    wr16(img.head, img.opt_offset(), 0x10b);
    img.head[img.opt_offset() + 68] = 3;  // subsystem: console

    static const char* names[] = {".text", ".rdata", ".data", ".xtra1", ".xtra2"};
    static const std::uint32_t chars[] = {
        pe::kScnCode | pe::kScnMemExecute | pe::kScnMemRead,
        pe::kScnInitializedData | pe::kScnMemRead,
        pe::kScnInitializedData | pe::kScnMemRead | pe::kScnMemWrite,
        pe::kScnInitializedData | pe::kScnMemRead,
        pe::kScnInitializedData | pe::kScnMemRead,
    };
    std::uint32_t raw_cursor = img.size_of_headers;
    std::uint32_t va_cursor = sa;
    for (std::size_t i = 0; i < section_payloads.size(); ++i) {
        pe::SectionRecord s;
        const char* nm = names[i % 5];
        for (std::size_t k = 0; nm[k] && k < 8; ++k)
            s.name[k] = static_cast<std::uint8_t>(nm[k]);
        s.data = section_payloads[i];
        s.raw_size = align_up(s.data.size(), fa);
        s.data.resize(s.raw_size, 0);
        s.raw_offset = raw_cursor;
        s.virtual_size = static_cast<std::uint32_t>(section_payloads[i].size());
        if (s.virtual_size == 0) s.virtual_size = s.raw_size;
        s.virtual_address = va_cursor;
        s.characteristics = chars[i % 5];
        raw_cursor += s.raw_size;
        va_cursor = align_up(va_cursor + s.virtual_size, sa);
        img.sections.push_back(std::move(s));
    }
    img.size_of_image = va_cursor;
    return img;
}

}  // namespace detail

// Deterministic synthetic corpus. Malicious samples carry >=3 malicious
// motifs and no benign motifs; benign samples the reverse. Sizes are
// log-uniform over [min,max]. Samples interleave benign/malicious so every
// time slice contains both classes.
inline std::vector<ByteSample> generate_synthetic(
    std::size_t count_benign, std::size_t count_malicious, std::uint64_t seed,
    std::pair<std::uint64_t, std::uint64_t> size_range) {
    const auto [min_size, max_size] = size_range;
    if (min_size < 512 || max_size < min_size)
        throw ConfigError("size range must satisfy 512 <= min <= max");

    std::vector<ByteSample> out;
    out.reserve(count_benign + count_malicious);
    std::int64_t timestamp = 1'600'000'000;
    std::size_t b = 0, m = 0, idx = 0;
    while (b < count_benign || m < count_malicious) {
        // Round-robin; when one class is exhausted the other continues.
        Label label;
        if (b < count_benign && (idx % 2 == 0 || m >= count_malicious)) {
            label = Label::benign;
            ++b;
        } else {
            label = Label::malicious;
            ++m;
        }
        Rng rng(derive_seed(seed, "corpus.sample", idx));

        const double lo = std::log(static_cast<double>(min_size));
        const double hi = std::log(static_cast<double>(max_size));
        auto target = static_cast<std::uint64_t>(
            std::exp(lo + (hi - lo) * rng.next_double()));
        target = std::clamp(target, min_size, max_size);

        // Budget for section payloads after the 1 KiB header area.
        const std::uint64_t body =
            target > 1024 + 3 * 64 ? target - 1024 : 3 * 64;
        std::vector<Bytes> payloads(3);
        const std::uint64_t split1 = body / 2, split2 = body / 4;
        payloads[0].resize(std::max<std::uint64_t>(split1, 64));
        payloads[1].resize(std::max<std::uint64_t>(split2, 64));
        payloads[2].resize(std::max<std::uint64_t>(body - split1 - split2, 64));
        for (auto& p : payloads)
            for (auto& byte : p) byte = rng.next_byte();

        const auto& own =
            label == Label::malicious ? malicious_motifs() : benign_motifs();
        const auto& other =
            label == Label::malicious ? benign_motifs() : malicious_motifs();
        // 3..6 occurrences spread over the sections, at least one in .text.
        const std::size_t total_motifs = 3 + rng.below(4);
        std::vector<std::size_t> per_payload(payloads.size(), 0);
        for (std::size_t k = 0; k < total_motifs; ++k)
            ++per_payload[k % payloads.size()];
        for (std::size_t k = 0; k < payloads.size(); ++k)
            detail::plant_motifs(payloads[k], own, per_payload[k], other, rng);

        pe::PeImage img = detail::build_pe(payloads, 4096 + 16);
        ByteSample sample;
        sample.bytes = pe::serialize(img);
        sample.label = label;
        sample.timestamp = timestamp;
        sample.origin = ByteSample::Origin::synthetic;
        sample.rehash();
        out.push_back(std::move(sample));
        timestamp += 3600;
        ++idx;
    }
    return out;
}

inline std::string manifest_to_csv(const CorpusManifest& m) {
    std::ostringstream os;
    os << "path,label,timestamp,size,hash\n";
    for (const auto& e : m.entries)
        os << e.path << ',' << to_string(e.label) << ',' << e.timestamp << ','
           << e.size << ',' << to_hex(e.hash) << '\n';
    return os.str();
}

inline CorpusManifest manifest_from_csv(std::istream& in) {
    CorpusManifest m;
    std::string line;
    if (!std::getline(in, line) || line != "path,label,timestamp,size,hash")
        throw DataError("manifest missing expected CSV header row");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        ManifestEntry e;
        std::string field;
        std::getline(ls, e.path, ',');
        std::getline(ls, field, ',');
        e.label = label_from_string(field);
        std::getline(ls, field, ',');
        e.timestamp = std::stoll(field);
        std::getline(ls, field, ',');
        e.size = std::stoull(field);
        std::getline(ls, field, ',');
        if (field.size() != 64) throw DataError("bad hash in manifest: " + field);
        for (std::size_t i = 0; i < 32; ++i)
            e.hash[i] = static_cast<std::uint8_t>(
                std::stoul(field.substr(2 * i, 2), nullptr, 16));
        m.entries.push_back(std::move(e));
    }
    return m;
}

struct IngestResult {
    CorpusManifest manifest;
    std::size_t skipped_too_large = 0;
    std::vector<std::string> warnings;
};

// Labels are looked up by relative path; files missing from the map are
// recorded as unlabeled.
inline IngestResult ingest_directory(
    const std::filesystem::path& root,
    const std::map<std::string, Label>& labels,
    std::uint64_t max_size_bytes = 1 << 20) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root))
        throw DataError("ingest root does not exist: " + root.string());

    IngestResult res;
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::int64_t order = 0;
    for (const auto& f : files) {
        std::error_code ec;
        const auto size = fs::file_size(f, ec);
        if (ec) {
            res.warnings.push_back("unreadable: " + f.string());
            continue;
        }
        if (size > max_size_bytes) {
            ++res.skipped_too_large;
            continue;
        }
        std::ifstream in(f, std::ios::binary);
        if (!in) {
            res.warnings.push_back("unreadable: " + f.string());
            continue;
        }
        Bytes data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
        ManifestEntry e;
        e.path = fs::relative(f, root).generic_string();
        auto it = labels.find(e.path);
        e.label = it != labels.end() ? it->second : Label::unlabeled;
        e.size = data.size();
        e.hash = sha256(data);
        // Ingestion order stands in for a timestamp when none is known.
        e.timestamp = order++;
        auto mtime = fs::last_write_time(f, ec);
        if (!ec)
            e.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                              mtime.time_since_epoch())
                              .count();
        res.manifest.entries.push_back(std::move(e));
    }
    if (res.manifest.entries.empty())
        throw DataError("no usable files under " + root.string());
    std::stable_sort(res.manifest.entries.begin(), res.manifest.entries.end(),
                     [](const auto& a, const auto& b) {
                         return a.timestamp < b.timestamp;
                     });
    return res;
}

struct SplitResult {
    CorpusManifest train, val, test;
};

inline SplitResult time_split(const CorpusManifest& manifest,
                              const SplitSpec& spec) {
    spec.check();
    const std::size_t n = manifest.entries.size();
    if (n < 3) throw DataError("need at least 3 entries to split");

    auto sorted = manifest.entries;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto& a, const auto& b) {
                         return a.timestamp < b.timestamp;
                     });

    auto n_train = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(n)));
    auto n_val = static_cast<std::size_t>(
        std::llround(spec.val_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
    n_val = std::clamp<std::size_t>(n_val, 1, n - n_train - 1);

    SplitResult out;
    out.train.generator_seed = manifest.generator_seed;
    out.val.generator_seed = manifest.generator_seed;
    out.test.generator_seed = manifest.generator_seed;
    out.train.entries.assign(sorted.begin(), sorted.begin() + n_train);
    out.val.entries.assign(sorted.begin() + n_train,
                           sorted.begin() + n_train + n_val);
    out.test.entries.assign(sorted.begin() + n_train + n_val, sorted.end());
    return out;
}

inline void write_corpus(const std::vector<ByteSample>& samples,
                         const std::filesystem::path& dir,
                         std::optional<std::uint64_t> seed = std::nullopt) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    CorpusManifest manifest;
    manifest.generator_seed = seed;
    std::size_t idx = 0;
    for (const auto& s : samples) {
        std::ostringstream name;
        name << to_string(s.label) << '_' << idx++ << ".bin";
        std::ofstream out(dir / name.str(), std::ios::binary);
        out.write(reinterpret_cast<const char*>(s.bytes.data()),
                  static_cast<std::streamsize>(s.bytes.size()));
        ManifestEntry e;
        e.path = name.str();
        e.label = s.label;
        e.timestamp = s.timestamp;
        e.size = s.bytes.size();
        e.hash = s.content_hash;
        manifest.entries.push_back(std::move(e));
    }
    std::ofstream mf(dir / "manifest.csv");
    mf << manifest_to_csv(manifest);
}

inline Bytes read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    return Bytes((std::istreambuf_iterator<char>(in)),
                 std::istreambuf_iterator<char>());
}

// Loads the samples a manifest refers to, paths relative to the manifest.
inline std::vector<ByteSample> load_samples(
    const CorpusManifest& manifest, const std::filesystem::path& base_dir) {
    std::vector<ByteSample> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        ByteSample s;
        s.bytes = read_file(base_dir / e.path);
        s.label = e.label;
        s.timestamp = e.timestamp;
        s.origin = ByteSample::Origin::ingested;
        s.rehash();
        if (s.content_hash != e.hash)
            throw DataError("content hash mismatch for " + e.path);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace smoothbin::corpus
