#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smoothbin/bytes.hpp"

namespace smoothbin::pe {

inline constexpr std::size_t kMinPeSize = 97;
inline constexpr std::uint32_t kDefaultSizeCap = 2'000'000;

inline constexpr std::uint32_t kScnCode = 0x00000020;
inline constexpr std::uint32_t kScnInitializedData = 0x00000040;
inline constexpr std::uint32_t kScnMemExecute = 0x20000000;
inline constexpr std::uint32_t kScnMemRead = 0x40000000;
inline constexpr std::uint32_t kScnMemWrite = 0x80000000;

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t offset)
        : DataError(what + " (at byte offset " + std::to_string(offset) + ")"),
          offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class SerializeError : public DataError {
    using DataError::DataError;
};
class SizeCapError : public DataError {
    using DataError::DataError;
};

namespace detail {

inline std::uint16_t rd16(const Bytes& b, std::size_t off) {
    return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}
inline std::uint32_t rd32(const Bytes& b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) |
           (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}
inline void wr16(Bytes& b, std::size_t off, std::uint16_t v) {
    b[off] = static_cast<std::uint8_t>(v);
    b[off + 1] = static_cast<std::uint8_t>(v >> 8);
}
inline void wr32(Bytes& b, std::size_t off, std::uint32_t v) {
    b[off] = static_cast<std::uint8_t>(v);
    b[off + 1] = static_cast<std::uint8_t>(v >> 8);
    b[off + 2] = static_cast<std::uint8_t>(v >> 16);
    b[off + 3] = static_cast<std::uint8_t>(v >> 24);
}

inline std::uint32_t align_up(std::uint64_t v, std::uint32_t a) {
    if (a == 0) return static_cast<std::uint32_t>(v);
    return static_cast<std::uint32_t>((v + a - 1) / a * a);
}

}  // namespace detail

struct SectionRecord {
    std::array<std::uint8_t, 8> name{};
    std::uint32_t virtual_size = 0;
    std::uint32_t virtual_address = 0;
    std::uint32_t raw_size = 0;
    std::uint32_t raw_offset = 0;
    std::array<std::uint8_t, 12> reserved{};  // reloc/linenumber fields, verbatim
    std::uint32_t characteristics = 0;
    Bytes data;      // exactly raw_size bytes
    Bytes trailing;  // filler between this section and the next region

    std::string name_str() const {
        std::string s;
        for (std::uint8_t c : name) {
            if (c == 0) break;
            s.push_back(static_cast<char>(c));
        }
        return s;
    }
    bool executable() const {
        return (characteristics & (kScnMemExecute | kScnCode)) != 0;
    }
};

// Structured decomposition of a PE32 file. `head` holds every byte before the
// first section's raw data (DOS stub, headers, padding, and any shift gap);
// parsed fields are patched back into it on serialize, so an unmodified image
// reproduces its input byte-for-byte.
struct PeImage {
    Bytes head;
    std::uint32_t e_lfanew = 0;
    std::uint16_t machine = 0;
    std::uint16_t coff_characteristics = 0;
    std::uint16_t opt_size = 0;
    std::uint32_t entry_point = 0;
    std::uint32_t section_alignment = 0;
    std::uint32_t file_alignment = 0;
    std::uint32_t size_of_image = 0;
    std::uint32_t size_of_headers = 0;
    std::vector<SectionRecord> sections;
    Bytes overlay;

    std::size_t coff_offset() const { return e_lfanew + 4; }
    std::size_t opt_offset() const { return e_lfanew + 24; }
    std::size_t table_offset() const { return opt_offset() + opt_size; }

    std::size_t total_size() const {
        std::size_t n = head.size() + overlay.size();
        for (const auto& s : sections) n += s.data.size() + s.trailing.size();
        return n;
    }
};

inline PeImage parse(const Bytes& file) {
    using namespace detail;
    if (file.size() < kMinPeSize)
        throw ParseError("file smaller than minimal PE size", file.size());
    if (file[0] != 'M' || file[1] != 'Z') throw ParseError("bad MZ magic", 0);

    PeImage img;
    img.e_lfanew = rd32(file, 0x3c);
    if (img.e_lfanew + 24 > file.size())
        throw ParseError("e_lfanew points past EOF", img.e_lfanew);
    if (std::memcmp(file.data() + img.e_lfanew, "PE\0\0", 4) != 0)
        throw ParseError("bad PE signature", img.e_lfanew);

    const std::size_t coff = img.e_lfanew + 4;
    img.machine = rd16(file, coff);
    const std::uint16_t num_sections = rd16(file, coff + 2);
    img.opt_size = rd16(file, coff + 16);
    img.coff_characteristics = rd16(file, coff + 18);

    const std::size_t opt = coff + 20;
    if (opt + img.opt_size > file.size())
        throw ParseError("optional header truncated", opt);
    if (img.opt_size < 64) throw ParseError("optional header too small", opt);
    const std::uint16_t magic = rd16(file, opt);
    if (magic == 0x20b)
        throw ParseError("PE32+ is not supported, only PE32", opt);
    if (magic != 0x10b) throw ParseError("bad optional header magic", opt);
    img.entry_point = rd32(file, opt + 16);
    img.section_alignment = rd32(file, opt + 32);
    img.file_alignment = rd32(file, opt + 36);
    img.size_of_image = rd32(file, opt + 56);
    img.size_of_headers = rd32(file, opt + 60);
    if (img.file_alignment == 0)
        throw ParseError("zero file alignment", opt + 36);

    const std::size_t table = opt + img.opt_size;
    if (table + 40ull * num_sections > file.size())
        throw ParseError("section table truncated", table);

    img.sections.resize(num_sections);
    for (std::size_t i = 0; i < num_sections; ++i) {
        const std::size_t e = table + 40 * i;
        auto& s = img.sections[i];
        std::memcpy(s.name.data(), file.data() + e, 8);
        s.virtual_size = rd32(file, e + 8);
        s.virtual_address = rd32(file, e + 12);
        s.raw_size = rd32(file, e + 16);
        s.raw_offset = rd32(file, e + 20);
        std::memcpy(s.reserved.data(), file.data() + e + 24, 12);
        s.characteristics = rd32(file, e + 36);
        if (s.raw_size > 0) {
            if (s.raw_offset % img.file_alignment != 0)
                throw ParseError("section raw offset not file-aligned", e + 20);
            if (static_cast<std::uint64_t>(s.raw_offset) + s.raw_size > file.size())
                throw ParseError("section raw data past EOF", e + 20);
        }
    }

    // Layout checks: raw-bearing sections must appear in ascending,
    // non-overlapping file order; virtual ranges ascending and disjoint.
    std::uint64_t prev_raw_end = 0;
    std::size_t first_raw = file.size();
    bool any_raw = false;
    for (std::size_t i = 0; i < img.sections.size(); ++i) {
        const auto& s = img.sections[i];
        if (s.raw_size == 0) continue;
        if (s.raw_offset < prev_raw_end)
            throw ParseError("overlapping or out-of-order section raw data",
                             table + 40 * i + 20);
        if (!any_raw) first_raw = s.raw_offset;
        prev_raw_end = static_cast<std::uint64_t>(s.raw_offset) + s.raw_size;
        any_raw = true;
    }
    std::uint64_t prev_virt_end = 0;
    for (std::size_t i = 0; i < img.sections.size(); ++i) {
        const auto& s = img.sections[i];
        if (s.virtual_address < prev_virt_end)
            throw ParseError("overlapping section virtual ranges",
                             table + 40 * i + 12);
        prev_virt_end = static_cast<std::uint64_t>(s.virtual_address) +
                        std::max(s.virtual_size, 1u);
    }
    if (table + 40ull * num_sections > first_raw)
        throw ParseError("section table overlaps section data", table);

    if (!any_raw) first_raw = std::min<std::size_t>(img.size_of_headers, file.size());
    img.head.assign(file.begin(),
                    file.begin() + static_cast<std::ptrdiff_t>(first_raw));

    // Slice raw data and inter-section filler.
    std::size_t cursor = first_raw;
    for (auto& s : img.sections) {
        if (s.raw_size == 0) continue;
        s.data.assign(file.begin() + s.raw_offset,
                      file.begin() + s.raw_offset + s.raw_size);
        cursor = s.raw_offset + s.raw_size;
    }
    // Fillers: bytes between one section's raw end and the next raw offset.
    const SectionRecord* prev = nullptr;
    for (auto& s : img.sections) {
        if (s.raw_size == 0) continue;
        if (prev) {
            auto* p = const_cast<SectionRecord*>(prev);
            p->trailing.assign(
                file.begin() + p->raw_offset + p->raw_size,
                file.begin() + s.raw_offset);
        }
        prev = &s;
    }
    img.overlay.assign(file.begin() + static_cast<std::ptrdiff_t>(cursor),
                       file.end());

    // Entry point either 0 (tolerated; validate() flags it) or inside a
    // section's virtual range.
    if (img.entry_point != 0) {
        bool inside = false;
        for (const auto& s : img.sections) {
            const std::uint64_t end = static_cast<std::uint64_t>(s.virtual_address) +
                                      std::max(s.virtual_size, s.raw_size);
            if (img.entry_point >= s.virtual_address && img.entry_point < end)
                inside = true;
        }
        if (!inside)
            throw ParseError("entry point outside all sections", opt + 16);
    }
    return img;
}

inline Bytes serialize(const PeImage& img) {
    using namespace detail;
    Bytes out = img.head;
    if (out.size() < img.table_offset() + 40 * img.sections.size())
        throw SerializeError("head region too small for section table");

    wr16(out, img.coff_offset(), img.machine);
    wr16(out, img.coff_offset() + 2,
         static_cast<std::uint16_t>(img.sections.size()));
    wr16(out, img.coff_offset() + 16, img.opt_size);
    wr16(out, img.coff_offset() + 18, img.coff_characteristics);
    const std::size_t opt = img.opt_offset();
    wr32(out, opt + 16, img.entry_point);
    wr32(out, opt + 32, img.section_alignment);
    wr32(out, opt + 36, img.file_alignment);
    wr32(out, opt + 56, img.size_of_image);
    wr32(out, opt + 60, img.size_of_headers);

    std::size_t cursor = out.size();
    for (std::size_t i = 0; i < img.sections.size(); ++i) {
        const auto& s = img.sections[i];
        const std::size_t e = img.table_offset() + 40 * i;
        std::memcpy(out.data() + e, s.name.data(), 8);
        wr32(out, e + 8, s.virtual_size);
        wr32(out, e + 12, s.virtual_address);
        wr32(out, e + 16, s.raw_size);
        wr32(out, e + 20, s.raw_offset);
        std::memcpy(out.data() + e + 24, s.reserved.data(), 12);
        wr32(out, e + 36, s.characteristics);

        if (s.data.size() != s.raw_size)
            throw SerializeError("section data length differs from raw_size");
        if (s.raw_size > 0) {
            if (s.raw_offset % img.file_alignment != 0)
                throw SerializeError("section raw offset not file-aligned");
            if (s.raw_offset != cursor)
                throw SerializeError("section raw offset inconsistent with layout");
            cursor += s.raw_size + s.trailing.size();
        }
    }
    for (const auto& s : img.sections) {
        out.insert(out.end(), s.data.begin(), s.data.end());
        out.insert(out.end(), s.trailing.begin(), s.trailing.end());
    }
    out.insert(out.end(), img.overlay.begin(), img.overlay.end());
    return out;
}

inline void check_cap(const PeImage& img, std::size_t extra, std::size_t cap) {
    if (img.total_size() + extra > cap)
        throw SizeCapError("rewrite would exceed size cap of " +
                           std::to_string(cap) + " bytes");
}

inline PeImage append_overlay(PeImage img, const Bytes& payload,
                              std::size_t cap = kDefaultSizeCap) {
    check_cap(img, payload.size(), cap);
    img.overlay.insert(img.overlay.end(), payload.begin(), payload.end());
    return img;
}

inline PeImage add_section(PeImage img, const std::string& name,
                           const Bytes& payload, std::uint32_t characteristics,
                           std::size_t cap = kDefaultSizeCap) {
    using namespace detail;
    const std::uint32_t fa = img.file_alignment;
    const std::uint32_t raw_size =
        payload.empty() ? fa : align_up(payload.size(), fa);

    std::size_t grow = 0;
    const bool need_grow =
        img.table_offset() + 40 * (img.sections.size() + 1) > img.size_of_headers;
    if (need_grow) grow = fa;
    check_cap(img, raw_size + grow, cap);

    if (need_grow) {
        // Grow the header area by one alignment unit; the zero padding goes
        // right after the current headers (before any shift gap).
        img.head.insert(img.head.begin() + img.size_of_headers, fa, 0);
        img.size_of_headers += fa;
        for (auto& s : img.sections)
            if (s.raw_size > 0) s.raw_offset += fa;
    }

    // Align the last section's filler so the new section lands file-aligned.
    std::size_t end = img.head.size();
    SectionRecord* last_raw = nullptr;
    for (auto& s : img.sections)
        if (s.raw_size > 0) {
            end = s.raw_offset + s.raw_size + s.trailing.size();
            last_raw = &s;
        }
    if (end % fa != 0) {
        const std::size_t pad = align_up(end, fa) - end;
        if (last_raw)
            last_raw->trailing.insert(last_raw->trailing.end(), pad, 0);
        else
            img.head.insert(img.head.end(), pad, 0);
        end += pad;
    }

    SectionRecord s;
    for (std::size_t i = 0; i < 8 && i < name.size(); ++i)
        s.name[i] = static_cast<std::uint8_t>(name[i]);
    s.raw_size = raw_size;
    s.raw_offset = static_cast<std::uint32_t>(end);
    s.data = payload;
    s.data.resize(raw_size, 0);
    s.virtual_size = static_cast<std::uint32_t>(
        payload.empty() ? raw_size : payload.size());
    s.characteristics = characteristics;
    std::uint64_t next_va = img.section_alignment;
    for (const auto& sec : img.sections)
        next_va = std::max<std::uint64_t>(
            next_va, sec.virtual_address + std::max(sec.virtual_size, 1u));
    s.virtual_address = align_up(next_va, img.section_alignment);
    img.size_of_image =
        align_up(static_cast<std::uint64_t>(s.virtual_address) + s.virtual_size,
                 img.section_alignment);
    img.sections.push_back(std::move(s));
    return img;
}

struct ShiftResult {
    PeImage image;
    std::size_t gap_offset = 0;
    std::size_t gap_size = 0;
};

inline ShiftResult shift_sections(PeImage img, std::uint32_t requested_gap,
                                  std::size_t cap = kDefaultSizeCap) {
    using namespace detail;
    if (requested_gap == 0) {
        const std::size_t off = img.size_of_headers;
        return {std::move(img), off, 0};
    }
    const std::uint32_t gap = align_up(requested_gap, img.file_alignment);
    check_cap(img, gap, cap);
    const std::size_t gap_offset = img.head.size();
    img.head.insert(img.head.end(), gap, 0);
    for (auto& s : img.sections)
        if (s.raw_size > 0) s.raw_offset += gap;
    return {std::move(img), gap_offset, gap};
}

struct CaveResult {
    PeImage image;
    std::vector<std::pair<std::size_t, std::size_t>> caves;  // (offset, size)
};

inline CaveResult extend_code_caves(PeImage img,
                                    const std::vector<std::uint32_t>& cave_sizes,
                                    std::size_t cap = kDefaultSizeCap) {
    using namespace detail;
    if (cave_sizes.size() > img.sections.size())
        throw ConfigError("more cave sizes than sections");
    std::size_t total = 0;
    std::vector<std::uint32_t> rounded(cave_sizes.size(), 0);
    for (std::size_t i = 0; i < cave_sizes.size(); ++i) {
        rounded[i] = align_up(cave_sizes[i], img.file_alignment);
        if (cave_sizes[i] == 0) rounded[i] = 0;
        total += rounded[i];
    }
    check_cap(img, total, cap);

    CaveResult res;
    std::uint32_t shift = 0;
    for (std::size_t i = 0; i < img.sections.size(); ++i) {
        auto& s = img.sections[i];
        if (s.raw_size > 0) s.raw_offset += shift;
        const std::uint32_t cave = i < rounded.size() ? rounded[i] : 0;
        if (cave > 0) {
            if (s.raw_size == 0)
                throw ConfigError("cave requested after a section with no raw data");
            s.trailing.insert(s.trailing.begin(), cave, 0);
            res.caves.emplace_back(s.raw_offset + s.raw_size, cave);
            shift += cave;
        }
    }
    res.image = std::move(img);
    return res;
}

// Writes payload bytes at an absolute file offset. Only attacker-writable
// regions are permitted: the area between size_of_headers and the first
// section (the shift gap), inter-section filler (code caves), and the
// overlay. Section data and headers are rejected.
inline void write_region(PeImage& img, std::size_t offset,
                         std::span<const std::uint8_t> payload) {
    if (payload.empty()) return;
    const std::size_t end = offset + payload.size();
    if (offset >= img.size_of_headers && end <= img.head.size()) {
        std::copy(payload.begin(), payload.end(), img.head.begin() + offset);
        return;
    }
    for (auto& s : img.sections) {
        if (s.raw_size == 0 || s.trailing.empty()) continue;
        const std::size_t t0 = s.raw_offset + s.raw_size;
        if (offset >= t0 && end <= t0 + s.trailing.size()) {
            std::copy(payload.begin(), payload.end(),
                      s.trailing.begin() + (offset - t0));
            return;
        }
    }
    const std::size_t ov0 = img.total_size() - img.overlay.size();
    if (offset >= ov0 && end <= img.total_size()) {
        std::copy(payload.begin(), payload.end(),
                  img.overlay.begin() + (offset - ov0));
        return;
    }
    throw DataError("write_region outside attacker-writable regions");
}

struct ValidityCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ValidityReport {
    std::vector<ValidityCheck> checks;
    bool all_passed() const {
        return std::all_of(checks.begin(), checks.end(),
                           [](const auto& c) { return c.passed; });
    }
};

using SectionHashMap = std::map<std::string, Hash256>;

inline SectionHashMap section_hashes(const PeImage& img) {
    SectionHashMap m;
    for (const auto& s : img.sections)
        if (s.raw_size > 0) m[s.name_str()] = sha256(s.data);
    return m;
}

inline ValidityReport validate(const PeImage& img,
                               const SectionHashMap* baseline = nullptr) {
    ValidityReport rep;
    auto add = [&](std::string name, bool ok, std::string detail = "") {
        rep.checks.push_back({std::move(name), ok, std::move(detail)});
    };

    try {
        PeImage reparsed = parse(serialize(img));
        add("parseable", true);
        add("roundtrip", serialize(reparsed) == serialize(img));
    } catch (const std::exception& e) {
        add("parseable", false, e.what());
        add("roundtrip", false);
    }

    bool aligned = true;
    for (const auto& s : img.sections)
        if (s.raw_size > 0 && s.raw_offset % img.file_alignment != 0)
            aligned = false;
    add("alignment", aligned);

    bool ordered = true;
    std::uint64_t prev_raw = 0, prev_virt = 0;
    for (const auto& s : img.sections) {
        if (s.raw_size > 0) {
            if (s.raw_offset < prev_raw) ordered = false;
            prev_raw = static_cast<std::uint64_t>(s.raw_offset) + s.raw_size;
        }
        if (s.virtual_address < prev_virt) ordered = false;
        prev_virt = static_cast<std::uint64_t>(s.virtual_address) +
                    std::max(s.virtual_size, 1u);
    }
    add("non_overlap", ordered);

    bool ep_ok = false;
    std::string ep_detail;
    if (img.entry_point == 0) {
        ep_detail = "entry point is zero";
    } else {
        for (const auto& s : img.sections) {
            const std::uint64_t end =
                static_cast<std::uint64_t>(s.virtual_address) +
                std::max(s.virtual_size, s.raw_size);
            if (img.entry_point >= s.virtual_address && img.entry_point < end &&
                s.executable())
                ep_ok = true;
        }
        if (!ep_ok) ep_detail = "entry point not in an executable section";
    }
    add("entry_point", ep_ok, ep_detail);

    if (baseline) {
        bool match = true;
        std::string detail;
        auto current = section_hashes(img);
        for (const auto& [name, hash] : *baseline) {
            auto it = current.find(name);
            if (it == current.end() || it->second != hash) {
                match = false;
                detail += "section content changed: " + name + "; ";
            }
        }
        add("baseline_hashes", match, detail);
    }
    return rep;
}

}  // namespace smoothbin::pe
