#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "xmodal/rerank.hpp"

namespace xmodal {

// Ordered key/value evaluation summary.
struct Report {
    std::string kind;
    std::vector<std::pair<std::string, std::string>> entries;

    void add(const std::string& key, double value);
    void add(const std::string& key, std::uint64_t value);
    void add(const std::string& key, const std::string& value);
    const std::string& at(const std::string& key) const;

    // "key=value" lines, header first.
    std::string to_text() const;
    // "METR" magic line, then "key<TAB>value" lines, header first.
    std::string to_metr() const;
};

// Fixed 10 significant digits, identical across runs.
std::string format_number(double value);

void write_metr(const Report& report, const std::filesystem::path& path);
Report read_metr(const std::filesystem::path& path);
Report parse_metr(const std::string& text, const std::string& source);

struct RerankResult {
    std::uint64_t query_id = 0;
    std::vector<RankedCandidate> candidates;  // best first
};

// Per query a "query<TAB>id" line, then one "candidate_id<TAB>score" line per
// selected candidate.
std::string rerank_report_text(const std::vector<RerankResult>& results);

// Writes text to path, throwing FormatError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace xmodal
