#include "xmodal/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "xmodal/error.hpp"

namespace xmodal {

namespace {

constexpr const char* kMagic = "METR";

std::vector<std::pair<std::string, std::string>> header(const Report& report) {
    return {{"report", report.kind}, {"f1_average", "micro"}};
}

}  // namespace

std::string format_number(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", value);
    return buf;
}

void Report::add(const std::string& key, double value) { entries.emplace_back(key, format_number(value)); }

void Report::add(const std::string& key, std::uint64_t value) { entries.emplace_back(key, std::to_string(value)); }

void Report::add(const std::string& key, const std::string& value) { entries.emplace_back(key, value); }

const std::string& Report::at(const std::string& key) const {
    for (const auto& [k, v] : entries) {
        if (k == key) return v;
    }
    throw ValueError("report has no key '" + key + "'");
}

std::string Report::to_text() const {
    std::string out;
    for (const auto& list : {header(*this), entries}) {
        for (const auto& [k, v] : list) out += k + "=" + v + "\n";
    }
    return out;
}

std::string Report::to_metr() const {
    std::string out = std::string(kMagic) + "\n";
    for (const auto& list : {header(*this), entries}) {
        for (const auto& [k, v] : list) out += k + "\t" + v + "\n";
    }
    return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError(path.string() + ": cannot open for writing");
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!os) throw FormatError(path.string() + ": write failed");
}

void write_metr(const Report& report, const std::filesystem::path& path) { write_text_file(path, report.to_metr()); }

Report parse_metr(const std::string& text, const std::string& source) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kMagic) throw FormatError(source + ": line 1: missing METR magic");
    Report report;
    std::size_t lineno = 1;
    bool saw_kind = false;
    while (std::getline(is, line)) {
        ++lineno;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw FormatError(source + ": line " + std::to_string(lineno) + ": expected key<TAB>value");
        }
        std::string key = line.substr(0, tab), value = line.substr(tab + 1);
        if (key == "report" && !saw_kind) {
            report.kind = value;
            saw_kind = true;
        } else if (key != "f1_average") {
            report.entries.emplace_back(std::move(key), std::move(value));
        }
    }
    if (!saw_kind) throw FormatError(source + ": missing report header");
    return report;
}

Report read_metr(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path.string() + ": cannot open for reading");
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_metr(ss.str(), path.string());
}

std::string rerank_report_text(const std::vector<RerankResult>& results) {
    std::string out;
    for (const auto& r : results) {
        out += "query\t" + std::to_string(r.query_id) + "\n";
        for (const auto& c : r.candidates) out += std::to_string(c.id) + "\t" + format_number(c.score) + "\n";
    }
    return out;
}

}  // namespace xmodal
