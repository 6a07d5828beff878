#pragma once

// CSV output: '.' decimal point, '\n' line endings, 17 significant digits.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>

#include "cefl/coordinator.hpp"

namespace cefl {

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    if (res.ec != std::errc{}) throw std::runtime_error("format_double: to_chars failed");
    return std::string(buf, res.ptr);
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& t) {
    os << "round,sq_error,kept_byz_count\n";
    for (const auto& r : t.records) {
        os << r.round << ',' << format_double(r.sq_error) << ',';
        if (r.kept_byz_count)
            os << *r.kept_byz_count;
        else
            os << "NA";
        os << '\n';
    }
}

inline void write_summary_csv(std::ostream& os, const std::vector<RoundSummary>& summary) {
    os << "round,mean_sq_error,var_sq_error,runs\n";
    for (const auto& s : summary)
        os << s.round << ',' << format_double(s.mean_sq_error) << ',' << format_double(s.var_sq_error) << ','
           << s.runs << '\n';
}

/// Writes through a string so the bytes on disk do not depend on stream locale.
template <class Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
    std::ostringstream os;
    os.imbue(std::locale::classic());
    writer(os);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const std::string bytes = os.str();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace cefl
