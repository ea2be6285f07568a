#pragma once

// Delimited trial datasets with a `#!` manifest. See docs/formats.md.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "ptsel/errors.hpp"
#include "ptsel/pipeline.hpp"

namespace ptsel::io {

inline constexpr std::string_view kDatasetMagic = "ptsel-dataset 1";

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace detail {

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = s.find(sep, start);
        out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> parse_double(std::string_view s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) return std::nullopt;
    return v;
}

[[noreturn]] inline void schema_error(std::size_t line, const std::string& msg) {
    fail(ErrorCode::schema_mismatch, "line " + std::to_string(line) + ": " + msg);
}

[[noreturn]] inline void value_error(std::size_t line, const std::string& column, const std::string& msg) {
    fail(ErrorCode::bad_value, "line " + std::to_string(line) + ", column '" + column + "': " + msg);
}

inline ResponseKind parse_kind(const std::string& s, std::size_t line) {
    if (s == "complete") return ResponseKind::complete;
    if (s == "right_censored") return ResponseKind::right_censored;
    schema_error(line, "unknown response kind '" + s + "' (expected complete or right_censored)");
}

inline Transform parse_transform(const std::string& s, std::size_t line) {
    if (s == "identity") return Transform::identity;
    if (s == "log") return Transform::log;
    schema_error(line, "unknown transform '" + s + "' (expected identity or log)");
}

}  // namespace detail

inline std::vector<std::string> dataset_columns(const TrialDataset& d) {
    std::vector<std::string> cols{"arm"};
    cols.insert(cols.end(), d.covariate_names.begin(), d.covariate_names.end());
    for (const auto& r : d.responses) {
        cols.push_back(r.name);
        if (r.kind == ResponseKind::right_censored) cols.push_back(r.name + "_event");
    }
    return cols;
}

/// Parses dataset text. Row order within an arm is preserved.
inline TrialDataset parse_dataset(std::istream& in) {
    TrialDataset d;
    std::optional<std::vector<std::size_t>> declared_sizes;
    bool magic = false, have_header = false;
    std::vector<std::string> header;
    std::vector<std::vector<std::vector<double>>> rows_by_arm;  // [k][row][column]
    std::vector<std::vector<std::size_t>> lines_by_arm;
    std::string raw;
    std::size_t line_no = 0;

    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = detail::trim(raw);
        if (line.empty()) continue;
        if (line.rfind("#!", 0) == 0) {
            if (have_header) detail::schema_error(line_no, "manifest lines must precede the header row");
            const auto body = detail::trim(std::string_view(line).substr(2));
            if (!magic) {
                if (body != kDatasetMagic) detail::schema_error(line_no, "expected '#! " + std::string(kDatasetMagic) + "'");
                magic = true;
                continue;
            }
            std::istringstream ss(body);
            std::string key;
            ss >> key;
            std::string rest;
            std::getline(ss, rest);
            rest = detail::trim(rest);
            if (key == "arms") {
                d.arm_names = detail::split(rest, ',');
                for (auto& a : d.arm_names) a = detail::trim(a);
            } else if (key == "covariates") {
                d.covariate_names = detail::split(rest, ',');
                for (auto& c : d.covariate_names) c = detail::trim(c);
            } else if (key == "response") {
                std::istringstream rs(rest);
                std::string name, kind, transform, extra;
                if (!(rs >> name >> kind >> transform) || (rs >> extra))
                    detail::schema_error(line_no, "response line needs: <name> <kind> <transform>");
                d.responses.push_back({name, detail::parse_kind(kind, line_no), detail::parse_transform(transform, line_no)});
            } else if (key == "rows_per_arm") {
                std::vector<std::size_t> sizes;
                for (const auto& part : detail::split(rest, ',')) {
                    const auto v = detail::parse_double(detail::trim(part));
                    if (!v || *v < 1 || *v != static_cast<double>(static_cast<std::size_t>(*v)))
                        detail::schema_error(line_no, "rows_per_arm must list positive integers");
                    sizes.push_back(static_cast<std::size_t>(*v));
                }
                declared_sizes = sizes;
            } else {
                detail::schema_error(line_no, "unknown manifest key '" + key + "'");
            }
            continue;
        }
        if (line[0] == '#') continue;
        if (!magic) detail::schema_error(line_no, "missing '#! " + std::string(kDatasetMagic) + "' manifest");

        if (!have_header) {
            if (d.arm_names.size() < 2) detail::schema_error(line_no, "manifest must declare at least two arms");
            if (d.covariate_names.empty()) detail::schema_error(line_no, "manifest must declare covariates");
            if (d.responses.empty()) detail::schema_error(line_no, "manifest must declare at least one response");
            header = detail::split(line, ',');
            for (auto& h : header) h = detail::trim(h);
            const auto expected = dataset_columns(d);
            if (header != expected) {
                std::string want;
                for (const auto& c : expected) want += (want.empty() ? "" : ",") + c;
                detail::schema_error(line_no, "header does not match manifest; expected " + want);
            }
            have_header = true;
            rows_by_arm.resize(d.arm_names.size());
            lines_by_arm.resize(d.arm_names.size());
            continue;
        }

        const auto cells = detail::split(line, ',');
        if (cells.size() != header.size())
            detail::schema_error(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                              std::to_string(cells.size()));
        const auto arm = detail::parse_double(detail::trim(cells[0]));
        if (!arm || *arm < 1 || *arm > static_cast<double>(d.arm_names.size()) || *arm != static_cast<double>(static_cast<long>(*arm)))
            detail::value_error(line_no, "arm", "arm label must be an integer in 1.." + std::to_string(d.arm_names.size()));
        std::vector<double> values(cells.size() - 1);
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const auto v = detail::parse_double(detail::trim(cells[c]));
            if (!v) detail::value_error(line_no, header[c], "'" + detail::trim(cells[c]) + "' is not a finite number");
            values[c - 1] = *v;
        }
        const auto k = static_cast<std::size_t>(*arm) - 1;
        rows_by_arm[k].push_back(std::move(values));
        lines_by_arm[k].push_back(line_no);
    }
    if (!magic) detail::schema_error(line_no, "empty dataset");
    if (!have_header) detail::schema_error(line_no, "missing header row");

    const auto r = d.covariate_names.size();
    const auto J = d.responses.size();
    for (std::size_t k = 0; k < d.arm_names.size(); ++k) {
        const auto& rows = rows_by_arm[k];
        if (rows.empty())
            fail(ErrorCode::schema_mismatch, "arm " + std::to_string(k + 1) + " ('" + d.arm_names[k] + "') has no rows");
        if (declared_sizes && (declared_sizes->size() != d.arm_names.size() || (*declared_sizes)[k] != rows.size()))
            fail(ErrorCode::schema_mismatch, "arm '" + d.arm_names[k] + "' has " + std::to_string(rows.size()) +
                                                 " rows, manifest declares a different count");
        ArmData a;
        a.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(r));
        a.y.assign(J, std::vector<double>(rows.size()));
        a.event.assign(J, std::vector<char>(rows.size(), 1));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& v = rows[i];
            for (std::size_t c = 0; c < r; ++c) a.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v[c];
            std::size_t col = r;
            for (std::size_t j = 0; j < J; ++j) {
                const auto& spec = d.responses[j];
                const double y = v[col];
                if ((spec.kind == ResponseKind::right_censored || spec.transform == Transform::log) && !(y > 0.0))
                    detail::value_error(lines_by_arm[k][i], spec.name, "value must be positive");
                a.y[j][i] = y;
                ++col;
                if (spec.kind == ResponseKind::right_censored) {
                    const double e = v[col];
                    if (e != 0.0 && e != 1.0) detail::value_error(lines_by_arm[k][i], spec.name + "_event", "event must be 0 or 1");
                    a.event[j][i] = e == 1.0 ? 1 : 0;
                    ++col;
                }
            }
        }
        d.arms.push_back(std::move(a));
    }
    return d;
}

inline TrialDataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::not_found, "cannot open dataset '" + path + "'");
    return parse_dataset(in);
}

inline std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

inline void write_dataset(std::ostream& out, const TrialDataset& d) {
    out << "#! " << kDatasetMagic << '\n';
    out << "#! arms " << join(d.arm_names, ',') << '\n';
    out << "#! covariates " << join(d.covariate_names, ',') << '\n';
    for (const auto& r : d.responses) out << "#! response " << r.name << ' ' << to_string(r.kind) << ' ' << to_string(r.transform) << '\n';
    std::vector<std::string> sizes;
    for (const auto& a : d.arms) sizes.push_back(std::to_string(a.size()));
    out << "#! rows_per_arm " << join(sizes, ',') << '\n';
    out << join(dataset_columns(d), ',') << '\n';
    for (std::size_t k = 0; k < d.arms.size(); ++k) {
        const auto& a = d.arms[k];
        for (std::size_t i = 0; i < a.size(); ++i) {
            out << (k + 1);
            for (Eigen::Index c = 0; c < a.X.cols(); ++c) out << ',' << format_double(a.X(static_cast<Eigen::Index>(i), c));
            for (std::size_t j = 0; j < d.responses.size(); ++j) {
                out << ',' << format_double(a.y[j][i]);
                if (d.responses[j].kind == ResponseKind::right_censored) out << ',' << int(a.event[j][i]);
            }
            out << '\n';
        }
    }
}

inline void save_dataset(const std::string& path, const TrialDataset& d) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::invalid_argument, "cannot write dataset '" + path + "'");
    write_dataset(out, d);
}

}  // namespace ptsel::io
