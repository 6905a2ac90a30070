#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "diagnostics.hpp"
#include "integrator.hpp"
#include "state.hpp"

namespace sflock {

inline constexpr const char *kToolVersion = "sflock 1.0.0";

class IoError : public std::runtime_error
{
  public:
    IoError(const std::string &path, const std::string &what) : std::runtime_error(path + ": " + what) {}
};

/// Ordered key=value pairs written as leading "# key=value" comment lines.
using Metadata = std::vector<std::pair<std::string, std::string>>;

inline std::string format_double(double value)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

inline std::string metadata_value(const Metadata &meta, std::string_view key, std::string fallback = {})
{
    for (const auto &[k, v] : meta)
        if (k == key)
            return v;
    return fallback;
}

inline constexpr const char *kDiagnosticsHeader =
    "t,min_gap,max_speed,kinetic,dissipation_integral,L_beta,log_functional,vel_diam_inf,pos_diam_inf";

inline constexpr const char *kEventsHeader = "time,kind,i,j,gap,rel_speed,closing_velocity";

namespace detail {

inline std::ofstream open_for_write(const std::string &path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError(path, "cannot open for writing");
    return out;
}

inline void write_metadata(std::ostream &out, const Metadata &meta)
{
    for (const auto &[k, v] : meta)
        out << "# " << k << '=' << v << '\n';
}

inline void finish_write(std::ofstream &out, const std::string &path)
{
    out.flush();
    if (!out)
        throw IoError(path, "write failed");
}

inline std::vector<std::string> split_csv(const std::string &line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

inline double parse_double(const std::string &cell, const std::string &path, std::size_t line_no)
{
    const char *begin = cell.c_str();
    char *end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw IoError(path, "line " + std::to_string(line_no) + ": not a number: '" + cell + "'");
    return value;
}

/// Reads "# key=value" lines, the header line, then data rows.
struct CsvContent
{
    Metadata meta;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
};

inline CsvContent read_csv(const std::string &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError(path, "cannot open for reading");
    CsvContent out;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line))
    {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (line[0] == '#')
        {
            const std::size_t eq = line.find('=');
            if (eq != std::string::npos)
            {
                std::string key = line.substr(1, eq - 1);
                while (!key.empty() && key.front() == ' ')
                    key.erase(key.begin());
                out.meta.emplace_back(key, line.substr(eq + 1));
            }
            continue;
        }
        if (!have_header)
        {
            out.header = split_csv(line);
            have_header = true;
            continue;
        }
        out.rows.push_back(split_csv(line));
        out.line_numbers.push_back(line_no);
        if (out.rows.back().size() != out.header.size())
            throw IoError(path, "line " + std::to_string(line_no) + ": expected " +
                                    std::to_string(out.header.size()) + " fields, got " +
                                    std::to_string(out.rows.back().size()));
    }
    if (!have_header)
        throw IoError(path, "missing header line");
    return out;
}

} // namespace detail

/// CSV with the fixed diagnostics header and 17-significant-digit values.
inline void write_diagnostics(const std::string &path, const Metadata &meta,
                              const std::vector<DiagnosticsRecord> &records)
{
    if (records.empty())
        throw IoError(path, "refusing to write an empty diagnostics stream");
    std::ofstream out = detail::open_for_write(path);
    detail::write_metadata(out, meta);
    out << kDiagnosticsHeader << '\n';
    for (const DiagnosticsRecord &r : records)
    {
        out << format_double(r.t) << ',' << format_double(r.min_gap) << ',' << format_double(r.max_speed) << ','
            << format_double(r.kinetic) << ',' << format_double(r.dissipation_integral) << ','
            << format_double(r.L_beta) << ',' << format_double(r.log_functional) << ','
            << format_double(r.vel_diam_inf) << ',' << format_double(r.pos_diam_inf) << '\n';
    }
    detail::finish_write(out, path);
}

struct DiagnosticsFile
{
    Metadata meta;
    /// v_center and dissipation_rate are not persisted and read back empty/zero.
    std::vector<DiagnosticsRecord> records;
};

inline DiagnosticsFile read_diagnostics(const std::string &path)
{
    detail::CsvContent csv = detail::read_csv(path);
    if (detail::split_csv(kDiagnosticsHeader) != csv.header)
        throw IoError(path, "unexpected diagnostics header");
    DiagnosticsFile out;
    out.meta = std::move(csv.meta);
    for (std::size_t r = 0; r < csv.rows.size(); ++r)
    {
        const auto &row = csv.rows[r];
        auto num = [&](std::size_t c) { return detail::parse_double(row[c], path, csv.line_numbers[r]); };
        DiagnosticsRecord rec;
        rec.t = num(0);
        rec.min_gap = num(1);
        rec.max_speed = num(2);
        rec.kinetic = num(3);
        rec.dissipation_integral = num(4);
        rec.L_beta = num(5);
        rec.log_functional = num(6);
        rec.vel_diam_inf = num(7);
        rec.pos_diam_inf = num(8);
        out.records.push_back(std::move(rec));
    }
    return out;
}

/// Row-oriented trajectory: t, then x flattened row-major, then v flattened.
inline void write_trajectory(const std::string &path, const Metadata &meta, const std::vector<ParticleState> &states)
{
    if (states.empty())
        throw IoError(path, "refusing to write an empty trajectory");
    const std::size_t n = states.front().n;
    const std::size_t d = states.front().d;
    std::ofstream out = detail::open_for_write(path);
    detail::write_metadata(out, meta);
    out << 't';
    for (const char block : {'x', 'v'})
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a < d; ++a)
                out << ',' << block << i << '_' << a;
    out << '\n';
    for (const ParticleState &st : states)
    {
        if (st.n != n || st.d != d)
            throw IoError(path, "trajectory states change shape");
        out << format_double(st.t);
        for (double e : st.x)
            out << ',' << format_double(e);
        for (double e : st.v)
            out << ',' << format_double(e);
        out << '\n';
    }
    detail::finish_write(out, path);
}

struct TrajectoryFile
{
    Metadata meta;
    std::vector<ParticleState> states;
};

inline TrajectoryFile read_trajectory(const std::string &path)
{
    detail::CsvContent csv = detail::read_csv(path);
    const std::vector<std::string> &h = csv.header;
    if (h.empty() || h[0] != "t" || h.size() < 5 || (h.size() - 1) % 2 != 0)
        throw IoError(path, "header is not a trajectory header (t, x.., v..)");
    const std::size_t nd = (h.size() - 1) / 2;
    // d is one more than the largest component index among the x columns
    std::size_t d = 0;
    for (std::size_t c = 1; c <= nd; ++c)
    {
        const std::string &name = h[c];
        const std::size_t us = name.find('_');
        if (name.empty() || name[0] != 'x' || us == std::string::npos)
            throw IoError(path, "bad position column name '" + name + "'");
        d = std::max<std::size_t>(d, std::stoul(name.substr(us + 1)) + 1);
        if (h[c + nd] != "v" + name.substr(1))
            throw IoError(path, "velocity column '" + h[c + nd] + "' does not match '" + name + "'");
    }
    if (d == 0 || nd % d != 0)
        throw IoError(path, "cannot infer particle dimension from header");
    TrajectoryFile out;
    out.meta = std::move(csv.meta);
    for (std::size_t r = 0; r < csv.rows.size(); ++r)
    {
        const auto &row = csv.rows[r];
        auto num = [&](std::size_t c) { return detail::parse_double(row[c], path, csv.line_numbers[r]); };
        ParticleState st(nd / d, d, num(0));
        for (std::size_t e = 0; e < nd; ++e)
        {
            st.x[e] = num(1 + e);
            st.v[e] = num(1 + nd + e);
        }
        out.states.push_back(std::move(st));
    }
    return out;
}

inline void write_events(const std::string &path, const Metadata &meta, const std::vector<EventRecord> &events)
{
    std::ofstream out = detail::open_for_write(path);
    detail::write_metadata(out, meta);
    out << kEventsHeader << '\n';
    for (const EventRecord &ev : events)
        out << format_double(ev.time) << ',' << to_string(ev.kind) << ',' << ev.i << ',' << ev.j << ','
            << format_double(ev.gap) << ',' << format_double(ev.rel_speed) << ','
            << format_double(ev.closing_velocity) << '\n';
    detail::finish_write(out, path);
}

inline std::vector<EventRecord> read_events(const std::string &path)
{
    detail::CsvContent csv = detail::read_csv(path);
    if (detail::split_csv(kEventsHeader) != csv.header)
        throw IoError(path, "unexpected events header");
    std::vector<EventRecord> out;
    for (std::size_t r = 0; r < csv.rows.size(); ++r)
    {
        const auto &row = csv.rows[r];
        auto num = [&](std::size_t c) { return detail::parse_double(row[c], path, csv.line_numbers[r]); };
        const auto kind = event_kind_from_string(row[1]);
        if (!kind)
            throw IoError(path, "line " + std::to_string(csv.line_numbers[r]) + ": unknown event kind '" + row[1] + "'");
        out.push_back(EventRecord{num(0), *kind, static_cast<std::size_t>(num(2)), static_cast<std::size_t>(num(3)),
                                  num(4), num(5), num(6)});
    }
    return out;
}

} // namespace sflock
