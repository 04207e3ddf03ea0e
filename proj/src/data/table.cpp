#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fgn/data.hpp"

namespace fgn {

std::size_t RecordingTable::index_of(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) {
        throw DataError("no channel named '" + name + "'");
    }
    return static_cast<std::size_t>(it - names.begin());
}

double RecordingTable::sample_rate_hz() const {
    if (rows() < 2) {
        throw DataError("sample rate needs at least two rows, table has " + std::to_string(rows()));
    }
    return 1000.0 * static_cast<double>(rows() - 1) / (time_ms.back() - time_ms.front());
}

void RecordingTable::add_column(std::string name, std::vector<double> values) {
    if (values.size() != rows()) {
        throw DataError("column '" + name + "' has " + std::to_string(values.size()) + " rows, table has " +
                        std::to_string(rows()));
    }
    if (std::find(names.begin(), names.end(), name) != names.end()) {
        throw DataError("duplicate channel '" + name + "'");
    }
    names.push_back(std::move(name));
    columns.push_back(std::move(values));
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t begin = 0;
    while (true) {
        const std::size_t comma = line.find(',', begin);
        fields.push_back(line.substr(begin, comma == std::string::npos ? std::string::npos : comma - begin));
        if (comma == std::string::npos) {
            break;
        }
        begin = comma + 1;
    }
    for (auto& f : fields) {
        const auto first = f.find_first_not_of(" \t");
        const auto last = f.find_last_not_of(" \t\r");
        f = first == std::string::npos ? std::string() : f.substr(first, last - first + 1);
    }
    return fields;
}

std::string format_number(double value) {
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

}  // namespace

RecordingTable parse_csv(std::istream& in, const CsvSchema& schema, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(source + ": empty file, expected a header row");
    }
    const std::vector<std::string> header = split_fields(line);
    const auto time_it = std::find(header.begin(), header.end(), schema.time_column);
    if (time_it == header.end()) {
        throw DataError(source + ": missing time column '" + schema.time_column + "'");
    }
    for (const auto& name : schema.required) {
        if (std::find(header.begin(), header.end(), name) == header.end()) {
            throw DataError(source + ": missing column '" + name + "'");
        }
    }
    const std::size_t time_index = static_cast<std::size_t>(time_it - header.begin());

    RecordingTable table;
    std::vector<std::size_t> channel_of(header.size());
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i == time_index) {
            continue;
        }
        if (header[i].empty()) {
            throw DataError(source + ": empty column name at position " + std::to_string(i + 1));
        }
        if (std::find(table.names.begin(), table.names.end(), header[i]) != table.names.end()) {
            throw DataError(source + ": duplicate column '" + header[i] + "'");
        }
        channel_of[i] = table.names.size();
        table.names.push_back(header[i]);
    }
    table.columns.resize(table.names.size());

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        ++row;
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw DataError(source + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            double value = 0.0;
            const char* begin = fields[i].data();
            const char* end = begin + fields[i].size();
            const auto result = std::from_chars(begin, end, value);
            if (fields[i].empty() || result.ec != std::errc() || result.ptr != end || !std::isfinite(value)) {
                throw DataError(source + ": row " + std::to_string(row) + ", column '" + header[i] +
                                "': not a number: '" + fields[i] + "'");
            }
            if (i == time_index) {
                if (!table.time_ms.empty() && value <= table.time_ms.back()) {
                    throw DataError(source + ": row " + std::to_string(row) + ": time " + fields[i] +
                                    " is not after the previous row's " + format_number(table.time_ms.back()));
                }
                table.time_ms.push_back(value);
            } else {
                table.columns[channel_of[i]].push_back(value);
            }
        }
    }
    return table;
}

RecordingTable load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "'");
    }
    return parse_csv(in, schema, path.string());
}

void write_csv(std::ostream& out, const RecordingTable& table, const std::string& time_column) {
    out << time_column;
    for (const auto& name : table.names) {
        out << ',' << name;
    }
    out << '\n';
    for (std::size_t r = 0; r < table.rows(); ++r) {
        out << format_number(table.time_ms[r]);
        for (const auto& column : table.columns) {
            out << ',' << format_number(column[r]);
        }
        out << '\n';
    }
}

void write_csv(const std::filesystem::path& path, const RecordingTable& table, const std::string& time_column) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write '" + path.string() + "'");
    }
    write_csv(out, table, time_column);
    if (!out) {
        throw DataError("write failed for '" + path.string() + "'");
    }
}

RecordingTable resample_linear(const RecordingTable& table, double target_rate_hz) {
    if (table.rows() == 0) {
        throw DataError("cannot resample an empty table");
    }
    if (!(target_rate_hz > 0.0)) {
        throw ConfigError("target rate must be positive");
    }
    if (table.rows() == 1) {
        return table;
    }
    const double source_rate = table.sample_rate_hz();
    if (target_rate_hz < source_rate * (1.0 - 1e-9)) {
        throw ConfigError("resampling only upsamples: target " + format_number(target_rate_hz) + " Hz < source " +
                          format_number(source_rate) + " Hz");
    }
    const double start = table.time_ms.front();
    const double span = table.time_ms.back() - start;
    const double step = 1000.0 / target_rate_hz;
    const auto count = static_cast<std::size_t>(std::floor(span / step + 1e-9)) + 1;

    RecordingTable out;
    out.names = table.names;
    out.columns.assign(table.channel_count(), std::vector<double>(count));
    out.time_ms.resize(count);
    std::size_t segment = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const double t = std::min(start + static_cast<double>(k) * step, table.time_ms.back());
        out.time_ms[k] = start + static_cast<double>(k) * step;
        while (segment + 2 < table.rows() && table.time_ms[segment + 1] <= t) {
            ++segment;
        }
        const double t0 = table.time_ms[segment];
        const double t1 = table.time_ms[segment + 1];
        const double w = std::clamp((t - t0) / (t1 - t0), 0.0, 1.0);
        for (std::size_t c = 0; c < table.channel_count(); ++c) {
            const double v0 = table.columns[c][segment];
            const double v1 = table.columns[c][segment + 1];
            out.columns[c][k] = v0 + w * (v1 - v0);
        }
    }
    return out;
}

RecordingTable align_tables(const std::vector<RecordingTable>& tables, double rate_hz) {
    if (tables.empty()) {
        throw DataError("nothing to align");
    }
    std::vector<RecordingTable> resampled;
    std::size_t rows = SIZE_MAX;
    for (const auto& t : tables) {
        resampled.push_back(resample_linear(t, rate_hz));
        rows = std::min(rows, resampled.back().rows());
        if (std::abs(resampled.back().time_ms.front() - resampled.front().time_ms.front()) > 500.0 / rate_hz) {
            throw DataError("tables start at different times: " + format_number(resampled.front().time_ms.front()) +
                            " ms vs " + format_number(resampled.back().time_ms.front()) + " ms");
        }
    }
    RecordingTable out;
    out.time_ms.assign(resampled.front().time_ms.begin(),
                       resampled.front().time_ms.begin() + static_cast<std::ptrdiff_t>(rows));
    for (const auto& t : resampled) {
        for (std::size_t c = 0; c < t.channel_count(); ++c) {
            out.add_column(t.names[c], std::vector<double>(t.columns[c].begin(),
                                                           t.columns[c].begin() + static_cast<std::ptrdiff_t>(rows)));
        }
    }
    return out;
}

}  // namespace fgn
