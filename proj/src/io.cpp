#include "difw/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "difw/error.hpp"

namespace difw {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void data_error(const std::string& path, int line, const std::string& msg) {
  throw DataError(path + ":" + std::to_string(line) + ": " + msg);
}

double parse_number(const std::string& text, const std::string& path, int line, int column) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
    data_error(path, line, "column " + std::to_string(column + 1) + ": '" + text +
                               "' is not a finite number");
  }
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  return out;
}

}  // namespace

std::string format_double(double v) {
  if (v == 0.0) v = 0.0;  // no negative zero
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  CsvTable table;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      data_error(path, line_no, "expected " + std::to_string(table.header.size()) +
                                    " columns, found " + std::to_string(fields.size()));
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      row[c] = parse_number(fields[c], path, line_no, static_cast<int>(c));
    }
    table.rows.push_back(std::move(row));
    table.lines.push_back(line_no);
  }
  if (!have_header) data_error(path, std::max(line_no, 1), "missing header row");
  return table;
}

void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << format_double(row[c]);
    out << '\n';
  }
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream out = open_out(path);
  write_csv(out, header, rows);
}

TimeSeriesBatch read_batch_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const bool labeled = !table.header.empty() && table.header[0] == "label";
  const std::size_t offset = labeled ? 1 : 0;
  if (table.rows.empty()) data_error(path, 2, "no signals");
  if (table.header.size() < offset + 2) data_error(path, 1, "signals need at least 2 samples");
  std::vector<std::vector<double>> signals;
  std::vector<int> labels;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (labeled) {
      const double l = row[0];
      if (l != std::floor(l) || l < 1.0 || l > 1e9) {
        data_error(path, table.lines[r], "label " + format_double(l) + " is not an integer >= 1");
      }
      labels.push_back(static_cast<int>(l));
    }
    signals.emplace_back(row.begin() + offset, row.end());
  }
  if (labeled) {
    const int k_max = *std::max_element(labels.begin(), labels.end());
    for (int k = 1; k <= k_max; ++k) {
      if (std::find(labels.begin(), labels.end(), k) == labels.end()) {
        data_error(path, table.lines.back(), "labels must cover 1.." + std::to_string(k_max) +
                                                 ", class " + std::to_string(k) + " is empty");
      }
    }
  }
  return TimeSeriesBatch::from_rows(signals, std::move(labels));
}

void write_batch_csv(const std::string& path, const TimeSeriesBatch& batch) {
  std::vector<std::string> header;
  if (batch.labeled()) header.push_back("label");
  for (int c = 0; c < batch.n_channels; ++c) {
    for (int t = 0; t < batch.length; ++t) {
      header.push_back(batch.n_channels > 1 ? "c" + std::to_string(c) + "_t" + std::to_string(t)
                                            : "t" + std::to_string(t));
    }
  }
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < batch.n_signals; ++i) {
    std::vector<double> row;
    if (batch.labeled()) row.push_back(batch.labels[i]);
    const auto s = batch.signal(i);
    row.insert(row.end(), s.begin(), s.end());
    rows.push_back(std::move(row));
  }
  write_csv(path, header, rows);
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    // Translate the byte offset into a line number.
    std::ifstream again(path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(again)), std::istreambuf_iterator<char>());
    const std::size_t end = std::min(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + end, '\n'));
    data_error(path, line, "invalid JSON");
  }
}

void write_json(std::ostream& out, const nlohmann::json& j) { out << j.dump(2) << '\n'; }

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out = open_out(path);
  write_json(out, j);
}

std::vector<double> parse_theta(const std::string& spec, int dim) {
  if (spec == "zeros") return std::vector<double>(dim, 0.0);
  nlohmann::json j;
  std::string source = "--theta";
  const std::string t = trim(spec);
  if (!t.empty() && t[0] == '[') {
    try {
      j = nlohmann::json::parse(t);
    } catch (const nlohmann::json::parse_error&) {
      throw DataError(source + ":1: invalid JSON array");
    }
  } else {
    source = spec;
    j = read_json(spec);
    if (j.is_object() && j.contains("theta")) j = j["theta"];
  }
  if (!j.is_array()) throw DataError(source + ":1: theta must be a JSON array of numbers");
  std::vector<double> theta;
  for (const auto& v : j) {
    if (!v.is_number()) throw DataError(source + ":1: theta must be a JSON array of numbers");
    theta.push_back(v.get<double>());
  }
  if (static_cast<int>(theta.size()) != dim) {
    throw DataError(source + ":1: theta has " + std::to_string(theta.size()) +
                    " entries, the basis has dimension " + std::to_string(dim));
  }
  return theta;
}

}  // namespace difw
