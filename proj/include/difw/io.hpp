#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "difw/alignment.hpp"
#include "json.hpp"

namespace difw {

/// 17 significant digits, so identical doubles give identical text.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<int> lines;  // source line of each row
};

/// Reads a numeric CSV with a header row. Errors are DataError naming the file
/// and line.
CsvTable read_csv(const std::string& path);

void write_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

/// One single-channel signal per row. A first column named "label" holds
/// integer class labels 1..K.
TimeSeriesBatch read_batch_csv(const std::string& path);
void write_batch_csv(const std::string& path, const TimeSeriesBatch& batch);

nlohmann::json read_json(const std::string& path);
void write_json(std::ostream& out, const nlohmann::json& j);
void write_json(const std::string& path, const nlohmann::json& j);

/// Parameter vector from "zeros", an inline JSON array, or a JSON file holding
/// an array (or an object with a "theta" array).
std::vector<double> parse_theta(const std::string& spec, int dim);

}  // namespace difw
